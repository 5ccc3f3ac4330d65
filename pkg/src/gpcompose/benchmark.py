"""Word-analogy benchmark: question files, OOV filtering, splits and accuracy."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .embeddings import EmbeddingStore
from .program import Node, evaluate, parse_program

RULE_TEXT = "add(ARG2,sub(ARG1,ARG0))"


class Question(NamedTuple):
    """``a`` is to ``b`` as ``c`` is to ``answer``."""

    a: str
    b: str
    c: str
    answer: str


@dataclass(frozen=True)
class QuestionGroup:
    index: int
    name: str
    questions: tuple[Question, ...]

    def __len__(self) -> int:
        return len(self.questions)


@dataclass(frozen=True)
class SplitGroup:
    group: QuestionGroup
    train: tuple[Question, ...]
    test: tuple[Question, ...]
    split_seed: int


class QuestionFormatError(ValueError):
    pass


def parse_questions(path: str | os.PathLike, lowercase: bool = False) -> list[QuestionGroup]:
    """Read the analogy file layout: ``: name`` headers followed by 4-word lines."""
    groups: list[tuple[str, list[Question]]] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            text = line.strip()
            if not text:
                continue
            if text.startswith(":"):
                groups.append((text[1:].strip(), []))
                continue
            words = text.split()
            if len(words) != 4:
                raise QuestionFormatError(
                    f"{path}:{lineno}: expected 4 words, got {len(words)}: {text!r}"
                )
            if not groups:
                raise QuestionFormatError(f"{path}:{lineno}: question before any ': group' header")
            if lowercase:
                words = [w.lower() for w in words]
            groups[-1][1].append(Question(*words))
    return [QuestionGroup(i, name, tuple(qs)) for i, (name, qs) in enumerate(groups, 1)]


def filter_oov(group: QuestionGroup, store: EmbeddingStore) -> QuestionGroup:
    kept = tuple(q for q in group.questions if all(w in store for w in q))
    return QuestionGroup(group.index, group.name, kept)


def split_train_test(group: QuestionGroup, seed: int) -> SplitGroup:
    """Random half split; the training side gets the extra question when odd."""
    n = len(group.questions)
    if n < 2:
        raise ValueError(f"group {group.name!r} has {n} question(s); need at least 2 to split")
    order = np.random.default_rng(seed).permutation(n)
    n_train = math.ceil(n / 2)
    train = tuple(group.questions[i] for i in order[:n_train])
    test = tuple(group.questions[i] for i in order[n_train:])
    return SplitGroup(group, train, test, seed)


def baseline_rule_program() -> Node:
    """The hand-designed analogy rule d = c - a + b."""
    return parse_program(RULE_TEXT)


def question_indices(questions: Sequence[Question], store: EmbeddingStore) -> np.ndarray:
    """``(n, 4)`` row indices for the words of each question."""
    idx = store.word_index
    return np.array([[idx[w] for w in q] for q in questions], dtype=np.intp).reshape(-1, 4)


def program_outputs(tree: Node, qidx: np.ndarray, store: EmbeddingStore, rint_mode: str = "even") -> np.ndarray:
    vecs = store.vectors
    return evaluate(tree, (vecs[qidx[:, 0]], vecs[qidx[:, 1]], vecs[qidx[:, 2]]), rint_mode=rint_mode)


def answer_rows(
    outputs: np.ndarray,
    qidx: np.ndarray,
    store: EmbeddingStore,
    restrict_l: int | None,
    exclude_inputs: bool,
) -> np.ndarray:
    """Nearest-word row per output vector; -1 where the output is non-finite."""
    finite = np.all(np.isfinite(outputs), axis=1)
    rows = np.full(len(outputs), -1, dtype=np.intp)
    if finite.any():
        exclude = qidx[finite, :3] if exclude_inputs else None
        rows[finite] = store.nearest_indices(outputs[finite], restrict=restrict_l, exclude=exclude)
    return rows


def evaluate_accuracy(
    tree: Node,
    questions: Sequence[Question],
    store: EmbeddingStore,
    restrict_l: int | None = None,
    exclude_inputs: bool = True,
    rint_mode: str = "even",
) -> float:
    """Fraction of questions answered exactly; non-finite outputs count as wrong."""
    if not questions:
        raise ValueError("cannot compute accuracy on an empty question list")
    qidx = question_indices(questions, store)
    outputs = program_outputs(tree, qidx, store, rint_mode)
    rows = answer_rows(outputs, qidx, store, restrict_l, exclude_inputs)
    return float(np.count_nonzero(rows == qidx[:, 3])) / len(questions)


@dataclass
class TransferResult:
    labels: list[str]
    group_names: list[str]
    # rows = programs, columns = groups; the rule row is kept separately
    matrix: np.ndarray
    rule_row: np.ndarray
    group_sizes: list[int] = field(default_factory=list)

    @property
    def best_program(self) -> np.ndarray:
        """Row index of the best program for every group (lowest index on ties)."""
        filled = np.where(np.isnan(self.matrix), -np.inf, self.matrix)
        return np.argmax(filled, axis=0)

    @property
    def beats_rule(self) -> np.ndarray:
        return self.matrix > self.rule_row[None, :]

    def to_csv(self, marked: bool = False) -> str:
        """Accuracy matrix in percent; ``marked`` appends ``*`` where a program beats the rule."""
        lines = ["program," + ",".join(self.group_names)]
        beats = self.beats_rule
        for label, row, flags in zip(self.labels, self.matrix, beats):
            cells = [_pct(v) + ("*" if marked and f else "") for v, f in zip(row, flags)]
            lines.append(label + "," + ",".join(cells))
        lines.append("rule," + ",".join(_pct(v) for v in self.rule_row))
        return "\n".join(lines) + "\n"

    def best_table_csv(self) -> str:
        lines = ["group,questions,best_program,best_label,best_accuracy,rule_accuracy,beats_rule"]
        best = self.best_program
        for j, name in enumerate(self.group_names):
            i = int(best[j])
            acc = self.matrix[i, j]
            lines.append(
                f"{name},{self.group_sizes[j]},{i + 1},{self.labels[i]},{_pct(acc)},"
                f"{_pct(self.rule_row[j])},{int(acc > self.rule_row[j])}"
            )
        return "\n".join(lines) + "\n"


def _pct(value: float) -> str:
    return "nan" if np.isnan(value) else f"{100.0 * value:.2f}"


def transfer_evaluate(
    programs: Sequence[tuple[Node, str]],
    store2: EmbeddingStore,
    groups: Sequence[QuestionGroup],
    restrict_l2: int | None = None,
    exclude_inputs: bool = True,
    rint_mode: str = "even",
) -> TransferResult:
    """Accuracy of every program on every group in a second embedding space.

    Groups are OOV-filtered against ``store2``; a group left empty yields NaN.
    ``restrict_l2=None`` searches the whole vocabulary.
    """
    filtered = [filter_oov(g, store2) for g in groups]
    rule = baseline_rule_program()

    def row(tree: Node) -> np.ndarray:
        return np.array([
            evaluate_accuracy(tree, g.questions, store2, restrict_l2, exclude_inputs, rint_mode)
            if g.questions else np.nan
            for g in filtered
        ])

    matrix = np.array([row(tree) for tree, _ in programs]).reshape(len(programs), len(filtered))
    return TransferResult(
        labels=[label for _, label in programs],
        group_names=[g.name for g in filtered],
        matrix=matrix,
        rule_row=row(rule),
        group_sizes=[len(g) for g in filtered],
    )


def aggregate_runs(results) -> dict[str, float]:
    """Max and mean of the selected programs' train/test accuracy over runs."""
    if not results:
        raise ValueError("no runs to aggregate")
    train = np.array([r.best_train_accuracy for r in results], dtype=float)
    summary = {
        "runs": len(results),
        "train_max": float(train.max()),
        "train_mean": float(train.mean()),
    }
    tests = [r.best_test_accuracy for r in results]
    if all(t is not None for t in tests):
        test = np.array(tests, dtype=float)
        summary["test_max"] = float(test.max())
        summary["test_mean"] = float(test.mean())
    return summary

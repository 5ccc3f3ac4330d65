"""Synthetic embedding spaces where a relation is a constant vector offset.

Each relation has a centre ``m`` and an offset ``r``. Source words sit around
the centre, ``x = m + spread * e``, and targets are ``y = x + r`` (plus optional
Gaussian noise). Distractors are scattered around half-integer combinations
``alpha * m + beta * r`` with alpha, beta in [-2, 2], so compositions that only
approximate ``c - a + b`` tend to land on a distractor. ``m`` and ``r`` have
zero component mean; otherwise a constant shift such as ``diff(c)`` can pass
for the offset whenever ``r`` happens to lean towards the all-ones direction.
With zero noise the rule answers every generated question.
"""

from __future__ import annotations

import itertools
import os
from pathlib import Path

import numpy as np

from .benchmark import Question, QuestionGroup
from .embeddings import EmbeddingStore, save_binary_embeddings, save_text_embeddings


def read_pairs(path: str | os.PathLike) -> dict[str, list[tuple[str, str]]]:
    """``: relation`` headers followed by ``x y`` lines; headerless files form one relation."""
    relations: dict[str, list[tuple[str, str]]] = {}
    current = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            if text.startswith(":"):
                current = text[1:].strip()
                relations.setdefault(current, [])
                continue
            words = text.split()
            if len(words) != 2:
                raise ValueError(f"{path}:{lineno}: expected a word pair, got {text!r}")
            if current is None:
                current = "relation"
                relations[current] = []
            relations[current].append((words[0], words[1]))
    return relations


def generate_pairs(n_groups: int, n_pairs: int) -> dict[str, list[tuple[str, str]]]:
    return {
        f"relation{g}": [(f"r{g}x{i:03d}", f"r{g}y{i:03d}") for i in range(n_pairs)]
        for g in range(1, n_groups + 1)
    }


def make_synthetic(
    relations: dict[str, list[tuple[str, str]]],
    dim: int = 16,
    noise: float = 0.0,
    n_distractors: int = 100,
    seed: int = 0,
    max_questions: int | None = None,
    spread: float = 0.6,
) -> tuple[EmbeddingStore, list[QuestionGroup]]:
    """Build the store and one question group per relation.

    Questions are every ordered pair of distinct pairs ``(x_i, y_i, x_j, y_j)``,
    optionally subsampled to ``max_questions`` per group (original order kept).
    Vectors are rounded to float32 so the binary file reproduces them exactly.
    """
    rng = np.random.default_rng(seed)
    words: list[str] = []
    rows: list[np.ndarray] = []
    groups = []
    axes = []
    for gi, (name, pairs) in enumerate(relations.items(), 1):
        centre = rng.standard_normal(dim)
        offset = rng.standard_normal(dim)
        centre -= centre.mean()
        offset -= offset.mean()
        axes.append((centre, offset))
        for x, y in pairs:
            base = centre + spread * rng.standard_normal(dim)
            words += [x, y]
            rows += [base, base + offset + noise * rng.standard_normal(dim)]
        combos = [(i, j) for i, j in itertools.permutations(range(len(pairs)), 2)]
        if max_questions is not None and max_questions < len(combos):
            keep = np.sort(rng.choice(len(combos), size=max_questions, replace=False))
            combos = [combos[k] for k in keep]
        questions = tuple(Question(*pairs[i], *pairs[j]) for i, j in combos)
        groups.append(QuestionGroup(gi, name, questions))
    grid = np.arange(-4, 5) / 2.0
    for k in range(n_distractors):
        centre, offset = axes[rng.integers(len(axes))] if axes else (np.zeros(dim),) * 2
        alpha, beta = rng.choice(grid, size=2)
        words.append(f"distractor{k:04d}")
        rows.append(alpha * centre + beta * offset + spread * rng.standard_normal(dim))
    order = rng.permutation(len(words))
    matrix = np.array(rows, dtype=np.float64).reshape(len(words), dim)[order]
    matrix = matrix.astype(np.float32).astype(np.float64)
    store = EmbeddingStore.from_arrays([words[i] for i in order], matrix)
    return store, groups


def write_questions(path: str | os.PathLike, groups: list[QuestionGroup]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for g in groups:
            fh.write(f": {g.name}\n")
            for q in g.questions:
                fh.write(" ".join(q) + "\n")


def write_fixture(prefix: str | os.PathLike, store: EmbeddingStore, groups: list[QuestionGroup]) -> dict[str, str]:
    """Write ``<prefix>.bin``, ``<prefix>.txt`` and ``<prefix>.questions.txt``."""
    prefix = Path(prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    paths = {
        "binary": str(prefix.with_name(prefix.name + ".bin")),
        "text": str(prefix.with_name(prefix.name + ".txt")),
        "questions": str(prefix.with_name(prefix.name + ".questions.txt")),
    }
    save_binary_embeddings(store, paths["binary"])
    save_text_embeddings(store, paths["text"])
    write_questions(paths["questions"], groups)
    return paths

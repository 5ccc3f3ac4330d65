"""Generational tree GP over composition programs.

Random decisions all come from one ``numpy.random.Generator`` seeded with
``EvolutionConfig.seed`` and are drawn in a fixed order, so a run is a pure
function of (questions, store, config):

1. initial population (ramped half-and-half, position order);
2. per generation, the fitness subsets of the individuals that need
   evaluation, in population order;
3. clone choices for the whole offspring pool;
4. per adjacent pair: crossover coin, then (if taken) the two crossover points;
5. per individual: mutation coin, then (if taken) the mutation point and the
   replacement subtree.
"""

from __future__ import annotations

import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import Callable, Sequence

import numpy as np

from .benchmark import Question, answer_rows, evaluate_accuracy, program_outputs, question_indices
from .embeddings import EmbeddingStore
from .program import (
    DEPTH_LIMIT,
    Node,
    depth,
    format_program,
    parse_program,
    ramped_half_and_half,
    random_tree,
    replace_at,
    size,
    subtree_at,
)


@dataclass(frozen=True)
class EvolutionConfig:
    population_size: int = 500
    generations: int = 250
    survivors: int = 100
    p_crossover: float = 0.5
    p_mutation: float = 0.5
    depth_limit: int = DEPTH_LIMIT
    restrict_l: int = 30000
    subset_fraction: float = 0.2
    halt_min_questions: int = 10
    halt_threshold: float = 0.05
    seed: int = 0
    exclude_inputs: bool = True
    rint_mode: str = "even"
    # keep cached (subset) fitness for individuals that variation left untouched
    reuse_fitness: bool = True
    init_min_depth: int = 1
    init_max_depth: int = 4
    mutation_max_depth: int = 2

    def __post_init__(self):
        if self.population_size < 1:
            raise ValueError("population_size must be positive")
        if not 1 <= self.survivors <= self.population_size:
            raise ValueError("survivors must be in [1, population_size]")
        for name in ("p_crossover", "p_mutation"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must be a probability")
        if not 0.0 < self.subset_fraction <= 1.0:
            raise ValueError("subset_fraction must be in (0, 1]")
        if self.generations < 0:
            raise ValueError("generations must be >= 0")
        if not 0 <= self.init_min_depth <= self.init_max_depth <= self.depth_limit:
            raise ValueError("initial depth range must lie within the depth limit")
        if self.rint_mode not in ("even", "trunc"):
            raise ValueError("rint_mode must be 'even' or 'trunc'")

    @classmethod
    def from_dict(cls, data: dict) -> "EvolutionConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in known})


@dataclass(frozen=True)
class EvaluatedProgram:
    tree: Node
    fitness: float
    questions_seen: int
    halted_early: bool = False
    halted_nonfinite: bool = False


@dataclass(frozen=True)
class GenerationStats:
    generation: int
    best: float
    mean: float
    median: float
    evaluations: int
    best_program: str


@dataclass
class RunResult:
    seed: int
    generations_completed: int
    final_survivors: list[EvaluatedProgram]
    best_program: Node
    best_train_accuracy: float
    best_test_accuracy: float | None
    wall_time: float
    evaluation_count: int
    history: list[GenerationStats] = field(default_factory=list)
    config: EvolutionConfig | None = None
    group: str | None = None
    split_seed: int | None = None

    def to_dict(self) -> dict:
        """Serializable form. ``wall_time`` is left out so files are reproducible."""
        return {
            "seed": self.seed,
            "group": self.group,
            "split_seed": self.split_seed,
            "config": asdict(self.config) if self.config else None,
            "generations_completed": self.generations_completed,
            "evaluation_count": self.evaluation_count,
            "best_program": format_program(self.best_program),
            "best_train_accuracy": self.best_train_accuracy,
            "best_test_accuracy": self.best_test_accuracy,
            "final_survivors": [
                {
                    "program": format_program(p.tree),
                    "fitness": p.fitness,
                    "questions_seen": p.questions_seen,
                    "halted_early": p.halted_early,
                    "halted_nonfinite": p.halted_nonfinite,
                }
                for p in self.final_survivors
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RunResult":
        return cls(
            seed=data["seed"],
            generations_completed=data["generations_completed"],
            final_survivors=[
                EvaluatedProgram(
                    parse_program(p["program"]),
                    p["fitness"],
                    p["questions_seen"],
                    p["halted_early"],
                    p["halted_nonfinite"],
                )
                for p in data["final_survivors"]
            ],
            best_program=parse_program(data["best_program"]),
            best_train_accuracy=data["best_train_accuracy"],
            best_test_accuracy=data["best_test_accuracy"],
            wall_time=float("nan"),
            evaluation_count=data["evaluation_count"],
            config=EvolutionConfig.from_dict(data["config"]) if data.get("config") else None,
            group=data.get("group"),
            split_seed=data.get("split_seed"),
        )


def format_log(history: Sequence[GenerationStats]) -> str:
    lines = ["generation,best,mean,median,evaluations,best_program"]
    for s in history:
        lines.append(
            f"{s.generation},{s.best!r},{s.mean!r},{s.median!r},{s.evaluations},\"{s.best_program}\""
        )
    return "\n".join(lines) + "\n"


def save_run_result(path, result: RunResult, manifest: dict | None = None) -> None:
    data = result.to_dict()
    if manifest is not None:
        data["manifest"] = manifest
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_run_result(path) -> RunResult:
    with open(path, encoding="utf-8") as fh:
        return RunResult.from_dict(json.load(fh))


# ---------------------------------------------------------------------------
# fitness

def _score_rows(tree: Node, qidx: np.ndarray, store: EmbeddingStore, cfg: EvolutionConfig) -> EvaluatedProgram:
    n = len(qidx)
    outputs = program_outputs(tree, qidx, store, cfg.rint_mode)
    finite = np.all(np.isfinite(outputs), axis=1)
    # questions before the first non-finite output are answered normally
    bad = int(np.argmin(finite)) if not finite.all() else n
    if bad:
        rows = answer_rows(outputs[:bad], qidx[:bad], store, cfg.restrict_l, cfg.exclude_inputs)
        correct = np.cumsum(rows == qidx[:bad, 3])
    else:
        correct = np.zeros(0, dtype=np.intp)
    seen = np.arange(1, bad + 1)
    low = (seen >= cfg.halt_min_questions) & (correct / np.maximum(seen, 1) < cfg.halt_threshold)
    if low.any():
        k = int(np.argmax(low)) + 1
        return EvaluatedProgram(tree, float(correct[k - 1]) / k, k, halted_early=True)
    if bad < n:
        return EvaluatedProgram(tree, 0.0, bad + 1, halted_nonfinite=True)
    return EvaluatedProgram(tree, float(correct[-1]) / n, n)


def fitness(
    tree: Node,
    questions: Sequence[Question],
    store: EmbeddingStore,
    cfg: EvolutionConfig,
) -> EvaluatedProgram:
    """Proportion of ``questions`` answered correctly, with early halting.

    Questions are answered in order. A non-finite program output stops the
    evaluation with fitness 0. Once ``halt_min_questions`` have been answered,
    the evaluation also stops as soon as the running accuracy drops below
    ``halt_threshold``; the running accuracy is then the fitness.
    """
    if not questions:
        raise ValueError("fitness needs at least one question")
    return _score_rows(tree, question_indices(questions, store), store, cfg)


def subset_size(n: int, fraction: float) -> int:
    # guard against 0.2 * 35 = 7.000000000000001 style round-up
    return max(1, min(n, math.ceil(fraction * n - 1e-9)))


def _subset_positions(n: int, cfg: EvolutionConfig, rng: np.random.Generator) -> np.ndarray:
    return rng.choice(n, size=subset_size(n, cfg.subset_fraction), replace=False)


def draw_fitness_subset(
    train: Sequence[Question], cfg: EvolutionConfig, rng: np.random.Generator
) -> list[Question]:
    """Random subset of ``ceil(subset_fraction * len(train))`` questions."""
    if not train:
        raise ValueError("empty training set")
    return [train[i] for i in _subset_positions(len(train), cfg, rng)]


# ---------------------------------------------------------------------------
# selection and variation

def _rank_key(item: tuple[int, EvaluatedProgram]):
    index, prog = item
    return (-prog.fitness, size(prog.tree), index)


def select_truncation(pop: Sequence[EvaluatedProgram], k: int) -> list[EvaluatedProgram]:
    """Best ``k`` by fitness; ties go to the smaller tree, then the earlier index."""
    if k > len(pop):
        raise ValueError(f"cannot select {k} from a population of {len(pop)}")
    ranked = sorted(enumerate(pop), key=_rank_key)
    return [prog for _, prog in ranked[:k]]


def one_point_crossover(
    p1: Node, p2: Node, rng: np.random.Generator, depth_limit: int = DEPTH_LIMIT
) -> tuple[Node, Node]:
    """Swap one uniformly chosen subtree between the parents.

    An offspring deeper than ``depth_limit`` is replaced by its own parent.
    """
    i = int(rng.integers(size(p1)))
    j = int(rng.integers(size(p2)))
    s1, _ = subtree_at(p1, i)
    s2, _ = subtree_at(p2, j)
    c1 = replace_at(p1, i, s2)
    c2 = replace_at(p2, j, s1)
    if depth(c1) > depth_limit:
        c1 = p1
    if depth(c2) > depth_limit:
        c2 = p2
    return c1, c2


def uniform_mutation(
    p: Node,
    rng: np.random.Generator,
    depth_limit: int = DEPTH_LIMIT,
    max_subtree_depth: int = 2,
) -> Node:
    """Replace a uniformly chosen subtree with a fresh ``grow`` subtree."""
    i = int(rng.integers(size(p)))
    fresh = random_tree(rng, 0, max_subtree_depth, "grow")
    child = replace_at(p, i, fresh)
    return p if depth(child) > depth_limit else child


def select_best_program(
    final_survivors: Sequence[EvaluatedProgram],
    full_train: Sequence[Question],
    test: Sequence[Question] | None,
    store: EmbeddingStore,
    cfg: EvolutionConfig,
) -> tuple[Node, float, float | None]:
    """Re-score survivors on the whole training set and pick the most accurate."""
    if not final_survivors:
        raise ValueError("no survivors to choose from")
    cache: dict[Node, float] = {}
    scored = []
    for prog in final_survivors:
        if prog.tree not in cache:
            cache[prog.tree] = evaluate_accuracy(
                prog.tree, full_train, store, cfg.restrict_l, cfg.exclude_inputs, cfg.rint_mode
            )
        scored.append(EvaluatedProgram(prog.tree, cache[prog.tree], len(full_train)))
    best = select_truncation(scored, 1)[0]
    test_acc = None
    if test:
        test_acc = evaluate_accuracy(
            best.tree, test, store, cfg.restrict_l, cfg.exclude_inputs, cfg.rint_mode
        )
    return best.tree, best.fitness, test_acc


# ---------------------------------------------------------------------------
# main loop

def _stats(generation: int, pop: Sequence[EvaluatedProgram], evaluations: int) -> GenerationStats:
    values = np.array([p.fitness for p in pop])
    best = select_truncation(pop, 1)[0]
    return GenerationStats(
        generation=generation,
        best=float(values.max()),
        mean=float(values.mean()),
        median=float(np.median(values)),
        evaluations=evaluations,
        best_program=format_program(best.tree),
    )


def evolve_run(
    train: Sequence[Question],
    store: EmbeddingStore,
    cfg: EvolutionConfig,
    test: Sequence[Question] | None = None,
    workers: int = 1,
    on_generation: Callable[[GenerationStats, list[EvaluatedProgram]], None] | None = None,
) -> RunResult:
    """One GP run: evolve on ``train`` and select the best final survivor.

    ``workers > 1`` evaluates fitness in a thread pool; results are merged in
    population order, so the outcome does not depend on ``workers``.
    ``on_generation(stats, population)`` is called after every evaluation
    phase, generation 0 included.
    """
    if not train:
        raise ValueError("empty training set")
    started = time.perf_counter()
    rng = np.random.default_rng(cfg.seed)
    train_idx = question_indices(train, store)
    n_train = len(train_idx)
    evaluations = 0
    pool = ThreadPoolExecutor(workers) if workers > 1 else None

    def evaluate_all(trees: list[Node], cached: list[EvaluatedProgram | None]) -> list[EvaluatedProgram]:
        nonlocal evaluations
        todo = [i for i, c in enumerate(cached) if c is None]
        subsets = [train_idx[_subset_positions(n_train, cfg, rng)] for _ in todo]
        jobs = [(trees[i], s) for i, s in zip(todo, subsets)]
        mapper = pool.map if pool is not None else map
        results = list(mapper(lambda job: _score_rows(job[0], job[1], store, cfg), jobs))
        evaluations += len(results)
        out = list(cached)
        for i, res in zip(todo, results):
            out[i] = res
        return out

    try:
        trees = ramped_half_and_half(rng, cfg.population_size, cfg.init_min_depth, cfg.init_max_depth)
        pop = evaluate_all(trees, [None] * len(trees))
        history = [_stats(0, pop, evaluations)]
        if on_generation:
            on_generation(history[-1], pop)

        for gen in range(1, cfg.generations + 1):
            parents = select_truncation(pop, cfg.survivors)
            picks = rng.integers(0, len(parents), size=cfg.population_size)
            sources = [parents[i] for i in picks]
            offspring = [p.tree for p in sources]
            for k in range(0, len(offspring) - 1, 2):
                if rng.random() < cfg.p_crossover:
                    offspring[k], offspring[k + 1] = one_point_crossover(
                        offspring[k], offspring[k + 1], rng, cfg.depth_limit
                    )
            for k in range(len(offspring)):
                if rng.random() < cfg.p_mutation:
                    offspring[k] = uniform_mutation(
                        offspring[k], rng, cfg.depth_limit, cfg.mutation_max_depth
                    )
            cached = [
                src if cfg.reuse_fitness and tree == src.tree else None
                for tree, src in zip(offspring, sources)
            ]
            pop = evaluate_all(offspring, cached)
            history.append(_stats(gen, pop, evaluations))
            if on_generation:
                on_generation(history[-1], pop)
    finally:
        if pool is not None:
            pool.shutdown()

    final = select_truncation(pop, cfg.survivors)
    best, train_acc, test_acc = select_best_program(final, train, test, store, cfg)
    return RunResult(
        seed=cfg.seed,
        generations_completed=cfg.generations,
        final_survivors=final,
        best_program=best,
        best_train_accuracy=train_acc,
        best_test_accuracy=test_acc,
        wall_time=time.perf_counter() - started,
        evaluation_count=evaluations,
        history=history,
        config=cfg,
    )

"""Command-line front end: ``gpcompose <subcommand> ...``.

Results go to files and stdout, progress to stderr. On failure the last line
on stderr is ``error: <kind>: <message>`` and the exit status is nonzero.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, fields
from pathlib import Path

import numpy as np

from . import __version__
from .benchmark import (
    QuestionGroup,
    aggregate_runs,
    baseline_rule_program,
    evaluate_accuracy,
    filter_oov,
    parse_questions,
    split_train_test,
    transfer_evaluate,
)
from .embeddings import EmbeddingStore, load_embeddings
from .evolution import (
    EvolutionConfig,
    RunResult,
    evolve_run,
    format_log,
    load_run_result,
    save_run_result,
)
from .program import ProgramSyntaxError, format_program, read_program_file
from .synth import generate_pairs, make_synthetic, read_pairs, write_fixture

log = logging.getLogger("gpcompose")

EMBEDDING_DIR_ENV = "GPCOMPOSE_EMBEDDING_DIR"

# CLI flag -> EvolutionConfig field
CONFIG_FLAGS = {
    "pop": "population_size",
    "gens": "generations",
    "survivors": "survivors",
    "p_cx": "p_crossover",
    "p_mut": "p_mutation",
    "depth": "depth_limit",
    "restrict": "restrict_l",
    "subset": "subset_fraction",
    "halt_min": "halt_min_questions",
    "halt_threshold": "halt_threshold",
    "rint": "rint_mode",
}


class CliError(Exception):
    pass


# ---------------------------------------------------------------------------
# shared helpers

def resolve_embedding_path(path: str) -> Path:
    p = Path(path)
    if not p.exists() and not p.is_absolute() and os.environ.get(EMBEDDING_DIR_ENV):
        alt = Path(os.environ[EMBEDDING_DIR_ENV]) / p
        if alt.exists():
            p = alt
    if not p.exists():
        raise CliError(f"embedding file not found: {path}")
    return p.resolve()


def _load_store(path: str, fmt: str, limit: int | None = None) -> EmbeddingStore:
    p = resolve_embedding_path(path)
    log.info("loading embeddings from %s", p)
    store = load_embeddings(p, fmt, limit=limit)
    log.info("%d words, dim %d", len(store), store.dim)
    return store


def _existing(path: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise CliError(f"file not found: {path}")
    return p.resolve()


def select_groups(groups: list[QuestionGroup], selector: str | None) -> list[QuestionGroup]:
    """Pick groups by comma-separated 1-based index or name (``None`` = all)."""
    if not selector:
        return list(groups)
    chosen = []
    for token in (t.strip() for t in selector.split(",")):
        if not token:
            continue
        match = [g for g in groups if str(g.index) == token or g.name == token]
        if not match:
            raise CliError(f"no question group matches {token!r}")
        chosen.extend(m for m in match if m not in chosen)
    return chosen


def _slug(group: QuestionGroup) -> str:
    return f"{group.index:02d}-" + re.sub(r"[^A-Za-z0-9_.-]+", "_", group.name)


def config_from_args(args, seed: int = 0) -> EvolutionConfig:
    values = {field: getattr(args, flag) for flag, field in CONFIG_FLAGS.items()}
    values["exclude_inputs"] = not args.include_inputs
    values["reuse_fitness"] = not args.no_cache
    return EvolutionConfig(seed=seed, **values)


def _fmt(value) -> str:
    return "" if value is None else repr(value)


# ---------------------------------------------------------------------------
# evolve

_WORKER_STATE: dict = {}


def _init_worker(emb_path, fmt, limit):
    _WORKER_STATE["store"] = load_embeddings(emb_path, fmt, limit=limit)


def _run_task(task) -> dict:
    split, cfg, workers = task
    result = evolve_run(split.train, _WORKER_STATE["store"], cfg, test=split.test, workers=workers)
    result.group = split.group.name
    result.split_seed = split.split_seed
    return {"result": result}


def _write_run(directory: Path, index: int, result: RunResult, manifest: dict) -> None:
    header = "# manifest: " + json.dumps(manifest, sort_keys=True) + "\n"
    save_run_result(directory / f"run_{index:03d}.json", result, manifest)
    (directory / f"run_{index:03d}.log.csv").write_text(header + format_log(result.history))


def build_manifest(args) -> dict:
    return {
        "tool": "gpcompose",
        "version": __version__,
        "embeddings": str(resolve_embedding_path(args.embeddings)),
        "format": args.format,
        "limit": args.limit,
        "questions": str(_existing(args.questions)),
        "lowercase": args.lowercase,
        "groups": args.groups,
        "runs": args.runs,
        "base_seed": args.seed,
        "split_seed": args.split_seed if args.split_seed is not None else args.seed,
        "output": str(Path(args.out).resolve()),
        "config": {k: v for k, v in asdict(config_from_args(args)).items() if k != "seed"},
    }


def cmd_evolve(args) -> int:
    manifest = build_manifest(args)
    out = Path(manifest["output"])
    out.mkdir(parents=True, exist_ok=True)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")

    store = _load_store(args.embeddings, args.format, args.limit)
    groups = select_groups(parse_questions(manifest["questions"], lowercase=args.lowercase), args.groups)
    rule = baseline_rule_program()
    split_seed = manifest["split_seed"]

    plans = []
    for original in groups:
        group = filter_oov(original, store)
        if len(group) < 2:
            log.warning("skipping group %s: %d question(s) after OOV filtering", group.name, len(group))
            continue
        directory = out / _slug(group)
        directory.mkdir(exist_ok=True)
        split = split_train_test(group, split_seed)
        plans.append((original, group, split, directory))
    if not plans:
        raise CliError("no question group has enough in-vocabulary questions")

    tasks, slots = [], []
    results: dict[tuple[int, int], RunResult] = {}
    for gi, (_, group, split, directory) in enumerate(plans):
        for r in range(args.runs):
            path = directory / f"run_{r:03d}.json"
            if args.resume and path.exists():
                results[gi, r] = load_run_result(path)
                continue
            cfg = config_from_args(args, seed=args.seed + r)
            tasks.append((split, cfg, args.workers))
            slots.append((gi, r))

    emb_path = manifest["embeddings"]
    try:
        if args.jobs > 1 and len(tasks) > 1:
            with ProcessPoolExecutor(args.jobs, initializer=_init_worker,
                                     initargs=(emb_path, args.format, args.limit)) as ex:
                for (gi, r), res in zip(slots, ex.map(_run_task, tasks)):
                    results[gi, r] = res["result"]
                    _write_run(plans[gi][3], r, res["result"], manifest)
                    log.info("%s run %d: train %.4f test %.4f", plans[gi][1].name, r,
                             res["result"].best_train_accuracy, res["result"].best_test_accuracy)
        else:
            _WORKER_STATE["store"] = store
            for (gi, r), task in zip(slots, tasks):
                res = _run_task(task)["result"]
                results[gi, r] = res
                _write_run(plans[gi][3], r, res, manifest)
                log.info("%s run %d: train %.4f test %.4f (%.1fs)", plans[gi][1].name, r,
                         res.best_train_accuracy, res.best_test_accuracy, res.wall_time)
    except Exception:
        done = sorted(f"{plans[g][3].name}/run_{r:03d}.json" for g, r in results)
        (out / "CHECKPOINT.txt").write_text(
            "run aborted; completed runs are kept and skipped with --resume:\n" + "\n".join(done) + "\n"
        )
        raise

    rows = []
    cfg = config_from_args(args)
    for gi, (original, group, split, directory) in enumerate(plans):
        runs = [results[gi, r] for r in range(args.runs)]
        summary = aggregate_runs(runs)
        entry = {
            "group_index": group.index,
            "group": group.name,
            "questions_original": len(original),
            "questions": len(group),
            "train_size": len(split.train),
            "test_size": len(split.test),
            "split_seed": split_seed,
            **summary,
            "rule_train": evaluate_accuracy(rule, split.train, store, cfg.restrict_l, cfg.exclude_inputs, cfg.rint_mode),
            "rule_test": evaluate_accuracy(rule, split.test, store, cfg.restrict_l, cfg.exclude_inputs, cfg.rint_mode),
            "rule_all": evaluate_accuracy(rule, group.questions, store, cfg.restrict_l, cfg.exclude_inputs, cfg.rint_mode),
            "best_programs": [format_program(r.best_program) for r in runs],
        }
        with open(directory / "aggregate.json", "w") as fh:
            json.dump({"manifest": manifest, **entry}, fh, indent=2, sort_keys=True)
            fh.write("\n")
        rows.append(entry)

    columns = ["group_index", "group", "questions_original", "questions", "train_size", "test_size",
               "train_max", "train_mean", "test_max", "test_mean", "rule_train", "rule_test", "rule_all"]
    lines = ["# manifest: " + json.dumps(manifest, sort_keys=True), ",".join(columns)]
    for row in rows:
        lines.append(",".join(row[c] if isinstance(row[c], str) else _fmt(row[c]) for c in columns))
    text = "\n".join(lines) + "\n"
    (out / "aggregate.csv").write_text(text)
    (out / "CHECKPOINT.txt").unlink(missing_ok=True)
    sys.stdout.write(text)
    return 0


# ---------------------------------------------------------------------------
# eval

def cmd_eval(args) -> int:
    if not args.rule and not args.programs:
        raise CliError("give a program file or --rule")
    store = _load_store(args.embeddings, args.format, args.limit)
    groups = select_groups(parse_questions(_existing(args.questions), lowercase=args.lowercase), args.groups)

    entries: list = []
    if args.rule:
        entries.append(("rule", baseline_rule_program()))
    if args.programs:
        entries.extend(read_program_file(_existing(args.programs)))

    question_sets = []
    for group in groups:
        group = filter_oov(group, store)
        if args.split == "all":
            question_sets.append((group, group.questions))
        else:
            split = split_train_test(group, args.split_seed)
            question_sets.append((group, split.train if args.split == "train" else split.test))

    failures = 0
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["line", "program", "group", "split", "questions", "accuracy"])
    for lineno, tree in entries:
        if isinstance(tree, ProgramSyntaxError):
            failures += 1
            print(f"error: syntax: {args.programs}:{lineno}: {tree}", file=sys.stderr)
            continue
        for group, questions in question_sets:
            if not questions:
                log.warning("group %s has no in-vocabulary questions", group.name)
                continue
            acc = evaluate_accuracy(tree, questions, store, args.restrict, not args.include_inputs, args.rint)
            writer.writerow([lineno, format_program(tree), group.name, args.split, len(questions), repr(acc)])
    text = buf.getvalue()
    sys.stdout.write(text)
    if args.out:
        Path(args.out).write_text(text)
    return 1 if failures else 0


# ---------------------------------------------------------------------------
# transfer

def cmd_transfer(args) -> int:
    paths = sorted(Path(args.programs).rglob("run_*.json")) if Path(args.programs).is_dir() else []
    if not paths:
        raise CliError(f"no run_*.json files under {args.programs}")
    programs = []
    for path in paths:
        result = load_run_result(path)
        label = f"{path.parent.name}/{path.stem}"
        programs.append((result.best_program, label))
    store = _load_store(args.embeddings, args.format, args.limit)
    groups = select_groups(parse_questions(_existing(args.questions), lowercase=args.lowercase), args.groups)
    result = transfer_evaluate(programs, store, groups, args.restrict, not args.include_inputs, args.rint)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "matrix.csv").write_text(result.to_csv())
    (out / "matrix_marked.csv").write_text(result.to_csv(marked=True))
    (out / "best.csv").write_text(result.best_table_csv())
    summary = {
        "programs": [{"label": lab, "program": format_program(t)} for t, lab in programs],
        "groups": result.group_names,
        "group_sizes": result.group_sizes,
        "matrix": result.matrix.tolist(),
        "rule": result.rule_row.tolist(),
        "best_program": [int(i) for i in result.best_program],
        "restrict": args.restrict,
    }
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    sys.stdout.write(result.to_csv(marked=True))
    return 0


# ---------------------------------------------------------------------------
# nearest

def cmd_nearest(args) -> int:
    store = _load_store(args.embeddings, args.format, args.limit)
    if args.vector is not None:
        query = np.array([float(v) for v in args.vector.replace(",", " ").split()])
    else:
        query = store.vector_of(args.word)
        if query is None:
            raise CliError(f"word not in vocabulary: {args.word!r}")
    for word, score in store.nearest_words(query, k=args.k, restrict=args.restrict, exclude=args.exclude):
        print(f"{word}\t{score:.6f}")
    return 0


# ---------------------------------------------------------------------------
# synth

def cmd_synth(args) -> int:
    relations = read_pairs(_existing(args.pairs)) if args.pairs else generate_pairs(args.relations, args.n_pairs)
    store, groups = make_synthetic(
        relations,
        dim=args.dim,
        noise=args.noise,
        n_distractors=args.distractors,
        seed=args.seed,
        max_questions=args.questions_per_group,
        spread=args.spread,
    )
    paths = write_fixture(args.out, store, groups)
    for kind, path in paths.items():
        print(f"{kind}\t{path}")
    log.info("%d words, %d groups, %d questions", len(store), len(groups), sum(len(g) for g in groups))
    return 0


# ---------------------------------------------------------------------------
# report

def cmd_report(args) -> int:
    root = Path(args.runs_dir)
    by_group: dict[str, list[RunResult]] = {}
    for path in sorted(root.rglob("run_*.json")):
        by_group.setdefault(path.parent.name, []).append(load_run_result(path))
    if not by_group:
        raise CliError(f"no run_*.json files under {root}")
    lines = ["group,runs,train_max,train_mean,test_max,test_mean"]
    for name, runs in by_group.items():
        s = aggregate_runs(runs)
        lines.append(",".join([name, str(s["runs"])] + [_fmt(s.get(k)) for k in
                              ("train_max", "train_mean", "test_max", "test_mean")]))
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if args.out:
        Path(args.out).write_text(text)
    return 0


# ---------------------------------------------------------------------------
# argument parsing

def _add_embedding_args(p):
    p.add_argument("--embeddings", "-e", required=True, help=f"embedding file (relative paths also tried under ${EMBEDDING_DIR_ENV})")
    p.add_argument("--format", choices=("auto", "text", "binary"), default="auto")
    p.add_argument("--limit", type=int, default=None, help="load only the first N words")


def _add_search_args(p, restrict_default):
    p.add_argument("--restrict", type=int, default=restrict_default, help="search only the N most frequent words")
    p.add_argument("--include-inputs", action="store_true", help="allow the question words as answers")
    p.add_argument("--rint", choices=("even", "trunc"), default="even")


def _add_questions_args(p, lowercase_default):
    p.add_argument("--questions", "-q", required=True)
    p.add_argument("--groups", "-g", default=None, help="comma-separated group indices or names")
    p.add_argument("--lowercase", action=argparse.BooleanOptionalAction, default=lowercase_default)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gpcompose", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="key = value file supplying defaults for the subcommand")
    parser.add_argument("-q", "--quiet", action="store_true", help="no progress output")
    sub = parser.add_subparsers(dest="command", required=True)

    d = EvolutionConfig()
    p = sub.add_parser("evolve", help="run the GP protocol on question groups")
    _add_embedding_args(p)
    _add_questions_args(p, True)
    _add_search_args(p, d.restrict_l)
    p.add_argument("--pop", type=int, default=d.population_size)
    p.add_argument("--gens", type=int, default=d.generations)
    p.add_argument("--survivors", type=int, default=d.survivors)
    p.add_argument("--p-cx", type=float, default=d.p_crossover)
    p.add_argument("--p-mut", type=float, default=d.p_mutation)
    p.add_argument("--depth", type=int, default=d.depth_limit)
    p.add_argument("--subset", type=float, default=d.subset_fraction)
    p.add_argument("--halt-min", type=int, default=d.halt_min_questions)
    p.add_argument("--halt-threshold", type=float, default=d.halt_threshold)
    p.add_argument("--no-cache", action="store_true", help="re-evaluate unchanged individuals on a fresh subset")
    p.add_argument("--runs", type=int, default=30)
    p.add_argument("--seed", type=int, default=0, help="base seed; run i uses seed + i")
    p.add_argument("--split-seed", type=int, default=None, help="train/test split seed (default: --seed)")
    p.add_argument("--out", "-o", required=True)
    p.add_argument("--jobs", type=int, default=1, help="runs executed in parallel processes")
    p.add_argument("--workers", type=int, default=1, help="fitness threads per run")
    p.add_argument("--resume", action="store_true", help="reuse run files already present in --out")
    p.set_defaults(func=cmd_evolve)

    p = sub.add_parser("eval", help="accuracy of programs on question groups")
    p.add_argument("programs", nargs="?", help="program file, one program per line")
    p.add_argument("--rule", action="store_true", help="also evaluate add(ARG2,sub(ARG1,ARG0))")
    _add_embedding_args(p)
    _add_questions_args(p, True)
    _add_search_args(p, d.restrict_l)
    p.add_argument("--split", choices=("all", "train", "test"), default="all")
    p.add_argument("--split-seed", type=int, default=0)
    p.add_argument("--out", "-o")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("transfer", help="run stored best programs on another embedding space")
    p.add_argument("programs", help="directory searched recursively for run_*.json")
    _add_embedding_args(p)
    _add_questions_args(p, False)
    _add_search_args(p, None)
    p.add_argument("--out", "-o", required=True)
    p.set_defaults(func=cmd_transfer)

    p = sub.add_parser("nearest", help="list the nearest words to a word or vector")
    _add_embedding_args(p)
    target = p.add_mutually_exclusive_group(required=True)
    target.add_argument("--word", "-w")
    target.add_argument("--vector", help="comma- or space-separated components")
    p.add_argument("-k", type=int, default=10)
    p.add_argument("--restrict", "-l", type=int, default=None)
    p.add_argument("--exclude", nargs="*", default=[])
    p.set_defaults(func=cmd_nearest)

    p = sub.add_parser("synth", help="write a synthetic constant-offset fixture")
    p.add_argument("--pairs", help="word-pair file (': relation' headers, 'x y' lines)")
    p.add_argument("--relations", type=int, default=1, help="generated relations when --pairs is absent")
    p.add_argument("--n-pairs", type=int, default=20)
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--distractors", type=int, default=100)
    p.add_argument("--spread", type=float, default=0.6)
    p.add_argument("--questions-per-group", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", "-o", required=True, help="output prefix")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("report", help="aggregate run files (max/mean accuracy)")
    p.add_argument("runs_dir")
    p.add_argument("--out", "-o")
    p.set_defaults(func=cmd_report)
    return parser


_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def read_config_file(path: str) -> dict[str, str]:
    """``key = value`` lines; keys use flag names with ``-`` or ``_``."""
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            if "=" not in text:
                raise CliError(f"{path}:{lineno}: expected key = value")
            key, value = (s.strip() for s in text.split("=", 1))
            values[key.replace("-", "_")] = value
    return values


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> None:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    values = read_config_file(known.config)
    for action in parser._subparsers._group_actions:
        for sub in action.choices.values():
            dests = {a.dest: a for a in sub._actions}
            updates = {}
            for key, value in values.items():
                a = dests.get(key)
                if a is None:
                    continue
                if isinstance(a.default, bool) or a.default is None and a.nargs == 0:
                    low = value.lower()
                    if low not in _TRUE | _FALSE:
                        raise CliError(f"config: {key} expects a boolean, got {value!r}")
                    updates[key] = low in _TRUE
                else:
                    # argparse converts string defaults with the action's type
                    updates[key] = value
                a.required = False
            sub.set_defaults(**updates)


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
        args = parser.parse_args(argv)
        logging.basicConfig(
            level=logging.WARNING if args.quiet else logging.INFO,
            format="%(asctime)s %(levelname)s %(message)s",
            stream=sys.stderr,
        )
        return args.func(args)
    except (CliError, OSError, ValueError) as exc:
        kind = "usage" if isinstance(exc, CliError) else type(exc).__name__
        print(f"error: {kind}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

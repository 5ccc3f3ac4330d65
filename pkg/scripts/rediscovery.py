#!/usr/bin/env python3
"""Can evolution recover c - a + b on synthetic constant-offset spaces?

For each fixture seed, builds a one-relation store (10 pairs, 40 questions,
dim 16, 150 distractors by default), splits it, and runs GP with several run
seeds. Prints one CSV row per fixture seed: how many runs reached the accuracy
bar on the training split and how many best programs are equivalent to the
rule.

    python3 scripts/rediscovery.py --fixture-seeds 3 4 5 --runs 10
"""

import argparse
import time

from gpcompose.benchmark import baseline_rule_program, split_train_test
from gpcompose.evolution import EvolutionConfig, evolve_run
from gpcompose.program import format_program, semantically_equivalent
from gpcompose.synth import generate_pairs, make_synthetic


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--fixture-seeds", type=int, nargs="+", default=[3])
    ap.add_argument("--runs", type=int, default=10)
    ap.add_argument("--pairs", type=int, default=10)
    ap.add_argument("--questions", type=int, default=40)
    ap.add_argument("--dim", type=int, default=16)
    ap.add_argument("--distractors", type=int, default=150)
    ap.add_argument("--spread", type=float, default=0.6)
    ap.add_argument("--noise", type=float, default=0.0)
    ap.add_argument("--pop", type=int, default=200)
    ap.add_argument("--gens", type=int, default=30)
    ap.add_argument("--survivors", type=int, default=40)
    ap.add_argument("--subset", type=float, default=1.0)
    ap.add_argument("--bar", type=float, default=0.95)
    ap.add_argument("-v", "--verbose", action="store_true", help="also list the best program of each run")
    args = ap.parse_args()

    rule = baseline_rule_program()
    print("fixture_seed,runs,reached_bar,equivalent,mean_train,mean_test,seconds")
    for fs in args.fixture_seeds:
        store, groups = make_synthetic(
            generate_pairs(1, args.pairs), dim=args.dim, noise=args.noise, n_distractors=args.distractors,
            seed=fs, max_questions=args.questions, spread=args.spread,
        )
        split = split_train_test(groups[0], 0)
        started = time.perf_counter()
        results = []
        for seed in range(args.runs):
            cfg = EvolutionConfig(population_size=args.pop, generations=args.gens, survivors=args.survivors,
                                  subset_fraction=args.subset, seed=seed)
            results.append(evolve_run(split.train, store, cfg, test=split.test))
        elapsed = time.perf_counter() - started
        reached = sum(r.best_train_accuracy >= args.bar for r in results)
        equivalent = sum(semantically_equivalent(r.best_program, rule) for r in results)
        mean_train = sum(r.best_train_accuracy for r in results) / len(results)
        mean_test = sum(r.best_test_accuracy for r in results) / len(results)
        print(f"{fs},{len(results)},{reached},{equivalent},{mean_train:.4f},{mean_test:.4f},{elapsed:.1f}")
        if args.verbose:
            for r in results:
                print(f"#   seed {r.seed}: {r.best_train_accuracy:.3f} {format_program(r.best_program)}")


if __name__ == "__main__":
    main()

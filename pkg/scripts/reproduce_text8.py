#!/usr/bin/env python3
"""Manual check of the rule baseline on real embeddings.

Needs word2vec vectors trained on text8 (binary or text format) and the public
``questions-words.txt`` analogy file; neither is downloaded here. For each
reference group it prints the original and in-vocabulary question counts and
the accuracy of add(ARG2,sub(ARG1,ARG0)), next to reference values. Embedding
training is stochastic, so agreement within about 10 points is expected, not
exact equality.

    python3 scripts/reproduce_text8.py --embeddings text8.bin --questions questions-words.txt
"""

import argparse
import logging

from gpcompose.benchmark import baseline_rule_program, evaluate_accuracy, filter_oov, parse_questions, split_train_test
from gpcompose.embeddings import load_embeddings

# group name -> (questions in the public file, in-vocabulary questions, rule accuracy %)
REFERENCE = {
    "family": (506, 305, 77.70),
    "gram1-adjective-to-adverb": (992, 755, 16.16),
    "gram2-opposite": (812, 305, 24.92),
    "gram3-comparative": (1332, 1259, 60.44),
    "gram4-superlative": (1122, 505, 40.40),
    "gram5-present-participle": (1056, 991, 36.83),
    "gram7-past-tense": (1560, 1331, 37.94),
    "gram8-plural": (1332, 991, 66.50),
    "gram9-plural-verbs": (870, 649, 34.21),
}


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--embeddings", required=True)
    ap.add_argument("--questions", required=True)
    ap.add_argument("--restrict", type=int, default=30000)
    ap.add_argument("--split-seed", type=int, default=0)
    ap.add_argument("--tolerance", type=float, default=10.0, help="allowed gap in accuracy points")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    store = load_embeddings(args.embeddings)
    logging.info("%d words, dim %d", len(store), store.dim)
    rule = baseline_rule_program()
    print("group,nq_orig,nq,ref_nq,rule_all,rule_test,ref_rule,within_tolerance")
    for group in parse_questions(args.questions, lowercase=True):
        if group.name not in REFERENCE:
            continue
        ref_orig, ref_nq, ref_rule = REFERENCE[group.name]
        kept = filter_oov(group, store)
        if len(kept) < 2:
            print(f"{group.name},{len(group)},{len(kept)},{ref_nq},,,{ref_rule},0")
            continue
        acc_all = 100 * evaluate_accuracy(rule, kept.questions, store, args.restrict)
        acc_test = 100 * evaluate_accuracy(rule, split_train_test(kept, args.split_seed).test, store, args.restrict)
        ok = abs(acc_all - ref_rule) <= args.tolerance
        print(f"{group.name},{len(group)},{len(kept)},{ref_nq},{acc_all:.2f},{acc_test:.2f},{ref_rule:.2f},{int(ok)}")


if __name__ == "__main__":
    main()

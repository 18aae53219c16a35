#!/usr/bin/env python3
"""Convert SICK (SICK.txt or SICK_{train,trial,test_annotated}.txt) to the
pair TSV format, either as relatedness scores or entailment labels."""
import argparse
import csv
import sys


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("input")
    ap.add_argument("output")
    ap.add_argument("--task", choices=["sts", "entailment"], required=True)
    ap.add_argument("--split", help="TRAIN, TRIAL or TEST (SICK.txt only)")
    a = ap.parse_args()
    n = 0
    with open(a.input, encoding="utf-8") as f, open(a.output, "w", encoding="utf-8") as out:
        reader = csv.DictReader(f, delimiter="\t", quoting=csv.QUOTE_NONE)
        for r in reader:
            if a.split and r.get("SemEval_set", a.split).upper() != a.split.upper():
                continue
            gold = r["relatedness_score"] if a.task == "sts" else r["entailment_label"].lower()
            out.write(f"{r['sentence_A'].strip()}\t{r['sentence_B'].strip()}\t{gold}\n")
            n += 1
    print(f"wrote {n} pairs to {a.output}", file=sys.stderr)


if __name__ == "__main__":
    main()

#!/usr/bin/env python3
"""Convert STS Benchmark files to `s1<TAB>s2<TAB>score` lines.

Accepts both the original distribution (sts-train.csv: genre, file, year,
id, score, sentence1, sentence2[, sources]) and the GLUE release (a header
row naming sentence1, sentence2 and score).
"""
import argparse
import csv
import sys


def clean(s):
    return " ".join(s.replace("\t", " ").split())


def rows(path):
    with open(path, encoding="utf-8") as f:
        reader = csv.reader(f, delimiter="\t", quoting=csv.QUOTE_NONE)
        first = next(reader)
        if "sentence1" in first:
            i1, i2 = first.index("sentence1"), first.index("sentence2")
            isc = first.index("score") if "score" in first else None
            for r in reader:
                if isc is None:
                    sys.exit(f"{path}: unlabeled split (no score column)")
                yield r[i1], r[i2], r[isc]
        else:
            for r in [first, *reader]:
                yield r[5], r[6], r[4]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("input")
    ap.add_argument("output")
    a = ap.parse_args()
    n = 0
    with open(a.output, "w", encoding="utf-8") as out:
        for s1, s2, score in rows(a.input):
            out.write(f"{clean(s1)}\t{clean(s2)}\t{float(score)}\n")
            n += 1
    print(f"wrote {n} pairs to {a.output}", file=sys.stderr)


if __name__ == "__main__":
    main()

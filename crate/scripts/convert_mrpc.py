#!/usr/bin/env python3
"""Convert msr_paraphrase_{train,test}.txt to `s1<TAB>s2<TAB>0|1` lines."""
import argparse
import csv
import sys


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("input")
    ap.add_argument("output")
    a = ap.parse_args()
    n = 0
    with open(a.input, encoding="utf-8-sig") as f, open(a.output, "w", encoding="utf-8") as out:
        reader = csv.reader(f, delimiter="\t", quoting=csv.QUOTE_NONE)
        next(reader)
        for r in reader:
            out.write(f"{r[3].strip()}\t{r[4].strip()}\t{int(r[0])}\n")
            n += 1
    print(f"wrote {n} pairs to {a.output}", file=sys.stderr)


if __name__ == "__main__":
    main()

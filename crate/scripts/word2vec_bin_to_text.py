#!/usr/bin/env python3
"""Convert a binary word2vec file to the text format read by pairsim
(`count dim` header, then `word v1 ... vd` per line). Optionally keep only
words found in a set of pair files, which shrinks the tables a lot."""
import argparse
import sys

import numpy as np


def vocab_of(paths):
    words = set()
    for p in paths:
        with open(p, encoding="utf-8") as f:
            for line in f:
                parts = line.rstrip("\n").split("\t")
                for s in parts[:2]:
                    words.update(w.strip(".,;:!?\"'()").lower() for w in s.split())
    return words


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("input")
    ap.add_argument("output")
    ap.add_argument("--restrict", nargs="*", default=[], help="pair TSV files")
    a = ap.parse_args()
    keep = vocab_of(a.restrict) if a.restrict else None
    with open(a.input, "rb") as f:
        count, dim = map(int, f.readline().split())
        rows = []
        for _ in range(count):
            word = bytearray()
            while (c := f.read(1)) != b" ":
                if c != b"\n":
                    word += c
            vec = np.frombuffer(f.read(4 * dim), dtype="<f4")
            w = word.decode("utf-8", errors="replace")
            if keep is None or w.lower() in keep:
                rows.append((w, vec))
    with open(a.output, "w", encoding="utf-8") as out:
        out.write(f"{len(rows)} {dim}\n")
        for w, v in rows:
            out.write(w + " " + " ".join(f"{x:.6f}" for x in v) + "\n")
    print(f"kept {len(rows)} of {count} vectors", file=sys.stderr)


if __name__ == "__main__":
    main()

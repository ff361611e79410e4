#!/usr/bin/env python3
"""Brute-force BM25 scorer used to produce the golden baseline run.

Scores every document against every query independently of the Rust
index: lowercase, whitespace-separated words (the fixture has no
punctuation), the 33-word Lucene English stopword list, and NLTK's Porter
stemmer in its reference-implementation mode. Requires `pip install nltk`.

usage: oracle_bm25.py COLLECTION QUERIES OUT [--k1 0.9] [--b 0.4] [--top-k 1000]
"""
import argparse
import math

from nltk.stem.porter import PorterStemmer

STOPWORDS = set(
    "a an and are as at be but by for if in into is it no not of on or such "
    "that the their then there these they this to was will with".split()
)
stemmer = PorterStemmer(mode=PorterStemmer.MARTIN_EXTENSIONS)


def analyze(text):
    out = []
    for w in text.lower().split():
        if w in STOPWORDS:
            continue
        out.append(w if len(w) <= 2 else stemmer.stem(w, to_lowercase=False))
    return out


def read_tsv(path):
    with open(path) as f:
        return [line.rstrip("\n").split("\t") for line in f if line.strip()]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("collection")
    ap.add_argument("queries")
    ap.add_argument("out")
    ap.add_argument("--k1", type=float, default=0.9)
    ap.add_argument("--b", type=float, default=0.4)
    ap.add_argument("--top-k", type=int, default=1000)
    ap.add_argument("--tag", default="baseline")
    args = ap.parse_args()

    docs = [(did, analyze(text)) for did, text in read_tsv(args.collection)]
    n = len(docs)
    avgdl = sum(len(t) for _, t in docs) / n
    df = {}
    for _, terms in docs:
        for t in set(terms):
            df[t] = df.get(t, 0) + 1

    with open(args.out, "w") as out:
        for qid, text in read_tsv(args.queries):
            counts = {}
            for t in analyze(text):
                counts[t] = counts.get(t, 0) + 1
            scored = []
            for did, terms in docs:
                dl = len(terms)
                score = 0.0
                matched = False
                for t in sorted(counts):
                    tf = terms.count(t)
                    if tf == 0:
                        continue
                    matched = True
                    idf = math.log(1.0 + (n - df[t] + 0.5) / (df[t] + 0.5))
                    norm = 1.0 - args.b + args.b * dl / avgdl
                    score += float(counts[t]) * idf * (tf / (tf + args.k1 * norm))
                if matched:
                    scored.append((-score, did))
            scored.sort()
            for rank, (neg, did) in enumerate(scored[: args.top_k], 1):
                out.write(f"{qid} Q0 {did} {rank} {-neg:.6f} {args.tag}\n")


if __name__ == "__main__":
    main()

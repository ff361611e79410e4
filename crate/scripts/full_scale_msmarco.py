#!/usr/bin/env python3
"""Full-scale MS MARCO passage dev run: BM25 vs BM25 + pseudo-documents.

NEEDS EXTERNAL DATA AND HOURS OF RUNTIME. Not part of the test suite.

Inputs (download yourself):
  collection.tsv, queries.dev.small.tsv, qrels.dev.small.tsv
      from https://microsoft.github.io/msmarco/ (passage ranking)
  pseudo-documents for the dev queries
      https://huggingface.co/datasets/intfloat/query2doc_msmarco
      (needs `pip install datasets`; fetched on first run)

Targets on dev small: MRR@10 18.4 +- 0.5 for BM25 and 21.4 +- 0.5 with
query2doc. Exit status is 1 if either misses its band.

    cargo build --release -p q2d-cli
    python3 scripts/full_scale_msmarco.py --data /path/to/msmarco --work /tmp/q2d-full
"""

import argparse
import json
import subprocess
import sys
from pathlib import Path

TARGETS = {"baseline": 18.4, "query2doc-sparse": 21.4}
BAND = 0.5


def q2d(binary, *args):
    print("+", binary, *args, flush=True)
    out = subprocess.run([binary, *args], check=True, capture_output=True, text=True)
    return out.stdout


def write_expansions(path, query_ids):
    from datasets import load_dataset

    wanted = set(query_ids)
    seen = 0
    with open(path, "w", encoding="utf-8") as f:
        for split in ("validation", "test", "train"):
            try:
                ds = load_dataset("intfloat/query2doc_msmarco", split=split)
            except ValueError:
                continue
            for row in ds:
                qid = str(row["query_id"])
                if qid in wanted:
                    text = " ".join(row["pseudo_doc"].split())
                    f.write(f"{qid}\t{text}\n")
                    wanted.discard(qid)
                    seen += 1
    if wanted:
        sys.exit(f"{len(wanted)} dev queries have no released pseudo-document")
    return seen


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--data", type=Path, required=True)
    ap.add_argument("--work", type=Path, required=True)
    ap.add_argument("--bin", default="target/release/q2d")
    args = ap.parse_args()
    args.work.mkdir(parents=True, exist_ok=True)

    queries = args.data / "queries.dev.small.tsv"
    qrels = args.data / "qrels.dev.small.tsv"
    index = args.work / "msmarco.idx"
    expansions = args.work / "expansions.tsv"

    if not index.exists():
        q2d(args.bin, "index", "--collection", str(args.data / "collection.tsv"), "--index", str(index))
    if not expansions.exists():
        ids = [line.split("\t", 1)[0] for line in queries.read_text(encoding="utf-8").splitlines() if line]
        print(f"wrote {write_expansions(expansions, ids)} pseudo-documents")

    ok = True
    for mode, target in TARGETS.items():
        run = args.work / f"{mode}.run"
        q2d(args.bin, "search", "--index", str(index), "--queries", str(queries), "--mode", mode,
            "--offline-expansions", str(expansions), "--top-k", "1000", "--output", str(run))
        report = json.loads(q2d(args.bin, "evaluate", "--run", str(run), "--qrels", str(qrels), "--format", "json"))
        mrr = 100 * report["aggregate"]["MRR@10"]
        hit = abs(mrr - target) <= BAND
        ok &= hit
        print(f"{mode:18} MRR@10 {mrr:.1f}  target {target} +- {BAND}  {'ok' if hit else 'MISS'}")
    sys.exit(0 if ok else 1)


if __name__ == "__main__":
    main()

#!/usr/bin/env python3
"""Writes the graded metric fixture and its reference values.

Reference values come from pytrec_eval (trec_eval bindings):
    pip install pytrec_eval-terrier
MRR@10 is trec_eval's recip_rank over the run cut to its top 10.
"""
import json
import random
from pathlib import Path

import pytrec_eval

OUT = Path(__file__).resolve().parent.parent / "fixtures" / "metrics"
rng = random.Random(20231018)

qrels = {}
run = {}
for q in range(1, 6):
    qid = f"q{q}"
    docs = [f"d{q}_{i:03d}" for i in range(120)]
    judged = rng.sample(docs, 12)
    grades = {d: rng.choice([0, 1, 1, 2, 2, 3]) for d in judged}
    # every query keeps at least one grade >= 2 document
    grades[judged[0]] = 3
    qrels[qid] = grades
    ranked = rng.sample(docs, 80)
    # distinct descending scores, so rank order and score order agree
    run[qid] = {d: round(100.0 - i * 0.75 - rng.random() * 0.5, 6) for i, d in enumerate(ranked)}

# query 5: first relevant document sits just past the MRR cutoff
ranked5 = sorted(run["q5"], key=lambda d: -run["q5"][d])
relevant5 = [d for d in ranked5 if qrels["q5"].get(d, 0) >= 1]
nonrel5 = [d for d in ranked5 if qrels["q5"].get(d, 0) == 0]
order5 = nonrel5[:10] + relevant5[:1] + [d for d in ranked5 if d not in nonrel5[:10] and d != relevant5[0]]
run["q5"] = {d: round(100.0 - i * 0.75, 6) for i, d in enumerate(order5)}

with open(OUT / "qrels.txt", "w") as f:
    for qid in sorted(qrels):
        for d in sorted(qrels[qid]):
            f.write(f"{qid} 0 {d} {qrels[qid][d]}\n")

with open(OUT / "run.txt", "w") as f:
    for qid in sorted(run):
        ranked = sorted(run[qid].items(), key=lambda kv: -kv[1])
        for rank, (d, s) in enumerate(ranked, 1):
            f.write(f"{qid} Q0 {d} {rank} {s:.6f} fixture\n")


def reference(threshold):
    top10 = {q: dict(sorted(r.items(), key=lambda kv: -kv[1])[:10]) for q, r in run.items()}
    rr = pytrec_eval.RelevanceEvaluator(qrels, {"recip_rank"}, relevance_level=threshold).evaluate(top10)
    rest = pytrec_eval.RelevanceEvaluator(
        qrels, {"recall.50,1000", "ndcg_cut.10"}, relevance_level=threshold
    ).evaluate(run)
    per_query = {
        q: {
            "MRR@10": rr[q]["recip_rank"],
            "R@50": rest[q]["recall_50"],
            "R@1000": rest[q]["recall_1000"],
            "nDCG@10": rest[q]["ndcg_cut_10"],
        }
        for q in sorted(run)
    }
    names = ["MRR@10", "R@50", "R@1000", "nDCG@10"]
    aggregate = {m: sum(v[m] for v in per_query.values()) / len(per_query) for m in names}
    return {"per_query": per_query, "aggregate": aggregate}


refs = {
    "tool": f"pytrec_eval {getattr(pytrec_eval, '__version__', '')}".strip(),
    "threshold_1": reference(1),
    "threshold_2": reference(2),
}
(OUT / "reference.json").write_text(json.dumps(refs, indent=2, sort_keys=True) + "\n")

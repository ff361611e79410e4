#!/usr/bin/env python3
"""Writes the bundled 100-document synthetic retrieval fixture.

Each topic has query words and answer words. Relevant documents are
written mostly in answer words, distractors repeat the query words, and
each pseudo-document mentions both and repeats the answer words, as a
generated passage would.
"""
import random
from pathlib import Path

OUT = Path(__file__).resolve().parent.parent / "fixtures" / "synthetic"
rng = random.Random(7)

ONSETS = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z"]
VOWELS = ["a", "e", "i", "o", "u"]


def word_pool(n):
    seen = set()
    while len(seen) < n:
        w = "".join(rng.choice(ONSETS) + rng.choice(VOWELS) for _ in range(3))
        seen.add(w)
    return sorted(seen)


TOPICS = 20
pool = word_pool(TOPICS * 11 + 40)
rng.shuffle(pool)
filler = pool[-40:]
topics = [(pool[t * 11 : t * 11 + 3], pool[t * 11 + 3 : t * 11 + 11]) for t in range(TOPICS)]


def sentence(words, length):
    return " ".join(rng.choice(words) for _ in range(length))


docs = []
qrels = []
for t, (qwords, awords) in enumerate(topics):
    for j, grade in enumerate([2, 1]):
        body = rng.sample(awords, 5) + [qwords[j]] + rng.sample(filler, 6)
        rng.shuffle(body)
        did = f"D{t:02d}R{j}"
        docs.append((did, " ".join(body)))
        qrels.append((f"Q{t:02d}", did, grade))
    for j in range(2):
        other = topics[(t + 1 + j) % TOPICS][1]
        body = qwords[:2] * 2 + rng.sample(other, 3) + rng.sample(filler, 5)
        rng.shuffle(body)
        docs.append((f"D{t:02d}X{j}", " ".join(body)))
for i in range(100 - len(docs)):
    docs.append((f"N{i:02d}", sentence(filler, 12)))
rng.shuffle(docs)

with open(OUT / "collection.tsv", "w") as f:
    for did, text in docs:
        f.write(f"{did}\t{text}\n")
with open(OUT / "queries.tsv", "w") as f:
    for t, (qwords, _) in enumerate(topics):
        f.write(f"Q{t:02d}\t{' '.join(qwords)}\n")
with open(OUT / "qrels.txt", "w") as f:
    for qid, did, grade in qrels:
        f.write(f"{qid} 0 {did} {grade}\n")
with open(OUT / "expansions.tsv", "w") as f:
    for t, (qwords, awords) in enumerate(topics):
        body = list(qwords) + rng.sample(filler, 4)
        for w in rng.sample(awords, 6):
            body += [w] * rng.choice([2, 3])
        rng.shuffle(body)
        f.write(f"Q{t:02d}\t{' '.join(body)}\n")

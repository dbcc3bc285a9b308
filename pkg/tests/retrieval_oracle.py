"""Brute-force reference for exemplar retrieval, written independently of the
library's incremental merge. Global view: for every candidate, take its best
z across providers, then a single sort over everything.

Expression shapes (fsum dot, sqrt-of-fsum norms, divide by norm product)
deliberately mirror the library so exactly-rounded arithmetic produces
bit-identical floats; everything else (looping, accumulation, ordering) is
an independent construction.
"""

from __future__ import annotations

from math import fsum, sqrt

Z_EPSILON = 1e-12


def oracle_cosine(a, b):
    dot = fsum(x * y for x, y in zip(a, b))
    na = sqrt(fsum(x * x for x in a))
    nb = sqrt(fsum(y * y for y in b))
    return dot / (na * nb)


def oracle_retrieve(test_questions, train_questions, providers, n, exclude_same_id=False):
    """Returns, per test question, a list of (train_id, raw, z, source_model)."""
    best = [{} for _ in test_questions]  # train_id -> (z, raw, source_model)
    for provider in providers:
        train_vectors = provider.embed([q.text for q in train_questions])
        test_vectors = provider.embed([q.text for q in test_questions])
        top_rows = []
        for tq, tv in zip(test_questions, test_vectors):
            scored = []
            for trq, trv in zip(train_questions, train_vectors):
                if exclude_same_id and trq.id == tq.id:
                    continue
                scored.append((oracle_cosine(tv.values, trv.values), trq.id))
            scored.sort(key=lambda pair: (-pair[0], pair[1]))
            top_rows.append(scored[:n])
        flat = [score for row in top_rows for score, _ in row]
        if not flat:
            continue
        mu = fsum(flat) / len(flat)
        sigma = sqrt(fsum((x - mu) ** 2 for x in flat) / len(flat))
        for row_index, row in enumerate(top_rows):
            for raw, train_id in row:
                z = 0.0 if sigma < Z_EPSILON else (raw - mu) / sigma
                entry = best[row_index].get(train_id)
                if entry is None or z > entry[0]:
                    best[row_index][train_id] = (z, raw, provider.model_id)
    results = []
    for candidates in best:
        ranked = sorted(
            ((z, raw, train_id, source) for train_id, (z, raw, source) in candidates.items()),
            key=lambda item: (-item[0], -item[1], item[2]),
        )[:n]
        results.append([(train_id, raw, z, source) for z, raw, train_id, source in ranked])
    return results

"""Corpus caption metrics: BLEU-n and CIDEr.

Both metrics tokenize raw strings through the same normalization the
training pipeline uses, so scoring is consistent with what the model was
trained on. Both are invariant to the order of (candidate, references)
pairs; CIDEr sums per-pair scores in sorted order so corpus totals are
bitwise stable under permutation.
"""

from __future__ import annotations

import math
from collections import Counter
from typing import Sequence

import numpy as np

from .data import normalize

MAX_N = 4


def ngram_counts(tokens: Sequence[str], n: int) -> Counter:
    return Counter(
        tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1)
    )


def _check_pairs(candidates, reference_sets):
    if len(candidates) == 0:
        raise ValueError("at least one candidate is required")
    if len(candidates) != len(reference_sets):
        raise ValueError(
            f"{len(candidates)} candidates vs {len(reference_sets)} reference sets"
        )
    for refs in reference_sets:
        if len(refs) == 0:
            raise ValueError("every candidate needs at least one reference")


def bleu(
    candidates: Sequence[str],
    reference_sets: Sequence[Sequence[str]],
    max_n: int = MAX_N,
) -> float:
    """Corpus-level BLEU with clipped n-gram precision.

    Geometric mean of modified precisions for n = 1..max_n with uniform
    weights, times the brevity penalty exp(min(0, 1 - r/c)) where r sums
    the closest reference length per pair (ties to the shorter one).
    """
    if not (1 <= max_n <= MAX_N):
        raise ValueError(f"max_n must be within 1..{MAX_N}, got {max_n}")
    _check_pairs(candidates, reference_sets)
    clipped = [0] * (max_n + 1)
    total = [0] * (max_n + 1)
    cand_len = 0
    ref_len = 0
    for cand, refs in zip(candidates, reference_sets):
        cand_tokens = normalize(cand)
        ref_tokens = [normalize(r) for r in refs]
        cand_len += len(cand_tokens)
        ref_len += min(
            (abs(len(r) - len(cand_tokens)), len(r)) for r in ref_tokens
        )[1]
        for n in range(1, max_n + 1):
            counts = ngram_counts(cand_tokens, n)
            if not counts:
                continue
            max_ref = Counter()
            for r in ref_tokens:
                for gram, c in ngram_counts(r, n).items():
                    if c > max_ref[gram]:
                        max_ref[gram] = c
            clipped[n] += sum(min(c, max_ref[gram]) for gram, c in counts.items())
            total[n] += sum(counts.values())
    if cand_len == 0:
        return 0.0
    log_sum = 0.0
    for n in range(1, max_n + 1):
        if total[n] == 0 or clipped[n] == 0:
            return 0.0
        log_sum += math.log(clipped[n] / total[n])
    brevity = math.exp(min(0.0, 1.0 - ref_len / cand_len))
    return brevity * math.exp(log_sum / max_n)


def _tfidf_vector(tokens, n, idf) -> tuple[dict, float]:
    vec = {
        gram: count * idf.get(gram, 0.0)
        for gram, count in ngram_counts(tokens, n).items()
    }
    norm = math.sqrt(sum(w * w for w in vec.values()))
    return vec, norm


def cider_scores(
    candidates: Sequence[str],
    reference_sets: Sequence[Sequence[str]],
    max_n: int = MAX_N,
) -> list[float]:
    """Per-pair CIDEr scores on the 0..10 scale.

    Document frequency of an n-gram is the number of reference sets that
    contain it anywhere; idf = log(corpus_size / max(1, df)). The per-n
    similarity against one reference clips the candidate counts at the
    reference counts:  sum(min(h, r) * r) / (|h| |r|).
    """
    _check_pairs(candidates, reference_sets)
    corpus_size = len(reference_sets)
    df: Counter = Counter()
    tokenized_refs = []
    for refs in reference_sets:
        ref_tokens = [normalize(r) for r in refs]
        tokenized_refs.append(ref_tokens)
        grams = set()
        for tokens in ref_tokens:
            for n in range(1, max_n + 1):
                grams.update(ngram_counts(tokens, n))
        df.update(grams)
    idf = {gram: math.log(corpus_size / max(1, count)) for gram, count in df.items()}

    def idf_for(gram):
        return idf.get(gram, math.log(corpus_size))

    scores = []
    for cand, ref_tokens in zip(candidates, tokenized_refs):
        cand_tokens = normalize(cand)
        per_n = []
        for n in range(1, max_n + 1):
            cand_vec = {
                gram: count * idf_for(gram)
                for gram, count in ngram_counts(cand_tokens, n).items()
            }
            cand_norm = math.sqrt(sum(w * w for w in cand_vec.values()))
            sims = []
            for tokens in ref_tokens:
                ref_vec = {
                    gram: count * idf_for(gram)
                    for gram, count in ngram_counts(tokens, n).items()
                }
                ref_norm = math.sqrt(sum(w * w for w in ref_vec.values()))
                if cand_norm == 0.0 or ref_norm == 0.0:
                    sims.append(0.0)
                    continue
                overlap = sum(
                    min(w, ref_vec[gram]) * ref_vec[gram]
                    for gram, w in cand_vec.items()
                    if gram in ref_vec
                )
                sims.append(overlap / (cand_norm * ref_norm))
            per_n.append(sum(sims) / len(sims))
        scores.append(10.0 * sum(per_n) / max_n)
    return scores


def cider(
    candidates: Sequence[str],
    reference_sets: Sequence[Sequence[str]],
    max_n: int = MAX_N,
) -> float:
    """Corpus CIDEr: mean per-pair score, summed in sorted order so the
    result is bitwise independent of pair ordering."""
    scores = cider_scores(candidates, reference_sets, max_n)
    return float(np.sort(np.asarray(scores)).sum() / len(scores))


def evaluation_report(
    candidates: Sequence[str], reference_sets: Sequence[Sequence[str]]
) -> dict[str, float]:
    """BLEU-1..4 plus CIDEr, raw (0..10) and table-scaled (0..100)."""
    report = {}
    for n in range(1, MAX_N + 1):
        report[f"BLEU-{n}"] = bleu(candidates, reference_sets, max_n=n)
    raw = cider(candidates, reference_sets)
    report["CIDEr"] = raw
    report["CIDEr-x10"] = raw * 10.0
    return report

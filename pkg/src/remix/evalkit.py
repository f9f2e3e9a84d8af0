"""Embedding extraction and ranking metrics: CMC Rank-k, mAP, the
cross-domain query/gallery protocol, and cluster-purity diagnostics.

Protocol: gallery items sharing the query's identity AND camera are masked
out; ties in similarity break by ascending gallery index.
"""
from __future__ import annotations

import json

import numpy as np

from .datamodel import MultiCamDataset, PersonSample
from .encoder import EncoderParams, forward_batch
from .errors import EmptyPoolError, NoValidPositiveError
from .pseudolabel import PseudoLabeledPool


def extract(params: EncoderParams, samples: list[PersonSample]) -> np.ndarray:
    """Order-preserving embeddings with no augmentation applied."""
    if not samples:
        return np.zeros((0, params.dim_out))
    embs, _ = forward_batch(params, np.stack([s.features for s in samples]))
    return embs


def _rankings(q_embs, q_ids, q_cams, g_embs, g_ids, g_cams):
    """Yield (ranked relevance vector) per query over the valid gallery."""
    q_ids = np.asarray(q_ids)
    q_cams = np.asarray(q_cams)
    g_ids = np.asarray(g_ids)
    g_cams = np.asarray(g_cams)
    sims = np.asarray(q_embs) @ np.asarray(g_embs).T
    for qi in range(len(q_ids)):
        valid = ~((g_ids == q_ids[qi]) & (g_cams == q_cams[qi]))
        v_idx = np.nonzero(valid)[0]
        rel = g_ids[v_idx] == q_ids[qi]
        if not rel.any():
            raise NoValidPositiveError(f"query {qi} has no valid positive")
        order = np.argsort(-sims[qi, v_idx], kind="stable")
        yield rel[order]


def cmc_rank_k(q_embs, q_ids, q_cams, g_embs, g_ids, g_cams, k: int) -> float:
    """Fraction of queries with a correct match in the top-k valid ranking."""
    hits = [bool(rel[:k].any())
            for rel in _rankings(q_embs, q_ids, q_cams, g_embs, g_ids, g_cams)]
    return float(np.mean(hits))


def mean_ap(q_embs, q_ids, q_cams, g_embs, g_ids, g_cams) -> float:
    """Mean over queries of average precision of the masked ranking."""
    aps = []
    for rel in _rankings(q_embs, q_ids, q_cams, g_embs, g_ids, g_cams):
        rel = rel.astype(np.float64)
        cum = np.cumsum(rel)
        prec = cum / np.arange(1, len(rel) + 1)
        aps.append(float((prec * rel).sum() / rel.sum()))
    return float(np.mean(aps))


def cluster_purity(pool: PseudoLabeledPool) -> float:
    """Size-weighted mean of the dominant hidden-identity fraction per cluster."""
    if not pool.entries:
        raise EmptyPoolError("no clusters in pool")
    weighted = 0.0
    total = 0
    for members in pool.entries.values():
        counts: dict[int, int] = {}
        for s, _ in members:
            counts[s.hidden_identity] = counts.get(s.hidden_identity, 0) + 1
        weighted += max(counts.values())
        total += len(members)
    return weighted / total


def split_query_gallery(dataset: MultiCamDataset) -> tuple[list[int], list[int]]:
    """Per (identity, camera): the lowest sample_id is a query, rest gallery."""
    first: dict[tuple[int, int], int] = {}
    for i, s in enumerate(dataset.samples):
        key = (s.identity, s.camera)
        if key not in first or dataset.samples[first[key]].sample_id > s.sample_id:
            first[key] = i
    q_idx = sorted(first.values())
    q_set = set(q_idx)
    g_idx = [i for i in range(len(dataset.samples)) if i not in q_set]
    return q_idx, g_idx


def evaluate(params: EncoderParams, target: MultiCamDataset) -> dict:
    """Cross-domain evaluation report over the target dataset."""
    q_idx, g_idx = split_query_gallery(target)
    embs = extract(params, target.samples)
    ids = np.array([s.identity for s in target.samples])
    cams = np.array([s.camera for s in target.samples])
    args = (embs[q_idx], ids[q_idx], cams[q_idx],
            embs[g_idx], ids[g_idx], cams[g_idx])
    return {
        "rank1": cmc_rank_k(*args, k=1),
        "rank5": cmc_rank_k(*args, k=5),
        "rank10": cmc_rank_k(*args, k=10),
        "mAP": mean_ap(*args),
        "n_query": len(q_idx),
        "n_gallery": len(g_idx),
        "protocol": "cross-domain",
    }


def shuffled_label_baseline(
    params: EncoderParams,
    target: MultiCamDataset,
    rng: np.random.Generator,
    n_shuffles: int = 5,
) -> float:
    """Chance-level mAP: permute gallery identities and re-score.

    Averaged over a few permutations; permutations that strand a query
    without a valid positive are redrawn.
    """
    q_idx, g_idx = split_query_gallery(target)
    embs = extract(params, target.samples)
    ids = np.array([s.identity for s in target.samples])
    cams = np.array([s.camera for s in target.samples])
    maps = []
    attempts = 0
    while len(maps) < n_shuffles and attempts < 20 * n_shuffles:
        attempts += 1
        g_ids = rng.permutation(ids[g_idx])
        try:
            maps.append(mean_ap(embs[q_idx], ids[q_idx], cams[q_idx],
                                embs[g_idx], g_ids, cams[g_idx]))
        except NoValidPositiveError:
            continue
    if not maps:
        raise NoValidPositiveError("no permutation left every query a positive")
    return float(np.mean(maps))


def write_report(path, report: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report, fh)
        fh.write("\n")

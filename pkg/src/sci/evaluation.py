"""Exact-search oracle, IR metrics, and the nprobe sweep harness.

Runs are dicts query_id -> ranked item id list. Qrels are dicts
query_id -> {item_id: grade}, grade >= 1 meaning relevant. Queries with an
empty relevant set are skipped (not scored as zero) and the skip count is
reported.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import ivf
from .core import pairwise_sq_dists
from .errors import DimensionMismatch, MismatchedCorpora

METRICS = ("precision", "recall", "mrr", "ndcg")


def brute_force_search(vectors, query, k: int) -> ivf.SearchResult:
    """Exact ascending squared-L2 top-k with item-id tie-break."""
    if k < 1:
        raise ValueError("k must be >= 1")
    ids = np.asarray([i for i, _ in vectors], dtype=np.uint64)
    feats = np.asarray([f for _, f in vectors], dtype=np.float32)
    query = np.asarray(query, dtype=np.float32)
    if query.shape != (feats.shape[1],):
        raise DimensionMismatch(f"query dim {query.shape} vs corpus {feats.shape[1]}")
    d = pairwise_sq_dists(feats, query.reshape(1, -1))[:, 0]
    order = np.lexsort((ids, d))[:k]
    ranked = [(int(ids[i]), float(d[i])) for i in order]
    return ivf.SearchResult(ranked, [])


def _relevant(qrels, qid):
    return {item for item, grade in qrels.get(qid, {}).items() if grade >= 1}


def _mean_over_queries(run, qrels, per_query):
    values = []
    skipped = 0
    for qid in run:
        rel = _relevant(qrels, qid)
        if not rel:
            skipped += 1
            continue
        values.append(per_query(run[qid], rel, qrels.get(qid, {})))
    if not values:
        return 0.0, skipped
    return float(np.mean(values)), skipped


def recall_at_k(run, qrels, k: int) -> float:
    value, _ = _mean_over_queries(
        run, qrels, lambda ranked, rel, _: len(set(ranked[:k]) & rel) / len(rel))
    return value


def precision_at_k(run, qrels, k: int) -> float:
    value, _ = _mean_over_queries(
        run, qrels, lambda ranked, rel, _: len(set(ranked[:k]) & rel) / k)
    return value


def mrr_at_k(run, qrels, k: int) -> float:
    def per_query(ranked, rel, _):
        for rank, item in enumerate(ranked[:k], start=1):
            if item in rel:
                return 1.0 / rank
        return 0.0
    value, _ = _mean_over_queries(run, qrels, per_query)
    return value


def ndcg_at_k(run, qrels, k: int, graded: bool = False) -> float:
    """Binary-gain NDCG by default; 2^grade - 1 gains behind the flag."""
    def gain(g):
        return (2.0 ** g - 1.0) if graded else 1.0

    def per_query(ranked, rel, grades):
        dcg = 0.0
        for rank, item in enumerate(ranked[:k], start=1):
            if item in rel:
                dcg += gain(grades[item]) / math.log2(rank + 1)
        ideal = sorted((grades[item] for item in rel), reverse=True)[:k]
        idcg = sum(gain(g) / math.log2(r + 1)
                   for r, g in enumerate(ideal, start=1))
        return dcg / idcg if idcg > 0.0 else 0.0
    value, _ = _mean_over_queries(run, qrels, per_query)
    return value


def skipped_queries(run, qrels) -> int:
    return sum(1 for qid in run if not _relevant(qrels, qid))


@dataclass
class EvalReport:
    values: dict       # "metric@k" -> value in [0, 1]
    n_queries: int
    n_skipped: int


def evaluate(run, qrels, k_list, graded_ndcg: bool = False) -> EvalReport:
    values = {}
    for k in k_list:
        values[f"precision@{k}"] = precision_at_k(run, qrels, k)
        values[f"recall@{k}"] = recall_at_k(run, qrels, k)
        values[f"mrr@{k}"] = mrr_at_k(run, qrels, k)
        values[f"ndcg@{k}"] = ndcg_at_k(run, qrels, k, graded_ndcg)
    return EvalReport(values, len(run), skipped_queries(run, qrels))


@dataclass
class SweepResult:
    # rows: (method, nprobe, metric, cutoff, value)
    rows: list
    # matches: (metric, cutoff, standard_nprobe, smallest ci_nprobe whose
    # value >= the standard value, or None)
    matches: list

    def value(self, method, nprobe, metric, cutoff):
        for m, np_, met, cut, v in self.rows:
            if (m, np_, met, cut) == (method, nprobe, metric, cutoff):
                return v
        raise KeyError((method, nprobe, metric, cutoff))


def nprobe_sweep(index_std: ivf.IvfIndex, index_ci: ivf.IvfIndex, model,
                 queries, qrels, nprobe_list, k_list) -> SweepResult:
    """Full metric grid for both build modes across nprobe values.

    queries: list of (query_id, feature). Also reports, per metric/cutoff,
    the smallest CI nprobe that reaches each Standard nprobe's value.
    """
    if index_std.n_items != index_ci.n_items or index_std.dim != index_ci.dim:
        raise MismatchedCorpora("indexes do not cover the same corpus")
    k_max = max(k_list)
    rows = []
    grid = {}
    for method, index in (("standard", index_std), ("ci", index_ci)):
        for nprobe in nprobe_list:
            run = {}
            for qid, feat in queries:
                result = ivf.search(index, model, feat, nprobe, k_max)
                run[qid] = [item for item, _ in result.ranked]
            report = evaluate(run, qrels, k_list)
            for k in k_list:
                for metric in METRICS:
                    v = report.values[f"{metric}@{k}"]
                    rows.append((method, nprobe, metric, k, v))
                    grid[(method, nprobe, metric, k)] = v

    matches = []
    for metric in METRICS:
        for k in k_list:
            for np_std in nprobe_list:
                target = grid[("standard", np_std, metric, k)]
                found = None
                for np_ci in nprobe_list:
                    if grid[("ci", np_ci, metric, k)] >= target:
                        found = np_ci
                        break
                matches.append((metric, k, np_std, found))
    return SweepResult(rows, matches)


def sweep_csv(result: SweepResult) -> str:
    lines = ["method,nprobe,metric,cutoff,value"]
    for method, nprobe, metric, cutoff, value in result.rows:
        lines.append(f"{method},{nprobe},{metric},{cutoff},{value:.6g}")
    return "\n".join(lines) + "\n"

"""Word scoring, deletion-curve (AOPC) evaluation and the scaling bench.

A token's score is its occlusion minus weighted hyperbolic penalties: the
semantic distance to the predicted class prototype and the syntactic
distance to the origin. AOPC removes (or pads) the top K% ranked tokens
and averages the probability drop over examples, per K and across K.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels
from .attribution import MaskOracle, full_mask, mask_of, singleton_occlusions
from .hierarchy import build_greedy_baseline, build_pe_tree
from .attribution import ToyOracle
from .probes import SemanticProbe, SyntaxProbe, embed_tokens

ABLATION_MODES = ("full", "no_prob", "no_semantic", "no_syntax")


@dataclass(frozen=True)
class ScoreConfig:
    beta1: float = 0.0
    beta2: float = 0.0
    strategy: str = "del"
    k_percents: tuple = (10.0, 20.0)

    def __post_init__(self):
        if not 0.0 <= self.beta1 <= 1.0 or not 0.0 <= self.beta2 <= 1.0:
            raise ValueError("beta factors must be in [0, 1]")
        if self.strategy not in ("del", "pad"):
            raise ValueError(f"unknown strategy {self.strategy!r}")
        for k in self.k_percents:
            if not 0.0 < k <= 100.0:
                raise ValueError(f"K percentage {k} outside (0, 100]")


@dataclass
class AopcExample:
    example_id: str
    n: int
    drops: dict[float, float]
    seconds: float = 0.0


@dataclass
class AopcReport:
    per_k: dict[float, float]
    average: float
    per_example: list[AopcExample]
    t_mean: float

    def as_dict(self) -> dict:
        return {
            "per_k": {f"{k:g}": v for k, v in self.per_k.items()},
            "average": self.average,
            "t_mean": self.t_mean,
            "examples": len(self.per_example),
        }


def topk_count(k_percent: float, n: int) -> int:
    """Ceiling of K% of n, at least 1 whenever K > 0."""
    if k_percent <= 0.0:
        return 0
    return max(1, math.ceil(k_percent / 100.0 * n))


def ranking(scores: np.ndarray) -> np.ndarray:
    """Indices by descending score; ties broken by token index ascending."""
    n = scores.shape[0]
    return np.lexsort((np.arange(n), -scores))


def word_scores(occl: np.ndarray, sem_dists: np.ndarray,
                syn_depths: np.ndarray, cfg: ScoreConfig,
                mode: str = "full") -> np.ndarray:
    """Per-token score: occlusion - beta1 * d_semantic - beta2 * d_origin."""
    if mode not in ABLATION_MODES:
        raise ValueError(f"unknown ablation mode {mode!r}")
    occ = np.zeros_like(occl) if mode == "no_prob" else occl
    b1 = 0.0 if mode == "no_semantic" else cfg.beta1
    b2 = 0.0 if mode == "no_syntax" else cfg.beta2
    return occ - b1 * sem_dists - b2 * syn_depths


def score_example(tokens_embeddings: np.ndarray, predicted_label: int,
                  sem_probe: SemanticProbe, syn_probe: SyntaxProbe,
                  oracle: MaskOracle, cfg: ScoreConfig,
                  mode: str = "full") -> np.ndarray:
    """Full scoring path for one example from raw token embeddings."""
    if not 0 <= predicted_label < sem_probe.num_classes:
        raise ValueError(f"no prototype for label {predicted_label}")
    occl = singleton_occlusions(oracle)
    sem_points = embed_tokens(sem_probe.matrix, tokens_embeddings)
    proto = sem_probe.prototypes[predicted_label]
    sem_dists = kernels.dist_rows(np.ascontiguousarray(sem_points),
                                  np.ascontiguousarray(proto))
    syn_points = embed_tokens(syn_probe.matrix, tokens_embeddings)
    syn_depths = kernels.dist_to_origin(syn_points)
    return word_scores(occl, np.asarray(sem_dists), np.asarray(syn_depths),
                       cfg, mode)


def aopc_drops(oracle: MaskOracle, scores: np.ndarray,
               cfg: ScoreConfig) -> dict[float, float]:
    """Probability drop after removing the top-K%-ranked tokens, per K."""
    n = oracle.n
    if scores.shape != (n,):
        raise ValueError("scores length must match token count")
    order = ranking(scores)
    full = full_mask(n)
    base = oracle.query(full)
    drops = {}
    for k in cfg.k_percents:
        m = topk_count(k, n)
        if m == 0:
            drops[k] = 0.0
            continue
        removed = mask_of(order[:m].tolist(), n)
        drops[k] = base - oracle.query(full & ~removed)
    return drops


def aopc(items: Sequence[tuple[str, MaskOracle, np.ndarray]],
         cfg: ScoreConfig, seconds_per_example=None) -> AopcReport:
    """Aggregate AOPC over (example_id, oracle, scores) triples."""
    per_example = []
    for idx, (eid, oracle, scores) in enumerate(items):
        t0 = time.perf_counter()
        drops = aopc_drops(oracle, np.asarray(scores, dtype=np.float64), cfg)
        dt = time.perf_counter() - t0
        if seconds_per_example is not None:
            dt = seconds_per_example[idx]
        per_example.append(AopcExample(eid, oracle.n, drops, dt))
    per_example.sort(key=lambda e: e.example_id)
    per_k = {k: float(np.mean([e.drops[k] for e in per_example]))
             for k in cfg.k_percents}
    average = float(np.mean(list(per_k.values()))) if per_k else 0.0
    t_mean = float(np.mean([e.seconds for e in per_example])) \
        if per_example else 0.0
    return AopcReport(per_k, average, per_example, max(t_mean, 1e-12))


def evaluate(examples, sem_probe: SemanticProbe, syn_probe: SyntaxProbe,
             cfg: ScoreConfig, mode: str = "full") -> AopcReport:
    """Score and AOPC-evaluate (example_id, embeddings, label, oracle) rows."""
    items = []
    seconds = []
    for eid, emb, label, oracle in examples:
        t0 = time.perf_counter()
        scores = score_example(emb, label, sem_probe, syn_probe, oracle,
                               cfg, mode)
        seconds.append(time.perf_counter() - t0)
        items.append((eid, oracle, scores))
    return aopc(items, cfg, seconds_per_example=seconds)


def ablate(mode: str, examples, sem_probe, syn_probe,
           cfg: ScoreConfig) -> AopcReport:
    """Re-run the pipeline with one decomposition term zeroed."""
    if mode not in ABLATION_MODES:
        raise ValueError(f"unknown ablation mode {mode!r}")
    return evaluate(examples, sem_probe, syn_probe, cfg, mode)


PARAM_GRID = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5)


def grid_search_betas(ingredients, cfg_base: ScoreConfig,
                      grid=PARAM_GRID):
    """Pick (beta1, beta2) maximizing mean AOPC over the grid.

    ``ingredients`` holds (example_id, oracle, occlusions, semantic
    distances, syntax depths) per example so the sweep reuses all oracle
    and probe work.
    """
    best = None
    for b1 in grid:
        for b2 in grid:
            cfg = ScoreConfig(beta1=b1, beta2=b2,
                              strategy=cfg_base.strategy,
                              k_percents=cfg_base.k_percents)
            items = [(eid, oracle, word_scores(occ, dse, dsy, cfg))
                     for eid, oracle, occ, dse, dsy in ingredients]
            report = aopc(items, cfg)
            key = (report.average, -b1, -b2)
            if best is None or key > best[0]:
                best = (key, b1, b2, report)
    _, b1, b2, report = best
    return b1, b2, report


# --------------------------------------------------------------------------
# scaling bench
# --------------------------------------------------------------------------


@dataclass
class BenchRow:
    method: str
    n: int
    rep: int
    seconds: float
    op_count: int


@dataclass
class BenchReport:
    method: str
    rows: list[BenchRow]
    count_slope: float
    time_slope: float
    time_slope_ci: tuple[float, float]
    backend: str

    def mean_seconds(self) -> dict[int, float]:
        out: dict[int, list] = {}
        for r in self.rows:
            out.setdefault(r.n, []).append(r.seconds)
        return {n: float(np.mean(v)) for n, v in out.items()}


def toy_instance(n: int, seed: int, dim: int = 8):
    """Random toy classifier plus ball positions and depths for n tokens."""
    rng = np.random.default_rng(seed)
    weights = rng.normal(0.0, 1.0 / math.sqrt(n), n)
    pairs = []
    for _ in range(2 * n):
        i, j = rng.choice(n, size=2, replace=False)
        pairs.append((int(i), int(j), float(rng.normal(0.0, 0.5 / n))))
    oracle = ToyOracle(weights, pairs)
    raw = rng.normal(0.0, 1.0, (n, dim))
    raw *= (rng.uniform(0.05, 0.7, n) / np.linalg.norm(raw, axis=1))[:, None]
    depths = np.abs(rng.normal(1.0, 0.5, n))
    return oracle, raw, depths


def fit_loglog_slope(ns, ys) -> float:
    if len(ns) < 2:
        return float("nan")
    x = np.log(np.asarray(ns, dtype=np.float64))
    y = np.log(np.maximum(np.asarray(ys, dtype=np.float64), 1e-300))
    slope, _ = np.polyfit(x, y, 1)
    return float(slope)


def bench(method: str, ns: Sequence[int], repetitions: int = 3,
          seed: int = 0, alpha1: float = 0.3, alpha2: float = 0.3,
          dim: int = 8) -> BenchReport:
    """Build trees at increasing n; record wall-clock and operation counts.

    Operation counts are heap pushes+pops for the heap builder and weight
    evaluations for the greedy baseline; counts are deterministic given the
    seed, wall-clock is not.
    """
    if method not in ("pe", "greedy"):
        raise ValueError(f"unknown method {method!r}")
    for n in ns:
        if n < 8:
            raise ValueError("bench sizes must be >= 8")
    kernels.warmup()
    rows = []
    for n in ns:
        for rep in range(repetitions):
            oracle, pos, dep = toy_instance(n, seed * 100003 + n * 17 + rep)
            if method == "pe":
                res = build_pe_tree(pos, dep, oracle, alpha1, alpha2,
                                    engine="fast")
                count = res.stats.heap_ops
            else:
                res = build_greedy_baseline(pos, dep, oracle, alpha1, alpha2,
                                            engine="fast")
                count = res.stats.weight_evals
            rows.append(BenchRow(method, n, rep, res.stats.seconds, count))
    ns_sorted = sorted(set(r.n for r in rows))
    mean_counts = [float(np.mean([r.op_count for r in rows if r.n == n]))
                   for n in ns_sorted]
    mean_times = [float(np.mean([r.seconds for r in rows if r.n == n]))
                  for n in ns_sorted]
    count_slope = fit_loglog_slope(ns_sorted, mean_counts)
    time_slope = fit_loglog_slope(ns_sorted, mean_times)
    ci = _bootstrap_time_slope(rows, ns_sorted, seed)
    return BenchReport(method, rows, count_slope, time_slope, ci,
                       kernels.backend_name())


def _bootstrap_time_slope(rows, ns_sorted, seed, resamples: int = 200):
    rng = np.random.default_rng(seed)
    by_n = {n: [r.seconds for r in rows if r.n == n] for n in ns_sorted}
    slopes = []
    for _ in range(resamples):
        ys = [float(np.mean(rng.choice(by_n[n], size=len(by_n[n]),
                                       replace=True))) for n in ns_sorted]
        slopes.append(fit_loglog_slope(ns_sorted, ys))
    lo, hi = np.percentile(slopes, [2.5, 97.5])
    return (float(lo), float(hi))


def bench_csv(report: BenchReport) -> str:
    lines = ["method,n,rep,seconds,op_count"]
    for r in report.rows:
        lines.append(f"{r.method},{r.n},{r.rep},{r.seconds:.6f},{r.op_count}")
    return "\n".join(lines) + "\n"


__all__ = [
    "ABLATION_MODES", "PARAM_GRID", "ScoreConfig", "AopcExample",
    "AopcReport", "topk_count", "ranking", "word_scores", "score_example",
    "aopc_drops", "aopc", "evaluate", "ablate", "grid_search_betas",
    "BenchRow", "BenchReport", "toy_instance", "fit_loglog_slope", "bench",
    "bench_csv",
]

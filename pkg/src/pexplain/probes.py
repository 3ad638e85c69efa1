"""Hyperbolic probes over classifier embeddings.

Two probes are trained on top of a frozen classifier's representations:

* a label-aware semantic probe: a linear map into the ball plus one learned
  prototype per class, trained with softmax over negative hyperbolic
  distances (Riemannian Adam on the prototypes);
* a syntax probe: a linear map whose squared in-ball distances and
  distances-to-origin track dependency-tree distances and depths (plain
  Adam).

Gradients are closed-form; :func:`pexplain.optim.check_gradient` is the
safety net.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from . import kernels
from .geometry import (DEFAULT_BALL, BallConfig, PoincarePoint,
                       distance, mobius_matvec, project_to_ball)
from .optim import OptimConfig, ParamSet, adam_step, init_adam_state

# --------------------------------------------------------------------------
# domain types
# --------------------------------------------------------------------------


@dataclass
class SemanticProbe:
    """Projection matrix (d_in x d_out) plus k in-ball class prototypes."""

    matrix: np.ndarray
    prototypes: np.ndarray  # (k, d_out) rows strictly inside the ball

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=np.float64)
        self.prototypes = np.asarray(self.prototypes, dtype=np.float64)
        if self.matrix.ndim != 2:
            raise ValueError("matrix must be 2-D (d_in x d_out)")
        if self.prototypes.ndim != 2 or self.prototypes.shape[0] < 2:
            raise ValueError("need at least 2 prototypes")
        if self.prototypes.shape[1] != self.matrix.shape[1]:
            raise ValueError("prototype dim != projection dim")
        sq = np.einsum("ij,ij->i", self.prototypes, self.prototypes)
        if np.any(sq >= 1.0):
            raise ValueError("prototypes must lie inside the unit ball")

    @property
    def num_classes(self) -> int:
        return self.prototypes.shape[0]


@dataclass
class SyntaxProbe:
    """Projection matrix (d_in x d_out) for the structural probe."""

    matrix: np.ndarray

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=np.float64)
        if self.matrix.ndim != 2 or not np.all(np.isfinite(self.matrix)):
            raise ValueError("matrix must be a finite 2-D array")


@dataclass
class ParsedExample:
    """One classified input with embeddings and a dependency parse.

    ``heads`` follows the CoNLL convention: entry j is the 1-based index of
    token j's head, 0 marking the root.
    """

    tokens: list[str]
    embeddings: np.ndarray      # (n, d_in)
    seq_embedding: np.ndarray   # (d_in,)
    heads: list[int]
    label: int = 0

    def __post_init__(self):
        self.embeddings = np.asarray(self.embeddings, dtype=np.float64)
        self.seq_embedding = np.asarray(self.seq_embedding, dtype=np.float64)
        n = len(self.tokens)
        if n == 0:
            raise ValueError("tokens must be non-empty")
        if self.embeddings.shape[0] != n:
            raise ValueError(
                f"embeddings rows {self.embeddings.shape[0]} != tokens {n}")
        if self.seq_embedding.shape != (self.embeddings.shape[1],):
            raise ValueError("seq_embedding dim mismatch")
        if len(self.heads) != n:
            raise ValueError(f"heads length {len(self.heads)} != tokens {n}")
        validate_heads(self.heads)

    @property
    def n(self) -> int:
        return len(self.tokens)


# --------------------------------------------------------------------------
# dependency-tree metrics
# --------------------------------------------------------------------------


def validate_heads(heads: Sequence[int]) -> int:
    """Check the head list encodes a single-rooted acyclic tree."""
    n = len(heads)
    roots = [j for j, h in enumerate(heads) if h == 0]
    if len(roots) != 1:
        raise ValueError(f"expected exactly one root, found {len(roots)}")
    for j, h in enumerate(heads):
        if not 0 <= h <= n:
            raise ValueError(f"head index {h} out of range at token {j}")
        if h == j + 1:
            raise ValueError(f"token {j} is its own head")
    for j in range(n):
        seen = 0
        cur = j
        while heads[cur] != 0:
            cur = heads[cur] - 1
            seen += 1
            if seen > n:
                raise ValueError(f"cycle reached from token {j}")
    return n


def dpt_depth(heads: Sequence[int], j: int) -> int:
    """Edges from token j up to the root."""
    depth = 0
    cur = j
    while heads[cur] != 0:
        cur = heads[cur] - 1
        depth += 1
    return depth


def dpt_distance(heads: Sequence[int], j: int, jp: int) -> int:
    """Path length between two tokens: depth(j) + depth(j') - 2 depth(lca)."""
    if j == jp:
        return 0
    anc = {}
    cur, d = j, 0
    while True:
        anc[cur] = d
        if heads[cur] == 0:
            break
        cur = heads[cur] - 1
        d += 1
    cur, d = jp, 0
    while cur not in anc:
        cur = heads[cur] - 1
        d += 1
    return anc[cur] + d


def tree_depths(heads: Sequence[int]) -> np.ndarray:
    return np.array([dpt_depth(heads, j) for j in range(len(heads))],
                    dtype=np.float64)


def tree_distance_matrix(heads: Sequence[int]) -> np.ndarray:
    n = len(heads)
    T = np.zeros((n, n))
    for j in range(n):
        for jp in range(j + 1, n):
            T[j, jp] = T[jp, j] = dpt_distance(heads, j, jp)
    return T


# --------------------------------------------------------------------------
# ball clamping of raw embeddings
# --------------------------------------------------------------------------


def clamp_to_ball(vec: np.ndarray, cfg: BallConfig = DEFAULT_BALL) -> np.ndarray:
    """Rescale a single raw embedding into the ball when needed."""
    return project_to_ball(np.asarray(vec, dtype=np.float64), cfg)


def clamp_rows_shared(mat: np.ndarray,
                      cfg: BallConfig = DEFAULT_BALL) -> np.ndarray:
    """Max-norm rescale of a whole sequence, preserving relative norms."""
    mat = np.asarray(mat, dtype=np.float64)
    norms = np.linalg.norm(mat, axis=1)
    top = float(norms.max(initial=0.0))
    limit = 1.0 - cfg.eps_boundary
    if top > limit:
        return mat * (limit / top)
    return mat


# --------------------------------------------------------------------------
# Mobius matrix application, batch forward/backward
# --------------------------------------------------------------------------


class _MatvecCache(NamedTuple):
    S: np.ndarray
    W: np.ndarray
    r: np.ndarray
    beta: np.ndarray
    h: np.ndarray


def _matvec_forward(S: np.ndarray, A: np.ndarray,
                    cfg: BallConfig = DEFAULT_BALL):
    """Rows of S (already in-ball) through the map x -> A^T-style projection.

    A is stored (d_in, d_out) and applied as S @ A. Output rows satisfy the
    ball invariant.
    """
    W = S @ A
    r = np.linalg.norm(W, axis=1)
    rho = np.linalg.norm(S, axis=1)
    rho_c = np.minimum(rho, 1.0 - cfg.eps_boundary)
    beta = np.ones_like(rho)
    nz = rho >= 1e-8
    beta[nz] = np.arctanh(rho_c[nz]) / rho[nz]
    u = beta * r
    h = np.where(r >= 1e-8, np.tanh(u) / np.maximum(r, 1e-300), beta)
    Z = W * h[:, None]
    # guard float saturation at the boundary
    zn = np.linalg.norm(Z, axis=1)
    over = zn > 1.0 - cfg.eps_boundary
    if np.any(over):
        Z = Z.copy()
        Z[over] *= ((1.0 - cfg.eps_boundary) / zn[over])[:, None]
    return Z, _MatvecCache(S, W, r, beta, h)


def _matvec_backward(cache: _MatvecCache, dZ: np.ndarray) -> np.ndarray:
    S, W, r, beta, h = cache
    u = beta * r
    sech2 = np.zeros_like(u)
    mod = u < 20.0
    sech2[mod] = 1.0 / np.cosh(u[mod]) ** 2
    hp_over_r = np.where(
        r >= 1e-8,
        (beta * sech2 * r - np.tanh(u)) / np.maximum(r, 1e-300) ** 3,
        -2.0 * beta ** 3 / 3.0,
    )
    dots = np.einsum("ij,ij->i", W, dZ)
    dW = h[:, None] * dZ + (hp_over_r * dots)[:, None] * W
    return S.T @ dW


def embed_tokens(matrix: np.ndarray, embeddings: np.ndarray,
                 cfg: BallConfig = DEFAULT_BALL) -> np.ndarray:
    """Project a sequence of raw token embeddings into the ball."""
    embeddings = np.asarray(embeddings, dtype=np.float64)
    if embeddings.shape[1] != matrix.shape[0]:
        raise ValueError(f"embedding dim {embeddings.shape[1]} does not "
                         f"match probe input dim {matrix.shape[0]}")
    S = clamp_rows_shared(embeddings, cfg)
    Z, _ = _matvec_forward(S, matrix, cfg)
    return Z


def project_semantic(probe: SemanticProbe, vec: np.ndarray,
                     cfg: BallConfig = DEFAULT_BALL) -> PoincarePoint:
    """Project one sequence embedding into the semantic ball."""
    vec = np.asarray(vec, dtype=np.float64)
    if not np.all(np.isfinite(vec)):
        raise ValueError("embedding must be finite")
    point = PoincarePoint(clamp_to_ball(vec, cfg))
    return mobius_matvec(probe.matrix.T, point, cfg)


# --------------------------------------------------------------------------
# label-aware semantic probing
# --------------------------------------------------------------------------


def prototype_distribution(probe: SemanticProbe, point: PoincarePoint,
                           cfg: BallConfig = DEFAULT_BALL) -> np.ndarray:
    """Softmax over negative hyperbolic distances to the prototypes."""
    d = np.array([distance(point, PoincarePoint(c), cfg)
                  for c in probe.prototypes])
    logits = -d
    logits -= logits.max()
    e = np.exp(logits)
    return e / e.sum()


def _dists_to_prototypes(Z: np.ndarray, C: np.ndarray,
                         cfg: BallConfig = DEFAULT_BALL):
    """Distances (B, k) plus d/dz and d/dc gradients for each pair."""
    vz = np.maximum(1.0 - np.einsum("ij,ij->i", Z, Z), cfg.eps_div)
    vc = np.maximum(1.0 - np.einsum("ij,ij->i", C, C), cfg.eps_div)
    diff = Z[:, None, :] - C[None, :, :]                    # (B, k, d)
    diff2 = np.einsum("bkd,bkd->bk", diff, diff)
    den = np.outer(vz, vc)
    q = diff2 / den
    t = np.clip(np.sqrt(q / (1.0 + q)), 0.0, 1.0 - cfg.eps_boundary)
    D = 2.0 * np.arctanh(t)
    inv = np.zeros_like(q)
    nz = q >= 1e-18
    inv[nz] = 1.0 / np.sqrt(q[nz] * (1.0 + q[nz]))
    gZ = inv[:, :, None] * (2.0 * diff / den[:, :, None]
                            + 2.0 * (q / vz[:, None])[:, :, None] * Z[:, None, :])
    gC = inv[:, :, None] * (-2.0 * diff / den[:, :, None]
                            + 2.0 * (q / vc[None, :])[:, :, None] * C[None, :, :])
    return D, gZ, gC


def _semantic_forward(A: np.ndarray, C: np.ndarray, seqs: np.ndarray,
                      labels: np.ndarray, cfg: BallConfig = DEFAULT_BALL,
                      need_grads: bool = True):
    S = np.stack([clamp_to_ball(s, cfg) for s in seqs])
    Z, cache = _matvec_forward(S, A, cfg)
    D, gZ, gC = _dists_to_prototypes(Z, C, cfg)
    logits = -D
    logits -= logits.max(axis=1, keepdims=True)
    E = np.exp(logits)
    P = E / E.sum(axis=1, keepdims=True)
    B = len(labels)
    nll = -np.log(np.maximum(P[np.arange(B), labels], 1e-300))
    loss = float(nll.mean())
    if not need_grads:
        return loss, None, None
    dLdD = -P.copy()
    dLdD[np.arange(B), labels] += 1.0
    dLdD /= B                                  # dJ/dD[b,k] = (1{k=y} - p)/B
    dZ = np.einsum("bk,bkd->bd", dLdD, gZ)
    dC = np.einsum("bk,bkd->kd", dLdD, gC)
    dA = _matvec_backward(cache, dZ)
    return loss, dA, dC


def semantic_loss(probe: SemanticProbe, seqs: np.ndarray,
                  labels: Sequence[int],
                  cfg: BallConfig = DEFAULT_BALL) -> float:
    """Mean negative log-probability of the true class over the batch."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.min(initial=0) < 0 or labels.max(initial=0) >= probe.num_classes:
        raise ValueError("label out of range")
    loss, _, _ = _semantic_forward(probe.matrix, probe.prototypes,
                                   np.asarray(seqs, dtype=np.float64),
                                   labels, cfg, need_grads=False)
    return loss


def semantic_loss_grads(probe: SemanticProbe, seqs: np.ndarray,
                        labels: Sequence[int],
                        cfg: BallConfig = DEFAULT_BALL):
    labels = np.asarray(labels, dtype=np.int64)
    if labels.min(initial=0) < 0 or labels.max(initial=0) >= probe.num_classes:
        raise ValueError("label out of range")
    return _semantic_forward(probe.matrix, probe.prototypes,
                             np.asarray(seqs, dtype=np.float64), labels, cfg)


# --------------------------------------------------------------------------
# syntax probing
# --------------------------------------------------------------------------


class SyntaxLoss(NamedTuple):
    l_dis: float
    l_dep: float
    degenerate: bool = False


def _syntax_forward(A, embeddings, tdist, depths, dep_weight=1.0,
                    cfg: BallConfig = DEFAULT_BALL, need_grads=True,
                    dis_weight=1.0):
    n = embeddings.shape[0]
    S = clamp_rows_shared(embeddings, cfg)
    Z, cache = _matvec_forward(S, A, cfg)
    scale_dis = dis_weight / (n * n)
    scale_dep = dep_weight / n
    dis_sum, dep_sum, dZ = kernels.syntax_terms(
        Z, np.ascontiguousarray(tdist, dtype=np.float64),
        np.ascontiguousarray(depths, dtype=np.float64),
        scale_dis, scale_dep)
    l_dis = dis_sum * scale_dis
    l_dep = dep_sum / n
    if not need_grads:
        return l_dis, l_dep, None
    dA = _matvec_backward(cache, dZ)
    return l_dis, l_dep, dA


def syntax_loss(probe: SyntaxProbe, example: ParsedExample,
                cfg: BallConfig = DEFAULT_BALL) -> SyntaxLoss:
    """Structural deviations of the projected example from its parse."""
    n = example.n
    depths = tree_depths(example.heads)
    if n < 2:
        warnings.warn("syntax distance loss undefined for n < 2; returning 0")
        l_dis, l_dep, _ = _syntax_forward(
            probe.matrix, example.embeddings, np.zeros((n, n)), depths,
            cfg=cfg, need_grads=False)
        return SyntaxLoss(0.0, l_dep, degenerate=True)
    tdist = tree_distance_matrix(example.heads)
    l_dis, l_dep, _ = _syntax_forward(probe.matrix, example.embeddings,
                                      tdist, depths, cfg=cfg, need_grads=False)
    return SyntaxLoss(l_dis, l_dep)


def syntax_loss_grads(probe: SyntaxProbe, example: ParsedExample,
                      dep_weight: float = 1.0,
                      cfg: BallConfig = DEFAULT_BALL):
    tdist = tree_distance_matrix(example.heads)
    depths = tree_depths(example.heads)
    return _syntax_forward(probe.matrix, example.embeddings, tdist, depths,
                           dep_weight, cfg)


# --------------------------------------------------------------------------
# training
# --------------------------------------------------------------------------


@dataclass
class TrainConfig:
    epochs: int = 5
    lr: float = 1e-3
    batch_size: int = 32
    seed: int = 0
    d_out: int = 64
    dep_weight: float = 1.0        # mixing knob for the two syntax terms
    matrix_init: float = 0.2
    prototype_init: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def _init_matrix(rng, d_in, d_out, scale):
    return rng.normal(0.0, scale / np.sqrt(d_in), size=(d_in, d_out))


def _init_prototypes(rng, k, d_out, scale):
    v = rng.normal(0.0, scale, size=(k, d_out))
    norms = np.linalg.norm(v, axis=1, keepdims=True)
    norms = np.maximum(norms, 1e-12)
    return np.tanh(norms) * v / norms         # exp_0 of the tangent draw


def fit_semantic(seq_embeddings: np.ndarray, labels: Sequence[int],
                 num_classes: int, cfg: TrainConfig,
                 ball: BallConfig = DEFAULT_BALL):
    """Train the label-aware probe; returns (probe, per-epoch loss log)."""
    seqs = np.asarray(seq_embeddings, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if seqs.shape[0] == 0:
        raise ValueError("empty dataset")
    if num_classes < 2:
        raise ValueError("need at least 2 classes")
    rng = np.random.default_rng(cfg.seed)
    d_in = seqs.shape[1]
    params = ParamSet(
        euclidean={"matrix": _init_matrix(rng, d_in, cfg.d_out, cfg.matrix_init)},
        hyperbolic={"prototypes": _init_prototypes(rng, num_classes, cfg.d_out,
                                                   cfg.prototype_init)},
    )
    ocfg = OptimConfig(lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2,
                       eps=cfg.eps, seed=cfg.seed)
    state = init_adam_state(params)
    log = []
    N = seqs.shape[0]
    for _ in range(cfg.epochs):
        order = rng.permutation(N)
        for start in range(0, N, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            loss, dA, dC = _semantic_forward(
                params.euclidean["matrix"], params.hyperbolic["prototypes"],
                seqs[idx], labels[idx], ball)
            grads = ParamSet(euclidean={"matrix": dA},
                             hyperbolic={"prototypes": dC})
            params = adam_step(params, grads, state, ocfg, ball)
        full, _, _ = _semantic_forward(
            params.euclidean["matrix"], params.hyperbolic["prototypes"],
            seqs, labels, ball, need_grads=False)
        log.append(full)
    probe = SemanticProbe(params.euclidean["matrix"],
                          params.hyperbolic["prototypes"])
    return probe, log


def fit_syntax(examples: Sequence[ParsedExample], cfg: TrainConfig,
               ball: BallConfig = DEFAULT_BALL):
    """Train the structural probe; returns (probe, per-epoch loss log)."""
    if len(examples) == 0:
        raise ValueError("empty dataset")
    rng = np.random.default_rng(cfg.seed)
    d_in = examples[0].embeddings.shape[1]
    A = _init_matrix(rng, d_in, cfg.d_out, cfg.matrix_init)
    params = ParamSet(euclidean={"matrix": A})
    ocfg = OptimConfig(lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2,
                       eps=cfg.eps, seed=cfg.seed)
    state = init_adam_state(params)
    cached = [(ex.embeddings, tree_distance_matrix(ex.heads),
               tree_depths(ex.heads)) for ex in examples]

    def full_loss(mat):
        total = 0.0
        for emb, tdist, depths in cached:
            l_dis, l_dep, _ = _syntax_forward(mat, emb, tdist, depths,
                                              cfg.dep_weight, ball,
                                              need_grads=False)
            total += l_dis + cfg.dep_weight * l_dep
        return total / len(cached)

    log = []
    N = len(cached)
    for _ in range(cfg.epochs):
        order = rng.permutation(N)
        for start in range(0, N, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            dA = np.zeros_like(params.euclidean["matrix"])
            for i in idx:
                emb, tdist, depths = cached[i]
                _, _, g = _syntax_forward(params.euclidean["matrix"], emb,
                                          tdist, depths, cfg.dep_weight, ball)
                dA += g
            dA /= len(idx)
            grads = ParamSet(euclidean={"matrix": dA})
            params = adam_step(params, grads, state, ocfg, ball)
        log.append(full_loss(params.euclidean["matrix"]))
    return SyntaxProbe(params.euclidean["matrix"]), log


def train_semantic(data_dir, cfg: TrainConfig):
    """File-driven wrapper: dataset.jsonl + embeddings/ under data_dir."""
    from . import fileio
    records, embs = fileio.load_example_dir(data_dir)
    seqs = np.stack([embs[r.id][0] for r in records])
    labels = [r.label for r in records]
    k = max(labels) + 1
    if k < 2:
        k = 2
    return fit_semantic(seqs, labels, k, cfg)


def train_syntax(data_dir, cfg: TrainConfig):
    """File-driven wrapper: needs parses.conllu next to the embeddings."""
    from . import fileio
    records, embs = fileio.load_example_dir(data_dir)
    heads_list = fileio.load_parses(str(data_dir) + "/parses.conllu")
    if len(heads_list) != len(records):
        raise ValueError(
            f"parse count {len(heads_list)} != record count {len(records)}")
    examples = []
    for rec, heads in zip(records, heads_list):
        seq, toks = embs[rec.id]
        examples.append(ParsedExample(rec.tokens, toks, seq, heads, rec.label))
    return fit_syntax(examples, cfg)


__all__ = [
    "SemanticProbe", "SyntaxProbe", "ParsedExample", "SyntaxLoss",
    "TrainConfig", "validate_heads", "dpt_depth", "dpt_distance",
    "tree_depths", "tree_distance_matrix", "clamp_to_ball",
    "clamp_rows_shared", "embed_tokens", "project_semantic",
    "prototype_distribution", "semantic_loss", "semantic_loss_grads",
    "syntax_loss", "syntax_loss_grads", "fit_semantic", "fit_syntax",
    "train_semantic", "train_syntax",
]

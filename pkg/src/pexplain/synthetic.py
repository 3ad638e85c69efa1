"""Synthetic data generators for validation and benchmarks.

Three families: separable sequence-embedding clusters (semantic probe
recovery), tree-metric token embeddings with distractor noise (syntax
probe recovery), and a sentiment-style toy set wiring planted token
weights to a logistic toy classifier with correlated embeddings (AOPC
comparisons). All generators are seed-deterministic and keep embeddings
strictly inside the unit ball so no boundary clamping distorts training.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .attribution import ToyOracle
from .probes import ParsedExample


def random_tree(rng, n: int) -> list[int]:
    """Uniform random attachment tree in head-index form (0 = root)."""
    heads = [0] * n
    order = rng.permutation(n)
    for idx, node in enumerate(order):
        if idx == 0:
            heads[node] = 0
        else:
            parent = order[rng.integers(0, idx)]
            heads[node] = int(parent) + 1
    return heads


def semantic_clusters(n_examples: int, d_in: int, seed: int,
                      separation: float = 0.6, noise: float = 0.12):
    """Two antipodal Gaussian clusters of sequence embeddings."""
    rng = np.random.default_rng(seed)
    mu = rng.normal(0.0, 1.0, d_in)
    mu *= separation / np.linalg.norm(mu)
    labels = rng.integers(0, 2, n_examples)
    X = np.where(labels[:, None] == 1, mu, -mu) \
        + rng.normal(0.0, noise, (n_examples, d_in))
    return X, labels


def tree_corpus(n_sentences: int, seed: int, d_in: int = 32,
                signal_dim: int = 16, scale: float = 0.22,
                distractor: float = 0.5, token_noise: float = 0.03,
                n_min: int = 7, n_max: int = 13) -> list[ParsedExample]:
    """Tree metrics embedded exactly in a subspace, buried in distractors.

    Each edge contributes one orthogonal basis step, so squared Euclidean
    distance in the signal subspace equals tree distance times scale^2;
    the complementary subspace carries heavy non-metric noise that a probe
    must learn to project out.
    """
    rng = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(rng.normal(0.0, 1.0, (d_in, d_in)))
    B = Q[:, :signal_dim].T
    Bn = Q[:, signal_dim:].T
    examples = []
    for _ in range(n_sentences):
        n = int(rng.integers(n_min, n_max))
        heads = random_tree(rng, n)
        root = heads.index(0)
        children: dict[int, list[int]] = {}
        for j, h in enumerate(heads):
            if h != 0:
                children.setdefault(h - 1, []).append(j)
        edge_dims = rng.permutation(signal_dim)[: n - 1]
        phi = np.zeros((n, signal_dim))
        stack = [root]
        eidx = 0
        while stack:
            u = stack.pop()
            for v in children.get(u, []):
                phi[v] = phi[u]
                phi[v][edge_dims[eidx]] += scale
                eidx += 1
                stack.append(v)
        distract = rng.normal(0.0, distractor / np.sqrt(d_in - signal_dim),
                              (n, d_in - signal_dim))
        emb = phi @ B + distract @ Bn \
            + rng.normal(0.0, token_noise / np.sqrt(d_in), (n, d_in))
        norms = np.linalg.norm(emb, axis=1)
        over = norms > 0.95
        if np.any(over):
            emb[over] *= (0.95 / norms[over])[:, None]
        tokens = [f"t{j}" for j in range(n)]
        examples.append(ParsedExample(tokens, emb, emb.mean(axis=0), heads))
    return examples


@dataclass
class SentimentExample:
    example_id: str
    tokens: list[str]
    embeddings: np.ndarray       # (n, d_in) raw token embeddings
    seq_embedding: np.ndarray    # (d_in,)
    heads: list[int]
    label: int
    oracle: ToyOracle

    @property
    def n(self) -> int:
        return len(self.tokens)


def sentiment_toyset(n_examples: int, seed: int, d_in: int = 24,
                     n_min: int = 8, n_max: int = 13,
                     embed_signal: float = 0.35,
                     embed_noise: float = 0.25,
                     weight_scale: float = 1.6,
                     interaction_scale: float = 0.12) -> list[SentimentExample]:
    """Planted-importance toy classification set.

    Token weights drive a logistic toy oracle; weights are centered per
    example so the oracle stays out of sigmoid saturation and occlusion
    drops remain well separated. Raw embeddings carry a noisy image of
    each token's alignment with the predicted class, and parses place
    heavier tokens nearer the root, so embedding-only scores are
    informative but strictly weaker than occlusion.
    """
    rng = np.random.default_rng(seed)
    mu = rng.normal(0.0, 1.0, d_in)
    mu /= np.linalg.norm(mu)
    examples = []
    for idx in range(n_examples):
        n = int(rng.integers(n_min, n_max))
        weights = rng.normal(0.0, weight_scale, n)
        weights -= weights.mean()
        pairs = []
        for _ in range(max(1, n // 4)):
            i, j = rng.choice(n, size=2, replace=False)
            pairs.append((int(i), int(j),
                          float(rng.normal(0.0, interaction_scale))))
        oracle = ToyOracle(weights, pairs)
        prob = oracle.predicted_prob
        label = int(prob >= 0.5)
        sign = 1.0 if label == 1 else -1.0
        align = sign * weights                      # support for label
        align = align / max(float(np.abs(align).max()), 1e-9)
        emb = (embed_signal * align)[:, None] * mu \
            + rng.normal(0.0, embed_noise / np.sqrt(d_in), (n, d_in))
        norms = np.linalg.norm(emb, axis=1)
        over = norms > 0.9
        if np.any(over):
            emb[over] *= (0.9 / norms[over])[:, None]
        seq = sign * 0.5 * mu + rng.normal(0.0, 0.1 / np.sqrt(d_in), d_in)
        # heavier tokens shallower: attach in decreasing |weight| order
        order = np.argsort(-np.abs(weights), kind="stable")
        heads = [0] * n
        for pos, tok in enumerate(order):
            if pos == 0:
                heads[tok] = 0
            else:
                parent = order[rng.integers(0, pos)]
                heads[tok] = int(parent) + 1
        tokens = [f"w{j}" for j in range(n)]
        examples.append(SentimentExample(f"ex{idx:04d}", tokens, emb, seq,
                                         heads, label, oracle))
    return examples


__all__ = ["random_tree", "semantic_clusters", "tree_corpus",
           "SentimentExample", "sentiment_toyset"]

"""Equivalence relations over the design space.

Three interchangeable partition variants: k-means over hashed (or API) text
embeddings of rendered designs, a seeded random assignment into 10 classes,
and score-binned classes cut at standard-deviation thresholds around the
source mean. Fractional occupancies over classes feed the coarse-grained
entropy and the certainty-parameter estimates.
"""

from __future__ import annotations

import hashlib
import os
import re
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .core import Context, Design, DesignSpace, render_text
from .critic import SourcePool
from .numerics import KMeansModel, elbow_select_k, kmeans_assign, kmeans_fit, shannon_entropy


class TransportError(RuntimeError):
    """An external embedding endpoint failed after retries."""


# ---------------------------------------------------------------------------
# Embedding providers
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(r"[A-Za-z0-9]+")


def _tokenize(text: str) -> list[str]:
    tokens = _TOKEN_RE.findall(text.lower())
    return tokens if tokens else [text]


@dataclass(frozen=True)
class HashingEmbedder:
    """Deterministic signed feature hashing into a fixed number of buckets."""

    dim: int = 256
    seed: int = 0

    def embed(self, text: str) -> np.ndarray:
        if not text:
            raise ValueError("cannot embed empty text")
        v = np.zeros(self.dim)
        key = str(self.seed).encode()
        for tok in _tokenize(text):
            h = hashlib.blake2b(tok.encode(), digest_size=8, key=key).digest()
            idx = int.from_bytes(h[:4], "little") % self.dim
            sign = 1.0 if h[4] & 1 else -1.0
            v[idx] += sign
        norm = np.linalg.norm(v)
        return v / norm if norm > 0 else v


@dataclass
class ApiEmbedder:
    """Client for an HTTP embedding endpoint.

    POSTs {"model": ..., "input": ...} and expects
    {"data": [{"embedding": [...]}]}. Endpoint and key default to the
    EMBED_API_BASE / EMBED_API_KEY environment variables.
    """

    model: str
    endpoint: str | None = None
    api_key: str | None = None
    max_retries: int = 3
    retry_wait: float = 0.5
    timeout: float = 30.0

    def embed(self, text: str) -> np.ndarray:
        if not text:
            raise ValueError("cannot embed empty text")
        import requests

        url = self.endpoint or os.environ.get("EMBED_API_BASE")
        if not url:
            raise TransportError("no embedding endpoint configured (EMBED_API_BASE)")
        key = self.api_key or os.environ.get("EMBED_API_KEY", "")
        headers = {"Content-Type": "application/json"}
        if key:
            headers["Authorization"] = f"Bearer {key}"
        last = None
        for attempt in range(self.max_retries):
            try:
                resp = requests.post(url, json={"model": self.model, "input": text},
                                     headers=headers, timeout=self.timeout)
                resp.raise_for_status()
                vec = np.asarray(resp.json()["data"][0]["embedding"], dtype=float)
                norm = np.linalg.norm(vec)
                return vec / norm if norm > 0 else vec
            except Exception as exc:  # noqa: BLE001 - retried, then surfaced
                last = exc
                if attempt < self.max_retries - 1:
                    time.sleep(self.retry_wait * (2 ** attempt))
        raise TransportError(f"embedding request failed after {self.max_retries} attempts: {last}")


def embed(provider, text: str) -> np.ndarray:
    return provider.embed(text)


# ---------------------------------------------------------------------------
# Partitions
# ---------------------------------------------------------------------------

REFERENCE_CONTEXT_ID = "_reference"


def reference_context(ctx_dim: int) -> Context:
    """Fixed all-zeros context used when fitting a partition, so the fitted
    relation over the design space does not depend on any one subject."""
    return Context(features=(0.0,) * ctx_dim, id=REFERENCE_CONTEXT_ID)


@dataclass(frozen=True)
class PartitionConfig:
    variant: str = "kmeans"  # "kmeans" | "random" | "score"
    embed_dim: int = 256
    kmin: int = 2
    kmax: int = 20
    n_random_classes: int = 10
    provider: object | None = None  # defaults to HashingEmbedder(embed_dim)


@dataclass
class KMeansPartition:
    model: KMeansModel
    provider: object
    task_name: str
    space: DesignSpace

    @property
    def n_classes(self) -> int:
        return self.model.k

    def assign(self, ctx: Context, design: Design, raw_value: float) -> int:
        vec = embed(self.provider, render_text(self.task_name, self.space, ctx, design))
        return kmeans_assign(self.model, vec)


@dataclass
class RandomPartition:
    n_classes: int = 10
    seed: int = 0

    def assign(self, ctx: Context, design: Design, raw_value: float) -> int:
        payload = repr(design.values).encode()
        key = str(self.seed).encode()
        h = hashlib.blake2b(payload, digest_size=8, key=key).digest()
        return int.from_bytes(h, "little") % self.n_classes


@dataclass
class ScoreBinnedPartition:
    """Classes cut by raw-value thresholds at
    {-inf, mu-4s, ..., mu-s, mu, mu+s, ..., mu+4s, +inf}; bins are
    left-closed/right-open."""

    mu_src: float
    sigma_src: float
    edges: np.ndarray = field(default=None)

    def __post_init__(self):
        sigma = max(self.sigma_src, 1e-12)
        inner = self.mu_src + sigma * np.arange(-4, 5)  # mu-4s .. mu+4s
        self.edges = np.concatenate([[-np.inf], inner, [np.inf]])

    @property
    def n_classes(self) -> int:
        return len(self.edges) - 1  # 10 bins from 11 thresholds

    def assign(self, ctx: Context, design: Design, raw_value: float) -> int:
        idx = int(np.searchsorted(self.edges, raw_value, side="right")) - 1
        return min(max(idx, 0), self.n_classes - 1)


Partition = KMeansPartition | RandomPartition | ScoreBinnedPartition


def fit_partition(cfg: PartitionConfig, src: SourcePool, task, seed: int,
                  raw_value_fn=None) -> Partition:
    """Fit an equivalence relation on the source designs.

    The k-means variant renders each source design with a fixed reference
    context, embeds it, picks k by the elbow rule, and fits cosine k-means.
    The score variant needs `raw_value_fn` (design -> surrogate-plus-critic
    value) to compute source mean and spread.
    """
    if cfg.variant == "random":
        return RandomPartition(n_classes=cfg.n_random_classes, seed=seed)

    if cfg.variant == "score":
        if raw_value_fn is None:
            raise ValueError("score partition needs raw_value_fn")
        vals = np.array([raw_value_fn(d) for d in src.designs], dtype=float)
        return ScoreBinnedPartition(mu_src=float(vals.mean()), sigma_src=float(vals.std()))

    if cfg.variant != "kmeans":
        raise ValueError(f"unknown partition variant {cfg.variant!r}")

    provider = cfg.provider or HashingEmbedder(dim=cfg.embed_dim, seed=0)
    ref = reference_context(task.ctx_dim)
    texts = [render_text(task.name, src.space, ref, d) for d in src.designs]
    vectors = np.stack([embed(provider, t) for t in texts])

    kmax = cfg.kmax
    if len(src) < kmax:
        warnings.warn(
            f"source pool has {len(src)} designs < kmax={kmax}; shrinking kmax",
            stacklevel=2,
        )
        kmax = len(src)
    kmin = min(cfg.kmin, kmax)
    k = elbow_select_k(vectors, kmin=kmin, kmax=kmax, metric="cosine", seed=seed)
    model = kmeans_fit(vectors, k, metric="cosine", seed=seed)
    return KMeansPartition(model=model, provider=provider, task_name=task.name, space=src.space)


def assign(partition: Partition, ctx: Context, design: Design, raw_value: float) -> int:
    return partition.assign(ctx, design, raw_value)


def occupancies(assignments, n_classes: int) -> np.ndarray:
    """Empirical class frequencies: counts / total."""
    assignments = np.asarray(assignments, dtype=int)
    if assignments.size == 0:
        raise ValueError("no assignments")
    if assignments.min() < 0 or assignments.max() >= n_classes:
        raise ValueError("class id out of range")
    counts = np.bincount(assignments, minlength=n_classes)
    return counts / counts.sum()


def coarse_entropy(qbar) -> float:
    return shannon_entropy(qbar)


__all__ = [
    "TransportError",
    "HashingEmbedder",
    "ApiEmbedder",
    "embed",
    "reference_context",
    "REFERENCE_CONTEXT_ID",
    "PartitionConfig",
    "KMeansPartition",
    "RandomPartition",
    "ScoreBinnedPartition",
    "Partition",
    "fit_partition",
    "assign",
    "occupancies",
    "coarse_entropy",
]

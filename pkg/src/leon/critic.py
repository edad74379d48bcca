"""Adversarial source critic.

A weight-clipped scalar network trained by gradient ascent on the mean
difference between its values on source designs and on generated designs.
That mean difference is a lower-bound estimate of the 1-Wasserstein
distance between the two empirical distributions (up to the critic's
Lipschitz constant).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import Design, DesignSpace, NumericError, encode_batch, encode_design
from .numerics import DenseNet, init_net, net_forward, net_forward_batch, net_gradient, sgd_step

DEFAULT_CLIP = 0.01


@dataclass
class CriticModel:
    net: DenseNet
    clip: float = DEFAULT_CLIP


@dataclass
class SourcePool:
    """Designs drawn from the source distribution, with an encoded cache.

    Carries no context data: the critic's domain is the design space only.
    """

    space: DesignSpace
    designs: list[Design]
    encoded: np.ndarray = field(default=None)

    def __post_init__(self):
        if len(self.designs) == 0:
            raise ValueError("source pool must be non-empty")
        if self.encoded is None:
            self.encoded = encode_batch(self.space, self.designs)

    def __len__(self) -> int:
        return len(self.designs)


def init_critic(space: DesignSpace, hidden=(64, 64), seed: int = 0,
                clip: float = DEFAULT_CLIP) -> CriticModel:
    """Fresh critic with all parameters uniform in [-clip, clip]."""
    sizes = (space.encoded_width, *hidden, 1)
    return CriticModel(net=init_net(sizes, seed=seed, scale=clip), clip=clip)


def critic_value(critic: CriticModel, space: DesignSpace, design: Design) -> float:
    return net_forward(critic.net, encode_design(space, design))


def critic_values(critic: CriticModel, space: DesignSpace, designs) -> np.ndarray:
    if len(designs) == 0:
        return np.zeros(0)
    return np.atleast_1d(net_forward_batch(critic.net, encode_batch(space, designs)))


def w1_estimate(critic: CriticModel, space: DesignSpace, src_batch, gen_batch) -> float:
    """Mean critic value over the source batch minus mean over the generated
    batch. Antisymmetric under swapping the batches."""
    if len(src_batch) == 0 or len(gen_batch) == 0:
        raise ValueError("empty batch")
    return float(critic_values(critic, space, src_batch).mean()
                 - critic_values(critic, space, gen_batch).mean())


def _w1_encoded(net: DenseNet, src_enc: np.ndarray, gen_enc: np.ndarray) -> float:
    return float(net_forward_batch(net, src_enc).mean() - net_forward_batch(net, gen_enc).mean())


def critic_train(critic: CriticModel, src: SourcePool, gen_batch, lr: float,
                 tol: float = 1e-4, max_iters: int = 500, seed: int = 0,
                 src_subsample: int = 512) -> CriticModel:
    """Gradient-ascend the dual estimate, clamping all parameters to
    [-clip, clip] after every step.

    Stops when the absolute change of the estimate stays below `tol` for 5
    consecutive iterations, or after `max_iters`. The source side uses the
    full pool when it has at most `src_subsample` designs, otherwise a
    seeded uniform subsample per iteration.
    """
    if lr <= 0:
        raise ValueError("lr must be > 0")
    if len(gen_batch) == 0:
        raise ValueError("empty generated batch")
    gen_enc = encode_batch(src.space, gen_batch)
    rng = np.random.default_rng(seed)
    net = critic.net.copy()
    prev = None
    calm = 0
    for _ in range(max_iters):
        if len(src) <= src_subsample:
            src_enc = src.encoded
        else:
            idx = rng.choice(len(src), size=src_subsample, replace=False)
            src_enc = src.encoded[idx]
        grads = net_gradient(net, src_enc, gen_enc)
        net = sgd_step(net, grads, lr=lr, clip=critic.clip)
        est = _w1_encoded(net, src_enc, gen_enc)
        if not np.isfinite(est):
            raise NumericError("critic training produced a non-finite estimate")
        if prev is not None and abs(est - prev) < tol:
            calm += 1
            if calm >= 5:
                break
        else:
            calm = 0
        prev = est
    return CriticModel(net=net, clip=critic.clip)


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

_ACT_CODES = {"relu": "relu", "id": "id"}


def critic_to_json(critic: CriticModel) -> dict:
    return {
        "layers": [
            {"w": l.weights.tolist(), "b": l.biases.tolist(), "act": _ACT_CODES[l.activation]}
            for l in critic.net.layers
        ],
        "clip": critic.clip,
    }


def critic_from_json(obj: dict) -> CriticModel:
    from .numerics import Layer

    layers = [Layer(np.array(l["w"]), np.array(l["b"]), l["act"]) for l in obj["layers"]]
    return CriticModel(net=DenseNet(layers), clip=float(obj["clip"]))


__all__ = [
    "DEFAULT_CLIP",
    "CriticModel",
    "SourcePool",
    "init_critic",
    "critic_value",
    "critic_values",
    "w1_estimate",
    "critic_train",
    "critic_to_json",
    "critic_from_json",
]

"""Domain types for designs, contexts, and trajectory memory.

A design lives in a mixed continuous/boolean/categorical search space. All
numeric encoding maps into [0, 1]-scaled vectors so that downstream critic
and surrogate networks see bounded inputs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np


class SchemaError(ValueError):
    """A design, context, or encoded vector does not match its space."""


class NumericError(ArithmeticError):
    """A numeric routine encountered non-finite values."""


# ---------------------------------------------------------------------------
# Search space
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ContinuousDim:
    name: str
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise SchemaError(f"dim {self.name!r}: lo must be < hi, got [{self.lo}, {self.hi}]")

    @property
    def width(self) -> int:
        return 1


@dataclass(frozen=True)
class BooleanDim:
    name: str

    @property
    def width(self) -> int:
        return 1


@dataclass(frozen=True)
class CategoricalDim:
    name: str
    labels: tuple[str, ...]

    def __post_init__(self):
        if len(self.labels) == 0:
            raise SchemaError(f"dim {self.name!r}: empty label list")
        if len(set(self.labels)) != len(self.labels):
            raise SchemaError(f"dim {self.name!r}: duplicate labels")
        object.__setattr__(self, "labels", tuple(self.labels))

    @property
    def width(self) -> int:
        return len(self.labels)


DimSpec = ContinuousDim | BooleanDim | CategoricalDim


@dataclass(frozen=True)
class DesignSpace:
    dims: tuple[DimSpec, ...]

    def __post_init__(self):
        if len(self.dims) == 0:
            raise SchemaError("a design space needs at least one dimension")
        object.__setattr__(self, "dims", tuple(self.dims))

    @property
    def encoded_width(self) -> int:
        return sum(d.width for d in self.dims)

    def validate(self, design: "Design") -> None:
        if len(design.values) != len(self.dims):
            raise SchemaError(
                f"design arity {len(design.values)} != space arity {len(self.dims)}"
            )
        for dim, v in zip(self.dims, design.values):
            if isinstance(dim, ContinuousDim):
                if not (dim.lo <= float(v) <= dim.hi):
                    raise SchemaError(f"{dim.name}={v} outside [{dim.lo}, {dim.hi}]")
            elif isinstance(dim, BooleanDim):
                if not isinstance(v, (bool, np.bool_)):
                    raise SchemaError(f"{dim.name}={v!r} is not a bool")
            else:
                if not isinstance(v, (int, np.integer)) or isinstance(v, (bool, np.bool_)):
                    raise SchemaError(f"{dim.name}={v!r} is not a label index")
                if not (0 <= int(v) < len(dim.labels)):
                    raise SchemaError(f"{dim.name} index {v} out of range")


@dataclass(frozen=True)
class Design:
    """A concrete point: floats for continuous dims, bools for boolean dims,
    integer label indices for categorical dims."""

    values: tuple

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(self.values))

    def to_json(self) -> dict:
        return {"values": [_plain(v) for v in self.values]}

    @staticmethod
    def from_json(obj: dict, space: DesignSpace) -> "Design":
        vals = []
        for dim, v in zip(space.dims, obj["values"]):
            if isinstance(dim, ContinuousDim):
                vals.append(float(v))
            elif isinstance(dim, BooleanDim):
                vals.append(bool(v))
            else:
                vals.append(int(v))
        d = Design(tuple(vals))
        space.validate(d)
        return d


@dataclass(frozen=True)
class Context:
    """Conditioning vector for one optimization instance."""

    features: tuple[float, ...]
    id: str = ""

    def __post_init__(self):
        object.__setattr__(self, "features", tuple(float(f) for f in self.features))

    def to_json(self) -> dict:
        return {"features": list(self.features), "id": self.id}

    @staticmethod
    def from_json(obj: dict) -> "Context":
        return Context(tuple(obj["features"]), obj.get("id", ""))


def _plain(v):
    if isinstance(v, (np.floating, float)):
        return float(v)
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    return int(v)


# ---------------------------------------------------------------------------
# Hyperparameters
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Hyperparams:
    lambda0: float = 0.0
    w0: float = 1.0
    eta_lambda: float = 0.1
    eta_critic: float = 0.001
    temperature: float = 1.0
    batch_size: int = 32
    budget: int = 2048
    mu_max: float = 100.0
    rng_seed: int = 0

    def __post_init__(self):
        if self.lambda0 < 0:
            raise ValueError("lambda0 must be >= 0")
        if self.w0 < 0:
            raise ValueError("w0 must be >= 0")
        if self.eta_lambda < 0:
            raise ValueError("eta_lambda must be >= 0")
        if self.eta_critic <= 0:
            raise ValueError("eta_critic must be > 0")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.batch_size <= 1:
            raise ValueError("batch_size must be > 1")
        if self.budget < self.batch_size:
            raise ValueError("budget must be >= batch_size")
        if self.mu_max <= 0:
            raise ValueError("mu_max must be > 0")


# ---------------------------------------------------------------------------
# Trajectory memory
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MemoryEntry:
    step: int
    design: Design
    raw_value: float  # surrogate plus lambda-weighted critic value
    score: float      # mu_hat * raw_value
    class_id: int


@dataclass(frozen=True)
class StepTrace:
    step: int
    lam: float
    mu_hat: float
    w1_estimate: float
    reflection: str = ""


class TrajectoryMemory:
    """Append-only log of proposed designs and their scores.

    Single-writer: the optimizer loop appends between steps; readers may
    snapshot `entries` at any step boundary.
    """

    def __init__(self, budget: int):
        if budget < 1:
            raise ValueError("budget must be >= 1")
        self.budget = budget
        self.entries: list[MemoryEntry] = []
        self.traces: list[StepTrace] = []

    def append_batch(self, step, designs, raw_values, scores, class_ids):
        n = len(designs)
        if not (n == len(raw_values) == len(scores) == len(class_ids)):
            raise ValueError("misaligned batch arrays")
        if len(self.entries) + n > self.budget:
            raise ValueError(
                f"memory budget {self.budget} exceeded "
                f"({len(self.entries)} + {n} entries)"
            )
        if self.entries and step < self.entries[-1].step:
            raise ValueError("steps must be non-decreasing")
        for d, r, s, c in zip(designs, raw_values, scores, class_ids):
            self.entries.append(MemoryEntry(step, d, float(r), float(s), int(c)))

    def add_trace(self, trace: StepTrace) -> None:
        self.traces.append(trace)

    def __len__(self) -> int:
        return len(self.entries)

    def to_json(self) -> list[dict]:
        return [
            {
                "step": e.step,
                "design": e.design.to_json(),
                "raw_value": e.raw_value,
                "score": e.score,
                "class_id": e.class_id,
            }
            for e in self.entries
        ]


# ---------------------------------------------------------------------------
# Encoding
# ---------------------------------------------------------------------------


def encode_design(space: DesignSpace, design: Design) -> np.ndarray:
    """Encode a design as a float vector.

    Continuous dims are min-max scaled to [0, 1], booleans map to {0, 1},
    categoricals are one-hot. Total length is the sum of per-dim widths.
    """
    space.validate(design)
    out = np.empty(space.encoded_width)
    i = 0
    for dim, v in zip(space.dims, design.values):
        if isinstance(dim, ContinuousDim):
            out[i] = (float(v) - dim.lo) / (dim.hi - dim.lo)
            i += 1
        elif isinstance(dim, BooleanDim):
            out[i] = 1.0 if v else 0.0
            i += 1
        else:
            out[i : i + dim.width] = 0.0
            out[i + int(v)] = 1.0
            i += dim.width
    return out


def encode_batch(space: DesignSpace, designs) -> np.ndarray:
    if len(designs) == 0:
        return np.zeros((0, space.encoded_width))
    return np.stack([encode_design(space, d) for d in designs])


def decode_design(space: DesignSpace, v: np.ndarray) -> Design:
    """Inverse of encode_design up to clamping.

    Continuous entries clamp to [lo, hi]; categorical blocks decode by
    argmax with lowest-index tie-break; `encode(decode(v))` is idempotent
    on valid encodings.
    """
    v = np.asarray(v, dtype=float)
    if v.shape != (space.encoded_width,):
        raise SchemaError(f"expected encoded length {space.encoded_width}, got {v.shape}")
    vals = []
    i = 0
    for dim in space.dims:
        if isinstance(dim, ContinuousDim):
            x = dim.lo + float(v[i]) * (dim.hi - dim.lo)
            vals.append(min(max(x, dim.lo), dim.hi))
            i += 1
        elif isinstance(dim, BooleanDim):
            vals.append(bool(v[i] >= 0.5))
            i += 1
        else:
            block = v[i : i + dim.width]
            vals.append(int(np.argmax(block)))  # argmax takes the lowest index on ties
            i += dim.width
    return Design(tuple(vals))


# ---------------------------------------------------------------------------
# Text rendering
# ---------------------------------------------------------------------------


def format_value(dim: DimSpec, v) -> str:
    if isinstance(dim, ContinuousDim):
        return f"{float(v):.4f}"
    if isinstance(dim, BooleanDim):
        return "yes" if v else "no"
    return dim.labels[int(v)]


def render_context(ctx: Context) -> str:
    feats = ", ".join(f"x{i}={f:.4f}" for i, f in enumerate(ctx.features))
    return f"Subject {ctx.id or 'anonymous'} with covariates: {feats}."


def render_design(space: DesignSpace, design: Design) -> str:
    space.validate(design)
    return "\n".join(
        f"{dim.name}: {format_value(dim, v)}" for dim, v in zip(space.dims, design.values)
    )


def render_text(task_name: str, space: DesignSpace, ctx: Context, design: Design) -> str:
    """Human-readable description of a (context, design) pair.

    Deterministic: identical inputs yield byte-identical text. Every dim
    name/value and every context feature appears in the output.
    """
    return (
        f"{render_context(ctx)}\n\n"
        f"Proposed {task_name} design:\n{render_design(space, design)}"
    )


def design_cell(space: DesignSpace, design: Design) -> str:
    """Single-line rendering used in memory tables."""
    return ", ".join(format_value(dim, v) for dim, v in zip(space.dims, design.values))


def memory_to_json_str(memory: TrajectoryMemory) -> str:
    return json.dumps(memory.to_json(), indent=None, separators=(",", ":"))


__all__ = [
    "SchemaError",
    "NumericError",
    "ContinuousDim",
    "BooleanDim",
    "CategoricalDim",
    "DimSpec",
    "DesignSpace",
    "Design",
    "Context",
    "Hyperparams",
    "MemoryEntry",
    "StepTrace",
    "TrajectoryMemory",
    "encode_design",
    "encode_batch",
    "decode_design",
    "format_value",
    "render_context",
    "render_design",
    "render_text",
    "design_cell",
    "memory_to_json_str",
    "replace",
    "field",
]

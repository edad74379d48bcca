import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from leon.core import (
    BooleanDim,
    CategoricalDim,
    Context,
    ContinuousDim,
    Design,
    DesignSpace,
    Hyperparams,
    SchemaError,
    TrajectoryMemory,
    decode_design,
    encode_design,
    memory_to_json_str,
    render_context,
    render_text,
)


# ---------------------------------------------------------------------------
# space construction
# ---------------------------------------------------------------------------


def test_space_invariants():
    with pytest.raises(SchemaError):
        ContinuousDim("x", 1.0, 1.0)
    with pytest.raises(SchemaError):
        CategoricalDim("c", ())
    with pytest.raises(SchemaError):
        CategoricalDim("c", ("a", "a"))
    with pytest.raises(SchemaError):
        DesignSpace(())


def test_design_validation(mixed_space):
    mixed_space.validate(Design((50.0, True, 1)))
    with pytest.raises(SchemaError):
        mixed_space.validate(Design((50.0, True)))  # arity
    with pytest.raises(SchemaError):
        mixed_space.validate(Design((101.0, True, 1)))  # out of range
    with pytest.raises(SchemaError):
        mixed_space.validate(Design((50.0, True, 3)))  # label index
    with pytest.raises(SchemaError):
        mixed_space.validate(Design((50.0, 1, 1)))  # int is not a bool here


# ---------------------------------------------------------------------------
# encoding
# ---------------------------------------------------------------------------


def test_encode_continuous_midpoint():
    space = DesignSpace((ContinuousDim("x", 0.0, 100.0),))
    assert encode_design(space, Design((50.0,))).tolist() == [0.5]


def test_encode_booleans_identity():
    space = DesignSpace(tuple(BooleanDim(f"b{i}") for i in range(3)))
    assert encode_design(space, Design((True, False, True))).tolist() == [1.0, 0.0, 1.0]


def test_encode_categorical_one_hot():
    space = DesignSpace((CategoricalDim("c", ("a", "b", "c")),))
    # independent construction of the expected one-hot vector
    expected = [0.0] * 3
    expected[("a", "b", "c").index("b")] = 1.0
    assert encode_design(space, Design((1,))).tolist() == expected


def test_decode_examples():
    cont = DesignSpace((ContinuousDim("x", 0.0, 100.0),))
    assert decode_design(cont, np.array([0.5])).values == (50.0,)
    assert decode_design(cont, np.array([1.7])).values == (100.0,)  # clamps to hi

    cat = DesignSpace((CategoricalDim("c", ("a", "b", "c")),))
    v = np.array([0.2, 0.9, 0.2])
    assert decode_design(cat, v).values == (int(np.argmax(v)),)


def test_decode_wrong_length(mixed_space):
    with pytest.raises(SchemaError):
        decode_design(mixed_space, np.zeros(2))


@st.composite
def space_and_design(draw):
    dims = []
    values = []
    n = draw(st.integers(1, 5))
    for i in range(n):
        kind = draw(st.sampled_from(["cont", "bool", "cat"]))
        if kind == "cont":
            lo = draw(st.floats(-10, 10))
            hi = lo + draw(st.floats(0.5, 20))
            dims.append(ContinuousDim(f"d{i}", lo, hi))
            values.append(lo + draw(st.floats(0, 1)) * (hi - lo))
        elif kind == "bool":
            dims.append(BooleanDim(f"d{i}"))
            values.append(draw(st.booleans()))
        else:
            k = draw(st.integers(2, 4))
            dims.append(CategoricalDim(f"d{i}", tuple(f"L{j}" for j in range(k))))
            values.append(draw(st.integers(0, k - 1)))
    return DesignSpace(tuple(dims)), Design(tuple(values))


@given(space_and_design())
def test_encode_decode_round_trip(sd):
    space, design = sd
    v = encode_design(space, design)
    assert v.shape == (space.encoded_width,)
    assert np.all(np.isfinite(v))
    back = decode_design(space, v)
    for dim, a, b in zip(space.dims, design.values, back.values):
        if isinstance(dim, ContinuousDim):
            assert a == pytest.approx(b, abs=1e-9 * (dim.hi - dim.lo))
        else:
            assert a == b
    # idempotence of encode(decode(.)) on valid encodings
    assert np.allclose(encode_design(space, back), v)


# ---------------------------------------------------------------------------
# rendering
# ---------------------------------------------------------------------------


def test_render_contains_dim_values(dose_task):
    ctx = Context((0.1, -0.2, 0.3, 0.0), id="p1")
    text = render_text("dose", dose_task.space, ctx, Design((32.0,)))
    assert "Dose: 32.0" in text
    for i in range(4):
        assert f"x{i}=" in text


def test_render_deterministic(dose_task):
    ctx = Context((1.0, 2.0, 3.0, 4.0), id="p2")
    a = render_text("dose", dose_task.space, ctx, Design((32.0,)))
    b = render_text("dose", dose_task.space, ctx, Design((32.0,)))
    assert a == b


def test_render_single_dim_diff(mixed_space):
    ctx = Context((0.5, 0.5), id="p3")
    t1 = render_text("t", mixed_space, ctx, Design((10.0, True, 0)))
    t2 = render_text("t", mixed_space, ctx, Design((10.0, False, 0)))
    diff = [(a, b) for a, b in zip(t1.splitlines(), t2.splitlines()) if a != b]
    assert len(diff) == 1
    assert diff[0][0].startswith("Boost:")


def test_render_context_in_render_text(mixed_space):
    ctx = Context((0.25, 0.75), id="p4")
    assert render_context(ctx) in render_text("t", mixed_space, ctx, Design((1.0, True, 2)))


# ---------------------------------------------------------------------------
# hyperparams
# ---------------------------------------------------------------------------


def test_hyperparam_defaults():
    hp = Hyperparams()
    assert (hp.lambda0, hp.w0, hp.eta_lambda, hp.eta_critic) == (0.0, 1.0, 0.1, 0.001)
    assert (hp.temperature, hp.batch_size, hp.budget) == (1.0, 32, 2048)


@pytest.mark.parametrize("kwargs", [
    {"lambda0": -0.1},
    {"eta_critic": 0.0},
    {"batch_size": 1},
    {"budget": 16, "batch_size": 32},
    {"mu_max": 0.0},
])
def test_hyperparam_validation(kwargs):
    with pytest.raises(ValueError):
        Hyperparams(**kwargs)


# ---------------------------------------------------------------------------
# trajectory memory
# ---------------------------------------------------------------------------


def _entry_args(n, step=1):
    designs = [Design((float(i),)) for i in range(n)]
    raws = [float(i) for i in range(n)]
    scores = [2.0 * i for i in range(n)]
    return step, designs, raws, scores, [0] * n


def test_memory_budget_enforced():
    mem = TrajectoryMemory(budget=4)
    mem.append_batch(*_entry_args(4))
    with pytest.raises(ValueError):
        mem.append_batch(*_entry_args(1, step=2))


def test_memory_steps_monotone():
    mem = TrajectoryMemory(budget=8)
    mem.append_batch(*_entry_args(2, step=3))
    with pytest.raises(ValueError):
        mem.append_batch(*_entry_args(2, step=2))


def test_memory_scores_exact_product():
    mu = 0.37
    raws = np.array([1.5, -2.25, 0.0])
    mem = TrajectoryMemory(budget=3)
    mem.append_batch(1, [Design((0.0,))] * 3, raws, mu * raws, [0, 1, 2])
    for e, r in zip(mem.entries, raws):
        assert e.score == mu * r  # bitwise: same product


def test_memory_serialization():
    mem = TrajectoryMemory(budget=2)
    mem.append_batch(1, [Design((5.0,)), Design((7.0,))], [1.0, 2.0], [1.0, 2.0], [0, 1])
    payload = json.loads(memory_to_json_str(mem))
    assert payload[0]["design"] == {"values": [5.0]}
    assert set(payload[0]) == {"step", "design", "raw_value", "score", "class_id"}


def test_design_context_json_round_trip(mixed_space):
    d = Design((12.5, False, 2))
    assert Design.from_json(d.to_json(), mixed_space) == d
    ctx = Context((1.0, -2.0), id="p9")
    assert Context.from_json(ctx.to_json()) == ctx

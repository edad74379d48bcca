import itertools

import numpy as np
import pytest

from leon.core import Context, Design, encode_batch
from leon.numerics import net_forward_batch
from leon.tasks import (
    AnalyticShiftSurrogate,
    OracleSurrogate,
    exact_w1_1d,
    grid_lipschitz,
    make_dose_task,
    make_learned_surrogate,
    make_regimen_task,
    make_surrogate,
    make_task,
    mix_surrogate,
    oracle_eval,
    theorem_s1_check,
)


def _ctx(task, rng, which="target"):
    return task.sample_context(rng, which, id="t0")


# ---------------------------------------------------------------------------
# task construction
# ---------------------------------------------------------------------------


def test_make_task_by_name():
    assert make_task({"name": "dose", "seed": 3}).name == "dose"
    assert make_task({"name": "regimen"}).space.encoded_width == 16
    with pytest.raises(ValueError):
        make_task({"name": "unknown-task"})


def test_dose_optimum_scores_zero(dose_task, rng):
    for _ in range(5):
        ctx = _ctx(dose_task, rng)
        g = dose_task.optimum_location(ctx)
        if 0.0 <= g <= 100.0:
            assert oracle_eval(dose_task, Design((g,)), ctx) == pytest.approx(0.0, abs=1e-12)


def test_dose_strictly_concave(dose_task, rng):
    ctx = _ctx(dose_task, rng)
    xs = np.linspace(5, 95, 19)
    f = np.array([oracle_eval(dose_task, Design((float(x),)), ctx) for x in xs])
    second_diff = f[2:] - 2 * f[1:-1] + f[:-2]
    assert np.all(second_diff < 0)


def test_dose_quadratic_arithmetic(dose_task, rng):
    ctx = _ctx(dose_task, rng)
    g = dose_task.optimum_location(ctx)
    if not 0.0 <= g + 3.0 <= 100.0:
        pytest.skip("optimum too close to the boundary for this draw")
    assert oracle_eval(dose_task, Design((g + 3.0,)), ctx) == pytest.approx(-9.0)


def test_regimen_empty_design_scores_zero(regimen_task, rng):
    ctx = _ctx(regimen_task, rng)
    empty = Design((False,) * 16)
    assert oracle_eval(regimen_task, empty, ctx) == 0.0


def test_regimen_no_interactions_brute_force(rng):
    task = make_regimen_task(seed=5, n_bits=8, q_scale=0.0)
    ctx = _ctx(task, rng)
    w = task._W @ np.asarray(ctx.features) + task._w0
    expected = Design(tuple(bool(wi > 0) for wi in w))
    best, best_val = None, -np.inf
    for bits in itertools.product([False, True], repeat=8):
        val = oracle_eval(task, Design(bits), ctx)
        if val > best_val:
            best, best_val = Design(bits), val
    assert best == expected


def test_source_and_target_samplers_differ(dose_task):
    assert dose_task.params["m_source"] != dose_task.params["m_target"]
    diff = np.array(dose_task.params["m_target"]) - np.array(dose_task.params["m_source"])
    assert np.linalg.norm(diff) == pytest.approx(2.0)


# ---------------------------------------------------------------------------
# surrogates
# ---------------------------------------------------------------------------


def test_analytic_shift_exact_at_source_mean(dose_task):
    sur = AnalyticShiftSurrogate(dose_task, beta=0.5, radius=1.0)
    ctx = Context(tuple(dose_task.params["m_source"]), id="center")
    for x in np.linspace(0, 100, 21):
        d = Design((float(x),))
        assert sur.value(d, ctx) == oracle_eval(dose_task, d, ctx)


def test_analytic_shift_beta_zero_is_oracle(dose_task, rng):
    sur = AnalyticShiftSurrogate(dose_task, beta=0.0)
    ctx = _ctx(dose_task, rng)
    for x in (10.0, 50.0, 90.0):
        d = Design((x,))
        assert sur.value(d, ctx) == oracle_eval(dose_task, d, ctx)


def test_analytic_shift_biases_off_source(dose_task):
    sur = AnalyticShiftSurrogate(dose_task, beta=0.5, radius=1.0)
    far = Context((3.0, 3.0, 3.0, 3.0), id="far")
    bump_center = Design((dose_task.params["bump_center"],))
    assert sur.value(bump_center, far) > oracle_eval(dose_task, bump_center, far)


@pytest.fixture(scope="module")
def learned_dose():
    task = make_dose_task(0)
    return task, make_learned_surrogate(task, seed=1)


def _rmse_and_std(task, sur, which, seed=99, n=256):
    rng = np.random.default_rng(seed)
    ctxs = [task.sample_context(rng, which, id=f"e{i}") for i in range(n)]
    designs = task.source_designs(rng, n)
    err, f_vals = [], []
    for d, c in zip(designs, ctxs):
        f = oracle_eval(task, d, c)
        err.append((sur.value(d, c) - f) ** 2)
        f_vals.append(f)
    return float(np.sqrt(np.mean(err))), float(np.std(f_vals))


def test_learned_surrogate_fits_source_degrades_on_target(learned_dose):
    task, sur = learned_dose
    src_rmse, src_std = _rmse_and_std(task, sur, "source")
    tgt_rmse, _ = _rmse_and_std(task, sur, "target")
    assert src_rmse < 0.1 * src_std
    assert tgt_rmse > src_rmse


def test_learned_surrogate_shift_premise_regimen():
    task = make_regimen_task(0)
    sur = make_learned_surrogate(task, seed=1, iters=1500)
    src_rmse, _ = _rmse_and_std(task, sur, "source")
    tgt_rmse, _ = _rmse_and_std(task, sur, "target")
    assert tgt_rmse > src_rmse


def test_make_surrogate_variants(dose_task):
    assert isinstance(make_surrogate(dose_task, "analytic-shift"), AnalyticShiftSurrogate)
    assert isinstance(make_surrogate(dose_task, "oracle"), OracleSurrogate)
    with pytest.raises(ValueError):
        make_surrogate(dose_task, "tabular-gp")


# ---------------------------------------------------------------------------
# mixtures
# ---------------------------------------------------------------------------


class _Const:
    def __init__(self, v):
        self.v = v

    def value(self, design, ctx):
        return self.v


def test_mixture_endpoints_and_midpoint():
    f, f_hat = _Const(2.0), _Const(0.0)
    d, ctx = Design((1.0,)), Context((0.0,), id="c")
    assert mix_surrogate(f, f_hat, 1.0).value(d, ctx) == 2.0
    assert mix_surrogate(f, f_hat, 0.0).value(d, ctx) == 0.0
    assert mix_surrogate(f, f_hat, 0.5).value(d, ctx) == 1.0


def test_mixture_rejects_bad_weight():
    with pytest.raises(ValueError):
        mix_surrogate(_Const(1.0), _Const(0.0), 1.5)
    with pytest.raises(ValueError):
        mix_surrogate(_Const(1.0), _Const(0.0), -0.1)


def test_mixture_monotone_toward_oracle(dose_task, rng):
    oracle = OracleSurrogate(dose_task)
    biased = AnalyticShiftSurrogate(dose_task, beta=0.5)
    ctx = _ctx(dose_task, rng)
    probes = [Design((float(x),)) for x in np.linspace(0, 100, 41)]
    gaps = []
    for w in (0.0, 0.25, 0.5, 0.75, 1.0):
        mixed = mix_surrogate(oracle, biased, w)
        gaps.append(max(abs(mixed.value(d, ctx) - oracle.value(d, ctx)) for d in probes))
    assert all(a >= b - 1e-12 for a, b in zip(gaps, gaps[1:]))
    assert gaps[-1] == 0.0


# ---------------------------------------------------------------------------
# transport distance and the risk bound
# ---------------------------------------------------------------------------


def test_exact_w1_equal_sizes_matches_sorted_mean():
    rng = np.random.default_rng(1)
    a, b = rng.normal(0, 1, 16), rng.normal(2, 1, 16)
    expected = float(np.mean(np.abs(np.sort(a) - np.sort(b))))
    assert exact_w1_1d(a, b) == pytest.approx(expected, abs=1e-12)


def test_exact_w1_known_shift():
    a = np.linspace(0, 1, 11)
    assert exact_w1_1d(a, a + 2.5) == pytest.approx(2.5, abs=1e-12)


def test_exact_w1_unequal_sizes():
    # point mass at 0 vs uniform {0,1}: half the mass moves distance 1
    assert exact_w1_1d([0.0], [0.0, 1.0]) == pytest.approx(0.5)


def test_risk_bound_zero_for_perfect_surrogate():
    f = lambda x: 3.0 * x  # noqa: E731
    res = theorem_s1_check(f, f, [(x, f(x)) for x in np.linspace(0, 1, 8)],
                           np.linspace(2, 3, 8), 3.0, 3.0)
    assert res["lhs"] == 0.0
    assert res["lhs"] <= res["rhs"]


def test_risk_bound_no_shift_reduces_to_train_residual():
    f = lambda x: np.sin(x)  # noqa: E731
    f_hat = lambda x: np.sin(x) + 0.05  # noqa: E731
    xs = np.linspace(0, 2, 12)
    res = theorem_s1_check(f, f_hat, [(x, f(x)) for x in xs], xs, 1.0, 1.0)
    assert res["w1"] == pytest.approx(0.0, abs=1e-12)
    assert res["lhs"] == pytest.approx(res["eps"], abs=1e-12)


def test_risk_bound_piecewise_example():
    f = lambda x: x  # noqa: E731
    f_hat = lambda x: x + 0.1 * max(0.0, x - 1.0)  # noqa: E731
    rng = np.random.default_rng(3)
    train = rng.uniform(0, 1, 24)
    test = rng.uniform(1, 2, 24)
    res = theorem_s1_check(f, f_hat, [(x, f(x)) for x in train], test, 1.0, 1.1)
    assert res["lhs"] <= res["rhs"]
    assert res["lhs"] > 0  # the shift genuinely hurts


def test_grid_lipschitz_linear_function():
    assert grid_lipschitz(lambda x: 4.0 * x, np.array([0.0, 1.0])) == pytest.approx(4.0, rel=1e-6)

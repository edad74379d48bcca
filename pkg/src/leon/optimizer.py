"""The outer optimization loop, final-design selection, baselines, and
cohort evaluation.

Every method sees the surrogate only through a metered handle capped at the
evaluation budget; the ground-truth oracle is called exactly once per run,
by the harness, after the budget is exhausted.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .certainty import (
    CertaintyState,
    boltzmann_weights,
    class_optima,
    dual_gradient,
    estimate_mu,
    score_designs,
    update_lambda,
)
from .core import Context, Design, Hyperparams, TrajectoryMemory, StepTrace
from .critic import SourcePool, critic_train, critic_values, init_critic, w1_estimate
from .equivalence import PartitionConfig, fit_partition
from .proposal import (
    BoltzmannMemoryEngine,
    ChatApiEngine,
    HillClimbEngine,
    PromptState,
    RandomEngine,
    generate_knowledge,
    propose,
    random_design,
    reflect,
)
from .tasks import Task, make_surrogate, make_task, mix_surrogate, oracle_eval, OracleSurrogate
from .core import BooleanDim, CategoricalDim, ContinuousDim, decode_design


class BudgetExceededError(RuntimeError):
    """An optimizer asked for more surrogate evaluations than it was given."""


class MeteredSurrogate:
    """Counts every surrogate evaluation and enforces the budget."""

    def __init__(self, inner, budget: int):
        self.inner = inner
        self.budget = budget
        self.calls = 0

    @property
    def remaining(self) -> int:
        return self.budget - self.calls

    def value(self, design: Design, ctx: Context) -> float:
        if self.calls >= self.budget:
            raise BudgetExceededError(f"surrogate budget {self.budget} exhausted")
        self.calls += 1
        return self.inner.value(design, ctx)

    def values(self, designs, ctx: Context) -> np.ndarray:
        return np.array([self.value(d, ctx) for d in designs])


def derive_seed(*parts: int) -> int:
    """Stable child seed from integer parts."""
    return int(np.random.SeedSequence(list(parts)).generate_state(1, dtype=np.uint32)[0])


# ---------------------------------------------------------------------------
# Configuration and results
# ---------------------------------------------------------------------------

BASELINES = ("random-search", "simulated-annealing", "surrogate-greedy")
ENGINES = ("random", "boltzmann-memory", "hill-climb", "chat-api")


@dataclass(frozen=True)
class RunConfig:
    method: str = "leon"  # "leon" or one of BASELINES
    engine: str = "boltzmann-memory"
    engine_params: dict = field(default_factory=dict)
    partition: PartitionConfig = field(default_factory=PartitionConfig)
    surrogate_variant: str = "analytic-shift"
    beta: float = 0.5
    radius: float = 1.0
    mixture_w: float | None = None  # None = pure surrogate; w in [0,1] mixes in the oracle
    hp: Hyperparams = field(default_factory=Hyperparams)
    critic_hidden: tuple = (64, 64)
    source_pool_size: int = 128
    memory_view: int = 64
    knowledge_budget: int = 5
    select_by_raw: bool = False

    @property
    def label(self) -> str:
        return f"leon[{self.engine}]" if self.method == "leon" else self.method


@dataclass
class RunResult:
    task: str
    method: str
    seed: int
    patient_id: str
    final_design: Design
    oracle_score: float
    lambda_trace: list[float]
    mu_trace: list[float]
    w1_trace: list[float]
    warnings: list[str]
    memory: TrajectoryMemory | None = None
    oracle_calls: int = 1
    surrogate_calls: int = 0

    def to_json(self) -> dict:
        return {
            "task": self.task,
            "method": self.method,
            "seed": self.seed,
            "patient_id": self.patient_id,
            "final_design": self.final_design.to_json(),
            "oracle_score": float(self.oracle_score),
            "lambda_trace": [float(v) for v in self.lambda_trace],
            "mu_trace": [float(v) for v in self.mu_trace],
            "w1_trace": [float(v) for v in self.w1_trace],
            "warnings": list(self.warnings),
        }


def make_engine(cfg: RunConfig, seed: int):
    params = dict(cfg.engine_params)
    if cfg.engine == "random":
        return RandomEngine(seed=seed, **params)
    if cfg.engine == "boltzmann-memory":
        params.setdefault("temp", cfg.hp.temperature)
        return BoltzmannMemoryEngine(seed=seed, **params)
    if cfg.engine == "hill-climb":
        return HillClimbEngine(seed=seed, **params)
    if cfg.engine == "chat-api":
        params.setdefault("model", "default")
        params.setdefault("temperature", cfg.hp.temperature)
        return ChatApiEngine(seed=seed, **params)
    raise ValueError(f"unknown engine {cfg.engine!r}; known: {ENGINES}")


def build_surrogate(task: Task, cfg: RunConfig, seed: int):
    base = make_surrogate(task, variant=cfg.surrogate_variant, seed=seed,
                          beta=cfg.beta, radius=cfg.radius)
    if cfg.mixture_w is None:
        return base
    return mix_surrogate(OracleSurrogate(task), base, cfg.mixture_w)


# ---------------------------------------------------------------------------
# Selection
# ---------------------------------------------------------------------------


def select_final(memory: TrajectoryMemory, by_raw: bool = False) -> Design:
    """Entry with maximum stored score; ties break to higher raw value, then
    earliest step."""
    if len(memory) == 0:
        raise ValueError("empty memory")
    best = None
    best_key = None
    for e in memory.entries:
        key = (e.raw_value, e.score) if by_raw else (e.score, e.raw_value)
        if best_key is None or key > best_key:  # strict: first occurrence wins ties
            best, best_key = e, key
    return best.design


# ---------------------------------------------------------------------------
# Main loop
# ---------------------------------------------------------------------------


def run_leon(task: Task, cfg: RunConfig, seed: int, *, ctx: Context | None = None,
             sources=(), engine=None, surrogate=None, source_pool=None) -> RunResult:
    """One full optimization run for a single context.

    ceil(budget / batch) acquisition steps of: propose, evaluate the
    critic-regularized surrogate, assign classes, reduce to per-class
    optima, re-estimate mu, retrain the critic on the fresh batch, step
    lambda along the dual gradient, score and log the batch, reflect.
    Deterministic under mock engines and a fixed seed. The keyword
    overrides exist for controlled experiments and tests.
    """
    hp = cfg.hp
    space = task.space
    rng_ctx = np.random.default_rng([seed, 1])
    if ctx is None:
        ctx = task.sample_context(rng_ctx, "target", id=f"t{seed}")
    if source_pool is None:
        rng_src = np.random.default_rng([seed, 2])
        source_pool = SourcePool(space, task.source_designs(rng_src, cfg.source_pool_size))
    if engine is None:
        engine = make_engine(cfg, derive_seed(seed, 3))
    if surrogate is None:
        surrogate = build_surrogate(task, cfg, derive_seed(seed, 4))
    metered = MeteredSurrogate(surrogate, hp.budget)
    critic = init_critic(space, hidden=cfg.critic_hidden, seed=derive_seed(seed, 5))
    state = CertaintyState(lam=hp.lambda0, mu_hat=1.0, step=1)
    memory = TrajectoryMemory(budget=hp.budget)
    warnings: list[str] = []

    def raw_value_fn(design):  # for the score-binned partition variant
        return metered.inner.value(design, ctx) + hp.lambda0 * critic_values(
            critic, space, [design])[0]

    partition = fit_partition(cfg.partition, source_pool, task,
                              seed=derive_seed(seed, 6), raw_value_fn=raw_value_fn)

    prompt_state = PromptState(
        knowledge="", reflection="", memory_view=[], context=ctx,
        task_description=task.description, task_name=task.name, space=space,
    )
    knowledge = generate_knowledge(engine, list(sources), prompt_state, cfg.knowledge_budget)
    prompt_state.knowledge = knowledge

    n_steps = int(np.ceil(hp.budget / hp.batch_size))
    lambda_trace, mu_trace, w1_trace = [], [], []
    reflection = ""

    for t in range(1, n_steps + 1):
        b = min(hp.batch_size, metered.remaining)
        prompt_state.reflection = reflection
        prompt_state.memory_view = memory.entries[-cfg.memory_view:]
        designs = propose(engine, prompt_state, space, b)

        f_vals = metered.values(designs, ctx)
        c_vals = critic_values(critic, space, designs)
        raw = f_vals + state.lam * c_vals
        assignments = [partition.assign(ctx, d, r) for d, r in zip(designs, raw)]

        stats = class_optima(list(zip(designs, f_vals, c_vals)), assignments,
                             state.lam, partition.n_classes)
        mu_hat = estimate_mu(stats, state.mu_hat, hp.mu_max)
        state = replace(state, mu_hat=mu_hat)

        critic = critic_train(critic, source_pool, designs, lr=hp.eta_critic,
                              seed=derive_seed(seed, 7, t))

        src_mean_c = float(critic_values(critic, space, source_pool.designs).mean())
        stats_now = replace(stats, best_critic=critic_values(critic, space,
                                                             list(stats.best_designs)))
        qbar = boltzmann_weights(stats_now, mu_hat)
        grad = dual_gradient(hp.w0, src_mean_c, stats_now, qbar)
        w1_now = w1_estimate(critic, space, source_pool.designs, designs)

        lambda_trace.append(state.lam)  # the value that scored this batch
        mu_trace.append(mu_hat)
        w1_trace.append(w1_now)

        scores = score_designs(raw, mu_hat)
        memory.append_batch(t, designs, raw, scores, assignments)

        if t < n_steps:
            reflection = reflect(engine, list(zip(designs, scores)), task.description)
        memory.add_trace(StepTrace(step=t, lam=state.lam, mu_hat=mu_hat,
                                   w1_estimate=w1_now, reflection=reflection if t < n_steps else ""))

        state = update_lambda(state, grad, hp.eta_lambda)
        state = replace(state, step=t + 1)
        warnings.extend(engine.warnings)
        engine.warnings.clear()

    final = select_final(memory, by_raw=cfg.select_by_raw)
    score = oracle_eval(task, final, ctx)
    return RunResult(
        task=task.name, method=cfg.label, seed=seed, patient_id=ctx.id,
        final_design=final, oracle_score=score, lambda_trace=lambda_trace,
        mu_trace=mu_trace, w1_trace=w1_trace, warnings=warnings, memory=memory,
        oracle_calls=1, surrogate_calls=metered.calls,
    )


# ---------------------------------------------------------------------------
# Baselines
# ---------------------------------------------------------------------------


def _log_entry(memory, step, design, value):
    memory.append_batch(step, [design], [value], [value], [0])


def _best_entry(memory):
    best = None
    for e in memory.entries:
        if best is None or e.raw_value > best.raw_value:
            best = e
    return best.design


def _random_search(task, metered, ctx, rng, memory):
    step = 0
    while metered.remaining > 0:
        d = random_design(task.space, rng)
        _log_entry(memory, step, d, metered.value(d, ctx))
        step += 1


def _simulated_annealing(task, metered, ctx, rng, memory):
    """Single chain with a geometric temperature schedule calibrated so the
    final temperature is 1% of the initial one."""
    space = task.space
    probes = [random_design(space, rng) for _ in range(min(64, metered.remaining))]
    vals = [metered.value(d, ctx) for d in probes]
    for i, (d, v) in enumerate(zip(probes, vals)):
        _log_entry(memory, i, d, v)
    t0 = float(np.std(vals)) or 1.0
    n = metered.remaining
    if n == 0:
        return
    alpha = 0.01 ** (1.0 / n)
    best_i = int(np.argmax(vals))
    current, cur_val = probes[best_i], vals[best_i]
    temp = t0
    for k in range(n):
        cand = _single_dim_move(space, current, rng)
        cand_val = metered.value(cand, ctx)
        _log_entry(memory, 64 + k, cand, cand_val)
        delta = cand_val - cur_val
        temp *= alpha
        if delta >= 0 or rng.random() < np.exp(delta / max(temp, 1e-300)):
            current, cur_val = cand, cand_val


def _single_dim_move(space, design, rng):
    i = int(rng.integers(len(space.dims)))
    dim = space.dims[i]
    vals = list(design.values)
    if isinstance(dim, ContinuousDim):
        width = dim.hi - dim.lo
        vals[i] = min(max(float(vals[i]) + rng.normal(0.0, 0.1 * width), dim.lo), dim.hi)
    elif isinstance(dim, BooleanDim):
        vals[i] = not vals[i]
    else:
        vals[i] = int(rng.integers(len(dim.labels)))
    return Design(tuple(vals))


def _surrogate_greedy(task, metered, ctx, rng, memory, lr=0.05, fd_step=1e-3, restarts=4):
    space = task.space
    continuous = all(isinstance(d, ContinuousDim) for d in space.dims)
    step = 0
    share = metered.budget // restarts
    for _ in range(restarts):
        allotment = min(share, metered.remaining)
        if allotment <= 0:
            break
        if continuous:
            step = _greedy_continuous(space, metered, ctx, rng, memory, allotment,
                                      lr, fd_step, step)
        else:
            step = _greedy_flip(space, metered, ctx, rng, memory, allotment, step)


def _greedy_continuous(space, metered, ctx, rng, memory, allotment, lr, fd_step, step):
    """Normalized-gradient ascent in encoded units with a 1/sqrt(k) decayed
    step, via central finite differences on the surrogate."""
    d = len(space.dims)
    u = np.array([rng.uniform(0.0, 1.0) for _ in range(d)])
    used = 0
    k = 1
    while used + 2 * d <= allotment and metered.remaining >= 2 * d:
        grad = np.zeros(d)
        for j in range(d):
            up, dn = u.copy(), u.copy()
            up[j] = min(u[j] + fd_step, 1.0)
            dn[j] = max(u[j] - fd_step, 0.0)
            v_up = metered.value(decode_design(space, up), ctx)
            v_dn = metered.value(decode_design(space, dn), ctx)
            _log_entry(memory, step, decode_design(space, up), v_up)
            _log_entry(memory, step, decode_design(space, dn), v_dn)
            step += 1
            denom = up[j] - dn[j]
            grad[j] = (v_up - v_dn) / denom if denom > 0 else 0.0
        used += 2 * d
        norm = np.linalg.norm(grad)
        if norm > 0:
            u = np.clip(u + (lr / np.sqrt(k)) * grad / norm, 0.0, 1.0)
        k += 1
    return step


def _greedy_flip(space, metered, ctx, rng, memory, allotment, step):
    """Best-improvement single-flip hill climbing with random restarts."""
    used = 0
    current = random_design(space, rng)
    cur_val = metered.value(current, ctx)
    _log_entry(memory, step, current, cur_val)
    used += 1
    while used < allotment and metered.remaining > 0:
        best_cand, best_val = None, cur_val
        for i in range(len(space.dims)):
            if used >= allotment or metered.remaining == 0:
                break
            cand = _flip_dim(space, current, i, rng)
            val = metered.value(cand, ctx)
            _log_entry(memory, step, cand, val)
            used += 1
            if val > best_val:
                best_cand, best_val = cand, val
        step += 1
        if best_cand is None:  # local optimum: restart
            if used >= allotment or metered.remaining == 0:
                break
            current = random_design(space, rng)
            cur_val = metered.value(current, ctx)
            _log_entry(memory, step, current, cur_val)
            used += 1
        else:
            current, cur_val = best_cand, best_val
    return step


def _flip_dim(space, design, i, rng):
    dim = space.dims[i]
    vals = list(design.values)
    if isinstance(dim, BooleanDim):
        vals[i] = not vals[i]
    elif isinstance(dim, CategoricalDim):
        vals[i] = int((int(vals[i]) + 1 + rng.integers(len(dim.labels) - 1)) % len(dim.labels))
    else:
        raise ValueError("flip move on a continuous dim")
    return Design(tuple(vals))


def run_baseline(task: Task, variant: str, cfg: RunConfig, seed: int, *,
                 ctx: Context | None = None, surrogate=None) -> RunResult:
    """Random search, simulated annealing, or greedy surrogate ascent, all
    metered to the same budget and selecting the argmax-surrogate design."""
    if variant not in BASELINES:
        raise ValueError(f"unknown baseline {variant!r}; known: {BASELINES}")
    hp = cfg.hp
    rng = np.random.default_rng([seed, 40])
    if ctx is None:
        ctx = task.sample_context(np.random.default_rng([seed, 1]), "target", id=f"t{seed}")
    if surrogate is None:
        surrogate = build_surrogate(task, cfg, derive_seed(seed, 4))
    metered = MeteredSurrogate(surrogate, hp.budget)
    memory = TrajectoryMemory(budget=hp.budget)

    if variant == "random-search":
        _random_search(task, metered, ctx, rng, memory)
    elif variant == "simulated-annealing":
        _simulated_annealing(task, metered, ctx, rng, memory)
    else:
        _surrogate_greedy(task, metered, ctx, rng, memory)

    final = _best_entry(memory)
    score = oracle_eval(task, final, ctx)
    return RunResult(
        task=task.name, method=variant, seed=seed, patient_id=ctx.id,
        final_design=final, oracle_score=score, lambda_trace=[], mu_trace=[],
        w1_trace=[], warnings=[], memory=memory, oracle_calls=1,
        surrogate_calls=metered.calls,
    )


def run_method(task: Task, cfg: RunConfig, seed: int, *, ctx=None, sources=()) -> RunResult:
    if cfg.method == "leon":
        return run_leon(task, cfg, seed, ctx=ctx, sources=sources)
    return run_baseline(task, cfg.method, cfg, seed, ctx=ctx)


# ---------------------------------------------------------------------------
# Cohort evaluation
# ---------------------------------------------------------------------------


@dataclass
class MethodSummary:
    method: str
    mean: float
    sem: float
    rank: int
    n: int
    degenerate: bool = False


@dataclass
class CohortResult:
    task: str
    summaries: list[MethodSummary]
    records: list[RunResult]
    oracle_calls_per_method: dict[str, int]


def _run_one(args):
    task_name, task_seed, cfg, run_seed, ctx_json = args
    task = make_task({"name": task_name, "seed": task_seed})
    ctx = Context.from_json(ctx_json)
    return run_method(task, cfg, run_seed, ctx=ctx)


def evaluate_cohort(task: Task, cfgs, n_patients: int, seed: int, jobs: int = 1) -> CohortResult:
    """Run every configured method on the same sample of target contexts.

    Each patient run owns an RNG stream derived from (seed, patient index),
    shared across methods so comparisons are paired. SEM is reported as 0
    with a degenerate flag when n_patients == 1.
    """
    if n_patients < 1:
        raise ValueError("n_patients must be >= 1")
    rng = np.random.default_rng([seed, 0])
    contexts = [task.sample_context(rng, "target", id=f"p{i:03d}") for i in range(n_patients)]
    work = [
        (task.name, task.params.get("seed", 0), cfg, derive_seed(seed, i), ctx.to_json())
        for cfg in cfgs
        for i, ctx in enumerate(contexts)
    ]
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(_run_one, work))
    else:
        records = [_run_one(w) for w in work]

    summaries = []
    means = []
    for mi, cfg in enumerate(cfgs):
        scores = np.array([r.oracle_score for r in records[mi * n_patients:(mi + 1) * n_patients]])
        mean = float(scores.mean())
        sem = float(scores.std(ddof=1) / np.sqrt(len(scores))) if len(scores) > 1 else 0.0
        summaries.append(MethodSummary(method=cfg.label, mean=mean, sem=sem, rank=0,
                                       n=n_patients, degenerate=n_patients == 1))
        means.append(mean)
    for s, m in zip(summaries, means):
        s.rank = 1 + sum(1 for other in means if other > m)

    oracle_calls = {}
    for mi, cfg in enumerate(cfgs):
        oracle_calls[f"{mi}:{cfg.label}"] = sum(
            r.oracle_calls for r in records[mi * n_patients:(mi + 1) * n_patients])
    return CohortResult(task=task.name, summaries=summaries, records=records,
                        oracle_calls_per_method=oracle_calls)


__all__ = [
    "BudgetExceededError",
    "MeteredSurrogate",
    "derive_seed",
    "BASELINES",
    "ENGINES",
    "RunConfig",
    "RunResult",
    "make_engine",
    "build_surrogate",
    "select_final",
    "run_leon",
    "run_baseline",
    "run_method",
    "MethodSummary",
    "CohortResult",
    "evaluate_cohort",
]

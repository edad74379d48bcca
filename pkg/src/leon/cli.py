"""Command-line harness.

`leon run` executes a cohort experiment from a strict JSON config, `leon
ablate-shift` sweeps surrogate mixture weights, `leon verify` runs the
brute-force verification checks, and `leon dump-task` prints task
constants. Exit codes: 0 success, 1 runtime failure, 2 configuration
error. With mock engines and a fixed seed, outputs are byte-identical
across reruns.
"""

from __future__ import annotations

import csv
import io
import json
import sys
from dataclasses import dataclass, replace
from pathlib import Path

import click

from .core import Hyperparams
from .equivalence import PartitionConfig
from .optimizer import BASELINES, RunConfig, evaluate_cohort
from .tasks import TASKS, make_task
from .verify import run_all_checks


class ConfigError(ValueError):
    pass


_TOP_KEYS = {"task", "task_seed", "methods", "n_patients", "seed", "hyperparams",
             "surrogate", "output_dir", "weights", "jobs"}
_METHOD_KEYS = {"name", "engine", "engine_params", "partition", "select_by_raw",
                "critic_hidden", "source_pool_size", "memory_view", "knowledge_budget"}
_HP_KEYS = {"lambda0", "w0", "eta_lambda", "eta_critic", "temperature",
            "batch_size", "budget", "mu_max", "rng_seed"}
_SURROGATE_KEYS = {"variant", "beta", "radius", "mixture_w"}


@dataclass
class ExperimentConfig:
    task: str
    methods: list[RunConfig]
    n_patients: int
    seed: int
    task_seed: int
    output_dir: Path
    weights: list[float] | None
    jobs: int


def _reject_unknown(obj: dict, allowed: set, where: str):
    unknown = set(obj) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")


def parse_config(obj: dict) -> ExperimentConfig:
    if not isinstance(obj, dict):
        raise ConfigError("config must be a JSON object")
    _reject_unknown(obj, _TOP_KEYS, "config")
    task = obj.get("task")
    if task not in TASKS:
        raise ConfigError(f"task must be one of {sorted(TASKS)}, got {task!r}")
    methods_spec = obj.get("methods")
    if not isinstance(methods_spec, list) or not methods_spec:
        raise ConfigError("methods must be a non-empty list")
    n_patients = obj.get("n_patients", 1)
    if not isinstance(n_patients, int) or n_patients < 1:
        raise ConfigError("n_patients must be a positive integer")
    seed = obj.get("seed", 0)
    if not isinstance(seed, int):
        raise ConfigError("seed must be an integer")

    hp_spec = obj.get("hyperparams", {})
    _reject_unknown(hp_spec, _HP_KEYS, "hyperparams")
    try:
        hp = Hyperparams(**hp_spec)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad hyperparams: {exc}") from exc

    sur_spec = obj.get("surrogate", {})
    _reject_unknown(sur_spec, _SURROGATE_KEYS, "surrogate")

    methods = []
    for i, m in enumerate(methods_spec):
        _reject_unknown(m, _METHOD_KEYS, f"methods[{i}]")
        name = m.get("name")
        if name != "leon" and name not in BASELINES:
            raise ConfigError(f"methods[{i}].name must be 'leon' or one of {BASELINES}")
        partition = m.get("partition", "kmeans")
        if partition not in ("kmeans", "random", "score"):
            raise ConfigError(f"methods[{i}].partition must be kmeans|random|score")
        methods.append(RunConfig(
            method=name,
            engine=m.get("engine", "boltzmann-memory"),
            engine_params=m.get("engine_params", {}),
            partition=PartitionConfig(variant=partition),
            surrogate_variant=sur_spec.get("variant", "analytic-shift"),
            beta=float(sur_spec.get("beta", 0.5)),
            radius=float(sur_spec.get("radius", 1.0)),
            mixture_w=sur_spec.get("mixture_w"),
            hp=hp,
            critic_hidden=tuple(m.get("critic_hidden", (64, 64))),
            source_pool_size=int(m.get("source_pool_size", 128)),
            memory_view=int(m.get("memory_view", 64)),
            knowledge_budget=int(m.get("knowledge_budget", 5)),
            select_by_raw=bool(m.get("select_by_raw", False)),
        ))

    weights = obj.get("weights")
    if weights is not None:
        weights = [float(w) for w in weights]
        if any(not 0.0 <= w <= 1.0 for w in weights):
            raise ConfigError("weights must lie in [0, 1]")
    return ExperimentConfig(
        task=task, methods=methods, n_patients=n_patients, seed=seed,
        task_seed=int(obj.get("task_seed", seed)),
        output_dir=Path(obj.get("output_dir", ".")),
        weights=weights, jobs=int(obj.get("jobs", 1)),
    )


def load_config(path: str) -> ExperimentConfig:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(obj)


# ---------------------------------------------------------------------------
# Output emission
# ---------------------------------------------------------------------------


def _results_payload(cfg: ExperimentConfig, cohorts: list) -> dict:
    """cohorts: list of (mixture weight or None, CohortResult)."""
    groups = []
    for w, cohort in cohorts:
        groups.append({
            "mixture_w": w,
            "summary": [
                {"method": s.method, "mean": s.mean, "sem": s.sem, "rank": s.rank,
                 "n": s.n, "degenerate": s.degenerate}
                for s in cohort.summaries
            ],
            "records": [r.to_json() for r in cohort.records],
        })
    return {"task": cfg.task, "seed": cfg.seed, "n_patients": cfg.n_patients,
            "groups": groups}


def _tidy_csv(cfg: ExperimentConfig, cohorts: list) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["task", "method", "w", "patient", "seed", "oracle_score",
                     "step", "lambda", "mu", "w1"])
    for w, cohort in cohorts:
        w_cell = "" if w is None else repr(float(w))
        for r in cohort.records:
            if r.lambda_trace:
                for step, (lam, mu, w1) in enumerate(
                        zip(r.lambda_trace, r.mu_trace, r.w1_trace), start=1):
                    writer.writerow([r.task, r.method, w_cell, r.patient_id, r.seed,
                                     repr(float(r.oracle_score)), step,
                                     repr(float(lam)), repr(float(mu)), repr(float(w1))])
            else:
                writer.writerow([r.task, r.method, w_cell, r.patient_id, r.seed,
                                 repr(float(r.oracle_score)), "", "", "", ""])
    return buf.getvalue()


def _write_outputs(cfg: ExperimentConfig, cohorts: list) -> None:
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    payload = _results_payload(cfg, cohorts)
    (cfg.output_dir / "results.json").write_text(
        json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    (cfg.output_dir / "summary.csv").write_text(_tidy_csv(cfg, cohorts), encoding="utf-8")


def _print_ranking(cohorts: list) -> None:
    for w, cohort in cohorts:
        header = f"task={cohort.task}" + ("" if w is None else f" w={w}")
        click.echo(header)
        click.echo(f"{'method':<28} {'mean':>12} {'sem':>10} {'rank':>5}")
        for s in cohort.summaries:
            click.echo(f"{s.method:<28} {s.mean:>12.4f} {s.sem:>10.4f} {s.rank:>5}")


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


@click.group()
def main():
    """Entropy-guided constrained black-box optimization harness."""


@main.command("run")
@click.option("-c", "--config", "config_path", required=True, type=click.Path())
@click.option("--jobs", type=int, default=None, help="parallel patient runs")
def cmd_run(config_path, jobs):
    """Run every configured method over a cohort of target contexts."""
    try:
        cfg = load_config(config_path)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(2)
    try:
        task = make_task({"name": cfg.task, "seed": cfg.task_seed})
        cohort = evaluate_cohort(task, cfg.methods, cfg.n_patients, cfg.seed,
                                 jobs=jobs or cfg.jobs)
        cohorts = [(None, cohort)]
        _write_outputs(cfg, cohorts)
        _print_ranking(cohorts)
    except Exception as exc:  # noqa: BLE001
        click.echo(f"run failed: {exc}", err=True)
        sys.exit(1)
    sys.exit(0)


@main.command("ablate-shift")
@click.option("-c", "--config", "config_path", required=True, type=click.Path())
@click.option("--weights", "weights_arg", default=None,
              help="comma-separated mixture weights in [0,1]")
def cmd_ablate_shift(config_path, weights_arg):
    """Repeat the cohort per surrogate mixture weight."""
    try:
        cfg = load_config(config_path)
        if weights_arg is not None:
            weights = [float(w) for w in weights_arg.split(",") if w.strip() != ""]
        else:
            weights = cfg.weights
        if not weights:
            raise ConfigError("no mixture weights given (config 'weights' or --weights)")
        if any(not 0.0 <= w <= 1.0 for w in weights):
            raise ConfigError("weights must lie in [0, 1]")
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(2)
    try:
        task = make_task({"name": cfg.task, "seed": cfg.task_seed})
        cohorts = []
        for w in weights:
            methods = [replace(m, mixture_w=w) for m in cfg.methods]
            cohorts.append((w, evaluate_cohort(task, methods, cfg.n_patients,
                                               cfg.seed, jobs=cfg.jobs)))
        _write_outputs(cfg, cohorts)
        _print_ranking(cohorts)
    except Exception as exc:  # noqa: BLE001
        click.echo(f"run failed: {exc}", err=True)
        sys.exit(1)
    sys.exit(0)


@main.command("verify")
@click.option("--seed", type=int, default=0)
def cmd_verify(seed):
    """Brute-force verification checks with fixed seeds."""
    results = run_all_checks(seed)
    failed = [r for r in results if not r.passed]
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        click.echo(f"[{status}] {r.name} ({r.seconds:.1f}s): {r.detail}")
    if failed:
        click.echo(f"{len(failed)} check(s) failed: {', '.join(r.name for r in failed)}")
        sys.exit(1)
    click.echo(f"all {len(results)} checks passed")
    sys.exit(0)


@main.command("dump-task")
@click.option("--task", "task_name", required=True, type=click.Choice(sorted(TASKS)))
@click.option("--seed", type=int, default=0)
def cmd_dump_task(task_name, seed):
    """Print task constants as JSON for audit."""
    task = make_task({"name": task_name, "seed": seed})
    click.echo(json.dumps(task.to_json(), sort_keys=True, indent=2))
    sys.exit(0)


if __name__ == "__main__":
    main()

"""Sweep harness: method x budget grids, Acc@B, and report emission.

A sweep fixes a task file and, per seed, builds one synthetic world, runs
self-play reflection on the validation slice (first tasks) to obtain the
module registry, cost profile, and transition prior, then scores every
(method, budget) cell on the remaining tasks. All artifacts are
deterministic functions of (tasks, config, seed).
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from decimal import Decimal, ROUND_HALF_EVEN
from pathlib import Path
from typing import Mapping, Sequence

from .agents import SyntheticWorld, WorldParams
from .collab import ModuleRegistry, builtin_catalog
from .core import CostProfile, DEFAULT_PRICES, FINISH, PriceSheet, as_dollars
from .orchestrator import (
    Method,
    RunConfig,
    RunResult,
    default_roster,
    run_task,
    trajectory_rows,
    write_trajectory_log,
)
from .planner import TransitionPrior
from .reflection import TrajectoryStore, cover_profile, run_selfplay
from .tasks import Task, split_validation


class EmptyResults(ValueError):
    """Accuracy over zero runs is undefined."""


def acc_at_b(results: Sequence[RunResult], budget, strict: bool = True) -> float:
    """Percentage of runs solved within budget, to 2 decimals.

    Strict mode counts a solved-but-overshooting run as unsolved.
    """
    if not results:
        raise EmptyResults("no run results")
    bound = as_dollars(budget)
    hits = 0
    for result in results:
        if not result.solved:
            continue
        if strict and result.total_cost > bound:
            continue
        hits += 1
    pct = Decimal(100 * hits) / Decimal(len(results))
    return float(pct.quantize(Decimal("0.01"), rounding=ROUND_HALF_EVEN))


def mean_cost(results: Sequence[RunResult]) -> Decimal:
    if not results:
        raise EmptyResults("no run results")
    return as_dollars(sum((r.total_cost for r in results), Decimal(0)) / len(results))


def utilization(results: Sequence[RunResult], budget) -> float:
    """Mean spend as a fraction of the budget, to 4 decimals."""
    frac = mean_cost(results) / as_dollars(budget)
    return float(frac.quantize(Decimal("0.0001"), rounding=ROUND_HALF_EVEN))


@dataclass(frozen=True)
class CellResult:
    method: Method
    budget: Decimal
    seed: int
    results: tuple[RunResult, ...]
    log_path: str

    @property
    def acc(self) -> float:
        return acc_at_b(self.results, self.budget, strict=True)

    @property
    def acc_lenient(self) -> float:
        return acc_at_b(self.results, self.budget, strict=False)

    @property
    def mean_cost(self) -> Decimal:
        return mean_cost(self.results)

    @property
    def utilization(self) -> float:
        return utilization(self.results, self.budget)

    @property
    def overshoot_count(self) -> int:
        return sum(1 for r in self.results if r.overshoot)


@dataclass
class SweepResult:
    methods: tuple[Method, ...]
    budgets: tuple[Decimal, ...]
    seeds: tuple[int, ...]
    cells: dict[tuple[str, str, int], CellResult] = field(default_factory=dict)
    scored_task_ids: tuple[str, ...] = ()
    validation_task_ids: tuple[str, ...] = ()

    def cell(self, method: Method, budget, seed: int) -> CellResult:
        return self.cells[(method.value, str(as_dollars(budget)), int(seed))]


@dataclass(frozen=True)
class SweepConfig:
    """Everything a sweep needs beyond the method/budget/seed grid."""

    world_params: WorldParams | None = None
    catalog: str = "gaia"
    validation_size: int = 30
    selfplay_rounds: int = 5
    selfplay_budget: Decimal = Decimal("1.00")
    t_max: int = 12
    k: int = 3
    n_rollouts: int = 5
    depth_limit: int = 6
    n_attempts: int = 3
    meter_orchestrator_tokens: bool = True
    policy_boost: float = 1.5
    g_weight: float = 1.0
    h_weight: float = 1.0
    prices: PriceSheet = DEFAULT_PRICES
    models: Mapping[str, str] | None = None
    max_workers: int = 4
    min_support: float = 0.5
    max_len: int = 4


@dataclass(frozen=True)
class SeedArtifacts:
    """Per-seed products of self-play reflection, shared by every cell."""

    world: SyntheticWorld
    registry: ModuleRegistry
    profile: CostProfile | None
    prior: TransitionPrior | None
    store: TrajectoryStore | None


def prepare_seed(
    tasks: Sequence[Task],
    seed: int,
    config: SweepConfig,
    need_selfplay: bool,
    profile: CostProfile | None = None,
    registry: ModuleRegistry | None = None,
) -> tuple[SeedArtifacts, list[Task]]:
    """Build the world and (if needed) run self-play on the validation slice."""
    validation, scored = split_validation(tasks, config.validation_size)
    world = SyntheticWorld(tasks, seed=seed, params=config.world_params)
    roster = default_roster(config.models)
    if registry is None:
        registry = ModuleRegistry(roster=list(roster))
        for module in builtin_catalog(config.catalog):
            registry.register(module)
    store = None
    prior = None
    if need_selfplay and profile is None:
        store, profile, _new = run_selfplay(
            validation,
            registry,
            rounds=config.selfplay_rounds,
            budget_per_task=config.selfplay_budget,
            seed=seed,
            backend=world,
            roster=roster,
            t_max=config.t_max,
            min_support=config.min_support,
            max_len=config.max_len,
            prices=config.prices,
            meter_orchestrator_tokens=config.meter_orchestrator_tokens,
        )
        profile = cover_profile(profile, registry)
        space = [a.id for a in roster.values()] + [m.id for m in registry.modules()] + [FINISH]
        prior = TransitionPrior.from_sequences(store.action_sequences(), space)
    return SeedArtifacts(world, registry, profile, prior, store), scored


def _run_config(config: SweepConfig, method: Method, budget: Decimal) -> RunConfig:
    return RunConfig(
        method=method,
        budget=budget,
        t_max=config.t_max,
        k=config.k,
        n_rollouts=config.n_rollouts,
        depth_limit=config.depth_limit,
        n_attempts=config.n_attempts,
        meter_orchestrator_tokens=config.meter_orchestrator_tokens,
        policy_boost=config.policy_boost,
        g_weight=config.g_weight,
        h_weight=config.h_weight,
        prices=config.prices,
    )


def _failed_result(task: Task, exc: Exception) -> RunResult:
    return RunResult(
        task_id=task.id,
        final_answer=None,
        solved=False,
        total_cost=as_dollars(0),
        overshoot=False,
        steps=0,
        trajectory=(),
        error=f"{type(exc).__name__}: {exc}",
    )


def run_cell(
    scored: Sequence[Task],
    method: Method,
    budget: Decimal,
    seed: int,
    config: SweepConfig,
    artifacts: SeedArtifacts,
    out_dir: str | Path,
) -> CellResult:
    run_config = _run_config(config, method, budget)
    roster = default_roster(config.models)

    def one(task: Task) -> RunResult:
        try:
            return run_task(
                task,
                run_config,
                registry=artifacts.registry,
                cost_profile=artifacts.profile,
                backend=artifacts.world,
                seed=seed,
                roster=roster,
                prior=artifacts.prior,
            )
        except Exception as exc:
            return _failed_result(task, exc)

    with ThreadPoolExecutor(max_workers=config.max_workers) as pool:
        results = tuple(pool.map(one, scored))

    out_dir = Path(out_dir)
    log_name = f"trajectories/{method.value}_b{as_dollars(budget)}_s{seed}.ndjson"
    rows = []
    for result in results:
        rows.extend(trajectory_rows(result, method, budget))
    write_trajectory_log(rows, out_dir / log_name)
    return CellResult(
        method=method,
        budget=as_dollars(budget),
        seed=seed,
        results=results,
        log_path=log_name,
    )


def run_sweep(
    tasks: Sequence[Task],
    methods: Sequence[Method],
    budgets: Sequence,
    seeds: Sequence[int],
    config: SweepConfig | None = None,
    out_dir: str | Path = "sweep_out",
    profile: CostProfile | None = None,
    registry: ModuleRegistry | None = None,
) -> SweepResult:
    """Execute the full grid; self-play runs once per seed when needed."""
    if not tasks or not methods or not budgets or not seeds:
        raise ValueError("tasks, methods, budgets, and seeds must all be non-empty")
    config = config or SweepConfig()
    methods = tuple(Method(m) for m in methods)
    budgets = tuple(sorted(as_dollars(b) for b in budgets))
    seeds = tuple(int(s) for s in seeds)
    need_selfplay = any(
        m in {Method.WEAVER, Method.MODULES_PROMPT, Method.MODULES_UNAWARE} for m in methods
    )
    sweep = SweepResult(methods=methods, budgets=budgets, seeds=seeds)
    for seed in seeds:
        artifacts, scored = prepare_seed(tasks, seed, config, need_selfplay, profile, registry)
        if not sweep.scored_task_ids:
            sweep.scored_task_ids = tuple(t.id for t in scored)
            sweep.validation_task_ids = tuple(
                t.id for t in tasks[: config.validation_size]
            )
        for method in methods:
            for budget in budgets:
                cell = run_cell(scored, method, budget, seed, config, artifacts, out_dir)
                sweep.cells[(method.value, str(budget), seed)] = cell
    emit_reports(sweep, out_dir)
    return sweep


# -- reports -------------------------------------------------------------------


def build_summary(sweep: SweepResult) -> dict:
    """Machine-readable sweep summary; the sole input to table emission."""
    if not sweep.cells:
        raise EmptyResults("sweep produced no cells")
    summary = {
        "methods": [m.value for m in sweep.methods],
        "budgets": [str(b) for b in sweep.budgets],
        "seeds": list(sweep.seeds),
        "scored_tasks": list(sweep.scored_task_ids),
        "validation_tasks": list(sweep.validation_task_ids),
        "cells": [],
    }
    for method in sweep.methods:
        for budget in sweep.budgets:
            for seed in sweep.seeds:
                cell = sweep.cell(method, budget, seed)
                summary["cells"].append(
                    {
                        "method": method.value,
                        "budget": str(budget),
                        "seed": seed,
                        "acc": cell.acc,
                        "acc_lenient": cell.acc_lenient,
                        "mean_cost": str(cell.mean_cost),
                        "utilization": cell.utilization,
                        "overshoot_count": cell.overshoot_count,
                        "n_tasks": len(cell.results),
                        "log": cell.log_path,
                    }
                )
    return summary


def write_reports(summary: Mapping, out_dir: str | Path) -> list[Path]:
    """Emit the two tables plus the summary itself; deterministic bytes."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cells = {(c["method"], c["budget"], c["seed"]): c for c in summary["cells"]}
    seeds = summary["seeds"]

    def seed_cells(method: str, budget: str) -> list[Mapping]:
        return [cells[(method, budget, s)] for s in seeds]

    lines = ["| method | " + " | ".join(f"Acc@{b}" for b in summary["budgets"]) + " |"]
    lines.append("|" + "---|" * (len(summary["budgets"]) + 1))
    for method in summary["methods"]:
        accs = []
        for budget in summary["budgets"]:
            group = seed_cells(method, budget)
            accs.append(f"{sum(c['acc'] for c in group) / len(group):.2f}")
        lines.append(f"| {method} | " + " | ".join(accs) + " |")
    accuracy_path = out_dir / "accuracy.md"
    accuracy_path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    util_lines = ["method,budget,mean_cost,utilization"]
    for method in summary["methods"]:
        for budget in summary["budgets"]:
            group = seed_cells(method, budget)
            cost = sum((Decimal(c["mean_cost"]) for c in group), Decimal(0)) / len(group)
            util = sum(c["utilization"] for c in group) / len(group)
            util_lines.append(f"{method},{budget},{as_dollars(cost)},{util:.4f}")
    utilization_path = out_dir / "utilization.csv"
    utilization_path.write_text("\n".join(util_lines) + "\n", encoding="utf-8")

    summary_path = out_dir / "summary.json"
    summary_path.write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    return [accuracy_path, utilization_path, summary_path]


def emit_reports(sweep: SweepResult, out_dir: str | Path) -> list[Path]:
    """Accuracy table, utilization table, and a machine-readable summary."""
    return write_reports(build_summary(sweep), out_dir)

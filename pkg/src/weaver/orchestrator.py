"""Top-level policy loop and baseline methods.

One run = one task, one ledger, one backend session. The loop runs while
steps, budget, and an unfinished task all remain; a step begins only with
positive remaining budget, executes one action to completion (which may
overshoot, flagged in the result), and logs exactly one record. On loop
exit without a finish action the policy is asked once for a best-effort
answer, logged as a final zero- or policy-cost finish step.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from decimal import Decimal
from enum import Enum
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .agents import BackendUnavailable, UnknownDocument, WorkerAgent, Role, _key64, parse_final, DONE_MARK
from .collab import ModuleExecutor, ModuleFailed, ModuleRegistry, Single
from .core import (
    Action,
    ActionId,
    ActionKind,
    CostLedger,
    CostProfile,
    CostRecord,
    DEFAULT_PRICES,
    FINISH,
    HistoryEntry,
    PriceSheet,
    as_dollars,
    check_history,
    price_cost,
    sum_records,
)
from .planner import (
    FeasibleSet,
    MissingCostProfile,
    TransitionPrior,
    plan_step,
    render_carried,
)
from .policy import RulePolicy
from .tasks import Task, grade, normalize_answer


class Method(str, Enum):
    REACT = "react"
    BEST_OF_N = "best_of_n"
    ITER_VERIFY = "iter_verify"
    MODULES_UNAWARE = "modules_unaware"
    MODULES_PROMPT = "modules_prompt"
    WEAVER = "weaver"


MODULE_METHODS = {Method.MODULES_UNAWARE, Method.MODULES_PROMPT, Method.WEAVER}
BUDGET_AWARE_METHODS = {Method.MODULES_PROMPT, Method.WEAVER}


def default_roster(models: Mapping[str, str] | None = None) -> dict[str, WorkerAgent]:
    """Standard four-worker roster; ``models`` overrides per agent name."""
    chosen = {
        "search": "claude-3-5-haiku-latest",
        "browse": "claude-3-5-haiku-latest",
        "reason": "claude-3-7-sonnet-latest",
        "critic": "claude-3-7-sonnet-latest",
    }
    if models:
        chosen.update(models)
    roles = {
        "search": Role.SEARCHER,
        "browse": Role.READER,
        "reason": Role.REASONER,
        "critic": Role.CRITIC,
    }
    return {
        name: WorkerAgent(ActionId.agent(name), roles[name], model)
        for name, model in chosen.items()
        if name in roles
    }


@dataclass(frozen=True)
class RunConfig:
    method: Method
    budget: Decimal
    t_max: int = 12
    k: int = 3
    n_rollouts: int = 5
    depth_limit: int = 6
    uniform_h: bool = False
    n_attempts: int = 3
    meter_orchestrator_tokens: bool = True
    policy_boost: float = 1.5
    g_weight: float = 1.0
    h_weight: float = 1.0
    prices: PriceSheet = DEFAULT_PRICES

    def __post_init__(self):
        if Decimal(self.budget) <= 0:
            raise ValueError("budget must be positive")
        if self.t_max < 1:
            raise ValueError("t_max must be at least 1")
        if self.k < 1 or self.n_rollouts < 1 or self.depth_limit < 1:
            raise ValueError("planner parameters must be at least 1")
        if self.n_attempts < 1:
            raise ValueError("n_attempts must be at least 1")
        object.__setattr__(self, "budget", Decimal(self.budget))


@dataclass(frozen=True)
class RunResult:
    task_id: str
    final_answer: str | None
    solved: bool
    total_cost: Decimal
    overshoot: bool
    steps: int
    trajectory: tuple[HistoryEntry, ...]
    error: str | None = None
    plans: tuple[str, ...] = ()


def render_budget_prompt(remaining, cost_profile: CostProfile | None = None) -> str:
    """Deterministic budget context injected into budget-aware policies."""
    lines = [f"Remaining budget: ${as_dollars(remaining)}"]
    if cost_profile is not None and cost_profile.ids():
        lines.append("Mean action costs:")
        for aid in sorted(cost_profile.ids(), key=str):
            lines.append(f"  {aid}: ${float(cost_profile.mean(aid)):.6f}")
    return "\n".join(lines)


class _Run:
    """Mutable state for one task run; shared by every method body."""

    def __init__(self, task: Task, config: RunConfig, registry, cost_profile, backend, seed, roster, prior):
        self.task = task
        self.config = config
        self.registry = registry if registry is not None else ModuleRegistry()
        self.profile = cost_profile
        self.backend = backend
        self.seed = int(seed)
        self.roster = roster or default_roster()
        self.session = backend.session(task.id)
        self.ledger = CostLedger(config.budget)
        self.executor = ModuleExecutor(self.session, self.roster, self.ledger, config.prices)
        self.history: list[HistoryEntry] = []
        self.plans: list[str] = []
        self.error: str | None = None
        params = getattr(backend, "params", None)
        self.orch_model = getattr(params, "orchestrator_model", "claude-3-7-sonnet-latest")
        space = [agent.id for agent in self.roster.values()]
        if config.method in MODULE_METHODS:
            space.extend(m.id for m in self.registry.modules())
        space.append(FINISH)
        self.space = space
        self.prior = prior or TransitionPrior(space)

    def policy_for(self, purpose: str) -> RulePolicy:
        profile = self.profile if self.config.method in BUDGET_AWARE_METHODS else None
        return RulePolicy(
            self.seed,
            self.task.id,
            self.space,
            profile=profile,
            boost=self.config.policy_boost,
            purpose=purpose,
        )

    def meter_policy(self, n: int) -> list[CostRecord]:
        """One metered record per candidate drawn from the policy."""
        records = []
        for _ in range(n):
            usage = self.session.policy_usage()
            if self.config.meter_orchestrator_tokens:
                record = price_cost(usage, self.orch_model, self.config.prices)
                self.ledger.charge(record)
                records.append(record)
        return records

    def execute(self, action: Action, context: Sequence[HistoryEntry] | None = None) -> tuple[str, tuple[CostRecord, ...]]:
        """Run a non-finish action; soft failures become error outputs."""
        visible = self.history if context is None else context
        try:
            if action.id.kind is ActionKind.MODULE:
                result = self.executor.run(self.registry.get(action.id.name), action.subtask, visible)
            else:
                result = self.executor.run(Single(action.id.name), action.subtask, visible)
            return result.output, result.records
        except (ModuleFailed, UnknownDocument) as exc:
            return f"[error] {type(exc).__name__}: {exc}", ()

    def log_step(self, action: Action, output: str, records: Sequence[CostRecord]) -> None:
        self.history.append(
            HistoryEntry(
                step=len(self.history),
                action=action,
                output=output,
                cost=sum_records(records),
            )
        )

    def force_finish(self, answer: str) -> None:
        """Best-effort final answer on loop exit without a finish action.

        Charged like a policy call only while budget remains; once the run
        has already overshot, the record is free so that total overshoot
        stays bounded by the cost of the last executed action.
        """
        records: list[CostRecord] = []
        if self.config.meter_orchestrator_tokens and self.ledger.remaining() > 0:
            records = self.meter_policy(1)
        self.log_step(Action(FINISH, answer), answer, records)

    def result(self, final_answer: str | None) -> RunResult:
        check_history(self.history)
        solved = final_answer is not None and self.error is None and grade(final_answer, self.task.answer)
        return RunResult(
            task_id=self.task.id,
            final_answer=final_answer if self.error is None else None,
            solved=solved,
            total_cost=self.ledger.total(),
            overshoot=self.ledger.total() > self.config.budget,
            steps=len(self.history),
            trajectory=tuple(self.history),
            error=self.error,
            plans=tuple(self.plans),
        )


def _react_loop(run: _Run, policy: RulePolicy, budget_aware: bool, t_max: int) -> str | None:
    """Shared single-pass loop; returns the finish payload if one was emitted."""
    cfg = run.config
    method = cfg.method
    carried = FeasibleSet.empty()
    steps_taken = 0
    while steps_taken < t_max and run.ledger.remaining() > 0:
        remaining = run.ledger.remaining()
        note = render_budget_prompt(remaining, run.profile) if budget_aware else None
        if method is Method.WEAVER:
            outcome = plan_step(
                policy,
                run.history,
                run.prior,
                run.profile,
                remaining,
                carried=carried,
                step=len(run.history),
                seed=[run.seed, _key64(run.task.id), _key64("speculate"), len(run.history)],
                k=cfg.k,
                n_rollouts=cfg.n_rollouts,
                depth_limit=cfg.depth_limit,
                uniform_h=cfg.uniform_h,
                g_weight=Fraction(str(cfg.g_weight)),
                h_weight=Fraction(str(cfg.h_weight)),
                context_note=note,
            )
            action = outcome.action
            carried = outcome.feasible
            run.plans.append(render_carried(outcome.feasible))
            drawn = cfg.k
        else:
            sample_remaining = remaining if budget_aware else None
            action = policy.sample(1, run.history, remaining=sample_remaining, context_note=note)[0]
            drawn = 1
        policy_records = run.meter_policy(drawn)
        if action.id == FINISH:
            run.log_step(action, action.subtask, policy_records)
            return action.subtask
        try:
            output, exec_records = run.execute(action)
        except BackendUnavailable as exc:
            run.error = str(exc)
            run.log_step(action, f"[error] BackendUnavailable: {exc}", policy_records)
            return None
        run.log_step(action, output, list(policy_records) + list(exec_records))
        steps_taken += 1
    return None


def _run_single_pass(run: _Run) -> RunResult:
    cfg = run.config
    policy = run.policy_for("policy")
    budget_aware = cfg.method in BUDGET_AWARE_METHODS
    answer = _react_loop(run, policy, budget_aware, cfg.t_max)
    if run.error is not None:
        return run.result(None)
    if answer is None:
        answer = policy.best_effort_answer(run.history)
        run.force_finish(answer)
    return run.result(answer)


def _modal_answer(answers: Sequence[str]) -> str:
    """Majority vote over normalized answers; ties go to the earliest."""
    counts: dict[str, int] = {}
    first_raw: dict[str, str] = {}
    order: dict[str, int] = {}
    for i, raw in enumerate(answers):
        key = normalize_answer(raw)
        counts[key] = counts.get(key, 0) + 1
        first_raw.setdefault(key, raw)
        order.setdefault(key, i)
    best = sorted(counts, key=lambda key: (-counts[key], order[key]))[0]
    return first_raw[best]


def _attempt_react(run: _Run, policy: RulePolicy, t_max: int, base: int) -> str | None:
    """One best-of-N attempt: a plain pass that only sees its own steps."""
    steps_taken = 0
    while steps_taken < t_max and run.ledger.remaining() > 0:
        local = run.history[base:]
        action = policy.sample(1, local)[0]
        policy_records = run.meter_policy(1)
        if action.id == FINISH:
            run.log_step(action, action.subtask, policy_records)
            return action.subtask
        try:
            output, exec_records = run.execute(action, context=local)
        except BackendUnavailable as exc:
            run.error = str(exc)
            run.log_step(action, f"[error] BackendUnavailable: {exc}", policy_records)
            return None
        run.log_step(action, output, list(policy_records) + list(exec_records))
        steps_taken += 1
    return None


def _run_best_of_n(run: _Run) -> RunResult:
    """Up to N independent attempts over one shared ledger, then a vote."""
    cfg = run.config
    answers: list[str] = []
    for attempt in range(cfg.n_attempts):
        if run.ledger.remaining() <= 0 or run.error is not None:
            break
        policy = run.policy_for(f"attempt{attempt}")
        answer = _attempt_react(run, policy, cfg.t_max, base=len(run.history))
        if answer is not None:
            answers.append(answer)
    if run.error is not None:
        return run.result(None)
    if not answers:
        fallback = run.policy_for("fallback").best_effort_answer(run.history)
        run.force_finish(fallback)
        return run.result(fallback)
    return run.result(_modal_answer(answers))


def _run_iter_verify(run: _Run) -> RunResult:
    """One plain pass, then critique-and-revise rounds while budget allows."""
    cfg = run.config
    policy = run.policy_for("policy")
    answer = _react_loop(run, policy, False, cfg.t_max)
    if run.error is not None:
        return run.result(None)
    finished = answer is not None
    if answer is None:
        answer = policy.best_effort_answer(run.history)
    critic = Action(ActionId.agent("critic"), f"verify the evidence gathered for case {run.task.id}")
    revise = Action(ActionId.agent("reason"), f"re-derive the conclusion for case {run.task.id}")
    rounds = 0
    while rounds < cfg.t_max and run.ledger.remaining() >= _step_estimate(run):
        for action in (critic, revise):
            if run.ledger.remaining() <= 0:
                break
            try:
                output, records = run.execute(action)
            except BackendUnavailable as exc:
                run.error = str(exc)
                return run.result(None)
            run.log_step(action, output, records)
            if action.id.name == "reason" and output.startswith(DONE_MARK):
                revised = parse_final(output)
                if revised:
                    answer = revised
        rounds += 1
    if not finished:
        run.force_finish(answer)
    return run.result(answer)


def _step_estimate(run: _Run) -> Decimal:
    """Mean cost of executed steps so far; a coarse one-more-step estimate."""
    positive = [e.cost.dollars for e in run.history if e.cost.dollars > 0]
    if not positive:
        return as_dollars("0.001")
    return as_dollars(sum(positive) / len(positive))


def run_task(
    task: Task,
    config: RunConfig,
    registry: ModuleRegistry | None = None,
    cost_profile: CostProfile | None = None,
    backend=None,
    seed: int = 0,
    roster: Mapping[str, WorkerAgent] | None = None,
    prior: TransitionPrior | None = None,
) -> RunResult:
    """Run one task under one method and budget, returning the full record."""
    if backend is None:
        raise ValueError("a backend (synthetic world or wire adapter) is required")
    run = _Run(task, config, registry, cost_profile, backend, seed, roster, prior)
    if config.method is Method.WEAVER:
        if cost_profile is None or not cost_profile.covers(run.space):
            missing = [str(a) for a in run.space if cost_profile is None or not cost_profile.covers([a])]
            raise MissingCostProfile(", ".join(missing))
    if config.method is Method.BEST_OF_N:
        return _run_best_of_n(run)
    if config.method is Method.ITER_VERIFY:
        return _run_iter_verify(run)
    return _run_single_pass(run)


def run_best_of_n(task: Task, n: int, budget, backend=None, seed: int = 0, **kwargs) -> RunResult:
    """Best-of-N over a shared per-task ledger; N = 1 is a plain pass."""
    config = RunConfig(method=Method.BEST_OF_N, budget=Decimal(str(budget)), n_attempts=n)
    return run_task(task, config, backend=backend, seed=seed, **kwargs)


def run_iterative_verification(task: Task, budget, backend=None, seed: int = 0, **kwargs) -> RunResult:
    """Plain pass, then verification rounds until the budget is consumed."""
    config = RunConfig(method=Method.ITER_VERIFY, budget=Decimal(str(budget)))
    return run_task(task, config, backend=backend, seed=seed, **kwargs)


# -- trajectory log -----------------------------------------------------------

STEP_FIELDS = (
    "task_id",
    "method",
    "budget",
    "step",
    "action_kind",
    "action_name",
    "subtask",
    "output_digest",
    "input_tokens",
    "output_tokens",
    "dollars",
    "remaining_after",
)

TRAILER_FIELDS = ("task_id", "final_answer", "solved", "total_cost", "overshoot")


def _digest(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def trajectory_rows(result: RunResult, method: Method, budget: Decimal) -> list[dict]:
    """Stable-order row dicts for the line-delimited trajectory log."""
    rows = []
    remaining = as_dollars(budget)
    for entry in result.trajectory:
        remaining -= entry.cost.dollars
        rows.append(
            {
                "task_id": result.task_id,
                "method": method.value,
                "budget": str(as_dollars(budget)),
                "step": entry.step,
                "action_kind": entry.action.id.kind.value,
                "action_name": entry.action.id.name,
                "subtask": entry.action.subtask,
                "output_digest": _digest(entry.output),
                "input_tokens": entry.cost.usage.input_tokens,
                "output_tokens": entry.cost.usage.output_tokens,
                "dollars": str(entry.cost.dollars),
                "remaining_after": str(remaining),
            }
        )
    rows.append(
        {
            "task_id": result.task_id,
            "final_answer": result.final_answer,
            "solved": result.solved,
            "total_cost": str(result.total_cost),
            "overshoot": result.overshoot,
        }
    )
    return rows


def write_trajectory_log(rows: Iterable[dict], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=True) + "\n")

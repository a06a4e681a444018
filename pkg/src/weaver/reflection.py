"""Self-play reflection: cost estimation and module mining.

Rounds of budget-unaware execution on a validation slice build a trajectory
store. From it we (a) estimate per-action mean dollar costs as exact
rationals and (b) mine recurring contiguous agent patterns out of the
successful trajectories, abstracting them into new collaboration modules,
at most one per round. A profile estimated here is attached to later runs
as metadata; nothing asserts it transfers to unseen tasks.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
import statistics
import threading
from dataclasses import dataclass
from decimal import Decimal
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .agents import BackendUnavailable
from .collab import (
    CollaborationModule,
    Ensemble,
    Interactive,
    ModuleExecutor,
    ModuleRegistry,
    Pipeline,
    Single,
    Strategy,
)
from .core import (
    ActionId,
    ActionKind,
    CostLedger,
    CostProfile,
    CostRecord,
    DEFAULT_PRICES,
    ProfileEntry,
    TokenUsage,
    as_dollars,
)
from .tasks import Task

log = logging.getLogger(__name__)

DEFAULT_MIN_SUPPORT = 0.5
DEFAULT_MAX_LEN = 4
DEFAULT_AGGREGATOR = "reason"
DEFAULT_ROUNDS = 5


class EmptyStore(ValueError):
    """Cost estimation requires at least one stored trajectory."""


class ParseFailure(ValueError):
    """A proposed workflow could not be parsed into the strategy algebra."""


def _digest(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class StoredStep:
    action: ActionId
    subtask_digest: str
    cost: CostRecord


@dataclass(frozen=True)
class StoredTrajectory:
    task_id: str
    round: int
    success: bool
    steps: tuple[StoredStep, ...]


class TrajectoryStore:
    """Append-only log of executed trajectories, persistable as NDJSON."""

    def __init__(self):
        self._trajectories: list[StoredTrajectory] = []
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return len(self._trajectories)

    def append(self, trajectory: StoredTrajectory) -> None:
        with self._lock:
            self._trajectories.append(trajectory)

    def append_result(self, result, round: int = 0) -> StoredTrajectory:
        """Store a finished run (an orchestrator RunResult)."""
        steps = tuple(
            StoredStep(
                action=entry.action.id,
                subtask_digest=_digest(entry.action.subtask),
                cost=entry.cost,
            )
            for entry in result.trajectory
        )
        trajectory = StoredTrajectory(result.task_id, round, bool(result.solved), steps)
        self.append(trajectory)
        return trajectory

    def trajectories(self) -> tuple[StoredTrajectory, ...]:
        with self._lock:
            return tuple(self._trajectories)

    def action_sequences(self, successful_only: bool = False) -> list[tuple[ActionId, ...]]:
        return [
            tuple(step.action for step in traj.steps)
            for traj in self.trajectories()
            if traj.success or not successful_only
        ]

    def save(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as fh:
            for traj in self.trajectories():
                for i, step in enumerate(traj.steps):
                    fh.write(
                        json.dumps(
                            {
                                "task_id": traj.task_id,
                                "round": traj.round,
                                "step": i,
                                "action": str(step.action),
                                "subtask_digest": step.subtask_digest,
                                "input_tokens": step.cost.usage.input_tokens,
                                "output_tokens": step.cost.usage.output_tokens,
                                "dollars": str(step.cost.dollars),
                            }
                        )
                        + "\n"
                    )
                fh.write(
                    json.dumps(
                        {"task_id": traj.task_id, "round": traj.round, "success": traj.success}
                    )
                    + "\n"
                )

    @staticmethod
    def load(path: str | Path) -> "TrajectoryStore":
        store = TrajectoryStore()
        steps: list[StoredStep] = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                row = json.loads(line)
                if "success" in row:
                    store.append(
                        StoredTrajectory(
                            task_id=str(row["task_id"]),
                            round=int(row["round"]),
                            success=bool(row["success"]),
                            steps=tuple(steps),
                        )
                    )
                    steps = []
                    continue
                usage = TokenUsage(int(row["input_tokens"]), int(row["output_tokens"]))
                steps.append(
                    StoredStep(
                        action=ActionId.parse(row["action"]),
                        subtask_digest=str(row["subtask_digest"]),
                        cost=CostRecord(usage=usage, model="aggregate", dollars=as_dollars(row["dollars"])),
                    )
                )
        if steps:
            raise ValueError("trajectory file ends mid-trajectory (missing trailer)")
        return store

    def digest(self) -> str:
        """Stable content digest, for replay checks."""
        h = hashlib.sha256()
        for traj in self.trajectories():
            h.update(traj.task_id.encode())
            h.update(str(traj.round).encode())
            h.update(b"1" if traj.success else b"0")
            for step in traj.steps:
                h.update(str(step.action).encode())
                h.update(step.subtask_digest.encode())
                h.update(str(step.cost.dollars).encode())
        return h.hexdigest()


def estimate_costs(store: TrajectoryStore) -> CostProfile:
    """Exact per-action arithmetic mean of every logged dollar cost."""
    trajectories = store.trajectories()
    if not trajectories:
        raise EmptyStore("no trajectories logged")
    dollars: dict[ActionId, list[Decimal]] = {}
    for traj in trajectories:
        for step in traj.steps:
            dollars.setdefault(step.action, []).append(step.cost.dollars)
    entries = {}
    for aid, values in dollars.items():
        mean = Fraction(sum(Fraction(v) for v in values), len(values))
        stddev = float(statistics.stdev(values)) if len(values) > 1 else 0.0
        entries[aid] = ProfileEntry(
            mean_dollars=mean, sample_count=len(values), sample_stddev=stddev
        )
    return CostProfile(entries)


def cover_profile(profile: CostProfile, registry: ModuleRegistry) -> CostProfile:
    """Extend a profile with derived entries for never-executed modules.

    A module with no logged execution is priced as the sum of its member
    agents' means (a one-invocation-each floor). Entries carry count 1 and
    zero stddev; real observations replace them on the next estimate.
    """
    entries = dict(profile.entries)
    for module in registry.modules():
        if module.id in entries:
            continue
        member_ids = [ActionId.agent(name) for name in sorted(module.members())]
        if not all(mid in entries for mid in member_ids):
            continue
        mean = sum((entries[mid].mean_dollars for mid in member_ids), Fraction(0))
        entries[module.id] = ProfileEntry(mean_dollars=mean, sample_count=1, sample_stddev=0.0)
    return CostProfile(entries)


# -- pattern mining -----------------------------------------------------------


def _abstract(pattern: tuple[ActionId, ...]) -> tuple[str, Strategy] | None:
    """Turn a contiguous agent-id pattern into (name, strategy)."""
    names = [aid.name for aid in pattern]
    if len(set(names)) == 1:
        n = len(names)
        if n < 2:
            return None
        return (
            f"mined_ensemble{n}_{names[0]}",
            Ensemble(n, Single(names[0]), DEFAULT_AGGREGATOR),
        )
    if len(names) >= 3 and len(set(names)) == 2 and all(
        name == names[i % 2] for i, name in enumerate(names)
    ):
        return (
            f"mined_interactive_{names[0]}_{names[1]}",
            Interactive(Single(names[0]), Single(names[1])),
        )
    return (
        "mined_pipeline_" + "_".join(names),
        Pipeline(tuple(Single(name) for name in names)),
    )


def _contains(sequence: tuple[ActionId, ...], pattern: tuple[ActionId, ...]) -> bool:
    n, m = len(sequence), len(pattern)
    return any(sequence[i : i + m] == pattern for i in range(n - m + 1))


def mine_modules(
    store: TrajectoryStore,
    min_support: float = DEFAULT_MIN_SUPPORT,
    max_len: int = DEFAULT_MAX_LEN,
    registry: ModuleRegistry | None = None,
) -> list[CollaborationModule]:
    """Frequent contiguous agent patterns from successful trajectories.

    Support is the fraction of successful trajectories containing the
    pattern at least once. Candidates are ranked by support x length and
    deduplicated against the registry by structural signature. Windows
    containing module or finish steps are skipped: only direct agent
    interactions are abstractable.
    """
    if not 0 < min_support <= 1:
        raise ValueError("min_support must be in (0, 1]")
    if max_len < 2:
        raise ValueError("max_len must be at least 2")
    sequences = store.action_sequences(successful_only=True)
    if not sequences:
        return []
    support_floor = Fraction(str(min_support))
    windows: dict[tuple[ActionId, ...], int] = {}
    for seq in sequences:
        seen: set[tuple[ActionId, ...]] = set()
        for length in range(2, max_len + 1):
            for i in range(len(seq) - length + 1):
                window = seq[i : i + length]
                if any(aid.kind is not ActionKind.AGENT for aid in window):
                    continue
                seen.add(window)
        for window in seen:
            windows[window] = windows.get(window, 0) + 1

    total = len(sequences)
    scored: list[tuple[Fraction, Fraction, tuple[ActionId, ...], str, Strategy]] = []
    for window, count in windows.items():
        support = Fraction(count, total)
        if support < support_floor:
            continue
        abstracted = _abstract(window)
        if abstracted is None:
            continue
        name, strategy = abstracted
        scored.append((support * len(window), support, window, name, strategy))

    known = registry.signatures() if registry is not None else frozenset()
    out: list[CollaborationModule] = []
    emitted: set[str] = set()
    for score, support, window, name, strategy in sorted(
        scored, key=lambda row: (-row[0], -row[1], str(row[2]))
    ):
        signature = strategy.signature()
        if signature in known or signature in emitted:
            continue
        emitted.add(signature)
        out.append(
            CollaborationModule(
                name=name,
                strategy=strategy,
                description=(
                    f"mined pattern {' -> '.join(a.name for a in window)}"
                    f" (support {float(support):.2f})"
                ),
            )
        )
    return out


# -- self-play ----------------------------------------------------------------


def run_selfplay(
    tasks: Sequence[Task],
    registry: ModuleRegistry,
    rounds: int = DEFAULT_ROUNDS,
    budget_per_task=Decimal("1.00"),
    seed: int = 0,
    backend=None,
    roster: Mapping | None = None,
    t_max: int = 12,
    min_support: float = DEFAULT_MIN_SUPPORT,
    max_len: int = DEFAULT_MAX_LEN,
    prices=DEFAULT_PRICES,
    meter_orchestrator_tokens: bool = True,
) -> tuple[TrajectoryStore, CostProfile, list[CollaborationModule]]:
    """Iterative budget-unaware execution, costing, and mining.

    Each round runs every task with the current registry, re-estimates the
    cost profile over all experience so far, and registers at most one
    novel mined module. A freshly registered module is cost-probed once so
    the profile always covers it.
    """
    from .orchestrator import Method, RunConfig, default_roster, run_task

    if rounds < 1:
        raise ValueError("rounds must be at least 1")
    if not tasks:
        raise ValueError("tasks must be non-empty")
    if backend is None:
        raise ValueError("a backend is required")
    roster = roster or default_roster()
    store = TrajectoryStore()
    new_modules: list[CollaborationModule] = []
    for round_idx in range(rounds):
        round_seed = seed + 7919 * round_idx
        for task in tasks:
            config = RunConfig(
                method=Method.MODULES_UNAWARE,
                budget=budget_per_task,
                t_max=t_max,
                meter_orchestrator_tokens=meter_orchestrator_tokens,
                prices=prices,
            )
            try:
                result = run_task(
                    task, config, registry=registry, backend=backend,
                    seed=round_seed, roster=roster,
                )
            except BackendUnavailable as exc:
                log.warning("selfplay task %s failed: %s", task.id, exc)
                store.append(StoredTrajectory(task.id, round_idx, False, ()))
                continue
            store.append_result(result, round=round_idx)
        candidates = mine_modules(store, min_support, max_len, registry=registry)
        if candidates:
            module = candidates[0]
            registry.register(module)
            new_modules.append(module)
            _probe_module(module, tasks[0], backend, roster, prices, budget_per_task, round_idx, store)
    profile = estimate_costs(store)
    return store, profile, new_modules


def _probe_module(module, task, backend, roster, prices, budget, round_idx, store) -> None:
    """Execute a new module once so its cost has at least one observation."""
    session = backend.session(task.id)
    ledger = CostLedger(budget)
    executor = ModuleExecutor(session, roster, ledger, prices)
    try:
        result = executor.run(module, f"work the open parts of case {task.id}", [])
    except Exception as exc:
        log.warning("cost probe for %s failed: %s", module.name, exc)
        return
    store.append(
        StoredTrajectory(
            task_id=task.id,
            round=round_idx,
            success=False,
            steps=(StoredStep(module.id, _digest("cost probe"), result.total),),
        )
    )


# -- model-driven reflection ---------------------------------------------------


DEFAULT_REFLECT_PROMPT = """You are reviewing execution logs of a multi-agent system to find reusable teamwork patterns.

Successful runs often repeat the same agent interactions. Your job: propose new collaboration modules that package recurring interactions so the orchestrator can invoke them as a single action.

Example runs:
{few_shot_demonstrations}

Modules already available (do not propose these again):
{collected_collaboration_modules}

Propose up to three new modules, one per line, each as
  name: Expression
where Expression is one of
  Single(agent)
  Pipeline([expr, expr, ...])
  Interactive(expr, expr, rounds=N)
  Ensemble(N, expr, aggregator=agent)
Only output proposal lines."""


_TOKEN_RE = re.compile(r"\s*([A-Za-z_][A-Za-z0-9_]*|\d+|[()\[\],=])")


class _Parser:
    """Recursive-descent parser for the textual strategy syntax."""

    def __init__(self, text: str):
        self.tokens = self._lex(text)
        self.pos = 0

    @staticmethod
    def _lex(text: str) -> list[str]:
        tokens = []
        pos = 0
        while pos < len(text):
            if text[pos].isspace():
                pos += 1
                continue
            m = _TOKEN_RE.match(text, pos)
            if not m:
                raise ParseFailure(f"bad character {text[pos]!r} at offset {pos}")
            tokens.append(m.group(1))
            pos = m.end()
        return tokens

    def peek(self) -> str | None:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def take(self, expected: str | None = None) -> str:
        tok = self.peek()
        if tok is None:
            raise ParseFailure("unexpected end of proposal")
        if expected is not None and tok != expected:
            raise ParseFailure(f"expected {expected!r}, found {tok!r}")
        self.pos += 1
        return tok

    def number(self) -> int:
        tok = self.take()
        if not tok.isdigit():
            raise ParseFailure(f"expected a number, found {tok!r}")
        return int(tok)

    def parse(self) -> Strategy:
        strategy = self.expr()
        if self.peek() is not None:
            raise ParseFailure(f"trailing tokens from {self.peek()!r}")
        return strategy

    def expr(self) -> Strategy:
        tok = self.take()
        if tok == "Single":
            self.take("(")
            name = self.take()
            self.take(")")
            return Single(name)
        if tok == "Pipeline":
            self.take("(")
            bracketed = self.peek() == "["
            if bracketed:
                self.take("[")
            children = [self.expr()]
            while self.peek() == ",":
                self.take(",")
                children.append(self.expr())
            if bracketed:
                self.take("]")
            self.take(")")
            return Pipeline(tuple(children))
        if tok == "Interactive":
            self.take("(")
            left = self.expr()
            self.take(",")
            right = self.expr()
            rounds = 4
            if self.peek() == ",":
                self.take(",")
                if self.peek() == "rounds":
                    self.take("rounds")
                    self.take("=")
                rounds = self.number()
            self.take(")")
            return Interactive(left, right, rounds)
        if tok == "Ensemble":
            self.take("(")
            n = self.number()
            self.take(",")
            child = self.expr()
            aggregator = DEFAULT_AGGREGATOR
            if self.peek() == ",":
                self.take(",")
                if self.peek() == "aggregator":
                    self.take("aggregator")
                    self.take("=")
                aggregator = self.take()
            self.take(")")
            return Ensemble(n, child, aggregator)
        if tok.isidentifier():
            return Single(tok)
        raise ParseFailure(f"cannot start a strategy with {tok!r}")


def parse_strategy(text: str) -> Strategy:
    return _Parser(text).parse()


def _render_demonstrations(store: TrajectoryStore, limit: int = 3) -> str:
    lines = []
    for traj in store.trajectories():
        if not traj.success:
            continue
        path = " -> ".join(step.action.name for step in traj.steps)
        lines.append(f"task {traj.task_id}: {path} (solved)")
        if len(lines) >= limit:
            break
    return "\n".join(lines) if lines else "(none)"


def _render_registry(registry: ModuleRegistry) -> str:
    lines = [f"{m.name}: {m.signature()}" for m in registry.modules()]
    return "\n".join(lines) if lines else "(none)"


def llm_reflect(
    store: TrajectoryStore,
    prompt_template: str = DEFAULT_REFLECT_PROMPT,
    registry: ModuleRegistry | None = None,
    client=None,
    model: str = "claude-3-7-sonnet-latest",
    max_tokens: int = 512,
) -> list[CollaborationModule]:
    """Ask a chat model for module proposals and parse what comes back.

    Unparseable lines are logged and skipped; parsed proposals are
    signature-deduplicated against the registry and one another.
    """
    if client is None:
        raise BackendUnavailable("a wire client is required for model-driven reflection")
    registry = registry if registry is not None else ModuleRegistry()
    prompt = prompt_template.format(
        few_shot_demonstrations=_render_demonstrations(store),
        collected_collaboration_modules=_render_registry(registry),
    )
    text, _usage = client.chat_complete(
        {"model": model, "messages": [{"role": "user", "content": prompt}], "max_tokens": max_tokens}
    )
    known = set(registry.signatures())
    out: list[CollaborationModule] = []
    for lineno, raw in enumerate(text.splitlines()):
        line = raw.strip()
        if not line:
            continue
        name = f"reflected_{lineno}"
        body = line
        if ":" in line:
            head, _, tail = line.partition(":")
            if head.strip().isidentifier():
                name, body = head.strip(), tail
        try:
            strategy = parse_strategy(body)
        except ParseFailure as exc:
            log.info("discarding proposal %r: %s", line, exc)
            continue
        signature = strategy.signature()
        if signature in known:
            continue
        known.add(signature)
        out.append(CollaborationModule(name=name, strategy=strategy, description="model-proposed"))
    return out

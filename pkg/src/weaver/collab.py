"""Collaboration modules: reusable multi-agent workflow fragments.

A module wraps a strategy tree over worker agents. The algebra is closed
under composition: Single | Pipeline | Interactive | Ensemble, where
ensemble branches run concurrently on their own execution lanes and their
outputs are sorted canonically before aggregation, so results do not depend
on thread scheduling.
"""

from __future__ import annotations

import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Sequence, Union

from .agents import DONE_MARK, WorkerAgent
from .core import (
    ActionId,
    CostLedger,
    CostRecord,
    DEFAULT_PRICES,
    HistoryEntry,
    PriceSheet,
    price_cost,
    sum_records,
)


class ModuleFailed(RuntimeError):
    """Every branch of an ensemble failed, or a child raised irrecoverably."""


class UnknownAgent(KeyError):
    """Strategy references an agent name missing from the roster."""


@dataclass(frozen=True)
class Single:
    agent: str

    def signature(self) -> str:
        return f"single:{self.agent}"

    def members(self) -> frozenset[str]:
        return frozenset({self.agent})


@dataclass(frozen=True)
class Pipeline:
    children: tuple["Strategy", ...]

    def __post_init__(self):
        if len(self.children) < 2:
            raise ValueError("pipeline needs at least two children")
        object.__setattr__(self, "children", tuple(self.children))

    def signature(self) -> str:
        return "pipe(" + ",".join(c.signature() for c in self.children) + ")"

    def members(self) -> frozenset[str]:
        return frozenset().union(*(c.members() for c in self.children))


@dataclass(frozen=True)
class Interactive:
    left: "Strategy"
    right: "Strategy"
    max_rounds: int = 4

    def __post_init__(self):
        if self.max_rounds < 1:
            raise ValueError("max_rounds must be at least 1")

    def signature(self) -> str:
        return f"inter({self.left.signature()},{self.right.signature()},r{self.max_rounds})"

    def members(self) -> frozenset[str]:
        return self.left.members() | self.right.members()


@dataclass(frozen=True)
class Ensemble:
    n: int
    child: "Strategy"
    aggregator: str

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("ensemble needs at least two branches")

    def signature(self) -> str:
        return f"ens({self.n},{self.child.signature()},agg={self.aggregator})"

    def members(self) -> frozenset[str]:
        return self.child.members() | {self.aggregator}


Strategy = Union[Single, Pipeline, Interactive, Ensemble]


def strategy_to_config(strategy: Strategy) -> dict:
    if isinstance(strategy, Single):
        return {"type": "single", "agent": strategy.agent}
    if isinstance(strategy, Pipeline):
        return {"type": "pipeline", "children": [strategy_to_config(c) for c in strategy.children]}
    if isinstance(strategy, Interactive):
        return {
            "type": "interactive",
            "left": strategy_to_config(strategy.left),
            "right": strategy_to_config(strategy.right),
            "max_rounds": strategy.max_rounds,
        }
    if isinstance(strategy, Ensemble):
        return {
            "type": "ensemble",
            "n": strategy.n,
            "child": strategy_to_config(strategy.child),
            "aggregator": strategy.aggregator,
        }
    raise TypeError(f"not a strategy: {strategy!r}")


def strategy_from_config(cfg: Mapping) -> Strategy:
    kind = cfg.get("type")
    if kind == "single":
        return Single(str(cfg["agent"]))
    if kind == "pipeline":
        return Pipeline(tuple(strategy_from_config(c) for c in cfg["children"]))
    if kind == "interactive":
        return Interactive(
            strategy_from_config(cfg["left"]),
            strategy_from_config(cfg["right"]),
            int(cfg.get("max_rounds", 4)),
        )
    if kind == "ensemble":
        return Ensemble(int(cfg["n"]), strategy_from_config(cfg["child"]), str(cfg["aggregator"]))
    raise ValueError(f"unknown strategy type {kind!r}")


@dataclass(frozen=True)
class CollaborationModule:
    name: str
    strategy: Strategy
    description: str = ""

    def __post_init__(self):
        if not self.name:
            raise ValueError("module name must be non-empty")

    @property
    def id(self) -> ActionId:
        return ActionId.module(self.name)

    def members(self) -> frozenset[str]:
        return self.strategy.members()

    def signature(self) -> str:
        return self.strategy.signature()

    def to_config(self) -> dict:
        return {
            "name": self.name,
            "description": self.description,
            "strategy": strategy_to_config(self.strategy),
        }

    @staticmethod
    def from_config(cfg: Mapping) -> "CollaborationModule":
        return CollaborationModule(
            name=str(cfg["name"]),
            strategy=strategy_from_config(cfg["strategy"]),
            description=str(cfg.get("description", "")),
        )


class ModuleRegistry:
    """Named modules with structural dedup.

    Registering a module whose strategy signature is already present is a
    no-op and returns the existing module, so repeated mining rounds can
    only grow the registry with genuinely new structures.
    """

    def __init__(self, roster: Sequence[str] | None = None):
        self._roster = frozenset(roster) if roster is not None else None
        self._by_name: dict[str, CollaborationModule] = {}
        self._by_signature: dict[str, CollaborationModule] = {}
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return len(self._by_name)

    def __contains__(self, name: str) -> bool:
        return name in self._by_name

    def get(self, name: str) -> CollaborationModule:
        return self._by_name[name]

    def modules(self) -> list[CollaborationModule]:
        return list(self._by_name.values())

    def signatures(self) -> frozenset[str]:
        return frozenset(self._by_signature)

    def register(self, module: CollaborationModule) -> CollaborationModule:
        if self._roster is not None:
            missing = module.members() - self._roster
            if missing:
                raise UnknownAgent(f"module {module.name!r} references {sorted(missing)}")
        with self._lock:
            existing = self._by_signature.get(module.signature())
            if existing is not None:
                return existing
            if module.name in self._by_name:
                raise ValueError(f"module name {module.name!r} already registered")
            self._by_name[module.name] = module
            self._by_signature[module.signature()] = module
            return module

    def to_config(self) -> list[dict]:
        return [m.to_config() for m in self._by_name.values()]

    @staticmethod
    def from_config(rows: Sequence[Mapping], roster: Sequence[str] | None = None) -> "ModuleRegistry":
        reg = ModuleRegistry(roster)
        for row in rows:
            reg.register(CollaborationModule.from_config(row))
        return reg


def builtin_catalog(name: str) -> list[CollaborationModule]:
    """Hand-written starter modules for the two benchmark settings."""
    search, browse, reason = Single("search"), Single("browse"), Single("reason")
    critic = Single("critic")
    if name == "gaia":
        return [
            CollaborationModule(
                "interactive_search_and_browse",
                Interactive(search, browse),
                "alternate searching and browsing until the record is complete",
            ),
            CollaborationModule(
                "search_then_browse",
                Pipeline((search, browse)),
                "one search followed by one read of the best hit",
            ),
            CollaborationModule(
                "ensemble_search",
                Ensemble(3, search, "reason"),
                "three parallel searches merged by an aggregator",
            ),
            CollaborationModule(
                "two_ensemble_reasoning",
                Ensemble(2, reason, "reason"),
                "two independent reasoning passes, aggregated",
            ),
            CollaborationModule(
                "three_ensemble_reasoning",
                Ensemble(3, reason, "reason"),
                "three independent reasoning passes, aggregated",
            ),
        ]
    if name == "browse":
        inter = Interactive(search, browse)
        return [
            CollaborationModule(
                "interactive_search",
                inter,
                "alternate searching and reading until the record is complete",
            ),
            CollaborationModule(
                "ensemble_interactive_search",
                Ensemble(3, inter, "reason"),
                "three interactive search sessions, aggregated",
            ),
            CollaborationModule(
                "interactive_search_then_critic",
                Pipeline((inter, critic)),
                "interactive search followed by a critique of coverage",
            ),
            CollaborationModule(
                "ensemble_interactive_search_then_critic",
                Ensemble(3, Pipeline((inter, critic)), "reason"),
                "three critiqued interactive searches, aggregated",
            ),
        ]
    raise ValueError(f"unknown catalog {name!r}")


@dataclass(frozen=True)
class ModuleResult:
    output: str
    records: tuple[CostRecord, ...]

    @property
    def total(self) -> CostRecord:
        return sum_records(self.records)


class ModuleExecutor:
    """Runs strategy trees against a backend session, charging a ledger.

    Every agent invocation produces one CostRecord. Ensemble branches run in
    a thread pool on derived lanes (``lane/e{i}``), which keeps seeded
    backends deterministic regardless of scheduling.
    """

    def __init__(
        self,
        session,
        roster: Mapping[str, WorkerAgent],
        ledger: CostLedger | None = None,
        prices: PriceSheet = DEFAULT_PRICES,
        max_workers: int = 4,
    ):
        self.session = session
        self.roster = dict(roster)
        self.ledger = ledger
        self.prices = prices
        self.max_workers = max_workers

    def _agent(self, name: str) -> WorkerAgent:
        try:
            return self.roster[name]
        except KeyError:
            raise UnknownAgent(name) from None

    def _invoke(
        self,
        name: str,
        subtask: str,
        context: Sequence[HistoryEntry],
        scratch: Sequence[str],
        lane: str,
        records: list[CostRecord],
    ) -> str:
        agent = self._agent(name)
        result = self.session.invoke(agent, subtask, context, lane=lane, scratch=scratch)
        records.append(price_cost(result.usage, agent.model, self.prices))
        return result.output

    def run(
        self,
        module: CollaborationModule | Strategy,
        subtask: str,
        context: Sequence[HistoryEntry] = (),
        lane: str = "main",
    ) -> ModuleResult:
        strategy = module.strategy if isinstance(module, CollaborationModule) else module
        records: list[CostRecord] = []
        output = self._run(strategy, subtask, context, [], lane, records)
        # Charged once on completion so the ledger only ever holds records
        # that belong to a finished action (dropped branches cost nothing).
        if self.ledger is not None:
            for record in records:
                self.ledger.charge(record)
        return ModuleResult(output=output, records=tuple(records))

    def _run(
        self,
        strategy: Strategy,
        subtask: str,
        context: Sequence[HistoryEntry],
        scratch: list[str],
        lane: str,
        records: list[CostRecord],
    ) -> str:
        if isinstance(strategy, Single):
            return self._invoke(strategy.agent, subtask, context, scratch, lane, records)

        if isinstance(strategy, Pipeline):
            shared = list(scratch)
            output = ""
            for child in strategy.children:
                output = self._run(child, subtask, context, shared, lane, records)
                shared.append(output)
            return output

        if isinstance(strategy, Interactive):
            shared = list(scratch)
            output = ""
            for _ in range(strategy.max_rounds):
                for side in (strategy.left, strategy.right):
                    output = self._run(side, subtask, context, shared, lane, records)
                    shared.append(output)
                    if output.startswith(DONE_MARK):
                        return output
            return output

        if isinstance(strategy, Ensemble):
            return self._run_ensemble(strategy, subtask, context, scratch, lane, records)

        raise TypeError(f"not a strategy: {strategy!r}")

    def _run_ensemble(
        self,
        strategy: Ensemble,
        subtask: str,
        context: Sequence[HistoryEntry],
        scratch: list[str],
        lane: str,
        records: list[CostRecord],
    ) -> str:
        def branch(i: int) -> tuple[str, list[CostRecord]]:
            local: list[CostRecord] = []
            out = self._run(strategy.child, subtask, context, list(scratch), f"{lane}/e{i}", local)
            return out, local

        outputs: list[str] = []
        with ThreadPoolExecutor(max_workers=min(strategy.n, self.max_workers)) as pool:
            futures = [pool.submit(branch, i) for i in range(strategy.n)]
            for fut in futures:
                try:
                    out, local = fut.result()
                except Exception:
                    continue  # failed branches are dropped
                records.extend(local)
                outputs.append(out)
        if not outputs:
            raise ModuleFailed(f"all {strategy.n} branches failed")
        merged = "aggregate:\n" + "\n---\n".join(sorted(outputs))
        return self._invoke(strategy.aggregator, merged, context, scratch, lane, records)

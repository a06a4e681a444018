"""Shared domain types: actions, history, token usage, and exact-decimal costing.

Dollar amounts are fixed-point decimals with 6 fractional digits so that
budget comparisons are bit-exact across platforms. All ledger arithmetic is
done on ``decimal.Decimal``; floats never enter the money path.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from decimal import ROUND_HALF_EVEN, Decimal
from enum import Enum
from fractions import Fraction
from typing import Iterable, Mapping

MICRO = Decimal("0.000001")
FINISH_NAME = "finish"


class UnknownModel(KeyError):
    """Raised when a model name is missing from the price sheet."""


def as_dollars(value) -> Decimal:
    """Coerce a numeric value to a 6-fractional-digit Decimal.

    Floats are converted through ``str`` so that e.g. 0.2 becomes exactly
    0.200000 rather than the nearest binary float.
    """
    if isinstance(value, Decimal):
        dec = value
    elif isinstance(value, Fraction):
        dec = Decimal(value.numerator) / Decimal(value.denominator)
    else:
        dec = Decimal(str(value))
    return dec.quantize(MICRO, rounding=ROUND_HALF_EVEN)


class ActionKind(Enum):
    AGENT = "agent"
    MODULE = "module"
    FINISH = "finish"


@dataclass(frozen=True, order=True)
class ActionId:
    """Identifier for one entry of the expanded action space (agents, modules, finish)."""

    kind: ActionKind
    name: str

    def __post_init__(self):
        if self.kind is ActionKind.FINISH and self.name != FINISH_NAME:
            raise ValueError("finish actions must be named %r" % FINISH_NAME)
        if not self.name:
            raise ValueError("action name must be non-empty")

    def __str__(self) -> str:
        if self.kind is ActionKind.FINISH:
            return FINISH_NAME
        return f"{self.kind.value}:{self.name}"

    @staticmethod
    def agent(name: str) -> "ActionId":
        return ActionId(ActionKind.AGENT, name)

    @staticmethod
    def module(name: str) -> "ActionId":
        return ActionId(ActionKind.MODULE, name)

    @staticmethod
    def finish() -> "ActionId":
        return ActionId(ActionKind.FINISH, FINISH_NAME)

    @staticmethod
    def parse(text: str) -> "ActionId":
        if text == FINISH_NAME:
            return ActionId.finish()
        kind, _, name = text.partition(":")
        return ActionId(ActionKind(kind), name)


FINISH = ActionId.finish()


@dataclass(frozen=True)
class Action:
    """One orchestration choice: an action id plus the subtask handed to it.

    For finish actions the subtask carries the final answer payload.
    """

    id: ActionId
    subtask: str

    def __post_init__(self):
        if not self.subtask:
            raise ValueError("subtask must be non-empty")


@dataclass(frozen=True)
class TokenUsage:
    input_tokens: int = 0
    output_tokens: int = 0

    def __post_init__(self):
        if self.input_tokens < 0 or self.output_tokens < 0:
            raise ValueError("token counts must be non-negative")

    def __add__(self, other: "TokenUsage") -> "TokenUsage":
        return TokenUsage(
            self.input_tokens + other.input_tokens,
            self.output_tokens + other.output_tokens,
        )


@dataclass(frozen=True)
class ModelPrice:
    input_per_1k: Decimal
    output_per_1k: Decimal

    def __post_init__(self):
        if self.input_per_1k < 0 or self.output_per_1k < 0:
            raise ValueError("prices must be non-negative")


class PriceSheet:
    """Per-model token prices in dollars per 1K tokens."""

    def __init__(self, prices: Mapping[str, tuple] | Mapping[str, ModelPrice]):
        self._prices: dict[str, ModelPrice] = {}
        for model, price in prices.items():
            if isinstance(price, ModelPrice):
                self._prices[model] = price
            else:
                inp, out = price
                self._prices[model] = ModelPrice(
                    Decimal(str(inp)), Decimal(str(out))
                )

    def __contains__(self, model: str) -> bool:
        return model in self._prices

    def models(self) -> list[str]:
        return sorted(self._prices)

    def get(self, model: str) -> ModelPrice:
        try:
            return self._prices[model]
        except KeyError:
            raise UnknownModel(model) from None

    def scaled(self, factor) -> "PriceSheet":
        """Return a sheet with every price multiplied by ``factor`` (exact Decimal)."""
        f = Decimal(str(factor)) if not isinstance(factor, Decimal) else factor
        return PriceSheet(
            {
                m: ModelPrice(p.input_per_1k * f, p.output_per_1k * f)
                for m, p in self._prices.items()
            }
        )


# AWS Bedrock prices used for all built-in costing, dollars per 1K tokens.
DEFAULT_PRICES = PriceSheet(
    {
        "claude-3-5-haiku-latest": ("0.0008", "0.004"),
        "claude-3-7-sonnet-latest": ("0.003", "0.015"),
        "qwen3-32b": ("0.0007", "0.0028"),
    }
)

AGGREGATE_MODEL = "aggregate"  # synthesized sum records; not priceable


@dataclass(frozen=True)
class CostRecord:
    usage: TokenUsage
    model: str
    dollars: Decimal

    def __post_init__(self):
        if self.dollars < 0:
            raise ValueError("dollars must be non-negative")


def price_cost(usage: TokenUsage, model: str, sheet: PriceSheet = DEFAULT_PRICES) -> CostRecord:
    """Price a token usage against the sheet, exact to 6 decimal digits."""
    price = sheet.get(model)
    dollars = (
        Decimal(usage.input_tokens) * price.input_per_1k
        + Decimal(usage.output_tokens) * price.output_per_1k
    ) / Decimal(1000)
    return CostRecord(usage=usage, model=model, dollars=as_dollars(dollars))


def sum_records(records: Iterable[CostRecord]) -> CostRecord:
    """Component-wise sum of records, attributed to the synthetic 'aggregate' model."""
    usage = TokenUsage()
    dollars = Decimal(0)
    for rec in records:
        usage = usage + rec.usage
        dollars += rec.dollars
    return CostRecord(usage=usage, model=AGGREGATE_MODEL, dollars=as_dollars(dollars))


class CostLedger:
    """Append-only record of executed costs against a fixed budget.

    Charges are serialized through a single lock so that parallel module
    branches can charge concurrently; totals are linearizable.
    """

    def __init__(self, budget) -> None:
        self.budget = as_dollars(budget)
        self._entries: list[CostRecord] = []
        self._total = Decimal("0.000000")
        self._lock = threading.Lock()

    def charge(self, record: CostRecord) -> None:
        with self._lock:
            self._entries.append(record)
            self._total += record.dollars

    @property
    def entries(self) -> tuple[CostRecord, ...]:
        with self._lock:
            return tuple(self._entries)

    def total(self) -> Decimal:
        with self._lock:
            return self._total

    def remaining(self) -> Decimal:
        with self._lock:
            return self.budget - self._total

    @property
    def overshoot(self) -> bool:
        return self.total() > self.budget


@dataclass(frozen=True)
class HistoryEntry:
    """One executed step: the action taken, its output, and its total cost."""

    step: int
    action: Action
    output: str
    cost: CostRecord

    def __post_init__(self):
        if self.step < 0:
            raise ValueError("step must be >= 0")


def check_history(history: Iterable[HistoryEntry]) -> None:
    """Assert step indices are contiguous from 0."""
    for expected, entry in enumerate(history):
        if entry.step != expected:
            raise ValueError(f"history steps not contiguous at index {expected}")


@dataclass
class ProfileEntry:
    """Average observed cost for one action id (exact rational mean)."""

    mean_dollars: Fraction
    sample_count: int
    sample_stddev: float = 0.0


@dataclass
class CostProfile:
    """Learned map from action id to average execution cost.

    Means are exact rationals over the logged 6-digit decimal costs; the
    estimate is treated as transferable across tasks, which is a modeling
    relaxation rather than a guarantee.
    """

    entries: dict[ActionId, ProfileEntry] = field(default_factory=dict)

    def __contains__(self, action_id: ActionId) -> bool:
        return action_id in self.entries

    def mean(self, action_id: ActionId) -> Fraction:
        return self.entries[action_id].mean_dollars

    def ids(self) -> list[ActionId]:
        return sorted(self.entries, key=str)

    def covers(self, ids: Iterable[ActionId]) -> bool:
        return all(a in self.entries for a in ids)

    def scaled(self, factor: Fraction) -> "CostProfile":
        return CostProfile(
            {
                a: ProfileEntry(e.mean_dollars * factor, e.sample_count, e.sample_stddev)
                for a, e in self.entries.items()
            }
        )

    def to_json(self) -> dict:
        out = {}
        for action_id in self.ids():
            e = self.entries[action_id]
            out[str(action_id)] = {
                "mean_num": e.mean_dollars.numerator,
                "mean_den": e.mean_dollars.denominator,
                "mean_dollars": str(as_dollars(e.mean_dollars)),
                "sample_count": e.sample_count,
                "sample_stddev": e.sample_stddev,
            }
        return out

    @staticmethod
    def from_json(data: Mapping[str, Mapping]) -> "CostProfile":
        entries = {}
        for key, row in data.items():
            entries[ActionId.parse(key)] = ProfileEntry(
                mean_dollars=Fraction(int(row["mean_num"]), int(row["mean_den"])),
                sample_count=int(row["sample_count"]),
                sample_stddev=float(row["sample_stddev"]),
            )
        return CostProfile(entries)

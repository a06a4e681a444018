"""Worker agents and their two backends.

The synthetic backend is a seeded document-chain world used for desk-scale
verification: every random draw comes from a stream keyed by
(world seed, task, agent, execution lane, invocation ordinal), so full runs
replay byte-identically no matter how module branches are scheduled across
threads. The wire backend is a generic chat-completion client for real
models.
"""

from __future__ import annotations

import hashlib
import re
import threading
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Sequence

import numpy as np

from .core import ActionId, ActionKind, HistoryEntry, TokenUsage
from .tasks import Task

DONE_MARK = "[[done]]"
FINAL_RE = re.compile(r"FINAL:\s*(\S+)")
DOC_RE = re.compile(r"d(\d{2,})")
DOC_TAG = "[doc d{:04d}]"


class BackendUnavailable(RuntimeError):
    """Transport failure that survived the retry budget."""


class UnknownDocument(KeyError):
    """Reader was pointed at a document outside the world."""


class MalformedUsage(ValueError):
    """Provider response omitted token counts."""


class Role(Enum):
    SEARCHER = "searcher"
    READER = "reader"
    REASONER = "reasoner"
    CRITIC = "critic"


@dataclass(frozen=True)
class WorkerAgent:
    id: ActionId
    role: Role
    model: str

    def __post_init__(self):
        if self.id.kind is not ActionKind.AGENT:
            raise ValueError("worker agents need an agent-kind id")


@dataclass(frozen=True)
class InvocationResult:
    output: str
    usage: TokenUsage


@dataclass(frozen=True)
class TokenProfile:
    """Lognormal parameters (of the underlying normal) for token draws."""

    mu_in: float
    sigma_in: float
    mu_out: float
    sigma_out: float

    def draw(self, rng: np.random.Generator) -> TokenUsage:
        tin = max(1, int(round(float(rng.lognormal(self.mu_in, self.sigma_in)))))
        tout = max(1, int(round(float(rng.lognormal(self.mu_out, self.sigma_out)))))
        return TokenUsage(tin, tout)


def _log(x: float) -> float:
    return float(np.log(x))


DEFAULT_TOKEN_PROFILES: dict[str, TokenProfile] = {
    Role.SEARCHER.value: TokenProfile(_log(900), 0.25, _log(280), 0.25),
    Role.READER.value: TokenProfile(_log(1400), 0.25, _log(420), 0.25),
    Role.REASONER.value: TokenProfile(_log(1600), 0.25, _log(650), 0.25),
    Role.CRITIC.value: TokenProfile(_log(1200), 0.25, _log(300), 0.25),
    "orchestrator": TokenProfile(_log(1000), 0.2, _log(120), 0.2),
}


@dataclass(frozen=True)
class WorldParams:
    """Behavioural knobs of the synthetic world."""

    p_hit: float = 0.55        # single search surfaces the correct next doc
    p_reason: float = 0.65     # reasoner is right given complete evidence
    p_agg: float = 0.85        # aggregator keeps a correct branch answer
    num_docs: int = 400
    results_per_search: int = 5
    orchestrator_model: str = "claude-3-7-sonnet-latest"
    token_profiles: Mapping[str, TokenProfile] = field(
        default_factory=lambda: dict(DEFAULT_TOKEN_PROFILES)
    )

    def profile_for(self, key: str) -> TokenProfile:
        return self.token_profiles.get(key, DEFAULT_TOKEN_PROFILES[key])


def _key64(text: str) -> int:
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "big")


class SyntheticWorld:
    """Deterministic multi-hop document world shared by all tasks of a run.

    Documents are virtual: their payloads are computed from the bound task's
    evidence chain. ``invocation_counter`` tallies real worker executions and
    is the hook used to verify that planning never touches the world.
    """

    def __init__(self, tasks: Sequence[Task], seed: int, params: WorldParams | None = None):
        self.seed = int(seed)
        self.params = params or WorldParams()
        self.tasks = {t.id: t for t in tasks}
        self.invocation_counter: dict[str, int] = {}
        self._lock = threading.Lock()

    def count_invocations(self) -> int:
        with self._lock:
            return sum(self.invocation_counter.values())

    def _tally(self, agent_name: str) -> None:
        with self._lock:
            self.invocation_counter[agent_name] = self.invocation_counter.get(agent_name, 0) + 1

    def session(self, task_id: str) -> "SyntheticSession":
        return SyntheticSession(self, self.tasks[task_id])


class SyntheticSession:
    """World backend bound to a single task (one per run)."""

    def __init__(self, world: SyntheticWorld, task: Task):
        self.world = world
        self.task = task
        self._lane_counts: dict[tuple[str, str], int] = {}
        self._policy_calls = 0
        self._lock = threading.Lock()

    # -- RNG streams ------------------------------------------------------

    def _rng(self, *key: str, ordinal: int) -> np.random.Generator:
        ints = [self.world.seed, _key64(self.task.id)]
        ints.extend(_key64(k) for k in key)
        ints.append(ordinal)
        return np.random.default_rng(ints)

    def _next_ordinal(self, agent_name: str, lane: str) -> int:
        with self._lock:
            ordinal = self._lane_counts.get((agent_name, lane), 0)
            self._lane_counts[(agent_name, lane)] = ordinal + 1
        return ordinal

    def policy_usage(self) -> TokenUsage:
        """Simulated orchestrator-model token usage for one policy call."""
        with self._lock:
            ordinal = self._policy_calls
            self._policy_calls += 1
        rng = self._rng("__policy__", ordinal=ordinal)
        return self.world.params.profile_for("orchestrator").draw(rng)

    # -- world inspection --------------------------------------------------

    def _visible_text(self, context: Sequence[HistoryEntry], scratch: Sequence[str]) -> str:
        parts = [entry.output for entry in context]
        parts.extend(scratch)
        return "\n".join(parts)

    def _read_positions(self, text: str) -> list[int]:
        return [
            i for i, doc in enumerate(self.task.chain) if DOC_TAG.format(doc) in text
        ]

    def _next_target(self, text: str) -> int | None:
        """First chain doc whose payload has not yet been surfaced."""
        seen = set(self._read_positions(text))
        for i, doc in enumerate(self.task.chain):
            if i not in seen:
                return doc
        return None

    def evidence_complete(self, text: str) -> bool:
        return len(self._read_positions(text)) == len(self.task.chain)

    # -- invocation --------------------------------------------------------

    def invoke(
        self,
        agent: WorkerAgent,
        subtask: str,
        context: Sequence[HistoryEntry],
        lane: str = "main",
        scratch: Sequence[str] = (),
    ) -> InvocationResult:
        self.world._tally(agent.id.name)
        ordinal = self._next_ordinal(agent.id.name, lane)
        rng = self._rng(agent.id.name, lane, ordinal=ordinal)
        text = self._visible_text(context, scratch)

        if subtask.startswith("aggregate:"):
            output = self._aggregate(subtask, text, rng)
        elif agent.role is Role.SEARCHER:
            output = self._search(text, rng)
        elif agent.role is Role.READER:
            output = self._read(subtask, text)
        elif agent.role is Role.REASONER:
            output = self._reason(text, rng)
        elif agent.role is Role.CRITIC:
            output = self._critique(text)
        else:  # pragma: no cover - enum is closed
            raise ValueError(f"unhandled role {agent.role}")

        usage = self.world.params.profile_for(agent.role.value).draw(rng)
        return InvocationResult(output=output, usage=usage)

    def _decoys(self, rng: np.random.Generator, n: int, exclude: set[int]) -> list[int]:
        out: list[int] = []
        while len(out) < n:
            cand = int(rng.integers(0, self.world.params.num_docs))
            if cand not in exclude and cand not in out:
                out.append(cand)
        return out

    def _search(self, text: str, rng: np.random.Generator) -> str:
        target = self._next_target(text)
        n = self.world.params.results_per_search
        if target is None:
            docs = self._decoys(rng, n, set(self.task.chain))
            return "search results (nothing new): " + ", ".join(f"d{d:04d}" for d in docs)
        hit = bool(rng.random() < self.world.params.p_hit)
        if hit:
            docs = [target] + self._decoys(rng, n - 1, {target})
        else:
            docs = self._decoys(rng, n, {target})
        return "search results: " + ", ".join(f"d{d:04d}" for d in docs)

    def _pick_doc(self, subtask: str, text: str) -> int | None:
        explicit = DOC_RE.search(subtask)
        if explicit:
            return int(explicit.group(1))
        # No explicit id: read the first unread candidate of the latest search.
        for line in reversed(text.splitlines()):
            if line.startswith("search results"):
                for m in DOC_RE.finditer(line):
                    doc = int(m.group(1))
                    if DOC_TAG.format(doc) not in text:
                        return doc
        return None

    def _read(self, subtask: str, text: str) -> str:
        doc = self._pick_doc(subtask, text)
        if doc is None:
            return "[reader] no document reference available."
        if not 0 <= doc < self.world.params.num_docs:
            raise UnknownDocument(f"d{doc:04d}")
        tag = DOC_TAG.format(doc)
        chain = self.task.chain
        if doc in chain:
            pos = chain.index(doc)
            if pos == len(chain) - 1:
                if self.task.meta.get("kind") == "synthesis":
                    cipher = "".join(reversed(self.task.answer))
                    return (
                        f"{DONE_MARK} {tag} record complete: the conclusion is"
                        f" encoded as cipher '{cipher}'."
                    )
                return (
                    f"{DONE_MARK} {tag} record complete: the conclusion token is"
                    f" '{self.task.answer}'."
                )
            return (
                f"{tag} reference log: proceed to archive item #{pos + 2}"
                f" for case {self.task.id}."
            )
        return f"{tag} routine filing, nothing relevant to case {self.task.id}."

    def _reason(self, text: str, rng: np.random.Generator) -> str:
        if self.evidence_complete(text):
            if rng.random() < self.world.params.p_reason:
                return f"{DONE_MARK} FINAL: {self.task.answer}"
            return f"{DONE_MARK} FINAL: guess-{int(rng.integers(1000, 10000))}"
        return (
            "evidence incomplete; best guess only."
            f" FINAL: guess-{int(rng.integers(1000, 10000))}"
        )

    def _critique(self, text: str) -> str:
        seen = set(self._read_positions(text))
        for i in range(len(self.task.chain)):
            if i not in seen:
                return (
                    f"critique: evidence for hop {i + 1} of case {self.task.id}"
                    " is missing; search for the cited reference."
                )
        return f"{DONE_MARK} critique: evidence complete, ready to conclude."

    def _aggregate(self, subtask: str, text: str, rng: np.random.Generator) -> str:
        branches = [b.strip() for b in subtask[len("aggregate:"):].split("\n---\n") if b.strip()]
        finals = [m.group(1) for b in branches for m in [FINAL_RE.search(b)] if m]
        if finals:
            if self.task.answer in finals:
                if rng.random() < self.world.params.p_agg:
                    return f"{DONE_MARK} FINAL: {self.task.answer}"
                return f"{DONE_MARK} FINAL: guess-{int(rng.integers(1000, 10000))}"
            counts: dict[str, int] = {}
            for ans in finals:
                counts[ans] = counts.get(ans, 0) + 1
            best = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[0][0]
            return f"{DONE_MARK} FINAL: {best}"
        if any(b.startswith("search results") for b in branches):
            return self._merge_search(branches, text)
        # Mixed outputs: keep the branch with the deepest chain progress.
        def depth(branch: str) -> int:
            return len(self._read_positions(branch))
        best = sorted(branches, key=lambda b: (-depth(b), b))[0]
        return best

    def _merge_search(self, branches: list[str], text: str) -> str:
        target = self._next_target(text)
        listed: list[int] = []
        for branch in sorted(branches):
            for m in DOC_RE.finditer(branch):
                doc = int(m.group(1))
                if doc not in listed:
                    listed.append(doc)
        n = self.world.params.results_per_search
        if target is not None and target in listed:
            docs = [target] + [d for d in listed if d != target][: n - 1]
        else:
            docs = listed[:n]
        return "search results: " + ", ".join(f"d{d:04d}" for d in docs)


def parse_final(text: str) -> str | None:
    m = FINAL_RE.search(text)
    return m.group(1) if m else None


# -- wire backend -----------------------------------------------------------


class ChatClient:
    """Minimal chat-completion wire client.

    Request body: ``{"model": str, "messages": [{"role", "content"}],
    "max_tokens": int}``; response body: ``{"text": str, "usage":
    {"input_tokens": int, "output_tokens": int}}``. Transient failures are
    retried up to ``max_retries`` times with exponential backoff; usage from
    failed attempts is never reported.
    """

    def __init__(
        self,
        endpoint: str,
        token: str | None = None,
        transport=None,
        max_retries: int = 3,
        backoff: float = 0.25,
        sleeper=time.sleep,
    ):
        if transport is None:
            import requests

            transport = requests.Session()
        self.endpoint = endpoint
        self.token = token
        self.transport = transport
        self.max_retries = max_retries
        self.backoff = backoff
        self.sleeper = sleeper

    @staticmethod
    def from_env() -> "ChatClient":
        import os

        endpoint = os.environ.get("WEAVER_CHAT_ENDPOINT")
        if not endpoint:
            raise BackendUnavailable("WEAVER_CHAT_ENDPOINT is not set")
        return ChatClient(endpoint, os.environ.get("WEAVER_CHAT_TOKEN"))

    def chat_complete(self, request: Mapping) -> tuple[str, TokenUsage]:
        messages = request.get("messages") or []
        if not messages:
            raise ValueError("message list must be non-empty")
        headers = {}
        if self.token:
            headers["Authorization"] = f"Bearer {self.token}"
        body = {
            "model": request["model"],
            "messages": list(messages),
            "max_tokens": int(request.get("max_tokens", 1024)),
        }
        last_error: Exception | None = None
        for attempt in range(self.max_retries):
            if attempt:
                self.sleeper(self.backoff * (2 ** (attempt - 1)))
            try:
                resp = self.transport.post(self.endpoint, json=body, headers=headers)
            except Exception as exc:  # transport-level failure
                last_error = exc
                continue
            if resp.status_code >= 500:
                last_error = BackendUnavailable(f"HTTP {resp.status_code}")
                continue
            if resp.status_code >= 400:
                raise BackendUnavailable(f"HTTP {resp.status_code}: {resp.text}")
            payload = resp.json()
            usage = payload.get("usage") or {}
            if "input_tokens" not in usage or "output_tokens" not in usage:
                raise MalformedUsage("provider response omitted token counts")
            return str(payload.get("text", "")), TokenUsage(
                int(usage["input_tokens"]), int(usage["output_tokens"])
            )
        raise BackendUnavailable(f"{self.max_retries} attempts failed: {last_error}")


DEFAULT_ROLE_PROMPTS = {
    Role.SEARCHER.value: "You are a search agent. Return the most relevant document ids for the query.",
    Role.READER.value: "You are a document reader. Fetch and summarize the referenced document.",
    Role.REASONER.value: "You are a reasoning agent. Derive the answer from the gathered evidence and reply with 'FINAL: <answer>'.",
    Role.CRITIC.value: "You are a critic. Identify what evidence is still missing and what to search next.",
}


class ChatBackend:
    """Adapts the wire client to the worker-invocation contract."""

    def __init__(
        self,
        client: ChatClient,
        role_prompts: Mapping[str, str] | None = None,
        max_output_tokens: int = 1024,
        context_window: int = 6,
    ):
        self.client = client
        self.role_prompts = dict(role_prompts or DEFAULT_ROLE_PROMPTS)
        self.max_output_tokens = max_output_tokens
        self.context_window = context_window

    def invoke(
        self,
        agent: WorkerAgent,
        subtask: str,
        context: Sequence[HistoryEntry],
        lane: str = "main",
        scratch: Sequence[str] = (),
    ) -> InvocationResult:
        messages = [{"role": "system", "content": self.role_prompts[agent.role.value]}]
        recent = list(context)[-self.context_window :]
        for entry in recent:
            messages.append(
                {"role": "user", "content": f"[step {entry.step}] {entry.action.subtask}"}
            )
            messages.append({"role": "assistant", "content": entry.output})
        for extra in scratch:
            messages.append({"role": "assistant", "content": extra})
        messages.append({"role": "user", "content": subtask})
        text, usage = self.client.chat_complete(
            {"model": agent.model, "messages": messages, "max_tokens": self.max_output_tokens}
        )
        return InvocationResult(output=text, usage=usage)

    def session(self, task_id: str) -> "ChatSession":
        return ChatSession(self)


class ChatSession:
    """Per-task view over the wire backend.

    Wire runs have no simulated orchestrator; policy draws report zero
    usage, so metering charges nothing extra on this backend.
    """

    def __init__(self, backend: ChatBackend):
        self.backend = backend

    def invoke(
        self,
        agent: WorkerAgent,
        subtask: str,
        context: Sequence[HistoryEntry],
        lane: str = "main",
        scratch: Sequence[str] = (),
    ) -> InvocationResult:
        return self.backend.invoke(agent, subtask, context, lane=lane, scratch=scratch)

    def policy_usage(self) -> TokenUsage:
        return TokenUsage(0, 0)

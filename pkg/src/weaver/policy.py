"""Seeded stochastic rule policy standing in for an orchestrator model.

The policy reads the execution history, infers a coarse stage (gathering
evidence, synthesizing, or done), and samples the next action from a
weighted distribution over the action space. Conditioning hooks:

* ``remaining`` — budget awareness: actions whose mean cost exceeds the
  remaining budget are damped hard.
* ``carried_freq`` — planner carry-forward: ids that appear in feasible
  speculative trajectories get a multiplicative boost.

Draw streams are keyed by (seed, task, purpose, call ordinal) and never by
method, so two methods that issue the same calls under the same
conditioning sample identical actions.
"""

from __future__ import annotations

import re
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from .agents import DONE_MARK, FINAL_RE, _key64
from .core import Action, ActionId, ActionKind, CostProfile, FINISH, HistoryEntry

TOKEN_RE = re.compile(r"conclusion token is '([^']+)'")

GATHER, SYNTH, DONE = "gather", "synth", "done"

DAMPING = 0.05
UNKNOWN_ANSWER = "unknown"


def _read_tags(text: str) -> set[str]:
    return set(re.findall(r"\[doc (d\d+)\]", text))


def _unread_head(text: str) -> str | None:
    """Head of the latest search-results line, if it is still unread.

    Search backends put the best hit first; once the head is read and turned
    out irrelevant, rereading the tail is pointless and a fresh search is
    the better move.
    """
    read = _read_tags(text)
    for line in reversed(text.splitlines()):
        if line.startswith("search results"):
            docs = re.findall(r"d\d+", line)
            if docs and docs[0] not in read:
                return docs[0]
            return None
    return None


class RulePolicy:
    def __init__(
        self,
        seed: int,
        task_id: str,
        action_space: Sequence[ActionId],
        profile: CostProfile | None = None,
        boost: float = 1.5,
        purpose: str = "policy",
    ):
        space = list(dict.fromkeys(action_space))
        if FINISH not in space:
            space.append(FINISH)
        self.seed = int(seed)
        self.task_id = task_id
        self.space: tuple[ActionId, ...] = tuple(space)
        self.profile = profile
        self.boost = float(boost)
        self.purpose = purpose
        self._ordinal = 0

    # -- history interpretation --------------------------------------------

    def _text(self, history: Sequence[HistoryEntry]) -> str:
        return "\n".join(entry.output for entry in history)

    def stage(self, history: Sequence[HistoryEntry]) -> tuple[str, str | None]:
        """Coarse progress stage plus the answer, once one is extractable."""
        text = self._text(history)
        answer = None
        for entry in reversed(history):
            token = TOKEN_RE.search(entry.output)
            if token:
                answer = token.group(1)
                break
            if entry.output.startswith(DONE_MARK):
                final = FINAL_RE.search(entry.output)
                if final:
                    answer = final.group(1)
                    break
        if answer is not None:
            return DONE, answer
        if "record complete" in text:
            return SYNTH, None
        return GATHER, None

    def best_effort_answer(self, history: Sequence[HistoryEntry]) -> str:
        stage, answer = self.stage(history)
        if answer is not None:
            return answer
        for entry in reversed(history):
            final = FINAL_RE.search(entry.output)
            if final:
                return final.group(1)
        return UNKNOWN_ANSWER

    # -- sampling ------------------------------------------------------------

    def _base_weight(self, aid: ActionId, stage: str, unread: str | None) -> float:
        if aid.kind is ActionKind.FINISH:
            return 25.0 if stage == DONE else 0.05
        name = aid.name
        reasonish = "reason" in name
        gatherish = "search" in name or "browse" in name or "read" in name
        if stage == DONE:
            return 0.1
        if stage == SYNTH:
            if reasonish:
                return 12.0 if aid.kind is ActionKind.AGENT else 8.0
            return 0.2
        # gathering
        if aid.kind is ActionKind.AGENT:
            if name == "browse":
                return 12.0 if unread else 0.3
            if name == "search":
                return 2.0 if unread else 10.0
            return 0.3
        if gatherish:
            return 7.0
        return 0.2

    def weights(
        self,
        history: Sequence[HistoryEntry],
        remaining=None,
        carried_freq: Mapping[ActionId, Fraction] | None = None,
    ) -> dict[ActionId, float]:
        stage, _ = self.stage(history)
        unread = _unread_head(self._text(history))
        out: dict[ActionId, float] = {}
        for aid in self.space:
            w = self._base_weight(aid, stage, unread)
            if (
                remaining is not None
                and self.profile is not None
                and self.profile.covers([aid])
                and self.profile.mean(aid) > Fraction(remaining)
            ):
                w *= DAMPING
            if carried_freq:
                w *= 1.0 + self.boost * float(carried_freq.get(aid, 0))
            out[aid] = w
        return out

    def sample(
        self,
        k: int,
        history: Sequence[HistoryEntry],
        remaining=None,
        carried_freq: Mapping[ActionId, Fraction] | None = None,
        context_note: str | None = None,
    ) -> list[Action]:
        """Draw k candidate actions. ``context_note`` (e.g. a rendered budget
        prompt) is accepted for interface parity with a model-backed policy;
        the rule policy conditions on ``remaining`` directly."""
        del context_note
        rng = np.random.default_rng(
            [self.seed, _key64(self.task_id), _key64(self.purpose), self._ordinal]
        )
        self._ordinal += 1
        stage, answer = self.stage(history)
        weights = self.weights(history, remaining, carried_freq)
        ids = list(weights)
        probs = np.array(list(weights.values()), dtype=float)
        probs = probs / probs.sum()
        picks = rng.choice(len(ids), size=int(k), p=probs)
        return [self._action(ids[int(i)], stage, answer, history) for i in picks]

    def _action(
        self,
        aid: ActionId,
        stage: str,
        answer: str | None,
        history: Sequence[HistoryEntry],
    ) -> Action:
        if aid.kind is ActionKind.FINISH:
            payload = answer if answer is not None else self.best_effort_answer(history)
            return Action(aid, payload)
        if aid.kind is ActionKind.MODULE:
            return Action(aid, f"work the open parts of case {self.task_id}")
        name = aid.name
        if name == "search":
            return Action(aid, f"find the next archive item for case {self.task_id}")
        if name == "browse":
            return Action(aid, "read the most relevant unread result")
        if name == "reason":
            return Action(aid, f"derive the conclusion for case {self.task_id} from the evidence")
        if name == "critic":
            return Action(aid, f"check evidence coverage for case {self.task_id}")
        return Action(aid, f"advance case {self.task_id}")

"""Two-horizon action selection under a remaining budget.

Each step scores K sampled candidate actions with ``f(i) = g(i) + h(i)``:

* ``g(i)`` is short-horizon self-consistency: the fraction of the K samples
  whose action id matches candidate i (subtask wording is ignored).
* ``h(i)`` is long-horizon budget feasibility: from each candidate, symbolic
  rollouts are drawn from a first-order transition prior and costed with
  profile means; h is the candidate's share of budget-feasible rollouts,
  with a uniform 1/K fallback when nothing is feasible anywhere.

Rollouts are never executed; they spend no tokens and touch no backend.
All scores are exact rationals, so scaling every mean cost and the
remaining budget by the same factor provably cannot change the selection.
"""

from __future__ import annotations

from dataclasses import dataclass
from decimal import Decimal
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from .core import Action, ActionId, CostProfile, FINISH

DEFAULT_K = 3
DEFAULT_N_ROLLOUTS = 5
DEFAULT_DEPTH_LIMIT = 6


class PolicyFailure(RuntimeError):
    """The sampling policy produced no usable candidates."""


class MissingCostProfile(KeyError):
    """An action in the planning space has no cost estimate."""


def profile_mean(profile: CostProfile, action_id: ActionId) -> Fraction:
    try:
        return profile.mean(action_id)
    except KeyError:
        raise MissingCostProfile(str(action_id)) from None


class TransitionPrior:
    """First-order Markov prior over action ids with additive smoothing.

    Finish is absorbing: rollouts stop there. With no observed transitions
    the prior is uniform over the vocabulary, which is exactly what add-one
    smoothing of an empty count table gives.
    """

    def __init__(
        self,
        vocabulary: Sequence[ActionId],
        counts: Mapping[tuple[ActionId, ActionId], int] | None = None,
        smoothing: int = 1,
    ):
        if smoothing < 1:
            raise ValueError("smoothing must be a positive count")
        vocab = list(dict.fromkeys(vocabulary))
        if FINISH not in vocab:
            vocab.append(FINISH)
        self.vocabulary: tuple[ActionId, ...] = tuple(vocab)
        self.smoothing = smoothing
        self._counts: dict[tuple[ActionId, ActionId], int] = dict(counts or {})

    @staticmethod
    def from_sequences(
        sequences: Sequence[Sequence[ActionId]],
        vocabulary: Sequence[ActionId],
        smoothing: int = 1,
    ) -> "TransitionPrior":
        counts: dict[tuple[ActionId, ActionId], int] = {}
        known = set(vocabulary) | {FINISH}
        for seq in sequences:
            for prev, nxt in zip(seq, seq[1:]):
                if prev in known and nxt in known:
                    counts[(prev, nxt)] = counts.get((prev, nxt), 0) + 1
        return TransitionPrior(vocabulary, counts, smoothing)

    def next_distribution(self, current: ActionId) -> dict[ActionId, Fraction]:
        vocab = self.vocabulary
        row = [self._counts.get((current, nxt), 0) + self.smoothing for nxt in vocab]
        total = sum(row)
        return {nxt: Fraction(c, total) for nxt, c in zip(vocab, row)}

    def sample_rollout(
        self,
        start: ActionId,
        rng: np.random.Generator,
        depth_limit: int = DEFAULT_DEPTH_LIMIT,
    ) -> tuple[ActionId, ...]:
        actions = [start]
        while actions[-1] != FINISH and len(actions) < depth_limit:
            dist = self.next_distribution(actions[-1])
            ids = list(dist)
            probs = np.array([float(p) for p in dist.values()])
            probs = probs / probs.sum()
            actions.append(ids[int(rng.choice(len(ids), p=probs))])
        return tuple(actions)


@dataclass(frozen=True)
class CandidateSet:
    step: int
    candidates: tuple[Action, ...]

    def __post_init__(self):
        if not self.candidates:
            raise ValueError("candidate set must be non-empty")

    @property
    def k(self) -> int:
        return len(self.candidates)

    def ids(self) -> tuple[ActionId, ...]:
        return tuple(c.id for c in self.candidates)


@dataclass(frozen=True)
class SpeculativeTrajectory:
    actions: tuple[ActionId, ...]
    estimated_cost: Fraction

    def __post_init__(self):
        if not self.actions:
            raise ValueError("trajectory must be non-empty")


@dataclass(frozen=True)
class FeasibleSet:
    """Per-candidate budget-feasible rollouts; carried into the next step."""

    per_candidate: tuple[tuple[SpeculativeTrajectory, ...], ...] = ()

    @staticmethod
    def empty() -> "FeasibleSet":
        return FeasibleSet(())

    def counts(self) -> list[int]:
        return [len(bucket) for bucket in self.per_candidate]

    def union(self) -> tuple[SpeculativeTrajectory, ...]:
        seen: dict[SpeculativeTrajectory, None] = {}
        for bucket in self.per_candidate:
            for traj in bucket:
                seen.setdefault(traj)
        return tuple(seen)

    def action_frequencies(self) -> dict[ActionId, Fraction]:
        """Share of distinct feasible trajectories each action id appears in."""
        union = self.union()
        if not union:
            return {}
        counts: dict[ActionId, int] = {}
        for traj in union:
            for aid in set(traj.actions):
                counts[aid] = counts.get(aid, 0) + 1
        return {aid: Fraction(c, len(union)) for aid, c in counts.items()}


def render_carried(feasible: FeasibleSet) -> str:
    """Deterministic textual summary of carried trajectories, for audit."""
    union = feasible.union()
    if not union:
        return "no feasible plans carried"
    lines = []
    for traj in sorted(union, key=lambda t: (t.estimated_cost, tuple(map(str, t.actions)))):
        path = " -> ".join(str(a) for a in traj.actions)
        lines.append(f"{path} (est ${float(traj.estimated_cost):.4f})")
    return "feasible plans:\n" + "\n".join(lines)


def cost_trajectory(actions: Sequence[ActionId], profile: CostProfile) -> Fraction:
    return sum((profile_mean(profile, a) for a in actions), Fraction(0))


def sample_candidates(
    policy,
    history,
    carried: FeasibleSet,
    k: int,
    step: int = 0,
    remaining=None,
    context_note: str | None = None,
) -> CandidateSet:
    """Draw K candidate actions from the policy, conditioned on carried plans."""
    if k < 1:
        raise ValueError("K must be at least 1")
    freq = carried.action_frequencies()
    candidates = tuple(
        policy.sample(
            k,
            history,
            remaining=remaining,
            carried_freq=freq or None,
            context_note=context_note,
        )
    )
    if len(candidates) != k:
        raise PolicyFailure(f"expected {k} candidates, got {len(candidates)}")
    return CandidateSet(step=step, candidates=candidates)


def speculate(
    candidate: Action | ActionId,
    prior: TransitionPrior,
    profile: CostProfile,
    n_rollouts: int = DEFAULT_N_ROLLOUTS,
    depth_limit: int = DEFAULT_DEPTH_LIMIT,
    seed: int | Sequence[int] = 0,
) -> list[SpeculativeTrajectory]:
    """Sample symbolic continuations of a candidate and price them."""
    if n_rollouts < 1 or depth_limit < 1:
        raise ValueError("n_rollouts and depth_limit must be at least 1")
    start = candidate.id if isinstance(candidate, Action) else candidate
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n_rollouts):
        actions = prior.sample_rollout(start, rng, depth_limit)
        out.append(SpeculativeTrajectory(actions, cost_trajectory(actions, profile)))
    return out


def filter_feasible(
    trajectories: Sequence[SpeculativeTrajectory],
    remaining: Decimal | Fraction | int,
) -> list[SpeculativeTrajectory]:
    """Keep rollouts whose estimated cost fits the remaining budget.

    The boundary is inclusive: a rollout costing exactly the remaining
    budget survives.
    """
    bound = Fraction(remaining)
    return [t for t in trajectories if t.estimated_cost <= bound]


def short_term_gain(candidates: CandidateSet | Sequence[Action]) -> list[Fraction]:
    actions = candidates.candidates if isinstance(candidates, CandidateSet) else tuple(candidates)
    k = len(actions)
    ids = [a.id for a in actions]
    return [Fraction(sum(1 for other in ids if other == mine), k) for mine in ids]


def long_term_gain(feasible: FeasibleSet | Sequence[int], k: int | None = None) -> list[Fraction]:
    counts = feasible.counts() if isinstance(feasible, FeasibleSet) else list(feasible)
    if k is None:
        k = len(counts)
    if len(counts) != k:
        raise ValueError("one feasible count per candidate required")
    total = sum(counts)
    if total == 0:
        return [Fraction(1, k)] * k
    return [Fraction(c, total) for c in counts]


def select_action(
    candidates: CandidateSet | Sequence[Action],
    g: Sequence[Fraction],
    h: Sequence[Fraction],
    profile: CostProfile,
    feasible: FeasibleSet = FeasibleSet.empty(),
    g_weight: Fraction = Fraction(1),
    h_weight: Fraction = Fraction(1),
) -> tuple[Action, FeasibleSet]:
    """Argmax of f = g + h; ties go to the cheaper mean, then lower index.

    Returns the winning action together with the feasible set to carry into
    the next step's sampling.
    """
    actions = candidates.candidates if isinstance(candidates, CandidateSet) else tuple(candidates)
    if not (len(actions) == len(g) == len(h)):
        raise ValueError("g and h must score every candidate")
    f = [g_weight * gi + h_weight * hi for gi, hi in zip(g, h)]
    best = max(
        range(len(actions)),
        key=lambda i: (f[i], -profile_mean(profile, actions[i].id), -i),
    )
    return actions[best], feasible


@dataclass(frozen=True)
class PlanOutcome:
    action: Action
    candidates: CandidateSet
    g: tuple[Fraction, ...]
    h: tuple[Fraction, ...]
    f: tuple[Fraction, ...]
    feasible: FeasibleSet


def plan_step(
    policy,
    history,
    prior: TransitionPrior,
    profile: CostProfile,
    remaining: Decimal | Fraction,
    carried: FeasibleSet = FeasibleSet.empty(),
    step: int = 0,
    seed: int | Sequence[int] = 0,
    k: int = DEFAULT_K,
    n_rollouts: int = DEFAULT_N_ROLLOUTS,
    depth_limit: int = DEFAULT_DEPTH_LIMIT,
    uniform_h: bool = False,
    g_weight: Fraction = Fraction(1),
    h_weight: Fraction = Fraction(1),
    context_note: str | None = None,
) -> PlanOutcome:
    """One full planning step: sample, score both horizons, select.

    The remaining budget conditions both stages: it is forwarded to the
    policy's sampling and bounds the feasibility filter. Candidate rollouts
    use streams keyed by (seed, candidate index), so the per-candidate
    speculation is order-independent and could run concurrently without
    changing the outcome. With ``uniform_h`` the speculative stage is
    skipped entirely (h = 1/K, empty carried set), which reduces K = 1
    planning to plain policy sampling.
    """
    candidates = sample_candidates(
        policy, history, carried, k, step=step, remaining=remaining, context_note=context_note
    )
    g = short_term_gain(candidates)
    if uniform_h:
        h = [Fraction(1, k)] * k
        feasible = FeasibleSet.empty()
    else:
        base = list(np.atleast_1d(np.asarray(seed, dtype=np.uint64)).tolist())
        buckets = []
        for i, cand in enumerate(candidates.candidates):
            rollouts = speculate(
                cand, prior, profile, n_rollouts, depth_limit, seed=base + [i]
            )
            buckets.append(tuple(filter_feasible(rollouts, remaining)))
        feasible = FeasibleSet(tuple(buckets))
        h = long_term_gain(feasible, k)
    f = tuple(g_weight * gi + h_weight * hi for gi, hi in zip(g, h))
    action, carried_out = select_action(
        candidates, g, h, profile, feasible, g_weight, h_weight
    )
    return PlanOutcome(
        action=action,
        candidates=candidates,
        g=tuple(g),
        h=tuple(h),
        f=f,
        feasible=carried_out,
    )

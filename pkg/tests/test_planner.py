"""Oracle checks for the two-horizon planner.

The gain functions are recomputed here with independent brute-force loops
over the raw rollout data, then compared against the planner's exact
rational outputs. Randomized instances cover K in 1..8.
"""

import time
from decimal import Decimal
from fractions import Fraction

import numpy as np
import pytest

from weaver.core import Action, ActionId, CostProfile, FINISH, ProfileEntry
from weaver.planner import (
    CandidateSet,
    FeasibleSet,
    PolicyFailure,
    SpeculativeTrajectory,
    TransitionPrior,
    cost_trajectory,
    filter_feasible,
    long_term_gain,
    plan_step,
    sample_candidates,
    select_action,
    short_term_gain,
    speculate,
)

AGENTS = [ActionId.agent(n) for n in ("search", "browse", "reason", "critic")]
MODULES = [ActionId.module(n) for n in ("team_a", "team_b", "team_c")]
VOCAB = AGENTS + MODULES


def random_profile(rng) -> CostProfile:
    entries = {}
    for aid in VOCAB + [FINISH]:
        micros = int(rng.integers(100, 50_000))
        entries[aid] = ProfileEntry(Fraction(micros, 10**6), int(rng.integers(1, 9)))
    return CostProfile(entries)


def random_prior(rng) -> TransitionPrior:
    counts = {}
    for a in VOCAB + [FINISH]:
        for b in VOCAB + [FINISH]:
            if rng.random() < 0.3:
                counts[(a, b)] = int(rng.integers(1, 6))
    return TransitionPrior(VOCAB, counts, smoothing=1)


def random_instance(rng, k=None):
    """One planner decision problem: candidates, rollouts, and a budget."""
    k = k or int(rng.integers(1, 9))
    prior = random_prior(rng)
    profile = random_profile(rng)
    picks = rng.integers(0, len(VOCAB), size=k)
    candidates = CandidateSet(
        step=0, candidates=tuple(Action(VOCAB[int(i)], "work") for i in picks)
    )
    remaining = Decimal(int(rng.integers(1_000, 120_000))) / Decimal(10**6)
    seed = int(rng.integers(0, 2**32))
    buckets = []
    for i, cand in enumerate(candidates.candidates):
        rollouts = speculate(cand, prior, profile, n_rollouts=4, depth_limit=5, seed=[seed, i])
        buckets.append(rollouts)
    return candidates, buckets, remaining, profile, seed


class TestTransitionPrior:
    def test_empty_counts_is_uniform(self):
        prior = TransitionPrior(VOCAB)
        dist = prior.next_distribution(AGENTS[0])
        assert len(dist) == len(VOCAB) + 1  # vocabulary plus finish
        assert set(dist.values()) == {Fraction(1, len(VOCAB) + 1)}

    def test_additive_smoothing_exact(self):
        a, b = AGENTS[0], AGENTS[1]
        prior = TransitionPrior([a, b], counts={(a, b): 3}, smoothing=1)
        dist = prior.next_distribution(a)
        assert dist[b] == Fraction(4, 6)
        assert dist[a] == Fraction(1, 6)
        assert dist[FINISH] == Fraction(1, 6)

    def test_distribution_rows_sum_to_one(self):
        rng = np.random.default_rng(0)
        prior = random_prior(rng)
        for aid in prior.vocabulary:
            assert sum(prior.next_distribution(aid).values()) == 1

    def test_from_sequences_ignores_unknown_ids(self):
        ghost = ActionId.agent("ghost")
        seqs = [[AGENTS[0], ghost, AGENTS[1]], [AGENTS[0], AGENTS[1]]]
        prior = TransitionPrior.from_sequences(seqs, [AGENTS[0], AGENTS[1]])
        # only the (search -> browse) transition was countable
        assert prior.next_distribution(AGENTS[0])[AGENTS[1]] == Fraction(2, 4)

    def test_rollout_stops_at_finish_and_depth(self):
        prior = TransitionPrior(VOCAB)
        rng = np.random.default_rng(5)
        for _ in range(50):
            roll = prior.sample_rollout(AGENTS[0], rng, depth_limit=4)
            assert 1 <= len(roll) <= 4
            assert FINISH not in roll[:-1]

    def test_rollout_replays_bit_exact(self):
        prior = TransitionPrior(VOCAB)
        a = prior.sample_rollout(AGENTS[0], np.random.default_rng(99), depth_limit=6)
        b = prior.sample_rollout(AGENTS[0], np.random.default_rng(99), depth_limit=6)
        assert a == b

    def test_smoothing_must_be_positive(self):
        with pytest.raises(ValueError):
            TransitionPrior(VOCAB, smoothing=0)


class TestGainOracles:
    def test_short_and_long_gains_match_brute_force_over_random_instances(self):
        rng = np.random.default_rng(2024)
        start = time.monotonic()
        for trial in range(1000):
            k = trial % 8 + 1
            candidates, buckets, remaining, profile, _ = random_instance(rng, k=k)

            g = short_term_gain(candidates)
            ids = candidates.ids()
            for i in range(k):
                matches = sum(1 for j in range(k) if ids[j] == ids[i])
                assert g[i] == Fraction(matches, k)

            feasible = FeasibleSet(
                tuple(tuple(filter_feasible(b, remaining)) for b in buckets)
            )
            h = long_term_gain(feasible, k)

            bound = Fraction(remaining)
            oracle_counts = []
            for bucket in buckets:
                n_ok = 0
                for traj in bucket:
                    total = Fraction(0)
                    for aid in traj.actions:
                        total += profile.mean(aid)
                    assert total == traj.estimated_cost
                    if total <= bound:
                        n_ok += 1
                oracle_counts.append(n_ok)
            denom = sum(oracle_counts)
            if denom == 0:
                assert h == [Fraction(1, k)] * k
            else:
                assert h == [Fraction(c, denom) for c in oracle_counts]
            assert abs(float(sum(h)) - 1.0) <= 1e-9
        elapsed = time.monotonic() - start
        assert elapsed < 5.0, f"oracle sweep took {elapsed:.2f}s"

    def test_uniform_fallback_when_nothing_is_feasible(self):
        h = long_term_gain([0, 0, 0], 3)
        assert h == [Fraction(1, 3)] * 3

    def test_boundary_cost_is_feasible(self):
        traj = SpeculativeTrajectory((AGENTS[0],), Fraction(25, 1000))
        assert filter_feasible([traj], Decimal("0.025")) == [traj]
        assert filter_feasible([traj], Decimal("0.024999")) == []


class TestFeasibleSet:
    def test_union_dedups_preserving_order(self):
        t1 = SpeculativeTrajectory((AGENTS[0], FINISH), Fraction(1, 100))
        t2 = SpeculativeTrajectory((AGENTS[1], FINISH), Fraction(2, 100))
        fs = FeasibleSet(((t1, t2), (t2, t1)))
        assert fs.union() == (t1, t2)

    def test_action_frequencies_over_distinct_trajectories(self):
        t1 = SpeculativeTrajectory((AGENTS[0], AGENTS[1], FINISH), Fraction(1))
        t2 = SpeculativeTrajectory((AGENTS[0], FINISH), Fraction(2))
        fs = FeasibleSet(((t1,), (t2,)))
        freq = fs.action_frequencies()
        assert freq[AGENTS[0]] == Fraction(2, 2)
        assert freq[AGENTS[1]] == Fraction(1, 2)
        assert freq[FINISH] == Fraction(2, 2)

    def test_empty_has_no_frequencies(self):
        assert FeasibleSet.empty().action_frequencies() == {}


class TestSelection:
    def _profile(self, means):
        return CostProfile(
            {aid: ProfileEntry(Fraction(m, 1000), 1) for aid, m in means.items()}
        )

    def test_argmax_of_f(self):
        a, b = Action(AGENTS[0], "x"), Action(AGENTS[1], "y")
        profile = self._profile({AGENTS[0]: 5, AGENTS[1]: 5})
        action, _ = select_action(
            [a, b], [Fraction(1, 2), Fraction(1, 2)], [Fraction(1, 4), Fraction(3, 4)], profile
        )
        assert action is b

    def test_tie_goes_to_cheaper_mean(self):
        a, b = Action(AGENTS[0], "x"), Action(AGENTS[1], "y")
        profile = self._profile({AGENTS[0]: 9, AGENTS[1]: 3})
        action, _ = select_action(
            [a, b], [Fraction(1, 2)] * 2, [Fraction(1, 2)] * 2, profile
        )
        assert action is b

    def test_full_tie_goes_to_lower_index(self):
        a = Action(AGENTS[0], "x")
        b = Action(AGENTS[0], "y")  # same id, same mean
        profile = self._profile({AGENTS[0]: 7})
        action, _ = select_action(
            [a, b], [Fraction(1)] * 2, [Fraction(1, 2)] * 2, profile
        )
        assert action is a

    def test_weights_change_the_winner(self):
        a, b = Action(AGENTS[0], "x"), Action(AGENTS[1], "y")
        profile = self._profile({AGENTS[0]: 5, AGENTS[1]: 5})
        g = [Fraction(3, 4), Fraction(1, 4)]
        h = [Fraction(0), Fraction(1)]
        g_led, _ = select_action([a, b], g, h, profile, g_weight=Fraction(4), h_weight=Fraction(1))
        h_led, _ = select_action([a, b], g, h, profile, g_weight=Fraction(1), h_weight=Fraction(4))
        assert g_led is a
        assert h_led is b

    def test_monotonicity_and_scale_invariance_over_random_states(self):
        rng = np.random.default_rng(77)
        start = time.monotonic()
        for _ in range(1000):
            candidates, buckets, remaining, profile, _ = random_instance(rng)
            k = candidates.k

            extra = Decimal(int(rng.integers(0, 80_000))) / Decimal(10**6)
            lo = FeasibleSet(tuple(tuple(filter_feasible(b, remaining)) for b in buckets))
            hi = FeasibleSet(
                tuple(tuple(filter_feasible(b, remaining + extra)) for b in buckets)
            )
            for lo_bucket, hi_bucket in zip(lo.per_candidate, hi.per_candidate):
                assert set(lo_bucket) <= set(hi_bucket)

            g = short_term_gain(candidates)
            h = long_term_gain(lo, k)
            base_action, _ = select_action(candidates, g, h, profile)

            factor = Fraction(int(rng.integers(1, 50)), int(rng.integers(1, 50)))
            scaled_profile = profile.scaled(factor)
            scaled_buckets = [
                [SpeculativeTrajectory(t.actions, t.estimated_cost * factor) for t in b]
                for b in buckets
            ]
            scaled_remaining = Fraction(remaining) * factor
            scaled_fs = FeasibleSet(
                tuple(tuple(filter_feasible(b, scaled_remaining)) for b in scaled_buckets)
            )
            assert scaled_fs.counts() == lo.counts()
            scaled_h = long_term_gain(scaled_fs, k)
            assert scaled_h == h
            scaled_action, _ = select_action(candidates, g, scaled_h, scaled_profile)
            assert scaled_action == base_action
        elapsed = time.monotonic() - start
        assert elapsed < 10.0, f"sweep took {elapsed:.2f}s"


class ScriptedPolicy:
    """Returns pre-baked actions; records every sampling call it sees."""

    def __init__(self, batches):
        self.batches = list(batches)
        self.calls = []

    def sample(self, k, history, remaining=None, carried_freq=None, context_note=None):
        self.calls.append(
            {
                "k": k,
                "remaining": remaining,
                "carried_freq": carried_freq,
                "context_note": context_note,
            }
        )
        return list(self.batches.pop(0))[:k]


class TestPlanStep:
    def _fixture(self, rng_seed=1):
        rng = np.random.default_rng(rng_seed)
        return random_prior(rng), random_profile(rng)

    def test_policy_receives_conditioning(self):
        prior, profile = self._fixture()
        batch = [Action(AGENTS[0], "x")] * 3
        policy = ScriptedPolicy([batch])
        t = SpeculativeTrajectory((AGENTS[1], FINISH), Fraction(1, 1000))
        carried = FeasibleSet(((t,),))
        plan_step(
            policy,
            [],
            prior,
            profile,
            remaining=Decimal("0.05"),
            carried=carried,
            k=3,
            context_note="note",
        )
        call = policy.calls[0]
        assert call["k"] == 3
        assert call["remaining"] == Decimal("0.05")
        assert call["carried_freq"] == carried.action_frequencies()
        assert call["context_note"] == "note"

    def test_wrong_candidate_count_is_policy_failure(self):
        prior, profile = self._fixture()
        policy = ScriptedPolicy([[Action(AGENTS[0], "x")]])  # one, not three
        with pytest.raises(PolicyFailure):
            plan_step(policy, [], prior, profile, remaining=Decimal("0.05"), k=3)

    def test_uniform_h_skips_speculation_and_carry(self):
        prior, profile = self._fixture()
        batch = [Action(AGENTS[0], "x"), Action(AGENTS[1], "y"), Action(AGENTS[0], "z")]
        policy = ScriptedPolicy([batch])
        outcome = plan_step(
            policy, [], prior, profile, remaining=Decimal("0.05"), k=3, uniform_h=True
        )
        assert outcome.h == (Fraction(1, 3),) * 3
        assert outcome.feasible == FeasibleSet.empty()
        assert outcome.action.id == AGENTS[0]  # g breaks the uniform-h tie

    def test_plan_replays_bit_exact_for_fixed_seed(self):
        prior, profile = self._fixture()
        batch = [Action(AGENTS[0], "x"), Action(AGENTS[2], "y"), Action(AGENTS[2], "z")]
        outcomes = []
        for _ in range(2):
            policy = ScriptedPolicy([list(batch)])
            outcomes.append(
                plan_step(
                    policy, [], prior, profile, remaining=Decimal("0.06"), seed=[9, 4], k=3
                )
            )
        assert outcomes[0] == outcomes[1]

    def test_per_candidate_rollout_streams_are_index_keyed(self):
        prior, profile = self._fixture()
        # same candidate in slots 0 and 2: identical streams would make their
        # buckets equal only if keyed by index-independent state
        batch = [Action(AGENTS[0], "x"), Action(AGENTS[1], "y"), Action(AGENTS[0], "z")]
        policy = ScriptedPolicy([batch])
        outcome = plan_step(
            policy, [], prior, profile, remaining=Decimal("100"), seed=7, k=3
        )
        direct_0 = speculate(batch[0], prior, profile, seed=[7, 0])
        direct_2 = speculate(batch[2], prior, profile, seed=[7, 2])
        assert tuple(t.actions for t in outcome.feasible.per_candidate[0]) == tuple(
            t.actions for t in direct_0
        )
        assert tuple(t.actions for t in outcome.feasible.per_candidate[2]) == tuple(
            t.actions for t in direct_2
        )

    def test_candidate_set_must_be_non_empty(self):
        with pytest.raises(ValueError):
            CandidateSet(step=0, candidates=())

    def test_cost_trajectory_is_exact_sum(self):
        _, profile = self._fixture()
        actions = (AGENTS[0], AGENTS[1], FINISH)
        assert cost_trajectory(actions, profile) == sum(
            (profile.mean(a) for a in actions), Fraction(0)
        )

    def test_sample_candidates_requires_positive_k(self):
        with pytest.raises(ValueError):
            sample_candidates(ScriptedPolicy([[]]), [], FeasibleSet.empty(), k=0)

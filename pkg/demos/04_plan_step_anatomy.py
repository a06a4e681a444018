"""One planning step, opened up.

Each loop iteration the orchestrator samples K candidate actions, scores
them two ways, and argmaxes the blend:

  g  agreement: the share of the K candidates proposing the same action
  h  budget feasibility: each candidate's share of speculative rollouts
     (symbolic futures priced from the cost profile) that fit the
     remaining budget

Nothing here touches a worker: rollouts walk a learned transition prior
over action ids. Surviving rollouts carry into the next step to bias
sampling toward actions that kept showing up in feasible futures.
"""

from decimal import Decimal
from fractions import Fraction

from weaver.collab import ModuleRegistry, builtin_catalog
from weaver.core import ActionId, CostProfile, FINISH, ProfileEntry
from weaver.orchestrator import default_roster
from weaver.planner import TransitionPrior, plan_step
from weaver.policy import RulePolicy

roster = default_roster()
registry = ModuleRegistry(roster=list(roster))
for module in builtin_catalog("gaia"):
    registry.register(module)
space = [ActionId.agent(n) for n in roster] + [m.id for m in registry.modules()] + [FINISH]

# A hand-written cost profile: cheap agents, one ruinously expensive module.
costly = ActionId.module("three_ensemble_reasoning")
profile = CostProfile(
    {
        aid: ProfileEntry(Fraction(2) if aid == costly else Fraction(3, 1000), 3)
        for aid in space
    }
)

# A prior that has seen search -> browse -> reason -> finish a few times.
walk = [ActionId.agent("search"), ActionId.agent("browse"), ActionId.agent("reason"), FINISH]
prior = TransitionPrior.from_sequences([tuple(walk)] * 5, space)

policy = RulePolicy(seed=3, task_id="case-x", action_space=space, profile=profile)

print("== a plan step under a 4-cent remaining budget ==")
outcome = plan_step(
    policy,
    [],
    prior,
    profile,
    remaining=Decimal("0.04"),
    seed=[3, 0],
    k=4,
    n_rollouts=8,
    depth_limit=5,
)
ids = outcome.candidates.ids()
for i in range(len(ids)):
    print(
        f"  candidate {i}: {str(ids[i]):34s} "
        f"g={outcome.g[i]!s:5s} h={outcome.h[i]!s:6s} f={float(outcome.f[i]):.3f}"
    )
print(f"  chosen: {outcome.action.id}")
print(f"  feasible rollouts per candidate: {outcome.feasible.counts()}")

print("\n== carried frequencies bias the next sample ==")
freq = outcome.feasible.action_frequencies()
for aid, share in sorted(freq.items(), key=lambda kv: -kv[1])[:5]:
    print(f"  {str(aid):34s} appeared in {float(share):.2f} of surviving futures")

# Exact arithmetic end to end: g, h, f are Fractions, so ties and
# boundary cases never depend on float luck.
print("\n== exactness ==")
print(f"  sum(h) == 1: {sum(outcome.h) == Fraction(1)}")
print(f"  types: g {type(outcome.g[0]).__name__}, h {type(outcome.h[0]).__name__}")

print("\n== the K=1 degenerate case ==")
flat = plan_step(
    policy,
    [],
    prior,
    profile,
    remaining=Decimal("0.04"),
    seed=[3, 1],
    k=1,
    n_rollouts=8,
    depth_limit=5,
    uniform_h=True,
)
print(f"  with K=1 and uniform h the planner just takes the policy's pick: {flat.action.id}")
print(f"  g={flat.g} h={flat.h} feasible={flat.feasible.counts()}")

"""A guided tour of the synthetic research world.

Tasks are chains of documents: each hop names the next, and the final
document carries the answer. "lookup" tasks state it outright; "synthesis"
tasks hide it behind a reversed cipher that only the reasoner can decode.
Workers are noisy on purpose (searches miss, reasoning slips), and every
bit of noise replays exactly from the seed.
"""

from weaver.agents import SyntheticWorld, WorldParams, parse_final
from weaver.core import Action, ActionId, HistoryEntry, sum_records
from weaver.orchestrator import default_roster
from weaver.tasks import synthetic_tasks

tasks = synthetic_tasks(seed=42, num_tasks=12)
lookup = next(t for t in tasks if t.meta["kind"] == "lookup")
synthesis = next(t for t in tasks if t.meta["kind"] == "synthesis")

print("== two task flavors ==")
for task in (lookup, synthesis):
    print(f"  {task.id}: kind={task.meta['kind']} hops={len(task.chain)} answer={task.answer!r}")
    print(f"    question: {task.question}")

# A perfect world (p=1 everywhere) keeps the walkthrough readable.
world = SyntheticWorld(tasks, seed=42, params=WorldParams(p_hit=1.0, p_reason=1.0))
roster = default_roster()


def record(history, name, output):
    history.append(
        HistoryEntry(
            step=len(history),
            action=Action(ActionId.agent(name), "demo"),
            output=output,
            cost=sum_records([]),
        )
    )


print(f"\n== hand-driving {synthesis.id} (synthesis) ==")
session = world.session(synthesis.id)
history = []
for hop in range(len(synthesis.chain)):
    out = session.invoke(roster["search"], "find the next archive item", history)
    record(history, "search", out.output)
    print(f"  search: {out.output[:84]}")
    out = session.invoke(roster["browse"], "read the best unread hit", history)
    record(history, "browse", out.output)
    print(f"  browse: {out.output[:84]}")

# Reasoning before the evidence is complete gets pushed back.
early = world.session(synthesis.id).invoke(roster["reason"], "answer now", [])
print(f"  premature reason: {early.output!r}")

out = session.invoke(roster["reason"], "derive the final answer", history)
print(f"  reason: {out.output}")
print(f"  parsed answer: {parse_final(out.output)!r}  (truth: {synthesis.answer!r})")

print("\n== the critic names the gap, never the answer ==")
session = world.session(lookup.id)
out = session.invoke(roster["critic"], "what is missing?", [])
print(f"  critic on an empty record: {out.output}")

print("\n== same seed, same world ==")
replay = SyntheticWorld(tasks, seed=42, params=WorldParams(p_hit=1.0, p_reason=1.0))
a = replay.session(synthesis.id).invoke(roster["search"], "find the next archive item", [])
b = world.session(synthesis.id).invoke(roster["search"], "find the next archive item", [])
print(f"  outputs identical: {a.output == b.output}, usage identical: {a.usage == b.usage}")

print("\n== noise is real at default settings ==")
noisy = SyntheticWorld(tasks, seed=42)  # p_hit=0.55
hits = 0
for lane in range(40):
    out = noisy.session(lookup.id).invoke(
        roster["search"], "find the next archive item", [], lane=f"lane{lane}"
    )
    hits += f"d{lookup.chain[0]:04d}" in out.output
print(f"  first-hop hit rate over 40 lanes: {hits / 40:.2f} (p_hit = 0.55)")

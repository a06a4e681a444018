"""Collaboration modules: teamwork packaged as a single action.

A strategy is a small algebra (Single, Pipeline, Interactive, Ensemble)
over worker agents. Wrapping one in a CollaborationModule gives the
orchestrator a named action; the executor runs the whole tree and only
charges the ledger when the module completes, so a failed module costs
nothing.
"""

from decimal import Decimal

from weaver.agents import SyntheticWorld, WorldParams
from weaver.collab import (
    CollaborationModule,
    Ensemble,
    Interactive,
    ModuleExecutor,
    ModuleRegistry,
    Pipeline,
    Single,
    builtin_catalog,
)
from weaver.core import CostLedger, DEFAULT_PRICES
from weaver.orchestrator import default_roster
from weaver.tasks import synthetic_tasks

print("== the strategy algebra and its signatures ==")
strategies = [
    Single("search"),
    Pipeline((Single("search"), Single("browse"))),
    Interactive(Single("search"), Single("browse")),
    Ensemble(3, Single("reason"), "reason"),
]
for s in strategies:
    print(f"  {s.signature():42s} members={sorted(s.members())}")

print("\n== builtin catalogs ==")
for catalog in ("gaia", "browse"):
    names = [m.name for m in builtin_catalog(catalog)]
    print(f"  {catalog}: {names}")

# Execution: a perfect-accuracy world keeps the traces short.
tasks = synthetic_tasks(seed=7, num_tasks=6)
task = next(t for t in tasks if t.meta["kind"] == "lookup" and len(t.chain) == 2)
world = SyntheticWorld(tasks, seed=7, params=WorldParams(p_hit=1.0, p_reason=1.0, p_agg=1.0))
roster = default_roster()

print(f"\n== running modules on {task.id} ==")
registry = ModuleRegistry(roster=list(roster))
for module in builtin_catalog("gaia"):
    registry.register(module)

for name in ("search_then_browse", "interactive_search_and_browse", "three_ensemble_reasoning"):
    module = registry.get(name)
    ledger = CostLedger(Decimal("1.00"))
    executor = ModuleExecutor(world.session(task.id), roster, ledger, DEFAULT_PRICES)
    result = executor.run(module, f"work the open parts of case {task.id}", [])
    print(f"  {name}")
    print(f"    internal calls: {len(result.records)}  module total: ${result.total.dollars}")
    print(f"    output: {result.output[:90]}")

# All internal records land on the ledger together once the module
# completes; the orchestrator then logs the module as a single step
# costing result.total.
ledger = CostLedger(Decimal("1.00"))
executor = ModuleExecutor(world.session(task.id), roster, ledger, DEFAULT_PRICES)
result = executor.run(registry.get("ensemble_search"), "find the lead document", [])
print(f"\n== charging discipline ==")
print(f"  ensemble_search made {len(result.records)} worker calls")
print(f"  ledger entries: {len(ledger.entries)}  ledger total: ${ledger.total()}")
print(f"  module total matches: {ledger.total() == result.total.dollars}")

print("\n== structural dedup ==")
dup = CollaborationModule("renamed_pipeline", Pipeline((Single("search"), Single("browse"))))
returned = registry.register(dup)
print(f"  registering a renamed duplicate returns: {returned.name!r}")
print(f"  registry size unchanged: {len(registry)} modules")

"""Where the dollars come from: token pricing and the run ledger.

Every executed action produces a CostRecord priced from a per-model sheet
at 6-decimal precision. A CostLedger accumulates records against a fixed
budget; nothing in the engine ever works with floats when money moves.
"""

from decimal import Decimal

from weaver.core import (
    CostLedger,
    DEFAULT_PRICES,
    TokenUsage,
    as_dollars,
    price_cost,
)

print("== the price sheet ==")
for model in ("claude-3-5-haiku-latest", "claude-3-7-sonnet-latest", "qwen3-32b"):
    price = DEFAULT_PRICES.get(model)
    print(f"  {model:28s} in ${price.input_per_1k}/1k  out ${price.output_per_1k}/1k")

print("\n== pricing a call exactly ==")
record = price_cost(TokenUsage(1000, 1000), "claude-3-7-sonnet-latest")
print(f"  1000 in + 1000 out on sonnet -> ${record.dollars}")
record = price_cost(TokenUsage(2000, 500), "claude-3-5-haiku-latest")
print(f"  2000 in +  500 out on haiku  -> ${record.dollars}")

# as_dollars is the single quantization point: 6 places, banker's rounding.
print("\n== quantization ==")
for raw in ("0.0000005", "0.0000015", "0.1234567"):
    print(f"  as_dollars({raw}) = {as_dollars(raw)}")

print("\n== a ledger under a 2-cent budget ==")
ledger = CostLedger(Decimal("0.02"))
for usage in (TokenUsage(900, 120), TokenUsage(1400, 300), TokenUsage(2500, 800)):
    rec = price_cost(usage, "claude-3-5-haiku-latest")
    ledger.charge(rec)
    print(
        f"  charged ${rec.dollars}  total ${ledger.total()}  "
        f"remaining ${ledger.remaining()}"
    )
print(f"  overshoot? {ledger.overshoot}")

# The ledger never blocks a charge: the orchestrator checks remaining()
# *before* acting, so the worst case is one final action past the line.
big = price_cost(TokenUsage(4000, 2000), "claude-3-7-sonnet-latest")
ledger.charge(big)
print(f"  after one oversized action: total ${ledger.total()}, overshoot? {ledger.overshoot}")

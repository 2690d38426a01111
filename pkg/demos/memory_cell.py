# ---
# jupyter:
#   jupytext:
#     text_representation:
#       extension: .py
#       format_name: light
#   kernelspec:
#     display_name: Python 3
#     language: python
#     name: python3
# ---

# # A redundant memory cell
#
# The nominal model is a one-bit memory with a periodic refresh.  The
# implementation stores the bit three times and reads by majority; a fault
# flips one copy.  We ask two questions: does the implementation mask its
# faults, and if not, how many ticks does it survive on average?

# +
from pmask.corpus import model_path
from pmask.lang import load
from pmask.game import build, stats
from pmask.masking import decide_masking
from pmask.fairness import decide_asf
from pmask.measure import MeasureConfig, measure
# -

nominal = load(model_path("mem_nominal.pm"), {"p": "1/2"})
faulty = load(model_path("mem_faulty3.pm"), {"p": "1/2", "q": "1/2"})
limited = load(model_path("mem_faulty3_limited.pm"))
print(nominal.state_count, faulty.state_count, limited.state_count)

# With at most one fault between refreshes the majority vote always recovers,
# so the game finds a masking relation.

res = decide_masking(nominal, limited)
print("masking:", res.verdict)
for s, t in sorted(res.relation)[:6]:
    print(" ", nominal.label(s), "~", limited.label(t))

# Without the limit two faults can accumulate and the Refuter wins.  The trace
# walks down the attractor levels until the error vertex.

res = decide_masking(nominal, faulty)
print("masking:", res.verdict)
for v in res.trace:
    print(f"  [{res.levels[v]}] {res.graph.describe(v)}")

# The game graph stays small: one Refuter vertex per reachable state pair plus
# the Verifier and probabilistic vertices hanging off it.

g = build(nominal, faulty)
stats(g)

# Under fair play the Refuter eventually breaks the cell, so the metric is
# defined.  Counting ticks gives the expected lifetime, counting refreshes the
# expected number of refresh cycles.

print("almost-sure failing:", decide_asf(g).asf)
for ms in ("tick", "rfsh"):
    r = measure(nominal, faulty, MeasureConfig(frozenset({(ms, 2)})), graph=g)
    print(f"{ms:>5}: {r.value:.2f}  (iterations {r.iters}, bound u={r.u_used:g})")

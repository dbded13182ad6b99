"""Scaling and memory of the detection walk against the full fill.

Prints pivot counts for growing cutoffs together with fitted log-log slopes,
then the off-diagonal buffer size at the end of each photon-sum step.
"""

from fockwalk import bench

M = 3
rows = bench.run_bench(M, [4, 6, 8], ["alg1", "naive"])
for row in rows:
    print(f"{row.strategy:6s} C={row.C:2d}  pivots {row.pivots:8d}  peak bytes {row.peak_bytes}")
for name, slope in bench.fit_slopes(rows).items():
    print(f"slope {name}: {slope:.2f}")

res = bench.buffer_curve(M, 6)
print("stored off-diagonal amplitudes at the end of each step:")
print(" ".join(str(res.history[e]) for e in res.step_ends))

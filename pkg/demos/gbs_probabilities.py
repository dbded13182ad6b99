"""Photon-number statistics of a lossy squeezed interferometer.

Runs the detection walk with and without eviction and checks that both give
the probabilities of the full density-matrix fill, at a fraction of its memory.
"""

import numpy as np

from fockwalk import CircuitSpec, Local, build_complex_state, fill_full, to_density_params
from fockwalk.bench import random_unitary
from fockwalk.gbs import run_gbs

M, C = 3, 5
spec = CircuitSpec(
    modes=M,
    squeeze_params=[(0.5, 0.0), (0.4, 0.7), (0.3, 1.9)],
    interferometer=random_unitary(M, np.random.default_rng(11)),
    loss_transmissivity=[0.85] * M,
    displacements=[0.2, 0.0, -0.1j],
    cutoffs=[C] * M,
)
params = to_density_params(build_complex_state(spec))

plain = run_gbs(params, spec.cutoffs, buffered=False)
buffered = run_gbs(params, spec.cutoffs)
full = fill_full(params, Local(spec.cutoffs)).tensor
diag = full[tuple(np.indices((C,) * M)[j] for j in range(M) for _ in (0, 1))]

print(f"patterns          {plain.probabilities.size}")
print(f"mass below cutoff {plain.probabilities.sum():.6f}")
print(f"max |p - full|    {np.max(np.abs(plain.probabilities - diag)):.2e}")
print(f"pivots applied    {plain.pivots_applied} (full fill touches {full.size} cells)")
print(f"peak bytes        {plain.peak_buffer_bytes} unbuffered, {buffered.peak_buffer_bytes} buffered")

top = np.argsort(plain.probabilities, axis=None)[::-1][:5]
for flat in top:
    n = np.unravel_index(flat, plain.probabilities.shape)
    print("  p", tuple(int(x) for x in n), f"= {plain.probabilities[n]:.5f}")

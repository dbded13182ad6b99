"""Heralding a non-Gaussian state.

A squeezed mode leaks a tenth of its light into a vacuum mode, which is then
detected. An odd photon count in the detected mode leaves the kept mode with a
negative Wigner value at the origin, which no Gaussian state has.
"""

import numpy as np

from fockwalk import CircuitSpec, build_complex_state, to_density_params
from fockwalk.conditional import run_conditional

t = np.sqrt(0.9)
spec = CircuitSpec(
    modes=2,
    squeeze_params=[(0.7, 0.0), (0.0, 0.0)],
    interferometer=np.array([[t, -np.sqrt(1 - t**2)], [np.sqrt(1 - t**2), t]]),
    loss_transmissivity=[1.0, 1.0],
    cutoffs=[12, 4],
)
params = to_density_params(build_complex_state(spec))
batch = run_conditional(params, spec.cutoffs, undetected=[1])

for (n,), p, rho in batch.records():
    rho = rho / p
    parity = np.real(np.sum(np.diag(rho) * (-1.0) ** np.arange(len(rho))))
    print(f"herald n={n}  p={p:.4f}  W(0) = {parity / np.pi:+.4f}  purity {np.real(np.trace(rho @ rho)):.4f}")

print(f"fine pivots {batch.fine_pivots}, of which step 1: {batch.step1_pivots}")

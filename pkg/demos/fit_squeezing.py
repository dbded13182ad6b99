"""Tuning a circuit parameter with exact amplitude gradients.

Gradient ascent on the squeezing of mode 1 to maximise the probability of the
pattern (1, 1) behind a balanced beam splitter. The walk returns derivatives
with respect to the recurrence parameters (A, b); the chain rule to the
squeezing magnitude uses a finite-difference derivative of (A, b, G0) alone,
which is cheap because it involves no Fock-space work.
"""

import numpy as np

from fockwalk import CircuitSpec, build_complex_state, to_density_params
from fockwalk.grad import chain_rule, run_gbs_with_grad

BS = np.array([[1, -1], [1, 1]]) / np.sqrt(2)
TARGET, CUT = (1, 1), (4, 4)


def params(r):
    spec = CircuitSpec(modes=2, squeeze_params=[(r, 0.0), (0.5, np.pi)], interferometer=BS,
                       loss_transmissivity=[0.95, 0.95], cutoffs=list(CUT))
    return to_density_params(build_complex_state(spec))


def prob_and_grad(r, h=1e-6):
    d, dp, dm = params(r), params(r + h), params(r - h)
    res = run_gbs_with_grad(d, CUT)
    dA, db, dG0 = (dp.A - dm.A) / (2 * h), (dp.b - dm.b) / (2 * h), (dp.G0 - dm.G0) / (2 * h)
    dp_dr = chain_rule(res.diagonal, res, d.G0, dA, db, dG0)
    return res.diagonal[TARGET].real, dp_dr[TARGET].real


r = 0.1
for step in range(12):
    p, g = prob_and_grad(r)
    print(f"step {step:2d}  r = {r:.4f}  p{TARGET} = {p:.6f}  dp/dr = {g:+.5f}")
    r += 2.0 * g

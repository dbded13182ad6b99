from math import sqrt

import numpy as np
import pytest

from fockwalk.gaussian_core import (
    CircuitSpec,
    ComplexGaussianState,
    GaussianData,
    Representation,
    ValidationError,
    build_complex_state,
    to_density_params,
    to_statevector_params,
)
from fockwalk.lattice import GlobalWeight, Local, ProbabilityMass, SchedulerError
from fockwalk.vanilla import (
    apply_pivot,
    apply_pivot_no_displacement,
    count_full_pivots,
    fill_by_pivots,
    fill_full,
    hypercross_step,
)

from oracles import fock_density_matrix, paired_tensor, random_spec, squeezed_amplitude, thermal_p


def thermal(nbar=1.0):
    return to_density_params(ComplexGaussianState.thermal([nbar]))


def squeezed(r, modes=1):
    spec = CircuitSpec(modes=modes, squeeze_params=[(r, 0.0)] * modes, interferometer=np.eye(modes),
                       loss_transmissivity=[1.0] * modes, cutoffs=[8] * modes)
    return to_statevector_params(build_complex_state(spec))


def diag_of(tensor, M):
    C = tensor.shape[0]
    idx = np.indices((C,) * M).reshape(M, -1)
    full = tuple(x for j in range(M) for x in (idx[j], idx[j]))
    return tensor[full].reshape((C,) * M)


def test_hypercross_groups():
    step = hypercross_step((1, 0, 2), Local((3, 3, 3)))
    assert step.read == ((0, 0, 2), (1, 0, 1))
    assert step.write == ((2, 0, 2), (1, 1, 2))
    assert all(sum(t) == 4 for t in step.write)


def test_vacuum_pivot_writes_b_times_g0():
    b = np.array([0.3, -0.2j])
    p = GaussianData(np.zeros((2, 2)), b, 0.8, Representation.STATE_VECTOR, 2)
    store = {(0, 0): 0.8}
    apply_pivot(p, store, (0, 0), Local((3, 3)))
    assert store[(1, 0)] == pytest.approx(0.3 * 0.8)
    assert store[(0, 1)] == pytest.approx(-0.2j * 0.8)


def test_thermal_single_pivot():
    p = thermal(1.0)
    store = {(0, 0): p.G0}
    apply_pivot(p, store, (0, 0), Local((4,)))
    apply_pivot(p, store, (1, 0), Local((4,)))
    assert store[(1, 1)] == pytest.approx(0.25, abs=1e-15)


def test_missing_read_raises():
    p = thermal(1.0)
    with pytest.raises(SchedulerError):
        apply_pivot(p, {(1, 1): 0.25}, (1, 1), Local((4,)))


def test_no_displacement_rejects_b():
    p = GaussianData(np.zeros((1, 1)), np.ones(1), 1.0, Representation.STATE_VECTOR, 1)
    with pytest.raises(ValidationError):
        apply_pivot_no_displacement(p, {(0,): 1.0}, (0,), Local((3,)))


def test_squeezed_pivots_follow_expansion():
    r = 0.5
    p = squeezed(r)
    store = {(0,): p.G0}
    for k in range(6):
        apply_pivot(p, store, (k,), Local((7,)))
    for k in range(7):
        assert store[(k,)] == pytest.approx(squeezed_amplitude(r, k), abs=1e-14)


def test_vacuum_density_fill():
    t = fill_full(to_density_params(ComplexGaussianState.vacuum(1)), Local((3,))).tensor
    assert np.array_equal(t, np.diag([1.0, 0, 0]).astype(complex))


def test_thermal_density_fill():
    t = fill_full(thermal(1.0), Local((4,))).tensor
    assert np.allclose(np.diag(t), [0.5, 0.25, 0.125, 0.0625], atol=1e-15)
    assert np.count_nonzero(t - np.diag(np.diag(t))) == 0
    for nbar in (0.3, 2.0):
        t = fill_full(thermal(nbar), Local((12,))).tensor
        assert np.max(np.abs(np.diag(t) - [thermal_p(nbar, n) for n in range(12)])) < 1e-14


def test_probability_mass_stop():
    fill = fill_full(thermal(1.0), ProbabilityMass(0.999))
    assert fill.stop_photons == 9
    assert np.real(np.trace(fill.tensor)) == pytest.approx(1 - 2**-10, abs=1e-14)


def test_probability_mass_state_vector():
    r = 0.7
    fill = fill_full(squeezed(r), ProbabilityMass(0.99))
    mass = np.cumsum([squeezed_amplitude(r, k) ** 2 for k in range(60)])
    assert fill.stop_photons == int(np.argmax(mass >= 0.99))


def test_probability_mass_gives_up_loudly():
    with pytest.raises(ValidationError):
        fill_full(thermal(50.0), ProbabilityMass(0.999, max_photons=20))


@pytest.mark.parametrize("seed", range(3))
def test_single_mode_against_fock_oracle(seed):
    rng = np.random.default_rng(seed)
    spec = random_spec(rng, 1, [8], r_max=0.8, displaced=True)
    want = paired_tensor(fock_density_matrix(spec, 60), 1, 60, 8)
    got = fill_full(to_density_params(build_complex_state(spec)), Local((8,))).tensor
    assert np.max(np.abs(got - want)) < 1e-10


def test_two_mode_against_fock_oracle():
    rng = np.random.default_rng(5)
    spec = random_spec(rng, 2, [4, 4], displaced=True)
    want = paired_tensor(fock_density_matrix(spec, 30), 2, 30, 4)
    got = fill_full(to_density_params(build_complex_state(spec)), Local((4, 4))).tensor
    assert np.max(np.abs(got - want)) < 1e-10


def test_state_vector_phase_against_fock_oracle():
    rng = np.random.default_rng(9)
    spec = random_spec(rng, 2, [5, 5], etas=(1.0,), displaced=True)
    psi = fill_full(to_statevector_params(build_complex_state(spec)), Local((5, 5))).tensor
    rho = paired_tensor(fock_density_matrix(spec, 30), 2, 30, 5)
    outer = np.einsum("ij,kl->ikjl", psi, psi.conj())
    assert np.max(np.abs(outer - rho)) < 1e-10


def test_full_fill_matches_pivot_by_pivot():
    rng = np.random.default_rng(1)
    for displaced in (False, True):
        d = to_density_params(build_complex_state(random_spec(rng, 2, [3, 3], displaced=displaced)))
        t = fill_full(d, Local((3, 3))).tensor
        store = fill_by_pivots(d, Local((3, 3)))
        for k, v in store.items():
            assert abs(t[k] - v) < 1e-14


def test_pure_density_equals_outer_product():
    rng = np.random.default_rng(2)
    spec = random_spec(rng, 2, [4, 4], etas=(1.0,), displaced=True)
    st = build_complex_state(spec)
    psi = fill_full(to_statevector_params(st), Local((4, 4))).tensor
    rho = fill_full(to_density_params(st), Local((4, 4))).tensor
    assert np.max(np.abs(np.einsum("ij,kl->ikjl", psi, psi.conj()) - rho)) < 1e-10


def test_global_weight_agrees_with_local():
    rng = np.random.default_rng(3)
    d = to_density_params(build_complex_state(random_spec(rng, 2, [4, 4], displaced=True)))
    loc = fill_full(d, Local((4, 4))).tensor
    glob = fill_full(d, GlobalWeight(6)).tensor
    for k in np.ndindex(*loc.shape):
        if sum(k) < 6:
            assert abs(loc[k] - glob[k]) < 1e-14


def test_fast_path_parity_and_count():
    p = squeezed(0.6)
    fast = fill_full(p, Local((10,)))
    slow = fill_full(p, Local((10,)), fast=False)
    assert np.max(np.abs(fast.tensor - slow.tensor)) < 1e-14
    assert not np.any(fast.tensor[1::2])
    assert abs(fast.pivots - slow.pivots / 2) <= 1


def test_beamsplitter_odd_amplitudes_are_exactly_zero():
    bs = np.array([[1, 1], [1, -1]]) / sqrt(2)
    spec = CircuitSpec(modes=2, squeeze_params=[(0.4, 0), (0.3, 1.0)], interferometer=bs,
                       loss_transmissivity=[1, 1], cutoffs=[6, 6])
    psi = fill_full(to_statevector_params(build_complex_state(spec)), Local((6, 6))).tensor
    ref = fill_by_pivots(to_statevector_params(build_complex_state(spec)), Local((6, 6)))
    for k in np.ndindex(6, 6):
        if sum(k) % 2:
            assert psi[k] == 0
        else:
            assert abs(psi[k] - ref[k]) < 1e-14


@pytest.mark.parametrize("threads", [2, 5])
def test_threads_are_bit_identical(threads):
    rng = np.random.default_rng(4)
    d = to_density_params(build_complex_state(random_spec(rng, 2, [5, 5], displaced=True)))
    a = fill_full(d, Local((5, 5))).tensor
    b = fill_full(d, Local((5, 5)), threads=threads).tensor
    assert a.tobytes() == b.tobytes()


def test_count_full_pivots_matches_walk():
    rng = np.random.default_rng(6)
    d = to_density_params(build_complex_state(random_spec(rng, 2, [3, 4], displaced=True)))
    assert fill_full(d, Local((3, 4))).pivots == count_full_pivots((3, 3, 4, 4))


def test_cutoff_of_one_forces_vacuum():
    rng = np.random.default_rng(7)
    d = to_density_params(build_complex_state(random_spec(rng, 2, [1, 4], displaced=True)))
    t = fill_full(d, Local((1, 4))).tensor
    assert t.shape == (1, 1, 4, 4)
    assert np.all(np.isfinite(t))

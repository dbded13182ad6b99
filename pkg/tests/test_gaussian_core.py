import json
from math import cosh, sqrt, tanh

import numpy as np
import pytest

from fockwalk.gaussian_core import (
    CircuitSpec,
    ComplexGaussianState,
    DegenerateStateError,
    GaussianData,
    GlobalPhotons,
    PurityError,
    Representation,
    ValidationError,
    build_complex_state,
    density_from_statevector_params,
    permute_modes,
    spec_from_json,
    spec_to_json,
    to_density_params,
    to_statevector_params,
)
from fockwalk.lattice import Local, ProbabilityMass

from oracles import lossy_squeezed_mean_photons, random_spec


def single_mode(r=0.0, phi=0.0, eta=1.0, alpha=0j, C=4):
    return CircuitSpec(
        modes=1, squeeze_params=[(r, phi)], interferometer=np.eye(1),
        loss_transmissivity=[eta], cutoffs=[C], displacements=[alpha],
    )


def quadrature_cov(state):
    M = state.modes
    W = np.block([[np.eye(M), 1j * np.eye(M)], [np.eye(M), -1j * np.eye(M)]]) / sqrt(2)
    return (W.conj().T @ state.sigma @ W).real


def test_vacuum_is_fixed_point():
    st = build_complex_state(single_mode())
    assert np.allclose(st.sigma, 0.5 * np.eye(2), atol=0)
    assert not np.any(st.mu)


def test_lossless_squeezing_stays_pure():
    st = build_complex_state(single_mode(r=0.8, phi=1.1))
    assert np.linalg.det(2 * quadrature_cov(st)) == pytest.approx(1.0, abs=1e-12)
    assert st.purity == pytest.approx(1.0, abs=1e-12)


def test_lossy_squeezer_mean_photon_number():
    st = build_complex_state(single_mode(r=1.0, eta=0.5))
    nbar = st.sigma[0, 0].real - 0.5
    assert nbar == pytest.approx(lossy_squeezed_mean_photons(1.0, 0.5), abs=1e-12)
    assert nbar == pytest.approx(0.690, abs=1e-3)


def test_hermiticity_survives_every_channel():
    rng = np.random.default_rng(3)
    for _ in range(5):
        st = build_complex_state(random_spec(rng, 3, [3, 3, 3], displaced=True))
        assert np.max(np.abs(st.sigma - st.sigma.conj().T)) < 1e-12


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(interferometer=np.array([[1, 1], [0, 1]])),
        dict(loss_transmissivity=[1.2, 1.0]),
        dict(cutoffs=[0, 3]),
        dict(detected_modes=[3]),
    ],
)
def test_spec_validation(kwargs):
    base = dict(modes=2, squeeze_params=[(0.1, 0)] * 2, interferometer=np.eye(2),
                loss_transmissivity=[1.0, 1.0], cutoffs=[3, 3])
    base.update(kwargs)
    with pytest.raises(ValidationError):
        CircuitSpec(**base)


def test_vacuum_density_params():
    d = to_density_params(ComplexGaussianState.vacuum(2))
    assert not np.any(d.A) and not np.any(d.b)
    assert d.G0 == 1.0
    assert d.representation is Representation.DENSITY_MATRIX and d.D == 4


def test_thermal_density_params():
    d = to_density_params(ComplexGaussianState.thermal([1.0]))
    assert np.allclose(d.A, [[0, 0.5], [0.5, 0]], atol=1e-15)
    assert not np.any(d.b)
    assert d.G0 == pytest.approx(0.5, abs=1e-12)


@pytest.mark.parametrize("nbar", [0.1, 0.7, 3.0])
def test_thermal_vacuum_component(nbar):
    assert to_density_params(ComplexGaussianState.thermal([nbar])).G0 == pytest.approx(1 / (nbar + 1), abs=1e-12)


def test_coherent_density_params():
    alpha = 0.4 - 0.3j
    st = ComplexGaussianState.coherent([alpha])
    d = to_density_params(st)
    assert np.allclose(d.A, 0, atol=1e-15)
    # Fock order is (bra, ket): b = (alpha, alpha*)
    assert np.allclose(d.b, [alpha, np.conj(alpha)], atol=1e-15)
    assert d.G0 == pytest.approx(np.exp(-abs(alpha) ** 2), abs=1e-12)


def test_singular_sigma_plus_is_degenerate():
    sigma = np.diag([0.5, -0.5]).astype(complex)
    with pytest.raises(DegenerateStateError):
        to_density_params(ComplexGaussianState(sigma, np.zeros(2)))


def test_zero_displacement_gives_exact_zero_b():
    rng = np.random.default_rng(0)
    d = to_density_params(build_complex_state(random_spec(rng, 3, [3] * 3)))
    assert np.array_equal(d.b, np.zeros(6))


def test_statevector_vacuum():
    p = to_statevector_params(build_complex_state(single_mode()))
    assert not np.any(p.A) and not np.any(p.b) and p.G0 == 1.0


def test_statevector_squeezed():
    p = to_statevector_params(build_complex_state(single_mode(r=0.5)))
    assert p.A[0, 0] == pytest.approx(tanh(0.5), abs=1e-12)
    assert p.A[0, 0].real == pytest.approx(0.4621, abs=1e-4)
    assert p.G0 == pytest.approx(1 / sqrt(cosh(0.5)), abs=1e-12)


def test_squeezing_phase_convention():
    p = to_statevector_params(build_complex_state(single_mode(r=0.3, phi=0.9)))
    assert p.A[0, 0] == pytest.approx(np.exp(0.9j) * tanh(0.3), abs=1e-12)


def test_statevector_rejects_mixed_state():
    with pytest.raises(PurityError):
        to_statevector_params(build_complex_state(single_mode(r=0.5, eta=0.9)))


def test_density_is_direct_sum_of_statevector():
    rng = np.random.default_rng(11)
    for _ in range(5):
        spec = random_spec(rng, 2, [3, 3], etas=(1.0,), displaced=True)
        st = build_complex_state(spec)
        rho = to_density_params(st)
        psi = to_statevector_params(st)
        rebuilt = density_from_statevector_params(psi)
        assert np.max(np.abs(rebuilt.A - rho.A)) < 1e-12
        assert np.max(np.abs(rebuilt.b - rho.b)) < 1e-12
        assert abs(rebuilt.G0 - rho.G0) < 1e-12
        # bra entries carry the conjugate of the ket block
        assert np.max(np.abs(rho.A[0::2, 0::2] - rho.A[1::2, 1::2].conj())) < 1e-12


def test_unphysical_data_is_flagged_not_fatal():
    with pytest.warns(UserWarning):
        d = GaussianData(np.eye(1) * 1.5, np.zeros(1), 1.0, Representation.STATE_VECTOR, 1)
    assert "unphysical" in d.flags


def test_shape_mismatch_is_rejected():
    with pytest.raises(ValidationError):
        GaussianData(np.zeros((2, 2)), np.zeros(2), 1.0, Representation.DENSITY_MATRIX, 2)


def test_permute_modes_moves_index_pairs():
    rng = np.random.default_rng(2)
    d = to_density_params(build_complex_state(random_spec(rng, 3, [2] * 3, displaced=True)))
    p = permute_modes(d, [2, 0, 1])
    assert np.array_equal(p.A[0:2, 0:2], d.A[4:6, 4:6])
    assert np.array_equal(p.b[2:4], d.b[0:2])


def test_json_round_trip():
    rng = np.random.default_rng(4)
    spec = random_spec(rng, 2, [3, 4], displaced=True, detected=[2])
    again = spec_from_json(json.dumps(spec_to_json(spec)))
    assert again.detected_modes == (2,)
    assert np.allclose(again.interferometer, spec.interferometer, atol=0)
    assert again.displacements == spec.displacements
    assert again.cutoff_mode == Local((3, 4))


def test_json_cutoff_modes():
    base = spec_to_json(single_mode())
    base["cutoff_mode"] = {"GlobalPhotons": 5}
    assert spec_from_json(base).cutoff_mode == GlobalPhotons(5)
    base["cutoff_mode"] = {"ProbabilityMass": 0.99}
    assert spec_from_json(base).cutoff_mode == ProbabilityMass(0.99)
    base["cutoff_mode"] = "Bogus"
    with pytest.raises(ValidationError):
        spec_from_json(base)


def test_json_missing_field():
    obj = spec_to_json(single_mode())
    del obj["interferometer"]
    with pytest.raises(ValidationError):
        spec_from_json(obj)


def test_displacement_sets_mean_photons():
    st = build_complex_state(single_mode(alpha=0.6 + 0.2j))
    assert st.mu[0] == pytest.approx(0.6 + 0.2j, abs=1e-15)
    assert st.mu[1] == pytest.approx(0.6 - 0.2j, abs=1e-15)
    assert st.sigma[0, 0].real - 0.5 == pytest.approx(0.0, abs=1e-15)

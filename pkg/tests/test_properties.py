import json
from itertools import product

import numpy as np
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from fockwalk.conditional import run_conditional
from fockwalk.gaussian_core import (
    build_complex_state,
    density_from_statevector_params,
    spec_from_json,
    spec_to_json,
    to_density_params,
    to_statevector_params,
)
from fockwalk.gbs import plan_pivots, pivot_count_local, run_gbs
from fockwalk.grad import contract_upstream, run_gbs_with_grad
from fockwalk.lattice import BufferedStore, GlobalWeight, Local, indices_of_weight, offset_type, split_diagonal
from fockwalk.tensor_io import read_tensor, write_tensor
from fockwalk.vanilla import fill_full

from oracles import random_spec

FAST = settings(max_examples=25, deadline=None, suppress_health_check=[HealthCheck.too_slow])

seeds = st.integers(0, 2**32 - 1)
small_cutoffs = st.lists(st.integers(1, 4), min_size=1, max_size=3)


def circuit(seed, cut, **kw):
    return random_spec(np.random.default_rng(seed), len(cut), tuple(cut), **kw)


def diag_slice(tensor, M):
    C = tensor.shape[::2]
    idx = np.indices(C).reshape(M, -1)
    return tensor[tuple(x for j in range(M) for x in (idx[j], idx[j]))].reshape(C)


@FAST
@given(st.lists(st.integers(1, 4), min_size=1, max_size=4))
def test_weights_partition_local_lattice(upper):
    seen = [k for w in range(sum(upper)) for k in indices_of_weight(w, Local(tuple(upper)))]
    assert len(seen) == len(set(seen))
    assert set(seen) == set(product(*(range(u) for u in upper)))
    assert all(sum(k) == w for w in range(sum(upper)) for k in indices_of_weight(w, Local(tuple(upper))))


@FAST
@given(st.integers(1, 3), st.integers(1, 6))
def test_weights_partition_global_lattice(D, w_max):
    seen = [k for w in range(w_max + 2) for k in indices_of_weight(w, GlobalWeight(w_max), D=D)]
    assert len(seen) == len(set(seen))
    assert set(seen) == {k for k in product(range(w_max), repeat=D) if sum(k) < w_max}


@FAST
@given(st.lists(st.integers(0, 4), min_size=2, max_size=6).filter(lambda x: len(x) % 2 == 0))
def test_split_diagonal_reconstructs(k):
    diag, offset = split_diagonal(k)
    assert all(o >= 0 for o in offset)
    assert tuple(diag[i // 2] + o for i, o in enumerate(offset)) == tuple(k)
    assert min(offset[0::2] + offset[1::2]) >= 0


@FAST
@given(st.lists(st.tuples(st.integers(1, 2), st.integers(1, 3)), min_size=1, max_size=12))
def test_store_evicts_after_planned_reads(entries):
    s = BufferedStore((4, 4))
    keys = []
    for i, (a, reads) in enumerate(entries):
        k = (a, 0, i % 3, i % 3)
        if any(k == seen for seen, _ in keys):
            continue
        s.write(k, complex(i), reads=reads)
        keys.append((k, reads))
    for k, reads in keys:
        for _ in range(reads):
            assert k in s
            s.read(k)
        assert k not in s
    assert s.n_offdiag == 0 and s.peak_offdiag <= len(keys)


@settings(max_examples=15, deadline=None)
@given(seeds, st.lists(st.integers(1, 3), min_size=1, max_size=2), st.booleans())
def test_density_fill_is_hermitian_psd(seed, cut, displaced):
    M = len(cut)
    d = to_density_params(build_complex_state(circuit(seed, cut, displaced=displaced)))
    t = fill_full(d, Local(tuple(cut))).tensor
    n = int(np.prod(cut))
    order = [2 * j for j in range(M)] + [2 * j + 1 for j in range(M)]
    rho = np.transpose(t, order).reshape(n, n)
    assert np.max(np.abs(rho - rho.conj().T)) < 1e-12
    assert np.min(np.linalg.eigvalsh(rho)) > -1e-9
    assert np.trace(rho).real <= 1 + 1e-10
    assert np.min(np.diag(rho).real) >= -1e-14


@settings(max_examples=15, deadline=None)
@given(seeds, small_cutoffs, st.booleans(), st.booleans())
def test_detection_equals_full_fill(seed, cut, displaced, buffered):
    cut = tuple(cut)
    d = to_density_params(build_complex_state(circuit(seed, cut, displaced=displaced)))
    full = diag_slice(fill_full(d, Local(cut)).tensor, len(cut))
    res = run_gbs(d, cut, buffered=buffered)
    assert np.max(np.abs(res.probabilities - full)) < 1e-10
    if buffered:
        assert res.final_offdiag == 0


@settings(max_examples=10, deadline=None)
@given(seeds, st.lists(st.integers(1, 3), min_size=2, max_size=3), st.data())
def test_conditional_traces_equal_marginals(seed, cut, data):
    cut = tuple(cut)
    M = len(cut)
    und = data.draw(st.integers(1, M))
    d = to_density_params(build_complex_state(circuit(seed, cut, displaced=True)))
    batch = run_conditional(d, cut, [und])
    marg = run_gbs(d, cut).probabilities.sum(axis=und - 1)
    assert np.max(np.abs(batch.probabilities() - marg)) < 1e-10


@FAST
@given(st.lists(st.integers(2, 5), min_size=1, max_size=3))
def test_pivot_count_formula(cut):
    assert plan_pivots(len(cut), cut).pivot_count == pivot_count_local(cut)


@FAST
@given(seeds, st.lists(st.integers(2, 4), min_size=1, max_size=3), st.booleans())
def test_spec_json_round_trip(seed, cut, displaced):
    spec = circuit(seed, cut, displaced=displaced)
    again = spec_from_json(json.dumps(spec_to_json(spec)))
    assert json.dumps(spec_to_json(again)) == json.dumps(spec_to_json(spec))


@FAST
@given(seeds, st.lists(st.integers(2, 4), min_size=1, max_size=2))
def test_pure_density_is_direct_sum(seed, cut):
    st_ = build_complex_state(circuit(seed, cut, etas=(1.0,), displaced=True))
    a, b = to_density_params(st_), density_from_statevector_params(to_statevector_params(st_))
    assert np.max(np.abs(a.A - b.A)) < 1e-12 and np.max(np.abs(a.b - b.b)) < 1e-12
    assert abs(a.G0 - b.G0) < 1e-12


@settings(max_examples=10, deadline=None)
@given(seeds, st.integers(1, 2), st.integers(3, 7))
def test_global_fill_agrees_with_local(seed, M, w_max):
    d = to_density_params(build_complex_state(circuit(seed, (3,) * M, displaced=True)))
    loc = fill_full(d, Local((3,) * M)).tensor
    glob = fill_full(d, GlobalWeight(w_max)).tensor
    for k in np.ndindex(*loc.shape):
        if sum(k) < w_max:
            assert abs(loc[k] - glob[k]) < 1e-14


@settings(max_examples=10, deadline=None)
@given(seeds, st.floats(-2, 2), st.floats(-2, 2))
def test_contract_upstream_is_linear(seed, x, y):
    d = to_density_params(build_complex_state(circuit(seed, (3, 2), displaced=True)))
    res = run_gbs_with_grad(d, (3, 2))
    rng = np.random.default_rng(seed)
    u, v = rng.normal(size=(3, 2)), rng.normal(size=(3, 2))
    lhs = contract_upstream(x * u + y * v, res)
    ru, rv = contract_upstream(u, res), contract_upstream(v, res)
    for a, b, c in zip(lhs, ru, rv):
        assert np.allclose(a, x * b + y * c, atol=1e-12)


@FAST
@given(shape=st.lists(st.integers(1, 3), min_size=1, max_size=3), seed=seeds)
def test_tensor_file_round_trip(tmp_path_factory, shape, seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=shape) + 1j * rng.normal(size=shape)
    path = tmp_path_factory.mktemp("t") / "x.bin"
    assert np.array_equal(read_tensor(write_tensor(path, a, "c"))[0], a)


@FAST
@given(st.integers(1, 4), st.integers(2, 5), st.booleans())
def test_plans_only_write_known_offset_types(M, C, displaced):
    plan = plan_pivots(M, (C,) * M, displaced=displaced)
    kinds = {offset_type(split_diagonal(t)[1]) for step in plan.steps for t in step.targets}
    assert "offset0110" not in kinds and kinds <= {"offset0", "offset1", "offset2", "offset1010", "offset1001"}
    targets = [t for step in plan.steps for t in step.targets]
    assert len(targets) == len(set(targets))

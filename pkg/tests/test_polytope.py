import sys
import os
import numpy as np
import pytest
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))
from polytomo.clopper_pearson import QST, EpsilonAllocation, ProtocolShape, uniform_allocation
from polytomo.errors import ProtocolError, ValidationError
from polytomo.operators import basis_for_dim, embed_choi, embed_state, state_from_vector
from polytomo.polytope import (
    Polyhedron,
    QptDataset,
    QstDataset,
    build_qpt_polytope,
    build_qst_polytope,
    check_membership,
    contains,
    is_bounded,
)
from polytomo.simulator import (
    depolarizing_channel,
    ghz_state,
    pauli_povms,
    qpt_protocol,
    qst_protocol,
    random_density_matrix,
    run_qpt_experiment,
    run_qst_experiment,
    tetrahedron_inputs,
)


def _qst_data(rho, povms, shots):
    basis = basis_for_dim(povms[0].dim)
    counts = [tuple(int(round(shots * np.trace(rho.matrix @ e.matrix).real)) for e in p.effects) for p in povms]
    return QstDataset(tuple(povms), tuple(counts), basis)


def test_exact_frequency_qst_contains_truth():
    rho = ghz_state(1)
    data = run_qst_experiment(rho, qst_protocol(1, 1000), seed=1, exact=True)
    poly = build_qst_polytope(data, uniform_allocation(data.shape, 0.95))
    assert poly.ambient_dim == 3
    assert len(poly) == 6
    assert poly.confidence_level == pytest.approx(0.95)
    assert poly.legacy_confidence_level < poly.confidence_level
    assert contains(poly, embed_state(rho, data.basis).r)


def test_orthogonal_state_is_rejected_with_provenance():
    plus = ghz_state(1)
    data = run_qst_experiment(plus, qst_protocol(1, 10000), seed=3, exact=True)
    poly = build_qst_polytope(data, uniform_allocation(data.shape, 0.95))
    minus = state_from_vector(np.array([1.0, -1.0]) / np.sqrt(2))
    report = check_membership(poly, embed_state(minus, data.basis).r)
    assert not report.member
    assert report.min_slack < 0
    assert report.violated_source.povm_index == 0
    assert report.violated_source.input_index is None


def test_qst_two_qubit_ghz_membership():
    rho = ghz_state(2)
    data = run_qst_experiment(rho, qst_protocol(2, 2000), seed=4, exact=True)
    poly = build_qst_polytope(data, uniform_allocation(data.shape, 0.9))
    assert poly.ambient_dim == 15
    assert len(poly) == 36
    assert contains(poly, embed_state(rho, data.basis).r)


def test_qpt_exact_frequency_contains_true_channel():
    choi = depolarizing_channel(1, 0.1)
    data = run_qpt_experiment(choi, qpt_protocol(1, 1000), seed=2, exact=True)
    poly = build_qpt_polytope(data, uniform_allocation(data.shape, 0.95))
    assert poly.ambient_dim == 12
    assert len(poly) == 24
    assert poly.provenance[5].input_index == 0
    assert contains(poly, embed_choi(choi, data.basis_in, data.basis_out).c)


def test_zero_shots_and_shape_mismatch_rejected():
    povms = tuple(pauli_povms(1))
    basis = basis_for_dim(2)
    data = QstDataset(povms, ((0, 0), (5, 5), (5, 5)), basis)
    with pytest.raises(ProtocolError):
        build_qst_polytope(data, uniform_allocation(data.shape, 0.9))
    good = QstDataset(povms, ((5, 5), (5, 5), (5, 5)), basis)
    with pytest.raises(ProtocolError):
        build_qst_polytope(good, uniform_allocation(ProtocolShape(QST, (2, 2)), 0.9))
    with pytest.raises(ProtocolError):
        QstDataset(povms, ((5, 5), (5, 5)), basis)
    with pytest.raises(ProtocolError):
        QstDataset(povms, ((5, 5, 1), (5, 5), (5, 5)), basis)
    with pytest.raises(ProtocolError):
        QstDataset((), (), basis)


def test_polyhedron_validation():
    with pytest.raises(ValidationError):
        Polyhedron.from_constraints(np.eye(2), [1.0, 1.0], confidence_level=1.0)
    with pytest.raises(ValidationError):
        Polyhedron.from_constraints(np.eye(2), [1.0], confidence_level=0.9)
    poly = Polyhedron.from_constraints(np.eye(2), [1.0, 1.0], confidence_level=0.9)
    with pytest.raises(ValidationError):
        check_membership(poly, [0.0, 0.0, 0.0])


@pytest.mark.parametrize("method", ["rank", "recession"])
def test_qst_boundedness_follows_informational_completeness(method):
    rho = ghz_state(1)
    povms = pauli_povms(1)
    full = _qst_data(rho, povms, 1000)
    assert is_bounded(build_qst_polytope(full, uniform_allocation(full.shape, 0.9)), method)
    xy = _qst_data(rho, povms[:2], 1000)
    assert not is_bounded(build_qst_polytope(xy, uniform_allocation(xy.shape, 0.9)), method)


@pytest.mark.parametrize("method", ["rank", "recession"])
def test_qpt_boundedness_needs_all_tetrahedron_inputs(method):
    choi = depolarizing_channel(1, 0.1)
    data = run_qpt_experiment(choi, qpt_protocol(1, 1000), seed=0, exact=True)
    assert is_bounded(build_qpt_polytope(data, uniform_allocation(data.shape, 0.9)), method)
    for dropped in range(4):
        keep = [i for i in range(4) if i != dropped]
        partial = QptDataset(
            tuple(data.inputs[i] for i in keep),
            tuple(data.povms[i] for i in keep),
            tuple(data.counts[i] for i in keep),
            data.basis_in,
            data.basis_out,
        )
        poly = build_qpt_polytope(partial, uniform_allocation(partial.shape, 0.9))
        assert not is_bounded(poly, method)


def test_qpt_allows_per_input_povm_sets():
    choi = depolarizing_channel(1, 0.2)
    inputs = tuple(tetrahedron_inputs(1))
    povms = pauli_povms(1)
    per_input = (tuple(povms), tuple(povms[::-1]), tuple(povms[:2]), tuple(povms))
    counts = tuple(tuple((60, 40) for _ in block) for block in per_input)
    basis = basis_for_dim(2)
    data = QptDataset(inputs, per_input, counts, basis, basis)
    assert data.shape.effect_counts == ((2, 2, 2), (2, 2, 2), (2, 2), (2, 2, 2))
    alloc = uniform_allocation(data.shape, 0.9)
    assert isinstance(alloc, EpsilonAllocation)
    poly = build_qpt_polytope(data, alloc)
    assert len(poly) == 22
    assert poly.ambient_dim == embed_choi(choi, basis, basis).c.size


@pytest.mark.parametrize("method", ["rank", "recession"])
def test_boundedness_ignores_order_and_duplicates(method):
    rng = np.random.default_rng(4)
    rho = ghz_state(1)
    povms = pauli_povms(1)
    for subset in (povms, povms[:2]):
        data = _qst_data(rho, subset, 1000)
        poly = build_qst_polytope(data, uniform_allocation(data.shape, 0.9))
        verdict = is_bounded(poly, method)
        halfspaces = list(poly.halfspaces)
        shuffled = [halfspaces[i] for i in rng.permutation(len(halfspaces))]
        doubled = shuffled + [halfspaces[i] for i in rng.integers(0, len(halfspaces), size=4)]
        for rows in (shuffled, doubled):
            variant = Polyhedron(poly.ambient_dim, tuple(rows), poly.confidence_level)
            assert is_bounded(variant, method) == verdict


def test_membership_is_monotone_in_epsilon():
    rng = np.random.default_rng(12)
    rho = ghz_state(1)
    data = run_qst_experiment(rho, qst_protocol(1, 200), seed=6, exact=True)
    levels = (0.1, 0.5, 0.9, 0.99)
    polys = [build_qst_polytope(data, uniform_allocation(data.shape, cl)) for cl in levels]
    truth = embed_state(rho, data.basis).r
    candidates = [truth] + [truth + 0.1 * rng.normal(size=3) for _ in range(300)]
    candidates += [embed_state(random_density_matrix(2, rng), data.basis).r for _ in range(100)]
    for r in candidates:
        inside = [contains(poly, r) for poly in polys]
        # once inside at some level, inside at every higher level
        assert inside == sorted(inside)
    assert all(contains(poly, truth) for poly in polys)
    assert any(not contains(polys[0], r) for r in candidates)


def test_contains_simple_regions():
    free = Polyhedron.from_constraints([], [], confidence_level=0.9, ambient_dim=2)
    assert len(free) == 0
    assert contains(free, [123.0, -4.5])
    square = Polyhedron.from_constraints(
        [[1, 0], [-1, 0], [0, 1], [0, -1]], [1, 0, 1, 0], confidence_level=0.9
    )
    assert contains(square, [0.5, 0.5])
    assert not contains(square, [1.5, 0.0])
    with pytest.raises(ValidationError):
        Polyhedron.from_constraints([], [], confidence_level=0.9)

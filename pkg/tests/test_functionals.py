import sys
import os
import numpy as np
import pytest
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))
from polytomo.clopper_pearson import uniform_allocation
from polytomo.config import settings
from polytomo.errors import EmptyRegionError, UnboundedRegionError, ValidationError
from polytomo.functionals import (
    AffineFunctional,
    ConfidenceInterval,
    choi_observable,
    constant_functional,
    fidelity_to_pure,
    interval,
    observable_mean,
    outcome_probability,
    output_observable,
    output_probability,
    process_fidelity_to_unitary,
)
from polytomo.operators import (
    PAULI_MATRICES,
    apply_choi,
    basis_for_dim,
    choi_of_unitary,
    embed_choi,
    embed_state,
)
from polytomo.polytope import Polyhedron, QptDataset, build_qpt_polytope, build_qst_polytope
from polytomo.simulator import (
    depolarizing_channel,
    ghz_state,
    qpt_protocol,
    qst_protocol,
    random_channel,
    random_density_matrix,
    run_qpt_experiment,
    run_qst_experiment,
)

QUBIT = basis_for_dim(2)


def test_process_fidelity_of_depolarizing_channel():
    fidelity = process_fidelity_to_unitary(choi_of_unitary(np.eye(2)), QUBIT, QUBIT)
    c = embed_choi(depolarizing_channel(1, 0.1), QUBIT, QUBIT).c
    assert fidelity.evaluate(c) == pytest.approx(0.925, abs=1e-12)
    identity = embed_choi(choi_of_unitary(np.eye(2)), QUBIT, QUBIT).c
    assert fidelity.evaluate(identity) == pytest.approx(1.0, abs=1e-12)


def test_process_fidelity_needs_rank_one_target():
    with pytest.raises(ValidationError):
        process_fidelity_to_unitary(depolarizing_channel(1, 0.5), QUBIT, QUBIT)


def test_state_functionals_at_true_state():
    rho = ghz_state(1)
    r = embed_state(rho, QUBIT).r
    assert fidelity_to_pure(np.array([1, 1]) / np.sqrt(2), QUBIT).evaluate(r) == pytest.approx(1.0)
    assert observable_mean(PAULI_MATRICES["X"], QUBIT).evaluate(r) == pytest.approx(1.0)
    assert observable_mean(PAULI_MATRICES["Z"], QUBIT).evaluate(r) == pytest.approx(0.0)
    assert outcome_probability(np.diag([1.0, 0.0]), QUBIT).evaluate(r) == pytest.approx(0.5)


def test_channel_functionals_agree_with_born_rule():
    rng = np.random.default_rng(3)
    for _ in range(10):
        choi = random_channel(2, 2, rng)
        rho_in = random_density_matrix(2, rng)
        effect = random_density_matrix(2, rng).matrix
        c = embed_choi(choi, QUBIT, QUBIT).c
        expected = np.trace(apply_choi(choi, rho_in).matrix @ effect).real
        assert output_probability(rho_in, effect, QUBIT, QUBIT).evaluate(c) == pytest.approx(expected, abs=1e-10)
        joint = np.kron(rho_in.matrix.T, effect)
        assert choi_observable(joint, QUBIT, QUBIT).evaluate(c) == pytest.approx(expected, abs=1e-10)
        obs = output_observable(rho_in, PAULI_MATRICES["Y"], QUBIT, QUBIT)
        y_mean = np.trace(apply_choi(choi, rho_in).matrix @ PAULI_MATRICES["Y"]).real
        assert obs.evaluate(c) == pytest.approx(y_mean, abs=1e-10)


def test_constant_functional_gives_degenerate_interval():
    data = run_qst_experiment(ghz_state(1), qst_protocol(1, 500), seed=1, exact=True)
    poly = build_qst_polytope(data, uniform_allocation(data.shape, 0.95))
    ci = interval(constant_functional(0.3, poly.ambient_dim), poly)
    assert ci.lo == pytest.approx(0.3) and ci.hi == pytest.approx(0.3)
    assert ci.width == pytest.approx(0.0, abs=1e-12)


def test_state_fidelity_interval_contains_truth():
    rho = ghz_state(1)
    data = run_qst_experiment(rho, qst_protocol(1, 2000), seed=5, exact=True)
    poly = build_qst_polytope(data, uniform_allocation(data.shape, 0.95))
    ci = interval(fidelity_to_pure(np.array([1, 1]) / np.sqrt(2), QUBIT), poly)
    assert ci.confidence_level == pytest.approx(0.95)
    assert ci.contains(1.0, tol=1e-8)
    assert ci.lo < 1.0
    assert ci.hi == pytest.approx(1.0, abs=1e-8)


def test_interval_is_not_clipped_to_physical_range():
    assert ConfidenceInterval(0.9, 1.05, 0.9).exceeds()
    assert ConfidenceInterval(-0.01, 0.5, 0.9).exceeds()
    assert not ConfidenceInterval(0.2, 0.5, 0.9).exceeds()


@pytest.mark.parametrize("backend", ["simplex", "highs"])
def test_process_fidelity_interval_from_exact_data(backend):
    choi = depolarizing_channel(1, 0.1)
    data = run_qpt_experiment(choi, qpt_protocol(1, 10000), seed=2, exact=True)
    poly = build_qpt_polytope(data, uniform_allocation(data.shape, 0.95))
    fidelity = process_fidelity_to_unitary(choi_of_unitary(np.eye(2)), QUBIT, QUBIT)
    ci = interval(fidelity, poly, backend)
    assert ci.lo < 0.925 < ci.hi
    assert ci.width < 0.25


def test_interval_with_parallel_lp_pair(monkeypatch):
    data = run_qst_experiment(ghz_state(1), qst_protocol(1, 1000), seed=9)
    poly = build_qst_polytope(data, uniform_allocation(data.shape, 0.9))
    functional = observable_mean(PAULI_MATRICES["Z"], QUBIT)
    serial = interval(functional, poly)
    monkeypatch.setattr(settings, "threads", 2)
    parallel = interval(functional, poly)
    assert parallel.lo == pytest.approx(serial.lo, abs=1e-12)
    assert parallel.hi == pytest.approx(serial.hi, abs=1e-12)


def test_incomplete_protocol_is_unbounded():
    choi = depolarizing_channel(1, 0.1)
    protocol = qpt_protocol(1, 1000)
    data = run_qpt_experiment(choi, protocol, seed=0, exact=True)
    partial = QptDataset(data.inputs[:3], data.povms[:3], data.counts[:3], data.basis_in, data.basis_out)
    poly = build_qpt_polytope(partial, uniform_allocation(partial.shape, 0.9))
    fidelity = process_fidelity_to_unitary(choi_of_unitary(np.eye(2)), QUBIT, QUBIT)
    with pytest.raises(UnboundedRegionError, match="informationally complete"):
        interval(fidelity, poly)


def test_empty_region_is_reported():
    poly = Polyhedron.from_constraints([[1.0], [-1.0]], [-1.0, -1.0], confidence_level=0.9)
    with pytest.raises(EmptyRegionError):
        interval(AffineFunctional([1.0], 0.0), poly)


def test_interval_validation():
    poly = Polyhedron.from_constraints([[1.0], [-1.0]], [1.0, 1.0], confidence_level=0.9)
    with pytest.raises(ValidationError):
        interval(AffineFunctional([1.0, 2.0], 0.0), poly)
    with pytest.raises(ValidationError):
        ConfidenceInterval(1.0, 0.0, 0.9)
    ci = interval(AffineFunctional([2.0], 0.5), poly)
    assert (ci.lo, ci.hi) == (pytest.approx(-1.5), pytest.approx(2.5))


def _nested(intervals):
    """intervals ordered by increasing confidence level"""
    for narrow, wide in zip(intervals, intervals[1:]):
        assert wide.lo <= narrow.lo + 1e-9
        assert wide.hi >= narrow.hi - 1e-9
        assert wide.width >= narrow.width - 1e-9


def test_state_intervals_nest_across_confidence_levels():
    data = run_qst_experiment(ghz_state(1), qst_protocol(1, 500), seed=21)
    levels = (0.1, 0.5, 0.9, 0.99)
    polys = [build_qst_polytope(data, uniform_allocation(data.shape, cl)) for cl in levels]
    for functional in (
        fidelity_to_pure(np.array([1, 1]) / np.sqrt(2), QUBIT),
        observable_mean(PAULI_MATRICES["Y"], QUBIT),
        outcome_probability(np.diag([1.0, 0.0]), QUBIT),
    ):
        _nested([interval(functional, poly) for poly in polys])


def test_process_fidelity_intervals_nest_across_confidence_levels():
    data = run_qpt_experiment(depolarizing_channel(1, 0.1), qpt_protocol(1, 2000), seed=8)
    fidelity = process_fidelity_to_unitary(choi_of_unitary(np.eye(2)), QUBIT, QUBIT)
    intervals = []
    for cl in (0.1, 0.5, 0.9, 0.99):
        poly = build_qpt_polytope(data, uniform_allocation(data.shape, cl))
        intervals.append(interval(fidelity, poly))
    _nested(intervals)
    assert intervals[-1].width > intervals[0].width

import sys
import os
import math
import numpy as np
import pytest
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))
from polytomo.clopper_pearson import (
    QPT,
    QST,
    EpsilonAllocation,
    ProtocolShape,
    confidence_level,
    confidence_level_qpt,
    confidence_level_qst,
    effect_halfspace,
    kl_divergence,
    kl_divergence_tail,
    legacy_confidence_level,
    solve_delta,
    uniform_allocation,
)
from polytomo.errors import AllocationError, ValidationError
from polytomo.operators import build_pauli_basis, embed_effect


def test_kl_divergence_limits():
    assert kl_divergence(0.0, 0.3) == pytest.approx(-math.log(0.7))
    assert kl_divergence(1.0, 0.3) == pytest.approx(-math.log(0.3))
    assert kl_divergence(0.4, 0.4) == 0.0
    assert kl_divergence(0.4, 1.0) == math.inf


@pytest.mark.parametrize("eps", [0.5, 0.1, 0.01])
@pytest.mark.parametrize("N", [10, 100, 1000])
def test_delta_closed_form_at_zero_counts(eps, N):
    bound = solve_delta(0, N, eps)
    assert abs(bound.delta - (1.0 - eps ** (1.0 / N))) < 1e-12


def test_delta_root_residual_over_grid():
    points = []
    for N in (10, 50, 100, 1000, 10000):
        for frac in (0.1, 0.3, 0.5, 0.7, 0.9):
            for eps in (0.3, 0.01):
                points.append((max(1, int(frac * N)), N, eps))
    assert len(points) == 50
    for n, N, eps in points:
        bound = solve_delta(n, N, eps)
        p = n / N
        assert bound.delta > 0
        assert p + bound.delta < 1
        assert abs(kl_divergence(p, p + bound.delta) + math.log(eps) / N) < 1e-10


def test_kl_divergence_tail_matches_direct_form():
    for p, y in ((0.1, 0.3), (0.5, 0.9), (0.9, 0.999), (0.01, 0.02)):
        assert kl_divergence_tail(p, -math.log1p(-y)) == pytest.approx(kl_divergence(p, y), rel=1e-12)


@pytest.mark.parametrize(
    "n,N,eps",
    [(9, 10, 1e-8), (99, 100, 1e-12), (1, 2, 1e-15), (999, 1000, 1e-6), (5, 10, 1e-300)],
)
def test_delta_residual_near_certain_outcomes(n, N, eps):
    # the root sits within a few ulps of 1, so the residual is checked through the tail
    bound = solve_delta(n, N, eps)
    p = n / N
    assert 0.0 < bound.tail < 1.0 - p
    assert bound.upper <= 1.0
    assert bound.tail == pytest.approx(1.0 - bound.upper, abs=1e-15)
    residual = kl_divergence_tail(p, -math.log(bound.tail)) + math.log(eps) / N
    assert abs(residual) < 1e-10


def test_delta_vacuous_and_monotone():
    bound = solve_delta(7, 7, 0.1)
    assert bound.vacuous and bound.upper == 1.0
    assert solve_delta(30, 100, 0.01).delta > solve_delta(30, 100, 0.1).delta
    assert solve_delta(300, 1000, 0.1).delta < solve_delta(30, 100, 0.1).delta


def test_delta_rejects_bad_arguments():
    with pytest.raises(AllocationError):
        solve_delta(1, 10, 1.0)
    with pytest.raises(ValidationError):
        solve_delta(11, 10, 0.1)
    with pytest.raises(ValidationError):
        solve_delta(0, 0, 0.1)


def test_effect_halfspace_offset():
    basis = build_pauli_basis(1)
    emb = embed_effect(np.diag([1.0, 0.0]), basis)
    hs = effect_halfspace(40, 100, emb, 0.05)
    assert hs.offset == pytest.approx(0.4 + solve_delta(40, 100, 0.05).delta - 0.5)
    vacuous = effect_halfspace(100, 100, emb, 0.05)
    assert vacuous.offset == pytest.approx(0.5)


def test_confidence_level_forms():
    alloc = EpsilonAllocation(QST, ((0.01, 0.02), (0.03, 0.04)))
    assert confidence_level_qst(alloc) == pytest.approx(0.97 * 0.93)
    assert legacy_confidence_level(alloc) == pytest.approx(0.9)
    qpt = EpsilonAllocation(QPT, (((0.01, 0.01),), ((0.02, 0.02),)))
    assert confidence_level_qpt(qpt) == pytest.approx(0.98 * 0.96)
    with pytest.raises(AllocationError):
        confidence_level_qpt(alloc)
    with pytest.raises(AllocationError):
        confidence_level(EpsilonAllocation(QST, ((0.6, 0.5),)))


def test_product_form_tightens_union_bound():
    rng = np.random.default_rng(2024)
    for _ in range(100):
        L = int(rng.integers(2, 7))
        values = tuple(tuple(rng.uniform(0.001, 0.1, size=int(rng.integers(2, 5)))) for _ in range(L))
        alloc = EpsilonAllocation(QST, values)
        assert confidence_level(alloc) > legacy_confidence_level(alloc)
    single = EpsilonAllocation(QST, ((0.013, 0.021, 0.007),))
    assert abs(confidence_level(single) - legacy_confidence_level(single)) <= 1e-15


def test_uniform_allocation_hits_target():
    shape = ProtocolShape(QST, (2, 2, 2))
    alloc = uniform_allocation(shape, 0.95)
    assert confidence_level(alloc) == pytest.approx(0.95, abs=1e-12)
    assert len(set(alloc.blocks()[0])) == 1

    mixed = ProtocolShape(QPT, ((2, 4), (3,)))
    alloc = uniform_allocation(mixed, 0.9)
    assert alloc.shape == mixed
    assert confidence_level(alloc) == pytest.approx(0.9, abs=1e-12)


def test_allocation_validation():
    with pytest.raises(AllocationError):
        EpsilonAllocation(QST, ((0.0, 0.1),))
    with pytest.raises(AllocationError):
        uniform_allocation(ProtocolShape(QST, (2,)), 1.0)
    with pytest.raises(ValidationError):
        ProtocolShape("tomography", (2,))

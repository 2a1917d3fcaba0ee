"""
Clopper-Pearson slack via the binary relative-entropy root equation,
per-effect half-space bounds and confidence-level arithmetic
"""
import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from scipy.optimize import bisect

from polytomo.errors import AllocationError, ValidationError
from polytomo.halfspace import ConstraintSource, HalfSpace
from polytomo.logger import get_logger
from polytomo.operators import EffectEmbedding

logger = get_logger(__name__)

DELTA_XTOL = 1e-15
QST = "qst"
QPT = "qpt"


def kl_divergence(x: float, y: float) -> float:
    """Binary relative entropy D(x||y) in nats, with 0 log 0 = 0"""
    if not 0.0 <= x <= 1.0:
        raise ValidationError(f"x must lie in [0, 1], got {x}")
    if x < 1.0 and y >= 1.0:
        return math.inf
    if x > 0.0 and y <= 0.0:
        return math.inf
    value = 0.0
    if x > 0.0:
        value += x * math.log(x / y)
    if x < 1.0:
        value += (1.0 - x) * math.log((1.0 - x) / (1.0 - y))
    return value


@dataclass(frozen=True)
class DeltaBound:
    """
    delta_N(n, eps); delta is None for the vacuous case n = N.
    tail = 1 - (n/N + delta), kept separately because it is resolved to full
    relative precision even when n/N + delta rounds to within a few ulps of 1.
    """

    n: int
    N: int
    epsilon: float
    delta: Optional[float]
    tail: Optional[float] = None

    @property
    def vacuous(self) -> bool:
        return self.delta is None

    @property
    def upper(self) -> float:
        """Upper bound on the outcome probability"""
        return 1.0 if self.delta is None else self.n / self.N + self.delta


def kl_divergence_tail(x: float, log_tail: float) -> float:
    """D(x || y) with y = 1 - exp(-log_tail), for 0 < x < 1"""
    value = (1.0 - x) * (math.log1p(-x) + log_tail)
    value -= x * (math.log1p(-math.exp(-log_tail)) - math.log(x))
    return value


def solve_delta(n: int, N: int, epsilon: float) -> DeltaBound:
    """
    Positive root of D(n/N || n/N + delta) = -ln(epsilon)/N.
    The root is bracketed in s = -ln(1 - (n/N + delta)); near 1 a double can
    only place n/N + delta to about ulp(1)/tail in relative tail error, so the
    residual of the rounded upper bound is limited by that, not by DELTA_XTOL.
    """
    if not 0.0 < epsilon < 1.0:
        raise AllocationError(f"epsilon must lie in (0, 1), got {epsilon}")
    if N < 1:
        raise ValidationError(f"Total shots N must be positive, got {N}")
    if not 0 <= n <= N:
        raise ValidationError(f"Outcome count n={n} must lie in [0, N={N}]")
    if n == N:
        return DeltaBound(n, N, epsilon, None)
    target = -math.log(epsilon) / N
    if n == 0:
        # D(0 || delta) = -ln(1 - delta)
        return DeltaBound(n, N, epsilon, -math.expm1(-target), math.exp(-target))
    p = n / N
    s_lo = -math.log1p(-p)
    if kl_divergence_tail(p, s_lo) >= target:
        return DeltaBound(n, N, epsilon, 0.0, 1.0 - p)
    # D >= (1 - p)(s - s_lo) + p ln p, so this upper end overshoots the target
    s_hi = s_lo + (target - p * math.log(p)) / (1.0 - p) + 1.0
    s = bisect(lambda t: kl_divergence_tail(p, t) - target, s_lo, s_hi, xtol=DELTA_XTOL, maxiter=400)
    delta = -math.expm1(-s) - p
    return DeltaBound(n, N, epsilon, float(delta), math.exp(-s))


def effect_halfspace(
    n: int,
    N: int,
    effect_embedding: EffectEmbedding,
    epsilon: float,
    source: Optional[ConstraintSource] = None,
) -> HalfSpace:
    """r . eta(E) <= n/N + delta - eta0(E); the vacuous bound uses 1 - eta0(E)"""
    bound = solve_delta(n, N, epsilon)
    return HalfSpace(effect_embedding.eta, bound.upper - effect_embedding.eta0, source)


@dataclass(frozen=True)
class ProtocolShape:
    """
    Effect counts per measurement setting.
    QST: one entry per POVM. QPT: one tuple per input state, one entry per POVM.
    """

    kind: str
    effect_counts: tuple

    def __post_init__(self):
        if self.kind == QST:
            counts = tuple(int(c) for c in self.effect_counts)
        elif self.kind == QPT:
            counts = tuple(tuple(int(c) for c in block) for block in self.effect_counts)
        else:
            raise ValidationError(f"Unknown protocol kind {self.kind!r}")
        object.__setattr__(self, "effect_counts", counts)

    def settings(self) -> List[int]:
        """Effect count of every (input, POVM) setting in protocol order"""
        if self.kind == QST:
            return list(self.effect_counts)
        return [c for block in self.effect_counts for c in block]


@dataclass(frozen=True)
class EpsilonAllocation:
    """Per-effect epsilons mirroring the protocol nesting"""

    kind: str
    values: tuple

    def __post_init__(self):
        if self.kind == QST:
            values = tuple(tuple(float(e) for e in povm) for povm in self.values)
        elif self.kind == QPT:
            values = tuple(tuple(tuple(float(e) for e in povm) for povm in block) for block in self.values)
        else:
            raise AllocationError(f"Unknown allocation kind {self.kind!r}")
        object.__setattr__(self, "values", values)
        for block in self.blocks():
            for eps in block:
                if not 0.0 < eps < 1.0:
                    raise AllocationError(f"Every epsilon must lie in (0, 1), got {eps}")

    def blocks(self) -> List[Tuple[float, ...]]:
        """Per-setting epsilon tuples in protocol order"""
        if self.kind == QST:
            return list(self.values)
        return [povm for block in self.values for povm in block]

    @property
    def shape(self) -> ProtocolShape:
        if self.kind == QST:
            return ProtocolShape(QST, tuple(len(p) for p in self.values))
        return ProtocolShape(QPT, tuple(tuple(len(p) for p in block) for block in self.values))


def _product_level(alloc: EpsilonAllocation) -> float:
    level = 1.0
    for block in alloc.blocks():
        total = sum(block)
        if total >= 1.0:
            raise AllocationError(f"Per-POVM epsilon sum must be < 1, got {total}")
        level *= 1.0 - total
    return level


def confidence_level_qst(alloc: EpsilonAllocation) -> float:
    """prod_i (1 - sum_j eps_ij)"""
    if alloc.kind != QST:
        raise AllocationError("confidence_level_qst needs a QST allocation")
    return _product_level(alloc)


def confidence_level_qpt(alloc: EpsilonAllocation) -> float:
    """prod_i prod_j (1 - sum_k eps^(i)_jk)"""
    if alloc.kind != QPT:
        raise AllocationError("confidence_level_qpt needs a QPT allocation")
    return _product_level(alloc)


def confidence_level(alloc: EpsilonAllocation) -> float:
    return confidence_level_qst(alloc) if alloc.kind == QST else confidence_level_qpt(alloc)


def legacy_confidence_level(alloc: EpsilonAllocation) -> float:
    """Union-bound level 1 - sum of all epsilons; never larger than the product form"""
    _product_level(alloc)
    return 1.0 - sum(sum(block) for block in alloc.blocks())


def _fill(shape: ProtocolShape, eps: float) -> EpsilonAllocation:
    if shape.kind == QST:
        return EpsilonAllocation(QST, tuple((eps,) * c for c in shape.effect_counts))
    return EpsilonAllocation(QPT, tuple(tuple((eps,) * c for c in block) for block in shape.effect_counts))


def uniform_allocation(shape: ProtocolShape, target_confidence: float) -> EpsilonAllocation:
    """Single epsilon for every effect such that the product confidence level equals the target"""
    if not 0.0 < target_confidence < 1.0:
        raise AllocationError(f"Target confidence must lie in (0, 1), got {target_confidence}")
    counts = shape.settings()
    if not counts or min(counts) < 1:
        raise AllocationError("Protocol shape has no effects to allocate")
    if len(set(counts)) == 1:
        # (1 - P eps)^L = target
        eps = -math.expm1(math.log(target_confidence) / len(counts)) / counts[0]
    else:
        arr = np.array(counts, dtype=float)
        eps = bisect(
            lambda e: float(np.prod(1.0 - arr * e)) - target_confidence,
            0.0,
            1.0 / arr.max(),
            xtol=1e-17,
            maxiter=400,
        )
    if not 0.0 < eps < 1.0:
        raise AllocationError(f"Target confidence {target_confidence} is not reachable (eps={eps})")
    logger.debug("Uniform allocation", target=target_confidence, epsilon=eps, settings=len(counts))
    return _fill(shape, eps)

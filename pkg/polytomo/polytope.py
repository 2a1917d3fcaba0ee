"""
Confidence polyhedra for state and process tomography
Assembles half-space intersections from measurement counts, tests membership
and decides boundedness
"""
from dataclasses import dataclass
from functools import cached_property
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import svdvals

from polytomo.clopper_pearson import (
    QPT,
    QST,
    EpsilonAllocation,
    ProtocolShape,
    confidence_level_qpt,
    confidence_level_qst,
    effect_halfspace,
    legacy_confidence_level,
    solve_delta,
)
from polytomo.errors import ProtocolError, ValidationError
from polytomo.halfspace import ConstraintSource, HalfSpace
from polytomo.linprog import LpProblem, LpStatus, Sense, solve
from polytomo.logger import get_logger
from polytomo.operators import BasisSet, DensityMatrix, Povm, embed_effect, embed_input_state

logger = get_logger(__name__)

MEMBERSHIP_TOL = 1e-9
NORMAL_SUM_TOL = 1e-10
RANK_RTOL = 1e-10
RECESSION_TOL = 1e-7


@dataclass(frozen=True, eq=False)
class Polyhedron:
    """Intersection of half-spaces normal . x <= offset in R^ambient_dim"""

    ambient_dim: int
    halfspaces: Tuple[HalfSpace, ...]
    confidence_level: float
    kind: str = "generic"
    legacy_confidence_level: Optional[float] = None

    def __post_init__(self):
        halfspaces = tuple(self.halfspaces)
        object.__setattr__(self, "halfspaces", halfspaces)
        for hs in halfspaces:
            if hs.dim != self.ambient_dim:
                raise ValidationError(f"Half-space normal has length {hs.dim}, expected {self.ambient_dim}")
        if not 0.0 < self.confidence_level < 1.0:
            raise ValidationError(f"Confidence level must lie in (0, 1), got {self.confidence_level}")

    @classmethod
    def from_constraints(
        cls, A, b, confidence_level: float, kind: str = "generic", ambient_dim: Optional[int] = None
    ) -> "Polyhedron":
        """A x <= b; ambient_dim is required when A has no rows"""
        A = np.asarray(A, dtype=float)
        b = np.asarray(b, dtype=float).reshape(-1)
        if A.size == 0:
            if ambient_dim is None:
                raise ValidationError("ambient_dim is required for a polyhedron without constraints")
            A = A.reshape(0, ambient_dim)
        elif A.ndim < 2:
            A = A.reshape(1, -1)
        if A.shape[0] != b.size:
            raise ValidationError(f"{A.shape[0]} constraint rows but {b.size} offsets")
        dim = A.shape[1] if ambient_dim is None else ambient_dim
        return cls(dim, tuple(HalfSpace(a, off) for a, off in zip(A, b)), confidence_level, kind)

    @cached_property
    def A(self) -> np.ndarray:
        if not self.halfspaces:
            return np.zeros((0, self.ambient_dim))
        return np.vstack([hs.normal for hs in self.halfspaces])

    @cached_property
    def b(self) -> np.ndarray:
        return np.array([hs.offset for hs in self.halfspaces], dtype=float)

    @property
    def provenance(self) -> List[Optional[ConstraintSource]]:
        return [hs.source for hs in self.halfspaces]

    def __len__(self) -> int:
        return len(self.halfspaces)


@dataclass(frozen=True, eq=False)
class QstDataset:
    """POVMs measured on copies of one state, with per-POVM outcome counts"""

    povms: Tuple[Povm, ...]
    counts: Tuple[Tuple[int, ...], ...]
    basis: BasisSet

    def __post_init__(self):
        povms = tuple(self.povms)
        counts = tuple(tuple(int(n) for n in row) for row in self.counts)
        object.__setattr__(self, "povms", povms)
        object.__setattr__(self, "counts", counts)
        if not povms:
            raise ProtocolError("QST dataset has no POVMs")
        if len(povms) != len(counts):
            raise ProtocolError(f"{len(povms)} POVMs but {len(counts)} count tuples")
        for i, (povm, row) in enumerate(zip(povms, counts)):
            _check_setting(povm, row, self.basis.dim, f"povm {i}")

    @property
    def dim(self) -> int:
        return self.basis.dim

    @property
    def shape(self) -> ProtocolShape:
        return ProtocolShape(QST, tuple(len(p) for p in self.povms))


@dataclass(frozen=True, eq=False)
class QptDataset:
    """Known input states sent through a channel, each output measured by its own POVM set"""

    inputs: Tuple[DensityMatrix, ...]
    povms: Tuple[Tuple[Povm, ...], ...]
    counts: Tuple[Tuple[Tuple[int, ...], ...], ...]
    basis_in: BasisSet
    basis_out: BasisSet

    def __post_init__(self):
        inputs = tuple(self.inputs)
        povms = tuple(tuple(block) for block in self.povms)
        counts = tuple(tuple(tuple(int(n) for n in row) for row in block) for block in self.counts)
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "povms", povms)
        object.__setattr__(self, "counts", counts)
        if not inputs:
            raise ProtocolError("QPT dataset has no input states")
        if not len(inputs) == len(povms) == len(counts):
            raise ProtocolError(
                f"{len(inputs)} inputs, {len(povms)} POVM sets and {len(counts)} count blocks must agree"
            )
        for i, (rho, block, rows) in enumerate(zip(inputs, povms, counts)):
            if rho.dim != self.basis_in.dim:
                raise ProtocolError(f"Input {i} has dim {rho.dim}, expected {self.basis_in.dim}")
            if not block or len(block) != len(rows):
                raise ProtocolError(f"Input {i}: {len(block)} POVMs but {len(rows)} count tuples")
            for j, (povm, row) in enumerate(zip(block, rows)):
                _check_setting(povm, row, self.basis_out.dim, f"input {i}, povm {j}")

    @property
    def d_in(self) -> int:
        return self.basis_in.dim

    @property
    def d_out(self) -> int:
        return self.basis_out.dim

    @property
    def shape(self) -> ProtocolShape:
        return ProtocolShape(QPT, tuple(tuple(len(p) for p in block) for block in self.povms))


def _check_setting(povm: Povm, row: Sequence[int], dim: int, where: str):
    if povm.dim != dim:
        raise ProtocolError(f"{where}: POVM dim {povm.dim} does not match basis dim {dim}")
    if len(row) != len(povm):
        raise ProtocolError(f"{where}: {len(row)} counts for {len(povm)} effects")
    if any(n < 0 for n in row):
        raise ProtocolError(f"{where}: counts must be nonnegative")


def _check_normal_sum(normals: List[np.ndarray], where: str):
    total = np.sum(normals, axis=0)
    if np.max(np.abs(total)) > NORMAL_SUM_TOL:
        raise ValidationError(f"{where}: effect normals do not sum to zero (max {np.max(np.abs(total)):.3e})")


def _check_alloc(data_shape: ProtocolShape, alloc: EpsilonAllocation):
    if alloc.shape != data_shape:
        raise ProtocolError(
            f"Allocation shape {alloc.shape.effect_counts} does not match dataset shape {data_shape.effect_counts}"
        )


def build_qst_polytope(data: QstDataset, alloc: EpsilonAllocation) -> Polyhedron:
    """One half-space per (POVM, effect) in R^(d^2-1)"""
    _check_alloc(data.shape, alloc)
    halfspaces = []
    for i, (povm, row, eps_row) in enumerate(zip(data.povms, data.counts, alloc.values)):
        total = sum(row)
        if total == 0:
            raise ProtocolError(f"POVM {i} has zero total shots")
        block = [
            effect_halfspace(n, total, embed_effect(effect, data.basis), eps, ConstraintSource(i, j))
            for j, (effect, n, eps) in enumerate(zip(povm.effects, row, eps_row))
        ]
        _check_normal_sum([hs.normal for hs in block], f"povm {i}")
        halfspaces.extend(block)
    poly = Polyhedron(
        data.dim ** 2 - 1,
        tuple(halfspaces),
        confidence_level_qst(alloc),
        kind=QST,
        legacy_confidence_level=legacy_confidence_level(alloc),
    )
    logger.debug("Built QST polytope", dim=poly.ambient_dim, constraints=len(poly), cl=poly.confidence_level)
    return poly


def build_qpt_polytope(data: QptDataset, alloc: EpsilonAllocation) -> Polyhedron:
    """
    One half-space per (input, POVM, effect) in R^(d_in^2 (d_out^2-1)), with normal
    eta^out(E) (x) rbar^in(rho), matching the row-major flattening of ChoiEmbedding.c.
    """
    _check_alloc(data.shape, alloc)
    halfspaces = []
    for i, (rho, block, rows, eps_block) in enumerate(zip(data.inputs, data.povms, data.counts, alloc.values)):
        rbar = embed_input_state(rho, data.basis_in).rbar
        for j, (povm, row, eps_row) in enumerate(zip(block, rows, eps_block)):
            total = sum(row)
            if total == 0:
                raise ProtocolError(f"Input {i}, POVM {j} has zero total shots")
            setting = []
            for k, (effect, n, eps) in enumerate(zip(povm.effects, row, eps_row)):
                emb = embed_effect(effect, data.basis_out)
                upper = solve_delta(n, total, eps).upper
                setting.append(HalfSpace(np.kron(emb.eta, rbar), upper - emb.eta0, ConstraintSource(j, k, i)))
            _check_normal_sum([hs.normal for hs in setting], f"input {i}, povm {j}")
            halfspaces.extend(setting)
    poly = Polyhedron(
        data.d_in ** 2 * (data.d_out ** 2 - 1),
        tuple(halfspaces),
        confidence_level_qpt(alloc),
        kind=QPT,
        legacy_confidence_level=legacy_confidence_level(alloc),
    )
    logger.debug("Built QPT polytope", dim=poly.ambient_dim, constraints=len(poly), cl=poly.confidence_level)
    return poly


@dataclass(frozen=True)
class MembershipReport:
    member: bool
    min_slack: float
    violated: Optional[HalfSpace] = None

    @property
    def violated_source(self) -> Optional[ConstraintSource]:
        return self.violated.source if self.violated is not None else None


def check_membership(poly: Polyhedron, point) -> MembershipReport:
    """Slack of every constraint at point; reports the first violated one"""
    x = np.asarray(point, dtype=float).reshape(-1)
    if x.size != poly.ambient_dim:
        raise ValidationError(f"Point has length {x.size}, polyhedron lives in R^{poly.ambient_dim}")
    if not poly.halfspaces:
        return MembershipReport(True, float("inf"))
    slack = poly.b - poly.A @ x
    violated = np.flatnonzero(slack < -MEMBERSHIP_TOL)
    if violated.size:
        first = poly.halfspaces[int(violated[0])]
        logger.debug("Point outside polyhedron", constraint=str(first.source), slack=float(slack[violated[0]]))
        return MembershipReport(False, float(slack.min()), first)
    return MembershipReport(True, float(slack.min()))


def contains(poly: Polyhedron, point) -> bool:
    return check_membership(poly, point).member


def is_bounded(poly: Polyhedron, method: str = "rank") -> bool:
    """
    For protocol-generated polyhedra boundedness is equivalent to the normals
    spanning R^m (informational completeness), decided by numerical rank.
    method='recession' instead checks by LP that the recession cone {d: A d <= 0} is {0}.
    """
    if method == "rank":
        return _rank_bounded(poly)
    if method == "recession":
        return _recession_bounded(poly)
    raise ValueError(f"Unknown boundedness method: {method}")


def _rank_bounded(poly: Polyhedron) -> bool:
    m = poly.ambient_dim
    if len(poly) == 0:
        return m == 0
    s = svdvals(poly.A)
    if s.size == 0 or s[0] == 0.0:
        return False
    rank = int(np.sum(s > m * s[0] * RANK_RTOL))
    logger.debug("Normal matrix rank", rank=rank, ambient_dim=m)
    return rank == m


def _recession_bounded(poly: Polyhedron) -> bool:
    m = poly.ambient_dim
    eye = np.eye(m)
    A = np.vstack([poly.A, eye, -eye])
    b = np.concatenate([np.zeros(len(poly)), np.ones(2 * m)])
    cone = Polyhedron.from_constraints(A, b, confidence_level=poly.confidence_level)
    for i in range(m):
        for sign in (1.0, -1.0):
            solution = solve(LpProblem(sign * eye[i], cone, Sense.MAX))
            if solution.status != LpStatus.OPTIMAL or solution.value > RECESSION_TOL:
                return False
    return True

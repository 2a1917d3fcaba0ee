"""
Affine functionals of states and Choi matrices, and confidence intervals
extracted from confidence polyhedra by a pair of linear programs
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from polytomo.config import settings
from polytomo.errors import EmptyRegionError, UnboundedRegionError, ValidationError
from polytomo.linprog import LpProblem, LpSolution, LpStatus, Sense, solve
from polytomo.logger import get_logger
from polytomo.operators import (
    BasisSet,
    ChoiMatrix,
    HermitianOperator,
    as_matrix,
    embed_effect,
    embed_input_state,
    state_from_vector,
)
from polytomo.polytope import Polyhedron, is_bounded

logger = get_logger(__name__)

RANK_ONE_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class AffineFunctional:
    """x -> coeffs . x + offset on a state or Choi embedding"""

    coeffs: np.ndarray
    offset: float
    label: str = ""

    def __post_init__(self):
        coeffs = np.array(self.coeffs, dtype=float).reshape(-1)
        coeffs.setflags(write=False)
        object.__setattr__(self, "coeffs", coeffs)
        object.__setattr__(self, "offset", float(self.offset))

    @property
    def dim(self) -> int:
        return self.coeffs.size

    def evaluate(self, point) -> float:
        x = np.asarray(point, dtype=float).reshape(-1)
        if x.size != self.dim:
            raise ValidationError(f"Point has length {x.size}, functional expects {self.dim}")
        return float(self.coeffs @ x) + self.offset


@dataclass(frozen=True)
class ConfidenceInterval:
    lo: float
    hi: float
    confidence_level: float
    label: str = ""

    def __post_init__(self):
        if self.lo > self.hi:
            raise ValidationError(f"Interval bounds are inverted: [{self.lo}, {self.hi}]")

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def contains(self, value: float, tol: float = 0.0) -> bool:
        return self.lo - tol <= value <= self.hi + tol

    def exceeds(self, lower: float = 0.0, upper: float = 1.0) -> bool:
        """True when the (unclipped) interval leaves the physical range"""
        return self.lo < lower or self.hi > upper


def _coefficients(matrix: np.ndarray, basis: BasisSet) -> np.ndarray:
    """Tr(sigma_i M)/d for i >= 1"""
    if matrix.shape[0] != basis.dim:
        raise ValidationError(f"Operator dim {matrix.shape[0]} does not match basis dim {basis.dim}")
    return np.einsum("kij,ji->k", basis.stack, matrix).real / basis.dim


def constant_functional(value: float, dim: int, label: str = "constant") -> AffineFunctional:
    return AffineFunctional(np.zeros(dim), value, label)


def fidelity_to_pure(psi: Sequence[complex], basis: BasisSet) -> AffineFunctional:
    """<psi|rho|psi>"""
    projector = state_from_vector(psi).matrix
    return AffineFunctional(_coefficients(projector, basis), 1.0 / basis.dim, "fidelity_to_pure")


def observable_mean(observable, basis: BasisSet) -> AffineFunctional:
    """Tr(rho O)"""
    mat = HermitianOperator(as_matrix(observable)).matrix
    return AffineFunctional(_coefficients(mat, basis), np.trace(mat).real / basis.dim, "observable_mean")


def outcome_probability(effect, basis: BasisSet) -> AffineFunctional:
    """Tr(rho E)"""
    emb = embed_effect(effect, basis)
    return AffineFunctional(emb.eta, emb.eta0, "outcome_probability")


def choi_observable(observable, basis_in: BasisSet, basis_out: BasisSet, label: str = "choi_observable") -> AffineFunctional:
    """
    Tr(C O) for a Hermitian O on H_in (x) H_out. Trace preservation fixes the
    identity-row components of C, which end up in the offset Tr(O)/d_out.
    """
    mat = HermitianOperator(as_matrix(observable)).matrix
    d_in, d_out = basis_in.dim, basis_out.dim
    if mat.shape[0] != d_in * d_out:
        raise ValidationError(f"Joint operator dim {mat.shape[0]} does not match d_in*d_out = {d_in * d_out}")
    tensor = mat.reshape(d_in, d_out, d_in, d_out)
    u = np.einsum("abcd,jca,idb->ij", tensor, basis_in.full_stack, basis_out.stack).real
    return AffineFunctional(u.reshape(-1) / d_out, np.trace(mat).real / d_out, label)


def process_fidelity_to_unitary(choi_u: ChoiMatrix, basis_in: BasisSet, basis_out: BasisSet) -> AffineFunctional:
    """Tr(C C_U)/d_in^2 for the Choi matrix C_U of a unitary channel"""
    eig = choi_u.op.eigenvalues
    if eig.size > 1 and np.max(np.abs(eig[:-1])) > RANK_ONE_TOL:
        raise ValidationError("Target Choi matrix is not rank one (not a unitary channel)")
    return choi_observable(choi_u.matrix / choi_u.d_in ** 2, basis_in, basis_out, "process_fidelity")


def output_observable(rho_in, observable_out, basis_in: BasisSet, basis_out: BasisSet) -> AffineFunctional:
    """Tr(Phi[rho_in] O_out) = Tr((rho_in^T (x) O_out) C)"""
    mat = HermitianOperator(as_matrix(observable_out)).matrix
    rbar = embed_input_state(rho_in, basis_in).rbar
    coeffs = np.kron(_coefficients(mat, basis_out), rbar)
    return AffineFunctional(coeffs, np.trace(mat).real / basis_out.dim, "output_observable")


def output_probability(rho_in, effect_out, basis_in: BasisSet, basis_out: BasisSet) -> AffineFunctional:
    """Probability of effect E_out on the output for input rho_in"""
    functional = output_observable(rho_in, as_matrix(effect_out), basis_in, basis_out)
    return AffineFunctional(functional.coeffs, functional.offset, "output_probability")


def _solve_pair(functional: AffineFunctional, poly: Polyhedron, backend: Optional[str]):
    problems = [LpProblem(functional.coeffs, poly, Sense.MIN), LpProblem(functional.coeffs, poly, Sense.MAX)]
    if settings.threads > 1:
        with ThreadPoolExecutor(max_workers=2) as pool:
            return list(pool.map(lambda p: solve(p, backend), problems))
    return [solve(p, backend) for p in problems]


def interval(functional: AffineFunctional, poly: Polyhedron, backend: Optional[str] = None) -> ConfidenceInterval:
    """[offset + min, offset + max] of the functional over the polyhedron, unclipped"""
    if functional.dim != poly.ambient_dim:
        raise ValidationError(f"Functional has length {functional.dim}, polyhedron lives in R^{poly.ambient_dim}")
    if not is_bounded(poly):
        raise UnboundedRegionError(
            "Confidence region is unbounded: the measurement protocol is not informationally complete"
        )
    low, high = _solve_pair(functional, poly, backend)
    for solution in (low, high):
        _raise_for_status(solution)
    lo = functional.offset + low.value
    hi = functional.offset + high.value
    # both optima of a constant objective agree up to rounding
    hi = max(hi, lo)
    logger.debug("Interval extracted", label=functional.label, lo=lo, hi=hi, cl=poly.confidence_level)
    return ConfidenceInterval(lo, hi, poly.confidence_level, functional.label)


def _raise_for_status(solution: LpSolution):
    if solution.status == LpStatus.UNBOUNDED:
        raise UnboundedRegionError(
            "Functional is unbounded over the confidence region: the protocol is not informationally complete"
        )
    if solution.status == LpStatus.INFEASIBLE:
        raise EmptyRegionError("Confidence region is empty for this data and allocation")

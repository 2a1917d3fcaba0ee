"""
Linear programs over confidence polyhedra
maximize / minimize k . x subject to A x <= b with x free in sign
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import TYPE_CHECKING, List, Optional, Tuple

import numpy as np
from scipy.optimize import linprog as scipy_linprog

from polytomo.config import settings
from polytomo.errors import LpNumericalError, ValidationError
from polytomo.logger import get_logger

if TYPE_CHECKING:
    from polytomo.polytope import Polyhedron

logger = get_logger(__name__)

CERTIFICATE_TOL = 1e-8


class Sense(str, enum.Enum):
    MAX = "max"
    MIN = "min"


class LpStatus(str, enum.Enum):
    OPTIMAL = "optimal"
    UNBOUNDED = "unbounded"
    INFEASIBLE = "infeasible"


@dataclass(frozen=True, eq=False)
class LpProblem:
    objective: np.ndarray
    poly: "Polyhedron"
    sense: Sense = Sense.MAX

    def __post_init__(self):
        objective = np.array(self.objective, dtype=float).reshape(-1)
        if objective.size != self.poly.ambient_dim:
            raise ValidationError(
                f"Objective has length {objective.size}, polyhedron lives in R^{self.poly.ambient_dim}"
            )
        object.__setattr__(self, "objective", objective)
        object.__setattr__(self, "sense", Sense(self.sense))


@dataclass(frozen=True, eq=False)
class LpSolution:
    status: LpStatus
    value: Optional[float] = None
    point: Optional[np.ndarray] = None
    iterations: int = 0


class DenseSimplex:
    """
    Two-phase primal simplex on a dense tableau with Bland's anti-cycling rule.
    Solves min c . x s.t. A x <= b, x free, through the split x = u - v with u, v >= 0.
    """

    def __init__(self, tol: Optional[float] = None, max_iterations: Optional[int] = None):
        self.tol = settings.lp_tolerance if tol is None else tol
        self.max_iterations = settings.lp_max_iterations if max_iterations is None else max_iterations
        self.iterations = 0

    @staticmethod
    def _pivot(T: np.ndarray, row: int, col: int):
        T[row] /= T[row, col]
        factors = T[:, col].copy()
        factors[row] = 0.0
        T -= np.outer(factors, T[row])

    def _leaving_row(self, T: np.ndarray, col: int, basis: List[int]) -> int:
        column = T[:-1, col]
        rows = np.flatnonzero(column > self.tol)
        if rows.size == 0:
            return -1
        ratios = T[rows, -1] / column[rows]
        best = ratios.min()
        ties = rows[ratios <= best + 1e-12 * max(1.0, abs(best))]
        # Bland: smallest basic variable index among the tied rows
        return int(min(ties, key=lambda r: basis[r]))

    def _iterate(self, T: np.ndarray, basis: List[int], ncols: int) -> LpStatus:
        while True:
            entering = np.flatnonzero(T[-1, :ncols] < -self.tol)
            if entering.size == 0:
                return LpStatus.OPTIMAL
            col = int(entering[0])
            row = self._leaving_row(T, col, basis)
            if row < 0:
                return LpStatus.UNBOUNDED
            self._pivot(T, row, col)
            basis[row] = col
            self.iterations += 1
            if self.iterations > self.max_iterations:
                raise LpNumericalError(f"Simplex exceeded {self.max_iterations} iterations")

    def solve(self, c: np.ndarray, A: np.ndarray, b: np.ndarray) -> Tuple[LpStatus, Optional[np.ndarray]]:
        p, m = A.shape
        n_real = 2 * m + p
        negative = np.flatnonzero(b < 0)
        k = negative.size

        T = np.zeros((p + 1, n_real + k + 1))
        T[:p, :m] = A
        T[:p, m:2 * m] = -A
        T[:p, 2 * m:n_real] = np.eye(p)
        T[:p, -1] = b
        T[negative, :n_real] *= -1.0
        T[negative, -1] *= -1.0
        basis = [2 * m + i for i in range(p)]
        for idx, r in enumerate(negative):
            T[r, n_real + idx] = 1.0
            basis[r] = n_real + idx

        if k:
            # Phase I: minimize the sum of artificials
            T[-1, n_real:n_real + k] = 1.0
            for r in negative:
                T[-1] -= T[r]
            self._iterate(T, basis, n_real + k)
            infeasibility = -T[-1, -1]
            if infeasibility > self.tol:
                logger.debug("LP infeasible", phase_one_value=infeasibility)
                return LpStatus.INFEASIBLE, None
            redundant = []
            for r in range(p):
                if basis[r] >= n_real:
                    candidates = np.flatnonzero(np.abs(T[r, :n_real]) > self.tol)
                    if candidates.size:
                        self._pivot(T, r, int(candidates[0]))
                        basis[r] = int(candidates[0])
                    else:
                        redundant.append(r)
            if redundant:
                T = np.delete(T, redundant, axis=0)
                basis = [col for r, col in enumerate(basis) if r not in set(redundant)]
            T = np.delete(T, np.arange(n_real, n_real + k), axis=1)

        cost = np.concatenate([c, -c, np.zeros(p)])
        T[-1] = 0.0
        T[-1, :n_real] = cost
        for r, col in enumerate(basis):
            if cost[col] != 0.0:
                T[-1] -= cost[col] * T[r]
        status = self._iterate(T, basis, n_real)
        if status != LpStatus.OPTIMAL:
            return status, None
        y = np.zeros(n_real)
        for r, col in enumerate(basis):
            y[col] = T[r, -1]
        return LpStatus.OPTIMAL, y[:m] - y[m:2 * m]


def _solve_highs(c: np.ndarray, A: np.ndarray, b: np.ndarray) -> Tuple[LpStatus, Optional[np.ndarray], int]:
    m = c.size
    result = scipy_linprog(
        c,
        A_ub=A if A.shape[0] else None,
        b_ub=b if A.shape[0] else None,
        bounds=[(None, None)] * m,
        method="highs",
    )
    if result.status == 0:
        return LpStatus.OPTIMAL, np.asarray(result.x, dtype=float), int(result.nit)
    if result.status == 2:
        return LpStatus.INFEASIBLE, None, int(result.nit)
    if result.status == 3:
        return LpStatus.UNBOUNDED, None, int(result.nit)
    raise LpNumericalError(f"HiGHS failed: {result.message}")


def solve(problem: LpProblem, backend: Optional[str] = None) -> LpSolution:
    """Optimize the objective over the polyhedron; OPTIMAL answers are certificate-checked"""
    backend = backend or settings.lp_backend
    A, b = problem.poly.A, problem.poly.b
    k = problem.objective
    c = k if problem.sense == Sense.MIN else -k

    if backend == "simplex":
        simplex = DenseSimplex()
        status, x = simplex.solve(c, A, b)
        iterations = simplex.iterations
    elif backend == "highs":
        status, x, iterations = _solve_highs(c, A, b)
    else:
        raise ValueError(f"Unknown LP backend: {backend}")

    if status != LpStatus.OPTIMAL:
        logger.debug("LP finished without optimum", status=status.value, backend=backend)
        return LpSolution(status, iterations=iterations)

    if A.shape[0]:
        violation = float(np.max(A @ x - b))
        if violation > CERTIFICATE_TOL:
            logger.error("LP certificate check failed", backend=backend, violation=violation)
            raise LpNumericalError(f"Optimal point violates a constraint by {violation:.3e}")
    x.setflags(write=False)
    value = float(k @ x)
    logger.debug("LP solved", sense=problem.sense.value, value=value, iterations=iterations, backend=backend)
    return LpSolution(LpStatus.OPTIMAL, value, x, iterations)

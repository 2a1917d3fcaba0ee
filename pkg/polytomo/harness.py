"""
Monte-Carlo studies: coverage of confidence polyhedra (failure fraction vs epsilon)
and the spread of process-fidelity intervals over repeated experiments
"""
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
from tqdm import tqdm

from polytomo.clopper_pearson import QPT, QST, EpsilonAllocation, uniform_allocation
from polytomo.config import settings
from polytomo.errors import EmptyRegionError, PolytomoError, ProtocolError, UnboundedRegionError, ValidationError
from polytomo.functionals import interval, process_fidelity_to_unitary
from polytomo.logger import get_logger
from polytomo.operators import (
    ChoiMatrix,
    DensityMatrix,
    basis_for_dim,
    choi_of_unitary,
    embed_choi,
    embed_state,
)
from polytomo.polytope import build_qpt_polytope, build_qst_polytope, contains
from polytomo.simulator import MeasurementProtocol, run_qpt_experiment, run_qst_experiment, spawn_seed

logger = get_logger(__name__)

TrueObject = Union[DensityMatrix, ChoiMatrix]


def coverage_allowance(epsilon: float, trials: int) -> float:
    """epsilon plus three binomial standard errors"""
    if trials < 1:
        raise ValidationError(f"trials must be >= 1, got {trials}")
    return epsilon + 3.0 * math.sqrt(epsilon * (1.0 - epsilon) / trials)


def _check_grid(epsilon_grid: Sequence[float], trials: int) -> List[float]:
    grid = [float(e) for e in epsilon_grid]
    if not grid:
        raise ValidationError("Epsilon grid is empty")
    if any(not 0.0 < e < 1.0 for e in grid):
        raise ValidationError(f"Epsilon grid entries must lie in (0, 1), got {grid}")
    if trials < 1:
        raise ValidationError(f"trials must be >= 1, got {trials}")
    return grid


def _run_trials(fn: Callable[[int], list], trials: int, desc: str) -> list:
    """Run fn over trial indices, in parallel when POLYTOMO_THREADS > 1; results stay in trial order"""
    indices = range(trials)
    if settings.threads > 1:
        with ThreadPoolExecutor(max_workers=settings.threads) as pool:
            results = pool.map(fn, indices)
            return list(tqdm(results, total=trials, desc=desc, disable=not settings.show_progress))
    return [fn(t) for t in tqdm(indices, total=trials, desc=desc, disable=not settings.show_progress)]


@dataclass
class CoverageReport:
    kind: str
    epsilon_grid: List[float]
    f_fail: List[float]
    trials: int
    seed: int
    protocol: Dict
    exact: bool = False
    build_failures: List[int] = field(default_factory=list)

    def __post_init__(self):
        if len(self.epsilon_grid) != len(self.f_fail):
            raise ValidationError("epsilon_grid and f_fail must have the same length")
        if any(not 0.0 <= f <= 1.0 for f in self.f_fail):
            raise ValidationError("f_fail entries must lie in [0, 1]")
        if not self.build_failures:
            self.build_failures = [0] * len(self.epsilon_grid)

    @property
    def allowance(self) -> List[float]:
        return [coverage_allowance(e, self.trials) for e in self.epsilon_grid]

    @property
    def passed(self) -> bool:
        return all(f <= a for f, a in zip(self.f_fail, self.allowance))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "epsilon": self.epsilon_grid,
                "f_fail": self.f_fail,
                "trials": [self.trials] * len(self.epsilon_grid),
                "allowance": self.allowance,
                "build_failures": self.build_failures,
            }
        )

    def to_csv(self, path) -> None:
        self.to_frame()[["epsilon", "f_fail", "trials"]].to_csv(path, index=False, float_format="%.17g")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "epsilon": self.epsilon_grid,
            "f_fail": self.f_fail,
            "trials": self.trials,
            "seed": self.seed,
            "protocol": self.protocol,
            "exact": self.exact,
            "allowance": self.allowance,
            "build_failures": self.build_failures,
            "passed": self.passed,
        }


@dataclass(frozen=True)
class IntervalRecord:
    epsilon: float
    trial: int
    lo: float
    hi: float
    contains_truth: bool

    def __post_init__(self):
        if self.lo > self.hi:
            raise ValidationError(f"Interval bounds are inverted: [{self.lo}, {self.hi}]")


@dataclass
class IntervalSweep:
    epsilon_grid: List[float]
    records: List[IntervalRecord]
    true_value: float
    trials: int
    seed: int
    protocol: Dict
    unbounded: Dict[float, int] = field(default_factory=dict)
    infeasible: Dict[float, int] = field(default_factory=dict)

    def for_epsilon(self, epsilon: float) -> List[IntervalRecord]:
        return [r for r in self.records if r.epsilon == epsilon]

    def miss_fraction(self, epsilon: float) -> float:
        """Fraction of trials whose interval misses the true value; unreported trials count as misses"""
        hits = sum(r.contains_truth for r in self.for_epsilon(epsilon))
        return 1.0 - hits / self.trials

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [(r.epsilon, r.lo, r.hi, r.contains_truth, r.trial) for r in self.records],
            columns=["epsilon", "lo", "hi", "contains_truth", "trial"],
        )

    def to_csv(self, path) -> None:
        self.to_frame()[["epsilon", "lo", "hi", "contains_truth"]].to_csv(path, index=False, float_format="%.17g")

    def to_dict(self) -> dict:
        return {
            "true_value": self.true_value,
            "trials": self.trials,
            "seed": self.seed,
            "protocol": self.protocol,
            "epsilon": self.epsilon_grid,
            "intervals": [
                {"epsilon": r.epsilon, "trial": r.trial, "lo": r.lo, "hi": r.hi, "contains_truth": r.contains_truth}
                for r in self.records
            ],
            "unbounded": [self.unbounded.get(e, 0) for e in self.epsilon_grid],
            "infeasible": [self.infeasible.get(e, 0) for e in self.epsilon_grid],
        }


def _kind_of(true_object: TrueObject, protocol: MeasurementProtocol) -> str:
    kind = QST if isinstance(true_object, DensityMatrix) else QPT if isinstance(true_object, ChoiMatrix) else None
    if kind is None:
        raise ValidationError(f"True object must be a DensityMatrix or ChoiMatrix, got {type(true_object).__name__}")
    if kind != protocol.kind:
        raise ProtocolError(f"A {kind.upper()} true object needs a {kind.upper()} protocol, got {protocol.kind}")
    return kind


def coverage_experiment(
    true_object: TrueObject,
    protocol: MeasurementProtocol,
    epsilon_grid: Sequence[float],
    trials: Optional[int] = None,
    seed: int = 0,
    exact: bool = False,
) -> CoverageReport:
    """
    For every epsilon, allocate uniformly to confidence level 1 - epsilon and count
    the trials whose polyhedron misses the true embedding. Each trial's simulated
    counts are shared by the whole epsilon grid.
    """
    trials = settings.default_trials if trials is None else trials
    grid = _check_grid(epsilon_grid, trials)
    kind = _kind_of(true_object, protocol)
    allocations: List[EpsilonAllocation] = [uniform_allocation(protocol.shape, 1.0 - e) for e in grid]
    run_log = logger.bind(kind=kind, seed=seed)

    if kind == QST:
        truth = embed_state(true_object, basis_for_dim(protocol.d_out)).r
    else:
        truth = embed_choi(true_object, basis_for_dim(protocol.d_in), basis_for_dim(protocol.d_out)).c

    def one_trial(t: int) -> list:
        trial_seed = spawn_seed(seed, t)
        if kind == QST:
            data = run_qst_experiment(true_object, protocol, trial_seed, exact)
        else:
            data = run_qpt_experiment(true_object, protocol, trial_seed, exact)
        outcome = []
        for alloc in allocations:
            try:
                poly = build_qst_polytope(data, alloc) if kind == QST else build_qpt_polytope(data, alloc)
            except (ProtocolError, ValidationError) as e:
                run_log.warning("Polytope build failed; counted as failure", trial=t, error=str(e))
                outcome.append((False, True))
                continue
            outcome.append((contains(poly, truth), False))
        return outcome

    run_log.info("Coverage experiment started", trials=trials, grid=grid, exact=exact)
    results = _run_trials(one_trial, trials, f"coverage {kind}")
    failures = [sum(not trial[k][0] for trial in results) for k in range(len(grid))]
    build_failures = [sum(trial[k][1] for trial in results) for k in range(len(grid))]
    report = CoverageReport(
        kind=kind,
        epsilon_grid=grid,
        f_fail=[f / trials for f in failures],
        trials=trials,
        seed=seed,
        protocol=protocol.describe(),
        exact=exact,
        build_failures=build_failures,
    )
    run_log.info("Coverage experiment finished", f_fail=report.f_fail, passed=report.passed)
    return report


def fidelity_sweep(
    true_choi: ChoiMatrix,
    protocol: MeasurementProtocol,
    target_unitary,
    epsilon_grid: Sequence[float],
    trials: Optional[int] = None,
    seed: int = 0,
    exact: bool = False,
    backend: Optional[str] = None,
) -> IntervalSweep:
    """Process-fidelity intervals to target_unitary for every trial and epsilon"""
    trials = settings.default_trials if trials is None else trials
    grid = _check_grid(epsilon_grid, trials)
    if _kind_of(true_choi, protocol) != QPT:
        raise ProtocolError("fidelity_sweep needs a QPT protocol")
    basis_in, basis_out = basis_for_dim(protocol.d_in), basis_for_dim(protocol.d_out)
    functional = process_fidelity_to_unitary(choi_of_unitary(np.asarray(target_unitary)), basis_in, basis_out)
    true_value = functional.evaluate(embed_choi(true_choi, basis_in, basis_out).c)
    allocations = [uniform_allocation(protocol.shape, 1.0 - e) for e in grid]
    run_log = logger.bind(kind=QPT, seed=seed)

    def one_trial(t: int) -> list:
        data = run_qpt_experiment(true_choi, protocol, spawn_seed(seed, t), exact)
        outcome = []
        for eps, alloc in zip(grid, allocations):
            try:
                ci = interval(functional, build_qpt_polytope(data, alloc), backend)
            except UnboundedRegionError:
                outcome.append((eps, "unbounded"))
                continue
            except EmptyRegionError:
                outcome.append((eps, "infeasible"))
                continue
            except PolytomoError as e:
                run_log.error("Interval extraction failed", trial=t, epsilon=eps, error=str(e))
                raise
            outcome.append((eps, IntervalRecord(eps, t, ci.lo, ci.hi, ci.contains(true_value))))
        return outcome

    run_log.info("Fidelity sweep started", trials=trials, grid=grid, true_value=true_value)
    results = _run_trials(one_trial, trials, "fidelity sweep")
    records: List[IntervalRecord] = []
    unbounded = {e: 0 for e in grid}
    infeasible = {e: 0 for e in grid}
    for trial in results:
        for eps, item in trial:
            if item == "unbounded":
                unbounded[eps] += 1
            elif item == "infeasible":
                infeasible[eps] += 1
            else:
                records.append(item)
    sweep = IntervalSweep(grid, records, true_value, trials, seed, protocol.describe(), unbounded, infeasible)
    run_log.info(
        "Fidelity sweep finished",
        records=len(records),
        unbounded=sum(unbounded.values()),
        infeasible=sum(infeasible.values()),
    )
    return sweep

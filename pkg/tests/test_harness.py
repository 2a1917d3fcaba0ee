import sys
import os
import numpy as np
import pandas as pd
import pytest
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))
from polytomo.config import settings
from polytomo.errors import ProtocolError, ValidationError
from polytomo.harness import CoverageReport, coverage_allowance, coverage_experiment, fidelity_sweep
from polytomo.simulator import depolarizing_channel, ghz_state, qpt_protocol, qst_protocol

ACCEPTANCE = os.environ.get("POLYTOMO_ACCEPTANCE") == "1"
GRID = [0.5, 0.2, 0.1, 0.05, 0.01]


def test_coverage_allowance():
    assert coverage_allowance(0.1, 1000) == pytest.approx(0.1 + 3 * np.sqrt(0.09 / 1000))
    with pytest.raises(ValidationError):
        coverage_allowance(0.1, 0)


def test_exact_frequencies_never_fail():
    report = coverage_experiment(ghz_state(1), qst_protocol(1, 1000), GRID, trials=3, seed=1, exact=True)
    assert report.f_fail == [0.0] * len(GRID)
    assert report.passed
    qpt = coverage_experiment(
        depolarizing_channel(1, 0.1), qpt_protocol(1, 1000), [0.5, 0.01], trials=2, seed=1, exact=True
    )
    assert qpt.kind == "qpt"
    assert qpt.f_fail == [0.0, 0.0]


def test_scaled_qst_coverage_is_below_allowance():
    report = coverage_experiment(ghz_state(1), qst_protocol(1, 1000), [0.5, 0.1], trials=100, seed=11)
    assert report.trials == 100
    for eps, f, allowance in zip(report.epsilon_grid, report.f_fail, report.allowance):
        assert 0.0 <= f <= allowance
    # a smaller epsilon gives a larger region
    assert report.f_fail[1] <= report.f_fail[0]


def test_coverage_is_deterministic_and_thread_independent(monkeypatch):
    args = (ghz_state(1), qst_protocol(1, 200), [0.5, 0.2], 20, 5)
    first = coverage_experiment(*args)
    assert coverage_experiment(*args).f_fail == first.f_fail
    monkeypatch.setattr(settings, "threads", 3)
    assert coverage_experiment(*args).f_fail == first.f_fail


def test_coverage_rejects_bad_inputs():
    with pytest.raises(ValidationError):
        coverage_experiment(ghz_state(1), qst_protocol(1, 100), [0.0], trials=1)
    with pytest.raises(ValidationError):
        coverage_experiment(ghz_state(1), qst_protocol(1, 100), [0.5], trials=0)
    with pytest.raises(ProtocolError):
        coverage_experiment(ghz_state(1), qpt_protocol(1, 100), [0.5], trials=1)


def test_coverage_report_exports(tmp_path):
    report = CoverageReport("qst", [0.5, 0.1], [0.02, 0.0], 50, 3, {"kind": "qst"})
    path = tmp_path / "coverage.csv"
    report.to_csv(path)
    frame = pd.read_csv(path)
    assert list(frame.columns) == ["epsilon", "f_fail", "trials"]
    assert frame["trials"].tolist() == [50, 50]
    assert report.to_dict()["passed"] is True
    with pytest.raises(ValidationError):
        CoverageReport("qst", [0.5], [1.5], 10, 0, {})


def test_fidelity_sweep_contains_true_fidelity(tmp_path):
    sweep = fidelity_sweep(
        depolarizing_channel(1, 0.1), qpt_protocol(1, 1000), np.eye(2), [0.5], trials=5, seed=3
    )
    assert sweep.true_value == pytest.approx(0.925)
    assert len(sweep.records) == 5
    for record in sweep.records:
        assert record.lo <= record.hi
        assert record.contains_truth
    assert sweep.miss_fraction(0.5) == 0.0
    assert sweep.unbounded == {0.5: 0} and sweep.infeasible == {0.5: 0}
    path = tmp_path / "sweep.csv"
    sweep.to_csv(path)
    assert list(pd.read_csv(path).columns) == ["epsilon", "lo", "hi", "contains_truth"]


def test_fidelity_sweep_exact_frequencies_has_margin():
    sweep = fidelity_sweep(
        depolarizing_channel(1, 0.1), qpt_protocol(1, 5000), np.eye(2), [0.5, 0.05], trials=1, seed=0, exact=True
    )
    for record in sweep.records:
        assert record.lo < sweep.true_value < record.hi


@pytest.mark.skipif(not ACCEPTANCE, reason="set POLYTOMO_ACCEPTANCE=1 for full-scale runs")
def test_acceptance_qst_coverage():
    report = coverage_experiment(ghz_state(1), qst_protocol(1, 10000), GRID, trials=1000, seed=2024)
    for eps, f in zip(GRID, report.f_fail):
        assert f <= coverage_allowance(eps, 1000)
        if eps >= 0.05:
            assert f <= 0.5 * eps


@pytest.mark.skipif(not ACCEPTANCE, reason="set POLYTOMO_ACCEPTANCE=1 for full-scale runs")
def test_acceptance_qpt_coverage():
    report = coverage_experiment(depolarizing_channel(1, 0.1), qpt_protocol(1, 10000), GRID, trials=300, seed=2024)
    for eps, f in zip(GRID, report.f_fail):
        assert f <= coverage_allowance(eps, 300)


@pytest.mark.skipif(not ACCEPTANCE, reason="set POLYTOMO_ACCEPTANCE=1 for full-scale runs")
@pytest.mark.parametrize("shots", [1000, 10000, 100000])
def test_acceptance_fidelity_intervals(shots):
    sweep = fidelity_sweep(
        depolarizing_channel(1, 0.1), qpt_protocol(1, shots), np.eye(2), [0.5], trials=100, seed=shots
    )
    assert len(sweep.records) == 100
    assert all(r.contains_truth for r in sweep.records)

"""
Command-line entry point for polytomo
One handler per subcommand; failures are logged with context and mapped to exit codes
"""
import argparse
import sys
from typing import Optional, Sequence, Union

from polytomo.clopper_pearson import QPT, QST, EpsilonAllocation, uniform_allocation
from polytomo.config import settings
from polytomo.datafiles import (
    QPT_FUNCTIONALS,
    QST_FUNCTIONALS,
    AllocationFile,
    CandidateFile,
    DatasetFile,
    ExperimentSpec,
    ResultFile,
    load_dataset,
    load_functional,
    load_model,
    write_text,
)
from polytomo.errors import DatasetFormatError, EmptyRegionError, PolytomoError, UnboundedRegionError
from polytomo.functionals import interval
from polytomo.harness import coverage_experiment, fidelity_sweep
from polytomo.logger import get_logger
from polytomo.operators import ChoiMatrix, HermitianOperator, embed_choi, embed_state, is_density_matrix
from polytomo.polytope import (
    Polyhedron,
    QptDataset,
    QstDataset,
    build_qpt_polytope,
    build_qst_polytope,
    check_membership,
    is_bounded,
)
from polytomo.simulator import run_qpt_experiment, run_qst_experiment

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_PARSE = 1
EXIT_UNBOUNDED = 2
EXIT_INFEASIBLE = 3

Dataset = Union[QstDataset, QptDataset]


class ArgumentParser(argparse.ArgumentParser):
    """Usage errors exit with the parse code; 2 is reserved for unbounded regions"""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_PARSE, f"{self.prog}: error: {message}\n")


def _emit(text: str, output: Optional[str]):
    if output:
        write_text(output, text)
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _allocation(data: Dataset, args) -> EpsilonAllocation:
    if args.epsilon_file:
        alloc = load_model(AllocationFile, args.epsilon_file).to_allocation()
        if alloc.kind != data.shape.kind:
            raise DatasetFormatError(
                f"Allocation is for {alloc.kind} but the dataset is {data.shape.kind}", field="kind"
            )
        return alloc
    return uniform_allocation(data.shape, args.confidence)


def _polytope(data: Dataset, alloc: EpsilonAllocation) -> Polyhedron:
    if isinstance(data, QstDataset):
        return build_qst_polytope(data, alloc)
    return build_qpt_polytope(data, alloc)


def _bases(data: Dataset):
    if isinstance(data, QstDataset):
        return data.basis, data.basis
    return data.basis_in, data.basis_out


def _spec_seed(spec: ExperimentSpec, args) -> int:
    return spec.seed if args.seed is None else args.seed


def cmd_simulate(args) -> int:
    """Simulate one experiment and write its dataset"""
    spec = load_model(ExperimentSpec, args.spec)
    seed = _spec_seed(spec, args)
    exact = spec.exact or args.exact_frequencies
    truth, protocol = spec.true_object(), spec.protocol()
    if spec.kind == QST:
        data = run_qst_experiment(truth, protocol, seed, exact)
    else:
        data = run_qpt_experiment(truth, protocol, seed, exact)
    _emit(DatasetFile.from_dataset(data).model_dump_json(indent=2), args.output)
    logger.info("Dataset simulated", kind=spec.kind, seed=seed, exact=exact)
    return EXIT_OK


def cmd_check(args) -> int:
    """Membership of a candidate state or Choi matrix in the confidence polyhedron"""
    data = load_dataset(args.dataset)
    candidate = load_model(CandidateFile, args.candidate)
    expected = "state" if isinstance(data, QstDataset) else "choi"
    if candidate.kind != expected:
        raise DatasetFormatError(f"Candidate is a {candidate.kind}, dataset needs a {expected}", field="kind")
    matrix = HermitianOperator(candidate.to_matrix()).matrix
    basis_in, basis_out = _bases(data)
    if isinstance(data, QstDataset):
        point = embed_state(matrix, basis_out).r
        physical = is_density_matrix(matrix)
    else:
        point = embed_choi(matrix, basis_in, basis_out).c
        try:
            ChoiMatrix.from_matrix(matrix, data.d_in, data.d_out)
            physical = True
        except PolytomoError:
            physical = False

    alloc = _allocation(data, args)
    poly = _polytope(data, alloc)
    report = check_membership(poly, point)
    diagnostics = {"min_slack": report.min_slack, "bounded": is_bounded(poly)}
    if report.violated_source is not None:
        diagnostics["violated"] = report.violated_source.as_dict()
    result = ResultFile(
        command="check",
        confidence_level=poly.confidence_level,
        legacy_confidence_level=poly.legacy_confidence_level,
        membership=report.member,
        physical=physical,
        diagnostics=diagnostics,
    )
    _emit(result.to_json(), args.output)
    return EXIT_OK


def cmd_interval(args) -> int:
    """Confidence interval of an affine functional over the confidence polyhedron"""
    data = load_dataset(args.dataset)
    spec = load_functional(args.functional)
    allowed = QST_FUNCTIONALS if isinstance(data, QstDataset) else QPT_FUNCTIONALS
    if spec.type not in allowed:
        raise DatasetFormatError(
            f"Functional {spec.type!r} does not apply to a {data.shape.kind} dataset", field="type"
        )
    alloc = _allocation(data, args)
    poly = _polytope(data, alloc)
    basis_in, basis_out = _bases(data)
    functional = spec.build(poly.ambient_dim, basis_in, basis_out)
    ci = interval(functional, poly, args.backend)
    result = ResultFile(
        command="interval",
        confidence_level=ci.confidence_level,
        legacy_confidence_level=poly.legacy_confidence_level,
        interval={
            "lo": ci.lo,
            "hi": ci.hi,
            "width": ci.width,
            "label": ci.label,
            "exceeds_physical_range": ci.exceeds(),
        },
        bounded=True,
        diagnostics={"constraints": len(poly), "ambient_dim": poly.ambient_dim},
    )
    _emit(result.to_json(), args.output)
    return EXIT_OK


def cmd_coverage(args) -> int:
    """Monte-Carlo coverage of the confidence polyhedra over an epsilon grid"""
    spec = load_model(ExperimentSpec, args.spec)
    report = coverage_experiment(
        spec.true_object(),
        spec.protocol(),
        spec.epsilon_grid,
        trials=args.trials or spec.trials,
        seed=_spec_seed(spec, args),
        exact=spec.exact or args.exact_frequencies,
    )
    if args.format == "csv":
        report.to_csv(args.output or sys.stdout)
    else:
        _emit(ResultFile(command="coverage", coverage=report.to_dict()).to_json(), args.output)
    return EXIT_OK


def cmd_sweep(args) -> int:
    """Process-fidelity intervals over repeated simulated experiments"""
    spec = load_model(ExperimentSpec, args.spec)
    if spec.kind != QPT:
        raise DatasetFormatError("sweep needs a qpt experiment", field="kind")
    sweep = fidelity_sweep(
        spec.true_object(),
        spec.protocol(),
        spec.unitary(),
        spec.epsilon_grid,
        trials=args.trials or spec.trials,
        seed=_spec_seed(spec, args),
        exact=spec.exact or args.exact_frequencies,
        backend=args.backend,
    )
    if args.format == "csv":
        sweep.to_csv(args.output or sys.stdout)
    else:
        _emit(ResultFile(command="sweep", sweep=sweep.to_dict()).to_json(), args.output)
    return EXIT_OK


def cmd_bounded(args) -> int:
    """Informational completeness of the dataset's protocol"""
    data = load_dataset(args.dataset)
    alloc = _allocation(data, args)
    poly = _polytope(data, alloc)
    bounded = is_bounded(poly, args.method)
    result = ResultFile(
        command="bounded",
        confidence_level=poly.confidence_level,
        bounded=bounded,
        diagnostics={"method": args.method, "constraints": len(poly), "ambient_dim": poly.ambient_dim},
    )
    _emit(result.to_json(), args.output)
    if not bounded:
        logger.warning("Protocol is not informationally complete", dataset=args.dataset)
        return EXIT_UNBOUNDED
    return EXIT_OK


def _add_confidence(parser: argparse.ArgumentParser):
    parser.add_argument("--confidence", type=float, default=0.95, help="target confidence level (uniform allocation)")
    parser.add_argument("--epsilon-file", help="explicit per-effect epsilon allocation (JSON)")


def _add_experiment(parser: argparse.ArgumentParser):
    parser.add_argument("spec", help="experiment specification (JSON or YAML)")
    parser.add_argument("--seed", type=int, help="overrides the seed in the specification")
    parser.add_argument("--exact-frequencies", action="store_true", help="counts = round(n p) instead of sampling")


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(prog="polytomo", description="Confidence polytopes for quantum state and process tomography")
    parser.add_argument("--version", action="version", version=f"%(prog)s {settings.app_version}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=ArgumentParser)

    p = sub.add_parser("simulate", help="simulate an experiment and write a dataset")
    _add_experiment(p)
    p.add_argument("--output", "-o")
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser("check", help="test a candidate for membership in the confidence region")
    p.add_argument("dataset")
    p.add_argument("candidate")
    _add_confidence(p)
    p.add_argument("--output", "-o")
    p.set_defaults(handler=cmd_check)

    p = sub.add_parser("interval", help="confidence interval of an affine functional")
    p.add_argument("dataset")
    p.add_argument("--functional", "-f", required=True, help="functional specification: JSON/YAML file or inline JSON")
    _add_confidence(p)
    p.add_argument("--backend", choices=["simplex", "highs"])
    p.add_argument("--output", "-o")
    p.set_defaults(handler=cmd_interval)

    p = sub.add_parser("coverage", help="Monte-Carlo coverage study")
    _add_experiment(p)
    p.add_argument("--trials", type=int)
    p.add_argument("--output", "-o")
    p.add_argument("--format", choices=["json", "csv"], default="json")
    p.set_defaults(handler=cmd_coverage)

    p = sub.add_parser("sweep", help="process-fidelity interval study")
    _add_experiment(p)
    p.add_argument("--trials", type=int)
    p.add_argument("--backend", choices=["simplex", "highs"])
    p.add_argument("--output", "-o")
    p.add_argument("--format", choices=["json", "csv"], default="json")
    p.set_defaults(handler=cmd_sweep)

    p = sub.add_parser("bounded", help="decide whether the confidence region is bounded")
    p.add_argument("dataset")
    p.add_argument("--method", choices=["rank", "recession"], default="rank")
    _add_confidence(p)
    p.add_argument("--output", "-o")
    p.set_defaults(handler=cmd_bounded)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except UnboundedRegionError as e:
        logger.error("Confidence region is unbounded", command=args.command, error=str(e))
        sys.stderr.write(f"polytomo: {e}\n")
        return EXIT_UNBOUNDED
    except EmptyRegionError as e:
        logger.error("Confidence region is empty", command=args.command, error=str(e))
        sys.stderr.write(f"polytomo: {e}\n")
        return EXIT_INFEASIBLE
    except (PolytomoError, ValueError) as e:
        logger.error("Command failed", command=args.command, error=str(e))
        sys.stderr.write(f"polytomo: {e}\n")
        return EXIT_PARSE

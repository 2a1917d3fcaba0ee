"""
File formats: measurement datasets, candidates, functional and experiment
specifications, epsilon allocations and command results.
Complex matrices are nested arrays whose entries are [re, im] pairs (plain
numbers are read as real entries).
"""
import json
from pathlib import Path
from typing import Annotated, Any, Dict, List, Literal, Optional, Tuple, Type, TypeVar, Union

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, TypeAdapter, model_validator
from pydantic import ValidationError as SchemaError

from polytomo.clopper_pearson import QPT, QST, EpsilonAllocation
from polytomo.errors import DatasetFormatError, PolytomoError
from polytomo.functionals import (
    AffineFunctional,
    choi_observable,
    constant_functional,
    fidelity_to_pure,
    observable_mean,
    outcome_probability,
    output_observable,
    output_probability,
    process_fidelity_to_unitary,
)
from polytomo.logger import get_logger
from polytomo.operators import BasisSet, ChoiMatrix, DensityMatrix, Povm, basis_for_dim, choi_of_unitary
from polytomo.polytope import QptDataset, QstDataset
from polytomo.simulator import (
    MeasurementProtocol,
    depolarizing_channel,
    ghz_state,
    qpt_protocol,
    qst_protocol,
)

logger = get_logger(__name__)

Entry = Union[Tuple[float, float], float]
Vector = List[Entry]
Matrix = List[List[Entry]]

M = TypeVar("M", bound=BaseModel)


def decode_vector(entries: Vector) -> np.ndarray:
    return np.array([complex(*e) if isinstance(e, (tuple, list)) else complex(e) for e in entries], dtype=complex)


def decode_matrix(rows: Matrix) -> np.ndarray:
    widths = {len(row) for row in rows}
    if len(widths) > 1:
        raise DatasetFormatError("Matrix rows have different lengths")
    return np.array([decode_vector(row) for row in rows], dtype=complex)


def encode_vector(vec) -> List[List[float]]:
    return [[float(z.real), float(z.imag)] for z in np.asarray(vec, dtype=complex).reshape(-1)]


def encode_matrix(mat) -> List[List[List[float]]]:
    return [encode_vector(row) for row in np.asarray(mat, dtype=complex)]


class _Document(BaseModel):
    model_config = ConfigDict(extra="forbid")


class DatasetFile(_Document):
    """
    QST: povms is a list of POVMs, counts one row per POVM.
    QPT: povms is shared by every input unless input_povms gives one POVM list per
    input; counts has one block per input and one row per POVM.
    """

    kind: Literal["qst", "qpt"]
    dim_in: int = Field(ge=1)
    dim_out: int = Field(ge=1)
    inputs: List[Matrix] = Field(default_factory=list)
    povms: List[List[Matrix]] = Field(default_factory=list)
    input_povms: Optional[List[List[List[Matrix]]]] = None
    counts: List[Any]

    @model_validator(mode="after")
    def _check_layout(self):
        if self.kind == QST:
            if self.inputs or self.input_povms:
                raise ValueError("QST datasets take no inputs or input_povms")
            if self.dim_in != self.dim_out:
                raise ValueError("QST datasets need dim_in == dim_out")
            _check_depth(self.counts, 2, "counts")
        else:
            if not self.inputs:
                raise ValueError("QPT datasets need input states")
            if self.input_povms is None and not self.povms:
                raise ValueError("QPT datasets need povms or input_povms")
            _check_depth(self.counts, 3, "counts")
        return self

    def to_dataset(self) -> Union[QstDataset, QptDataset]:
        try:
            if self.kind == QST:
                basis = basis_for_dim(self.dim_out)
                return QstDataset(_decode_povms(self.povms), self.counts, basis)
            inputs = tuple(DensityMatrix.from_matrix(decode_matrix(m)) for m in self.inputs)
            if self.input_povms is not None:
                povms = tuple(_decode_povms(block) for block in self.input_povms)
            else:
                shared = _decode_povms(self.povms)
                povms = tuple(shared for _ in inputs)
            return QptDataset(inputs, povms, self.counts, basis_for_dim(self.dim_in), basis_for_dim(self.dim_out))
        except DatasetFormatError:
            raise
        except PolytomoError as e:
            raise DatasetFormatError(f"Dataset does not describe a valid experiment: {e}", field="counts") from e

    @classmethod
    def from_dataset(cls, data: Union[QstDataset, QptDataset]) -> "DatasetFile":
        if isinstance(data, QstDataset):
            return cls(
                kind=QST,
                dim_in=data.dim,
                dim_out=data.dim,
                povms=_encode_povms(data.povms),
                counts=[list(row) for row in data.counts],
            )
        shared = all(block is data.povms[0] for block in data.povms)
        return cls(
            kind=QPT,
            dim_in=data.d_in,
            dim_out=data.d_out,
            inputs=[encode_matrix(rho.matrix) for rho in data.inputs],
            povms=_encode_povms(data.povms[0]) if shared else [],
            input_povms=None if shared else [_encode_povms(block) for block in data.povms],
            counts=[[list(row) for row in block] for block in data.counts],
        )


def _check_depth(value: Any, depth: int, name: str):
    if depth == 0:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ValueError(f"{name} must hold integers, got {value!r}")
        return
    if not isinstance(value, list):
        raise ValueError(f"{name} must be nested {depth} levels deep")
    for item in value:
        _check_depth(item, depth - 1, name)


def _decode_povms(povms: List[List[Matrix]]) -> Tuple[Povm, ...]:
    return tuple(Povm.from_matrices([decode_matrix(e) for e in effects]) for effects in povms)


def _encode_povms(povms) -> List[List[List[List[List[float]]]]]:
    return [[encode_matrix(e.matrix) for e in povm.effects] for povm in povms]


class CandidateFile(_Document):
    """A state (kind 'state') or a Choi matrix on H_in (x) H_out (kind 'choi') to test for membership"""

    kind: Literal["state", "choi"]
    matrix: Matrix
    dim_in: Optional[int] = None
    dim_out: Optional[int] = None

    def to_matrix(self) -> np.ndarray:
        return decode_matrix(self.matrix)


class _FunctionalBase(_Document):
    def build(self, ambient_dim: int, basis_in: BasisSet, basis_out: BasisSet) -> AffineFunctional:
        raise NotImplementedError


class FidelityToPureSpec(_FunctionalBase):
    type: Literal["fidelity_to_pure"]
    state: Vector

    def build(self, ambient_dim, basis_in, basis_out):
        return fidelity_to_pure(decode_vector(self.state), basis_out)


class ObservableSpec(_FunctionalBase):
    type: Literal["observable"]
    matrix: Matrix

    def build(self, ambient_dim, basis_in, basis_out):
        return observable_mean(decode_matrix(self.matrix), basis_out)


class OutcomeProbabilitySpec(_FunctionalBase):
    type: Literal["outcome_probability"]
    effect: Matrix

    def build(self, ambient_dim, basis_in, basis_out):
        return outcome_probability(decode_matrix(self.effect), basis_out)


class ProcessFidelitySpec(_FunctionalBase):
    type: Literal["process_fidelity"]
    unitary: Matrix

    def build(self, ambient_dim, basis_in, basis_out):
        return process_fidelity_to_unitary(choi_of_unitary(decode_matrix(self.unitary)), basis_in, basis_out)


class ChoiObservableSpec(_FunctionalBase):
    type: Literal["choi_observable"]
    matrix: Matrix

    def build(self, ambient_dim, basis_in, basis_out):
        return choi_observable(decode_matrix(self.matrix), basis_in, basis_out)


class OutputObservableSpec(_FunctionalBase):
    type: Literal["output_observable"]
    input: Matrix
    observable: Matrix

    def build(self, ambient_dim, basis_in, basis_out):
        return output_observable(decode_matrix(self.input), decode_matrix(self.observable), basis_in, basis_out)


class OutputProbabilitySpec(_FunctionalBase):
    type: Literal["output_probability"]
    input: Matrix
    effect: Matrix

    def build(self, ambient_dim, basis_in, basis_out):
        return output_probability(decode_matrix(self.input), decode_matrix(self.effect), basis_in, basis_out)


class ConstantSpec(_FunctionalBase):
    type: Literal["constant"]
    value: float

    def build(self, ambient_dim, basis_in, basis_out):
        return constant_functional(self.value, ambient_dim)


FunctionalSpec = Annotated[
    Union[
        FidelityToPureSpec,
        ObservableSpec,
        OutcomeProbabilitySpec,
        ProcessFidelitySpec,
        ChoiObservableSpec,
        OutputObservableSpec,
        OutputProbabilitySpec,
        ConstantSpec,
    ],
    Field(discriminator="type"),
]

_functional_adapter = TypeAdapter(FunctionalSpec)

QST_FUNCTIONALS = {"fidelity_to_pure", "observable", "outcome_probability", "constant"}
QPT_FUNCTIONALS = {"process_fidelity", "choi_observable", "output_observable", "output_probability", "constant"}


class AllocationFile(_Document):
    """Explicit per-effect epsilons, nested exactly like the dataset counts"""

    kind: Literal["qst", "qpt"]
    epsilons: List[Any]

    def to_allocation(self) -> EpsilonAllocation:
        try:
            return EpsilonAllocation(self.kind, self.epsilons)
        except (PolytomoError, TypeError) as e:
            raise DatasetFormatError(f"Invalid epsilon allocation: {e}", field="epsilons") from e


class ExperimentSpec(_Document):
    """Simulated experiment: which true object, which protocol, how many shots and trials"""

    kind: Literal["qst", "qpt"]
    source: Optional[Literal["ghz", "depolarizing", "custom"]] = None
    num_qubits: int = Field(default=1, ge=1)
    p: float = Field(default=0.0, ge=0.0, le=1.0)
    state: Optional[Matrix] = None
    choi: Optional[Matrix] = None
    shots: int = Field(ge=0)
    seed: int = Field(default=0, ge=0)
    exact: bool = False
    readout_error: Optional[List[List[float]]] = None
    allow_large: bool = False
    epsilon_grid: List[float] = Field(default_factory=lambda: [0.5, 0.2, 0.1, 0.05, 0.01])
    trials: Optional[int] = Field(default=None, ge=1)
    target_unitary: Optional[Matrix] = None

    @model_validator(mode="after")
    def _check_source(self):
        if self.source is None:
            self.source = "ghz" if self.kind == QST else "depolarizing"
        allowed = {QST: {"ghz", "custom"}, QPT: {"depolarizing", "custom"}}[self.kind]
        if self.source not in allowed:
            raise ValueError(f"source {self.source!r} is not available for {self.kind} experiments")
        if self.source == "custom" and self.kind == QST and self.state is None:
            raise ValueError("custom QST experiments need a state matrix")
        if self.source == "custom" and self.kind == QPT and self.choi is None:
            raise ValueError("custom QPT experiments need a choi matrix")
        return self

    def true_object(self) -> Union[DensityMatrix, ChoiMatrix]:
        d = 2 ** self.num_qubits
        if self.kind == QST:
            if self.source == "custom":
                return DensityMatrix.from_matrix(decode_matrix(self.state))
            return ghz_state(self.num_qubits)
        if self.source == "custom":
            return ChoiMatrix.from_matrix(decode_matrix(self.choi), d, d)
        return depolarizing_channel(self.num_qubits, self.p)

    def protocol(self) -> MeasurementProtocol:
        build = qst_protocol if self.kind == QST else qpt_protocol
        return build(self.num_qubits, self.shots, self.readout_error, self.allow_large)

    def unitary(self) -> np.ndarray:
        if self.target_unitary is None:
            return np.eye(2 ** self.num_qubits, dtype=complex)
        return decode_matrix(self.target_unitary)


class ResultFile(_Document):
    command: str
    confidence_level: Optional[float] = None
    legacy_confidence_level: Optional[float] = None
    interval: Optional[Dict[str, Any]] = None
    membership: Optional[bool] = None
    physical: Optional[bool] = None
    bounded: Optional[bool] = None
    coverage: Optional[Dict[str, Any]] = None
    sweep: Optional[Dict[str, Any]] = None
    diagnostics: Dict[str, Any] = Field(default_factory=dict)

    def to_json(self) -> str:
        return self.model_dump_json(indent=2, exclude_none=True)


YAML_SUFFIXES = (".yaml", ".yml")


def read_document(path) -> Any:
    """Parse a JSON or YAML file, reporting syntax errors with their line"""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise DatasetFormatError(f"Cannot read {path}: {e.strerror}") from e
    if Path(path).suffix.lower() in YAML_SUFFIXES:
        try:
            return yaml.safe_load(text)
        except yaml.YAMLError as e:
            mark = getattr(e, "problem_mark", None)
            raise DatasetFormatError(
                f"Malformed YAML in {path}", line=mark.line + 1 if mark is not None else None
            ) from e
    return parse_document(text, str(path))


def parse_document(text: str, origin: str = "<inline>") -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise DatasetFormatError(f"Malformed JSON in {origin}: {e.msg}", line=e.lineno) from e


def _schema_error(e: SchemaError, origin: str) -> DatasetFormatError:
    first = e.errors()[0]
    field = ".".join(str(part) for part in first["loc"]) or None
    return DatasetFormatError(f"Invalid document {origin}: {first['msg']}", field=field)


def validate_document(model: Type[M], doc: Any, origin: str = "<document>") -> M:
    try:
        return model.model_validate(doc)
    except SchemaError as e:
        raise _schema_error(e, origin) from e


def load_model(model: Type[M], path) -> M:
    return validate_document(model, read_document(path), str(path))


def load_dataset(path) -> Union[QstDataset, QptDataset]:
    data = load_model(DatasetFile, path).to_dataset()
    logger.debug("Dataset loaded", path=str(path), kind=data.shape.kind, settings=len(data.shape.settings()))
    return data


def load_functional(source: str):
    """A functional spec from a JSON/YAML file path or an inline JSON object"""
    if source.lstrip().startswith("{"):
        doc, origin = parse_document(source, "<inline functional>"), "<inline functional>"
    else:
        doc, origin = read_document(source), source
    try:
        return _functional_adapter.validate_python(doc)
    except SchemaError as e:
        raise _schema_error(e, origin) from e


def write_text(path, text: str) -> None:
    Path(path).write_text(text if text.endswith("\n") else text + "\n", encoding="utf-8")

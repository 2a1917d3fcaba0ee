"""
Experiment simulator
GHZ states, depolarizing channels, tetrahedron inputs, Pauli readout POVMs,
Born-rule distributions and seeded multinomial sampling
"""
import itertools
import math
from dataclasses import dataclass
from functools import reduce
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from polytomo.clopper_pearson import QPT, QST, ProtocolShape
from polytomo.config import settings
from polytomo.errors import ProtocolError, ValidationError
from polytomo.logger import get_logger
from polytomo.operators import (
    ATOL,
    PAULI_MATRICES,
    ChoiMatrix,
    DensityMatrix,
    Povm,
    apply_choi,
    as_matrix,
    basis_for_dim,
    choi_of_channel,
    state_from_vector,
)
from polytomo.polytope import QptDataset, QstDataset

logger = get_logger(__name__)

BORN_CLIP_TOL = 1e-12
TETRAHEDRON_BLOCH = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], dtype=float) / math.sqrt(3.0)
AXES = ("x", "y", "z")

SeedLike = Union[int, np.random.Generator]


@dataclass(frozen=True, eq=False)
class MeasurementProtocol:
    """
    Measurement settings of an experiment. For QPT every input state is measured
    with every POVM; shots_per_setting copies go to each (input, POVM) pair.
    """

    kind: str
    povms: Tuple[Povm, ...]
    shots_per_setting: int
    inputs: Tuple[DensityMatrix, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "povms", tuple(self.povms))
        object.__setattr__(self, "inputs", tuple(self.inputs))
        if self.kind not in (QST, QPT):
            raise ProtocolError(f"Unknown protocol kind {self.kind!r}")
        if not self.povms:
            raise ProtocolError("Protocol has no POVMs")
        if self.shots_per_setting < 0:
            raise ProtocolError(f"shots_per_setting must be nonnegative, got {self.shots_per_setting}")
        if len({p.dim for p in self.povms}) != 1:
            raise ProtocolError("Protocol POVMs have mismatched dimensions")
        if self.kind == QPT:
            if not self.inputs:
                raise ProtocolError("QPT protocol has no input states")
            if len({rho.dim for rho in self.inputs}) != 1:
                raise ProtocolError("QPT input states have mismatched dimensions")
        elif self.inputs:
            raise ProtocolError("QST protocol takes no input states")

    @property
    def d_out(self) -> int:
        return self.povms[0].dim

    @property
    def d_in(self) -> int:
        return self.inputs[0].dim if self.inputs else self.d_out

    @property
    def shape(self) -> ProtocolShape:
        counts = tuple(len(p) for p in self.povms)
        if self.kind == QST:
            return ProtocolShape(QST, counts)
        return ProtocolShape(QPT, tuple(counts for _ in self.inputs))

    def describe(self) -> dict:
        return {
            "kind": self.kind,
            "d_in": self.d_in,
            "d_out": self.d_out,
            "inputs": len(self.inputs),
            "povms": len(self.povms),
            "shots_per_setting": self.shots_per_setting,
        }


def _check_qubits(num_qubits: int):
    if num_qubits < 1:
        raise ValidationError(f"Number of qubits must be >= 1, got {num_qubits}")


def ghz_state(num_qubits: int) -> DensityMatrix:
    """(|0...0> + |1...1>)/sqrt(2)"""
    _check_qubits(num_qubits)
    psi = np.zeros(2 ** num_qubits, dtype=complex)
    psi[0] = psi[-1] = 1.0 / math.sqrt(2.0)
    return state_from_vector(psi)


def depolarizing_channel(num_qubits: int, p: float) -> ChoiMatrix:
    """Choi matrix of rho -> (1-p) rho + p Tr(rho) 1/2^N"""
    _check_qubits(num_qubits)
    if not 0.0 <= p <= 1.0:
        raise ValidationError(f"Depolarizing strength must lie in [0, 1], got {p}")
    d = 2 ** num_qubits
    return choi_of_channel(lambda m: (1.0 - p) * m + p * np.trace(m) * np.eye(d) / d, d, d)


def _bloch_state(vector: np.ndarray) -> np.ndarray:
    x, y, z = vector
    return (PAULI_MATRICES["I"] + x * PAULI_MATRICES["X"] + y * PAULI_MATRICES["Y"] + z * PAULI_MATRICES["Z"]) / 2


def tetrahedron_inputs(num_qubits: int) -> List[DensityMatrix]:
    """4^N product states, each qubit in one of the four tetrahedron states"""
    _check_qubits(num_qubits)
    single = [_bloch_state(v) for v in TETRAHEDRON_BLOCH]
    return [
        DensityMatrix.from_matrix(reduce(np.kron, [single[a] for a in combo]))
        for combo in itertools.product(range(4), repeat=num_qubits)
    ]


def _axis_projectors(axis: str) -> Tuple[np.ndarray, np.ndarray]:
    sigma = PAULI_MATRICES[axis.upper()]
    eye = PAULI_MATRICES["I"]
    return (eye + sigma) / 2, (eye - sigma) / 2


def _check_confusion(matrix) -> np.ndarray:
    m = np.asarray(matrix, dtype=float)
    if m.shape != (2, 2):
        raise ValidationError(f"Readout confusion matrix must be 2x2, got shape {m.shape}")
    if np.any(m < -ATOL) or np.max(np.abs(m.sum(axis=0) - 1.0)) > ATOL:
        raise ValidationError("Readout confusion matrix must be column stochastic")
    return m


def pauli_povms(num_qubits: int, readout_error=None) -> List[Povm]:
    """
    One POVM per axis string in {x,y,z}^N; effects are tensor products of the
    per-qubit (+, -) projectors, ordered lexicographically over outcome bits.
    readout_error is a 2x2 matrix M[reported, true]; each qubit's effects
    become E_a = sum_b M[a, b] P_b.
    """
    _check_qubits(num_qubits)
    confusion = _check_confusion(readout_error) if readout_error is not None else None
    povms = []
    for axes in itertools.product(AXES, repeat=num_qubits):
        per_qubit = []
        for axis in axes:
            projectors = _axis_projectors(axis)
            if confusion is not None:
                projectors = tuple(confusion[a, 0] * projectors[0] + confusion[a, 1] * projectors[1] for a in range(2))
            per_qubit.append(projectors)
        effects = [
            reduce(np.kron, [per_qubit[q][bit] for q, bit in enumerate(bits)])
            for bits in itertools.product((0, 1), repeat=num_qubits)
        ]
        povms.append(Povm.from_matrices(effects))
    return povms


def born_distribution(rho, povm: Povm) -> np.ndarray:
    """p_i = Tr(rho E_i), with round-off negatives clipped and the vector renormalized"""
    mat = as_matrix(rho)
    if mat.shape[0] != povm.dim:
        raise ValidationError(f"State dim {mat.shape[0]} does not match POVM dim {povm.dim}")
    probs = np.array([np.trace(mat @ e.matrix).real for e in povm.effects])
    if probs.min() < -BORN_CLIP_TOL:
        raise ValidationError(f"Negative outcome probability {probs.min():.3e}; state is not physical")
    probs = np.clip(probs, 0.0, None)
    return probs / probs.sum()


def derive_seed(seed: int, *keys: int) -> np.random.SeedSequence:
    """Sub-seed for one setting, mixed from the experiment seed and the setting's index tuple"""
    return np.random.SeedSequence(int(seed) % 2 ** 64, spawn_key=tuple(int(k) for k in keys))


def derive_rng(seed: int, *keys: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(derive_seed(seed, *keys)))


def spawn_seed(seed: int, *keys: int) -> int:
    """64-bit integer seed for a nested experiment, e.g. one Monte-Carlo trial"""
    return int(derive_seed(seed, *keys).generate_state(1, np.uint64)[0])


def sample_counts(dist: Sequence[float], shots: int, seed: SeedLike) -> Tuple[int, ...]:
    """Multinomial draw of shots outcomes, deterministic given the seed"""
    probs = np.asarray(dist, dtype=float)
    if shots < 0:
        raise ValidationError(f"Number of shots must be nonnegative, got {shots}")
    if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-9:
        raise ValidationError("Distribution must be nonnegative and sum to 1")
    if shots == 0:
        return (0,) * probs.size
    rng = seed if isinstance(seed, np.random.Generator) else derive_rng(seed)
    return tuple(int(n) for n in rng.multinomial(shots, probs / probs.sum()))


def _measure(dist: np.ndarray, shots: int, seed: int, keys: Tuple[int, ...], exact: bool) -> Tuple[int, ...]:
    if exact:
        return tuple(int(n) for n in np.rint(shots * dist))
    return sample_counts(dist, shots, derive_rng(seed, *keys))


def run_qst_experiment(rho, protocol: MeasurementProtocol, seed: int, exact: bool = False) -> QstDataset:
    """Measure shots_per_setting copies of rho with every POVM; counts for POVM i use sub-seed (seed, i)"""
    if protocol.kind != QST:
        raise ProtocolError("run_qst_experiment needs a QST protocol")
    n = protocol.shots_per_setting
    counts = [
        _measure(born_distribution(rho, povm), n, seed, (i,), exact) for i, povm in enumerate(protocol.povms)
    ]
    return QstDataset(protocol.povms, tuple(counts), basis_for_dim(protocol.d_out))


def run_qpt_experiment(choi: ChoiMatrix, protocol: MeasurementProtocol, seed: int, exact: bool = False) -> QptDataset:
    """Send each input through the channel and measure every POVM; sub-seed (seed, input, POVM)"""
    if protocol.kind != QPT:
        raise ProtocolError("run_qpt_experiment needs a QPT protocol")
    if choi.d_in != protocol.d_in or choi.d_out != protocol.d_out:
        raise ProtocolError(
            f"Channel maps {choi.d_in} -> {choi.d_out}, protocol expects {protocol.d_in} -> {protocol.d_out}"
        )
    n = protocol.shots_per_setting
    counts = []
    for a, rho_in in enumerate(protocol.inputs):
        out = apply_choi(choi, rho_in)
        counts.append(
            tuple(_measure(born_distribution(out, povm), n, seed, (a, j), exact) for j, povm in enumerate(protocol.povms))
        )
    return QptDataset(
        protocol.inputs,
        tuple(protocol.povms for _ in protocol.inputs),
        tuple(counts),
        basis_for_dim(choi.d_in),
        basis_for_dim(choi.d_out),
    )


def qst_protocol(num_qubits: int, shots: int, readout_error=None, allow_large: bool = False) -> MeasurementProtocol:
    """Pauli readout of an N-qubit state"""
    if num_qubits > settings.max_qst_qubits and not allow_large:
        raise ProtocolError(
            f"QST on {num_qubits} qubits exceeds the desk-scale cap of {settings.max_qst_qubits}; pass allow_large"
        )
    return MeasurementProtocol(QST, tuple(pauli_povms(num_qubits, readout_error)), shots)


def qpt_protocol(num_qubits: int, shots: int, readout_error=None, allow_large: bool = False) -> MeasurementProtocol:
    """Tetrahedron inputs times Pauli readout on an N-qubit channel"""
    if num_qubits > settings.max_qpt_qubits and not allow_large:
        raise ProtocolError(
            f"QPT on {num_qubits} qubits exceeds the desk-scale cap of {settings.max_qpt_qubits}; pass allow_large"
        )
    return MeasurementProtocol(
        QPT,
        tuple(pauli_povms(num_qubits, readout_error)),
        shots,
        tuple(tetrahedron_inputs(num_qubits)),
    )


def random_density_matrix(dim: int, rng: np.random.Generator, rank: Optional[int] = None) -> DensityMatrix:
    """Ginibre ensemble: G G^dagger / Tr(G G^dagger)"""
    rank = dim if rank is None else rank
    if not 1 <= rank <= dim:
        raise ValidationError(f"Rank must lie in [1, {dim}], got {rank}")
    g = rng.standard_normal((dim, rank)) + 1j * rng.standard_normal((dim, rank))
    mat = g @ g.conj().T
    mat = mat / np.trace(mat).real
    return DensityMatrix.from_matrix((mat + mat.conj().T) / 2)


def random_channel(d_in: int, d_out: int, rng: np.random.Generator, rank: Optional[int] = None) -> ChoiMatrix:
    """Kraus operators cut from a random isometry V: C^d_in -> C^(rank d_out)"""
    rank = d_in * d_out if rank is None else rank
    if rank < 1 or rank * d_out < d_in:
        raise ValidationError(f"Kraus rank {rank} cannot give a trace-preserving map {d_in} -> {d_out}")
    g = rng.standard_normal((rank * d_out, d_in)) + 1j * rng.standard_normal((rank * d_out, d_in))
    q, r = np.linalg.qr(g)
    # fix the phase ambiguity of QR
    q = q * (np.diag(r) / np.abs(np.diag(r)))
    kraus = [q[k * d_out:(k + 1) * d_out, :] for k in range(rank)]
    return choi_of_channel(kraus, d_in, d_out)

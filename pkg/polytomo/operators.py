"""
Finite-dimensional operator algebra
Hermitian operators, states, effects, POVMs, orthogonal Hermitian bases,
Choi matrices and their real-vector embeddings
"""
import itertools
from dataclasses import dataclass
from functools import cached_property, reduce
from typing import Callable, Sequence, Tuple, Union

import numpy as np

from polytomo.errors import ValidationError
from polytomo.logger import get_logger

logger = get_logger(__name__)

# Entrywise / eigenvalue tolerance for all operator invariants
ATOL = 1e-10

PAULI_MATRICES = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}

MatrixLike = Union[np.ndarray, Sequence[Sequence[complex]]]


def as_matrix(obj) -> np.ndarray:
    """Accept typed operator wrappers or plain arrays"""
    if hasattr(obj, "matrix"):
        return obj.matrix
    return np.asarray(obj, dtype=complex)


@dataclass(frozen=True, eq=False)
class HermitianOperator:
    """Dense Hermitian matrix, validated at construction and immutable afterwards"""

    entries: np.ndarray

    def __post_init__(self):
        arr = np.array(self.entries, dtype=complex)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] == 0:
            raise ValidationError(f"Operator must be a non-empty square matrix, got shape {arr.shape}")
        deviation = np.max(np.abs(arr - arr.conj().T))
        if deviation > ATOL:
            raise ValidationError(f"Operator is not Hermitian (max deviation {deviation:.3e})")
        arr.setflags(write=False)
        object.__setattr__(self, "entries", arr)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @property
    def matrix(self) -> np.ndarray:
        return self.entries

    def trace(self) -> float:
        return float(np.trace(self.entries).real)

    @cached_property
    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.entries)


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Unit-trace positive semidefinite operator"""

    op: HermitianOperator

    def __post_init__(self):
        trace = self.op.trace()
        if abs(trace - 1.0) > ATOL:
            raise ValidationError(f"Density matrix trace is {trace!r}, expected 1")
        lowest = float(self.op.eigenvalues.min())
        if lowest < -ATOL:
            raise ValidationError(f"Density matrix is not positive semidefinite (min eigenvalue {lowest:.3e})")

    @classmethod
    def from_matrix(cls, matrix: MatrixLike) -> "DensityMatrix":
        return cls(HermitianOperator(matrix))

    @property
    def dim(self) -> int:
        return self.op.dim

    @property
    def matrix(self) -> np.ndarray:
        return self.op.entries


@dataclass(frozen=True, eq=False)
class Effect:
    """Measurement effect, 0 <= E <= 1"""

    op: HermitianOperator

    def __post_init__(self):
        eig = self.op.eigenvalues
        if eig.min() < -ATOL or eig.max() > 1.0 + ATOL:
            raise ValidationError(
                f"Effect eigenvalues must lie in [0, 1], got [{eig.min():.3e}, {eig.max():.3e}]"
            )

    @classmethod
    def from_matrix(cls, matrix: MatrixLike) -> "Effect":
        return cls(HermitianOperator(matrix))

    @property
    def dim(self) -> int:
        return self.op.dim

    @property
    def matrix(self) -> np.ndarray:
        return self.op.entries


@dataclass(frozen=True, eq=False)
class Povm:
    """Ordered tuple of effects summing to the identity"""

    effects: Tuple[Effect, ...]

    def __post_init__(self):
        effects = tuple(self.effects)
        object.__setattr__(self, "effects", effects)
        if len(effects) < 2:
            raise ValidationError(f"A POVM needs at least 2 effects, got {len(effects)}")
        dims = {e.dim for e in effects}
        if len(dims) != 1:
            raise ValidationError(f"POVM effects have mismatched dimensions {sorted(dims)}")
        total = sum(e.matrix for e in effects)
        deviation = np.max(np.abs(total - np.eye(effects[0].dim)))
        if deviation > ATOL:
            raise ValidationError(f"POVM effects do not sum to identity (max deviation {deviation:.3e})")

    @classmethod
    def from_matrices(cls, matrices: Sequence[MatrixLike]) -> "Povm":
        return cls(tuple(Effect.from_matrix(m) for m in matrices))

    @property
    def dim(self) -> int:
        return self.effects[0].dim

    def __len__(self) -> int:
        return len(self.effects)

    def __iter__(self):
        return iter(self.effects)


@dataclass(frozen=True, eq=False)
class BasisSet:
    """
    Orthogonal traceless Hermitian basis {sigma_i}, i = 1..d^2-1, with the identity
    as the implicit sigma_0 and Tr(sigma_i sigma_j) = d delta_ij.
    """

    dim: int
    sigmas: Tuple[HermitianOperator, ...]
    labels: Tuple[str, ...] = ()

    def __post_init__(self):
        sigmas = tuple(self.sigmas)
        object.__setattr__(self, "sigmas", sigmas)
        d = self.dim
        if len(sigmas) != d * d - 1:
            raise ValidationError(f"Basis for dim {d} needs {d * d - 1} operators, got {len(sigmas)}")
        if any(s.dim != d for s in sigmas):
            raise ValidationError("Basis operators have mismatched dimensions")
        full = self.full_stack
        gram = np.einsum("aij,bji->ab", full, full)
        deviation = np.max(np.abs(gram - d * np.eye(d * d)))
        if deviation > ATOL:
            raise ValidationError(f"Basis is not orthogonal with Tr(s_i s_j) = d delta_ij (deviation {deviation:.3e})")

    @cached_property
    def stack(self) -> np.ndarray:
        """sigma_1..sigma_{d^2-1} as an array of shape (d^2-1, d, d)"""
        arr = np.array([s.entries for s in self.sigmas], dtype=complex).reshape(-1, self.dim, self.dim)
        arr.setflags(write=False)
        return arr

    @cached_property
    def full_stack(self) -> np.ndarray:
        """sigma_0 = identity followed by the traceless operators"""
        arr = np.concatenate([np.eye(self.dim, dtype=complex)[None], self.stack])
        arr.setflags(write=False)
        return arr

    @property
    def size(self) -> int:
        return len(self.sigmas)


@dataclass(frozen=True, eq=False)
class ChoiMatrix:
    """Choi state of a CPTP map: positive, with Tr_out C = 1_in"""

    d_in: int
    d_out: int
    op: HermitianOperator

    def __post_init__(self):
        if self.op.dim != self.d_in * self.d_out:
            raise ValidationError(
                f"Choi matrix dim {self.op.dim} does not match d_in*d_out = {self.d_in * self.d_out}"
            )
        lowest = float(self.op.eigenvalues.min())
        if lowest < -ATOL:
            raise ValidationError(f"Choi matrix is not positive semidefinite (min eigenvalue {lowest:.3e})")
        reduced = partial_trace_output(self.op.entries, self.d_in, self.d_out)
        deviation = np.max(np.abs(reduced - np.eye(self.d_in)))
        if deviation > ATOL:
            raise ValidationError(f"Choi matrix is not trace preserving (Tr_out deviation {deviation:.3e})")

    @classmethod
    def from_matrix(cls, matrix: MatrixLike, d_in: int, d_out: int) -> "ChoiMatrix":
        return cls(d_in, d_out, HermitianOperator(matrix))

    @property
    def matrix(self) -> np.ndarray:
        return self.op.entries

    @property
    def tensor(self) -> np.ndarray:
        """Entries indexed as [in, out, in', out']"""
        return self.op.entries.reshape(self.d_in, self.d_out, self.d_in, self.d_out)


@dataclass(frozen=True, eq=False)
class StateVectorEmbedding:
    r: np.ndarray


@dataclass(frozen=True, eq=False)
class EffectEmbedding:
    eta: np.ndarray
    eta0: float


@dataclass(frozen=True, eq=False)
class InputStateEmbedding:
    rbar: np.ndarray


@dataclass(frozen=True, eq=False)
class ChoiEmbedding:
    """
    C has shape (d_out^2-1, d_in^2); c is its row-major flattening, so entry
    (i, j) sits at index (i-1)*d_in^2 + j for output index i >= 1, input index j >= 0.
    """

    C: np.ndarray

    @property
    def c(self) -> np.ndarray:
        return self.C.reshape(-1)


def partial_trace_output(matrix: np.ndarray, d_in: int, d_out: int) -> np.ndarray:
    """Tr_out of an operator on H_in (x) H_out"""
    return np.einsum("abcb->ac", np.asarray(matrix).reshape(d_in, d_out, d_in, d_out))


def is_density_matrix(op) -> bool:
    """True when the operator passes DensityMatrix validation"""
    try:
        DensityMatrix.from_matrix(as_matrix(op))
    except ValidationError:
        return False
    return True


def state_from_vector(psi: Sequence[complex]) -> DensityMatrix:
    """Pure-state projector |psi><psi|"""
    vec = np.asarray(psi, dtype=complex).reshape(-1)
    norm = np.linalg.norm(vec)
    if abs(norm - 1.0) > ATOL:
        raise ValidationError(f"State vector is not normalized (norm {norm!r})")
    return DensityMatrix.from_matrix(np.outer(vec, vec.conj()))


def build_pauli_basis(num_qubits: int) -> BasisSet:
    """
    All 4^N - 1 non-identity tensor products of {I, X, Y, Z}, lexicographic over the
    label strings with the all-I string taken as sigma_0.
    """
    if num_qubits < 1:
        raise ValidationError(f"num_qubits must be >= 1, got {num_qubits}")
    labels = ["".join(p) for p in itertools.product("IXYZ", repeat=num_qubits)][1:]
    sigmas = tuple(
        HermitianOperator(reduce(np.kron, [PAULI_MATRICES[ch] for ch in label])) for label in labels
    )
    return BasisSet(2 ** num_qubits, sigmas, tuple(labels))


def build_gell_mann_basis(dim: int) -> BasisSet:
    """Generalized Gell-Mann matrices rescaled to Tr(s_i s_j) = d delta_ij"""
    if dim < 2:
        raise ValidationError(f"Basis dimension must be >= 2, got {dim}")
    scale = np.sqrt(dim / 2.0)
    mats, labels = [], []
    for j in range(dim):
        for k in range(j + 1, dim):
            sym = np.zeros((dim, dim), dtype=complex)
            sym[j, k] = sym[k, j] = 1.0
            anti = np.zeros((dim, dim), dtype=complex)
            anti[j, k] = -1j
            anti[k, j] = 1j
            mats += [sym, anti]
            labels += [f"S{j}{k}", f"A{j}{k}"]
    for l in range(1, dim):
        diag = np.zeros(dim)
        diag[:l] = 1.0
        diag[l] = -l
        mats.append(np.diag(diag * np.sqrt(2.0 / (l * (l + 1)))).astype(complex))
        labels.append(f"D{l}")
    return BasisSet(dim, tuple(HermitianOperator(scale * m) for m in mats), tuple(labels))


def basis_for_dim(dim: int) -> BasisSet:
    """Pauli products for qubit registers, Gell-Mann otherwise"""
    if dim >= 2 and dim & (dim - 1) == 0:
        return build_pauli_basis(dim.bit_length() - 1)
    return build_gell_mann_basis(dim)


def _check_dim(expected: int, got: int, what: str):
    if expected != got:
        raise ValidationError(f"Dimension mismatch for {what}: basis dim {expected}, operator dim {got}")


def embed_state(rho, basis: BasisSet) -> StateVectorEmbedding:
    """r_i = Tr(sigma_i rho)"""
    mat = as_matrix(rho)
    _check_dim(basis.dim, mat.shape[0], "state")
    r = np.einsum("kij,ji->k", basis.stack, mat).real
    return StateVectorEmbedding(r)


def embed_effect(effect, basis: BasisSet) -> EffectEmbedding:
    """eta_i = Tr(sigma_i E)/d and eta0 = Tr(E)/d, so Tr(rho E) = r.eta + eta0"""
    mat = as_matrix(effect)
    _check_dim(basis.dim, mat.shape[0], "effect")
    d = basis.dim
    eta = np.einsum("kij,ji->k", basis.stack, mat).real / d
    return EffectEmbedding(eta, float(np.trace(mat).real) / d)


def embed_input_state(rho_in, basis: BasisSet) -> InputStateEmbedding:
    """rbar_i = Tr(sigma_i rho^T) for i = 0..d^2-1; rbar_0 is always 1"""
    mat = as_matrix(rho_in)
    _check_dim(basis.dim, mat.shape[0], "input state")
    rbar = np.einsum("kij,ji->k", basis.full_stack, mat.T).real
    return InputStateEmbedding(rbar)


def choi_of_channel(
    kraus_or_map: Union[Sequence[MatrixLike], Callable[[np.ndarray], np.ndarray]],
    d_in: int,
    d_out: int,
) -> ChoiMatrix:
    """
    C = sum_ij |i><j| (x) Phi(|i><j|). The channel is given either as a list of
    Kraus operators of shape (d_out, d_in) or as a callable acting on d_in x d_in matrices.
    """
    if callable(kraus_or_map):
        channel = kraus_or_map
    else:
        kraus = [np.asarray(k, dtype=complex) for k in kraus_or_map]
        for k in kraus:
            if k.shape != (d_out, d_in):
                raise ValidationError(f"Kraus operator has shape {k.shape}, expected {(d_out, d_in)}")

        def channel(m):
            return sum(k @ m @ k.conj().T for k in kraus)

    choi = np.zeros((d_in * d_out, d_in * d_out), dtype=complex)
    for i in range(d_in):
        for j in range(d_in):
            unit = np.zeros((d_in, d_in), dtype=complex)
            unit[i, j] = 1.0
            choi += np.kron(unit, np.asarray(channel(unit), dtype=complex))
    try:
        return ChoiMatrix.from_matrix(choi, d_in, d_out)
    except ValidationError as e:
        logger.error("Channel does not yield a valid Choi matrix", d_in=d_in, d_out=d_out, error=str(e))
        raise ValidationError(f"Supplied map is not CPTP: {e}") from e


def choi_of_unitary(unitary: MatrixLike) -> ChoiMatrix:
    """Choi matrix of rho -> U rho U^dagger"""
    u = np.asarray(unitary, dtype=complex)
    return choi_of_channel([u], u.shape[1], u.shape[0])


def apply_choi(choi: ChoiMatrix, rho_in) -> DensityMatrix:
    """Phi[rho] = Tr_in((rho^T (x) 1_out) C)"""
    mat = as_matrix(rho_in)
    if mat.shape[0] != choi.d_in:
        raise ValidationError(f"Input state dim {mat.shape[0]} does not match channel d_in {choi.d_in}")
    out = np.einsum("ca,cbad->bd", mat, choi.tensor)
    return DensityMatrix.from_matrix((out + out.conj().T) / 2)


def embed_choi(choi, basis_in: BasisSet, basis_out: BasisSet) -> ChoiEmbedding:
    """
    C_ij = Tr(C_Phi sigma^in_j (x) sigma^out_i)/d_in, i >= 1, j >= 0.
    Also accepts a raw joint operator, so unphysical candidates can be embedded.
    """
    d_in, d_out = basis_in.dim, basis_out.dim
    if isinstance(choi, ChoiMatrix):
        _check_dim(d_in, choi.d_in, "channel input")
        _check_dim(d_out, choi.d_out, "channel output")
    mat = as_matrix(choi)
    _check_dim(d_in * d_out, mat.shape[0], "joint input-output operator")
    tensor = mat.reshape(d_in, d_out, d_in, d_out)
    coeffs = np.einsum("abcd,jca,idb->ij", tensor, basis_in.full_stack, basis_out.stack).real
    return ChoiEmbedding(coeffs / d_in)


def unembed_state(r: Sequence[float], basis: BasisSet) -> HermitianOperator:
    """
    (1 + sum_i r_i sigma_i)/d. The result has unit trace but positivity is not
    enforced; wrap it in DensityMatrix to validate.
    """
    vec = np.asarray(r, dtype=float).reshape(-1)
    if vec.size != basis.size:
        raise ValidationError(f"Embedding has length {vec.size}, expected {basis.size}")
    mat = (np.eye(basis.dim) + np.einsum("k,kij->ij", vec, basis.stack)) / basis.dim
    return HermitianOperator((mat + mat.conj().T) / 2)


def unembed_choi(coeffs, basis_in: BasisSet, basis_out: BasisSet) -> HermitianOperator:
    """Inverse of embed_choi; accepts the matrix C or its flattening c"""
    d_in, d_out = basis_in.dim, basis_out.dim
    mat = np.asarray(coeffs, dtype=float).reshape(-1)
    if mat.size != d_in * d_in * (d_out * d_out - 1):
        raise ValidationError(f"Choi embedding has length {mat.size}, expected {d_in * d_in * (d_out * d_out - 1)}")
    mat = mat.reshape(d_out * d_out - 1, d_in * d_in)
    body = np.einsum("ij,jac,ibd->abcd", mat, basis_in.full_stack, basis_out.stack)
    dim = d_in * d_out
    full = (np.eye(dim) + body.reshape(dim, dim)) / d_out
    return HermitianOperator((full + full.conj().T) / 2)

"""Dense Hermitian linear algebra for small quantum systems.

Operators are complex numpy matrices in natural units (hbar = k = 1).
Everything that needs a matrix function (exponential, logarithm, Gibbs
weights) goes through one numerical kernel: the Hermitian eigendecomposition
``numpy.linalg.eigh``. Dimensions are small by design; anything above
``MAX_DIM`` is rejected rather than half-supported.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DimensionMismatchError, InvalidStateError, NonHermitianError

HERMITIAN_TOL = 1e-10
TRACE_TOL = 1e-10
NEGATIVE_EIG_TOL = 1e-9
DEGENERACY_TOL = 1e-9
ENTROPY_EIG_FLOOR = 1e-14
FANNES_VALIDITY_LIMIT = 1.0 / math.e
MAX_DIM = 64

sigma_x = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
sigma_y = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
sigma_z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)


def identity(dim: int) -> np.ndarray:
    """Identity matrix of the given dimension as a complex array."""
    return np.eye(dim, dtype=complex)


def dagger(op: np.ndarray) -> np.ndarray:
    """Conjugate transpose."""
    return op.conj().T


def as_matrix(op) -> np.ndarray:
    """Coerce an operator-like object to a square complex ndarray.

    Accepts plain arrays as well as wrapper types exposing a ``matrix``
    attribute (DensityOperator, HermitianObservable).
    """
    m = np.asarray(getattr(op, "matrix", op), dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionMismatchError(f"expected a square matrix, got shape {m.shape}")
    if m.shape[0] > MAX_DIM:
        raise DimensionMismatchError(
            f"dimension {m.shape[0]} exceeds the supported maximum {MAX_DIM}"
        )
    return m


def _check_hermitian(m: np.ndarray, tol: float, what: str) -> None:
    defect = np.max(np.abs(m - m.conj().T)) if m.size else 0.0
    if defect > tol:
        raise NonHermitianError(f"{what} is not Hermitian (defect {defect:.3e} > {tol:.1e})")


@dataclass(frozen=True)
class HermitianObservable:
    """A validated Hermitian operator.

    The stored matrix is a read-only copy; Hermiticity is enforced to
    ``HERMITIAN_TOL`` at construction.
    """

    matrix: np.ndarray

    def __post_init__(self):
        m = as_matrix(self.matrix).copy()
        _check_hermitian(m, HERMITIAN_TOL, "observable")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class DensityOperator:
    """A validated density operator.

    Construction enforces Hermiticity within ``HERMITIAN_TOL``, unit trace
    within ``TRACE_TOL``, and spectrum bounded below by ``-NEGATIVE_EIG_TOL``.
    The stored matrix is a read-only copy.
    """

    matrix: np.ndarray

    def __post_init__(self):
        m = as_matrix(self.matrix).copy()
        _check_hermitian(m, HERMITIAN_TOL, "density operator")
        tr = m.trace()
        if abs(tr - 1.0) > TRACE_TOL:
            raise InvalidStateError(f"trace is {tr:.17g}, expected 1 within {TRACE_TOL:.1e}")
        lo = float(np.linalg.eigvalsh(m)[0])
        if lo < -NEGATIVE_EIG_TOL:
            raise InvalidStateError(
                f"smallest eigenvalue {lo:.3e} is below -{NEGATIVE_EIG_TOL:.1e}"
            )
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def eigenvalues(self) -> np.ndarray:
        """Ascending real spectrum."""
        return np.linalg.eigvalsh(self.matrix)

    @classmethod
    def pure(cls, vector: Sequence[complex]) -> "DensityOperator":
        """Projector onto a (normalized copy of a) state vector."""
        v = np.asarray(vector, dtype=complex).reshape(-1)
        norm = np.linalg.norm(v)
        if norm == 0.0:
            raise InvalidStateError("cannot normalize the zero vector")
        v = v / norm
        return cls(np.outer(v, v.conj()))

    @classmethod
    def maximally_mixed(cls, dim: int) -> "DensityOperator":
        return cls(np.eye(dim, dtype=complex) / dim)

    @classmethod
    def from_diagonal(cls, populations: Sequence[float]) -> "DensityOperator":
        return cls(np.diag(np.asarray(populations, dtype=complex)))


def sanitize_density_matrix(
    m: np.ndarray, *, negative_tol: float = NEGATIVE_EIG_TOL, context: str = ""
) -> np.ndarray:
    """Repair roundoff-level defects of a density matrix.

    Hermitizes, clips eigenvalues in [-negative_tol, 0) to zero and
    renormalizes the trace. Eigenvalues below -negative_tol are a genuine
    positivity violation and raise InvalidStateError.
    """
    m = 0.5 * (m + m.conj().T)
    vals, vecs = np.linalg.eigh(m)
    lo = float(vals[0])
    if lo < -negative_tol:
        where = f" ({context})" if context else ""
        raise InvalidStateError(f"eigenvalue {lo:.3e} below -{negative_tol:.1e}{where}")
    if lo < 0.0:
        vals = np.clip(vals, 0.0, None)
        m = (vecs * vals) @ vecs.conj().T
        m = m / m.trace().real
    return m


@dataclass(frozen=True)
class SpectralDecomposition:
    """Distinct eigenvalues (ascending) with orthogonal spectral projectors."""

    values: np.ndarray
    projectors: tuple

    @property
    def dim(self) -> int:
        return self.projectors[0].shape[0]

    def reconstruct(self) -> np.ndarray:
        out = np.zeros((self.dim, self.dim), dtype=complex)
        for val, proj in zip(self.values, self.projectors):
            out += val * proj
        return out


def spectral_decomposition(op, degeneracy_tol: float = DEGENERACY_TOL) -> SpectralDecomposition:
    """Eigendecomposition with eigenvalues grouped into degenerate clusters.

    Consecutive eigenvalues closer than ``degeneracy_tol`` are merged into a
    single spectral value (the cluster mean) with a rank >= 1 projector.
    """
    m = as_matrix(op)
    _check_hermitian(m, HERMITIAN_TOL, "operator")
    vals, vecs = np.linalg.eigh(m)
    groups: list[list[int]] = [[0]]
    for i in range(1, len(vals)):
        if vals[i] - vals[groups[-1][-1]] <= degeneracy_tol:
            groups[-1].append(i)
        else:
            groups.append([i])
    distinct = np.array([float(np.mean(vals[g])) for g in groups])
    projectors = []
    for g in groups:
        block = vecs[:, g]
        proj = block @ block.conj().T
        projectors.append(0.5 * (proj + proj.conj().T))
    return SpectralDecomposition(distinct, tuple(projectors))


def tensor(*ops) -> np.ndarray:
    """Kronecker product of two or more operators."""
    if len(ops) < 2:
        raise DimensionMismatchError("tensor needs at least two factors")
    out = as_matrix(ops[0])
    for op in ops[1:]:
        out = np.kron(out, as_matrix(op))
    if out.shape[0] > MAX_DIM:
        raise DimensionMismatchError(
            f"tensor product dimension {out.shape[0]} exceeds {MAX_DIM}"
        )
    return out


def partial_trace(rho, dims: Sequence[int], keep: int):
    """Trace out all tensor factors except ``dims[keep]``.

    ``dims`` lists the factor dimensions whose product must match the matrix
    dimension. Returns the same kind of object it was given: a
    DensityOperator in, a DensityOperator out; a bare array otherwise.
    """
    m = as_matrix(rho)
    dims = [int(d) for d in dims]
    if int(np.prod(dims)) != m.shape[0]:
        raise DimensionMismatchError(
            f"factor dimensions {dims} do not multiply to {m.shape[0]}"
        )
    if not 0 <= keep < len(dims):
        raise DimensionMismatchError(f"keep index {keep} out of range for {len(dims)} factors")
    n = len(dims)
    perm = [keep] + [i for i in range(n) if i != keep]
    tensor_form = m.reshape(dims + dims).transpose(perm + [p + n for p in perm])
    d_keep = dims[keep]
    d_rest = m.shape[0] // d_keep
    reduced = np.einsum("ajbj->ab", tensor_form.reshape(d_keep, d_rest, d_keep, d_rest))
    if isinstance(rho, DensityOperator):
        return DensityOperator(reduced)
    return reduced


def von_neumann_entropy(rho) -> float:
    """Entropy -Tr(rho ln rho) in nats; eigenvalues below 1e-14 contribute 0."""
    vals = np.linalg.eigvalsh(as_matrix(rho))
    vals = vals[vals > ENTROPY_EIG_FLOOR]
    return float(-np.sum(vals * np.log(vals)))


def floored_matrix_log(rho, floor: float = ENTROPY_EIG_FLOOR):
    """Matrix logarithm of a positive semidefinite operator with a spectral floor.

    Eigenvalues below ``floor`` are lifted to it before taking logs, which
    keeps the result finite for (numerically) pure states. Returns the log
    matrix and a flag telling whether the floor was active.
    """
    m = as_matrix(rho)
    vals, vecs = np.linalg.eigh(m)
    floored = bool(vals[0] < floor)
    logvals = np.log(np.clip(vals, floor, None))
    return (vecs * logvals) @ vecs.conj().T, floored


def trace_norm_distance(rho, sigma) -> float:
    """Trace norm ||rho - sigma||_1 of the difference of two Hermitian operators."""
    a = as_matrix(rho)
    b = as_matrix(sigma)
    if a.shape != b.shape:
        raise DimensionMismatchError(f"shape mismatch {a.shape} vs {b.shape}")
    diff = a - b
    _check_hermitian(diff, 1e-9, "difference")
    return float(np.sum(np.abs(np.linalg.eigvalsh(diff))))


def fannes_bound(rho, sigma, dim: int | None = None, *, enforce_validity: bool = True) -> float:
    """Entropy-continuity bound T ln(dim) - T ln(T) with T the trace distance.

    The bound is a guarantee on |S(rho) - S(sigma)| only for T <= 1/e; by
    default a larger distance raises InvalidStateError rather than returning
    a value that no longer bounds anything. Pass ``enforce_validity=False``
    to evaluate the formula anyway.
    """
    t = trace_norm_distance(rho, sigma)
    if dim is None:
        dim = as_matrix(rho).shape[0]
    if enforce_validity and t > FANNES_VALIDITY_LIMIT + 1e-12:
        raise InvalidStateError(
            f"trace distance {t:.6f} exceeds 1/e; the continuity bound does not apply"
        )
    if t <= 0.0:
        return 0.0
    return float(t * math.log(dim) - t * math.log(t))


def gibbs_state(h, beta: float) -> DensityOperator:
    """Thermal state exp(-beta H)/Z built from the spectral decomposition of H.

    Weights are computed with the spectrum shifted by its minimum so the
    largest Boltzmann factor is exactly 1 and nothing overflows.
    """
    m = as_matrix(h)
    _check_hermitian(m, HERMITIAN_TOL, "hamiltonian")
    if not np.isfinite(beta) or beta <= 0.0:
        raise InvalidStateError(f"inverse temperature must be positive, got {beta}")
    vals, vecs = np.linalg.eigh(m)
    weights = np.exp(-beta * (vals - vals[0]))
    weights /= weights.sum()
    rho = (vecs * weights) @ vecs.conj().T
    return DensityOperator(0.5 * (rho + rho.conj().T))


def log_partition(h, beta: float) -> float:
    """ln Z for the Gibbs state of H at inverse temperature beta."""
    vals = np.linalg.eigvalsh(as_matrix(h))
    shifted = np.exp(-beta * (vals - vals[0]))
    return float(np.log(shifted.sum()) - beta * vals[0])


def time_evolution_unitary(h, t: float) -> np.ndarray:
    """exp(-i H t) through the Hermitian eigendecomposition."""
    m = as_matrix(h)
    _check_hermitian(m, HERMITIAN_TOL, "hamiltonian")
    vals, vecs = np.linalg.eigh(m)
    phases = np.exp(-1j * vals * t)
    return (vecs * phases) @ vecs.conj().T

"""Thermal-bath generators in GKLS form.

A bath is described by an inverse temperature, one or more Hermitian
coupling operators, and a spectral rate function gamma(omega) obeying
detailed balance gamma(-omega) = exp(-beta*omega) * gamma(omega). The
generator is assembled in the weak-coupling form: the coupling operator is
split into eigenoperators of the system Hamiltonian (one per Bohr
frequency) and each eigenoperator becomes a jump operator with the rate
evaluated at its frequency. No Hamiltonian (Lamb-shift) correction is
included; the unitary part of the dynamics is handled by the integrator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import hilbert
from .errors import DimensionMismatchError, InvalidStateError
from .hilbert import as_matrix, spectral_decomposition

BOHR_FREQUENCY_TOL = 1e-9
NEGLIGIBLE_OPERATOR_NORM = 1e-14


def ohmic_rate(omega: float, beta: float, strength: float = 1.0) -> float:
    """Ohmic spectral rate with detailed balance built in.

    gamma(omega) = strength * omega / (1 - exp(-beta*omega)) for omega != 0
    and the continuous limit strength/beta at omega = 0. Negative
    frequencies are evaluated through the detailed-balance relation so the
    ratio gamma(-omega)/gamma(omega) equals exp(-beta*omega) to roundoff.
    """
    if beta <= 0.0 or not math.isfinite(beta):
        raise InvalidStateError(f"inverse temperature must be positive, got {beta}")
    if abs(omega) < 1e-12:
        return strength / beta
    if omega < 0.0:
        return math.exp(beta * omega) * ohmic_rate(-omega, beta, strength)
    return strength * omega / (-math.expm1(-beta * omega))


@dataclass(frozen=True)
class BathSpec:
    """A thermal reservoir attached through Hermitian coupling operators.

    ``strength`` multiplies the rate model. ``rate_model`` defaults to the
    Ohmic form; a custom callable omega -> rate must supply its own detailed
    balance if thermal fixed points are expected.
    """

    beta: float
    coupling_ops: tuple
    strength: float = 1.0
    rate_model: Callable[[float], float] | None = None
    label: str = ""

    def __post_init__(self):
        if self.beta <= 0.0 or not math.isfinite(self.beta):
            raise InvalidStateError(f"bath beta must be positive, got {self.beta}")
        if self.strength < 0.0:
            raise InvalidStateError(f"bath strength must be >= 0, got {self.strength}")
        ops = tuple(np.asarray(as_matrix(op), dtype=complex) for op in self.coupling_ops)
        for op in ops:
            defect = np.max(np.abs(op - op.conj().T))
            if defect > hilbert.HERMITIAN_TOL:
                raise InvalidStateError("bath coupling operators must be Hermitian")
        object.__setattr__(self, "coupling_ops", ops)

    @property
    def temperature(self) -> float:
        return 1.0 / self.beta

    def rate(self, omega: float) -> float:
        if self.rate_model is not None:
            value = self.strength * self.rate_model(omega)
        else:
            value = ohmic_rate(omega, self.beta, self.strength)
        if value < 0.0:
            raise InvalidStateError(f"rate model returned {value} < 0 at omega={omega}")
        return value


@dataclass(frozen=True)
class EigenoperatorSet:
    """Decomposition of a coupling operator over Bohr frequencies.

    ``frequencies[k]`` is the energy lowered by ``operators[k]``; the set
    satisfies A(-w) = A(w)^dag and sums back to the coupling operator.
    """

    frequencies: np.ndarray
    operators: tuple

    def reconstruct(self) -> np.ndarray:
        total = np.zeros_like(self.operators[0])
        for op in self.operators:
            total = total + op
        return total


def eigenoperator_decomposition(h, coupling) -> EigenoperatorSet:
    """Split a Hermitian coupling operator into Hamiltonian eigenoperators.

    With spectral projectors P_e of H, the operator at Bohr frequency
    w = e' - e is sum of P_e A P_e'. Frequencies closer than
    ``BOHR_FREQUENCY_TOL`` are merged. All pairwise frequencies are kept,
    including those whose operator happens to vanish.
    """
    a = as_matrix(coupling)
    dec = spectral_decomposition(h)
    if dec.dim != a.shape[0]:
        raise DimensionMismatchError(
            f"coupling dimension {a.shape[0]} does not match hamiltonian {dec.dim}"
        )
    freqs: list[float] = []
    ops: list[np.ndarray] = []
    for i, (e_i, p_i) in enumerate(zip(dec.values, dec.projectors)):
        for j, (e_j, p_j) in enumerate(zip(dec.values, dec.projectors)):
            omega = float(e_j - e_i)
            piece = p_i @ a @ p_j
            for k, known in enumerate(freqs):
                if abs(omega - known) <= BOHR_FREQUENCY_TOL:
                    ops[k] = ops[k] + piece
                    break
            else:
                freqs.append(omega)
                ops.append(piece)
    order = np.argsort(freqs)
    frequencies = np.array([freqs[k] for k in order])
    operators = tuple(ops[k] for k in order)
    return EigenoperatorSet(frequencies, operators)


@dataclass
class LindbladTerm:
    """One jump operator with its nonnegative rate; derived products cached."""

    operator: np.ndarray
    rate: float
    op_dag: np.ndarray = field(init=False, repr=False)
    op_dag_op: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.rate < 0.0:
            raise InvalidStateError(f"lindblad rate must be >= 0, got {self.rate}")
        self.operator = np.asarray(self.operator, dtype=complex)
        self.op_dag = self.operator.conj().T
        self.op_dag_op = self.op_dag @ self.operator


@dataclass
class GKLSGenerator:
    """Dissipative generator L(rho) = sum_k r_k (A rho A+ - {A+A, rho}/2).

    Tagged with the bath it came from (index and inverse temperature) so
    heat and entropy-production bookkeeping can attribute its action.
    Treat instances as immutable once built.
    """

    bath_index: int
    beta: float
    dim: int
    terms: tuple

    def apply(self, rho: np.ndarray) -> np.ndarray:
        out = np.zeros((self.dim, self.dim), dtype=complex)
        for t in self.terms:
            sandwich = t.operator @ rho @ t.op_dag
            anti = t.op_dag_op @ rho + rho @ t.op_dag_op
            out += t.rate * (sandwich - 0.5 * anti)
        return out

    def superoperator(self) -> np.ndarray:
        """Row-major vectorized form: vec(L(rho)) = S @ vec(rho)."""
        eye = np.eye(self.dim, dtype=complex)
        s = np.zeros((self.dim * self.dim, self.dim * self.dim), dtype=complex)
        for t in self.terms:
            s += t.rate * (
                np.kron(t.operator, t.operator.conj())
                - 0.5 * np.kron(t.op_dag_op, eye)
                - 0.5 * np.kron(eye, t.op_dag_op.T)
            )
        return s


def build_davies_generator(h, bath: BathSpec, bath_index: int = 0) -> GKLSGenerator:
    """Assemble the weak-coupling generator of a bath for a fixed Hamiltonian.

    Each coupling operator contributes one jump term per Bohr frequency with
    rate gamma(omega); eigenoperators with negligible norm are dropped.
    """
    dim = as_matrix(h).shape[0]
    terms = []
    for coupling in bath.coupling_ops:
        eig_set = eigenoperator_decomposition(h, coupling)
        for omega, op in zip(eig_set.frequencies, eig_set.operators):
            if np.max(np.abs(op)) <= NEGLIGIBLE_OPERATOR_NORM:
                continue
            terms.append(LindbladTerm(op, bath.rate(float(omega))))
    return GKLSGenerator(bath_index=bath_index, beta=bath.beta, dim=dim, terms=tuple(terms))


def apply_generator(generator: GKLSGenerator, rho) -> np.ndarray:
    """Action of a generator on a state, as a plain matrix."""
    return generator.apply(as_matrix(rho))

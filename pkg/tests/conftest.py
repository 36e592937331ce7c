"""Shared helpers for the test suite: seeded random operators and states."""

import numpy as np
import pytest


def random_hermitian(rng, dim, scale=1.0):
    """GUE-style random Hermitian matrix with entries of order ``scale``."""
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return scale * 0.5 * (a + a.conj().T)


def random_density_matrix(rng, dim):
    """Random full-rank density matrix (Hilbert-Schmidt style G G^dag / tr)."""
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    m = g @ g.conj().T
    return m / m.trace().real


def random_pure_state(rng, dim):
    v = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    v = v / np.linalg.norm(v)
    return np.outer(v, v.conj())


def ergodic_coupling(rng, dim):
    """Random Hermitian coupling whose off-diagonal magnitudes are all 1.

    Every matrix element in any basis pair is unimodular, so the induced
    thermal jump rates are bounded away from zero and relaxation completes
    on a known timescale. Used where a test budgets a fixed relaxation time.
    """
    phases = np.exp(1j * rng.uniform(0.0, 2.0 * np.pi, size=(dim, dim)))
    m = np.ones((dim, dim), dtype=complex) * phases
    m = np.triu(m, 1)
    m = m + m.conj().T
    m += np.diag(rng.uniform(-1.0, 1.0, size=dim))
    return m


def relaxing_ensemble(rng, dim):
    """Random (H, beta, coupling) triple with a fast-mixing thermal generator.

    Adjacent level spacings are drawn from [1.6, 2.4] and the coupling is
    unimodular off the diagonal in the H eigenbasis with a spread diagonal,
    which keeps every decay mode of the resulting generator faster than
    roughly 1.5x the coupling strength. Convergence tests that budget a
    fixed horizon (20 time units to reach 1e-6) rely on that floor; fully
    unstructured draws can have near-frozen coherences between the lowest
    two levels and miss it.
    """
    gaps = rng.uniform(1.6, 2.4, size=dim - 1)
    evals = np.concatenate([[0.0], np.cumsum(gaps)])
    evals -= evals.mean()
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    basis, _ = np.linalg.qr(g)
    h = basis @ np.diag(evals) @ basis.conj().T
    c0 = np.exp(1j * rng.uniform(0.0, 2.0 * np.pi, size=(dim, dim)))
    c0 = np.tril(c0, -1)
    c0 = c0 + c0.conj().T + np.diag(np.linspace(-1.0, 1.0, dim))
    c = basis @ c0 @ basis.conj().T
    beta = float(rng.uniform(0.5, 1.2))
    return 0.5 * (h + h.conj().T), beta, 0.5 * (c + c.conj().T)


@pytest.fixture
def rng():
    return np.random.default_rng(20260817)

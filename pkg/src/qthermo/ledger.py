"""Thermodynamic bookkeeping along trajectories.

Each trajectory sample becomes a ledger row carrying internal energy,
cumulative work and per-bath heat, entropy, and the instantaneous per-bath
entropy production rate

    sigma_j = Tr( L_j(rho) (ln rho_eq_j - ln rho) ),

which is nonnegative for generators in detailed balance with their bath.
Summing over baths gives the pointwise balance dS/dt = sum_j beta_j dQ_j/dt
+ sum_j sigma_j; check_laws audits that identity together with first-law
closure row by row.

Measurement readout charges are applied on top of the physical books when a
policy is passed to accumulate: each charge enters as work performed on the
device and leaves as an equal amount of heat dumped to the attached bath,
so closure survives while cumulative work reflects the policy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError, InvalidStateError
from .generators import build_davies_generator
from .hilbert import (
    as_matrix,
    floored_matrix_log,
    log_partition,
    von_neumann_entropy,
)
from .measurement import MeasurementPolicy, MetastabilityFlag

LN2 = float(np.log(2.0))
SIGMA_FLOOR = -1e-10
ENEN_TOL = 1e-10
ERASURE_ENTROPY_WINDOW = 1e-6


@dataclass(frozen=True)
class LedgerRow:
    """One audited instant: energy, cumulative work/heat, entropy, sigma."""

    t: float
    energy: float
    work_cum: float
    heat_cum: tuple
    entropy: float
    sigma: tuple
    entropy_rate: float
    heat_rate: tuple
    betas: tuple
    event: str = ""
    spectrum_floored: bool = False


@dataclass(frozen=True)
class LawAudit:
    """Residuals and verdicts for the two laws over a ledger."""

    tol: float
    first_law_step_residual: float
    first_law_total_residual: float
    min_sigma: float
    clausius_max_residual: float

    @property
    def first_law_ok(self) -> bool:
        return (self.first_law_step_residual <= 10.0 * self.tol
                and self.first_law_total_residual <= 50.0 * self.tol)

    @property
    def sigma_ok(self) -> bool:
        return self.min_sigma >= SIGMA_FLOOR

    @property
    def clausius_ok(self) -> bool:
        return self.clausius_max_residual <= 50.0 * self.tol

    @property
    def passed(self) -> bool:
        return self.first_law_ok and self.sigma_ok and self.clausius_ok


@dataclass(frozen=True)
class ErasureBalanceReport:
    """Entropy/energy balance of a reset process against the bath.

    ``satisfies_lbound`` is None unless the process is a genuine one-bit
    erasure (system entropy drop of ln 2 within 1e-6); then it checks the
    dissipated heat against T ln 2 with matching slack.
    """

    delta_S: float
    delta_E_bath: float
    beta: float
    satisfies_enen: bool
    satisfies_lbound: bool | None
    enen_margin: float


def _physics(rho, h_t, betas, gens):
    """Pointwise thermodynamic functions of one state under built generators."""
    m = len(betas)
    energy = float(np.trace(rho @ h_t).real)
    entropy = von_neumann_entropy(rho)
    log_rho, floored = floored_matrix_log(rho)
    sigma = np.zeros(m)
    q_rate = np.zeros(m)
    s_rate = 0.0
    for j, gen in gens:
        l_rho = gen.apply(rho)
        q_rate[j] = float(np.trace(h_t @ l_rho).real)
        log_eq = -betas[j] * h_t - log_partition(h_t, betas[j]) * np.eye(len(h_t))
        sigma[j] = float(np.trace(l_rho @ (log_eq - log_rho)).real)
        s_rate -= float(np.trace(l_rho @ log_rho).real)
    return energy, entropy, sigma, s_rate, q_rate, floored


def make_row(t, rho, hamiltonian, baths, active=None, *, work_cum=0.0,
             heat_cum=None, event="") -> LedgerRow:
    """Synthesize a single ledger row outside of accumulate.

    Used by protocol drivers to book instantaneous operations (staged
    measurements, quenches) that happen between integrated schedules.
    """
    rho_m = as_matrix(rho)
    h_t = as_matrix(hamiltonian)
    betas = tuple(bath.beta for bath in baths)
    indices = tuple(range(len(baths))) if active is None else tuple(active)
    gens = [(j, build_davies_generator(h_t, baths[j], bath_index=j)) for j in indices]
    energy, entropy, sigma, s_rate, q_rate, floored = _physics(rho_m, h_t, betas, gens)
    if heat_cum is None:
        heat_cum = (0.0,) * len(betas)
    return LedgerRow(
        t=float(t), energy=energy, work_cum=float(work_cum),
        heat_cum=tuple(float(x) for x in heat_cum),
        entropy=entropy, sigma=tuple(float(x) for x in sigma),
        entropy_rate=s_rate, heat_rate=tuple(float(x) for x in q_rate),
        betas=betas, event=event, spectrum_floored=floored,
    )


def _describe_event(rec) -> str:
    if rec.kind == "quench":
        return f"quench[{rec.label}]" if rec.label else "quench"
    mode = "sel" if rec.selective else "avg"
    body = f"measure:{mode}"
    if rec.outcome is not None:
        body += f" outcome={rec.outcome} p={rec.probability:.6g}"
    if rec.label:
        body += f" {rec.label}"
    return body


def accumulate(trajectory, schedule, policy: MeasurementPolicy | None = None) -> list:
    """Build ledger rows for a trajectory run under its schedule.

    With ``policy`` set, every measurement event is charged the policy's
    readout work; the charge is simultaneously booked as heat released to
    the event's bath so that first-law closure is untouched. With
    ``policy=None`` the books are purely physical.
    """
    n = len(trajectory.times)
    if trajectory.n_baths != schedule.n_baths:
        raise InvalidStateError("trajectory and schedule disagree on bath count")
    betas = tuple(bath.beta for bath in schedule.baths)
    m = len(betas)

    work = trajectory.work.astype(float).copy()
    heat = trajectory.heat.astype(float).copy()
    annotations = [""] * n

    for rec in trajectory.events:
        note = _describe_event(rec)
        if policy is not None and rec.kind == "measure":
            flag = rec.flag if rec.flag is not None else MetastabilityFlag(False)
            bath = rec.heat_bath if rec.heat_bath is not None else 0
            if rec.n_outcomes and rec.n_outcomes > 1:
                if m == 0:
                    raise InvalidStateError(
                        "measurement charge needs a bath to set the temperature"
                    )
                temperature = 1.0 / betas[bath]
                charge = policy.charge(flag, rec.n_outcomes, temperature)
                if charge != 0.0:
                    work[rec.sample_index:] += charge
                    heat[rec.sample_index:, bath] -= charge
                    note += f" charge={charge:.6g}"
        k = min(rec.sample_index, n - 1)
        annotations[k] = note if not annotations[k] else annotations[k] + "; " + note

    rows = []
    h_cache = None
    gens_cache = None
    for k in range(n):
        t = float(trajectory.times[k])
        rho = trajectory.states[k].matrix
        h_t = as_matrix(schedule.hamiltonian_at(t))
        active = schedule.active_baths_at(t)
        if (h_cache is None or h_cache[1] != active
                or np.max(np.abs(h_t - h_cache[0])) > 1e-12 * max(1.0, np.max(np.abs(h_t)))):
            gens_cache = [
                (j, build_davies_generator(h_t, schedule.baths[j], bath_index=j))
                for j in active
            ]
            h_cache = (h_t, active)

        energy, entropy, sigma, s_rate, q_rate, floored = _physics(
            rho, h_t, betas, gens_cache)

        rows.append(LedgerRow(
            t=t, energy=energy, work_cum=float(work[k]),
            heat_cum=tuple(float(x) for x in heat[k]),
            entropy=entropy, sigma=tuple(float(x) for x in sigma),
            entropy_rate=s_rate, heat_rate=tuple(float(x) for x in q_rate),
            betas=betas, event=annotations[k], spectrum_floored=floored,
        ))
    return rows


def check_laws(rows, tol: float = 1e-8) -> LawAudit:
    """Audit first-law closure and the entropy balance over ledger rows."""
    if not rows:
        raise InvalidStateError("cannot audit an empty ledger")
    step_resid = 0.0
    for a, b in zip(rows, rows[1:]):
        de = b.energy - a.energy
        dw = b.work_cum - a.work_cum
        dq = sum(b.heat_cum) - sum(a.heat_cum)
        step_resid = max(step_resid, abs(de - dw - dq))
    first, last = rows[0], rows[-1]
    total_resid = abs(
        (last.energy - first.energy)
        - (last.work_cum - first.work_cum)
        - (sum(last.heat_cum) - sum(first.heat_cum))
    )
    min_sigma = min((s for row in rows for s in row.sigma), default=0.0)
    clausius = 0.0
    for row in rows:
        balance = row.entropy_rate - sum(
            beta * q for beta, q in zip(row.betas, row.heat_rate)
        ) - sum(row.sigma)
        clausius = max(clausius, abs(balance))
    return LawAudit(
        tol=tol,
        first_law_step_residual=step_resid,
        first_law_total_residual=total_resid,
        min_sigma=min_sigma,
        clausius_max_residual=clausius,
    )


def erasure_balance(rho_in, rho_fin, heat_to_bath: float, beta: float) -> ErasureBalanceReport:
    """Entropy/energy balance flags for a reset against one bath.

    ``heat_to_bath`` is the bath's internal energy gain (positive when the
    system dumps heat). The balance flag checks dE_bath + T dS_system >= 0;
    the stronger bound against T ln 2 is evaluated only when the system
    entropy dropped by ln 2, i.e. when the process erased one bit.
    """
    a = as_matrix(rho_in)
    b = as_matrix(rho_fin)
    if a.shape != b.shape:
        raise DimensionMismatchError(
            f"state dimensions differ: {a.shape[0]} vs {b.shape[0]}"
        )
    if beta <= 0.0:
        raise InvalidStateError("beta must be positive")
    temperature = 1.0 / beta
    delta_s = von_neumann_entropy(b) - von_neumann_entropy(a)
    margin = heat_to_bath + temperature * delta_s
    satisfies_enen = margin >= -ENEN_TOL
    if abs(delta_s + LN2) <= ERASURE_ENTROPY_WINDOW:
        satisfies_lbound = heat_to_bath >= temperature * (LN2 - ERASURE_ENTROPY_WINDOW)
    else:
        satisfies_lbound = None
    return ErasureBalanceReport(
        delta_S=delta_s,
        delta_E_bath=heat_to_bath,
        beta=beta,
        satisfies_enen=satisfies_enen,
        satisfies_lbound=satisfies_lbound,
        enen_margin=margin,
    )

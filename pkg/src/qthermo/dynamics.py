"""Time evolution of driven open systems under piecewise drive schedules.

A Schedule covers a contiguous time window with segments, each carrying a
Hamiltonian (a constant matrix or a callable of time) and the set of baths
acting during that segment. Discontinuous changes happen only through
events: a Quench switches the Hamiltonian between segments and books
switching work Tr(rho dH); a Measure applies a projective channel and books
the state's energy change as heat from an attached bath.

Integration uses a classical fourth-order Runge-Kutta stepper with step
doubling for local error control (the accepted state is the two-half-step
result plus the standard fifth-order correction). Work and per-bath heat
are integrated as auxiliary components of the same stepper, so their
quadrature order matches the trajectory itself. Dissipators are rebuilt
whenever the Hamiltonian has drifted more than a relative 1e-6 since the
last build, which keeps slow ramps adiabatic without rebuilding on every
evaluation of a static segment.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import (
    IntegrationError,
    InvalidStateError,
    NonHermitianError,
    ScheduleError,
)
from .generators import BathSpec, build_davies_generator
from .hilbert import DensityOperator, as_matrix, sanitize_density_matrix
from .measurement import (
    MetastabilityFlag,
    ProjectiveMeasurement,
    measure_nonselective,
    measure_selective,
)

TOL_MIN = 1e-12
TOL_MAX = 1e-4
TRACE_DRIFT_LIMIT = 1e-10
GENERATOR_REFRESH_RELATIVE = 1e-6
BOUNDARY_MATCH_TOL = 1e-9

_SAFETY = 0.9
_GROW_LIMIT = 5.0
_SHRINK_LIMIT = 0.1


def linear_ramp(h_start, h_end, t_start: float, t_end: float):
    """Hamiltonian and exact derivative for a linear interpolation in time."""
    h0 = as_matrix(h_start)
    h1 = as_matrix(h_end)
    slope = (h1 - h0) / (t_end - t_start)

    def ham(t: float) -> np.ndarray:
        return h0 + (t - t_start) * slope

    def ham_dot(t: float) -> np.ndarray:
        return slope

    return ham, ham_dot


@dataclass(frozen=True)
class Segment:
    """One smooth stretch of the drive.

    ``ham`` is a constant matrix or a callable t -> matrix, continuous on
    [t_start, t_end]. ``active_baths`` lists indices into the schedule's
    bath roster (None means all of them). ``ham_dot`` optionally provides
    the exact time derivative; otherwise a central difference is used.
    """

    t_start: float
    t_end: float
    ham: object
    active_baths: tuple | None = None
    ham_dot: Callable | None = None

    def __post_init__(self):
        if not self.t_end > self.t_start:
            raise ScheduleError(
                f"segment must have t_end > t_start, got [{self.t_start}, {self.t_end}]"
            )
        if not callable(self.ham):
            object.__setattr__(self, "ham", as_matrix(self.ham))

    def hamiltonian(self, t: float) -> np.ndarray:
        if callable(self.ham):
            return as_matrix(self.ham(t))
        return self.ham


@dataclass(frozen=True)
class QuenchEvent:
    """Instantaneous Hamiltonian switch at a segment boundary."""

    time: float
    h_new: np.ndarray
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "h_new", as_matrix(self.h_new))
        defect = np.max(np.abs(self.h_new - self.h_new.conj().T))
        if defect > 1e-10:
            raise NonHermitianError("quench target hamiltonian is not Hermitian")


@dataclass(frozen=True)
class MeasureEvent:
    """Projective measurement applied atomically at a point in time.

    ``heat_bath`` names the bath (by roster index) that supplies the energy
    change of the state; None defaults to bath 0 when the schedule has one.
    """

    time: float
    measurement: ProjectiveMeasurement
    selective: bool = False
    flag: MetastabilityFlag | None = None
    heat_bath: int | None = None
    label: str = ""


@dataclass(frozen=True)
class Schedule:
    """Contiguous segments plus events, with a global bath roster."""

    baths: tuple
    segments: tuple
    events: tuple = ()

    def __post_init__(self):
        baths = tuple(self.baths)
        for bath in baths:
            if not isinstance(bath, BathSpec):
                raise ScheduleError("schedule baths must be BathSpec instances")
        segments = tuple(self.segments)
        if not segments:
            raise ScheduleError("schedule needs at least one segment")
        for prev, nxt in zip(segments, segments[1:]):
            if abs(prev.t_end - nxt.t_start) > 1e-12 * max(1.0, abs(prev.t_end)):
                raise ScheduleError(
                    f"segments are not contiguous at t={prev.t_end} vs {nxt.t_start}"
                )
        for seg in segments:
            if seg.active_baths is not None:
                for idx in seg.active_baths:
                    if not 0 <= idx < len(baths):
                        raise ScheduleError(f"segment bath index {idx} out of range")
        events = tuple(self.events)
        t0, t1 = segments[0].t_start, segments[-1].t_end
        boundaries = [seg.t_start for seg in segments[1:]]
        snapped = []
        for ev in sorted(events, key=lambda e: e.time):
            if not (t0 - 1e-12 <= ev.time <= t1 + 1e-12):
                raise ScheduleError(f"event at t={ev.time} outside [{t0}, {t1}]")
            if isinstance(ev, QuenchEvent):
                match = [b for b in boundaries if abs(ev.time - b) <= BOUNDARY_MATCH_TOL]
                if not match:
                    raise ScheduleError(
                        f"quench at t={ev.time} is not at an interior segment boundary"
                    )
                if abs(ev.time - match[0]) > 0.0:
                    ev = QuenchEvent(time=match[0], h_new=ev.h_new, label=ev.label)
            elif isinstance(ev, MeasureEvent):
                if ev.heat_bath is not None and not 0 <= ev.heat_bath < len(baths):
                    raise ScheduleError(f"measure event bath index {ev.heat_bath} out of range")
            else:
                raise ScheduleError(f"unknown event type {type(ev).__name__}")
            snapped.append(ev)
        object.__setattr__(self, "baths", baths)
        object.__setattr__(self, "segments", segments)
        object.__setattr__(self, "events", tuple(snapped))
        self._validate_boundary_continuity()

    def _validate_boundary_continuity(self):
        # At every interior boundary the previous segment's endpoint, plus
        # any quench chain, must land on the next segment's start value.
        for prev, nxt in zip(self.segments, self.segments[1:]):
            t_b = nxt.t_start
            h_eff = prev.hamiltonian(prev.t_end)
            for ev in self.events:
                if isinstance(ev, QuenchEvent) and ev.time == t_b:
                    h_eff = ev.h_new
            h_next = nxt.hamiltonian(t_b)
            scale = max(1.0, float(np.max(np.abs(h_next))))
            if np.max(np.abs(h_eff - h_next)) > BOUNDARY_MATCH_TOL * scale:
                raise ScheduleError(
                    f"hamiltonian jumps at t={t_b} without a matching quench event"
                )

    @property
    def t_start(self) -> float:
        return self.segments[0].t_start

    @property
    def t_end(self) -> float:
        return self.segments[-1].t_end

    @property
    def n_baths(self) -> int:
        return len(self.baths)

    def segment_at(self, t: float) -> Segment:
        """Segment owning time t; boundaries belong to the later segment."""
        if not (self.t_start - 1e-12 <= t <= self.t_end + 1e-12):
            raise ScheduleError(f"time {t} outside schedule window")
        for seg in self.segments:
            if seg.t_start <= t < seg.t_end:
                return seg
        return self.segments[-1]

    def hamiltonian_at(self, t: float) -> np.ndarray:
        return self.segment_at(t).hamiltonian(t)

    def active_baths_at(self, t: float) -> tuple:
        seg = self.segment_at(t)
        if seg.active_baths is None:
            return tuple(range(len(self.baths)))
        return tuple(seg.active_baths)


@dataclass
class EventRecord:
    """What an event did to the run, with pre and post states."""

    time: float
    kind: str
    sample_index: int
    rho_before: np.ndarray
    rho_after: np.ndarray
    work: float = 0.0
    heat: float = 0.0
    heat_bath: int | None = None
    outcome: int | None = None
    probability: float | None = None
    n_outcomes: int | None = None
    selective: bool | None = None
    flag: MetastabilityFlag | None = None
    label: str = ""


@dataclass
class StepDiagnostics:
    n_accepted: int = 0
    n_rejected: int = 0
    n_generator_builds: int = 0
    min_step: float = math.inf
    max_step: float = 0.0
    max_trace_drift: float = 0.0


@dataclass
class Trajectory:
    """Sampled solution of a schedule run.

    Samples at event times hold the post-event state; the pre-event state
    lives in the matching EventRecord. ``work`` and ``heat`` are cumulative,
    with heat resolved per bath (columns follow the schedule's roster).
    """

    times: np.ndarray
    states: list
    work: np.ndarray
    heat: np.ndarray
    events: list
    diagnostics: StepDiagnostics
    tol: float
    n_baths: int

    @property
    def final_state(self) -> DensityOperator:
        return self.states[-1]

    def sample_index_at(self, t: float) -> int:
        idx = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[idx] - t) > 1e-9 * max(1.0, abs(t)):
            raise IntegrationError(f"no sample recorded at t={t}", time=t)
        return idx

    def state_at(self, t: float) -> DensityOperator:
        return self.states[self.sample_index_at(t)]


def apply_quench(rho, h_old, h_new):
    """Instantaneous Hamiltonian switch: state unchanged, work Tr(rho dH)."""
    state = rho if isinstance(rho, DensityOperator) else DensityOperator(rho)
    work = float(np.trace(state.matrix @ (as_matrix(h_new) - as_matrix(h_old))).real)
    return state, work


class _SegmentEngine:
    """Derivative evaluator for one segment with cached dissipators."""

    def __init__(self, segment: Segment, schedule: Schedule, diagnostics: StepDiagnostics):
        self.segment = segment
        self.schedule = schedule
        self.diagnostics = diagnostics
        self.static = not callable(segment.ham)
        if segment.active_baths is None:
            self.bath_indices = tuple(range(len(schedule.baths)))
        else:
            self.bath_indices = tuple(segment.active_baths)
        self.dim = as_matrix(segment.hamiltonian(segment.t_start)).shape[0]
        self._h_build: np.ndarray | None = None
        self._superops: list = []
        self._fd_step = 1e-6 * (segment.t_end - segment.t_start)

    def hamiltonian(self, t: float) -> np.ndarray:
        return self.segment.hamiltonian(t)

    def ham_dot(self, t: float) -> np.ndarray | None:
        if self.static:
            return None
        if self.segment.ham_dot is not None:
            return as_matrix(self.segment.ham_dot(t))
        lo = max(self.segment.t_start, t - self._fd_step)
        hi = min(self.segment.t_end, t + self._fd_step)
        return (self.segment.hamiltonian(hi) - self.segment.hamiltonian(lo)) / (hi - lo)

    def _rebuild(self, h_now: np.ndarray):
        defect = np.max(np.abs(h_now - h_now.conj().T))
        if defect > 1e-10:
            raise NonHermitianError(
                f"segment hamiltonian is not Hermitian (defect {defect:.3e})"
            )
        self._superops = []
        for idx in self.bath_indices:
            gen = build_davies_generator(h_now, self.schedule.baths[idx], bath_index=idx)
            self._superops.append((idx, gen.superoperator()))
        self._h_build = h_now.copy()
        self.diagnostics.n_generator_builds += 1

    def dissipators(self, h_now: np.ndarray) -> list:
        if self._h_build is None:
            self._rebuild(h_now)
        elif not self.static:
            scale = float(np.max(np.abs(h_now)))
            drift = float(np.max(np.abs(h_now - self._h_build)))
            if drift > GENERATOR_REFRESH_RELATIVE * scale:
                self._rebuild(h_now)
        return self._superops

    def derivative(self, t: float, rho: np.ndarray):
        """Returns (drho/dt, dW/dt, dQ_j/dt for the full bath roster)."""
        h_now = self.hamiltonian(t)
        drho = -1j * (h_now @ rho - rho @ h_now)
        heat = np.zeros(self.schedule.n_baths)
        if self.bath_indices:
            vec = rho.reshape(-1)
            h_row = h_now.T.reshape(-1)
            for idx, sup in self.dissipators(h_now):
                dvec = sup @ vec
                heat[idx] = float(np.dot(h_row, dvec).real)
                drho = drho + dvec.reshape(self.dim, self.dim)
        hdot = self.ham_dot(t)
        work = 0.0 if hdot is None else float(np.trace(rho @ hdot).real)
        return drho, work, heat


def _rk4(engine: _SegmentEngine, t: float, rho, w, q, h, k1=None):
    if k1 is None:
        k1 = engine.derivative(t, rho)
    k2 = engine.derivative(t + 0.5 * h, rho + 0.5 * h * k1[0])
    k3 = engine.derivative(t + 0.5 * h, rho + 0.5 * h * k2[0])
    k4 = engine.derivative(t + h, rho + h * k3[0])
    rho_out = rho + (h / 6.0) * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
    w_out = w + (h / 6.0) * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
    q_out = q + (h / 6.0) * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2])
    return rho_out, w_out, q_out, k1


class _Run:
    """Mutable integration state shared across segments."""

    def __init__(self, rho0: DensityOperator, schedule: Schedule, tol: float,
                 rng, sample_stride: int, max_steps: int):
        self.schedule = schedule
        self.tol = tol
        self.rng = rng
        self.stride = sample_stride
        self.max_steps = max_steps
        self.rho = rho0.matrix.astype(complex).copy()
        self.w = 0.0
        self.q = np.zeros(schedule.n_baths)
        self.times: list[float] = []
        self.states: list[DensityOperator] = []
        self.works: list[float] = []
        self.heats: list[np.ndarray] = []
        self.events: list[EventRecord] = []
        self.diagnostics = StepDiagnostics()
        self.step_counter = 0
        self.h_carry: float | None = None

    def record_sample(self, t: float):
        if self.times and t <= self.times[-1]:
            return
        try:
            clean = sanitize_density_matrix(self.rho, context=f"t={t:.6g}")
            state = DensityOperator(clean)
        except InvalidStateError as exc:
            raise IntegrationError(f"state invalid at t={t:.6g}: {exc}", time=t) from exc
        self.times.append(t)
        self.states.append(state)
        self.works.append(self.w)
        self.heats.append(self.q.copy())

    def renormalize_trace(self, t: float):
        self.rho = 0.5 * (self.rho + self.rho.conj().T)
        tr = float(self.rho.trace().real)
        drift = abs(tr - 1.0)
        self.diagnostics.max_trace_drift = max(self.diagnostics.max_trace_drift, drift)
        if drift >= TRACE_DRIFT_LIMIT:
            raise IntegrationError(
                f"trace drifted to {tr:.17g} at t={t:.6g}", time=t
            )
        self.rho = self.rho / tr

    def apply_events(self, t: float, events_here: Sequence, h_eff: np.ndarray) -> np.ndarray:
        for ev in events_here:
            before = self.rho.copy()
            if isinstance(ev, QuenchEvent):
                work = float(np.trace(self.rho @ (ev.h_new - h_eff)).real)
                self.w += work
                self.events.append(EventRecord(
                    time=t, kind="quench", sample_index=len(self.times),
                    rho_before=before, rho_after=before, work=work, label=ev.label,
                ))
                h_eff = ev.h_new
                continue
            if ev.selective:
                if self.rng is None:
                    raise InvalidStateError(
                        "schedule contains a selective measurement but no rng was provided"
                    )
                outcome = measure_selective(self.rho, ev.measurement, self.rng)
                after = outcome.state.matrix.copy()
                out_index, out_prob = outcome.index, outcome.probability
            else:
                after = measure_nonselective(self.rho, ev.measurement).matrix.copy()
                out_index, out_prob = None, None
            delta_e = float(np.trace((after - before) @ h_eff).real)
            bath = ev.heat_bath
            if bath is None and self.schedule.n_baths > 0:
                bath = 0
            if bath is None:
                if abs(delta_e) > 1e-12:
                    raise InvalidStateError(
                        f"measurement at t={t} changes energy but no bath is attached"
                    )
            else:
                self.q[bath] += delta_e
            self.rho = after
            self.events.append(EventRecord(
                time=t, kind="measure", sample_index=len(self.times),
                rho_before=before, rho_after=after.copy(), heat=delta_e,
                heat_bath=bath, outcome=out_index, probability=out_prob,
                n_outcomes=ev.measurement.n_outcomes, selective=ev.selective,
                flag=ev.flag, label=ev.label,
            ))
        return h_eff

    def integrate_window(self, engine: _SegmentEngine, a: float, b: float):
        t = a
        span = b - a
        if span <= 1e-12 * max(1.0, abs(a)):
            return
        h = self.h_carry if self.h_carry is not None else span / 8.0
        h = min(h, span)
        k1 = None
        while t < b:
            h = min(h, b - t)
            if h < 1e-14 * max(1.0, abs(t)):
                raise IntegrationError(f"step size underflow at t={t:.6g}", time=t)
            if self.step_counter + self.diagnostics.n_rejected > self.max_steps:
                raise IntegrationError(f"step budget exhausted at t={t:.6g}", time=t)
            big = _rk4(engine, t, self.rho, self.w, self.q, h, k1)
            k1 = big[3]
            half1 = _rk4(engine, t, self.rho, self.w, self.q, 0.5 * h, k1)
            half2 = _rk4(engine, t + 0.5 * h, half1[0], half1[1], half1[2], 0.5 * h)
            err = max(
                float(np.max(np.abs(big[0] - half2[0]))),
                abs(big[1] - half2[1]),
                float(np.max(np.abs(big[2] - half2[2]))) if self.q.size else 0.0,
            ) / 15.0
            if err <= self.tol:
                self.rho = half2[0] + (half2[0] - big[0]) / 15.0
                self.w = half2[1] + (half2[1] - big[1]) / 15.0
                self.q = half2[2] + (half2[2] - big[2]) / 15.0
                t = b if (b - t - h) < 1e-12 * max(1.0, abs(b)) else t + h
                self.renormalize_trace(t)
                k1 = None
                self.diagnostics.n_accepted += 1
                self.diagnostics.min_step = min(self.diagnostics.min_step, h)
                self.diagnostics.max_step = max(self.diagnostics.max_step, h)
                self.step_counter += 1
                if t < b and self.step_counter % self.stride == 0:
                    self.record_sample(t)
                if err > 0.0:
                    h = h * min(_GROW_LIMIT, _SAFETY * (self.tol / err) ** 0.2)
                else:
                    h = h * _GROW_LIMIT
            else:
                self.diagnostics.n_rejected += 1
                h = h * max(_SHRINK_LIMIT, _SAFETY * (self.tol / err) ** 0.25)
        self.h_carry = h


def integrate_mme(rho0, schedule: Schedule, tol: float = 1e-8, *,
                  rng=None, sample_stride: int = 1,
                  max_steps: int = 2_000_000) -> Trajectory:
    """Integrate the driven master equation over a schedule.

    ``rho0`` is the initial state (DensityOperator or matrix), ``tol`` the
    absolute local error target per step, ``rng`` an integer seed or numpy
    Generator for selective measurement events, and ``sample_stride``
    records every n-th accepted step (segment boundaries and event times
    are always sampled).
    """
    if not TOL_MIN <= tol <= TOL_MAX:
        raise ValueError(f"tol must lie in [{TOL_MIN:g}, {TOL_MAX:g}], got {tol:g}")
    if sample_stride < 1:
        raise ValueError("sample_stride must be >= 1")
    state0 = rho0 if isinstance(rho0, DensityOperator) else DensityOperator(rho0)
    dim0 = as_matrix(schedule.segments[0].hamiltonian(schedule.t_start)).shape[0]
    if state0.dim != dim0:
        raise ScheduleError(
            f"initial state dimension {state0.dim} does not match schedule dimension {dim0}"
        )
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(int(rng))

    run = _Run(state0, schedule, tol, rng, sample_stride, max_steps)
    events_by_time: dict[float, list] = {}
    for ev in schedule.events:
        events_by_time.setdefault(ev.time, []).append(ev)

    t0 = schedule.t_start
    h_eff = schedule.segments[0].hamiltonian(t0)
    if t0 in events_by_time:
        h_eff = run.apply_events(t0, events_by_time.pop(t0), h_eff)
    run.record_sample(t0)

    for seg in schedule.segments:
        engine = _SegmentEngine(seg, schedule, run.diagnostics)
        interior = sorted(t for t in events_by_time if seg.t_start < t < seg.t_end)
        breakpoints = interior + [seg.t_end]
        t_cursor = seg.t_start
        for b in breakpoints:
            if b > t_cursor:
                run.integrate_window(engine, t_cursor, b)
                t_cursor = b
            h_eff = engine.hamiltonian(t_cursor)
            if t_cursor in events_by_time:
                h_eff = run.apply_events(
                    t_cursor, events_by_time.pop(t_cursor), h_eff
                )
            run.record_sample(t_cursor)

    return Trajectory(
        times=np.array(run.times),
        states=run.states,
        work=np.array(run.works),
        heat=np.array(run.heats).reshape(len(run.times), schedule.n_baths),
        events=run.events,
        diagnostics=run.diagnostics,
        tol=tol,
        n_baths=schedule.n_baths,
    )

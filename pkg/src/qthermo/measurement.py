"""Projective measurement channels and their thermodynamic accounting.

Two accounting policies are provided for the work cost of a measurement
plus the reset of its pointer device:

* ``sLPM`` charges T ln(n) for every n-outcome measurement, always.
* ``LPM`` waives the charge when the measured states are flagged as
  equilibrium (or metastable) states, and charges T ln(n) otherwise.

Charged work is treated as dissipated through the attached bath, so every
charge is paired with an equal heat outflow and the first law stays closed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import InvalidStateError
from .hilbert import (
    DensityOperator,
    as_matrix,
    sanitize_density_matrix,
    spectral_decomposition,
)

PROBABILITY_FLOOR = 1e-14


@dataclass(frozen=True)
class ProjectiveMeasurement:
    """A complete set of orthogonal projectors from a Hermitian observable."""

    observable: np.ndarray
    projectors: tuple = ()
    outcomes: tuple = ()

    def __post_init__(self):
        m = as_matrix(self.observable)
        dec = spectral_decomposition(m)
        object.__setattr__(self, "observable", m)
        object.__setattr__(self, "projectors", dec.projectors)
        object.__setattr__(self, "outcomes", tuple(float(v) for v in dec.values))

    @property
    def n_outcomes(self) -> int:
        return len(self.projectors)

    def probabilities(self, rho) -> np.ndarray:
        m = as_matrix(rho)
        probs = np.array([float(np.trace(p @ m).real) for p in self.projectors])
        probs[probs < PROBABILITY_FLOOR] = 0.0
        return probs


class MeasurementOutcome(NamedTuple):
    index: int
    state: DensityOperator
    probability: float


def measure_selective(rho, measurement: ProjectiveMeasurement, rng) -> MeasurementOutcome:
    """Sample one outcome and collapse the state.

    ``rng`` is either an integer seed or a numpy Generator; outcome draws
    are fully determined by the generator state, and outcomes of zero
    (floored) probability are never produced.
    """
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(int(rng))
    m = as_matrix(rho)
    probs = measurement.probabilities(m)
    total = probs.sum()
    if total < PROBABILITY_FLOOR:
        raise InvalidStateError("all outcome probabilities are below the floor")
    normalized = probs / total
    draw = rng.random()
    acc = 0.0
    index = int(np.flatnonzero(normalized > 0.0)[-1])
    for k, p in enumerate(normalized):
        if p <= 0.0:
            continue
        acc += p
        if draw < acc:
            index = k
            break
    proj = measurement.projectors[index]
    collapsed = proj @ m @ proj / probs[index]
    state = DensityOperator(sanitize_density_matrix(collapsed, context="measurement collapse"))
    return MeasurementOutcome(index=index, state=state, probability=float(normalized[index]))


def measure_nonselective(rho, measurement: ProjectiveMeasurement) -> DensityOperator:
    """Dephase in the measurement basis: rho -> sum_k P_k rho P_k."""
    m = as_matrix(rho)
    out = np.zeros_like(m)
    for proj in measurement.projectors:
        out += proj @ m @ proj
    return DensityOperator(sanitize_density_matrix(out, context="nonselective measurement"))


@dataclass(frozen=True)
class MetastabilityFlag:
    """Declares whether measured states count as equilibrium for LPM.

    ``epsilon`` is the phenomenological relaxation rate of the flagged
    states; 0 means perfectly metastable. ``suppressed`` builds the
    exponentially small rate epsilon = gamma0 * exp(-c * n) for a
    super-selection-style stabilized register of size n.
    """

    is_equilibrium: bool
    epsilon: float = 0.0

    @classmethod
    def suppressed(cls, gamma0: float, c: float, n: int) -> "MetastabilityFlag":
        return cls(is_equilibrium=True, epsilon=gamma0 * math.exp(-c * n))


@dataclass(frozen=True)
class MeasurementPolicy:
    """Work-charge rule for measurements; ``variant`` is 'sLPM' or 'LPM'."""

    variant: str

    def __post_init__(self):
        if self.variant not in ("sLPM", "LPM"):
            raise InvalidStateError(f"unknown policy variant {self.variant!r}")

    def charge(self, flag: MetastabilityFlag | None, n_outcomes: int, temperature: float) -> float:
        """Work charged for one measurement at the given bath temperature."""
        if n_outcomes < 2:
            return 0.0
        if self.variant == "LPM" and flag is not None and flag.is_equilibrium:
            return 0.0
        return temperature * math.log(n_outcomes)


class MeasurementBooking(NamedTuple):
    """Ledger-facing split of a measurement: charged work, net bath heat."""

    work_charge: float
    heat: float
    note: str


def account_measurement(
    policy: MeasurementPolicy | None,
    flag: MetastabilityFlag | None,
    n_outcomes: int,
    energy_change: float,
    temperature: float,
) -> MeasurementBooking:
    """Book one measurement event.

    The state's energy change at fixed H is drawn from the attached bath as
    heat. The policy charge enters as work performed on the device and is
    dissipated back into the same bath, so heat = energy_change - charge.
    """
    charge = 0.0
    if policy is not None:
        charge = policy.charge(flag, n_outcomes, temperature)
    note = f"charge={charge:.6g}" if charge else "charge=0"
    return MeasurementBooking(work_charge=charge, heat=energy_change - charge, note=note)

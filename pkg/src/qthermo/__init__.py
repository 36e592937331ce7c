"""qthermo: thermodynamic bookkeeping for small driven open quantum systems."""

from .dynamics import (
    MeasureEvent,
    QuenchEvent,
    Schedule,
    Segment,
    Trajectory,
    apply_quench,
    integrate_mme,
    linear_ramp,
)
from .errors import (
    ConfigError,
    DimensionMismatchError,
    IntegrationError,
    InvalidStateError,
    NonHermitianError,
    ProtocolError,
    QThermoError,
    ScheduleError,
)
from .generators import (
    BathSpec,
    EigenoperatorSet,
    GKLSGenerator,
    LindbladTerm,
    apply_generator,
    build_davies_generator,
    eigenoperator_decomposition,
    ohmic_rate,
)
from .hilbert import (
    DensityOperator,
    HermitianObservable,
    SpectralDecomposition,
    fannes_bound,
    gibbs_state,
    identity,
    partial_trace,
    sigma_x,
    sigma_y,
    sigma_z,
    spectral_decomposition,
    tensor,
    time_evolution_unitary,
    trace_norm_distance,
    von_neumann_entropy,
)
from .ledger import (
    ErasureBalanceReport,
    LawAudit,
    LedgerRow,
    accumulate,
    check_laws,
    erasure_balance,
    make_row,
)
from .measurement import (
    MeasurementOutcome,
    MeasurementPolicy,
    MetastabilityFlag,
    ProjectiveMeasurement,
    account_measurement,
    measure_nonselective,
    measure_selective,
)
from .needle import (
    FieldProfile,
    NeedleConfig,
    NeedleReport,
    alignment_probability,
    quasi_static_work,
    run_needle_cycle,
    thermodynamic_force,
)
from .protocols import (
    ProtocolReport,
    build_swap_unitary,
    run_erasure,
    run_process_a,
    run_process_b,
    run_relaxation,
    run_section3_cycle,
)

__version__ = "0.1.0"

__all__ = [
    "BathSpec",
    "ConfigError",
    "DensityOperator",
    "DimensionMismatchError",
    "EigenoperatorSet",
    "ErasureBalanceReport",
    "FieldProfile",
    "GKLSGenerator",
    "HermitianObservable",
    "IntegrationError",
    "InvalidStateError",
    "LawAudit",
    "LedgerRow",
    "LindbladTerm",
    "MeasureEvent",
    "MeasurementOutcome",
    "MeasurementPolicy",
    "MetastabilityFlag",
    "NeedleConfig",
    "NeedleReport",
    "NonHermitianError",
    "ProjectiveMeasurement",
    "ProtocolError",
    "ProtocolReport",
    "QThermoError",
    "QuenchEvent",
    "Schedule",
    "ScheduleError",
    "Segment",
    "SpectralDecomposition",
    "Trajectory",
    "account_measurement",
    "accumulate",
    "alignment_probability",
    "apply_generator",
    "apply_quench",
    "build_davies_generator",
    "build_swap_unitary",
    "check_laws",
    "eigenoperator_decomposition",
    "erasure_balance",
    "fannes_bound",
    "gibbs_state",
    "identity",
    "integrate_mme",
    "linear_ramp",
    "make_row",
    "measure_nonselective",
    "measure_selective",
    "ohmic_rate",
    "partial_trace",
    "quasi_static_work",
    "run_erasure",
    "run_needle_cycle",
    "run_process_a",
    "run_process_b",
    "run_relaxation",
    "run_section3_cycle",
    "sigma_x",
    "sigma_y",
    "sigma_z",
    "spectral_decomposition",
    "tensor",
    "thermodynamic_force",
    "time_evolution_unitary",
    "trace_norm_distance",
    "von_neumann_entropy",
    "__version__",
]

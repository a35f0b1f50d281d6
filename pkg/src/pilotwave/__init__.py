"""Stochastic pilot-wave laboratory.

Exact plane-wave models of the Klein-Gordon and Schrodinger systems,
field-identity residual checks, particle-ensemble experiments for position
and momentum equivariance and relaxation to quantum equilibrium, and a grid
Fokker-Planck oracle to validate the stochastic dynamics against.
"""

from .errors import (
    CflViolation,
    EmptyModeSet,
    EnvelopeExceeded,
    GeometryMismatch,
    NodeTooClose,
    NotEqualEnergy,
    NotRelativistic,
    OffShell,
    PilotWaveError,
    ScenarioError,
)
from .waves import (
    KLEIN_GORDON,
    SCHRODINGER,
    FieldJet,
    Metric,
    WaveMode,
    WaveModel,
    boost_modes,
    build_equal_energy_kg_set,
    build_schrodinger_set,
    evaluate_jet,
    pde_residual,
)
from .fields import (
    DerivedFields,
    derive_fields,
    fields_at,
    quantum_potential_forms,
    rho_grad_q_decomposition,
    stochastic_drift,
)
from .residuals import ResidualReport, fd_oracle_jet, rest_frame_clock_check, run_identity_suite

__version__ = "0.1.0"

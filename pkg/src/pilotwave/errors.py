"""Exception types shared across the package."""


class PilotWaveError(Exception):
    """Base class for all package errors."""


class EmptyModeSet(PilotWaveError):
    """A wave model was requested with no modes."""


class OffShell(PilotWaveError):
    """A mode's wavevector violates the active dispersion relation."""

    def __init__(self, mode_index: int, residual: float):
        self.mode_index = mode_index
        self.residual = residual
        super().__init__(
            f"mode {mode_index} is off shell (dispersion residual {residual:.3e})"
        )


class NotRelativistic(PilotWaveError):
    """Operation requires a Klein-Gordon model."""


class NotEqualEnergy(PilotWaveError):
    """Operation requires an equal-energy mode set."""


class NodeTooClose(PilotWaveError):
    """|psi| fell below the node guard threshold at a probe or particle."""

    def __init__(self, abs_psi: float, threshold: float):
        self.abs_psi = abs_psi
        self.threshold = threshold
        super().__init__(f"|psi|={abs_psi:.3e} below node guard {threshold:.3e}")


class CflViolation(PilotWaveError):
    """Explicit grid step would violate the CFL stability bound."""


class GeometryMismatch(PilotWaveError):
    """Ensemble and grid geometries are incompatible."""


class EnvelopeExceeded(PilotWaveError):
    """Rejection sampler proposal density exceeded its scanned envelope."""


class ScenarioError(PilotWaveError):
    """Scenario file failed to parse or validate."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))

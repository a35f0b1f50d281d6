"""Trajectory integrators for guided particles.

Deterministic guidance is advanced with classical RK4 on the phase-gradient
velocity field; stochastic guidance uses Euler-Maruyama with independent
Gaussian increments of variance ``k dtau`` on every coordinate (local time
included for relativistic models -- the noise is Euclidean, the metric does
not enter it).  Distributional acceptance targets only need weak order 1,
so Euler-Maruyama is deliberate.

Non-relativistic models diffuse in space only; their lab-time coordinate
advances deterministically with the evolution parameter.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import NodeTooClose
from .fields import drift_prime_at, fields_at, guidance_drift_at
from .waves import WaveModel


@dataclass(frozen=True)
class Geometry:
    """Periodic fundamental domain; ``None`` marks an unbounded axis."""

    periods: tuple[float | None, ...]

    @property
    def dim(self) -> int:
        return len(self.periods)

    def wrap(self, points: np.ndarray) -> np.ndarray:
        pts = np.array(points, dtype=float, copy=True)
        flat = pts.reshape(-1, self.dim)
        for ax, period in enumerate(self.periods):
            if period is not None:
                flat[:, ax] %= period
        return pts

    def box(self) -> tuple[np.ndarray, np.ndarray]:
        """Bounds of the periodic box; unbounded axes are not allowed here."""
        if any(p is None for p in self.periods):
            raise ValueError("box undefined on unbounded axes")
        hi = np.array([float(p) for p in self.periods])
        return np.zeros(self.dim), hi


@dataclass
class ParticleState:
    """One particle: configuration-space position, optional carried velocity,
    and the evolution-parameter stamp."""

    position: np.ndarray
    carried_velocity: np.ndarray | None = None
    tau: float = 0.0


@dataclass
class StepConfig:
    """Step size, diffusion strength, noise stream and domain for integrators."""

    dtau: float
    geometry: Geometry
    diffusion: float | None = None  # default hbar/m of the model
    rng: np.random.Generator = dc_field(default_factory=lambda: np.random.default_rng(0))
    eps_node: float = 1e-6
    max_redraws: int = 8

    def __post_init__(self):
        if self.dtau <= 0:
            raise ValueError("dtau must be positive")

    def k_for(self, model: WaveModel) -> float:
        if self.diffusion is not None:
            return self.diffusion
        return model.metric.hbar / model.metric.m


def _with_time_advance(model: WaveModel, vel: np.ndarray) -> np.ndarray:
    """Non-relativistic drift fields leave slot 0 empty; lab time runs at unit rate."""
    if not model.relativistic:
        vel = vel.copy()
        vel[:, 0] = 1.0
    return vel


def det_velocity_many(model: WaveModel, points: np.ndarray) -> np.ndarray:
    vel, _ = guidance_drift_at(model, points)
    return _with_time_advance(model, vel)


def drift_prime_many(model: WaveModel, points: np.ndarray) -> np.ndarray:
    vel, _ = drift_prime_at(model, points)
    return _with_time_advance(model, vel)


def rk4_step_many(model: WaveModel, positions: np.ndarray, dtau: float,
                  geometry: Geometry | None = None) -> np.ndarray:
    """One RK4 step of the deterministic guidance law for many particles."""
    x = np.atleast_2d(positions)
    k1 = det_velocity_many(model, x)
    k2 = det_velocity_many(model, x + 0.5 * dtau * k1)
    k3 = det_velocity_many(model, x + 0.5 * dtau * k2)
    k4 = det_velocity_many(model, x + dtau * k3)
    out = x + dtau / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return geometry.wrap(out) if geometry is not None else out


def em_step_many(
    model: WaveModel,
    positions: np.ndarray,
    cfg: StepConfig,
    n_workers: int = 1,
):
    """One Euler-Maruyama step for many particles.

    The Gaussian increment matrix for the whole population is drawn in a
    single call, so results are independent of the worker chunking of the
    (pure) drift evaluation.  A proposal landing below the node guard gets
    its increment redrawn up to ``max_redraws`` times, after which the step
    is rejected.  Returns (new positions, rejected count).
    """
    x = np.atleast_2d(positions)
    n, dim = x.shape
    k = cfg.k_for(model)
    noise_mask = np.ones(dim)
    if not model.relativistic:
        noise_mask[0] = 0.0

    drift = _chunked_drift(model, x, n_workers)
    dw = cfg.rng.standard_normal((n, dim)) * np.sqrt(k * cfg.dtau) * noise_mask
    prop = cfg.geometry.wrap(x + drift * cfg.dtau + dw)

    rho_min = cfg.eps_node**2
    bad = model.rho(prop) < rho_min
    rejected = 0
    if np.any(bad):
        for _ in range(cfg.max_redraws):
            idx = np.flatnonzero(bad)
            if idx.size == 0:
                break
            dw_new = (
                cfg.rng.standard_normal((idx.size, dim))
                * np.sqrt(k * cfg.dtau)
                * noise_mask
            )
            retry = cfg.geometry.wrap(x[idx] + drift[idx] * cfg.dtau + dw_new)
            ok = model.rho(retry) >= rho_min
            prop[idx[ok]] = retry[ok]
            bad[idx[ok]] = False
        rejected = int(np.count_nonzero(bad))
        prop[bad] = x[bad]  # reject: stay in place this step
    return prop, rejected


def _chunked_drift(model: WaveModel, x: np.ndarray, n_workers: int) -> np.ndarray:
    if n_workers <= 1:
        return drift_prime_many(model, x)
    out = np.empty_like(x)
    for chunk in np.array_split(np.arange(len(x)), n_workers):
        out[chunk] = drift_prime_many(model, x[chunk])
    return out


# -- single-particle API ----------------------------------------------------------


def _guard(model: WaveModel, position: np.ndarray, eps_node: float):
    apsi = float(np.sqrt(model.rho(np.atleast_2d(position))[0]))
    if apsi < eps_node:
        raise NodeTooClose(apsi, eps_node)


def deterministic_step(state: ParticleState, model: WaveModel, cfg: StepConfig) -> ParticleState:
    """RK4 advance along the deterministic guidance velocity."""
    _guard(model, state.position, cfg.eps_node)
    new = rk4_step_many(model, state.position[None, :], cfg.dtau, cfg.geometry)[0]
    return ParticleState(position=new, carried_velocity=state.carried_velocity,
                         tau=state.tau + cfg.dtau)


def stochastic_step(state: ParticleState, model: WaveModel, cfg: StepConfig) -> ParticleState:
    """Euler-Maruyama advance along the transformed-phase drift."""
    _guard(model, state.position, cfg.eps_node)
    new, _ = em_step_many(model, state.position[None, :], cfg)
    return ParticleState(position=new[0], carried_velocity=state.carried_velocity,
                         tau=state.tau + cfg.dtau)


def quantum_force_many(model: WaveModel, points: np.ndarray,
                       include_quantum: bool = True) -> np.ndarray:
    """Acceleration -d^nu (V + Q) / m; V is constant so only Q contributes.

    ``include_quantum=False`` gives the ablated (classical-force-only) field
    used to demonstrate that the quantum force is load-bearing.
    """
    pts = np.atleast_2d(points)
    out = np.zeros_like(pts)
    if not include_quantum:
        return out
    met = model.metric
    w = met.contraction_weights(model.dim)
    for i, x in enumerate(pts):
        f = fields_at(model, x)
        out[i] = -w * f.d_q / met.m
    return out


def bohm_newton_step(state: ParticleState, model: WaveModel, cfg: StepConfig,
                     include_quantum: bool = True) -> ParticleState:
    """RK4 on the second-order system xdot = v, vdot = -grad(V + Q)/m.

    ``carried_velocity`` must be initialized (normally to the guidance
    velocity at the starting point).  Deterministic mode only.
    """
    if state.carried_velocity is None:
        raise ValueError("bohm_newton_step needs carried_velocity")
    _guard(model, state.position, cfg.eps_node)
    dt = cfg.dtau
    x0 = state.position[None, :].astype(float)
    v0 = state.carried_velocity[None, :].astype(float)

    def accel(x):
        a = quantum_force_many(model, x, include_quantum)
        if not model.relativistic:
            a[:, 0] = 0.0
        return a

    def vel(v):
        if model.relativistic:
            return v
        v = v.copy()
        v[:, 0] = 1.0  # lab time runs at unit rate
        return v

    k1x, k1v = vel(v0), accel(x0)
    k2x, k2v = vel(v0 + 0.5 * dt * k1v), accel(x0 + 0.5 * dt * k1x)
    k3x, k3v = vel(v0 + 0.5 * dt * k2v), accel(x0 + 0.5 * dt * k2x)
    k4x, k4v = vel(v0 + dt * k3v), accel(x0 + dt * k3x)
    x1 = x0 + dt / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x)
    v1 = v0 + dt / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
    x1 = cfg.geometry.wrap(x1)
    return ParticleState(position=x1[0], carried_velocity=v1[0], tau=state.tau + dt)


def carried_momentum_step(state: ParticleState, model: WaveModel, cfg: StepConfig) -> ParticleState:
    """Stochastic position advance with a passively carried velocity.

    The carried velocity obeys the Lagrangian-frame Newton law; with the
    constant potential its force vanishes, so the velocity rides along
    unchanged while the position diffuses.
    """
    if state.carried_velocity is None:
        raise ValueError("carried_momentum_step needs carried_velocity")
    new = stochastic_step(state, model, cfg)
    new.carried_velocity = state.carried_velocity.copy()
    return new

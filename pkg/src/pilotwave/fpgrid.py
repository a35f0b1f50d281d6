"""Explicit finite-difference oracle for the transformed continuity equation.

The stochastic guidance law has the Fokker-Planck form

    drho/dtau + div(rho * drift') = (k/2) * lap rho,

with Euclidean diffusion over every diffusing coordinate (local time included
for relativistic models).  This module advances that equation with a
conservative flux-form FTCS scheme on a fully periodic grid, independent of
the particle integrators it validates: central (optionally upwind-blended)
advective fluxes plus central diffusive fluxes, which conserves mass to
rounding by telescoping.

Used two ways: initialized at rho it witnesses stationarity of the quantum
equilibrium density; initialized off equilibrium it provides the reference
density the SDE ensemble must converge to.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .dynamics import Geometry, drift_prime_many
from .ensemble import EnsembleConfig, run_ensemble
from .errors import CflViolation, GeometryMismatch
from .waves import WaveModel

CFL_DIFFUSION = 0.25
CFL_ADVECTION = 0.5


@dataclass
class Grid:
    """Periodic density grid: axis lengths, cell values, and the step size."""

    periods: tuple[float, ...]
    values: np.ndarray
    dtau: float

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != len(self.periods):
            raise ValueError("values rank must match the number of axes")

    @property
    def shape(self):
        return self.values.shape

    @property
    def cell_sizes(self) -> np.ndarray:
        return np.array([p / n for p, n in zip(self.periods, self.shape)])

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.cell_sizes))

    def mass(self) -> float:
        return float(self.values.sum() * self.cell_volume)

    def centers(self, axis: int) -> np.ndarray:
        n = self.shape[axis]
        return (np.arange(n) + 0.5) * (self.periods[axis] / n)

    def points(self) -> np.ndarray:
        mesh = np.meshgrid(*[self.centers(a) for a in range(len(self.shape))],
                           indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def normalized(self) -> "Grid":
        return replace(self, values=self.values / self.mass())

    def marginal(self, axis: int) -> np.ndarray:
        """Probability per cell line along ``axis`` (sums to 1)."""
        other = tuple(i for i in range(self.values.ndim) if i != axis)
        line = self.values.sum(axis=other)
        return line / line.sum()

    def marginal_binned(self, axis: int, bins: int) -> np.ndarray:
        line = self.marginal(axis)
        if len(line) % bins:
            raise GeometryMismatch("grid resolution must be a multiple of the bin count")
        return line.reshape(bins, -1).sum(axis=1)


def check_cfl(grid: Grid, drift: np.ndarray, k: float):
    """Refuse a step that violates the explicit-scheme stability bounds."""
    dx = grid.cell_sizes
    for a in range(len(dx)):
        if k * grid.dtau / dx[a] ** 2 > CFL_DIFFUSION + 1e-12:
            raise CflViolation(
                f"diffusion CFL on axis {a}: k dtau/dx^2 = "
                f"{k * grid.dtau / dx[a]**2:.3f} > {CFL_DIFFUSION}"
            )
        vmax = float(np.max(np.abs(drift[..., a])))
        if vmax * grid.dtau / dx[a] > CFL_ADVECTION + 1e-12:
            raise CflViolation(
                f"advection CFL on axis {a}: v dtau/dx = "
                f"{vmax * grid.dtau / dx[a]:.3f} > {CFL_ADVECTION}"
            )


def fp_step(grid: Grid, drift: np.ndarray, k: float,
            blend_upwind: float = 0.0, verify_cfl: bool = True) -> Grid:
    """One conservative flux-form update; mass is conserved to rounding.

    ``drift`` has shape ``grid.shape + (naxes,)`` with one velocity component
    per grid axis at cell centers.  ``blend_upwind`` mixes first-order upwind
    into the central advective flux (0 = pure central, the default).
    """
    if verify_cfl:
        check_cfl(grid, drift, k)
    p = grid.values
    dx = grid.cell_sizes
    div = np.zeros_like(p)
    for a in range(p.ndim):
        v = drift[..., a]
        p_up = np.roll(p, -1, axis=a)        # neighbor at i+1
        v_face = 0.5 * (v + np.roll(v, -1, axis=a))
        central = 0.5 * (p + p_up)
        upwind = np.where(v_face > 0, p, p_up)
        p_face = (1.0 - blend_upwind) * central + blend_upwind * upwind
        flux = v_face * p_face - 0.5 * k * (p_up - p) / dx[a]
        div += (flux - np.roll(flux, 1, axis=a)) / dx[a]
    return replace(grid, values=p - grid.dtau * div)


def sample_drift(model: WaveModel, grid: Grid, t_fixed: float | None = None) -> np.ndarray:
    """Cell-centered drift field for the grid axes.

    Relativistic grids span the full (t, x) torus; non-relativistic grids
    span space only and take the drift at a fixed lab time.
    """
    pts = grid.points()
    if t_fixed is not None:
        pts = np.concatenate([np.full((len(pts), 1), t_fixed), pts], axis=1)
        cols = slice(1, None)
    else:
        cols = slice(None)
    drift = drift_prime_many(model, pts)
    return drift[:, cols].reshape(grid.shape + (len(grid.shape),))


def grid_from_density(model: WaveModel, periods, resolution, dtau: float,
                      t_fixed: float | None = None) -> Grid:
    """Grid initialized at (normalized) rho sampled at cell centers."""
    g = Grid(periods=tuple(periods), values=np.zeros(tuple(resolution)), dtau=dtau)
    pts = g.points()
    if t_fixed is not None:
        pts = np.concatenate([np.full((len(pts), 1), t_fixed), pts], axis=1)
    g.values = model.rho(pts).reshape(g.shape)
    return g.normalized()


def grid_delta_in_time(model: WaveModel, periods, resolution, dtau: float) -> Grid:
    """All mass on the first local-time row, spatially proportional to rho."""
    g = grid_from_density(model, periods, resolution, dtau)
    vals = np.zeros_like(g.values)
    vals[0, ...] = g.values.sum(axis=0)
    g.values = vals
    return g.normalized()


def cfl_dtau(model: WaveModel, grid: Grid, k: float,
             t_fixed: float | None = None, safety: float = 0.9) -> float:
    drift = sample_drift(model, grid, t_fixed)
    dx = grid.cell_sizes
    bound = np.inf
    for a in range(len(dx)):
        if k > 0:
            bound = min(bound, CFL_DIFFUSION * dx[a] ** 2 / k)
        vmax = float(np.max(np.abs(drift[..., a])))
        if vmax > 0:
            bound = min(bound, CFL_ADVECTION * dx[a] / vmax)
    return safety * bound


def fp_run(
    model: WaveModel,
    grid: Grid,
    k: float,
    steps: int,
    snapshot_every: int,
    t0: float = 0.0,
    blend_upwind: float = 0.0,
):
    """Advance the grid, returning [(tau, values)] at the snapshot cadence.

    Relativistic drifts are static and sampled once; non-relativistic drifts
    are resampled at the current lab time each step.
    """
    static = model.relativistic
    drift = sample_drift(model, grid, None if static else t0)
    snaps = [(0.0, grid.values.copy())]
    g = grid
    for step in range(1, steps + 1):
        if not static:
            drift = sample_drift(model, g, t0 + (step - 1) * g.dtau)
        g = fp_step(g, drift, k, blend_upwind=blend_upwind)
        if step % snapshot_every == 0 or step == steps:
            snaps.append((step * g.dtau, g.values.copy()))
    return g, snaps


def stationarity_drift(model: WaveModel, geometry: Geometry, resolution,
                       steps: int = 1000, k: float | None = None,
                       blend_upwind: float = 0.0) -> dict:
    """Initialize at rho, run, and report the L1 drift away from the exact
    density.

    Relativistic densities are stationary in the evolution parameter, so this
    witnesses the equilibrium fixed point of the transformed continuity
    equation; non-relativistic densities travel, so the grid is compared to
    the exact density at the current lab time instead.
    """
    k = model.metric.hbar / model.metric.m if k is None else k
    periods, t_fixed = _grid_domain(model, geometry)
    probe = Grid(periods=periods, values=np.zeros(tuple(resolution)), dtau=1.0)
    dtau = cfl_dtau(model, probe, k, t_fixed)
    g0 = grid_from_density(model, periods, resolution, dtau, t_fixed)
    cell = g0.cell_volume
    g, snaps = fp_run(model, g0, k, steps, max(1, steps // 10),
                      t0=0.0, blend_upwind=blend_upwind)

    def reference(tau: float) -> np.ndarray:
        if model.relativistic:
            return g0.values
        return grid_from_density(model, periods, resolution, dtau, tau).values

    series = [
        (tau, float(np.sum(np.abs(v - reference(tau))) * cell)) for tau, v in snaps
    ]
    return {
        "dtau": dtau,
        "steps": steps,
        "resolution": list(resolution),
        "l1_series": series,
        "max_l1": max(d for _, d in series),
        "min_value": float(min(v.min() for _, v in snaps)),
        "mass_error": abs(g.mass() - 1.0),
    }


def _grid_domain(model: WaveModel, geometry: Geometry):
    """Grid axes and fixed-time flag for a model/geometry pair."""
    if model.relativistic:
        if any(p is None for p in geometry.periods):
            raise GeometryMismatch("relativistic grid needs a fully periodic box")
        return tuple(float(p) for p in geometry.periods), None
    return tuple(float(p) for p in geometry.periods[1:]), 0.0


def fp_vs_ensemble(
    model: WaveModel,
    geometry: Geometry,
    ens_cfg: EnsembleConfig,
    resolution,
    kind: str = "equivariance",
    blend_upwind: float = 0.0,
) -> dict:
    """Run the SDE ensemble and the grid from the same initial law; compare.

    Comparison is the L1 distance between per-axis marginals at every
    ensemble snapshot.  The grid step subdivides the snapshot interval to
    satisfy CFL exactly, so snapshot times align.
    """
    axes = list(range(geometry.dim)) if model.relativistic else list(range(1, geometry.dim))
    if len(resolution) != len(axes):
        raise GeometryMismatch("one resolution entry per analyzed axis required")
    for r in resolution:
        if r % ens_cfg.bins:
            raise GeometryMismatch("grid resolution must be a multiple of the bin count")

    report = run_ensemble(model, geometry, ens_cfg, kind=kind)
    k = ens_cfg.diffusion
    if k is None:
        k = model.metric.hbar / model.metric.m

    periods, t_fixed = _grid_domain(model, geometry)
    probe = Grid(periods=periods, values=np.zeros(tuple(resolution)), dtau=1.0)
    snap_dt = ens_cfg.snapshot_every * ens_cfg.dtau
    max_dt = cfl_dtau(model, probe, k, t_fixed)
    n_sub = max(1, int(np.ceil(snap_dt / max_dt))) if np.isfinite(max_dt) else 1
    dtau = snap_dt / n_sub

    if ens_cfg.initial_distribution == "delta_in_time":
        g = grid_delta_in_time(model, periods, resolution, dtau)
    else:
        g = grid_from_density(model, periods, resolution, dtau, t_fixed)

    rows = []
    gi = g
    for i, snap in enumerate(report.snapshots):
        if i > 0:
            steps = round((snap.tau - report.snapshots[i - 1].tau) / dtau)
            gi, _ = fp_run(model, gi, k, steps, snapshot_every=steps + 1,
                           t0=report.snapshots[i - 1].tau,
                           blend_upwind=blend_upwind)
        l1s = []
        for pos in range(len(axes)):
            q = gi.marginal_binned(pos, ens_cfg.bins)
            p = np.array(report.snapshots[i].hist[pos])
            l1s.append(float(np.sum(np.abs(p - q))))
        rows.append({"tau": snap.tau, "l1": l1s})

    return {
        "kind": kind,
        "bins": ens_cfg.bins,
        "resolution": list(resolution),
        "grid_dtau": dtau,
        "snapshots": rows,
        "max_l1": max(max(r["l1"]) for r in rows),
        "ensemble": report.to_dict(),
    }

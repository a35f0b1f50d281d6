"""Particle-ensemble experiments.

Three runners: position equivariance from an equilibrium start, dynamical
relaxation from a non-equilibrium start (delta in local time by default),
and momentum equivariance with passively carried velocities.

Distribution comparisons are made per axis on the periodic domain: 64-bin
marginal histograms against the quadrature marginals of rho.  At the desk
scale (1e5 particles) a joint 2-d histogram would sit on a ~0.16 L1 noise
floor, far above the acceptance thresholds, so marginals carry the
assertions; the joint L1 is still recorded for relativistic runs.

The coarse-grained H function uses the same bins as the density comparison;
empty bins contribute zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import Geometry, StepConfig, drift_prime_many, em_step_many
from .errors import EnvelopeExceeded, GeometryMismatch
from .waves import WaveModel


def rejection_sample(
    density,
    box_low,
    box_high,
    n: int,
    rng: np.random.Generator,
    scan_per_axis: int = 64,
    envelope_factor: float = 1.05,
    max_rescans: int = 3,
):
    """Draw i.i.d. samples from an unnormalized bounded density on a box.

    The envelope is the density maximum over a scan grid times a safety
    factor; a proposal whose density exceeds the envelope triggers a rescan
    with a finer grid, and ``EnvelopeExceeded`` after ``max_rescans``.
    Returns (samples, acceptance_rate).
    """
    lo = np.asarray(box_low, dtype=float)
    hi = np.asarray(box_high, dtype=float)
    dim = len(lo)
    for attempt in range(max_rescans + 1):
        axes = [np.linspace(lo[a], hi[a], scan_per_axis) for a in range(dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        grid = np.stack([m.ravel() for m in mesh], axis=-1)
        envelope = float(np.max(density(grid))) * envelope_factor
        out = np.empty((n, dim))
        got = proposals = accepted = 0
        exceeded = False
        while got < n:
            batch = max(2 * (n - got), 4096)
            pts = rng.uniform(lo, hi, size=(batch, dim))
            vals = density(pts)
            if np.any(vals > envelope):
                exceeded = True
                break
            keep = pts[rng.uniform(0.0, envelope, size=batch) < vals]
            accepted += len(keep)
            take = min(len(keep), n - got)
            out[got : got + take] = keep[:take]
            got += take
            proposals += batch
        if not exceeded:
            return out, accepted / max(proposals, 1)
        scan_per_axis *= 2
    raise EnvelopeExceeded("density exceeded envelope after rescans")


@dataclass
class EnsembleConfig:
    n_particles: int = 100_000
    initial_distribution: str = "equilibrium"  # equilibrium | uniform | delta_in_time
    steps: int = 500
    dtau: float = 5e-3
    bins: int = 64
    seed: int = 0
    snapshot_every: int = 50
    diffusion: float | None = None  # None -> hbar/m
    eps_node: float = 1e-6
    max_redraws: int = 8
    n_workers: int = 1
    momentum_maps: bool = False
    trajectory_dump: int = 0

    def __post_init__(self):
        if self.n_particles < 1:
            raise ValueError("n_particles must be >= 1")
        if self.bins < 4:
            raise ValueError("need at least 4 bins per analyzed axis")
        if self.initial_distribution not in ("equilibrium", "uniform", "delta_in_time"):
            raise ValueError(f"unknown initial distribution {self.initial_distribution!r}")


@dataclass
class Snapshot:
    tau: float
    l1: list[float]                    # per analyzed axis
    kl: list[float]
    h_coarse: float
    joint_l1: float | None = None
    momentum_map_l1: float | None = None
    carried_vs_field_rms: float | None = None
    hist: list[list[float]] = field(default_factory=list)

    def to_dict(self) -> dict:
        d = {
            "tau": self.tau,
            "l1": self.l1,
            "kl": self.kl,
            "h_coarse": self.h_coarse,
        }
        if self.joint_l1 is not None:
            d["joint_l1"] = self.joint_l1
        if self.momentum_map_l1 is not None:
            d["momentum_map_l1"] = self.momentum_map_l1
        if self.carried_vs_field_rms is not None:
            d["carried_vs_field_rms"] = self.carried_vs_field_rms
        d["hist"] = self.hist
        return d


@dataclass
class EnsembleReport:
    kind: str
    axes: list[str]
    bins: int
    n_particles: int
    dtau: float
    steps: int
    seed: int
    snapshots: list[Snapshot]
    node_rejections: int = 0
    acceptance_rate: float | None = None
    trajectories: list[dict] = field(default_factory=list)

    def max_l1(self) -> float:
        return max(max(s.l1) for s in self.snapshots)

    def final_l1(self) -> float:
        return max(self.snapshots[-1].l1)

    def h_series(self) -> list[float]:
        return [s.h_coarse for s in self.snapshots]

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "axes": self.axes,
            "bins": self.bins,
            "n_particles": self.n_particles,
            "dtau": self.dtau,
            "steps": self.steps,
            "seed": self.seed,
            "node_rejections": self.node_rejections,
            "acceptance_rate": self.acceptance_rate,
            "snapshots": [s.to_dict() for s in self.snapshots],
            **({"trajectories": self.trajectories} if self.trajectories else {}),
        }


def _analyzed_axes(model: WaveModel, geometry: Geometry) -> list[int]:
    """Axis indices histogrammed and compared: all torus axes for
    relativistic runs, the spatial box for non-relativistic ones."""
    if model.relativistic:
        return list(range(geometry.dim))
    return list(range(1, geometry.dim))


def _axis_names(model: WaveModel, axes: list[int]) -> list[str]:
    return ["t" if a == 0 else f"x{a}" for a in axes]


def transformed_phase_gradient(model: WaveModel, points: np.ndarray) -> np.ndarray:
    """Covector d_nu S' at many points (the momentum-map field)."""
    _, w = model.log_derivative(points)
    return model.metric.hbar * (w.imag + w.real)


class TargetCalc:
    """Quadrature marginals of rho (and of the momentum field) on the bins.

    A fine tensor grid of ``sub`` cells per bin per axis is evaluated once
    per requested lab time; relativistic targets are static and cached.
    """

    def __init__(self, model: WaveModel, geometry: Geometry, bins: int, sub: int = 8):
        self.model = model
        self.geometry = geometry
        self.bins = bins
        self.sub = sub
        self.axes = _analyzed_axes(model, geometry)
        self._cache: dict = {}

    def _fine_points(self, t_fixed: float | None):
        spans = [self.geometry.periods[a] for a in self.axes]
        fine = [
            (np.arange(self.bins * self.sub) + 0.5) * (span / (self.bins * self.sub))
            for span in spans
        ]
        mesh = np.meshgrid(*fine, indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=-1)
        if t_fixed is not None:
            pts = np.concatenate(
                [np.full((len(pts), 1), t_fixed), pts], axis=1
            )
        return pts, tuple(len(f) for f in fine)

    def _eval(self, t_fixed: float | None):
        key = t_fixed
        if key in self._cache:
            return self._cache[key]
        pts, shape = self._fine_points(t_fixed)
        rho = self.model.rho(pts).reshape(shape)
        sp = transformed_phase_gradient(self.model, pts).reshape(shape + (-1,))
        entry = (rho, sp, shape)
        if t_fixed is None:
            self._cache[key] = entry
        return entry

    def _block(self, arr: np.ndarray, axis_pos: int) -> np.ndarray:
        """Sum over all other axes, then block-sum ``sub`` fine cells per bin."""
        other = tuple(i for i in range(arr.ndim) if i != axis_pos)
        line = arr.sum(axis=other)
        return line.reshape(self.bins, self.sub).sum(axis=1)

    def density_marginals(self, t_fixed: float | None = None) -> list[np.ndarray]:
        rho, _, _ = self._eval(t_fixed)
        outs = []
        for pos in range(rho.ndim):
            m = self._block(rho, pos)
            outs.append(m / m.sum())
        return outs

    def joint(self, t_fixed: float | None = None) -> np.ndarray:
        rho, _, _ = self._eval(t_fixed)
        blocked = rho
        for pos in range(rho.ndim):
            blocked = np.add.reduceat(
                blocked, np.arange(0, blocked.shape[pos], self.sub), axis=pos
            )
        return blocked / blocked.sum()

    def momentum_marginals(self, t_fixed: float | None = None) -> list[np.ndarray]:
        """Per axis: (bins, dim) bin integrals of rho dS' / total rho mass."""
        rho, sp, _ = self._eval(t_fixed)
        mass = rho.sum()
        outs = []
        for pos in range(rho.ndim):
            cols = [self._block(rho * sp[..., nu], pos) for nu in range(sp.shape[-1])]
            outs.append(np.stack(cols, axis=-1) / mass)
        return outs


def _l1(p: np.ndarray, q: np.ndarray) -> float:
    return float(np.sum(np.abs(p - q)))


def _kl(p: np.ndarray, q: np.ndarray) -> float:
    mask = p > 0
    return float(np.sum(p[mask] * np.log(p[mask] / np.maximum(q[mask], 1e-300))))


def _sample_initial(model: WaveModel, geometry: Geometry, cfg: EnsembleConfig,
                    rng: np.random.Generator):
    """Initial positions per the configured law; returns (X, acceptance)."""
    lo, hi = geometry.box() if model.relativistic else _spatial_box(geometry)
    n = cfg.n_particles
    if cfg.initial_distribution == "uniform":
        if model.relativistic:
            return rng.uniform(lo, hi, size=(n, geometry.dim)), None
        xs = rng.uniform(lo, hi, size=(n, geometry.dim - 1))
        return np.concatenate([np.zeros((n, 1)), xs], axis=1), None
    if cfg.initial_distribution == "equilibrium":
        if model.relativistic:
            return (*rejection_sample(model.rho, lo, hi, n, rng),)
        dens = lambda xs: model.rho(
            np.concatenate([np.zeros((len(xs), 1)), xs], axis=1)
        )
        xs, acc = rejection_sample(dens, lo, hi, n, rng)
        return np.concatenate([np.zeros((n, 1)), xs], axis=1), acc
    # delta_in_time: everything on the x0 = 0 slice, spatially at equilibrium
    if not model.relativistic:
        raise ValueError("delta_in_time start needs a relativistic torus run")
    dens = lambda xs: model.rho(
        np.concatenate([np.zeros((len(xs), 1)), xs], axis=1)
    )
    xs, acc = rejection_sample(dens, lo[1:], hi[1:], n, rng)
    return np.concatenate([np.zeros((n, 1)), xs], axis=1), acc


def _spatial_box(geometry: Geometry):
    lo = np.zeros(geometry.dim - 1)
    hi = np.array([float(p) for p in geometry.periods[1:]])
    return lo, hi


def run_ensemble(
    model: WaveModel,
    geometry: Geometry,
    cfg: EnsembleConfig,
    kind: str = "equivariance",
) -> EnsembleReport:
    """Propagate an ensemble under stochastic guidance and analyze snapshots."""
    for a, p in enumerate(geometry.periods):
        if p is None and (model.relativistic or a != 0):
            raise GeometryMismatch("ensemble axes must be periodic (except NR time)")
    rng = np.random.default_rng(cfg.seed)
    X, acceptance = _sample_initial(model, geometry, cfg, rng)
    carried = None
    if kind == "momentum" or cfg.momentum_maps:
        carried = drift_prime_many(model, X)

    axes = _analyzed_axes(model, geometry)
    names = _axis_names(model, axes)
    targets = TargetCalc(model, geometry, cfg.bins)
    edges = [
        np.linspace(0.0, float(geometry.periods[a]), cfg.bins + 1) for a in axes
    ]
    step_cfg = StepConfig(
        dtau=cfg.dtau,
        geometry=geometry,
        diffusion=cfg.diffusion,
        rng=rng,
        eps_node=cfg.eps_node,
        max_redraws=cfg.max_redraws,
    )

    snapshots: list[Snapshot] = []
    trajectories: list[dict] = []
    rejections = 0

    def analyze(step: int):
        tau = step * cfg.dtau
        t_fixed = None if model.relativistic else float(X[0, 0])
        qs = targets.density_marginals(t_fixed)
        l1s, kls, hists = [], [], []
        for pos, a in enumerate(axes):
            counts, _ = np.histogram(X[:, a], bins=edges[pos])
            p = counts / cfg.n_particles
            l1s.append(_l1(p, qs[pos]))
            kls.append(_kl(p, qs[pos]))
            hists.append(p.tolist())
        joint = None
        if model.relativistic and len(axes) == 2:
            counts, _, _ = np.histogram2d(X[:, axes[0]], X[:, axes[1]],
                                          bins=[edges[0], edges[1]])
            joint = _l1(counts / cfg.n_particles, targets.joint(t_fixed))
        mm_l1 = carried_rms = None
        if carried is not None:
            sp = transformed_phase_gradient(model, X)
            mm_num = mm_den = 0.0
            mtargets = targets.momentum_marginals(t_fixed)
            for pos, a in enumerate(axes):
                mt = mtargets[pos]
                for nu in range(sp.shape[1]):
                    mhat, _ = np.histogram(X[:, a], bins=edges[pos],
                                           weights=sp[:, nu])
                    mhat /= cfg.n_particles
                    mm_num += float(np.sum(np.abs(mhat - mt[:, nu])))
                    mm_den += float(np.sum(np.abs(mt[:, nu])))
            mm_l1 = mm_num / max(mm_den, 1e-300)
            drift_now = drift_prime_many(model, X)
            carried_rms = float(np.sqrt(np.mean((carried - drift_now) ** 2)))
        # relaxation is watched on the local-time axis when there is one
        h = kls[0]
        snapshots.append(
            Snapshot(tau=tau, l1=l1s, kl=kls, h_coarse=h, joint_l1=joint,
                     momentum_map_l1=mm_l1, carried_vs_field_rms=carried_rms,
                     hist=hists)
        )
        for pid in range(min(cfg.trajectory_dump, cfg.n_particles)):
            row = {"particle_id": pid, "tau": tau,
                   "position": X[pid].tolist()}
            if carried is not None:
                row["carried_velocity"] = carried[pid].tolist()
            trajectories.append(row)

    analyze(0)
    for step in range(1, cfg.steps + 1):
        X, rej = em_step_many(model, X, step_cfg, n_workers=cfg.n_workers)
        rejections += rej
        if step % cfg.snapshot_every == 0 or step == cfg.steps:
            analyze(step)

    return EnsembleReport(
        kind=kind,
        axes=names,
        bins=cfg.bins,
        n_particles=cfg.n_particles,
        dtau=cfg.dtau,
        steps=cfg.steps,
        seed=cfg.seed,
        snapshots=snapshots,
        node_rejections=rejections,
        acceptance_rate=acceptance,
        trajectories=trajectories,
    )


def run_equivariance(model: WaveModel, geometry: Geometry, cfg: EnsembleConfig) -> EnsembleReport:
    """Equilibrium-start run; the histogram should track rho for all tau."""
    if cfg.initial_distribution != "equilibrium":
        raise ValueError("equivariance runs start at equilibrium")
    return run_ensemble(model, geometry, cfg, kind="equivariance")


def run_relaxation(model: WaveModel, geometry: Geometry, cfg: EnsembleConfig) -> EnsembleReport:
    """Non-equilibrium start; the coarse-grained H function should decay."""
    if cfg.initial_distribution == "equilibrium":
        raise ValueError("relaxation runs need a non-equilibrium start")
    return run_ensemble(model, geometry, cfg, kind="relaxation")


def run_momentum_equivariance(model: WaveModel, geometry: Geometry, cfg: EnsembleConfig) -> EnsembleReport:
    """Equilibrium run tracking momentum maps and carried velocities."""
    if cfg.initial_distribution != "equilibrium":
        raise ValueError("momentum equivariance runs start at equilibrium")
    return run_ensemble(model, geometry, cfg, kind="momentum")

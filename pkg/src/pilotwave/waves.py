"""Exact plane-wave solutions of the Klein-Gordon and Schrodinger equations.

A model is a finite superposition of on-shell modes.  Every mode contributes
``a * exp(i p.x)`` with a constant phase covector ``p``, so all derivatives of
psi are exact mode sums -- no finite differences anywhere in this module.

Conventions (fixed project-wide):

* coordinates are ``x = (x0, x1, ..., xd)`` with ``x0`` the (local or lab)
  time coordinate;
* Klein-Gordon modes are ``a * exp(-i k.x)`` with ``k.x = k^mu eta_mune x^nu``,
  hence ``p_mu = -k_mu`` and the phase gradient of a single mode is
  ``-hbar * k_mu``;
* Schrodinger modes are ``a * exp(i (k.x_spatial - omega t))``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyModeSet, NotRelativistic, OffShell

KLEIN_GORDON = "klein_gordon"
SCHRODINGER = "schrodinger"

ON_SHELL_TOL = 1e-12
EQUAL_ENERGY_TOL = 1e-12


@dataclass(frozen=True)
class Metric:
    """Flat diagonal metric plus the physical constants it carries.

    ``signature`` is a tuple of +/-1 per coordinate for relativistic models
    (entry 0 is the time coordinate) and ``None`` for non-relativistic ones.
    Natural units ``c = m = hbar = 1`` are the default.
    """

    signature: tuple[int, ...] | None = None
    c: float = 1.0
    m: float = 1.0
    hbar: float = 1.0

    def __post_init__(self):
        if not (self.c > 0 and self.m > 0 and self.hbar > 0):
            raise ValueError("c, m, hbar must be positive")
        if self.signature is not None:
            sig = tuple(int(s) for s in self.signature)
            if len(sig) < 2:
                raise ValueError("relativistic signature needs >= 2 entries")
            if any(s not in (-1, 1) for s in sig):
                raise ValueError("signature entries must be +1 or -1")
            if any(s != -sig[0] for s in sig[1:]):
                raise ValueError("exactly one time-like entry (index 0) required")
            object.__setattr__(self, "signature", sig)

    @property
    def relativistic(self) -> bool:
        return self.signature is not None

    @property
    def time_sign(self) -> int:
        """eta_00; raises for non-relativistic metrics."""
        if self.signature is None:
            raise NotRelativistic("non-relativistic metric has no signature")
        return self.signature[0]

    def contraction_weights(self, dim: int) -> np.ndarray:
        """Diagonal weights for index raising / contraction.

        Relativistic: the signature itself (eta^mumu == eta_mumu for +/-1
        entries).  Non-relativistic: time excluded, Euclidean space.
        """
        if self.signature is not None:
            if dim != len(self.signature):
                raise ValueError("dimension mismatch with signature")
            return np.array(self.signature, dtype=float)
        w = np.ones(dim)
        w[0] = 0.0
        return w

    def mass_shell(self, v0: float) -> float:
        """(m c / hbar)^2 + 2 m V0 / hbar^2, the squared dispersion mass."""
        return (self.m * self.c / self.hbar) ** 2 + 2.0 * self.m * v0 / self.hbar**2


@dataclass(frozen=True)
class WaveMode:
    """One plane-wave mode.

    Relativistic: ``wavevector`` is the full k^mu (length d+1), ``omega`` is
    None.  Non-relativistic: ``wavevector`` is the spatial k (length d) and
    ``omega`` the angular frequency.
    """

    amplitude: complex
    wavevector: tuple[float, ...]
    omega: float | None = None

    def k(self) -> np.ndarray:
        return np.array(self.wavevector, dtype=float)


@dataclass(frozen=True)
class WaveModel:
    """Immutable superposition of on-shell modes; safe for concurrent reads."""

    metric: Metric
    modes: tuple[WaveMode, ...]
    kind: str
    v0: float = 0.0
    _phase: np.ndarray = field(init=False, repr=False, compare=False)
    _amps: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.modes:
            raise EmptyModeSet("a wave model needs at least one mode")
        if self.kind not in (KLEIN_GORDON, SCHRODINGER):
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.kind == KLEIN_GORDON and not self.metric.relativistic:
            raise NotRelativistic("Klein-Gordon model needs a signature")
        self._check_dispersion()
        object.__setattr__(self, "_phase", self._phase_covectors())
        object.__setattr__(
            self, "_amps", np.array([m.amplitude for m in self.modes], dtype=complex)
        )

    # -- construction helpers -------------------------------------------------

    def _check_dispersion(self):
        met = self.metric
        if self.kind == KLEIN_GORDON:
            target = met.time_sign * met.mass_shell(self.v0)
            sig = np.array(met.signature, dtype=float)
            for i, mode in enumerate(self.modes):
                k = mode.k()
                if k.shape != (len(sig),):
                    raise ValueError(f"mode {i}: wavevector length != d+1")
                kk = float(np.sum(sig * k * k))
                if abs(kk - target) > ON_SHELL_TOL * max(1.0, abs(target)):
                    raise OffShell(i, abs(kk - target))
        else:
            for i, mode in enumerate(self.modes):
                if mode.omega is None:
                    raise ValueError(f"mode {i}: Schrodinger mode needs omega")
                k2 = float(np.dot(mode.k(), mode.k()))
                want = met.hbar * k2 / (2.0 * met.m) + self.v0 / met.hbar
                if abs(mode.omega - want) > ON_SHELL_TOL * max(1.0, abs(want)):
                    raise OffShell(i, abs(mode.omega - want))

    def _phase_covectors(self) -> np.ndarray:
        """Per-mode covector p with mode = a * exp(i p.x), plain dot product."""
        if self.kind == KLEIN_GORDON:
            sig = np.array(self.metric.signature, dtype=float)
            return np.stack([-sig * m.k() for m in self.modes])
        rows = []
        for m in self.modes:
            rows.append(np.concatenate(([-m.omega], m.k())))
        return np.stack(rows)

    # -- basic queries ---------------------------------------------------------

    @property
    def dim(self) -> int:
        """Number of coordinates, time included."""
        return self._phase.shape[1]

    @property
    def relativistic(self) -> bool:
        return self.kind == KLEIN_GORDON

    @property
    def equal_energy(self) -> bool:
        """True iff relativistic and all modes share k^0."""
        if self.kind != KLEIN_GORDON:
            return False
        k0 = np.array([m.k()[0] for m in self.modes])
        return bool(np.max(np.abs(k0 - k0[0])) <= EQUAL_ENERGY_TOL * max(1.0, abs(k0[0])))

    @property
    def shared_energy(self) -> float:
        return float(self.modes[0].k()[0])

    def contraction_weights(self) -> np.ndarray:
        return self.metric.contraction_weights(self.dim)

    # -- evaluation ------------------------------------------------------------

    def psi(self, points: np.ndarray) -> np.ndarray:
        """psi at one point (shape (dim,)) or many (shape (n, dim))."""
        pts = np.asarray(points, dtype=float)
        squeeze = pts.ndim == 1
        pts = np.atleast_2d(pts)
        vals = np.exp(1j * (pts @ self._phase.T)) @ self._amps
        return vals[0] if squeeze else vals

    def rho(self, points: np.ndarray) -> np.ndarray:
        vals = self.psi(points)
        return np.abs(vals) ** 2

    def log_derivative(self, points: np.ndarray):
        """(psi, w) with w_mu = d_mu psi / psi, vectorized over points.

        The hot path for integrators: one complex matmul per call.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        mode_vals = np.exp(1j * (pts @ self._phase.T)) * self._amps
        psi = mode_vals.sum(axis=1)
        dpsi = mode_vals @ (1j * self._phase)
        return psi, dpsi / psi[:, None]


@dataclass(frozen=True)
class FieldJet:
    """psi and its exact partial derivatives up to ``order`` at one point.

    ``d2_psi`` and ``d3_psi`` are symmetric in all indices by construction
    (plane-wave derivatives commute).  Zeros of psi are legal here; callers
    apply the node guard.
    """

    point: np.ndarray
    psi: complex
    d_psi: np.ndarray | None = None
    d2_psi: np.ndarray | None = None
    d3_psi: np.ndarray | None = None
    order: int = 3


def evaluate_jet(model: WaveModel, point, order: int = 3) -> FieldJet:
    """Exact analytic jet of psi at ``point`` (order 0..3, mode-wise products)."""
    if not 0 <= order <= 3:
        raise ValueError("order must be in 0..3")
    x = np.asarray(point, dtype=float)
    p = model._phase                       # (n_modes, dim)
    ip = 1j * p
    mode_vals = model._amps * np.exp(1j * (p @ x))
    psi = complex(mode_vals.sum())
    d1 = d2 = d3 = None
    if order >= 1:
        d1 = ip.T @ mode_vals
    if order >= 2:
        d2 = np.einsum("na,nb,n->ab", ip, ip, mode_vals)
    if order >= 3:
        d3 = np.einsum("na,nb,nc,n->abc", ip, ip, ip, mode_vals)
    return FieldJet(point=x, psi=psi, d_psi=d1, d2_psi=d2, d3_psi=d3, order=order)


def pde_residual(model: WaveModel, points: np.ndarray) -> np.ndarray:
    """Relative residual of the governing PDE at each point.

    Klein-Gordon: ``box psi + eta00 * M^2 psi`` over ``M^2 |psi|``;
    Schrodinger: ``i hbar dt psi + hbar^2/2m lap psi - V0 psi`` over the
    magnitude of its largest term.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    met = model.metric
    out = np.empty(len(pts))
    for i, x in enumerate(pts):
        jet = evaluate_jet(model, x, order=2)
        if model.kind == KLEIN_GORDON:
            w = model.contraction_weights()
            box = np.sum(w * np.diagonal(jet.d2_psi))
            m2 = met.mass_shell(model.v0)
            res = box + met.time_sign * m2 * jet.psi
            scale = max(abs(m2 * jet.psi), abs(box), 1e-300)
        else:
            lap = np.sum(np.diagonal(jet.d2_psi)[1:])
            t1 = 1j * met.hbar * jet.d_psi[0]
            t2 = met.hbar**2 / (2.0 * met.m) * lap
            t3 = -model.v0 * jet.psi
            res = t1 + t2 + t3
            scale = max(abs(t1), abs(t2), abs(t3), abs(jet.psi), 1e-300)
        out[i] = abs(res) / scale
    return out


# -- builders -------------------------------------------------------------------


def build_equal_energy_kg_set(
    metric: Metric,
    shared_energy: float,
    spatial_wavevectors,
    amplitudes,
    v0: float = 0.0,
) -> WaveModel:
    """Klein-Gordon superposition whose modes all share k^0 = shared_energy.

    Every spatial wavevector must satisfy
    ``shared_energy^2 - |k|^2 = (m c/hbar)^2 + 2 m V0/hbar^2`` to 1e-10.
    """
    if not metric.relativistic:
        raise NotRelativistic("equal-energy builder needs a relativistic metric")
    if len(spatial_wavevectors) == 0:
        raise EmptyModeSet("no modes given")
    if len(spatial_wavevectors) != len(amplitudes):
        raise ValueError("wavevector and amplitude lists must match")
    m2 = metric.mass_shell(v0)
    modes = []
    for i, (kvec, amp) in enumerate(zip(spatial_wavevectors, amplitudes)):
        kvec = np.atleast_1d(np.asarray(kvec, dtype=float))
        gap = shared_energy**2 - float(np.dot(kvec, kvec)) - m2
        if abs(gap) > 1e-10 * max(1.0, m2):
            raise OffShell(i, abs(gap))
        modes.append(WaveMode(complex(amp), (shared_energy, *kvec.tolist())))
    return WaveModel(metric=metric, modes=tuple(modes), kind=KLEIN_GORDON, v0=v0)


def build_schrodinger_set(
    spatial_wavevectors,
    amplitudes,
    v0: float = 0.0,
    metric: Metric | None = None,
) -> WaveModel:
    """Free (constant-V0) Schrodinger superposition with the exact dispersion."""
    if len(spatial_wavevectors) == 0:
        raise EmptyModeSet("no modes given")
    if len(spatial_wavevectors) != len(amplitudes):
        raise ValueError("wavevector and amplitude lists must match")
    met = metric or Metric()
    if met.relativistic:
        raise ValueError("Schrodinger model takes a signature-free metric")
    modes = []
    for kvec, amp in zip(spatial_wavevectors, amplitudes):
        kvec = np.atleast_1d(np.asarray(kvec, dtype=float))
        omega = met.hbar * float(np.dot(kvec, kvec)) / (2.0 * met.m) + v0 / met.hbar
        modes.append(WaveMode(complex(amp), tuple(kvec.tolist()), omega=omega))
    return WaveModel(metric=met, modes=tuple(modes), kind=SCHRODINGER, v0=v0)


def lorentz_boost_matrix(dim: int, rapidity: float, axis: int) -> np.ndarray:
    """Boost acting on upper-index vectors, mixing x0 with the given axis."""
    if not 1 <= axis < dim:
        raise ValueError("boost axis must be a spatial index")
    lam = np.eye(dim)
    ch, sh = np.cosh(rapidity), np.sinh(rapidity)
    lam[0, 0] = ch
    lam[axis, axis] = ch
    lam[0, axis] = -sh
    lam[axis, 0] = -sh
    return lam


def boost_modes(model: WaveModel, rapidity: float, axis: int = 1) -> WaveModel:
    """Lorentz-boost every mode wavevector; amplitudes are scalars, unchanged."""
    if model.kind != KLEIN_GORDON:
        raise NotRelativistic("boost applies to Klein-Gordon models only")
    lam = lorentz_boost_matrix(model.dim, rapidity, axis)
    modes = tuple(
        WaveMode(m.amplitude, tuple((lam @ m.k()).tolist())) for m in model.modes
    )
    return WaveModel(metric=model.metric, modes=modes, kind=KLEIN_GORDON, v0=model.v0)

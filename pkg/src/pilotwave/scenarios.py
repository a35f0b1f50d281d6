"""Scenario files: parsing, validation, serialization, model construction.

A scenario is a TOML file with a ``[model]`` table (mode content and
constants), a ``[geometry]`` table (periodic box), and optional per-command
tables ``[verify]``, ``[simulate]``, ``[relax]``, ``[fpcheck]`` overriding
the defaults baked in here.

Validation is collected field by field; every problem names the offending
key (and mode index for dispersion failures).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

import numpy as np

from .dynamics import Geometry
from .ensemble import EnsembleConfig
from .errors import ScenarioError
from .waves import (
    KLEIN_GORDON,
    SCHRODINGER,
    Metric,
    WaveModel,
    build_equal_energy_kg_set,
    build_schrodinger_set,
)

COMMENSURATE_TOL = 1e-9

VERIFY_DEFAULTS = {
    "probes": 100,
    "seed": 42,
    "tolerance": 1e-8,
    "assert_conservation": False,
    "clock_check": False,
}

SIMULATE_DEFAULTS = {
    "particles": 100_000,
    "steps": 500,
    "dtau": 5e-3,
    "bins": 64,
    "snapshot_every": 100,
    "seed": 42,
    "l1_threshold": 0.03,
    "momentum": False,
    "momentum_l1_threshold": 0.05,
    "diffusion": None,
    "trajectory_dump": 0,
    "workers": 1,
}

RELAX_DEFAULTS = {
    "particles": 100_000,
    "steps": 2000,
    "dtau": 5e-3,
    "bins": 64,
    "snapshot_every": 100,
    "seed": 42,
    "initial": "delta_in_time",
    "l1_final_threshold": 0.05,
    "h_noise_budget": 1e-3,
    "workers": 1,
}

FPCHECK_DEFAULTS = {
    "resolution": None,              # filled per dimension below
    "stationarity_resolution": None,
    "stationarity_steps": 1000,
    "stationarity_l1": 1e-3,
    "compare_l1": 0.05,
    "equilibrium_steps": 400,
    "relaxation_steps": 400,
    "particles": 100_000,
    "dtau": 5e-3,
    "bins": 64,
    "snapshot_every": 100,
    "seed": 42,
    "blend_upwind": 0.0,
}


@dataclass
class ScenarioConfig:
    """Validated scenario: raw tables plus constructed model and geometry."""

    name: str
    path: str
    model_table: dict
    geometry_table: dict
    verify: dict = field(default_factory=dict)
    simulate: dict = field(default_factory=dict)
    relax: dict = field(default_factory=dict)
    fpcheck: dict = field(default_factory=dict)

    def build_model(self) -> WaveModel:
        return _build_model(self.model_table)

    def build_geometry(self) -> Geometry:
        spans = [float(v) for v in self.geometry_table["space_periods"]]
        t = self.geometry_table.get("time_period")
        kind = self.model_table["kind"]
        if kind == KLEIN_GORDON:
            return Geometry(periods=(float(t), *spans))
        return Geometry(periods=(None, *spans))

    def probe_box(self):
        """Box used for residual probe points (time window included)."""
        spans = [float(v) for v in self.geometry_table["space_periods"]]
        t = float(self.geometry_table.get("time_period", 1.0))
        lo = np.zeros(1 + len(spans))
        hi = np.array([t, *spans])
        return lo, hi

    def ensemble_config(self, table: dict, initial: str = "equilibrium",
                        seed: int | None = None) -> EnsembleConfig:
        return EnsembleConfig(
            n_particles=int(table["particles"]),
            initial_distribution=initial,
            steps=int(table["steps"]),
            dtau=float(table["dtau"]),
            bins=int(table["bins"]),
            seed=int(table["seed"] if seed is None else seed),
            snapshot_every=int(table["snapshot_every"]),
            diffusion=table.get("diffusion"),
            momentum_maps=bool(table.get("momentum", False)),
            trajectory_dump=int(table.get("trajectory_dump", 0)),
            n_workers=int(table.get("workers", 1)),
        )

    def to_toml(self) -> str:
        doc = {
            "name": self.name,
            "model": self.model_table,
            "geometry": self.geometry_table,
        }
        for key in ("verify", "simulate", "relax", "fpcheck"):
            table = getattr(self, key)
            if table:
                doc[key] = table
        return emit_toml(doc)


def _build_model(tab: dict) -> WaveModel:
    kind = tab["kind"]
    met_kwargs = {
        "c": float(tab.get("c", 1.0)),
        "m": float(tab.get("mass", 1.0)),
        "hbar": float(tab.get("hbar", 1.0)),
    }
    amps = [complex(a[0], a[1]) for a in tab["amplitudes"]]
    waves = [list(map(float, k)) for k in tab["wavevectors"]]
    if kind == KLEIN_GORDON:
        metric = Metric(signature=tuple(int(s) for s in tab["signature"]), **met_kwargs)
        return build_equal_energy_kg_set(
            metric, float(tab["energy"]), waves, amps, v0=float(tab.get("v0", 0.0))
        )
    metric = Metric(signature=None, **met_kwargs)
    return build_schrodinger_set(waves, amps, v0=float(tab.get("v0", 0.0)), metric=metric)


def _merged(defaults: dict, table: dict) -> dict:
    out = dict(defaults)
    out.update(table)
    return out


def parse_scenario(path) -> ScenarioConfig:
    """Parse and validate a scenario file; raises ScenarioError listing all
    field-level problems found."""
    p = Path(path)
    if not p.exists():
        raise ScenarioError(f"scenario file not found: {p}")
    try:
        raw = tomllib.loads(p.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ScenarioError(f"TOML parse error: {exc}") from None

    problems = []
    model = raw.get("model")
    geometry = raw.get("geometry")
    if not isinstance(model, dict):
        problems.append("missing [model] table")
    if not isinstance(geometry, dict):
        problems.append("missing [geometry] table")
    if problems:
        raise ScenarioError(problems)

    problems += _validate_model(model)
    problems += _validate_geometry(model, geometry)
    for key, defaults in (
        ("verify", VERIFY_DEFAULTS),
        ("simulate", SIMULATE_DEFAULTS),
        ("relax", RELAX_DEFAULTS),
        ("fpcheck", FPCHECK_DEFAULTS),
    ):
        table = raw.get(key, {})
        if not isinstance(table, dict):
            problems.append(f"[{key}] must be a table")
            continue
        unknown = set(table) - set(defaults)
        if unknown:
            problems.append(f"[{key}] unknown keys: {sorted(unknown)}")
    if problems:
        raise ScenarioError(problems)

    cfg = ScenarioConfig(
        name=str(raw.get("name", p.stem)),
        path=str(p),
        model_table=model,
        geometry_table=geometry,
        verify=_merged(VERIFY_DEFAULTS, raw.get("verify", {})),
        simulate=_merged(SIMULATE_DEFAULTS, raw.get("simulate", {})),
        relax=_merged(RELAX_DEFAULTS, raw.get("relax", {})),
        fpcheck=_merged(FPCHECK_DEFAULTS, raw.get("fpcheck", {})),
    )
    _fill_fp_resolution(cfg)
    return cfg


def _validate_model(tab: dict) -> list[str]:
    problems = []
    kind = tab.get("kind")
    if kind not in (KLEIN_GORDON, SCHRODINGER):
        return [f"model.kind must be '{KLEIN_GORDON}' or '{SCHRODINGER}'"]
    waves = tab.get("wavevectors")
    amps = tab.get("amplitudes")
    if not isinstance(waves, list) or not waves:
        problems.append("model.wavevectors must be a nonempty list")
    if not isinstance(amps, list) or not amps:
        problems.append("model.amplitudes must be a nonempty list")
    if problems:
        return problems
    if len(waves) != len(amps):
        problems.append("model.wavevectors and model.amplitudes lengths differ")
    if any(len(a) != 2 for a in amps):
        problems.append("model.amplitudes entries must be [re, im] pairs")
    dims = {len(k) for k in waves}
    if len(dims) != 1:
        problems.append("model.wavevectors must share one dimension")
    if problems:
        return problems

    hbar = float(tab.get("hbar", 1.0))
    m = float(tab.get("mass", 1.0))
    c = float(tab.get("c", 1.0))
    v0 = float(tab.get("v0", 0.0))
    if min(hbar, m, c) <= 0:
        problems.append("model constants mass, c, hbar must be positive")
        return problems
    if kind == KLEIN_GORDON:
        sig = tab.get("signature")
        if not isinstance(sig, list) or len(sig) != len(waves[0]) + 1:
            problems.append("model.signature must list d+1 entries of +/-1")
            return problems
        try:
            Metric(signature=tuple(int(s) for s in sig))
        except ValueError as exc:
            problems.append(f"model.signature: {exc}")
            return problems
        energy = tab.get("energy")
        if energy is None:
            problems.append("model.energy required for klein_gordon")
            return problems
        m2 = (m * c / hbar) ** 2 + 2.0 * m * v0 / hbar**2
        for i, k in enumerate(waves):
            gap = float(energy) ** 2 - sum(float(x) ** 2 for x in k) - m2
            if abs(gap) > 1e-10 * max(1.0, m2):
                problems.append(
                    f"model.wavevectors[{i}]: off shell for energy "
                    f"{energy} (residual {abs(gap):.3e})"
                )
    return problems


def _validate_geometry(model: dict, tab: dict) -> list[str]:
    problems = []
    spans = tab.get("space_periods")
    kind = model.get("kind")
    waves = model.get("wavevectors") or []
    if not isinstance(spans, list) or not spans:
        return ["geometry.space_periods must be a nonempty list"]
    if waves and isinstance(waves[0], list) and len(spans) != len(waves[0]):
        problems.append("geometry.space_periods length must match wavevector dimension")
        return problems
    if any(float(s) <= 0 for s in spans):
        problems.append("geometry.space_periods must be positive")
    for i, k in enumerate(waves):
        for a, (kj, span) in enumerate(zip(k, spans)):
            windings = float(kj) * float(span) / (2.0 * math.pi)
            if abs(windings - round(windings)) > COMMENSURATE_TOL * max(1.0, abs(windings)):
                problems.append(
                    f"geometry.space_periods[{a}]: non-commensurate with "
                    f"mode {i} (k*L/2pi = {windings:.6f})"
                )
    t = tab.get("time_period")
    if kind == KLEIN_GORDON:
        if t is None or float(t) <= 0:
            problems.append("geometry.time_period must be positive for klein_gordon")
        else:
            energy = model.get("energy")
            if energy is not None:
                windings = float(energy) * float(t) / (2.0 * math.pi)
                if abs(windings - round(windings)) > COMMENSURATE_TOL * max(1.0, abs(windings)):
                    problems.append(
                        "geometry.time_period: non-commensurate with the shared "
                        f"energy (E*T/2pi = {windings:.6f})"
                    )
    elif t is not None and float(t) <= 0:
        problems.append("geometry.time_period must be positive")
    return problems


def _fill_fp_resolution(cfg: ScenarioConfig):
    naxes = 1 + len(cfg.geometry_table["space_periods"])
    if cfg.model_table["kind"] != KLEIN_GORDON:
        naxes -= 1
    bins = int(cfg.fpcheck["bins"])
    if cfg.fpcheck.get("resolution") is None:
        cfg.fpcheck["resolution"] = [2 * bins] * naxes
    if cfg.fpcheck.get("stationarity_resolution") is None:
        cfg.fpcheck["stationarity_resolution"] = list(cfg.fpcheck["resolution"])


# -- minimal TOML emitter for round-trips ------------------------------------------
#
# tomli ships without a writer; scenarios only need tables of scalars and
# (nested) arrays, so a small emitter keeps the dependency surface flat.


def _fmt_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_fmt_value(x) for x in v) + "]"
    raise TypeError(f"cannot serialize {type(v)} to TOML")


def emit_toml(doc: dict) -> str:
    lines = []
    for key, val in doc.items():
        if not isinstance(val, dict):
            lines.append(f"{key} = {_fmt_value(val)}")
    for key, val in doc.items():
        if isinstance(val, dict):
            lines.append("")
            lines.append(f"[{key}]")
            for k, v in val.items():
                if v is None:
                    continue
                lines.append(f"{k} = {_fmt_value(v)}")
    return "\n".join(lines) + "\n"

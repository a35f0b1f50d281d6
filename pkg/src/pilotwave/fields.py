"""Polar-decomposition quantities derived from a field jet.

Everything downstream of psi is computed here: the density rho with its
derivatives, the phase derivatives dS (and the transformed-phase derivatives
dS' = dS + hbar/2 dlog rho), the quantum potential in its equivalent forms,
and the stochastic drift.

Phase derivatives come from ``d_mu S = hbar Im(d_mu psi / psi)`` and repeated
quotient-rule differentiation; S itself is never materialized, which avoids
global phase unwrapping.  All contractions use the model's weights: the
metric signature for Klein-Gordon fields, time-excluded Euclidean weights for
Schrodinger fields.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import NodeTooClose
from .waves import KLEIN_GORDON, FieldJet, Metric, WaveModel, evaluate_jet

EPS_NODE = 1e-6


@dataclass(frozen=True)
class DerivedFields:
    """rho, phase and log-density derivatives, Q and drift at one point.

    Tensors are index-symmetric by construction.  ``d3_*`` entries are None
    when the source jet was below third order.
    """

    point: np.ndarray
    rho: float
    d_rho: np.ndarray
    d2_rho: np.ndarray
    d3_rho: np.ndarray | None
    d_logrho: np.ndarray
    d2_logrho: np.ndarray
    d3_logrho: np.ndarray | None
    d_S: np.ndarray
    d2_S: np.ndarray
    d3_S: np.ndarray | None
    q_value: float
    d_q: np.ndarray
    drift_prime: np.ndarray
    weights: np.ndarray
    metric: Metric
    kind: str
    v0: float

    @property
    def hbar(self) -> float:
        return self.metric.hbar

    @property
    def m(self) -> float:
        return self.metric.m

    @property
    def relativistic(self) -> bool:
        return self.kind == KLEIN_GORDON

    # transformed phase S' = S + (hbar/2) log rho, derivative by derivative
    @property
    def d_sprime(self) -> np.ndarray:
        return self.d_S + 0.5 * self.hbar * self.d_logrho

    @property
    def d2_sprime(self) -> np.ndarray:
        return self.d2_S + 0.5 * self.hbar * self.d2_logrho

    @property
    def d3_sprime(self) -> np.ndarray:
        return self.d3_S + 0.5 * self.hbar * self.d3_logrho


def derive_fields(
    jet: FieldJet,
    metric: Metric,
    kind: str = KLEIN_GORDON,
    v0: float = 0.0,
    eps_node: float = EPS_NODE,
) -> DerivedFields:
    """Convert a jet into all polar quantities used by the residual checks.

    Raises ``NodeTooClose`` when ``|psi| < eps_node``; callers resample or
    reject the probe point (Q and log rho diverge at nodes).
    """
    apsi = abs(jet.psi)
    if apsi < eps_node:
        raise NodeTooClose(apsi, eps_node)
    if jet.order < 2:
        raise ValueError("derive_fields needs a jet of order >= 2")

    dim = jet.d_psi.shape[0]
    hbar, m = metric.hbar, metric.m
    w1 = jet.d_psi / jet.psi
    t2 = jet.d2_psi / jet.psi
    dw = t2 - np.outer(w1, w1)

    rho = apsi * apsi
    L1 = 2.0 * w1.real
    L2 = 2.0 * dw.real
    dS1 = hbar * w1.imag
    dS2 = hbar * dw.imag

    have3 = jet.order >= 3 and jet.d3_psi is not None
    if have3:
        u3 = jet.d3_psi / jet.psi
        ddw = (
            u3
            - np.einsum("ab,c->abc", t2, w1)
            - np.einsum("ac,b->abc", t2, w1)
            - np.einsum("bc,a->abc", t2, w1)
            + 2.0 * np.einsum("a,b,c->abc", w1, w1, w1)
        )
        L3 = 2.0 * ddw.real
        dS3 = hbar * ddw.imag
    else:
        L3 = dS3 = None

    d_rho = rho * L1
    d2_rho = rho * (L2 + np.outer(L1, L1))
    d3_rho = None
    if have3:
        d3_rho = rho * (
            L3
            + np.einsum("ab,c->abc", L2, L1)
            + np.einsum("ac,b->abc", L2, L1)
            + np.einsum("bc,a->abc", L2, L1)
            + np.einsum("a,b,c->abc", L1, L1, L1)
        )

    wgt = metric.contraction_weights(dim)
    # Q in the log-density representation (Appendix-C second form); the
    # defining sqrt-rho form is recomputed independently in
    # quantum_potential_forms.
    q = -(hbar**2 / (8.0 * m)) * float(np.sum(wgt * L1 * L1)) - (
        hbar**2 / (4.0 * m)
    ) * float(np.sum(wgt * np.diagonal(L2)))
    if have3:
        d_q = -(hbar**2 / (4.0 * m)) * (
            np.einsum("m,mn,m->n", wgt, L2, L1)
            + np.einsum("m,mmn->n", wgt, L3)
        )
    else:
        d_q = np.full(dim, np.nan)

    drift = wgt * (dS1 + 0.5 * hbar * L1) / m

    return DerivedFields(
        point=jet.point,
        rho=rho,
        d_rho=d_rho,
        d2_rho=d2_rho,
        d3_rho=d3_rho,
        d_logrho=L1,
        d2_logrho=L2,
        d3_logrho=L3,
        d_S=dS1,
        d2_S=dS2,
        d3_S=dS3,
        q_value=q,
        d_q=d_q,
        drift_prime=drift,
        weights=wgt,
        metric=metric,
        kind=kind,
        v0=v0,
    )


def fields_at(model: WaveModel, point, order: int = 3, eps_node: float = EPS_NODE):
    """evaluate_jet + derive_fields in one call."""
    jet = evaluate_jet(model, point, order=order)
    return derive_fields(jet, model.metric, kind=model.kind, v0=model.v0,
                         eps_node=eps_node)


class QForms(NamedTuple):
    """The quantum potential computed along four independent routes."""

    form_def: float   # -(hbar^2/2m) box sqrt(rho) / sqrt(rho), chain rule on rho
    form_a: float     # +log-gradient-squared / 8m  - box rho / (4m rho)
    form_b: float     # -log-gradient-squared / 8m  - box log rho / 4m
    form_c: float     # -(box log rho + box rho / rho) / 8m


def quantum_potential_forms(fields: DerivedFields, metric: Metric) -> QForms:
    """Evaluate the equivalent quantum-potential expressions.

    Each form is assembled from a different mix of rho / log-rho derivatives,
    so mutual agreement is a genuine cross-check of the derivative plumbing.
    """
    hbar, m = metric.hbar, metric.m
    w = fields.weights
    rho = fields.rho
    c2 = hbar**2 / m

    # defining form via d(sqrt rho) = d rho / (2 sqrt rho) etc.
    sq = np.sqrt(rho)
    d2_sqrt = fields.d2_rho / (2.0 * sq) - np.outer(fields.d_rho, fields.d_rho) / (
        4.0 * rho * sq
    )
    form_def = -0.5 * c2 * float(np.sum(w * np.diagonal(d2_sqrt))) / sq

    grad2_log = float(np.sum(w * fields.d_logrho**2))
    box_rho = float(np.sum(w * np.diagonal(fields.d2_rho)))
    box_log = float(np.sum(w * np.diagonal(fields.d2_logrho)))

    form_a = c2 / 8.0 * grad2_log - c2 / 4.0 * box_rho / rho
    form_b = -c2 / 8.0 * grad2_log - c2 / 4.0 * box_log
    form_c = -c2 / 8.0 * box_log - c2 / 8.0 * box_rho / rho
    return QForms(form_def, form_a, form_b, form_c)


def rho_grad_q_decomposition(fields: DerivedFields, metric: Metric):
    """Both sides of the rho * grad Q decomposition.

    lhs_nu = rho d_nu Q;
    rhs_nu = -(hbar^2/4m) box d_nu rho
             + (hbar^2/4m) d_mu (rho d_nu log rho d^mu log rho).
    """
    if fields.d3_rho is None:
        raise ValueError("third-order fields required")
    hbar, m = metric.hbar, metric.m
    w = fields.weights
    L1, L2 = fields.d_logrho, fields.d2_logrho
    lhs = fields.rho * fields.d_q
    box_drho = np.einsum("m,nmm->n", w, fields.d3_rho)
    div_term = (
        np.einsum("m,m,n,m->n", w, fields.d_rho, L1, L1)
        + fields.rho * np.einsum("m,nm,m->n", w, L2, L1)
        + fields.rho * L1 * float(np.sum(w * np.diagonal(L2)))
    )
    rhs = -(hbar**2 / (4.0 * m)) * box_drho + (hbar**2 / (4.0 * m)) * div_term
    return lhs, rhs


def stochastic_drift(fields: DerivedFields, metric: Metric):
    """Drift d^mu S'/m of the stochastic guidance law and its divergence."""
    div = float(
        np.sum(
            fields.weights
            * (np.diagonal(fields.d2_S) + 0.5 * metric.hbar * np.diagonal(fields.d2_logrho))
        )
    ) / metric.m
    return fields.drift_prime, div


# -- vectorized twins used by the integrators ------------------------------------


def drift_prime_at(model: WaveModel, points: np.ndarray):
    """(drift, rho) at many points: drift^mu = w_mu (d_mu S + hbar/2 d_mu log rho)/m.

    Non-relativistic models get a zero time component (lab time is advanced
    deterministically by the integrator).
    """
    psi, wlog = model.log_derivative(points)
    met = model.metric
    wgt = model.contraction_weights()
    drift = (met.hbar / met.m) * (wlog.imag + wlog.real) * wgt
    return drift, np.abs(psi) ** 2


def guidance_drift_at(model: WaveModel, points: np.ndarray):
    """(drift, rho) for the deterministic guidance law d^mu S / m."""
    psi, wlog = model.log_derivative(points)
    met = model.metric
    wgt = model.contraction_weights()
    drift = (met.hbar / met.m) * wlog.imag * wgt
    return drift, np.abs(psi) ** 2

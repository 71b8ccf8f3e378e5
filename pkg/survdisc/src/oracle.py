"""
Ground truth under the Weibull proportional-hazards law

    lambda(t | eta) = theta * p * t^(p-1) * exp(eta),   eta ~ N(eta_mean, eta_sd^2).

Scalar truths use adaptive quadrature over eta in eta_mean +/- 10 sd. Whole
ROC curves and the concordance integral use fixed Gauss-Legendre rules on a
grid of thresholds so every point shares one set of eta nodes. The Monte
Carlo functions at the bottom are independent cross-checks of the quadrature.
"""

import logging
import warnings
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import pandas as pd
from scipy import integrate
from scipy.special import gamma
from scipy.stats import norm

from errors import QuadratureFailure

logger = logging.getLogger(__name__)

ETA_HALF_WIDTH = 10.0
ROC_HALF_WIDTH = 8.0
ROC_GRID_POINTS = 512
CONCORDANCE_GRID_POINTS = 256
GAUSS_NODES = 8
QUAD_TOLERANCE = 1e-8
DEGENERATE_SD = 1e-12


@dataclass(frozen=True)
class TrueModel:
    beta: Tuple[float, ...]
    theta: float = 2.0
    p_shape: float = 2.0
    eta_mean: float = 0.0
    # defaults to ||beta||, the sd of x'beta for independent N(0,1) covariates
    eta_sd: Optional[float] = None

    def __post_init__(self):
        beta = tuple(float(b) for b in np.atleast_1d(self.beta))
        object.__setattr__(self, "beta", beta)
        if self.theta <= 0 or self.p_shape <= 0:
            raise ValueError("theta and p_shape must be positive")
        if self.eta_sd is None:
            object.__setattr__(self, "eta_sd", float(np.linalg.norm(beta)))
        elif self.eta_sd < 0:
            raise ValueError("eta_sd must be nonnegative")

    @property
    def degenerate(self):
        return self.eta_sd < DEGENERATE_SD

    @property
    def eta_range(self):
        half = ETA_HALF_WIDTH * self.eta_sd
        return self.eta_mean - half, self.eta_mean + half

    def mean_event_time(self, eta=0.0):
        """E[T | eta] = Gamma(1 + 1/p) (theta e^eta)^(-1/p)."""
        return float(gamma(1.0 + 1.0 / self.p_shape) * (self.theta * np.exp(eta)) ** (-1.0 / self.p_shape))


# ---------- conditional law ----------


def conditional_survival(model: TrueModel, t, eta):
    """S(t | eta) = exp(-theta e^eta t^p)."""
    t = np.asarray(t, dtype=float)
    return np.exp(-model.theta * np.exp(eta) * t**model.p_shape)


def conditional_event_density(model: TrueModel, t, eta):
    """f(t | eta) = theta e^eta p t^(p-1) exp(-theta e^eta t^p)."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("event density is defined for t >= 0")
    rate = model.theta * np.exp(eta)
    with np.errstate(divide="ignore"):
        hazard = rate * model.p_shape * t ** (model.p_shape - 1.0)
    return hazard * np.exp(-rate * t**model.p_shape)


def _quad(integrand, lo, hi):
    if hi <= lo:
        return 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            value, _ = integrate.quad(
                integrand, lo, hi, epsabs=QUAD_TOLERANCE, epsrel=QUAD_TOLERANCE, limit=200
            )
        except integrate.IntegrationWarning as e:
            raise QuadratureFailure(f"quadrature on [{lo:.4g}, {hi:.4g}] failed: {e}") from e
    if not np.isfinite(value):
        raise QuadratureFailure(f"quadrature on [{lo:.4g}, {hi:.4g}] returned {value}")
    return value


def _eta_pdf(model, eta):
    return norm.pdf(eta, loc=model.eta_mean, scale=model.eta_sd)


def _check_time(t):
    if not t > 0:
        raise ValueError(f"time must be positive, got {t}")


def true_incident_sensitivity(model: TrueModel, c: float, t: float) -> float:
    """Pr(eta > c | T = t)."""
    _check_time(t)
    if model.degenerate:
        return 1.0 if model.eta_mean > c else 0.0
    lo, hi = model.eta_range

    def integrand(eta):
        return conditional_event_density(model, t, eta) * _eta_pdf(model, eta)

    total = _quad(integrand, lo, hi)
    if total <= 0:
        raise QuadratureFailure(f"marginal event density at t={t} integrates to {total}")
    return float(np.clip(_quad(integrand, max(c, lo), hi) / total, 0.0, 1.0))


def true_dynamic_specificity(model: TrueModel, c: float, t: float) -> float:
    """
    Pr(eta <= c | T > t). The inner integral of f(u | eta) over u > t is
    S(t | eta) in closed form, leaving a single integral over eta.
    """
    _check_time(t)
    if model.degenerate:
        return 1.0 if c >= model.eta_mean else 0.0
    lo, hi = model.eta_range

    def integrand(eta):
        return conditional_survival(model, t, eta) * _eta_pdf(model, eta)

    total = _quad(integrand, lo, hi)
    if total <= 0:
        raise QuadratureFailure(f"marginal survival at t={t} integrates to {total}")
    return float(np.clip(_quad(integrand, lo, min(c, hi)) / total, 0.0, 1.0))


def true_marginal_survival(model: TrueModel, t: float) -> float:
    if t <= 0:
        return 1.0
    if model.degenerate:
        return float(conditional_survival(model, t, model.eta_mean))
    lo, hi = model.eta_range
    return float(_quad(lambda eta: conditional_survival(model, t, eta) * _eta_pdf(model, eta), lo, hi))


def true_marginal_density(model: TrueModel, t: float) -> float:
    """f(t) = -dS/dt, integrating the analytic conditional density over eta."""
    _check_time(t)
    if model.degenerate:
        return float(conditional_event_density(model, t, model.eta_mean))
    lo, hi = model.eta_range
    return float(
        _quad(lambda eta: conditional_event_density(model, t, eta) * _eta_pdf(model, eta), lo, hi)
    )


def true_weight(model: TrueModel, t: float, tau: float) -> float:
    """w(t) = 2 f(t) S(t) / (1 - S(tau)^2)."""
    if not 0 < t <= tau:
        raise ValueError(f"weight needs 0 < t <= tau, got t={t}, tau={tau}")
    s_tau = true_marginal_survival(model, tau)
    return 2.0 * true_marginal_density(model, t) * true_marginal_survival(model, t) / (1.0 - s_tau**2)


# ---------- grid evaluation ----------


def _threshold_grid(model, n_grid):
    half = ROC_HALF_WIDTH * model.eta_sd
    return np.linspace(model.eta_mean - half, model.eta_mean + half, n_grid)


def _segment_rule(model, thresholds):
    """
    Gauss-Legendre nodes and weights on every segment between consecutive
    breakpoints [eta_lo, c_0, ..., c_last, eta_hi]. Weights include the
    normal density of eta.
    """
    lo, hi = model.eta_range
    breaks = np.concatenate(([lo], thresholds, [hi]))
    x, w = np.polynomial.legendre.leggauss(GAUSS_NODES)
    left, right = breaks[:-1, None], breaks[1:, None]
    half = 0.5 * (right - left)
    nodes = left + half * (x[None, :] + 1.0)
    weights = half * w[None, :] * _eta_pdf(model, nodes)
    return nodes, weights


def _tail_masses(values, weights):
    """Integral above each interior breakpoint, normalised by the total."""
    segments = np.sum(values * weights, axis=-1)
    above = np.cumsum(segments[..., ::-1], axis=-1)[..., ::-1]
    total = above[..., :1]
    if np.any(total <= 0):
        raise QuadratureFailure("conditional mass vanished on the eta grid")
    # segment k starts at breakpoint k; thresholds are breakpoints 1..n
    return above[..., 1:] / total


def true_roc_id(model: TrueModel, t: float, n_grid: int = ROC_GRID_POINTS):
    """(fp, tp) arrays of the true Incident/Dynamic ROC at t, from (0, 0) to (1, 1)."""
    _check_time(t)
    if model.degenerate:
        return np.array([0.0, 1.0]), np.array([0.0, 1.0])
    thresholds = _threshold_grid(model, n_grid)
    nodes, weights = _segment_rule(model, thresholds)
    tp = _tail_masses(conditional_event_density(model, t, nodes), weights)
    fp = _tail_masses(conditional_survival(model, t, nodes), weights)
    fp = np.concatenate(([0.0], fp[::-1], [1.0]))
    tp = np.concatenate(([0.0], tp[::-1], [1.0]))
    return fp, tp


def true_auc_id(model: TrueModel, t: float, n_grid: int = ROC_GRID_POINTS) -> float:
    fp, tp = true_roc_id(model, t, n_grid)
    return float(np.clip(integrate.trapezoid(tp, fp), 0.0, 1.0))


def _auc_on_times(model, times, n_grid):
    thresholds = _threshold_grid(model, n_grid)
    nodes, weights = _segment_rule(model, thresholds)
    t = np.asarray(times, dtype=float)[:, None, None]
    tp = _tail_masses(conditional_event_density(model, t, nodes[None]), weights[None])
    fp = _tail_masses(conditional_survival(model, t, nodes[None]), weights[None])
    ones, zeros = np.ones((t.shape[0], 1)), np.zeros((t.shape[0], 1))
    fp = np.hstack([zeros, fp[:, ::-1], ones])
    tp = np.hstack([zeros, tp[:, ::-1], ones])
    return np.clip(integrate.trapezoid(tp, fp, axis=1), 0.0, 1.0)


def true_concordance(model: TrueModel, tau: float, n_grid: int = CONCORDANCE_GRID_POINTS) -> float:
    """
    Truncated concordance: the w-weighted average of the true AUC over
    (0, tau] on an n_grid-point trapezoid rule in t.
    """
    _check_time(tau)
    if model.degenerate:
        return 0.5
    times = np.linspace(0.0, tau, n_grid + 1)[1:]
    survival = np.array([true_marginal_survival(model, t) for t in times])
    density = np.array([true_marginal_density(model, t) for t in times])
    weights = 2.0 * density * survival
    auc = _auc_on_times(model, times, ROC_GRID_POINTS)
    if model.p_shape > 1:
        # f(0) = 0, so the rule can start at t = 0 with zero weight
        times = np.concatenate(([0.0], times))
        weights = np.concatenate(([0.0], weights))
        auc = np.concatenate(([0.5], auc))
    mass = integrate.trapezoid(weights, times)
    if mass <= 0:
        raise QuadratureFailure(f"concordance weights integrate to {mass} on (0, {tau}]")
    return float(integrate.trapezoid(auc * weights, times) / mass)


def oracle_table(model: TrueModel, times, tau: float) -> pd.DataFrame:
    """Columns t, true_auc, true_weight, true_survival at each requested time."""
    times = np.asarray(times, dtype=float)
    rows = []
    for t in times:
        rows.append(
            {
                "t": float(t),
                "true_auc": true_auc_id(model, t),
                "true_weight": true_weight(model, t, tau),
                "true_survival": true_marginal_survival(model, t),
            }
        )
    return pd.DataFrame(rows, columns=["t", "true_auc", "true_weight", "true_survival"])


# ---------- Monte Carlo cross-oracles ----------


def _draw_eta(model, n, stream):
    return model.eta_mean + model.eta_sd * stream.standard_normal(n)


def _draw_times(model, eta, stream):
    u = stream.uniform(size=eta.shape[0])
    return (-np.log(u) / (model.theta * np.exp(eta))) ** (1.0 / model.p_shape)


def mc_incident_sensitivity(model: TrueModel, c: float, t: float, n_draws: int, stream):
    """Self-normalised importance estimate of Pr(eta > c | T = t); returns (estimate, standard error)."""
    eta = _draw_eta(model, n_draws, stream)
    w = conditional_event_density(model, t, eta)
    hit = (eta > c).astype(float)
    estimate = float(np.sum(w * hit) / np.sum(w))
    se = float(np.sqrt(np.sum(w**2 * (hit - estimate) ** 2)) / np.sum(w))
    return estimate, se


def mc_dynamic_specificity(model: TrueModel, c: float, t: float, n_draws: int, stream):
    """Simulated subjects conditioned on T > t; returns (estimate, standard error)."""
    eta = _draw_eta(model, n_draws, stream)
    controls = eta[_draw_times(model, eta, stream) > t]
    if controls.size == 0:
        raise ValueError(f"no simulated subject survived past t={t}")
    estimate = float(np.mean(controls <= c))
    return estimate, float(np.sqrt(estimate * (1.0 - estimate) / controls.size))


def mc_auc_id(model: TrueModel, t: float, n_draws: int, stream, n_batches: int = 20):
    """
    Pr(eta_case > eta_control) with cases weighted by f(t | eta) and controls
    by S(t | eta); the standard error comes from batch means.
    """
    estimates = []
    per_batch = n_draws // n_batches
    for _ in range(n_batches):
        cases = _draw_eta(model, per_batch, stream)
        controls = _draw_eta(model, per_batch, stream)
        wc = conditional_event_density(model, t, cases)
        wk = conditional_survival(model, t, controls)
        order = np.argsort(controls)
        below = np.concatenate(([0.0], np.cumsum(wk[order])))
        idx = np.searchsorted(controls[order], cases, side="left")
        estimates.append(np.sum(wc * below[idx]) / (np.sum(wc) * below[-1]))
    estimates = np.asarray(estimates)
    return float(estimates.mean()), float(estimates.std(ddof=1) / np.sqrt(n_batches))


def mc_concordance(model: TrueModel, tau: float, n_pairs: int, stream):
    """
    Share of simulated pairs, among those whose earlier event falls before tau,
    where the earlier subject has the larger eta; returns (estimate, standard error).
    """
    eta = _draw_eta(model, 2 * n_pairs, stream).reshape(n_pairs, 2)
    times = _draw_times(model, eta.reshape(-1), stream).reshape(n_pairs, 2)
    first = np.argmin(times, axis=1)
    rows = np.arange(n_pairs)
    usable = times[rows, first] <= tau
    if not usable.any():
        raise ValueError(f"no simulated pair has an event before tau={tau}")
    concordant = eta[rows, first] > eta[rows, 1 - first]
    estimate = float(np.mean(concordant[usable]))
    return estimate, float(np.sqrt(estimate * (1.0 - estimate) / usable.sum()))

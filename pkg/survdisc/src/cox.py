"""
Cox proportional-hazards fitting by maximum partial likelihood.

Ties use the Breslow approximation. Risk-set sums are taken in order of
ascending time so that the risk set of every subject is a suffix of the
sorted arrays.
"""

import logging
from dataclasses import dataclass, field
from typing import Tuple

import numpy as np
import scipy.linalg

from core import SurvivalDataset
from errors import DimensionMismatch, NoEvents, NotConverged, Singular

logger = logging.getLogger(__name__)

CONDITION_LIMIT = 1e12


@dataclass(frozen=True)
class FitOptions:
    max_iterations: int = 50
    gradient_tolerance: float = 1e-8
    step_halving_max: int = 20
    strict: bool = True

    def __post_init__(self):
        if self.max_iterations <= 0 or self.gradient_tolerance <= 0 or self.step_halving_max <= 0:
            raise ValueError("FitOptions fields must all be positive")


@dataclass(frozen=True, eq=False)
class CoxFit:
    beta: np.ndarray
    log_partial_likelihood: float
    gradient_norm: float
    iterations: int
    converged: bool
    loglik_history: Tuple[float, ...] = field(default=())

    def linear_predictor(self, X):
        return linear_predictor(self.beta, X)

    def to_dict(self):
        return {
            "beta": self.beta.tolist(),
            "log_partial_likelihood": self.log_partial_likelihood,
            "gradient_norm": self.gradient_norm,
            "iterations": self.iterations,
            "converged": self.converged,
        }


class _SortedDesign:
    """Time-sorted view of a dataset with the risk-set start of every row."""

    def __init__(self, ds: SurvivalDataset):
        order = np.argsort(ds.time, kind="stable")
        self.time = ds.time[order]
        self.event = ds.event[order]
        self.X = ds.X[order]
        # rows start..n-1 form the risk set {j: T_j >= T_i}
        self.start = np.searchsorted(self.time, self.time, side="left")
        self.event_rows = np.flatnonzero(self.event)
        self.event_starts = self.start[self.event_rows]

    def loglik(self, beta):
        eta = self.X @ beta
        log_denominator = np.logaddexp.accumulate(eta[::-1])[::-1]
        return float(np.sum(eta[self.event_rows] - log_denominator[self.event_starts]))

    def derivatives(self, beta, hessian=True):
        X = self.X
        eta = X @ beta
        log_denominator = np.logaddexp.accumulate(eta[::-1])[::-1]
        loglik = float(np.sum(eta[self.event_rows] - log_denominator[self.event_starts]))

        w = np.exp(eta - eta.max())
        s0 = np.cumsum(w[::-1])[::-1]
        s1 = np.cumsum((w[:, None] * X)[::-1], axis=0)[::-1]
        s0_events = np.maximum(s0[self.event_starts], np.finfo(float).tiny)
        xbar = s1[self.event_starts] / s0_events[:, None]
        gradient = np.sum(X[self.event_rows] - xbar, axis=0)
        if not hessian:
            return loglik, gradient, None

        # sum_e sum_{j >= s_e} w_j x_j x_j^T / S0(s_e) collapses to one weighted Gram matrix
        inverse_mass = np.zeros(X.shape[0])
        np.add.at(inverse_mass, self.event_starts, 1.0 / s0_events)
        row_weight = w * np.cumsum(inverse_mass)
        information = (X * row_weight[:, None]).T @ X - xbar.T @ xbar
        return loglik, gradient, -information


def _check_beta(ds, beta):
    beta = np.asarray(beta, dtype=float).reshape(-1)
    if beta.shape[0] != ds.p:
        raise DimensionMismatch(f"beta has length {beta.shape[0]}, dataset has p={ds.p}")
    return beta


def partial_log_likelihood(ds: SurvivalDataset, beta) -> float:
    """Breslow log partial likelihood, stabilised with log-sum-exp."""
    beta = _check_beta(ds, beta)
    return _SortedDesign(ds).loglik(beta)


def partial_gradient(ds: SurvivalDataset, beta) -> np.ndarray:
    """Analytic score: sum over events of x_i minus the risk-set weighted mean."""
    beta = _check_beta(ds, beta)
    return _SortedDesign(ds).derivatives(beta, hessian=False)[1]


def partial_hessian(ds: SurvivalDataset, beta) -> np.ndarray:
    beta = _check_beta(ds, beta)
    return _SortedDesign(ds).derivatives(beta)[2]


def linear_predictor(beta, X) -> np.ndarray:
    beta = np.asarray(beta, dtype=float).reshape(-1)
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.shape[1] != beta.shape[0]:
        raise DimensionMismatch(f"covariate matrix has {X.shape[1]} columns, beta has {beta.shape[0]}")
    return X @ beta


def _newton_direction(gradient, hessian):
    information = -hessian
    if not np.all(np.isfinite(information)):
        raise Singular("Hessian contains non-finite values")
    if information.size == 0:
        return np.zeros(0)
    condition = np.linalg.cond(information)
    if not np.isfinite(condition) or condition > CONDITION_LIMIT:
        raise Singular(
            f"information matrix condition number {condition:.3e} exceeds {CONDITION_LIMIT:.0e}; "
            "covariates are collinear or separate the outcome"
        )
    try:
        return scipy.linalg.solve(information, gradient, assume_a="pos", check_finite=False)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as e:
        raise Singular(f"Hessian solve failed: {e}") from e


def fit_cox(ds: SurvivalDataset, opts: FitOptions = FitOptions()) -> CoxFit:
    """
    Newton-Raphson on the partial likelihood with step halving. Accepted
    iterates never decrease the log partial likelihood.
    """
    if not ds.event.any():
        raise NoEvents("cannot fit a Cox model without observed events")
    design = _SortedDesign(ds)
    beta = np.zeros(ds.p)
    loglik, gradient, hessian = design.derivatives(beta)
    history = [loglik]
    iterations = 0
    converged = False

    while True:
        gradient_norm = float(np.linalg.norm(gradient))
        if not np.isfinite(gradient_norm):
            raise NotConverged("gradient became non-finite")
        if gradient_norm <= opts.gradient_tolerance:
            converged = True
            break
        if iterations >= opts.max_iterations:
            break

        delta = _newton_direction(gradient, hessian)
        step = 1.0
        slack = 64 * np.spacing(abs(loglik))
        for _ in range(opts.step_halving_max + 1):
            candidate = beta + step * delta
            candidate_loglik = design.loglik(candidate)
            if np.isfinite(candidate_loglik) and candidate_loglik >= loglik - slack:
                break
            step *= 0.5
        else:
            raise NotConverged(
                f"step halving exhausted after {opts.step_halving_max} halvings at iteration {iterations + 1}",
                fit=CoxFit(beta.copy(), loglik, gradient_norm, iterations, False, tuple(history)),
            )

        beta = candidate
        loglik, gradient, hessian = design.derivatives(beta)
        history.append(loglik)
        iterations += 1
        logger.debug(f"iteration {iterations}: loglik={loglik:.6f} step={step:.4g}")

    fit = CoxFit(
        beta=beta,
        log_partial_likelihood=loglik,
        gradient_norm=gradient_norm,
        iterations=iterations,
        converged=converged,
        loglik_history=tuple(history),
    )
    if not converged:
        message = f"no convergence after {iterations} iterations (gradient norm {gradient_norm:.3e})"
        if opts.strict:
            raise NotConverged(message, fit=fit)
        logger.warning(message)
    return fit


def breslow_cumulative_hazard(ds: SurvivalDataset, beta):
    """Breslow baseline cumulative hazard at the unique event times."""
    beta = _check_beta(ds, beta)
    design = _SortedDesign(ds)
    eta = design.X @ beta
    log_denominator = np.logaddexp.accumulate(eta[::-1])[::-1]
    times, first = np.unique(design.time[design.event_rows], return_index=True)
    counts = np.diff(np.append(first, design.event_rows.shape[0]))
    starts = design.event_starts[first]
    increments = counts * np.exp(-log_denominator[starts])
    return times, np.cumsum(increments)


def predict_survival(fit: CoxFit, ds: SurvivalDataset, X, t):
    """Predicted S(t | x) = exp(-H0(t) exp(x'beta)) using the training data's baseline."""
    times, cumulative_hazard = breslow_cumulative_hazard(ds, fit.beta)
    idx = np.searchsorted(times, t, side="right") - 1
    h0 = cumulative_hazard[idx] if idx >= 0 else 0.0
    return np.exp(-h0 * np.exp(linear_predictor(fit.beta, X)))

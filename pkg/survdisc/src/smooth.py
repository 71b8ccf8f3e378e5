"""
Penalized regression splines (P-splines) on a cubic B-spline basis.

The roughness penalty is the squared second divided difference of the
coefficients over their Greville abscissae. Its null space is exactly the
constant and linear functions of x, also for quantile-placed (uneven) knots.
The smoothing parameter is chosen by generalized cross-validation over a
fixed log-spaced grid, so the same inputs always give the same lambda.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import scipy.linalg
from scipy.interpolate import BSpline
from scipy.optimize import nnls

from core import KaplanMeierCurve
from discrim import AucKind, AucSeries
from errors import DegenerateDesign, NotConverged, OutOfDomain, TooFewPoints

logger = logging.getLogger(__name__)

LAMBDA_GRID = np.logspace(-6, 6, 41)
MAX_BASIS = 30
MIN_BASIS = 4
MIN_POINTS = 4
DOMAIN_SLACK = 1e-12


@dataclass(frozen=True, eq=False)
class SplineBasis:
    knots: np.ndarray
    degree: int = 3

    def __post_init__(self):
        knots = np.asarray(self.knots, dtype=float)
        if np.any(np.diff(knots) < 0):
            raise ValueError("knots must be nondecreasing")
        if knots.shape[0] < 2 * (self.degree + 1) - 1:
            raise ValueError(f"{knots.shape[0]} knots cannot support degree {self.degree}")
        object.__setattr__(self, "knots", knots)

    @property
    def K(self):
        return self.knots.shape[0] - self.degree - 1

    @property
    def domain(self) -> Tuple[float, float]:
        return float(self.knots[self.degree]), float(self.knots[self.K])

    @property
    def greville(self):
        t, k = self.knots, self.degree
        if k == 0:
            return 0.5 * (t[:-1] + t[1:])
        return np.array([t[i + 1 : i + k + 1].mean() for i in range(self.K)])


def default_basis_dimension(n_points):
    return min(MAX_BASIS, max(MIN_BASIS, n_points // 4))


def make_basis(x, n_basis=None, degree=3) -> SplineBasis:
    """Clamped B-spline basis with interior knots at quantiles of x."""
    x = np.asarray(x, dtype=float)
    lo, hi = float(x.min()), float(x.max())
    if not hi > lo:
        raise DegenerateDesign("spline abscissae span a single point")
    if n_basis is None:
        n_basis = default_basis_dimension(np.unique(x).shape[0])
    n_interior = max(n_basis - degree - 1, 0)
    probs = np.arange(1, n_interior + 1) / (n_interior + 1)
    interior = np.unique(np.quantile(x, probs)) if n_interior else np.array([])
    interior = interior[(interior > lo) & (interior < hi)]
    knots = np.concatenate(([lo] * (degree + 1), interior, [hi] * (degree + 1)))
    return SplineBasis(knots=knots, degree=degree)


def _check_domain(basis_or_domain, x):
    lo, hi = basis_or_domain
    slack = DOMAIN_SLACK * max(1.0, abs(lo), abs(hi))
    if np.any(x < lo - slack) or np.any(x > hi + slack):
        raise OutOfDomain(f"evaluation points outside [{lo}, {hi}]")
    return np.clip(x, lo, hi)


def bspline_design(basis: SplineBasis, x) -> np.ndarray:
    """Dense B-spline design matrix; rows sum to 1 inside the domain."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    x = _check_domain(basis.domain, x)
    return BSpline.design_matrix(x, basis.knots, basis.degree).toarray()


def difference_matrix(basis: SplineBasis, order=2) -> np.ndarray:
    """Divided differences of the coefficients over their Greville abscissae."""
    g = basis.greville
    # rescale so unit spacing reproduces the ordinary difference penalty
    g = (g - g[0]) / (g[-1] - g[0]) * (basis.K - 1) if basis.K > 1 else g
    D = np.eye(basis.K)
    for level in range(1, order + 1):
        step = (g[level:] - g[:-level]) / level
        D = np.diff(D, axis=0) / step[:, None]
    return D


def difference_penalty(basis: SplineBasis, order=2) -> np.ndarray:
    D = difference_matrix(basis, order)
    return D.T @ D


@dataclass(frozen=True, eq=False)
class SmoothedCurve:
    basis: SplineBasis
    coefficients: np.ndarray
    lam: float
    monotone: bool = False
    domain: Tuple[float, float] = (0.0, 1.0)
    bounds: Optional[Tuple[float, float]] = None

    @property
    def spline(self):
        return BSpline(self.basis.knots, self.coefficients, self.basis.degree, extrapolate=False)

    def raw(self, t):
        t = _check_domain(self.domain, np.asarray(t, dtype=float))
        return self.spline(t)

    def __call__(self, t):
        values = self.raw(t)
        if self.bounds is not None:
            values = np.clip(values, *self.bounds)
        return values if np.ndim(values) else float(values)

    def derivative(self, t):
        t = _check_domain(self.domain, np.asarray(t, dtype=float))
        return self.spline.derivative()(t)

    def density(self, t):
        """-dS/dt floored at 0; zero where the curve is clipped at 0."""
        slope = -np.asarray(self.derivative(t), dtype=float)
        values = np.where(np.asarray(self.raw(t)) <= 0.0, 0.0, np.maximum(slope, 0.0))
        return values if np.ndim(values) else float(values)


def _penalized_solve(BtB, Bty, P, lam):
    A = BtB + lam * P
    coefficients = scipy.linalg.solve(A, Bty, assume_a="pos", check_finite=False)
    edf = float(np.trace(scipy.linalg.solve(A, BtB, assume_a="pos", check_finite=False)))
    return coefficients, edf


def select_lambda(B, y, P):
    """GCV over LAMBDA_GRID; returns (lambda, coefficients, edf)."""
    n = B.shape[0]
    BtB, Bty = B.T @ B, B.T @ y
    best = None
    for lam in LAMBDA_GRID:
        try:
            coefficients, edf = _penalized_solve(BtB, Bty, P, lam)
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgError, ValueError):
            continue
        if not np.all(np.isfinite(coefficients)) or n - edf <= 0:
            continue
        rss = float(np.sum((y - B @ coefficients) ** 2))
        score = n * rss / (n - edf) ** 2
        if best is None or score < best[0]:
            best = (score, lam, coefficients, edf)
    if best is None:
        raise DegenerateDesign("no smoothing parameter on the grid gives a solvable fit")
    return best[1], best[2], best[3]


def _prepare_xy(x, y):
    x = np.asarray(x, dtype=float).reshape(-1)
    y = np.asarray(y, dtype=float).reshape(-1)
    if x.shape != y.shape:
        raise ValueError(f"x has {x.shape[0]} points, y has {y.shape[0]}")
    if x.shape[0] < MIN_POINTS:
        raise TooFewPoints(f"need at least {MIN_POINTS} points to smooth, got {x.shape[0]}")
    return x, y


def fit_penalized_spline(x, y, K=None, lam=None) -> SmoothedCurve:
    """
    Minimizes ||y - B xi||^2 + lam xi' P xi. With lam=None the smoothing
    parameter is chosen by GCV.
    """
    x, y = _prepare_xy(x, y)
    basis = make_basis(x, K)
    B = bspline_design(basis, x)
    P = difference_penalty(basis)
    if lam is None:
        lam, coefficients, edf = select_lambda(B, y, P)
    else:
        try:
            coefficients, edf = _penalized_solve(B.T @ B, B.T @ y, P, lam)
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as e:
            raise DegenerateDesign(f"penalized normal equations are singular at lambda={lam}") from e
    logger.debug(f"penalized spline: K={basis.K} lambda={lam:.3g} edf={edf:.2f}")
    return SmoothedCurve(
        basis=basis,
        coefficients=coefficients,
        lam=float(lam),
        monotone=False,
        domain=basis.domain,
    )


def fit_monotone_spline(x, y, start=1.0, K=None, lam=None) -> SmoothedCurve:
    """
    Nonincreasing P-spline anchored at `start` on the left edge of x.

    Coefficients are zeta_k = start - sum_{j<k} d_j with increments d_j >= 0,
    so the fitted curve is nonincreasing. The penalized least-squares problem
    in d is solved as nonnegative least squares; lambda comes from GCV on the
    unconstrained fit over the same basis.
    """
    x, y = _prepare_xy(x, y)
    basis = make_basis(x, K)
    B = bspline_design(basis, x)
    P = difference_penalty(basis)
    if lam is None:
        lam, _, _ = select_lambda(B, y, P)

    C = np.tril(np.ones((basis.K, basis.K - 1)), k=-1)
    D = difference_matrix(basis)
    A = np.vstack([B @ C, np.sqrt(lam) * (D @ C)])
    b = np.concatenate([start - y, np.zeros(D.shape[0])])
    try:
        increments, _ = nnls(A, b, maxiter=50 * A.shape[1])
    except RuntimeError as e:
        raise NotConverged(f"monotone spline solver did not converge: {e}") from e
    coefficients = start - C @ increments
    return SmoothedCurve(
        basis=basis,
        coefficients=coefficients,
        lam=float(lam),
        monotone=True,
        domain=basis.domain,
        bounds=(0.0, 1.0),
    )


def smooth_auc_series(auc: AucSeries) -> AucSeries:
    """Penalized-spline smooth of an AUC series, read back at its own times and clipped to [0, 1]."""
    if auc.times.shape[0] < MIN_POINTS:
        raise TooFewPoints(f"need at least {MIN_POINTS} AUC points to smooth, got {auc.times.shape[0]}")
    curve = fit_penalized_spline(auc.times, auc.auc)
    fitted = np.asarray(curve(auc.times), dtype=float)
    clipped = int(np.sum((fitted < 0.0) | (fitted > 1.0)))
    if clipped:
        logger.info(f"smoothed AUC clipped to [0, 1] at {clipped} of {fitted.shape[0]} time points")
    return AucSeries(
        times=auc.times.copy(),
        auc=np.clip(fitted, 0.0, 1.0),
        kind=AucKind.SMOOTHED_NON_PARAMETRIC,
        skipped=auc.skipped,
    )


def smooth_km_monotone(km: KaplanMeierCurve, upper=None, K=None) -> SmoothedCurve:
    """
    Monotone smooth of a Kaplan-Meier curve on [0, upper]. Each jump is
    represented by the midpoint of its left and right limits, and the curve
    is pinned to S(0) = 1.
    """
    if km.times.shape[0] < MIN_POINTS:
        raise TooFewPoints(f"need at least {MIN_POINTS} Kaplan-Meier steps, got {km.times.shape[0]}")
    left = np.concatenate(([1.0], km.survival[:-1]))
    x = np.concatenate(([0.0], km.times))
    y = np.concatenate(([1.0], 0.5 * (left + km.survival)))
    if upper is not None and upper > km.times[-1]:
        x = np.append(x, upper)
        y = np.append(y, km.survival[-1])
    return fit_monotone_spline(x, y, start=1.0, K=K)


def survival_density(sm: SmoothedCurve, t):
    """f(t) = -dS/dt of a monotone survival smooth, floored at 0."""
    if not sm.monotone:
        raise ValueError("survival_density needs a monotone survival smooth")
    return sm.density(t)

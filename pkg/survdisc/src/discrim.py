"""
Discrimination estimators for risk scores eta under right censoring.

Incident/Dynamic ROC curves pair the dynamic false-positive rate
(controls: T > t) with either the non-parametric incident sensitivity
(cases: T = t, delta = 1) or the semi-parametric one, which weights every
subject at risk by exp(eta) and never looks at event status. All threshold
comparisons are strict, eta > c, and tied scores get no half credit.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Tuple

import numpy as np
from scipy.integrate import trapezoid
from scipy.special import expit, softmax

from core import SurvivalDataset, unique_event_times
from errors import (
    DegenerateDenominator,
    EmptyControls,
    EmptyRiskSet,
    Misaligned,
    NoCasesAtTime,
    NoEvents,
    NoUsablePairs,
    OutOfDomain,
    TooFewPoints,
    TooFewSubjects,
)

logger = logging.getLogger(__name__)

GH_TIE_WARNING_FRACTION = 0.10


class AucKind(str, Enum):
    SEMI_PARAMETRIC = "SP"
    NON_PARAMETRIC = "NP"
    SMOOTHED_NON_PARAMETRIC = "SNP"


class ConcordanceKind(str, Enum):
    HZ = "HZ"
    GH = "GH"
    HARRELL = "Harrell"
    NP = "NP"
    SNP = "SNP"


# concordance estimator obtained by integrating each AUC series
INTEGRATED_CONCORDANCE = {
    AucKind.SEMI_PARAMETRIC: ConcordanceKind.HZ,
    AucKind.NON_PARAMETRIC: ConcordanceKind.NP,
    AucKind.SMOOTHED_NON_PARAMETRIC: ConcordanceKind.SNP,
}


@dataclass(frozen=True, eq=False)
class RocCurve:
    time: float
    fp: np.ndarray
    tp: np.ndarray
    kind: AucKind

    @property
    def points(self):
        return list(zip(self.fp.tolist(), self.tp.tolist()))


@dataclass(frozen=True, eq=False)
class AucSeries:
    times: np.ndarray
    auc: np.ndarray
    kind: AucKind
    # (time, reason) for event times where the estimator is undefined
    skipped: Tuple[Tuple[float, str], ...] = field(default=())

    def __len__(self):
        return self.times.shape[0]


@dataclass(frozen=True)
class ConcordanceEstimate:
    value: float
    kind: ConcordanceKind
    tau: Optional[float] = None


@dataclass(frozen=True, eq=False)
class SensitivityWeightDiagnostic:
    time: float
    subjects: np.ndarray
    weights: np.ndarray
    max_weight: float


# ---------- time-specific rates ----------


def _as_eta(eta, ds):
    eta = np.asarray(eta, dtype=float).reshape(-1)
    if eta.shape[0] != ds.n:
        raise ValueError(f"eta has {eta.shape[0]} entries, dataset has {ds.n} subjects")
    return eta


def dynamic_fp(eta, ds: SurvivalDataset, c: float, t: float) -> float:
    """#{eta_k > c, T_k > t} / #{T_j > t}."""
    eta = _as_eta(eta, ds)
    controls = ds.time > t
    n_controls = int(controls.sum())
    if n_controls == 0:
        raise EmptyControls(f"no subjects with T > {t}")
    return int(np.sum(eta[controls] > c)) / n_controls


def incident_tp_np(eta, ds: SurvivalDataset, c: float, t: float) -> float:
    """#{eta_k > c, T_k = t, delta_k = 1} / #{T_j = t, delta_j = 1}."""
    eta = _as_eta(eta, ds)
    cases = (ds.time == t) & ds.event
    n_cases = int(cases.sum())
    if n_cases == 0:
        raise NoCasesAtTime(f"no observed events at t = {t}")
    return int(np.sum(eta[cases] > c)) / n_cases


def incident_tp_sp(eta, ds: SurvivalDataset, c: float, t: float) -> float:
    """exp(eta)-weighted share of the risk set R(t) with eta > c."""
    eta = _as_eta(eta, ds)
    at_risk = ds.time >= t
    if not at_risk.any():
        raise EmptyRiskSet(f"no subjects at risk at t = {t}")
    weights = softmax(eta[at_risk])
    return float(np.sum(weights[eta[at_risk] > c]) / np.sum(weights))


def sensitivity_weights(eta, ds: SurvivalDataset, t: float) -> SensitivityWeightDiagnostic:
    eta = _as_eta(eta, ds)
    subjects = np.flatnonzero(ds.time >= t)
    if subjects.size == 0:
        raise EmptyRiskSet(f"no subjects at risk at t = {t}")
    weights = softmax(eta[subjects])
    return SensitivityWeightDiagnostic(
        time=float(t),
        subjects=subjects,
        weights=weights,
        max_weight=float(weights.max()),
    )


def weight_profile(eta, ds: SurvivalDataset) -> Tuple[np.ndarray, np.ndarray]:
    """Largest sensitivity weight at every unique event time."""
    eta = _as_eta(eta, ds)
    times = unique_event_times(ds)
    max_weights = np.array([sensitivity_weights(eta, ds, t).max_weight for t in times])
    return times, max_weights


# ---------- ROC and AUC ----------


def _tail_fraction_above(sorted_values, thresholds):
    """Share of sorted_values strictly greater than each threshold."""
    above = sorted_values.shape[0] - np.searchsorted(sorted_values, thresholds, side="right")
    return above / sorted_values.shape[0]


def roc_id(eta, ds: SurvivalDataset, t: float, kind: AucKind) -> RocCurve:
    """
    Incident/Dynamic ROC at time t, evaluated at every unique risk score in
    R(t) plus -inf, sorted by FP then TP, with (0, 0) prepended.
    """
    kind = AucKind(kind)
    if kind is AucKind.SMOOTHED_NON_PARAMETRIC:
        raise ValueError("a smoothed ROC curve is not defined; smooth the NP AUC series instead")
    eta = _as_eta(eta, ds)
    at_risk = ds.time >= t
    if not at_risk.any():
        raise EmptyRiskSet(f"no subjects at risk at t = {t}")
    controls = ds.time > t
    if not controls.any():
        raise EmptyControls(f"no subjects with T > {t}")

    thresholds = np.concatenate(([-np.inf], np.unique(eta[at_risk])))
    fp = _tail_fraction_above(np.sort(eta[controls]), thresholds)

    if kind is AucKind.NON_PARAMETRIC:
        cases = (ds.time == t) & ds.event
        if not cases.any():
            raise NoCasesAtTime(f"no observed events at t = {t}")
        tp = _tail_fraction_above(np.sort(eta[cases]), thresholds)
    else:
        risk_eta = eta[at_risk]
        order = np.argsort(risk_eta, kind="stable")
        sorted_eta = risk_eta[order]
        weights = softmax(risk_eta)[order]
        # tail[i] = total weight of positions i..end
        tail = np.append(np.cumsum(weights[::-1])[::-1], 0.0)
        above = np.searchsorted(sorted_eta, thresholds, side="right")
        tp = tail[above] / tail[0]

    order = np.lexsort((tp, fp))
    fp = np.concatenate(([0.0], fp[order]))
    tp = np.concatenate(([0.0], tp[order]))
    return RocCurve(time=float(t), fp=fp, tp=tp, kind=kind)


def auc_id(roc: RocCurve) -> float:
    """
    Trapezoid area under the ROC points. Repeated FP values form vertical
    segments, so the right edge of each column uses the maximal TP.
    """
    return float(np.clip(trapezoid(roc.tp, roc.fp), 0.0, 1.0))


def auc_series(eta, ds: SurvivalDataset, kind: AucKind) -> AucSeries:
    """
    AUC at each unique event time of ds. Times where the estimator is
    undefined (no controls beyond t) are skipped and reported.
    """
    kind = AucKind(kind)
    if kind is AucKind.SMOOTHED_NON_PARAMETRIC:
        raise ValueError("build the SNP series with smooth.smooth_auc_series on an NP series")
    eta = _as_eta(eta, ds)
    if not ds.event.any():
        raise NoEvents("dataset contains no observed events")
    times, values, skipped = [], [], []
    for t in unique_event_times(ds):
        try:
            roc = roc_id(eta, ds, t, kind)
        except (EmptyControls, NoCasesAtTime, EmptyRiskSet) as e:
            skipped.append((float(t), type(e).__name__))
            continue
        times.append(t)
        values.append(auc_id(roc))
    if skipped:
        logger.info(f"{kind.value} AUC undefined at {len(skipped)} event time(s); omitted from the series")
    return AucSeries(
        times=np.asarray(times, dtype=float),
        auc=np.asarray(values, dtype=float),
        kind=kind,
        skipped=tuple(skipped),
    )


# ---------- concordance ----------


def concordance_weights(sm_surv, times, tau: float) -> np.ndarray:
    """
    w(t) = 2 f(t) S(t) / (1 - S(tau)^2) from a monotone smooth of the marginal
    survival curve, with f = -dS/dt taken from the spline derivative.
    """
    times = np.asarray(times, dtype=float)
    lo, hi = sm_surv.domain
    if tau < lo or tau > hi:
        raise OutOfDomain(f"tau = {tau} outside the smoothed range [{lo}, {hi}]")
    s_tau = float(sm_surv(tau))
    if s_tau >= 1.0 - 1e-10:
        raise DegenerateDenominator(f"smoothed survival at tau is {s_tau}; no events before tau")
    survival = np.asarray(sm_surv(times), dtype=float)
    density = np.asarray(sm_surv.density(times), dtype=float)
    weights = 2.0 * density * survival / (1.0 - s_tau**2)
    return np.clip(weights, 0.0, None)


def concordance_from_auc(auc: AucSeries, weights, tau: float) -> ConcordanceEstimate:
    """
    Weighted trapezoid integral of AUC(t) w(t) over event times in (0, tau],
    normalised by the integral of w on the same grid.
    """
    weights = np.asarray(weights, dtype=float)
    if weights.shape[0] != auc.times.shape[0]:
        raise Misaligned(f"{weights.shape[0]} weights for {auc.times.shape[0]} AUC time points")
    kind = INTEGRATED_CONCORDANCE[AucKind(auc.kind)]
    keep = (auc.times > 0) & (auc.times <= tau)
    times, values, w = auc.times[keep], auc.auc[keep], weights[keep]
    if times.size == 0:
        raise TooFewPoints(f"no AUC time points in (0, {tau}]")

    mass = trapezoid(w, times) if times.size > 1 else 0.0
    if mass > 0:
        value = trapezoid(values * w, times) / mass
    elif w.sum() > 0:
        value = np.sum(values * w) / w.sum()
    else:
        value = float(np.mean(values))
    return ConcordanceEstimate(value=float(np.clip(value, 0.0, 1.0)), kind=kind, tau=float(tau))


def _upper_pairs(n):
    return np.triu_indices(n, k=1)


def pairwise_risk_differences(eta) -> np.ndarray:
    """|eta_i - eta_j| over all pairs i < j."""
    eta = np.asarray(eta, dtype=float).reshape(-1)
    i, j = _upper_pairs(eta.shape[0])
    return np.abs(eta[i] - eta[j])


def gh_pair_contributions(eta) -> np.ndarray:
    """Per-pair Gonen-Heller term 1/(1 + exp(-|d|)), zero for exact ties."""
    diffs = pairwise_risk_differences(eta)
    return np.where(diffs > 0, expit(diffs), 0.0)


def concordance_gh(eta) -> ConcordanceEstimate:
    """
    Gonen-Heller concordance. Uses eta only; event times and status play no
    part. Exactly tied pairs contribute 0, so a constant eta gives 0.
    """
    eta = np.asarray(eta, dtype=float).reshape(-1)
    n = eta.shape[0]
    if n < 2:
        raise TooFewSubjects(f"Gonen-Heller concordance needs at least 2 subjects, got {n}")
    contributions = gh_pair_contributions(eta)
    tied = float(np.mean(contributions == 0))
    if tied > GH_TIE_WARNING_FRACTION:
        logger.warning(
            f"{tied:.1%} of risk-score pairs are exactly tied; Gonen-Heller counts them as 0"
        )
    value = np.sum(contributions) * 2.0 / (n * (n - 1))
    return ConcordanceEstimate(value=float(value), kind=ConcordanceKind.GH, tau=None)


def concordance_harrell(eta, ds: SurvivalDataset) -> ConcordanceEstimate:
    """
    Harrell's C: among usable pairs (the earlier time is an observed event),
    the share where the earlier subject has the strictly larger score.
    """
    eta = _as_eta(eta, ds)
    earlier = (ds.time[:, None] < ds.time[None, :]) & ds.event[:, None]
    usable = int(earlier.sum())
    if usable == 0:
        raise NoUsablePairs("no pair has an observed event strictly before the other time")
    concordant = int(np.sum(earlier & (eta[:, None] > eta[None, :])))
    return ConcordanceEstimate(
        value=concordant / usable,
        kind=ConcordanceKind.HARRELL,
        tau=float(ds.time.max()),
    )

"""
Simulation laboratory: scenario configs, data generators, the replicate and
cross-validation harness, and the single-outlier demonstration.

Data follow the Weibull proportional-hazards law with three standard-normal
covariates. Every random draw comes from a stream keyed by
(seed, replicate, purpose), so a replicate gives the same numbers whichever
thread runs it.
"""

from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, field_validator
from scipy.special import logsumexp
from tqdm import tqdm as tqdm_progress

from core import SurvivalDataset, event_time_summary, kaplan_meier
from cox import CoxFit, FitOptions, fit_cox, predict_survival
from discrim import (
    AucKind,
    AucSeries,
    ConcordanceEstimate,
    ConcordanceKind,
    INTEGRATED_CONCORDANCE,
    auc_id,
    auc_series,
    concordance_from_auc,
    concordance_gh,
    concordance_harrell,
    concordance_weights,
    pairwise_risk_differences,
    roc_id,
    sensitivity_weights,
    weight_profile,
)
from errors import FoldWithoutEvents, NotConverged, Singular, SurvDiscError
from logger import NullLogger
from oracle import TrueModel, true_concordance
from sim_config import DEFAULT_SEED, GLOBAL_CONFIG
from smooth import smooth_auc_series, smooth_km_monotone
from streams import make_stream
from utils import load_json

SCHEMA_VERSION = 1
IN_SAMPLE = "in_sample"
OUT_OF_SAMPLE = "out_of_sample"


class Misalignment(str, Enum):
    NONE = "none"
    MEAN_SHIFT = "mean_shift"
    VAR_INFLATE = "var_inflate"


# (mean, sd) of the covariate law for misaligned test subjects
MISALIGNED_LAWS = {
    Misalignment.MEAN_SHIFT: (5.0, 1.0),
    Misalignment.VAR_INFLATE: (0.0, 5.0),
}


class MisalignedOutcome(str, Enum):
    # outcome drawn from base-law covariates; the recorded covariates are then redrawn
    BASE_LAW = "base_law"
    # outcome drawn from the recorded (misaligned) covariates
    CONDITIONAL = "conditional"


class ScenarioConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    schema_version: int = SCHEMA_VERSION
    name: str = "custom"
    n_train: int = Field(250, ge=2)
    n_test: int = Field(250, ge=2)
    beta: Tuple[float, ...] = (1.0, -1.0, 0.25)
    theta: float = Field(2.0, gt=0)
    p_shape: float = Field(2.0, gt=0)
    censor_upper: float = Field(1.0, gt=0)
    tau: float = Field(1.0, gt=0)
    noise_dims: int = Field(0, ge=0)
    misalignment: Misalignment = Misalignment.NONE
    misaligned_outcome: MisalignedOutcome = MisalignedOutcome.CONDITIONAL
    alpha: float = Field(0.0, ge=0.0, le=1.0)
    replicates: int = Field(200, ge=1)
    seed: int = DEFAULT_SEED

    @field_validator("schema_version")
    @classmethod
    def _known_schema(cls, value):
        if value != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema_version {value}; this build reads version {SCHEMA_VERSION}")
        return value

    @field_validator("beta")
    @classmethod
    def _nonempty_beta(cls, value):
        if len(value) == 0:
            raise ValueError("beta needs at least one coefficient")
        return value

    def true_model(self) -> TrueModel:
        return TrueModel(beta=self.beta, theta=self.theta, p_shape=self.p_shape)


def load_scenario_config(path) -> ScenarioConfig:
    """Reads a scenario JSON document; pydantic's ValidationError reports bad fields."""
    return ScenarioConfig.model_validate(load_json(path))


# ---------- generators ----------


def draw_event_times(eta, theta, p_shape, stream) -> np.ndarray:
    """Inverse-CDF draws T* = (-log U / (theta e^eta))^(1/p)."""
    eta = np.asarray(eta, dtype=float)
    u = stream.uniform(size=eta.shape[0])
    return (-np.log(u) / (theta * np.exp(eta))) ** (1.0 / p_shape)


def _censor(X, cfg: ScenarioConfig, stream) -> SurvivalDataset:
    n = X.shape[0]
    latent = draw_event_times(X @ np.asarray(cfg.beta), cfg.theta, cfg.p_shape, stream)
    censor = stream.uniform(0.0, cfg.censor_upper, size=n)
    stop = np.minimum(censor, cfg.tau)
    return SurvivalDataset(time=np.minimum(latent, stop), event=latent <= stop, X=X)


def generate_base(n: int, cfg: ScenarioConfig, stream) -> SurvivalDataset:
    if n < 1:
        raise ValueError(f"sample size must be positive, got {n}")
    X = stream.standard_normal((n, len(cfg.beta)))
    return _censor(X, cfg, stream)


def generate_overfit_covariates(ds: SurvivalDataset, m: int, stream) -> SurvivalDataset:
    """Appends m independent N(0, 1) columns unrelated to the outcome."""
    if m < 0:
        raise ValueError(f"noise dimension must be nonnegative, got {m}")
    if m == 0:
        return ds
    noise = stream.standard_normal((ds.n, m))
    return ds.with_covariates(np.hstack([ds.X, noise]))


def generate_misaligned(n: int, cfg: ScenarioConfig, stream) -> SurvivalDataset:
    """
    Each subject is misaligned with probability alpha and records covariates
    from the shifted law.

    With `misaligned_outcome=base_law` the event and censoring times are drawn
    first from base-law covariates, so a misaligned subject's recorded risk
    score carries no information about its outcome. With `conditional` the
    times follow the Weibull law given the recorded covariates, and the fitted
    model stays correctly specified for every subject.

    Draw order is flags, base covariates, times, shifted covariates in
    base_law mode, so for one stream the times are the same for every alpha.
    """
    if n < 1:
        raise ValueError(f"sample size must be positive, got {n}")
    p = len(cfg.beta)
    flags = stream.uniform(size=n) < cfg.alpha
    X = stream.standard_normal((n, p))
    shifted = cfg.misalignment is not Misalignment.NONE and flags.any()
    mean, sd = MISALIGNED_LAWS.get(cfg.misalignment, (0.0, 1.0))

    if cfg.misaligned_outcome is MisalignedOutcome.CONDITIONAL:
        if shifted:
            X[flags] = mean + sd * stream.standard_normal((int(flags.sum()), p))
        return _censor(X, cfg, stream)

    base = _censor(X, cfg, stream)
    if not shifted:
        return base
    recorded = X.copy()
    recorded[flags] = mean + sd * stream.standard_normal((int(flags.sum()), p))
    return base.with_covariates(recorded)


# ---------- scoring ----------


@dataclass(frozen=True, eq=False)
class SampleScores:
    tau: Optional[float]
    auc: Dict[AucKind, AucSeries] = field(default_factory=dict)
    concordance: Dict[ConcordanceKind, ConcordanceEstimate] = field(default_factory=dict)
    failures: Dict[str, str] = field(default_factory=dict)


def _record_failure(failures, name, e):
    failures[name] = f"{type(e).__name__}: {e}"


def score_sample(eta, ds: SurvivalDataset, tau: float, logger=None) -> SampleScores:
    """
    Every AUC series and concordance estimator on one sample. An estimator
    that cannot be computed is recorded in `failures` and the rest go on.
    """
    logger = logger or NullLogger()
    eta = np.asarray(eta, dtype=float)
    failures, series, estimates = {}, {}, {}

    surv = None
    tau_eval = None
    try:
        surv = smooth_km_monotone(kaplan_meier(ds), upper=float(ds.time.max()))
        tau_eval = min(tau, surv.domain[1])
    except SurvDiscError as e:
        _record_failure(failures, "survival_smooth", e)

    for kind in (AucKind.SEMI_PARAMETRIC, AucKind.NON_PARAMETRIC):
        try:
            series[kind] = auc_series(eta, ds, kind)
        except SurvDiscError as e:
            _record_failure(failures, f"auc_{kind.value}", e)
    if AucKind.NON_PARAMETRIC in series:
        try:
            series[AucKind.SMOOTHED_NON_PARAMETRIC] = smooth_auc_series(series[AucKind.NON_PARAMETRIC])
        except SurvDiscError as e:
            _record_failure(failures, f"auc_{AucKind.SMOOTHED_NON_PARAMETRIC.value}", e)

    if surv is not None:
        for kind, auc in series.items():
            target = INTEGRATED_CONCORDANCE[kind]
            try:
                weights = concordance_weights(surv, auc.times, tau_eval)
                estimates[target] = concordance_from_auc(auc, weights, tau_eval)
            except SurvDiscError as e:
                _record_failure(failures, f"concordance_{target.value}", e)

    try:
        estimates[ConcordanceKind.GH] = concordance_gh(eta)
    except SurvDiscError as e:
        _record_failure(failures, f"concordance_{ConcordanceKind.GH.value}", e)
    try:
        estimates[ConcordanceKind.HARRELL] = concordance_harrell(eta, ds)
    except SurvDiscError as e:
        _record_failure(failures, f"concordance_{ConcordanceKind.HARRELL.value}", e)

    for name, message in failures.items():
        logger.warning(f"estimator {name} unavailable: {message}")
    return SampleScores(tau=tau_eval, auc=series, concordance=estimates, failures=failures)


# ---------- replicates ----------


@dataclass(frozen=True, eq=False)
class ReplicateResult:
    replicate: int
    censoring_fraction: float
    median_event_time: float
    fit: Optional[CoxFit] = None
    in_sample: Optional[SampleScores] = None
    out_of_sample: Optional[SampleScores] = None
    failure: Optional[str] = None

    @property
    def failed(self):
        return self.failure is not None

    def side(self, name) -> SampleScores:
        return self.in_sample if name == IN_SAMPLE else self.out_of_sample


def _evaluate_fit(index, train, test, tau, opts, logger) -> ReplicateResult:
    summary = event_time_summary(train)
    base = dict(
        replicate=index,
        censoring_fraction=summary["censoring_fraction"],
        median_event_time=summary["median_event_time"],
    )
    try:
        fit = fit_cox(train, opts)
    except (Singular, NotConverged) as e:
        logger.warning(f"replicate {index}: Cox fit failed ({type(e).__name__}: {e})")
        return ReplicateResult(**base, failure=f"{type(e).__name__}: {e}")
    return ReplicateResult(
        **base,
        fit=fit,
        in_sample=score_sample(fit.linear_predictor(train.X), train, tau, logger),
        out_of_sample=score_sample(fit.linear_predictor(test.X), test, tau, logger),
    )


def make_replicate_data(cfg: ScenarioConfig, r: int):
    """Paired (train, test) samples of replicate r."""
    train = generate_base(cfg.n_train, cfg, make_stream(cfg.seed, r, "train"))
    if cfg.misalignment is Misalignment.NONE:
        test = generate_base(cfg.n_test, cfg, make_stream(cfg.seed, r, "test"))
    else:
        test = generate_misaligned(cfg.n_test, cfg, make_stream(cfg.seed, r, "test-misaligned"))
    train = generate_overfit_covariates(train, cfg.noise_dims, make_stream(cfg.seed, r, "train-noise"))
    test = generate_overfit_covariates(test, cfg.noise_dims, make_stream(cfg.seed, r, "test-noise"))
    return train, test


def run_replicate(cfg: ScenarioConfig, r: int, logger=None, opts: FitOptions = FitOptions()) -> ReplicateResult:
    logger = logger or NullLogger()
    train, test = make_replicate_data(cfg, r)
    return _evaluate_fit(r, train, test, cfg.tau, opts, logger)


# ---------- study ----------


@dataclass(frozen=True, eq=False)
class StudyResult:
    config: ScenarioConfig
    replicates: List[ReplicateResult]

    @property
    def successful(self):
        return [r for r in self.replicates if not r.failed]

    @property
    def failures(self):
        return {r.replicate: r.failure for r in self.replicates if r.failed}

    def tidy_concordance(self) -> pd.DataFrame:
        rows = []
        for rep in self.successful:
            for side in (IN_SAMPLE, OUT_OF_SAMPLE):
                for kind, est in rep.side(side).concordance.items():
                    rows.append(
                        {
                            "replicate": rep.replicate,
                            "estimator": kind.value,
                            "sample_side": side,
                            "tau": est.tau,
                            "value": est.value,
                        }
                    )
        return pd.DataFrame(rows, columns=["replicate", "estimator", "sample_side", "tau", "value"])

    def tidy_auc(self) -> pd.DataFrame:
        frames = []
        for rep in self.successful:
            for side in (IN_SAMPLE, OUT_OF_SAMPLE):
                for kind, series in rep.side(side).auc.items():
                    frames.append(
                        pd.DataFrame(
                            {
                                "replicate": rep.replicate,
                                "time": series.times,
                                "estimator": kind.value,
                                "sample_side": side,
                                "value": series.auc,
                            }
                        )
                    )
        if not frames:
            return pd.DataFrame(columns=["replicate", "time", "estimator", "sample_side", "value"])
        return pd.concat(frames, ignore_index=True)

    def summary(self, include_truth=True) -> dict:
        """Means, SDs and out-minus-in gaps per concordance estimator."""
        tidy = self.tidy_concordance()
        estimators = {}
        if not tidy.empty:
            grouped = tidy.groupby(["estimator", "sample_side"])["value"]
            stats = grouped.agg(mean="mean", sd="std", n="count").reset_index()
            for row in stats.itertuples(index=False):
                entry = estimators.setdefault(row.estimator, {})
                entry[row.sample_side] = {
                    "mean": float(row.mean),
                    "sd": float(row.sd) if row.n > 1 else 0.0,
                    "n": int(row.n),
                }
            wide = tidy.pivot_table(index=["replicate", "estimator"], columns="sample_side", values="value")
            if IN_SAMPLE in wide and OUT_OF_SAMPLE in wide:
                gaps = (wide[OUT_OF_SAMPLE] - wide[IN_SAMPLE]).groupby(level="estimator").mean()
                for name, gap in gaps.items():
                    estimators[name]["mean_out_minus_in"] = float(gap)

        ok = self.successful
        result = {
            "scenario": self.config.name,
            "replicates": len(self.replicates),
            "failed_replicates": len(self.replicates) - len(ok),
            "failures": {str(k): v for k, v in self.failures.items()},
            "mean_censoring_fraction": float(np.mean([r.censoring_fraction for r in self.replicates]))
            if self.replicates
            else None,
            "mean_median_event_time": float(np.nanmean([r.median_event_time for r in self.replicates]))
            if self.replicates
            else None,
            "concordance": estimators,
        }
        if include_truth:
            result["true_concordance"] = true_concordance(self.config.true_model(), self.config.tau)
        return result

    def binned_auc(self, n_bins: int = 5, tau: Optional[float] = None) -> pd.DataFrame:
        """Median and IQR of AUC estimates in equal-length time bins on (0, tau]."""
        tidy = self.tidy_auc()
        tau = self.config.tau if tau is None else tau
        tidy = tidy[(tidy["time"] > 0) & (tidy["time"] <= tau)].copy()
        edges = np.linspace(0.0, tau, n_bins + 1)
        tidy["bin"] = pd.cut(tidy["time"], edges, labels=False, include_lowest=False)

        def iqr(values):
            return float(np.subtract(*np.percentile(values, [75, 25])))

        grouped = tidy.groupby(["estimator", "sample_side", "bin"])["value"]
        out = grouped.agg(median="median", iqr=iqr, mean="mean", count="count").reset_index()
        out["bin_start"] = edges[out["bin"].astype(int)]
        out["bin_end"] = edges[out["bin"].astype(int) + 1]
        return out

    def auc_at(self, times, estimator: AucKind, side: str = IN_SAMPLE) -> np.ndarray:
        """AUC of every successful replicate linearly interpolated at `times` (replicates x times)."""
        times = np.asarray(times, dtype=float)
        estimator = AucKind(estimator)
        rows = []
        for rep in self.successful:
            series = rep.side(side).auc.get(estimator)
            if series is None or len(series) == 0:
                continue
            rows.append(np.interp(times, series.times, series.auc))
        return np.asarray(rows).reshape(-1, times.shape[0])


def run_study(cfg: ScenarioConfig, threads=None, logger=None, progress=True) -> StudyResult:
    """Runs all replicates on a thread pool; results are ordered by replicate index."""
    threads = threads or GLOBAL_CONFIG["threads"]
    logger = logger or NullLogger()
    results = []
    with ThreadPoolExecutor(max_workers=threads) as executor, tqdm_progress(
        total=cfg.replicates, desc=f"Replicates ({cfg.name})", disable=not progress
    ) as pbar:
        futures = {executor.submit(run_replicate, cfg, r, logger): r for r in range(cfg.replicates)}
        for fut in as_completed(futures):
            results.append(fut.result())
            pbar.update(1)
    results.sort(key=lambda res: res.replicate)
    failed = sum(res.failed for res in results)
    if failed:
        logger.warning(f"{failed} of {cfg.replicates} replicates failed to fit and are excluded from summaries")
    return StudyResult(config=cfg, replicates=results)


# ---------- cross-validation ----------


def kfold_split(ds: SurvivalDataset, k: int, stream) -> np.ndarray:
    """Fold label per subject, stratified by event status (events and censored dealt round-robin)."""
    if k < 2 or k > ds.n:
        raise ValueError(f"k must lie in [2, {ds.n}], got {k}")
    events = stream.permutation(np.flatnonzero(ds.event))
    censored = stream.permutation(np.flatnonzero(~ds.event))
    folds = np.empty(ds.n, dtype=int)
    order = np.concatenate([events, censored])
    folds[order] = np.arange(ds.n) % k
    return folds


def run_cv(
    ds: SurvivalDataset,
    k: int,
    stream,
    tau=None,
    logger=None,
    opts: FitOptions = FitOptions(),
    progress=False,
    threads=1,
):
    """Train on k-1 folds and score both sides of every split; one ReplicateResult per fold, ordered by fold."""
    logger = logger or NullLogger()
    tau = float(ds.time.max()) if tau is None else tau
    folds = kfold_split(ds, k, stream)
    splits = []
    for fold in range(k):
        train = ds.take(np.flatnonzero(folds != fold))
        if train.n_events == 0:
            raise FoldWithoutEvents(f"training data for fold {fold} contains no events")
        splits.append((fold, train, ds.take(np.flatnonzero(folds == fold))))
    results = []
    with ThreadPoolExecutor(max_workers=threads) as executor, tqdm_progress(
        total=k, desc="Folds", disable=not progress
    ) as pbar:
        futures = [executor.submit(_evaluate_fit, fold, train, test, tau, opts, logger) for fold, train, test in splits]
        for fut in as_completed(futures):
            results.append(fut.result())
            pbar.update(1)
    results.sort(key=lambda res: res.replicate)
    return results


# ---------- outlier demonstration ----------

OUTLIER_REFERENCE_TIME = 0.27
OUTLIER_EVENT_TIME = 0.85
OUTLIER_WEIGHT_MARGIN = np.log(1e4)
DIFFERENCE_QUANTILES = (0.25, 0.5, 0.75, 0.99, 1.0)
# a single subject holding more than this share of the sensitivity weight dominates it
DOMINANT_WEIGHT = 0.5


@dataclass(frozen=True, eq=False)
class OutlierReport:
    reference_time: float
    outlier_eta: float
    sp_auc_before: float
    sp_auc_after: float
    np_auc_before: float
    np_auc_after: float
    max_weight_before: float
    max_weight_after: float
    dominated_share_before: float
    dominated_share_after: float
    gh_before: float
    gh_after: float
    hz_before: Optional[float]
    hz_after: Optional[float]
    outlier_survival_at_reference: float
    difference_quantiles_before: Dict[float, float]
    difference_quantiles_after: Dict[float, float]
    clean_test: SurvivalDataset = field(repr=False, default=None)
    outlier_test: SurvivalDataset = field(repr=False, default=None)

    def to_dict(self):
        out = {
            k: v
            for k, v in self.__dict__.items()
            if k not in ("clean_test", "outlier_test")
        }
        out["difference_quantiles_before"] = {str(q): v for q, v in self.difference_quantiles_before.items()}
        out["difference_quantiles_after"] = {str(q): v for q, v in self.difference_quantiles_after.items()}
        return out


def _dominated_share(eta, ds):
    """Share of event times before the outlier's event at which one subject dominates the weights."""
    times, max_weights = weight_profile(eta, ds)
    early = times < OUTLIER_EVENT_TIME
    return float(np.mean(max_weights[early] > DOMINANT_WEIGHT))


def outlier_demo(seed: int = DEFAULT_SEED, n_train: int = 300, n_test: int = 500, logger=None) -> OutlierReport:
    """
    Fits on a base-law training sample and scores two test samples that differ
    by one subject: its covariates point along beta-hat so that its risk score
    dominates the sensitivity weights at the reference time, and its event comes late.
    """
    logger = logger or NullLogger()
    cfg = ScenarioConfig(name="outlier-demo", n_train=n_train, n_test=n_test, seed=seed)
    train = generate_base(n_train, cfg, make_stream(seed, 0, "outlier-train"))
    test = generate_base(n_test, cfg, make_stream(seed, 0, "outlier-test"))
    fit = fit_cox(train)
    eta = fit.linear_predictor(test.X)

    event_times = np.unique(test.time[test.event & (test.time < OUTLIER_EVENT_TIME)])
    reference = float(event_times[np.argmin(np.abs(event_times - OUTLIER_REFERENCE_TIME))])
    at_risk = eta[test.time >= reference]
    outlier_eta = float(max(3.6 * eta.max(), logsumexp(at_risk) + OUTLIER_WEIGHT_MARGIN))
    x_outlier = fit.beta * outlier_eta / float(fit.beta @ fit.beta)
    logger.info(f"outlier demo: reference time {reference:.4f}, outlier risk score {outlier_eta:.3f}")

    polluted = SurvivalDataset(
        time=np.append(test.time, OUTLIER_EVENT_TIME),
        event=np.append(test.event, True),
        X=np.vstack([test.X, x_outlier]),
    )
    eta_polluted = fit.linear_predictor(polluted.X)

    def at_reference(scores, data, kind):
        return auc_id(roc_id(scores, data, reference, kind))

    before = score_sample(eta, test, cfg.tau, logger)
    after = score_sample(eta_polluted, polluted, cfg.tau, logger)
    hz = ConcordanceKind.HZ
    return OutlierReport(
        reference_time=reference,
        outlier_eta=outlier_eta,
        sp_auc_before=at_reference(eta, test, AucKind.SEMI_PARAMETRIC),
        sp_auc_after=at_reference(eta_polluted, polluted, AucKind.SEMI_PARAMETRIC),
        np_auc_before=at_reference(eta, test, AucKind.NON_PARAMETRIC),
        np_auc_after=at_reference(eta_polluted, polluted, AucKind.NON_PARAMETRIC),
        max_weight_before=sensitivity_weights(eta, test, reference).max_weight,
        max_weight_after=sensitivity_weights(eta_polluted, polluted, reference).max_weight,
        dominated_share_before=_dominated_share(eta, test),
        dominated_share_after=_dominated_share(eta_polluted, polluted),
        gh_before=concordance_gh(eta).value,
        gh_after=concordance_gh(eta_polluted).value,
        hz_before=before.concordance[hz].value if hz in before.concordance else None,
        hz_after=after.concordance[hz].value if hz in after.concordance else None,
        outlier_survival_at_reference=float(predict_survival(fit, train, x_outlier, reference)[0]),
        difference_quantiles_before=dict(
            zip(DIFFERENCE_QUANTILES, np.quantile(pairwise_risk_differences(eta), DIFFERENCE_QUANTILES).tolist())
        ),
        difference_quantiles_after=dict(
            zip(
                DIFFERENCE_QUANTILES,
                np.quantile(pairwise_risk_differences(eta_polluted), DIFFERENCE_QUANTILES).tolist(),
            )
        ),
        clean_test=test,
        outlier_test=polluted,
    )

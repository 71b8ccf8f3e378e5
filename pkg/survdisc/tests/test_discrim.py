import numpy as np
import pytest
from scipy.integrate import trapezoid

from conftest import random_dataset
from core import SurvivalDataset, unique_event_times
from discrim import (
    AucKind,
    AucSeries,
    ConcordanceKind,
    RocCurve,
    auc_id,
    auc_series,
    concordance_from_auc,
    concordance_gh,
    concordance_harrell,
    concordance_weights,
    dynamic_fp,
    gh_pair_contributions,
    incident_tp_np,
    incident_tp_sp,
    roc_id,
    sensitivity_weights,
    weight_profile,
)
from errors import (
    DegenerateDenominator,
    EmptyControls,
    EmptyRiskSet,
    Misaligned,
    NoCasesAtTime,
    NoUsablePairs,
    OutOfDomain,
    TooFewPoints,
    TooFewSubjects,
)
from streams import make_stream


class ExponentialSurvival:
    """S(t) = exp(-rate t) with its exact density."""

    def __init__(self, rate=1.0, upper=50.0):
        self.rate = rate
        self.domain = (0.0, upper)

    def __call__(self, t):
        return np.exp(-self.rate * np.asarray(t, dtype=float))

    def density(self, t):
        return self.rate * np.exp(-self.rate * np.asarray(t, dtype=float))


class FlatSurvival:
    def __init__(self, level, upper=10.0):
        self.level = level
        self.domain = (0.0, upper)

    def __call__(self, t):
        return np.full(np.shape(t), self.level, dtype=float)

    def density(self, t):
        return np.zeros(np.shape(t))


# ---------- time-specific rates ----------


def test_toy_rates(toy):
    ds, eta = toy
    assert dynamic_fp(eta, ds, 0.5, 1.0) == pytest.approx(1 / 3)
    assert incident_tp_np(eta, ds, 0.5, 1.0) == 1.0
    e = np.exp
    expected = (e(2) + e(1)) / (e(2) + e(1) + e(0) + e(-1))
    assert incident_tp_sp(eta, ds, 0.5, 1.0) == pytest.approx(expected)
    assert expected == pytest.approx(0.8808, abs=1e-4)


@pytest.mark.parametrize("rate", [dynamic_fp, incident_tp_np, incident_tp_sp])
def test_rate_limits(toy, rate):
    ds, eta = toy
    assert rate(eta, ds, -np.inf, 1.0) == 1.0
    assert rate(eta, ds, eta.max(), 1.0) == 0.0


def test_rate_errors(toy):
    ds, eta = toy
    with pytest.raises(EmptyControls):
        dynamic_fp(eta, ds, 0.0, 4.0)
    with pytest.raises(NoCasesAtTime):
        incident_tp_np(eta, ds, 0.0, 2.0)
    with pytest.raises(EmptyRiskSet):
        incident_tp_sp(eta, ds, 0.0, 5.0)


def test_sp_sensitivity_ignores_event_status(toy):
    ds, eta = toy
    flipped = SurvivalDataset(time=ds.time, event=~ds.event)
    assert incident_tp_sp(eta, flipped, 0.5, 1.0) == incident_tp_sp(eta, ds, 0.5, 1.0)


def test_rates_nonincreasing_in_threshold(stream):
    ds = random_dataset(stream, 80)
    eta = stream.standard_normal(80)
    times = unique_event_times(ds)
    t = float(times[times.shape[0] // 2])
    grid = np.linspace(-3, 3, 40)
    for rate in (dynamic_fp, incident_tp_np, incident_tp_sp):
        values = [rate(eta, ds, c, t) for c in grid]
        assert np.all(np.diff(values) <= 1e-15)


def test_sensitivity_weights():
    ds = SurvivalDataset(time=np.arange(1.0, 6.0), event=np.ones(5))
    diag = sensitivity_weights(np.zeros(5), ds, 1.0)
    np.testing.assert_allclose(diag.weights, np.full(5, 0.2))
    eta = np.array([20.0, 0.0, 0.0, 0.0, 0.0])
    diag = sensitivity_weights(eta, ds, 1.0)
    assert diag.max_weight > 0.9999
    assert diag.weights.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.all(diag.weights >= 0)


def test_weight_profile(toy):
    ds, eta = toy
    times, max_weights = weight_profile(eta, ds)
    assert times.tolist() == [1.0, 3.0, 4.0]
    assert max_weights[-1] == 1.0
    assert np.all((max_weights > 0) & (max_weights <= 1))


# ---------- ROC and AUC ----------


def test_toy_np_roc(toy):
    ds, eta = toy
    roc = roc_id(eta, ds, 1.0, AucKind.NON_PARAMETRIC)
    assert roc.points[0] == (0.0, 0.0)
    assert roc.points[-1] == (1.0, 1.0)
    assert np.all(np.diff(roc.fp) >= 0)
    assert (0.0, 1.0) in roc.points
    assert auc_id(roc) == 1.0


def test_roc_points_match_direct_definitions(stream):
    for _ in range(100):
        ds = random_dataset(stream, 40, integer_times=True)
        eta = np.round(stream.standard_normal(40), 1)
        times = unique_event_times(ds)
        times = times[times < ds.time.max()]
        if times.size == 0:
            continue
        t = float(stream.choice(times))
        thresholds = np.unique(eta[ds.time >= t])
        np_points = set(roc_id(eta, ds, t, AucKind.NON_PARAMETRIC).points)
        sp_roc = roc_id(eta, ds, t, AucKind.SEMI_PARAMETRIC)
        for c in thresholds:
            fp = dynamic_fp(eta, ds, c, t)
            assert (fp, incident_tp_np(eta, ds, c, t)) in np_points
            hits = np.isclose(sp_roc.fp, fp) & np.isclose(sp_roc.tp, incident_tp_sp(eta, ds, c, t), atol=1e-12)
            assert hits.any()


def test_roc_rejects_smoothed_kind(toy):
    ds, eta = toy
    with pytest.raises(ValueError):
        roc_id(eta, ds, 1.0, AucKind.SMOOTHED_NON_PARAMETRIC)


@pytest.mark.parametrize(
    "fp, tp, expected",
    [
        ([0.0, 1.0], [0.0, 1.0], 0.5),
        ([0.0, 0.0, 1.0], [0.0, 1.0, 1.0], 1.0),
        ([0.0, 0.5, 1.0], [0.0, 1.0, 1.0], 0.75),
    ],
)
def test_auc_by_trapezoid(fp, tp, expected):
    roc = RocCurve(time=1.0, fp=np.array(fp), tp=np.array(tp), kind=AucKind.NON_PARAMETRIC)
    assert auc_id(roc) == pytest.approx(expected)


@pytest.mark.parametrize("kind", [AucKind.NON_PARAMETRIC, AucKind.SEMI_PARAMETRIC])
def test_constant_scores_give_half(stream, kind):
    ds = random_dataset(stream, 60)
    series = auc_series(np.zeros(60), ds, kind)
    np.testing.assert_allclose(series.auc, 0.5)


def test_perfect_separation_np():
    ds = SurvivalDataset(time=np.arange(1.0, 11.0), event=np.ones(10))
    series = auc_series(-ds.time, ds, AucKind.NON_PARAMETRIC)
    np.testing.assert_allclose(series.auc, 1.0)
    # the last event time has no controls
    assert series.skipped == ((10.0, "EmptyControls"),)


def test_toy_series(toy):
    ds, eta = toy
    series = auc_series(eta, ds, AucKind.NON_PARAMETRIC)
    assert series.times.tolist() == [1.0, 3.0]
    assert series.auc[0] == 1.0
    assert np.all((series.auc >= 0) & (series.auc <= 1))


def test_np_estimators_rank_invariant(stream):
    ds = random_dataset(stream, 150)
    eta = stream.standard_normal(150)
    transformed = 2 * eta + 1
    a = auc_series(eta, ds, AucKind.NON_PARAMETRIC)
    b = auc_series(transformed, ds, AucKind.NON_PARAMETRIC)
    assert np.array_equal(a.auc, b.auc)
    assert concordance_harrell(eta, ds).value == concordance_harrell(transformed, ds).value


def test_sp_estimator_depends_on_scale(stream):
    ds = random_dataset(stream, 150)
    eta = stream.standard_normal(150)
    a = auc_series(eta, ds, AucKind.SEMI_PARAMETRIC)
    b = auc_series(2 * eta, ds, AucKind.SEMI_PARAMETRIC)
    assert not np.array_equal(a.auc, b.auc)


# ---------- concordance ----------


def test_weights_for_exponential_survival():
    curve = ExponentialSurvival()
    t = np.linspace(0.0, 5.0, 51)
    np.testing.assert_allclose(concordance_weights(curve, t, 50.0), 2 * np.exp(-2 * t), rtol=1e-12)


def test_weights_integrate_to_one():
    curve = ExponentialSurvival(rate=2.0, upper=3.0)
    tau = 1.5
    t = np.linspace(0.0, tau, 20001)
    assert trapezoid(concordance_weights(curve, t, tau), t) == pytest.approx(1.0, abs=1e-3)


def test_weights_vanish_on_flat_survival():
    np.testing.assert_array_equal(concordance_weights(FlatSurvival(0.5), [1.0, 2.0], 5.0), 0.0)


def test_weights_errors():
    with pytest.raises(DegenerateDenominator):
        concordance_weights(FlatSurvival(1.0), [1.0], 5.0)
    with pytest.raises(OutOfDomain):
        concordance_weights(ExponentialSurvival(upper=2.0), [1.0], 3.0)


def _series(times, values, kind=AucKind.NON_PARAMETRIC):
    return AucSeries(times=np.asarray(times, dtype=float), auc=np.asarray(values, dtype=float), kind=kind)


@pytest.mark.parametrize("level", [0.5, 1.0])
def test_concordance_of_constant_auc(level):
    times = np.linspace(0.05, 1.0, 20)
    w = 2 * np.exp(-2 * times)
    est = concordance_from_auc(_series(times, np.full(20, level)), w, 1.0)
    assert est.value == pytest.approx(level, abs=1e-3)
    assert est.kind is ConcordanceKind.NP


def test_concordance_of_linear_auc_with_uniform_weights():
    times = np.linspace(0.0, 1.0, 1001)
    est = concordance_from_auc(_series(times, times, AucKind.SEMI_PARAMETRIC), np.ones(1001), 1.0)
    assert est.value == pytest.approx(0.5, abs=1e-3)
    assert est.kind is ConcordanceKind.HZ
    assert est.tau == 1.0


def test_concordance_from_auc_errors():
    series = _series([0.5, 1.0], [0.6, 0.7])
    with pytest.raises(Misaligned):
        concordance_from_auc(series, [1.0], 1.0)
    with pytest.raises(TooFewPoints):
        concordance_from_auc(series, [1.0, 1.0], 0.1)


def test_gh_examples():
    assert concordance_gh([0.0, 1.0]).value == pytest.approx(1 / (1 + np.exp(-1)))
    assert concordance_gh([0.0, 1.0]).value == pytest.approx(0.7311, abs=1e-4)
    assert concordance_gh([0.0, 100.0]).value == pytest.approx(1.0)
    assert concordance_gh(np.ones(10)).value == 0.0
    with pytest.raises(TooFewSubjects):
        concordance_gh([1.0])


def test_gh_pair_contributions_bounded(stream):
    eta = stream.standard_normal(50)
    contributions = gh_pair_contributions(eta)
    assert contributions.shape == (50 * 49 // 2,)
    assert np.all((contributions > 0.5) & (contributions < 1.0))


def _gh_brute_force(eta):
    n = len(eta)
    total = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            d = eta[j] - eta[i]
            if d < 0:
                total += 1 / (1 + np.exp(d))
            if -d < 0:
                total += 1 / (1 + np.exp(-d))
    return 2 * total / (n * (n - 1))


def _harrell_brute_force(eta, ds):
    usable = concordant = 0
    for i in range(ds.n):
        for j in range(ds.n):
            if ds.time[i] < ds.time[j] and ds.event[i]:
                usable += 1
                concordant += eta[i] > eta[j]
    return concordant / usable


def test_harrell_toy(toy):
    ds, eta = toy
    assert concordance_harrell(eta, ds).value == 1.0
    assert concordance_harrell(-eta, ds).value == 0.0


def test_harrell_without_usable_pairs():
    ds = SurvivalDataset(time=[1.0, 2.0], event=[0, 1])
    with pytest.raises(NoUsablePairs):
        concordance_harrell([0.0, 1.0], ds)


def test_concordance_matches_brute_force():
    stream = make_stream(11, 0, "brute-force")
    for _ in range(100):
        n = int(stream.integers(5, 60))
        ds = random_dataset(stream, n, integer_times=True)
        if not ds.event.any() or ds.n < 2:
            continue
        eta = np.round(stream.standard_normal(n), 1)
        assert concordance_gh(eta).value == pytest.approx(_gh_brute_force(eta), rel=1e-12)
        try:
            expected = _harrell_brute_force(eta, ds)
        except ZeroDivisionError:
            continue
        assert concordance_harrell(eta, ds).value == expected

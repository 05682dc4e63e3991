import random

import numpy as np
import pytest

from tasep_lab.init_profiles import InitialSpec
from tasep_lab.mc_harness import (ExperimentPlan, ExperimentRecord, RecordFormatError,
                                  density_field_compare, fit_exponent, load_records,
                                  run_fluctuation_experiment, uniform_law_test, write_records)

NS = (250, 500, 1000, 2000, 4000, 8000)


def _synthetic(power, reps=200, seed=0, scale=3.0):
    g = np.random.default_rng(seed)
    out = []
    for n in NS:
        for r, z in enumerate(g.standard_normal(reps)):
            out.append(ExperimentRecord(n, r, 0, int(round(scale * n ** power * z)), 0.0, 0,
                                        1.0, -n, n))
    return out


@pytest.mark.parametrize("power", [2 / 3, 1 / 2])
@pytest.mark.parametrize("statistic", ["iqr", "std"])
def test_fit_recovers_known_exponent(power, statistic):
    fit = fit_exponent(_synthetic(power), statistic, n_resamples=500)
    assert fit.ci_low < power < fit.ci_high
    assert abs(fit.chi - power) < 0.05


def test_fit_is_order_independent_and_drops_flags():
    recs = _synthetic(2 / 3)
    shuffled = recs[:]
    random.Random(3).shuffle(shuffled)
    assert fit_exponent(recs, n_resamples=300) == fit_exponent(shuffled, n_resamples=300)
    flagged = [ExperimentRecord(n, 999, 0, 10 ** 6, 0.0, 1, 1.0, -n, n) for n in NS]
    assert fit_exponent(recs + flagged, n_resamples=300).spreads == \
        fit_exponent(recs, n_resamples=300).spreads


def test_fit_needs_enough_scales():
    recs = [r for r in _synthetic(0.5) if r.n < 1000]
    with pytest.raises(ValueError):
        fit_exponent(recs)
    with pytest.raises(ValueError):
        fit_exponent(_synthetic(0.5), statistic="mad")


def test_uniform_law_on_synthetic_records():
    g = np.random.default_rng(1)
    recs = [ExperimentRecord(1000, i, 0, int(1000 * x), 0.0, 0, 1.0, 0, 0)
            for i, x in enumerate(g.uniform(-0.6, 0.6, 3000))]
    rep = uniform_law_test(recs, 0.8, 0.2)
    assert rep.support == pytest.approx((-0.6, 0.6)) and rep.ks < 0.03
    with pytest.raises(ValueError):
        uniform_law_test(recs, 0.2, 0.8)


def _small_plan(**kw):
    base = dict(initial=InitialSpec("riemann", lam=0.8, rho=0.2), t=1.0, ns=(40, 80),
                replicas=(6, 4), seed=11)
    base.update(kw)
    return ExperimentPlan(**base)


def test_empty_plan_and_validation():
    assert run_fluctuation_experiment(_small_plan(replicas=(0, 0))) == []
    with pytest.raises(ValueError):
        _small_plan(replicas=(1,))
    with pytest.raises(ValueError):
        _small_plan(t=0.0)


def test_experiment_is_deterministic_and_window_stable():
    plan = _small_plan()
    a = run_fluctuation_experiment(plan)
    b = run_fluctuation_experiment(plan, parallelism=2)
    c = run_fluctuation_experiment(_small_plan(window_scale=2))
    key = lambda rs: [(r.n, r.replica, r.seed, r.X, r.flag) for r in rs]
    assert key(a) == key(b) == key(c)
    assert [(r.n, r.replica) for r in a] == [(40, i) for i in range(6)] + [(80, i) for i in range(4)]
    assert all(c_.window_right - c_.window_left > a_.window_right - a_.window_left
               for a_, c_ in zip(a, c))


def test_records_round_trip(tmp_path):
    recs = run_fluctuation_experiment(_small_plan())
    p = tmp_path / "records.csv"
    write_records(p, recs)
    back = load_records(p)
    assert [(r.n, r.replica, r.X, r.center) for r in back] == \
        [(r.n, r.replica, r.X, r.center) for r in recs]
    assert [r.runtime for r in back] == [r.runtime for r in recs]
    q = tmp_path / "again.csv"
    write_records(q, back, sidecar=False)
    assert q.read_bytes() == p.read_bytes()


def test_load_records_errors(tmp_path):
    p = tmp_path / "r.csv"
    p.write_text("")
    assert load_records(p) == []
    p.write_text("n,replica,seed,X,center,flag,t,window_left\n")
    with pytest.raises(RecordFormatError, match="window_right"):
        load_records(p)
    p.write_text("n,replica,seed,X,center,flag,t,window_left,window_right\n"
                 "1,0,0,3,0.0,0,1.0,-5,5\n1,1,0,oops,0.0,0,1.0,-5,5\n")
    with pytest.raises(RecordFormatError, match="line 3"):
        load_records(p)
    p.write_text("n,replica,seed,X,center,flag,t,window_left,window_right\n1,0,0\n")
    with pytest.raises(RecordFormatError, match="line 2"):
        load_records(p)


def test_density_at_time_zero_matches_initial_profile():
    rows = density_field_compare(InitialSpec("riemann", lam=0.7, rho=0.3), 500, 0.0, 20, 4)
    assert max(r.abs_err for r in rows) < 0.06
    assert rows[0].oracle == pytest.approx(0.7) and rows[-1].oracle == pytest.approx(0.3)

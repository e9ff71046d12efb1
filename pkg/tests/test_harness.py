import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from srwcap.exceptions import NumericalError
from srwcap.green_kernel import green_exact
from srwcap.harness import experiments
from srwcap.harness.experiments import (D3_SCALE, D4_TARGET, exp_d3_limit,
                                        exp_d3_second_moment, exp_d4_mean_curve, exp_d4_wlln,
                                        exp_tau_mechanism, rare_event_tau)
from srwcap.harness.report import BASE_COLUMNS, ExperimentReport, format_number
from srwcap.harness.stats import (EmpiricalSample, MomentAccumulator, ks_statistic, ks_uniform,
                                  reduce_accumulators, welford_merge)

finite = st.floats(-1e6, 1e6, allow_nan=False)


def test_constants():
    assert D4_TARGET == pytest.approx(1.2337, abs=5e-5)
    assert D3_SCALE == pytest.approx(0.1924501, abs=1e-7)


def test_welford_examples():
    x = MomentAccumulator.from_values([1, 2, 3])
    y = MomentAccumulator.from_values([4, 5])
    m = welford_merge(x, y)
    assert (m.count, m.mean, m.variance) == (5, 3.0, 2.5)
    assert welford_merge(x, MomentAccumulator()) == x
    assert welford_merge(MomentAccumulator(), y) == y
    assert math.isnan(MomentAccumulator.from_values([1.0]).variance)


@given(st.lists(finite, min_size=3, max_size=40), st.randoms(use_true_random=False))
def test_welford_permutation_invariance(values, rnd):
    cuts = sorted(rnd.sample(range(1, len(values)), 2))
    parts = [values[:cuts[0]], values[cuts[0]:cuts[1]], values[cuts[1]:]]
    accs = [MomentAccumulator.from_values(p) for p in parts]
    ref = reduce_accumulators(accs)
    rnd.shuffle(accs)
    other = reduce_accumulators(accs)
    assert other.count == ref.count
    assert other.mean == pytest.approx(ref.mean, rel=1e-12, abs=1e-9)
    assert other.M2 == pytest.approx(ref.M2, rel=1e-12, abs=1e-6)
    assert ref.mean == pytest.approx(np.mean(values), rel=1e-12, abs=1e-9)


def test_replica_shuffle_leaves_accumulator_invariant():
    values = np.random.default_rng(3).lognormal(size=300) * 1e3
    ref = reduce_accumulators(MomentAccumulator().push(v) for v in values)
    for seed in range(5):
        perm = np.random.default_rng(seed).permutation(values)
        acc = reduce_accumulators(MomentAccumulator().push(v) for v in perm)
        assert acc.mean == pytest.approx(ref.mean, rel=1e-12)
        assert acc.variance == pytest.approx(ref.variance, rel=1e-12)


def test_ks_examples():
    a = EmpiricalSample([3, 1, 2], "a")
    assert a.values.tolist() == [1, 2, 3] and a.size == 3 and not a.values.flags.writeable
    assert ks_statistic(a, a) == 0
    assert ks_statistic([1, 2], [3, 4]) == 1
    assert ks_statistic(a, EmpiricalSample([1.5, 2.5, 3.5])) == pytest.approx(1 / 3)
    with pytest.raises(ValueError):
        ks_statistic([], [1.0])


ints = st.lists(st.integers(-1000, 1000).map(float), min_size=1, max_size=30)


@given(ints, ints)
def test_ks_symmetric_and_transform_invariant(a, b):
    k = ks_statistic(a, b)
    assert 0 <= k <= 1 and k == ks_statistic(b, a)
    f = lambda v: np.asarray(v) ** 3 + 5 * np.asarray(v)  # exact in float64 on this range
    assert ks_statistic(f(a), f(b)) == k


def test_ks_uniform():
    assert ks_uniform((np.arange(100) + 0.5) / 100) == pytest.approx(0.005)
    assert ks_uniform(np.zeros(10)) == 1.0


def test_report_serialisation(tmp_path):
    rows = [{"n": 8, "replicas": 2, "mean": 0.1, "var": 1 / 3, "rel_var": 2.0, "ratio": 1e-17,
             "stderr": float("nan")},
            {"n": 2, "replicas": 2, "mean": 1.0, "var": 0.0, "rel_var": 0.0, "ratio": 1.0,
             "stderr": 0.0}]
    rep = ExperimentReport("demo", 7, BASE_COLUMNS, rows, {"d": 3})
    assert rep.column("n") == [2, 8]
    csv = rep.to_csv().splitlines()
    assert csv[0] == "n,replicas,mean,var,rel_var,ratio,stderr"
    assert csv[2] == "8,2,0.1,0.3333333333333333,2.0,1e-17,nan"
    assert float(csv[2].split(",")[3]) == 1 / 3
    doc = json.loads(rep.to_json())
    assert doc["version"] == 1 and doc["master_seed"] == 7 and "git_describe" in doc
    assert doc["rows"][1]["stderr"] == "nan"
    assert rep.write(tmp_path / "r.csv") == (tmp_path / "r.csv").read_text()
    with pytest.raises(ValueError):
        rep.write(tmp_path / "r.xml", "xml")
    assert format_number(np.float64(0.1)) == "0.1" and format_number(True) == "true"


def test_d4_single_step_range():
    rep = exp_d4_mean_curve([1], replicas=5, master=11)
    row = rep.row(1)
    exact = 2 / (green_exact(4, (0, 0, 0, 0)) + green_exact(4, (1, 0, 0, 0)))
    assert row["mean"] == pytest.approx(exact, rel=1e-8)
    assert row["var"] == pytest.approx(0, abs=1e-14)
    assert row["ratio"] == 0.0 and row["failed"] == 0


def test_wlln_rejects_single_replica():
    with pytest.raises(ValueError):
        exp_d4_wlln([16], replicas=1)


def test_second_moment_at_zero():
    rep = exp_d3_second_moment([0, 16], samples=4, master=2)
    row = rep.row(0)
    assert row["ratio"] == pytest.approx(green_exact(3, (0, 0, 0)) ** -2, rel=1e-8)
    assert row["var"] == 0 and row["stderr"] == 0
    assert rep.metadata["max_over_min"] >= 1


def test_tau_full_fraction_is_one():
    rep = exp_tau_mechanism(64, [0.5, 1.0], replicas=6, master=3)
    assert rep.row(64)["ratio"] == 1.0 and rep.row(64)["ratio_stderr"] == 0.0
    assert rep.row(32)["target"] == pytest.approx(0.5 * math.log(64) / math.log(32))
    with pytest.raises(ValueError):
        exp_tau_mechanism(64, [0.0], replicas=2)


@pytest.mark.parametrize("ns", [[], [16, 16], [64, 16], [-1]])
def test_grid_validation(ns):
    with pytest.raises(ValueError):
        exp_d4_mean_curve(ns, replicas=2)


def test_seed_validation():
    with pytest.raises(ValueError):
        exp_d4_mean_curve([4], replicas=2, master=-1)
    with pytest.raises(ValueError):
        exp_d4_mean_curve([4], replicas=2, threads=0)


def test_rows_reproducible_and_cache_transparent():
    a = exp_d3_limit([16, 64], samples=12, bm_steps=64, bm_samples=12, master=5)
    b = exp_d3_limit([16, 64], samples=12, bm_steps=64, bm_samples=12, master=5, cache=False)
    assert a.to_csv() == b.to_csv()
    c = exp_d3_limit([16, 64], samples=12, bm_steps=64, bm_samples=12, master=6, cache=False)
    assert c.to_csv() != a.to_csv()
    # a row depends only on its own parameters
    d = exp_d3_limit([64], samples=12, bm_steps=64, bm_samples=12, master=5, cache=False)
    assert d.to_csv().splitlines()[1] == a.to_csv().splitlines()[2]


def test_worker_count_does_not_change_output():
    one = exp_d4_wlln([8, 32], replicas=6, master=9, cache=False)
    two = exp_d4_wlln([8, 32], replicas=6, master=9, threads=2, cache=False)
    assert one.to_csv() == two.to_csv()


@pytest.mark.parametrize("c", [0.7, 1.5])
def test_brownian_constant_matters(c):
    kw = dict(ns=[64, 1024], samples=60, bm_steps=512, bm_samples=60, master=4)
    base = exp_d3_limit(**kw).row(1024)["ks"]
    assert exp_d3_limit(bm_scale=c, **kw).row(1024)["ks"] > base


def test_failed_replicas_are_excluded(monkeypatch):
    real = experiments.capacity_exact
    calls = []

    def flaky(points, **kw):
        calls.append(1)
        if len(calls) % 3 == 0:
            raise NumericalError("forced")
        return real(points, **kw)

    monkeypatch.setattr(experiments, "capacity_exact", flaky)
    row = exp_d4_mean_curve([32], replicas=9, master=8, cache=False).row(32)
    assert row["failed"] == 3 and row["replicas"] == 6


def test_rare_event_bookkeeping():
    out = rare_event_tau(16, K=2, replicas=6, walkers=300, master=1)
    assert out["hits"] == out["tau_over_n"].size
    assert out["underpowered_batches"] <= 6
    assert np.all((out["tau_over_n"] >= 0) & (out["tau_over_n"] <= 1))
    if out["hits"]:
        assert 0 < out["hit_probability"] < 1 and 0 <= out["ks_uniform"] <= 1
    rep = exp_tau_mechanism(32, [0.5], replicas=3, master=1, rare_event=True, rare_n=16, K=2,
                            rare_replicas=3, rare_walkers=100)
    assert "rare_event" in rep.metadata and "tau_over_n" in rep.samples


@pytest.mark.slow
@pytest.mark.xfail(strict=True, reason="with master seed 1 and 100 replicas the deviation is "
                   "0.046, 0.068, 0.091 across 2^10, 2^12, 2^14: the ratio drifts upward on "
                   "this grid (each step within the bootstrap CI)")
def test_d4_deviation_decreasing_on_default_grid():
    rep = exp_d4_mean_curve(replicas=100, master=1)
    dev = [abs(r - D4_TARGET) for r in rep.column("ratio")]
    assert dev[0] > dev[1] > dev[2], dev


@pytest.mark.slow
def test_rare_event_diagnostic_default_scale():
    # reported, not asserted against Uniform[0, 1]
    out = rare_event_tau(2 ** 8, K=8, replicas=200, walkers=2000, master=1)
    assert out["hits"] > 0 and 0 <= out["ks_uniform"] <= 1
    assert out["underpowered_batches"] <= 200
    print(f"rare-event tau/n: hits={out['hits']} KS={out['ks_uniform']:.3f} "
          f"p_hit={out['hit_probability']:.3e} underpowered={out['underpowered_batches']}")

"""Desk-scale experiments on range capacities in Z^3 / Z^4 and Brownian capacity.

Every sample is a pure function of ``(master seed, kind, d, n, replica)``
through :func:`replica_stream_id`, so rows are reproducible and experiments
that ask for the same ``(d, n, replica)`` reuse one sample.  Replicas may be
farmed out to a process pool; results are gathered and reduced in replica
order, so the output does not depend on the worker count.
"""
import logging
import math
import multiprocessing
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .._validation import check_nonnegative_int, check_positive_int
from .._walkers import SiteGrid, first_label_hit
from ..continuum_capacity import capacity_bm, occupation_cloud
from ..exceptions import NumericalError
from ..lattice_walk import derive_stream, replica_stream_id, simulate_bm, simulate_srw
from ..potential import capacity_exact
from .report import BASE_COLUMNS, ExperimentReport
from .stats import (EmpiricalSample, MomentAccumulator, bootstrap, ks_statistic, ks_uniform,
                    reduce_accumulators, rel_var, sample_var)

logger = logging.getLogger(__name__)

KIND_SRW, KIND_BM, KIND_RARE, KIND_BOOT = 1, 2, 3, 4
DEFAULT_NS = (2 ** 10, 2 ** 12, 2 ** 14)
D4_TARGET = math.pi ** 2 / 8
D3_SCALE = 1.0 / (3.0 * math.sqrt(3.0))
BOOTSTRAP_RESAMPLES = 1000

_SAMPLES = {}


def clear_sample_cache():
    _SAMPLES.clear()


def range_capacity_sample(task):
    """Capacity of ``X[0, n]`` for one replica; NaN when the solve fails."""
    master, d, n, replica = task
    stream = derive_stream(master, replica_stream_id(KIND_SRW, d, n, replica))
    walk = simulate_srw(d, n, stream)
    _, first = np.unique(walk.points, axis=0, return_index=True)
    try:
        return capacity_exact(walk.points[np.sort(first)], method="exact-cg").value
    except NumericalError as exc:
        logger.warning("replica %d (d=%d, n=%d) failed: %s", replica, d, n, exc)
        return float("nan")


def bm_capacity_sample(task):
    """Cap_BM of the occupation cloud of one Brownian path on [0, 1]."""
    master, steps, replica = task
    stream = derive_stream(master, replica_stream_id(KIND_BM, 3, steps, replica))
    cloud = occupation_cloud(simulate_bm(steps, stream), steps)
    try:
        return capacity_bm(cloud).value
    except NumericalError as exc:
        logger.warning("Brownian replica %d failed: %s", replica, exc)
        return float("nan")


def _init_worker():
    import numba
    numba.set_num_threads(1)


def parallel_map(func, tasks, threads=1):
    """``[func(t) for t in tasks]``, optionally over a spawn process pool."""
    tasks = list(tasks)
    if threads <= 1 or len(tasks) <= 1:
        return [func(t) for t in tasks]
    ctx = multiprocessing.get_context("spawn")
    with ProcessPoolExecutor(max_workers=threads, mp_context=ctx, initializer=_init_worker) as ex:
        return list(ex.map(func, tasks))


def _samples(func, keys, threads, cache):
    """Evaluate ``func`` on ``keys`` (tuples), reusing the in-process memo."""
    out = [_SAMPLES.get((func.__name__,) + k) if cache else None for k in keys]
    todo = [i for i, v in enumerate(out) if v is None]
    for i, v in zip(todo, parallel_map(func, [keys[i] for i in todo], threads)):
        out[i] = v
        if cache:
            _SAMPLES[(func.__name__,) + keys[i]] = v
    return np.array(out, dtype=np.float64)


def range_capacities(d, n, replicas, master, threads=1, cache=True):
    keys = [(int(master), d, int(n), r) for r in range(replicas)]
    return _samples(range_capacity_sample, keys, threads, cache)


def bm_capacities(steps, replicas, master, threads=1, cache=True):
    keys = [(int(master), int(steps), r) for r in range(replicas)]
    return _samples(bm_capacity_sample, keys, threads, cache)


def _check_grid(ns):
    ns = [check_nonnegative_int(n, "n") for n in ns]
    if not ns or any(b <= a for a, b in zip(ns, ns[1:])):
        raise ValueError(f"ns must be a nonempty strictly ascending grid, got {ns}")
    return ns


def _check_common(master, threads):
    if not 0 <= int(master) < 1 << 64:
        raise ValueError("master seed must be an unsigned 64-bit integer")
    return int(master), check_positive_int(threads, "threads")


def _boot_rng(master, d, n, tag):
    return derive_stream(master, replica_stream_id(KIND_BOOT, d, n, tag)).generator()


def _split(values):
    good = values[np.isfinite(values)]
    return good, int(values.size - good.size)


def _summary(values):
    """Base statistics of a sample, merged in replica order."""
    acc = reduce_accumulators(MomentAccumulator().push(v) for v in values)
    var = acc.variance
    return {"replicas": acc.count, "mean": acc.mean, "var": var,
            "rel_var": var / acc.mean ** 2 if acc.count >= 2 and acc.mean else float("nan"),
            "stderr": math.sqrt(var / acc.count) if acc.count >= 2 else float("nan")}


def _finish(name, master, columns, rows, metadata, samples, start):
    report = ExperimentReport(name, master, tuple(columns), rows, metadata, samples)
    report.runtime = time.perf_counter() - start
    logger.info("%s finished in %.1f s", name, report.runtime)
    return report


def exp_d4_mean_curve(ns=DEFAULT_NS, replicas=100, master=0, threads=1, cache=True):
    """``(log n / n) k(n)`` in Z^4 against its limit ``pi^2 / 8``.

    ``ratio_lo`` / ``ratio_hi`` are 95% percentile bootstrap limits of the ratio.
    """
    start = time.perf_counter()
    ns = _check_grid(ns)
    master, threads = _check_common(master, threads)
    replicas = check_positive_int(replicas, "replicas")
    rows, samples = [], {}
    for n in ns:
        good, failed = _split(range_capacities(4, n, replicas, master, threads, cache))
        row = {"n": n, **_summary(good), "failed": failed, "target": D4_TARGET}
        scale = math.log(n) / n if n >= 1 else float("nan")
        row["ratio"] = scale * row["mean"]
        if good.size >= 2:
            boot = bootstrap(good, np.mean, BOOTSTRAP_RESAMPLES, _boot_rng(master, 4, n, 0)) * scale
            row["ratio_lo"], row["ratio_hi"] = (float(q) for q in np.percentile(boot, [2.5, 97.5]))
        rows.append(row)
        samples[n] = EmpiricalSample(good, f"srw-capacity d=4 n={n}")
    columns = BASE_COLUMNS + ("failed", "target", "ratio_lo", "ratio_hi")
    return _finish("d4-mean", master, columns, rows,
                   {"d": 4, "method": "exact-cg", "replicas": replicas}, samples, start)


def exp_d4_wlln(ns=DEFAULT_NS, replicas=100, master=0, threads=1, cache=True):
    """Relative variance ``Var / mean^2`` of Cap(X[0, n]) in Z^4 with bootstrap limits."""
    start = time.perf_counter()
    ns = _check_grid(ns)
    master, threads = _check_common(master, threads)
    replicas = check_positive_int(replicas, "replicas")
    if replicas < 2:
        raise ValueError("the variance needs at least two replicas")
    rows, samples = [], {}
    for n in ns:
        good, failed = _split(range_capacities(4, n, replicas, master, threads, cache))
        row = {"n": n, **_summary(good), "failed": failed}
        row["ratio"] = row["rel_var"]
        if good.size >= 2:
            boot = bootstrap(good, rel_var, BOOTSTRAP_RESAMPLES, _boot_rng(master, 4, n, 1))
            row["rel_var_se"] = float(boot.std(ddof=1))
            row["rel_var_lo"], row["rel_var_hi"] = (float(q) for q in np.percentile(boot, [2.5, 97.5]))
        rows.append(row)
        samples[n] = EmpiricalSample(good, f"srw-capacity d=4 n={n}")
    columns = BASE_COLUMNS + ("failed", "rel_var_se", "rel_var_lo", "rel_var_hi")
    return _finish("d4-wlln", master, columns, rows,
                   {"d": 4, "method": "exact-cg", "replicas": replicas}, samples, start)


def _var_se(values, rng):
    return float(bootstrap(values, sample_var, BOOTSTRAP_RESAMPLES, rng).std(ddof=1))


def exp_d3_limit(ns=DEFAULT_NS, samples=300, bm_steps=4096, bm_samples=300, master=0,
                 threads=1, bm_scale=1.0, cache=True):
    """Law of ``Cap(X[0, n]) / sqrt(n)`` in Z^3 against ``Cap_BM(M[0, 1]) / (3 sqrt 3)``.

    ``bm_scale`` multiplies the Brownian sample on top of ``1 / (3 sqrt 3)``;
    it exists to check that the KS distance notices a wrong constant.
    """
    start = time.perf_counter()
    ns = _check_grid(ns)
    master, threads = _check_common(master, threads)
    samples = check_positive_int(samples, "samples")
    bm_steps = check_positive_int(bm_steps, "bm_steps")
    bm_samples = check_positive_int(bm_samples, "bm_samples")
    bm_good, bm_failed = _split(bm_capacities(bm_steps, bm_samples, master, threads, cache))
    bm = EmpiricalSample(bm_good * D3_SCALE * bm_scale, "bm-capacity")
    bm_stats = _summary(bm.values)
    bm_var_se = _var_se(bm.values, _boot_rng(master, 3, bm_steps, 3)) if bm.size >= 2 else float("nan")
    rows, out_samples = [], {"bm": bm}
    for n in ns:
        good, failed = _split(range_capacities(3, n, samples, master, threads, cache))
        values = good / math.sqrt(max(n, 1))
        scaled = EmpiricalSample(values, f"srw-capacity d=3 n={n}")
        row = {"n": n, **_summary(values), "failed": failed,
               "ks": ks_statistic(scaled, bm), "bm_mean": bm_stats["mean"],
               "bm_var": bm_stats["var"], "bm_var_se": bm_var_se}
        row["ratio"] = row["mean"] / bm_stats["mean"]
        if scaled.size >= 2:
            row["var_se"] = _var_se(values, _boot_rng(master, 3, n, 2))
        rows.append(row)
        out_samples[n] = scaled
    columns = BASE_COLUMNS + ("failed", "ks", "var_se", "bm_mean", "bm_var", "bm_var_se")
    meta = {"d": 3, "method": "exact-cg", "scale": D3_SCALE * bm_scale, "bm_steps": bm_steps,
            "bm_samples": bm.size, "bm_failed": bm_failed}
    return _finish("d3-limit", master, columns, rows, meta, out_samples, start)


def exp_d3_second_moment(ns=DEFAULT_NS, samples=300, master=0, threads=1, cache=True):
    """``E[Cap(X[0, n])^2] / n`` in Z^3 (``n = 0`` reports ``E[Cap^2]`` itself).

    ``mean``/``var`` describe ``Cap / sqrt(n)``; ``ratio`` is the second
    moment ratio with its standard error in ``stderr``.
    """
    start = time.perf_counter()
    ns = _check_grid(ns)
    master, threads = _check_common(master, threads)
    samples = check_positive_int(samples, "samples")
    rows, out_samples = [], {}
    for n in ns:
        good, failed = _split(range_capacities(3, n, samples, master, threads, cache))
        scaled = good / math.sqrt(max(n, 1))
        sq = MomentAccumulator.from_values(scaled ** 2)
        row = {"n": n, **_summary(scaled), "failed": failed, "ratio": sq.mean,
               "stderr": math.sqrt(sq.variance / sq.count) if sq.count >= 2 else float("nan")}
        if good.size >= 2:
            row["var_se"] = _var_se(scaled, _boot_rng(master, 3, n, 4))
        rows.append(row)
        out_samples[n] = EmpiricalSample(scaled, f"srw-capacity d=3 n={n}")
    ratios = [r["ratio"] for r in rows]
    meta = {"d": 3, "method": "exact-cg", "samples": samples,
            "max_over_min": max(ratios) / min(ratios) if min(ratios) > 0 else float("nan")}
    return _finish("d3-m2", master, BASE_COLUMNS + ("failed", "var_se"), rows, meta,
                   out_samples, start)


def _exterior_poisson_starts(x0, rho, count, gen):
    """Lattice-rounded draws from the hitting law of the sphere ``|y| = rho``
    for Brownian motion started at ``x0`` (density ~ ``|x0 - y|^{-d}``)."""
    d = x0.shape[0]
    dist = np.linalg.norm(x0)
    out = []
    while sum(len(o) for o in out) < count:
        y = gen.standard_normal((2 * count, d))
        y *= rho / np.linalg.norm(y, axis=1, keepdims=True)
        accept = ((dist - rho) / np.linalg.norm(x0 - y, axis=1)) ** d
        out.append(y[gen.random(2 * count) < accept])
    return np.rint(np.concatenate(out)[:count]).astype(np.int64)


def rare_event_tau(n, K, replicas, walkers, master, radius_factor=2.0, exit_factor=4.0):
    """Direct estimate of the law of ``tau_1 / n`` given ``tau_1 <= n``.

    ``tau_1`` is the first time of ``X^0`` visited by an independent walk
    ``X^1`` from ``x0 = (K n, 0, 0, 0)``.  ``X^1`` is started on the sphere of
    radius ``rho = radius_factor * max |X^0|`` from its entrance law and is
    stopped outside ``exit_factor * rho``; the entrance probability
    ``(rho / K n)^2`` rescales the batch hit frequency.  Batches without a
    hit are counted as underpowered, not averaged in.
    """
    n = check_positive_int(n, "n")
    x0 = np.zeros(4)
    x0[0] = K * n
    hits, underpowered, p_hit = [], 0, []
    for r in range(replicas):
        stream = derive_stream(master, replica_stream_id(KIND_RARE, 4, n, r))
        walk = simulate_srw(4, n, stream.substream(0))
        _, first = np.unique(walk.points, axis=0, return_index=True)
        sites = walk.points[first]
        grid = SiteGrid(sites, labels=first)
        rho = radius_factor * max(1.0, float(np.sqrt((sites.astype(float) ** 2).sum(1).max())))
        starts = _exterior_poisson_starts(x0, rho, walkers, stream.substream(1).generator())
        labels = first_label_hit(starts, grid.lo, grid.shape, grid.strides, grid.values,
                                 np.zeros(4, dtype=np.int64), np.int64((exit_factor * rho) ** 2),
                                 np.uint64(stream.substream(2).seed64()), np.int64(0))
        got = labels[labels >= 0]
        if got.size == 0:
            underpowered += 1
            continue
        hits.append(got / n)
        p_hit.append((rho / (K * n)) ** 2 * got.size / walkers)
    times = np.concatenate(hits) if hits else np.zeros(0)
    return {"n": n, "K": K, "replicas": replicas, "walkers": walkers, "hits": int(times.size),
            "underpowered_batches": underpowered,
            "hit_probability": float(np.mean(p_hit)) if p_hit else float("nan"),
            "ks_uniform": ks_uniform(times), "tau_over_n": times}


def exp_tau_mechanism(n=2 ** 14, fractions=(0.25, 0.5, 0.75), replicas=100, master=0,
                      threads=1, rare_event=False, rare_n=2 ** 8, K=8, rare_replicas=200,
                      rare_walkers=2000, cache=True):
    """``k(ceil(s n)) / k(n)`` in Z^4 against ``s log n / log(s n)``.

    Rows are keyed by ``ceil(s n)``; ``rel_err = ratio / target - 1``.  With
    ``rare_event`` the direct first-hit diagnostic goes to ``metadata``.
    """
    start = time.perf_counter()
    n = check_positive_int(n, "n")
    master, threads = _check_common(master, threads)
    replicas = check_positive_int(replicas, "replicas")
    fractions = [float(s) for s in fractions]
    if not fractions or any(not 0 < s <= 1 for s in fractions):
        raise ValueError("fractions must lie in (0, 1]")
    base, _ = _split(range_capacities(4, n, replicas, master, threads, cache))
    k_n = _summary(base)
    rows, samples = [], {n: EmpiricalSample(base, f"srw-capacity d=4 n={n}")}
    for s in fractions:
        m = math.ceil(s * n)
        good, failed = _split(range_capacities(4, m, replicas, master, threads, cache))
        row = {"n": m, **_summary(good), "failed": failed, "s": s}
        row["ratio"] = row["mean"] / k_n["mean"]
        if m == n:
            row["ratio_stderr"] = 0.0
        else:
            row["ratio_stderr"] = row["ratio"] * math.hypot(row["stderr"] / row["mean"],
                                                            k_n["stderr"] / k_n["mean"])
        row["target"] = s * math.log(n) / math.log(s * n) if s * n > 1 else float("nan")
        row["rel_err"] = row["ratio"] / row["target"] - 1.0
        rows.append(row)
        samples[m] = EmpiricalSample(good, f"srw-capacity d=4 n={m}")
    meta = {"d": 4, "method": "exact-cg", "base_n": n, "k_n": k_n["mean"], "replicas": replicas}
    if rare_event:
        diag = rare_event_tau(rare_n, K, rare_replicas, rare_walkers, master)
        samples["tau_over_n"] = EmpiricalSample(diag.pop("tau_over_n"), "rare-event tau/n")
        meta["rare_event"] = diag
    columns = BASE_COLUMNS + ("failed", "s", "target", "rel_err", "ratio_stderr")
    return _finish("tau", master, columns, rows, meta, samples, start)

"""Capacity, equilibrium measure and hitting probabilities of finite sets in Z^d.

The equilibrium weights ``e_F(z) = P^z[tau^+(F) = inf]`` solve

    sum_z G(x, z) e_F(z) = 1,   x in F,

which is the last-exit decomposition of ``P^x[tau(F) < inf]`` evaluated on
``F`` itself (where the probability is one).  ``Cap(F) = sum_z e_F(z)``.
Monte-Carlo estimators are provided as independent cross-checks.
"""
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from numba import njit, prange
from scipy.special import zeta

from ._validation import check_dimension, check_positive_int, check_sites
from ._walkers import SiteGrid, run_hit_or_exit
from .exceptions import NumericalError
from .green_kernel import asymptotic_coefficient, default_kernel
from .lattice_walk import RangeSet, unit_steps

logger = logging.getLogger(__name__)

METHODS = ("exact-cholesky", "exact-cg")
DEFAULT_TOL = {"exact-cholesky": 1e-8, "exact-cg": 1e-6}
CHOLESKY_LIMIT = 4000
DENSE_LIMIT = 16000
NEGATIVE_SLACK = 1e-10


@dataclass(frozen=True, eq=False)
class EquilibriumSolution:
    """Solution of the equilibrium system on a finite set.

    ``raw_weights`` is the unconstrained solve; ``weights`` clamps the
    (tiny, ill-conditioning) negative entries to zero for reporting.
    """

    sites: np.ndarray
    raw_weights: np.ndarray
    residual: float
    method: str
    iterations: int
    tol: float

    @property
    def weights(self):
        return np.clip(self.raw_weights, 0.0, None)

    @property
    def capacity(self):
        return float(self.raw_weights.sum())


@dataclass(frozen=True)
class CapacityEstimate:
    value: float
    stderr: float
    method: str
    params: dict = field(default_factory=dict)

    def to_dict(self):
        return {"value": self.value, "stderr": self.stderr, "method": self.method,
                "params": dict(self.params)}


def _as_sites(F, kernel=None):
    sites = F.sites if isinstance(F, RangeSet) else check_sites(F, allow_empty=True)
    if kernel is not None and len(sites) and sites.shape[1] != kernel.dimension:
        raise ValueError(f"{sites.shape[1]}-dimensional set with a {kernel.dimension}-dimensional kernel")
    return np.ascontiguousarray(sites, dtype=np.int64)


def _as_range(F):
    return F if isinstance(F, RangeSet) else RangeSet.from_sites(F)


@njit(parallel=True, fastmath=True, cache=True)
def _matvec_dense(m, x, out):
    n = m.shape[0]
    for i in prange(n):
        acc = 0.0
        for j in range(m.shape[1]):
            acc += m[i, j] * x[j]
        out[i] = acc


@njit(cache=True)
def _dot(a, b):
    # sequential on purpose: bit-stable for any thread count
    acc = 0.0
    for i in range(a.shape[0]):
        acc += a[i] * b[i]
    return acc


def conjugate_gradient(matvec, b, tol, maxiter, restarts=3):
    """Solve ``A x = b`` for SPD ``A`` given only ``matvec``.

    Stops when the max-norm of the residual is below ``tol``; the true
    residual ``b - A x`` is recomputed on exit and the iteration restarted if
    rounding let the recursive residual drift.

    Returns
    -------
    x, iterations, residual
    """
    n = b.shape[0]
    x = np.zeros(n)
    ax = np.empty(n)
    ap = np.empty(n)
    total = 0
    for _ in range(restarts + 1):
        matvec(x, ax)
        r = b - ax
        if np.abs(r).max() <= tol:
            return x, total, float(np.abs(r).max())
        p = r.copy()
        rr = _dot(r, r)
        while total < maxiter:
            matvec(p, ap)
            pap = _dot(p, ap)
            if not pap > 0:  # breakdown: exact solution reached or A not positive definite
                break
            alpha = rr / pap
            x += alpha * p
            r -= alpha * ap
            total += 1
            if np.abs(r).max() <= 0.5 * tol:
                break
            rr_new = _dot(r, r)
            if not rr_new > 0:  # squared residual underflowed
                break
            p *= rr_new / rr
            p += r
            rr = rr_new
        else:
            break
    matvec(x, ax)
    res = float(np.abs(b - ax).max())
    if res > tol:
        raise NumericalError(f"conjugate gradient stalled at residual {res:.3e}", residual=res,
                             diagnostics={"iterations": total})
    return x, total, res


def enclosed_mask(sites):
    """Sites whose 2d neighbours all lie in the set.

    A walk from such a site re-enters the set at its first step, so its
    equilibrium weight is exactly zero.
    """
    sites = np.asarray(sites, dtype=np.int64)
    rs = RangeSet(sites)
    mask = np.ones(len(sites), dtype=bool)
    for step in unit_steps(sites.shape[1]):
        mask &= rs.contains(sites + step)
    return mask


def equilibrium_measure(F, kernel=None, method="auto", tol=None, maxiter=None,
                        dense_limit=DENSE_LIMIT):
    """Equilibrium weights of ``F`` by an exact linear solve.

    Parameters
    ----------
    F : RangeSet or array_like of shape (m, d)
    kernel : GreenKernel, optional
        Defaults to the process-wide hybrid kernel of F's dimension.
    method : {"auto", "exact-cholesky", "exact-cg"}
        ``auto`` uses Cholesky up to 4000 sites and CG above.
    tol : float, optional
        Max-norm residual target (1e-8 Cholesky, 1e-6 CG by default).
    dense_limit : int
        CG stores the Green matrix up to this many sites and evaluates the
        kernel on demand above it.

    Notes
    -----
    Enclosed sites (see :func:`enclosed_mask`) get weight 0 and the system is
    solved on the remaining sites; the residual is still checked on all of F.
    """
    sites = _as_sites(F, kernel)
    if len(sites) == 0:
        logger.warning("capacity of the empty set is taken to be 0")
        return EquilibriumSolution(sites, np.zeros(0), 0.0, "empty", 0, 0.0)
    if kernel is None:
        kernel = default_kernel(check_dimension(sites.shape[1]))
    if method == "auto":
        method = "exact-cholesky" if len(sites) <= CHOLESKY_LIMIT else "exact-cg"
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    tol = DEFAULT_TOL[method] if tol is None else float(tol)
    if not (np.isfinite(tol) and tol > 0):
        raise ValueError(f"tol must be positive and finite, got {tol!r}")
    enclosed = enclosed_mask(sites)
    active = sites[~enclosed]
    ones = np.ones(len(active))

    if method == "exact-cholesky":
        m = kernel.matrix(active)
        try:
            factor = scipy.linalg.cho_factor(m, lower=True, check_finite=False)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"Green matrix is not positive definite: {exc}") from exc
        w_active = scipy.linalg.cho_solve(factor, ones, check_finite=False)
        residual = float(np.abs(m @ w_active - 1.0).max())
        iterations = 1
    else:
        if len(active) <= dense_limit:
            m = kernel.matrix(active)

            def matvec(v, out):
                _matvec_dense(m, v, out)
        else:
            def matvec(v, out):
                kernel.matvec_free(active, v, out)
        maxiter = 20 * len(active) + 100 if maxiter is None else int(maxiter)
        w_active, iterations, residual = conjugate_gradient(matvec, ones, tol, maxiter)
    if enclosed.any():
        inner = kernel.cross(sites[enclosed], active) @ w_active
        residual = max(residual, float(np.abs(inner - 1.0).max()))
    if residual > tol:
        raise NumericalError(f"{method} residual {residual:.3e} exceeds {tol:.1e}",
                             residual=residual)
    weights = np.zeros(len(sites))
    weights[~enclosed] = w_active

    # cg weights are only accurate to about its tolerance
    slack = NEGATIVE_SLACK if method == "exact-cholesky" else max(NEGATIVE_SLACK, tol)
    if weights.min() < -slack:
        logger.warning("equilibrium weights down to %.3e: ill-conditioned solve", weights.min())
    return EquilibriumSolution(sites, weights, residual, method, iterations, tol)


def capacity_exact(F, kernel=None, method="auto", tol=None, **kwargs):
    """Cap(F) = sum of equilibrium weights, as a zero-stderr estimate."""
    sol = equilibrium_measure(F, kernel=kernel, method=method, tol=tol, **kwargs)
    return CapacityEstimate(sol.capacity, 0.0, sol.method,
                            {"size": int(len(sol.sites)), "residual": sol.residual,
                             "iterations": sol.iterations, "tol": sol.tol})


def hitting_probability(x, sol, kernel=None):
    """P^x[tau(F) < inf] = sum_z G(x, z) e_F(z), clamped to [0, 1].

    ``x`` may be a single point or an ``(m, d)`` array.
    """
    x = np.asarray(x, dtype=np.int64)
    single = x.ndim == 1
    if len(sol.sites) == 0:
        out = np.zeros(1 if single else len(x))
    else:
        if kernel is None:
            kernel = default_kernel(sol.sites.shape[1])
        out = np.clip(kernel.cross(np.atleast_2d(x), sol.sites) @ sol.raw_weights, 0.0, 1.0)
    return float(out[0]) if single else out


def set_center(sites):
    """Integer centre of the bounding box; MC balls are centred here."""
    return (sites.min(axis=0) + sites.max(axis=0)) // 2


def _radii(sites, center):
    rel = sites - center
    return int(np.abs(rel).max()), float(np.sqrt((rel.astype(float) ** 2).sum(axis=1).max()))


def escape_probability_mc(x, F, R_stop, trials, stream, center=None):
    """Fraction of walks from ``x`` in F that leave the ball of radius ``R_stop``
    (about the set's centre) before returning to F.

    This is the raw truncated estimate; it overshoots the true escape
    probability by roughly ``Cap(F) a_d R_stop^{2-d}``.

    Returns
    -------
    estimate, stderr
    """
    if trials <= 0:
        raise ValueError("trials must be positive")
    F = _as_range(F)
    x = np.asarray(x, dtype=np.int64)
    if x not in F:
        raise ValueError("escape_probability_mc needs a start point inside F")
    center = set_center(F.sites) if center is None else np.asarray(center, dtype=np.int64)
    r_inf, _ = _radii(F.sites, center)
    if R_stop < 2 * r_inf or R_stop < 1:
        raise ValueError(f"R_stop={R_stop} must be at least twice the bounding radius {r_inf}")
    grid = SiteGrid(F.sites)
    _, exits, _ = run_hit_or_exit(grid, x, skip_start=True, center=center, exit_radius=R_stop,
                                  seed=stream.seed64(), trials=trials)
    p = exits / trials
    return p, float(np.sqrt(p * (1 - p) / trials))


def capacity_mc(F, kernel=None, subset_size=None, trials_per_site=1000, R_stop=None, stream=None):
    """Cap(F) ~ |F| * mean escape probability over a uniform subset of sites.

    Raw escapes are multiplied once by ``1 - Cap_hat a_d R_stop^{2-d}``
    (first-pass ``Cap_hat``) for walks that return after leaving the ball.
    The stderr combines between-site sampling variance (finite population
    corrected) with the binomial noise of each site.
    """
    F = _as_range(F)
    size = F.count
    subset_size = size if subset_size is None else int(subset_size)
    if not 1 <= subset_size <= size:
        raise ValueError(f"subset_size must be in [1, {size}], got {subset_size}")
    trials = check_positive_int(trials_per_site, "trials_per_site")
    if stream is None:
        raise ValueError("capacity_mc needs an RngStream")
    d = F.dimension
    center = set_center(F.sites)
    r_inf, _ = _radii(F.sites, center)
    R_stop = 20.0 * max(1, r_inf) if R_stop is None else float(R_stop)
    if R_stop < 2 * r_inf:
        raise ValueError(f"R_stop={R_stop} must be at least twice the bounding radius {r_inf}")

    gen = stream.generator()
    picked = np.sort(gen.choice(size, size=subset_size, replace=False))
    seeds = gen.integers(0, 1 << 63, size=subset_size, dtype=np.int64)
    grid = SiteGrid(F.sites)
    p = np.empty(subset_size)
    for k, (i, seed) in enumerate(zip(picked, seeds)):
        _, exits, _ = run_hit_or_exit(grid, F.sites[i], skip_start=True, center=center,
                                      exit_radius=R_stop, seed=int(seed), trials=trials)
        p[k] = exits / trials

    raw = size * p.mean()
    a_d = asymptotic_coefficient(d)
    factor = 1.0 - raw * a_d * R_stop ** (2 - d)
    frac = subset_size / size
    between = p.var(ddof=1) if subset_size > 1 else 0.0
    within = (p * (1 - p)).mean() / max(trials - 1, 1)
    var_mean = ((1 - frac) * between + frac * within) / subset_size
    return CapacityEstimate(factor * raw, size * abs(factor) * float(np.sqrt(var_mean)), "mc-escape",
                            {"subset_size": subset_size, "trials_per_site": trials,
                             "R_stop": R_stop, "correction": factor, "raw": raw})


def capacity_far_point(F, kernel=None, K=16, trials=10000, stream=None, exit_factor=2.0,
                       scale=None):
    """Cap(F) from the hit frequency of walks started far away.

    Walks start at ``x0 = centre + K * scale * e_1`` (``scale`` defaults to
    the set's sup-norm radius) and run until they hit F or leave the ball of
    radius ``exit_factor * |x0 - centre|``.  Hits after the exit are put back
    with the far-field hitting law, giving

        Cap = p / (G(x0) - (1 - p) a_d R_exit^{2-d}).

    The declared bias adds two first-order terms: the spread of ``G(x0, z)``
    over the set, ``(d - 2) rho / |x0|``, and the error of the far-field
    return term, whose exit points lie within ``rho + 1`` of the exit sphere.
    Both are O(1/K) relative.
    """
    if K < 2:
        raise ValueError("K must be at least 2")
    trials = check_positive_int(trials, "trials")
    if stream is None:
        raise ValueError("capacity_far_point needs an RngStream")
    F = _as_range(F)
    d = F.dimension
    if kernel is None:
        kernel = default_kernel(d)
    center = set_center(F.sites)
    r_inf, rho = _radii(F.sites, center)
    scale = max(1, r_inf) if scale is None else float(scale)
    dist = int(np.ceil(K * scale))
    offset = np.zeros(d, dtype=np.int64)
    offset[0] = dist
    g0 = kernel(offset)
    r_exit = exit_factor * dist
    g_exit = asymptotic_coefficient(d) * r_exit ** (2 - d)
    hits, _, _ = run_hit_or_exit(SiteGrid(F.sites), center + offset, skip_start=False,
                                 center=center, exit_radius=r_exit, seed=stream.seed64(),
                                 trials=trials)
    p = hits / trials
    underpowered = hits == 0
    p_err = p if not underpowered else 1.0 / trials
    denom = g0 - (1 - p) * g_exit
    value = p / denom
    stderr = float(np.sqrt(p_err * (1 - p_err) / trials)) * (g0 - g_exit) / denom ** 2
    if underpowered:
        logger.warning("far-point estimator saw no hits in %d trials", trials)
    return CapacityEstimate(value, stderr, "mc-farpoint",
                            {"K": K, "trials": trials, "hits": int(hits), "x0_distance": dist,
                             "exit_radius": r_exit, "G_x0": g0,
                             "declared_bias": value * (d - 2) * (
                                 rho / dist + (rho + 1) / r_exit * (1 - p) * g_exit / denom),
                             "underpowered": bool(underpowered)})


def green_origin_mc(d, trials, truncation, stream):
    """Monte-Carlo G(0, 0) from the return probability of truncated walks.

    Walks run at most ``truncation`` steps.  Returns after the cut-off are
    restored with the local-CLT tail ``T = sum_{n > truncation} P(X_n = 0)``
    and the renewal asymptotics ``P(tau^+ = n) ~ P(X_n = 0) / G^2``, i.e.
    ``p = p_T + T (1 - p)^2`` and ``G = 1 / (1 - p)``.

    Returns
    -------
    G_hat, stderr, p_truncated
    """
    d = check_dimension(d)
    trials = check_positive_int(trials, "trials")
    truncation = check_positive_int(truncation, "truncation")
    origin = np.zeros((1, d), dtype=np.int64)
    hits, _, _ = run_hit_or_exit(SiteGrid(origin), origin[0], skip_start=True, center=origin[0],
                                 exit_radius=np.inf, seed=stream.seed64(), trials=trials,
                                 max_steps=truncation)
    p_t = hits / trials
    # even times n = 2m > truncation: P(X_n = 0) ~ 2 (d / (4 pi m))^{d/2}
    tail = 2.0 * (d / (4 * np.pi)) ** (d / 2) * zeta(d / 2, truncation // 2 + 1)
    q = 1.0 - p_t
    root = np.sqrt(1.0 + 4.0 * tail * q)
    u = (root - 1.0) / (2.0 * tail)
    g = 1.0 / u
    stderr = np.sqrt(p_t * q / trials) / (u * u * root)
    return float(g), float(stderr), p_t

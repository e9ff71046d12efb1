"""Newtonian capacity of point clouds in R^3.

``Cap_BM(F)^{-1} = inf { int int G(x, y) mu(dx) mu(dy) : mu probability on F }``
with ``G(x, y) = 1 / (2 pi |x - y|)``.  A cloud carries a per-point diagonal
surrogate standing in for the (infinite) point self-energy, and the energy is
minimised over the simplex by Frank-Wolfe with away steps.
"""
import logging
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numba import njit, prange
from scipy.spatial import cKDTree

from ._validation import check_points, check_positive_int
from .potential import CapacityEstimate

logger = logging.getLogger(__name__)

INV_2PI = 1.0 / (2.0 * np.pi)
# E[G(M_s, M_t)] = PATH_PAIR_COEF * |t - s|^{-1/2}
PATH_PAIR_COEF = INV_2PI * np.sqrt(2.0 / np.pi)


def path_surrogate(delta):
    """Mean expected kernel over a time window of width ``delta``.

    ``delta^-2 int int PATH_PAIR_COEF |t - s|^{-1/2} ds dt = PATH_PAIR_COEF (8/3) delta^{-1/2}``.
    """
    return PATH_PAIR_COEF * (8.0 / 3.0) / np.sqrt(delta)


def merge_surrogates(values):
    """Surrogate of an atom made of several coincident patches.

    Both path windows and sphere caps have surrogate proportional to
    ``size^{-1/2}``, so the union of patches gets ``(sum s_i^{-2})^{-1/2}``.
    """
    values = np.asarray(values, dtype=np.float64)
    return float(np.sum(values ** -2.0) ** -0.5)


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Distinct points in R^3 with positive per-point diagonal surrogates.

    Build with :meth:`from_points`, which merges exactly coincident points.
    """

    points: np.ndarray
    surrogate: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("points", "surrogate"):
            a = np.ascontiguousarray(getattr(self, name), dtype=np.float64)
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        if self.points.shape[0] != self.surrogate.shape[0]:
            raise ValueError("one surrogate per point is required")
        if not (np.all(np.isfinite(self.surrogate)) and np.all(self.surrogate > 0)):
            raise ValueError("surrogates must be positive and finite")

    @classmethod
    def from_points(cls, points, surrogate, provenance=None):
        points = check_points(points)
        surrogate = np.broadcast_to(np.asarray(surrogate, dtype=np.float64), (len(points),))
        uniq, first, inverse = np.unique(points, axis=0, return_index=True, return_inverse=True)
        inverse = inverse.ravel()
        if len(uniq) < len(points):
            order = np.argsort(first)
            rank = np.empty_like(order)
            rank[order] = np.arange(len(order))
            group = rank[inverse]
            merged = np.array([merge_surrogates(surrogate[group == g]) for g in range(len(uniq))])
            points, surrogate = uniq[order], merged
        return cls(points, surrogate, dict(provenance or {}))

    def __len__(self):
        return self.points.shape[0]

    def scaled(self, r):
        """The cloud ``r * points``; surrogates scale like the kernel, by ``1/r``."""
        if not r > 0:
            raise ValueError("scale must be positive")
        prov = dict(self.provenance, scale=self.provenance.get("scale", 1.0) * r)
        return PointCloud(self.points * r, self.surrogate / r, prov)


@dataclass(frozen=True, eq=False)
class SimplexWeights:
    """Probability weights on a cloud with the achieved energy and FW gap.

    ``gap = 2 (energy - min_i (A w)_i)`` bounds ``energy - min energy``.
    """

    weights: np.ndarray
    energy: float
    gap: float
    iterations: int
    converged: bool
    trace: np.ndarray = None

    @property
    def support(self):
        return int(np.count_nonzero(self.weights))


def occupation_cloud(path, N):
    """Cloud of the ``N`` samples ``M_{i h/N}``, ``i = 1..N``, of a Brownian path.

    Parameters
    ----------
    path : Trajectory
        Brownian path whose step count is a multiple of ``N``.
    N : int
    """
    N = check_positive_int(N, "N")
    if path.is_lattice or path.dt is None:
        raise ValueError("occupation_cloud needs a Brownian trajectory")
    if N > path.n_steps:
        raise ValueError(f"N={N} exceeds the {path.n_steps} available samples")
    if path.n_steps % N:
        raise ValueError(f"{path.n_steps} path steps are not a multiple of N={N}")
    stride = path.n_steps // N
    delta = path.horizon / N
    return PointCloud.from_points(path.points[stride::stride], path_surrogate(delta),
                                  {"kind": "bm-path", "delta": delta, "N": N})


def _fibonacci_half(N):
    golden = np.pi * (3.0 - np.sqrt(5.0))
    i = np.arange(N // 2)
    z = 1.0 - (2 * i + 1) / N
    rho = np.sqrt(1.0 - z * z)
    return np.c_[rho * np.cos(i * golden), rho * np.sin(i * golden), z]


def _fibonacci(N):
    golden = np.pi * (3.0 - np.sqrt(5.0))
    i = np.arange(N)
    z = 1.0 - (2 * i + 1) / N
    rho = np.sqrt(1.0 - z * z)
    return np.c_[rho * np.cos(i * golden), rho * np.sin(i * golden), z]


@lru_cache(maxsize=16)
def _unit_sphere(N, iters=200, neighbours=12):
    if N % 2:
        return _fibonacci(N)
    # upper spiral mirrored through the origin; short-range repulsion on the
    # symmetric configuration smooths the equatorial seam
    half = _fibonacci_half(N)
    h = np.sqrt(4.0 * np.pi / N)
    k = min(neighbours, N - 1)
    for _ in range(iters):
        both = np.vstack([half, -half])
        dist, idx = cKDTree(both).query(half, k=k + 1)
        diff = half[:, None, :] - both[idx[:, 1:]]
        force = (diff / dist[:, 1:, None] ** 4).sum(axis=1)
        force -= (force * half).sum(axis=1, keepdims=True) * half
        half = half + 0.02 * h ** 4 * force
        half /= np.linalg.norm(half, axis=1, keepdims=True)
    return np.vstack([half, -half])


def sphere_cloud(r, N):
    """``N`` quasi-uniform points on the sphere of radius ``r``.

    Even ``N`` is exactly antipodal.  Each point carries the potential at the
    centre of a flat uniform disc of area ``4 pi r^2 / N``, ``sqrt(N) / (2 pi r)``.
    """
    N = int(N)
    if N < 4:
        raise ValueError("sphere_cloud needs N >= 4")
    if not r > 0:
        raise ValueError("radius must be positive")
    pts = _unit_sphere(N) * r
    return PointCloud(pts, np.full(N, np.sqrt(N) * INV_2PI / r),
                      {"kind": "sphere", "r": float(r), "N": N})


@njit(fastmath=True, inline="always")
def _column(points, surrogate, j, out):
    xj, yj, zj = points[j, 0], points[j, 1], points[j, 2]
    for i in range(points.shape[0]):
        dx = points[i, 0] - xj
        dy = points[i, 1] - yj
        dz = points[i, 2] - zj
        out[i] = INV_2PI / np.sqrt(dx * dx + dy * dy + dz * dz) if i != j else surrogate[j]


@njit(parallel=True, fastmath=True, cache=True)
def _potential(points, surrogate, w, out):
    n = points.shape[0]
    for i in prange(n):
        acc = surrogate[i] * w[i]
        for j in range(n):
            if j != i and w[j] != 0.0:
                dx = points[i, 0] - points[j, 0]
                dy = points[i, 1] - points[j, 1]
                dz = points[i, 2] - points[j, 2]
                acc += w[j] * INV_2PI / np.sqrt(dx * dx + dy * dy + dz * dz)
        out[i] = acc


def potential(cloud, w):
    """``(A w)_i`` where ``A`` is the kernel matrix with the surrogate diagonal."""
    out = np.empty(len(cloud))
    _potential(cloud.points, cloud.surrogate, np.ascontiguousarray(w, dtype=np.float64), out)
    return out


def energy(cloud, w):
    """``sum_{i != j} w_i w_j G(x_i, x_j) + sum_i w_i^2 surrogate_i``."""
    w = w.weights if isinstance(w, SimplexWeights) else np.asarray(w, dtype=np.float64)
    if w.shape != (len(cloud),):
        raise ValueError("weights do not match the cloud")
    return float(np.dot(w, potential(cloud, w)))


def kernel_matrix(cloud):
    """Dense kernel matrix with the surrogate diagonal (small clouds only)."""
    n = len(cloud)
    out = np.empty((n, n))
    for j in range(n):
        _column(cloud.points, cloud.surrogate, j, out[:, j])
    return out


@njit(cache=True)
def _frank_wolfe(points, surrogate, rel_tol, max_iter, away, trace):
    n = points.shape[0]
    w = np.zeros(n)
    j0 = np.argmin(surrogate)
    w[j0] = 1.0
    col = np.empty(n)
    _column(points, surrogate, j0, col)
    g = 2.0 * col  # gradient of w'Aw
    e = surrogate[j0]
    gap = np.inf
    it = 0
    while it < max_iter:
        s = np.argmin(g)
        wg = np.dot(w, g)
        gap = wg - g[s]  # Frank-Wolfe duality gap <g, w - e_s>
        if gap <= rel_tol * e:
            break
        a = -1
        if away:
            ga = -np.inf
            for i in range(n):
                if w[i] > 0.0 and g[i] > ga:
                    ga = g[i]
                    a = i
            if ga - wg <= wg - g[s]:
                a = -1
        if a < 0:
            # toward vertex s: d = e_s - w, d'Ad = A_ss - 2(Aw)_s + w'Aw
            _column(points, surrogate, s, col)
            curv = col[s] - g[s] + e
            gamma = min(1.0, 0.5 * gap / curv)
            w *= 1.0 - gamma
            w[s] += gamma
            for i in range(n):
                g[i] = (1.0 - gamma) * g[i] + 2.0 * gamma * col[i]
        else:
            # away from vertex a: d = w - e_a, capped so w_a stays >= 0
            _column(points, surrogate, a, col)
            curv = col[a] - g[a] + e
            gmax = w[a] / (1.0 - w[a]) if w[a] < 1.0 else np.inf
            gamma = min(gmax, 0.5 * (g[a] - wg) / curv)
            w *= 1.0 + gamma
            w[a] -= gamma
            if gamma == gmax:
                w[a] = 0.0
            for i in range(n):
                g[i] = (1.0 + gamma) * g[i] - 2.0 * gamma * col[i]
        e = 0.5 * np.dot(w, g)
        if it < trace.shape[0]:
            trace[it] = e
        it += 1
    return w, gap, it


def minimize_energy_fw(cloud, tol=1e-4, max_iter=None, away_steps=True, record_trace=False):
    """Minimise the cloud energy over probability weights.

    Parameters
    ----------
    cloud : PointCloud
    tol : float
        Stop once the duality gap is at most ``tol`` times the current energy.
    max_iter : int, optional
        Defaults to ``50 N``.
    away_steps : bool
        Use the away-step variant (linear convergence on these strongly
        convex problems); plain Frank-Wolfe otherwise.
    record_trace : bool
        Keep the energy after every iteration in ``trace``.

    Returns
    -------
    SimplexWeights
        ``converged`` is False when ``max_iter`` ran out first.
    """
    n = len(cloud)
    if n == 0:
        raise ValueError("cloud is empty")
    max_iter = 50 * n if max_iter is None else int(max_iter)
    trace = np.empty(max_iter if record_trace else 0)
    w, gap, it = _frank_wolfe(cloud.points, cloud.surrogate, float(tol), max_iter,
                              bool(away_steps), trace)
    w /= w.sum()
    pot = potential(cloud, w)
    e = float(np.dot(w, pot))
    # recompute the gap from the exact potential to discard update drift
    gap = float(2.0 * (e - pot.min()))
    converged = gap <= tol * e
    if not converged:
        logger.warning("Frank-Wolfe stopped after %d iterations with relative gap %.2e",
                       it, gap / e)
    return SimplexWeights(w, e, gap, int(it), bool(converged),
                          trace[:it].copy() if record_trace else None)


def capacity_bm(cloud, tol=1e-4, max_iter=None, **kwargs):
    """``1 / (minimal energy)`` of the cloud.

    At the optimum every potential ``(A w*)_i`` is at least ``E*``, so by
    Cauchy-Schwarz ``p_min^2 <= E E*`` with ``p_min = min_i (A w)_i``.  The
    capacity therefore lies in ``[1/E, E/p_min^2]`` and ``stderr`` holds the
    width of that interval (first order ``gap / E`` relative).
    """
    res = minimize_energy_fw(cloud, tol=tol, max_iter=max_iter, **kwargs)
    value = 1.0 / res.energy
    p_min = res.energy - 0.5 * res.gap
    bound = res.energy / p_min ** 2 - value if p_min > 0 else np.inf
    return CapacityEstimate(value, bound, "frank-wolfe",
                            {"energy": res.energy, "gap": res.gap, "iterations": res.iterations,
                             "converged": res.converged, "n_points": len(cloud),
                             "support": res.support})

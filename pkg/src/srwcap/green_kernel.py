"""Green function of simple random walk on Z^3 / Z^4 and of Brownian motion on R^3.

Exact values come from the time-integral representation of the continuous-time
walk (same occupation times as the discrete walk)::

    G(0, x) = d * int_0^inf prod_i exp(-s) I_{x_i}(s) ds

integrated on a log-scaled axis by adaptive quadrature, with the tail beyond
``s = 1e6`` summed from the large-argument expansion of ``I_nu``.  Far from the
origin the kernel switches to the asymptotic expansion
``a_d |x|^{2-d} (1 + (alpha_d + beta_d q) / |x|^2)`` with
``q = sum x_i^4 / |x|^4``.
"""
import itertools
import logging
import os
from dataclasses import dataclass, field
from functools import lru_cache
from math import gamma, pi
from pathlib import Path

import numpy as np
from numba import njit, prange
from scipy.integrate import quad_vec
from scipy.special import ive

from ._validation import check_dimension, check_sites
from .exceptions import NumericalError

logger = logging.getLogger(__name__)

QUADRATURE_VERSION = 1
DEFAULT_CROSSOVER = {3: 30, 4: 20}

_TAIL_START = 1e6
_BREAKS = (-40.0, -5.0, 0.0, 2.0, 4.0, 6.0, 8.0, 10.0, float(np.log(_TAIL_START)))
_ABS_TOL = 1e-9

# second-order anisotropic correction of the far-field expansion, per dimension
_CORRECTION = {3: (-3.0 / 8.0, 5.0 / 8.0), 4: (-1.0, 2.0)}

FAR_FIELD_FORMS = ("shifted", "leading", "corrected")


def asymptotic_coefficient(d):
    """a_d = d Gamma(d/2) / ((d - 2) pi^{d/2});  3/(2 pi) for d=3, 2/pi^2 for d=4."""
    d = check_dimension(d)
    return d * gamma(d / 2) / ((d - 2) * pi ** (d / 2))


def far_field_inverse(d):
    """s(d) = 1 / a_d; s(4) = pi^2 / 2."""
    return 1.0 / asymptotic_coefficient(d)


def canonical_offsets(d, radius):
    """Offsets ``radius >= x_1 >= ... >= x_d >= 0``: one per symmetry class of the box."""
    return np.array([c[::-1] for c in itertools.combinations_with_replacement(range(radius + 1), d)],
                    dtype=np.int64)


def canonicalize(x):
    """Sorted (descending) absolute coordinates; the symmetry-class representative."""
    return -np.sort(-np.abs(np.asarray(x, dtype=np.int64)), axis=-1)


def _large_argument_tail(offsets, d):
    # ive(nu, s) ~ (2 pi s)^{-1/2} (1 + c1/s + c2/s^2), integrated from _TAIL_START
    mu = 4.0 * offsets.astype(np.float64) ** 2
    c1 = -(mu - 1.0) / 8.0
    c2 = (mu - 1.0) * (mu - 9.0) / 128.0
    a = c1.sum(axis=1)
    b = c2.sum(axis=1) + (a ** 2 - (c1 ** 2).sum(axis=1)) / 2.0
    p = d / 2.0
    s = _TAIL_START
    return d * (2 * pi) ** (-p) * (s ** (1 - p) / (p - 1) + a * s ** (-p) / p
                                   + b * s ** (-p - 1) / (p + 1))


def green_quadrature(d, offsets):
    """Exact G(0, x) for every row of ``offsets`` (vectorised quadrature).

    Returns
    -------
    values : ndarray
    error : float
        Sum over sub-intervals of the quadrature error estimates (max norm).
    """
    d = check_dimension(d)
    offsets = np.abs(np.atleast_2d(np.asarray(offsets, dtype=np.int64)))
    if offsets.shape[1] != d:
        raise ValueError(f"offsets must have {d} columns")

    def integrand(y):
        s = np.exp(y)
        return d * s * np.prod(ive(offsets, s), axis=1)

    total = np.zeros(len(offsets))
    error = 0.0
    for a, b in zip(_BREAKS[:-1], _BREAKS[1:]):
        res, err = quad_vec(integrand, a, b, epsabs=1e-14, epsrel=1e-13, norm="max", limit=4000)
        if not np.all(np.isfinite(res)):
            raise NumericalError(f"non-finite quadrature on [{a}, {b}]",
                                 diagnostics={"interval": (a, b)})
        total += res
        error += float(err)
    total += _large_argument_tail(offsets, d)
    if error > _ABS_TOL:
        raise NumericalError("Green quadrature did not reach 1e-9", residual=error,
                             diagnostics={"d": d, "n_offsets": len(offsets)})
    return total, error


def green_exact(d, x):
    """G(0, x) by quadrature, absolute accuracy 1e-9."""
    d = check_dimension(d)
    x = np.asarray(x, dtype=np.int64).reshape(1, d)
    values, _ = green_quadrature(d, canonicalize(x))
    return float(values[0])


def green_asymptotic(d, x, form="shifted"):
    """Far-field approximation of G(0, x).

    ``form="shifted"`` is ``a_d (|x|_2 + 1)^{2-d}``; ``"leading"`` drops the
    shift, ``a_d |x|_2^{2-d}``; ``"corrected"`` adds the anisotropic
    ``|x|^{-d}`` term.  The shifted form is off by a relative O(1/|x|), so the
    hybrid kernel uses ``"corrected"``.
    """
    d = check_dimension(d)
    x = np.asarray(x, dtype=np.float64)
    r2 = (x ** 2).sum(axis=-1)
    r = np.sqrt(r2)
    a = asymptotic_coefficient(d)
    if form == "shifted":
        return a * (r + 1.0) ** (2 - d)
    if form == "leading":
        return a * r ** (2 - d)
    if form == "corrected":
        alpha, beta = _CORRECTION[d]
        q = (x ** 4).sum(axis=-1) / r2 ** 2
        return a * r ** (2 - d) * (1.0 + (alpha + beta * q) / r2)
    raise ValueError(f"unknown far-field form {form!r}; expected one of {FAR_FIELD_FORMS}")


def green_continuum(x, y):
    """Brownian Green function on R^3: 1 / (2 pi |x - y|)."""
    diff = np.asarray(x, dtype=np.float64) - np.asarray(y, dtype=np.float64)
    r = np.sqrt((diff ** 2).sum(axis=-1))
    if np.any(r == 0):
        raise ValueError("green_continuum is infinite on the diagonal; use a diagonal surrogate")
    return 1.0 / (2 * pi * r)


@dataclass(frozen=True, eq=False)
class GreenKernel:
    """Hybrid evaluator: quadrature table for ``|x|_inf <= crossover``, expansion beyond.

    Attributes
    ----------
    dimension, crossover : int
    table : ndarray
        Values on the non-negative orthant box, shape ``(crossover + 1,) * d``,
        indexed by absolute coordinates (filled for every permutation).
    far_field : str
        Expansion used outside the table.
    matching_tolerance : float
        Max relative gap between table and expansion on the shell ``|x|_inf = crossover``.
    """

    dimension: int
    crossover: int
    table: np.ndarray
    far_field: str = "corrected"
    matching_tolerance: float = float("nan")
    quadrature_error: float = 0.0
    metadata: dict = field(default_factory=dict)

    @property
    def coefficient(self):
        return asymptotic_coefficient(self.dimension)

    @property
    def origin_value(self):
        return float(self.table.flat[0])

    def _params(self):
        alpha, beta = _CORRECTION[self.dimension]
        return (np.ascontiguousarray(self.table.ravel()), np.int64(self.crossover),
                self.coefficient, alpha, beta, np.int64(FAR_FIELD_FORMS.index(self.far_field)))

    def __call__(self, x):
        return float(self.values(np.asarray(x).reshape(1, -1))[0])

    def values(self, diffs):
        """G(0, x) for each row of an ``(m, d)`` integer array."""
        diffs = np.ascontiguousarray(np.atleast_2d(diffs), dtype=np.int64)
        if diffs.shape[1] != self.dimension:
            raise ValueError(f"kernel is {self.dimension}-dimensional")
        out = np.empty(len(diffs))
        _values(diffs, out, *self._params())
        return out

    def matrix(self, sites):
        """Dense Green matrix ``G(x_i, x_j)`` over a site array."""
        sites = np.ascontiguousarray(sites, dtype=np.int64)
        return _build_matrix(sites, *self._params())

    def cross(self, points, sites):
        """``G(p_i, s_j)`` for query points against a site array."""
        points = np.ascontiguousarray(np.atleast_2d(points), dtype=np.int64)
        sites = np.ascontiguousarray(sites, dtype=np.int64)
        return _build_cross(points, sites, *self._params())

    def matvec_free(self, sites, x, out=None):
        """``G @ x`` without storing the matrix (kernel evaluated on demand)."""
        if out is None:
            out = np.empty(len(sites))
        _matvec_free(np.ascontiguousarray(sites, dtype=np.int64), x, out, *self._params())
        return out


def green(kernel, x):
    """Hybrid G(0, x): table inside the crossover box, ``kernel.far_field`` expansion outside."""
    return kernel(x)


@njit(inline="always")
def _pair_value(xi, xj, lut, r, amp, alpha, beta, form):
    d = xi.shape[0]
    inside = True
    idx = 0
    r2 = 0.0
    s4 = 0.0
    for k in range(d):
        a = abs(xi[k] - xj[k])
        if a > r:
            inside = False
        else:
            idx = idx * (r + 1) + a
        fa = float(a)
        r2 += fa * fa
        s4 += fa * fa * fa * fa
    if inside:
        return lut[idx]
    fr2 = r2
    if form == 0:
        return amp * (np.sqrt(fr2) + 1.0) ** (2 - d)
    lead = amp / np.sqrt(fr2) if d == 3 else amp / fr2
    if form == 1:
        return lead
    q = s4 / (fr2 * fr2)
    return lead * (1.0 + (alpha + beta * q) / fr2)


@njit(cache=True)
def _values(diffs, out, lut, r, amp, alpha, beta, form):
    zero = np.zeros(diffs.shape[1], dtype=np.int64)
    for i in range(diffs.shape[0]):
        out[i] = _pair_value(diffs[i], zero, lut, r, amp, alpha, beta, form)


@njit(parallel=True, cache=True)
def _build_matrix(sites, lut, r, amp, alpha, beta, form):
    n = sites.shape[0]
    m = np.empty((n, n))
    for i in prange(n):
        for j in range(n):
            m[i, j] = _pair_value(sites[i], sites[j], lut, r, amp, alpha, beta, form)
    return m


@njit(parallel=True, cache=True)
def _build_cross(points, sites, lut, r, amp, alpha, beta, form):
    m = np.empty((points.shape[0], sites.shape[0]))
    for i in prange(points.shape[0]):
        for j in range(sites.shape[0]):
            m[i, j] = _pair_value(points[i], sites[j], lut, r, amp, alpha, beta, form)
    return m


@njit(parallel=True, cache=True)
def _matvec_free(sites, x, out, lut, r, amp, alpha, beta, form):
    n = sites.shape[0]
    for i in prange(n):
        acc = 0.0
        for j in range(n):
            acc += _pair_value(sites[i], sites[j], lut, r, amp, alpha, beta, form) * x[j]
        out[i] = acc


def _fill_table(d, radius, offsets, values):
    table = np.empty((radius + 1,) * d)
    for off, v in zip(offsets, values):
        for perm in set(itertools.permutations(off.tolist())):
            table[perm] = v
    return table


def cache_dir():
    root = os.environ.get("SRWCAP_CACHE_DIR")
    return Path(root) if root else Path.home() / ".cache" / "srwcap"


def _cache_path(d, radius):
    return cache_dir() / f"green_d{d}_r{radius}_q{QUADRATURE_VERSION}.npz"


def compute_canonical_table(d, radius):
    """Quadrature over the canonical offsets of the box ``|x|_inf <= radius``."""
    offsets = canonical_offsets(d, radius)
    values, err = green_quadrature(d, offsets)
    return offsets, values, err


def build_kernel_table(d, crossover=None, far_field="corrected", use_cache=True):
    """Build (or load) the hybrid kernel for dimension ``d``.

    The canonical table is persisted as ``.npz`` keyed by
    ``(d, crossover, QUADRATURE_VERSION)``.
    """
    d = check_dimension(d)
    crossover = DEFAULT_CROSSOVER[d] if crossover is None else int(crossover)
    if crossover < 2:
        raise ValueError("crossover radius must be at least 2")
    if far_field not in FAR_FIELD_FORMS:
        raise ValueError(f"unknown far-field form {far_field!r}")
    path = _cache_path(d, crossover)
    loaded = False
    if use_cache and path.exists():
        with np.load(path) as f:
            if int(f["version"]) == QUADRATURE_VERSION:
                offsets, values, err = f["offsets"], f["values"], float(f["error"])
                loaded = True
    if not loaded:
        logger.info("computing Green table d=%d r*=%d", d, crossover)
        offsets, values, err = compute_canonical_table(d, crossover)
        if use_cache:
            path.parent.mkdir(parents=True, exist_ok=True)
            tmp = path.with_suffix(f".{os.getpid()}.tmp.npz")
            np.savez(tmp, offsets=offsets, values=values, error=err, version=QUADRATURE_VERSION)
            os.replace(tmp, path)
    table = _fill_table(d, crossover, offsets, values)
    shell = offsets[offsets[:, 0] == crossover]
    shell_exact = table[tuple(shell.T)]
    gap = np.abs(green_asymptotic(d, shell, form=far_field) - shell_exact) / shell_exact
    return GreenKernel(d, crossover, table, far_field=far_field,
                       matching_tolerance=float(gap.max()), quadrature_error=err,
                       metadata={"quadrature_version": QUADRATURE_VERSION,
                                 "n_canonical": len(offsets)})


@lru_cache(maxsize=None)
def default_kernel(d):
    """Process-wide kernel with the default crossover (30 for d=3, 20 for d=4)."""
    return build_kernel_table(d)


def check_kernel_sites(kernel, sites):
    return check_sites(sites, d=kernel.dimension)

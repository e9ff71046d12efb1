"""Simple random walks on Z^d, Brownian paths in R^3, ranges and entrance times.

All randomness flows through :class:`RngStream`, a counter-based Philox stream
keyed by ``(master seed, stream id)``.  A stream is a value: asking it for a
generator twice replays the same sequence, so replicas can be farmed out to
any number of workers without coordination.
"""
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from ._validation import check_dimension, check_nonnegative_int, check_positive_int, check_sites

MASK64 = (1 << 64) - 1

# field widths for stream_id packing: kind | d | n | replica
_KIND_BITS, _DIM_BITS, _N_BITS, _REP_BITS = 8, 4, 32, 20


@dataclass(frozen=True)
class RngStream:
    """A reproducible random stream.

    Parameters
    ----------
    master : int
        64-bit master seed.
    stream_id : int
        64-bit stream identifier.
    counter : int
        Philox counter at which the stream starts.
    """

    master: int
    stream_id: int
    counter: int = 0

    def generator(self):
        """Fresh ``numpy.random.Generator`` positioned at ``counter``."""
        key = np.array([self.master, self.stream_id], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key, counter=self.counter))

    def seed64(self):
        """First 64-bit word of the stream; seeds the compiled walk kernels."""
        return int(self.generator().integers(0, 1 << 63, dtype=np.int64))

    def substream(self, index):
        """Stream keyed by a hash of this stream and ``index``.

        Used for nested splits (e.g. one stream per site inside an estimator).
        """
        ss = np.random.SeedSequence([self.master, self.stream_id, self.counter, int(index)])
        master, sid = ss.generate_state(2, dtype=np.uint64)
        return RngStream(int(master), int(sid))


def derive_stream(master, stream_id):
    """Deterministic stream for ``(master, stream_id)``.

    Distinct pairs map to distinct Philox keys, so derivation is collision
    free and does not depend on evaluation order.
    """
    master, stream_id = int(master), int(stream_id)
    for name, v in (("master", master), ("stream_id", stream_id)):
        if not 0 <= v <= MASK64:
            raise ValueError(f"{name} must fit in an unsigned 64-bit integer, got {v}")
    return RngStream(master, stream_id)


def replica_stream_id(kind, d, n, replica):
    """Pack experiment coordinates into a 64-bit stream id."""
    fields = ((kind, _KIND_BITS), (d, _DIM_BITS), (n, _N_BITS), (replica, _REP_BITS))
    sid = 0
    for value, bits in fields:
        if not 0 <= value < (1 << bits):
            raise ValueError(f"stream field {value} does not fit in {bits} bits")
        sid = (sid << bits) | int(value)
    return sid


def unit_steps(d):
    """The 2d nearest-neighbour steps, ordered +e_1, -e_1, +e_2, ..."""
    eye = np.eye(d, dtype=np.int64)
    out = np.empty((2 * d, d), dtype=np.int64)
    out[0::2] = eye
    out[1::2] = -eye
    return out


def norm1(x):
    return np.abs(np.asarray(x)).sum(axis=-1)


def norm2(x):
    return np.sqrt((np.asarray(x, dtype=np.float64) ** 2).sum(axis=-1))


def norm_inf(x):
    return np.abs(np.asarray(x)).max(axis=-1)


def _frozen(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Trajectory:
    """A sampled walk or Brownian path.

    ``points`` has shape ``(n_steps + 1, dimension)``; int64 for lattice walks,
    float64 for Brownian paths (which also carry their time step ``dt``).
    """

    points: np.ndarray
    dt: float = None
    stream: RngStream = None

    def __post_init__(self):
        object.__setattr__(self, "points", _frozen(self.points))

    @property
    def dimension(self):
        return self.points.shape[1]

    @property
    def n_steps(self):
        return self.points.shape[0] - 1

    @property
    def is_lattice(self):
        return self.points.dtype.kind == "i"

    @property
    def horizon(self):
        return None if self.dt is None else self.dt * self.n_steps


def simulate_srw(d, n, stream):
    """Simple random walk of ``n`` steps on Z^d started at the origin."""
    d = check_dimension(d)
    n = check_nonnegative_int(n, "n")
    dirs = stream.generator().integers(0, 2 * d, size=n)
    points = np.zeros((n + 1, d), dtype=np.int64)
    np.cumsum(unit_steps(d)[dirs], axis=0, out=points[1:])
    return Trajectory(points, stream=stream)


def simulate_bm(n_steps, stream, horizon=1.0):
    """Three dimensional Brownian path on ``[0, horizon]`` at ``n_steps`` uniform times.

    Increments are ``standard_normal * sqrt(horizon / n_steps)``; the normal
    draws come from numpy's ziggurat sampler fed by the Philox stream, so a
    path is bit-reproducible from its stream.
    """
    n_steps = check_positive_int(n_steps, "n_steps")
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    dt = horizon / n_steps
    inc = stream.generator().standard_normal((n_steps, 3)) * np.sqrt(dt)
    points = np.zeros((n_steps + 1, 3))
    np.cumsum(inc, axis=0, out=points[1:])
    return Trajectory(points, dt=dt, stream=stream)


def _row_view(a):
    a = np.ascontiguousarray(a, dtype=np.int64)
    return a.view(np.dtype((np.void, a.dtype.itemsize * a.shape[1]))).ravel()


@dataclass(frozen=True, eq=False)
class RangeSet:
    """Distinct sites of a lattice walk, in first-visit order."""

    sites: np.ndarray
    trajectory: Trajectory = None

    def __post_init__(self):
        object.__setattr__(self, "sites", _frozen(self.sites))

    @classmethod
    def from_sites(cls, sites, d=None):
        """Deduplicate an arbitrary site list, keeping first occurrences in order."""
        sites = check_sites(sites, d=d, allow_empty=True)
        if len(sites) == 0:
            return cls(sites)
        _, first = np.unique(sites, axis=0, return_index=True)
        return cls(sites[np.sort(first)])

    @property
    def count(self):
        return self.sites.shape[0]

    def __len__(self):
        return self.count

    @property
    def dimension(self):
        return self.sites.shape[1]

    @cached_property
    def bounding_radius(self):
        """max ||x||_inf over the sites (0 for the empty set)."""
        return int(np.abs(self.sites).max()) if self.count else 0

    @cached_property
    def _keys(self):
        return frozenset(map(tuple, self.sites.tolist()))

    @cached_property
    def _sorted_rows(self):
        return np.sort(_row_view(self.sites))

    def __contains__(self, point):
        return tuple(int(c) for c in point) in self._keys

    def contains(self, points):
        """Vectorised membership for an ``(m, d)`` array of points."""
        points = np.asarray(points, dtype=np.int64).reshape(-1, self.dimension)
        if self.count == 0:
            return np.zeros(len(points), dtype=bool)
        return np.isin(_row_view(points), self._sorted_rows, assume_unique=False)

    def translate(self, v):
        return RangeSet(self.sites + np.asarray(v, dtype=np.int64))


def build_range(t):
    """Range ``X[0, n]`` of a lattice trajectory, first-visit ordered."""
    if not t.is_lattice:
        raise ValueError("build_range needs a lattice trajectory")
    _, first = np.unique(t.points, axis=0, return_index=True)
    return RangeSet(t.points[np.sort(first)], trajectory=t)


def first_entrance(t, F):
    """Least ``n >= 0`` with ``X_n`` in ``F``, or ``None``."""
    hit = F.contains(t.points)
    return int(np.argmax(hit)) if hit.any() else None


def hitting_time(t, F):
    """Least ``n >= 1`` with ``X_n`` in ``F``, or ``None``."""
    hit = F.contains(t.points[1:])
    return int(np.argmax(hit)) + 1 if hit.any() else None

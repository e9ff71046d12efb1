"""Compiled Monte-Carlo walkers.

Every trial owns a counter-based SplitMix64 sequence keyed by
``(seed, trial index)``, so outcomes do not depend on how trials are split
over threads.  Directions are drawn with the multiply-shift map
``(u32 * 2d) >> 32`` on 32-bit halves of each word (bias < 2^-29).
"""
import numpy as np
from numba import njit, prange

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_LO32 = np.uint64(0xFFFFFFFF)

HIT, EXIT, TIMEOUT = 1, 0, 2


@njit(inline="always")
def _mix64(z):
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


@njit(inline="always")
def _trial_state(seed, trial):
    return _mix64(np.uint64(seed) ^ _mix64(np.uint64(trial) * _GAMMA + _GAMMA))


class SiteGrid:
    """Dense occupancy grid over the bounding box of a finite site set.

    ``values`` holds ``label + 1`` at each site (0 elsewhere), where the label
    is supplied by the caller (site index, visit time, ...).
    """

    MAX_CELLS = 1 << 27

    def __init__(self, sites, labels=None):
        sites = np.asarray(sites, dtype=np.int64)
        self.lo = sites.min(axis=0)
        self.shape = sites.max(axis=0) - self.lo + 1
        cells = int(np.prod(self.shape))
        if cells > self.MAX_CELLS:
            raise ValueError(f"bounding box of {cells} cells is too large for a dense grid")
        d = sites.shape[1]
        self.strides = np.ones(d, dtype=np.int64)
        for k in range(d - 2, -1, -1):
            self.strides[k] = self.strides[k + 1] * self.shape[k + 1]
        if labels is None:
            labels = np.arange(len(sites))
        self.values = np.zeros(cells, dtype=np.int32)
        flat = ((sites - self.lo) * self.strides).sum(axis=1)
        # first occurrence wins
        order = np.arange(len(sites))[::-1]
        self.values[flat[order]] = np.asarray(labels, dtype=np.int32)[order] + 1


@njit(inline="always")
def _lookup(pos, lo, shape, strides, values):
    idx = 0
    for k in range(pos.shape[0]):
        c = pos[k] - lo[k]
        if c < 0 or c >= shape[k]:
            return 0
        idx += c * strides[k]
    return values[idx]


@njit(parallel=True, cache=True)
def hit_or_exit_counts(start, skip_start, lo, shape, strides, values,
                       center, exit_r2, max_steps, seed, trial_offset, trials):
    """Run ``trials`` walks from ``start`` until they meet the grid set,
    leave the Euclidean ball ``|x - center|^2 > exit_r2`` or exceed
    ``max_steps`` (0 = no limit).  Returns (hits, exits, timeouts).

    With ``skip_start`` the step-0 position is not tested (hitting time
    ``tau^+``); otherwise it is (first entrance ``tau``).
    """
    d = start.shape[0]
    nd = np.uint64(2 * d)
    hits = 0
    exits = 0
    timeouts = 0
    for t in prange(trials):
        pos = start.copy()
        r2 = 0
        for k in range(d):
            r2 += (pos[k] - center[k]) * (pos[k] - center[k])
        outcome = -1
        if not skip_start and _lookup(pos, lo, shape, strides, values) > 0:
            outcome = HIT
        state = _trial_state(seed, trial_offset + t)
        steps = 0
        word = np.uint64(0)
        half = 0
        while outcome < 0:
            if half == 0:
                state += _GAMMA
                word = _mix64(state)
                u = word & _LO32
                half = 1
            else:
                u = word >> np.uint64(32)
                half = 0
            dr = np.int64((u * nd) >> np.uint64(32))
            k = dr >> 1
            s = 1 - 2 * (dr & 1)
            r2 += 2 * s * (pos[k] - center[k]) + 1
            pos[k] += s
            steps += 1
            if _lookup(pos, lo, shape, strides, values) > 0:
                outcome = HIT
            elif r2 > exit_r2:
                outcome = EXIT
            elif max_steps > 0 and steps >= max_steps:
                outcome = TIMEOUT
        if outcome == HIT:
            hits += 1
        elif outcome == EXIT:
            exits += 1
        else:
            timeouts += 1
    return hits, exits, timeouts


@njit(parallel=True, cache=True)
def first_label_hit(starts, lo, shape, strides, values, center, exit_r2, seed, trial_offset):
    """For each start run a walk until it leaves the ball ``exit_r2`` and
    return the smallest label met along the way (-1 when the set is missed).

    Used for the rare-event first-intersection diagnostic: labels are the
    visit times of another walk's range.
    """
    n_trials, d = starts.shape
    nd = np.uint64(2 * d)
    out = np.full(n_trials, -1, dtype=np.int64)
    for t in prange(n_trials):
        pos = starts[t].copy()
        r2 = 0
        for k in range(d):
            r2 += (pos[k] - center[k]) * (pos[k] - center[k])
        best = np.int64(-1)
        v = _lookup(pos, lo, shape, strides, values)
        if v > 0:
            best = v - 1
        state = _trial_state(seed, trial_offset + t)
        word = np.uint64(0)
        half = 0
        while r2 <= exit_r2 and best != 0:
            if half == 0:
                state += _GAMMA
                word = _mix64(state)
                u = word & _LO32
                half = 1
            else:
                u = word >> np.uint64(32)
                half = 0
            dr = np.int64((u * nd) >> np.uint64(32))
            k = dr >> 1
            s = 1 - 2 * (dr & 1)
            r2 += 2 * s * (pos[k] - center[k]) + 1
            pos[k] += s
            v = _lookup(pos, lo, shape, strides, values)
            if v > 0 and (best < 0 or v - 1 < best):
                best = v - 1
        out[t] = best
    return out


def run_hit_or_exit(grid, start, *, skip_start, center, exit_radius, seed,
                    trials, max_steps=0, trial_offset=0):
    """Python front end for :func:`hit_or_exit_counts`."""
    start = np.ascontiguousarray(start, dtype=np.int64)
    center = np.ascontiguousarray(center, dtype=np.int64)
    exit_r2 = np.int64(np.floor(float(exit_radius) ** 2)) if np.isfinite(exit_radius) \
        else np.iinfo(np.int64).max
    return hit_or_exit_counts(start, bool(skip_start), grid.lo, grid.shape, grid.strides,
                              grid.values, center, exit_r2, np.int64(max_steps),
                              np.uint64(seed), np.int64(trial_offset), np.int64(trials))

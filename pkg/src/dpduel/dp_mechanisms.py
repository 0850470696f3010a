"""Differential-privacy primitives: Laplace sampling and binary-tree counters.

The counter releases running prefix sums of a bounded stream under pure
epsilon-DP.  Exact partial sums live on the nodes of a complete binary tree
over stream positions; each released prefix sum is the exact total over the
canonical dyadic decomposition of ``[1, t]`` plus one fixed Laplace draw per
node on that decomposition.  All node noise is drawn up front from the seed
alone, so the noise multiset depends only on ``(seed, capacity, epsilon)``
and never on the appended data.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = [
    "CapacityError",
    "BinTreeCounter",
    "LaplaceSampler",
    "bintree_error_bound",
    "laplace_inverse_cdf",
    "laplace_sample",
    "node_noise_scale",
]

_U_FLOOR = 2.0**-53


class CapacityError(RuntimeError):
    """A counter received more appends than its fixed capacity."""


def laplace_inverse_cdf(u, scale):
    """Map a uniform draw ``u`` in (0, 1) to a Laplace(0, scale) quantile.

    The median ``u = 0.5`` maps to exactly 0.0, which doubles as the hook
    for noise-free checks.
    """
    if scale <= 0:
        raise ValueError(f"scale must be positive, got {scale}")
    if not 0.0 < u < 1.0:
        raise ValueError(f"u must lie strictly inside (0, 1), got {u}")
    if u < 0.5:
        return scale * math.log(2.0 * u)
    return -scale * math.log(2.0 * (1.0 - u))


def laplace_sample(scale, rng):
    """One Laplace(0, scale) draw, consuming a single uniform from ``rng``."""
    if scale <= 0:
        raise ValueError(f"scale must be positive, got {scale}")
    u = rng.random()
    if u < _U_FLOOR:
        u = _U_FLOOR
    return laplace_inverse_cdf(u, scale)


class LaplaceSampler:
    """Seeded stream of independent Laplace(0, scale) draws."""

    def __init__(self, scale, seed=0):
        if scale <= 0:
            raise ValueError(f"scale must be positive, got {scale}")
        self.scale = float(scale)
        self.rng = np.random.default_rng(seed)

    def sample(self):
        return laplace_sample(self.scale, self.rng)

    def sample_many(self, size):
        u = self.rng.random(size)
        np.clip(u, _U_FLOOR, 1.0 - _U_FLOOR, out=u)
        return np.where(u < 0.5, np.log(2.0 * u), -np.log(2.0 * (1.0 - u))) * self.scale


def _ceil_log2(n):
    # exact integer ceil(log2 n) for n >= 1
    return (int(n) - 1).bit_length()


def node_noise_scale(capacity, epsilon):
    """Per-node Laplace scale for a counter of the given capacity.

    Each stream element touches at most ``ceil(log2 capacity) + 1`` nodes, so
    splitting the budget evenly over the tree levels gives scale
    ``ceil(log2 capacity) / epsilon`` (floored at ``1/epsilon`` for the
    degenerate one-element tree).
    """
    if capacity < 1:
        raise ValueError(f"capacity must be at least 1, got {capacity}")
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    return max(1, _ceil_log2(capacity)) / epsilon


def bintree_error_bound(capacity, epsilon, delta):
    """High-probability additive error of a released prefix sum.

    With probability at least ``1 - delta`` every released value is within
    ``4 * ln(1/delta) * log2(capacity)**2.5 / epsilon`` of the true prefix
    sum.
    """
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    return 4.0 * math.log(1.0 / delta) * math.log2(capacity) ** 2.5 / epsilon


class BinTreeCounter:
    """Epsilon-DP running-sum estimator over a stream of values in [-1, 1].

    Supports negative appends so a caller can retract earlier +1 events; the
    sensitivity argument is unchanged as long as every appended value has
    magnitude at most 1.  ``noiseless=True`` zeroes all node noise, turning
    the counter into an exact prefix-sum oracle for tests.
    """

    def __init__(self, capacity, epsilon, seed=0, noiseless=False):
        if int(capacity) != capacity or capacity < 1:
            raise ValueError(f"capacity must be a positive integer, got {capacity}")
        if epsilon <= 0:
            raise ValueError(f"epsilon must be positive, got {epsilon}")
        self.capacity = int(capacity)
        self.epsilon = float(epsilon)
        self.noiseless = bool(noiseless)
        self.node_noise_scale = node_noise_scale(self.capacity, self.epsilon)
        leaves = 1
        while leaves < self.capacity:
            leaves <<= 1
        self._leaves = leaves
        n_nodes = 2 * leaves
        self._sums = [0.0] * n_nodes
        if noiseless:
            self._noise = [0.0] * n_nodes
        else:
            rng = np.random.default_rng(seed)
            u = rng.random(n_nodes)
            np.clip(u, _U_FLOOR, 1.0 - _U_FLOOR, out=u)
            noise = np.where(u < 0.5, np.log(2.0 * u), -np.log(2.0 * (1.0 - u)))
            noise *= self.node_noise_scale
            self._noise = noise.tolist()
        self.position = 0

    def append(self, value):
        """Insert the next stream element; |value| must not exceed 1."""
        if self.position >= self.capacity:
            raise CapacityError(
                f"counter is full: capacity {self.capacity} reached"
            )
        v = float(value)
        if not -1.0 <= v <= 1.0:
            raise ValueError(f"appended value must lie in [-1, 1], got {value}")
        self.position += 1
        i = self._leaves + self.position - 1
        sums = self._sums
        while i:
            sums[i] += v
            i >>= 1

    def estimate(self, position=None):
        """Private prefix-sum estimate at ``position`` (default: current).

        Deterministic given the counter state: repeated calls at the same
        position return the same value.
        """
        t = self.position if position is None else position
        if not 0 <= t <= self.position:
            raise ValueError(f"position must lie in [0, {self.position}], got {position}")
        sums = self._sums
        noise = self._noise
        leaves = self._leaves
        total = 0.0
        s = 0
        while s < t:
            length = 1 << ((t - s).bit_length() - 1)
            node = (s + leaves) // length
            total += sums[node] + noise[node]
            s += length
        return total

    def exact_sum(self, position=None):
        """Noiseless reconstruction of the prefix sum (for bookkeeping checks)."""
        t = self.position if position is None else position
        if not 0 <= t <= self.position:
            raise ValueError(f"position must lie in [0, {self.position}], got {position}")
        sums = self._sums
        leaves = self._leaves
        total = 0.0
        s = 0
        while s < t:
            length = 1 << ((t - s).bit_length() - 1)
            total += sums[(s + leaves) // length]
            s += length
        return total

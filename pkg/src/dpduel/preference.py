"""Utility-based preference model: duel environments, Borda scores, regret.

Arms carry latent rewards (either raw scalars or ``w . x`` for feature
vectors); the probability that arm ``a`` beats arm ``b`` in a duel is the
logistic link applied to the reward difference.  Every induced preference
matrix has a total order, strong stochastic transitivity and the stochastic
triangle inequality, which the checkers below verify exhaustively.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import expit

__all__ = [
    "MatrixEnvironment",
    "PreferenceMatrix",
    "RegretLedger",
    "UtilityEnvironment",
    "borda_gap_properties",
    "borda_score",
    "logit",
    "lower_bound_instance",
    "lower_bound_surrogate_rewards",
    "sigmoid",
    "transitivity_holds",
]

_NORM_TOL = 1e-9


def sigmoid(u):
    """Logistic link 1 / (1 + exp(-u)); accepts scalars or arrays."""
    return expit(u)


def logit(p):
    """Inverse of the logistic link."""
    p = np.asarray(p, dtype=float)
    out = np.log(p / (1.0 - p))
    return float(out) if out.ndim == 0 else out


class PreferenceMatrix:
    """Pairwise win-probability matrix with P[i, j] + P[j, i] = 1."""

    def __init__(self, p, validate=True):
        p = np.array(p, dtype=float)
        if p.ndim != 2 or p.shape[0] != p.shape[1]:
            raise ValueError(f"preference matrix must be square, got shape {p.shape}")
        if validate:
            if np.any(p < -1e-12) or np.any(p > 1.0 + 1e-12):
                raise ValueError("preference probabilities must lie in [0, 1]")
            if np.max(np.abs(np.diag(p) - 0.5)) > 1e-9:
                raise ValueError("diagonal entries must equal 1/2")
            if np.max(np.abs(p + p.T - 1.0)) > 1e-9:
                raise ValueError("matrix must satisfy P[i, j] + P[j, i] = 1")
        self.p = p

    @classmethod
    def from_rewards(cls, rewards):
        r = np.asarray(rewards, dtype=float)
        if r.ndim != 1:
            raise ValueError("rewards must be a 1-d array")
        return cls(expit(r[:, None] - r[None, :]), validate=False)

    @property
    def num_arms(self):
        return self.p.shape[0]

    def gap(self, i, j):
        """Preference margin of arm i over arm j: P(i, j) - 1/2."""
        return float(self.p[i, j] - 0.5)

    def ranking(self):
        """Arms from best to worst in the induced total order (ties: lowest index)."""
        row = self.p.sum(axis=1)
        return sorted(range(self.num_arms), key=lambda i: (-row[i], i))

    def best_arm(self):
        return self.ranking()[0]


def _as_matrix(p):
    if isinstance(p, PreferenceMatrix):
        return p
    return PreferenceMatrix(p)


def borda_score(p, subset, arm):
    """Average win probability of ``arm`` against a uniformly random member of ``subset``."""
    m = _as_matrix(p)
    members = list(subset)
    if not members:
        raise ValueError("subset must be nonempty")
    if arm not in members:
        raise ValueError(f"arm {arm} is not a member of the subset")
    return float(m.p[arm, members].mean())


def borda_gap_properties(p, subset, factor=2.0, tol=1e-12):
    """Check the two separation properties of subset-restricted Borda scores.

    With ``best`` and ``worst`` the extreme members of ``subset`` under the
    total order and ``gap = P(best, worst) - 1/2``:

    * property 1: ``B(best) - B(worst) >= gap``;
    * property 2: ``B(j) - B(worst) <= factor * gap`` for every ``j != best``.

    The coefficient of property 2 is configurable because the guaranteed
    version carries ``factor=2``; ``factor=1`` frequently holds but is not
    implied by transitivity alone.  Returns ``(prop1_holds, prop2_holds)``.
    """
    m = _as_matrix(p)
    members = list(subset)
    if not members:
        raise ValueError("subset must be nonempty")
    pos = {arm: k for k, arm in enumerate(m.ranking())}
    best = min(members, key=lambda i: pos[i])
    worst = max(members, key=lambda i: pos[i])
    scores = {i: float(m.p[i, members].mean()) for i in members}
    gap = m.gap(best, worst)
    prop1 = scores[best] - scores[worst] >= gap - tol
    prop2 = all(
        scores[j] - scores[worst] <= factor * gap + tol
        for j in members
        if j != best
    )
    return prop1, prop2


def transitivity_holds(p, tol=1e-12):
    """Exhaustive strong-stochastic-transitivity and triangle-inequality check.

    Over all ordered triples (i, j, k) with nonnegative margins
    ``d(i,j) >= 0`` and ``d(j,k) >= 0``:  SST requires
    ``d(i,k) >= max(d(i,j), d(j,k))`` and STI requires
    ``d(i,k) <= d(i,j) + d(j,k)``.  Returns ``(sst_holds, sti_holds)``.
    """
    m = _as_matrix(p)
    d = m.p - 0.5
    dij = d[:, :, None]
    djk = d[None, :, :]
    dik = d[:, None, :]
    mask = (dij >= 0.0) & (djk >= 0.0)
    sst = not np.any(mask & (dik < np.maximum(dij, djk) - tol))
    sti = not np.any(mask & (dik > dij + djk + tol))
    return sst, sti


def lower_bound_instance(num_arms):
    """Constant-gap hard instance: arm 1 beats everyone with probability 3/4.

    All other pairs are even coin flips, so every suboptimal arm has
    preference gap exactly 1/4 against the best arm.
    """
    if int(num_arms) != num_arms or num_arms < 2:
        raise ValueError(f"need at least 2 arms, got {num_arms}")
    k = int(num_arms)
    p = np.full((k, k), 0.5)
    p[0, 1:] = 0.75
    p[1:, 0] = 0.25
    return PreferenceMatrix(p)


def lower_bound_surrogate_rewards(num_arms):
    """Closest utility realization of the constant-gap instance.

    Reward ``ln 3`` for the best arm and 0 elsewhere reproduces the 3/4
    first-row probabilities; the off-best entries become sigmoid(0) = 1/2,
    matching the raw matrix exactly.
    """
    if int(num_arms) != num_arms or num_arms < 2:
        raise ValueError(f"need at least 2 arms, got {num_arms}")
    r = np.zeros(int(num_arms))
    r[0] = math.log(3.0)
    return r


class RegretLedger:
    """Accumulates instantaneous regret, optionally keeping the full trajectory."""

    def __init__(self, best_reward=0.0, record_per_round=False):
        self.best_reward = float(best_reward)
        self.cumulative = 0.0
        self.rounds = 0
        self.per_round = [] if record_per_round else None

    def charge(self, increment, count=1):
        self.cumulative += increment * count
        self.rounds += count
        if self.per_round is not None:
            if count == 1:
                self.per_round.append(increment)
            else:
                self.per_round.extend([increment] * count)


class UtilityEnvironment:
    """Ground-truth environment answering duels from latent rewards.

    Construct either from feature vectors and a weight vector (both confined
    to the unit ball) or from raw scalar rewards via :meth:`from_rewards`.
    Every duel consumes exactly one uniform draw from the environment RNG and
    charges ``2 r(best) - r(a) - r(b)`` to the ledger.
    """

    def __init__(self, weights, arms, seed=0, record_per_round=False):
        weights = np.asarray(weights, dtype=float)
        arms = np.asarray(arms, dtype=float)
        if arms.ndim != 2:
            raise ValueError("arms must be a 2-d array, one arm per row")
        if weights.shape != (arms.shape[1],):
            raise ValueError(
                f"weight vector of length {weights.shape} does not match arm dimension {arms.shape[1]}"
            )
        if np.linalg.norm(weights) > 1.0 + _NORM_TOL:
            raise ValueError("weight vector must lie in the unit ball")
        norms = np.linalg.norm(arms, axis=1)
        if np.any(norms > 1.0 + _NORM_TOL):
            raise ValueError("every arm must lie in the unit ball")
        self.weights = weights
        self.arms = arms
        self._init_rewards(arms @ weights, seed, record_per_round)

    @classmethod
    def from_rewards(cls, rewards, seed=0, record_per_round=False):
        """Finite-arm environment with abstract arms carrying raw rewards."""
        env = cls.__new__(cls)
        env.weights = None
        env.arms = None
        env._init_rewards(np.asarray(rewards, dtype=float), seed, record_per_round)
        return env

    def _init_rewards(self, rewards, seed, record_per_round):
        if rewards.ndim != 1 or rewards.size == 0:
            raise ValueError("need a nonempty 1-d reward vector")
        if not np.all(np.isfinite(rewards)):
            raise ValueError("rewards must be finite")
        self.rewards = rewards
        self._r = rewards.tolist()
        self.best_arm = int(np.argmax(rewards))
        self.best_reward = float(rewards[self.best_arm])
        self.rng = np.random.default_rng(seed)
        self.ledger = RegretLedger(self.best_reward, record_per_round)
        self._two_best = 2.0 * self.best_reward

    @property
    def num_arms(self):
        return len(self._r)

    @property
    def dim(self):
        return None if self.arms is None else self.arms.shape[1]

    def _win_probability(self, a, b):
        diff = self._r[b] - self._r[a]
        if diff > 700.0:
            return 0.0
        return 1.0 / (1.0 + math.exp(diff))

    def _check_arm(self, a):
        if not 0 <= a < len(self._r):
            raise ValueError(f"unknown arm index {a}")

    def pair_regret(self, a, b):
        return self._two_best - self._r[a] - self._r[b]

    def duel(self, a, b):
        """Play (a, b); return 1 if a wins.  Consumes one RNG draw."""
        self._check_arm(a)
        self._check_arm(b)
        o = 1 if self.rng.random() < self._win_probability(a, b) else 0
        self.ledger.charge(self._two_best - self._r[a] - self._r[b])
        return o

    def duel_many(self, a, b, count):
        """Play (a, b) ``count`` times; return the win count of a (one RNG draw)."""
        self._check_arm(a)
        self._check_arm(b)
        if count < 0:
            raise ValueError("count must be nonnegative")
        if count == 0:
            return 0
        wins = int(self.rng.binomial(count, self._win_probability(a, b)))
        self.ledger.charge(self._two_best - self._r[a] - self._r[b], count)
        return wins

    def play_committed(self, arm, count):
        """Charge ``count`` rounds of the self-duel (arm, arm) without sampling."""
        self._check_arm(arm)
        if count > 0:
            self.ledger.charge(self._two_best - 2.0 * self._r[arm], count)

    def preference_matrix(self):
        return PreferenceMatrix.from_rewards(self.rewards)


class MatrixEnvironment:
    """Duel environment driven by a raw preference matrix.

    No latent rewards exist here, so regret is charged in preference units:
    each round costs ``gap(best, a) + gap(best, b)``.
    """

    def __init__(self, matrix, seed=0, record_per_round=False):
        self.matrix = _as_matrix(matrix)
        self._p = self.matrix.p.tolist()
        self.best_arm = self.matrix.best_arm()
        gaps = self.matrix.p[self.best_arm] - 0.5
        self._gap = gaps.tolist()
        self.best_reward = 0.0
        self.rng = np.random.default_rng(seed)
        self.ledger = RegretLedger(0.0, record_per_round)
        self.arms = None
        self.weights = None

    @property
    def num_arms(self):
        return len(self._p)

    @property
    def dim(self):
        return None

    def _check_arm(self, a):
        if not 0 <= a < len(self._p):
            raise ValueError(f"unknown arm index {a}")

    def pair_regret(self, a, b):
        return self._gap[a] + self._gap[b]

    def duel(self, a, b):
        self._check_arm(a)
        self._check_arm(b)
        o = 1 if self.rng.random() < self._p[a][b] else 0
        self.ledger.charge(self._gap[a] + self._gap[b])
        return o

    def duel_many(self, a, b, count):
        self._check_arm(a)
        self._check_arm(b)
        if count < 0:
            raise ValueError("count must be nonnegative")
        if count == 0:
            return 0
        wins = int(self.rng.binomial(count, self._p[a][b]))
        self.ledger.charge(self._gap[a] + self._gap[b], count)
        return wins

    def play_committed(self, arm, count):
        self._check_arm(arm)
        if count > 0:
            self.ledger.charge(2.0 * self._gap[arm], count)

    def preference_matrix(self):
        return self.matrix

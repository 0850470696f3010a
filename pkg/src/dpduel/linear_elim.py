"""Phased elimination over vector arms with private logistic estimation.

Each phase solves a design over the active arms' pairwise differences, plays
every core pair a budgeted number of times, privatizes the per-pair win
totals with Laplace noise, fits the weight vector by maximum likelihood on
the privatized aggregates, and drops arms whose estimated score falls more
than twice the phase accuracy below the leader.  The accuracy target halves
each phase; a singleton active set commits for the remaining rounds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dp_mechanisms import laplace_sample
from .optimal_design import build_eps_net, design_for_phase
from .preference import sigmoid

__all__ = [
    "EstimationError",
    "LinearRunResult",
    "PhaseRecord",
    "PrivateAggregate",
    "LOGISTIC_CURVATURE_BOUND",
    "LOGISTIC_NOISE_SUBGAUSSIAN",
    "compute_kappa",
    "eliminate_linear",
    "exploration_budget",
    "phase_budget",
    "phase_count_bound",
    "private_mle",
    "run_linear",
    "sigmoid_slope",
]

# Bernoulli duel noise is bounded, hence sub-Gaussian with this parameter.
LOGISTIC_NOISE_SUBGAUSSIAN = 0.5
# The logistic link's second derivative never exceeds this in magnitude.
LOGISTIC_CURVATURE_BOUND = 0.25


class EstimationError(RuntimeError):
    """The likelihood solve failed; carries diagnostic details."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


def sigmoid_slope(u):
    """First derivative of the logistic link."""
    s = sigmoid(u)
    return s * (1.0 - s)


def compute_kappa(w_norm_bound=1.0):
    """Smallest logistic slope over the feasible score-difference range.

    Duel differences have norm at most 2 and the estimate is kept within
    distance 1 of a weight vector of norm at most ``w_norm_bound``, so the
    link argument is confined to ``[-2 (w_norm_bound + 1), 2 (w_norm_bound + 1)]``;
    the slope is even and decreasing in |u|, so the infimum sits at the
    boundary.
    """
    if w_norm_bound < 0:
        raise ValueError(f"w_norm_bound must be nonnegative, got {w_norm_bound}")
    return float(sigmoid_slope(2.0 * (w_norm_bound + 1.0)))


def exploration_budget(dim, horizon, conf_delta, kappa, c1=1.0, c2=1.0):
    """Per-phase exploration length ensuring a well-conditioned info matrix."""
    d = float(dim)
    return (
        2.0 * (c1 * d * math.sqrt(d) + c2 * d * math.sqrt(math.log(1.0 / conf_delta))) ** 2
        + 16.0 * d * (d * d + math.log(horizon / conf_delta)) / kappa**4
    )


def phase_budget(design, xi, dim, horizon, conf_delta, kappa, epsilon, budget_scale=1.0):
    """Duel counts for every core-set pair of the given phase design.

    The bracketed scalar is rounded up once, scaled, distributed by the
    design weights, and rounded up per pair so every core pair is played at
    least once.  Returns a list of counts aligned with ``design.atoms``.
    """
    if not 0.0 < xi <= 1.0:
        raise ValueError(f"xi must lie in (0, 1], got {xi}")
    d = float(dim)
    bracket = (
        16.0 * d**5 * math.log(d * horizon / conf_delta) / (kappa * epsilon * xi)
        + 64.0 * d * math.log(horizon / conf_delta) / (kappa**2 * xi**2)
    )
    inner = math.ceil(bracket)
    return [int(math.ceil(inner * budget_scale * w)) for w in design.weights]


def phase_count_bound(horizon, kappa, dim):
    """Upper bound on how many phases a run may use."""
    return math.log2(horizon * kappa**2 / dim) / 2.0 + 1.0


@dataclass
class PrivateAggregate:
    """Laplace-privatized win total for one core-set pair."""

    pair: tuple
    z: np.ndarray
    raw_sum: int
    noise: float

    @property
    def value(self):
        return self.raw_sum + self.noise


def private_mle(aggregates, duel_log, dim, regularization=1e-8, w_norm_bound=1.0,
                tol_scale=1e-8, max_iters=100):
    """Weight estimate solving the privatized likelihood stationarity condition.

    Minimizes the convex surrogate whose gradient is
    ``sum_t sigma(z_t . w) z_t - sum_pairs value(pair) z_pair`` by damped
    Newton; the Jacobian regularization only conditions the solve and leaves
    the fixed point untouched.  Estimates escaping the ball of radius
    ``w_norm_bound + 1`` are projected back onto it.
    """
    if not duel_log:
        raise ValueError("duel log must be nonempty")
    z = np.array([entry[0] for entry in duel_log], dtype=float)
    counts = np.array([entry[1] for entry in duel_log], dtype=float)
    lhs = np.zeros(dim)
    for agg in aggregates:
        lhs += agg.value * np.asarray(agg.z, dtype=float)
    lhs_norm = float(np.linalg.norm(lhs))
    tol = tol_scale * (1.0 + lhs_norm)

    def objective(w):
        u = z @ w
        return float(np.sum(counts * np.logaddexp(0.0, u)) - lhs @ w)

    w = np.zeros(dim)
    f = objective(w)
    for _ in range(max_iters):
        u = z @ w
        s = sigmoid(u)
        grad = z.T @ (counts * s) - lhs
        if np.linalg.norm(grad) <= tol:
            break
        hess = z.T @ ((counts * s * (1.0 - s))[:, None] * z)
        hess[np.diag_indices(dim)] += regularization
        try:
            step = np.linalg.solve(hess, -grad)
        except np.linalg.LinAlgError as exc:
            raise EstimationError(
                "likelihood Jacobian is numerically singular",
                {"gradient_norm": float(np.linalg.norm(grad)), "iterate": w.copy()},
            ) from exc
        alpha = 1.0
        descent = float(grad @ step)
        for _ in range(40):
            trial = w + alpha * step
            f_trial = objective(trial)
            if f_trial <= f + 1e-4 * alpha * descent:
                break
            alpha *= 0.5
        w = w + alpha * step
        f = objective(w)

    limit = w_norm_bound + 1.0
    norm = float(np.linalg.norm(w))
    if norm > limit:
        w = w * (limit / norm)
    return w


def eliminate_linear(arms, w_hat, xi):
    """Indices of arms surviving the phase: score within 2*xi of the leader.

    Keeps arm x iff ``min_y w_hat . (x - y) + 2 xi > 0``; the inequality is
    strict, so exact boundary ties are eliminated.  The empirical leader
    always survives.
    """
    pts = np.asarray(arms, dtype=float)
    if pts.shape[0] == 0:
        raise ValueError("active set must be nonempty")
    scores = pts @ np.asarray(w_hat, dtype=float)
    top = scores.max()
    return [i for i in range(len(scores)) if scores[i] + 2.0 * xi > top]


@dataclass
class PhaseRecord:
    phase: int
    active_size: int
    coreset_size: int
    phase_len: int
    xi: float
    w_hat: np.ndarray
    cum_regret: float
    active_ids: list = field(default_factory=list)

    def to_json_dict(self):
        return {
            "phase": self.phase,
            "active_size": self.active_size,
            "coreset_size": self.coreset_size,
            "phase_len": self.phase_len,
            "xi": self.xi,
            "w_hat": [float(v) for v in self.w_hat],
            "cum_regret": self.cum_regret,
        }


@dataclass
class LinearRunResult:
    committed: int | None            # original arm index, None if truncated
    committed_point: np.ndarray | None
    commit_round: int | None
    recommended: int
    regret: float
    phases: list
    rounds_used: int
    truncated: bool
    ledger: object
    trajectory: list | None
    net: object = None

    def confidence_errors(self, weights):
        """Per-phase |x . (w_hat - weights)| arrays over each phase's active set."""
        weights = np.asarray(weights, dtype=float)
        out = []
        for rec in self.phases:
            pts = self.net.points[rec.active_ids]
            out.append(np.abs(pts @ (rec.w_hat - weights)))
        return out


def _multinomial_counts(rng, total, weights):
    return rng.multinomial(total, weights) if total > 0 else np.zeros(len(weights), dtype=int)


def run_linear(env, horizon, epsilon, conf_delta, seed=0, t0=None, budget_scale=1.0,
               w_norm_bound=1.0, design_tol=0.05, mle_regularization=1e-8,
               net_radius=None, noiseless=False, trajectory_stride=None):
    """Full phased run over ``env``'s vector arms; returns a LinearRunResult.

    The initial active set is a ``1/horizon``-net of the arm set.  Every
    phase draws the exploration block from the phase-1 design (as specified;
    arguably the current phase's design is meant), excludes those duels from
    the aggregates and the likelihood, and spends the core budgets given by
    :func:`phase_budget`.  ``budget_scale`` shrinks both the exploration and
    core budgets uniformly for desk-scale experiments; the formula values
    themselves are what :mod:`dpduel.harness` cross-checks at scale 1.
    """
    arms = env.arms
    if arms is None:
        raise ValueError("environment must carry vector arms")
    if horizon < 1:
        raise ValueError(f"horizon must be at least 1, got {horizon}")
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if not 0.0 < conf_delta < 1.0:
        raise ValueError(f"conf_delta must lie in (0, 1), got {conf_delta}")
    if budget_scale <= 0:
        raise ValueError(f"budget_scale must be positive, got {budget_scale}")

    dim = arms.shape[1]
    kappa = compute_kappa(w_norm_bound)
    radius = (1.0 / horizon) if net_radius is None else net_radius
    net = build_eps_net(arms, radius, source_description=f"{len(arms)} source arms")
    rng = np.random.default_rng([seed, 3])

    t0_value = exploration_budget(dim, horizon, conf_delta, kappa) if t0 is None else t0
    explore_count = int(math.ceil(t0_value * budget_scale))

    active = list(range(len(net)))
    explore_design = None
    phases = []
    trajectory = [] if trajectory_stride else None
    rounds = 0
    committed = None
    truncated = False
    phase = 0
    last_scores = None

    def orig(i):
        return int(net.indices[i])

    def snapshot(t):
        if trajectory is not None:
            trajectory.append((t, env.ledger.cumulative, phase, len(active)))

    def play_block(i, j, count, z, v_matrix):
        nonlocal rounds
        wins = env.duel_many(orig(i), orig(j), count)
        v_matrix += count * np.outer(z, z)
        rounds += count
        if trajectory_stride:
            snapshot(rounds)
        return wins

    while rounds < horizon:
        if len(active) == 1:
            committed = active[0]
            break
        phase += 1
        xi = 2.0 ** -phase
        design = design_for_phase(net.points[active], design_tol, ids=list(active))
        if design.support_size == 0:
            committed = active[0]
            break
        if explore_design is None:
            explore_design = design
        counts = phase_budget(design, xi, dim, horizon, conf_delta, kappa, epsilon,
                              budget_scale)
        remaining = horizon - rounds
        needed = explore_count + sum(counts)
        v_matrix = np.zeros((dim, dim))

        if needed > remaining:
            # horizon ends mid-phase: spend what is left, report partial regret
            truncated = True
            budget_left = remaining
            explore_now = min(explore_count, budget_left)
            alloc = _multinomial_counts(rng, explore_now, explore_design.weights)
            for k, c in enumerate(alloc):
                if c > 0:
                    i, j = explore_design.pairs[k]
                    play_block(i, j, int(c), explore_design.atoms[k], v_matrix)
            budget_left -= explore_now
            for k, c in enumerate(counts):
                if budget_left == 0:
                    break
                c = min(c, budget_left)
                i, j = design.pairs[k]
                play_block(i, j, int(c), design.atoms[k], v_matrix)
                budget_left -= c
            break

        alloc = _multinomial_counts(rng, explore_count, explore_design.weights)
        for k, c in enumerate(alloc):
            if c > 0:
                i, j = explore_design.pairs[k]
                play_block(i, j, int(c), explore_design.atoms[k], v_matrix)

        aggregates = []
        duel_log = []
        for k, c in enumerate(counts):
            i, j = design.pairs[k]
            z = design.atoms[k]
            wins = play_block(i, j, int(c), z, v_matrix)
            noise = 0.0 if noiseless else laplace_sample(1.0 / epsilon, rng)
            aggregates.append(PrivateAggregate(pair=(i, j), z=z, raw_sum=wins, noise=noise))
            duel_log.append((z, int(c)))

        w_hat = private_mle(aggregates, duel_log, dim, regularization=mle_regularization,
                            w_norm_bound=w_norm_bound)
        phases.append(PhaseRecord(
            phase=phase,
            active_size=len(active),
            coreset_size=design.support_size,
            phase_len=explore_count + sum(counts),
            xi=xi,
            w_hat=w_hat,
            cum_regret=env.ledger.cumulative,
            active_ids=list(active),
        ))
        keep = eliminate_linear(net.points[active], w_hat, xi)
        active = [active[i] for i in keep]
        last_scores = net.points[active] @ w_hat
        if len(active) == 1:
            committed = active[0]
            break

    commit_round = None
    if committed is not None:
        commit_round = rounds
        env.play_committed(orig(committed), horizon - rounds)
        rounds = horizon
        snapshot(rounds)
        recommended = committed
    elif last_scores is not None and len(active) > 0:
        recommended = active[int(np.argmax(last_scores))]
    else:
        recommended = active[0]

    return LinearRunResult(
        committed=orig(committed) if committed is not None else None,
        committed_point=net.points[committed].copy() if committed is not None else None,
        commit_round=commit_round,
        recommended=orig(recommended),
        regret=env.ledger.cumulative,
        phases=phases,
        rounds_used=rounds,
        truncated=truncated,
        ledger=env.ledger,
        trajectory=trajectory,
        net=net,
    )

"""Covering nets and near-optimal experimental designs for duel selection.

``build_eps_net`` greedily thins a finite point set until every source point
sits within the requested radius of the net.  ``g_optimal_design`` runs
Frank-Wolfe ascent on ``log det V(pi)`` until the worst normalized variance
``g(pi) = max_z ||z||^2_{V(pi)^{-1}}`` is within a ``(1 + eta)`` factor of
its optimum (which equals the spanned dimension), then prunes the support.
``design_for_phase`` wraps the solver for sets of arm-difference vectors.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

__all__ = [
    "Design",
    "DesignConvergenceError",
    "EpsNet",
    "build_eps_net",
    "design_for_phase",
    "g_optimal_design",
]

_RANK_TOL = 1e-10
_LOGDET_SLACK = 1e-10


class DesignConvergenceError(RuntimeError):
    """Frank-Wolfe failed to reach the target g-value; carries the best iterate."""

    def __init__(self, message, design):
        super().__init__(message)
        self.design = design


@dataclass
class EpsNet:
    """Finite covering net: every source point is within ``radius`` of the net."""

    points: np.ndarray          # (m, d) selected net points
    indices: np.ndarray         # positions of the net points in the source set
    radius: float
    source_description: str = ""

    def __len__(self):
        return len(self.points)


def build_eps_net(points, radius, source_description=""):
    """Greedy farthest-point covering of a finite set.

    Starts from the first point and repeatedly adds the point farthest from
    the current net until the covering radius is met; the final covering is
    verified exhaustively.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] == 0:
        raise ValueError("need a nonempty 2-d array of points")
    if radius <= 0:
        raise ValueError(f"radius must be positive, got {radius}")
    chosen = [0]
    dist = np.linalg.norm(pts - pts[0], axis=1)
    while True:
        far = int(np.argmax(dist))
        if dist[far] <= radius:
            break
        chosen.append(far)
        dist = np.minimum(dist, np.linalg.norm(pts - pts[far], axis=1))
    if np.any(dist > radius + 1e-12):
        raise AssertionError("covering verification failed")
    idx = np.array(chosen, dtype=int)
    return EpsNet(pts[idx], idx, float(radius), source_description)


@dataclass
class Design:
    """Probability weights over duel-difference vectors with design diagnostics.

    ``atoms`` holds only the support (weights strictly positive after
    pruning); ``pairs`` carries the originating index pair of each atom.
    ``g_value`` is the worst normalized variance over *all* candidates, with
    the variance computed in the spanned subspace when the candidates are
    rank deficient (``effective_dim`` reports that rank).
    """

    atoms: np.ndarray
    weights: np.ndarray
    pairs: list
    info_matrix: np.ndarray
    g_value: float
    effective_dim: int
    logdet_path: list = field(default_factory=list)

    @property
    def support_size(self):
        return len(self.weights)


def _g_values(z, weights):
    # squared V(pi)-inverse norms of every candidate row of z
    v = z.T @ (weights[:, None] * z)
    try:
        m = np.linalg.solve(v, z.T)
    except np.linalg.LinAlgError:
        m = np.linalg.lstsq(v, z.T, rcond=None)[0]
    return np.einsum("ij,ji->i", z, m)


def _reweight_support(z, weights, support, dim, iters=200):
    # multiplicative reweighting restricted to the support; monotone in log det
    w = weights.copy()
    for _ in range(iters):
        g = _g_values(z, w)
        w[support] *= g[support] / dim
        total = w.sum()
        if total <= 0 or not np.isfinite(total):
            return weights
        w /= total
    return w


def g_optimal_design(candidates, tolerance=0.05, weight_floor=1e-6, max_iters=50000,
                     support_target=None, pairs=None):
    """Near-optimal design over ``candidates`` via Frank-Wolfe on log det V.

    Stops once ``g(pi) <= (1 + tolerance) * r`` where ``r`` is the rank of
    the candidate set, then prunes negligible atoms and trims the support
    toward ``r (r + 1) / 2`` while the relaxed check
    ``g <= (1 + 2 * tolerance) * r`` keeps passing.
    """
    z_full = np.asarray(candidates, dtype=float)
    if z_full.ndim != 2 or z_full.shape[0] == 0:
        raise ValueError("need a nonempty 2-d array of candidate vectors")
    if tolerance <= 0:
        raise ValueError(f"tolerance must be positive, got {tolerance}")
    m, d = z_full.shape
    if pairs is None:
        pairs = [(i, i) for i in range(m)]

    # project onto the spanned subspace when rank deficient
    u, sv, vt = np.linalg.svd(z_full, full_matrices=False)
    rank = int(np.sum(sv > _RANK_TOL * sv[0])) if sv.size else 0
    if rank == 0:
        raise ValueError("candidate set contains only zero vectors")
    basis = vt[:rank]
    z = z_full @ basis.T

    # spanning initial support from a pivoted QR
    _, _, piv = scipy.linalg.qr(z.T, pivoting=True)
    init = piv[:rank]
    weights = np.zeros(m)
    weights[init] = 1.0 / rank

    target = (1.0 + tolerance) * rank
    relaxed = (1.0 + 2.0 * tolerance) * rank
    logdet_path = []
    converged = False
    for _ in range(max_iters):
        g_all = _g_values(z, weights)
        v = z.T @ (weights[:, None] * z)
        logdet_path.append(float(np.linalg.slogdet(v)[1]))
        j = int(np.argmax(g_all))
        g = float(g_all[j])
        if g <= target:
            converged = True
            break
        step = (g / rank - 1.0) / (g - 1.0)
        weights *= 1.0 - step
        weights[j] += step

    def _finalize(w):
        support = np.flatnonzero(w > 0)
        sup_w = w[support] / w[support].sum()
        atoms = z_full[support]
        info = atoms.T @ (sup_w[:, None] * atoms)
        g_final = float(np.max(_g_values(z, w / w.sum())))
        return Design(
            atoms=atoms,
            weights=sup_w,
            pairs=[pairs[i] for i in support],
            info_matrix=info,
            g_value=g_final,
            effective_dim=rank,
            logdet_path=logdet_path,
        )

    if not converged:
        raise DesignConvergenceError(
            f"g-value did not reach {target:.6g} within {max_iters} iterations",
            _finalize(weights),
        )

    # drop negligible atoms, keeping the relaxed guarantee
    pruned = weights.copy()
    pruned[pruned < weight_floor] = 0.0
    total = pruned.sum()
    if total > 0:
        pruned /= total
        if np.max(_g_values(z, pruned)) <= relaxed:
            weights = pruned

    # trim the support toward the optimum's size bound
    if support_target is None:
        support_target = rank * (rank + 1) // 2
    while np.count_nonzero(weights) > support_target:
        support = np.flatnonzero(weights)
        drop = support[np.argmin(weights[support])]
        trial = weights.copy()
        trial[drop] = 0.0
        trial /= trial.sum()
        new_support = np.flatnonzero(trial)
        if len(new_support) < rank:
            break
        trial = _reweight_support(z, trial, new_support, rank)
        if np.max(_g_values(z, trial)) <= relaxed:
            weights = trial
        else:
            break

    return _finalize(weights)


def _canonical_key(z, decimals=12):
    key = tuple(np.round(z, decimals) + 0.0)
    neg = tuple(np.round(-z, decimals) + 0.0)
    return min(key, neg)


def design_for_phase(arms, tolerance=0.05, ids=None, **solver_kwargs):
    """Design over the pairwise differences of the active arms.

    Ordered pairs (x, y) and (y, x) contribute the same information, so each
    unordered pair enters once with the lexicographically smaller arm first;
    numerically equal differences are merged and zero differences (duplicate
    arms) are dropped.  ``ids`` optionally relabels the arms in the reported
    pairs.  A single arm (or all-duplicate arms) yields a degenerate design
    with an empty core set.
    """
    pts = np.asarray(arms, dtype=float)
    if pts.ndim != 2 or pts.shape[0] == 0:
        raise ValueError("need a nonempty 2-d array of arms")
    k, d = pts.shape
    if ids is None:
        ids = list(range(k))

    atoms = []
    pair_ids = []
    seen = {}
    for i in range(k):
        for j in range(i + 1, k):
            x, y = (i, j) if tuple(pts[i]) <= tuple(pts[j]) else (j, i)
            z = pts[x] - pts[y]
            if np.linalg.norm(z) <= 1e-12:
                continue
            key = _canonical_key(z)
            if key in seen:
                continue
            seen[key] = True
            atoms.append(z)
            pair_ids.append((ids[x], ids[y]))

    if not atoms:
        return Design(
            atoms=np.zeros((0, d)),
            weights=np.zeros(0),
            pairs=[],
            info_matrix=np.zeros((d, d)),
            g_value=0.0,
            effective_dim=0,
            logdet_path=[],
        )

    return g_optimal_design(np.array(atoms), tolerance, pairs=pair_ids, **solver_kwargs)

"""Optimisation-trajectory PCA and reward-surface grids.

The PCA tool takes parameter snapshots phi_0 .. phi_n, stacks the
differences to the final snapshot as rows of M, and projects everything
onto M's two leading right-singular directions. The final snapshot maps
to the origin by construction. No mean-centering is applied beyond the
subtraction of phi_n; explained-variance ratios come straight from the
singular values.
"""

from __future__ import annotations

import numpy as np

from .harness import evaluate_policy
from .nets import Actor, flatten_values, load_params, unflatten_values


def pca_trajectory(snapshots: list[np.ndarray]):
    """2-D coordinates for each snapshot plus top-2 explained-variance ratios."""
    if len(snapshots) < 3:
        raise ValueError("need at least 3 snapshots")
    flats = [np.asarray(s, dtype=np.float64).ravel() for s in snapshots]
    final = flats[-1]
    M = np.stack([f - final for f in flats[:-1]])
    if not np.any(M):
        raise ValueError("all snapshots identical: zero variance")
    _, svals, vt = np.linalg.svd(M, full_matrices=False)
    directions = vt[:2]
    coords = np.stack([f - final for f in flats]) @ directions.T
    total = float(np.sum(svals**2))
    ratios = (svals[:2] ** 2) / total
    return coords, ratios


def pca_reconstruction_error(snapshots: list[np.ndarray], k: int = 2) -> tuple[float, float]:
    """(squared Frobenius error of rank-k reconstruction, sum of discarded
    squared singular values); the two are equal by the eigendecomposition."""
    flats = [np.asarray(s, dtype=np.float64).ravel() for s in snapshots]
    final = flats[-1]
    M = np.stack([f - final for f in flats[:-1]])
    u, svals, vt = np.linalg.svd(M, full_matrices=False)
    Mk = (u[:, :k] * svals[:k]) @ vt[:k]
    return float(np.sum((M - Mk) ** 2)), float(np.sum(svals[k:] ** 2))


def load_snapshot_vectors(paths: list[str]) -> list[np.ndarray]:
    """Flatten saved parameter snapshots (in file order) to vectors."""
    out = []
    for p in paths:
        named = load_params(p)
        out.append(flatten_values([arr for _, arr in named]))
    return out


def reward_surface(actor: Actor, d1: np.ndarray, d2: np.ndarray,
                   xs, ys, env, episodes: int = 10, eval_seed: int = 0) -> np.ndarray:
    """Mean returns of the policy at center + x*d1 + y*d2 over the grid.

    Every grid point is evaluated with an identically seeded generator
    (common random numbers), so the surface is a deterministic function
    of the parameters. Returns an array of shape (len(ys), len(xs)).
    """
    d1 = np.asarray(d1, dtype=np.float64).ravel()
    d2 = np.asarray(d2, dtype=np.float64).ravel()
    if np.linalg.matrix_rank(np.stack([d1, d2])) < 2:
        raise ValueError("directions must be linearly independent")
    params = actor.parameters()
    like = [p.value for p in params]
    center = flatten_values(like)
    if center.size != d1.size or center.size != d2.size:
        raise ValueError("direction length does not match parameter count")
    saved = [p.value.copy() for p in params]
    grid = np.zeros((len(ys), len(xs)))
    try:
        for j, y in enumerate(ys):
            for i, x in enumerate(xs):
                vec = center + x * d1 + y * d2
                for p, v in zip(params, unflatten_values(vec, like)):
                    p.set_value(v)
                rng = np.random.default_rng(eval_seed)
                grid[j, i], _ = evaluate_policy(actor, env, episodes, rng)
    finally:
        for p, v in zip(params, saved):
            p.set_value(v)
    return grid

"""Deterministic grid-plus-refinement maximization over a parameter ball.

Shared by the conformal-volume estimator and the min-max sweeps: evaluate on
a coarse radial grid, then run rounds of local sampling around the incumbent
with the sampling radius halving per round.
"""

import numpy as np

BALL_EDGE = 0.999  # parameters beyond this are treated as boundary samples


def ball_directions(dim, n_dirs, rng):
    """n_dirs roughly equidistributed unit vectors (seeded)."""
    dirs = [np.eye(dim)[k] for k in range(dim)]
    dirs += [-d for d in list(dirs)]
    while len(dirs) < n_dirs:
        v = rng.standard_normal(dim)
        dirs.append(v / np.linalg.norm(v))
    return np.asarray(dirs[:max(n_dirs, 1)])


def ball_grid(dim, n_dirs=16, n_radii=6, max_radius=0.95, seed=0):
    """Deterministic grid in the open ball: the center plus shells."""
    rng = np.random.default_rng(seed)
    dirs = ball_directions(dim, n_dirs, rng)
    radii = np.linspace(0.0, max_radius, n_radii + 1)[1:]
    pts = [np.zeros(dim)]
    for r in radii:
        pts.extend(r * dirs)
    return np.asarray(pts)


def clip_to_ball(p, limit=BALL_EDGE):
    nrm = np.linalg.norm(p)
    if nrm > limit:
        return p * (limit / nrm)
    return p


def maximize_over_ball(objective, dim, n_dirs=16, n_radii=6, max_radius=0.95,
                       rounds=3, local_samples=16, seed=0, grid=None):
    """Grid sup with shrinking-neighborhood refinement around the argmax.

    Returns (best_value, best_point, history) where history records the
    incumbent value per round (coarse grid first).
    """
    rng = np.random.default_rng(seed)
    if grid is None:
        grid = ball_grid(dim, n_dirs, n_radii, max_radius, seed)
    best_val = -np.inf
    best_p = np.zeros(dim)
    for p in grid:
        v = objective(p)
        if v > best_val:
            best_val, best_p = v, np.asarray(p, dtype=float)
    history = [best_val]
    radius = max_radius / max(n_radii, 1)
    for _ in range(rounds):
        for _ in range(local_samples):
            cand = clip_to_ball(best_p + radius * rng.standard_normal(dim))
            v = objective(cand)
            if v > best_val:
                best_val, best_p = v, cand
        history.append(best_val)
        radius *= 0.5
    return best_val, best_p, history

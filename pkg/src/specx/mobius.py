"""Closed-form conformal transformations of the sphere and conformal-volume
estimation.

G_a is the ball-indexed conformal automorphism; T_b the cap reflection that
is the identity on the cap {<x,b> <= |b|-|b|^2} and the conformal
reflection across its boundary on the complement (computed by conjugating a
Euclidean sphere inversion through stereographic projection with pole at
-b/|b|).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from ._ballopt import maximize_over_ball
from .harmonic import SphereMap, energy, normalize_rows


BOUNDARY_SNAP = 1.0 - 1e-12


@dataclass
class MobiusParam:
    a: np.ndarray

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=float)
        if np.linalg.norm(self.a) > 1.0 + 1e-12:
            raise ValueError("Mobius parameter must lie in the closed ball")


@dataclass
class CapParam:
    b: np.ndarray

    def __post_init__(self):
        self.b = np.asarray(self.b, dtype=float)
        if np.linalg.norm(self.b) > 1.0 + 1e-12:
            raise ValueError("cap parameter must lie in the closed ball")

    def cap_height(self):
        """The cap is {x : <x, b/|b|> <= 1 - |b|}."""
        return 1.0 - float(np.linalg.norm(self.b))


def _param(p, cls):
    if isinstance(p, cls):
        return p
    return cls(p)


def mobius_apply(a, x):
    """Apply G_a to unit vectors x ((d,) or (V, d)).

    For |a| = 1 the family degenerates to the constant map a.
    """
    a = _param(a, MobiusParam).a
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = np.atleast_2d(x)
    if np.linalg.norm(a) >= BOUNDARY_SNAP:
        out = np.tile(a / np.linalg.norm(a), (len(pts), 1))
    else:
        out = _kernels.mobius_batch(np.ascontiguousarray(pts),
                                    np.ascontiguousarray(a))
    return out[0] if single else out


def cap_reflection(b, x):
    """Apply T_b: identity on the cap, conformal reflection outside."""
    b = _param(b, CapParam).b
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = np.atleast_2d(x)
    beta = float(np.linalg.norm(b))
    if beta <= 1e-14:
        out = pts.copy()
    else:
        n = b / beta
        height = 1.0 - beta
        reflected = _kernels.cap_reflect_raw(np.ascontiguousarray(pts),
                                             np.ascontiguousarray(b))
        inside = (pts @ n) <= height
        out = np.where(inside[:, None], pts, reflected)
    return out[0] if single else out


def cap_reflection_raw(b, x):
    """The reflection branch alone (an involution away from the pole)."""
    b = _param(b, CapParam).b
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = np.atleast_2d(x)
    out = _kernels.cap_reflect_raw(np.ascontiguousarray(pts),
                                   np.ascontiguousarray(b))
    return out[0] if single else out


def upsilon(a, b, x):
    """The composition G_a . T_b."""
    return mobius_apply(a, cap_reflection(b, x))


def linear_reflection(b, x):
    """Reflection through the hyperplane perpendicular to b (|b| = 1)."""
    b = np.asarray(b, dtype=float)
    n = b / np.linalg.norm(b)
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        return x - 2.0 * float(x @ n) * n
    return x - 2.0 * (x @ n)[:, None] * n[None, :]


def mobius_map(mesh, phi: SphereMap, a):
    """G_a composed with a discrete sphere map."""
    return SphereMap(normalize_rows(mobius_apply(a, phi.values)))


def conformal_volume(mesh, phi: SphereMap, n_dirs=16, n_radii=6,
                     max_radius=0.95, rounds=3, local_samples=16, seed=0):
    """Estimate sup_a Area(G_a . phi) = sup_a E(G_a . phi) from below.

    Multistart grid search over the parameter ball with local refinement
    (same strategy as the min-max sweeps); the boundary |a| -> 1 is excluded
    beyond 0.999 where the family degenerates to constants.
    """
    dim = phi.ambient_dim

    def objective(a):
        return energy(mesh, mobius_apply(a, phi.values))

    best_val, best_a, history = maximize_over_ball(
        objective, dim, n_dirs=n_dirs, n_radii=n_radii,
        max_radius=max_radius, rounds=rounds, local_samples=local_samples,
        seed=seed)
    return {"V_c_estimate": best_val, "argmax": best_a,
            "refinement": history}

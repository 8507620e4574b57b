"""Relaxed sphere-valued energy, explicit admissible families, sampled
min-max energies, balanced points, and critical-point extraction.

The relaxed functional on vector-valued maps is

    E_eps(u) = 0.5 * integral |du|^2 + (1/(4 eps^2)) integral (1-|u|^2)^2,

discretized with the cotangent Dirichlet form and lumped vertex areas. The
two explicit families are the mollified compositions G_a . phi and
G_a . T_b . phi of a base sphere map with the closed-form conformal
transformations; mollification is one implicit lumped heat step, which
contracts the Dirichlet energy and fixes constants exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.optimize
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import _kernels, mobius, spectra
from ._ballopt import BALL_EDGE, ball_grid, clip_to_ball
from .harmonic import SphereMap, normalize_rows, tension_residual
from .mesh import MeshMeasure, TriMesh, volume_measure


class FamilyError(ValueError):
    pass


@dataclass
class VectorMap:
    """Per-vertex vectors in R^(n+1) with unconstrained norm."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(self.values)):
            raise FamilyError("vector map has non-finite entries")

    @property
    def ambient_dim(self):
        return self.values.shape[1]


def _values(u):
    if isinstance(u, (VectorMap, SphereMap)):
        return u.values
    return np.asarray(u, dtype=float)


# ---------------------------------------------------------------------------
# relaxed energy, gradient, second variation
# ---------------------------------------------------------------------------

def gl_energy(mesh, u, eps, parts=False):
    """Dirichlet part plus lumped potential integral."""
    if eps <= 0.0:
        raise FamilyError("eps must be positive")
    vals = _values(u)
    dirichlet = 0.5 * float(np.sum(vals * (mesh.stiffness @ vals)))
    potential, avg = _kernels.gl_pointwise(
        np.ascontiguousarray(vals), mesh.vertex_areas, float(eps))
    if parts:
        return {"E_eps": dirichlet + potential, "dirichlet": dirichlet,
                "potential": potential, "avg_norm": avg}
    return dirichlet + potential


def gl_gradient(mesh, u, eps):
    """Mass-normalized gradient M^{-1} K u - eps^{-2} (1-|u|^2) u.

    Pairs with directions through the lumped L2 inner product: the
    directional derivative of gl_energy equals gl_inner(mesh, grad, v).
    """
    if eps <= 0.0:
        raise FamilyError("eps must be positive")
    vals = _values(u)
    va = mesh.vertex_areas
    n2 = np.sum(vals * vals, axis=1)
    g = (mesh.stiffness @ vals) / va[:, None] \
        - (1.0 - n2)[:, None] * vals / eps ** 2
    return VectorMap(g)


def gl_inner(mesh, u, v):
    """Lumped L2 inner product of two vector maps."""
    return float(np.sum(mesh.vertex_areas[:, None] * _values(u) * _values(v)))


def gl_norm(mesh, u):
    return float(np.sqrt(gl_inner(mesh, u, u)))


def gl_second_variation(mesh, u, eps, v, w=None):
    """Second-variation quadratic form (bilinear if w given):

    Q(v, w) = int <dv, dw> + 2 eps^-2 <u,v><u,w> - eps^-2 (1-|u|^2) <v,w>.
    """
    if eps <= 0.0:
        raise FamilyError("eps must be positive")
    uu = _values(u)
    vv = _values(v)
    ww = vv if w is None else _values(w)
    va = mesh.vertex_areas
    n2 = np.sum(uu * uu, axis=1)
    dir_part = float(np.sum(vv * (mesh.stiffness @ ww)))
    uv = np.sum(uu * vv, axis=1)
    uw = np.sum(uu * ww, axis=1)
    vw = np.sum(vv * ww, axis=1)
    pot = float(np.sum(va * (2.0 * uv * uw - (1.0 - n2) * vw))) / eps ** 2
    return dir_part + pot


def gl_descend(mesh, u0, eps, tol=1e-6, max_iters=2000, step0=None):
    """Gradient descent with Armijo backtracking until the lumped-L2
    gradient norm drops below tol (or the iteration cap, flagged)."""
    vals = _values(u0).copy()
    va = mesh.vertex_areas
    rate = float((mesh.stiffness.diagonal() / va).max())
    if step0 is None:
        step0 = 0.9 / (rate + 2.0 / eps ** 2)
    e = gl_energy(mesh, vals, eps)
    converged = False
    it = 0
    gnorm = np.inf
    for it in range(1, max_iters + 1):
        g = gl_gradient(mesh, vals, eps).values
        gnorm = gl_norm(mesh, g)
        if gnorm < tol:
            converged = True
            break
        step = step0
        g2 = gnorm ** 2
        for _ in range(40):
            cand = vals - step * g
            e_new = gl_energy(mesh, cand, eps)
            if e_new <= e - 0.5 * step * g2:
                break
            step *= 0.5
        else:
            break  # line search stalled at numerical floor
        vals = cand
        e = e_new
    return {"u": VectorMap(vals), "gradient_norm": gnorm, "E_eps": e,
            "iterations": it, "converged": converged}


# ---------------------------------------------------------------------------
# mollification
# ---------------------------------------------------------------------------

def _heat_factor(mesh, t):
    va = mesh.vertex_areas
    op = (sp.diags(va) + t * mesh.stiffness).tocsc()
    return spla.splu(op)


def mollify(mesh, f, t, _factor=None):
    """One implicit lumped heat step (I + t M^{-1} K)^{-1} per coordinate.

    Contracts the Dirichlet energy, fixes constants exactly, and converges
    to the identity as t -> 0.
    """
    if t <= 0.0:
        raise FamilyError("mollification time must be positive")
    vals = _values(f)
    lu = _factor if _factor is not None else _heat_factor(mesh, t)
    out = lu.solve(mesh.vertex_areas[:, None] * vals)
    return VectorMap(out)


# ---------------------------------------------------------------------------
# families
# ---------------------------------------------------------------------------

@dataclass
class FamilySpec:
    """Explicit admissible family: mollified conformal deformations of a
    base sphere map, with a deterministic parameter grid."""

    mesh: TriMesh
    base_map: SphereMap
    mollify_time: float
    eps: float
    family: str = "first"  # "first" (G_a . phi) | "second" (G_a . T_b . phi)
    grid: np.ndarray | None = None
    seed: int = 0
    n_dirs: int = 14
    n_radii: int = 5
    max_radius: float = 0.9
    refine_rounds: int = 3
    refine_samples: int = 12

    def __post_init__(self):
        if self.mollify_time <= 0.0:
            raise FamilyError("mollify_time must be positive")
        if self.eps <= 0.0:
            raise FamilyError("eps must be positive")
        if self.family not in ("first", "second"):
            raise FamilyError(f"unknown family {self.family!r}")
        if self.grid is None:
            dim = self.param_dim
            g = ball_grid(self.ambient_dim, self.n_dirs, self.n_radii,
                          self.max_radius, self.seed)
            if self.family == "second":
                rng = np.random.default_rng(self.seed + 1)
                pairs = [np.concatenate([p, np.zeros(self.ambient_dim)])
                         for p in g]
                n_extra = len(g) * 2
                for _ in range(n_extra):
                    q = rng.standard_normal(dim)
                    q *= rng.uniform(0, self.max_radius) / np.linalg.norm(q)
                    pairs.append(q)
                self.grid = np.asarray(pairs)
            else:
                self.grid = g
        self.grid = np.asarray(self.grid, dtype=float)
        if self.grid.ndim != 2 or self.grid.shape[1] != self.param_dim:
            raise FamilyError(
                f"grid must be (P, {self.param_dim}) for the {self.family} "
                f"family in ambient dimension {self.ambient_dim}")
        interior = np.linalg.norm(
            self.grid.reshape(len(self.grid), -1, self.ambient_dim),
            axis=2) <= BALL_EDGE
        if not interior.all():
            raise FamilyError("grid points must lie strictly inside the ball")

    @property
    def ambient_dim(self):
        return self.base_map.ambient_dim

    @property
    def param_dim(self):
        return self.ambient_dim * (2 if self.family == "second" else 1)

    @cached_property
    def _factor(self):
        return _heat_factor(self.mesh, self.mollify_time)

    def split(self, p):
        d = self.ambient_dim
        p = np.asarray(p, dtype=float)
        if self.family == "second":
            return p[:d], p[d:]
        return p, None

    def member(self, p):
        a, b = self.split(p)
        if b is None:
            return family_first(self, a)
        return family_second(self, a, b)


def make_family_spec(mesh, base_map, mollify_time=1e-4, eps=0.1,
                     family="first", **kwargs):
    return FamilySpec(mesh=mesh, base_map=base_map,
                      mollify_time=mollify_time, eps=eps, family=family,
                      **kwargs)


def family_first(spec: FamilySpec, a):
    """Mollified G_a . phi; for |a| = 1 the constant map a, exactly."""
    a = np.asarray(a, dtype=float)
    if np.linalg.norm(a) >= BALL_EDGE:
        const = a / np.linalg.norm(a)
        return VectorMap(np.tile(const, (spec.mesh.num_vertices, 1)))
    vals = mobius.mobius_apply(a, spec.base_map.values)
    return mollify(spec.mesh, vals, spec.mollify_time, _factor=spec._factor)


def family_second(spec: FamilySpec, a, b):
    """Mollified G_a . T_b . phi with the boundary identities exact."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.linalg.norm(a) >= BALL_EDGE:
        const = a / np.linalg.norm(a)
        return VectorMap(np.tile(const, (spec.mesh.num_vertices, 1)))
    vals = mobius.upsilon(a, b, spec.base_map.values)
    return mollify(spec.mesh, vals, spec.mollify_time, _factor=spec._factor)


def embedded_member(spec: FamilySpec, a_prime, s):
    """Member of the one-dimension-up family built from a first-family spec:
    (sqrt(1-s^2) F_{a'/sqrt(1-s^2)}, s), the explicit construction behind
    the monotonicity of the min-max energies in the target dimension."""
    if spec.family != "first":
        raise FamilyError("embedding construction applies to first families")
    s = float(s)
    if abs(s) >= 1.0:
        const = np.zeros(spec.ambient_dim + 1)
        const[-1] = np.sign(s)
        return VectorMap(np.tile(const, (spec.mesh.num_vertices, 1)))
    root = np.sqrt(1.0 - s * s)
    base = spec.member(np.asarray(a_prime, dtype=float) / root)
    vals = np.hstack([root * base.values,
                      np.full((len(base.values), 1), s)])
    return VectorMap(vals)


# ---------------------------------------------------------------------------
# min-max sweep
# ---------------------------------------------------------------------------

@dataclass
class MinMaxReport:
    sup_energy: float
    argmax: np.ndarray
    eps: float
    mollify_time: float
    family: str
    seed: int
    grid_size: int
    grid_info: dict = field(default_factory=dict)
    refinement: list = field(default_factory=list)
    sweep_rows: list = field(default_factory=list)
    balanced: np.ndarray | None = None
    balanced_residual: float | None = None
    eigen_lower_bound: float | None = None
    critical: dict | None = None

    def to_json_dict(self):
        doc = {
            "sup_energy": float(self.sup_energy),
            "argmax": [float(x) for x in np.atleast_1d(self.argmax)],
            "eps": float(self.eps),
            "mollify_time": float(self.mollify_time),
            "family": self.family,
            "seed": int(self.seed),
            "grid_size": int(self.grid_size),
            "grid": dict(self.grid_info),
            "refinement": [float(x) for x in self.refinement],
        }
        if self.balanced is not None:
            doc["balanced"] = [float(x) for x in self.balanced]
            doc["balanced_residual"] = float(self.balanced_residual)
        if self.eigen_lower_bound is not None:
            doc["eigen_lower_bound"] = float(self.eigen_lower_bound)
        if self.critical is not None:
            doc["critical"] = {
                "E_eps": float(self.critical["E_eps"]),
                "gradient_norm": float(self.critical["gradient_norm"]),
                "tension_residual": float(self.critical["tension_residual"]),
                "converged": bool(self.critical["converged"]),
            }
        return doc


def minmax_upper(spec: FamilySpec):
    """Sup of E_eps over the family grid with local refinement rounds.

    Estimates the family's min-max level from its sampled maximum; records
    the argmax parameter and one sweep row per evaluated member.
    """
    if len(spec.grid) == 0:
        raise FamilyError("empty parameter grid")
    rows = []

    def objective(p):
        member = spec.member(p)
        parts = gl_energy(spec.mesh, member, spec.eps, parts=True)
        rows.append(tuple(p) + (parts["E_eps"], parts["dirichlet"],
                                parts["potential"], parts["avg_norm"]))
        return parts["E_eps"]

    best_val = -np.inf
    best_p = spec.grid[0]
    for p in spec.grid:
        v = objective(p)
        if v > best_val:
            best_val, best_p = v, np.asarray(p, dtype=float)
    history = [best_val]
    rng = np.random.default_rng(spec.seed + 17)
    radius = spec.max_radius / max(spec.n_radii, 1)
    d = spec.ambient_dim
    for _ in range(spec.refine_rounds):
        for _ in range(spec.refine_samples):
            cand = best_p + radius * rng.standard_normal(len(best_p))
            if spec.family == "second":
                cand = np.concatenate([clip_to_ball(cand[:d]),
                                       clip_to_ball(cand[d:])])
            else:
                cand = clip_to_ball(cand)
            v = objective(cand)
            if v > best_val:
                best_val, best_p = v, cand
        history.append(best_val)
        radius *= 0.5
    return MinMaxReport(
        sup_energy=best_val, argmax=best_p, eps=spec.eps,
        mollify_time=spec.mollify_time, family=spec.family, seed=spec.seed,
        grid_size=len(spec.grid),
        grid_info={"dirs": spec.n_dirs, "radii": spec.n_radii,
                   "max_radius": spec.max_radius,
                   "refine_rounds": spec.refine_rounds,
                   "refine_samples": spec.refine_samples},
        refinement=history, sweep_rows=rows)


def sweep_to_csv(report: MinMaxReport, path):
    dim = len(np.atleast_1d(report.argmax))
    header = ",".join([f"p{i}" for i in range(dim)]
                      + ["E_eps", "dirichlet", "potential", "avg_norm"])
    with open(str(path), "w") as fh:
        fh.write(header + "\n")
        for row in report.sweep_rows:
            fh.write(",".join(repr(float(x)) for x in row) + "\n")


# ---------------------------------------------------------------------------
# balanced points and eigenvalue bounds
# ---------------------------------------------------------------------------

def _measure_weights(spec, mu):
    if mu is None:
        return volume_measure(spec.mesh).weights
    if isinstance(mu, MeshMeasure):
        return mu.weights
    return np.asarray(mu, dtype=float)


def balanced_point(spec: FamilySpec, mu=None, tol_factor=1e-6,
                   max_iters=400, n_starts=8):
    """Parameter a* with vanishing mu-average of F_a.

    Solves int F_a dmu = 0 by damped fixed-point iteration from seeded
    multistarts (existence is topological, so no constructive locator is
    available); a library root polish runs if the iteration stalls.
    Returns (a*, residual_norm). mu defaults to the volume measure.
    """
    if spec.family != "first":
        raise FamilyError("balanced_point expects a first-family spec")
    w = _measure_weights(spec, mu)
    mass = float(w.sum())
    tol = tol_factor * mass

    def avg(a):
        member = spec.member(a)
        return (w[:, None] * member.values).sum(axis=0)

    rng = np.random.default_rng(spec.seed + 101)
    d = spec.ambient_dim
    starts = [np.zeros(d)]
    while len(starts) < n_starts:
        v = rng.standard_normal(d)
        starts.append(clip_to_ball(v * rng.uniform(0, 0.7)
                                   / np.linalg.norm(v)))
    best = (np.inf, np.zeros(d))
    for a0 in starts:
        a = a0.copy()
        damp = 0.5
        for _ in range(max_iters):
            f = avg(a)
            r = np.linalg.norm(f)
            if r < best[0]:
                best = (r, a.copy())
            if r < tol:
                return a, r
            a = clip_to_ball(a - damp * f / mass)
        # polish with a quasi-Newton root step from the best iterate
        sol = scipy.optimize.root(lambda p: avg(clip_to_ball(p)), best[1],
                                  method="hybr",
                                  options={"maxfev": 200 * (d + 1)})
        cand = clip_to_ball(sol.x)
        r = float(np.linalg.norm(avg(cand)))
        if r < best[0]:
            best = (r, cand)
        if best[0] < tol:
            return best[1], best[0]
    raise FamilyError(
        f"balanced point not found: best residual {best[0]:.3e} "
        f"(tolerance {tol:.3e})")


def balanced_point_second(spec: FamilySpec, phi1, mu=None, tol_factor=1e-6,
                          max_iters=400, n_starts=8):
    """Pair (a*, b*) with vanishing mu-averages of F_{a,b} and phi1*F_{a,b}.

    phi1 is the first eigenfunction of the measure pencil; the 2(n+1)
    equations are solved by damped iteration plus a root polish. Returns
    ((a*, b*), residual_norm).
    """
    if spec.family != "second":
        raise FamilyError("balanced_point_second expects a second-family spec")
    w = _measure_weights(spec, mu)
    phi1 = np.asarray(phi1, dtype=float)
    if phi1.shape != (spec.mesh.num_vertices,):
        raise FamilyError("phi1 must be a vertex function")
    mass = float(w.sum())
    tol = tol_factor * mass
    d = spec.ambient_dim

    def project(p):
        # a degenerates at the sphere (constant members); b is regular on
        # the whole closed ball, so only snap it to |b| <= 1
        return np.concatenate([clip_to_ball(p[:d]),
                               clip_to_ball(p[d:], limit=1.0)])

    def avg(p):
        p = project(p)
        member = family_second(spec, p[:d], p[d:])
        m0 = (w[:, None] * member.values).sum(axis=0)
        m1 = ((w * phi1)[:, None] * member.values).sum(axis=0)
        return np.concatenate([m0, m1])

    def squash(q):
        # smooth onto parametrization of the closed b-ball (boundary zeros
        # are reached asymptotically, avoiding the projection kink)
        return q / np.sqrt(1.0 + float(np.dot(q, q)))

    def unsquash(b):
        n = min(np.linalg.norm(b), 1.0 - 1e-9)
        if n == 0.0:
            return np.asarray(b, dtype=float)
        return np.asarray(b, dtype=float) * (1.0 / np.sqrt(1.0 - n * n))

    def residual_fn(p):
        return avg(np.concatenate([p[:d], squash(p[d:])]))

    rng = np.random.default_rng(spec.seed + 211)
    starts = [np.zeros(2 * d)]
    while len(starts) < n_starts:
        v = rng.standard_normal(2 * d)
        starts.append(v * rng.uniform(0, 0.8) / np.linalg.norm(v))
    best = (np.inf, np.zeros(2 * d))
    for p0 in starts:
        p = p0.copy()
        damp = 0.4
        for _ in range(max_iters // 4):
            f = avg(p)
            r = np.linalg.norm(f)
            if r < best[0]:
                best = (r, project(p))
            if r < tol:
                break
            p = project(p - damp * f / mass)
        if best[0] < tol:
            break
        q0 = np.concatenate([best[1][:d], unsquash(best[1][d:])])
        sol = scipy.optimize.least_squares(
            residual_fn, q0, method="lm", xtol=1e-15, ftol=1e-15,
            gtol=1e-15, max_nfev=1000 * (2 * d + 1))
        cand = np.concatenate([clip_to_ball(sol.x[:d]), squash(sol.x[d:])])
        r = float(np.linalg.norm(avg(cand)))
        if r < best[0]:
            best = (r, cand)
        if best[0] < tol:
            break
    if best[0] >= tol:
        raise FamilyError(
            f"second balanced point not found: best residual {best[0]:.3e} "
            f"(tolerance {tol:.3e})")
    p = best[1]
    return (p[:d], p[d:]), best[0]


def eigen_lower_from_family(spec: FamilySpec, mu=None, balanced=None,
                            check=True, rtol=1e-6):
    """Rayleigh quotient of the balanced family member against mu.

    Returns R = int |dF_{a*}|^2 / int |F_{a*}|^2 dmu at the balanced
    parameter. For a unit-mass mu this dominates the first measure
    eigenvalue; when check is set the chain
    lambda_1(mu) <= R and lambda_1(mu) (1 - 2 eps sup^(1/2)) <= 2 sup
    is verified against the pencil solver.
    """
    w = _measure_weights(spec, mu)
    mass = float(w.sum())
    if abs(mass - 1.0) > 1e-9:
        raise FamilyError("eigen_lower_from_family expects a unit-mass mu")
    if balanced is None:
        balanced, _ = balanced_point(spec, mu=mu)
    member = spec.member(balanced)
    vals = member.values
    dirichlet2 = float(np.sum(vals * (spec.mesh.stiffness @ vals)))
    l2mu = float(np.sum(w * np.sum(vals * vals, axis=1)))
    if l2mu <= 0.0:
        raise FamilyError("balanced member vanishes in L2(mu)")
    ratio = dirichlet2 / l2mu
    if check:
        mm_ = MeshMeasure("volume", w)
        lam1 = float(spectra.measure_eigs(spec.mesh, mm_, k=1).values[1])
        if lam1 > ratio * (1.0 + rtol) + rtol:
            raise FamilyError(
                f"eigenvalue bound violated: lambda_1={lam1} > R={ratio}")
    return ratio


def sandwich_holds(spec: FamilySpec, lam1, sup_energy=None):
    """Check 2 sup >= (1 - 2 eps sup^(1/2)) lambda_1 (unit-area metric)."""
    if sup_energy is None:
        sup_energy = minmax_upper(spec).sup_energy
    lhs = 2.0 * sup_energy
    rhs = (1.0 - 2.0 * spec.eps * np.sqrt(max(sup_energy, 0.0))) * lam1
    return lhs >= rhs, lhs, rhs


def extract_critical(spec: FamilySpec, report: MinMaxReport | None = None,
                     tol=1e-5, max_iters=4000):
    """Descend from the sampled argmax to an approximate critical point.

    Fills report.critical with the final energy, gradient norm, and the
    tension residual of the normalized map; E_eps(u*) <= sup_energy by
    monotone descent.
    """
    if report is None:
        report = minmax_upper(spec)
    start = spec.member(report.argmax)
    out = gl_descend(spec.mesh, start, spec.eps, tol=tol,
                     max_iters=max_iters)
    u = out["u"]
    normalized_map = SphereMap(normalize_rows(u.values))
    _, agg = tension_residual(spec.mesh, normalized_map)
    report.critical = {
        "u": u, "E_eps": out["E_eps"],
        "gradient_norm": out["gradient_norm"],
        "tension_residual": agg, "converged": out["converged"],
        "iterations": out["iterations"],
    }
    return report

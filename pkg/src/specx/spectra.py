"""Generalized eigenvalue computations and conformal maximization of the
first normalized eigenvalue.

All solves are of pencil type K v = lambda B v with the cotangent stiffness
K and a diagonal nonnegative right-hand form B. Rank-deficient B (boundary
measures, point masses, conical zeros) is handled by restricting to the
support of B; the discrete harmonic extension is implicit in the restricted
solve, which is the Schur complement onto supp(B).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse.csgraph import connected_components

from .mesh import (ConformalDensity, MeshError, MeshMeasure, area,
                   curve_measure, volume_measure)


class SolverError(RuntimeError):
    pass


class RankError(SolverError):
    pass


DENSE_CUTOFF = 2000
SCHUR_LIMIT = 1500  # supports up to this size use the reduced dense solve


@dataclass
class Spectrum:
    """Ascending eigenvalues with B-orthonormal eigenvectors."""

    values: np.ndarray
    vectors: np.ndarray  # (V, k+1), harmonically extended off supp(B)
    residuals: np.ndarray
    mass: float
    cluster_tol: float = 1e-3

    def normalized(self):
        return self.values * self.mass

    def multiplicity(self, value):
        return multiplicity(self, value)

    def to_json_dict(self):
        return {
            "values": [float(v) for v in self.values],
            "residuals": [float(r) for r in self.residuals],
            "mass": float(self.mass),
            "normalized": [float(v) for v in self.normalized()],
        }


@dataclass
class MaximizerReport:
    density: ConformalDensity
    lambda_bar: float
    iterations: int
    stationarity_gap: float
    converged: bool = True
    weak_gap: float = 0.0
    measure_rank: int = 0
    history: list = field(default_factory=list)

    def to_json_dict(self):
        return {
            "lambda_bar": float(self.lambda_bar),
            "iterations": int(self.iterations),
            "stationarity_gap": float(self.stationarity_gap),
            "converged": bool(self.converged),
            "weak_gap": float(self.weak_gap),
            "measure_rank": int(self.measure_rank),
            "density": [float(x) for x in self.density.f],
        }


# ---------------------------------------------------------------------------
# pencil solver
# ---------------------------------------------------------------------------

def _check_support(mesh, b, expect_disconnected=False):
    support = b > 0.0
    ns = int(support.sum())
    if ns == 0:
        raise RankError("right-hand form is identically zero")
    if ns < mesh.num_vertices and not expect_disconnected:
        sub = mesh.adjacency[support][:, support]
        ncomp, _ = connected_components(sub, directed=False)
        if ncomp > 1:
            warnings.warn(
                f"measure support splits into {ncomp} components; "
                "eigenvectors may localize", stacklevel=3)
    return support, ns


def solve_pencil(mesh, b, k, cluster_tol=1e-3, seed=0,
                 expect_disconnected=False):
    """First k+1 eigenpairs of K v = lambda diag(b) v.

    b may vanish on part of the mesh; the solve is then restricted to
    supp(b) (Schur complement) and eigenvectors are extended harmonically.
    """
    K = mesh.stiffness
    b = np.asarray(b, dtype=float)
    n = mesh.num_vertices
    if b.shape != (n,):
        raise MeshError("right-hand form shape mismatch")
    support, rank = _check_support(mesh, b, expect_disconnected)
    kk = k + 1
    if kk > rank:
        raise RankError(
            f"requested {kk} eigenpairs but the form has rank {rank}")
    if rank < n and (rank <= SCHUR_LIMIT or n <= DENSE_CUTOFF):
        vals, vecs = _solve_schur(K, b, support, kk)
    elif n <= DENSE_CUTOFF:
        vals, vecs = _solve_dense(K, b, kk)
    else:
        vals, vecs = _solve_sparse(K, b, kk, seed)
    order = np.argsort(vals)
    vals = vals[order][:kk]
    vecs = vecs[:, order][:, :kk]
    resid = _residuals(K, b, vals, vecs)
    return Spectrum(values=vals, vectors=vecs, residuals=resid,
                    mass=float(b.sum()), cluster_tol=cluster_tol)


def _solve_dense(K, b, kk):
    vals, vecs = sla.eigh(K.toarray(), np.diag(b))
    return vals[:kk], vecs[:, :kk]


def _solve_schur(K, b, support, kk):
    """Restrict to supp(b) with a sparse interior factorization and solve
    the reduced dense pencil; eigenvectors come back harmonically extended."""
    n = K.shape[0]
    s_idx = np.where(support)[0]
    c_idx = np.where(~support)[0]
    Kcsr = K.tocsr()
    Kss = Kcsr[s_idx][:, s_idx].toarray()
    Ksc = Kcsr[s_idx][:, c_idx]
    Kcc = Kcsr[c_idx][:, c_idx].tocsc()
    lu = spla.splu(Kcc)
    X = lu.solve(Ksc.T.toarray())
    Ktil = Kss - Ksc @ X
    Ktil = 0.5 * (Ktil + Ktil.T)
    vals, vs = sla.eigh(Ktil, np.diag(b[s_idx]))
    vals, vs = vals[:kk], vs[:, :kk]
    vecs = np.zeros((n, vs.shape[1]))
    vecs[s_idx] = vs
    vecs[c_idx] = -X @ vs
    return vals, vecs


def _solve_sparse(K, b, kk, seed):
    n = K.shape[0]
    B = sp.diags(b).tocsc()
    scale = float(K.diagonal().sum() / b.sum())
    sigma = -1e-3 * scale
    rng = np.random.default_rng(seed)
    v0 = rng.standard_normal(n)
    last_exc = None
    for ncv in (max(4 * kk + 20, 40), max(8 * kk + 40, 80)):
        try:
            vals, vecs = spla.eigsh(K.tocsc(), k=kk, M=B, sigma=sigma,
                                    which="LM", v0=v0, maxiter=5000,
                                    ncv=min(n, ncv))
            return vals, vecs
        except Exception as exc:  # ARPACK failure; retry, then surface
            last_exc = exc
    raise SolverError(f"eigensolver failed: {last_exc}")


def _residuals(K, b, vals, vecs):
    # floor the denominator so the kernel pair (lambda=0, Kv~roundoff) does
    # not report a 0/0 residual
    scale = float(np.abs(K.diagonal()).max())
    out = np.empty(len(vals))
    for i, lam in enumerate(vals):
        v = vecs[:, i]
        kv = K @ v
        r = kv - lam * (b * v)
        denom = max(np.linalg.norm(kv), 1e-6 * scale * np.linalg.norm(v))
        out[i] = np.linalg.norm(r) / max(denom, 1e-300)
    return out


# ---------------------------------------------------------------------------
# spec operations
# ---------------------------------------------------------------------------

def laplace_eigs(mesh, density=None, k=5, cluster_tol=1e-3, seed=0):
    """Eigenpairs of the Laplacian for the conformal metric density*g0."""
    if k >= mesh.num_vertices:
        raise MeshError("k must be below the vertex count")
    if isinstance(density, ConformalDensity):
        density.validate(mesh)
    mu = volume_measure(mesh, density)
    return solve_pencil(mesh, mu.weights, k, cluster_tol, seed)


def measure_eigs(mesh, mu: MeshMeasure, k=5, cluster_tol=1e-3, seed=0):
    """Eigenpairs of the Radon-measure Rayleigh quotient for mu."""
    if mu.mass <= 0.0:
        raise MeshError("measure has zero total mass")
    return solve_pencil(mesh, mu.weights, k, cluster_tol, seed)


def steklov_eigs(mesh, k=5, cluster_tol=1e-3, seed=0):
    """Steklov eigenvalues: pencil with the boundary length measure."""
    if mesh.is_closed:
        raise MeshError("Steklov problem needs a nonempty boundary")
    mu = curve_measure(mesh)
    return solve_pencil(mesh, mu.weights, k, cluster_tol, seed,
                        expect_disconnected=len(mesh.boundary_loops) > 1)


def normalized(value, mesh, density=None, boundary=False):
    """Scale-invariant normalization: eigenvalue times area (or boundary
    length for the Steklov problem)."""
    if boundary:
        return float(value) * curve_measure(mesh).mass
    return float(value) * area(mesh, density)


def multiplicity(spec: Spectrum, value):
    """Number of eigenvalues within cluster_tol (relative) of value."""
    tol = spec.cluster_tol * max(1.0, abs(value))
    return int(np.sum(np.abs(spec.values - value) <= tol))


def eigenvalue_cluster(spec: Spectrum, index, width=None):
    """Indices of the near-degenerate cluster containing eigenvalue `index`.

    width is the relative half-width of the cluster (defaults to the
    spectrum's cluster_tol)."""
    vals = spec.values
    lam = vals[index]
    if width is None:
        width = spec.cluster_tol
    tol = width * max(1.0, abs(lam))
    members = [index]
    for j in range(index + 1, len(vals)):
        if abs(vals[j] - lam) <= tol:
            members.append(j)
        else:
            break
    return members


# ---------------------------------------------------------------------------
# conformal maximization of the first normalized eigenvalue
# ---------------------------------------------------------------------------

def maximize_lambda1_conformal(mesh, step=0.5, iters=200, smoothing=True,
                               floor=0.0, tol=1e-4, k_frame=6, seed=0,
                               f0=None, cluster_tol=1e-3, frame_width=0.1):
    """Projected ascent on the conformal density for the first normalized
    eigenvalue.

    Update: f <- (1-step) f + step * sum(phi_i^2) over an orthonormal
    eigenframe of the near-degenerate lambda_1 cluster (relative width
    frame_width), renormalized to unit area, with one lumped heat-flow
    smoothing step of time h^2 per iteration. The returned lambda_bar is a
    certified lower bound for the conformal supremum.
    """
    if not mesh.is_closed:
        raise MeshError("conformal maximization expects a closed mesh")
    n = mesh.num_vertices
    if f0 is None:
        f = np.ones(n)
    else:
        f = np.asarray(f0, dtype=float).copy()
    f = np.maximum(f, floor)
    f /= area(mesh, f)
    va = mesh.vertex_areas
    smooth = None
    if smoothing:
        h2 = mesh.mean_edge_length ** 2
        op = (sp.diags(va) + h2 * mesh.stiffness).tocsc()
        smooth = spla.splu(op)
    best = (-np.inf, f.copy(), np.inf, np.inf)
    history = []
    it = 0
    for it in range(1, iters + 1):
        spec = laplace_eigs(mesh, f, k=k_frame, cluster_tol=cluster_tol,
                            seed=seed)
        lam1 = float(spec.values[1])
        cluster = eigenvalue_cluster(spec, 1, width=frame_width)
        frame = spec.vectors[:, cluster]
        u = np.sum(frame * frame, axis=1)
        u_area = float(np.sum(u * va))
        if u_area <= 0.0:
            raise SolverError("degenerate eigenframe")
        u /= u_area
        gap = float(np.sqrt(np.sum(va * (f - u) ** 2)))
        weak = float(abs(np.sum(va * (f - u))))
        lambda_bar = lam1  # area(f) == 1
        history.append((lambda_bar, gap))
        if lambda_bar > best[0] or gap < best[2]:
            best = (lambda_bar, f.copy(), gap, weak)
        if gap < tol:
            break
        f = (1.0 - step) * f + step * u
        if smooth is not None:
            f = smooth.solve(va * f)
        f = np.maximum(f, floor)
        f /= area(mesh, f)
    lambda_bar, f, gap, weak = best
    density = ConformalDensity(np.maximum(f, 0.0))
    return MaximizerReport(
        density=density, lambda_bar=lambda_bar, iterations=it,
        stationarity_gap=gap, converged=gap < 10 * tol, weak_gap=weak,
        measure_rank=int(np.sum(f * va > 0)), history=history)

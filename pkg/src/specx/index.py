"""Spectral and energy index/nullity of discrete harmonic maps, and the
index composition law under totally geodesic embeddings.

Both quadratic forms are assembled against the lumped energy-density mass
B = diag((K Phi . Phi)_i), i.e. the |dPhi|^2 measure; in that normalization
the spectral threshold sits at eigenvalue 1 (the induced-metric eigenvalue
2 for the half-density convention). The energy form is restricted to
pointwise-orthogonal sections through an explicit per-vertex orthonormal
tangent frame, which makes it the exact Hessian of the constrained
discrete energy at a discrete critical point.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import spectra
from .harmonic import SphereMap, embed_map, energy_shares, tension_residual
from .mesh import MeshError


NORMALIZATION = "density |dPhi|^2, threshold 1"

DENSE_LIMIT = 8000

RESIDUAL_WARN = 1e-2


@dataclass
class IndexReport:
    ind_S: int
    nul_S: int
    ind_E: int | None
    margins: list
    normalization: str = NORMALIZATION

    def to_json_dict(self):
        return {
            "ind_S": int(self.ind_S),
            "nul_S": int(self.nul_S),
            "ind_E": None if self.ind_E is None else int(self.ind_E),
            "margins": [float(m) for m in self.margins],
            "normalization": self.normalization,
        }


def _warn_if_not_harmonic(mesh, phi):
    _, agg = tension_residual(mesh, phi)
    if agg > RESIDUAL_WARN:
        warnings.warn(
            f"map has tension residual {agg:.3g}; index counts assume an "
            "approximately harmonic map", stacklevel=3)
    return agg


def spectral_index(mesh, phi: SphereMap, cluster_tol=1e-3, max_pairs=48):
    """(ind_S, nul_S): position and multiplicity of the threshold eigenvalue.

    Counts generalized eigenvalues of (K, B) with B the |dPhi|^2 lumped
    mass: ind_S is the number strictly below 1 (outside the threshold
    cluster), nul_S the multiplicity at 1 within cluster_tol.
    """
    _warn_if_not_harmonic(mesh, phi)
    b = 2.0 * energy_shares(mesh, phi)
    if b.sum() <= 0.0:
        raise MeshError("zero-energy map has no induced spectral problem")
    b = np.maximum(b, 0.0)
    rank = int(np.sum(b > 0))
    k = min(12, rank - 1)
    while True:
        spec = spectra.solve_pencil(mesh, b, k, cluster_tol=cluster_tol)
        if spec.values[-1] > 1.0 + 10 * cluster_tol or k == rank - 1:
            break
        k = min(2 * k, rank - 1)
        if k > max_pairs:
            raise spectra.SolverError(
                "threshold eigenvalue not reached within max_pairs")
    vals = spec.values
    in_cluster = np.abs(vals - 1.0) <= cluster_tol
    ind_s = int(np.sum(vals < 1.0 - cluster_tol))
    nul_s = int(np.sum(in_cluster))
    below = vals[vals < 1.0 - cluster_tol]
    above = vals[vals > 1.0 + cluster_tol]
    margins = []
    if len(vals[in_cluster]):
        margins.append(float(np.abs(vals[in_cluster] - 1.0).max()))
    if len(below):
        margins.append(float(1.0 - below.max()))
    if len(above):
        margins.append(float(above.min() - 1.0))
    return ind_s, nul_s, margins


def tangent_frames(phi: SphereMap):
    """Per-vertex orthonormal frames spanning the orthogonal complement of
    Phi(x), built by Gram-Schmidt from the canonical basis with the most
    Phi-parallel axis dropped (deterministic)."""
    vals = phi.values
    v, d = vals.shape
    drop = np.argmax(np.abs(vals), axis=1)
    frames = np.empty((v, d - 1, d))
    for i in range(v):
        cols = [c for c in range(d) if c != drop[i]]
        basis = np.eye(d)[cols]
        normal = vals[i]
        out = []
        for vec in basis:
            w = vec - (vec @ normal) * normal
            for prev in out:
                w = w - (w @ prev) * prev
            nrm = np.linalg.norm(w)
            if nrm < 1e-10:
                raise MeshError("tangent frame construction failed")
            out.append(w / nrm)
        frames[i] = np.asarray(out)
    return frames


def energy_hessian(mesh, phi: SphereMap, frames=None):
    """Dense matrix of the second variation of energy over sections
    pointwise orthogonal to Phi, in tangent-frame coordinates."""
    vals = phi.values
    norms = np.linalg.norm(vals, axis=1)
    if np.any(np.abs(norms - 1.0) > 1e-9):
        raise MeshError("energy index needs a unit-norm sphere map")
    if frames is None:
        frames = tangent_frames(phi)
    v, n, d = frames.shape
    dim = v * n
    if dim > DENSE_LIMIT:
        raise MeshError(
            f"energy Hessian dimension {dim} exceeds the dense limit; "
            "use a coarser mesh")
    K = mesh.stiffness.tocoo()
    b = 2.0 * energy_shares(mesh, phi)
    Q = np.zeros((dim, dim))
    # off-diagonal frame overlaps: K_ij <t_i^alpha, t_j^beta>
    G = np.einsum("ead,ebd->eab", frames[K.row], frames[K.col])
    blocks = K.data[:, None, None] * G
    for e in range(len(K.data)):
        i, j = K.row[e], K.col[e]
        Q[i * n:(i + 1) * n, j * n:(j + 1) * n] += blocks[e]
    Q[np.arange(dim), np.arange(dim)] -= np.repeat(b, n)
    return 0.5 * (Q + Q.T)


def energy_index(mesh, phi: SphereMap, margin_factor=0.05, frames=None):
    """Morse index of the energy at phi: negative directions of the second
    variation over pointwise-orthogonal sections.

    The form is diagonalized against the lumped L2 product on sections, so
    eigenvalues carry PDE units: genuine negative directions of the
    Schroedinger-type operator sit at O(1) (e.g. -2 for extra coordinates
    of an embedded map) while the discretely broken Moebius null modes sit
    at -O(h^2). The margin is margin_factor times the area-mean of the
    energy density (the operator's potential scale); eigenvalues below
    -margin are counted and the distances of the nearest kept/discarded
    eigenvalues to the threshold are reported.
    """
    _warn_if_not_harmonic(mesh, phi)
    Q = energy_hessian(mesh, phi, frames=frames)
    n_frame = phi.ambient_dim - 1
    msec = np.repeat(mesh.vertex_areas, n_frame)
    wh = 1.0 / np.sqrt(msec)
    Qw = wh[:, None] * Q * wh[None, :]
    evals = np.linalg.eigvalsh(0.5 * (Qw + Qw.T))
    e_scale = 2.0 * float(energy_shares(mesh, phi).sum()) \
        / float(mesh.vertex_areas.sum())
    margin = margin_factor * e_scale
    ind_e = int(np.sum(evals < -margin))
    kept = evals[evals < -margin]
    rest = evals[evals >= -margin]
    margins = []
    if len(kept):
        margins.append(float(-margin - kept.max()))
    if len(rest):
        margins.append(float(rest.min() + margin))
    return ind_e, margins


def index_report(mesh, phi: SphereMap, cluster_tol=1e-3,
                 with_energy=True) -> IndexReport:
    ind_s, nul_s, margins_s = spectral_index(mesh, phi,
                                             cluster_tol=cluster_tol)
    ind_e = None
    margins = list(margins_s)
    if with_energy:
        ind_e, margins_e = energy_index(mesh, phi)
        margins += margins_e
    return IndexReport(ind_S=ind_s, nul_S=nul_s, ind_E=ind_e,
                       margins=margins)


def check_composition_law(mesh, phi: SphereMap, m, cluster_tol=1e-3):
    """Both sides of ind_E(i . Phi) = ind_E(Phi) + (m - n) ind_S(Phi) for
    the totally geodesic embedding into the m-sphere, computed
    independently."""
    n = phi.ambient_dim - 1
    if m < n:
        raise MeshError("embedding target dimension below the map's")
    embedded = embed_map(phi, m + 1)
    lhs, _ = energy_index(mesh, embedded)
    ind_e, _ = energy_index(mesh, phi)
    ind_s, _, _ = spectral_index(mesh, phi, cluster_tol=cluster_tol)
    rhs = ind_e + (m - n) * ind_s
    return {"lhs": int(lhs), "rhs": int(rhs), "equal": lhs == rhs,
            "ind_E": int(ind_e), "ind_S": int(ind_s)}

"""Sphere-valued maps: Dirichlet energy, tension residuals, projected flow,
induced conformal densities, and conformality diagnostics.

The discrete energy density at a vertex is the cotangent-split lumping of
the incident face Dirichlet contributions, e_i = (K Phi . Phi)_i / A_i.
With this choice the identities energy == total density mass and
<residual_i, Phi_i> == 0 hold exactly, and the second variation assembled
in the index module is the exact Hessian of the constrained discrete
energy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import ConformalDensity, MeshMeasure
from . import spectra


class MapError(ValueError):
    pass


@dataclass
class SphereMap:
    """Per-vertex unit vectors in R^(n+1), a discrete map into the sphere."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2 or self.values.shape[1] < 3:
            raise MapError("sphere map needs ambient dimension >= 3")
        norms = np.linalg.norm(self.values, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-12):
            raise MapError("sphere map values must be unit vectors")

    @property
    def ambient_dim(self):
        return self.values.shape[1]

    def to_json_dict(self):
        return {"ambient_dim": int(self.ambient_dim),
                "values": [[float(x) for x in row] for row in self.values]}

    @classmethod
    def from_json_dict(cls, doc):
        vals = np.asarray(doc["values"], dtype=float)
        if vals.shape[1] != int(doc["ambient_dim"]):
            raise MapError("ambient_dim does not match values")
        return cls(vals)


@dataclass
class HopfField:
    """Per-triangle complex Hopf differential values in the face charts."""

    values: np.ndarray

    def magnitude(self):
        return np.abs(self.values)


def normalize_rows(values):
    norms = np.linalg.norm(values, axis=1, keepdims=True)
    if np.any(norms <= 0.0):
        raise MapError("cannot normalize a zero vector to the sphere")
    return values / norms


def identity_sphere_map(mesh, ambient_dim=3):
    """Vertex positions as a map to the sphere, padded with zero coordinates
    for larger ambient dimension. Vertices must lie on the unit sphere."""
    vals = mesh.vertices
    if ambient_dim < 3:
        raise MapError("ambient dimension must be >= 3")
    if ambient_dim > 3:
        pad = np.zeros((mesh.num_vertices, ambient_dim - 3))
        vals = np.hstack([vals, pad])
    return SphereMap(normalize_rows(vals))


def embed_map(phi: SphereMap, ambient_dim):
    """Totally geodesic embedding into a higher-dimensional sphere (zero
    padding)."""
    if ambient_dim < phi.ambient_dim:
        raise MapError("target ambient dimension too small")
    if ambient_dim == phi.ambient_dim:
        return SphereMap(phi.values.copy())
    pad = np.zeros((len(phi.values), ambient_dim - phi.ambient_dim))
    return SphereMap(np.hstack([phi.values, pad]))


def torus_clifford_map(mesh):
    """Conformal immersion of the square torus into the 3-sphere,
    (cos 2pi x, sin 2pi x, cos 2pi y, sin 2pi y)/sqrt(2).

    Exactly conformal for the square class (tau = i); for other moduli it
    is still a valid sphere-valued map but no longer conformal.
    """
    if not mesh.chart_meta:
        raise MapError("torus map needs a mesh with a flat chart")
    tau = complex(mesh.chart_meta["tau_re"], mesh.chart_meta["tau_im"])
    basis = np.array([[1.0, tau.real], [0.0, tau.imag]])
    coords = mesh.vertices[:, :2] @ np.linalg.inv(basis).T
    ang = 2.0 * np.pi * coords
    vals = np.stack([np.cos(ang[:, 0]), np.sin(ang[:, 0]),
                     np.cos(ang[:, 1]), np.sin(ang[:, 1])], axis=1)
    return SphereMap(vals / np.sqrt(2.0))


def torus_collapse_map(mesh):
    """Degree-one Lipschitz map from a flat torus to the sphere.

    The inscribed disk of the fundamental cell wraps once over the sphere
    (colatitude proportional to the chart radius); the complement collapses
    to the north pole, so the map descends to the torus.
    """
    if not mesh.chart_meta:
        raise MapError("torus map needs a mesh with a flat chart")
    tau = complex(mesh.chart_meta["tau_re"], mesh.chart_meta["tau_im"])
    basis = np.array([[1.0, tau.real], [0.0, tau.imag]])
    coords = mesh.vertices[:, :2] @ np.linalg.inv(basis).T  # lattice coords
    center = coords - 0.5
    r = np.linalg.norm(center @ basis.T, axis=1)
    r_max = 0.5 * min(1.0, abs(tau))  # inscribed radius in the chart metric
    rho = np.minimum(r / r_max, 1.0)
    theta = np.pi * rho  # 0 at the cell center, pi on the collapsed region
    alpha = np.arctan2(center[:, 1], center[:, 0])
    vals = np.stack([np.sin(theta) * np.cos(alpha),
                     np.sin(theta) * np.sin(alpha),
                     np.cos(theta)], axis=1)
    return SphereMap(normalize_rows(vals))


def power_map(mesh, degree=2):
    """Degree-d branched conformal self-map of the sphere (zated to z^d in a
    stereographic chart), evaluated with pole-stable half-angle formulas.

    Vertices must lie on the unit sphere; the two poles are branch points
    and map to themselves.
    """
    v = mesh.vertices
    if np.max(np.abs(np.linalg.norm(v, axis=1) - 1.0)) > 1e-9:
        raise MapError("power map needs vertices on the unit sphere")
    d = int(degree)
    if d < 1:
        raise MapError("degree must be >= 1")
    z = np.clip(v[:, 2], -1.0, 1.0)
    theta = np.arccos(z)
    half = np.tan(0.5 * theta)
    half_new = half ** d
    theta_new = 2.0 * np.arctan(half_new)
    phi_az = np.arctan2(v[:, 1], v[:, 0])
    s = np.sin(theta_new)
    out = np.stack([s * np.cos(d * phi_az), s * np.sin(d * phi_az),
                    np.cos(theta_new)], axis=1)
    return SphereMap(normalize_rows(out))


# ---------------------------------------------------------------------------
# energy and density
# ---------------------------------------------------------------------------

def energy(mesh, phi):
    """Dirichlet energy 0.5 * sum_a v_a^T K v_a; conformally invariant."""
    vals = _values(phi)
    K = mesh.stiffness
    return 0.5 * float(np.sum(vals * (K @ vals)))


def _values(phi):
    if isinstance(phi, (SphereMap,)):
        return phi.values
    return np.asarray(phi, dtype=float)


def energy_shares(mesh, phi):
    """Per-vertex lumped 0.5*|dPhi|^2 shares; sums exactly to energy().

    Roundoff-level shares are snapped to zero so constant maps yield an
    exactly degenerate density.
    """
    vals = _values(phi)
    shares = 0.5 * np.sum(vals * (mesh.stiffness @ vals), axis=1)
    shares[np.abs(shares) <= 1e-12] = 0.0
    return shares


def energy_density(mesh, phi):
    """Energy density 0.5*|dPhi|^2 as a conformal density.

    Total lumped mass equals energy(mesh, phi) exactly. The result may
    vanish (constant map) or have isolated zeros (branch points); callers
    using it as a metric must check positivity.
    """
    shares = energy_shares(mesh, phi)
    f = shares / mesh.vertex_areas
    return ConformalDensity(np.maximum(f, 0.0))


def energy_measure(mesh, phi):
    """Energy density as a vertex-lumped measure with mass == energy."""
    return MeshMeasure("volume", np.maximum(energy_shares(mesh, phi), 0.0))


def tension_residual(mesh, phi):
    """Residual of the discrete harmonic map equation.

    Returns (per_vertex, aggregate): per-vertex norms of the tangentially
    projected (K Phi - diag(e) M Phi) divided by the vertex areas, and the
    dimensionless aggregate L2 norm relative to the L2 size of the energy
    density e = |dPhi|^2.
    """
    vals = _values(phi)
    K = mesh.stiffness
    va = mesh.vertex_areas
    kphi = K @ vals
    coupling = np.sum(kphi * vals, axis=1)  # (K Phi . Phi)_i = e_i A_i
    r = kphi - coupling[:, None] * vals
    # exact tangential projection (coupling already removes the normal part
    # for unit maps; re-project to guard against roundoff)
    r -= np.sum(r * vals, axis=1)[:, None] * vals
    per_vertex = np.linalg.norm(r, axis=1) / va
    e = coupling / va
    norm_e = np.sqrt(np.sum(va * e * e))
    aggregate = float(np.sqrt(np.sum(va * per_vertex ** 2))
                      / max(norm_e, 1e-300))
    return per_vertex, aggregate


def harmonic_flow(mesh, phi0, steps=100, dt=None):
    """Explicit projected tension-field flow toward discrete harmonic maps.

    Phi <- normalize(Phi - dt * M^{-1}(K Phi - diag(e) M Phi)). The update
    is exactly tangential, so the pointwise norm can only grow before the
    projection and the unit constraint is restored exactly each step.
    """
    vals = _values(phi0).copy()
    K = mesh.stiffness
    va = mesh.vertex_areas
    rate = K.diagonal() / va
    bound = 1.0 / float(rate.max())
    if dt is None:
        dt = 0.5 * bound
    if dt * float(rate.max()) >= 1.0:
        raise MapError(f"flow step {dt} violates the stability bound {bound}")
    for _ in range(steps):
        kphi = K @ vals
        coupling = np.sum(kphi * vals, axis=1)
        r = (kphi - coupling[:, None] * vals) / va[:, None]
        vals = normalize_rows(vals - dt * r)
    return SphereMap(vals)


def check_eigenvalue_two(mesh, phi, cluster_tol=1e-3, k=8):
    """Whether 2 is an eigenvalue of the Laplacian for the induced metric
    0.5*|dPhi|^2 g, with its multiplicity and the gap to the spectrum."""
    mu = energy_measure(mesh, phi)
    if mu.mass <= 0.0:
        raise MapError("map has zero energy; induced metric is degenerate")
    k = min(k, int(np.sum(mu.weights > 0)) - 1)
    spec = spectra.measure_eigs(mesh, mu, k=k, cluster_tol=cluster_tol)
    mult = spectra.multiplicity(spec, 2.0)
    tol = cluster_tol * 2.0
    outside = spec.values[np.abs(spec.values - 2.0) > tol]
    gap = float(np.min(np.abs(outside - 2.0))) if len(outside) else np.inf
    return {"present": mult > 0, "multiplicity": int(mult), "gap": gap,
            "spectrum": spec}


# ---------------------------------------------------------------------------
# Hopf differential
# ---------------------------------------------------------------------------

def _face_charts(mesh):
    """Isometric 2D chart per face with the first edge on the real axis."""
    co = mesh.corners
    e1 = co[:, 1] - co[:, 0]
    e2 = co[:, 2] - co[:, 0]
    l1 = np.linalg.norm(e1, axis=1)
    xhat = e1 / l1[:, None]
    x2 = np.sum(e2 * xhat, axis=1)
    yvec = e2 - x2[:, None] * xhat
    y2 = np.linalg.norm(yvec, axis=1)
    return l1, x2, y2


def hopf_differential(mesh, phi):
    """Per-face Hopf differential |Phi_x|^2 - |Phi_y|^2 - 2i<Phi_x, Phi_y>
    in the deterministic face chart (first edge = real axis)."""
    vals = _values(phi)
    tri = mesh.triangles
    l1, x2, y2 = _face_charts(mesh)
    v0 = vals[tri[:, 0]]
    v1 = vals[tri[:, 1]]
    v2 = vals[tri[:, 2]]
    # gradient of the linear interpolant in chart coordinates
    dx = (v1 - v0) / l1[:, None]
    dy = (v2 - v0 - x2[:, None] * dx) / y2[:, None]
    h = (np.sum(dx * dx, axis=1) - np.sum(dy * dy, axis=1)
         - 2.0j * np.sum(dx * dy, axis=1))
    return HopfField(h)


def hopf_to_csv(field: HopfField, path):
    with open(str(path), "w") as fh:
        fh.write("face_id,re,im,abs\n")
        for i, z in enumerate(field.values):
            fh.write(f"{i},{float(z.real)!r},{float(z.imag)!r},"
                     f"{float(abs(z))!r}\n")

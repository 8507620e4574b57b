import numpy as np
import pytest

from specx import spectra
from specx.mesh import (ConformalDensity, MeshError, MeshMeasure,
                        curve_measure, volume_measure)
from specx.spectra import (RankError, laplace_eigs,
                           maximize_lambda1_conformal, measure_eigs,
                           multiplicity, normalized, steklov_eigs)

from conftest import build_annulus_mesh


def test_torus_spectrum(torus32):
    spec = laplace_eigs(torus32, k=6)
    lam1 = 4 * np.pi ** 2
    assert abs(spec.values[1] - lam1) < 0.01 * lam1
    assert multiplicity(spec, spec.values[1]) == 4
    assert abs(spec.values[0]) < 1e-8
    # constant kernel vector
    v0 = spec.vectors[:, 0]
    assert np.std(v0) / np.abs(v0).mean() < 1e-6


def test_sphere_spectrum(sphere4):
    spec = laplace_eigs(sphere4, k=6)
    assert abs(spec.values[1] - 2.0) < 0.01 * 2.0
    assert multiplicity(spec, 2.0) == 3


def test_density_scaling(sphere3):
    base = laplace_eigs(sphere3, k=3)
    c = 2.5
    f = ConformalDensity(np.full(sphere3.num_vertices, c))
    scaled = laplace_eigs(sphere3, f, k=3)
    assert np.allclose(scaled.values[1:], base.values[1:] / c, rtol=1e-9)
    assert np.isclose(scaled.normalized()[1], base.normalized()[1],
                      rtol=1e-9)


def test_residual_invariant(sphere3, torus32, disk):
    for spec in (laplace_eigs(sphere3, k=5), laplace_eigs(torus32, k=5),
                 steklov_eigs(disk, k=4)):
        assert spec.residuals.max() < 1e-8


def test_measure_volume_matches_laplace(sphere3):
    direct = laplace_eigs(sphere3, k=4)
    mu = volume_measure(sphere3)
    via_measure = measure_eigs(sphere3, mu, k=4)
    assert np.allclose(direct.values, via_measure.values, rtol=1e-10)


def test_measure_energy_density_eigenvalue_two(sphere4):
    from specx.harmonic import energy_measure, identity_sphere_map
    mu = energy_measure(sphere4, identity_sphere_map(sphere4))
    spec = measure_eigs(sphere4, mu, k=6)
    assert multiplicity(spec, 2.0) >= 3


def test_measure_point_mass(torus32):
    w = np.zeros(torus32.num_vertices)
    w[7] = 1.0
    mu = MeshMeasure("volume", w)
    spec = measure_eigs(torus32, mu, k=0)
    assert abs(spec.values[0]) < 1e-10
    with pytest.raises(RankError):
        measure_eigs(torus32, mu, k=1)


def test_measure_scaling_invariance(torus32):
    mu = volume_measure(torus32)
    s1 = measure_eigs(torus32, mu, k=3)
    s2 = measure_eigs(torus32, mu.scaled(4.0), k=3)
    assert np.allclose(s2.values[1:], s1.values[1:] / 4.0, rtol=1e-9)
    assert np.allclose(s2.normalized()[1:], s1.normalized()[1:], rtol=1e-9)


def test_steklov_disk(disk):
    spec = steklov_eigs(disk, k=4)
    sigma_bar = spec.normalized()
    assert abs(spec.values[0]) < 1e-9
    assert abs(spec.values[1] - 1.0) < 0.02
    assert abs(spec.values[2] - 1.0) < 0.02
    assert abs(sigma_bar[1] - 2 * np.pi) < 0.02 * 2 * np.pi


def annulus_steklov_oracle(r_in):
    """Smallest positive Steklov eigenvalue of the flat annulus [r_in, 1]
    by separation of variables: independent 2x2 pencils per mode."""
    best = np.inf
    # radial mode: u = A + B log r
    pencil_a = np.array([[0.0, 1.0], [0.0, -1.0 / r_in]])
    pencil_b = np.array([[1.0, 0.0], [1.0, np.log(r_in)]])
    vals = [v for v in np.linalg.eigvals(np.linalg.solve(pencil_b, pencil_a))
            if v.imag == 0 and v.real > 1e-12]
    best = min([best] + [float(v.real) for v in vals])
    for k in (1, 2, 3):
        # u = (A r^k + B r^-k) * angular; outer normal derivative at r=1,
        # inner (pointing to decreasing r) at r=r_in
        A = np.array([[k, -k],
                      [-k * r_in ** (k - 1), k * r_in ** (-k - 1)]])
        B = np.array([[1.0, 1.0],
                      [r_in ** k, r_in ** (-k)]])
        vals = np.linalg.eigvals(np.linalg.solve(B, A))
        vals = [float(v.real) for v in vals
                if abs(v.imag) < 1e-12 and v.real > 1e-12]
        best = min([best] + vals)
    return best


def test_steklov_annulus_against_oracle():
    r_in = 0.4
    mesh = build_annulus_mesh(r_in=r_in, n_rings=16, n_around=96)
    spec = steklov_eigs(mesh, k=2)
    oracle = annulus_steklov_oracle(r_in)
    assert oracle < 1.0
    assert abs(spec.values[1] - oracle) < 0.02 * oracle
    assert spec.values[1] < 1.0


def test_steklov_scaling(disk):
    base = steklov_eigs(disk, k=2)
    scaled = steklov_eigs(disk.scaled(2.0), k=2)
    assert np.allclose(scaled.values[1:], base.values[1:] / 2.0, rtol=1e-9)
    assert np.allclose(scaled.normalized()[1:], base.normalized()[1:],
                       rtol=1e-9)


def test_steklov_closed_mesh_error(sphere3):
    with pytest.raises(MeshError):
        steklov_eigs(sphere3, k=2)


def test_normalized_helpers(torus32, disk):
    assert np.isclose(normalized(2.0, torus32), 2.0)  # unit area
    L = curve_measure(disk).mass
    assert np.isclose(normalized(1.0, disk, boundary=True), L)


def test_multiplicity_edges(sphere3):
    spec = laplace_eigs(sphere3, k=6)
    assert multiplicity(spec, 0.0) == 1
    assert multiplicity(spec, 1.0) == 0  # between clusters


def test_maximizer_sphere(sphere3):
    rep = maximize_lambda1_conformal(sphere3, iters=80)
    target = 8 * np.pi
    assert abs(rep.lambda_bar - target) < 0.02 * target
    assert rep.stationarity_gap < 1e-3
    assert rep.converged


def test_maximizer_torus_multistart(torus32):
    target = 4 * np.pi ** 2
    rng_seeds = range(3)
    for seed in rng_seeds:
        rng = np.random.default_rng(seed)
        f0 = rng.uniform(0.3, 3.0, torus32.num_vertices)
        rep = maximize_lambda1_conformal(torus32, iters=120, f0=f0)
        assert abs(rep.lambda_bar - target) < 0.02 * target
        # density converges to the flat metric
        assert rep.density.f.std() < 0.05 * rep.density.f.mean()


def test_maximizer_fixed_point(torus32):
    rep = maximize_lambda1_conformal(torus32, iters=40)
    again = maximize_lambda1_conformal(torus32, iters=1, f0=rep.density.f)
    assert abs(again.lambda_bar - rep.lambda_bar) < 1e-6 * rep.lambda_bar


def test_maximizer_requires_closed(disk):
    with pytest.raises(MeshError):
        maximize_lambda1_conformal(disk, iters=2)


def test_conical_zeros_sparse_path():
    # isolated density zeros on a mesh above the dense cutoff exercise the
    # shift-invert solve with a singular right-hand form
    from specx.mesh import build_torus_mesh
    torus = build_torus_mesh(1j, 64)
    f = np.ones(torus.num_vertices)
    f[[5, 600, 2000]] = 0.0
    spec = laplace_eigs(torus, ConformalDensity(f).validate(torus), k=5)
    assert spec.residuals.max() < 1e-8
    assert np.all(np.isfinite(spec.vectors))
    assert abs(spec.values[1] - 4 * np.pi ** 2) < 0.01 * 4 * np.pi ** 2


def test_k_bounds(sphere3):
    with pytest.raises(MeshError):
        laplace_eigs(sphere3, k=sphere3.num_vertices)


def test_courant_bound_genus0(sphere3, sphere4):
    for mesh in (sphere3, sphere4):
        spec = laplace_eigs(mesh, k=6)
        assert multiplicity(spec, spec.values[1]) <= 3


def test_puncture_domain_monotonicity_logged(torus32, capsys):
    # Neumann eigenvalue drift under puncturing is reported, not asserted:
    # there is no monotonicity claim to check against
    from specx.mesh import puncture
    base = laplace_eigs(torus32, k=1).normalized()[1]
    sub = puncture(torus32, [0], 0.08)
    mu = volume_measure(sub)
    spec = measure_eigs(sub, mu, k=1)
    lam_bar = spec.values[1] * mu.mass
    print(f"puncture Neumann drift: closed={base:.4f} "
          f"punctured={lam_bar:.4f} delta={lam_bar - base:+.4f}")
    assert np.isfinite(lam_bar)


def test_spectrum_json(sphere3):
    spec = laplace_eigs(sphere3, k=3)
    doc = spec.to_json_dict()
    assert set(doc) == {"values", "residuals", "mass", "normalized"}
    assert len(doc["values"]) == len(doc["normalized"]) == 4
    assert np.isclose(doc["normalized"][1],
                      doc["values"][1] * doc["mass"])

import numpy as np
import pytest

from specx import harmonic as hm
from specx import index as ix
from specx.harmonic import SphereMap, embed_map, power_map
from specx.mesh import MeshError


@pytest.fixture(scope="module")
def flowed_deg2(sphere3):
    return hm.harmonic_flow(sphere3, power_map(sphere3, 2), steps=800)


def test_identity_indices(sphere3, flowed_identity3):
    ind_s, nul_s, _ = ix.spectral_index(sphere3, flowed_identity3)
    assert (ind_s, nul_s) == (1, 3)
    ind_e, _ = ix.energy_index(sphere3, flowed_identity3)
    assert ind_e == 0


def test_equatorial_embedding_same_spectral(sphere3, flowed_identity3):
    five = embed_map(flowed_identity3, 5)
    ind_s, nul_s, _ = ix.spectral_index(sphere3, five)
    assert (ind_s, nul_s) == (1, 3)


def test_constant_map_errors(sphere3):
    const = SphereMap(np.tile([1.0, 0.0, 0.0], (sphere3.num_vertices, 1)))
    with pytest.raises(MeshError):
        ix.spectral_index(sphere3, const)


def test_composition_law(sphere3, flowed_identity3):
    for m in (2, 3, 4, 5):
        out = ix.check_composition_law(sphere3, flowed_identity3, m)
        assert out["equal"]
        assert out["lhs"] == m - 2  # saturates the ambient lower bound
    with pytest.raises(MeshError):
        ix.check_composition_law(sphere3, flowed_identity3, 1)


def test_composition_law_degree2(sphere3, flowed_deg2):
    out = ix.check_composition_law(sphere3, flowed_deg2, 4)
    assert out["equal"]
    assert out["lhs"] == out["ind_E"] + 2 * out["ind_S"]


def test_degree2_spectral_index(sphere3, flowed_deg2):
    ind_s, nul_s, _ = ix.spectral_index(sphere3, flowed_deg2)
    assert nul_s >= 3
    assert ind_s >= 2  # the induced metric exceeds the first-eigenvalue cap


def test_scaling_invariance(sphere3, flowed_identity3):
    doubled = sphere3.scaled(2.0)
    assert ix.spectral_index(doubled, flowed_identity3)[:2] == (1, 3)
    assert ix.energy_index(doubled, flowed_identity3)[0] == 0


def test_frame_rotation_invariance(sphere3, flowed_identity3):
    frames = ix.tangent_frames(flowed_identity3)
    rng = np.random.default_rng(0)
    th = rng.uniform(0, 2 * np.pi, sphere3.num_vertices)
    c, s = np.cos(th), np.sin(th)
    rotated = np.empty_like(frames)
    rotated[:, 0, :] = c[:, None] * frames[:, 0, :] \
        + s[:, None] * frames[:, 1, :]
    rotated[:, 1, :] = -s[:, None] * frames[:, 0, :] \
        + c[:, None] * frames[:, 1, :]
    base = ix.energy_index(sphere3, flowed_identity3, frames=frames)[0]
    rot = ix.energy_index(sphere3, flowed_identity3, frames=rotated)[0]
    assert base == rot == 0


def test_counts_stable_under_tol_halving(sphere3, flowed_identity3):
    a = ix.spectral_index(sphere3, flowed_identity3, cluster_tol=1e-3)[:2]
    b = ix.spectral_index(sphere3, flowed_identity3, cluster_tol=5e-4)[:2]
    assert a == b


def test_normalized_eigenvalue_identity(sphere3, flowed_identity3):
    # 2 E(Phi) equals the ind_S-th normalized eigenvalue of the induced
    # metric (threshold-1 normalization carries mass 2E)
    from specx.spectra import solve_pencil
    b = 2.0 * hm.energy_shares(sphere3, flowed_identity3)
    ind_s, _, _ = ix.spectral_index(sphere3, flowed_identity3)
    spec = solve_pencil(sphere3, b, ind_s + 1)
    lam_bar = spec.values[ind_s] * spec.mass
    two_e = 2.0 * hm.energy(sphere3, flowed_identity3)
    assert abs(lam_bar - two_e) < 0.02 * two_e


def test_nonharmonic_warns(sphere3):
    from specx.spectra import SolverError
    rng = np.random.default_rng(1)
    sloppy = SphereMap(hm.normalize_rows(
        rng.standard_normal((sphere3.num_vertices, 3))))
    # warns about the residual; the huge induced density then pushes the
    # threshold far down the spectrum and the pair budget runs out
    with pytest.warns(UserWarning):
        with pytest.raises(SolverError):
            ix.spectral_index(sphere3, sloppy)


def test_index_report_json(sphere3, flowed_identity3):
    rep = ix.index_report(sphere3, flowed_identity3)
    doc = rep.to_json_dict()
    assert doc["ind_S"] == 1 and doc["nul_S"] == 3 and doc["ind_E"] == 0
    assert doc["normalization"] == "density |dPhi|^2, threshold 1"
    assert len(doc["margins"]) >= 2

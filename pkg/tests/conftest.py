import numpy as np
import pytest

from specx import harmonic, mesh as meshmod


def build_disk_mesh(n_rings=16):
    """Unit disk triangulated by concentric rings (6*r vertices on ring r)."""
    verts = [(0.0, 0.0, 0.0)]
    rings = []
    for r in range(1, n_rings + 1):
        m = 6 * r
        ring = []
        for k in range(m):
            th = 2.0 * np.pi * k / m
            ring.append(len(verts))
            verts.append((r / n_rings * np.cos(th),
                          r / n_rings * np.sin(th), 0.0))
        rings.append(ring)
    faces = []
    for k in range(6):
        faces.append((0, rings[0][k], rings[0][(k + 1) % 6]))
    for r in range(1, n_rings):
        inner, outer = rings[r - 1], rings[r]
        ni, no = len(inner), len(outer)
        i = j = 0
        while i < ni or j < no:
            ti, tj = (i + 1) / ni, (j + 1) / no
            if j < no and (tj <= ti or i >= ni):
                faces.append((inner[i % ni], outer[j % no],
                              outer[(j + 1) % no]))
                j += 1
            else:
                faces.append((inner[i % ni], outer[j % no],
                              inner[(i + 1) % ni]))
                i += 1
    return meshmod.TriMesh(np.asarray(verts, dtype=float),
                           np.asarray(faces, dtype=np.int64))


def build_annulus_mesh(r_in=0.4, n_rings=12, n_around=48):
    """Annulus r in [r_in, 1] with a structured polar grid."""
    verts = []
    for r_idx in range(n_rings + 1):
        r = r_in + (1.0 - r_in) * r_idx / n_rings
        for k in range(n_around):
            th = 2.0 * np.pi * k / n_around
            verts.append((r * np.cos(th), r * np.sin(th), 0.0))
    faces = []

    def vid(r_idx, k):
        return r_idx * n_around + (k % n_around)

    for r_idx in range(n_rings):
        for k in range(n_around):
            faces.append((vid(r_idx, k), vid(r_idx + 1, k),
                          vid(r_idx + 1, k + 1)))
            faces.append((vid(r_idx, k), vid(r_idx + 1, k + 1),
                          vid(r_idx, k + 1)))
    return meshmod.TriMesh(np.asarray(verts, dtype=float),
                           np.asarray(faces, dtype=np.int64))


@pytest.fixture(scope="session")
def sphere3():
    return meshmod.build_sphere_mesh(3)


@pytest.fixture(scope="session")
def sphere4():
    return meshmod.build_sphere_mesh(4)


@pytest.fixture(scope="session")
def torus32():
    return meshmod.build_torus_mesh(1j, 32)


@pytest.fixture(scope="session")
def disk():
    return build_disk_mesh(16)


@pytest.fixture(scope="session")
def identity3(sphere3):
    return harmonic.identity_sphere_map(sphere3)


@pytest.fixture(scope="session")
def flowed_identity3(sphere3, identity3):
    return harmonic.harmonic_flow(sphere3, identity3, steps=600)

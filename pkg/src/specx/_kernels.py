"""Hot numeric kernels with numba acceleration and a pure-numpy fallback.

Set SPECX_NO_NUMBA=1 to force the numpy path (used by the benchmark and by
environments without a working numba install). Everything here operates on
plain float64 arrays; callers own shape validation.
"""

import os

import numpy as np

_DISABLED = os.environ.get("SPECX_NO_NUMBA", "").strip() not in ("", "0")

if not _DISABLED:
    try:
        from numba import njit

        HAVE_NUMBA = True
    except ImportError:  # pragma: no cover - numba is a declared dependency
        HAVE_NUMBA = False
else:
    HAVE_NUMBA = False

USING_NUMBA = HAVE_NUMBA


# ---------------------------------------------------------------------------
# numpy reference implementations
# ---------------------------------------------------------------------------

def _tri_geometry_np(corners):
    """Cotangents and areas for a batch of triangles.

    corners: (F, 3, 3) positions. Returns (cots, areas): cots[f, i] is the
    cotangent of the interior angle at corner i (opposite edge i), areas[f]
    the triangle area.
    """
    p0 = corners[:, 0]
    p1 = corners[:, 1]
    p2 = corners[:, 2]
    e0 = p2 - p1  # edge opposite corner 0
    e1 = p0 - p2
    e2 = p1 - p0
    cr = np.cross(e2, -e1)
    double_area = np.sqrt(np.sum(cr * cr, axis=1))
    areas = 0.5 * double_area
    d = np.where(double_area > 0.0, double_area, 1.0)
    cot0 = np.sum(e1 * (-e2), axis=1) / d
    cot1 = np.sum(e2 * (-e0), axis=1) / d
    cot2 = np.sum(e0 * (-e1), axis=1) / d
    return np.stack([cot0, cot1, cot2], axis=1), areas


def _mobius_batch_np(x, a):
    """Ball-indexed conformal automorphism of the unit sphere, row-wise.

    x: (V, d) unit vectors, a: (d,) with |a| < 1.
    """
    u = x + a[None, :]
    d2 = np.maximum(np.sum(u * u, axis=1), 1e-300)
    s = (1.0 - float(np.dot(a, a))) / d2
    return s[:, None] * u + a[None, :]


def _cap_reflect_raw_np(x, b):
    """Conformal reflection across the cap boundary, applied to every row.

    Conjugates the Euclidean sphere inversion fixing the projected cap
    boundary through stereographic projection with pole at -b/|b|; it is an
    involution away from the pole. b must be nonzero with 0 < |b| <= 1.
    """
    beta = float(np.sqrt(np.dot(b, b)))
    n = b / beta
    r2 = beta / (2.0 - beta)  # squared radius of the projected cap boundary
    t = x @ n
    denom = 1.0 + t  # 1 - <x, pole>, pole = -n
    out = np.empty_like(x)
    at_pole = denom <= 1e-12
    safe = ~at_pole
    d_s = denom[safe][:, None]
    q = (x[safe] - t[safe][:, None] * n[None, :]) / d_s
    q2 = np.sum(q * q, axis=1)
    near_axis = q2 <= 1e-300
    q2 = np.maximum(q2, 1e-300)
    w = (r2 / q2)[:, None] * q
    w2 = np.sum(w * w, axis=1)
    y = (2.0 * w - (w2 - 1.0)[:, None] * n[None, :]) / (1.0 + w2)[:, None]
    y[near_axis] = -n
    out[safe] = y
    out[at_pole] = n
    return out


def _gl_pointwise_np(values, areas, eps):
    """Potential integral and area-averaged norm for the relaxed energy.

    values: (V, d), areas: (V,). Returns (potential, avg_norm) with
    potential = sum_i A_i (1 - |u_i|^2)^2 / (4 eps^2).
    """
    n2 = np.sum(values * values, axis=1)
    dev = 1.0 - n2
    pot = float(np.sum(areas * dev * dev)) / (4.0 * eps * eps)
    avg = float(np.sum(areas * np.sqrt(n2)) / np.sum(areas))
    return pot, avg


# ---------------------------------------------------------------------------
# numba versions
# ---------------------------------------------------------------------------

if HAVE_NUMBA:

    @njit(cache=True)
    def _tri_geometry_nb(corners):
        f = corners.shape[0]
        cots = np.empty((f, 3))
        areas = np.empty(f)
        for t in range(f):
            p0 = corners[t, 0]
            p1 = corners[t, 1]
            p2 = corners[t, 2]
            e0x = p2[0] - p1[0]
            e0y = p2[1] - p1[1]
            e0z = p2[2] - p1[2]
            e1x = p0[0] - p2[0]
            e1y = p0[1] - p2[1]
            e1z = p0[2] - p2[2]
            e2x = p1[0] - p0[0]
            e2y = p1[1] - p0[1]
            e2z = p1[2] - p0[2]
            cx = e2y * (-e1z) - e2z * (-e1y)
            cy = e2z * (-e1x) - e2x * (-e1z)
            cz = e2x * (-e1y) - e2y * (-e1x)
            da = np.sqrt(cx * cx + cy * cy + cz * cz)
            areas[t] = 0.5 * da
            d = da if da > 0.0 else 1.0
            cots[t, 0] = -(e1x * e2x + e1y * e2y + e1z * e2z) / d
            cots[t, 1] = -(e2x * e0x + e2y * e0y + e2z * e0z) / d
            cots[t, 2] = -(e0x * e1x + e0y * e1y + e0z * e1z) / d
        return cots, areas

    @njit(cache=True)
    def _mobius_batch_nb(x, a):
        v = x.shape[0]
        d = x.shape[1]
        a2 = 0.0
        for j in range(d):
            a2 += a[j] * a[j]
        out = np.empty_like(x)
        for i in range(v):
            d2 = 0.0
            for j in range(d):
                u = x[i, j] + a[j]
                d2 += u * u
            if d2 < 1e-300:
                d2 = 1e-300
            s = (1.0 - a2) / d2
            for j in range(d):
                out[i, j] = s * (x[i, j] + a[j]) + a[j]
        return out

    @njit(cache=True)
    def _cap_reflect_raw_nb(x, b):
        v = x.shape[0]
        d = x.shape[1]
        beta = 0.0
        for j in range(d):
            beta += b[j] * b[j]
        beta = np.sqrt(beta)
        r2 = beta / (2.0 - beta)
        out = np.empty_like(x)
        q = np.empty(d)
        for i in range(v):
            t = 0.0
            for j in range(d):
                t += x[i, j] * b[j] / beta
            denom = 1.0 + t
            if denom <= 1e-12:
                for j in range(d):
                    out[i, j] = b[j] / beta
                continue
            q2 = 0.0
            for j in range(d):
                q[j] = (x[i, j] - t * b[j] / beta) / denom
                q2 += q[j] * q[j]
            if q2 <= 1e-300:
                for j in range(d):
                    out[i, j] = -b[j] / beta
                continue
            w2 = 0.0
            for j in range(d):
                q[j] = r2 * q[j] / q2
                w2 += q[j] * q[j]
            back = 1.0 + w2
            for j in range(d):
                out[i, j] = (2.0 * q[j] - (w2 - 1.0) * b[j] / beta) / back
        return out

    @njit(cache=True)
    def _gl_pointwise_nb(values, areas, eps):
        v = values.shape[0]
        d = values.shape[1]
        pot = 0.0
        avg = 0.0
        tot = 0.0
        for i in range(v):
            n2 = 0.0
            for j in range(d):
                n2 += values[i, j] * values[i, j]
            dev = 1.0 - n2
            pot += areas[i] * dev * dev
            avg += areas[i] * np.sqrt(n2)
            tot += areas[i]
        return pot / (4.0 * eps * eps), avg / tot


if USING_NUMBA:
    tri_geometry = _tri_geometry_nb
    mobius_batch = _mobius_batch_nb
    cap_reflect_raw = _cap_reflect_raw_nb
    gl_pointwise = _gl_pointwise_nb
else:
    tri_geometry = _tri_geometry_np
    mobius_batch = _mobius_batch_np
    cap_reflect_raw = _cap_reflect_raw_np
    gl_pointwise = _gl_pointwise_np

NUMPY_IMPLS = {
    "tri_geometry": _tri_geometry_np,
    "mobius_batch": _mobius_batch_np,
    "cap_reflect_raw": _cap_reflect_raw_np,
    "gl_pointwise": _gl_pointwise_np,
}

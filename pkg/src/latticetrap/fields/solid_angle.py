"""Closed-form potential of polygonal patches in a grounded plane.

A patch held at 1 V inside an otherwise grounded infinite plane produces
``phi = Omega / (2 pi)`` above the plane, where ``Omega`` is the solid angle
the patch subtends.  The gradient is a Biot-Savart-like sum over the polygon
edges and the Hessian is its exact derivative.
"""

from __future__ import annotations

import numpy as np

from latticetrap.errors import PlaneEvaluationError

PLANE_TOL = 1e-13
_CHUNK = 20000


def _check_height(points, plane_height):
    dz = points[:, 2] - plane_height
    if np.any(dz <= PLANE_TOL):
        raise PlaneEvaluationError(
            f"potential requested at or below the electrode plane z={plane_height:g} m"
        )


def _chunks(points):
    for i in range(0, len(points), _CHUNK):
        yield slice(i, i + _CHUNK)


def ring_solid_angle(vertices, points, plane_height=0.0):
    """Signed solid angle of a closed polygon (CCW from above is positive)."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    _check_height(points, plane_height)
    v = np.column_stack([vertices, np.full(len(vertices), plane_height)])
    out = np.empty(len(points))
    for sl in _chunks(points):
        r = v[None, :, :] - points[sl, None, :]
        rn = np.linalg.norm(r, axis=-1)
        a, an = r[:, :1], rn[:, :1]
        b, bn = r[:, 1:-1], rn[:, 1:-1]
        c, cn = r[:, 2:], rn[:, 2:]
        trip = np.einsum("mij,mij->mi", np.broadcast_to(a, b.shape), np.cross(b, c))
        den = (
            an * bn * cn
            + np.einsum("mij,mij->mi", np.broadcast_to(a, b.shape), b) * cn
            + np.einsum("mij,mij->mi", np.broadcast_to(a, c.shape), c) * bn
            + np.einsum("mij,mij->mi", b, c) * an
        )
        # fan triangulation; each triangle's solid angle carries its orientation sign
        out[sl] = -2.0 * np.arctan2(trip, den).sum(axis=1)
    return out


def _edge_terms(vertices, points, plane_height):
    v = np.column_stack([vertices, np.full(len(vertices), plane_height)])
    A = v
    B = np.roll(v, -1, axis=0)
    L = np.linalg.norm(B - A, axis=1)
    u = (B - A) / L[:, None]
    ra = A[None] - points[:, None]  # (m, n, 3)
    rb = B[None] - points[:, None]
    ra_n = np.linalg.norm(ra, axis=-1)
    rb_n = np.linalg.norm(rb, axis=-1)
    ahat = ra / ra_n[..., None]
    bhat = rb / rb_n[..., None]
    uu = np.broadcast_to(u[None], ra.shape)
    c = np.cross(uu, -ra)  # u x (r - A)
    d2 = np.einsum("mnk,mnk->mn", c, c)
    g = np.einsum("mnk,mnk->mn", uu, bhat - ahat)
    return uu, ra_n, rb_n, ahat, bhat, c, d2, g


def ring_solid_angle_gradient(vertices, points, plane_height=0.0):
    points = np.atleast_2d(np.asarray(points, dtype=float))
    _check_height(points, plane_height)
    out = np.empty((len(points), 3))
    for sl in _chunks(points):
        _, _, _, _, _, c, d2, g = _edge_terms(vertices, points[sl], plane_height)
        out[sl] = -np.einsum("mnk,mn->mk", c, g / d2)
    return out


def ring_solid_angle_hessian(vertices, points, plane_height=0.0):
    points = np.atleast_2d(np.asarray(points, dtype=float))
    _check_height(points, plane_height)
    out = np.empty((len(points), 3, 3))
    for sl in _chunks(points):
        uu, ra_n, rb_n, ahat, bhat, c, d2, g = _edge_terms(vertices, points[sl], plane_height)
        ub = np.einsum("mnk,mnk->mn", uu, bhat)
        ua = np.einsum("mnk,mnk->mn", uu, ahat)
        grad_g = -(uu - ub[..., None] * bhat) / rb_n[..., None] + (uu - ua[..., None] * ahat) / ra_n[..., None]
        cxu = np.cross(c, uu)
        # d/dr_j of (c g / |c|^2), with dc/dr_j = u x e_j
        skew = np.zeros(uu.shape + (3,))
        skew[..., 0, 1], skew[..., 0, 2] = -uu[..., 2], uu[..., 1]
        skew[..., 1, 0], skew[..., 1, 2] = uu[..., 2], -uu[..., 0]
        skew[..., 2, 0], skew[..., 2, 1] = -uu[..., 1], uu[..., 0]
        term = (
            (g / d2)[..., None, None] * skew
            + np.einsum("mni,mnj->mnij", c, grad_g) / d2[..., None, None]
            - (2.0 * g / d2**2)[..., None, None] * np.einsum("mni,mnj->mnij", c, cxu)
        )
        out[sl] = -term.sum(axis=1)
    return out


def region_potential(rings, points, plane_height=0.0):
    """Potential (volts, for 1 V drive) of a region set given as ``[(ccw_vertices, sign), ...]``."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    total = np.zeros(len(points))
    for verts, sign in rings:
        total += sign * ring_solid_angle(verts, points, plane_height)
    return total / (2.0 * np.pi)


def region_gradient(rings, points, plane_height=0.0):
    points = np.atleast_2d(np.asarray(points, dtype=float))
    total = np.zeros((len(points), 3))
    for verts, sign in rings:
        total += sign * ring_solid_angle_gradient(verts, points, plane_height)
    return total / (2.0 * np.pi)


def region_hessian(rings, points, plane_height=0.0):
    points = np.atleast_2d(np.asarray(points, dtype=float))
    total = np.zeros((len(points), 3, 3))
    for verts, sign in rings:
        total += sign * ring_solid_angle_hessian(verts, points, plane_height)
    return total / (2.0 * np.pi)

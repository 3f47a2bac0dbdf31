"""Closed-form basis fields with known trap properties.

These are not electrode solutions; they exist so the analysis and dynamics
code can be checked against hand-derived answers.
"""

from __future__ import annotations

import numpy as np

from latticetrap.fields.base import BasisField, FieldSet


def _polynomial_basis(electrode_id, hess, linear=None, cubic_x=0.0, centre=(0.0, 0.0, 0.0), bounds=None):
    """``phi = g.d + d.A.d/2 - cubic_x * dx**3`` with ``d`` measured from ``centre``."""
    A = np.asarray(hess, dtype=float)
    g0 = np.zeros(3) if linear is None else np.asarray(linear, dtype=float)
    c = np.asarray(centre, dtype=float)

    def phi(p):
        d = p - c
        return d @ g0 + 0.5 * np.einsum("ni,ij,nj->n", d, A, d) - cubic_x * d[:, 0] ** 3

    def grad(p):
        d = p - c
        g = g0 + d @ A
        g[:, 0] -= 3.0 * cubic_x * d[:, 0] ** 2
        return g

    def hess_fn(p):
        d = p - c
        H = np.broadcast_to(A, (len(p), 3, 3)).copy()
        H[:, 0, 0] -= 6.0 * cubic_x * d[:, 0]
        return H

    return BasisField(electrode_id, phi, grad, hess_fn, bounds)


def _box(centre, half):
    c = np.asarray(centre, dtype=float)
    return np.column_stack([c - half, c + half])


def quadrupole_fields(scale: float, centre=(0.0, 0.0, 1e-4), half_width: float | None = None,
                      static_ids=()) -> FieldSet:
    """Ideal RF quadrupole ``(dx^2 + dy^2 - 2 dz^2) / scale^2`` around ``centre``.

    Its pseudopotential curvatures are in the ratio 1:1:4, so the secular
    frequencies are 1:1:2.  Listed static ids get zero fields.
    """
    half = 2.0 * scale if half_width is None else half_width
    bounds = _box(centre, half)
    rf = _polynomial_basis("RF", np.diag([2.0, 2.0, -4.0]) / scale**2, centre=centre, bounds=bounds)
    zero = [_polynomial_basis(k, np.zeros((3, 3)), bounds=bounds) for k in static_ids]
    return FieldSet(rf, tuple(zero), solver_tag="synthetic", domain=bounds)


def saddle_fields(curvature: float, cubic: float, centre=(0.0, 0.0, 1e-4), half_width: float = 1e-4,
                  static_id: str = "DC") -> FieldSet:
    """Static well ``k |d|^2 - c dx^3`` with a single escape saddle, and no RF field.

    At 1 V on ``static_id`` the barrier for a unit positive charge is
    ``4 k^3 / (27 c^2)`` volts, crossed at ``dx = 2k / (3c)``.
    """
    bounds = _box(centre, half_width)
    rf = _polynomial_basis("RF", np.zeros((3, 3)), bounds=bounds)
    dc = _polynomial_basis(static_id, 2.0 * curvature * np.eye(3), cubic_x=cubic, centre=centre, bounds=bounds)
    return FieldSet(rf, (dc,), solver_tag="synthetic", domain=bounds)


def paraboloid_fields(curvature: float, centre=(0.0, 0.0, 1e-4), half_width: float = 1e-4,
                      static_id: str = "DC") -> FieldSet:
    """Static ``k (dx^2 + dy^2)`` with no RF field; its level sets in a z plane are circles."""
    bounds = _box(centre, half_width)
    rf = _polynomial_basis("RF", np.zeros((3, 3)), bounds=bounds)
    dc = _polynomial_basis(static_id, 2.0 * curvature * np.diag([1.0, 1.0, 0.0]), centre=centre, bounds=bounds)
    return FieldSet(rf, (dc,), solver_tag="synthetic", domain=bounds)


def uniform_basis(electrode_id: str, field_per_volt, bounds=None) -> BasisField:
    """Basis whose potential is ``-E . r`` per volt (a uniform field ``E``)."""
    return _polynomial_basis(electrode_id, np.zeros((3, 3)), linear=-np.asarray(field_per_volt, float),
                             bounds=bounds)

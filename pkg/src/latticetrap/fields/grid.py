"""Finite-difference Laplace solver on a graded tensor grid.

Conductors are rasterized as Dirichlet nodes: everything at or below the
ground plane, plus each electrode as a prism from its bottom to its plane
height.  The free nodes satisfy a symmetric finite-volume 7-point stencil,
solved by algebraic multigrid with conjugate-gradient acceleration.  The
solved node values are interpolated by a tensor cubic B-spline so that
gradients and Hessians are smooth.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np
import pyamg
import scipy.sparse as sp
import shapely
from scipy.interpolate import NdBSpline, make_interp_spline
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from latticetrap.errors import GridTooCoarseError, LayoutError, SolverConvergenceError
from latticetrap.fields.base import BasisField, FieldSet, as_points
from latticetrap.geometry import ElectrodeLayout, validate_layout

log = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-6
MIN_CELLS = 8


@dataclass(frozen=True)
class GridSpec:
    """Fine core box plus optional geometrically graded padding.

    ``bounds`` is ``((x0, x1), (y0, y1), (z0, z1))`` for the uniform core,
    ``spacing`` the core cell size per axis.  ``padding`` extends the grid
    laterally and upwards with cells growing by ``growth`` per step.  The
    outer faces carry ``boundary_condition``: ``"zero"``, a constant in
    volts, or a callable ``f(points, electrode_id) -> volts``.
    """

    bounds: tuple
    spacing: tuple
    boundary_condition: object = "zero"
    padding: float = 0.0
    growth: float = 1.2

    def __post_init__(self):
        b = tuple(tuple(float(v) for v in ax) for ax in self.bounds)
        s = self.spacing
        s = (float(s),) * 3 if np.isscalar(s) else tuple(float(v) for v in s)
        if len(b) != 3 or any(len(ax) != 2 for ax in b) or len(s) != 3:
            raise ValueError("bounds must be three (lo, hi) pairs and spacing three values")
        for (lo, hi), h in zip(b, s):
            if not h > 0:
                raise ValueError("grid spacing must be positive")
            if not hi > lo:
                raise ValueError("grid bounds must have hi > lo")
            if (hi - lo) / h < MIN_CELLS - 1e-9:
                raise ValueError(f"grid needs at least {MIN_CELLS} cells per axis")
        if self.padding < 0 or self.growth < 1.0:
            raise ValueError("padding must be >= 0 and growth >= 1")
        bc = self.boundary_condition
        if not (bc == "zero" if isinstance(bc, str) else (callable(bc) or np.isscalar(bc))):
            raise ValueError("boundary_condition must be 'zero', a number, or a callable")
        object.__setattr__(self, "bounds", b)
        object.__setattr__(self, "spacing", s)

    @classmethod
    def for_layout(
        cls,
        layout: ElectrodeLayout,
        spacing: float | None = None,
        vertical_spacing: float | None = None,
        height: float | None = None,
        margin: float | None = None,
        padding: float | None = None,
        boundary_condition="zero",
    ) -> "GridSpec":
        """Default grid: core over the RF electrode, graded padding far beyond it.

        The characteristic length is the hexagon radius (or the RF hole radius).
        Core spacing is a tenth of it; the core reaches 4 lengths above the
        surface and the padding about 64 lengths.
        """
        length = float(layout.metadata.get("hexagon_radius", 0.0)) or layout.hole_radius()
        x0, y0, x1, y1 = layout.bounds(("rf",))
        if not length:
            length = 0.1 * max(x1 - x0, y1 - y0)
        h = spacing if spacing is not None else length / 10.0
        hz = vertical_spacing if vertical_spacing is not None else 0.8 * h
        m = margin if margin is not None else 1.0 * length
        top = layout.top_height
        zc = height if height is not None else 4.0 * length
        pad = padding if padding is not None else 64.0 * length
        return cls(
            ((x0 - m, x1 + m), (y0 - m, y1 + m), (layout.ground_plane_height, top + zc)),
            (h, h, hz), boundary_condition, pad,
        )


# --------------------------------------------------------------------------
# axes and rasterization


def _uniform(lo, hi, h):
    n = max(MIN_CELLS, int(math.ceil((hi - lo) / h - 1e-9)))
    return np.linspace(lo, hi, n + 1)


def _graded(lo, hi, h, pad_lo, pad_hi, growth):
    core = _uniform(lo, hi, h)
    d0 = core[1] - core[0]
    left, right = [], []
    x, d = lo, d0
    while x > lo - pad_lo + 1e-15:
        d *= growth
        x -= d
        left.append(x)
    x, d = hi, d0
    while x < hi + pad_hi - 1e-15:
        d *= growth
        x += d
        right.append(x)
    return np.concatenate([left[::-1], core, right])


def _z_axis(grid: GridSpec, layout: ElectrodeLayout):
    (z0, z1), hz = grid.bounds[2], grid.spacing[2]
    breaks = {z0, z1, layout.ground_plane_height}
    for e in layout.electrodes:
        breaks.update((e.plane_height, e.bottom_height))
    breaks = sorted(b for b in breaks if z0 <= b <= z1)
    pieces = []
    for a, b in zip(breaks[:-1], breaks[1:]):
        if b - a < 1e-15:
            continue
        n = max(1, int(math.ceil((b - a) / hz - 1e-9)))
        pieces.append(np.linspace(a, b, n + 1)[:-1])
    core = np.concatenate(pieces + [[z1]])
    if grid.padding > 0:
        d, z, top = core[-1] - core[-2], z1, []
        while z < z1 + grid.padding - 1e-15:
            d *= grid.growth
            z += d
            top.append(z)
        core = np.concatenate([core, top])
    return core


def grid_axes(grid: GridSpec, layout: ElectrodeLayout):
    (x0, x1), (y0, y1), _ = grid.bounds
    hx, hy, _ = grid.spacing
    p, g = grid.padding, grid.growth
    return _graded(x0, x1, hx, p, p, g), _graded(y0, y1, hy, p, p, g), _z_axis(grid, layout)


def _check_resolution(layout: ElectrodeLayout, grid: GridSpec):
    h = max(grid.spacing[0], grid.spacing[1])
    for e in layout.electrodes:
        if e.role == "ground":
            continue
        shrunk = e.shape().buffer(-h)
        if shrunk.is_empty:
            raise GridTooCoarseError(
                f"electrode {e.id!r} is narrower than two cells at spacing {h:g} m"
            )


def rasterize(layout: ElectrodeLayout, axes):
    """Conductor labels per node: -1 vacuum, 0 ground, k>0 electrode index k-1."""
    x, y, z = axes
    tol = 1e-9 * max(1.0, float(np.ptp(z))) + 1e-15
    label = np.full((len(x), len(y), len(z)), -1, dtype=np.int16)
    label[:, :, z <= layout.ground_plane_height + tol] = 0
    X, Y = np.meshgrid(x, y, indexing="ij")
    for k, e in enumerate(layout.electrodes, start=1):
        inside = shapely.intersects_xy(e.shape(), X, Y)
        zs = np.flatnonzero((z >= e.bottom_height - tol) & (z <= e.plane_height + tol))
        if len(zs):
            sub = label[:, :, zs]
            sub[inside] = k
            label[:, :, zs] = sub
    return label


def plane_coverage(layout: ElectrodeLayout, axes, samples: int = 6):
    """Area fraction of each node's dual cell covered by electrodes lying in the ground plane.

    Nodes in that plane are all Dirichlet, so weighting their values by
    coverage replaces the staircase edge by a sub-cell accurate one.
    Returns ``{electrode_index: fraction_2d}`` (index as in :func:`rasterize`).
    """
    x, y, _ = axes
    out = {}
    flat = [
        (k, e) for k, e in enumerate(layout.electrodes, start=1)
        if abs(e.plane_height - layout.ground_plane_height) < 1e-12 and e.thickness == 0.0
    ]
    if not flat:
        return out
    u = (np.arange(samples) + 0.5) / samples - 0.5

    def sub(a):
        lo = np.concatenate([[a[0]], 0.5 * (a[1:] + a[:-1])])
        hi = np.concatenate([0.5 * (a[1:] + a[:-1]), [a[-1]]])
        c, w = 0.5 * (lo + hi), hi - lo
        return c[:, None] + w[:, None] * u[None, :]

    sx, sy = sub(x), sub(y)
    SX = np.broadcast_to(sx[:, None, :, None], (len(x), len(y), samples, samples))
    SY = np.broadcast_to(sy[None, :, None, :], (len(x), len(y), samples, samples))
    for k, e in flat:
        shape = e.shape()
        inside = shapely.contains_xy(shape, SX, SY)
        out[k] = inside.mean(axis=(2, 3))
    return out


# --------------------------------------------------------------------------
# linear system


def _dual_widths(a):
    d = np.diff(a)
    w = np.zeros(len(a))
    w[1:] += d / 2
    w[:-1] += d / 2
    return w


class LaplaceSystem:
    """Discrete Laplace operator with a fixed Dirichlet mask and a reusable AMG hierarchy."""

    def __init__(self, axes, fixed: np.ndarray):
        self.axes = tuple(np.asarray(a, dtype=float) for a in axes)
        self.shape = tuple(len(a) for a in self.axes)
        fixed = np.asarray(fixed, dtype=bool)
        if fixed.shape != self.shape:
            raise ValueError("fixed mask shape does not match axes")
        self.fixed = fixed
        n_all = fixed.size
        ids = np.arange(n_all).reshape(self.shape)
        free = ~fixed
        widths = [_dual_widths(a) for a in self.axes]
        rows, cols, vals = [], [], []
        brow, bcol, bval = [], [], []
        diag = np.zeros(self.shape)
        for ax in range(3):
            d = np.diff(self.axes[ax])
            o = [k for k in range(3) if k != ax]
            shp = [1, 1, 1]
            shp[ax] = -1
            s0 = [1, 1, 1]
            s0[o[0]] = -1
            s1 = [1, 1, 1]
            s1[o[1]] = -1
            lo = [slice(None)] * 3
            hi = [slice(None)] * 3
            lo[ax] = slice(0, -1)
            hi[ax] = slice(1, None)
            lo, hi = tuple(lo), tuple(hi)
            coef = widths[o[0]].reshape(s0) * widths[o[1]].reshape(s1) / d.reshape(shp)
            coef = np.broadcast_to(coef, ids[lo].shape)
            ia, ib, fa, fb = ids[lo], ids[hi], free[lo], free[hi]
            diag[lo] += coef * fa
            diag[hi] += coef * fb
            m = fa & fb
            rows += [ia[m], ib[m]]
            cols += [ib[m], ia[m]]
            vals += [-coef[m], -coef[m]]
            m = fa & ~fb
            brow.append(ia[m]), bcol.append(ib[m]), bval.append(coef[m])
            m = fb & ~fa
            brow.append(ib[m]), bcol.append(ia[m]), bval.append(coef[m])
        self.free_index = np.flatnonzero(free.ravel())
        self.fixed_index = np.flatnonzero(fixed.ravel())
        remap = np.full(n_all, -1)
        remap[self.free_index] = np.arange(len(self.free_index))
        fremap = np.full(n_all, -1)
        fremap[self.fixed_index] = np.arange(len(self.fixed_index))
        n = len(self.free_index)
        dvals = diag.ravel()[self.free_index]
        r = np.concatenate(rows + [self.free_index])
        c = np.concatenate(cols + [self.free_index])
        v = np.concatenate(vals + [dvals])
        self.matrix = sp.csr_matrix((v, (remap[r], remap[c])), shape=(n, n))
        self.coupling = sp.csr_matrix(
            (np.concatenate(bval), (remap[np.concatenate(brow)], fremap[np.concatenate(bcol)])),
            shape=(n, len(self.fixed_index)),
        )
        self.diagonal = dvals
        self._amg = None

    @property
    def amg(self):
        if self._amg is None:
            self._amg = pyamg.ruge_stuben_solver(self.matrix)
        return self._amg

    def residual(self, full: np.ndarray) -> float:
        """Largest stencil imbalance over free nodes, expressed in volts."""
        flat = full.ravel()
        b = self.coupling @ flat[self.fixed_index]
        r = b - self.matrix @ flat[self.free_index]
        return float(np.max(np.abs(r / self.diagonal))) if len(r) else 0.0

    def solve(self, fixed_values: np.ndarray, tol: float = RESIDUAL_TOL, max_cycles: int = 400):
        """Solve for the free nodes given the Dirichlet values; returns (phi, residual_volts)."""
        values = np.asarray(fixed_values, dtype=float)
        full = values.ravel().copy()
        if len(self.free_index) == 0:
            return full.reshape(self.shape), 0.0
        b = self.coupling @ full[self.fixed_index]
        x = np.zeros(len(self.free_index))
        used, res = 0, math.inf
        while used < max_cycles:
            step = min(100, max_cycles - used)
            x = self.amg.solve(b, x0=x, tol=1e-12, accel="cg", maxiter=step)
            used += step
            full[self.free_index] = x
            res = self.residual(full)
            log.debug("AMG cycles %d residual %.3g V", used, res)
            if res < tol:
                break
        if not res < tol:
            raise SolverConvergenceError(
                f"Laplace solve did not reach residual {tol:g} V after {used} cycles (residual {res:.3g} V)"
            )
        return full.reshape(self.shape), res


# --------------------------------------------------------------------------
# boundary values and solves


def _boundary_mask(shape):
    m = np.zeros(shape, dtype=bool)
    m[0], m[-1] = True, True
    m[:, 0], m[:, -1] = True, True
    m[:, :, -1] = True
    return m


def _boundary_values(grid: GridSpec, axes, mask, electrode_id):
    bc = grid.boundary_condition
    if isinstance(bc, str):
        return 0.0
    if not callable(bc):
        return float(bc)
    X, Y, Z = np.meshgrid(*axes, indexing="ij")
    pts = np.column_stack([X[mask], Y[mask], Z[mask]])
    return np.asarray(bc(pts, electrode_id), dtype=float)


class GridProblem:
    """A rasterized layout on a grid, ready to solve for any set of conductor voltages."""

    def __init__(self, layout: ElectrodeLayout, grid: GridSpec):
        _check_resolution(layout, grid)
        self.layout = layout
        self.grid = grid
        self.axes = grid_axes(grid, layout)
        self.label = rasterize(layout, self.axes)
        self.coverage = plane_coverage(layout, self.axes)
        z = self.axes[2]
        self.plane_index = int(np.argmin(np.abs(z - layout.ground_plane_height)))
        self.boundary = _boundary_mask(self.label.shape) & (self.label < 0)
        self.system = LaplaceSystem(self.axes, (self.label >= 0) | self.boundary)
        log.info(
            "grid %s nodes (%d free)", "x".join(map(str, self.label.shape)), len(self.system.free_index)
        )

    def values(self, voltages: Mapping[str, float], ground: float = 0.0, boundary_id: str | None = None):
        ids = self.layout.ids
        unknown = sorted(set(voltages) - set(ids))
        if unknown:
            raise LayoutError(f"unknown electrode id(s): {unknown}")
        table = np.array([ground] + [float(voltages.get(i, 0.0)) for i in ids])
        vals = np.where(self.label >= 0, table[np.maximum(self.label, 0)], 0.0)
        if self.coverage:
            k = self.plane_index
            rest = np.ones(self.label.shape[:2])
            plane = np.zeros(self.label.shape[:2])
            for idx, frac in self.coverage.items():
                plane += table[idx] * frac
                rest -= frac
            vals[:, :, k] = plane + ground * np.clip(rest, 0.0, 1.0)
        vals[self.boundary] = _boundary_values(self.grid, self.axes, self.boundary, boundary_id)
        return vals

    def solve(self, voltages: Mapping[str, float], ground: float = 0.0, tol: float = RESIDUAL_TOL,
              boundary_id: str | None = None):
        return self.system.solve(self.values(voltages, ground, boundary_id), tol=tol)


# --------------------------------------------------------------------------
# evaluator


def _spline_coefficients(axes, values):
    c = values
    knots = []
    for ax, a in enumerate(axes):
        s = make_interp_spline(a, c, k=3, axis=ax)
        c = np.moveaxis(s.c, 0, ax)
        knots.append(s.t)
    return tuple(knots), c


_SECOND = [(0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)]


def grid_basis(electrode_id: str, axes, phi: np.ndarray, z_min: float) -> BasisField:
    """Cubic-spline evaluator of node values restricted to ``z >= z_min``."""
    x, y, z = axes
    k0 = int(np.searchsorted(z, z_min - 1e-12 * max(1.0, abs(z_min))))
    zs = z[k0:]
    if len(zs) < 4:
        raise GridTooCoarseError("fewer than four grid planes above the electrode surface")
    knots, coef = _spline_coefficients((x, y, zs), phi[:, :, k0:])
    spline = NdBSpline(knots, coef, 3)
    bounds = np.array([[x[0], x[-1]], [y[0], y[-1]], [zs[0], zs[-1]]])

    def potential(p):
        return spline(p)

    def gradient(p):
        return np.column_stack([spline(p, nu=tuple(int(i == k) for i in range(3))) for k in range(3)])

    def hessian(p):
        out = np.empty((len(p), 3, 3))
        for i, j in _SECOND:
            nu = [0, 0, 0]
            nu[i] += 1
            nu[j] += 1
            out[:, i, j] = out[:, j, i] = spline(p, nu=tuple(nu))
        return out

    basis = BasisField(electrode_id, potential, gradient, hessian, bounds)
    basis.node_values = phi
    basis.axes = axes
    return basis


def fd_laplace_solve(layout: ElectrodeLayout, active_id: str, grid: GridSpec,
                     tol: float = RESIDUAL_TOL) -> BasisField:
    """Unit-voltage basis of one electrode from the grid solver."""
    layout.electrode(active_id)
    problem = GridProblem(layout, grid)
    phi, res = problem.solve({active_id: 1.0}, tol=tol, boundary_id=active_id)
    basis = grid_basis(active_id, problem.axes, phi, layout.top_height)
    basis.residual = res
    return basis


def grid_fields(layout: ElectrodeLayout, grid: GridSpec | None = None,
                tol: float = RESIDUAL_TOL) -> FieldSet:
    """Field set for the RF electrode and every static electrode, sharing one AMG hierarchy."""
    grid = grid or GridSpec.for_layout(layout)
    problem = GridProblem(layout, grid)
    ids = [layout.rf_electrode.id] + [e.id for e in layout.static_electrodes]
    bases, worst = [], 0.0
    for eid in ids:
        phi, res = problem.solve({eid: 1.0}, tol=tol, boundary_id=eid)
        worst = max(worst, res)
        bases.append(grid_basis(eid, problem.axes, phi, layout.top_height))
        log.info("solved basis %s (residual %.2g V)", eid, res)
    domain = np.array([b for b in bases[0].bounds])
    return FieldSet(
        bases[0], tuple(bases[1:]), "grid", worst, domain, layout,
        {"plane_height": layout.top_height, "axes": problem.axes, "grid": grid},
    )


def fields_from_nodes(layout: ElectrodeLayout, axes, node_values: Mapping[str, np.ndarray],
                      residual: float | None = None, grid: GridSpec | None = None) -> FieldSet:
    """Rebuild a grid field set from stored node values (rf id first in layout order)."""
    ids = [layout.rf_electrode.id] + [e.id for e in layout.static_electrodes]
    missing = [i for i in ids if i not in node_values]
    if missing:
        raise LayoutError(f"stored fields lack bases for {missing}")
    bases = [grid_basis(i, axes, np.asarray(node_values[i]), layout.top_height) for i in ids]
    return FieldSet(
        bases[0], tuple(bases[1:]), "grid", residual, bases[0].bounds.copy(), layout,
        {"plane_height": layout.top_height, "axes": tuple(axes), "grid": grid},
    )


class GridFieldSolver(TransformerMixin, BaseEstimator):
    """Estimator wrapper around the grid solver.

    ``fit(layout)`` solves every basis; ``transform(X)`` returns one column
    per basis (rf first) with unit-voltage potentials at the points.
    Unset grid parameters fall back to :meth:`GridSpec.for_layout` defaults.
    """

    def __init__(self, spacing: float | None = None, vertical_spacing: float | None = None,
                 height: float | None = None, padding: float | None = None,
                 boundary_condition="zero", tol: float = RESIDUAL_TOL, validate: bool = True):
        self.spacing = spacing
        self.vertical_spacing = vertical_spacing
        self.height = height
        self.padding = padding
        self.boundary_condition = boundary_condition
        self.tol = tol
        self.validate = validate

    def fit(self, X, y=None):
        layout = X
        if self.validate:
            diags = validate_layout(layout)
            if diags:
                raise LayoutError("invalid layout: " + "; ".join(map(str, diags)))
        self.grid_ = GridSpec.for_layout(
            layout, spacing=self.spacing, vertical_spacing=self.vertical_spacing,
            height=self.height, padding=self.padding, boundary_condition=self.boundary_condition,
        )
        self.fields_ = grid_fields(layout, self.grid_, tol=self.tol)
        self.residual_ = self.fields_.residual
        self.basis_ids_ = [b.electrode_id for b in self.fields_.bases()]
        return self

    def transform(self, X):
        check_is_fitted(self, "fields_")
        pts = as_points(X)
        return np.column_stack([b.potential(pts) for b in self.fields_.bases()])

"""Gapless-plane solver: every electrode is a patch in one grounded plane."""

from __future__ import annotations

import logging

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from latticetrap.errors import LayoutError
from latticetrap.fields.base import BasisField, FieldSet, as_points
from latticetrap.fields.solid_angle import region_gradient, region_hessian, region_potential
from latticetrap.geometry import Electrode, ElectrodeLayout, PolygonRegion, regions_as_arrays, validate_layout

log = logging.getLogger(__name__)


def solid_angle_potential(regions, points, plane_height=0.0) -> np.ndarray:
    """Potential (V) above a set of unit-voltage polygons in a grounded plane."""
    rings = regions_as_arrays(_regions(regions))
    return region_potential(rings, as_points(points), plane_height)


def analytic_gradient_hessian(regions, points, plane_height=0.0):
    rings = regions_as_arrays(_regions(regions))
    pts = as_points(points)
    return region_gradient(rings, pts, plane_height), region_hessian(rings, pts, plane_height)


def _regions(regions):
    if isinstance(regions, PolygonRegion):
        return [regions]
    return [r if isinstance(r, PolygonRegion) else PolygonRegion(*r) for r in regions]


def analytic_basis(electrode: Electrode) -> BasisField:
    rings = regions_as_arrays(electrode.regions)
    z0 = electrode.plane_height
    return BasisField(
        electrode.id,
        lambda p: region_potential(rings, p, z0),
        lambda p: region_gradient(rings, p, z0),
        lambda p: region_hessian(rings, p, z0),
    )


def analytic_fields(layout: ElectrodeLayout) -> FieldSet:
    """Field set of a coplanar layout.

    Recessed ground electrodes are ignored (they only add grounded area);
    rf and static electrodes must all lie on one plane.
    """
    driven = [e for e in layout.electrodes if e.role in ("rf", "static")]
    heights = {round(e.plane_height, 15) for e in driven}
    if len(heights) != 1:
        raise LayoutError("analytic backend needs all rf/static electrodes on a single plane")
    if any(e.plane_height != driven[0].plane_height for e in layout.electrodes if e.role == "ground"):
        log.warning("analytic backend ignores the recess of ground electrodes")
    rf = analytic_basis(layout.rf_electrode)
    statics = tuple(analytic_basis(e) for e in layout.static_electrodes)
    return FieldSet(
        rf, statics, "analytic", None, None, layout,
        {"plane_height": driven[0].plane_height},
    )


class AnalyticFieldSolver(TransformerMixin, BaseEstimator):
    """Estimator wrapper: ``fit(layout)`` builds the basis, ``transform(X)`` evaluates it.

    ``transform`` returns one column per basis (rf first, then statics in
    layout order) holding the unit-voltage potential at each point.
    """

    def __init__(self, validate: bool = True):
        self.validate = validate

    def fit(self, X, y=None):
        layout = X
        if self.validate:
            diags = validate_layout(layout)
            if diags:
                raise LayoutError("invalid layout: " + "; ".join(map(str, diags)))
        self.fields_ = analytic_fields(layout)
        self.basis_ids_ = [b.electrode_id for b in self.fields_.bases()]
        return self

    def transform(self, X):
        check_is_fitted(self, "fields_")
        pts = as_points(X)
        return np.column_stack([b.potential(pts) for b in self.fields_.bases()])

"""Basis fields, field sets, and the potentials built from them."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, NamedTuple

import numpy as np
from scipy import constants

from latticetrap.errors import DomainError, LayoutError
from latticetrap.geometry import IonSpecies, RfDrive


class FieldSample(NamedTuple):
    phi: np.ndarray
    grad: np.ndarray
    hessian: np.ndarray


def as_points(points) -> np.ndarray:
    """Coerce to an (n, 3) float array of finite coordinates."""
    arr = np.asarray(points, dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError(f"points must have shape (n, 3), got {np.shape(points)}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("points contain non-finite coordinates")
    return arr


class BasisField:
    """Potential of one electrode held at 1 V with all other conductors grounded.

    ``bounds`` (3x2, meters) is the region where the evaluator is defined;
    ``None`` means the whole half-space above the electrode plane.
    """

    def __init__(
        self,
        electrode_id: str,
        potential: Callable,
        gradient: Callable,
        hessian: Callable,
        bounds=None,
    ):
        self.electrode_id = electrode_id
        self._potential = potential
        self._gradient = gradient
        self._hessian = hessian
        self.bounds = None if bounds is None else np.asarray(bounds, dtype=float)

    def __repr__(self):
        return f"BasisField({self.electrode_id!r})"

    def _check(self, points):
        pts = as_points(points)
        if self.bounds is not None:
            lo, hi = self.bounds[:, 0], self.bounds[:, 1]
            outside = np.any((pts < lo) | (pts > hi), axis=1)
            if np.any(outside):
                bad = pts[np.argmax(outside)]
                raise DomainError(f"point {bad.tolist()} outside field domain of {self.electrode_id!r}")
        return pts

    def potential(self, points) -> np.ndarray:
        return self._potential(self._check(points))

    def gradient(self, points) -> np.ndarray:
        return self._gradient(self._check(points))

    def hessian(self, points) -> np.ndarray:
        return self._hessian(self._check(points))

    def __call__(self, points) -> FieldSample:
        pts = self._check(points)
        return FieldSample(self._potential(pts), self._gradient(pts), self._hessian(pts))

    def scaled(self, factor: float, electrode_id: str | None = None) -> "BasisField":
        """The same field multiplied by ``factor`` (useful for synthetic fields)."""
        return BasisField(
            electrode_id or self.electrode_id,
            lambda p: factor * self._potential(p),
            lambda p: factor * self._gradient(p),
            lambda p: factor * self._hessian(p),
            self.bounds,
        )


@dataclass(frozen=True)
class FieldSet:
    rf_basis: BasisField
    static_bases: tuple = ()
    solver_tag: str = "analytic"
    residual: float | None = None
    domain: np.ndarray | None = None
    layout: object = field(default=None, compare=False, repr=False)
    metadata: Mapping = field(default_factory=dict, compare=False, repr=False)

    @property
    def static_ids(self) -> list[str]:
        return [b.electrode_id for b in self.static_bases]

    def static(self, electrode_id: str) -> BasisField:
        for b in self.static_bases:
            if b.electrode_id == electrode_id:
                return b
        raise LayoutError(f"unknown static electrode id {electrode_id!r}")

    def contains(self, points) -> np.ndarray:
        pts = as_points(points)
        if self.domain is None:
            z0 = self.metadata.get("plane_height", 0.0)
            return pts[:, 2] > z0
        lo, hi = self.domain[:, 0], self.domain[:, 1]
        return np.all((pts >= lo) & (pts <= hi), axis=1)

    def bases(self):
        return (self.rf_basis, *self.static_bases)


# --------------------------------------------------------------------------
# potentials


def pseudo_coefficient(drive: RfDrive, species: IonSpecies) -> float:
    """``C`` in ``Psi = C |grad phi_rf|^2`` (joules per (V/m)^2 of unit-basis field)."""
    return species.charge**2 * drive.amplitude**2 / (4.0 * species.mass * drive.angular_frequency**2)


def _check_statics(fields: FieldSet, static_voltages):
    sv = dict(static_voltages or {})
    unknown = sorted(set(sv) - set(fields.static_ids))
    if unknown:
        raise LayoutError(f"unknown static electrode id(s): {unknown}")
    return {k: float(v) for k, v in sv.items() if v != 0.0}


def pseudopotential(fields: FieldSet, drive: RfDrive, species: IonSpecies, points) -> np.ndarray:
    """Ponderomotive potential in eV."""
    g = fields.rf_basis.gradient(points)
    return pseudo_coefficient(drive, species) * np.einsum("ij,ij->i", g, g) / constants.e


def pseudopotential_gradient(fields, drive, species, points) -> np.ndarray:
    """Gradient of the pseudopotential in J/m."""
    pts = as_points(points)
    g = fields.rf_basis.gradient(pts)
    H = fields.rf_basis.hessian(pts)
    return 2.0 * pseudo_coefficient(drive, species) * np.einsum("nij,nj->ni", H, g)


def static_potential(fields: FieldSet, static_voltages, points) -> np.ndarray:
    """Electrostatic potential (volts) of the static electrodes."""
    pts = as_points(points)
    out = np.zeros(len(pts))
    for eid, v in _check_statics(fields, static_voltages).items():
        out += v * fields.static(eid).potential(pts)
    return out


def static_gradient(fields, static_voltages, points) -> np.ndarray:
    pts = as_points(points)
    out = np.zeros((len(pts), 3))
    for eid, v in _check_statics(fields, static_voltages).items():
        out += v * fields.static(eid).gradient(pts)
    return out


def static_hessian(fields, static_voltages, points) -> np.ndarray:
    pts = as_points(points)
    out = np.zeros((len(pts), 3, 3))
    for eid, v in _check_statics(fields, static_voltages).items():
        out += v * fields.static(eid).hessian(pts)
    return out


def total_potential(fields, drive, species, static_voltages, points) -> np.ndarray:
    """Pseudopotential plus static electrostatic energy, in eV."""
    pts = as_points(points)
    psi = pseudopotential(fields, drive, species, pts)
    return psi + species.charge * static_potential(fields, static_voltages, pts) / constants.e


def total_gradient(fields, drive, species, static_voltages, points) -> np.ndarray:
    """Gradient of the total potential energy in J/m."""
    pts = as_points(points)
    return pseudopotential_gradient(fields, drive, species, pts) + species.charge * static_gradient(
        fields, static_voltages, pts
    )


def derivative_step(point) -> float:
    return max(1e-9, 1e-4 * abs(float(np.asarray(point).reshape(-1)[2])))


def total_hessian(fields, drive, species, static_voltages, point, step=None) -> np.ndarray:
    """Hessian of the total potential energy (J/m^2) at one point.

    The pseudopotential part is the Richardson-extrapolated central
    difference of its exact gradient; the static part is exact.
    """
    p = as_points(point)[0]
    h = derivative_step(p) if step is None else step

    def central(hh):
        pts = np.concatenate([p + hh * np.eye(3), p - hh * np.eye(3)])
        g = pseudopotential_gradient(fields, drive, species, pts)
        return ((g[:3] - g[3:]) / (2 * hh)).T

    D1, D2 = central(h), central(h / 2)
    H = (4.0 * D2 - D1) / 3.0
    H = 0.5 * (H + H.T)
    if static_voltages:
        H = H + species.charge * static_hessian(fields, static_voltages, p)[0]
    return H

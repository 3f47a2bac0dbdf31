"""Locating and characterizing trapping sites.

A site is a minimum of the total (pseudo plus static) potential energy.
Secular frequencies come from the Hessian at the minimum, the depth from a
level-set flood fill of the sampled potential towards the domain boundary.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import constants, ndimage
from skimage.measure import find_contours
from skimage.morphology import reconstruction
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from latticetrap.errors import MissingSiteError, NilSearchError, TrapDepthError
from latticetrap.fields.base import (
    FieldSet,
    as_points,
    total_gradient,
    total_hessian,
    total_potential,
)
from latticetrap.geometry import YB174, ElectrodeLayout, IonSpecies, RfDrive, get_species

log = logging.getLogger(__name__)

STABILITY_LIMIT = 0.908
DEDUP_TOL = 1e-6


# --------------------------------------------------------------------------
# search region


def characteristic_length(layout: ElectrodeLayout) -> float:
    length = float(layout.metadata.get("hexagon_radius", 0.0)) or layout.hole_radius()
    if not length:
        x0, y0, x1, y1 = layout.bounds(("rf",))
        length = 0.1 * max(x1 - x0, y1 - y0)
    return length


def search_box(fields: FieldSet, layout: ElectrodeLayout | None = None) -> np.ndarray:
    """Box (3x2, meters) where sites are searched and the potential is sampled.

    Laterally it spans the RF electrode, vertically from just above the
    surface to four characteristic lengths; it is clipped to the field domain.
    """
    layout = layout or fields.layout
    if layout is None:
        if fields.domain is None:
            raise NilSearchError("field set has neither a layout nor a bounded domain")
        return np.array(fields.domain, dtype=float)
    length = characteristic_length(layout)
    x0, y0, x1, y1 = layout.bounds(("rf",))
    top = layout.top_height
    box = np.array([[x0, x1], [y0, y1], [top + 0.02 * length, top + 4.0 * length]])
    if fields.domain is not None:
        d = np.asarray(fields.domain)
        box[:, 0] = np.maximum(box[:, 0], d[:, 0])
        box[:, 1] = np.minimum(box[:, 1], d[:, 1])
    return box


def _inside(box, p):
    return bool(np.all(p >= box[:, 0]) and np.all(p <= box[:, 1]))


# --------------------------------------------------------------------------
# RF nil


def find_rf_nil(fields: FieldSet, seed, box=None, max_iter: int = 200, xtol: float = 1e-9) -> np.ndarray:
    """Zero of the RF field near ``seed``.

    Newton steps on the field (the Hessian is its Jacobian), with a
    backtracking line search on ``|grad phi|^2`` and a steepest-descent
    fallback when the Newton direction does not reduce it.
    """
    box = search_box(fields) if box is None else np.asarray(box, dtype=float)
    x = as_points(seed)[0].copy()
    if not _inside(box, x):
        raise NilSearchError(f"seed {x.tolist()} lies outside the search region")
    rf = fields.rf_basis

    def f_and_g(p):
        g = rf.gradient(p)[0]
        return float(g @ g), g

    f, g = f_and_g(x)
    g_seed = math.sqrt(f)
    for _ in range(max_iter):
        H = rf.hessian(x)[0]
        try:
            step = -np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            step = -H @ g
        descent = H @ g  # half the gradient of |g|^2
        if step @ descent >= 0:
            step = -descent * (f / max(descent @ descent, 1e-300))
        limit = 0.25 * (x[2] - box[2, 0] + 1e-9) + 0.1 * np.ptp(box[:2], axis=1).min()
        n = np.linalg.norm(step)
        if n > limit:
            step *= limit / n
        t, accepted = 1.0, False
        while t > 1e-6:
            trial = x + t * step
            if not _inside(box, trial):
                t *= 0.5
                continue
            ft, gt = f_and_g(trial)
            if ft < f or ft == 0.0:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            break
        moved = np.linalg.norm(t * step)
        x, f, g = trial, ft, gt
        if moved < xtol and math.sqrt(f) <= 1e-3 * g_seed:
            break
    if math.sqrt(f) > 1e-3 * max(g_seed, 1e-300):
        raise NilSearchError(f"RF nil search from {as_points(seed)[0].tolist()} did not converge")
    margin = 1e-3 * np.ptp(box, axis=1)
    if np.any(x <= box[:, 0] + margin) or np.any(x >= box[:, 1] - margin):
        raise NilSearchError(f"RF nil search converged to the region boundary at {x.tolist()}")
    return x


def find_total_minimum(fields, drive, species, static_voltages, seed, box=None, max_iter: int = 100):
    """Minimum of the total potential near ``seed`` by damped Newton iteration."""
    box = search_box(fields) if box is None else np.asarray(box, dtype=float)
    x = as_points(seed)[0].copy()
    sv = static_voltages

    def U(p):
        return float(total_potential(fields, drive, species, sv, p)[0])

    u = U(x)
    for _ in range(max_iter):
        g = total_gradient(fields, drive, species, sv, x)[0] / constants.e
        H = total_hessian(fields, drive, species, sv, x) / constants.e
        w, V = np.linalg.eigh(H)
        # Newton on the positive-definite part, descent along negative curvature
        w = np.maximum(np.abs(w), 1e-6 * np.abs(w).max())
        step = -V @ ((V.T @ g) / w)
        n = np.linalg.norm(step)
        limit = 0.25 * (x[2] - box[2, 0] + 1e-9)
        if n > limit:
            step *= limit / n
        t = 1.0
        while t > 1e-8:
            trial = x + t * step
            if _inside(box, trial):
                ut = U(trial)
                if ut <= u:
                    break
            t *= 0.5
        else:
            break
        x, moved, u = trial, np.linalg.norm(t * step), ut
        if moved < 1e-10:
            break
    return x


# --------------------------------------------------------------------------
# frequencies and stability


@dataclass(frozen=True)
class SecularModes:
    frequencies: np.ndarray  # rad/s, descending; negative marks an anti-confining axis
    axes: np.ndarray  # columns are principal axes
    eigenvalues: np.ndarray  # J/m^2
    confining: bool


def _orient(vectors):
    v = vectors.copy()
    for k in range(v.shape[1]):
        col = v[:, k]
        ref = col[2] if abs(col[2]) > 1e-9 else col[np.argmax(np.abs(col))]
        if ref < 0:
            v[:, k] = -col
    return v


def modes_from_hessian(H, mass: float) -> SecularModes:
    """Frequencies ``sqrt(lambda/m)`` sorted descending (ties: axis nearest +z first)."""
    H = 0.5 * (np.asarray(H, dtype=float) + np.asarray(H, dtype=float).T)
    lam, vec = np.linalg.eigh(H)
    omega = np.sign(lam) * np.sqrt(np.abs(lam) / mass)
    scale = np.abs(omega).max() or 1.0
    key = [(-round(o / scale, 9), -abs(vec[2, i])) for i, o in enumerate(omega)]
    order = sorted(range(3), key=lambda i: key[i])
    lam, vec, omega = lam[order], _orient(vec[:, order]), omega[order]
    return SecularModes(omega, vec, lam, bool(np.all(lam > 0)))


def secular_frequencies(fields, drive, species, site_position, static_voltages=None) -> SecularModes:
    """Secular modes from the Hessian of the total potential at a site.

    Non-confining axes are flagged by ``confining=False`` and a negative
    frequency instead of raising.
    """
    H = total_hessian(fields, drive, species, static_voltages, site_position)
    return modes_from_hessian(H, species.mass)


def stability_params(drive: RfDrive, species: IonSpecies, frequencies):
    """Lowest-order Mathieu q per axis and the stability flags ``q < 0.908``."""
    w = np.abs(np.asarray(frequencies, dtype=float))
    q = 2.0 * math.sqrt(2.0) * w / drive.angular_frequency
    return q, q < STABILITY_LIMIT


# --------------------------------------------------------------------------
# trap depth


@dataclass
class PotentialSample:
    """Total potential (eV) sampled on a tensor grid, with its spill levels.

    ``spill[i,j,k]`` is the lowest level at which the point connects to the
    box boundary through points at or below that level.
    """

    axes: tuple
    energy: np.ndarray
    spill: np.ndarray

    def index(self, point):
        return tuple(int(np.argmin(np.abs(a - c))) for a, c in zip(self.axes, point))

    def point(self, idx):
        return np.array([a[i] for a, i in zip(self.axes, idx)])


def sample_total_potential(fields, drive, species, static_voltages=None, box=None,
                           spacing=None, chunk: int = 200000) -> PotentialSample:
    box = search_box(fields) if box is None else np.asarray(box, dtype=float)
    if spacing is None:
        layout = fields.layout
        spacing = characteristic_length(layout) / 12.0 if layout is not None else np.ptp(box, axis=1).min() / 40
    axes = tuple(np.linspace(lo, hi, max(16, int(math.ceil((hi - lo) / spacing)) + 1)) for lo, hi in box)
    X, Y, Z = np.meshgrid(*axes, indexing="ij")
    pts = np.column_stack([X.ravel(), Y.ravel(), Z.ravel()])
    U = np.empty(len(pts))
    for i in range(0, len(pts), chunk):
        U[i : i + chunk] = total_potential(fields, drive, species, static_voltages, pts[i : i + chunk])
    U = U.reshape(X.shape)
    return PotentialSample(axes, U, spill_levels(U))


def spill_levels(U: np.ndarray) -> np.ndarray:
    """Minimax level connecting each cell to the array boundary (reconstruction by erosion)."""
    marker = np.full_like(U, U.max())
    edge = np.zeros(U.shape, dtype=bool)
    for ax in range(U.ndim):
        sl = [slice(None)] * U.ndim
        sl[ax] = 0
        edge[tuple(sl)] = True
        sl[ax] = -1
        edge[tuple(sl)] = True
    marker[edge] = U[edge]
    fp = ndimage.generate_binary_structure(U.ndim, 1)
    return reconstruction(marker, U, method="erosion", footprint=fp)


@dataclass(frozen=True)
class DepthResult:
    depth: float  # eV
    escape_point: np.ndarray
    boundary_limited: bool
    spill_level: float  # eV, absolute level of the sampled escape saddle


def _refine_saddle(fields, drive, species, sv, x0, radius, box):
    """Newton iteration on the gradient from a sampled saddle cell; keeps the cell if it wanders."""
    x = x0.copy()
    for _ in range(30):
        g = total_gradient(fields, drive, species, sv, x)[0]
        H = total_hessian(fields, drive, species, sv, x)
        try:
            step = -np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            return x0
        x = x + step
        if np.linalg.norm(x - x0) > radius or not _inside(box, x):
            return x0
        if np.linalg.norm(step) < 1e-11:
            return x
    return x0


def trap_depth(fields, drive, species, site_position, static_voltages=None, sample=None,
               refine: bool = True) -> DepthResult:
    """Barrier from a site's minimum to the lowest escape saddle.

    The flood fill runs on ``sample`` (built on the default search box if
    omitted); the saddle cell is then refined by Newton iteration.
    """
    sample = sample or sample_total_potential(fields, drive, species, static_voltages)
    pos = as_points(site_position)[0]
    idx = sample.index(pos)
    U, L = sample.energy, sample.spill
    shape = np.array(U.shape)
    if any(i == 0 or i == n - 1 for i, n in zip(idx, shape)):
        raise TrapDepthError("site lies on the sampled domain boundary")
    # the site's node may sit slightly uphill; take the lowest node around it
    lo = [max(i - 1, 0) for i in idx]
    hi = [i + 2 for i in idx]
    local = U[lo[0] : hi[0], lo[1] : hi[1], lo[2] : hi[2]]
    off = np.unravel_index(np.argmin(local), local.shape)
    idx = tuple(l + o for l, o in zip(lo, off))
    level = float(L[idx])
    if level <= U[idx]:
        raise TrapDepthError("site basin is open to the domain boundary at every level")
    basin, _ = ndimage.label(U < level, structure=ndimage.generate_binary_structure(3, 1))
    region = basin == basin[idx]
    rim = ndimage.binary_dilation(region, structure=ndimage.generate_binary_structure(3, 1)) & ~region
    rim_energy = np.where(rim, U, np.inf)
    saddle_idx = np.unravel_index(np.argmin(rim_energy), U.shape)
    saddle = sample.point(saddle_idx)
    boundary = any(i == 0 or i == n - 1 for i, n in zip(saddle_idx, shape))
    box = np.array([[a[0], a[-1]] for a in sample.axes])
    if refine and not boundary:
        cell = max(float(a[1] - a[0]) for a in sample.axes)
        saddle = _refine_saddle(fields, drive, species, static_voltages, saddle, 2.0 * cell, box)
    u_site = float(total_potential(fields, drive, species, static_voltages, pos)[0])
    u_saddle = float(total_potential(fields, drive, species, static_voltages, saddle)[0])
    return DepthResult(max(u_saddle - u_site, 0.0), saddle, boundary, level)


# --------------------------------------------------------------------------
# sites


@dataclass
class TrapSite:
    position: np.ndarray
    secular_frequencies: np.ndarray
    principal_axes: np.ndarray
    mathieu_q: np.ndarray
    depth: float
    escape_point: np.ndarray
    height_above_ground: float
    height_above_surface: float
    index: int = 0
    hole_centre: np.ndarray | None = None
    confining: bool = True
    stable: bool = True
    boundary_limited: bool = False
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        def arr(a):
            return None if a is None else [float(v) for v in np.ravel(a)]

        return {
            "index": self.index,
            "position_m": arr(self.position),
            "hole_centre_m": arr(self.hole_centre),
            "secular_frequencies_hz": arr(np.asarray(self.secular_frequencies) / (2 * math.pi)),
            "principal_axes": [arr(self.principal_axes[:, k]) for k in range(3)],
            "mathieu_q": arr(self.mathieu_q),
            "depth_ev": float(self.depth),
            "escape_point_m": arr(self.escape_point),
            "height_above_ground_m": float(self.height_above_ground),
            "height_above_surface_m": float(self.height_above_surface),
            "confining": bool(self.confining),
            "stable": bool(self.stable),
            "boundary_limited": bool(self.boundary_limited),
        }


def _nil_for_hole(fields, centre, seed_height, box):
    seed = np.array([centre[0], centre[1], seed_height])
    return find_rf_nil(fields, seed, box)


def find_site_positions(fields: FieldSet, layout: ElectrodeLayout | None = None, box=None):
    """RF nil above every hole, deduplicated; raises MissingSiteError listing failed holes."""
    layout = layout or fields.layout
    box = search_box(fields, layout) if box is None else np.asarray(box, dtype=float)
    centres = layout.hole_centres()
    radius = layout.hole_radius()
    seed_z = layout.top_height + radius
    found, failed = [], []
    for i, c in enumerate(centres):
        try:
            p = _nil_for_hole(fields, c, seed_z, box)
        except NilSearchError as exc:
            log.warning("hole %d: %s", i, exc)
            failed.append(i)
            continue
        if np.hypot(*(p[:2] - c)) > radius:
            log.warning("hole %d: nil at %s strayed from its hole", i, p.tolist())
            failed.append(i)
            continue
        if any(np.linalg.norm(p - q) < DEDUP_TOL for q, _ in found):
            failed.append(i)
            continue
        found.append((p, i))
    if failed or len(found) != len(centres):
        raise MissingSiteError(f"no distinct trapping site above hole(s) {failed}", failed)
    return [p for p, _ in found], [centres[i] for _, i in found]


def characterize_site(fields, drive, species, position, static_voltages=None, sample=None,
                      layout=None, index=0, hole_centre=None) -> TrapSite:
    layout = layout or fields.layout
    if static_voltages:
        position = find_total_minimum(fields, drive, species, static_voltages, position)
    modes = secular_frequencies(fields, drive, species, position, static_voltages)
    q, stable = stability_params(drive, species, modes.frequencies)
    try:
        d = trap_depth(fields, drive, species, position, static_voltages, sample)
        depth, escape, limited = d.depth, d.escape_point, d.boundary_limited
    except TrapDepthError as exc:
        log.warning("site %d: %s", index, exc)
        depth, escape, limited = 0.0, np.full(3, np.nan), True
    top = layout.top_height if layout is not None else 0.0
    ground = layout.ground_plane_height if layout is not None else 0.0
    return TrapSite(
        np.asarray(position, dtype=float), modes.frequencies, modes.axes, q, depth, escape,
        float(position[2] - ground), float(position[2] - top), index,
        None if hole_centre is None else np.asarray(hole_centre, dtype=float),
        modes.confining, bool(np.all(stable)), limited,
    )


def find_all_sites(fields: FieldSet, layout: ElectrodeLayout | None = None, drive: RfDrive | None = None,
                   species: IonSpecies = YB174, static_voltages=None, sample=None) -> list[TrapSite]:
    """One characterized site per RF hole, ordered like the holes (by y, then x).

    Without a drive only positions and heights are filled in; the
    frequency and depth fields are NaN.
    """
    layout = layout or fields.layout
    positions, centres = find_site_positions(fields, layout)
    if drive is None:
        nan3 = np.full(3, np.nan)
        return [
            TrapSite(p, nan3, np.eye(3), nan3, math.nan, nan3, float(p[2] - layout.ground_plane_height),
                     float(p[2] - layout.top_height), i, c)
            for i, (p, c) in enumerate(zip(positions, centres))
        ]
    if sample is None:
        sample = sample_total_potential(fields, drive, species, static_voltages)
    return [
        characterize_site(fields, drive, species, p, static_voltages, sample, layout, i, c)
        for i, (p, c) in enumerate(zip(positions, centres))
    ]


def descend_to_minimum(fields, drive, species, static_voltages, start, box=None, max_iter=500):
    """Follow the total potential downhill from ``start``; returns the final point."""
    box = search_box(fields) if box is None else np.asarray(box, dtype=float)
    x = np.clip(as_points(start)[0], box[:, 0], box[:, 1])
    sv = static_voltages

    def U(p):
        return float(total_potential(fields, drive, species, sv, p)[0])

    u = U(x)
    t = 1e-6
    for _ in range(max_iter):
        g = total_gradient(fields, drive, species, sv, x)[0]
        gn = np.linalg.norm(g)
        if gn == 0:
            break
        d = -g / gn
        while t > 1e-12:
            trial = np.clip(x + t * d, box[:, 0], box[:, 1])
            ut = U(trial)
            if ut < u:
                break
            t *= 0.5
        else:
            break
        x, u = trial, ut
        t *= 2.0
    return find_total_minimum(fields, drive, species, sv, x, box)


def classify_basin(fields, drive, species, static_voltages, point, sites, box=None):
    """Index of the site whose basin contains ``point``, or ``None``."""
    if not len(sites):
        return None
    end = descend_to_minimum(fields, drive, species, static_voltages, point, box)
    pos = np.array([s.position if isinstance(s, TrapSite) else s for s in sites])
    d = np.linalg.norm(pos - end, axis=1)
    sep = np.min(np.linalg.norm(pos[:, None] - pos[None], axis=-1) + np.eye(len(pos)) * 1e9) if len(pos) > 1 else math.inf
    i = int(np.argmin(d))
    return i if d[i] < min(0.25 * sep, 50e-6) else None


# --------------------------------------------------------------------------
# contours


@dataclass(frozen=True)
class ContourRequest:
    """Iso-energy contours on a plane ``axis = value`` (or masks in a 3D box).

    ``extent`` is the in-plane box ``((u0, u1), (v0, v1))`` (or the full 3x2
    box for 3D requests); ``None`` takes the search box.
    """

    levels: tuple
    plane: tuple | None = ("z", None)
    extent: tuple | None = None
    resolution: int = 200

    def __post_init__(self):
        lv = tuple(float(v) for v in self.levels)
        if list(lv) != sorted(lv):
            raise ValueError("contour levels must be sorted ascending")
        if self.resolution < 16:
            raise ValueError("contour resolution must be at least 16")
        object.__setattr__(self, "levels", lv)

    @classmethod
    def spaced(cls, start, stop, step, **kw):
        n = int(math.floor((stop - start) / step + 1e-9)) + 1
        return cls(tuple(round(start + i * step, 12) for i in range(n)), **kw)


@dataclass
class ContourSet:
    request: ContourRequest
    plane_axis: str | None
    plane_value: float | None
    contours: list  # dicts: level_ev, closed, points (n x 3)
    masks: dict | None = None

    def count(self, level=None):
        return sum(1 for c in self.contours if level is None or c["level_ev"] == level)


_AXES = {"x": 0, "y": 1, "z": 2}


def export_contours(fields, drive, species, request: ContourRequest, static_voltages=None,
                    default_height: float | None = None) -> ContourSet:
    box = search_box(fields)
    if request.plane is None:
        ext = np.asarray(request.extent, dtype=float) if request.extent is not None else box
        axes = [np.linspace(lo, hi, request.resolution) for lo, hi in ext]
        X, Y, Z = np.meshgrid(*axes, indexing="ij")
        U = total_potential(fields, drive, species, static_voltages,
                            np.column_stack([X.ravel(), Y.ravel(), Z.ravel()])).reshape(X.shape)
        masks = {lv: U <= lv for lv in request.levels}
        for lv, m in masks.items():
            if not m.any():
                warnings.warn(f"contour level {lv} eV lies below the sampled range", stacklevel=2)
        return ContourSet(request, None, None, [], masks)
    name, value = request.plane
    k = _AXES[name]
    if value is None:
        value = default_height if default_height is not None else 0.5 * (box[k, 0] + box[k, 1])
    others = [i for i in range(3) if i != k]
    ext = np.asarray(request.extent, dtype=float) if request.extent is not None else box[others]
    u = np.linspace(ext[0, 0], ext[0, 1], request.resolution)
    v = np.linspace(ext[1, 0], ext[1, 1], request.resolution)
    Uu, Vv = np.meshgrid(u, v, indexing="ij")
    pts = np.empty((Uu.size, 3))
    pts[:, others[0]], pts[:, others[1]], pts[:, k] = Uu.ravel(), Vv.ravel(), value
    E = total_potential(fields, drive, species, static_voltages, pts).reshape(Uu.shape)
    contours = []
    for lv in request.levels:
        if lv < E.min() or lv > E.max():
            warnings.warn(f"contour level {lv} eV lies outside the sampled range", stacklevel=2)
            continue
        for line in find_contours(E, lv):
            p = np.empty((len(line), 3))
            p[:, others[0]] = np.interp(line[:, 0], np.arange(len(u)), u)
            p[:, others[1]] = np.interp(line[:, 1], np.arange(len(v)), v)
            p[:, k] = value
            closed = bool(np.allclose(line[0], line[-1]))
            contours.append({"level_ev": lv, "closed": closed, "points": p})
    return ContourSet(request, name, float(value), contours)


def write_contours_csv(cs: ContourSet, path) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["level_ev", "contour", "closed", "point", "x_m", "y_m", "z_m"])
        for ci, c in enumerate(cs.contours):
            for pi, p in enumerate(c["points"]):
                w.writerow([repr(c["level_ev"]), ci, int(c["closed"]), pi, *(repr(float(v)) for v in p)])


# --------------------------------------------------------------------------
# estimator


class LatticeTrapAnalyzer(BaseEstimator):
    """Finds and characterizes every site of a solved field set.

    ``fit(fields)`` stores ``sites_``; ``predict(X)`` maps each point to the
    index of the site whose basin it falls into (-1 when none).
    """

    def __init__(self, drive_amplitude: float = 455.0, drive_frequency_hz: float = 32.2e6,
                 species: str = "Yb174", static_voltages: dict | None = None,
                 sample_spacing: float | None = None):
        self.drive_amplitude = drive_amplitude
        self.drive_frequency_hz = drive_frequency_hz
        self.species = species
        self.static_voltages = static_voltages
        self.sample_spacing = sample_spacing

    def _setup(self):
        return RfDrive.from_hz(self.drive_amplitude, self.drive_frequency_hz), get_species(self.species)

    def fit(self, X, y=None):
        fields = X
        drive, species = self._setup()
        self.sample_ = sample_total_potential(fields, drive, species, self.static_voltages,
                                              spacing=self.sample_spacing)
        self.sites_ = find_all_sites(fields, fields.layout, drive, species, self.static_voltages, self.sample_)
        self.fields_ = fields
        return self

    def predict(self, X):
        check_is_fitted(self, "sites_")
        drive, species = self._setup()
        out = []
        for p in as_points(X):
            i = classify_basin(self.fields_, drive, species, self.static_voltages, p, self.sites_)
            out.append(-1 if i is None else i)
        return np.array(out)

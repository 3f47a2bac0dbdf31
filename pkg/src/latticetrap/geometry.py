"""Planar electrode layouts for surface-electrode ion-trap lattices.

All lengths are in meters. The top chip surface is the plane ``z = 0``;
recessed conductors sit at negative ``plane_height``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import shapely
from scipy import constants
from shapely.geometry import MultiPoint, Polygon
from shapely.validation import explain_validity

from latticetrap.errors import (
    LatticeOverlapError,
    LayoutError,
    LayoutParseError,
    SiteCountError,
)

ROLES = ("rf", "static", "ground")

# relative area below which two polygons are considered to merely touch
_OVERLAP_RTOL = 1e-9


# --------------------------------------------------------------------------
# species and drive


@dataclass(frozen=True)
class IonSpecies:
    name: str
    mass: float
    charge: float

    def __post_init__(self):
        if not self.mass > 0:
            raise ValueError(f"ion mass must be positive, got {self.mass}")
        if self.charge == 0:
            raise ValueError("ion charge must be non-zero")

    @classmethod
    def from_amu(cls, name: str, mass_amu: float, charge_number: int = 1) -> "IonSpecies":
        """Ion from the neutral atomic mass; the missing electrons are subtracted."""
        if int(charge_number) != charge_number:
            raise ValueError("charge_number must be an integer")
        mass = mass_amu * constants.atomic_mass - charge_number * constants.electron_mass
        return cls(name, mass, charge_number * constants.e)


YB174 = IonSpecies.from_amu("Yb174", 173.9388621, 1)

SPECIES = {
    "Yb174": YB174,
    "Yb171": IonSpecies.from_amu("Yb171", 170.9363258, 1),
    "Ca40": IonSpecies.from_amu("Ca40", 39.96259086, 1),
    "Be9": IonSpecies.from_amu("Be9", 9.0121831, 1),
}


def get_species(name: str) -> IonSpecies:
    try:
        return SPECIES[name]
    except KeyError:
        raise LayoutError(f"unknown ion species {name!r}; known: {sorted(SPECIES)}") from None


@dataclass(frozen=True)
class RfDrive:
    """RF amplitude ``V0`` (volts) and angular drive frequency ``Omega`` (rad/s)."""

    amplitude: float
    angular_frequency: float

    def __post_init__(self):
        if self.amplitude < 0:
            raise ValueError("RF amplitude must be non-negative")
        if not self.angular_frequency > 0:
            raise ValueError("RF angular frequency must be positive")

    @classmethod
    def from_hz(cls, amplitude: float, frequency_hz: float) -> "RfDrive":
        return cls(amplitude, 2.0 * math.pi * frequency_hz)

    @property
    def frequency_hz(self) -> float:
        return self.angular_frequency / (2.0 * math.pi)

    def with_amplitude(self, amplitude: float) -> "RfDrive":
        return RfDrive(amplitude, self.angular_frequency)


PAPER_DRIVE = RfDrive.from_hz(455.0, 32.2e6)


# --------------------------------------------------------------------------
# polygons and electrodes


def _as_vertices(points, what) -> tuple[tuple[float, float], ...]:
    arr = np.asarray(points, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise LayoutError(f"{what}: expected a list of (x, y) vertices")
    if len(arr) > 1 and np.array_equal(arr[0], arr[-1]):
        arr = arr[:-1]
    if len(arr) < 3:
        raise LayoutError(f"{what}: polygon needs at least 3 vertices, got {len(arr)}")
    if not np.all(np.isfinite(arr)):
        raise LayoutError(f"{what}: non-finite vertex coordinate")
    return tuple((float(x), float(y)) for x, y in arr)


@dataclass(frozen=True)
class PolygonRegion:
    outer: tuple
    holes: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "outer", _as_vertices(self.outer, "outer ring"))
        object.__setattr__(
            self,
            "holes",
            tuple(_as_vertices(h, f"hole {i}") for i, h in enumerate(self.holes)),
        )

    def to_shapely(self) -> Polygon:
        return Polygon(self.outer, self.holes)

    @property
    def area(self) -> float:
        return self.to_shapely().area

    def transformed(self, matrix) -> "PolygonRegion":
        m = np.asarray(matrix, dtype=float)
        return PolygonRegion(
            np.asarray(self.outer) @ m.T,
            tuple(np.asarray(h) @ m.T for h in self.holes),
        )

    def scaled(self, factor: float) -> "PolygonRegion":
        return PolygonRegion(
            tuple((x * factor, y * factor) for x, y in self.outer),
            tuple(tuple((x * factor, y * factor) for x, y in h) for h in self.holes),
        )


@dataclass(frozen=True)
class Electrode:
    """A conductor: polygons on a plane, extruded downwards by ``thickness``."""

    id: str
    role: str
    regions: tuple
    plane_height: float = 0.0
    thickness: float = 0.0

    def __post_init__(self):
        if self.role not in ROLES:
            raise LayoutError(f"electrode {self.id!r}: role must be one of {ROLES}, got {self.role!r}")
        regions = tuple(
            r if isinstance(r, PolygonRegion) else PolygonRegion(**r) for r in self.regions
        )
        object.__setattr__(self, "regions", regions)
        object.__setattr__(self, "plane_height", float(self.plane_height))
        object.__setattr__(self, "thickness", float(self.thickness))

    def shape(self):
        return shapely.union_all([r.to_shapely() for r in self.regions])

    @property
    def bottom_height(self) -> float:
        return self.plane_height - self.thickness


@dataclass(frozen=True)
class BreakdownLimits:
    dc_volts: float = 1298.0
    rf_volts: float = 1061.0


@dataclass(frozen=True)
class ElectrodeLayout:
    electrodes: tuple
    ground_plane_height: float = 0.0
    breakdown_limits: BreakdownLimits = BreakdownLimits()
    metadata: Mapping = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "electrodes", tuple(self.electrodes))
        object.__setattr__(self, "ground_plane_height", float(self.ground_plane_height))

    @property
    def ids(self) -> list[str]:
        return [e.id for e in self.electrodes]

    def electrode(self, electrode_id: str) -> Electrode:
        for e in self.electrodes:
            if e.id == electrode_id:
                return e
        raise LayoutError(f"unknown electrode id {electrode_id!r}")

    @property
    def rf_electrode(self) -> Electrode:
        rf = [e for e in self.electrodes if e.role == "rf"]
        if len(rf) != 1:
            raise LayoutError(f"layout must have exactly one rf electrode, found {len(rf)}")
        return rf[0]

    @property
    def static_electrodes(self) -> list[Electrode]:
        return [e for e in self.electrodes if e.role == "static"]

    @property
    def top_height(self) -> float:
        return max(e.plane_height for e in self.electrodes)

    def hole_centres(self) -> np.ndarray:
        """Centroids of the holes cut into the RF electrode, ordered by (y, x)."""
        pts = []
        for region in self.rf_electrode.regions:
            for hole in region.holes:
                c = Polygon(hole).centroid
                pts.append((c.x, c.y))
        if not pts:
            return np.empty((0, 2))
        pts = np.array(pts)
        order = np.lexsort((np.round(pts[:, 0], 12), np.round(pts[:, 1], 12)))
        return pts[order]

    def hole_radius(self) -> float:
        """Equal-area radius of the RF holes (mean), used for seeding and grid defaults."""
        areas = [Polygon(h).area for r in self.rf_electrode.regions for h in r.holes]
        if not areas:
            return float(self.metadata.get("hexagon_radius", 0.0)) or 0.0
        return float(np.sqrt(np.mean(areas) / np.pi))

    def bounds(self, roles: Iterable[str] = ROLES) -> tuple[float, float, float, float]:
        shapes = [e.shape() for e in self.electrodes if e.role in tuple(roles)]
        return shapely.union_all(shapes).bounds


# --------------------------------------------------------------------------
# validation


@dataclass(frozen=True)
class Diagnostic:
    electrode: str | None
    rule: str
    message: str

    def __str__(self):
        who = self.electrode if self.electrode is not None else "<layout>"
        return f"{who}: [{self.rule}] {self.message}"


def _region_diagnostics(e: Electrode) -> list[Diagnostic]:
    out = []
    for i, region in enumerate(e.regions):
        ring = shapely.LinearRing(region.outer)
        if not ring.is_simple:
            out.append(Diagnostic(e.id, "simple-polygon", f"region {i}: outer ring self-intersects"))
            continue
        outer = Polygon(region.outer)
        holes = [Polygon(h) for h in region.holes]
        for j, h in enumerate(holes):
            if not shapely.LinearRing(region.holes[j]).is_simple:
                out.append(Diagnostic(e.id, "simple-polygon", f"region {i}: hole {j} self-intersects"))
            elif not outer.contains_properly(h):
                out.append(Diagnostic(e.id, "hole-inside", f"region {i}: hole {j} not strictly inside outer ring"))
        for j in range(len(holes)):
            for k in range(j + 1, len(holes)):
                if holes[j].intersects(holes[k]):
                    out.append(Diagnostic(e.id, "hole-disjoint", f"region {i}: holes {j} and {k} intersect"))
        if not out:
            poly = region.to_shapely()
            if not poly.is_valid:
                out.append(Diagnostic(e.id, "simple-polygon", f"region {i}: {explain_validity(poly)}"))
    return out


def _overlap(a, b) -> bool:
    inter = a.intersection(b).area
    return inter > _OVERLAP_RTOL * max(min(a.area, b.area), 1e-300)


def validate_layout(layout: ElectrodeLayout) -> list[Diagnostic]:
    """Check every layout invariant; an empty list means the layout is valid."""
    diags: list[Diagnostic] = []
    n_rf = sum(e.role == "rf" for e in layout.electrodes)
    if n_rf != 1:
        diags.append(Diagnostic(None, "rf-cardinality", f"expected exactly one rf electrode, found {n_rf}"))
    seen = set()
    for e in layout.electrodes:
        if e.id in seen:
            diags.append(Diagnostic(e.id, "unique-id", "duplicate electrode id"))
        seen.add(e.id)
        if not e.regions:
            diags.append(Diagnostic(e.id, "non-empty", "electrode has no regions"))
        if e.plane_height > 0:
            diags.append(Diagnostic(e.id, "plane-height", f"plane_height {e.plane_height} above top surface z=0"))
        if e.thickness < 0:
            diags.append(Diagnostic(e.id, "thickness", "thickness must be non-negative"))
        if e.bottom_height < layout.ground_plane_height - 1e-15:
            diags.append(Diagnostic(e.id, "below-ground", "conductor extends below the ground plane"))
        region_diags = _region_diagnostics(e)
        diags.extend(region_diags)
        if region_diags:
            continue
        polys = [r.to_shapely() for r in e.regions]
        for i in range(len(polys)):
            for j in range(i + 1, len(polys)):
                if _overlap(polys[i], polys[j]):
                    diags.append(Diagnostic(e.id, "region-overlap", f"regions {i} and {j} overlap"))

    valid_shapes = {}
    for e in layout.electrodes:
        if not any(d.electrode == e.id and d.rule in ("simple-polygon", "hole-inside") for d in diags):
            if e.regions:
                valid_shapes[e.id] = e
    items = list(valid_shapes.values())
    for i in range(len(items)):
        for j in range(i + 1, len(items)):
            a, b = items[i], items[j]
            if not math.isclose(a.plane_height, b.plane_height, rel_tol=0, abs_tol=1e-12):
                continue
            if _overlap(a.shape(), b.shape()):
                diags.append(Diagnostic(a.id, "electrode-overlap", f"overlaps electrode {b.id!r} on plane z={a.plane_height:g}"))

    lim = layout.breakdown_limits
    if not (lim.dc_volts > 0 and lim.rf_volts > 0):
        diags.append(Diagnostic(None, "breakdown-limits", "breakdown limits must be positive"))
    return diags


# --------------------------------------------------------------------------
# voltage budget


@dataclass(frozen=True)
class ChannelBudget:
    channel: str
    kind: str
    requested_volts: float
    limit_volts: float
    margin: float
    ok: bool


@dataclass(frozen=True)
class BudgetReport:
    channels: tuple

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.channels)

    def failures(self) -> list[ChannelBudget]:
        return [c for c in self.channels if not c.ok]


def check_voltage_budget(
    layout: ElectrodeLayout, drive: RfDrive, static_voltages: Mapping[str, float] | None = None
) -> BudgetReport:
    """Compare requested voltages against the flashover limits.

    ``margin`` is ``1 - |V|/limit``; a channel passes when the margin is
    non-negative (a voltage equal to the limit passes with margin 0).
    """
    static_voltages = dict(static_voltages or {})
    static_ids = {e.id for e in layout.static_electrodes}
    unknown = sorted(set(static_voltages) - static_ids)
    if unknown:
        raise LayoutError(f"unknown static electrode id(s): {unknown}")
    lim = layout.breakdown_limits

    def entry(name, kind, v, limit):
        margin = 1.0 - abs(v) / limit
        return ChannelBudget(name, kind, float(v), float(limit), margin, margin >= 0.0)

    rows = [entry(layout.rf_electrode.id, "rf", drive.amplitude, lim.rf_volts)]
    for e in layout.static_electrodes:
        rows.append(entry(e.id, "dc", static_voltages.get(e.id, 0.0), lim.dc_volts))
    return BudgetReport(tuple(rows))


# --------------------------------------------------------------------------
# transformations


def scale_layout(layout: ElectrodeLayout, factor: float) -> ElectrodeLayout:
    if not factor > 0:
        raise ValueError("scale factor must be positive")
    meta = dict(layout.metadata)
    for key in ("hexagon_radius", "site_separation", "outer_width_w", "recess_depth", "oxide_thickness", "comp_width", "gap"):
        if key in meta:
            meta[key] = meta[key] * factor
    if "site_centres" in meta:
        meta["site_centres"] = [[x * factor, y * factor] for x, y in meta["site_centres"]]
    electrodes = tuple(
        Electrode(
            e.id,
            e.role,
            tuple(r.scaled(factor) for r in e.regions),
            e.plane_height * factor,
            e.thickness * factor,
        )
        for e in layout.electrodes
    )
    return ElectrodeLayout(electrodes, layout.ground_plane_height * factor, layout.breakdown_limits, meta)


def rotate_layout(layout: ElectrodeLayout, angle: float) -> ElectrodeLayout:
    """Rigidly rotate the layout about the z axis by ``angle`` radians."""
    c, s = math.cos(angle), math.sin(angle)
    rot = np.array([[c, -s], [s, c]])
    meta = dict(layout.metadata)
    if "site_centres" in meta:
        meta["site_centres"] = (np.asarray(meta["site_centres"]) @ rot.T).tolist()
    electrodes = tuple(
        Electrode(e.id, e.role, tuple(r.transformed(rot) for r in e.regions), e.plane_height, e.thickness)
        for e in layout.electrodes
    )
    return ElectrodeLayout(electrodes, layout.ground_plane_height, layout.breakdown_limits, meta)


# --------------------------------------------------------------------------
# hexagonal lattice generator


@dataclass(frozen=True)
class HexLatticeSpec:
    hexagon_radius: float
    site_separation: float
    outer_width_w: float
    recess_depth: float
    site_count_target: int
    oxide_thickness: float | None = None
    comp_width: float = 500e-6
    gap: float = 10e-6

    @property
    def electrode_thickness(self) -> float:
        oxide = self.oxide_thickness if self.oxide_thickness is not None else 0.25 * self.recess_depth
        return max(self.recess_depth - oxide, 0.0)


def paper_lattice_spec() -> HexLatticeSpec:
    # recess = 156 um ion-ground separation - 116 um ion height; 10 um buried oxide
    return HexLatticeSpec(125e-6, 270.5e-6, 410e-6, 40e-6, 29, oxide_thickness=10e-6)


def modified_lattice_spec() -> HexLatticeSpec:
    """Scaled-down design: 13 um hexagons on a 32 um pitch, 5 um recess."""
    return HexLatticeSpec(
        13e-6, 32e-6, 410e-6 * 13 / 125, 5e-6, 29,
        oxide_thickness=2.5e-6, comp_width=500e-6 * 13 / 125, gap=2e-6,
    )


def lattice_rows(count: int) -> list[int]:
    """Row lengths of the most compact centrally symmetric hexagonal cluster.

    Clusters have ``2m + 1`` rows of lengths ``b-m, ..., b, ..., b-m``
    (so ``count = (2m+1) b - m(m+1)``), centred on a lattice point.
    """
    if count < 1:
        raise SiteCountError("site count must be positive")
    if count == 1:
        return [1]
    best = None
    for m in range(1, count):
        num = count + m * (m + 1)
        if num % (2 * m + 1):
            continue
        b = num // (2 * m + 1)
        if b - m < 2:
            continue
        score = abs(b - (2 * m + 1))
        if best is None or score < best[0]:
            best = (score, m, b)
    if best is None:
        raise SiteCountError(f"{count} sites cannot be tiled as a centrally symmetric hexagonal cluster")
    _, m, b = best
    return [b - abs(j - m) for j in range(2 * m + 1)]


def lattice_sites(spec: HexLatticeSpec) -> np.ndarray:
    """Site centres ordered row by row (increasing y, then x)."""
    rows = lattice_rows(spec.site_count_target)
    m = len(rows) // 2
    a = spec.site_separation
    pts = []
    for j, n in enumerate(rows):
        y = (j - m) * a * math.sqrt(3) / 2
        for i in range(n):
            pts.append(((i - (n - 1) / 2) * a, y))
    return np.array(pts)


def _hexagon(centre, radius) -> np.ndarray:
    # flats face the six nearest neighbours of the triangular lattice
    t = math.pi / 6 + np.arange(6) * math.pi / 3
    return np.column_stack([centre[0] + radius * np.cos(t), centre[1] + radius * np.sin(t)])


def _ccw(coords) -> np.ndarray:
    arr = np.asarray(coords)[:-1] if np.array_equal(coords[0], coords[-1]) else np.asarray(coords)
    if not shapely.LinearRing(arr).is_ccw:
        arr = arr[::-1]
    return arr


def _rf_outline(sites: np.ndarray, w: float):
    hull = MultiPoint([tuple(p) for p in sites]).convex_hull
    if hull.geom_type == "Polygon":
        return hull.buffer(w, join_style="mitre", mitre_limit=10.0)
    pieces = [Polygon(_hexagon(p, w / math.cos(math.pi / 6))) for p in sites]
    return shapely.union_all(pieces).convex_hull


def build_hex_lattice_layout(spec: HexLatticeSpec) -> ElectrodeLayout:
    """RF plate perforated by hexagonal holes, six Comp electrodes, recessed ground.

    Comp ``k`` is the ring sector centred on the polar angle ``(k - 3) * 60``
    degrees, so Comp 3 (+x) and Comp 6 (-x) face each other across the lattice.
    """
    r, a = spec.hexagon_radius, spec.site_separation
    if not (r > 0 and a > 0 and spec.outer_width_w > 0):
        raise LayoutError("hexagon_radius, site_separation and outer_width_w must be positive")
    if spec.recess_depth < 0:
        raise LayoutError("recess_depth must be non-negative")
    if a <= r * math.sqrt(3):
        raise LatticeOverlapError(
            f"site separation {a:g} m must exceed sqrt(3) * hexagon radius = {r * math.sqrt(3):g} m"
        )
    if spec.outer_width_w <= r:
        raise LatticeOverlapError("outer width w must exceed the hexagon radius")
    sites = lattice_sites(spec)
    holes = [_hexagon(p, r) for p in sites]

    rf_out = _rf_outline(sites, spec.outer_width_w)
    rf_outer = _ccw(np.array(rf_out.exterior.coords))
    t_el = spec.electrode_thickness
    z_top = 0.0
    rf = Electrode(
        "RF", "rf",
        (PolygonRegion(rf_outer, tuple(h[::-1] for h in holes)),),
        z_top, t_el,
    )

    centre = sites.mean(axis=0)
    inner = rf_out.buffer(spec.gap, join_style="mitre", mitre_limit=10.0)
    outer = rf_out.buffer(spec.gap + spec.comp_width, join_style="mitre", mitre_limit=10.0)
    ring = outer.difference(inner)
    big = 10.0 * (np.ptp(np.array(outer.exterior.coords), axis=0).max() + spec.comp_width)
    comps = []
    for k in range(1, 7):
        theta = math.radians((k - 3) * 60.0)
        t0, t1 = theta - math.pi / 6, theta + math.pi / 6
        ts = np.linspace(t0, t1, 8)
        wedge = Polygon(
            [tuple(centre)] + [tuple(centre + big * np.array([math.cos(t), math.sin(t)])) for t in ts]
        ).buffer(-spec.gap / 2, join_style="mitre", mitre_limit=10.0)
        sector = ring.intersection(wedge)
        if sector.geom_type != "Polygon":
            sector = max(getattr(sector, "geoms", [sector]), key=lambda g: g.area)
        sector = shapely.simplify(sector, 0.0)
        comps.append(Electrode(f"Comp{k}", "static", (PolygonRegion(_ccw(np.array(sector.exterior.coords))),), z_top, t_el))

    gnd = Electrode("GND", "ground", tuple(PolygonRegion(h) for h in holes), -spec.recess_depth, 0.0)
    meta = {
        "generator": "hex_lattice",
        "hexagon_radius": r,
        "site_separation": a,
        "outer_width_w": spec.outer_width_w,
        "recess_depth": spec.recess_depth,
        "oxide_thickness": spec.recess_depth - t_el,
        "comp_width": spec.comp_width,
        "gap": spec.gap,
        "site_count": int(len(sites)),
        "rows": lattice_rows(spec.site_count_target),
        "site_centres": sites.tolist(),
    }
    return ElectrodeLayout((rf, *comps, gnd), -spec.recess_depth, BreakdownLimits(), meta)


# --------------------------------------------------------------------------
# file format


def layout_to_dict(layout: ElectrodeLayout) -> dict:
    def ring(vs):
        return [[float(x), float(y)] for x, y in vs]

    out = {
        "electrodes": [
            {
                "id": e.id,
                "role": e.role,
                "plane_height_m": e.plane_height,
                "thickness_m": e.thickness,
                "regions": [{"outer": ring(r.outer), "holes": [ring(h) for h in r.holes]} for r in e.regions],
            }
            for e in layout.electrodes
        ],
        "ground_plane_height_m": layout.ground_plane_height,
        "breakdown_limits_v": {
            "dc_volts": layout.breakdown_limits.dc_volts,
            "rf_volts": layout.breakdown_limits.rf_volts,
        },
    }
    if layout.metadata:
        out["metadata"] = dict(layout.metadata)
    return out


def _require(obj, key, ctx):
    if not isinstance(obj, Mapping) or key not in obj:
        raise LayoutParseError(f"missing required key {key!r}", field=f"{ctx}{key}")
    return obj[key]


def layout_from_dict(data: Mapping) -> ElectrodeLayout:
    electrodes = []
    for i, ed in enumerate(_require(data, "electrodes", "")):
        ctx = f"electrodes[{i}]."
        regions = []
        for j, rd in enumerate(_require(ed, "regions", ctx)):
            rctx = f"{ctx}regions[{j}]."
            try:
                regions.append(PolygonRegion(_require(rd, "outer", rctx), tuple(rd.get("holes", ()))))
            except LayoutError as exc:
                raise LayoutParseError(str(exc), field=rctx.rstrip(".")) from None
        try:
            electrodes.append(
                Electrode(
                    str(_require(ed, "id", ctx)),
                    str(_require(ed, "role", ctx)),
                    tuple(regions),
                    float(_require(ed, "plane_height_m", ctx)),
                    float(ed.get("thickness_m", 0.0)),
                )
            )
        except LayoutParseError:
            raise
        except (LayoutError, TypeError, ValueError) as exc:
            raise LayoutParseError(str(exc), field=ctx.rstrip(".")) from None
    lim = data.get("breakdown_limits_v", {})
    limits = BreakdownLimits(float(lim.get("dc_volts", 1298.0)), float(lim.get("rf_volts", 1061.0)))
    return ElectrodeLayout(
        tuple(electrodes),
        float(_require(data, "ground_plane_height_m", "")),
        limits,
        dict(data.get("metadata", {})),
    )


def dumps_layout(layout: ElectrodeLayout) -> str:
    # repr-based float formatting round-trips exactly (17 significant digits)
    return json.dumps(layout_to_dict(layout), indent=1, sort_keys=False) + "\n"


def save_layout(layout: ElectrodeLayout, path) -> None:
    Path(path).write_text(dumps_layout(layout))


def loads_layout(text: str) -> ElectrodeLayout:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise LayoutParseError(exc.msg, line=exc.lineno) from None
    return layout_from_dict(data)


def load_layout(path) -> ElectrodeLayout:
    return loads_layout(Path(path).read_text())


def site_centres(layout: ElectrodeLayout) -> np.ndarray:
    """Lattice site centres: generator metadata when present, else RF hole centroids."""
    if "site_centres" in layout.metadata:
        return np.asarray(layout.metadata["site_centres"], dtype=float)
    return layout.hole_centres()


def regions_as_arrays(regions: Sequence[PolygonRegion]):
    """(outer, holes) vertex arrays with outer rings CCW and holes CW."""
    rings = []
    for r in regions:
        rings.append((_ccw(np.asarray(r.outer)), 1.0))
        for h in r.holes:
            rings.append((_ccw(np.asarray(h)), -1.0))
    return rings

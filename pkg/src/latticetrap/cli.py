"""``latticetrap`` command-line interface.

Every command writes machine-readable JSON (numeric keys carry SI-unit
suffixes) with a provenance block, and CSV for sampled data.  Exit codes:
0 success, 1 domain failure, 2 usage error.
"""

from __future__ import annotations

import json
import logging
import math
import re
import sys
from pathlib import Path

import click
import numpy as np

from latticetrap import __version__
from latticetrap.errors import LatticeTrapError, LayoutError
from latticetrap.geometry import (
    PAPER_DRIVE,
    RfDrive,
    build_hex_lattice_layout,
    check_voltage_budget,
    get_species,
    load_layout,
    modified_lattice_spec,
    paper_lattice_spec,
    save_layout,
    scale_layout,
    validate_layout,
)

log = logging.getLogger("latticetrap")

SITE_ALIASES = {"XI": 20, "LAMBDA": 21}

_PREFIX = {"": 1.0, "k": 1e3, "M": 1e6, "G": 1e9, "m": 1e-3, "u": 1e-6, "µ": 1e-6, "n": 1e-9}


def parse_quantity(text: str, unit: str) -> float:
    """``'32.2MHz'`` -> 3.22e7, ``'156um'`` -> 1.56e-4; bare numbers are SI."""
    m = re.fullmatch(r"\s*([-+0-9.eE]+)\s*([kMGmuµn]?)" + re.escape(unit) + r"?\s*", str(text))
    if not m:
        raise click.BadParameter(f"cannot parse {text!r} as a quantity in {unit}")
    try:
        value = float(m.group(1))
    except ValueError:
        raise click.BadParameter(f"cannot parse {text!r} as a number") from None
    return value * _PREFIX[m.group(2)]


def parse_drive(text: str) -> RfDrive:
    """``'455V@32.2MHz'``."""
    try:
        amp, freq = text.split("@")
    except ValueError:
        raise click.BadParameter("drive must look like 455V@32.2MHz") from None
    return RfDrive.from_hz(parse_quantity(amp, "V"), parse_quantity(freq, "Hz"))


def parse_contours(text: str):
    """``'levels=0.04:0.04:0.6 plane=z@156um'`` -> (start, step, stop, axis, value or 'site')."""
    opts = dict(part.split("=", 1) for part in text.split())
    try:
        start, step, stop = (float(v) for v in opts["levels"].split(":"))
    except (KeyError, ValueError):
        raise click.BadParameter("contours need levels=start:step:stop") from None
    axis, _, where = opts.get("plane", "z@site").partition("@")
    if axis not in ("x", "y", "z"):
        raise click.BadParameter("plane axis must be x, y or z")
    value = "site" if where in ("", "site") else parse_quantity(where, "m")
    return start, step, stop, axis, value


def site_index(text: str) -> int:
    key = text.upper()
    if key in SITE_ALIASES:
        return SITE_ALIASES[key]
    try:
        return int(text)
    except ValueError:
        raise click.BadParameter(f"unknown site {text!r} (use an index or XI/LAMBDA)") from None


# --------------------------------------------------------------------------
# output helpers


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating,)):
        obj = float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_clean(payload), indent=2, sort_keys=True) + "\n")


def provenance(ctx: click.Context, command: str, **config) -> dict:
    obj = ctx.find_root().obj
    return {
        "tool": "latticetrap",
        "version": __version__,
        "command": command,
        "backend": obj["backend"],
        "seed": obj["seed"],
        "config": {k: (str(v) if isinstance(v, Path) else v) for k, v in sorted(config.items())},
        "tolerances": {"laplace_residual_v": 1e-6, "nil_relative_gradient": 1e-3, "dedup_m": 1e-6},
    }


def _out(ctx, name) -> Path:
    return Path(ctx.find_root().obj["out_dir"]) / name


def _resolve(ctx, path: str | None, default: str) -> Path:
    p = Path(path) if path else Path(default)
    return p if p.is_absolute() or p.parent != Path(".") else _out(ctx, p.name)


# --------------------------------------------------------------------------
# root


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.option("--out-dir", type=click.Path(file_okay=False), default=".", show_default=True,
              help="Directory for outputs given as bare file names.")
@click.option("--seed", type=int, default=0, show_default=True, help="Seed for search routines.")
@click.option("--backend", type=click.Choice(["analytic", "grid"]), default="grid", show_default=True,
              help="Field solver.")
@click.option("--verbose", "-v", is_flag=True, help="Log progress to stderr.")
@click.version_option(__version__, prog_name="latticetrap")
@click.pass_context
def main(ctx, out_dir, seed, backend, verbose):
    """Design and analysis toolkit for surface-electrode ion-trap lattices."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    ctx.obj = {"out_dir": out_dir, "seed": seed, "backend": backend}


# --------------------------------------------------------------------------
# layout


@main.group()
def layout():
    """Generate, validate and scale electrode layouts."""


@layout.command("gen")
@click.option("--preset", type=click.Choice(["paper", "modified"]), default="paper", show_default=True)
@click.option("--sites", type=int, default=None, help="Override the site count.")
@click.option("--hexagon-radius", default=None, help="e.g. 125um")
@click.option("--separation", default=None, help="Site separation, e.g. 270.5um")
@click.option("--width", default=None, help="RF border width beyond the outer holes.")
@click.option("--recess", default=None, help="Ground-plane recess depth.")
@click.option("--out", default="layout.json", show_default=True)
@click.pass_context
def layout_gen(ctx, preset, sites, hexagon_radius, separation, width, recess, out):
    """Generate a hexagonal lattice layout."""
    import dataclasses

    spec = paper_lattice_spec() if preset == "paper" else modified_lattice_spec()
    changes = {}
    if sites is not None:
        changes["site_count_target"] = sites
    for key, val in [("hexagon_radius", hexagon_radius), ("site_separation", separation),
                     ("outer_width_w", width), ("recess_depth", recess)]:
        if val is not None:
            changes[key] = parse_quantity(val, "m")
    spec = dataclasses.replace(spec, **changes)
    lay = build_hex_lattice_layout(spec)
    path = _resolve(ctx, out, "layout.json")
    path.parent.mkdir(parents=True, exist_ok=True)
    save_layout(lay, path)
    click.echo(str(path))


@layout.command("validate")
@click.argument("path", type=click.Path(exists=True, dir_okay=False))
@click.option("--drive", default=None, help="Also check the voltage budget, e.g. 455V@32.2MHz")
@click.pass_context
def layout_validate(ctx, path, drive):
    """Check a layout; exit 1 if it is invalid or over budget."""
    lay = load_layout(path)
    diags = validate_layout(lay)
    payload = {
        "valid": not diags,
        "diagnostics": [{"electrode": d.electrode, "rule": d.rule, "message": d.message} for d in diags],
    }
    ok = not diags
    if drive:
        rep = check_voltage_budget(lay, parse_drive(drive), {})
        payload["budget"] = [
            {"channel": c.channel, "kind": c.kind, "requested_v": c.requested_volts, "limit_v": c.limit_volts,
             "margin": c.margin, "ok": c.ok}
            for c in rep.channels
        ]
        ok = ok and all(c.ok for c in rep.channels)
    click.echo(json.dumps(_clean(payload), indent=2, sort_keys=True))
    if not ok:
        ctx.exit(1)


@layout.command("scale")
@click.argument("path", type=click.Path(exists=True, dir_okay=False))
@click.option("--factor", type=float, required=True)
@click.option("--out", default="layout_scaled.json", show_default=True)
@click.pass_context
def layout_scale(ctx, path, factor, out):
    """Scale every length of a layout by a factor."""
    lay = scale_layout(load_layout(path), factor)
    dest = _resolve(ctx, out, "layout_scaled.json")
    dest.parent.mkdir(parents=True, exist_ok=True)
    save_layout(lay, dest)
    click.echo(str(dest))


# --------------------------------------------------------------------------
# solve


def _solve(ctx, lay, grid_spacing=None):
    from latticetrap.fields import solve_fields

    backend = ctx.find_root().obj["backend"]
    kw = {"spacing": grid_spacing} if (backend == "grid" and grid_spacing) else {}
    return solve_fields(lay, backend, **kw)


def _fields_from_args(ctx, layout_path, fields_path, grid_spacing):
    from latticetrap.fields import load_fields

    if fields_path:
        return load_fields(fields_path)
    if not layout_path:
        raise click.UsageError("give --layout or --fields")
    return _solve(ctx, load_layout(layout_path), grid_spacing)


@main.command()
@click.option("--layout", "layout_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--backend", "backend_opt", type=click.Choice(["analytic", "grid"]), default=None,
              help="Overrides the global --backend.")
@click.option("--grid-spacing", default=None, help="Core grid spacing, e.g. 12.5um")
@click.option("--out", default="fields.bin", show_default=True)
@click.option("--samples", type=click.Path(exists=True, dir_okay=False), default=None,
              help="CSV of x,y,z points (m) to export potentials at.")
@click.pass_context
def solve(ctx, layout_path, backend_opt, grid_spacing, out, samples):
    """Solve unit-voltage basis fields for every electrode."""
    from latticetrap.fields import export_field_samples, save_fields

    if backend_opt:
        ctx.find_root().obj["backend"] = backend_opt
    spacing = parse_quantity(grid_spacing, "m") if grid_spacing else None
    fields = _solve(ctx, load_layout(layout_path), spacing)
    dest = _resolve(ctx, out, "fields.bin")
    dest.parent.mkdir(parents=True, exist_ok=True)
    save_fields(fields, dest)
    meta = {
        "fields_file": dest.name,
        "solver_tag": fields.solver_tag,
        "residual_v": fields.residual,
        "bases": [b.electrode_id for b in fields.bases()],
        "provenance": provenance(ctx, "solve", layout=layout_path, grid_spacing_m=spacing),
    }
    if samples:
        pts = np.loadtxt(samples, delimiter=",", ndmin=2, comments="#")
        export_field_samples(fields, pts[:, :3], dest.with_suffix(".samples.csv"), PAPER_DRIVE,
                             get_species("Yb174"))
        meta["samples_file"] = dest.with_suffix(".samples.csv").name
    write_json(dest.with_suffix(".json"), meta)
    click.echo(str(dest))


# --------------------------------------------------------------------------
# characterize


def _characterize(fields, drive, species, statics=None):
    from latticetrap.analysis import find_all_sites, sample_total_potential

    sample = sample_total_potential(fields, drive, species, statics)
    return find_all_sites(fields, fields.layout, drive, species, statics, sample)


def _contours(fields, drive, species, spec, sites, layout):
    from latticetrap.analysis import ContourRequest, export_contours

    start, step, stop, axis, value = spec
    if value == "site":
        value = float(np.mean([s.position[2] for s in sites])) if axis == "z" else 0.0
    elif axis == "z":
        value = layout.ground_plane_height + value
    req = ContourRequest.spaced(start, stop, step, plane=(axis, value), resolution=240)
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return export_contours(fields, drive, species, req)


def _sites_payload(ctx, sites, drive, species, fields, command, /, **config):
    return {
        "site_count": len(sites),
        "drive": {"amplitude_v": drive.amplitude, "frequency_hz": drive.frequency_hz},
        "species": species.name,
        "solver_tag": fields.solver_tag,
        "sites": [s.to_dict() for s in sites],
        "provenance": provenance(ctx, command, **config),
    }


@main.command()
@click.option("--layout", "layout_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--fields", "fields_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--drive", default="455V@32.2MHz", show_default=True)
@click.option("--species", "species_name", default="Yb174", show_default=True)
@click.option("--grid-spacing", default=None)
@click.option("--contours", "contour_spec", default=None,
              help="e.g. 'levels=0.04:0.04:0.6 plane=z@156um' (height above the ground plane) or plane=z@site")
@click.option("--out", default="sites.json", show_default=True)
@click.pass_context
def characterize(ctx, layout_path, fields_path, drive, species_name, grid_spacing, contour_spec, out):
    """Find every trapping site and report frequencies, depth and heights."""
    from latticetrap.analysis import write_contours_csv

    d = parse_drive(drive)
    sp = get_species(species_name)
    cspec = parse_contours(contour_spec) if contour_spec else None
    spacing = parse_quantity(grid_spacing, "m") if grid_spacing else None
    fields = _fields_from_args(ctx, layout_path, fields_path, spacing)
    sites = _characterize(fields, d, sp)
    dest = _resolve(ctx, out, "sites.json")
    payload = _sites_payload(ctx, sites, d, sp, fields, "characterize", layout=layout_path, fields=fields_path,
                             drive=drive, species=species_name, grid_spacing_m=spacing, contours=contour_spec)
    if cspec:
        cs = _contours(fields, d, sp, cspec, sites, fields.layout)
        cpath = dest.with_name(dest.stem + "_contours.csv")
        write_contours_csv(cs, cpath)
        payload["contours"] = {"file": cpath.name, "plane_axis": cs.plane_axis, "plane_m": cs.plane_value,
                               "levels_ev": list(cs.request.levels), "count": cs.count()}
    write_json(dest, payload)
    click.echo(str(dest))


# --------------------------------------------------------------------------
# shuttle


@main.command()
@click.option("--layout", "layout_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--fields", "fields_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--from", "from_site", default="XI", show_default=True)
@click.option("--to", "to_site", default="LAMBDA", show_default=True)
@click.option("--waveform", "waveform_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--search", is_flag=True, help="Search a waveform instead of playing one.")
@click.option("--drive", default="455V@32.2MHz", show_default=True)
@click.option("--species", "species_name", default="Yb174", show_default=True)
@click.option("--grid-spacing", default=None)
@click.option("--max-evaluations", type=int, default=60, show_default=True)
@click.option("--out", default="shuttle.json", show_default=True)
@click.pass_context
def shuttle(ctx, layout_path, fields_path, from_site, to_site, waveform_path, search, drive, species_name,
            grid_spacing, max_evaluations, out):
    """Play or search a shuttling waveform between two sites."""
    from latticetrap.dynamics import Waveform, play_waveform, search_shuttle_waveform

    if bool(waveform_path) == bool(search):
        raise click.UsageError("give exactly one of --waveform or --search")
    a, b = site_index(from_site), site_index(to_site)
    d = parse_drive(drive)
    sp = get_species(species_name)
    spacing = parse_quantity(grid_spacing, "m") if grid_spacing else None
    fields = _fields_from_args(ctx, layout_path, fields_path, spacing)
    sites = _characterize(fields, d, sp)
    for i in (a, b):
        if not 0 <= i < len(sites):
            raise LayoutError(f"site {i} does not exist (layout has {len(sites)} sites)")
    if search:
        wf = search_shuttle_waveform(fields, d, sp, a, b, sites, seed=ctx.find_root().obj["seed"],
                                     max_evaluations=max_evaluations)
    else:
        wf = Waveform.load(waveform_path)
        bad = wf.check_limits(fields.layout)
        if bad:
            raise LayoutError("; ".join(bad))
    res = play_waveform(fields, d, sp, wf, a, b, sites)
    dest = _resolve(ctx, out, "shuttle.json")
    wf.save(dest.with_name(dest.stem + "_waveform.json"))
    res.trajectory.write_csv(dest.with_name(dest.stem + "_trajectory.csv"))
    write_json(dest, {
        "result": res.to_dict(),
        "waveform_file": dest.stem + "_waveform.json",
        "trajectory_file": dest.stem + "_trajectory.csv",
        "provenance": provenance(ctx, "shuttle", layout=layout_path, fields=fields_path, from_site=from_site,
                                 to_site=to_site, waveform=waveform_path, search=search, drive=drive,
                                 species=species_name, max_evaluations=max_evaluations),
    })
    click.echo(str(dest))
    if not res.success:
        ctx.exit(1)


# --------------------------------------------------------------------------
# feasibility


@main.command()
@click.option("--sites", "sites_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--separation", default=None, help="Nearest-neighbour separation instead of a sites file.")
@click.option("--omega", default="1MHz", show_default=True, help="Trap frequency (Hz units; converted to rad/s).")
@click.option("--force", type=float, default=None, help="State-dependent force (N); default pins J = 2pi x 1 kHz on the modified design.")
@click.option("--SE", "noise", type=float, default=1.6e-11, show_default=True, help="Field noise (V^2 m^-2 Hz^-1).")
@click.option("--scattering", type=float, default=10.0, show_default=True, help="Scattering rate (1/s).")
@click.option("--threshold", type=float, default=2.0, show_default=True)
@click.option("--species", "species_name", default="Yb174", show_default=True)
@click.option("--out", default="report.json", show_default=True)
@click.pass_context
def feasibility(ctx, sites_path, separation, omega, force, noise, scattering, threshold, species_name, out):
    """Quantum-simulation feasibility of a lattice design."""
    from latticetrap.quantum import feasibility_report

    if bool(sites_path) == bool(separation):
        raise click.UsageError("give exactly one of --sites or --separation")
    if sites_path:
        data = json.loads(Path(sites_path).read_text())
        design = [s["position_m"] for s in data["sites"]]
    else:
        design = parse_quantity(separation, "m")
    w = 2 * math.pi * parse_quantity(omega, "Hz")
    rep = feasibility_report(design, get_species(species_name), w, force, noise, scattering, threshold)
    dest = _resolve(ctx, out, "report.json")
    write_json(dest, {"report": rep.to_dict(),
                      "provenance": provenance(ctx, "feasibility", sites=sites_path, separation=separation,
                                               omega=omega, force_n=force, noise_se=noise,
                                               scattering_per_s=scattering, threshold=threshold,
                                               species=species_name)})
    click.echo(str(dest))


# --------------------------------------------------------------------------
# paper-repro


@main.command("paper-repro")
@click.option("--grid-spacing", default=None, help="Core grid spacing (default: hexagon radius / 10).")
@click.pass_context
def paper_repro(ctx, grid_spacing):
    """Reproduce the headline numbers: 29 sites, frequencies, depth, contours, feasibility."""
    from latticetrap.analysis import write_contours_csv
    from latticetrap.quantum import MODIFIED_SEPARATION, feasibility_report

    spacing = parse_quantity(grid_spacing, "m") if grid_spacing else None
    drive, sp = PAPER_DRIVE, get_species("Yb174")
    out = Path(ctx.find_root().obj["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    paper = build_hex_lattice_layout(paper_lattice_spec())
    modified = build_hex_lattice_layout(modified_lattice_spec())
    save_layout(paper, out / "layout_paper.json")
    save_layout(modified, out / "layout_modified.json")
    fields = _solve(ctx, paper, spacing)
    sites = _characterize(fields, drive, sp)
    write_json(out / "sites.json", _sites_payload(ctx, sites, drive, sp, fields, "paper-repro",
                                                  grid_spacing_m=spacing))
    rows = ["site,x_m,y_m,height_above_ground_m,height_above_surface_m,f1_hz,f2_hz,f3_hz,q1,q2,q3,depth_ev,"
            "boundary_limited"]
    for s in sites:
        f = s.secular_frequencies / (2 * math.pi)
        rows.append(",".join([str(s.index), *(repr(float(v)) for v in (*s.position[:2], s.height_above_ground,
                                                                         s.height_above_surface, *f,
                                                                         *s.mathieu_q, s.depth)),
                              str(int(s.boundary_limited))]))
    (out / "characterization.csv").write_text("\n".join(rows) + "\n")
    cs = _contours(fields, drive, sp, (0.04, 0.04, 0.6, "z", "site"), sites, paper)
    write_contours_csv(cs, out / "contours.csv")
    reports = {
        "paper": feasibility_report(sites, sp).to_dict(),
        "modified": feasibility_report(MODIFIED_SEPARATION, sp).to_dict(),
    }
    corner = sites[0]
    summary = {
        "site_count": len(sites),
        "corner_site": corner.to_dict(),
        "contours": {"file": "contours.csv", "plane_m": cs.plane_value, "levels_ev": list(cs.request.levels),
                     "closed_count": sum(1 for c in cs.contours if c["closed"])},
        "feasibility": reports,
        "provenance": provenance(ctx, "paper-repro", grid_spacing_m=spacing, drive_v=drive.amplitude,
                                 drive_hz=drive.frequency_hz, species=sp.name),
    }
    write_json(out / "feasibility.json", {"reports": reports, "provenance": summary["provenance"]})
    write_json(out / "summary.json", summary)
    click.echo(str(out / "summary.json"))


def run(argv=None) -> int:
    """Entry point returning the exit code instead of raising SystemExit."""
    try:
        # without standalone mode, click returns the code passed to ctx.exit
        rv = main.main(args=argv, prog_name="latticetrap", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.ClickException as exc:
        exc.show()
        return exc.exit_code
    except click.exceptions.Abort:
        return 1
    except LatticeTrapError as exc:
        click.echo(json.dumps({"error": type(exc).__name__, "message": str(exc)}, sort_keys=True), err=True)
        return 1
    return rv if isinstance(rv, int) else 0


def entry() -> None:
    sys.exit(run())


if __name__ == "__main__":
    entry()

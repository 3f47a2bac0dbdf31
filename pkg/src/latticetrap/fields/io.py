"""Saving and loading solved field sets, and CSV sample export."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from latticetrap.errors import LatticeTrapError
from latticetrap.fields.analytic import analytic_fields
from latticetrap.fields.base import FieldSet, as_points, pseudopotential
from latticetrap.fields.grid import fields_from_nodes
from latticetrap.geometry import dumps_layout, loads_layout

FORMAT = "latticetrap-fields/1"


def save_fields(fields: FieldSet, path) -> None:
    """Write a field set to ``path`` (numpy archive; the name is used verbatim).

    Grid sets store node values above the electrode surface only, which is
    all the evaluator needs.  Analytic sets store just the layout.
    """
    if fields.layout is None:
        raise LatticeTrapError("cannot save a field set without its layout")
    header = {
        "format": FORMAT,
        "solver_tag": fields.solver_tag,
        "residual_v": fields.residual,
        "layout": dumps_layout(fields.layout),
        "ids": [b.electrode_id for b in fields.bases()],
    }
    arrays = {}
    if fields.solver_tag == "grid":
        x, y, z = fields.metadata["axes"]
        k0 = int(np.searchsorted(z, fields.layout.top_height - 1e-12))
        arrays.update(x=x, y=y, z=z[k0:])
        for i, b in enumerate(fields.bases()):
            arrays[f"phi_{i}"] = b.node_values[:, :, k0:]
    with open(path, "wb") as fh:
        np.savez(fh, header=np.array(json.dumps(header, sort_keys=True)), **arrays)


def load_fields(path) -> FieldSet:
    try:
        data = np.load(Path(path), allow_pickle=False)
        header = json.loads(str(data["header"]))
    except (OSError, ValueError, KeyError) as exc:
        raise LatticeTrapError(f"{path}: not a field file ({exc})") from exc
    if header.get("format") != FORMAT:
        raise LatticeTrapError(f"{path}: unsupported field file format {header.get('format')!r}")
    layout = loads_layout(header["layout"])
    if header["solver_tag"] == "analytic":
        return analytic_fields(layout)
    nodes = {eid: data[f"phi_{i}"] for i, eid in enumerate(header["ids"])}
    return fields_from_nodes(layout, (data["x"], data["y"], data["z"]), nodes, header["residual_v"])


def export_field_samples(fields: FieldSet, points, path, drive=None, species=None) -> None:
    """CSV of ``x,y,z,phi_<id>...`` and, given a drive and species, ``pseudo_eV``."""
    pts = as_points(points)
    cols = {f"phi_{b.electrode_id}": b.potential(pts) for b in fields.bases()}
    if drive is not None and species is not None:
        cols["pseudo_eV"] = pseudopotential(fields, drive, species, pts)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x_m", "y_m", "z_m", *cols])
        for i, p in enumerate(pts):
            w.writerow([repr(float(v)) for v in p] + [repr(float(c[i])) for c in cols.values()])

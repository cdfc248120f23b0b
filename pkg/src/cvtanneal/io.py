"""JSON, CSV and SVG output.

Floats are written with Python's shortest round-trip repr, so every binary64
value re-parses to the identical bit pattern. Infinities are stored as null.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
import xml.etree.ElementTree as ET

import numpy as np

from .energy import EnergyReport
from .geometry import Configuration
from .laam import Cluster, LatticeAnchor, MinimaAtlas, signature
from .optimize import RunRecord, Schedule

SCHEMA_VERSION = 1


def _num(x):
    x = float(x)
    return None if math.isinf(x) or math.isnan(x) else x


def _unnum(x):
    return math.inf if x is None else float(x)


def points_to_list(points):
    return [[float(x), float(y)] for x, y in np.asarray(points, dtype=float).reshape(-1, 2)]


def energy_to_dict(report):
    return {k: _num(v) for k, v in report.as_dict().items()}


def energy_from_dict(d):
    return EnergyReport(**{k: _unnum(d[k]) for k in EnergyReport.__dataclass_fields__})


def record_to_dict(r):
    return {
        "schema_version": SCHEMA_VERSION,
        "seed": int(r.seed),
        "stream": int(r.stream),
        "schedule": r.schedule.as_dict(),
        "final_config": points_to_list(r.final_config.points),
        "final_energy": energy_to_dict(r.final_energy),
        "trajectory": [[int(t), float(u)] for t, u in r.trajectory],
        "accept_rate": float(r.accept_rate),
        "proposal_std": float(r.proposal_std),
        "proposal_std_final": float(r.proposal_std_final),
        "std_halvings": [int(t) for t in r.std_halvings],
        "uphill_proposed": int(r.uphill_proposed),
        "uphill_accepted": int(r.uphill_accepted),
        "energy_drift": float(r.energy_drift),
        "anchored_energy": None if r.anchored_energy is None else float(r.anchored_energy),
    }


def record_from_dict(d):
    return RunRecord(
        final_config=Configuration(d["final_config"]),
        final_energy=energy_from_dict(d["final_energy"]),
        trajectory=[(int(t), float(u)) for t, u in d["trajectory"]],
        schedule=Schedule.from_dict(d["schedule"]),
        accept_rate=float(d["accept_rate"]),
        seed=int(d["seed"]),
        stream=int(d["stream"]),
        proposal_std=float(d["proposal_std"]),
        proposal_std_final=float(d["proposal_std_final"]),
        std_halvings=list(d["std_halvings"]),
        uphill_proposed=int(d["uphill_proposed"]),
        uphill_accepted=int(d["uphill_accepted"]),
        energy_drift=float(d["energy_drift"]),
        anchored_energy=d["anchored_energy"],
    )


def anchor_to_dict(a):
    return {
        "construction": a.construction,
        "layers": int(a.layers),
        "anchor_points": points_to_list(a.anchor_points),
    }


def anchor_from_dict(d):
    pts = np.array(d["anchor_points"], dtype=float).reshape(-1, 2)
    pts.setflags(write=False)
    return LatticeAnchor(anchor_points=pts, layers=int(d["layers"]), construction=d["construction"])


def atlas_to_dict(atlas):
    return {
        "schema_version": SCHEMA_VERSION,
        "global_index": int(atlas.global_index),
        "assignments": [int(a) for a in atlas.assignments],
        "clusters": [
            {
                "representative": points_to_list(c.representative.points),
                "energy_u": _num(c.energy_u),
                "energy_centroid": _num(c.energy_centroid),
                "gap": _num(c.gap),
                "members": [int(m) for m in c.members],
                "trap_timescale": _num(c.trap_timescale),
            }
            for c in atlas.clusters
        ],
    }


def atlas_from_dict(d):
    clusters = []
    for c in d["clusters"]:
        rep = Configuration(c["representative"])
        clusters.append(Cluster(
            representative=rep,
            energy_u=_unnum(c["energy_u"]),
            energy_centroid=_unnum(c["energy_centroid"]),
            gap=_unnum(c["gap"]),
            members=list(c["members"]),
            trap_timescale=_unnum(c["trap_timescale"]),
            signature=signature(rep, _unnum(c["energy_u"])),
        ))
    return MinimaAtlas(clusters=clusters, global_index=int(d["global_index"]),
                       assignments=list(d["assignments"]))


def dumps(obj):
    return json.dumps(obj, indent=2, sort_keys=False, allow_nan=False) + "\n"


def write_atomic(path, text):
    """Write via a temporary file in the same directory, then rename over ``path``."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path, obj):
    write_atomic(path, dumps(obj))


def trajectories_csv(rows):
    """CSV text for rows of (run, schedule_index, seed, sweep, energy) with a running minimum per run."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["run", "schedule_index", "seed", "sweep", "energy", "running_min"])
    best = {}
    for run, si, seed, t, u in rows:
        best[run] = min(best.get(run, math.inf), u)
        w.writerow([run, si, seed, t, repr(float(u)), repr(float(best[run]))])
    return buf.getvalue()


def tessellation_svg(domain, tess, config, size=400, margin=10):
    """Static SVG drawing: one ``polygon`` per cell, one ``circle`` per generator."""
    lo = domain.vertices.min(axis=0)
    span = float((domain.vertices.max(axis=0) - lo).max())
    scale = (size - 2 * margin) / span

    def xy(p):
        # flip y so the drawing has the usual orientation
        return margin + (p[0] - lo[0]) * scale, size - margin - (p[1] - lo[1]) * scale

    svg = ET.Element("svg", xmlns="http://www.w3.org/2000/svg", version="1.1",
                     width=str(size), height=str(size), viewBox=f"0 0 {size} {size}")
    style = ET.SubElement(svg, "style")
    style.text = ("polygon.cell {fill: #e8eef7; stroke: #234; stroke-width: 1;} "
                  "path.domain {fill: none; stroke: black; stroke-width: 2;} "
                  "circle.generator {fill: #c22;} circle.centroid {fill: none; stroke: #2a2;}")
    outline = " ".join("{}{:.3f},{:.3f}".format("M" if k == 0 else "L", *xy(p))
                       for k, p in enumerate(domain.vertices)) + " Z"
    for cell in tess.cells:
        pts = " ".join("{:.3f},{:.3f}".format(*xy(p)) for p in cell)
        ET.SubElement(svg, "polygon", {"class": "cell", "points": pts})
    ET.SubElement(svg, "path", {"class": "domain", "d": outline})
    for p in config.points:
        x, y = xy(p)
        ET.SubElement(svg, "circle", {"class": "generator", "cx": f"{x:.3f}", "cy": f"{y:.3f}", "r": "3"})
    return ET.tostring(svg, encoding="unicode") + "\n"

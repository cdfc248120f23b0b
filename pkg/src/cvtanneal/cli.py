"""Command-line driver.

Every subcommand reads a JSON experiment file (see ``docs/config.md``) and
writes its artifacts into the output directory. Exit codes: 0 success,
1 configuration error, 2 non-convergence, 3 anchored-recovery failure,
4 Hessian spectrum violation.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import io as cio
from .energy import Quadrature, electrostatic_energy, symmetry_orbit, second_variation_checks
from .errors import CVTError, ConfigError
from .geometry import (
    Configuration,
    build_domain,
    check_configuration,
    random_configuration,
    regular_polygon,
    tessellate,
    unit_square,
)
from .laam import (
    MIRROR,
    TRANSLATE,
    cluster_minima,
    gap_timescale_table,
    minimal_anchor,
    schedule_stream,
    sweep_rates,
    timescale_correlation,
)
from .optimize import AnnealParams, Schedule, anneal, lloyd_run, make_rng

logger = logging.getLogger("cvtanneal")

EXIT_OK, EXIT_CONFIG, EXIT_NONCONVERGED, EXIT_RECOVERY, EXIT_SPECTRUM = 0, 1, 2, 3, 4


@dataclass
class ExperimentConfig:
    domain: object
    n_points: int
    points: np.ndarray = None
    schedules: list = field(default_factory=list)
    seed: int = 0
    seeds_per_schedule: int = 1
    quadrature: int = 32
    proposal_std: float = None
    adapt: bool = True
    record_every: int = 1
    lloyd_tol: float = 1e-10
    lloyd_max_iter: int = 1000
    dist_tol: float = 1e-2
    energy_tol: float = 1e-3
    zero_tol: float = 1e-4
    psd_tol: float = 1e-5
    fd_step: float = None
    max_layers: int = 3
    trials: int = 10
    required: int = 8
    perturbation: float = 0.05
    construction: str = TRANSLATE
    anchor_schedule: Schedule = None
    output_dir: str = "out"

    @property
    def quad(self):
        return Quadrature(self.quadrature)

    def params(self, seed=None):
        return AnnealParams(proposal_std=self.proposal_std, seed=self.seed if seed is None else seed,
                            record_every=self.record_every, adapt=self.adapt)


def _get(d, key, kind, default=None, required=False, where=""):
    name = f"{where}{key}"
    if key not in d:
        if required:
            raise ConfigError(name, "missing required field")
        return default
    v = d[key]
    if kind is int:
        if isinstance(v, bool) or not isinstance(v, int):
            raise ConfigError(name, f"expected an integer, got {v!r}")
    elif kind is float:
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            raise ConfigError(name, f"expected a finite number, got {v!r}")
        v = float(v)
    elif kind is bool:
        if not isinstance(v, bool):
            raise ConfigError(name, f"expected true/false, got {v!r}")
    elif kind is str:
        if not isinstance(v, str):
            raise ConfigError(name, f"expected a string, got {v!r}")
    elif kind is dict:
        if not isinstance(v, dict):
            raise ConfigError(name, f"expected an object, got {v!r}")
    elif kind is list:
        if not isinstance(v, list):
            raise ConfigError(name, f"expected a list, got {v!r}")
    return v


def _domain(d):
    if not isinstance(d, dict):
        raise ConfigError("domain", "expected an object")
    try:
        if "vertices" in d:
            return build_domain(np.asarray(d["vertices"], dtype=float))
        preset = _get(d, "preset", str, required=True, where="domain.")
        if preset == "unit-square":
            return unit_square()
        if preset == "regular-k-gon":
            k = _get(d, "k", int, 64, where="domain.")
            r = _get(d, "radius", float, 1.0, where="domain.")
            return regular_polygon(k, r)
        raise ConfigError("domain.preset", f"unknown preset {preset!r}")
    except ConfigError:
        raise
    except (CVTError, ValueError, TypeError) as e:
        raise ConfigError("domain", str(e)) from e


def _schedule(d, name):
    if not isinstance(d, dict):
        raise ConfigError(name, "expected an object")
    try:
        return Schedule(kind=_get(d, "kind", str, "geometric", where=name + "."),
                        t0=_get(d, "t0", float, required=True, where=name + "."),
                        steps=_get(d, "steps", int, required=True, where=name + "."),
                        alpha=_get(d, "alpha", float, None, where=name + "."),
                        c=_get(d, "c", float, None, where=name + "."))
    except ConfigError:
        raise
    except CVTError as e:
        raise ConfigError(name, str(e)) from e


def parse_config(raw, seed=None, quadrature=None):
    """Validate a decoded JSON object into an :class:`ExperimentConfig`."""
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "expected a JSON object")
    version = _get(raw, "schema_version", int, required=True)
    if version != cio.SCHEMA_VERSION:
        raise ConfigError("schema_version", f"unsupported version {version}")
    domain = _domain(raw.get("domain", {"preset": "unit-square"}))

    points = None
    if "points" in raw:
        pts = _get(raw, "points", list)
        try:
            points = np.asarray(pts, dtype=float).reshape(-1, 2)
        except (ValueError, TypeError) as e:
            raise ConfigError("points", "expected a list of [x, y] pairs") from e
        try:
            check_configuration(domain, Configuration(points))
        except CVTError as e:
            raise ConfigError("points", str(e)) from e
    n_points = _get(raw, "n_points", int, None if points is None else len(points))
    if n_points is None:
        raise ConfigError("n_points", "missing required field (or give points)")
    if n_points < 1:
        raise ConfigError("n_points", "need at least one generator")
    if points is not None and len(points) != n_points:
        raise ConfigError("n_points", f"{n_points} does not match {len(points)} points")

    schedules = [_schedule(s, f"schedules[{k}]") for k, s in enumerate(_get(raw, "schedules", list, []))]

    cfg = ExperimentConfig(domain=domain, n_points=n_points, points=points, schedules=schedules)
    cfg.seed = _get(raw, "seed", int, 0)
    cfg.seeds_per_schedule = _get(raw, "seeds_per_schedule", int, 1)
    if cfg.seeds_per_schedule < 1:
        raise ConfigError("seeds_per_schedule", "must be >= 1")
    cfg.quadrature = _get(raw, "quadrature", int, 32)
    cfg.proposal_std = _get(raw, "proposal_std", float, None)
    if cfg.proposal_std is not None and not 0 < cfg.proposal_std < domain.diameter:
        raise ConfigError("proposal_std", "must lie in (0, domain diameter)")
    cfg.adapt = _get(raw, "adapt", bool, True)
    cfg.record_every = _get(raw, "record_every", int, 1)
    if cfg.record_every < 1:
        raise ConfigError("record_every", "must be >= 1")
    cfg.output_dir = _get(raw, "output_dir", str, "out")

    lloyd = _get(raw, "lloyd", dict, {})
    cfg.lloyd_tol = _get(lloyd, "tol", float, 1e-10, where="lloyd.")
    cfg.lloyd_max_iter = _get(lloyd, "max_iter", int, 1000, where="lloyd.")
    if cfg.lloyd_tol <= 0:
        raise ConfigError("lloyd.tol", "must be positive")
    if cfg.lloyd_max_iter < 0:
        raise ConfigError("lloyd.max_iter", "must be >= 0")

    tol = _get(raw, "tolerances", dict, {})
    for key in ("dist_tol", "energy_tol", "zero_tol", "psd_tol"):
        v = _get(tol, key, float, getattr(cfg, key), where="tolerances.")
        if v <= 0:
            raise ConfigError(f"tolerances.{key}", "must be positive")
        setattr(cfg, key, v)
    cfg.fd_step = _get(tol, "fd_step", float, None, where="tolerances.")

    laam = _get(raw, "laam", dict, {})
    cfg.max_layers = _get(laam, "max_layers", int, 3, where="laam.")
    cfg.trials = _get(laam, "trials", int, 10, where="laam.")
    cfg.required = _get(laam, "required", int, 8, where="laam.")
    cfg.perturbation = _get(laam, "perturbation", float, 0.05, where="laam.")
    cfg.construction = _get(laam, "construction", str, TRANSLATE, where="laam.")
    if cfg.construction not in (TRANSLATE, MIRROR):
        raise ConfigError("laam.construction", f"unknown construction {cfg.construction!r}")
    if "anchor_schedule" in laam:
        cfg.anchor_schedule = _schedule(laam["anchor_schedule"], "laam.anchor_schedule")
    else:
        cfg.anchor_schedule = Schedule.geometric_with_ratio(0.1, 300, 1e-4)

    if seed is not None:
        cfg.seed = seed
    if quadrature is not None:
        cfg.quadrature = quadrature
    try:
        cfg.quad
    except ValueError as e:
        raise ConfigError("quadrature", str(e)) from e
    return cfg


def load_config(path, seed=None, quadrature=None):
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as e:
        raise ConfigError("--config", f"cannot read {path}: {e.strerror}") from e
    except json.JSONDecodeError as e:
        raise ConfigError("<json>", f"malformed JSON at line {e.lineno} column {e.colno}: {e.msg}") from e
    return parse_config(raw, seed=seed, quadrature=quadrature)


def _initial(cfg, seed, stream=0):
    if cfg.points is not None:
        return Configuration(cfg.points)
    return random_configuration(cfg.domain, cfg.n_points, make_rng(seed, stream + (2 << 32)))


# ---------------------------------------------------------------------------
# Subcommands


def cmd_lloyd(cfg, out, jobs=1):
    res = lloyd_run(cfg.domain, _initial(cfg, cfg.seed), cfg.lloyd_tol, cfg.lloyd_max_iter)
    report = electrostatic_energy(res.config, cfg.domain, cfg.quad)
    cio.write_json(os.path.join(out, "cvt.json"), {
        "schema_version": cio.SCHEMA_VERSION,
        "points": cio.points_to_list(res.config.points),
        "energy": cio.energy_to_dict(report),
        "residuals": [float(r) for r in res.residuals],
        "converged": res.converged,
        "iterations": res.iterations,
    })
    tess = tessellate(cfg.domain, res.config)
    cio.write_atomic(os.path.join(out, "cvt.svg"), cio.tessellation_svg(cfg.domain, tess, res.config))
    return EXIT_OK if res.converged else EXIT_NONCONVERGED


def _anneal_job(args):
    cfg, si, schedule, seed = args
    stream = schedule_stream(schedule)
    params = replace(cfg.params(seed), stream=stream)
    return anneal(cfg.domain, _initial(cfg, seed, stream), schedule, params, cfg.quad)


def _map(fn, tasks, jobs):
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, tasks))
    return [fn(t) for t in tasks]


def cmd_anneal(cfg, out, jobs=1):
    if not cfg.schedules:
        raise ConfigError("schedules", "at least one schedule is required")
    tasks = [(cfg, si, s, cfg.seed + k) for si, s in enumerate(cfg.schedules)
             for k in range(cfg.seeds_per_schedule)]
    records = _map(_anneal_job, tasks, jobs)
    rows = []
    for run, ((_, si, _, seed), rec) in enumerate(zip(tasks, records)):
        cio.write_json(os.path.join(out, f"run_s{si}_seed{seed}.json"), cio.record_to_dict(rec))
        rows.extend((run, si, seed, t, u) for t, u in rec.trajectory)
    cio.write_atomic(os.path.join(out, "trajectories.csv"), cio.trajectories_csv(rows))
    return EXIT_OK


def cmd_laam(cfg, out, jobs=1):
    if not cfg.schedules:
        raise ConfigError("schedules", "at least one schedule is required")
    schedules = list(dict.fromkeys(cfg.schedules))
    records = sweep_rates(cfg.domain, cfg.n_points, schedules, cfg.seeds_per_schedule,
                          cfg.params(), cfg.quad, base_seed=cfg.seed, jobs=jobs)
    atlas = cluster_minima(records, cfg.dist_tol, cfg.energy_tol)
    doc = cio.atlas_to_dict(atlas)
    doc["runs"] = [{"schedule": r.schedule.as_dict(), "seed": r.seed,
                    "energy_u": r.final_energy.total_electrostatic} for r in records]
    if len(atlas.clusters) >= 2:
        rows = gap_timescale_table(atlas)
        doc["gap_timescale"] = [[cio._num(g), cio._num(t)] for g, t in rows]
        doc["spearman_gap_vs_inverse_timescale"] = cio._num(timescale_correlation(rows))
    else:
        doc["gap_timescale"] = None
        doc["spearman_gap_vs_inverse_timescale"] = None

    failed = False
    for k, cluster in enumerate(atlas.clusters):
        rec = minimal_anchor(cfg.domain, atlas, k, cfg.anchor_schedule, cfg.params(),
                             max_layers=cfg.max_layers, trials=cfg.trials, required=cfg.required,
                             perturbation=cfg.perturbation, construction=cfg.construction,
                             quad=cfg.quad, dist_tol=cfg.dist_tol, energy_tol=cfg.energy_tol)
        doc["clusters"][k]["anchor"] = cio.anchor_to_dict(rec.anchor)
        doc["clusters"][k]["recovery"] = {
            "passed": rec.passed, "layers": rec.layers, "successes": rec.successes,
            "trials": rec.trials, "outcomes": rec.outcomes,
        }
        failed |= not rec.passed
        rep = cluster.representative
        cio.write_atomic(os.path.join(out, f"cluster_{k}.svg"),
                         cio.tessellation_svg(cfg.domain, tessellate(cfg.domain, rep), rep))
    doc["recovery_failed"] = failed
    cio.write_json(os.path.join(out, "atlas.json"), doc)
    return EXIT_RECOVERY if failed else EXIT_OK


def spectra_document(cfg, config, lloyd=None):
    checks, diagnostic = second_variation_checks(cfg.domain, config, cfg.quad, cfg.fd_step, cfg.zero_tol, cfg.psd_tol)

    def entry(c):
        return {
            "eigenvalues": [float(w) for w in c.report.eigenvalues],
            "min_eigenvalue": float(c.report.min_eigenvalue),
            "num_near_zero": int(c.report.num_near_zero),
            "projected_min": float(c.projected_min),
            "passed": bool(c.passed),
            "offending_eigenvector": None if c.offending_vector is None
            else [float(v) for v in c.offending_vector],
        }

    doc = {
        "schema_version": cio.SCHEMA_VERSION,
        "points": cio.points_to_list(config.points),
        "symmetry_orbit_size": symmetry_orbit(cfg.domain, config),
        # a polygon's symmetry group is finite, so its orbits carry no continuous zero modes
        "symmetry_modes_expected": 0,
        "spectra": {c.name: entry(c) for c in checks},
        "diagnostics": {diagnostic.name: entry(diagnostic)},
        "all_passed": all(c.passed for c in checks),
    }
    if lloyd is not None:
        doc["lloyd"] = {"converged": lloyd.converged, "iterations": lloyd.iterations,
                        "residual": float(lloyd.residuals[-1]) if lloyd.residuals else None}
    for c in checks:
        if not c.passed:
            logger.warning("%s Hessian not positive semidefinite: projected min %.6g, eigenvector %s",
                           c.name, c.projected_min, np.array2string(c.offending_vector, precision=4))
    return doc


def cmd_verify(cfg, out, jobs=1):
    res = lloyd_run(cfg.domain, _initial(cfg, cfg.seed), cfg.lloyd_tol, cfg.lloyd_max_iter)
    doc = spectra_document(cfg, res.config, res)
    cio.write_json(os.path.join(out, "spectra.json"), doc)
    if not res.converged:
        return EXIT_NONCONVERGED
    return EXIT_OK if doc["all_passed"] else EXIT_SPECTRUM


def cmd_energy(cfg, out, jobs=1):
    if cfg.points is None:
        raise ConfigError("points", "the energy command needs explicit points")
    report = electrostatic_energy(Configuration(cfg.points), cfg.domain, cfg.quad)
    cio.write_json(os.path.join(out, "energy.json"), {
        "schema_version": cio.SCHEMA_VERSION,
        "points": cio.points_to_list(cfg.points),
        "quadrature": cfg.quadrature,
        "energy": cio.energy_to_dict(report),
    })
    return EXIT_OK


COMMANDS = {
    "lloyd": cmd_lloyd,
    "anneal": cmd_anneal,
    "laam": cmd_laam,
    "verify": cmd_verify,
    "energy": cmd_energy,
}

HELP = {
    "lloyd": "run Lloyd iteration to a centroidal tessellation",
    "anneal": "anneal every (schedule, seed) pair and record trajectories",
    "laam": "sweep schedules, cluster minima, build anchors and test recovery",
    "verify": "Hessian spectra of the three energies at a Lloyd fixed point",
    "energy": "energy report for explicit points",
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="experiment JSON file")
    common.add_argument("--out", default=None, help="output directory (overrides output_dir)")
    common.add_argument("--seed", type=int, default=None, help="override the base seed")
    common.add_argument("--jobs", type=int, default=1, help="parallel independent runs")
    common.add_argument("--quadrature", type=int, default=None, help="Gauss-Legendre nodes per edge")
    common.add_argument("-v", "--verbose", action="store_true")
    parser = argparse.ArgumentParser(prog="cvtanneal", description="Centroidal Voronoi tessellations, electrostatic annealing and anchored minima maps.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=HELP[name])
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.seed is not None and not 0 <= args.seed < 2**64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config, seed=args.seed, quadrature=args.quadrature)
        out = args.out or cfg.output_dir
        return COMMANDS[args.command](cfg, out, max(args.jobs, 1))
    except ConfigError as e:
        print(f"error: invalid config: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

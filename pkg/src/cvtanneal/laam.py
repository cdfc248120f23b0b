"""Lattice-anchored annealing maps of metastable configurations.

Pipeline: anneal from random starts at several cooling rates, polish every
final state to a local minimum of U, group the minima into clusters by an
isometry-invariant signature, then surround each cluster's representative
with fixed copies of itself outside the domain (a lattice anchor) and check
that optimisation under the anchor returns to the same cluster.
"""

from __future__ import annotations

import json
import logging
import math
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.stats import spearmanr

from .energy import Quadrature, electrostatic_energy
from .errors import (
    EmptyInput,
    NoGenerators,
    TooFewClusters,
    UnsupportedDomainForTiling,
    CVTError,
)
from .geometry import Configuration, check_configuration, random_configuration
from .optimize import AnnealParams, anneal, make_rng, polish, polish_record

logger = logging.getLogger(__name__)

TRANSLATE = "translate-tile"
MIRROR = "mirror-tile"
MAX_TILES = 20000


# ---------------------------------------------------------------------------
# Signatures


@dataclass(frozen=True, eq=False)
class Signature:
    sorted_pair_distances: np.ndarray
    energy_u: float


def signature(config, energy_u):
    pts = config.points
    n = len(pts)
    iu = np.triu_indices(n, 1)
    d = np.sqrt(((pts[iu[0]] - pts[iu[1]]) ** 2).sum(axis=1))
    return Signature(np.sort(d), float(energy_u))


def signature_distance(a, b):
    """Relative L-infinity distance between sorted pair-distance lists."""
    x, y = a.sorted_pair_distances, b.sorted_pair_distances
    if len(x) != len(y):
        return math.inf
    if len(x) == 0:
        return 0.0
    return float(np.abs(x - y).max() / max(x[-1], y[-1]))


def same_minimum(a, b, dist_tol=1e-2, energy_tol=1e-3):
    scale = max(abs(a.energy_u), abs(b.energy_u))
    return signature_distance(a, b) <= dist_tol and abs(a.energy_u - b.energy_u) <= energy_tol * scale


# ---------------------------------------------------------------------------
# Sweeps


def schedule_stream(schedule):
    """Stable stream id for a schedule, so a run does not depend on list position."""
    key = json.dumps(schedule.as_dict(), sort_keys=True).encode()
    return zlib.crc32(key)


def _sweep_job(args):
    domain, n_points, schedule, seed, params, quad = args
    stream = schedule_stream(schedule)
    config0 = random_configuration(domain, n_points, make_rng(seed, stream + (2 << 32)))
    run_params = replace(params, seed=seed, stream=stream)
    record = anneal(domain, config0, schedule, run_params, quad)
    return polish_record(domain, record, quad)


def sweep_rates(domain, n_points, schedules, seeds_per_schedule, params=AnnealParams(),
                quad=Quadrature(), base_seed=0, jobs=1):
    """Anneal ``seeds_per_schedule`` random starts under every schedule, then polish.

    Run ``k`` of every schedule uses seed ``base_seed + k``; the random stream is
    derived from the schedule itself. Records come back grouped by schedule in
    input order.
    """
    if not schedules:
        raise EmptyInput("no schedules given")
    if n_points < 1:
        raise NoGenerators("need at least one generator")
    tasks = [(domain, n_points, s, base_seed + k, params, quad)
             for s in schedules for k in range(seeds_per_schedule)]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_sweep_job, tasks))
    return [_sweep_job(t) for t in tasks]


# ---------------------------------------------------------------------------
# Clustering


@dataclass
class Cluster:
    representative: Configuration
    energy_u: float
    energy_centroid: float
    gap: float
    members: list
    trap_timescale: float
    signature: Signature = field(repr=False, default=None)


@dataclass
class MinimaAtlas:
    clusters: list
    global_index: int
    assignments: list  # cluster index of every input record

    def assign(self, config, energy_u, dist_tol=1e-2, energy_tol=1e-3):
        """Index of the cluster matching ``config``, or None."""
        sig = signature(config, energy_u)
        best, best_d = None, math.inf
        for k, c in enumerate(self.clusters):
            if same_minimum(sig, c.signature, dist_tol, energy_tol):
                d = signature_distance(sig, c.signature)
                if d < best_d:
                    best, best_d = k, d
        return best


def _components(n, linked):
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for a in range(n):
        for b in range(a + 1, n):
            if linked(a, b):
                ra, rb = find(a), find(b)
                if ra != rb:
                    parent[max(ra, rb)] = min(ra, rb)
    groups = {}
    for a in range(n):
        groups.setdefault(find(a), []).append(a)
    return list(groups.values())


def _trap_timescale(records, members):
    """Smallest sweep count whose runs land in the cluster at least half the time."""
    by_steps = {}
    for idx, r in enumerate(records):
        by_steps.setdefault(r.schedule.steps, []).append(idx)
    member_set = set(members)
    for steps in sorted(by_steps):
        runs = by_steps[steps]
        hits = sum(1 for i in runs if i in member_set)
        if hits / len(runs) >= 0.5:
            return float(steps)
    return math.inf


def cluster_minima(records, dist_tol=1e-2, energy_tol=1e-3):
    """Single-linkage clustering of polished run records into a :class:`MinimaAtlas`."""
    if not records:
        raise EmptyInput("no records to cluster")
    sigs = [signature(r.final_config, r.final_energy.total_electrostatic) for r in records]
    groups = _components(len(records), lambda a, b: same_minimum(sigs[a], sigs[b], dist_tol, energy_tol))

    clusters = []
    for members in groups:
        # lowest energy wins; ties broken by signature so record order never matters
        rep = min(members, key=lambda i: (sigs[i].energy_u, tuple(sigs[i].sorted_pair_distances)))
        r = records[rep]
        clusters.append(Cluster(
            representative=r.final_config,
            energy_u=r.final_energy.total_electrostatic,
            energy_centroid=r.final_energy.centroid_energy,
            gap=0.0,
            members=sorted(members),
            trap_timescale=_trap_timescale(records, members),
            signature=sigs[rep],
        ))
    clusters.sort(key=lambda c: (c.energy_u, tuple(c.signature.sorted_pair_distances)))
    e_global = clusters[0].energy_u
    for c in clusters:
        c.gap = c.energy_u - e_global
    assignments = [0] * len(records)
    for k, c in enumerate(clusters):
        for m in c.members:
            assignments[m] = k
    return MinimaAtlas(clusters=clusters, global_index=0, assignments=assignments)


def gap_timescale_table(atlas):
    """Rows ``(gap, trap_timescale)`` sorted by gap, global minimum first."""
    if len(atlas.clusters) < 2:
        raise TooFewClusters(f"need at least 2 clusters, atlas has {len(atlas.clusters)}")
    return sorted(((c.gap, c.trap_timescale) for c in atlas.clusters), key=lambda r: r[0])


def timescale_correlation(rows):
    """Spearman correlation of gap against 1/timescale over the non-global rows.

    This only reports the empirical relation; nothing here assumes the
    timescale is inversely proportional to the gap.
    """
    rest = [(g, 0.0 if math.isinf(t) else 1.0 / t) for g, t in rows if g > 0]
    if len(rest) < 2:
        return math.nan
    gaps, rates = zip(*rest)
    if len(set(gaps)) < 2 or len(set(rates)) < 2:
        return math.nan
    return float(spearmanr(gaps, rates).statistic)


# ---------------------------------------------------------------------------
# Lattice anchors


@dataclass(frozen=True, eq=False)
class LatticeAnchor:
    anchor_points: np.ndarray
    layers: int
    construction: str

    def __len__(self):
        return len(self.anchor_points)


def is_parallelogram(domain, tol=1e-12):
    v = domain.vertices
    if len(v) != 4:
        return False
    return bool(np.abs(v[0] + v[2] - v[1] - v[3]).max() <= tol * domain.diameter)


def _reflection(a, b):
    """Affine map (M, t) reflecting the plane across the line through a and b."""
    d = (b - a) / np.linalg.norm(b - a)
    n = np.array([-d[1], d[0]])
    M = np.eye(2) - 2.0 * np.outer(n, n)
    return M, 2.0 * (a @ n) * n


def _mirror_maps(domain, layers):
    """Tile maps reachable by up to ``layers`` edge or vertex reflections.

    Each step reflects the current tile across one of its own edges, or
    through one of its own vertices (the composition of the reflections in
    the two edges meeting there). For the square this reproduces the
    (2L+1) x (2L+1) block of tiles around the domain.
    """
    v = domain.vertices
    m = len(v)
    gens = [_reflection(v[k], v[(k + 1) % m]) for k in range(m)]
    for k in range(m):
        (M1, t1), (M2, t2) = gens[k], gens[(k + 1) % m]
        gens.append((M2 @ M1, M2 @ t1 + t2))

    def key(M, t):
        return tuple(np.round((v @ M.T + t).ravel() / domain.diameter, 9))

    seen = {key(np.eye(2), np.zeros(2))}
    frontier = [(np.eye(2), np.zeros(2))]
    maps = []
    for _ in range(layers):
        nxt = []
        for A, s in frontier:
            for M, t in gens:
                # tile map g o h : x -> A (M x + t) + s
                B, u = A @ M, A @ t + s
                k = key(B, u)
                if k in seen:
                    continue
                seen.add(k)
                nxt.append((B, u))
                if len(seen) > MAX_TILES:
                    raise UnsupportedDomainForTiling(
                        f"mirror tiling of a {m}-gon exceeds {MAX_TILES} tiles at {layers} layers")
        maps.extend(nxt)
        frontier = nxt
    return maps


def build_anchor(config, domain, layers=1, construction=TRANSLATE):
    """Fixed exterior copies of ``config`` on the first ``layers`` rings of tiles."""
    if layers < 1:
        raise CVTError("layers must be >= 1; an anchor cannot be empty")
    pts = config.points
    if construction == TRANSLATE:
        if not is_parallelogram(domain):
            raise UnsupportedDomainForTiling("translate-tile needs a parallelogram domain")
        v = domain.vertices
        a, b = v[1] - v[0], v[3] - v[0]
        images = [pts + i * a + j * b
                  for i in range(-layers, layers + 1)
                  for j in range(-layers, layers + 1) if (i, j) != (0, 0)]
    elif construction == MIRROR:
        images = [pts @ M.T + t for M, t in _mirror_maps(domain, layers)]
    else:
        raise UnsupportedDomainForTiling(f"unknown construction {construction!r}")
    anchor = np.concatenate(images) if images else np.empty((0, 2))
    if construction == MIRROR:
        anchor = anchor[~domain.contains(anchor)]
        if len(anchor):
            _, idx = np.unique(np.round(anchor / domain.diameter, 9), axis=0, return_index=True)
            anchor = anchor[np.sort(idx)]
    if len(anchor) == 0:
        raise UnsupportedDomainForTiling("tiling produced no exterior anchor points")
    if domain.contains(anchor).any():
        raise AssertionError("anchor point inside the domain")
    anchor.setflags(write=False)
    return LatticeAnchor(anchor_points=anchor, layers=int(layers), construction=construction)


def anchored_optimize(domain, anchor, config0, schedule, params, quad=Quadrature()):
    """Anneal then polish ``config0`` with the anchor charges held fixed."""
    if len(config0) == 0:
        raise NoGenerators("configuration has no generators")
    check_configuration(domain, config0)
    record = anneal(domain, config0, schedule, params, quad, anchor=anchor.anchor_points)
    return polish_record(domain, record, quad, anchor=anchor.anchor_points)


def perturb(config, domain, magnitude, rng):
    """Move every point by ``magnitude`` in a random direction, staying inside."""
    pts = np.array(config.points)
    for i in range(len(pts)):
        while True:
            theta = 2.0 * math.pi * rng.random()
            q = pts[i] + magnitude * np.array([math.cos(theta), math.sin(theta)])
            if domain.contains(q):
                pts[i] = q
                break
    return Configuration(pts)


def classify(domain, atlas, config, quad=Quadrature(), seed=0, dist_tol=1e-2, energy_tol=1e-3):
    """Polish ``config`` under the plain energy and return its atlas cluster (or None)."""
    cfg = polish(domain, config, make_rng(seed, 0xC1A5), quad=quad)
    u = electrostatic_energy(cfg, domain, quad).total_electrostatic
    return atlas.assign(cfg, u, dist_tol, energy_tol)


@dataclass
class RecoveryResult:
    cluster: int
    layers: int
    successes: int
    trials: int
    passed: bool
    anchor: LatticeAnchor
    outcomes: list


def anchored_recovery(domain, atlas, cluster, anchor, schedule, params, trials=10,
                      perturbation=0.05, quad=Quadrature(), dist_tol=1e-2, energy_tol=1e-3):
    """Cluster reached by each anchored re-optimisation from a perturbed start."""
    rep = atlas.clusters[cluster].representative
    outcomes = []
    for k in range(trials):
        rng = make_rng(params.seed + k, 0xA7C0 + cluster)
        start = perturb(rep, domain, perturbation * domain.diameter, rng)
        run = anchored_optimize(domain, anchor, start, schedule,
                                replace(params, seed=params.seed + k, stream=0xA7C0 + cluster), quad)
        outcomes.append(classify(domain, atlas, run.final_config, quad, seed=params.seed + k,
                                 dist_tol=dist_tol, energy_tol=energy_tol))
    return outcomes


def minimal_anchor(domain, atlas, cluster, schedule, params, max_layers=3, trials=10,
                   required=8, perturbation=0.05, construction=TRANSLATE, quad=Quadrature(),
                   dist_tol=1e-2, energy_tol=1e-3):
    """Smallest anchor (by ring count) whose anchored recovery succeeds ``required`` times."""
    result = None
    for layers in range(1, max_layers + 1):
        anchor = build_anchor(atlas.clusters[cluster].representative, domain, layers, construction)
        outcomes = anchored_recovery(domain, atlas, cluster, anchor, schedule, params, trials,
                                     perturbation, quad, dist_tol, energy_tol)
        hits = sum(1 for o in outcomes if o == cluster)
        result = RecoveryResult(cluster, layers, hits, trials, hits >= required, anchor, outcomes)
        logger.info("cluster %d, %d layers: %d/%d recovered", cluster, layers, hits, trials)
        if result.passed:
            break
    return result

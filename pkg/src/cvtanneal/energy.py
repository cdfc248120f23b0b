"""Centroidal, edge-weighted and electrostatic energies, plus finite-difference checks.

The electrostatic energy of ``N`` unit charges in a convex domain is

    U = sum_i sum_{j != i} 1 / |x_i - x_j|  +  sum_i  int_{boundary} sigma / |x_i - y| ds(y)

with ``sigma = N / perimeter``. Each unordered pair is counted twice. A point
on or outside the boundary has infinite energy; functions here return
``math.inf`` for that case instead of raising, and the annealer never
evaluates such proposals in the first place.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import MismatchedSizes, PerturbationExitsDomain
from .geometry import Configuration, second_moment, tessellate

INFINITE = math.inf


@dataclass(frozen=True)
class Quadrature:
    """Gauss-Legendre rule applied independently on every boundary edge."""

    points_per_edge: int = 32

    def __post_init__(self):
        if int(self.points_per_edge) != self.points_per_edge or self.points_per_edge < 2:
            raise ValueError(f"points_per_edge must be an integer >= 2, got {self.points_per_edge!r}")


@lru_cache(maxsize=32)
def _gauss_legendre(k):
    x, w = np.polynomial.legendre.leggauss(k)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


@lru_cache(maxsize=64)
def _boundary_nodes(domain, k):
    """Quadrature nodes on the boundary and their weights (arc-length measure)."""
    x, w = _gauss_legendre(k)
    a = domain.vertices
    b = np.roll(a, -1, axis=0)
    t = 0.5 * (x + 1.0)
    nodes = a[:, None, :] + t[None, :, None] * (b - a)[:, None, :]
    weights = 0.5 * domain.edge_lengths[:, None] * w[None, :]
    nodes = nodes.reshape(-1, 2)
    weights = weights.reshape(-1)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


@dataclass(frozen=True)
class EnergyReport:
    centroid_energy: float
    edge_energy: float
    pair_energy: float
    boundary_energy: float
    total_electrostatic: float

    def as_dict(self):
        return {
            "centroid_energy": self.centroid_energy,
            "edge_energy": self.edge_energy,
            "pair_energy": self.pair_energy,
            "boundary_energy": self.boundary_energy,
            "total_electrostatic": self.total_electrostatic,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: float(d[k]) for k in cls.__dataclass_fields__})


@dataclass(frozen=True)
class SpectrumReport:
    eigenvalues: np.ndarray
    min_eigenvalue: float
    num_near_zero: int
    eigenvectors: np.ndarray = None

    @property
    def max_eigenvalue(self):
        return float(self.eigenvalues[-1])


def _check_sizes(tess, config):
    if len(tess) != len(config):
        raise MismatchedSizes(f"tessellation has {len(tess)} cells, configuration has {len(config)} points")


def centroid_energy(tess, config):
    """Sum over cells of the second moment about each cell's own generator."""
    _check_sizes(tess, config)
    return float(sum(second_moment(c, p) for c, p in zip(tess.cells, config.points)))


def edge_energy(tess, config):
    """Shared-edge-length weighted sum of squared generator separations."""
    _check_sizes(tess, config)
    pts = config.points
    total = 0.0
    for i, j, length in tess.edges:
        d = pts[i] - pts[j]
        total += length * float(d @ d)
    return total


def edge_energy_frozen(weights, points):
    """Edge energy with edge lengths held fixed: ``weights`` is a list of (i, j, l)."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    total = 0.0
    for i, j, length in weights:
        d = pts[i] - pts[j]
        total += length * float(d @ d)
    return total


def boundary_potentials(points, domain, n_charges, quad=Quadrature()):
    """Boundary-charge potential at each point; ``inf`` for points not strictly inside."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    nodes, weights = _boundary_nodes(domain, quad.points_per_edge)
    out = np.full(len(pts), INFINITE)
    inside = domain.contains(pts)
    if inside.any():
        p = pts[inside]
        r = np.sqrt(((p[:, None, :] - nodes[None, :, :]) ** 2).sum(axis=2))
        out[inside] = domain.sigma(n_charges) * (weights[None, :] / r).sum(axis=1)
    return out


def boundary_potential(p, domain, n_charges, quad=Quadrature()):
    """Potential at ``p`` of a uniform boundary charge totalling ``n_charges``."""
    return float(boundary_potentials(np.asarray(p, float)[None, :], domain, n_charges, quad)[0])


def pair_energy(points):
    """Sum over ordered pairs i != j of 1/|x_i - x_j|."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    n = len(pts)
    if n < 2:
        return 0.0
    iu = np.triu_indices(n, 1)
    d = pts[iu[0]] - pts[iu[1]]
    return float(2.0 * (1.0 / np.sqrt((d**2).sum(axis=1))).sum())


def pair_gradient(points):
    """Analytic gradient of :func:`pair_energy`, shape (N, 2)."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    diff = pts[:, None, :] - pts[None, :, :]
    r2 = (diff**2).sum(axis=2)
    np.fill_diagonal(r2, np.inf)
    return -2.0 * (diff / r2[:, :, None] ** 1.5).sum(axis=1)


def electrostatic_total(points, domain, quad=Quadrature()):
    """Total U for a raw (N, 2) array; ``inf`` if any point leaves the domain."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    b = boundary_potentials(pts, domain, len(pts), quad)
    if not np.all(np.isfinite(b)):
        return INFINITE
    return pair_energy(pts) + float(b.sum())


def electrostatic_energy(config, domain, quad=Quadrature()):
    """Full :class:`EnergyReport`; all fields are ``inf`` if a point is outside."""
    pts = config.points
    b = boundary_potentials(pts, domain, len(pts), quad)
    if not np.all(np.isfinite(b)):
        return EnergyReport(INFINITE, INFINITE, pair_energy(pts), INFINITE, INFINITE)
    tess = tessellate(domain, config)
    pair = pair_energy(pts)
    boundary = float(b.sum())
    return EnergyReport(
        centroid_energy=centroid_energy(tess, config),
        edge_energy=edge_energy(tess, config),
        pair_energy=pair,
        boundary_energy=boundary,
        total_electrostatic=pair + boundary,
    )


# Functionals of a flat coordinate vector, for the finite-difference harness.

def centroid_functional(domain):
    def f(x):
        config = Configuration(x)
        return centroid_energy(tessellate(domain, config), config)

    return f


def edge_functional(domain):
    def f(x):
        config = Configuration(x)
        return edge_energy(tessellate(domain, config), config)

    return f


def frozen_edge_functional(domain, config):
    """Edge energy with the shared-edge lengths of ``config`` held fixed."""
    weights = list(tessellate(domain, config).edges)
    return lambda x: edge_energy_frozen(weights, x)


def electrostatic_functional(domain, quad=Quadrature()):
    return lambda x: electrostatic_total(x, domain, quad)


def _flat(config):
    if isinstance(config, Configuration):
        return np.array(config.points, dtype=float).ravel()
    return np.array(config, dtype=float).ravel()


def _default_step(domain, h):
    if h is not None:
        if h <= 0:
            raise ValueError("finite-difference step must be positive")
        return h
    return 1e-5 * (domain.diameter if domain is not None else 1.0)


def _guard(domain, x, h):
    if domain is None:
        return
    pts = x.reshape(-1, 2)
    if (domain.signed_distances(pts).min(axis=1) <= 2 * h).any():
        raise PerturbationExitsDomain(f"a perturbation of size {2 * h:g} leaves the domain")


def numeric_gradient(f, config, h=None, domain=None):
    """Central-difference gradient of ``f`` (a function of the flat 2N vector)."""
    x = _flat(config)
    h = _default_step(domain, h)
    _guard(domain, x, h)
    g = np.empty_like(x)
    for k in range(len(x)):
        e = np.zeros_like(x)
        e[k] = h
        g[k] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def hessian_matrix(f, config, h=None, domain=None):
    """Symmetrised central-difference Hessian of ``f`` at ``config``."""
    x = _flat(config)
    h = _default_step(domain, h)
    _guard(domain, x, h)
    n = len(x)
    f0 = f(x)
    H = np.empty((n, n))
    eye = np.eye(n) * h
    for k in range(n):
        H[k, k] = (f(x + eye[k]) - 2 * f0 + f(x - eye[k])) / h**2
        for m in range(k + 1, n):
            pp = f(x + eye[k] + eye[m])
            pm = f(x + eye[k] - eye[m])
            mp = f(x - eye[k] + eye[m])
            mm = f(x - eye[k] - eye[m])
            H[k, m] = H[m, k] = (pp - pm - mp + mm) / (4 * h**2)
    return 0.5 * (H + H.T)


def spectrum(H, zero_tol=1e-4):
    """Sorted eigen-decomposition; near-zero means ``|lam| < zero_tol * max|lam|``."""
    w, v = np.linalg.eigh(0.5 * (H + H.T))
    scale = np.abs(w).max() if len(w) else 0.0
    near = int((np.abs(w) < zero_tol * scale).sum()) if scale > 0 else len(w)
    return SpectrumReport(eigenvalues=w, min_eigenvalue=float(w[0]), num_near_zero=near, eigenvectors=v)


def numeric_hessian(f, config, h=None, domain=None, zero_tol=1e-4):
    """Finite-difference Hessian spectrum of ``f`` at ``config``."""
    return spectrum(hessian_matrix(f, config, h=h, domain=domain), zero_tol=zero_tol)


# Second-variation checks at a CVT.

def domain_symmetries(domain, tol=1e-9):
    """Orthogonal maps about the domain centroid that permute its vertices."""
    v = domain.vertices - domain.centroid
    m = len(v)
    src = np.array([v[0], v[1]])
    found = []
    if abs(np.linalg.det(src)) < tol * domain.diameter**2:
        return found
    for k in range(m):
        for nb in ((k + 1) % m, (k - 1) % m):
            Q = np.linalg.solve(src, np.array([v[k], v[nb]])).T
            if np.abs(Q @ Q.T - np.eye(2)).max() > tol:
                continue
            d = np.sqrt((((v @ Q.T)[:, None, :] - v[None, :, :]) ** 2).sum(axis=2))
            if (d.min(axis=1) < tol * domain.diameter).all():
                found.append(Q)
    return found


def symmetry_orbit(domain, config, tol=1e-9):
    """Distinct images of a configuration (as unlabeled point sets) under domain symmetries."""
    c = domain.centroid
    keys = set()
    for Q in domain_symmetries(domain):
        img = (config.points - c) @ Q.T + c
        keys.add(tuple(map(tuple, np.round(img[np.lexsort(img.T[::-1])] / (tol * domain.diameter)).astype(np.int64))))
    return len(keys)


@dataclass
class SecondVariation:
    name: str
    report: SpectrumReport
    projected_min: float
    passed: bool
    offending_vector: np.ndarray = None


def check_second_variation(name, f, config, domain, h=None, zero_tol=1e-4, psd_tol=1e-5):
    """Projected positive-semidefiniteness test of ``f``'s Hessian at ``config``.

    Near-zero modes (``|lam| < zero_tol * max|lam|``) are projected out; the
    remaining spectrum passes if its minimum is at least ``-psd_tol * lam_max``.
    """
    rep = numeric_hessian(f, config, h=h, domain=domain, zero_tol=zero_tol)
    w = rep.eigenvalues
    scale = np.abs(w).max() if len(w) else 0.0
    keep = np.abs(w) >= zero_tol * scale if scale > 0 else np.zeros(len(w), bool)
    if not keep.any():
        return SecondVariation(name, rep, 0.0, True)
    k = int(np.flatnonzero(keep)[0])
    projected = float(w[k])
    lam_max = float(w[-1])
    passed = projected >= -psd_tol * max(lam_max, 0.0)
    vec = None if passed else rep.eigenvectors[:, k].copy()
    return SecondVariation(name, rep, projected, passed, vec)


def second_variation_checks(domain, config, quad=Quadrature(), h=None, zero_tol=1e-4, psd_tol=1e-5):
    """Hessian checks of the centroid, frozen-edge and electrostatic energies at a CVT.

    Also returns the edge energy with live (re-tessellated) edge lengths as a
    diagnostic; it is not part of the pass/fail decision.
    """
    checks = [
        check_second_variation("centroid", centroid_functional(domain), config, domain, h, zero_tol, psd_tol),
        check_second_variation("edge", frozen_edge_functional(domain, config), config, domain, h, zero_tol, psd_tol),
        check_second_variation("electrostatic", electrostatic_functional(domain, quad), config, domain, h, zero_tol, psd_tol),
    ]
    diagnostic = check_second_variation("edge_live", edge_functional(domain), config, domain, h, zero_tol, psd_tol)
    return checks, diagnostic

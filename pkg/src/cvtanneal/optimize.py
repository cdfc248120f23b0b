"""Lloyd iteration and Metropolis annealing of generator configurations.

The annealing Hamiltonian is the electrostatic energy ``U``. A proposal that
leaves the domain has infinite energy and is rejected before any energy is
evaluated.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .energy import (
    EnergyReport,
    Quadrature,
    _boundary_nodes,
    centroid_energy,
    electrostatic_energy,
)
from .errors import IndexOutOfSchedule, InvalidSchedule
from .geometry import COINCIDENCE_TOL, Configuration, check_configuration, tessellate

logger = logging.getLogger(__name__)

ADAPT_WINDOW = 50
ADAPT_THRESHOLD = 0.1


# ---------------------------------------------------------------------------
# Lloyd


def lloyd_step(domain, config):
    """Move every generator to the centroid of its current Voronoi cell."""
    return Configuration(tessellate(domain, config).centroids)


@dataclass
class LloydResult:
    config: Configuration
    residuals: list
    energies: list
    converged: bool
    iterations: int


def lloyd_run(domain, config0, tol=1e-10, max_iter=1000):
    """Iterate Lloyd steps until ``max_i |x_i - c_i| < tol`` or ``max_iter`` steps.

    Non-convergence is reported through ``converged=False`` rather than raised;
    the returned configuration is the last iterate.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    x = config0
    residuals, energies = [], []

    def measure(x):
        tess = tessellate(domain, x)
        residuals.append(float(np.linalg.norm(x.points - tess.centroids, axis=1).max()))
        energies.append(centroid_energy(tess, x))
        return tess

    for it in range(max_iter):
        tess = measure(x)
        if residuals[-1] < tol:
            return LloydResult(x, residuals, energies, True, it)
        x = Configuration(tess.centroids)
    if max_iter > 0:
        measure(x)
        if residuals[-1] < tol:
            return LloydResult(x, residuals, energies, True, max_iter)
    logger.info("Lloyd hit max_iter=%d without reaching tol=%g", max_iter, tol)
    return LloydResult(x, residuals, energies, False, max_iter)


# ---------------------------------------------------------------------------
# Schedules


@dataclass(frozen=True)
class Schedule:
    """Cooling law: geometric ``t0 * alpha**t`` or logarithmic ``c / ln(t + 2)``."""

    kind: str
    t0: float
    steps: int
    alpha: float = None
    c: float = None

    def __post_init__(self):
        if self.kind not in ("geometric", "logarithmic"):
            raise InvalidSchedule(f"unknown schedule kind {self.kind!r}")
        if not isinstance(self.steps, (int, np.integer)) or isinstance(self.steps, bool) or self.steps < 1:
            raise InvalidSchedule(f"steps must be an integer >= 1, got {self.steps!r}")
        if not (self.t0 > 0 and math.isfinite(self.t0)):
            raise InvalidSchedule(f"t0 must be positive, got {self.t0!r}")
        if self.kind == "geometric":
            if self.alpha is None or not 0 < self.alpha < 1:
                raise InvalidSchedule(f"geometric schedule needs 0 < alpha < 1, got {self.alpha!r}")
            if self.t0 * self.alpha ** (self.steps - 1) <= 0:
                raise InvalidSchedule("temperature underflows to zero before the last sweep")
        else:
            c = self.t0 * math.log(2.0) if self.c is None else self.c
            if not c > 0:
                raise InvalidSchedule(f"logarithmic schedule needs c > 0, got {c!r}")
            object.__setattr__(self, "c", float(c))

    @classmethod
    def geometric_with_ratio(cls, t0, steps, final_ratio):
        """Geometric schedule of ``steps`` sweeps ending at ``t0 * final_ratio``."""
        alpha = final_ratio ** (1.0 / max(steps - 1, 1))
        return cls("geometric", t0=t0, steps=steps, alpha=alpha)

    def as_dict(self):
        d = {"kind": self.kind, "t0": self.t0, "steps": int(self.steps)}
        if self.kind == "geometric":
            d["alpha"] = self.alpha
        else:
            d["c"] = self.c
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(kind=d["kind"], t0=float(d["t0"]), steps=d["steps"],
                   alpha=d.get("alpha"), c=d.get("c"))


def temperature(schedule, t):
    if not 0 <= t < schedule.steps:
        raise IndexOutOfSchedule(f"sweep {t} outside [0, {schedule.steps})")
    if schedule.kind == "geometric":
        return schedule.t0 * schedule.alpha**t
    return schedule.c / math.log(t + 2.0)


# ---------------------------------------------------------------------------
# Random numbers


def make_rng(seed, stream=0):
    """Counter-based generator keyed by ``(seed, stream)``."""
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, int(stream)])
    return np.random.Generator(np.random.Philox(ss))


def polar_normal_pair(rng):
    """Two independent standard normals by the Marsaglia polar method."""
    while True:
        u, v = 2.0 * rng.random(2) - 1.0
        s = u * u + v * v
        if 0.0 < s < 1.0:
            f = math.sqrt(-2.0 * math.log(s) / s)
            return u * f, v * f


def metropolis_accept(delta_u, T, rng):
    """Metropolis rule; draws a uniform only for uphill moves at positive T."""
    if delta_u <= 0.0:
        return True
    if T <= 0.0 or not math.isfinite(delta_u):
        return False
    return rng.random() < math.exp(-delta_u / T)


# ---------------------------------------------------------------------------
# Metropolis chain


class _Chain:
    """Mutable chain state with incremental energy updates.

    ``anchor`` holds fixed exterior unit charges that interact once with every
    generator; with no anchor the energy is exactly ``U``.
    """

    def __init__(self, domain, points, quad, anchor=None):
        self.domain = domain
        self.x = np.array(points, dtype=float).reshape(-1, 2)
        self.n = len(self.x)
        self.nodes, w = _boundary_nodes(domain, quad.points_per_edge)
        self.wsig = w * domain.sigma(self.n)
        self.anchor = None if anchor is None or len(anchor) == 0 else np.asarray(anchor, float)
        self.phi = np.array([self._site(p) for p in self.x])
        self.energy = self._pair_total() + float(self.phi.sum())
        self.proposed = self.accepted = 0
        self.uphill_proposed = self.uphill_accepted = 0

    def _site(self, p):
        r = np.sqrt(((self.nodes - p) ** 2).sum(axis=1))
        v = float((self.wsig / r).sum())
        if self.anchor is not None:
            v += float((1.0 / np.sqrt(((self.anchor - p) ** 2).sum(axis=1))).sum())
        return v

    def _pair_total(self):
        if self.n < 2:
            return 0.0
        iu = np.triu_indices(self.n, 1)
        d = self.x[iu[0]] - self.x[iu[1]]
        return float(2.0 * (1.0 / np.sqrt((d**2).sum(axis=1))).sum())

    def full_energy(self):
        phi = np.array([self._site(p) for p in self.x])
        return self._pair_total() + float(phi.sum())

    def propose(self, i, q, T, rng, min_gain=0.0):
        """Try moving generator ``i`` to ``q``; returns the accepted energy change or None.

        ``min_gain`` > 0 turns the step into strict descent: only moves lowering
        the energy by more than ``min_gain`` are taken.
        """
        self.proposed += 1
        if not (self.domain.offsets - self.domain.normals @ q > 0.0).all():
            return None
        others = np.delete(self.x, i, axis=0)
        if len(others):
            r_new = np.sqrt(((others - q) ** 2).sum(axis=1))
            if r_new.min() <= COINCIDENCE_TOL:
                return None
            r_old = np.sqrt(((others - self.x[i]) ** 2).sum(axis=1))
            d_pair = 2.0 * float((1.0 / r_new - 1.0 / r_old).sum())
        else:
            d_pair = 0.0
        phi_new = self._site(q)
        du = d_pair + phi_new - self.phi[i]
        if min_gain > 0.0 and du > -min_gain:
            return None
        if du > 0.0:
            self.uphill_proposed += 1
        if not metropolis_accept(du, T, rng):
            return None
        if du > 0.0:
            self.uphill_accepted += 1
        self.x[i] = q
        self.phi[i] = phi_new
        self.energy += du
        self.accepted += 1
        return du

    def sweep(self, T, std, rng):
        accepted = 0
        for i in rng.permutation(self.n):
            g1, g2 = polar_normal_pair(rng)
            q = self.x[i] + std * np.array([g1, g2])
            if self.propose(i, q, T, rng) is not None:
                accepted += 1
        return accepted


@dataclass(frozen=True)
class AnnealParams:
    """Proposal scale (``None`` means 5% of the domain diameter), seed and stream."""

    proposal_std: float = None
    seed: int = 0
    record_every: int = 1
    adapt: bool = True
    stream: int = 0

    def resolved_std(self, domain):
        std = 0.05 * domain.diameter if self.proposal_std is None else float(self.proposal_std)
        if not 0 < std < domain.diameter:
            raise ValueError(f"proposal_std must lie in (0, diameter), got {std!r}")
        return std


def metropolis_sweep(domain, config, T, params, rng, quad=Quadrature()):
    """One Metropolis sweep visiting every generator once, in random order."""
    if T <= 0:
        raise ValueError("temperature must be positive")
    chain = _Chain(domain, config.points, quad)
    accepted = chain.sweep(T, params.resolved_std(domain), rng)
    return Configuration(chain.x), accepted


@dataclass
class RunRecord:
    final_config: Configuration
    final_energy: EnergyReport
    trajectory: list
    schedule: Schedule
    accept_rate: float
    seed: int
    stream: int = 0
    proposal_std: float = 0.0
    proposal_std_final: float = 0.0
    std_halvings: list = field(default_factory=list)
    uphill_proposed: int = 0
    uphill_accepted: int = 0
    energy_drift: float = 0.0
    anchored_energy: float = None


def _run_chain(domain, chain, schedule, params, rng):
    std0 = std = params.resolved_std(domain)
    halvings, trajectory = [], []
    window = 0
    n = max(chain.n, 1)
    for t in range(schedule.steps):
        T = temperature(schedule, t)
        window += chain.sweep(T, std, rng)
        if params.adapt and (t + 1) % ADAPT_WINDOW == 0:
            if window / (ADAPT_WINDOW * n) < ADAPT_THRESHOLD:
                std *= 0.5
                halvings.append(t)
            window = 0
        if t % params.record_every == 0 or t == schedule.steps - 1:
            if chain.n and not chain.domain.contains(chain.x).all():
                raise AssertionError(f"generator left the domain at sweep {t}")
            trajectory.append((t, chain.energy))
    return std0, std, halvings, trajectory


def anneal(domain, config0, schedule, params, quad=Quadrature(), anchor=None):
    """Simulated annealing of ``config0`` under ``schedule``; deterministic given the seed."""
    check_configuration(domain, config0)
    rng = make_rng(params.seed, params.stream)
    chain = _Chain(domain, config0.points, quad, anchor=anchor)
    std0, std, halvings, trajectory = _run_chain(domain, chain, schedule, params, rng)
    final = Configuration(chain.x)
    full = chain.full_energy()
    return RunRecord(
        final_config=final,
        final_energy=electrostatic_energy(final, domain, quad),
        trajectory=trajectory,
        schedule=schedule,
        accept_rate=chain.accepted / chain.proposed if chain.proposed else 0.0,
        seed=int(params.seed),
        stream=int(params.stream),
        proposal_std=std0,
        proposal_std_final=std,
        std_halvings=halvings,
        uphill_proposed=chain.uphill_proposed,
        uphill_accepted=chain.uphill_accepted,
        energy_drift=abs(chain.energy - full),
        anchored_energy=full if anchor is not None else None,
    )


def polish(domain, config, rng, start_std=None, patience=500, quad=Quadrature(),
           anchor=None, max_proposals=200_000):
    """Zero-temperature descent: accept only moves that lower the energy.

    Stops after ``patience`` consecutive rejections. The step scale follows
    the one-fifth success rule (grow on success, shrink on failure) so the
    descent neither stalls in stiff valleys nor wastes proposals. Gains below
    the roundoff level of the energy do not count as descent.
    """
    chain = _Chain(domain, config.points, quad, anchor=anchor)
    std = std_max = 0.01 * domain.diameter if start_std is None else start_std
    min_gain = 1e-13 * max(abs(chain.energy), 1.0)
    grow, shrink = math.exp(1.0 / 3.0), math.exp(-1.0 / 12.0)
    streak = 0
    while streak < patience and chain.n and chain.proposed < max_proposals:
        for i in rng.permutation(chain.n):
            g1, g2 = polar_normal_pair(rng)
            q = chain.x[i] + std * np.array([g1, g2])
            if chain.propose(i, q, 0.0, rng, min_gain=min_gain) is None:
                streak += 1
                std *= shrink
                if streak >= patience:
                    break
            else:
                streak = 0
                std = min(std * grow, std_max)
    return Configuration(chain.x)


def polish_record(domain, record, quad=Quadrature(), anchor=None):
    """Polish a run's final configuration in place of the original, keeping its metadata."""
    rng = make_rng(record.seed, record.stream + (1 << 32))
    cfg = polish(domain, record.final_config, rng, quad=quad, anchor=anchor)
    anchored = None
    if anchor is not None:
        anchored = _Chain(domain, cfg.points, quad, anchor=anchor).energy
    return replace(record, final_config=cfg, final_energy=electrostatic_energy(cfg, domain, quad),
                   anchored_energy=anchored)


def sample_fixed_temperature(domain, config0, T, sweeps, params, quad=Quadrature(), burn_in=0):
    """Positions after every sweep of a constant-temperature chain, shape (sweeps, N, 2).

    No step-size adaptation is applied, so the chain has a fixed proposal
    kernel and its stationary law is the Boltzmann distribution at ``T``.
    """
    if T <= 0:
        raise ValueError("temperature must be positive")
    check_configuration(domain, config0)
    rng = make_rng(params.seed, params.stream)
    chain = _Chain(domain, config0.points, quad)
    std = params.resolved_std(domain)
    for _ in range(burn_in):
        chain.sweep(T, std, rng)
    out = np.empty((sweeps, chain.n, 2))
    for t in range(sweeps):
        chain.sweep(T, std, rng)
        out[t] = chain.x
    return out

"""
Rate evaluation for a chain model, (mu, g) grid optimization and parameter sweeps.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .estimation import theoretical_worst_case
from .gaussian import GaussianError, NormalFormTriplet
from .keyrate import (
    ProtocolParams,
    RateReport,
    SecurityEpsilons,
    asymptotic_rate,
    rate_report,
)
from .network import ChainConfig, ChainError, chain_cm_recursive

log = logging.getLogger(__name__)

OBJECTIVES = ("composable_rate", "asymptotic_rate")
SWEEP_VARIABLES = ("N", "distance", "eta_B", "depth")
SWEEP_COLUMNS = ["N", "K", "K_pe", "Delta_aep", "Theta", "plob", "repeater_capacity", "clamped"]
SWEEP_EXTRA = ["eta_B", "distance_km", "depth_m", "feasible"]


class OptimizationError(ValueError):
    pass


def rate_from_triplet(
    triplet: NormalFormTriplet,
    chain: ChainConfig,
    protocol: ProtocolParams,
    eps: SecurityEpsilons,
    strict: bool = False,
) -> RateReport:
    """Rate report from the theoretical worst-case CM of an end-to-end triplet."""
    v_wc = theoretical_worst_case(triplet.cm(), protocol.m_pe, eps.eps_pe, strict)
    return rate_report(v_wc, protocol, eps, chain.total_eta, hops=2)


def chain_rate(
    chain: ChainConfig, protocol: ProtocolParams, eps: SecurityEpsilons, strict: bool = False
) -> RateReport:
    return rate_from_triplet(chain_cm_recursive(chain), chain, protocol, eps, strict)


def evaluate_point(
    chain: ChainConfig, protocol: ProtocolParams, eps: SecurityEpsilons, objective: str
) -> float | None:
    """Objective value, or None where the NLA output diverges or the chain is not bona fide."""
    try:
        triplet = chain_cm_recursive(chain)
    except (GaussianError, ChainError):
        return None
    if objective == "asymptotic_rate":
        return asymptotic_rate(triplet.cm(), protocol.beta)
    return rate_from_triplet(triplet, chain, protocol, eps).K_composable_signed


@dataclass(frozen=True)
class OptimizationSpec:
    mu_grid: tuple[float, float, int]
    g_grid: tuple[float, float, int]
    chain: ChainConfig
    protocol: ProtocolParams
    eps: SecurityEpsilons
    objective: str = "composable_rate"

    def __post_init__(self):
        for name, (lo, hi, steps) in (("mu", self.mu_grid), ("g", self.g_grid)):
            if steps < 1 or hi < lo:
                raise OptimizationError(f"empty {name} grid {lo, hi, steps}")
            if lo < 1:
                raise OptimizationError(f"{name} grid must start at >= 1, got {lo}")
        if self.objective not in OBJECTIVES:
            raise OptimizationError(f"objective must be one of {OBJECTIVES}")


@dataclass
class OptimizationResult:
    mu: float
    g: float
    K: float
    table: list[dict] = field(default_factory=list)
    refined_table: list[dict] = field(default_factory=list)

    @property
    def squeezing_db(self) -> float:
        return 10 * math.log10(self.mu)


def _axis(lo: float, hi: float, steps: int) -> np.ndarray:
    return np.array([lo]) if steps == 1 else np.linspace(lo, hi, steps)


def _evaluate_grid(spec: OptimizationSpec, mus, gs, threads: int) -> list[dict]:
    points = [(float(m), float(g)) for m in mus for g in gs]

    def run(point):
        mu, g = point
        return evaluate_point(spec.chain.with_(mu=mu, gain_g=g), spec.protocol, spec.eps, spec.objective)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            values = list(pool.map(run, points))
    else:
        values = [run(p) for p in points]
    return [
        {"mu": mu, "g": g, "K": (math.nan if k is None else k), "feasible": k is not None}
        for (mu, g), k in zip(points, values)
    ]


def _argmax(rows: list[dict]) -> dict | None:
    # rows are ordered by (mu, g) ascending, so strict > keeps the smaller mu, then smaller g
    best = None
    for row in rows:
        if row["feasible"] and (best is None or row["K"] > best["K"]):
            best = row
    return best


def optimize_mu_g(spec: OptimizationSpec, threads: int = 1, refine: bool = True) -> OptimizationResult:
    """Exhaustive grid over (mu, g) followed by a 10x finer pass around the coarse argmax."""
    mus = _axis(*spec.mu_grid)
    gs = _axis(*spec.g_grid)
    table = _evaluate_grid(spec, mus, gs, threads)
    best = _argmax(table)
    if best is None:
        raise OptimizationError("every grid point is infeasible")
    refined = []
    if refine and (len(mus) > 1 or len(gs) > 1):
        fine_axes = []
        for axis, centre, floor in ((mus, best["mu"], 1.0), (gs, best["g"], 1.0)):
            if len(axis) == 1:
                fine_axes.append(np.array([centre]))
                continue
            step = axis[1] - axis[0]
            lo, hi = max(floor, centre - step, axis[0]), min(centre + step, axis[-1])
            fine_axes.append(np.linspace(lo, hi, int(round((hi - lo) / (step / 10))) + 1))
        refined = _evaluate_grid(spec, fine_axes[0], fine_axes[1], threads)
        fine_best = _argmax(refined)
        if fine_best is not None and fine_best["K"] > best["K"]:
            best = fine_best
    log.info(
        "optimum mu=%.4g g=%.4g K=%.4g (10 log10 mu = %.2f dB)",
        best["mu"], best["g"], best["K"], 10 * math.log10(best["mu"]),
    )
    return OptimizationResult(best["mu"], best["g"], best["K"], table, refined)


def sweep_points(variable: str, values, chain: ChainConfig, protocol: ProtocolParams, pe_fraction: float):
    """(chain, protocol) pairs along one swept variable."""
    if variable not in SWEEP_VARIABLES:
        raise OptimizationError(f"sweep variable must be one of {SWEEP_VARIABLES}")
    values = list(values)
    if not values:
        raise OptimizationError("empty sweep range")
    out = []
    for v in values:
        if variable == "N":
            out.append((chain, replace(protocol, N=float(v), m_pe=pe_fraction * float(v))))
        elif variable == "distance":
            out.append((chain.with_(distance_km=float(v)), protocol))
        elif variable == "eta_B":
            out.append((chain.with_(eta_B=float(v)), protocol))
        else:
            out.append((chain.with_(depth_m=int(v)), protocol))
    return out


def sweep(
    variable: str,
    values,
    chain: ChainConfig,
    protocol: ProtocolParams,
    eps: SecurityEpsilons,
    pe_fraction: float = 0.1,
    threads: int = 1,
) -> list[dict]:
    """One rate row per swept value; infeasible points carry ``feasible=False`` and NaN rates."""
    points = sweep_points(variable, values, chain, protocol, pe_fraction)

    def run(point):
        c, p = point
        try:
            return chain_rate(c, p, eps)
        except (GaussianError, ChainError):
            return None

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            reports = list(pool.map(run, points))
    else:
        reports = [run(p) for p in points]

    rows = []
    for (c, p), rep in zip(points, reports):
        row = {
            "N": p.N,
            "K": math.nan,
            "K_pe": math.nan,
            "Delta_aep": math.nan,
            "Theta": math.nan,
            "plob": math.nan,
            "repeater_capacity": math.nan,
            "clamped": False,
            "eta_B": c.eta_B,
            "distance_km": c.distance_km,
            "depth_m": c.depth_m,
            "feasible": rep is not None,
        }
        if rep is not None:
            row.update(
                K=rep.K_composable,
                K_pe=rep.K_pe,
                Delta_aep=rep.Delta_aep,
                Theta=rep.Theta,
                plob=rep.benchmarks.get("plob", math.nan),
                repeater_capacity=rep.benchmarks.get("repeater_capacity", math.nan),
                clamped=rep.clamped,
            )
        rows.append(row)

    if variable == "N":
        ks = [r["K"] for r in rows if r["feasible"]]
        if any(b < a - 1e-15 for a, b in zip(ks, ks[1:])):
            log.warning("composable rate is not monotone in N along this sweep")
    return rows

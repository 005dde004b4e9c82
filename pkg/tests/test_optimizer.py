from __future__ import annotations

import math

import numpy as np
import pytest

from gqnet import keyrate as kr
from gqnet import network as nw
from gqnet import optimizer as opt

EPS = kr.SecurityEpsilons.from_total(4.5e-10, 1e-10, 1e-10, 1e-10, 0.9)
PROTO = kr.ProtocolParams.with_pe_fraction(1e10)
CHAIN = nw.ChainConfig(depth_m=1, mu=3.0, distance_km=20.0, xi=0.01)


def spec(mu_grid, g_grid, objective="composable_rate", chain=CHAIN):
    return opt.OptimizationSpec(mu_grid, g_grid, chain, PROTO, EPS, objective)


def test_single_point_grid():
    res = opt.optimize_mu_g(spec((2.0, 2.0, 1), (1.2, 1.2, 1)))
    assert (res.mu, res.g) == (2.0, 1.2)
    assert len(res.table) == 1 and res.refined_table == []


def test_spec_validation():
    for mu_grid, g_grid in (((0.5, 2, 3), (1, 2, 3)), ((1, 2, 3), (0.9, 2, 3)), ((1, 2, 0), (1, 2, 3)), ((3, 2, 3), (1, 2, 3))):
        with pytest.raises(opt.OptimizationError):
            spec(mu_grid, g_grid)
    with pytest.raises(opt.OptimizationError):
        spec((1, 2, 2), (1, 2, 2), objective="speed")


def test_infeasible_points_are_flagged_and_skipped():
    res = opt.optimize_mu_g(spec((1.5, 8.0, 14), (1.0, 6.0, 11)))
    infeasible = [r for r in res.table if not r["feasible"]]
    assert infeasible and all(math.isnan(r["K"]) for r in infeasible)
    best = max((r for r in res.table if r["feasible"]), key=lambda r: r["K"])
    assert res.K >= best["K"]
    chosen = opt.evaluate_point(CHAIN.with_(mu=res.mu, gain_g=res.g), PROTO, EPS, "composable_rate")
    assert chosen == pytest.approx(res.K)


def test_all_infeasible_raises():
    chain = nw.ChainConfig(depth_m=0, link_eta=1.0)
    with pytest.raises(opt.OptimizationError):
        opt.optimize_mu_g(spec((5.0, 6.0, 2), (3.0, 4.0, 2), chain=chain))


def test_ties_prefer_smaller_mu_then_g():
    rows = [
        {"mu": 1.0, "g": 2.0, "K": 1.0, "feasible": True},
        {"mu": 1.0, "g": 3.0, "K": 1.0, "feasible": True},
        {"mu": 2.0, "g": 1.0, "K": 1.0, "feasible": True},
    ]
    assert opt._argmax(rows) is rows[0]


def test_refinement_is_ten_times_finer():
    res = opt.optimize_mu_g(spec((1.5, 8.0, 14), (1.0, 6.0, 11), "asymptotic_rate"))
    mus = sorted({r["mu"] for r in res.refined_table})
    assert np.diff(mus) == pytest.approx(0.05 * np.ones(len(mus) - 1))


def test_optimizer_is_deterministic_across_threads():
    s = spec((1.5, 8.0, 8), (1.0, 4.0, 7))
    a = opt.optimize_mu_g(s, threads=1)
    b = opt.optimize_mu_g(s, threads=4)
    assert (a.mu, a.g, a.K) == (b.mu, b.g, b.K)
    assert [r["K"] for r in a.table if r["feasible"]] == [r["K"] for r in b.table if r["feasible"]]


def test_sweep_over_block_size_is_monotone():
    rows = opt.sweep("N", np.geomspace(1e5, 1e12, 15), CHAIN, PROTO, EPS)
    ks = [r["K"] for r in rows]
    assert all(b >= a for a, b in zip(ks, ks[1:]))
    assert set(opt.SWEEP_COLUMNS) <= set(rows[0])


def test_sweep_distance_decreases():
    rows = opt.sweep("distance", [10.0, 20.0, 40.0, 60.0], CHAIN, PROTO, EPS)
    ks = [r["K"] for r in rows]
    assert all(b < a for a, b in zip(ks, ks[1:]) if a > 0)


def test_sweep_bell_efficiency():
    full = opt.sweep("N", [1e8, 1e10, 1e12], CHAIN, PROTO, EPS)
    half = opt.sweep("N", [1e8, 1e10, 1e12], CHAIN.with_(eta_B=0.5), PROTO, EPS)
    for f, h in zip(full, half):
        assert h["K_pe"] < f["K_pe"]


def test_sweep_depth_and_errors():
    rows = opt.sweep("depth", [0, 1, 2], CHAIN, PROTO, EPS)
    assert [r["depth_m"] for r in rows] == [0, 1, 2]
    with pytest.raises(opt.OptimizationError):
        opt.sweep("N", [], CHAIN, PROTO, EPS)
    with pytest.raises(opt.OptimizationError):
        opt.sweep("temperature", [1.0], CHAIN, PROTO, EPS)


def test_sweep_marks_infeasible_points():
    rows = opt.sweep("N", [1e6], CHAIN.with_(gain_g=50.0), PROTO, EPS)
    assert not rows[0]["feasible"] and math.isnan(rows[0]["K"])

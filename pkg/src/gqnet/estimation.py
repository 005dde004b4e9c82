"""
Parameter estimation from end-user heterodyne data and broadcast relay outcomes.

Covers Monte Carlo generation of raw data, the decorrelating corrections, the
classical covariance estimators, their worst-case inflation from chi-squared
tail bounds, and the classical/quantum covariance maps.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from . import gaussian as ge
from .network import ChainConfig, build_chain_state

# counter-based stream layout: block boundaries never depend on the thread count
SAMPLE_BLOCK = 65_536
Z = np.diag([1.0, -1.0])


class EstimationError(ValueError):
    pass


@dataclass
class SampleBatch:
    """Raw data: Alice/Bob heterodyne outcomes and per-relay Bell outcomes.

    ``gammas`` has columns ``(q_g1, p_g1, q_g2, p_g2, ...)``.
    """

    qA: NDArray[np.float64]
    pA: NDArray[np.float64]
    qB: NDArray[np.float64]
    pB: NDArray[np.float64]
    gammas: NDArray[np.float64]
    seed: int | None = None

    @property
    def n_samples(self) -> int:
        return len(self.qA)

    @property
    def n_relays(self) -> int:
        return self.gammas.shape[1] // 2

    def columns(self) -> list[str]:
        names = ["qA", "pA", "qB", "pB"]
        for i in range(1, self.n_relays + 1):
            names += [f"qg{i}", f"pg{i}"]
        return names

    def matrix(self) -> NDArray[np.float64]:
        return np.column_stack([self.qA, self.pA, self.qB, self.pB, self.gammas])

    @classmethod
    def from_matrix(cls, data, seed=None) -> "SampleBatch":
        data = np.asarray(data, dtype=float)
        if data.ndim != 2 or data.shape[1] < 4 or data.shape[1] % 2:
            raise EstimationError(f"bad sample matrix shape {data.shape}")
        return cls(data[:, 0], data[:, 1], data[:, 2], data[:, 3], data[:, 4:], seed)


def outcome_covariance(config: ChainConfig) -> NDArray[np.float64]:
    """Joint covariance of (qA, pA, qB, pB, q_g1, p_g1, ...) before any conditioning.

    Relay outcomes are q of the first and p of the second output of each
    balanced Bell beam splitter; the end users' heterodyne adds one vacuum
    unit to each quadrature.
    """
    state, relays = build_chain_state(config)
    for left, right in relays:
        state = ge.apply_beamsplitter(state, left, right, 0.5)
    alice, bob = "A1", f"B{config.n_links}"
    idx = state.quadrature_indices((alice, bob))
    for left, right in relays:
        idx += [2 * state.index(left), 2 * state.index(right) + 1]
    cov = state.cm[np.ix_(idx, idx)].copy()
    cov[:4, :4] += np.eye(4)
    return cov


def _gaussian_factor(cov) -> NDArray[np.float64]:
    w, u = np.linalg.eigh(cov)
    return u * np.sqrt(np.clip(w, 0.0, None))


def sample_gaussian(cov, n: int, seed: int, threads: int = 1) -> NDArray[np.float64]:
    """Draw ``n`` zero-mean samples; block-wise streams keep results independent of ``threads``."""
    factor = _gaussian_factor(cov)
    dim = factor.shape[0]
    n_blocks = max(1, math.ceil(n / SAMPLE_BLOCK))
    seqs = np.random.SeedSequence(seed).spawn(n_blocks)
    out = np.empty((n, dim))

    def fill(k: int) -> None:
        lo, hi = k * SAMPLE_BLOCK, min(n, (k + 1) * SAMPLE_BLOCK)
        z = np.random.default_rng(seqs[k]).standard_normal((hi - lo, dim))
        out[lo:hi] = z @ factor.T

    if threads > 1 and n_blocks > 1:
        with ThreadPoolExecutor(threads) as pool:
            list(pool.map(fill, range(n_blocks)))
    else:
        for k in range(n_blocks):
            fill(k)
    return out


def sample_network_data(config: ChainConfig, N: int, seed: int, threads: int = 1) -> SampleBatch:
    """Generate ``N`` i.i.d. rounds of end-user and relay outcomes for a chain."""
    if N < 1:
        raise EstimationError(f"N must be >= 1, got {N}")
    cov = outcome_covariance(config)
    return SampleBatch.from_matrix(sample_gaussian(cov, int(N), seed, threads), seed)


@dataclass
class Weights:
    u: NDArray[np.float64]
    v: NDArray[np.float64]
    regularized: bool = False


def solve_weights(gram, cross) -> tuple[NDArray[np.float64], bool]:
    """Solve ``gram @ u = cross``; near-singular Gram matrices get a small ridge."""
    gram = np.atleast_2d(np.asarray(gram, dtype=float))
    cross = np.atleast_1d(np.asarray(cross, dtype=float))
    if gram.size == 0:
        return np.zeros(0), False
    regularized = False
    if np.linalg.cond(gram) > 1e12:
        gram = gram + 1e-12 * np.trace(gram) / len(gram) * np.eye(len(gram))
        regularized = True
        warnings.warn("near-singular relay Gram matrix, solving with ridge regularization")
    return np.linalg.solve(gram, cross), regularized


def _moment(x, y) -> float:
    return float(np.dot(x, y) / len(x))


def estimate_weights(batch: SampleBatch) -> dict[str, Weights]:
    """Decorrelating weights for each quadrature, from all N rounds.

    Returns ``{"q": Weights(u, v), "p": Weights(u, v)}`` with u for Alice and v for Bob.
    """
    out = {}
    for quad, off in (("q", 0), ("p", 1)):
        g = batch.gammas[:, off::2]
        gram = g.T @ g / batch.n_samples
        xa = batch.qA if quad == "q" else batch.pA
        xb = batch.qB if quad == "q" else batch.pB
        u, r1 = solve_weights(gram, g.T @ xa / batch.n_samples)
        v, r2 = solve_weights(gram, g.T @ xb / batch.n_samples)
        out[quad] = Weights(u, v, r1 or r2)
    return out


def apply_corrections(batch: SampleBatch, weights: dict[str, Weights]) -> NDArray[np.float64]:
    """Corrected key variables as columns ``(q_x, p_x, q_y, p_y)``."""
    gq, gp = batch.gammas[:, 0::2], batch.gammas[:, 1::2]
    wq, wp = weights["q"], weights["p"]
    if len(wq.u) != batch.n_relays or len(wp.u) != batch.n_relays:
        raise EstimationError("weight length does not match the number of relays")
    return np.column_stack(
        [batch.qA - gq @ wq.u, batch.pA - gp @ wp.u, batch.qB - gq @ wq.v, batch.pB - gp @ wp.v]
    )


def pm_rescale(zbar, mu: float) -> NDArray[np.float64]:
    """Map prepare-and-measure data onto the entanglement-based convention, z = L^-1 zbar."""
    if mu <= 1:
        raise EstimationError(f"prepare-and-measure rescaling needs mu > 1, got {mu}")
    return np.asarray(zbar, dtype=float) / math.sqrt((mu - 1) / (mu + 1))


@dataclass
class ClassicalCM:
    """Diagonal 2x2 blocks of the estimated classical covariance matrix."""

    Vx: NDArray[np.float64]
    Vy: NDArray[np.float64]
    Cxy: NDArray[np.float64]
    m_pe: int

    def matrix(self) -> NDArray[np.float64]:
        return np.block([[self.Vx, self.Cxy], [self.Cxy, self.Vy]])

    @classmethod
    def from_matrix(cls, sigma, m_pe) -> "ClassicalCM":
        s = np.asarray(sigma, dtype=float)
        d = np.diag
        return cls(d(d(s[:2, :2])), d(d(s[2:, 2:])), d(d(s[:2, 2:])), m_pe)


def pe_indices(n_samples: int, m_pe: int, seed: int) -> NDArray[np.int64]:
    """First ``m_pe`` entries of a seeded permutation."""
    return np.random.default_rng(seed).permutation(n_samples)[:m_pe]


def estimate_classical_cm(corrected, m_pe: int | None = None, seed: int | None = None) -> ClassicalCM:
    """Zero-mean estimators of the classical covariance matrix on ``m_pe`` rows.

    With ``seed`` the rows are picked by :func:`pe_indices`; otherwise the first
    ``m_pe`` rows are used.
    """
    data = np.asarray(corrected, dtype=float)
    m_pe = len(data) if m_pe is None else int(m_pe)
    if m_pe < 2:
        raise EstimationError(f"m_pe must be >= 2, got {m_pe}")
    if m_pe > len(data):
        raise EstimationError(f"m_pe={m_pe} exceeds the {len(data)} available samples")
    rows = data[pe_indices(len(data), m_pe, seed)] if seed is not None else data[:m_pe]
    qx, px, qy, py = rows.T
    return ClassicalCM(
        np.diag([_moment(qx, qx), _moment(px, px)]),
        np.diag([_moment(qy, qy), _moment(py, py)]),
        np.diag([_moment(qx, qy), _moment(px, py)]),
        m_pe,
    )


@dataclass
class WorstCaseCM:
    sigma_hat: NDArray[np.float64]
    sigma_wc: NDArray[np.float64]
    kappa: float
    eps_pe: float
    m_pe: float
    strict: bool = False

    def to_dict(self) -> dict:
        return {
            "sigma_hat": self.sigma_hat.tolist(),
            "sigma_wc": self.sigma_wc.tolist(),
            "kappa": self.kappa,
            "eps_pe": self.eps_pe,
            "m_pe": self.m_pe,
        }


def kappa_from_eps(eps_pe: float) -> float:
    if not 0 < eps_pe < 1:
        raise EstimationError(f"eps_pe must lie in (0, 1), got {eps_pe}")
    return math.log(8 / eps_pe)


def worst_case_cm(sigma_hat, m_pe: float, eps_pe: float, strict: bool = False) -> WorstCaseCM:
    """Inflate an estimated classical CM to its worst case at confidence 1 - eps_pe.

    Variances grow by a factor ``1 + sqrt(4 kappa / m_pe)`` and each correlation
    shrinks in modulus by ``sqrt(kappa / m_pe)`` times the sum of the two
    variances. ``strict`` keeps the O(1/m_pe) terms of the chi-squared bounds.
    """
    if isinstance(sigma_hat, ClassicalCM):
        sigma_hat = sigma_hat.matrix()
    s = np.asarray(sigma_hat, dtype=float)
    kappa = kappa_from_eps(eps_pe)
    if math.isinf(m_pe):
        return WorstCaseCM(s.copy(), s.copy(), kappa, eps_pe, m_pe, strict)
    r = math.sqrt(kappa / m_pe)
    vx, vy, c = np.diag(s[:2, :2]), np.diag(s[2:, 2:]), np.diag(s[:2, 2:])
    sign = np.where(c < 0, -1.0, 1.0)
    if strict:
        up, low = 1 + 2 * r + 2 * kappa / m_pe, 1 - 2 * r
        v_plus = vx + vy + 2 * sign * c
        v_minus = vx + vy - 2 * sign * c
        vx_wc, vy_wc = vx * up, vy * up
        c_wc = sign * (v_plus * low - v_minus * up) / 4
    else:
        vx_wc, vy_wc = vx * (1 + 2 * r), vy * (1 + 2 * r)
        c_wc = c - sign * r * (vx + vy)
    wc = np.block([[np.diag(vx_wc), np.diag(c_wc)], [np.diag(c_wc), np.diag(vy_wc)]])
    return WorstCaseCM(s.copy(), wc, kappa, eps_pe, m_pe, strict)


def worst_case_debug(sigma_hat) -> dict:
    """Variances of y + x and y - x per quadrature (intermediates of the covariance bound)."""
    s = np.asarray(sigma_hat.matrix() if isinstance(sigma_hat, ClassicalCM) else sigma_hat)
    vx, vy, c = np.diag(s[:2, :2]), np.diag(s[2:, 2:]), np.diag(s[:2, 2:])
    return {"V_plus": (vx + vy + 2 * c).tolist(), "V_minus": (vx + vy - 2 * c).tolist()}


def classical_to_quantum(sigma) -> NDArray[np.float64]:
    """Quantum CM behind heterodyne data: V = Sigma - I (+) I. Not checked for physicality."""
    return np.asarray(sigma, dtype=float) - np.eye(4)


def quantum_to_classical(v) -> NDArray[np.float64]:
    return np.asarray(v, dtype=float) + np.eye(4)


def theoretical_worst_case(v_theory, m_pe: float, eps_pe: float, strict: bool = False):
    """Worst-case quantum CM for a model covariance matrix at ``m_pe`` estimation rounds."""
    wc = worst_case_cm(quantum_to_classical(v_theory), m_pe, eps_pe, strict)
    return classical_to_quantum(wc.sigma_wc)


@dataclass
class EstimationResult:
    batch: SampleBatch
    weights: dict
    corrected: NDArray[np.float64]
    sigma_hat: ClassicalCM
    worst: WorstCaseCM


def estimate_from_batch(
    batch: SampleBatch, m_pe: int, eps_pe: float, seed: int, strict: bool = False
) -> EstimationResult:
    """Weights, corrections, estimated and worst-case classical CM from raw data."""
    weights = estimate_weights(batch)
    corrected = apply_corrections(batch, weights)
    sigma_hat = estimate_classical_cm(corrected, m_pe, seed)
    worst = worst_case_cm(sigma_hat, m_pe, eps_pe, strict)
    return EstimationResult(batch, weights, corrected, sigma_hat, worst)

"""
Asymptotic and composable finite-size secret-key rates (reverse reconciliation,
heterodyne detection) and the PLOB / repeater-capacity benchmarks.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from numpy.typing import NDArray

from .gaussian import EIGEN_SLACK, symplectic_eigenvalues


class RateError(ValueError):
    pass


@dataclass(frozen=True)
class SecurityEpsilons:
    """Security parameters; ``p_ec = 1 - FER`` is the error-correction success probability."""

    eps_s: float = 1e-10
    eps_h: float = 1e-10
    eps_pe: float = 1e-10
    eps_cor: float = 1e-10
    p_ec: float = 0.9

    def __post_init__(self):
        for name in ("eps_s", "eps_h", "eps_pe", "eps_cor"):
            v = getattr(self, name)
            if not 0 < v < 1:
                raise RateError(f"{name} must lie in (0, 1), got {v}")
        if not 0 < self.p_ec <= 1:
            raise RateError(f"p_ec must lie in (0, 1], got {self.p_ec}")

    @property
    def eps_total(self) -> float:
        return self.eps_cor + self.eps_s + self.eps_h + self.p_ec * self.eps_pe

    @classmethod
    def from_total(cls, eps: float, eps_s: float, eps_h: float, eps_pe: float, p_ec: float):
        """Derive ``eps_cor`` from an overall security budget ``eps``."""
        eps_cor = eps - eps_s - eps_h - p_ec * eps_pe
        if eps_cor <= 0:
            raise RateError(f"security budget {eps} leaves no room for eps_cor ({eps_cor})")
        return cls(eps_s=eps_s, eps_h=eps_h, eps_pe=eps_pe, eps_cor=eps_cor, p_ec=p_ec)


@dataclass(frozen=True)
class ProtocolParams:
    """Block structure: N runs, m_pe of them sacrificed for estimation, n = N - m_pe for the key.

    ``d`` is the size of the digitization alphabet (2**5 for five bits).
    """

    N: float = 1e10
    m_pe: float = 1e9
    d: int = 2**5
    p_s: float = 1.0
    beta: float = 1.0

    def __post_init__(self):
        if not 0 < self.m_pe < self.N:
            raise RateError(f"need 0 < m_pe < N, got m_pe={self.m_pe}, N={self.N}")
        if self.d < 1:
            raise RateError(f"d must be >= 1, got {self.d}")
        if not 0 < self.p_s <= 1:
            raise RateError(f"p_s must lie in (0, 1], got {self.p_s}")
        if not 0 <= self.beta <= 1:
            raise RateError(f"beta must lie in [0, 1], got {self.beta}")

    @property
    def n(self) -> float:
        return self.N - self.m_pe

    @classmethod
    def with_pe_fraction(cls, N: float, pe_fraction: float = 0.1, **kw) -> "ProtocolParams":
        return cls(N=N, m_pe=pe_fraction * N, **kw)


def entropy_h(x: float) -> float:
    """Von Neumann entropy (bits) of a thermal mode with symplectic eigenvalue ``x``."""
    if x < 1 - EIGEN_SLACK:
        raise RateError(f"symplectic eigenvalue {x} < 1")
    if x <= 1:
        return 0.0
    up, down = (x + 1) / 2, (x - 1) / 2
    return float(up * math.log2(up) - down * math.log2(down))


def _entropy_sum(cm) -> tuple[float, bool]:
    clamped = False
    total = 0.0
    for nu in symplectic_eigenvalues(cm):
        if nu < 1:
            clamped = clamped or nu < 1 - EIGEN_SLACK
            nu = 1.0
        total += entropy_h(nu)
    return total, clamped


def conditional_on_heterodyne(v_ab) -> NDArray[np.float64]:
    """Alice's covariance matrix after Bob's heterodyne: V_A - C (V_B + I)^-1 C^T."""
    v = np.asarray(v_ab, dtype=float)
    va, vb, c = v[:2, :2], v[2:, 2:], v[:2, 2:]
    out = va - c @ np.linalg.solve(vb + np.eye(2), c.T)
    return (out + out.T) / 2


def holevo_rr(v_ab, return_flag: bool = False):
    """Eve's Holevo bound on Bob's heterodyne outcome for a pure-purified two-mode state.

    Symplectic eigenvalues below 1 (slightly unphysical worst-case matrices)
    are clamped to 1; with ``return_flag`` the result is ``(chi, clamped)``.
    """
    s_ab, f1 = _entropy_sum(v_ab)
    s_cond, f2 = _entropy_sum(conditional_on_heterodyne(v_ab))
    chi = s_ab - s_cond
    return (chi, f1 or f2) if return_flag else chi


def mutual_info_het(v_ab) -> float:
    """Mutual information (bits) between the two heterodyne outcomes."""
    v = np.asarray(v_ab, dtype=float)
    va = v[:2, :2]
    vc = conditional_on_heterodyne(v)
    num = 1 + np.linalg.det(va) + np.trace(va)
    den = 1 + np.linalg.det(vc) + np.trace(vc)
    return float(0.5 * math.log2(num / den))


def asymptotic_rate(v_ab, beta: float = 1.0) -> float:
    """Devetak-Winter rate beta * I_AB - chi (may be negative)."""
    return beta * mutual_info_het(v_ab) - holevo_rr(v_ab)


def delta_aep(d: float, p_ec: float, eps_s: float) -> float:
    return 4 * math.log2(math.sqrt(d) + 2) * math.sqrt(math.log2(18 / (p_ec**2 * eps_s**4)))


def theta_term(p_ec: float, eps_s: float, eps_h: float) -> float:
    return math.log2(p_ec * (1 - eps_s**2 / 3)) + 2 * math.log2(math.sqrt(2) * eps_h)


@dataclass
class ComposableResult:
    K: float
    K_signed: float
    Delta_aep: float
    Theta: float
    insufficient_samples: bool = False


def composable_rate(k_pe: float, params: ProtocolParams, eps: SecurityEpsilons) -> ComposableResult:
    """Composable finite-size rate with NLA post-selection probability ``p_s``.

    ``K`` is clamped at zero, ``K_signed`` keeps the raw value.
    """
    d_aep = delta_aep(params.d, eps.p_ec, eps.eps_s)
    theta = theta_term(eps.p_ec, eps.eps_s, eps.eps_h)
    n_eff = params.n * params.p_s
    if n_eff < 1:
        return ComposableResult(0.0, 0.0, d_aep, theta, insufficient_samples=True)
    signed = (n_eff * eps.p_ec / params.N) * (k_pe - d_aep / math.sqrt(n_eff) + theta / n_eff)
    return ComposableResult(max(signed, 0.0), signed, d_aep, theta)


def plob(eta_total: float) -> float:
    """Repeaterless secret-key capacity -log2(1 - eta)."""
    if not 0 < eta_total < 1:
        raise RateError(f"transmissivity must lie in (0, 1), got {eta_total}")
    return -math.log2(1 - eta_total) if eta_total > 1e-8 else -math.log1p(-eta_total) / math.log(2)


def repeater_capacity(eta_total: float, hops: int) -> float:
    """Capacity of a chain of ``hops`` equal pure-loss links: -log2(1 - eta**(1/hops))."""
    if hops < 1:
        raise RateError(f"hops must be >= 1, got {hops}")
    return plob(eta_total ** (1.0 / hops))


@dataclass
class RateReport:
    K_pe: float
    I_AB: float
    chi: float
    Delta_aep: float
    Theta: float
    K_composable: float
    K_composable_signed: float
    benchmarks: dict = field(default_factory=dict)
    clamped: bool = False
    insufficient_samples: bool = False
    eps_total: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)


def rate_report(
    v_ab,
    params: ProtocolParams,
    eps: SecurityEpsilons,
    eta_total: float | None = None,
    hops: int = 2,
) -> RateReport:
    """Full report for a (worst-case) quantum covariance matrix."""
    i_ab = mutual_info_het(v_ab)
    chi, clamped = holevo_rr(v_ab, return_flag=True)
    k_pe = params.beta * i_ab - chi
    comp = composable_rate(k_pe, params, eps)
    bench = {}
    if eta_total is not None and 0 < eta_total < 1:
        bench = {"plob": plob(eta_total), "repeater_capacity": repeater_capacity(eta_total, hops)}
    return RateReport(
        K_pe=k_pe,
        I_AB=i_ab,
        chi=chi,
        Delta_aep=comp.Delta_aep,
        Theta=comp.Theta,
        K_composable=comp.K,
        K_composable_signed=comp.K_signed,
        benchmarks=bench,
        clamped=clamped,
        insufficient_samples=comp.insufficient_samples,
        eps_total=eps.eps_total,
    )

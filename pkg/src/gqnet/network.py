"""
End-to-end covariance matrices of repeater chains.

Two independent routes are provided: a closed-form recursion over the repeater
depth, and a mode-by-mode simulation built on :mod:`gqnet.gaussian`. The module
also maps a normal-form triplet onto an equivalent one-way channel and carries
the node-emulation and displacement-postponement checks.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from numpy.typing import NDArray

from . import gaussian as ge
from .gaussian import GaussianState, NormalFormTriplet

# environment variance seen by the Bell-detector loss; "paper" reproduces the
# closed-form recursion (denominator eta_B (a + b) + 1 - eta_B)
BELL_NOISE_ENV = {"paper": 0.5, "physical": 1.0}
NLA_PLACEMENTS = ("output", "both")
XI_REFERENCES = ("output", "input")


class ChainError(ValueError):
    """Invalid chain description or non-bona-fide intermediate state."""


class NetworkError(ValueError):
    """Invalid node set (odd network number)."""


@dataclass(frozen=True)
class ChainConfig:
    """Repeater chain of ``M = 2**depth_m`` identical links.

    ``xi`` is the per-link excess noise in SNU. With ``xi_reference="output"``
    it is added at the channel output; with ``"input"`` it is referred to the
    channel input and the output noise is ``eta * xi``. ``link_eta``, when
    given, overrides the transmissivity derived from distance and loss.
    """

    depth_m: int = 1
    mu: float = 2.0
    gain_g: float = 1.0
    eta_B: float = 1.0
    xi: float = 0.0
    distance_km: float = 0.0
    loss_db_per_km: float = 0.2
    link_eta: float | None = None
    xi_reference: str = "output"
    bell_noise: str = "paper"
    nla_placement: str = "output"

    def __post_init__(self):
        if int(self.depth_m) != self.depth_m or self.depth_m < 0:
            raise ChainError(f"depth_m must be a non-negative integer, got {self.depth_m}")
        if not self.mu >= 1:
            raise ChainError(f"mu must be >= 1, got {self.mu}")
        if not self.gain_g >= 1:
            raise ChainError(f"gain_g must be >= 1, got {self.gain_g}")
        if not 0 < self.eta_B <= 1:
            raise ChainError(f"eta_B must lie in (0, 1], got {self.eta_B}")
        if self.xi < 0:
            raise ChainError(f"xi must be >= 0, got {self.xi}")
        if self.distance_km < 0 or self.loss_db_per_km < 0:
            raise ChainError("distance and loss must be non-negative")
        if self.link_eta is not None and not 0 < self.link_eta <= 1:
            raise ChainError(f"link_eta must lie in (0, 1], got {self.link_eta}")
        if self.xi_reference not in XI_REFERENCES:
            raise ChainError(f"xi_reference must be one of {XI_REFERENCES}")
        if self.bell_noise not in BELL_NOISE_ENV:
            raise ChainError(f"bell_noise must be one of {tuple(BELL_NOISE_ENV)}")
        if self.nla_placement not in NLA_PLACEMENTS:
            raise ChainError(f"nla_placement must be one of {NLA_PLACEMENTS}")

    @property
    def n_links(self) -> int:
        return 2**self.depth_m

    @property
    def eta(self) -> float:
        """Per-link transmissivity."""
        if self.link_eta is not None:
            return float(self.link_eta)
        return float(10 ** (-self.loss_db_per_km * (self.distance_km / self.n_links) / 10))

    @property
    def xi_output(self) -> float:
        """Per-link excess noise referred to the channel output."""
        return self.xi * self.eta if self.xi_reference == "input" else self.xi

    @property
    def total_eta(self) -> float:
        return self.eta**self.n_links

    def with_(self, **changes) -> "ChainConfig":
        return replace(self, **changes)


@dataclass(frozen=True)
class EquivalentChannel:
    mu_eq: float
    eta_eq: float
    xi_eq: float

    def is_bona_fide(self, tol: float = 1e-9) -> bool:
        return self.mu_eq >= 1 - tol and self.eta_eq <= 1 + tol and self.xi_eq >= -tol


def _link_state(mu, eta, xi, gain_g, placement, labels=("A", "B")) -> GaussianState:
    a, b = labels
    state = ge.make_tmsv(mu, labels)
    state = ge.apply_thermal_loss(state, b, eta, xi)
    if gain_g != 1:
        state = ge.apply_ideal_nla(state, b, gain_g)
        if placement == "both":
            state = ge.apply_ideal_nla(state, a, gain_g)
    return state


def single_link_cm(
    mu: float, eta: float, xi: float, gain_g: float = 1.0, placement: str = "output"
) -> NormalFormTriplet:
    """Triplet of a TMSV whose second arm crosses a thermal-loss channel then an ideal NLA.

    ``xi`` is output-referred. Raises :class:`~gqnet.gaussian.NLAInfeasibleError`
    when the gain is too large for the channel output.
    """
    return ge.triplet_from_cm(_link_state(mu, eta, xi, gain_g, placement).cm)


def link_triplet(config: ChainConfig) -> NormalFormTriplet:
    return single_link_cm(
        config.mu, config.eta, config.xi_output, config.gain_g, config.nla_placement
    )


def swap_step(t: NormalFormTriplet, eta_B: float, env_variance: float = 0.5) -> NormalFormTriplet:
    """One level of the depth recursion (two identical triplets joined by a lossy Bell detection)."""
    den = eta_B * (t.a + t.b) + 2 * env_variance * (1 - eta_B)
    corr = eta_B * t.c**2 / den
    return NormalFormTriplet(t.a - corr, t.b - corr, corr)


def chain_cm_recursive(config: ChainConfig, base: NormalFormTriplet | None = None) -> NormalFormTriplet:
    """End-to-end triplet from the closed-form recursion applied ``depth_m`` times.

    Raises
    ------
    ChainError
        If the base or an intermediate triplet is not bona fide.
    """
    t = base if base is not None else link_triplet(config)
    env = BELL_NOISE_ENV[config.bell_noise]
    for level in range(config.depth_m + 1):
        if not ge.is_bona_fide(t, tol=1e-9):
            raise ChainError(f"triplet at level {level} is not bona fide: {t}")
        if level == config.depth_m:
            break
        t = swap_step(t, config.eta_B, env)
    return t


@dataclass
class ChainSimulation:
    """Result of a mode-level chain simulation."""

    triplet: NormalFormTriplet
    outcomes: list[NDArray[np.float64]]
    state_before_correction: GaussianState
    corrected_state: GaussianState
    joint_state: GaussianState = field(repr=False)
    relays: list[tuple[str, str]] = field(default_factory=list)


def build_chain_state(
    config: ChainConfig, links: Sequence[tuple[float, float]] | None = None
) -> tuple[GaussianState, list[tuple[str, str]]]:
    """Joint state of all links with Bell-detector loss applied, before any measurement.

    Modes are labelled ``A1, B1, ..., AM, BM``; relay i joins ``Bi`` and ``A(i+1)``.
    ``links`` optionally gives heterogeneous per-link ``(eta, xi_output)``.
    """
    if links is None:
        links = [(config.eta, config.xi_output)] * config.n_links
    state = None
    for k, (eta, xi) in enumerate(links, start=1):
        link = _link_state(config.mu, eta, xi, config.gain_g, config.nla_placement, (f"A{k}", f"B{k}"))
        state = link if state is None else state.tensor(link)
    relays = [(f"B{k}", f"A{k + 1}") for k in range(1, len(links))]
    env = BELL_NOISE_ENV[config.bell_noise]
    if config.eta_B < 1:
        for left, right in relays:
            state = ge.apply_attenuation(state, left, config.eta_B, env)
            state = ge.apply_attenuation(state, right, config.eta_B, env)
    return state, relays


def simulate_chain(
    config: ChainConfig,
    rng: np.random.Generator | None = None,
    links: Sequence[tuple[float, float]] | None = None,
) -> ChainSimulation:
    """Run every relay's Bell detection, then undo all displacements at the end users."""
    rng = rng if rng is not None else np.random.default_rng(0)
    joint, relays = build_chain_state(config, links)
    state = joint
    outcomes = []
    for left, right in relays:
        res = ge.measure_generaldyne(state, (left, right), "bell", rng)
        outcomes.append(res.values)
        state = res.conditional_state
    alice, bob = state.mode_labels
    corrected = ge.apply_displacement(state, alice, -state.mean[:2])
    corrected = ge.apply_displacement(corrected, bob, -state.mean[2:])
    triplet = ge.triplet_from_cm(state.cm)
    return ChainSimulation(triplet, outcomes, state, corrected, joint, relays)


def chain_cm_simulated(config: ChainConfig, rng: np.random.Generator | None = None) -> NormalFormTriplet:
    return simulate_chain(config, rng).triplet


def to_equivalent_channel(t: NormalFormTriplet) -> EquivalentChannel:
    """Source variance, transmissivity and output excess noise reproducing ``t`` one-way.

    ``xi_eq = b - 1 - eta_eq (a - 1)``, the value for which the equivalent
    one-way state matches ``t`` entry by entry.
    """
    a, b, c = t.a, t.b, t.c
    if a < 1:
        raise ChainError(f"source variance a={a} < 1")
    if a == 1:
        if c != 0:
            raise ChainError("degenerate source: a = 1 with non-zero correlation")
        return EquivalentChannel(1.0, 0.0, b - 1.0)
    eta_eq = c * c / (a * a - 1.0)
    return EquivalentChannel(float(a), float(eta_eq), float(b - 1.0 - eta_eq * (a - 1.0)))


def emulate_endpoint_nodes(mu: float, eta: float, xi: float, nu: float) -> NDArray[np.float64]:
    """Covariance matrix of b'C' when a full relay with a TMSV(nu) source emulates a sending-only node.

    A TMSV(mu) arm is teleported by Bell detection against a TMSV(nu) whose
    other arm crosses the thermal-loss channel (eta, xi). As ``nu`` grows the
    result tends to the direct single-link matrix with error O(1/nu).
    """
    if not nu >= 1:
        raise ChainError(f"nu must be >= 1, got {nu}")
    s = mu + nu
    a = mu - (mu * mu - 1.0) / s
    c = np.sqrt(eta * (mu * mu - 1.0) * (nu * nu - 1.0)) / s
    f = (nu * (eta * mu + 1.0 - eta + xi) + mu * (1.0 - eta + xi) + eta) / s
    return ge.normal_form_cm(a, f, c)


def postponement_check(mu, eta, xi, nu, gamma1, gamma2):
    """Mean of end mode ``a`` with the second correction applied in place vs. postponed.

    Returns ``(mean_up, mean_down, gamma2_prime)`` where ``gamma2_prime`` is the
    postponed displacement that makes the two means coincide.
    """
    g1 = np.asarray(gamma1, dtype=float).reshape(2)
    g2 = np.asarray(gamma2, dtype=float).reshape(2)
    den = nu + eta * (mu - 1.0) + 1.0 + xi
    if den <= 0:
        raise ChainError("non-positive denominator in the displacement gain")
    gamma = np.sqrt(eta * (mu * mu - 1.0)) / den
    flip = np.array([np.sqrt(2.0), -np.sqrt(2.0)])
    mean_up = gamma * (flip * g2 + g1)
    gamma2_prime = mean_up - gamma * g1
    mean_down = gamma * g1 + gamma2_prime
    return mean_up, mean_down, gamma2_prime


def postponement_gain(mu, eta, xi, nu) -> float:
    return float(np.sqrt(eta * (mu * mu - 1.0)) / (nu + eta * (mu - 1.0) + 1.0 + xi))


NODE_KINDS = ("full_relay", "sending_only", "receiving_only")


@dataclass(frozen=True)
class NodeSpec:
    kind: str = "full_relay"

    def __post_init__(self):
        if self.kind not in NODE_KINDS:
            raise NetworkError(f"unknown node kind {self.kind!r}")


def network_number(nodes: Sequence[NodeSpec]) -> int:
    """Count of sending-only plus receiving-only nodes; must be even."""
    count = sum(1 for n in nodes if n.kind != "full_relay")
    if count % 2:
        raise NetworkError(
            f"network number {count} is odd: sending-only and receiving-only nodes must come in pairs"
        )
    return count

"""
Symplectic algebra for multimode Gaussian states.

Conventions: quadratures ordered (q1, p1, ..., qn, pn), shot-noise units with
the vacuum covariance equal to the identity, and the symplectic form built
from blocks [[0, 1], [-1, 0]].
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Hashable, Sequence

import numpy as np
from numpy.typing import NDArray

SYMMETRY_RTOL = 1e-12
EIGEN_SLACK = 1e-9

MEASUREMENT_KINDS = ("heterodyne", "homodyne_q", "homodyne_p", "bell")


class GaussianError(ValueError):
    """Invalid argument for a Gaussian state operation."""


class NLAInfeasibleError(GaussianError):
    """The ideal amplifier output is not normalizable (gain too large)."""

    def __init__(self, gain: float, margin: float):
        self.gain = gain
        self.margin = margin
        super().__init__(
            f"gain too large: g={gain:g} makes the amplified state non-normalizable "
            f"(feasibility margin {margin:.3e} <= 0)"
        )


def symplectic_form(n_modes: int) -> NDArray[np.float64]:
    """Return the 2n x 2n block-diagonal symplectic form."""
    return np.kron(np.eye(n_modes), np.array([[0.0, 1.0], [-1.0, 0.0]]))


def _symmetrize(m: NDArray[np.float64]) -> NDArray[np.float64]:
    return (m + m.T) / 2


@dataclass(frozen=True)
class GaussianState:
    """Mean vector and covariance matrix over labelled bosonic modes.

    Instances are immutable; every operation returns a new state. Physicality
    (the uncertainty principle) is not enforced on construction, use
    :meth:`is_physical` to check it.
    """

    mode_labels: tuple[Hashable, ...]
    mean: NDArray[np.float64] = field(repr=False)
    cm: NDArray[np.float64] = field(repr=False)

    def __post_init__(self):
        labels = tuple(self.mode_labels)
        if len(set(labels)) != len(labels):
            raise GaussianError(f"duplicate mode labels in {labels}")
        n = len(labels)
        mean = np.array(self.mean, dtype=float).reshape(-1)
        cm = np.array(self.cm, dtype=float)
        if mean.shape != (2 * n,):
            raise GaussianError(f"mean must have length {2 * n}, got {mean.shape}")
        if cm.shape != (2 * n, 2 * n):
            raise GaussianError(f"cm must be {2 * n}x{2 * n}, got {cm.shape}")
        scale = max(1.0, float(np.max(np.abs(cm)))) if n else 1.0
        if np.max(np.abs(cm - cm.T), initial=0.0) > SYMMETRY_RTOL * scale:
            raise GaussianError("covariance matrix is not symmetric")
        cm = _symmetrize(cm)
        mean.setflags(write=False)
        cm.setflags(write=False)
        object.__setattr__(self, "mode_labels", labels)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cm", cm)

    @property
    def n_modes(self) -> int:
        return len(self.mode_labels)

    def index(self, mode: Hashable) -> int:
        try:
            return self.mode_labels.index(mode)
        except ValueError:
            raise GaussianError(f"unknown mode {mode!r}; have {self.mode_labels}") from None

    def quadrature_indices(self, modes: Sequence[Hashable]) -> list[int]:
        idx = []
        for mode in modes:
            k = self.index(mode)
            idx.extend((2 * k, 2 * k + 1))
        return idx

    def reduced(self, modes: Sequence[Hashable]) -> "GaussianState":
        """Marginal state of ``modes`` (in the given order)."""
        idx = self.quadrature_indices(modes)
        return GaussianState(tuple(modes), self.mean[idx], self.cm[np.ix_(idx, idx)])

    def tensor(self, other: "GaussianState") -> "GaussianState":
        """Product state ``self ⊗ other``."""
        n, k = 2 * self.n_modes, 2 * other.n_modes
        cm = np.zeros((n + k, n + k))
        cm[:n, :n] = self.cm
        cm[n:, n:] = other.cm
        return GaussianState(
            self.mode_labels + other.mode_labels, np.concatenate([self.mean, other.mean]), cm
        )

    def is_physical(self, slack: float = EIGEN_SLACK) -> bool:
        return bool(symplectic_eigenvalues(self.cm)[0] >= 1 - slack)

    def purity(self) -> float:
        """Purity 1/sqrt(det V) (equal to 1 for pure states)."""
        return float(1.0 / np.sqrt(np.linalg.det(self.cm)))


def vacuum(labels: Sequence[Hashable]) -> GaussianState:
    n = len(labels)
    return GaussianState(tuple(labels), np.zeros(2 * n), np.eye(2 * n))


def thermal(label: Hashable, variance: float) -> GaussianState:
    if variance < 1:
        raise GaussianError(f"thermal variance must be >= 1, got {variance}")
    return GaussianState((label,), np.zeros(2), variance * np.eye(2))


def make_tmsv(mu: float, labels: tuple[Hashable, Hashable] = ("A", "B")) -> GaussianState:
    """Two-mode squeezed vacuum with quadrature variance ``mu``.

    The covariance matrix is in normal form with ``a = b = mu`` and
    ``c = sqrt(mu**2 - 1)``.
    """
    if not mu >= 1:
        raise GaussianError(f"TMSV variance must satisfy mu >= 1, got {mu}")
    c = np.sqrt(mu * mu - 1.0)
    z = np.diag([1.0, -1.0])
    cm = np.block([[mu * np.eye(2), c * z], [c * z, mu * np.eye(2)]])
    return GaussianState(tuple(labels), np.zeros(4), cm)


def normal_form_cm(a: float, b: float, c: float) -> NDArray[np.float64]:
    """4x4 matrix [[a I, c Z], [c Z, b I]]."""
    z = np.diag([1.0, -1.0])
    return np.block([[a * np.eye(2), c * z], [c * z, b * np.eye(2)]])


def apply_symplectic(
    state: GaussianState, modes: Sequence[Hashable], s: NDArray[np.float64]
) -> GaussianState:
    """Apply the symplectic matrix ``s`` acting on ``modes``."""
    idx = state.quadrature_indices(modes)
    full = np.eye(2 * state.n_modes)
    full[np.ix_(idx, idx)] = s
    return GaussianState(state.mode_labels, full @ state.mean, _symmetrize(full @ state.cm @ full.T))


def apply_gaussian_channel(
    state: GaussianState,
    modes: Sequence[Hashable],
    x: NDArray[np.float64],
    y: NDArray[np.float64],
) -> GaussianState:
    """Apply the Gaussian channel V -> X V X^T + Y, mean -> X mean on ``modes``.

    No complete-positivity check is made on (X, Y).
    """
    idx = state.quadrature_indices(modes)
    full_x = np.eye(2 * state.n_modes)
    full_x[np.ix_(idx, idx)] = x
    full_y = np.zeros((2 * state.n_modes, 2 * state.n_modes))
    full_y[np.ix_(idx, idx)] = y
    cm = full_x @ state.cm @ full_x.T + full_y
    return GaussianState(state.mode_labels, full_x @ state.mean, _symmetrize(cm))


def _check_distinct(state: GaussianState, mode_i: Hashable, mode_j: Hashable) -> None:
    state.index(mode_i)
    state.index(mode_j)
    if mode_i == mode_j:
        raise GaussianError("beam splitter needs two distinct modes")


def apply_beamsplitter(
    state: GaussianState, mode_i: Hashable, mode_j: Hashable, transmissivity: float
) -> GaussianState:
    """Mix two modes on a beam splitter.

    Output quadratures are ``(sqrt(t) x + sqrt(1-t) y, -sqrt(1-t) x + sqrt(t) y)``
    with x the quadratures of ``mode_i`` and y those of ``mode_j``.
    """
    _check_distinct(state, mode_i, mode_j)
    if not 0.0 <= transmissivity <= 1.0:
        raise GaussianError(f"transmissivity must lie in [0, 1], got {transmissivity}")
    t = np.sqrt(transmissivity)
    r = np.sqrt(1.0 - transmissivity)
    i2 = np.eye(2)
    s = np.block([[t * i2, r * i2], [-r * i2, t * i2]])
    return apply_symplectic(state, (mode_i, mode_j), s)


def apply_thermal_loss(state: GaussianState, mode: Hashable, eta: float, xi: float) -> GaussianState:
    """Thermal-loss channel with transmissivity ``eta`` and output excess noise ``xi``.

    A mode variance v becomes ``eta * v + 1 - eta + xi``; correlations with
    other modes and the mean are scaled by ``sqrt(eta)``.
    """
    if not 0.0 < eta <= 1.0:
        raise GaussianError(f"channel transmissivity must lie in (0, 1], got {eta}")
    if xi < 0:
        raise GaussianError(f"excess noise must be non-negative, got {xi}")
    return apply_gaussian_channel(
        state, (mode,), np.sqrt(eta) * np.eye(2), (1.0 - eta + xi) * np.eye(2)
    )


def apply_attenuation(
    state: GaussianState, mode: Hashable, eta: float, env_variance: float = 1.0
) -> GaussianState:
    """Beam-splitter attenuation against an environment mode of variance ``env_variance``.

    ``env_variance=1`` is the pure-loss channel. Values below 1 model a
    sub-vacuum environment and do not preserve physicality in general.
    """
    if not 0.0 < eta <= 1.0:
        raise GaussianError(f"transmissivity must lie in (0, 1], got {eta}")
    if env_variance < 0:
        raise GaussianError(f"environment variance must be >= 0, got {env_variance}")
    return apply_gaussian_channel(
        state, (mode,), np.sqrt(eta) * np.eye(2), (1.0 - eta) * env_variance * np.eye(2)
    )


def apply_displacement(state: GaussianState, mode: Hashable, d) -> GaussianState:
    k = state.index(mode)
    d = np.asarray(d, dtype=float).reshape(2)
    mean = state.mean.copy()
    mean[2 * k : 2 * k + 2] += d
    return GaussianState(state.mode_labels, mean, state.cm)


def nla_feasibility_margin(state: GaussianState, mode: Hashable, g: float) -> float:
    """Smallest eigenvalue of the amplified Q-function precision matrix.

    The ideal amplifier is well defined (normalizable output) iff this is > 0.
    """
    return float(np.linalg.eigvalsh(_nla_precision(state, mode, g))[0])


def _nla_precision(state: GaussianState, mode: Hashable, g: float) -> NDArray[np.float64]:
    k = state.index(mode)
    dim = 2 * state.n_modes
    gmat = np.eye(dim)
    gmat[2 * k, 2 * k] = gmat[2 * k + 1, 2 * k + 1] = g
    proj = np.zeros((dim, dim))
    proj[2 * k, 2 * k] = proj[2 * k + 1, 2 * k + 1] = 1.0
    q_inv = np.linalg.inv(state.cm + np.eye(dim))
    return _symmetrize(gmat @ q_inv @ gmat - 0.5 * (g * g - 1.0) * proj)


def apply_ideal_nla(state: GaussianState, mode: Hashable, g: float) -> GaussianState:
    """Post-selected output of the ideal noiseless amplifier g**n on ``mode``.

    Works on the Husimi function Q (covariance V + I): since
    ``g**n |beta> = exp((g**2 - 1) |beta|**2 / 2) |g beta>``, the amplified
    Q-function is ``Q(G r) exp((g**2 - 1) |r_mode|**2 / 4)`` up to
    normalization, with G scaling the target mode's quadratures by g.
    Success probability is not modelled here.

    Raises
    ------
    NLAInfeasibleError
        If the resulting Gaussian is not normalizable.
    """
    if not g >= 1:
        raise GaussianError(f"NLA gain must satisfy g >= 1, got {g}")
    if g == 1:
        return state
    precision = _nla_precision(state, mode, g)
    margin = float(np.linalg.eigvalsh(precision)[0])
    if margin <= 0:
        raise NLAInfeasibleError(g, margin)
    k = state.index(mode)
    dim = 2 * state.n_modes
    gmat = np.eye(dim)
    gmat[2 * k, 2 * k] = gmat[2 * k + 1, 2 * k + 1] = g
    q_cm = np.linalg.inv(precision)
    q_inv = np.linalg.inv(state.cm + np.eye(dim))
    mean = q_cm @ gmat @ q_inv @ state.mean
    return GaussianState(state.mode_labels, mean, _symmetrize(q_cm) - np.eye(dim))


@dataclass(frozen=True)
class MeasurementOutcome:
    values: NDArray[np.float64]
    conditional_state: GaussianState


def _measured_quadratures(state: GaussianState, modes: Sequence[Hashable], kind: str):
    """Return (state_after_preprocessing, measured indices, added noise)."""
    if kind == "bell":
        if len(modes) != 2:
            raise GaussianError("bell detection needs exactly two modes")
        first, second = modes
        mixed = apply_beamsplitter(state, first, second, 0.5)
        return mixed, [2 * mixed.index(first), 2 * mixed.index(second) + 1], np.zeros((2, 2))
    if len(set(modes)) != len(modes) or not modes:
        raise GaussianError(f"need distinct modes to measure, got {modes}")
    if kind == "heterodyne":
        idx = state.quadrature_indices(modes)
        return state, idx, np.eye(len(idx))
    if kind in ("homodyne_q", "homodyne_p"):
        off = 0 if kind == "homodyne_q" else 1
        idx = [2 * state.index(m) + off for m in modes]
        return state, idx, np.zeros((len(idx), len(idx)))
    raise GaussianError(f"unknown measurement kind {kind!r}; expected one of {MEASUREMENT_KINDS}")


def condition_on(state: GaussianState, modes: Sequence[Hashable], kind: str):
    """Outcome distribution and conditional-state update rule for a measurement.

    Returns ``(outcome_mean, outcome_cov, remaining_labels, cond_cm, gain, rest_mean)``
    where the conditional mean for outcome ``r`` is
    ``rest_mean + gain @ (r - outcome_mean)``.
    """
    work, meas, noise = _measured_quadratures(state, list(modes), kind)
    removed = set(modes)
    rest_labels = tuple(m for m in work.mode_labels if m not in removed)
    rest = work.quadrature_indices(rest_labels)
    v = work.cm
    out_cov = _symmetrize(v[np.ix_(meas, meas)] + noise)
    cross = v[np.ix_(rest, meas)]
    gain = cross @ np.linalg.pinv(out_cov, hermitian=True)
    cond_cm = _symmetrize(v[np.ix_(rest, rest)] - gain @ cross.T)
    return work.mean[meas], out_cov, rest_labels, cond_cm, gain, work.mean[rest]


def measure_generaldyne(
    state: GaussianState,
    modes: Sequence[Hashable],
    kind: str,
    rng: np.random.Generator | None = None,
) -> MeasurementOutcome:
    """Measure ``modes`` and return a sampled outcome with the conditional state.

    ``kind`` is one of ``heterodyne`` (both quadratures plus one vacuum unit of
    noise), ``homodyne_q``/``homodyne_p``, or ``bell`` (balanced beam splitter,
    then q on the first output and p on the second). Measured modes are
    removed from the returned state. Homodyne conditioning uses the
    Moore-Penrose inverse of the measured block.
    """
    modes = list(modes)
    out_mean, out_cov, rest_labels, cond_cm, gain, rest_mean = condition_on(state, modes, kind)
    rng = rng if rng is not None else np.random.default_rng()
    # eigh-based factor tolerates the rank-deficient outcome covariance of pure states
    w, u = np.linalg.eigh(out_cov)
    values = out_mean + u @ (np.sqrt(np.clip(w, 0.0, None)) * rng.standard_normal(len(w)))
    cond_mean = rest_mean + gain @ (values - out_mean)
    return MeasurementOutcome(values, GaussianState(rest_labels, cond_mean, cond_cm))


def symplectic_eigenvalues(cm) -> NDArray[np.float64]:
    """Sorted symplectic spectrum (moduli of the eigenvalues of i Omega V)."""
    cm = np.asarray(cm, dtype=float)
    if cm.ndim != 2 or cm.shape[0] != cm.shape[1] or cm.shape[0] % 2:
        raise GaussianError(f"expected an even-dimensional square matrix, got {cm.shape}")
    scale = max(1.0, float(np.max(np.abs(cm))))
    if np.max(np.abs(cm - cm.T)) > 1e-9 * scale:
        raise GaussianError("covariance matrix is not symmetric")
    n = cm.shape[0] // 2
    ev = np.sort(np.abs(np.linalg.eigvals(1j * symplectic_form(n) @ _symmetrize(cm))))
    return (ev[0::2] + ev[1::2]) / 2


@dataclass(frozen=True)
class NormalFormTriplet:
    """Entries (a, b, c) of a two-mode covariance matrix in normal form."""

    a: float
    b: float
    c: float

    def cm(self) -> NDArray[np.float64]:
        return normal_form_cm(self.a, self.b, self.c)

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.a, self.b, self.c)


def is_bona_fide(t: NormalFormTriplet, tol: float = 1e-12) -> bool:
    """True iff a, b >= 1 and |c| <= min(sqrt(a^2 - 1), sqrt((a + 1)(b - 1))).

    This is the condition under which the triplet corresponds to a source of
    variance a sent through a valid thermal-loss channel.
    """
    a, b, c = t.a, t.b, t.c
    if a < 1 - tol or b < 1 - tol:
        return False
    bound = min(np.sqrt(max(a * a - 1.0, 0.0)), np.sqrt(max((a + 1.0) * (b - 1.0), 0.0)))
    return bool(abs(c) <= bound * (1 + tol) + tol)


def triplet_from_cm(cm, atol: float = 1e-9) -> NormalFormTriplet:
    """Read (a, b, c) off a 4x4 matrix in normal form.

    A correlation block equal to ``-c Z`` (a local pi phase rotation away from
    normal form) is accepted and reported with ``|c|``.
    """
    v = np.asarray(cm, dtype=float)
    if v.shape != (4, 4):
        raise GaussianError(f"expected a 4x4 matrix, got {v.shape}")
    a, b, c = v[0, 0], v[2, 2], v[0, 2]
    expected = normal_form_cm(a, b, c)
    scale = max(1.0, float(np.max(np.abs(v))))
    if np.max(np.abs(v - expected)) > atol * scale:
        raise GaussianError("matrix is not in normal form")
    return NormalFormTriplet(float(a), float(b), float(abs(c)))

"""Fock-space brute force for two-mode states: TMSV, pure loss on B, then g**n on B.

Test-only. The mixed state after loss is kept as an ensemble of pure-state
coefficient matrices (one per loss Kraus operator).
"""

from __future__ import annotations

import numpy as np
from scipy.special import comb


def _ladder(dim):
    return np.diag(np.sqrt(np.arange(1, dim)), k=1)


def _quadratures(dim):
    a = _ladder(dim)
    return a + a.T, -1j * (a - a.T)


def tmsv_coefficients(mu: float, cutoff: int = 60) -> np.ndarray:
    lam = np.sqrt((mu - 1) / (mu + 1))
    n = np.arange(cutoff + 1)
    return np.diag(np.sqrt(1 - lam**2) * lam**n)


def loss_kraus(eta: float, cutoff: int = 60) -> list[np.ndarray]:
    dim = cutoff + 1
    ops = []
    for k in range(dim):
        op = np.zeros((dim, dim))
        for n in range(k, dim):
            op[n - k, n] = np.sqrt(comb(n, k) * eta ** (n - k) * (1 - eta) ** k)
        ops.append(op)
    return ops


def fock_link_cm(mu: float, eta: float = 1.0, g: float = 1.0, cutoff: int = 60) -> np.ndarray:
    """4x4 CM (SNU, vacuum = I) of TMSV(mu) -> pure loss eta on B -> g**n on B."""
    psi = tmsv_coefficients(mu, cutoff)
    branches = [psi] if eta == 1 else [psi @ k.T for k in loss_kraus(eta, cutoff)]
    filt = np.diag(g ** np.arange(cutoff + 1))
    branches = [b @ filt for b in branches]
    norm = sum(np.sum(np.abs(b) ** 2) for b in branches)
    branches = [b / np.sqrt(norm) for b in branches]

    q, p = _quadratures(cutoff + 1)
    eye = np.eye(cutoff + 1)
    ops = [(q, 0), (p, 0), (q, 1), (p, 1)]

    def expect(x, y):
        # <x (on A) (x) y (on B)> summed over branches
        return sum(np.trace(b.conj().T @ x @ b @ y.T) for b in branches)

    def single(op, mode):
        return expect(op, eye) if mode == 0 else expect(eye, op)

    means = [single(op, m).real for op, m in ops]
    cm = np.zeros((4, 4))
    for i, (oi, mi) in enumerate(ops):
        for j, (oj, mj) in enumerate(ops):
            if mi == mj:
                prod = (oi @ oj + oj @ oi) / 2
                val = single(prod, mi)
            else:
                val = expect(oi, oj) if mi == 0 else expect(oj, oi)
            cm[i, j] = val.real - means[i] * means[j]
    return cm

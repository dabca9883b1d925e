"""Slow, independent reference computations for the test-suite.

Nothing here reuses the eigendecomposition, the Frechet kernel, the basis
rotations or the hand-written backpropagation of the main path: the matrix
exponential is a scaled Taylor series, measurement vectors are built from
single-qubit eigenvectors, and derivatives are central finite differences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

_AXIS_EIGVECS = {
    "Z": (np.array([1, 0], dtype=complex), np.array([0, 1], dtype=complex)),
    "X": (np.array([1, 1], dtype=complex) / math.sqrt(2), np.array([1, -1], dtype=complex) / math.sqrt(2)),
    "Y": (np.array([1, 1j], dtype=complex) / math.sqrt(2), np.array([1, -1j], dtype=complex) / math.sqrt(2)),
}


@dataclass(frozen=True)
class OracleTolerance:
    rel_tol: float = 1e-5
    abs_tol: float = 1e-9
    fd_step: float = 1e-6

    def __post_init__(self):
        if min(self.rel_tol, self.abs_tol, self.fd_step) <= 0:
            raise ValueError("tolerances must be positive")
        if not 1e-8 <= self.fd_step <= 1e-4:
            raise ValueError("fd_step must lie in [1e-8, 1e-4]")

    def close(self, a, b) -> bool:
        return bool(np.all(np.abs(np.asarray(a) - np.asarray(b))
                           <= self.abs_tol + self.rel_tol * np.abs(np.asarray(b))))


def expm_series(h, t: float, terms: int = 30) -> np.ndarray:
    """exp(-i H t) by Taylor series with scaling and squaring above norm 0.5."""
    a = -1j * t * np.asarray(h, dtype=complex)
    norm = np.linalg.norm(a, 1)
    squarings = max(0, math.ceil(math.log2(norm / 0.5))) if norm > 0.5 else 0
    a = a / 2**squarings
    out = np.eye(a.shape[0], dtype=complex)
    term = np.eye(a.shape[0], dtype=complex)
    for k in range(1, terms + 1):
        term = term @ a / k
        out = out + term
    for _ in range(squarings):
        out = out @ out
    return out


def measurement_vector(basis: str, bits: str) -> np.ndarray:
    vec = np.ones(1, dtype=complex)
    for axis, bit in zip(basis, bits):
        vec = np.kron(vec, _AXIS_EIGVECS[axis][int(bit)])
    return vec


def brute_probabilities(psi0, h, t: float, basis: str) -> np.ndarray:
    psi = expm_series(h, t) @ np.asarray(psi0, dtype=complex)
    n = len(basis)
    return np.array([abs(np.vdot(measurement_vector(basis, format(i, f"0{n}b")), psi)) ** 2
                     for i in range(2**n)])


def fd_probability_derivatives(psi0, h, direction, t: float, basis: str,
                               step: float = 1e-6) -> np.ndarray:
    """Central difference of every outcome probability along ``direction``."""
    if step <= 0:
        raise ValueError("step must be positive")
    h = np.asarray(h, dtype=complex)
    g = np.asarray(direction, dtype=complex)
    plus = brute_probabilities(psi0, h + step * g, t, basis)
    minus = brute_probabilities(psi0, h - step * g, t, basis)
    return (plus - minus) / (2 * step)


def brute_force_cfi(psi0, h, direction, t: float, basis: str, step: float = 1e-6) -> float:
    """Literal sum over outcomes of (dp/dtheta)^2 / p, zero-probability outcomes skipped."""
    p = brute_probabilities(psi0, h, t, basis)
    dp = fd_probability_derivatives(psi0, h, direction, t, basis, step)
    total = 0.0
    for pj, dj in zip(p, dp):
        if pj > 0:
            total += dj * dj / pj
    return total


# --- loss oracle -------------------------------------------------------------

def _forward(weights, biases, x):
    h = x
    for i, (w, b) in enumerate(zip(weights, biases)):
        z = w @ h + b
        h = z if i == len(weights) - 1 else np.tanh(z)
    return h


def _hermitian(y) -> np.ndarray:
    d = int(round(math.sqrt(len(y))))
    h = np.zeros((d, d), dtype=complex)
    pos = d
    for i in range(d):
        h[i, i] = y[i]
        for j in range(i):
            h[i, j] = complex(y[pos], y[pos + 1])
            h[j, i] = complex(y[pos], -y[pos + 1])
            pos += 2
    return h - np.trace(h) / d * np.eye(d)


def brute_loss(h_hat, dataset, p_floor: float = 1e-12) -> float:
    """Record-by-record negative log-likelihood using the series exponential."""
    from .quantum_sim import spread_state_from_angles

    md = dataset.metadata
    states = [spread_state_from_angles(a).vector for a in md["angles"]]
    times = [md["dt"] * (k + 1) ** md["alpha"] for k in range(md["m_t"])]
    props = [expm_series(h_hat, t) for t in times]
    total, weight = 0.0, 0.0
    for rec in dataset.records:
        r, j, k, _, bits = rec[:5]
        w = rec[5] if len(rec) > 5 else 1.0
        amp = np.vdot(measurement_vector(md["bases"][k], bits), props[j] @ states[r])
        total -= w * math.log(max(abs(amp) ** 2, p_floor))
        weight += w
    return total / weight


def fd_loss_gradient(net, dataset, step: float = 1e-6, p_floor: float = 1e-12):
    """Central-difference gradient of the loss for every network parameter.

    Intended for small networks (up to about 10^3 parameters).
    """
    weights = [w.copy() for w in net.weights]
    biases = [b.copy() for b in net.biases]
    params = []
    for w, b in zip(weights, biases):
        params += [w, b]

    def loss():
        return brute_loss(_hermitian(_forward(weights, biases, net.x)), dataset, p_floor)

    grads = []
    for p in params:
        g = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + step
            up = loss()
            p[idx] = old - step
            down = loss()
            p[idx] = old
            g[idx] = (up - down) / (2 * step)
        grads.append(g)
    return grads

"""Maximum-likelihood reconstruction of a Hamiltonian matrix from one-shot data.

The estimate is parametrised by a small fixed-input tanh network whose d^2
real outputs fill a Hermitian matrix (real diagonal, complex lower
triangle). The likelihood of each record is the exact Born probability of
the observed bitstring; gradients go through the matrix exponential with
the Daleckii-Krein formula and through the network by hand-written
backpropagation.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .quantum_sim import frechet_kernel

log = logging.getLogger(__name__)

P_FLOOR = 1e-12


class RecoveryDivergence(RuntimeError):
    """Raised when the loss or gradient stops being finite."""


# --- network -----------------------------------------------------------------

@dataclass
class EmbeddingNet:
    """Two tanh hidden layers and a linear head, fed a constant input."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    x: np.ndarray

    @classmethod
    def initialize(cls, dim: int, widths=(200, 400), rng=None, init_scale: float = 1.0,
                   input_c: float = 1.0, input_p: float = 0.0) -> EmbeddingNet:
        """Uniform init in [-s, s] with s = init_scale / sqrt(fan_in).

        ``dim`` is the Hilbert-space dimension d; input and output both have
        d^2 entries, the input filled with ``(input_c / d^2) ** input_p``.
        """
        rng = np.random.default_rng(rng)
        size = dim * dim
        x = np.full(size, (input_c / size) ** input_p, dtype=float)
        sizes = [size, *widths, size]
        weights, biases = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            s = init_scale / math.sqrt(fan_in)
            weights.append(rng.uniform(-s, s, size=(fan_out, fan_in)))
            biases.append(rng.uniform(-s, s, size=fan_out))
        return cls(weights, biases, x)

    @property
    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params)

    def copy(self) -> EmbeddingNet:
        return EmbeddingNet([w.copy() for w in self.weights],
                            [b.copy() for b in self.biases], self.x.copy())

    def _forward(self):
        acts = [self.x]
        h = self.x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = w @ h + b
            h = z if i == last else np.tanh(z)
            acts.append(h)
        return acts

    def backward(self, acts, grad_out: np.ndarray) -> list[np.ndarray]:
        """Gradients for ``params`` given dL/d(output) and the forward activations."""
        grads = []
        g = grad_out
        for i in range(len(self.weights) - 1, -1, -1):
            if i != len(self.weights) - 1:
                g = g * (1.0 - acts[i + 1] ** 2)
            grads.append(g.copy())                      # bias
            grads.append(np.outer(g, acts[i]))          # weight
            g = self.weights[i].T @ g
        grads.reverse()
        return grads


def embed_forward(net: EmbeddingNet) -> np.ndarray:
    return net._forward()[-1]


# --- Hermitian assembly ------------------------------------------------------

def _dim_from_length(m: int) -> int:
    d = int(round(math.sqrt(m)))
    if d * d != m or d < 1:
        raise ValueError(f"output length {m} is not a perfect square")
    return d


def assemble_hermitian(y) -> np.ndarray:
    """Traceless Hermitian matrix from d^2 reals.

    The first d entries are the diagonal; the rest are (re, im) pairs of the
    strict lower triangle in row-major order. The upper triangle is the
    conjugate and the trace is removed afterwards.
    """
    y = np.asarray(y, dtype=float)
    d = _dim_from_length(len(y))
    h = np.zeros((d, d), dtype=complex)
    diag = y[:d] - y[:d].mean()
    h[np.diag_indices(d)] = diag
    rows, cols = np.tril_indices(d, -1)
    pairs = y[d:].reshape(-1, 2)
    lower = pairs[:, 0] + 1j * pairs[:, 1]
    h[rows, cols] = lower
    h[cols, rows] = lower.conj()
    return h


def hermitian_pullback(grad_h: np.ndarray) -> np.ndarray:
    """Map a matrix gradient to dL/dy for :func:`assemble_hermitian`.

    ``grad_h`` is the complex matrix Gamma with dL = Re sum conj(Gamma) * dH.
    """
    d = grad_h.shape[0]
    out = np.empty(d * d)
    diag = np.real(np.diag(grad_h))
    out[:d] = diag - diag.mean()
    rows, cols = np.tril_indices(d, -1)
    g_low, g_up = grad_h[rows, cols], grad_h[cols, rows]
    out[d::2] = np.real(g_low + g_up)
    out[d + 1::2] = np.imag(g_low) - np.imag(g_up)
    return out


def traceless(h: np.ndarray) -> np.ndarray:
    h = np.asarray(h, dtype=complex)
    d = h.shape[0]
    return h - (np.trace(h) / d) * np.eye(d)


def reconstruction_error(h_true, h_hat) -> float:
    """Mean absolute entrywise deviation after removing both traces."""
    a, b = np.asarray(h_true), np.asarray(h_hat)
    if a.shape != b.shape or a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(np.mean(np.abs(traceless(a) - traceless(b))))


# --- likelihood --------------------------------------------------------------

def _compiled(dataset):
    compiled = getattr(dataset, "compiled", None)
    if compiled is None:
        raise ValueError("dataset lacks the metadata needed to rebuild probe states")
    return compiled()


def _loss_terms(h_hat: np.ndarray, data, p_floor: float, with_grad: bool):
    lam, v = np.linalg.eigh(h_hat)
    y = data.states @ v.conj()                      # rows: V^dagger psi_r
    u = data.rotations @ v                          # (K, d, d): W_k V
    a = u[data.k, data.b, :]                        # (N, d)
    phase = np.exp(-1j * np.outer(data.times, lam))  # (m, d)
    amp = np.einsum("nd,nd,nd->n", a, phase[data.j], y[data.r])
    p = np.abs(amp) ** 2
    clamped = p < p_floor
    logp = np.log(np.where(clamped, p_floor, p))
    loss = -math.fsum(data.weights * logp) / data.total_weight
    if not with_grad:
        return loss, None
    dl_dp = np.where(clamped, 0.0, -data.weights / (data.total_weight * np.where(clamped, 1.0, p)))
    coef = 2.0 * dl_dp * amp.conj()
    b_mat = np.zeros((len(lam), len(lam)), dtype=complex)
    for j, sel in enumerate(data.time_groups):
        if len(sel) == 0:
            continue
        m = (coef[sel, None] * a[sel]).T @ y[data.r[sel]]
        b_mat += m * frechet_kernel(lam, data.times[j])
    grad_h = v @ b_mat.conj() @ v.conj().T
    return loss, grad_h


def nll_loss(h_hat: np.ndarray, dataset, p_floor: float = P_FLOOR) -> float:
    """Mean negative log Born probability of the recorded bitstrings under h_hat."""
    data = _compiled(dataset)
    if data.n_records == 0:
        raise ValueError("dataset has no records")
    return _loss_terms(np.asarray(h_hat, dtype=complex), data, p_floor, False)[0]


def nll_and_matrix_gradient(h_hat: np.ndarray, dataset, p_floor: float = P_FLOOR):
    """Loss and Gamma with dL = Re sum conj(Gamma) * dH for Hermitian dH."""
    data = _compiled(dataset)
    return _loss_terms(np.asarray(h_hat, dtype=complex), data, p_floor, True)


def loss_and_gradient(net: EmbeddingNet, dataset, p_floor: float = P_FLOOR):
    """Loss and its gradient with respect to every network parameter."""
    acts = net._forward()
    h_hat = assemble_hermitian(acts[-1])
    loss, grad_h = nll_and_matrix_gradient(h_hat, dataset, p_floor)
    grads = net.backward(acts, hermitian_pullback(grad_h))
    return loss, grads


def loss_gradient(net: EmbeddingNet, dataset, p_floor: float = P_FLOOR) -> list[np.ndarray]:
    return loss_and_gradient(net, dataset, p_floor)[1]


def network_loss(net: EmbeddingNet, dataset, p_floor: float = P_FLOOR) -> float:
    return nll_loss(assemble_hermitian(embed_forward(net)), dataset, p_floor)


# --- optimisation ------------------------------------------------------------

class Adam:
    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads):
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


@dataclass
class RecoveryConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    max_iter: int = 5000
    window: int = 50
    rel_tol: float = 1e-6
    p_floor: float = P_FLOOR
    init_scale: float = 1.0
    widths: tuple[int, ...] = (200, 400)
    seed: int = 0

    def __post_init__(self):
        self.widths = tuple(int(w) for w in self.widths)
        positive = dict(lr=self.lr, beta1=self.beta1, beta2=self.beta2, eps=self.eps,
                        max_iter=self.max_iter, window=self.window, rel_tol=self.rel_tol,
                        p_floor=self.p_floor, init_scale=self.init_scale)
        bad = [k for k, val in positive.items() if not val > 0]
        if bad or not all(w > 0 for w in self.widths):
            raise ValueError(f"recovery settings must be positive: {bad or 'widths'}")
        if not (self.beta1 < 1 and self.beta2 < 1 and self.rel_tol < 1):
            raise ValueError("moment decays and rel_tol must be below 1")

    @classmethod
    def from_dict(cls, data: dict) -> RecoveryConfig:
        known = {k: v for k, v in data.items() if k in cls.__dataclass_fields__}
        return cls(**known)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["widths"] = list(self.widths)
        return out


@dataclass
class RecoveryResult:
    h_hat: np.ndarray
    loss_trace: list[float]
    epsilon: float | None
    iterations: int
    converged: bool
    config: RecoveryConfig = field(default_factory=RecoveryConfig)
    dataset_fingerprint: str | None = None

    def to_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "iterations": self.iterations,
            "converged": self.converged,
            "loss_trace": [float(x) for x in self.loss_trace],
            "h_hat": [[float(z.real), float(z.imag)] for z in self.h_hat.ravel()],
            "config": self.config.to_dict(),
            "dataset_fingerprint": self.dataset_fingerprint,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)


def dataset_fingerprint(dataset) -> str | None:
    to_json = getattr(dataset, "to_json", None)
    if to_json is None:
        return None
    return hashlib.sha256(to_json().encode()).hexdigest()


def run_recovery(dataset, config: RecoveryConfig | None = None, net: EmbeddingNet | None = None,
                 h_true=None) -> RecoveryResult:
    """Fit the embedding network to the dataset by Adam on the NLL.

    Stops when the relative loss change across the trailing ``window``
    iterations drops below ``rel_tol`` or after ``max_iter`` evaluations.
    The returned matrix is the one whose loss is the last trace entry.
    """
    config = config or RecoveryConfig()
    data = _compiled(dataset)
    if data.n_records == 0:
        raise ValueError("dataset has no records")
    if net is None:
        net = EmbeddingNet.initialize(data.dim, config.widths, np.random.default_rng(config.seed),
                                      config.init_scale)
    else:
        net = net.copy()
    opt = Adam(net.params, config.lr, config.beta1, config.beta2, config.eps)
    trace: list[float] = []
    converged = False
    h_hat = None
    for it in range(config.max_iter):
        acts = net._forward()
        h_hat = assemble_hermitian(acts[-1])
        if not np.all(np.isfinite(h_hat)):
            raise RecoveryDivergence(f"non-finite Hamiltonian estimate at iteration {it}, "
                                     f"lr={config.lr}")
        loss, grad_h = _loss_terms(h_hat, data, config.p_floor, True)
        if not math.isfinite(loss) or not np.all(np.isfinite(grad_h)):
            raise RecoveryDivergence(
                f"non-finite loss {loss!r} at iteration {it}; "
                f"max|H|={np.max(np.abs(h_hat)):.3g}, lr={config.lr}")
        trace.append(loss)
        if it >= config.window:
            ref = trace[-1 - config.window]
            if abs(ref - loss) <= config.rel_tol * abs(ref):
                converged = True
                break
        if it == config.max_iter - 1:
            break
        opt.step(net.backward(acts, hermitian_pullback(grad_h)))

    if h_true is None:
        h_true = getattr(dataset, "true_matrix", None)
    eps = reconstruction_error(h_true, h_hat) if h_true is not None else None
    log.debug("recovery stopped after %d iterations, loss %.6g, eps %s", len(trace), trace[-1], eps)
    return RecoveryResult(h_hat=h_hat, loss_trace=trace, epsilon=eps, iterations=len(trace),
                          converged=converged, config=config,
                          dataset_fingerprint=dataset_fingerprint(dataset))

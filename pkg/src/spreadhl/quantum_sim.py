"""Dense statevector simulation for spread-state probes.

Evolution goes through a full Hermitian eigendecomposition so that one
decomposition serves every evolution time and every derivative. Measurement
in a Pauli product basis is a per-qubit rotation into the computational
basis followed by a Born-rule readout; bit 0 means the +1 eigenvalue of the
measured axis.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .pauli_model import ModelHamiltonian

DEGENERACY_RTOL = 1e-9

_HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
_S_DAG = np.diag([1, -1j]).astype(complex)
_AXIS_ROTATION = {
    "Z": np.eye(2, dtype=complex),
    "X": _HADAMARD,
    "Y": _HADAMARD @ _S_DAG,
}


@dataclass(frozen=True)
class SpreadState:
    """Product probe state; ``angles[j] = (xi, chi, phi)`` for qubit j."""

    angles: np.ndarray
    vector: np.ndarray

    @property
    def n(self) -> int:
        return len(self.angles)


def single_qubit_spread(xi: float, chi: float, phi: float) -> np.ndarray:
    """R_z(xi) R_y(chi) R_z(phi) applied to |0>."""
    rz = lambda a: np.diag([np.exp(-0.5j * a), np.exp(0.5j * a)])
    ry = np.array([[np.cos(chi / 2), -np.sin(chi / 2)],
                   [np.sin(chi / 2), np.cos(chi / 2)]])
    return rz(xi) @ ry @ rz(phi) @ np.array([1.0, 0.0], dtype=complex)


def spread_state_from_angles(angles) -> SpreadState:
    angles = np.asarray(angles, dtype=float).reshape(-1, 3)
    vec = np.ones(1, dtype=complex)
    for xi, chi, phi in angles:
        vec = np.kron(vec, single_qubit_spread(xi, chi, phi))
    return SpreadState(angles=angles, vector=vec)


def sample_spread_state(n: int, rng: np.random.Generator) -> SpreadState:
    """Draw per-qubit Haar-random Euler angles and build the product state.

    ``chi = arccos(1 - 2u)`` with ``u ~ U[0, 1]`` makes the polar angle
    uniform on the sphere; ``xi`` and ``phi`` are uniform in ``[0, 2pi)``.
    """
    if n < 1:
        raise ValueError("need at least one qubit")
    u = rng.random(n)
    phi = rng.uniform(0.0, 2 * np.pi, n)
    xi = rng.uniform(0.0, 2 * np.pi, n)
    chi = np.arccos(1.0 - 2.0 * u)
    return spread_state_from_angles(np.column_stack([xi, chi, phi]))


@dataclass(frozen=True)
class SpectralDecomposition:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def dim(self) -> int:
        return len(self.eigenvalues)

    def reconstruct(self) -> np.ndarray:
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.conj().T


def eig_hermitian(h, atol: float = 1e-10) -> SpectralDecomposition:
    """Ascending eigendecomposition of a Hermitian matrix (or a model)."""
    if isinstance(h, ModelHamiltonian):
        h = h.matrix
    h = np.asarray(h)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ValueError("expected a square matrix")
    scale = max(1.0, float(np.max(np.abs(h)))) if h.size else 1.0
    if np.max(np.abs(h - h.conj().T), initial=0.0) > atol * scale:
        raise ValueError("matrix is not Hermitian")
    w, v = np.linalg.eigh(h)
    return SpectralDecomposition(eigenvalues=w, eigenvectors=v)


def _as_spectral(h) -> SpectralDecomposition:
    return h if isinstance(h, SpectralDecomposition) else eig_hermitian(h)


def evolve(state: np.ndarray, spec: SpectralDecomposition, t: float) -> np.ndarray:
    """exp(-i H t) |state> via the eigendecomposition of H."""
    if t < 0:
        raise ValueError("evolution time must be non-negative")
    v = spec.eigenvectors
    return v @ (np.exp(-1j * spec.eigenvalues * t) * (v.conj().T @ state))


def propagator(spec: SpectralDecomposition, t: float) -> np.ndarray:
    v = spec.eigenvectors
    return (v * np.exp(-1j * spec.eigenvalues * t)) @ v.conj().T


def validate_basis(basis: str, n: int | None = None) -> str:
    if not basis or set(basis) - set("XYZ"):
        raise ValueError(f"invalid Pauli basis {basis!r}")
    if n is not None and len(basis) != n:
        raise ValueError(f"basis {basis!r} does not match {n} qubits")
    return basis


@lru_cache(maxsize=4096)
def _basis_rotation_cached(basis: str) -> np.ndarray:
    out = np.ones((1, 1), dtype=complex)
    for axis in basis:
        out = np.kron(out, _AXIS_ROTATION[axis])
    out.setflags(write=False)
    return out


def basis_rotation(basis: str) -> np.ndarray:
    """Product rotation taking the measured-axis eigenbasis to the computational one."""
    return _basis_rotation_cached(validate_basis(basis))


def outcome_probabilities(state: np.ndarray, basis: str) -> np.ndarray:
    """Born probabilities over all 2^n bitstrings, in lexicographic order."""
    amp = basis_rotation(basis) @ state
    return np.abs(amp) ** 2


def random_basis(n: int, rng: np.random.Generator) -> str:
    return "".join(rng.choice(list("XYZ"), size=n))


def index_to_bitstring(index: int, n: int) -> str:
    return format(int(index), f"0{n}b")


def bitstring_to_index(bits: str) -> int:
    return int(bits, 2)


def sample_outcome(probs: np.ndarray, rng: np.random.Generator) -> str:
    """Inverse-CDF draw of one bitstring from a distribution over 2^n outcomes."""
    probs = np.asarray(probs, dtype=float)
    n = int(round(np.log2(len(probs))))
    cdf = np.cumsum(probs)
    idx = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    return index_to_bitstring(min(idx, len(probs) - 1), n)


def frechet_kernel(eigenvalues: np.ndarray, t: float, rtol: float = DEGENERACY_RTOL) -> np.ndarray:
    """Divided differences of exp(-i lambda t) over pairs of eigenvalues.

    Nearly degenerate pairs (gap below ``rtol * max|lambda|``) use the
    analytic limit ``-i t exp(-i lambda t)``.
    """
    lam = np.asarray(eigenvalues, dtype=float)
    e = np.exp(-1j * lam * t)
    gap = lam[:, None] - lam[None, :]
    tau = rtol * max(float(np.max(np.abs(lam), initial=0.0)), 1e-300)
    close = np.abs(gap) <= tau
    safe_gap = np.where(close, 1.0, gap)
    f = (e[:, None] - e[None, :]) / safe_gap
    lam_mid = 0.5 * (lam[:, None] + lam[None, :])
    return np.where(close, -1j * t * np.exp(-1j * lam_mid * t), f)


def probability_derivatives(psi0: np.ndarray, h, directions, t: float, basis: str) -> np.ndarray:
    """Exact d p_b / d theta_a for p_b = |<b| W exp(-i H t) |psi0>|^2.

    ``h`` may be a model, a Hermitian matrix or a precomputed
    :class:`SpectralDecomposition`; ``directions`` are Hermitian generators.
    Returns an array of shape ``(2**n, len(directions))``.
    """
    spec = _as_spectral(h)
    v = spec.eigenvectors
    w = basis_rotation(basis)
    kernel = frechet_kernel(spec.eigenvalues, t)
    y = v.conj().T @ psi0
    wv = w @ v
    amp = wv @ (np.exp(-1j * spec.eigenvalues * t) * y)
    out = np.empty((len(amp), len(directions)))
    for a, g in enumerate(directions):
        g = g[0] if isinstance(g, tuple) else g
        g_eig = v.conj().T @ np.asarray(g) @ v
        dpsi = wv @ ((kernel * g_eig) @ y)
        out[:, a] = 2.0 * np.real(dpsi * amp.conj())
    return out

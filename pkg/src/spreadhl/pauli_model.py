"""Pauli strings and the spin-chain model families used as ground truths.

Qubit 1 is the leftmost tensor factor, i.e. the most significant bit of the
computational-basis index.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property

import numpy as np

MAX_QUBITS = 12

FAMILIES = ("XYZ", "XYZ2", "XYZ3", "XXZ", "CUSTOM")

_PAULI = {
    "I": np.array([[1, 0], [0, 1]], dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def pauli_matrix(letter: str) -> np.ndarray:
    """Return the 2x2 Pauli matrix for ``letter`` in {I, X, Y, Z}."""
    try:
        return _PAULI[letter].copy()
    except KeyError:
        raise ValueError(f"unknown Pauli letter {letter!r}") from None


@dataclass(frozen=True, order=True)
class PauliString:
    letters: str

    def __post_init__(self):
        if not self.letters:
            raise ValueError("Pauli string must act on at least one qubit")
        bad = set(self.letters) - set("IXYZ")
        if bad:
            raise ValueError(f"invalid Pauli letters {sorted(bad)} in {self.letters!r}")

    @property
    def n(self) -> int:
        return len(self.letters)

    @property
    def is_identity(self) -> bool:
        return set(self.letters) == {"I"}

    def __str__(self):
        return self.letters


def string_matrix(s: PauliString | str, max_qubits: int = MAX_QUBITS) -> np.ndarray:
    """Dense Kronecker product of the per-qubit Pauli matrices of ``s``."""
    if isinstance(s, str):
        s = PauliString(s)
    if s.n > max_qubits:
        raise ValueError(f"{s.n} qubits exceeds the dense limit of {max_qubits}")
    out = np.ones((1, 1), dtype=complex)
    for letter in s.letters:
        out = np.kron(out, _PAULI[letter])
    return out


def _site_string(n: int, ops: dict[int, str]) -> PauliString:
    letters = ["I"] * n
    for site, letter in ops.items():
        letters[site] = letter
    return PauliString("".join(letters))


@dataclass(frozen=True)
class ModelHamiltonian:
    """Weighted sum of distinct, non-identity Pauli strings.

    Duplicate strings are merged on construction and identity terms are
    rejected, so every model is traceless and its generators are linearly
    independent.
    """

    n: int
    terms: tuple[tuple[float, PauliString], ...]
    family: str = "CUSTOM"
    seed: int | None = None

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("qubit count must be >= 1")
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        merged: dict[PauliString, float] = {}
        order: list[PauliString] = []
        for coeff, s in self.terms:
            s = PauliString(s) if isinstance(s, str) else s
            if s.n != self.n:
                raise ValueError(f"term {s} does not act on {self.n} qubits")
            if s.is_identity:
                raise ValueError("identity terms are not allowed (models are traceless)")
            if s not in merged:
                order.append(s)
                merged[s] = 0.0
            merged[s] += float(coeff)
        object.__setattr__(self, "terms", tuple((merged[s], s) for s in order))

    @property
    def dim(self) -> int:
        return 2 ** self.n

    @property
    def coefficients(self) -> np.ndarray:
        return np.array([c for c, _ in self.terms])

    @property
    def labels(self) -> list[str]:
        return [s.letters for _, s in self.terms]

    @cached_property
    def matrix(self) -> np.ndarray:
        out = np.zeros((self.dim, self.dim), dtype=complex)
        for coeff, s in self.terms:
            out += coeff * string_matrix(s)
        out.setflags(write=False)
        return out

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "n": self.n,
            "seed": self.seed,
            "terms": [{"string": s.letters, "coeff": c} for c, s in self.terms],
        }

    @classmethod
    def from_dict(cls, data: dict) -> ModelHamiltonian:
        terms = tuple((float(t["coeff"]), PauliString(t["string"])) for t in data["terms"])
        return cls(n=int(data["n"]), terms=terms, family=data.get("family", "CUSTOM"),
                   seed=data.get("seed"))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> ModelHamiltonian:
        return cls.from_dict(json.loads(text))


def term_generators(h: ModelHamiltonian) -> list[tuple[np.ndarray, str]]:
    """Coefficient-free term matrices, in term order, with their labels."""
    return [(string_matrix(s), s.letters) for _, s in h.terms]


@dataclass(frozen=True)
class ParameterSpec:
    """How to draw a ground-truth model.

    Couplings and fields are uniform in ``[low, high]``. With ``disorder`` on,
    couplings are Gaussian ``N(mean, sigma**2)`` instead; local fields stay
    uniform. ``delta`` pins the XXZ anisotropy, otherwise it is drawn uniformly
    from ``[-anisotropy, anisotropy]``.
    """

    family: str
    n: int
    low: float = -1.0
    high: float = 1.0
    disorder: bool = False
    mean: float = 0.0
    sigma: float = 0.1
    anisotropy: float = 0.5
    delta: float | None = None
    seed: int = 0

    def __post_init__(self):
        if not self.low < self.high:
            raise ValueError("uniform bounds need low < high")
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")
        if self.anisotropy < 0:
            raise ValueError("anisotropy bound must be non-negative")


def _min_qubits(family: str) -> int:
    return {"XYZ": 2, "XXZ": 2, "XYZ2": 3, "XYZ3": 3}[family]


def build_model(spec: ParameterSpec) -> ModelHamiltonian:
    """Draw a model of the requested family with open boundary conditions."""
    family, n = spec.family, spec.n
    if family not in ("XYZ", "XYZ2", "XYZ3", "XXZ"):
        raise ValueError(f"cannot sample family {family!r}")
    if n < _min_qubits(family):
        raise ValueError(f"{family} needs at least {_min_qubits(family)} qubits, got {n}")
    if n > MAX_QUBITS:
        raise ValueError(f"{n} qubits exceeds the dense limit of {MAX_QUBITS}")
    rng = np.random.default_rng(spec.seed)

    def coupling():
        if spec.disorder:
            return float(rng.normal(spec.mean, spec.sigma))
        return float(rng.uniform(spec.low, spec.high))

    def local_field():
        return float(rng.uniform(spec.low, spec.high))

    terms: list[tuple[float, PauliString]] = []
    if family == "XXZ":
        if spec.delta is None:
            delta = float(rng.uniform(-spec.anisotropy, spec.anisotropy))
        else:
            delta = float(spec.delta)
        for i in range(n - 1):
            for a in "XY":
                terms.append((1.0, _site_string(n, {i: a, i + 1: a})))
            terms.append((delta, _site_string(n, {i: "Z", i + 1: "Z"})))
        return ModelHamiltonian(n, tuple(terms), family, spec.seed)

    for i in range(n - 1):
        for a in "XYZ":
            terms.append((coupling(), _site_string(n, {i: a, i + 1: a})))
    field_axes = "X" if family == "XYZ" else "XYZ"
    for i in range(n):
        for a in field_axes:
            terms.append((local_field(), _site_string(n, {i: a})))
    if family == "XYZ2":
        for i in range(n - 2):
            for a in "XYZ":
                terms.append((coupling(), _site_string(n, {i: a, i + 2: a})))
    elif family == "XYZ3":
        for i in range(n - 2):
            for a in "XYZ":
                terms.append((coupling(), _site_string(n, {i: a, i + 1: a, i + 2: a})))
    return ModelHamiltonian(n, tuple(terms), family, spec.seed)

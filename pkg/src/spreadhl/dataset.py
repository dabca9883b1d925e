"""One-shot measurement datasets: generation, persistence and record tables.

Every random choice is drawn from a stream keyed by the master seed and the
loop indices, so a dataset is a pure function of its metadata:

* bases:          ``default_rng([seed, 0])``
* spread state r: ``default_rng([seed, 1, r])``
* shot (r,j,k,s): ``default_rng([seed, 2, r, j, k, s])``

Indices in records are zero-based.
"""

from __future__ import annotations

import gzip
import json
import os
import tempfile
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .fisher_schedule import Schedule
from .pauli_model import ModelHamiltonian
from .quantum_sim import (
    basis_rotation,
    bitstring_to_index,
    eig_hermitian,
    evolve,
    index_to_bitstring,
    outcome_probabilities,
    random_basis,
    sample_outcome,
    sample_spread_state,
    spread_state_from_angles,
    validate_basis,
)

FORMAT_VERSION = 1


@dataclass
class RecordTable:
    """Column view of a dataset for vectorised likelihood evaluation."""

    states: np.ndarray      # (R, d)
    times: np.ndarray       # (m,)
    rotations: np.ndarray   # (K, d, d)
    r: np.ndarray
    j: np.ndarray
    k: np.ndarray
    b: np.ndarray
    weights: np.ndarray
    time_groups: list

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    @property
    def n_records(self) -> int:
        return len(self.r)

    @cached_property
    def total_weight(self) -> float:
        return float(np.sum(self.weights))


class MeasurementDataset:
    """Records ``(r, j, k, s, bitstring)`` plus everything needed to regenerate them.

    ``exact`` datasets store, for each ``(r, j, k)``, every bitstring with its
    exact Born probability as a weight (the infinite-shot limit).
    """

    def __init__(self, metadata: dict, records: list):
        self.metadata = metadata
        self.records = records
        self._validate()

    def _validate(self):
        md = self.metadata
        missing = {"n", "true_model", "master_seed", "dt", "alpha", "m_t", "R", "K", "S",
                   "bases", "angles"} - set(md)
        if missing:
            raise ValueError(f"dataset metadata missing {sorted(missing)}")
        n, bounds = md["n"], (md["R"], md["m_t"], md["K"], md["S"])
        if len(md["bases"]) != md["K"] or len(md["angles"]) != md["R"]:
            raise ValueError("basis list or angle list does not match K / R")
        for rec in self.records:
            if len(rec[4]) != n or any(not 0 <= i < hi for i, hi in zip(rec[:4], bounds)):
                raise ValueError(f"malformed record {rec}")

    # --- convenience accessors
    @property
    def n(self) -> int:
        return self.metadata["n"]

    @property
    def exact(self) -> bool:
        return bool(self.metadata.get("exact", False))

    @property
    def schedule(self) -> Schedule:
        md = self.metadata
        return Schedule(md["dt"], md["alpha"], md["m_t"])

    @property
    def total_time(self) -> float:
        return self.schedule.total_time

    @property
    def true_model(self) -> ModelHamiltonian | None:
        tm = self.metadata.get("true_model")
        return None if tm is None else ModelHamiltonian.from_dict(tm)

    @property
    def true_matrix(self) -> np.ndarray | None:
        model = self.true_model
        return None if model is None else np.asarray(model.matrix)

    def __len__(self):
        return len(self.records)

    def compiled(self) -> RecordTable:
        if getattr(self, "_table", None) is None:
            md = self.metadata
            states = np.array([spread_state_from_angles(a).vector for a in md["angles"]])
            if len(self.records):
                cols = list(zip(*self.records))
                r, j, k = (np.array(c, dtype=np.int64) for c in cols[:3])
                b = np.array([bitstring_to_index(s) for s in cols[4]], dtype=np.int64)
                w = (np.array(cols[5], dtype=float) if self.exact
                     else np.ones(len(self.records)))
            else:
                r = j = k = b = np.zeros(0, dtype=np.int64)
                w = np.zeros(0)
            groups = [np.flatnonzero(j == jj) for jj in range(md["m_t"])]
            self._table = RecordTable(
                states=states, times=self.schedule.times,
                rotations=np.array([basis_rotation(p) for p in md["bases"]]),
                r=r, j=j, k=k, b=b, weights=w, time_groups=groups)
        return self._table

    def restrict(self, m: int) -> MeasurementDataset:
        """Prefix of the experiment: only time stamps ``j < m``."""
        if not 1 <= m <= self.metadata["m_t"]:
            raise ValueError(f"prefix length {m} outside 1..{self.metadata['m_t']}")
        md = dict(self.metadata, m_t=m)
        return MeasurementDataset(md, [rec for rec in self.records if rec[1] < m])

    # --- persistence
    def to_dict(self) -> dict:
        return {"format": FORMAT_VERSION, "metadata": self.metadata,
                "records": [list(rec) for rec in self.records]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, data: dict) -> MeasurementDataset:
        records = [tuple(rec) for rec in data["records"]]
        return cls(data["metadata"], records)

    def save(self, path) -> None:
        path = Path(path)
        payload = self.to_json().encode()
        if path.suffix == ".gz":
            payload = gzip.compress(payload, mtime=0)
        atomic_write_bytes(path, payload)

    @classmethod
    def load(cls, path) -> MeasurementDataset:
        path = Path(path)
        raw = path.read_bytes()
        if path.suffix == ".gz":
            raw = gzip.decompress(raw)
        return cls.from_dict(json.loads(raw))


def atomic_write_bytes(path, payload: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode())


def generate_dataset(h_true: ModelHamiltonian, spreads: int, bases, shots: int,
                     schedule: Schedule, master_seed: int, exact: bool = False
                     ) -> MeasurementDataset:
    """Simulate the learning experiment under ``h_true``.

    K product Pauli bases are drawn once and shared by every spread state and
    time stamp; each of the R spread states is evolved to every t_j and read
    out S times in each basis. ``bases`` is either K or an explicit list of
    basis strings.
    """
    n = h_true.n
    fixed = not isinstance(bases, (int, np.integer))
    if fixed:
        basis_list = [validate_basis(p, n) for p in bases]
    else:
        basis_rng = np.random.default_rng([master_seed, 0])
        basis_list = [random_basis(n, basis_rng) for _ in range(int(bases))]
    if min(spreads, len(basis_list), shots, schedule.m_t) < 1:
        raise ValueError("R, K, S and m_t must all be at least 1")
    spec = eig_hermitian(h_true)
    times = schedule.times
    angles, records = [], []
    for r in range(spreads):
        state = sample_spread_state(n, np.random.default_rng([master_seed, 1, r]))
        angles.append(state.angles.tolist())
        for j, t in enumerate(times):
            psi = evolve(state.vector, spec, float(t))
            for k, p in enumerate(basis_list):
                probs = outcome_probabilities(psi, p)
                if exact:
                    for idx, prob in enumerate(probs):
                        records.append((r, j, k, 0, index_to_bitstring(idx, n), float(prob)))
                    continue
                for s in range(shots):
                    rng = np.random.default_rng([master_seed, 2, r, j, k, s])
                    records.append((r, j, k, s, sample_outcome(probs, rng)))
    metadata = {
        "family": h_true.family,
        "n": n,
        "true_model": h_true.to_dict(),
        "master_seed": int(master_seed),
        "dt": float(schedule.dt),
        "alpha": float(schedule.alpha),
        "m_t": int(schedule.m_t),
        "R": int(spreads),
        "K": len(basis_list),
        "S": 1 if exact else int(shots),
        "exact": bool(exact),
        "bases": basis_list,
        "fixed_bases": fixed,
        "angles": angles,
    }
    return MeasurementDataset(metadata, records)


def regenerate(dataset: MeasurementDataset) -> MeasurementDataset:
    """Rebuild a dataset from nothing but its own metadata."""
    md = dataset.metadata
    bases = md["bases"] if md.get("fixed_bases") else md["K"]
    return generate_dataset(ModelHamiltonian.from_dict(md["true_model"]), md["R"], bases,
                            md["S"], Schedule(md["dt"], md["alpha"], md["m_t"]),
                            md["master_seed"], exact=md.get("exact", False))

"""Classical Fisher information, ensemble curves and measurement schedules."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .pauli_model import ModelHamiltonian, term_generators
from .quantum_sim import (
    eig_hermitian,
    outcome_probabilities,
    evolve,
    probability_derivatives,
    random_basis,
    sample_spread_state,
)

P_FLOOR = 1e-12


def classical_fisher(probs, dprobs, p_floor: float = P_FLOOR) -> float:
    """Sum over outcomes of (dp)^2 / p, with p clamped below at ``p_floor``."""
    probs = np.asarray(probs, dtype=float)
    dprobs = np.asarray(dprobs, dtype=float)
    if probs.shape != dprobs.shape:
        raise ValueError("probabilities and derivatives differ in length")
    return float(np.sum(dprobs**2 / np.maximum(probs, p_floor)))


def fisher_matrix(probs, dprobs_matrix, p_floor: float = P_FLOOR) -> np.ndarray:
    """Fisher matrix D^T diag(1/p) D for derivative columns D."""
    probs = np.asarray(probs, dtype=float)
    d = np.asarray(dprobs_matrix, dtype=float)
    if d.ndim == 1:
        d = d[:, None]
    scaled = d / np.maximum(probs, p_floor)[:, None]
    m = d.T @ scaled
    return 0.5 * (m + m.T)


@dataclass(frozen=True)
class Schedule:
    dt: float
    alpha: float
    m_t: int

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.alpha > -1:
            raise ValueError("alpha must exceed -1")
        if int(self.m_t) != self.m_t or self.m_t < 1:
            raise ValueError("m_t must be a positive integer")

    @property
    def times(self) -> np.ndarray:
        return schedule_times(self)

    @property
    def total_time(self) -> float:
        return float(math.fsum(self.times))


def schedule_times(s: Schedule) -> np.ndarray:
    """t_k = dt * k**alpha for k = 1..m_t, each computed directly."""
    k = np.arange(1, s.m_t + 1, dtype=float)
    return s.dt * k**s.alpha


@dataclass(frozen=True)
class ScalingLaw:
    gamma0: float
    alpha: float
    p: float
    beta: float


def predicted_exponents(alpha: float, gamma0: float = 2.0) -> ScalingLaw:
    """Cumulative Fisher exponent p and error exponent beta = p / 2."""
    if not alpha > -1:
        raise ValueError("alpha must exceed -1")
    p = (alpha * gamma0 + 1.0) / (alpha + 1.0)
    return ScalingLaw(gamma0=gamma0, alpha=alpha, p=p, beta=p / 2.0)


def cumulative_totals(dt: float, alpha: float, gamma0: float, m: int) -> tuple[float, float]:
    """(I_tot, T_tot) for a power-law per-shot Fisher t**gamma0 over m stamps."""
    t = schedule_times(Schedule(dt, alpha, m))
    return math.fsum(t**gamma0), math.fsum(t)


def empirical_cumulative_exponent(schedule: Schedule, gamma0: float = 2.0,
                                  m_values=None) -> float:
    """Fit I_tot against T_tot on log-log axes across a geometric family of m_t.

    The default family doubles from ``schedule.m_t`` to ``8 * schedule.m_t``.
    """
    if m_values is None:
        m_values = [schedule.m_t * 2**i for i in range(4)]
    totals = [cumulative_totals(schedule.dt, schedule.alpha, gamma0, m) for m in m_values]
    i_tot, t_tot = zip(*totals)
    slope, _, _ = loglog_slope_fit(t_tot, i_tot)
    return slope


def local_cumulative_exponent(dt: float, alpha: float, gamma0: float, m: int) -> float:
    """Two-point exponent d ln I_tot / d ln T_tot between m and 2m stamps."""
    i1, t1 = cumulative_totals(dt, alpha, gamma0, m)
    i2, t2 = cumulative_totals(dt, alpha, gamma0, 2 * m)
    return math.log(i2 / i1) / math.log(t2 / t1)


def loglog_slope_fit(xs, ys) -> tuple[float, float, float]:
    """OLS of ln y on ln x; returns (slope, slope standard error, intercept)."""
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("xs and ys must be 1-D and of equal length")
    if len(x) < 3:
        raise ValueError("need at least three points for a slope and its error")
    if np.any(x <= 0) or np.any(y <= 0) or not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("log-log fit needs positive finite data")
    lx, ly = np.log(x), np.log(y)
    xm, ym = lx.mean(), ly.mean()
    sxx = float(np.sum((lx - xm) ** 2))
    if sxx == 0:
        raise ValueError("xs are all equal")
    slope = float(np.sum((lx - xm) * (ly - ym)) / sxx)
    intercept = float(ym - slope * xm)
    resid = ly - (intercept + slope * lx)
    dof = len(x) - 2
    stderr = math.sqrt(float(np.sum(resid**2)) / dof / sxx)
    return slope, stderr, intercept


@dataclass
class FisherReport:
    times: np.ndarray
    cfi_values: np.ndarray
    cfi_stderr: np.ndarray
    per_realization: np.ndarray  # (n_times, R*K), CFI averaged over directions
    fisher_matrix: np.ndarray | None = None  # (n_times, q, q), ensemble mean
    spreads: int = 1
    bases: int = 1
    seed: int = 0
    labels: list[str] = field(default_factory=list)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["t", "mean_cfi", "stderr_cfi", "R", "K", "seed"])
            for t, m, s in zip(self.times, self.cfi_values, self.cfi_stderr):
                w.writerow([repr(float(t)), repr(float(m)), repr(float(s)),
                            self.spreads, self.bases, self.seed])

    def write_matrix_csv(self, path) -> None:
        if self.fisher_matrix is None:
            raise ValueError("report carries no Fisher matrices")
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["t", "R", "j", "k", "value"])
            for t, mat in zip(self.times, self.fisher_matrix):
                for j in range(mat.shape[0]):
                    for k in range(mat.shape[1]):
                        w.writerow([repr(float(t)), self.spreads, j, k, repr(float(mat[j, k]))])


def _directions(h: ModelHamiltonian, directions):
    if directions is None:
        gens = term_generators(h)
        return [g for g, _ in gens], [label for _, label in gens]
    mats, labels = [], []
    for i, d in enumerate(directions):
        if isinstance(d, tuple):
            mats.append(np.asarray(d[0]))
            labels.append(d[1])
        else:
            mats.append(np.asarray(d))
            labels.append(f"g{i}")
    return mats, labels


def _stable_mean(values: np.ndarray, axis: int = 0) -> np.ndarray:
    # math.fsum keeps the ensemble mean independent of summation order
    values = np.moveaxis(np.asarray(values, dtype=float), axis, -1)
    flat = values.reshape(-1, values.shape[-1])
    out = np.array([math.fsum(row) for row in flat]) / values.shape[-1]
    return out.reshape(values.shape[:-1])


def ensemble_cfi_curve(h: ModelHamiltonian, directions, times, spreads: int, bases: int,
                       master_seed: int, basis: str | None = None,
                       keep_matrices: bool = False, probes=None) -> FisherReport:
    """Average Fisher information over random spread states and Pauli bases.

    Probabilities are exact (no shot noise). Spread state ``r`` and basis
    ``(r, k)`` come from streams derived from ``(master_seed, r[, k])``, so
    the curve does not depend on evaluation order. Passing ``basis`` pins
    every measurement to that basis; ``probes`` replaces the sampled spread
    states with the given state vectors (``spreads`` is then ignored).
    """
    if probes is not None:
        probes = [np.asarray(p, dtype=complex) for p in probes]
        spreads = len(probes)
    if spreads < 1 or bases < 1:
        raise ValueError("need at least one spread state and one basis")
    times = np.asarray(times, dtype=float)
    mats, labels = _directions(h, directions)
    spec = eig_hermitian(h)
    q = len(mats)
    per = np.empty((len(times), spreads * bases))
    full = np.empty((len(times), spreads * bases, q, q)) if keep_matrices else None
    for r in range(spreads):
        if probes is not None:
            state = probes[r]
        else:
            state = sample_spread_state(h.n, np.random.default_rng([master_seed, 1, r])).vector
        for k in range(bases):
            b = basis or random_basis(h.n, np.random.default_rng([master_seed, 2, r, k]))
            for ti, t in enumerate(times):
                probs = outcome_probabilities(evolve(state, spec, t), b)
                dp = probability_derivatives(state, spec, mats, t, b)
                fm = fisher_matrix(probs, dp)
                per[ti, r * bases + k] = np.trace(fm) / q
                if keep_matrices:
                    full[ti, r * bases + k] = fm
    mean = _stable_mean(per, axis=1)
    n = per.shape[1]
    stderr = per.std(axis=1, ddof=1) / np.sqrt(n) if n > 1 else np.zeros(len(times))
    fm_mean = None
    if keep_matrices:
        fm_mean = _stable_mean(np.moveaxis(full, 1, -1), axis=-1)
    return FisherReport(times=times, cfi_values=mean, cfi_stderr=stderr, per_realization=per,
                        fisher_matrix=fm_mean, spreads=spreads, bases=bases, seed=master_seed,
                        labels=labels)


@dataclass
class DiagonalizationScan:
    spreads: list[int]
    ratio: np.ndarray            # raw: mean |offdiag| / mean diag
    normalized_ratio: np.ndarray  # mean |M_jk| / sqrt(M_jj M_kk)
    min_diagonal: np.ndarray      # smallest mean diagonal entry
    eta: float | None = None
    eta_stderr: float | None = None
    matrices: dict = field(default_factory=dict)


def offdiagonal_ratios(m: np.ndarray) -> tuple[float, float]:
    q = m.shape[0]
    if q < 2:
        return 0.0, 0.0
    mask = ~np.eye(q, dtype=bool)
    diag = np.diag(m)
    raw = float(np.mean(np.abs(m[mask])) / np.mean(diag))
    norm = np.abs(m) / np.sqrt(np.outer(diag, diag))
    return raw, float(np.mean(norm[mask]))


def single_state_fisher_matrices(h: ModelHamiltonian, directions, t: float, count: int,
                                 bases: int, seed: int, basis: str | None = None) -> np.ndarray:
    """Per-spread-state Fisher matrices at time t, each averaged over ``bases`` bases."""
    mats, _ = _directions(h, directions)
    spec = eig_hermitian(h)
    out = np.zeros((count, len(mats), len(mats)))
    for r in range(count):
        state = sample_spread_state(h.n, np.random.default_rng([seed, 1, r])).vector
        psi = evolve(state, spec, t)
        for k in range(bases):
            b = basis or random_basis(h.n, np.random.default_rng([seed, 2, r, k]))
            out[r] += fisher_matrix(outcome_probabilities(psi, b),
                                    probability_derivatives(state, spec, mats, t, b))
        out[r] /= bases
    return out


def diagonalization_scan(h: ModelHamiltonian, directions=None, t: float = 0.01,
                         spreads_list=(1, 2, 4, 8, 16, 32, 64, 128), bases: int = 1,
                         seed: int = 0, trials: int = 16,
                         basis: str | None = None) -> DiagonalizationScan:
    """Off-diagonal Fisher weight as the spread ensemble grows.

    For each ensemble size R the mean of R single-state Fisher matrices is
    formed ``trials`` times from disjoint draws and the ratios are averaged
    over trials. ``eta`` is the fitted decay exponent of the raw ratio.
    """
    spreads_list = sorted(int(r) for r in spreads_list)
    if spreads_list[0] < 1:
        raise ValueError("ensemble sizes must be positive")
    r_max = spreads_list[-1]
    raw, norm, mindiag = [], [], []
    means = {}
    pool = [single_state_fisher_matrices(h, directions, t, r_max, bases, seed * 1_000_003 + i, basis)
            for i in range(trials)]
    for r in spreads_list:
        rs, ns, ds = [], [], []
        for i in range(trials):
            m = pool[i][:r].mean(axis=0)
            a, b = offdiagonal_ratios(m)
            rs.append(a)
            ns.append(b)
            ds.append(np.min(np.diag(m)))
        means[r] = pool[0][:r].mean(axis=0)
        raw.append(float(np.mean(rs)))
        norm.append(float(np.mean(ns)))
        mindiag.append(float(np.mean(ds)))
    scan = DiagonalizationScan(spreads=spreads_list, ratio=np.array(raw),
                               normalized_ratio=np.array(norm), min_diagonal=np.array(mindiag),
                               matrices=means)
    if len(spreads_list) >= 3:
        slope, err, _ = loglog_slope_fit(spreads_list, raw)
        scan.eta, scan.eta_stderr = -slope, err
    return scan

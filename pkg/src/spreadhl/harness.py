"""Experiment orchestration: error-vs-total-time runs, power-law fits and sweeps."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .dataset import MeasurementDataset, atomic_write_text, generate_dataset
from .fisher_schedule import Schedule, loglog_slope_fit, predicted_exponents
from .pauli_model import ModelHamiltonian, ParameterSpec, build_model
from .recovery import RecoveryConfig, RecoveryDivergence, run_recovery

log = logging.getLogger(__name__)


def derive_seed(*key: int) -> int:
    """Stable 63-bit seed from an integer key tuple."""
    return int(np.random.SeedSequence([int(k) for k in key]).generate_state(2, np.uint64)[0] >> 1)


@dataclass
class ExperimentConfig:
    family: str = "XYZ"
    n: int = 3
    alpha: float = 1.0
    dt: float = 0.01
    m_t: int = 8
    spreads: int = 32
    bases: int = 25
    shots: int = 1
    realizations: int = 5
    seed: int = 0
    exact: bool = False
    independent: bool = False
    jobs: int = 1
    recovery: RecoveryConfig = field(default_factory=RecoveryConfig)

    def __post_init__(self):
        if isinstance(self.recovery, dict):
            self.recovery = RecoveryConfig.from_dict(self.recovery)
        if min(self.spreads, self.bases, self.shots, self.m_t, self.realizations) < 1:
            raise ValueError("spreads, bases, shots, m_t and realizations must be >= 1")
        if self.jobs < 1:
            raise ValueError("jobs must be >= 1")
        Schedule(self.dt, self.alpha, self.m_t)

    @property
    def schedule(self) -> Schedule:
        return Schedule(self.dt, self.alpha, self.m_t)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["recovery"] = self.recovery.to_dict()
        return out

    @classmethod
    def from_dict(cls, data: dict) -> ExperimentConfig:
        known = {k: v for k, v in data.items() if k in cls.__dataclass_fields__}
        return cls(**known)


PRESETS = {
    "desk": ExperimentConfig(),
    "full": ExperimentConfig(n=5, realizations=10),
}


def model_for_realization(cfg: ExperimentConfig, i: int) -> ModelHamiltonian:
    return build_model(ParameterSpec(cfg.family, cfg.n, seed=derive_seed(cfg.seed, 3, i)))


@dataclass
class ErrorPoint:
    realization: int
    m: int
    total_time: float
    epsilon: float
    ok: bool = True
    iterations: int = 0
    converged: bool = False
    message: str = ""


def recovery_vs_total_time(h_true: ModelHamiltonian, cfg: ExperimentConfig,
                           realization: int = 0) -> list[ErrorPoint]:
    """Reconstruction error after each growing prefix m = 1..m_t of the schedule.

    By default every prefix is cut from one dataset; with ``cfg.independent``
    each prefix length gets its own freshly generated experiment. A recovery
    that diverges is kept as a flagged point.
    """
    data_seed = derive_seed(cfg.seed, 4, realization)
    rec_cfg = replace(cfg.recovery, seed=derive_seed(cfg.seed, 5, realization))
    full = None
    if not cfg.independent:
        full = generate_dataset(h_true, cfg.spreads, cfg.bases, cfg.shots, cfg.schedule,
                                data_seed, exact=cfg.exact)
    points = []
    for m in range(1, cfg.m_t + 1):
        if full is not None:
            ds = full.restrict(m)
        else:
            ds = generate_dataset(h_true, cfg.spreads, cfg.bases, cfg.shots,
                                  Schedule(cfg.dt, cfg.alpha, m), derive_seed(data_seed, m),
                                  exact=cfg.exact)
        t_tot = ds.total_time
        try:
            res = run_recovery(ds, rec_cfg, h_true=h_true.matrix)
        except RecoveryDivergence as exc:
            log.warning("realization %d prefix %d diverged: %s", realization, m, exc)
            points.append(ErrorPoint(realization, m, t_tot, math.nan, ok=False, message=str(exc)))
            continue
        log.info("realization %d  m=%d  T=%.4g  eps=%.4g  iters=%d", realization, m, t_tot,
                 res.epsilon, res.iterations)
        points.append(ErrorPoint(realization, m, t_tot, res.epsilon, True, res.iterations,
                                 res.converged))
    return points


def _realization_task(args):
    cfg, i = args
    return recovery_vs_total_time(model_for_realization(cfg, i), cfg, i)


def pooled_points(cfg: ExperimentConfig) -> list[ErrorPoint]:
    """(T_tot, eps) points pooled over independent ground-truth realizations."""
    tasks = [(cfg, i) for i in range(cfg.realizations)]
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as ex:
            chunks = list(ex.map(_realization_task, tasks))
    else:
        chunks = [_realization_task(t) for t in tasks]
    return [p for chunk in chunks for p in chunk]


def fit_beta(points: list[ErrorPoint]) -> tuple[float, float, int]:
    """beta and its OLS standard error from eps ~ T_tot**(-beta) over usable points."""
    good = [p for p in points if p.ok and p.epsilon > 0 and math.isfinite(p.epsilon)]
    if len(good) < 3:
        raise ValueError(f"only {len(good)} usable points, need 3")
    slope, err, _ = loglog_slope_fit([p.total_time for p in good], [p.epsilon for p in good])
    return -slope, err, len(good)


@dataclass
class SweepCell:
    axis_value: float
    beta: float
    beta_stderr: float
    n_points: int
    status: str
    points: list[ErrorPoint]


@dataclass
class SweepResult:
    axis: str
    cells: list[SweepCell]
    realizations: int
    seed: int

    @property
    def values(self) -> list[float]:
        return [c.axis_value for c in self.cells]

    @property
    def betas(self) -> np.ndarray:
        return np.array([c.beta for c in self.cells])

    @property
    def stderrs(self) -> np.ndarray:
        return np.array([c.beta_stderr for c in self.cells])

    def cell(self, value) -> SweepCell:
        for c in self.cells:
            if math.isclose(c.axis_value, value):
                return c
        raise KeyError(value)

    def summary_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["axis_value", "beta", "beta_stderr", "n_points", "seed", "status"])
        for c in self.cells:
            w.writerow([_num(c.axis_value), _num(c.beta), _num(c.beta_stderr), c.n_points,
                        self.seed, c.status])
        return buf.getvalue()

    def points_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["axis_value", "realization", "m", "T_tot", "epsilon", "ok"])
        for c in self.cells:
            for p in c.points:
                w.writerow([_num(c.axis_value), p.realization, p.m, _num(p.total_time),
                            _num(p.epsilon), int(p.ok)])
        return buf.getvalue()

    def write(self, out_dir) -> None:
        out_dir = Path(out_dir)
        atomic_write_text(out_dir / f"sweep_{self.axis}.csv", self.summary_csv())
        atomic_write_text(out_dir / f"sweep_{self.axis}_points.csv", self.points_csv())


def _num(x) -> str:
    x = float(x)
    return "nan" if math.isnan(x) else repr(x)


def _run_cell(cfg: ExperimentConfig, value: float, out_dir, axis: str) -> SweepCell:
    points = pooled_points(cfg)
    try:
        beta, err, n_pts = fit_beta(points)
        status = "ok"
    except ValueError as exc:
        beta, err, n_pts, status = math.nan, math.nan, 0, f"failed: {exc}"
    cell = SweepCell(value, beta, err, n_pts, status, points)
    if out_dir is not None:
        single = SweepResult(axis, [cell], cfg.realizations, cfg.seed)
        atomic_write_text(Path(out_dir) / f"cell_{axis}_{value:g}.csv", single.points_csv())
    log.info("%s=%g  beta=%.4f +- %.4f  (%s)", axis, value, beta, err, status)
    return cell


def sweep_alpha(cfg: ExperimentConfig, alphas, out_dir=None) -> SweepResult:
    """Fit beta(alpha) for each scheduling exponent; one row per alpha, always."""
    cells = []
    for a in alphas:
        if not a > -1:
            raise ValueError(f"alpha={a} must exceed -1")
        cells.append(_run_cell(replace(cfg, alpha=float(a)), float(a), out_dir, "alpha"))
    result = SweepResult("alpha", cells, cfg.realizations, cfg.seed)
    if out_dir is not None:
        result.write(out_dir)
    return result


def sweep_spread(cfg: ExperimentConfig, spreads_list, out_dir=None) -> SweepResult:
    """Fit beta(R) for each spread-ensemble size at the configured alpha."""
    cells = []
    for r in spreads_list:
        if int(r) < 1:
            raise ValueError(f"spread count {r} must be >= 1")
        cells.append(_run_cell(replace(cfg, spreads=int(r)), float(r), out_dir, "spreads"))
    result = SweepResult("spreads", cells, cfg.realizations, cfg.seed)
    if out_dir is not None:
        result.write(out_dir)
    return result


def predict(alpha: float, gamma0: float = 2.0) -> str:
    law = predicted_exponents(alpha, gamma0)
    return json.dumps({"alpha": law.alpha, "gamma0": law.gamma0, "p": law.p, "beta": law.beta})


def load_dataset(path) -> MeasurementDataset:
    return MeasurementDataset.load(path)

"""The nine acceptance criteria, each printing one PASS/FAIL line.

Criteria 7 and 8 run the desk preset (3 qubits, 5 realizations, R=32, K=25,
S=1, m_t=8, seed 0) and take several minutes on one core.
"""

import math
import time

import numpy as np
import pytest
from scipy.stats import chisquare

from conftest import ACCEPTANCE_LINES
from spreadhl.dataset import MeasurementDataset, generate_dataset, regenerate
from spreadhl.fisher_schedule import (
    Schedule,
    classical_fisher,
    diagonalization_scan,
    empirical_cumulative_exponent,
    ensemble_cfi_curve,
    local_cumulative_exponent,
    loglog_slope_fit,
    predicted_exponents,
)
from spreadhl.harness import PRESETS, derive_seed, sweep_alpha, sweep_spread
from spreadhl.oracle import fd_loss_gradient
from spreadhl.pauli_model import ModelHamiltonian, ParameterSpec, build_model, string_matrix, term_generators
from spreadhl.quantum_sim import (
    eig_hermitian,
    evolve,
    outcome_probabilities,
    probability_derivatives,
    random_basis,
    sample_spread_state,
)
from spreadhl.recovery import EmbeddingNet, loss_gradient


def report(number, title, ok, detail, started):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title} | {detail} | {time.time() - started:.1f}s"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def test_criterion_1_closed_form_fisher():
    t0 = time.time()
    plus = np.array([1, 1], dtype=complex) / np.sqrt(2)
    worst = 0.0
    for theta in (0.1, 0.7):
        h = ModelHamiltonian(1, ((theta, "Z"),))
        spec = eig_hermitian(h)
        for t in (0.01, 0.1, 1.0):
            p = outcome_probabilities(evolve(plus, spec, t), "X")
            # oracle: p0 = cos^2(theta t) gives F = 4 t^2
            assert p[0] == pytest.approx(math.cos(theta * t) ** 2, rel=1e-12)
            dp = probability_derivatives(plus, spec, [string_matrix("Z")], t, "X")[:, 0]
            worst = max(worst, abs(classical_fisher(p, dp) - 4 * t * t) / (4 * t * t))
    report(1, "closed-form Fisher 4t^2", worst < 1e-8 and time.time() - t0 < 1,
           f"max rel err {worst:.2e}", t0)


def test_criterion_2_short_time_fisher_scaling():
    t0 = time.time()
    h = build_model(ParameterSpec("XYZ", 4, seed=derive_seed(0, 3, 0)))
    times = np.geomspace(1e-3, 3e-2, 10)
    rep = ensemble_cfi_curve(h, None, times, 64, 16, master_seed=0)
    slope, err, _ = loglog_slope_fit(times, rep.cfi_values)
    report(2, "ensemble CFI slope", abs(slope - 2.0) <= 0.15 and time.time() - t0 < 120,
           f"slope {slope:.4f} +- {err:.1e}", t0)


def test_criterion_3_cumulative_exponent():
    t0 = time.time()
    details, ok = [], True
    for alpha in (0.0, 0.5, 1.0, 2.0):
        p = predicted_exponents(alpha, 2.0).p
        p_eff = empirical_cumulative_exponent(Schedule(0.01, alpha, 64), 2.0,
                                              m_values=[64, 128, 256, 512])
        scaled = [abs(local_cumulative_exponent(0.01, alpha, 2.0, m) - p) * m
                  for m in (64, 128, 256, 512)]
        c = scaled[0]
        ok &= abs(p_eff - p) <= 0.01 and all(s <= c + 1e-12 for s in scaled)
        details.append(f"a={alpha:g}: {p_eff:.4f} vs {p:.4f}, c={c:.2e}")
    report(3, "cumulative exponent", ok and time.time() - t0 < 1, "; ".join(details), t0)


def test_criterion_4_gradient_check():
    t0 = time.time()
    h = build_model(ParameterSpec("XYZ", 2, seed=3))
    ds = generate_dataset(h, 5, 2, 1, Schedule(0.05, 1.0, 2), master_seed=3)
    assert len(ds) == 20
    net = EmbeddingNet.initialize(4, (8, 16), np.random.default_rng(1))
    analytic = loss_gradient(net, ds)
    numeric = fd_loss_gradient(net, ds, step=1e-6)
    err = max(np.max(np.abs(a - b)) for a, b in zip(analytic, numeric))
    scale = max(np.max(np.abs(b)) for b in numeric)
    report(4, "loss gradient vs finite differences",
           err / scale < 1e-5 and time.time() - t0 < 30, f"rel err {err / scale:.2e}", t0)


def test_criterion_5_fisher_diagonalization():
    t0 = time.time()
    h = build_model(ParameterSpec("XYZ", 2, seed=derive_seed(0, 3, 0)))
    scan = diagonalization_scan(h, t=0.01, spreads_list=(1, 2, 4, 8, 16, 32, 64, 128), seed=0)
    rho1, rho128 = scan.ratio[0], scan.ratio[-1]
    ok = rho128 <= rho1 / 3 and 0.3 <= scan.eta <= 0.7 and time.time() - t0 < 120
    report(5, "off-diagonal Fisher decay", ok,
           f"rho(1)={rho1:.4f} rho(128)={rho128:.4f} eta={scan.eta:.3f}+-{scan.eta_stderr:.3f}", t0)


def test_criterion_6_generic_sensitivity():
    t0 = time.time()
    h = build_model(ParameterSpec("XYZ", 3, seed=derive_seed(0, 3, 0)))
    gens = [g for g, _ in term_generators(h)]
    spec = eig_hermitian(h)
    sensitive = 0
    for r in range(100):
        psi = sample_spread_state(3, np.random.default_rng([0, 1, r])).vector
        basis = random_basis(3, np.random.default_rng([0, 2, r, 0]))
        d = probability_derivatives(psi, spec, gens, 0.01, basis)
        sensitive += bool(np.all(np.max(np.abs(d), axis=0) > 1e-9))
    report(6, "every direction visible", sensitive >= 99 and time.time() - t0 < 60,
           f"{sensitive}/100 states", t0)


@pytest.fixture(scope="module")
def desk_alpha_sweep():
    t0 = time.time()
    return sweep_alpha(PRESETS["desk"], [0.3, 1.0]), t0


@pytest.mark.slow
def test_criterion_7_desk_alpha_sweep(desk_alpha_sweep):
    res, t0 = desk_alpha_sweep
    lo, hi = res.cell(0.3), res.cell(1.0)
    ok = 0.50 <= hi.beta <= 0.80 and hi.beta > lo.beta and time.time() - t0 <= 3600
    report(7, "desk beta(alpha)", ok,
           f"beta(1.0)={hi.beta:.3f}+-{hi.beta_stderr:.3f} beta(0.3)={lo.beta:.3f}+-{lo.beta_stderr:.3f}",
           t0)


@pytest.mark.slow
def test_criterion_8_desk_spread_sweep(desk_alpha_sweep):
    t0 = time.time()
    cfg = PRESETS["desk"]
    assert cfg.alpha == 1.0 and cfg.spreads == 32
    res = sweep_spread(cfg, [1, 4, 16])
    cells = res.cells + [desk_alpha_sweep[0].cell(1.0)]  # R=32 at alpha=1 is the same run
    betas = [c.beta for c in cells]
    errs = [c.beta_stderr for c in cells]
    trend = all(b2 >= b1 - math.hypot(e1, e2)
                for b1, b2, e1, e2 in zip(betas, betas[1:], errs, errs[1:]))
    gap = betas[-1] - betas[0]
    ok = trend and gap > 0.3 and time.time() - t0 <= 5400
    detail = " ".join(f"R={r}:{c.beta:.3f}+-{c.beta_stderr:.3f}"
                      for r, c in zip((1, 4, 16, 32), cells))
    report(8, "desk beta(R) trend", ok, f"{detail} gap={gap:.3f}", t0)


def test_criterion_9_determinism_and_sampling(tmp_path):
    t0 = time.time()
    h = build_model(ParameterSpec("XYZ", 3, seed=derive_seed(0, 3, 0)))
    ds = generate_dataset(h, 32, 25, 1, Schedule(0.01, 1.0, 8), master_seed=derive_seed(0, 4, 0))
    ds.save(tmp_path / "orig.json")
    regenerate(MeasurementDataset.load(tmp_path / "orig.json")).save(tmp_path / "again.json")
    identical = (tmp_path / "orig.json").read_bytes() == (tmp_path / "again.json").read_bytes()

    cell = generate_dataset(h, 1, 1, 10_000, Schedule(0.01, 1.0, 1), master_seed=11)
    psi = evolve(cell.compiled().states[0], eig_hermitian(h), 0.01)
    probs = outcome_probabilities(psi, cell.metadata["bases"][0])
    counts = np.bincount([int(rec[4], 2) for rec in cell.records], minlength=8)
    keep = probs * 10_000 >= 5  # pool outcomes too rare for the chi-square approximation
    observed = np.append(counts[keep], counts[~keep].sum())
    expected = np.append(probs[keep], probs[~keep].sum()) * 10_000
    if expected[-1] == 0:
        observed, expected = observed[:-1], expected[:-1]
    pvalue = chisquare(observed, expected * observed.sum() / expected.sum()).pvalue
    report(9, "byte-identical regeneration and chi-square",
           identical and pvalue > 0.01 and time.time() - t0 < 60,
           f"identical={identical} p={pvalue:.3f}", t0)

"""Acceptance criteria 1-11, each at its stated tolerance.

Run ``pytest tests/test_acceptance.py`` (a ``criterion N: PASS/FAIL`` line
is printed per criterion in the terminal summary) or execute this file
directly.
"""

import os
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pandas as pd
import pytest
from helpers import brute_force_max_tree, tau_standard_error
from scipy import stats

from vinedep import rvine
from vinedep.bicop import CopulaSpec, cdf, sample, tail_dependence, tau_quadrature, theoretical_tau
from vinedep.dependence import kendall_tau, tau_matrix
from vinedep.dynamics import box_ljung_pvalue, dominant_schedule, fit_granger, periodogram, wald_granger_pvalue
from vinedep.gof import white_test
from vinedep.marginals import ks_uniform_pvalue, pit_transform
from vinedep.rvine import (
    refit_parameters,
    select_first_tree,
    structure_from_first_tree,
    vine_from_specs,
    vine_simulate,
)
from vinedep.select import fit_bicop_mle


def test_criterion_01_table_closed_forms():
    start = time.perf_counter()
    checks = [
        (theoretical_tau(CopulaSpec("Clayton", 0, (0.26,))), 0.115),
        (tail_dependence(CopulaSpec("Clayton", 0, (0.26,))).lambda_lower, 0.070),
        (theoretical_tau(CopulaSpec("Clayton", 0, (0.3,))), 0.130),
        (theoretical_tau(CopulaSpec("Gumbel", 0, (1.21,))), 0.174),
        (tail_dependence(CopulaSpec("Gumbel", 0, (1.21,))).lambda_upper, 0.226),
        (tail_dependence(CopulaSpec("Joe", 0, (2.82,))).lambda_upper, 0.721),
        (tail_dependence(CopulaSpec("Joe", 0, (1.98,))).lambda_upper, 0.581),
        (theoretical_tau(CopulaSpec("Gaussian", 0, (0.06,))), 0.038),
        (theoretical_tau(CopulaSpec("Frank", 0, (1.80,))), 0.194),
    ]
    t = tail_dependence(CopulaSpec("Student t", 0, (0.0051, 9.92)))
    checks += [(t.lambda_lower, 0.0073), (t.lambda_upper, 0.0073)]
    elapsed = time.perf_counter() - start
    for got, expected in checks:
        assert got == pytest.approx(expected, abs=0.01)
    # two-decimal rounding of the same quantities
    assert theoretical_tau(CopulaSpec("Clayton", 0, (0.26,))) == pytest.approx(0.12, abs=0.01)
    assert theoretical_tau(CopulaSpec("Gaussian", 0, (0.06,))) == pytest.approx(0.037, abs=0.01)
    assert elapsed < 1.0


def test_criterion_02_tau_quadrature():
    start = time.perf_counter()
    points = {
        "Clayton": [0.26, 0.3, 1.0, 2.0, 5.0],
        "Gumbel": [1.21, 1.5, 2.0, 3.0, 6.0],
        "Frank": [-5.0, 1.8, 4.0, 8.0, 15.0],
        "Gaussian": [-0.7, 0.06, 0.3, 0.6, 0.9],
    }
    for family, params in points.items():
        for p in params:
            spec = CopulaSpec(family, 0, (p,))
            assert tau_quadrature(spec) == pytest.approx(theoretical_tau(spec), abs=1e-3), spec
    assert time.perf_counter() - start < 10.0


TAIL_POINTS = [
    CopulaSpec("Independence"),
    CopulaSpec("Gaussian", 0, (0.06,)),
    CopulaSpec("Student t", 0, (0.5, 4.0)),
    CopulaSpec("Clayton", 0, (2.0,)),
    CopulaSpec("Clayton", 180, (2.0,)),
    CopulaSpec("Gumbel", 0, (1.21,)),
    CopulaSpec("Gumbel", 0, (2.0,)),
    CopulaSpec("Frank", 0, (1.8,)),
    CopulaSpec("Joe", 0, (2.82,)),
    CopulaSpec("Joe", 0, (1.98,)),
    CopulaSpec("BB7", 0, (2.0, 1.5)),
    CopulaSpec("BB8", 0, (4.4, 0.98)),
    CopulaSpec("Tawn", 0, (1.3, 0.33)),
    CopulaSpec("Tawn", 0, (2.0, 0.5)),
]


def test_criterion_03_numeric_upper_tail():
    u = 1 - 1e-6
    for spec in TAIL_POINTS:
        numeric = (1 - 2 * u + cdf(spec, u, u)) / (1 - u)
        assert numeric == pytest.approx(tail_dependence(spec).lambda_upper, abs=1e-3), spec


def test_criterion_04_parameter_recovery():
    start = time.perf_counter()
    truths = [
        CopulaSpec("Gaussian", 0, (0.5,)),
        CopulaSpec("Clayton", 0, (2.0,)),
        CopulaSpec("Gumbel", 0, (1.5,)),
        CopulaSpec("Frank", 0, (5.0,)),
        CopulaSpec("Joe", 0, (2.0,)),
    ]
    for spec in truths:
        hits = 0
        for seed in range(10):
            x = sample(spec, 5000, seed=seed)
            fit = fit_bicop_mle(x[:, 0], x[:, 1], spec.family, spec.rotation)
            hits += abs(theoretical_tau(fit.spec) - theoretical_tau(spec)) <= 0.02
        assert hits >= 9, spec
    assert time.perf_counter() - start < 60.0


def planted_vine(first_edges):
    structure = structure_from_first_tree(4, first_edges)
    specs = [
        CopulaSpec("Gaussian", 0, (float(np.sin(np.pi * (0.6 if e.level == 1 else 0.1) / 2)),))
        for e in structure.edges
    ]
    return vine_from_specs(structure, specs)


def test_criterion_05_structure_recovery():
    start = time.perf_counter()
    planted = {"star": [(0, 1), (0, 2), (0, 3)], "path": [(0, 1), (1, 2), (2, 3)]}
    for name, first in planted.items():
        vine = planted_vine(first)
        hits = 0
        for seed in range(100):
            u = vine_simulate(vine, 500, seed=seed)
            tree = select_first_tree(tau_matrix(u))
            hits += sorted(e.conditioned for e in tree.edges) == sorted(first)
        assert hits >= 95, name
    rng = np.random.default_rng(2024)
    for d in (2, 3, 4, 5):
        for _ in range(100):
            a = rng.uniform(-1, 1, (d, d))
            taus = (a + a.T) / 2
            np.fill_diagonal(taus, 1.0)
            tree = select_first_tree(taus)
            best, _ = brute_force_max_tree(taus - np.eye(d))
            assert sorted(e.conditioned for e in tree.edges) == best
    assert time.perf_counter() - start < 60.0


def test_criterion_06_simulation_fidelity():
    start = time.perf_counter()
    structure = structure_from_first_tree(4, [(0, 1), (1, 2), (1, 3)])
    specs = dict(
        zip(
            structure.edges,
            [
                CopulaSpec("Clayton", 0, (2.0,)),
                CopulaSpec("Gumbel", 0, (1.5,)),
                CopulaSpec("Frank", 0, (-4.0,)),
                CopulaSpec("Joe", 180, (1.6,)),
                CopulaSpec("Gaussian", 0, (-0.3,)),
                CopulaSpec("Tawn", 0, (2.0, 0.6)),
            ],
        )
    )
    vine = vine_from_specs(structure, specs)
    u = vine_simulate(vine, 10_000, seed=7)
    # conditional pseudo-observations through the true model reach every edge
    cond = rvine._base_cond(u)
    for tree in structure.trees:
        for e in tree.edges:
            a, b = rvine._edge_inputs(e, cond)
            se = tau_standard_error(specs[e], a, b)
            assert abs(kendall_tau(a, b) - vine.edge_taus[e]) < 3 * se, e.label()
            rvine._push_h(e, specs[e], a, b, cond)
    assert time.perf_counter() - start < 30.0


def test_criterion_07_white_test_size():
    start = time.perf_counter()
    structure = structure_from_first_tree(3, [(0, 1), (1, 2)])
    truth = vine_from_specs(
        structure,
        [CopulaSpec("Clayton", 0, (1.5,)), CopulaSpec("Gumbel", 0, (1.6,)), CopulaSpec("Frank", 0, (2.0,))],
    )
    rejections = 0
    runs = 50
    for run in range(runs):
        u = vine_simulate(truth, 1000, seed=10_000 + run)
        fitted = refit_parameters(truth, u)
        rejections += white_test(fitted, u, n_bootstrap=100, seed=run).p_value < 0.05
    rate = rejections / runs
    print(f"White test rejection rate {rate:.3f} over {runs} runs")
    assert 0.02 <= rate <= 0.10
    assert time.perf_counter() - start < 600.0


def test_criterion_08_ks_uniformity():
    passes = 0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        raw = stats.t.rvs(1.5, size=(6000, 2), random_state=rng)
        u = pit_transform(raw)
        passes += all(ks_uniform_pvalue(u.column(j)) > 0.05 for j in range(2))
    assert passes >= 90


def simulate_sv(rng, t, b1, a1=0.3, burn=100):
    n = t + burn
    v = rng.normal(size=n)
    e = rng.normal(size=n)
    s = np.zeros(n)
    for k in range(1, n):
        s[k] = a1 * s[k - 1] + b1 * v[k - 1] + e[k]
    return s[burn:], v[burn:]


def test_criterion_09_granger_calibration():
    start = time.perf_counter()
    rng = np.random.default_rng(9)
    size = np.mean([wald_granger_pvalue(fit_granger(*simulate_sv(rng, 500, 0.0))) < 0.05 for _ in range(200)])
    power = np.mean([wald_granger_pvalue(fit_granger(*simulate_sv(rng, 500, 0.4))) < 0.05 for _ in range(200)])
    lb_white = np.mean([box_ljung_pvalue(rng.normal(size=1000), 10) < 0.05 for _ in range(200)])
    lb_model = np.mean(
        [box_ljung_pvalue(fit_granger(*simulate_sv(rng, 1000, 0.4)).residuals, 10, 3) < 0.05 for _ in range(200)]
    )
    print(f"Wald size {size:.3f}, power {power:.3f}; Box-Ljung size {lb_white:.3f} (noise), {lb_model:.3f} (residuals)")
    assert abs(size - 0.05) <= 0.03
    assert power >= 0.90
    assert 0.02 <= lb_white <= 0.09
    assert 0.02 <= lb_model <= 0.09
    assert time.perf_counter() - start < 60.0


def test_criterion_10_periodicity():
    x = np.zeros(364, dtype=int)
    x[::7] = 1
    ok, period, ratio = dominant_schedule(*periodogram(x))
    assert ok and ratio > 2 and period == 7.0
    rng = np.random.default_rng(10)
    hits = sum(dominant_schedule(*periodogram(rng.integers(0, 2, 364)))[0] for _ in range(100))
    assert hits <= 10


def run_pipeline(data, out, seed):
    env = dict(os.environ, PYTHONHASHSEED=str(seed * 7 + 1))
    cmd = [sys.executable, "-m", "vinedep.cli"]
    steps = [
        ["fit", "--input", str(data), "--output-dir", str(out), "--seed", "5"],
        ["simulate", "--model", str(out / "model.json"), "--n", "300", "--seed", "5", "--output-dir", str(out)],
        ["gof", "--model", str(out / "model.json"), "--input", str(data), "--bootstrap", "20", "--seed", "5",
         "--output-dir", str(out)],
    ]
    for step in steps:
        subprocess.run(cmd + step, check=True, env=env, capture_output=True)
    return {p.name: p.read_bytes() for p in sorted(Path(out).iterdir())}


def test_criterion_11_determinism(tmp_path):
    structure = structure_from_first_tree(3, [(0, 1), (0, 2)])
    vine = vine_from_specs(
        structure, [CopulaSpec("Gumbel", 0, (1.7,)), CopulaSpec("Clayton", 0, (1.2,)), CopulaSpec("Frank", 0, (1.5,))]
    )
    u = vine_simulate(vine, 400, seed=3)
    data = tmp_path / "data.csv"
    pd.DataFrame(stats.expon.ppf(u), columns=["a", "b", "c"]).to_csv(data, index=False)
    first = run_pipeline(data, tmp_path / "run1", 1)
    second = run_pipeline(data, tmp_path / "run2", 2)
    assert set(first) >= {"model.json", "report.csv", "simulated.csv", "gof.json", "tree_1.dot"}
    assert first == second


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s"]))

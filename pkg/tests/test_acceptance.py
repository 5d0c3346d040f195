"""Acceptance gate: one test per numbered contract criterion.

Every test prints a single "[criterion NN] PASS/FAIL: ..." line before its
assertion, so `pytest tests/test_acceptance.py -s -v` shows the whole
scorecard (without -s, pytest only echoes the lines of failing tests).
The tolerances and floors asserted here are contract values, not
calibration knobs; a failing criterion is reported, never weakened.

Runtime is dominated by the session fixtures: the 20-system Monte Carlo
study and the pendulum case study together take on the order of an hour
on one core.
"""

import json

import numpy as np
import pytest

from ltpid import (EstimatorSpec, GridSpec, IdentDataset, Method,
                   MonteCarloSpec, PendulumSpec, Regularizer, SolverConfig,
                   atom_regressors, build_atom_responses, build_pole_grid,
                   build_tag_regressions, case_study_gamma_grid,
                   estimated_orders, fit_metric, group_kkt_residuals,
                   hankel_adjoint, hankel_admm_tag, hankel_matrix,
                   hankel_nuclear_norm_of_atom, identify, is_stable,
                   kill_zone_gamma, order_sweep, pendulum_dataset,
                   random_ltp_bank, run_monte_carlo, simulate,
                   solve_prox_grad, true_impulse_response)
from ltpid.cli import main as cli_main

from conftest import make_random_system


def verdict(number, ok, detail):
    print(f"[criterion {number:02d}] {'PASS' if ok else 'FAIL'}: {detail}",
          flush=True)
    return ok


# -- shared heavy artifacts ----------------------------------------------------

@pytest.fixture(scope="session")
def mc_study():
    """The 20-system, two-noise-level study at package defaults."""
    return run_monte_carlo(MonteCarloSpec())


@pytest.fixture(scope="session")
def pendulum_case():
    """Case-study pendulum data, GAtom fit, and the 100-point order sweep.

    The near-unit-circle pendulum dynamics make the small-gamma solves
    slow, so the solver budget is raised far above the default; the
    criteria below must measure properties of the converged estimates,
    not solver truncation artifacts.
    """
    data, truth = pendulum_dataset(PendulumSpec(), seed=20260817)
    spec = EstimatorSpec(method=Method.GATOM,
                         solver=SolverConfig(max_iters=200000, tol=1e-10))
    report = identify(data, spec)
    orders = order_sweep(data, spec, case_study_gamma_grid())
    return {"truth": truth, "report": report, "orders": orders}


@pytest.fixture(scope="session")
def gatom_instances():
    """Ten random noisy fitting problems over a reduced pole dictionary."""
    grid = build_pole_grid(GridSpec(
        radii=(0.3, 0.5, 0.7, 0.85),
        angles=(0.0, 0.6, 1.2, 1.8, 2.4, float(np.pi)), n_taps=100))
    atoms = build_atom_responses(grid, 100)
    weights = np.where(grid.is_complex, 2.0, 1.0)
    bank = random_ltp_bank(MonteCarloSpec(n_systems=10, order_range=(2, 6)))
    instances = []
    for i, system in enumerate(bank):
        rng = np.random.default_rng([777, i])
        u = rng.standard_normal(400)
        z = simulate(system, u) + 0.1 * rng.standard_normal(400)
        data = IdentDataset(period=2, u=u, z=z)
        problem = atom_regressors(build_tag_regressions(data, 100), atoms)
        instances.append((problem, weights))
    return instances


TIGHT = SolverConfig(max_iters=60000, tol=1e-14)


# -- criteria ------------------------------------------------------------------

def test_c01_atom_hankel_normalization():
    grid = build_pole_grid(GridSpec.reference())
    poles = grid.poles[np.abs(grid.poles) <= 0.98 + 1e-12]
    norms = np.array([hankel_nuclear_norm_of_atom(w, 100, 20)
                      for w in poles])
    dev = np.abs(norms - 1.0)
    n_out = int(np.sum(dev > 1e-3))
    worst = int(dev.argmax())
    ok = n_out == 0
    assert verdict(
        1, ok,
        f"{poles.size} grid poles with |w| <= 0.98, {n_out} outside "
        f"1 +/- 1e-3; worst deviation {dev.max():.4f} at "
        f"|w| = {abs(poles[worst]):.3f}")


def test_c02_impulse_oracle_equivalence():
    rng = np.random.default_rng(20260817)
    worst = 0.0
    for _ in range(50):
        period = int(rng.integers(1, 5))
        nx = int(rng.integers(1, 6))
        system = make_random_system(rng, period, nx)
        fast = true_impulse_response(system, 100).values
        slow = np.zeros_like(fast)
        for s in range(1, period + 1):
            u = np.zeros(s + 100)
            u[s - 1] = 1.0
            y = simulate(system, u)
            for i in range(1, 101):
                tau = (s + i - 1) % period + 1
                slow[i - 1, tau - 1] = y[s + i - 1]
        worst = max(worst, float(np.max(np.abs(fast - slow))))
    ok = worst <= 1e-12
    assert verdict(
        2, ok, f"50 random systems (nx <= 5, P <= 4), max deviation "
        f"between direct and simulated impulse response {worst:.3e}")


def test_c03_noise_free_ls_recovery():
    bank = random_ltp_bank(MonteCarloSpec(n_systems=10))
    scores = []
    for i, system in enumerate(bank):
        rng = np.random.default_rng([20260817, 1, i])
        u = rng.standard_normal(500)
        data = IdentDataset(period=2, u=u, z=simulate(system, u))
        report = identify(data, EstimatorSpec(method=Method.LS))
        truth = true_impulse_response(system, 100)
        scores.append(fit_metric(truth, report.impulse, "LS").score)
    low = min(scores)
    ok = low >= 99.0
    assert verdict(
        3, ok, f"noise-free LS on 10 bank systems (P=2, 500 samples): "
        f"lowest W = {low:.3f} (floor 99)")


def test_c04_gatom_kkt_certificate(gatom_instances):
    worst = 0.0
    for problem, weights in gatom_instances:
        kill = kill_zone_gamma(problem, Regularizer.GROUP_ROWS, weights)
        for frac in (0.02, 0.1, 0.5):
            gamma = frac * kill
            res = solve_prox_grad(problem, gamma, Regularizer.GROUP_ROWS,
                                  weights, config=TIGHT)
            resid = group_kkt_residuals(problem, res.solution, gamma,
                                        Regularizer.GROUP_ROWS, weights)
            worst = max(worst, float((resid / (gamma * weights)).max()))
    ok = worst <= 1e-4
    assert verdict(
        4, ok, f"10 instances x 3 gammas: worst group stationarity "
        f"residual {worst:.2e} relative to gamma*weight (tolerance 1e-4)")


def test_c05_gamma_limit_behavior():
    # The gamma=0 comparison needs a dictionary whose unregularized least
    # squares problem is well posed: real poles contribute an identically
    # zero beta column, and tightly spaced atoms are near collinear, which
    # blows up the minimum-norm coefficients beyond what a first order
    # method can reach. Well separated poles keep the design conditioning
    # near 1e4 and the limit check meaningful.
    grid = build_pole_grid(GridSpec(radii=(0.3, 0.6),
                                    angles=(0.0, 1.0, 2.0, float(np.pi)),
                                    n_taps=100))
    atoms = build_atom_responses(grid, 100)
    weights = np.where(grid.is_complex, 2.0, 1.0)
    bank = random_ltp_bank(MonteCarloSpec(n_systems=3, order_range=(2, 6)))
    deep = SolverConfig(max_iters=500000, tol=1e-16)
    worst_rel = 0.0
    all_zero = True
    for i, system in enumerate(bank):
        rng = np.random.default_rng([777, i])
        u = rng.standard_normal(400)
        z = simulate(system, u) + 0.1 * rng.standard_normal(400)
        data = IdentDataset(period=2, u=u, z=z)
        problem = atom_regressors(build_tag_regressions(data, 100), atoms)
        res0 = solve_prox_grad(problem, 0.0, Regularizer.GROUP_ROWS,
                               weights, config=deep)
        f0 = problem.objective(res0.solution)
        f_star = 0.0
        for reg in problem.regressions:
            design = reg.phi @ problem.basis
            coef, *_ = np.linalg.lstsq(design, reg.targets, rcond=None)
            r = reg.targets - design @ coef
            f_star += float(r @ r)
        worst_rel = max(worst_rel, abs(f0 - f_star) / f_star)
        kill = kill_zone_gamma(problem, Regularizer.GROUP_ROWS, weights)
        res_hi = solve_prox_grad(problem, 1.01 * kill,
                                 Regularizer.GROUP_ROWS, weights,
                                 config=TIGHT)
        all_zero = all_zero and not np.any(res_hi.solution)
    ok = worst_rel <= 1e-6 and all_zero
    assert verdict(
        5, ok, f"gamma=0 objective within {worst_rel:.2e} of dictionary "
        f"least squares (tolerance 1e-6); kill-zone solutions exactly "
        f"zero: {all_zero}")


def test_c06_gatom_uniform_orders_on_sweep(pendulum_case):
    orders = pendulum_case["orders"]
    solved = bool((orders >= 0).all())
    mismatch = np.nonzero((orders != orders[:, :1]).any(axis=1))[0]
    ok = solved and mismatch.size == 0
    assert verdict(
        6, ok, f"GAtom order vectors on the {orders.shape[0]}-point "
        f"case-study sweep: {mismatch.size} non-uniform "
        f"(rows {mismatch[:5].tolist()}{'...' if mismatch.size > 5 else ''}), "
        f"all solved: {solved}")


def _medians(stats, sigma2):
    out = {}
    for method in stats.methods:
        scores = stats.scores(method, sigma2)
        entry = stats.summarize(scores)
        out[method] = (entry["median"], entry["count"])
    return out


def test_c07_monte_carlo_ordering_high_noise(mc_study):
    med = _medians(mc_study, 0.1)
    complete = all(count == mc_study.n_systems for _, count in med.values())
    ls, atom, gatom = (med["LS"][0], med["Atom"][0], med["GAtom"][0])
    ok = (complete and gatom > atom > ls and ls < 0.0 and gatom >= 40.0)
    assert verdict(
        7, ok, f"sigma2=0.1 medians: GAtom {gatom:.1f}, Atom {atom:.1f}, "
        f"Hank {med['Hank'][0]:.1f}, LS {ls:.1f} "
        f"(need GAtom > Atom > LS, LS < 0, GAtom >= 40; "
        f"complete cells: {complete})")


def test_c08_monte_carlo_low_noise_floor(mc_study):
    med = _medians(mc_study, 0.01)
    complete = all(count == mc_study.n_systems for _, count in med.values())
    regs = {m: med[m][0] for m in ("Hank", "Atom", "GAtom")}
    ok = complete and all(v >= 60.0 for v in regs.values())
    assert verdict(
        8, ok, f"sigma2=0.01 medians: " +
        ", ".join(f"{m} {v:.1f}" for m, v in regs.items()) +
        f" (floor 60 for every regularized method; complete cells: "
        f"{complete})")


def test_c09_hankel_admm_validity():
    rng = np.random.default_rng(909)
    worst_adj = 0.0
    for _ in range(20):
        m = int(rng.integers(2, 30))
        n = int(rng.integers(m, 120))
        g = rng.standard_normal(n)
        mat = rng.standard_normal((m, n - m + 1))
        lhs = float(np.sum(hankel_matrix(g, m) * mat))
        rhs = float(g @ hankel_adjoint(mat, n))
        worst_adj = max(worst_adj, abs(lhs - rhs) / max(1.0, abs(lhs)))
    adjoint_ok = worst_adj <= 1e-12

    config = SolverConfig(admm_max_iters=50000, tol=1e-9)
    worst_resid = 0.0
    all_converged = True
    taps = np.arange(100)
    for i in range(10):
        phi = rng.standard_normal((200, 100))
        g_true = (0.8 ** taps) * np.cos(0.9 * taps + i)
        targets = phi @ g_true + 0.05 * rng.standard_normal(200)
        res = hankel_admm_tag(phi, targets, penalty_weight=2.0,
                              hankel_rows=20, config=config)
        all_converged = all_converged and res.converged
        worst_resid = max(worst_resid, res.info["primal_residual"],
                          res.info["dual_residual"])
    resid_ok = all_converged and worst_resid < 1e-6

    phi = rng.standard_normal((200, 100))
    targets = phi @ g_true + 0.05 * rng.standard_normal(200)
    ranks = []
    state = None
    for gamma in (0.1, 0.5, 2.0, 8.0, 32.0):
        res = hankel_admm_tag(phi, targets, penalty_weight=gamma,
                              hankel_rows=20, config=config,
                              warm_start=state)
        state = res.info["state"]
        svals = np.linalg.svd(hankel_matrix(res.solution, 20),
                              compute_uv=False)
        ranks.append(int(np.sum(svals > 1e-6 * max(svals[0], 1e-300))))
    rank_ok = all(a >= b for a, b in zip(ranks, ranks[1:]))

    ok = adjoint_ok and resid_ok and rank_ok
    assert verdict(
        9, ok, f"adjoint identity {worst_adj:.1e} (tol 1e-12); worst "
        f"converged residual {worst_resid:.1e} over 10 instances "
        f"(tol 1e-6, all converged: {all_converged}); Hankel ranks along "
        f"ascending gamma {ranks} non-increasing: {rank_ok}")


def test_c10_pendulum_pipeline(pendulum_case):
    rho = is_stable(pendulum_case["truth"]).spectral_radius
    report = pendulum_case["report"]
    truth = true_impulse_response(pendulum_case["truth"], report.n_taps)
    score = fit_metric(truth, report.impulse, "GAtom",
                       gamma_selected=report.gamma_star).score
    orders = estimated_orders(report, 1e-4)
    uniform = len(set(orders.tolist())) == 1
    ok = rho < 1.0 and score >= 80.0 and uniform
    assert verdict(
        10, ok, f"pendulum truth spectral radius {rho:.12f} (< 1); "
        f"GAtom W = {score:.2f} (floor 80) at gamma* = "
        f"{report.gamma_star:.3f}; order vector {orders.tolist()} "
        f"uniform: {uniform}")


def test_c11_cli_reproducibility(tmp_path):
    config = {
        "n_systems": 3, "P": 2, "nP": 200, "noise_sigma2": [0.01],
        "seed": 7,
        "methods": [
            {"method": "LS"},
            {"method": "GAtom", "gamma_grid": [0.5, 2.0],
             "grid": {"radii": [0.3, 0.6, 0.85],
                      "angles": [0.0, 0.9, 1.8, 2.7]}}]}
    path = tmp_path / "mc.json"
    path.write_text(json.dumps(config))
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        code = cli_main(["montecarlo", "--config", str(path),
                         "--out", str(out)])
        assert code == 0
        outs.append((out / "mc_raw.csv").read_bytes())
    ok = outs[0] == outs[1]
    assert verdict(
        11, ok, f"two montecarlo runs with one seed produced "
        f"{'identical' if ok else 'DIFFERENT'} mc_raw.csv "
        f"({len(outs[0])} bytes)")

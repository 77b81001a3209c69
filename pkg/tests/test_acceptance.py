"""Acceptance criteria, one test per criterion.

Each test records a single pass/fail line (shown in the terminal summary)
and then asserts the same condition.
"""

import time

import numpy as np

from helpers import (rc_circuit, two_branch_admittance, two_branch_text, lumped_dc_impedance,
                     non_monotone_systems, oscillator, random_psd_gain, random_relaxation,
                     random_sp_network)
from relaxsys.analysis import (Step, close_loop, default_horizon, simulate, step_cost_limit,
                               step_limit_costs, worst_case_identity)
from relaxsys.netlab import (LsqCircuit, build_model, dual_controller, lsq_solve, parse_netlist,
                             port_admittance, port_resistance)
from relaxsys.realization import transfer_eval
from relaxsys.relaxation import check_relaxation, monotonicity_probe
from relaxsys.synthesis import lemma_lb, synth_p1, synth_p2, verify_static_optimality


def rel(a, b):
    return abs(a - b) / abs(b)


def test_criterion_1_rc_closed_forms(acceptance):
    rng = np.random.default_rng(101)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(20):
        R, C, alpha = rng.uniform(0.1, 10.0, size=3)
        ss = rc_circuit(R, C)
        cert = check_relaxation(ss)
        worst = max(worst,
                    rel(synth_p1(ss, alpha, cert).K[0, 0], R / alpha),
                    rel(synth_p2(ss, alpha, cert).K[0, 0], 1 / alpha),
                    rel(cert.Q.Q[0, 0], 1 / C))
    dt = time.perf_counter() - t0
    ok = worst <= 1e-12 and dt < 1.0
    acceptance(1, ok, f"max rel err {worst:.1e} (tol 1e-12), {dt:.2f}s (limit 1s)")
    assert ok


def test_criterion_2_rl_network_reproduction(acceptance):
    rng = np.random.default_rng(202)
    worst_tf = worst_q = worst_k = 0.0
    for _ in range(5):
        R1, R2, R3 = rng.uniform(0.2, 5.0, size=3)
        L1, L2 = rng.uniform(0.2, 3.0, size=2)
        alpha = rng.uniform(0.1, 10.0)
        vals = dict(R1=R1, R2=R2, R3=R3, L1=L1, L2=L2)
        model = build_model(parse_netlist(two_branch_text(**vals)))
        for _ in range(10):
            s = complex(rng.uniform(-0.05, 3.0), rng.uniform(-5.0, 5.0))
            worst_tf = max(worst_tf, rel(transfer_eval(model.ss, s)[0, 0], two_branch_admittance(s, **vals)))
        Q_ref = np.diag([1 / {"L1": L1, "L2": L2}[name] for name in model.edge_index])
        worst_q = max(worst_q, np.abs(model.Q.Q - Q_ref).max() / Q_ref.max())
        cert = check_relaxation(model.ss, Q=model.Q)
        K = synth_p1(model.ss, alpha, cert).K[0, 0]
        worst_k = max(worst_k, rel(K, (1 / (R1 + R2) + 1 / R3) / alpha))
    ok = worst_tf <= 1e-9 and worst_q <= 1e-12 and worst_k <= 1e-12
    acceptance(2, ok, f"transfer {worst_tf:.1e} (1e-9), Q {worst_q:.1e}, gain {worst_k:.1e} (1e-12)")
    assert ok


def test_criterion_3_dual_controller(acceptance):
    rng = np.random.default_rng(303)
    t0 = time.perf_counter()
    nets = [parse_netlist(two_branch_text())]
    while len(nets) < 21:
        net, _ = random_sp_network(rng, max_edges=12)
        if lumped_dc_impedance(net) != 0.0:
            nets.append(net)
    worst_unit = worst_scaled = 0.0
    for net in nets:
        G0 = port_admittance(net)
        # alpha = 1: the lumped resistance equals alpha * G(0) literally
        worst_unit = max(worst_unit, rel(port_resistance(dual_controller(net, 1.0)), 1.0 * G0))
        # general alpha: the emitted resistance is the synthesized gain G(0)/alpha
        alpha = rng.uniform(0.1, 10.0)
        worst_scaled = max(worst_scaled, rel(port_resistance(dual_controller(net, alpha)), G0 / alpha))
    dt = time.perf_counter() - t0
    ok = worst_unit <= 1e-9 and worst_scaled <= 1e-9 and dt < 5.0
    acceptance(3, ok, f"{len(nets)} networks, alpha=1 rel err {worst_unit:.1e}, "
                      f"random alpha vs G(0)/alpha {worst_scaled:.1e} (1e-9), {dt:.2f}s (limit 5s)")
    assert ok


def test_criterion_4_worst_case_identity(acceptance):
    rng = np.random.default_rng(404)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(20):
        n, m = int(rng.integers(1, 7)), int(rng.integers(1, 4))
        ss, Q = random_relaxation(rng, n, m)
        assert check_relaxation(ss).ok
        for _ in range(3):
            rep = worst_case_identity(ss, random_psd_gain(rng, m), rng.uniform(0.1, 10.0), Q)
            worst = max(worst, rep["gap"])
    smallest_negative = np.inf
    for _ in range(5):
        ss = oscillator(zeta=rng.uniform(0.02, 0.15), omega=rng.uniform(0.5, 3.0))
        assert not check_relaxation(ss).ok
        K = [[rng.uniform(0.05, 0.3)]]
        assert np.max(np.linalg.eigvals(close_loop(ss, K).ss_cl.A).real) < 0
        rep = worst_case_identity(ss, K, rng.uniform(0.5, 2.0), np.eye(2))
        smallest_negative = min(smallest_negative, rep["gap"])
    dt = time.perf_counter() - t0
    ok = worst <= 1e-6 and smallest_negative > 1e-2 and dt < 30.0
    acceptance(4, ok, f"max gap {worst:.1e} (1e-6), negative controls min gap {smallest_negative:.2f} "
                      f"(>1e-2), {dt:.2f}s (limit 30s)")
    assert ok


def test_criterion_5_optimality(acceptance):
    rng = np.random.default_rng(505)
    t0 = time.perf_counter()
    fractions, margin = [], np.inf
    for i in range(10):
        n, m = int(rng.integers(1, 6)), int(rng.integers(1, 4))
        ss, _ = random_relaxation(rng, n, m)
        cert = check_relaxation(ss)
        alpha = rng.uniform(0.1, 10.0)
        for synth in (synth_p1, synth_p2):
            ctrl = synth(ss, alpha, cert)
            rep = verify_static_optimality(ss, alpha, ctrl, n_trials=100, seed=i, Q=cert.Q)
            fractions.append(rep["fraction"])
            if rep["min_perturbed_cost"] is not None:
                margin = min(margin, rep["min_perturbed_cost"] - rep["cost_star"])
    dt = time.perf_counter() - t0
    ok = min(fractions) == 1.0 and dt < 30.0
    acceptance(5, ok, f"min fraction {min(fractions):.3f} over {len(fractions)} system/problem pairs, "
                      f"smallest cost margin {margin:.1e}, {dt:.2f}s (limit 30s)")
    assert ok


def test_criterion_6_dc_limit(acceptance):
    rc_model = rc_circuit(1.0, 1.0)
    net = build_model(parse_netlist(two_branch_text()))
    worst, worst_raw = 0.0, 0.0
    for ss, Q in ((rc_model, None), (net.ss, net.Q)):
        cert = check_relaxation(ss, Q=Q)
        alpha = 1.0
        v = np.ones(ss.n)
        for synth in (synth_p1, synth_p2):
            ctrl = synth(ss, alpha, cert)
            cl = close_loop(ss, ctrl.K)
            tr = simulate(cl, Step(tuple(v)), default_horizon(cl, 50.0))
            est = step_limit_costs(tr, alpha)[ctrl.problem]
            ref = step_cost_limit(ss, ctrl.K, alpha, v, ctrl.problem)
            worst = max(worst, rel(est["extrapolated"], ref))
            worst_raw = max(worst_raw, rel(est["average"], ref))
    ok = worst <= 1e-2
    acceptance(6, ok, f"max rel err {worst:.1e} (1e-2) at 50 time constants; "
                      f"uncorrected time average {worst_raw:.1e}")
    assert ok


def test_criterion_7_lemma(acceptance):
    rng = np.random.default_rng(707)
    cplx = lambda *s: rng.normal(size=s) + 1j * rng.normal(size=s)
    worst_gap, beaten = 0.0, 0
    for _ in range(50):
        n, m = int(rng.integers(1, 6)), int(rng.integers(1, 6))
        G1 = cplx(n, n) + 2 * np.eye(n)
        G2, G3, v = cplx(n, n), cplx(n, m), cplx(m)
        out = lemma_lb(G1, G2, G3, v)
        worst_gap = max(worst_gap, out["norm_gap"])
        best = np.linalg.norm(out["z_star"])
        g = G3 @ v
        for _ in range(200):
            K = cplx(n, n) * rng.uniform(0.01, 3.0)
            M = np.eye(n) - G2 @ K
            if 1 / np.linalg.cond(M) < 1e-12:
                continue
            top = np.linalg.solve(M, g)
            z = np.concatenate([top, -np.linalg.solve(G1, K @ top)])
            beaten += np.linalg.norm(z) < best * (1 - 1e-12)
    ok = worst_gap <= 1e-9 and beaten == 0
    acceptance(7, ok, f"max norm gap {worst_gap:.1e} (1e-9), random gains beating closed form: {beaten}")
    assert ok


def test_criterion_8_least_squares(acceptance):
    rng = np.random.default_rng(808)
    t0 = time.perf_counter()
    worst_x = worst_v = 0.0
    deficient = 0
    for i in range(20):
        n, m = int(rng.integers(2, 7)), int(rng.integers(1, 5))
        if i % 3 == 0:
            r = int(rng.integers(1, min(n, m) + 1))
            A = rng.normal(size=(n, r)) @ rng.normal(size=(r, m))
            deficient += r < min(n, m)
        else:
            A = rng.normal(size=(n, m))
        b = rng.normal(size=n)
        alpha = rng.uniform(0.5, 2.0)
        res = lsq_solve(LsqCircuit(A, alpha, b))
        x_ref = np.linalg.pinv(A) @ b
        scale = max(1.0, np.linalg.norm(x_ref))
        worst_x = max(worst_x, np.linalg.norm(res["x_hat"] + x_ref) / scale)
        worst_v = max(worst_v, np.linalg.norm(res["V1"] - alpha * x_ref) / (alpha * scale))
    dt = time.perf_counter() - t0
    ok = worst_x <= 1e-6 and worst_v <= 1e-6 and deficient > 0 and dt < 10.0
    acceptance(8, ok, f"x_hat err {worst_x:.1e}, V1 err {worst_v:.1e} (1e-6), "
                      f"{deficient} rank-deficient, {dt:.2f}s (limit 10s)")
    assert ok


def test_criterion_9_equivalence_sampling(acceptance):
    rng = np.random.default_rng(909)
    pos = []
    for _ in range(50):
        n, m = int(rng.integers(1, 7)), int(rng.integers(1, 4))
        ss, _ = random_relaxation(rng, n, m, transform=False)
        pos.append((check_relaxation(ss).ok, monotonicity_probe(ss).passed))
    neg = [(check_relaxation(ss).ok, monotonicity_probe(ss).passed) for ss in non_monotone_systems()]
    disagree = sum(a != b for a, b in pos + neg)
    ok = all(a and b for a, b in pos) and not any(a or b for a, b in neg) and len(neg) == 10 \
        and disagree == 0
    acceptance(9, ok, f"positives passing {sum(a and b for a, b in pos)}/50, negatives failing "
                      f"{sum(not (a or b) for a, b in neg)}/{len(neg)}, disagreements {disagree}")
    assert ok

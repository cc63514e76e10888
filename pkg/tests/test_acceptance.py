"""Acceptance gates, one test per criterion.

Each test records a ``PASS``/``FAIL`` line; the lines are printed in the
pytest terminal summary and when this file is run as a script.
"""
import math
import random
import time
from fractions import Fraction as F

import numpy as np
import pytest
import sympy

from opsplit.certificate import (build_family_system, build_ppxa_system, build_ryu3_system,
                                 probe_random_candidates, rowspace_implies, family_thetas,
                                 verify_encoding)
from opsplit.counterexamples import (RotationPair, build_rotation_pair, measure_rotation_growth,
                                     predicted_growth, theta_range_map)
from opsplit.engine import IterationConfig, Status, iterate
from opsplit.experiments import evaluate, generate, problem_reference, run_experiment
from opsplit.operators import AffineLinear, NormalConeZero, Zero, project_simplex, tv_pair_prox
from opsplit.splittings import Ryu3, drs, step_family, step_ryu3

RESULTS = []


def report(label, ok, detail):
    line = f"ACCEPTANCE {label}: {'PASS' if ok else 'FAIL'} - {detail}"
    RESULTS.append(line)
    print(line, flush=True)
    return ok


def monotone_affine(rng, d):
    P = rng.standard_normal((d, d)) / np.sqrt(d)
    K = rng.standard_normal((d, d)) / np.sqrt(d)
    return AffineLinear(P @ P.T + K - K.T, rng.standard_normal(d))


def triple(rng, d):
    return tuple(monotone_affine(rng, d) for _ in range(3))


def test_criterion_1_ryu3_encoding():
    rng = np.random.default_rng(101)
    start = time.perf_counter()
    worst_fp = worst_res = 0.0
    failures = 0
    for _ in range(100):
        A, B, C = triple(rng, 10)
        res = iterate(Ryu3(A, B, C, alpha=1.0, theta=0.5), np.zeros((2, 10)),
                      IterationConfig(max_iters=20_000, fp_tol=1e-9))
        x = step_ryu3(A, B, C, res.z, 1.0, 0.5).S
        resid = np.linalg.norm(A.forward(x) + B.forward(x) + C.forward(x))
        worst_fp = max(worst_fp, res.trace.fp_residual[-1])
        worst_res = max(worst_res, resid)
        failures += res.status is not Status.CONVERGED or resid > 1e-6
    elapsed = time.perf_counter() - start
    ok = failures == 0 and elapsed < 10
    assert report("1", ok, f"100 triples d=10: failures={failures}, max fp={worst_fp:.1e}, "
                  f"max ||(A+B+C)Sz||={worst_res:.1e}, {elapsed:.1f}s")


def test_criterion_2_nonexpansive():
    rng = np.random.default_rng(202)
    violations = 0
    worst = -math.inf
    for _ in range(500):
        A, B, C = triple(rng, 4)
        alpha = rng.uniform(0.1, 5.0)
        for _ in range(10):
            y, z = 3 * rng.standard_normal((2, 2, 4))
            gap = (np.linalg.norm(step_ryu3(A, B, C, y, alpha, 1.0).T
                                  - step_ryu3(A, B, C, z, alpha, 1.0).T)
                   - np.linalg.norm(y - z))
            worst = max(worst, gap)
            violations += gap > 1e-10
    assert report("2", violations == 0,
                  f"5000 pairs at theta=1: violations={violations}, max excess={worst:.1e}")


def test_criterion_3_drs_reduction():
    rng = np.random.default_rng(303)
    worst = 0.0
    for _ in range(1000):
        A, C = monotone_affine(rng, 5), monotone_affine(rng, 5)
        alpha, theta = rng.uniform(0.1, 4.0), rng.uniform(0.05, 1.0)
        z = rng.standard_normal((2, 5))
        block = step_ryu3(A, Zero(5), C, z, alpha, theta).T[0]
        ref = step_family(A, C, z[0], alpha, alpha, theta).T
        worst = max(worst, np.max(np.abs(block - ref)))
    assert report("3", worst <= 1e-12, f"1000 inputs: max block-1 deviation={worst:.1e}")


def printed_growth(p, theta):
    # |lambda|^2 = 1 + ((theta/2)(1 - beta/alpha) cos(omega) sin(omega))^2, as printed
    dev = (theta / 2) * (1 - p.beta / p.alpha) * math.cos(p.omega) * math.sin(p.omega)
    return math.sqrt(1 + dev * dev)


def rotation_samples(seed, n=50):
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < n:
        alpha = rng.uniform(0.3, 3.0)
        ratio = rng.choice([rng.uniform(0.2, 0.7), rng.uniform(1.5, 3.0)])
        out.append((RotationPair(alpha, alpha * ratio, rng.uniform(0.35, 1.2)),
                    rng.uniform(0.4, 1.6)))
    return out


def converge_equal_steps(samples):
    # same rotation operators, iterated by DRS with one common step
    worst = 0.0
    for p, theta in samples:
        A, B = build_rotation_pair(p)
        res = iterate(drs(A, B, p.alpha, theta), np.array([1.0, 0.5]),
                      IterationConfig(max_iters=200_000, fp_tol=1e-9))
        if res.status is not Status.CONVERGED:
            return math.inf
        worst = max(worst, res.trace.fp_residual[-1])
    return worst


def test_criterion_4_divergence_printed_formula():
    samples = rotation_samples(404)
    start = time.perf_counter()
    err_printed = 0.0
    above_one = True
    for p, theta in samples:
        meas = measure_rotation_growth(p, theta, 200)
        err_printed = max(err_printed, abs(meas - printed_growth(p, theta)))
        above_one &= printed_growth(p, theta) > 1
    fp = converge_equal_steps(samples)
    elapsed = time.perf_counter() - start
    ok = err_printed <= 1e-8 and above_one and fp <= 1e-9 and elapsed < 5
    assert report("4", ok, f"50 samples: max |measured - printed formula|={err_printed:.2e}, "
                  f"alpha=beta max fp={fp:.1e}, {elapsed:.1f}s "
                  "(printed formula carries theta/2; see supplementary 4*)")


def test_criterion_4_supplementary_corrected_formula():
    samples = rotation_samples(404)
    start = time.perf_counter()
    err = 0.0
    above_one = True
    for p, theta in samples:
        pred = predicted_growth(p, theta)
        err = max(err, abs(measure_rotation_growth(p, theta, 200) - pred))
        above_one &= pred > 1
    fp = converge_equal_steps(samples)
    elapsed = time.perf_counter() - start
    ok = err <= 1e-8 and above_one and fp <= 1e-9 and elapsed < 5
    assert report("4*", ok, f"50 samples: max |measured - eigenvalue formula|={err:.2e}, "
                  f"all > 1: {above_one}, alpha=beta max fp={fp:.1e}, {elapsed:.1f}s")


def test_criterion_5_theta_range():
    worst = 0.0
    for theta in (0.1, 0.5, 1.0, 1.5, 1.9, 2.0, 2.5, 3.0):
        T = theta_range_map(theta)
        z = np.array([1.0])
        for k in range(1, 41):
            z = T(z)
            expect = (1 - theta) ** k
            worst = max(worst, abs(z[0] - expect) / max(1.0, abs(expect)))
    cfg = IterationConfig(max_iters=200, fp_tol=1e-12)
    contract = iterate(drs(Zero(1), NormalConeZero(1), theta=1.5), [1.0], cfg).status
    with pytest.warns(Warning):
        oscillate = iterate(drs(Zero(1), NormalConeZero(1), theta=2.0), [1.0], cfg)
        diverge = iterate(drs(Zero(1), NormalConeZero(1), theta=3.0), [1.0],
                          IterationConfig(max_iters=200)).status
    ok = (worst <= 1e-14 and contract is Status.CONVERGED and diverge is Status.DIVERGED
          and oscillate.status is Status.MAX_ITERS and abs(oscillate.z[0]) == 1.0)
    assert report("5", ok, f"max relative deviation from (1-theta)^k={worst:.1e}; "
                  f"theta=1.5 {contract.value}, theta=2 {oscillate.status.value}, "
                  f"theta=3 {diverge.value}")


def test_criterion_6_certificates():
    start = time.perf_counter()
    alpha, beta, theta, eta = F(1), F(2), F(1), F(1, 3)
    base = family_thetas(alpha, beta, theta, eta)
    family_ok = verify_encoding(build_family_system(alpha, beta, base)).ok
    survivors = 0
    for i in range(8):
        for delta in (F(1), F(-1), F(1, 3), F(-1, 3), F(7), F(-7)):
            th = list(base)
            th[i] += delta
            survivors += verify_encoding(build_family_system(alpha, beta, th)).ok
    lifted_ok = verify_encoding(build_ryu3_system()).ok and verify_encoding(build_ppxa_system()).ok
    both = probe_random_candidates(1000, seed=606)
    elapsed = time.perf_counter() - start
    ok = family_ok and survivors == 0 and lifted_ok and both == 0 and elapsed < 30
    assert report("6", ok, f"parameter family {'passes' if family_ok else 'fails'}; "
                  f"{48 - survivors}/48 perturbations break an implication; "
                  f"Ryu3/PPXA {'pass' if lifted_ok else 'fail'}; probe 'both' in {both}/1000; "
                  f"{elapsed:.1f}s")


@pytest.mark.parametrize("kind", ["denoise_l1", "portfolio", "poisson_tv"])
def test_criterion_7_experiments(kind):
    start = time.perf_counter()
    cfg = IterationConfig(max_iters=10_000, fp_tol=1e-10)
    worst_pair = worst_ref = 0.0
    worst_k = 0
    for seed in (1, 2, 3):
        spec = generate(kind, seed=seed)
        f_ref = evaluate(spec, problem_reference(spec)).value
        res = run_experiment(spec, ("ryu3", "ppxa"), cfg)
        fr, fp = (evaluate(spec, res[m].x).value for m in ("ryu3", "ppxa"))
        worst_pair = max(worst_pair, abs(fr - fp) / abs(fp))
        worst_ref = max(worst_ref, abs(fr - f_ref) / abs(f_ref), abs(fp - f_ref) / abs(f_ref))
        for r in res.values():
            k = r.trace.first_below("rel_change", 1e-6)
            worst_k = max(worst_k, math.inf if k is None else k)
    elapsed = time.perf_counter() - start
    ok = worst_pair <= 1e-3 and worst_ref <= 1e-3 and worst_k < 10_000 and elapsed < 120
    assert report(f"7 ({kind})", ok, f"seeds 1-3: Ryu3 vs PPXA {worst_pair:.1e}, "
                  f"vs reference {worst_ref:.1e}, rel_change<1e-6 by iter {worst_k}, "
                  f"{elapsed:.1f}s")


def sympy_solvable(M, c):
    try:
        sympy.Matrix(M).T.gauss_jordan_solve(sympy.Matrix(c))
    except ValueError:
        return False
    return True


def simplex_enumeration(z):
    d = len(z)
    for mask in range(1, 2 ** d):
        idx = [i for i in range(d) if mask >> i & 1]
        tau = (z[idx].sum() - 1.0) / len(idx)
        x = np.zeros(d)
        x[idx] = z[idx] - tau
        rest = [i for i in range(d) if not mask >> i & 1]
        if np.all(x[idx] >= -1e-12) and np.all(z[rest] - tau <= 1e-12):
            return x
    raise AssertionError("no active set satisfies KKT")


def tv_bisection(a1, a2, alpha):
    delta = a2 - a1
    lo, hi = -abs(delta) - 1.0, abs(delta) + 1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if alpha * np.sign(mid) + (mid - delta) / 2 > 0:
            hi = mid
        else:
            lo = mid
    t = 0.5 * (lo + hi)
    m = 0.5 * (a1 + a2)
    return m - t / 2, m + t / 2


def test_criterion_8_oracles():
    rng = random.Random(808)
    disagree = 0
    for _ in range(10_000):
        m, n = rng.randint(1, 6), rng.randint(1, 6)
        M = [[F(rng.randint(-2, 2)) for _ in range(n)] for _ in range(m)]
        if rng.random() < 0.5:
            w = [rng.randint(-2, 2) for _ in range(m)]
            c = [sum(wi * row[j] for wi, row in zip(w, M)) for j in range(n)]
        else:
            c = [F(rng.randint(-2, 2)) for _ in range(n)]
        disagree += rowspace_implies(M, c) != sympy_solvable(M, c)

    nrng = np.random.default_rng(808)
    simplex_err = 0.0
    for _ in range(1000):
        z = 2 * nrng.standard_normal(int(nrng.integers(1, 7)))
        simplex_err = max(simplex_err, np.max(np.abs(project_simplex(z) - simplex_enumeration(z))))

    pairs = 5 * nrng.standard_normal((10_000, 2))
    alphas = nrng.uniform(0.01, 5.0, 10_000)
    x1, x2 = tv_pair_prox(pairs[:, 0], pairs[:, 1], alphas)
    tv_err = 0.0
    for i in range(10_000):
        o1, o2 = tv_bisection(pairs[i, 0], pairs[i, 1], alphas[i])
        tv_err = max(tv_err, abs(x1[i] - o1), abs(x2[i] - o2))
    ok = disagree == 0 and simplex_err <= 1e-10 and tv_err <= 1e-10
    assert report("8", ok, f"rowspace vs sympy: {disagree}/10000 disagreements; "
                  f"simplex max error {simplex_err:.1e}; TV pair max error {tv_err:.1e}")


if __name__ == "__main__":
    import sys
    sys.exit(pytest.main([__file__, "-q", "-s"]))

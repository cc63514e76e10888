import io
import math

import numpy as np
import pytest

from conftest import random_triple
from opsplit.counterexamples import RotationPair, build_rotation_pair
from opsplit.engine import (TRACE_COLUMNS, ConvergenceWarning, IterationConfig, IterationTrace,
                            Status, compute_reference, fp_residual, iterate, write_trace_csv)
from opsplit.errors import IterationError, NonConvergedReference
from opsplit.operators import NormalConeZero, PoissonNLL, Zero
from opsplit.splittings import Family, PPXA, Ryu3, drs, prs


def test_drs_contraction_exact():
    T = drs(Zero(1), NormalConeZero(1), theta=0.5)
    res = iterate(T, [1.0], IterationConfig(max_iters=200, fp_tol=1e-12))
    assert res.status is Status.CONVERGED
    assert abs(res.z[0]) < 1e-11
    for k, zn in zip(res.trace.iters, res.trace.z_norm):
        assert zn == 0.5 ** k


def test_prs_oscillates():
    T = prs(Zero(1), NormalConeZero(1))
    with pytest.warns(ConvergenceWarning):
        res = iterate(T, [1.0], IterationConfig(max_iters=51))
    assert res.status is Status.MAX_ITERS
    assert res.iterations == 51
    assert res.z[0] == -1.0
    assert set(res.trace.fp_residual) == {2.0}


def test_rotation_counterexample_diverges():
    p = RotationPair(1.0, 2.0, math.pi / 4)
    A, B = build_rotation_pair(p)
    with pytest.warns(ConvergenceWarning):
        res = iterate(Family(A, B, 1.0, 2.0, 1.0), [1.0, 0.5], IterationConfig(max_iters=10_000))
    assert res.status is Status.DIVERGED
    assert res.trace.z_norm[-1] >= 1e12


@pytest.mark.parametrize("T,z,expected", [
    (lambda z: z, np.array([1.0, 2.0]), 0.0),
    (lambda z: np.zeros_like(z), np.array([3.0, 4.0]), 5.0),
    (drs(Zero(1), NormalConeZero(1), theta=0.5), np.array([1.0]), 0.5),
])
def test_fp_residual_examples(T, z, expected):
    assert fp_residual(T, z) == expected


def test_compute_reference_toy(toy_triple):
    x = compute_reference(Ryu3(*toy_triple), IterationConfig(max_iters=2000, fp_tol=1e-10))
    np.testing.assert_allclose(x, [1 / 3], atol=1e-12)


def test_compute_reference_strictness():
    T = prs(Zero(1), NormalConeZero(1))
    with pytest.warns(ConvergenceWarning):
        with pytest.raises(NonConvergedReference):
            compute_reference(T, IterationConfig(max_iters=10), z0=np.ones(1))
    with pytest.warns(ConvergenceWarning):
        x = compute_reference(T, IterationConfig(max_iters=10), z0=np.ones(1), strict=False)
    assert x.shape == (1,)


def test_fejer_monotone_residual(rng):
    d = 5
    for _ in range(20):
        T = Ryu3(*random_triple(rng, d), alpha=1.0, theta=rng.uniform(0.1, 0.9))
        res = iterate(T, rng.standard_normal((2, d)), IterationConfig(max_iters=300, fp_tol=1e-14))
        fp = np.array(res.trace.fp_residual)
        assert np.all(np.diff(fp) <= 1e-12)


def test_determinism(rng):
    triple = random_triple(rng, 4)
    z0 = rng.standard_normal((3, 4))
    runs = []
    for _ in range(2):
        res = iterate(PPXA(*triple), z0, IterationConfig(500, 1e-12),
                      objective=lambda x: float(x @ x), reference=np.zeros(4))
        rows = [r[:-1] for r in res.trace.rows()]  # elapsed_ns is wall-clock
        runs.append((rows, res.z.tobytes()))
    assert runs[0] == runs[1]


def test_trace_columns_and_csv(toy_triple):
    res = iterate(Ryu3(*toy_triple), np.zeros((2, 1)), IterationConfig(50, 1e-12, record_every=10),
                  objective=lambda x: float(x[0] ** 2), reference=np.array([1 / 3]))
    assert res.trace.iters == [0, 10, 20, 30, 40, 49]
    assert res.trace.rel_change[0] is None
    buf = io.StringIO()
    write_trace_csv(res.trace, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == ",".join(TRACE_COLUMNS)
    assert lines[0] == "iter,fp_residual,z_norm,objective,rel_change,dist_to_ref,elapsed_ns"
    assert lines[1].split(",")[4] == ""
    assert len(lines) == 7


def test_trace_without_metrics_has_empty_fields():
    res = iterate(lambda z: 0.5 * z, [1.0], IterationConfig(3, 1e-12))
    buf = io.StringIO()
    write_trace_csv(res.trace, buf)
    first = buf.getvalue().splitlines()[1].split(",")
    assert first[3:6] == ["", "", ""]


def test_trace_rejects_non_increasing():
    tr = IterationTrace()
    tr.append(3, 1.0, 1.0, None, None, None, 0)
    with pytest.raises(ValueError):
        tr.append(3, 1.0, 1.0, None, None, None, 1)


def test_config_validation():
    with pytest.raises(ValueError):
        IterationConfig(max_iters=0)
    with pytest.raises(ValueError):
        IterationConfig(fp_tol=10.0, divergence_bound=1.0)
    with pytest.raises(ValueError):
        IterationConfig(record_every=0)


def test_operator_error_reports_iteration():
    # walks x down to 0, where the Poisson gradient is undefined: 1, .75, .5, .25, 0
    op = PoissonNLL(np.array([1.0]))

    def T(z):
        op.forward(z)
        return z - 0.25

    with pytest.raises(IterationError) as info:
        iterate(T, [1.0], IterationConfig(10))
    assert info.value.iteration == 4
    assert "iteration 4" in str(info.value)


def test_nonfinite_is_divergence():
    res = iterate(lambda z: z * np.inf, [1.0], IterationConfig(5))
    assert res.status is Status.DIVERGED


def test_objective_rel_change(toy_triple):
    res = iterate(Ryu3(*toy_triple), np.zeros((2, 1)), IterationConfig(30, 1e-14),
                  objective=lambda x: 1.0 + float(x[0]))
    obj = res.trace.objective
    for k in range(1, len(obj)):
        assert res.trace.rel_change[k] == pytest.approx(abs(obj[k] - obj[k - 1]) / abs(obj[k - 1]))

"""Synthetic desk-scale three-operator problems and method runners.

Three problem kinds are supported:

``denoise_l1``
    minimize ``||x_S - a||_1 + lam*||U x - b||_1`` subject to ``x >= 0`` with
    ``U`` the orthonormal Haar transform.
``portfolio``
    minimize ``0.5 * sum_i (a_i^T x - b)^2`` over the simplex subject to
    ``mu^T x >= b``.
``poisson_tv``
    minimize ``lam * sum_i l(x_i; y_i) + sum_i |x_{i+1} - x_i|`` with the
    total variation split into odd and even pairs.
"""
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .engine import IterationConfig, compute_reference, iterate, write_trace_csv
from .errors import InfeasibleParams
from .haar import HaarTransform
from .operators import (IndicatorHalfspace, IndicatorNonneg, IndicatorSimplex, L1Offset,
                        PairwiseTV, PoissonNLL, QuadraticLS, UnitaryL1, tv_pair_prox)
from .splittings import DYS, PDHG3, PPXA, Ryu3

__all__ = ["ProblemSpec", "generate", "objective", "evaluate", "tv_pair_prox", "make_method",
           "run_experiment", "problem_reference", "DEFAULT_PARAMS", "METHOD_PARAMS"]

KINDS = ("denoise_l1", "portfolio", "poisson_tv")

DEFAULT_PARAMS = {
    "denoise_l1": {"d": 1024, "lam": 1.0, "outlier_frac": 0.1, "obs_frac": 0.2},
    "portfolio": {"n": 300, "d": 100},
    "poisson_tv": {"d": 1001, "lam": 1.0},
}

# roughly tuned step sizes per problem and method
METHOD_PARAMS = {
    "denoise_l1": {"ryu3": {"alpha": 1.0, "theta": 0.9},
                   "ppxa": {"gamma": 1.0, "theta": 1.5},
                   "pdhg3": {"tau": 1.0, "sigma": 0.5}},
    "portfolio": {"ryu3": {"alpha": 0.01, "theta": 0.9},
                  "ppxa": {"gamma": 0.01, "theta": 1.5},
                  "pdhg3": {"tau": 0.01, "sigma": 50.0},
                  "dys": {"alpha": None}},
    "poisson_tv": {"ryu3": {"alpha": 1.0, "theta": 0.9},
                   "ppxa": {"gamma": 1.0, "theta": 1.5},
                   "pdhg3": {"tau": 1.0, "sigma": 0.5}},
}

FEAS_TOL = 1e-9


@dataclass
class ProblemSpec:
    kind: str
    params: dict
    seed: int
    data: dict = field(repr=False)

    def operators(self):
        """The ``(A, B, C)`` triple whose sum is the optimality condition."""
        p, g = self.params, self.data
        if self.kind == "denoise_l1":
            d = p["d"]
            return (L1Offset(g["a"], g["S"], d, 1.0),
                    UnitaryL1(HaarTransform(d), g["b"], p["lam"]),
                    IndicatorNonneg(d))
        if self.kind == "portfolio":
            return (QuadraticLS(g["returns"], g["b"]),
                    IndicatorSimplex(p["d"]),
                    IndicatorHalfspace(g["mu"], g["b"]))
        d = p["d"]
        return (PoissonNLL(g["y"], p["lam"]), PairwiseTV(d, 0), PairwiseTV(d, 1))

    def to_json(self):
        data = {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in self.data.items()}
        return json.dumps({"kind": self.kind, "seed": self.seed, "params": self.params,
                           "data": data}, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        raw = json.loads(text)
        data = {k: (np.asarray(v) if isinstance(v, list) else v) for k, v in raw["data"].items()}
        if "S" in data:
            data["S"] = data["S"].astype(int)
        return cls(raw["kind"], raw["params"], raw["seed"], data)


def _piecewise_constant(rng, d, n_jumps, low, high):
    cuts = np.sort(rng.choice(np.arange(1, d), size=n_jumps, replace=False))
    levels = rng.uniform(low, high, size=n_jumps + 1)
    return np.repeat(levels, np.diff(np.concatenate([[0], cuts, [d]])))


def _outliers(rng, size, frac, scale):
    noise = np.zeros(size)
    hit = rng.random(size) < frac
    noise[hit] = rng.laplace(0.0, scale, size=int(hit.sum()))
    return noise


def generate(kind, params=None, seed=0):
    """Build a problem instance; identical ``(kind, params, seed)`` gives identical data."""
    if kind not in KINDS:
        raise ValueError(f"unknown problem kind {kind!r}; choose from {KINDS}")
    p = dict(DEFAULT_PARAMS[kind])
    p.update(params or {})
    rng = np.random.default_rng(seed)
    if kind == "denoise_l1":
        d = p["d"]
        if d < 2 or d & (d - 1):
            raise InfeasibleParams(f"denoise_l1 needs d a power of two, got {d}")
        truth = _piecewise_constant(rng, d, max(1, d // 64), 0.0, 4.0)
        S = np.sort(rng.choice(d, size=max(1, round(p["obs_frac"] * d)), replace=False))
        a = truth[S] + _outliers(rng, S.size, p["outlier_frac"], 2.0)
        b = HaarTransform(d).apply(truth) + _outliers(rng, d, p["outlier_frac"], 2.0)
        data = {"truth": truth, "S": S, "a": a, "b": b}
    elif kind == "portfolio":
        n, d = p["n"], p["d"]
        drift = rng.uniform(0.9, 1.1, size=d)
        vol = rng.uniform(0.05, 0.3, size=d)
        returns = drift + vol * rng.standard_normal((n, d))
        mu = returns.mean(axis=0)
        b = 0.8 * float(mu.max())
        if not mu.mean() >= b:
            raise InfeasibleParams("uniform portfolio misses the target return")
        data = {"returns": returns, "mu": mu, "b": b}
    else:
        d = p["d"]
        if d < 3 or d % 2 == 0:
            raise InfeasibleParams(f"poisson_tv needs odd d >= 3, got {d}")
        rate = _piecewise_constant(rng, d, max(1, d // 100), 5.0, 30.0)
        y = rng.poisson(rate).astype(float)
        data = {"rate": rate, "y": y}
    return ProblemSpec(kind, p, seed, data)


@dataclass(frozen=True)
class Evaluation:
    value: float      # objective without indicator terms
    slack: float      # largest constraint violation, 0 when feasible

    @property
    def exact(self):
        return self.value if self.slack <= FEAS_TOL else math.inf


def evaluate(spec, x):
    """Objective split into its finite part and the infeasibility slack."""
    x = np.asarray(x, dtype=float)
    p, g = spec.params, spec.data
    if spec.kind == "denoise_l1":
        fit = np.abs(x[g["S"]] - g["a"]).sum()
        wav = np.abs(HaarTransform(p["d"]).apply(x) - g["b"]).sum()
        return Evaluation(float(fit + p["lam"] * wav), float(max(0.0, -x.min())))
    if spec.kind == "portfolio":
        r = g["returns"] @ x - g["b"]
        slack = max(0.0, -x.min(), abs(x.sum() - 1.0), g["b"] - float(g["mu"] @ x))
        return Evaluation(0.5 * float(r @ r), float(slack))
    y = g["y"]
    pos = y > 0
    if np.any(x[pos] <= 0) or np.any(x[~pos] < 0):
        return Evaluation(math.inf, 0.0)
    nll = np.sum(x[pos] - y[pos] * np.log(x[pos])) + np.sum(x[~pos])
    return Evaluation(float(p["lam"] * nll + np.abs(np.diff(x)).sum()), 0.0)


def objective(spec, x):
    """Exact objective value: ``inf`` if ``x`` violates a constraint by more than 1e-9."""
    return evaluate(spec, x).exact


def finite_objective(spec):
    return lambda x: evaluate(spec, x).value


def make_method(spec, method, **overrides):
    """Instantiate a splitting for ``spec`` with the tuned defaults plus ``overrides``."""
    A, B, C = spec.operators()
    params = dict(METHOD_PARAMS[spec.kind].get(method, {}))
    params.update(overrides)
    if method == "ryu3":
        return Ryu3(A, B, C, **params)
    if method == "ppxa":
        return PPXA(A, B, C, **params)
    if method == "pdhg3":
        return PDHG3(A, B, C, **params)
    if method == "dys":
        if spec.kind != "portfolio":
            raise ValueError("DYS needs a single-valued operator; only portfolio has one")
        alpha = params.get("alpha")
        if alpha is None:
            # C = grad f is (1/L)-cocoercive, so any alpha < 2/L is admissible
            L = np.linalg.eigvalsh(A.gram).max()
            alpha = 1.9 / L
        # the quadratic term enters through its gradient
        return DYS(C, B, A, alpha=alpha)
    raise ValueError(f"method {method!r} is not available for {spec.kind}")


def run_experiment(spec, methods=("ryu3", "ppxa", "pdhg3"), cfg=None, reference=None,
                   out_dir=None, parallel=False, method_params=None):
    """Run each method from the origin and return ``{method: IterationResult}``.

    Traces are written to ``out_dir/<kind>_<method>.csv`` when ``out_dir`` is given.
    """
    cfg = cfg or IterationConfig(max_iters=10_000, fp_tol=1e-10)
    method_params = method_params or {}
    f = finite_objective(spec)

    def run(method):
        T = make_method(spec, method, **method_params.get(method, {}))
        return iterate(T, T.zero_point(), cfg, objective=f, reference=reference)

    if parallel:
        with ThreadPoolExecutor(max_workers=len(methods)) as pool:
            results = dict(zip(methods, pool.map(run, methods)))
    else:
        results = {m: run(m) for m in methods}
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        for m, res in results.items():
            with open(os.path.join(out_dir, f"{spec.kind}_{m}.csv"), "w") as fh:
                write_trace_csv(res.trace, fh)
    return results


def problem_reference(spec, method="ryu3", cfg=None, strict=False):
    """Long-run reference solution; with ``strict=False`` a non-converged run is a surrogate."""
    cfg = cfg or IterationConfig(max_iters=10_000, fp_tol=1e-10)
    return compute_reference(make_method(spec, method), cfg, strict=strict)

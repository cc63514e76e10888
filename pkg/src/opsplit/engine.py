"""Fixed-point iteration ``z^{k+1} = T z^k`` with stopping rules and trace recording."""
import csv
import enum
import math
import time
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import IterationError, NonConvergedReference, OpsplitError

TRACE_COLUMNS = ("iter", "fp_residual", "z_norm", "objective", "rel_change", "dist_to_ref",
                 "elapsed_ns")


class Status(str, enum.Enum):
    CONVERGED = "Converged"
    MAX_ITERS = "MaxIters"
    DIVERGED = "Diverged"


class ConvergenceWarning(UserWarning):
    """The splitting's parameters lie outside the region where convergence is guaranteed."""


@dataclass(frozen=True)
class IterationConfig:
    max_iters: int = 10_000
    fp_tol: float = 1e-10
    divergence_bound: float = 1e12
    record_every: int = 1

    def __post_init__(self):
        if self.max_iters < 1 or self.record_every < 1:
            raise ValueError("max_iters and record_every must be positive integers")
        if not 0 < self.fp_tol < self.divergence_bound:
            raise ValueError("need 0 < fp_tol < divergence_bound")


@dataclass
class IterationTrace:
    iters: list = field(default_factory=list)
    fp_residual: list = field(default_factory=list)
    z_norm: list = field(default_factory=list)
    objective: list = field(default_factory=list)
    rel_change: list = field(default_factory=list)
    dist_to_ref: list = field(default_factory=list)
    elapsed_ns: list = field(default_factory=list)

    def append(self, k, fp, zn, obj, rel, dist, ns):
        if self.iters and k <= self.iters[-1]:
            raise ValueError("trace iterations must be strictly increasing")
        self.iters.append(k)
        self.fp_residual.append(fp)
        self.z_norm.append(zn)
        self.objective.append(obj)
        self.rel_change.append(rel)
        self.dist_to_ref.append(dist)
        self.elapsed_ns.append(ns)

    def __len__(self):
        return len(self.iters)

    def rows(self):
        return zip(self.iters, self.fp_residual, self.z_norm, self.objective, self.rel_change,
                   self.dist_to_ref, self.elapsed_ns)

    def first_below(self, column, threshold):
        """First recorded iteration where ``column`` drops below ``threshold`` (None if never)."""
        for k, value in zip(self.iters, getattr(self, column)):
            if value is not None and value < threshold:
                return k
        return None


@dataclass
class IterationResult:
    status: Status
    z: np.ndarray
    x: Optional[np.ndarray]
    iterations: int
    trace: IterationTrace


def _norm(v):
    return float(np.linalg.norm(np.ravel(v)))


def _as_step(T):
    if hasattr(T, "step"):
        return T.step
    return lambda z: (T(z), None)


def fp_residual(T, z):
    """``||T z - z||_2``; ``T`` is a splitting object or a plain callable."""
    Tz = _as_step(T)(z)[0]
    return _norm(np.asarray(Tz) - np.asarray(z))


def iterate(T, z0, cfg=None, objective: Optional[Callable] = None, reference=None):
    """Run the fixed-point iteration from ``z0``.

    Parameters
    ----------
    T : Splitting or callable
        Either an object with ``step(z) -> (Tz, Sz)`` or a bare map ``z -> Tz``.
    z0 : array_like
        Starting point (vector or lifted array).
    cfg : IterationConfig
    objective : callable, optional
        Evaluated at ``x^k = S(z^k)``; enables the objective and rel_change columns.
    reference : array_like, optional
        Enables the dist_to_ref column, ``||x^k - reference||``.

    Returns
    -------
    IterationResult
        ``z`` is the last iterate produced and ``x`` the solution-map output at
        the last evaluated point.
    """
    cfg = cfg or IterationConfig()
    if getattr(T, "convergence_guaranteed", True) is False:
        warnings.warn(f"{getattr(T, 'method', 'splitting')} parameters are outside the "
                      "guaranteed convergence region", ConvergenceWarning, stacklevel=2)
    step = _as_step(T)
    z = np.array(z0, dtype=float)
    ref = None if reference is None else np.asarray(reference, dtype=float)
    trace = IterationTrace()
    prev_obj = None
    x = None
    status = Status.MAX_ITERS
    start = time.perf_counter_ns()
    k = 0
    for k in range(cfg.max_iters):
        try:
            Tz, x = step(z)
        except OpsplitError as exc:
            raise IterationError(k, str(exc)) from exc
        Tz = np.asarray(Tz, dtype=float)
        fp = _norm(Tz - z)
        zn = _norm(z)
        obj = rel = dist = None
        if objective is not None and x is not None:
            obj = float(objective(x))
            if prev_obj is not None and prev_obj != 0 and math.isfinite(prev_obj):
                rel = abs(obj - prev_obj) / abs(prev_obj)
            prev_obj = obj
        if ref is not None and x is not None:
            dist = _norm(x - ref)
        done = None
        if fp <= cfg.fp_tol:
            done = Status.CONVERGED
        elif not (zn < cfg.divergence_bound and np.all(np.isfinite(Tz))):
            done = Status.DIVERGED
        last = done is not None or k == cfg.max_iters - 1
        if k % cfg.record_every == 0 or last:
            trace.append(k, fp, zn, obj, rel, dist, time.perf_counter_ns() - start)
        if done is not None:
            status = done
            if done is Status.CONVERGED:
                z = Tz
            break
        z = Tz
    return IterationResult(status, z, x, k + 1, trace)


def compute_reference(T, cfg, z0=None, strict=True):
    """High-accuracy solution from a 10x longer run at ``fp_tol / 1e3``.

    Raises :class:`NonConvergedReference` if that run does not converge and
    ``strict`` is set; otherwise the last solution-map output is returned as a
    surrogate reference.
    """
    long_cfg = IterationConfig(max_iters=10 * cfg.max_iters, fp_tol=cfg.fp_tol / 1e3,
                               divergence_bound=cfg.divergence_bound,
                               record_every=10 * cfg.max_iters)
    if z0 is None:
        z0 = T.zero_point()
    result = iterate(T, z0, long_cfg)
    if result.status is not Status.CONVERGED and strict:
        raise NonConvergedReference(
            f"reference run ended with {result.status.value} after {result.iterations} iterations")
    x = result.x
    if x is None:
        x = result.z
    return np.asarray(x, dtype=float)


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_trace_csv(trace, fh):
    """Write ``trace`` as CSV to an open text file; unavailable metrics are empty fields."""
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(TRACE_COLUMNS)
    for row in trace.rows():
        writer.writerow([_fmt(v) for v in row])

"""Fixed-point mappings ``T`` and solution mappings ``S`` of resolvent splittings.

The ``step_*`` functions are stateless and return every intermediate
resolvent output alongside ``T(z)`` and ``S(z)``. The splitting classes bind
operators and parameters into an object the iteration engine can drive:
``lifting`` gives the number of ``d``-dimensional blocks of ``z``, and
``step(z)`` returns ``(T(z), S(z))``. Lifted points are arrays of shape
``(lifting, d)``; unlifted points are plain vectors of shape ``(d,)``.
"""
from typing import NamedTuple

import numpy as np

from .errors import DimensionError, SetValuedError
from .operators import MonotoneOp


class FamilyStep(NamedTuple):
    T: np.ndarray
    S: np.ndarray
    x1: np.ndarray
    x2: np.ndarray


class Ryu3Step(NamedTuple):
    T: np.ndarray
    S: np.ndarray
    x1: np.ndarray
    x2: np.ndarray
    x3: np.ndarray


class LiftedStep(NamedTuple):
    T: np.ndarray
    S: np.ndarray


def _lifted(z, blocks, dim):
    z = np.asarray(z, dtype=float)
    if z.shape != (blocks, dim):
        raise DimensionError(f"expected lifted point of shape {(blocks, dim)}, got {z.shape}")
    return z


def _same_dim(*ops):
    dims = {op.dim for op in ops}
    if len(dims) != 1:
        raise DimensionError(f"operators disagree on dimension: {sorted(dims)}")
    return dims.pop()


def step_family(A, B, z, alpha, beta, theta, eta=0.0):
    """One evaluation of the two-operator family parameterized by ``alpha, beta, theta, eta``.

    ``alpha == beta`` with ``theta`` in (0, 2) is DRS and ``theta == 2`` is PRS.
    """
    _same_dim(A, B)
    z = np.asarray(z, dtype=float)
    ratio = beta / alpha
    x1 = A.resolvent(alpha, z)
    x2 = B.resolvent(beta, (1.0 + ratio) * x1 - ratio * z)
    Tz = z + theta * (x2 - x1)
    Sz = eta * x1 + (1.0 - eta) * x2
    return FamilyStep(Tz, Sz, x1, x2)


def step_ryu3(A, B, C, z, alpha, theta):
    """Three-operator splitting with 2-fold lifting; ``z`` has shape ``(2, d)``."""
    d = _same_dim(A, B, C)
    z1, z2 = _lifted(z, 2, d)
    x1 = A.resolvent(alpha, z1)
    x2 = B.resolvent(alpha, x1 + z2)
    x3 = C.resolvent(alpha, x1 - z1 + x2 - z2)
    Tz = np.stack([z1 + theta * (x3 - x1), z2 + theta * (x3 - x2)])
    Sz = (x1 + x2 + x3) / 3.0
    return Ryu3Step(Tz, Sz, x1, x2, x3)


def step_ppxa(A, B, C, z, gamma, weights, theta):
    """Parallel proximal algorithm on three operators; ``z`` has shape ``(3, d)``."""
    d = _same_dim(A, B, C)
    z = _lifted(z, 3, d)
    w = np.asarray(weights, dtype=float)
    x = np.stack([op.resolvent(gamma / wi, zi) for op, wi, zi in zip((A, B, C), w, z)])
    z_bar = w @ z
    x_bar = w @ x
    Tz = z + theta * (2.0 * x_bar - z_bar - x)
    return LiftedStep(Tz, x[0])


def step_dys(A, B, C, z, alpha):
    """Davis-Yin step with a forward evaluation of ``C``; ``S(z) = J_{alpha B} z``."""
    _same_dim(A, B, C)
    if not C.single_valued:
        raise SetValuedError(f"DYS needs a single-valued C, got {C.kind}")
    z = np.asarray(z, dtype=float)
    xb = B.resolvent(alpha, z)
    xa = A.resolvent(alpha, 2.0 * xb - z - alpha * C.forward(xb))
    return LiftedStep(z - xb + xa, xb)


def step_pdhg3(A, B, C, z, tau, sigma):
    """Primal-dual hybrid gradient on ``A + B + C`` with dual variables for ``B`` and ``C``.

    ``z = (x, u, v)`` stacks the primal point and the two dual points. Dual
    updates use the Moreau identity, so only resolvents of ``B`` and ``C``
    are needed.
    """
    d = _same_dim(A, B, C)
    x, u, v = _lifted(z, 3, d)
    x_new = A.resolvent(tau, x - tau * (u + v))
    w = 2.0 * x_new - x
    u_pre = u + sigma * w
    v_pre = v + sigma * w
    u_new = u_pre - sigma * B.resolvent(1.0 / sigma, u_pre / sigma)
    v_new = v_pre - sigma * C.resolvent(1.0 / sigma, v_pre / sigma)
    return LiftedStep(np.stack([x_new, u_new, v_new]), x_new)


class Splitting:
    """Common interface for the splitting objects driven by :func:`opsplit.engine.iterate`."""

    method = "abstract"
    lifting = 1

    def __init__(self, *operators):
        for op in operators:
            if not isinstance(op, MonotoneOp):
                raise TypeError(f"expected MonotoneOp, got {type(op).__name__}")
        self.operators = operators
        self.dim = _same_dim(*operators)

    @property
    def convergence_guaranteed(self):
        return True

    def step(self, z):
        raise NotImplementedError

    def T(self, z):
        return self.step(z)[0]

    def S(self, z):
        return self.step(z)[1]

    def zero_point(self):
        shape = (self.dim,) if self.lifting == 1 else (self.lifting, self.dim)
        return np.zeros(shape)


class PPM(Splitting):
    """Proximal point method ``z+ = J_{alpha A} z``."""

    method = "ppm"

    def __init__(self, A, alpha=1.0):
        super().__init__(A)
        if alpha <= 0:
            raise ValueError("alpha must be positive")
        self.alpha = alpha

    def step(self, z):
        x = self.operators[0].resolvent(self.alpha, z)
        return LiftedStep(x, x)


class Family(Splitting):
    method = "family"

    def __init__(self, A, B, alpha=1.0, beta=None, theta=1.0, eta=0.0):
        super().__init__(A, B)
        beta = alpha if beta is None else beta
        if alpha <= 0 or beta <= 0:
            raise ValueError("alpha and beta must be positive")
        if theta == 0:
            raise ValueError("theta must be nonzero")
        self.alpha, self.beta, self.theta, self.eta = alpha, beta, theta, eta

    @property
    def convergence_guaranteed(self):
        return self.alpha == self.beta and 0 < self.theta < 2

    def step(self, z):
        A, B = self.operators
        return step_family(A, B, z, self.alpha, self.beta, self.theta, self.eta)[:2]


def drs(A, B, alpha=1.0, theta=1.0, eta=0.0):
    return Family(A, B, alpha, alpha, theta, eta)


def prs(A, B, alpha=1.0, eta=0.0):
    return Family(A, B, alpha, alpha, 2.0, eta)


class Ryu3(Splitting):
    """Minimal-lifting three-operator splitting; ``theta`` in (0, 1) guarantees convergence."""

    method = "ryu3"
    lifting = 2

    def __init__(self, A, B, C, alpha=1.0, theta=0.5):
        super().__init__(A, B, C)
        if alpha <= 0 or theta <= 0:
            raise ValueError("alpha and theta must be positive")
        self.alpha, self.theta = alpha, theta

    @property
    def convergence_guaranteed(self):
        return 0 < self.theta < 1

    def step(self, z):
        A, B, C = self.operators
        return step_ryu3(A, B, C, z, self.alpha, self.theta)[:2]


class PPXA(Splitting):
    method = "ppxa"
    lifting = 3

    def __init__(self, A, B, C, gamma=1.0, weights=(1 / 3, 1 / 3, 1 / 3), theta=1.0):
        super().__init__(A, B, C)
        weights = tuple(float(w) for w in weights)
        if len(weights) != 3 or min(weights) <= 0 or abs(sum(weights) - 1.0) > 1e-12:
            raise ValueError(f"PPXA weights must be 3 positive numbers summing to 1, got {weights}")
        if gamma <= 0 or not 0 < theta < 2:
            raise ValueError("PPXA needs gamma > 0 and theta in (0, 2)")
        self.gamma, self.weights, self.theta = gamma, weights, theta

    def step(self, z):
        A, B, C = self.operators
        return step_ppxa(A, B, C, z, self.gamma, self.weights, self.theta)


class DYS(Splitting):
    method = "dys"

    def __init__(self, A, B, C, alpha=1.0):
        super().__init__(A, B, C)
        if not C.single_valued:
            raise SetValuedError(f"DYS needs a single-valued C, got {C.kind}")
        if alpha <= 0:
            raise ValueError("alpha must be positive")
        self.alpha = alpha

    def step(self, z):
        A, B, C = self.operators
        return step_dys(A, B, C, z, self.alpha)


class PDHG3(Splitting):
    """Product-space PDHG: one primal block, one dual block each for ``B`` and ``C``.

    Step sizes must satisfy ``2*tau*sigma <= 1`` (``tau*sigma <= 1`` when ``C``
    is the zero operator and only one dual block is active).
    """

    method = "pdhg3"
    lifting = 3

    def __init__(self, A, B, C, tau=1.0, sigma=0.5):
        super().__init__(A, B, C)
        if tau <= 0 or sigma <= 0:
            raise ValueError("tau and sigma must be positive")
        coupling = 1.0 if C.kind == "zero" else 2.0
        if coupling * tau * sigma > 1.0 + 1e-12:
            raise ValueError(f"step sizes violate {coupling:g}*tau*sigma <= 1")
        self.tau, self.sigma = tau, sigma

    def step(self, z):
        A, B, C = self.operators
        return step_pdhg3(A, B, C, z, self.tau, self.sigma)


METHODS = {
    "ppm": PPM,
    "family": Family,
    "drs": drs,
    "prs": prs,
    "ryu3": Ryu3,
    "ppxa": PPXA,
    "dys": DYS,
    "pdhg3": PDHG3,
}

ARITY = {"ppm": 1, "family": 2, "drs": 2, "prs": 2, "ryu3": 3, "ppxa": 3, "dys": 3, "pdhg3": 3}

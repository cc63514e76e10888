"""Divergence witnesses for the two-operator family when ``alpha != beta``.

The operators are opposite skew rotations scaled by ``tan(omega)/alpha`` and
``tan(omega)/beta``. Their only common zero is the origin, yet the family
map multiplies ``||z||`` by a fixed factor larger than one at every step.
"""
import math
from dataclasses import dataclass

import numpy as np

from .errors import ZeroStart
from .operators import NormalConeZero, SkewRotation2D, Zero
from .splittings import step_family


@dataclass(frozen=True)
class RotationPair:
    alpha: float
    beta: float
    omega: float
    dim: int = 2

    def __post_init__(self):
        if self.alpha <= 0 or self.beta <= 0:
            raise ValueError("alpha and beta must be positive")
        if not 0 < self.omega < math.pi / 2:
            raise ValueError("omega must lie strictly inside (0, pi/2)")
        if self.dim < 2:
            raise ValueError("rotation counterexample needs dim >= 2")


def build_rotation_pair(p):
    """Return the skew operators ``(A, B)`` for the rotation counterexample."""
    t = math.tan(p.omega)
    return SkewRotation2D(t / p.alpha, p.dim), SkewRotation2D(-t / p.beta, p.dim)


def predicted_growth(p, theta):
    """Modulus of the eigenvalues of the family map on the rotation pair.

    On the rotation block the map is ``I + delta * [[0, 1], [-1, 0]]`` with
    ``delta = theta * (1 - beta/alpha) * cos(omega) * sin(omega)``, a scaled
    rotation with eigenvalue modulus ``sqrt(1 + delta**2)``.
    """
    if theta == 0:
        raise ValueError("theta must be nonzero")
    dev = theta * (1.0 - p.beta / p.alpha) * math.cos(p.omega) * math.sin(p.omega)
    return math.sqrt(1.0 + dev * dev)


def family_map(A, B, alpha, beta, theta, eta=0.0):
    return lambda z: step_family(A, B, z, alpha, beta, theta, eta).T


def measure_growth(T, z0, k):
    """Geometric mean of ``||z^{i+1}|| / ||z^i||`` over ``k`` iterations of ``T``."""
    z = np.asarray(z0, dtype=float)
    norm = np.linalg.norm(z)
    if norm == 0:
        raise ZeroStart("growth is undefined from z0 = 0")
    log_sum = 0.0
    for _ in range(k):
        z = T(z)
        new_norm = np.linalg.norm(z)
        if new_norm == 0 or not math.isfinite(new_norm):
            raise FloatingPointError(f"iterate norm became {new_norm}")
        log_sum += math.log(new_norm / norm)
        norm = new_norm
    return math.exp(log_sum / k)


def measure_rotation_growth(p, theta, k=200, z0=None):
    A, B = build_rotation_pair(p)
    if z0 is None:
        z0 = np.zeros(p.dim)
        z0[:2] = (1.0, 0.5)
    return measure_growth(family_map(A, B, p.alpha, p.beta, theta), z0, k)


def theta_range_map(theta, dim=1, alpha=1.0):
    """DRS on ``(Zero, NormalConeZero)``; it maps ``z`` to ``(1 - theta) z``."""
    return family_map(Zero(dim), NormalConeZero(dim), alpha, alpha, theta)


def rotation_table(params, thetas, k=200):
    """Rows ``(alpha, beta, omega, theta, predicted, measured, abs_error)``."""
    rows = []
    for p in params:
        for theta in thetas:
            pred = predicted_growth(p, theta)
            meas = measure_rotation_growth(p, theta, k)
            rows.append((p.alpha, p.beta, p.omega, theta, pred, meas, abs(pred - meas)))
    return rows

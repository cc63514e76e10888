"""Orthonormal multilevel Haar wavelet transform.

Coefficients are laid out as ``[cA_L, cD_L, cD_{L-1}, ..., cD_1]`` where
level ``L = log2(d)`` holds a single approximation coefficient.
"""
import numpy as np

from .errors import NonPowerOfTwoError

_SQRT2 = np.sqrt(2.0)


def _check_length(d):
    if d < 1 or d & (d - 1):
        raise NonPowerOfTwoError(f"Haar transform needs a power-of-two length, got {d}")


def haar_transform(x, inverse=False):
    """Apply the orthonormal Haar transform (or its inverse) to a 1-D signal.

    Parameters
    ----------
    x : array_like
        Signal whose length is a power of two.
    inverse : bool
        If True, map wavelet coefficients back to the signal domain.

    Returns
    -------
    numpy.ndarray
        Transformed vector with the same Euclidean norm as ``x``.
    """
    x = np.asarray(x, dtype=float)
    _check_length(x.shape[0])
    return _haar_inverse(x) if inverse else _haar_forward(x)


def _haar_forward(x):
    out = x.copy()
    n = out.shape[0]
    while n > 1:
        head = out[:n]
        even, odd = head[0::2], head[1::2]
        approx = (even + odd) / _SQRT2
        detail = (even - odd) / _SQRT2
        half = n // 2
        out[:half] = approx
        out[half:n] = detail
        n = half
    return out


def _haar_inverse(y):
    out = y.copy()
    n = 1
    d = out.shape[0]
    while n < d:
        approx = out[:n].copy()
        detail = out[n:2 * n].copy()
        out[0:2 * n:2] = (approx + detail) / _SQRT2
        out[1:2 * n:2] = (approx - detail) / _SQRT2
        n *= 2
    return out


def haar_matrix(d):
    """Explicit ``d x d`` orthogonal Haar matrix built row by row from basis functions."""
    _check_length(d)
    rows = [np.full(d, 1.0 / np.sqrt(d))]
    # detail functions ordered coarse to fine, matching the coefficient layout
    width = d
    while width > 1:
        half = width // 2
        scale = 1.0 / np.sqrt(width)
        for start in range(0, d, width):
            row = np.zeros(d)
            row[start:start + half] = scale
            row[start + half:start + width] = -scale
            rows.append(row)
        width = half
    return np.array(rows)


class HaarTransform:
    """Orthogonal transform handle backed by the fast Haar routines."""

    def __init__(self, d):
        _check_length(d)
        self.d = d

    def apply(self, x):
        return _haar_forward(np.asarray(x, dtype=float))

    def adjoint(self, y):
        return _haar_inverse(np.asarray(y, dtype=float))


class MatrixTransform:
    """Orthogonal transform handle backed by an explicit matrix."""

    def __init__(self, U):
        U = np.asarray(U, dtype=float)
        if U.ndim != 2 or U.shape[0] != U.shape[1]:
            raise ValueError("orthogonal transform must be a square matrix")
        if not np.allclose(U @ U.T, np.eye(U.shape[0]), atol=1e-10):
            raise ValueError("matrix is not orthogonal")
        self.U = U
        self.d = U.shape[0]

    def apply(self, x):
        return self.U @ x

    def adjoint(self, y):
        return self.U.T @ y

"""Maximal monotone operators exposed through their resolvents.

Every operator knows its ambient dimension and implements
``resolvent(alpha, z) = (I + alpha*A)^{-1} z``. Single-valued operators also
implement ``forward(x)``; set-valued ones raise :class:`SetValuedError`.
Operators are immutable after construction, apart from internal
factorization caches.
"""
import numpy as np
import scipy.linalg

from .errors import DimensionError, NotMonotoneError, NumericalError, SetValuedError

MONOTONE_TOL = -1e-10


def soft_threshold(x, thresh):
    return np.sign(x) * np.maximum(np.abs(x) - thresh, 0.0)


def project_simplex(z):
    """Euclidean projection onto the standard simplex by the sort-based threshold rule."""
    z = np.asarray(z, dtype=float)
    u = np.sort(z)[::-1]
    css = np.cumsum(u) - 1.0
    ks = np.arange(1, z.shape[0] + 1)
    rho = np.nonzero(u - css / ks > 0)[0][-1]
    tau = css[rho] / (rho + 1.0)
    return np.maximum(z - tau, 0.0)


def tv_pair_prox(x1, x2, alpha):
    """Prox of ``alpha*|x2 - x1|``: move both ends toward each other, capped at the midpoint.

    Works elementwise on arrays of pairs.
    """
    diff = x2 - x1
    shift = np.sign(diff) * np.minimum(alpha, np.abs(diff) / 2.0)
    return x1 + shift, x2 - shift


class MonotoneOp:
    """Base class. Subclasses set ``dim`` and override ``_resolvent``/``_forward``."""

    kind = "abstract"
    single_valued = False

    def __init__(self, dim):
        if dim < 1:
            raise DimensionError(f"dimension must be >= 1, got {dim}")
        self.dim = int(dim)

    def resolvent(self, alpha, z):
        return resolvent(self, alpha, z)

    def forward(self, x):
        return forward(self, x)

    def _resolvent(self, alpha, z):
        raise NotImplementedError

    def _forward(self, x):
        raise SetValuedError(f"{self.kind} operator is set-valued; no forward evaluation")

    def __repr__(self):
        return f"{type(self).__name__}(dim={self.dim})"


def _as_vector(op, v, name):
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.shape[0] != op.dim:
        raise DimensionError(f"{name} has shape {v.shape}, operator dimension is {op.dim}")
    if not np.all(np.isfinite(v)):
        raise NumericalError(f"{name} contains non-finite entries")
    return v


def resolvent(op, alpha, z):
    """Return ``J_{alpha op}(z)``, the unique x with ``z - x in alpha*op(x)``."""
    if not alpha > 0:
        raise ValueError(f"resolvent step must be positive, got {alpha}")
    z = _as_vector(op, z, "z")
    x = op._resolvent(float(alpha), z)
    if not np.all(np.isfinite(x)):
        raise NumericalError(f"{op.kind} resolvent produced non-finite output")
    return x


def forward(op, x):
    """Evaluate a single-valued operator at ``x``."""
    x = _as_vector(op, x, "x")
    return op._forward(x)


class Zero(MonotoneOp):
    kind = "zero"
    single_valued = True

    def _resolvent(self, alpha, z):
        return z.copy()

    def _forward(self, x):
        return np.zeros_like(x)


class AffineLinear(MonotoneOp):
    """``x -> M x + c`` with ``M + M^T`` positive semidefinite.

    Resolvent solves ``(I + alpha M) x = z - alpha c`` with an LU factorization
    cached per step size.
    """

    kind = "affine"
    single_valued = True

    def __init__(self, M, c=None):
        M = np.array(M, dtype=float)
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise DimensionError(f"M must be square, got shape {M.shape}")
        super().__init__(M.shape[0])
        lam_min = np.linalg.eigvalsh(0.5 * (M + M.T)).min()
        if lam_min < MONOTONE_TOL:
            raise NotMonotoneError(f"symmetric part has eigenvalue {lam_min:.3e} < 0")
        self.M = M
        self.c = np.zeros(self.dim) if c is None else _as_vector(self, c, "c")
        self.M.flags.writeable = False
        self.c.flags.writeable = False
        self._lu = {}

    def _factor(self, alpha):
        lu = self._lu.get(alpha)
        if lu is None:
            mat = np.eye(self.dim) + alpha * self.M
            lu = scipy.linalg.lu_factor(mat, check_finite=False)
            if np.any(np.diag(lu[0]) == 0.0):
                raise NumericalError("singular factorization of I + alpha*M")
            self._lu[alpha] = lu
        return lu

    def _resolvent(self, alpha, z):
        return scipy.linalg.lu_solve(self._factor(alpha), z - alpha * self.c, check_finite=False)

    def _forward(self, x):
        return self.M @ x + self.c


class SkewRotation2D(AffineLinear):
    """Skew matrix ``[[0, kappa], [-kappa, 0]]`` in the leading 2x2 block, zero elsewhere."""

    kind = "skew_rotation_2d"

    def __init__(self, kappa, dim=2):
        if dim < 2:
            raise DimensionError("SkewRotation2D needs dim >= 2")
        M = np.zeros((dim, dim))
        M[0, 1] = kappa
        M[1, 0] = -kappa
        self.kappa = float(kappa)
        super().__init__(M)


class L1Offset(MonotoneOp):
    """Subdifferential of ``weight * ||x[mask] - a||_1``."""

    kind = "l1_offset"

    def __init__(self, a, mask, dim, weight=1.0):
        super().__init__(dim)
        if weight <= 0:
            raise ValueError("weight must be positive")
        self.mask = np.asarray(mask, dtype=int)
        self.a = np.asarray(a, dtype=float)
        if self.a.shape != self.mask.shape:
            raise DimensionError("offset a must have one entry per masked index")
        if self.mask.size and (self.mask.min() < 0 or self.mask.max() >= dim):
            raise DimensionError("mask index out of range")
        self.weight = float(weight)

    def _resolvent(self, alpha, z):
        x = z.copy()
        x[self.mask] = self.a + soft_threshold(z[self.mask] - self.a, alpha * self.weight)
        return x


class UnitaryL1(MonotoneOp):
    """Subdifferential of ``weight * ||U x - b||_1`` for an orthogonal transform ``U``.

    ``transform`` needs ``apply``/``adjoint`` methods and a ``d`` attribute.
    """

    kind = "unitary_l1"

    def __init__(self, transform, b, weight=1.0):
        super().__init__(transform.d)
        if weight <= 0:
            raise ValueError("weight must be positive")
        self.transform = transform
        self.b = _as_vector(self, b, "b")
        self.weight = float(weight)

    def _resolvent(self, alpha, z):
        u = self.transform.apply(z) - self.b
        return self.transform.adjoint(self.b + soft_threshold(u, alpha * self.weight))


class IndicatorNonneg(MonotoneOp):
    kind = "indicator_nonneg"

    def _resolvent(self, alpha, z):
        return np.maximum(z, 0.0)


class IndicatorSimplex(MonotoneOp):
    kind = "indicator_simplex"

    def _resolvent(self, alpha, z):
        return project_simplex(z)


class IndicatorHalfspace(MonotoneOp):
    """Normal cone of ``{x : mu^T x >= b}``."""

    kind = "indicator_halfspace"

    def __init__(self, mu, b):
        mu = np.asarray(mu, dtype=float)
        super().__init__(mu.shape[0])
        self.mu = _as_vector(self, mu, "mu")
        self.mu_sq = float(self.mu @ self.mu)
        if self.mu_sq == 0.0:
            raise ValueError("halfspace normal mu must be nonzero")
        self.b = float(b)

    def _resolvent(self, alpha, z):
        gap = self.b - self.mu @ z
        if gap <= 0:
            return z.copy()
        return z + (gap / self.mu_sq) * self.mu


class QuadraticLS(MonotoneOp):
    """Gradient of ``0.5 * sum_i (a_i^T x - target)^2`` with rows ``a_i`` of ``A``.

    The Cholesky factor of ``I + alpha A^T A`` is cached for the most recent
    step size; a new step size triggers refactorization.
    """

    kind = "quadratic_ls"
    single_valued = True

    def __init__(self, A, target=0.0):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        super().__init__(A.shape[1])
        self.A = A
        self.target = float(target)
        self.gram = A.T @ A
        self.rhs_shift = self.target * A.sum(axis=0)  # A^T (target * 1)
        self._chol = None

    def _factor(self, alpha):
        cached = self._chol
        if cached is not None and cached[0] == alpha:
            return cached[1]
        mat = np.eye(self.dim) + alpha * self.gram
        try:
            factor = scipy.linalg.cho_factor(mat, check_finite=False)
        except np.linalg.LinAlgError as exc:
            raise NumericalError("Cholesky factorization of I + alpha*A^T A failed") from exc
        self._chol = (alpha, factor)
        return factor

    def _resolvent(self, alpha, z):
        return scipy.linalg.cho_solve(self._factor(alpha), z + alpha * self.rhs_shift,
                                      check_finite=False)

    def _forward(self, x):
        return self.A.T @ (self.A @ x - self.target)

    def value(self, x):
        r = self.A @ x - self.target
        return 0.5 * float(r @ r)


class PoissonNLL(MonotoneOp):
    """Gradient of ``weight * sum_i l(x_i; y_i)`` with the Poisson negative log-likelihood."""

    kind = "poisson_nll"
    single_valued = True

    def __init__(self, y, weight=1.0):
        y = np.asarray(y, dtype=float)
        super().__init__(y.shape[0])
        if np.any(y < 0):
            raise ValueError("Poisson counts must be nonnegative")
        if weight <= 0:
            raise ValueError("weight must be positive")
        self.y = y
        self.weight = float(weight)

    def _resolvent(self, alpha, z):
        s = z - alpha * self.weight
        radicand = s * s + 4.0 * alpha * self.weight * self.y
        assert np.all(radicand >= 0.0)
        return 0.5 * (s + np.sqrt(radicand))

    def _forward(self, x):
        pos = self.y > 0
        if np.any(x[pos] <= 0):
            raise NumericalError("Poisson gradient undefined for x <= 0 where y > 0")
        if np.any(x[~pos] <= 0):
            raise SetValuedError("Poisson subdifferential is set-valued at x = 0 where y = 0")
        out = np.full_like(x, self.weight)
        out[pos] -= self.weight * self.y[pos] / x[pos]
        return out


class NormalConeZero(MonotoneOp):
    """Normal cone of the singleton ``{0}``; its resolvent is the constant 0."""

    kind = "normal_cone_zero"

    def _resolvent(self, alpha, z):
        return np.zeros_like(z)


class PairwiseTV(MonotoneOp):
    """Subdifferential of ``weight * sum |x[i+1] - x[i]|`` over pairs ``i = start, start+2, ...``.

    The pairs are disjoint, so the prox splits into independent two-point problems.
    """

    kind = "pairwise_tv"

    def __init__(self, dim, start, weight=1.0):
        super().__init__(dim)
        if start not in (0, 1):
            raise ValueError("start must be 0 or 1")
        self.start = start
        self.weight = float(weight)
        self.left = np.arange(start, dim - 1, 2)
        self.right = self.left + 1

    def _resolvent(self, alpha, z):
        x = z.copy()
        x[self.left], x[self.right] = tv_pair_prox(z[self.left], z[self.right],
                                                   alpha * self.weight)
        return x

    def value(self, x):
        return self.weight * float(np.abs(x[self.right] - x[self.left]).sum())

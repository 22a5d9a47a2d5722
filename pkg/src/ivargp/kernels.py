"""Covariance kernels, their analytic gradients, and Mercer eigensystems.

Four families are provided:

* isotropic squared exponential  K(x, y) = gamma exp(-||x-y||^2 / 2 l^2)
* ARD squared exponential        (per-dimension correlation lengths)
* tensorized Mehler kernel       (closed form below; standard normal measure)
* finite-rank Mercer kernel      K(x, y) = sum_i lam_i phi_i(x) phi_i(y)

The one-dimensional Mehler kernel with decay parameter t in (0, 1) is

    K(x, y; t) = (1 - t^2)^{-1/2}
                 exp( -(x^2 t^2 - 2 t x y + y^2 t^2) / (2 (1 - t^2)) ),

which equals sum_{i>=0} t^i phi_i(x) phi_i(y) with phi_i the normalized
probabilists' Hermite polynomials. Its eigensystem under the standard normal
measure is therefore available in closed form; multivariate versions multiply
one-dimensional factors and have tensor-product eigenfunctions.

Kernels are immutable; every operation is pure.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, EigensystemUnavailableError
from .spectral import HermiteBasis, hermite_basis_1d

MAX_EIGEN_GRADE = 512


def _as_points(x, dim):
    pts = np.asarray(x, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None] if dim == 1 and pts.shape[0] != dim else pts[None, :]
    if pts.ndim != 2 or pts.shape[1] != dim:
        raise ConfigError(f"expected points with dimension {dim}, got shape {np.shape(x)}")
    return pts


def _as_point(x, dim):
    p = np.asarray(x, dtype=float).reshape(-1)
    if p.shape[0] != dim:
        raise ConfigError(f"point has dimension {p.shape[0]}, kernel expects {dim}")
    return p


class Kernel:
    """Base class: positive semi-definite covariance function on R^d."""

    dim: int
    family: str

    # pairwise (n, m) matrix of K(X_i, Y_j)
    def cross(self, X, Y):
        raise NotImplementedError

    # elementwise (n,) vector of K(X_i, Y_i)
    def pairs(self, X, Y):
        raise NotImplementedError

    # per-dimension gradient with respect to the first argument, (n, m, d)
    def cross_grad_x(self, X, Y):
        raise NotImplementedError

    def gram(self, X):
        g = self.cross(X, X)
        return 0.5 * (g + g.T)

    def diag(self, X):
        return self.pairs(X, X)

    def eval(self, x, y):
        x = _as_point(x, self.dim)
        y = _as_point(y, self.dim)
        return float(self.cross(x[None, :], y[None, :])[0, 0])

    def grad_x(self, x, y):
        x = _as_point(x, self.dim)
        y = _as_point(y, self.dim)
        return self.cross_grad_x(x[None, :], y[None, :])[0, 0]

    def eigensystem(self):
        raise EigensystemUnavailableError(
            f"eigensystem unavailable for kernel family '{self.family}'"
        )

    # raw hyperparameters, used by marginal-likelihood optimization
    @property
    def params(self):
        return np.empty(0)

    @property
    def param_names(self):
        return []

    def with_params(self, values):
        if len(values):
            raise ConfigError(f"kernel family '{self.family}' has no free hyperparameters")
        return self

    def gram_param_grad(self, X):
        """d Gram / d theta for each raw hyperparameter, shape (P, n, n)."""
        n = _as_points(X, self.dim).shape[0]
        return np.empty((0, n, n))

    def to_spec(self):
        raise NotImplementedError


class SquaredExponential(Kernel):
    """Squared exponential kernel, isotropic or ARD, with variance scale."""

    def __init__(self, dim, lengthscales, variance=1.0):
        if dim < 1:
            raise ConfigError("dimension must be positive")
        self.dim = int(dim)
        ls = np.asarray(lengthscales, dtype=float)
        self.isotropic = ls.ndim == 0
        if self.isotropic:
            ls = np.full(dim, float(ls))
        if ls.shape != (dim,):
            raise ConfigError(f"need {dim} correlation lengths, got {ls.shape}")
        if np.any(ls <= 0) or not np.all(np.isfinite(ls)):
            raise ConfigError("correlation lengths must be positive and finite")
        if variance <= 0 or not np.isfinite(variance):
            raise ConfigError("variance scale must be positive and finite")
        self.lengthscales = ls
        self.variance = float(variance)
        self.family = (
            "squared-exponential-isotropic" if self.isotropic else "squared-exponential-ard"
        )

    def cross(self, X, Y):
        X = _as_points(X, self.dim) / self.lengthscales
        Y = _as_points(Y, self.dim) / self.lengthscales
        sq = (
            np.sum(X * X, axis=1)[:, None]
            + np.sum(Y * Y, axis=1)[None, :]
            - 2.0 * (X @ Y.T)
        )
        np.maximum(sq, 0.0, out=sq)
        return self.variance * np.exp(-0.5 * sq)

    def pairs(self, X, Y):
        X = _as_points(X, self.dim)
        Y = _as_points(Y, self.dim)
        sq = np.sum(((X - Y) / self.lengthscales) ** 2, axis=1)
        return self.variance * np.exp(-0.5 * sq)

    def cross_grad_x(self, X, Y):
        X = _as_points(X, self.dim)
        Y = _as_points(Y, self.dim)
        k = self.cross(X, Y)
        diff = Y[None, :, :] - X[:, None, :]
        return k[:, :, None] * diff / self.lengthscales**2

    @property
    def params(self):
        if self.isotropic:
            return np.append(self.lengthscales[:1], self.variance)
        return np.append(self.lengthscales, self.variance)

    @property
    def param_names(self):
        if self.isotropic:
            return ["l", "gamma"]
        return [f"l{d}" for d in range(self.dim)] + ["gamma"]

    def with_params(self, values):
        values = np.asarray(values, dtype=float)
        if self.isotropic:
            if values.shape != (2,):
                raise ConfigError("expected (l, gamma)")
            return SquaredExponential(self.dim, values[0], values[1])
        if values.shape != (self.dim + 1,):
            raise ConfigError(f"expected {self.dim} lengths plus gamma")
        return SquaredExponential(self.dim, values[:-1], values[-1])

    def gram_param_grad(self, X):
        X = _as_points(X, self.dim)
        k = self.gram(X)
        diff2 = (X[:, None, :] - X[None, :, :]) ** 2
        if self.isotropic:
            l = self.lengthscales[0]
            dl = k * diff2.sum(axis=2) / l**3
            return np.stack([dl, k / self.variance])
        grads = [k * diff2[:, :, d] / self.lengthscales[d] ** 3 for d in range(self.dim)]
        grads.append(k / self.variance)
        return np.stack(grads)

    def to_spec(self):
        params = {"gamma": self.variance}
        params["l"] = float(self.lengthscales[0]) if self.isotropic else self.lengthscales.tolist()
        return {"family": self.family, "dim": self.dim, "params": params}


class Mehler(Kernel):
    """Tensorized Mehler kernel with per-dimension decay rates t_d in (0, 1).

    The variance scale is fixed to one; the kernel's closed form has none.
    """

    family = "mehler-tensorized"

    def __init__(self, dim, t):
        if dim < 1:
            raise ConfigError("dimension must be positive")
        self.dim = int(dim)
        t = np.asarray(t, dtype=float)
        if t.ndim == 0:
            t = np.full(dim, float(t))
        if t.shape != (dim,):
            raise ConfigError(f"need {dim} decay rates, got {t.shape}")
        if np.any(t <= 0.0) or np.any(t >= 1.0):
            raise ConfigError("Mehler decay rates must lie strictly inside (0, 1)")
        self.t = t
        self._prefactor = float(np.prod(1.0 / np.sqrt(1.0 - t**2)))

    def cross(self, X, Y):
        X = _as_points(X, self.dim)
        Y = _as_points(Y, self.dim)
        expo = np.zeros((X.shape[0], Y.shape[0]))
        for d in range(self.dim):
            t = self.t[d]
            x = X[:, d][:, None]
            y = Y[:, d][None, :]
            expo -= (t * t * (x * x + y * y) - 2.0 * t * (x * y)) / (2.0 * (1.0 - t * t))
        return self._prefactor * np.exp(expo)

    def pairs(self, X, Y):
        X = _as_points(X, self.dim)
        Y = _as_points(Y, self.dim)
        t = self.t
        expo = -(t * t * (X * X + Y * Y) - 2.0 * t * X * Y) / (2.0 * (1.0 - t * t))
        return self._prefactor * np.exp(expo.sum(axis=1))

    def cross_grad_x(self, X, Y):
        X = _as_points(X, self.dim)
        Y = _as_points(Y, self.dim)
        k = self.cross(X, Y)
        out = np.empty((X.shape[0], Y.shape[0], self.dim))
        for d in range(self.dim):
            t = self.t[d]
            x = X[:, d][:, None]
            y = Y[:, d][None, :]
            out[:, :, d] = k * (t * y - t * t * x) / (1.0 - t * t)
        return out

    @property
    def params(self):
        return self.t.copy()

    @property
    def param_names(self):
        return [f"t{d}" for d in range(self.dim)]

    def with_params(self, values):
        values = np.asarray(values, dtype=float)
        if values.shape != (self.dim,):
            raise ConfigError(f"expected {self.dim} decay rates")
        return Mehler(self.dim, values)

    def gram_param_grad(self, X):
        X = _as_points(X, self.dim)
        k = self.gram(X)
        grads = []
        for d in range(self.dim):
            t = self.t[d]
            x = X[:, d][:, None]
            y = X[:, d][None, :]
            omt2 = 1.0 - t * t
            # d/dt of the one-dimensional factor, divided by that factor
            g = t / omt2 + (x * y * (1.0 + t * t) - t * (x * x + y * y)) / omt2**2
            grads.append(k * g)
        return np.stack(grads)

    def eigensystem(self):
        return MehlerEigenSystem(self.t)

    def to_spec(self):
        return {"family": self.family, "dim": self.dim, "params": {"t": self.t.tolist()}}


class FiniteRankKernel(Kernel):
    """Kernel with finitely many Mercer terms and an explicit basis."""

    family = "finite-rank-mercer"

    def __init__(self, eigenvalues, basis, dim=None):
        lam = np.asarray(eigenvalues, dtype=float)
        if lam.ndim != 1 or lam.size == 0:
            raise ConfigError("need a nonempty 1-D eigenvalue list")
        if np.any(lam < 0) or not np.all(np.isfinite(lam)):
            raise ConfigError("eigenvalues must be nonnegative and finite")
        if np.any(np.diff(lam) > 1e-12 * max(lam[0], 1.0)):
            raise ConfigError("eigenvalues must be nonincreasing")
        self.eigenvalues = lam
        self.basis = basis
        self.dim = int(dim) if dim is not None else basis.dim
        if len(basis) < lam.size:
            raise ConfigError("basis has fewer functions than eigenvalues")

    @property
    def rank(self):
        return self.eigenvalues.size

    def _phi(self, X):
        return self.basis.matrix(_as_points(X, self.dim))[:, : self.rank]

    def cross(self, X, Y):
        return (self._phi(X) * self.eigenvalues) @ self._phi(Y).T

    def pairs(self, X, Y):
        return np.sum(self._phi(X) * self.eigenvalues * self._phi(Y), axis=1)

    def cross_grad_x(self, X, Y):
        X = _as_points(X, self.dim)
        g = self.basis.grad(X)[:, : self.rank, :]
        phi_y = self._phi(Y) * self.eigenvalues
        return np.einsum("ikd,jk->ijd", g, phi_y)

    def eigensystem(self):
        return FiniteEigenSystem(self.eigenvalues, self.basis, measure="standard-normal")

    def to_spec(self):
        if not isinstance(self.basis, HermiteBasis):
            raise ConfigError("only Hermite-based finite-rank kernels are serializable")
        return {
            "family": self.family,
            "dim": self.dim,
            "params": {
                "eigenvalues": self.eigenvalues.tolist(),
                "indices": self.basis.indices[: self.rank].tolist(),
            },
        }


class EigenSystem:
    """Eigenvalue/eigenfunction view of a kernel under a reference measure.

    ``truncation`` is the number of terms (None when the expansion is
    infinite). Eigenvalues are nonincreasing; ties keep a deterministic
    graded-lexicographic multi-index order.
    """

    measure: str
    truncation: int | None

    def eigenvalues(self, count):
        raise NotImplementedError

    def basis(self, count):
        raise NotImplementedError

    def basis_matrix(self, points, count):
        return self.basis(count).matrix(points)

    def basis_grad(self, points, count):
        return self.basis(count).grad(points)


def _graded_indices(dim, grade):
    """All multi-indices with |k| = grade, lexicographically ascending."""
    if dim == 1:
        return [(grade,)]
    out = []
    for first in range(grade + 1):
        out.extend((first,) + rest for rest in _graded_indices(dim - 1, grade - first))
    return out


def _top_mehler_indices(t, count):
    """First ``count`` multi-indices of the tensor Mehler eigensystem, sorted
    by eigenvalue prod(t_d^{k_d}) nonincreasing; ties keep graded-lex order."""
    t = np.asarray(t, dtype=float)
    t_max = float(t.max())
    log_t = np.log(t)
    indices = []
    values = []
    grade = 0
    while True:
        new = _graded_indices(t.shape[0], grade)
        indices.extend(new)
        values.extend(float(np.exp(np.dot(k, log_t))) for k in new)
        if len(values) >= count:
            kth = np.sort(np.asarray(values))[::-1][count - 1]
            if t_max ** (grade + 1) <= kth:
                break
        grade += 1
        if grade > MAX_EIGEN_GRADE:
            raise ConfigError("eigenvalue enumeration exceeded the supported grade range")
    order = np.argsort(-np.asarray(values), kind="stable")[:count]
    idx = np.asarray(indices, dtype=int)[order]
    lam = np.asarray(values)[order]
    return lam, idx


class MehlerEigenSystem(EigenSystem):
    """Closed-form eigensystem of the tensorized Mehler kernel: eigenvalues
    prod(t_d^{k_d}) with tensorized normalized Hermite eigenfunctions."""

    measure = "standard-normal"
    truncation = None

    def __init__(self, t):
        t = np.asarray(t, dtype=float)
        if t.ndim == 0:
            t = t[None]
        if np.any(t <= 0.0) or np.any(t >= 1.0):
            raise ConfigError("Mehler decay rates must lie strictly inside (0, 1)")
        self.t = t
        self._cache_count = 0
        self._cache = None

    @property
    def dim(self):
        return self.t.shape[0]

    def _ensure(self, count):
        if count > self._cache_count:
            self._cache = _top_mehler_indices(self.t, count)
            self._cache_count = count
        return self._cache

    def eigenvalues(self, count):
        lam, _ = self._ensure(count)
        return lam[:count].copy()

    def multi_indices(self, count):
        _, idx = self._ensure(count)
        return idx[:count].copy()

    def basis(self, count):
        return HermiteBasis(self.multi_indices(count))


class FiniteEigenSystem(EigenSystem):
    """Explicitly stored eigensystem."""

    def __init__(self, eigenvalues, basis, measure="standard-normal"):
        lam = np.asarray(eigenvalues, dtype=float)
        if np.any(lam < 0) or not np.all(np.isfinite(lam)):
            raise ConfigError("eigenvalues must be nonnegative and finite")
        self._eigenvalues = lam
        self._basis = basis
        self.measure = measure
        self.truncation = lam.size

    def eigenvalues(self, count):
        if count > self.truncation:
            raise ConfigError(f"eigensystem has only {self.truncation} terms")
        return self._eigenvalues[:count].copy()

    def basis(self, count):
        if count > self.truncation:
            raise ConfigError(f"eigensystem has only {self.truncation} terms")
        if isinstance(self._basis, HermiteBasis):
            return self._basis.truncated(count)
        return self._basis


def eigensystem_of(kernel):
    """Eigensystem of a kernel, when a closed form is implemented."""
    return kernel.eigensystem()


def truncate_kernel(eigensystem, ell):
    """Finite-rank kernel keeping the leading ``ell`` Mercer terms."""
    if ell < 1:
        raise ConfigError("truncation length must be >= 1")
    if eigensystem.truncation is not None and ell > eigensystem.truncation:
        raise ConfigError(
            f"cannot truncate to {ell} terms; eigensystem has {eigensystem.truncation}"
        )
    basis = eigensystem.basis(ell)
    lam = eigensystem.eigenvalues(ell)
    return FiniteRankKernel(lam, basis, dim=basis.dim)


def kernel_from_spec(spec):
    """Build a kernel from its JSON-style specification dict."""
    try:
        family = spec["family"]
        dim = int(spec["dim"])
        params = spec.get("params", {})
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"malformed kernel spec: {exc}") from exc
    if family == "squared-exponential-isotropic":
        return SquaredExponential(dim, float(params["l"]), float(params.get("gamma", 1.0)))
    if family == "squared-exponential-ard":
        return SquaredExponential(
            dim, np.asarray(params["l"], dtype=float), float(params.get("gamma", 1.0))
        )
    if family == "mehler-tensorized":
        return Mehler(dim, np.asarray(params["t"], dtype=float))
    if family == "finite-rank-mercer":
        basis = HermiteBasis(np.asarray(params["indices"], dtype=int))
        return FiniteRankKernel(np.asarray(params["eigenvalues"], dtype=float), basis, dim=dim)
    raise ConfigError(f"unknown kernel family '{family}'")

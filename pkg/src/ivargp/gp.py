"""Gaussian-process regression with a fixed constant prior mean.

Posterior quantities follow the standard conditioning formulas: with
A = Gram + sigma2 I and alpha = A^{-1} (y - m0),

    mean(x) = m0 + k(x)^T alpha
    cov(x, x') = K(x, x') - k(x)^T A^{-1} k(x')

where k(x) is the vector of covariances between x and the design points.
Factorizations are Cholesky with a single jitter retry (1e-10 * trace / N);
a second failure raises IllConditionedError naming the estimated smallest
eigenvalue.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.optimize import minimize

from .errors import ConfigError, IllConditionedError, NumericalError

log = logging.getLogger(__name__)

DEFAULT_NUGGET = 1e-10
JITTER_SCALE = 1e-10

# logit-transform range for Mehler decay rates during hyperparameter fitting
T_LOWER = 1e-3
T_UPPER = 1.0 - 1e-3


@dataclass
class Design:
    """An ordered set of evaluation points with optional observations."""

    points: np.ndarray
    y: np.ndarray | None = None
    provenance: str = "manual"

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.size and not np.all(np.isfinite(pts)):
            raise ConfigError("design points must be finite")
        self.points = pts
        if self.y is not None:
            y = np.asarray(self.y, dtype=float).reshape(-1)
            if y.shape[0] != pts.shape[0]:
                raise ConfigError("observation count must match point count")
            self.y = y

    @property
    def n(self):
        return self.points.shape[0]

    @property
    def dim(self):
        return self.points.shape[1] if self.points.ndim == 2 else 0


def chol_with_jitter(a, jitter_scale=JITTER_SCALE):
    """Cholesky factorization with one jitter retry.

    Returns (cho_factor result, jitter added). Raises IllConditionedError if
    the factorization fails even after the retry.
    """
    try:
        return cho_factor(a, lower=True), 0.0
    except np.linalg.LinAlgError:
        pass
    n = a.shape[0]
    jitter = jitter_scale * np.trace(a) / n
    try:
        return cho_factor(a + jitter * np.eye(n), lower=True), jitter
    except np.linalg.LinAlgError as exc:
        min_eig = float(np.linalg.eigvalsh(0.5 * (a + a.T)).min())
        raise IllConditionedError(
            f"ill-conditioned covariance: factorization failed even with jitter "
            f"{jitter:.3e}; min eigenvalue approximately {min_eig:.3e}",
            min_eig=min_eig,
        ) from exc


class GpPosterior:
    """Factorized posterior state; immutable after construction.

    Observations are optional: covariance queries depend only on the design
    points, while mean queries require data.
    """

    def __init__(self, kernel, points, nugget=0.0, y=None, prior_mean=0.0):
        if nugget < 0:
            raise ConfigError("nugget must be nonnegative")
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.size and pts.shape[1] != kernel.dim:
            raise ConfigError("design dimension does not match kernel dimension")
        self.kernel = kernel
        self.points = pts
        self.nugget = float(nugget)
        self.prior_mean = float(prior_mean)
        self.y = None if y is None else np.asarray(y, dtype=float).reshape(-1)
        if self.y is not None and self.y.shape[0] != pts.shape[0]:
            raise ConfigError("observation count must match point count")
        self.jitter = 0.0
        if self.n:
            a = kernel.gram(pts) + self.nugget * np.eye(self.n)
            self._cho, self.jitter = chol_with_jitter(a)
            self.alpha = (
                None if self.y is None else cho_solve(self._cho, self.y - self.prior_mean)
            )
        else:
            self._cho = None
            self.alpha = None

    @property
    def n(self):
        return self.points.shape[0]

    def _query(self, x):
        q = np.asarray(x, dtype=float)
        single = q.ndim == 1 and self.kernel.dim > 1 or q.ndim == 0
        if q.ndim == 0:
            q = q[None, None]
        elif q.ndim == 1:
            q = q[None, :] if self.kernel.dim > 1 else q[:, None]
        return q, single

    def mean(self, x):
        if self.y is None and self.n:
            raise ConfigError("posterior mean requires observations")
        q, single = self._query(x)
        if self.n == 0:
            out = np.full(q.shape[0], self.prior_mean)
        else:
            out = self.prior_mean + self.kernel.cross(self.points, q).T @ self.alpha
        return float(out[0]) if single else out

    def var(self, x):
        q, single = self._query(x)
        prior = self.kernel.diag(q)
        if self.n:
            c = self.kernel.cross(self.points, q)
            prior = prior - np.sum(c * cho_solve(self._cho, c), axis=0)
        return float(prior[0]) if single else prior

    def cov(self, x, x2):
        q, single = self._query(x)
        q2, single2 = self._query(x2)
        if q.shape != q2.shape:
            raise ConfigError("cov expects matching query shapes")
        prior = self.kernel.pairs(q, q2)
        if self.n:
            c = self.kernel.cross(self.points, q)
            c2 = self.kernel.cross(self.points, q2)
            prior = prior - np.sum(c * cho_solve(self._cho, c2), axis=0)
        return float(prior[0]) if (single and single2) else prior

    def cardinal(self, x):
        """Cardinal-function values u(x), shape (q, N): solves A u = k(x)."""
        q, single = self._query(x)
        if self.n == 0:
            raise ConfigError("cardinal functions require a nonempty design")
        u = cho_solve(self._cho, self.kernel.cross(self.points, q)).T
        return u[0] if single else u


def fit(kernel, design, nugget=DEFAULT_NUGGET, prior_mean=0.0):
    """Condition the GP on a design with observations."""
    if design.y is None:
        raise ConfigError("fit requires a design with observations")
    return GpPosterior(kernel, design.points, nugget=nugget, y=design.y, prior_mean=prior_mean)


def posterior_from_points(kernel, points, nugget=DEFAULT_NUGGET):
    """Observation-free posterior state for variance-only queries."""
    return GpPosterior(kernel, points, nugget=nugget)


def log_marginal_likelihood(kernel, points, y, nugget, prior_mean=0.0):
    """Log marginal likelihood and its gradient.

    value = -1/2 r^T A^{-1} r - 1/2 log|A| - N/2 log(2 pi), r = y - m0.

    Returns (value, grads) where grads maps each raw kernel hyperparameter
    name, plus "log_sigma2", to the derivative of the value.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    y = np.asarray(y, dtype=float).reshape(-1)
    n = pts.shape[0]
    if n == 0:
        raise ConfigError("log marginal likelihood requires observations")
    a = kernel.gram(pts) + nugget * np.eye(n)
    cho, _ = chol_with_jitter(a)
    r = y - prior_mean
    alpha = cho_solve(cho, r)
    logdet = 2.0 * np.sum(np.log(np.diag(cho[0])))
    value = -0.5 * float(r @ alpha) - 0.5 * logdet - 0.5 * n * np.log(2.0 * np.pi)
    # dL/dtheta = 1/2 tr((alpha alpha^T - A^{-1}) dA/dtheta)
    a_inv = cho_solve(cho, np.eye(n))
    m = np.outer(alpha, alpha) - a_inv
    grads = {}
    dgram = kernel.gram_param_grad(pts)
    for name, dk in zip(kernel.param_names, dgram):
        grads[name] = 0.5 * float(np.sum(m * dk))
    grads["log_sigma2"] = 0.5 * nugget * float(np.trace(m))
    return value, grads


@dataclass
class HyperparameterFit:
    kernel: object
    sigma2: float
    lml: float
    n_failed_restarts: int = 0


def _transform_kind(name):
    if name.startswith("t"):
        return "logit"
    return "log"


def _to_z(name, p):
    if _transform_kind(name) == "log":
        return np.log(p)
    u = (p - T_LOWER) / (T_UPPER - T_LOWER)
    u = np.clip(u, 1e-12, 1.0 - 1e-12)
    return np.log(u / (1.0 - u))


def _from_z(name, z):
    if _transform_kind(name) == "log":
        return np.exp(z)
    s = 1.0 / (1.0 + np.exp(-z))
    return T_LOWER + (T_UPPER - T_LOWER) * s


def _dp_dz(name, z):
    if _transform_kind(name) == "log":
        return np.exp(z)
    s = 1.0 / (1.0 + np.exp(-z))
    return (T_UPPER - T_LOWER) * s * (1.0 - s)


def _default_bounds(name, points, y):
    span = float(np.mean(points.max(axis=0) - points.min(axis=0))) if points.size else 1.0
    span = max(span, 1e-3)
    var_y = max(float(np.var(y)), 1e-12)
    if name == "gamma":
        return (1e-8, max(1e4 * var_y, 1e2))
    if name.startswith("l"):
        return (max(1e-3, 1e-3 * span), max(1e3, 1e3 * span))
    if name.startswith("t"):
        return (T_LOWER, T_UPPER)
    if name == "sigma2":
        return (1e-12, max(10.0 * var_y, 1e-6))
    raise ConfigError(f"no default bounds for hyperparameter '{name}'")


def _restart_sample(name, rng, points, y):
    span = float(np.mean(points.max(axis=0) - points.min(axis=0))) if points.size else 1.0
    span = max(span, 1e-3)
    var_y = max(float(np.var(y)), 1e-12)
    if name == "gamma":
        return np.exp(rng.uniform(np.log(0.1 * var_y), np.log(10.0 * var_y)))
    if name.startswith("l"):
        return np.exp(rng.uniform(np.log(0.05 * span), np.log(2.0 * span)))
    if name.startswith("t"):
        return rng.uniform(0.05, 0.95)
    if name == "sigma2":
        return np.exp(rng.uniform(np.log(1e-10), np.log(max(var_y, 1e-8))))
    raise ConfigError(f"no restart rule for hyperparameter '{name}'")


def optimize_hyperparameters(
    kernel,
    points,
    y,
    bounds=None,
    n_restarts=8,
    seed=0,
    sigma2_init=1e-6,
    max_iter=200,
):
    """Fit kernel hyperparameters and the nugget by maximizing the log
    marginal likelihood with a multi-restart quasi-Newton search.

    Optimization runs in log space for positive parameters and through a
    bounded logit for Mehler decay rates. Returns the restart with the
    highest final likelihood.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    y = np.asarray(y, dtype=float).reshape(-1)
    if y.shape[0] < 2:
        raise ConfigError("hyperparameter optimization needs at least 2 observations")
    names = list(kernel.param_names) + ["sigma2"]
    user_bounds = dict(bounds or {})
    z_bounds = []
    for name in names:
        lo, hi = user_bounds.get(name, _default_bounds(name, pts, y))
        if not (0 < lo < hi):
            raise ConfigError(f"invalid bounds for '{name}': ({lo}, {hi})")
        if name.startswith("t"):
            lo = max(lo, T_LOWER)
            hi = min(hi, T_UPPER)
            z_bounds.append((_to_z(name, lo + 1e-9), _to_z(name, hi - 1e-9)))
        else:
            z_bounds.append((np.log(lo), np.log(hi)))
    penalty = 1e12

    def objective(z):
        p = np.array([_from_z(n_, z_) for n_, z_ in zip(names, z)])
        try:
            k = kernel.with_params(p[:-1])
            value, grads = log_marginal_likelihood(k, pts, y, p[-1])
        except (IllConditionedError, np.linalg.LinAlgError):
            return penalty, np.zeros_like(z)
        g = np.empty_like(z)
        for i, name in enumerate(names[:-1]):
            g[i] = -grads[name] * _dp_dz(name, z[i])
        g[-1] = -grads["log_sigma2"]
        return -value, g

    rng = np.random.default_rng(seed)
    best = None
    n_failed = 0
    for r in range(n_restarts):
        if r == 0:
            p0 = np.append(kernel.params, max(sigma2_init, 1e-12))
        else:
            p0 = np.array([_restart_sample(n_, rng, pts, y) for n_ in names])
        z0 = np.array([_to_z(n_, p_) for n_, p_ in zip(names, p0)])
        z0 = np.clip(z0, [b[0] for b in z_bounds], [b[1] for b in z_bounds])
        res = minimize(
            objective,
            z0,
            jac=True,
            method="L-BFGS-B",
            bounds=z_bounds,
            options={"maxiter": max_iter},
        )
        if not np.isfinite(res.fun) or res.fun >= penalty:
            n_failed += 1
            continue
        if best is None or res.fun < best.fun:
            best = res
    if best is None:
        raise IllConditionedError("all hyperparameter restarts failed factorization")
    p = np.array([_from_z(n_, z_) for n_, z_ in zip(names, best.x)])
    fitted = kernel.with_params(p[:-1])
    return HyperparameterFit(
        kernel=fitted, sigma2=float(p[-1]), lml=-float(best.fun), n_failed_restarts=n_failed
    )


def cardinal_functions(kernel, points, nugget, x):
    """Cardinal-function vector u(x) in R^N for the given design."""
    return GpPosterior(kernel, points, nugget=nugget).cardinal(x)


def lebesgue_constant(kernel, points, nugget, grid):
    """max over the grid of sum_j |u_j(x)|; a grid-restricted lower bound of
    the true supremum."""
    grid = np.asarray(grid, dtype=float)
    if grid.ndim == 1:
        grid = grid[:, None]
    if grid.size == 0:
        raise ConfigError("evaluation grid is empty")
    u = GpPosterior(kernel, points, nugget=nugget).cardinal(grid)
    return float(np.abs(u).sum(axis=1).max())


def design_to_csv(design, path):
    """Write a design as CSV with columns x1..xd[,y][,provenance]."""
    dim = design.dim
    header = [f"x{i + 1}" for i in range(dim)]
    if design.y is not None:
        header.append("y")
    header.append("provenance")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(design.n):
            row = [repr(v) for v in design.points[i]]
            if design.y is not None:
                row.append(repr(design.y[i]))
            row.append(design.provenance)
            writer.writerow(row)


def design_from_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [row for row in reader if row]
    x_cols = [i for i, h in enumerate(header) if h.startswith("x")]
    y_col = header.index("y") if "y" in header else None
    prov_col = header.index("provenance") if "provenance" in header else None
    pts = np.array([[float(row[i]) for i in x_cols] for row in rows])
    y = np.array([float(row[y_col]) for row in rows]) if y_col is not None else None
    provenance = rows[0][prov_col] if (prov_col is not None and rows) else "manual"
    return Design(points=pts, y=y, provenance=provenance)

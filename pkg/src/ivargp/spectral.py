"""Normalized Hermite bases, orthogonalizing quadrature, and pseudospectral
projection.

The polynomial family used throughout is the probabilists' Hermite family
normalized against the standard normal measure,

    phi_n(x) = He_n(x) / sqrt(n!),

so that E[phi_i(X) phi_j(X)] = delta_ij for X ~ N(0, 1). Multivariate bases
are tensor products of these, indexed by rows of an integer multi-index
array. Point sets are always arrays of shape (n, d).

This module also evaluates two quantities that relate a finite-rank GP
posterior mean to the pseudospectral projection built on the same nodes: an
upper bound on their squared L2 distance, and an exact rewriting of the
leading part of the GP integrated variance in terms of the non-orthogonalized
basis tail.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, eigh_tridiagonal

from .errors import ConfigError, IllConditionedError, NonOrthogonalizingRuleError

# Discrete-orthogonality defect thresholds for projection-type operations.
DEFECT_WARN = 1e-6
DEFECT_FAIL = 1e-2

MAX_TENSOR_NODES = 10_000_000
MAX_GH_NODES = 200


def hermite_normalized(n, x):
    """Evaluate phi_n(x) = He_n(x)/sqrt(n!) at scalar or array ``x``.

    Uses the normalized three-term recurrence

        phi_{k+1}(x) = (x phi_k(x) - sqrt(k) phi_{k-1}(x)) / sqrt(k+1),

    which keeps intermediate values on the scale of the result.
    """
    if n < 0:
        raise ConfigError("Hermite degree must be nonnegative")
    x = np.asarray(x, dtype=float)
    prev = np.ones_like(x)
    if n == 0:
        return prev
    cur = x.copy()
    for k in range(1, n):
        prev, cur = cur, (x * cur - np.sqrt(k) * prev) / np.sqrt(k + 1.0)
    return cur


def hermite_matrix(x, count):
    """Matrix of phi_0 .. phi_{count-1} evaluated at the 1-D points ``x``.

    Returns shape (len(x), count).
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.empty((x.size, count))
    out[:, 0] = 1.0
    if count > 1:
        out[:, 1] = x
    for k in range(1, count - 1):
        out[:, k + 1] = (x * out[:, k] - np.sqrt(k) * out[:, k - 1]) / np.sqrt(k + 1.0)
    return out


def hermite_grad_matrix(x, count):
    """Derivatives phi_n'(x) = sqrt(n) phi_{n-1}(x), shape (len(x), count)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    h = hermite_matrix(x, max(count - 1, 1))
    out = np.zeros((x.size, count))
    for k in range(1, count):
        out[:, k] = np.sqrt(k) * h[:, k - 1]
    return out


@dataclass(frozen=True)
class HermiteBasis:
    """Tensorized normalized Hermite basis defined by integer multi-indices.

    ``indices`` has shape (count, dim); row i is the per-dimension degree of
    basis function i.
    """

    indices: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=int)
        if idx.ndim != 2:
            raise ConfigError("multi-index array must be 2-D")
        if np.any(idx < 0):
            raise ConfigError("multi-indices must be nonnegative")
        object.__setattr__(self, "indices", idx)

    def __len__(self):
        return self.indices.shape[0]

    @property
    def dim(self):
        return self.indices.shape[1]

    def truncated(self, count):
        if count < 1 or count > len(self):
            raise ConfigError(f"cannot truncate basis of size {len(self)} to {count}")
        return HermiteBasis(self.indices[:count])

    def matrix(self, points):
        """Evaluate all basis functions at ``points`` (n, dim) -> (n, count)."""
        pts = _as_points(points, self.dim)
        out = np.ones((pts.shape[0], len(self)))
        for d in range(self.dim):
            h = hermite_matrix(pts[:, d], int(self.indices[:, d].max()) + 1)
            out *= h[:, self.indices[:, d]]
        return out

    def grad(self, points):
        """Gradients of all basis functions, shape (n, count, dim)."""
        pts = _as_points(points, self.dim)
        n, count, dim = pts.shape[0], len(self), self.dim
        vals = []
        ders = []
        for d in range(dim):
            m = int(self.indices[:, d].max()) + 1
            vals.append(hermite_matrix(pts[:, d], m)[:, self.indices[:, d]])
            ders.append(hermite_grad_matrix(pts[:, d], m)[:, self.indices[:, d]])
        out = np.empty((n, count, dim))
        for d in range(dim):
            g = ders[d].copy()
            for other in range(dim):
                if other != d:
                    g *= vals[other]
            out[:, :, d] = g
        return out


def hermite_basis_1d(count):
    return HermiteBasis(np.arange(count)[:, None])


def _as_points(points, dim):
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.ndim != 2 or pts.shape[1] != dim:
        raise ConfigError(f"expected points of shape (n, {dim}), got {pts.shape}")
    return pts


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes and weights for a reference probability measure.

    ``exactness`` is the total polynomial degree the rule integrates exactly
    (per dimension for tensor rules).
    """

    nodes: np.ndarray
    weights: np.ndarray
    measure: str
    exactness: int

    def __post_init__(self):
        nodes = np.atleast_2d(np.asarray(self.nodes, dtype=float))
        weights = np.asarray(self.weights, dtype=float)
        if nodes.shape[0] != weights.shape[0]:
            raise ConfigError("node and weight counts differ")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    def __len__(self):
        return self.weights.shape[0]

    @property
    def dim(self):
        return self.nodes.shape[1]


def gauss_hermite(n):
    """Gauss-Hermite rule for the standard normal probability measure.

    Nodes and weights come from the symmetric tridiagonal Jacobi matrix of the
    probabilists' Hermite recurrence (off-diagonal sqrt(k)); the weights are
    the squared first eigenvector components. Exactness degree is 2n - 1.
    """
    if n < 1:
        raise ConfigError("node count must be >= 1")
    if n > MAX_GH_NODES:
        raise ConfigError(f"gauss_hermite(n={n}): unvalidated range (max {MAX_GH_NODES})")
    if n == 1:
        return QuadratureRule(np.zeros((1, 1)), np.ones(1), "standard-normal", 1)
    beta = np.sqrt(np.arange(1, n, dtype=float))
    nodes, vecs = eigh_tridiagonal(np.zeros(n), beta)
    weights = vecs[0] ** 2
    # enforce exact symmetry of the rule
    nodes = 0.5 * (nodes - nodes[::-1])
    weights = 0.5 * (weights + weights[::-1])
    weights /= weights.sum()
    return QuadratureRule(nodes[:, None], weights, "standard-normal", 2 * n - 1)


def tensor_rule(rules):
    """Tensor product of quadrature rules.

    Node ordering is deterministic: the index of the first rule varies
    slowest (row-major over the index grid). Exactness is the minimum of the
    factors' exactness degrees.
    """
    rules = list(rules)
    if not rules:
        raise ConfigError("need at least one rule")
    if len(rules) == 1:
        return rules[0]
    total = 1
    for r in rules:
        total *= len(r)
    if total > MAX_TENSOR_NODES:
        raise ConfigError(f"tensor rule would have {total} nodes (limit {MAX_TENSOR_NODES})")
    grids = list(itertools.product(*[range(len(r)) for r in rules]))
    idx = np.array(grids, dtype=int)
    nodes = np.hstack([r.nodes[idx[:, j]] for j, r in enumerate(rules)])
    weights = np.ones(total)
    for j, r in enumerate(rules):
        weights *= r.weights[idx[:, j]]
    measures = {r.measure for r in rules}
    measure = measures.pop() if len(measures) == 1 else "product"
    return QuadratureRule(nodes, weights, measure, min(r.exactness for r in rules))


def orthogonality_defect(rule, basis, ell):
    """max_{i,j <= ell} | sum_k w_k phi_i(x_k) phi_j(x_k) - delta_ij |."""
    if ell < 1:
        raise ConfigError("ell must be >= 1")
    phi = basis.matrix(rule.nodes)[:, :ell]
    gram = phi.T @ (rule.weights[:, None] * phi)
    return float(np.abs(gram - np.eye(ell)).max())


def _check_orthogonalizing(rule, basis, ell, what):
    defect = orthogonality_defect(rule, basis, ell)
    if defect > DEFECT_FAIL:
        raise NonOrthogonalizingRuleError(
            f"{what}: rule fails to orthogonalize the first {ell} basis functions "
            f"(defect {defect:.3e} > {DEFECT_FAIL:g})"
        )
    if defect > DEFECT_WARN:
        warnings.warn(
            f"{what}: orthogonality defect {defect:.3e} exceeds {DEFECT_WARN:g}",
            stacklevel=3,
        )
    return defect


@dataclass(frozen=True)
class PsaApproximation:
    """Pseudospectral projection: coefficients against an orthonormal basis."""

    basis: HermiteBasis
    coefficients: np.ndarray
    rule: QuadratureRule

    def __call__(self, points):
        return self.basis.matrix(points) @ self.coefficients


def psa_fit(rule, basis, ell, y):
    """Project observations at the rule nodes onto the first ``ell`` basis
    functions: c_i = sum_k w_k y_k phi_i(x_k).

    The rule must discretely orthogonalize those basis functions; otherwise
    the projection aliases internally.
    """
    y = np.asarray(y, dtype=float)
    if y.shape[0] != len(rule):
        raise ConfigError("observation count must match rule node count")
    _check_orthogonalizing(rule, basis, ell, "psa_fit")
    sub = basis.truncated(ell)
    coeffs = sub.matrix(rule.nodes).T @ (rule.weights * y)
    return PsaApproximation(sub, coeffs, rule)


def error_spectrum(approx, f, basis, ell_max, rule):
    """Magnitudes |<approx - f, phi_i>| for i < ell_max, via ``rule``.

    The rule should be of much higher order than the approximations under
    study (exactness at least 2 * ell_max).
    """
    if rule.exactness < 2 * ell_max:
        raise ConfigError("reference rule exactness must be >= 2 * ell_max")
    e = np.asarray(approx(rule.nodes), dtype=float) - np.asarray(f(rule.nodes), dtype=float)
    phi = basis.matrix(rule.nodes)[:, :ell_max]
    return np.abs(phi.T @ (rule.weights * e))


def projection_spectrum(f, basis, ell_max, rule):
    """Magnitudes of the exact projections |<f, phi_i>| for i < ell_max."""
    return error_spectrum(lambda pts: np.zeros(pts.shape[0]), f, basis, ell_max, rule)


def _eigen_arrays(eigensystem, points, count):
    lam = np.asarray(eigensystem.eigenvalues(count), dtype=float)
    phi = eigensystem.basis_matrix(points, count)
    return lam, phi


@dataclass
class BoundReport:
    """Right-hand side of the GP-vs-projection difference bound, with the
    intermediate constants that enter it."""

    value: float
    head_term: float
    tail_term: float
    m_const: float
    w_max: float
    s_min: float
    ell: int
    ell_gp: int
    sigma2: float
    n_nodes: int

    def to_dict(self):
        return {
            "value": self.value,
            "head_term": self.head_term,
            "tail_term": self.tail_term,
            "m_const": self.m_const,
            "w_max": self.w_max,
            "s_min": self.s_min,
            "ell": self.ell,
            "ell_gp": self.ell_gp,
            "sigma2": self.sigma2,
            "n_nodes": self.n_nodes,
        }


def gp_psa_bound(eigensystem, rule, ell, ell_gp, sigma2, y):
    """Upper bound on ||m - f_ell||^2_{L2} between the GP posterior mean with
    a rank-``ell_gp`` kernel and the pseudospectral projection onto the first
    ``ell`` eigenfunctions, both built from data ``y`` at the rule nodes.

    Evaluates

        ||y||^2 ( ell N M^2 w_max^2 / (s_N + sigma2)^2
                  * || sum_{j>ell} lam_j p_j p_j^T + sigma2 I ||_2^2
                  + sum_{j>ell} lam_j^2 p_j^T R^2 p_j )

    with p_j the node-evaluation vector of eigenfunction j, M the largest
    |phi_i| over nodes and i <= ell, w_max the largest weight, s_N the
    smallest eigenvalue of the nugget-free covariance matrix, and
    R = (Gram + sigma2 I)^{-1}. Requires sigma2 > 0.
    """
    if not (1 <= ell <= ell_gp):
        raise ConfigError("need 1 <= ell <= ell_gp")
    if sigma2 <= 0:
        raise ConfigError("the bound is stated for sigma2 > 0")
    y = np.asarray(y, dtype=float)
    _check_orthogonalizing(rule, eigensystem.basis(ell), ell, "gp_psa_bound")
    lam, phi = _eigen_arrays(eigensystem, rule.nodes, ell_gp)
    n = len(rule)
    gram = (phi * lam) @ phi.T
    gram = 0.5 * (gram + gram.T)
    s_min = float(np.linalg.eigvalsh(gram).min())
    a = gram + sigma2 * np.eye(n)
    try:
        cho = cho_factor(a, lower=True)
    except np.linalg.LinAlgError as exc:
        raise IllConditionedError(f"bound covariance factorization failed: {exc}") from exc
    phi_tail = phi[:, ell:]
    lam_tail = lam[ell:]
    tail_mat = (phi_tail * lam_tail) @ phi_tail.T + sigma2 * np.eye(n)
    tail_mat = 0.5 * (tail_mat + tail_mat.T)
    tail_norm = float(np.abs(np.linalg.eigvalsh(tail_mat)).max())
    if phi_tail.shape[1]:
        s1 = cho_solve(cho, phi_tail)
        tail_term = float(np.sum(lam_tail**2 * np.sum(s1 * s1, axis=0)))
    else:
        tail_term = 0.0
    m_const = float(np.abs(phi[:, :ell]).max())
    w_max = float(rule.weights.max())
    head_term = ell * n * m_const**2 * w_max**2 / (s_min + sigma2) ** 2 * tail_norm**2
    value = float(y @ y) * (head_term + tail_term)
    return BoundReport(
        value=value,
        head_term=head_term,
        tail_term=tail_term,
        m_const=m_const,
        w_max=w_max,
        s_min=s_min,
        ell=ell,
        ell_gp=ell_gp,
        sigma2=sigma2,
        n_nodes=n,
    )


def ivar_orthogonal_identity(eigensystem, rule, ell, ell_gp, sigma2):
    """Both sides of the exact rewriting of the first-``ell`` portion of the
    GP integrated variance under an orthogonalizing design:

        left  = sum_{i<=ell} lam_i (1 - lam_i p_i^T R p_i)
        right = sum_{i<=ell} lam_i p_i^T W (sum_{j>ell} lam_j p_j p_j^T
                + sigma2 I) R p_i

    Returns (left, right). ``sigma2 = 0`` is allowed whenever the nugget-free
    covariance matrix is invertible.
    """
    if not (1 <= ell <= ell_gp):
        raise ConfigError("need 1 <= ell <= ell_gp")
    if sigma2 < 0:
        raise ConfigError("sigma2 must be nonnegative")
    _check_orthogonalizing(rule, eigensystem.basis(ell), ell, "ivar_orthogonal_identity")
    lam, phi = _eigen_arrays(eigensystem, rule.nodes, ell_gp)
    n = len(rule)
    gram = (phi * lam) @ phi.T
    a = 0.5 * (gram + gram.T) + sigma2 * np.eye(n)
    try:
        cho = cho_factor(a, lower=True)
    except np.linalg.LinAlgError as exc:
        raise IllConditionedError(f"identity covariance factorization failed: {exc}") from exc
    phi_head = phi[:, :ell]
    lam_head = lam[:ell]
    s = cho_solve(cho, phi_head)
    left = float(np.sum(lam_head * (1.0 - lam_head * np.sum(phi_head * s, axis=0))))
    phi_tail = phi[:, ell:]
    lam_tail = lam[ell:]
    ts = (phi_tail * lam_tail) @ (phi_tail.T @ s) + sigma2 * s
    w_phi = rule.weights[:, None] * phi_head
    right = float(np.sum(lam_head * np.sum(w_phi * ts, axis=0)))
    return left, right

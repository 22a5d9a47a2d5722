"""Experimental design by minimizing integrated posterior variance.

The integral of the posterior variance over the input measure is replaced by
a sample average over a fixed, seeded set of draws x_hat_i from mu:

    J(x) = (1/N_mc) sum_i [ K(x_hat_i, x_hat_i) - k_i^T A^{-1} k_i ],

with A = Gram(x) + sigma2 I and k_i the covariance vector between the design
and x_hat_i. J is minimized over the design coordinates with a quasi-Newton
method and the exact gradient below. Because the averaging points live only
inside the support of mu, the objective flattens outside the domain and acts
as an implicit barrier for constrained geometries.

Gradient: writing b_i = A^{-1} k_i, the derivative of the variance at
x_hat_i with respect to coordinate m of design point p is

    2 b_i[p] ( sum_j b_i[j] d1K(x_p, x_j)[m] - d1K(x_p, x_hat_i)[m] ),

where d1K is the kernel gradient in its first argument; the first term comes
from differentiating A^{-1} through dA/dx = -A^{-1} (dA^{-1}/dx) A^{-1}.

Greedy variance maximization (highest posterior variance over a candidate
set) and greedy mutual-information selection are provided as discrete
baselines.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.optimize import minimize

from .errors import ConfigError, IllConditionedError, NumericalError
from .gp import Design, GpPosterior, chol_with_jitter

log = logging.getLogger(__name__)

PENALTY_FACTOR = 10.0
MI_MIN_VARIANCE = 1e-12
# optimizer box bounds extend past the domain bounding box by this fraction
# of the box width, so exterior initializations remain representable
BOX_MARGIN = 0.25


@dataclass
class OptimizerConfig:
    """Settings for one continuous design-optimization run."""

    max_iter: int = 500
    gtol: float = 1e-8
    ftol: float = 1e-14
    n_restarts: int = 3
    seed: int = 0
    batch_size: int = 1
    init: str = "mu-iid"

    def __post_init__(self):
        if self.gtol <= 0 or self.ftol <= 0:
            raise ConfigError("tolerances must be positive")
        if self.max_iter < 1 or self.n_restarts < 1 or self.batch_size < 1:
            raise ConfigError("max_iter, n_restarts, and batch_size must be >= 1")


class SaaContext:
    """Fixed sample-average state for one optimization run.

    The averaging points are drawn once and never resampled; re-using a
    context across strategies makes their objectives directly comparable.
    """

    def __init__(self, kernel, nugget, points, seed=None):
        if nugget < 0:
            raise ConfigError("nugget must be nonnegative")
        points = np.asarray(points, dtype=float)
        if points.ndim != 2 or points.shape[0] < 1:
            raise ConfigError("need at least one averaging point")
        self.kernel = kernel
        self.nugget = float(nugget)
        self.points = points
        self.seed = seed
        self.prior_diag = kernel.diag(points)
        self.prior_ivar = float(self.prior_diag.mean())
        self.penalty_count = 0

    @classmethod
    def build(cls, kernel, domain, nugget, n_mc, seed):
        if n_mc < 1:
            raise ConfigError("n_mc must be >= 1")
        return cls(kernel, nugget, domain.sample(n_mc, seed), seed=seed)

    @property
    def n_mc(self):
        return self.points.shape[0]


def _ivar_and_grad(ctx, points, want_grad=True):
    """(J, grad, ok). On factorization failure returns the finite penalty
    value with a zero gradient so line searches survive."""
    x = np.asarray(points, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n = x.shape[0]
    if n == 0:
        return ctx.prior_ivar, np.zeros((0, x.shape[1] if x.ndim == 2 else 1)), True
    a = ctx.kernel.gram(x) + ctx.nugget * np.eye(n)
    try:
        cho = cho_factor(a, lower=True)
    except np.linalg.LinAlgError:
        ctx.penalty_count += 1
        return ctx.prior_ivar * PENALTY_FACTOR, np.zeros_like(x), False
    c = ctx.kernel.cross(x, ctx.points)
    b = cho_solve(cho, c)
    j = ctx.prior_ivar - float(np.sum(c * b) / ctx.n_mc)
    if not want_grad:
        return j, None, True
    gram_grad = ctx.kernel.cross_grad_x(x, x)
    cross_grad = ctx.kernel.cross_grad_x(x, ctx.points)
    grad = np.empty_like(x)
    for m in range(x.shape[1]):
        t = gram_grad[:, :, m] @ b - cross_grad[:, :, m]
        grad[:, m] = 2.0 * np.sum(b * t, axis=1) / ctx.n_mc
    return j, grad, True


def ivar_saa(ctx, points):
    """Sample-average integrated posterior variance of a candidate design."""
    j, _, _ = _ivar_and_grad(ctx, points, want_grad=False)
    return j


def ivar_saa_grad(ctx, points):
    """Exact gradient of ivar_saa with respect to all design coordinates."""
    _, grad, _ = _ivar_and_grad(ctx, points)
    return grad


def ivar_eigen(eigensystem, points, nugget, ell):
    """Integrated variance through the eigensystem, truncated at ``ell``:

        sum_i lam_i - sum_i lam_i^2 p_i^T (Gram + sigma2 I)^{-1} p_i,

    with no integration over the input measure.
    """
    lam = np.asarray(eigensystem.eigenvalues(ell), dtype=float)
    points = np.asarray(points, dtype=float)
    if points.size == 0:
        return float(lam.sum())
    phi = eigensystem.basis_matrix(points, ell)
    n = phi.shape[0]
    a = (phi * lam) @ phi.T
    a = 0.5 * (a + a.T) + nugget * np.eye(n)
    try:
        cho = cho_factor(a, lower=True)
    except np.linalg.LinAlgError as exc:
        raise IllConditionedError(f"eigen-form covariance factorization failed: {exc}") from exc
    s = cho_solve(cho, phi)
    return float(lam.sum() - np.sum(lam**2 * np.sum(phi * s, axis=0)))


@dataclass
class DesignResult:
    """Optimized design plus diagnostics of the run that produced it."""

    design: Design
    objective: float
    trace: list = field(default_factory=list)  # rows (batch, iteration, objective, grad_norm)
    batch_objectives: list = field(default_factory=list)
    grad_norm: float = float("nan")
    converged: bool = False
    raw_points: np.ndarray | None = None
    n_projected: int = 0
    penalty_hits: int = 0
    config: dict = field(default_factory=dict)


def _expanded_bounds(domain, n_points):
    lo, hi = domain.bounding_box()
    margin = BOX_MARGIN * (hi - lo)
    lo = lo - margin
    hi = hi + margin
    return [(lo[d], hi[d]) for _ in range(n_points) for d in range(domain.dim)]


def _project_outside(domain, points, saa_points):
    """Replace points outside the domain by their nearest averaging point."""
    points = points.copy()
    inside = domain.contains(points)
    n_projected = int(np.sum(~inside))
    for i in np.where(~inside)[0]:
        d2 = np.sum((saa_points - points[i]) ** 2, axis=1)
        points[i] = saa_points[np.argmin(d2)]
    return points, n_projected


def extend_design_ivar(
    kernel,
    domain,
    existing,
    n_new,
    nugget=1e-10,
    n_mc=10_000,
    config=None,
    saa=None,
    batch_index=0,
    x0=None,
):
    """Append ``n_new`` points to ``existing`` by minimizing the SAA
    integrated variance of the combined design over the new coordinates.

    Returns (new_points, info). Multi-restart: restart 0 uses ``x0`` when
    given, otherwise all restarts initialize from fresh mu-samples.
    """
    config = config or OptimizerConfig()
    if n_new < 1:
        raise ConfigError("n_new must be >= 1")
    existing = np.asarray(existing, dtype=float).reshape(-1, domain.dim)
    if saa is None:
        saa = SaaContext.build(kernel, domain, nugget, n_mc, config.seed)
    if saa.n_mc < existing.shape[0] + n_new:
        warnings.warn("n_mc below design size: the objective is under-resolved", stacklevel=2)
    dim = domain.dim
    bounds = _expanded_bounds(domain, n_new)

    def objective(z):
        pts = np.vstack([existing, z.reshape(n_new, dim)]) if existing.size else z.reshape(
            n_new, dim
        )
        j, grad, _ = _ivar_and_grad(saa, pts)
        return j, grad[existing.shape[0] :].ravel()

    best = None
    best_trace = None
    for r in range(config.n_restarts):
        if r == 0 and x0 is not None:
            z0 = np.asarray(x0, dtype=float).reshape(n_new * dim)
        else:
            rng = np.random.default_rng([config.seed, batch_index, r])
            z0 = domain.sample(n_new, rng).ravel()
        z0 = np.clip(z0, [b[0] for b in bounds], [b[1] for b in bounds])
        trace = []

        def callback(zk, _trace=trace):
            j, g = objective(zk)
            _trace.append((batch_index, len(_trace), j, float(np.linalg.norm(g))))

        res = minimize(
            objective,
            z0,
            jac=True,
            method="L-BFGS-B",
            bounds=bounds,
            callback=callback,
            options={"maxiter": config.max_iter, "gtol": config.gtol, "ftol": config.ftol},
        )
        if not np.isfinite(res.fun):
            raise NumericalError("design optimization diverged to a non-finite objective")
        if best is None or res.fun < best.fun:
            best = res
            best_trace = trace
    raw = best.x.reshape(n_new, dim)
    projected, n_projected = _project_outside(domain, raw, saa.points)
    if n_projected:
        log.info("projected %d exterior design point(s) to nearest averaging point", n_projected)
    grad_norm = float(np.linalg.norm(best.jac))
    info = {
        "objective": float(best.fun),
        "trace": best_trace,
        "grad_norm": grad_norm,
        "converged": bool(best.success or grad_norm <= config.gtol),
        "raw_points": raw,
        "n_projected": n_projected,
        "saa": saa,
    }
    return projected, info


def minimize_ivar_batch(
    kernel,
    domain,
    n_points,
    nugget=1e-10,
    n_mc=10_000,
    config=None,
    saa=None,
    x0=None,
):
    """Design all ``n_points`` simultaneously from a seeded random start."""
    config = config or OptimizerConfig()
    if n_points < 1:
        raise ConfigError("n_points must be >= 1")
    points, info = extend_design_ivar(
        kernel,
        domain,
        np.empty((0, domain.dim)),
        n_points,
        nugget=nugget,
        n_mc=n_mc,
        config=config,
        saa=saa,
        x0=x0,
    )
    saa = info["saa"]
    return DesignResult(
        design=Design(points=points, provenance="ivar-batch"),
        objective=info["objective"],
        trace=info["trace"],
        batch_objectives=[info["objective"]],
        grad_norm=info["grad_norm"],
        converged=info["converged"],
        raw_points=info["raw_points"],
        n_projected=info["n_projected"],
        penalty_hits=saa.penalty_count,
        config={"n_points": n_points, "nugget": nugget, "n_mc": saa.n_mc, "seed": config.seed},
    )


def minimize_ivar_greedy(
    kernel,
    domain,
    n_points,
    batch_size,
    nugget=1e-10,
    n_mc=10_000,
    config=None,
    saa=None,
):
    """Greedy design: solve a sequence of batch problems of ``batch_size``
    points, each appended to the points found so far. When batch_size does
    not divide n_points the final batch is smaller.
    """
    config = config or OptimizerConfig()
    if n_points < 1 or batch_size < 1:
        raise ConfigError("n_points and batch_size must be >= 1")
    if saa is None:
        saa = SaaContext.build(kernel, domain, nugget, n_mc, config.seed)
    sizes = [batch_size] * (n_points // batch_size)
    if n_points % batch_size:
        sizes.append(n_points % batch_size)
    points = np.empty((0, domain.dim))
    trace = []
    batch_objectives = []
    last_info = None
    for j, size in enumerate(sizes):
        new_pts, info = extend_design_ivar(
            kernel,
            domain,
            points,
            size,
            nugget=nugget,
            config=config,
            saa=saa,
            batch_index=j,
        )
        points = np.vstack([points, new_pts])
        trace.extend(info["trace"])
        batch_objectives.append(info["objective"])
        last_info = info
    return DesignResult(
        design=Design(points=points, provenance=f"ivar-greedy-{batch_size}"),
        objective=batch_objectives[-1],
        trace=trace,
        batch_objectives=batch_objectives,
        grad_norm=last_info["grad_norm"],
        converged=last_info["converged"],
        raw_points=points,
        n_projected=0,
        penalty_hits=saa.penalty_count,
        config={
            "n_points": n_points,
            "batch_size": batch_size,
            "nugget": nugget,
            "n_mc": saa.n_mc,
            "seed": config.seed,
        },
    )


def alm_design(kernel, domain, n_points, nugget=1e-10, n_candidates=10_000, seed=0):
    """Greedy maximum-posterior-variance design over a candidate set.

    Ties break to the lowest candidate index; chosen candidates leave the
    pool.
    """
    if n_candidates < n_points:
        raise ConfigError("need at least as many candidates as design points")
    cands = domain.sample(n_candidates, seed)
    available = np.ones(n_candidates, dtype=bool)
    chosen = []
    for _ in range(n_points):
        if chosen:
            var = GpPosterior(kernel, cands[chosen], nugget=nugget).var(cands)
        else:
            var = kernel.diag(cands)
        var = np.where(available, var, -np.inf)
        pick = int(np.argmax(var))
        available[pick] = False
        chosen.append(pick)
    return Design(points=cands[chosen], provenance="alm")


def mi_design(kernel, domain, n_points, nugget=1e-10, n_candidates=150, seed=0):
    """Greedy mutual-information design over a candidate set.

    At each step picks the candidate y maximizing

        var(y | chosen) / var(y | unchosen candidates other than y).

    The denominators for all unchosen candidates come from one factorization
    of their joint covariance: with B = K(unchosen) + sigma2 I,
    var(y | rest) = 1 / [B^{-1}]_yy - sigma2. Near-duplicate candidates with
    denominator below 1e-12 are skipped.
    """
    if n_candidates <= n_points:
        raise ConfigError("need strictly more candidates than design points")
    cands = domain.sample(n_candidates, seed)
    available = np.ones(n_candidates, dtype=bool)
    chosen = []
    for _ in range(n_points):
        idx = np.where(available)[0]
        b = kernel.gram(cands[idx]) + nugget * np.eye(idx.size)
        cho, _ = chol_with_jitter(b)
        b_inv_diag = np.diag(cho_solve(cho, np.eye(idx.size)))
        denom = 1.0 / b_inv_diag - nugget
        if chosen:
            numer = GpPosterior(kernel, cands[chosen], nugget=nugget).var(cands[idx])
        else:
            numer = kernel.diag(cands[idx])
        ratio = np.where(denom > MI_MIN_VARIANCE, numer / np.maximum(denom, MI_MIN_VARIANCE), -np.inf)
        n_skipped = int(np.sum(denom <= MI_MIN_VARIANCE))
        if n_skipped:
            log.info("mi_design: skipped %d near-duplicate candidate(s)", n_skipped)
        if not np.any(np.isfinite(ratio)):
            raise NumericalError("mi_design: no selectable candidate remains")
        pick = int(idx[np.argmax(ratio)])
        available[pick] = False
        chosen.append(pick)
    return Design(points=cands[chosen], provenance="mi")

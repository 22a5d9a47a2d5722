"""Input domains with a probability measure: sampling and membership.

Bounded shapes carry the uniform measure on their support; the unbounded
Gaussian domain carries the standard normal measure on R^d. All sampling is
driven by numpy's default PCG64 generator with an explicit seed, so identical
seeds give identical streams.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError, DomainError

# proposals before the rejection sampler may declare the domain degenerate
_REJECTION_MIN_PROPOSALS = 10_000
_REJECTION_MIN_RATE = 1e-3

# finite box used for optimizer bounds on the unbounded Gaussian domain
_GAUSSIAN_BOX_HALFWIDTH = 10.0


def _rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


class Domain:
    dim: int
    shape: str

    @property
    def measure(self):
        return "uniform"

    def sample(self, n, seed):
        raise NotImplementedError

    def contains(self, x):
        """Membership test; accepts a single point (d,) or a batch (n, d)."""
        raise NotImplementedError

    def bounding_box(self):
        """(lower, upper) arrays enclosing the support."""
        raise NotImplementedError

    def to_spec(self):
        raise NotImplementedError

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        pts = x[None, :] if single else x
        if pts.ndim != 2 or pts.shape[1] != self.dim:
            raise ConfigError(f"expected points of dimension {self.dim}, got shape {x.shape}")
        return pts, single


class Hypercube(Domain):
    shape = "hypercube"

    def __init__(self, lower, upper):
        lo = np.atleast_1d(np.asarray(lower, dtype=float))
        hi = np.atleast_1d(np.asarray(upper, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ConfigError("lower/upper bounds must be 1-D and matching")
        if np.any(hi <= lo):
            raise ConfigError("upper bounds must exceed lower bounds")
        self.lower, self.upper = lo, hi
        self.dim = lo.shape[0]

    def sample(self, n, seed):
        if n < 1:
            raise ConfigError("sample count must be >= 1")
        u = _rng(seed).random((n, self.dim))
        return self.lower + u * (self.upper - self.lower)

    def contains(self, x):
        pts, single = self._check(x)
        ok = np.all((pts >= self.lower) & (pts <= self.upper), axis=1)
        return bool(ok[0]) if single else ok

    def bounding_box(self):
        return self.lower.copy(), self.upper.copy()

    def to_spec(self):
        return {
            "shape": self.shape,
            "dim": self.dim,
            "params": {"lower": self.lower.tolist(), "upper": self.upper.tolist()},
        }


class Ball(Domain):
    shape = "ball"

    def __init__(self, center, radius):
        c = np.atleast_1d(np.asarray(center, dtype=float))
        if radius <= 0:
            raise ConfigError("radius must be positive")
        self.center = c
        self.radius = float(radius)
        self.dim = c.shape[0]

    def sample(self, n, seed):
        if n < 1:
            raise ConfigError("sample count must be >= 1")
        rng = _rng(seed)
        z = rng.standard_normal((n, self.dim))
        z /= np.linalg.norm(z, axis=1, keepdims=True)
        r = self.radius * rng.random(n) ** (1.0 / self.dim)
        return self.center + z * r[:, None]

    def contains(self, x):
        pts, single = self._check(x)
        ok = np.linalg.norm(pts - self.center, axis=1) <= self.radius
        return bool(ok[0]) if single else ok

    def bounding_box(self):
        return self.center - self.radius, self.center + self.radius

    def to_spec(self):
        return {
            "shape": self.shape,
            "dim": self.dim,
            "params": {"center": self.center.tolist(), "radius": self.radius},
        }


class DiscDifference(Domain):
    """Union of positive discs minus a union of hole discs, in the plane.

    Sampling rejects uniform draws from the bounding box of the positive
    discs; an acceptance rate below 0.1% raises a degenerate-domain error.
    """

    shape = "disc-difference"

    def __init__(self, discs, holes=()):
        self.discs = [(float(cx), float(cy), float(r)) for cx, cy, r in discs]
        self.holes = [(float(cx), float(cy), float(r)) for cx, cy, r in holes]
        if not self.discs:
            raise ConfigError("need at least one positive disc")
        if any(r <= 0 for _, _, r in self.discs + self.holes):
            raise ConfigError("disc radii must be positive")
        self.dim = 2

    def _in_any(self, pts, discs):
        ok = np.zeros(pts.shape[0], dtype=bool)
        for cx, cy, r in discs:
            ok |= (pts[:, 0] - cx) ** 2 + (pts[:, 1] - cy) ** 2 <= r * r
        return ok

    def contains(self, x):
        pts, single = self._check(x)
        ok = self._in_any(pts, self.discs)
        if self.holes:
            ok &= ~self._in_any(pts, self.holes)
        return bool(ok[0]) if single else ok

    def sample(self, n, seed):
        if n < 1:
            raise ConfigError("sample count must be >= 1")
        rng = _rng(seed)
        lo, hi = self.bounding_box()
        out = []
        accepted = 0
        proposed = 0
        while accepted < n:
            chunk = max(1024, 2 * (n - accepted))
            pts = lo + rng.random((chunk, 2)) * (hi - lo)
            keep = pts[self.contains(pts)]
            out.append(keep)
            accepted += keep.shape[0]
            proposed += chunk
            if proposed >= _REJECTION_MIN_PROPOSALS and accepted / proposed < _REJECTION_MIN_RATE:
                raise DomainError(
                    f"degenerate domain: rejection acceptance rate "
                    f"{accepted / proposed:.2e} < {_REJECTION_MIN_RATE:g}"
                )
        return np.vstack(out)[:n]

    def bounding_box(self):
        lo = np.array(
            [min(cx - r for cx, _, r in self.discs), min(cy - r for _, cy, r in self.discs)]
        )
        hi = np.array(
            [max(cx + r for cx, _, r in self.discs), max(cy + r for _, cy, r in self.discs)]
        )
        return lo, hi

    def to_spec(self):
        return {
            "shape": self.shape,
            "dim": 2,
            "params": {"discs": [list(d) for d in self.discs], "holes": [list(h) for h in self.holes]},
        }


class GaussianDomain(Domain):
    """R^d with the standard normal measure; membership is always true."""

    shape = "gaussian-Rd"

    def __init__(self, dim):
        if dim < 1:
            raise ConfigError("dimension must be positive")
        self.dim = int(dim)

    @property
    def measure(self):
        return "standard-normal"

    def sample(self, n, seed):
        if n < 1:
            raise ConfigError("sample count must be >= 1")
        return _rng(seed).standard_normal((n, self.dim))

    def contains(self, x):
        pts, single = self._check(x)
        ok = np.all(np.isfinite(pts), axis=1)
        return bool(ok[0]) if single else ok

    def bounding_box(self):
        half = np.full(self.dim, _GAUSSIAN_BOX_HALFWIDTH)
        return -half, half

    def to_spec(self):
        return {"shape": self.shape, "dim": self.dim, "params": {}}


def default_nonconvex_domain():
    """Non-convex, non-simply-connected stand-in: one large disc with two
    overlapping ear discs, minus an interior hole."""
    discs = [(0.0, 0.0, 0.5), (-0.45, 0.45, 0.2), (0.45, 0.45, 0.2)]
    holes = [(0.1, 0.0, 0.1)]
    return DiscDifference(discs, holes)


def domain_from_spec(spec):
    """Build a domain from its JSON-style specification dict."""
    try:
        shape = spec["shape"]
        params = spec.get("params", {})
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"malformed domain spec: {exc}") from exc
    if shape == "hypercube":
        return Hypercube(params["lower"], params["upper"])
    if shape == "ball":
        return Ball(params["center"], params["radius"])
    if shape == "disc-difference":
        return DiscDifference(params["discs"], params.get("holes", ()))
    if shape == "gaussian-Rd":
        return GaussianDomain(int(spec["dim"]))
    raise ConfigError(f"unknown domain shape '{shape}'")

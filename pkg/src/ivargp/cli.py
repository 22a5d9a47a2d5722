"""Command-line front end.

Subcommands: design, lebesgue, spectrum, compare, adapt, verify. Every
command echoes its full configuration as JSON next to its CSV outputs so runs
can be reproduced from the output directory alone.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import bench, design as design_mod, domains, gp, kernels, spectral
from .errors import ConfigError, NumericalError


def _parse_kv(text):
    out = {}
    if not text:
        return out
    for item in text.split(","):
        if "=" not in item:
            raise ConfigError(f"expected key=value, got '{item}'")
        key, value = item.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _floats(text):
    return [float(v) for v in text.split(";")] if ";" in text else float(text)


def parse_domain(text):
    """Domain from a CLI string or inline JSON spec."""
    text = text.strip()
    if text.startswith("{"):
        return domains.domain_from_spec(json.loads(text))
    aliases = {
        "ball2d": domains.Ball([0.0, 0.0], 0.7),
        "ball5d": domains.Ball([0.0] * 5, 0.7),
        "interval": domains.Hypercube([-1.0], [1.0]),
        "gauss1d": domains.GaussianDomain(1),
        "blob": domains.default_nonconvex_domain(),
    }
    if text in aliases:
        return aliases[text]
    name, _, rest = text.partition(":")
    kv = _parse_kv(rest)
    if name == "ball":
        dim = int(kv.get("dim", 2))
        return domains.Ball([0.0] * dim, float(kv.get("radius", 0.7)))
    if name == "cube":
        dim = int(kv.get("dim", 1))
        lo, hi = float(kv.get("lo", -1.0)), float(kv.get("hi", 1.0))
        return domains.Hypercube([lo] * dim, [hi] * dim)
    if name == "gauss":
        return domains.GaussianDomain(int(kv.get("dim", 1)))
    raise ConfigError(f"unknown domain '{text}'")


def parse_kernel(text, dim):
    """Kernel from a CLI string like 'se:l=0.2' or inline JSON spec."""
    text = text.strip()
    if text.startswith("{"):
        return kernels.kernel_from_spec(json.loads(text))
    name, _, rest = text.partition(":")
    kv = _parse_kv(rest)
    if name == "se":
        l = _floats(kv.get("l", "0.2"))
        gamma = float(kv.get("gamma", 1.0))
        if isinstance(l, float) and float(l) <= 0:
            raise ConfigError("correlation length must be positive")
        return kernels.SquaredExponential(dim, l, gamma)
    if name == "mehler":
        t = _floats(kv.get("t", "0.8"))
        return kernels.Mehler(dim, t)
    raise ConfigError(f"unknown kernel '{text}'")


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])


def _echo_config(args, out_dir, name="run_config.json"):
    cfg = {k: v for k, v in vars(args).items() if k != "func"}
    with open(out_dir / name, "w") as fh:
        json.dump(cfg, fh, indent=2, default=str)
    return cfg


def _out_dir(args):
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _optimizer_config(args, seed=None):
    return design_mod.OptimizerConfig(
        max_iter=args.max_iter,
        n_restarts=args.restarts,
        seed=args.seed if seed is None else seed,
    )


def cmd_design(args):
    out = _out_dir(args)
    domain = parse_domain(args.domain)
    kernel = parse_kernel(args.kernel, domain.dim)
    cfg = _optimizer_config(args)
    if args.strategy == "ivar":
        result = design_mod.minimize_ivar_batch(
            kernel, domain, args.n, nugget=args.nugget, n_mc=args.n_mc, config=cfg
        )
        dsn, trace = result.design, result.trace
    elif args.strategy == "ivar-greedy":
        result = design_mod.minimize_ivar_greedy(
            kernel, domain, args.n, args.batch, nugget=args.nugget, n_mc=args.n_mc, config=cfg
        )
        dsn, trace = result.design, result.trace
    elif args.strategy == "alm":
        dsn = design_mod.alm_design(
            kernel, domain, args.n, nugget=args.nugget, n_candidates=args.n_candidates, seed=args.seed
        )
        trace = []
    elif args.strategy == "mi":
        dsn = design_mod.mi_design(
            kernel, domain, args.n, nugget=args.nugget, n_candidates=min(args.n_candidates, 150), seed=args.seed
        )
        trace = []
    else:
        raise ConfigError(f"unknown strategy '{args.strategy}'")
    gp.design_to_csv(dsn, out / "design.csv")
    _write_csv(out / "trace.csv", ["batch", "iteration", "objective", "grad_norm"], trace)
    _echo_config(args, out)
    return 0


def cmd_lebesgue(args):
    if args.l <= 0:
        raise ConfigError("correlation length must be positive")
    out = _out_dir(args)
    domain = domains.Hypercube([args.lo], [args.hi])
    kernel = kernels.SquaredExponential(1, args.l)
    grid = np.linspace(args.lo, args.hi, args.grid_size)[:, None]
    rows = []
    for n in range(args.n_min, args.n_max + 1):
        result = design_mod.minimize_ivar_batch(
            kernel, domain, n, nugget=args.nugget, n_mc=args.n_mc, config=_optimizer_config(args)
        )
        lam = gp.lebesgue_constant(kernel, result.design.points, args.nugget, grid)
        rows.append([n, lam])
    _write_csv(out / "lebesgue.csv", ["n", "lebesgue"], rows)
    _echo_config(args, out)
    return 0


def cmd_spectrum(args):
    out = _out_dir(args)
    domain = domains.GaussianDomain(1)
    kernel = kernels.Mehler(1, args.t)
    f = bench.test_function("sine-shift")
    rule = spectral.gauss_hermite(args.nodes)
    basis = spectral.hermite_basis_1d(max(args.ell_max, args.ell))
    y = f(rule.nodes)
    psa = spectral.psa_fit(rule, basis, args.ell, y)
    gp_quad = gp.GpPosterior(kernel, rule.nodes, nugget=args.nugget, y=y)
    result = design_mod.minimize_ivar_batch(
        kernel, domain, args.n, nugget=max(args.nugget, 1e-10), n_mc=args.n_mc,
        config=_optimizer_config(args),
    )
    pts = result.design.points
    gp_ivar = gp.GpPosterior(kernel, pts, nugget=args.nugget, y=f(pts))
    n_ref = min(spectral.MAX_GH_NODES, args.ell_max + 12)
    ref = spectral.gauss_hermite(n_ref)
    spectra = [
        spectral.error_spectrum(psa, f, basis, args.ell_max, ref),
        spectral.error_spectrum(gp_quad.mean, f, basis, args.ell_max, ref),
        spectral.error_spectrum(gp_ivar.mean, f, basis, args.ell_max, ref),
        spectral.projection_spectrum(f, basis, args.ell_max, ref),
    ]
    rows = [
        [i, spectra[0][i], spectra[1][i], spectra[2][i], spectra[3][i]]
        for i in range(args.ell_max)
    ]
    _write_csv(
        out / "spectrum.csv", ["index", "psa", "gp_quadrature", "gp_ivar", "f_projection"], rows
    )
    gp.design_to_csv(result.design, out / "ivar_design.csv")
    _echo_config(args, out)
    return 0


def cmd_compare(args):
    out = _out_dir(args)
    domain = parse_domain(args.domain)
    kernel = parse_kernel(args.kernel, domain.dim)
    n_list = [int(v) for v in args.n_list.split(",")]
    strategies = [s.strip() for s in args.strategies.split(",")]
    records = bench.compare_designs(
        domain,
        kernel,
        n_list,
        strategies,
        n_prior_draws=args.draws,
        seed=args.seed,
        nugget=args.nugget,
        n_err_samples=args.err_samples,
        n_mc=args.n_mc,
        config=_optimizer_config(args),
    )
    rows = [[r.strategy, r.n, r.mean_rel_err, r.std_rel_err, r.seed] for r in records]
    _write_csv(out / "compare.csv", ["strategy", "N", "mean_rel_err", "std_rel_err", "seed"], rows)
    _echo_config(args, out)
    return 0


def cmd_adapt(args):
    out = _out_dir(args)
    f = bench.test_function(args.function, seed=args.seed)
    domain = domains.GaussianDomain(f.dim)
    kernel = parse_kernel(args.kernel, f.dim) if args.kernel else kernels.Mehler(
        f.dim, [0.5] * f.dim
    )
    if args.function == "genz10" and not args.extended:
        raise ConfigError("the ten-dimensional study needs --extended (long runtime)")
    if args.extended and args.function == "genz10":
        schedule = bench.GENZ10_EXTENDED_SCHEDULE
    else:
        n_full = args.total // args.batch
        schedule = [args.batch] * n_full
        if args.total % args.batch:
            schedule.append(args.total % args.batch)
    trace = bench.adaptive_gp_loop(
        kernel,
        domain,
        f,
        schedule,
        seed=args.seed,
        n_mc=args.n_mc,
        err_samples=args.err_samples,
        config=_optimizer_config(args),
    )
    header, rows = trace.rows()
    _write_csv(out / "adapt.csv", header, rows)
    _echo_config(args, out)
    return 0


def cmd_verify(args):
    out = _out_dir(args)
    rng = np.random.default_rng(args.seed)
    checks = []

    def record(name, passed, detail):
        checks.append({"check": name, "passed": bool(passed), **detail})
        print(f"{'PASS' if passed else 'FAIL'}  {name}")

    # quadrature orthogonality
    rule20 = spectral.gauss_hermite(20)
    defect = spectral.orthogonality_defect(rule20, spectral.hermite_basis_1d(20), 20)
    record("orthogonality-defect-20", defect <= 1e-10, {"defect": defect})

    # integrated-variance identity: degenerate and random configurations
    es = kernels.Mehler(1, 0.8).eigensystem()
    n = 20
    rule = spectral.gauss_hermite(n)
    left, right = spectral.ivar_orthogonal_identity(es, rule, n, n, 0.0)
    record(
        "identity-degenerate", abs(left) <= 1e-10 and abs(right) <= 1e-10,
        {"left": left, "right": right},
    )
    worst = 0.0
    for _ in range(args.trials):
        ell = int(rng.integers(4, 13))
        ell_gp = int(rng.integers(ell + 5, 61))
        sigma2 = 10.0 ** rng.uniform(-8, -4)
        t = rng.uniform(0.6, 0.9)
        es_r = kernels.Mehler(1, t).eigensystem()
        rule_r = spectral.gauss_hermite(max(ell, int(rng.integers(ell, 2 * ell + 1))))
        left, right = spectral.ivar_orthogonal_identity(es_r, rule_r, ell, ell_gp, sigma2)
        worst = max(worst, abs(left - right) / abs(left))
    record("identity-random", worst <= 1e-10, {"worst_rel_gap": worst})

    # difference bound dominance
    worst_ratio = 0.0
    for _ in range(args.trials):
        ell = int(rng.integers(4, 13))
        ell_gp = int(rng.integers(ell, 61))
        sigma2 = 10.0 ** rng.uniform(-8, -3)
        t = rng.uniform(0.6, 0.9)
        es_r = kernels.Mehler(1, t).eigensystem()
        rule_r = spectral.gauss_hermite(ell)
        y = rng.standard_normal(ell)
        report = spectral.gp_psa_bound(es_r, rule_r, ell, ell_gp, sigma2, y)
        actual = _gp_psa_actual(es_r, rule_r, ell, ell_gp, sigma2, y)
        worst_ratio = max(worst_ratio, actual / report.value if report.value else np.inf)
    record("bound-dominance", worst_ratio <= 1.0, {"worst_actual_over_bound": worst_ratio})

    report = {"checks": checks, "seed": args.seed}
    with open(out / "verify.json", "w") as fh:
        json.dump(report, fh, indent=2)
    _echo_config(args, out)
    if not all(c["passed"] for c in checks):
        raise NumericalError("verification checks failed")
    return 0


def _gp_psa_actual(eigensystem, rule, ell, ell_gp, sigma2, y):
    """Exact squared L2 distance between the finite-rank GP mean and the
    projection, via orthonormal-coefficient comparison."""
    lam = eigensystem.eigenvalues(ell_gp)
    phi = eigensystem.basis_matrix(rule.nodes, ell_gp)
    a = (phi * lam) @ phi.T + sigma2 * np.eye(len(rule))
    alpha = np.linalg.solve(0.5 * (a + a.T), y)
    c_gp = lam * (phi.T @ alpha)
    c_ps = phi[:, :ell].T @ (rule.weights * y)
    diff = c_gp.copy()
    diff[:ell] -= c_ps
    return float(np.sum(diff**2))


def build_parser():
    parser = argparse.ArgumentParser(prog="ivargp", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out-dir", default=".")
        p.add_argument("--config", default=None, help="JSON file overriding flags")
        p.add_argument("--nugget", type=float, default=1e-10)
        p.add_argument("--n-mc", type=int, default=10_000)
        p.add_argument("--restarts", type=int, default=3)
        p.add_argument("--max-iter", type=int, default=500)

    p = sub.add_parser("design", help="construct an experimental design")
    common(p)
    p.add_argument("--domain", required=True)
    p.add_argument("--kernel", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--strategy", default="ivar", choices=["ivar", "ivar-greedy", "alm", "mi"])
    p.add_argument("--batch", type=int, default=1)
    p.add_argument("--n-candidates", type=int, default=10_000)
    p.set_defaults(func=cmd_design)

    p = sub.add_parser("lebesgue", help="interpolation stability of designs")
    common(p)
    p.add_argument("--l", type=float, default=0.2)
    p.add_argument("--lo", type=float, default=-1.0)
    p.add_argument("--hi", type=float, default=1.0)
    p.add_argument("--n-min", type=int, default=2)
    p.add_argument("--n-max", type=int, default=30)
    p.add_argument("--grid-size", type=int, default=2000)
    p.set_defaults(func=cmd_lebesgue)

    p = sub.add_parser("spectrum", help="error spectra of three surrogates")
    common(p)
    p.add_argument("--t", type=float, default=0.8)
    p.add_argument("--nodes", type=int, default=20)
    p.add_argument("--ell", type=int, default=20)
    p.add_argument("--ell-max", type=int, default=40)
    p.add_argument("--n", type=int, default=20, help="points in the optimized design")
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("compare", help="design strategies vs prior draws")
    common(p)
    p.add_argument("--domain", default="ball2d")
    p.add_argument("--kernel", default="se:l=0.2")
    p.add_argument("--n-list", default="8,12,20")
    p.add_argument("--strategies", default="ivar,ivar-greedy-1,ivar-greedy-4,alm,mi")
    p.add_argument("--draws", type=int, default=100)
    p.add_argument("--err-samples", type=int, default=10_000)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("adapt", help="closed-loop adaptive surrogate run")
    common(p)
    p.add_argument("--function", default="ishigami")
    p.add_argument("--kernel", default=None)
    p.add_argument("--batch", type=int, default=10)
    p.add_argument("--total", type=int, default=60)
    p.add_argument("--err-samples", type=int, default=10_000)
    p.add_argument("--extended", action="store_true")
    p.set_defaults(func=cmd_adapt)

    p = sub.add_parser("verify", help="bound and identity checks")
    common(p)
    p.add_argument("--trials", type=int, default=20)
    p.set_defaults(func=cmd_verify)

    return parser


def _apply_config_file(args):
    if not args.config:
        return args
    with open(args.config) as fh:
        overrides = json.load(fh)
    valid = set(vars(args))
    for key, value in overrides.items():
        dest = key.replace("-", "_")
        if dest not in valid:
            raise ConfigError(f"unknown config key '{key}'")
        setattr(args, dest, value)
    return args


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args = _apply_config_file(args)
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (NumericalError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

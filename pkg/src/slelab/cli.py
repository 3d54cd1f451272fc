"""Command-line front end: one subcommand per experiment.

Every artifact carries the full run configuration and the package version.
CSV output starts with ``#``-prefixed config lines followed by a fixed
header row; numbers use 17 significant digits.  JSON output has sorted keys.

Options can also be read from a key-value file (``--config run.cfg``) whose
keys are the long option names, e.g. ``kappa = 3`` or ``n = 20000``.
Options given on the command line override the file.

Exit status: 0 on success, 1 for an invalid configuration, 2 for a
numerical failure (non-convergence, tolerance not met).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys

import numpy as np

from . import __version__
from .numerics import RandomStream, make_params, phi, phi_derivs
from .numerics.special import ConvergenceError
from .numerics.quadrature import QuadratureError
from .numerics.sde import StateEscapeError
from ._parallel import ENV_WORKERS, default_workers

__all__ = ["main", "build_parser", "read_config_file", "ConfigError"]

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2
_NUMERIC_ERRORS = (ConvergenceError, QuadratureError, StateEscapeError, FloatingPointError, ArithmeticError)
# options that do not change the result and are left out of the config echo
_NOT_ECHOED = {"workers", "out", "config", "format", "func"}


class ConfigError(ValueError):
    """Invalid run configuration."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


# ------------------------------------------------------------------ parsing

def _range3(text: str):
    """``start:stop:step`` (inclusive stop up to rounding)."""
    try:
        a, b, s = (float(v) for v in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError("expected start:stop:step") from None
    if s <= 0 or b < a:
        raise argparse.ArgumentTypeError("need step > 0 and stop >= start")
    k = int(math.floor((b - a) / s + 1e-9))
    return [a + i * s for i in range(k + 1)]


def _eps_range(text: str):
    try:
        hi, lo = (float(v) for v in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError("expected hi:lo") from None
    return hi, lo


def _pairs(text: str):
    out = []
    for chunk in text.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        try:
            x, y = (float(v) for v in chunk.split(","))
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad pair {chunk!r}; expected x,y") from None
        out.append((x, y))
    return out


def read_config_file(path) -> list:
    """Turn ``key = value`` lines into ``--key=value`` tokens.

    Blank lines and ``#`` comments are ignored; ``key = true`` becomes a
    bare ``--key`` flag.
    """
    toks = []
    with open(path) as fh:
        for ln, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{ln}: expected key = value")
            key, val = (s.strip() for s in line.split("=", 1))
            flag = "--" + key.replace("_", "-")
            if val.lower() == "true":
                toks.append(flag)
            elif val.lower() == "false":
                continue
            else:
                # joined so that negative values are not read as flags
                toks.append(f"{flag}={val}")
    return toks


def _common(p):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=None,
                   help=f"worker processes (default from ${ENV_WORKERS} or 1); does not change results")
    p.add_argument("--out", default=None, help="output file (default stdout)")
    p.add_argument("--format", choices=("csv", "json"), default=None)
    p.add_argument("--config", default=None, help="key = value file with defaults for these options")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="slelab", description="Numerical experiments for chordal SLE partition functions.")
    ap.add_argument("--version", action="version", version=f"slelab {__version__}")
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("phi", help="tabulate phi, phi', phi''")
    p.add_argument("--kappa", type=float, required=True)
    p.add_argument("--grid", type=_range3, default=_range3("0:1:0.05"))
    _common(p)
    p.set_defaults(func=cmd_phi, default_format="csv")

    p = sub.add_parser("excursion", help="excursion measure between two arcs")
    p.add_argument("--x1", type=float, default=-math.inf)
    p.add_argument("--y1", type=float, default=0.0)
    p.add_argument("--x2", type=float, default=0.5)
    p.add_argument("--y2", type=float, default=1.0)
    p.add_argument("--slit", type=_pairs, default=None, help="p,h of a vertical slit domain")
    _common(p)
    p.set_defaults(func=cmd_excursion, default_format="json")

    p = sub.add_parser("two-psi", help="Monte Carlo two-curve partition function")
    p.add_argument("--kappa", type=float, required=True)
    p.add_argument("--x", type=float, required=True)
    p.add_argument("--n", type=int, default=10000)
    p.add_argument("--dt", type=float, default=1e-4)
    _common(p)
    p.set_defaults(func=cmd_two_psi, default_format="json")

    p = sub.add_parser("three-psi", help="Monte Carlo three-curve partition function")
    p.add_argument("--kappa", type=float, required=True)
    p.add_argument("--pairs", type=_pairs, required=True, help="x1,y1;x2,y2;x3,y3 (inf allowed)")
    p.add_argument("--marginal", type=int, default=0)
    p.add_argument("--n", type=int, default=10000)
    p.add_argument("--dt", type=float, default=1e-4)
    _common(p)
    p.set_defaults(func=cmd_three_psi, default_format="json")

    p = sub.add_parser("deriv-check", help="normalised derivative ratios over a slit family")
    p.add_argument("--family", type=_pairs, default=None, help="p,h;p,h;... (default slits approaching 1)")
    p.add_argument("--points", type=_pairs, default=[(0.0, 1.0)], help="x,y")
    p.add_argument("--kappa", type=float, default=None, help="also report the partition-function ratio")
    _common(p)
    p.set_defaults(func=cmd_deriv_check, default_format="csv")

    for name, fn in (("dist-tail", cmd_dist_tail), ("weighted-tail", cmd_weighted_tail)):
        p = sub.add_parser(name, help="tail exponent fit")
        p.add_argument("--kappa", type=float, required=True)
        p.add_argument("--x", type=float, default=0.5)
        p.add_argument("--eps", type=_eps_range, default=(0.4, 0.05), help="hi:lo, geometric ratio sqrt(2)")
        p.add_argument("--n", type=int, default=20000)
        p.add_argument("--dt", type=float, default=1e-3)
        p.add_argument("--stride", type=int, default=16)
        _common(p)
        p.set_defaults(func=fn, default_format="json")

    for name, fn in (("bessel", cmd_bessel), ("jacobi", cmd_jacobi)):
        p = sub.add_parser(name, help="invariant law of the time-changed diffusion")
        p.add_argument("--kappa", type=float, required=True)
        p.add_argument("--dt", type=float, default=1e-3)
        p.add_argument("--horizon", type=float, default=10.0)
        p.add_argument("--burn-in", type=float, default=None)
        p.add_argument("--n-paths", type=int, default=10000)
        if name == "jacobi":
            p.add_argument("--drift", action="store_true", help="also run the martingale drift test of N_t")
            p.add_argument("--lam-scale", type=float, default=1.0)
        _common(p)
        p.set_defaults(func=fn, default_format="json")

    p = sub.add_parser("time-change", help="time change along one Loewner track")
    p.add_argument("--kappa", type=float, required=True)
    p.add_argument("--x", type=float, default=0.5)
    p.add_argument("--y", type=float, default=1.0)
    p.add_argument("--horizon", type=float, default=1.0)
    p.add_argument("--dt", type=float, default=1e-4)
    _common(p)
    p.set_defaults(func=cmd_time_change, default_format="json")

    p = sub.add_parser("restriction", help="restriction martingale or avoidance probability")
    p.add_argument("--kappa", type=float, required=True)
    p.add_argument("--p", type=float, default=2.0)
    p.add_argument("--h", type=float, default=1.0)
    p.add_argument("--t", type=float, default=math.inf, help="horizon; inf gives the avoidance probability")
    p.add_argument("--n", type=int, default=10000)
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--J", type=int, default=32)
    _common(p)
    p.set_defaults(func=cmd_restriction, default_format="json")
    return ap


# ----------------------------------------------------------------- checks

def _need(cond, msg):
    if not cond:
        raise ConfigError(msg)


def _params(args, max_kappa=8.0):
    _need(0 < args.kappa < max_kappa, f"kappa must lie in (0, {max_kappa:g})")
    return make_params(args.kappa)


def _mc(args):
    _need(args.n >= 2, "n must be at least 2")
    _need(args.dt > 0, "dt must be positive")


def _stream(args):
    _need(0 <= args.seed < 2 ** 64, "seed must be a 64-bit unsigned integer")
    return RandomStream(args.seed)


# ----------------------------------------------------------- subcommands
# Each returns (table, result): table is (header, rows) or None.

def cmd_phi(args):
    params = _params(args)
    xs = np.asarray(args.grid)
    _need(xs.min() >= 0 and xs.max() <= 1, "grid must lie in [0, 1]")
    f = phi(xs, params)
    rows = []
    for x, v in zip(xs, f):
        if 0 < x < 1:
            d1, d2 = phi_derivs(float(x), params)
        else:
            d1 = d2 = math.nan
        rows.append((float(x), float(v), d1, d2))
    return (["x", "phi", "phi1", "phi2"], rows), {"rows": [list(r) for r in rows]}


def cmd_excursion(args):
    from .domains import HalfPlane, IntervalPair, VerticalSlit, excursion_measure, halfplane_excursion
    try:
        pair = IntervalPair(args.x1, args.y1, args.x2, args.y2)
    except ValueError as e:
        raise ConfigError(str(e)) from None
    if args.slit:
        _need(len(args.slit) == 1, "--slit takes one p,h")
        dom = VerticalSlit(*args.slit[0])
    else:
        dom = HalfPlane()
    val = excursion_measure(dom, pair)
    res = {"value": val}
    if isinstance(dom, HalfPlane):
        if math.isinf(pair.x1) and not math.isinf(pair.y2):
            exact = math.log((pair.y2 - pair.y1) / (pair.x2 - pair.y1))
        elif math.isinf(pair.y2) and not math.isinf(pair.x1):
            exact = math.log((pair.x2 - pair.x1) / (pair.x2 - pair.y1))
        else:
            exact = halfplane_excursion(pair.x1, pair.y1, pair.x2, pair.y2)
        res.update(exact=exact, error=abs(val - exact))
    return (["quantity", "value"], sorted(res.items())), res


def cmd_two_psi(args):
    from .partition import estimate_two_psi
    params = _params(args, 4.0 + 1e-12)
    _mc(args)
    _need(0 < args.x < 1, "x must lie in (0, 1)")
    est = estimate_two_psi(params, args.x, args.n, args.dt, _stream(args), workers=args.workers)
    target = float(phi(args.x, params))
    res = {"mean": est.mean, "stderr": est.stderr, "n": est.n_samples, "phi": target, "zscore": est.zscore(target),
           "pass": bool(est.agrees(target)), "failed": est.config.get("failed", 0)}
    return (["quantity", "value"], sorted(res.items())), res


def cmd_three_psi(args):
    from .partition import PairConfig, estimate_psi
    params = _params(args, 4.0 + 1e-12)
    _mc(args)
    try:
        cfg = PairConfig(args.pairs)
    except ValueError as e:
        raise ConfigError(str(e)) from None
    _need(len(cfg) in (1, 2, 3), "one to three pairs")
    _need(0 <= args.marginal < len(cfg), "marginal out of range")
    est = estimate_psi(params, cfg, args.n, args.dt, _stream(args), marginal=args.marginal, workers=args.workers)
    res = {"mean": est.mean, "stderr": est.stderr, "n": est.n_samples, "marginal": args.marginal}
    return (["quantity", "value"], sorted(res.items())), res


def _default_family():
    # slits whose tips approach the kernel point 1 from above and from the side
    fam = ["halfplane"]
    for d in (0.5, 0.25, 0.1, 0.05, 0.02, 0.01):
        fam.append((1.0 + d, 1.0))
        fam.append((0.5, 1.0 - d))
    return fam


def cmd_deriv_check(args):
    from .domains import derivative_bound_report
    _need(len(args.points) == 1, "--points takes one x,y")
    fam = _default_family() if args.family is None else (["halfplane"] + list(args.family))
    params = _params(args, 4.0 + 1e-12) if args.kappa is not None else None
    rep = derivative_bound_report(fam, args.points[0], params)
    cols = ["p", "h", "delta", "H", "r1", "r2", "rpsi"]
    rows = [tuple(r[c] for c in cols) for r in rep["rows"]]
    return (cols, rows), rep


def _tail(args, weighted):
    from .exponents import distance_tail, geometric_grid, weighted_tail
    params = _params(args)
    _mc(args)
    _need(0 < args.x < 1, "x must lie in (0, 1)")
    hi, lo = args.eps
    _need(0.02 <= lo < hi <= 0.4, "eps range must satisfy 0.02 <= lo < hi <= 0.4")
    _need(args.stride >= 1, "stride must be positive")
    eps = geometric_grid(hi, lo)
    fn = weighted_tail if weighted else distance_tail
    fit = fn(params, args.x, eps, args.n, args.dt, _stream(args), stride=args.stride, workers=args.workers)
    res = {"kappa": args.kappa, "slope": fit.slope, "slope_se": fit.slope_se, "target": fit.target,
           "r2": fit.r2, "pass": bool(fit.within(0.2 if weighted or args.kappa < 2.5 else 0.15)),
           "fit_range": list(fit.fit_range), "dropped": fit.dropped.tolist(),
           "eps": fit.eps.tolist(), "values": fit.values.tolist(), "stderr": fit.stderr.tolist(),
           "hits": fit.hits.tolist()}
    return (["eps", "value", "stderr"], fit.rows()), res


def cmd_dist_tail(args):
    return _tail(args, False)


def cmd_weighted_tail(args):
    return _tail(args, True)


def _diffusion(args, variant):
    from .exponents import DiffusionSpec, invariant_check, simulate_diffusion, stationary_mean
    params = _params(args, 4.0 + 1e-12)
    _need(args.dt > 0 and args.horizon > args.dt, "need dt > 0 and horizon > dt")
    _need(args.n_paths >= 2, "n-paths must be at least 2")
    try:
        spec = DiffusionSpec(variant, args.dt, args.horizon, args.burn_in, n_paths=args.n_paths,
                             record_every=max(1, int(round(0.01 / args.dt))))
    except ValueError as e:
        raise ConfigError(str(e)) from None
    path = simulate_diffusion(spec, params, _stream(args))
    e = spec.stationary_exponent(params)
    rep = invariant_check(path, e, 64, variant=variant, burn_in=spec.burn)
    if variant == "radial_bessel":
        est = stationary_mean(path, lambda th: np.cos(th) ** 2, spec.burn)
        # E cos^2 under sin^e is 1 / (e + 2)
        target, name = 1.0 / (e + 2.0), "mean_cos2"
    else:
        q = 4 * params.a - 1
        est = stationary_mean(path, lambda k: (1 - k) ** (-q), spec.burn)
        # Beta(e+1, e+1) moment of (1-K)^{-q}
        target = math.exp(math.lgamma(e + 1 - q) + math.lgamma(2 * e + 2) - math.lgamma(2 * e + 2 - q)
                          - math.lgamma(e + 1)) if e + 1 - q > 0 else math.inf
        name = "mean_inv_moment"
    res = {name: est.mean, name + "_stderr": est.stderr, "target": target, "distance": rep.distance,
           "distance_pass": rep.passed, "reflections": path.reflections, "burn_in": spec.burn}
    return res, params


def cmd_bessel(args):
    res, _ = _diffusion(args, "radial_bessel")
    return (["quantity", "value"], sorted(res.items())), res


def cmd_jacobi(args):
    from .exponents import DiffusionSpec, drift_test, n_functional
    res, params = _diffusion(args, "tilted_jacobi")
    if args.drift:
        spec = DiffusionSpec("star_jacobi", 1e-4, 1.0, n_paths=args.n_paths)
        rep = drift_test(spec, n_functional(params, args.lam_scale), params, _stream(args).substream(1), x0=0.5)
        res.update({"drift": rep.drift, "drift_stderr": rep.stderr, "drift_accepts": rep.accepts()})
    return (["quantity", "value"], sorted(res.items())), res


def cmd_time_change(args):
    from .exponents import time_change_check
    from .loewner import evolve_chain, sample_driving, track_boundary
    params = _params(args, 4.0 + 1e-12)
    _need(0 < args.x < args.y, "need 0 < x < y")
    _need(args.dt > 0 and args.horizon >= args.dt, "need dt > 0 and horizon >= dt")
    chain = evolve_chain(sample_driving(params, args.horizon, args.dt, _stream(args)), params)
    rep = time_change_check(track_boundary(chain, args.x, args.y), params)
    res = rep.to_dict()
    return (["quantity", "value"], sorted((k, v) for k, v in res.items() if not isinstance(v, list))), res


def cmd_restriction(args):
    from .restriction import HullSpec, avoidance_probability, restriction_martingale_check
    params = _params(args, 4.0 + 1e-12)
    _need(args.n >= 2, "n must be at least 2")
    _need(args.J >= 1, "J must be positive")
    try:
        hull = HullSpec(args.p, args.h)
    except ValueError as e:
        raise ConfigError(str(e)) from None
    _need(args.t >= 0, "t must be nonnegative")
    if math.isinf(args.t):
        _need(abs(params.central_charge) < 1e-12, "t = inf (avoidance) needs kappa = 8/3")
        dt = 1e-3 if args.dt is None else args.dt
        _need(dt > 0, "dt must be positive")
        est = avoidance_probability(params, hull, args.n, dt, _stream(args), workers=args.workers)
        target = est.config["target"]
        res = {"kappa": args.kappa, "hull": {"p": args.p, "h": args.h}, "t": None, "M0": target,
               "mean": est.mean, "stderr": est.stderr, "n": est.n_samples,
               "invalid_fraction": est.config["inconclusive"] / args.n, "pass": bool(est.agrees(target))}
    else:
        dt = 1e-4 if args.dt is None else args.dt
        _need(dt > 0, "dt must be positive")
        rep = restriction_martingale_check(params, hull, args.t, args.n, _stream(args), dt=dt, J=args.J,
                                           workers=args.workers)
        res = rep.to_dict()
    flat = sorted((k, v) for k, v in res.items() if not isinstance(v, dict))
    return (["quantity", "value"], flat), res


# ----------------------------------------------------------------- output

def _clean(v):
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else str(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    if isinstance(v, np.ndarray):
        return _clean(v.tolist())
    return v


def _fmt(v) -> str:
    if isinstance(v, bool) or v is None:
        return str(v)
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return json.dumps(_clean(v), sort_keys=True) if isinstance(v, (list, tuple, dict)) else str(v)


def _config_echo(args) -> dict:
    cfg = {k: v for k, v in vars(args).items() if k not in _NOT_ECHOED and k != "default_format"}
    return _clean(cfg)


def render(args, table, result) -> str:
    fmt = args.format or args.default_format
    cfg = _config_echo(args)
    if fmt == "json":
        doc = {"config": cfg, "version": __version__, "result": _clean(result)}
        return json.dumps(doc, sort_keys=True, indent=1) + "\n"
    buf = io.StringIO()
    buf.write(f"# slelab {__version__}\n")
    for k in sorted(cfg):
        buf.write(f"# {k}={json.dumps(cfg[k], sort_keys=True)}\n")
    w = csv.writer(buf, lineterminator="\n")
    header, rows = table
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def _expand_config(argv):
    """Insert tokens from ``--config FILE`` right after the subcommand."""
    argv = list(argv)
    for i, tok in enumerate(argv):
        if tok == "--config" or tok.startswith("--config="):
            if tok == "--config":
                if i + 1 >= len(argv):
                    raise ConfigError("--config needs a file")
                path = argv[i + 1]
                rest = argv[:i] + argv[i + 2:]
            else:
                path = tok.split("=", 1)[1]
                rest = argv[:i] + argv[i + 1:]
            try:
                extra = read_config_file(path)
            except OSError as e:
                raise ConfigError(f"cannot read config file: {e}") from None
            if not rest:
                raise ConfigError("no subcommand")
            return rest[:1] + extra + rest[1:]
    return argv


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = build_parser().parse_args(_expand_config(argv))
        if args.workers is None:
            args.workers = default_workers()
        _need(args.workers >= 1, "workers must be positive")
        table, result = args.func(args)
    except ConfigError as e:
        print(f"slelab: invalid configuration: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except _NUMERIC_ERRORS as e:
        print(f"slelab: numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as e:
        # preconditions checked inside the library
        print(f"slelab: invalid configuration: {e}", file=sys.stderr)
        return EXIT_CONFIG
    text = render(args, table, result)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

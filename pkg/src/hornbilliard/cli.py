"""Command-line front end: ``hornbilliard <subcommand> [options]``.

Every subcommand writes one CSV table (header row, '.' decimals, '\\n' row
ends) to stdout or ``--out`` and prints ``seed=... config_hash=...`` on
stderr.  Exit status: 0 success, 1 domain/configuration error, 2 usage error.
"""
from __future__ import annotations

import argparse
import copy
import math
import os
import sys

import numpy as np

from .config import build, config_hash, read_doc, shipped_doc
from .errors import BilliardError
from .quadrature import QuadratureSettings

WORKERS_ENV = "HORNBILLIARD_WORKERS"

COLUMNS = {
    "validate": "ok,min_gap,tau_min,tau_max,samples",
    "rotation": "phi0,dtheta,kappa,tmax",
    "conditions": "condition,passed,key,value",
    "orbit": "step,obstacle,theta,phi,tau,sojourn,time",
    "tails": "t,s_star,asymptote_ratio",
    "lyapunov": "replica,exponent,stderr,ci_low,ci_high,restarts",
    "acf": "lag,rho,fitted",
    "hill": "tail_fraction,k,index,stderr",
    "singular-curve": "theta,phi,residual",
    "limitlaw": "replica,T,occupation,centered,scaled",
    "occupation": "T,occupation,rate",
    "plot": "(writes SVG instead of CSV)",
}


class UsageError(Exception):
    pass


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def csv_text(header: str, rows) -> str:
    lines = [header]
    lines += [",".join(_fmt(v) for v in r) for r in rows]
    return "\n".join(lines) + "\n"


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"expected a comma-separated list of numbers, got {text!r}") from None


def _default_workers() -> int:
    env = os.environ.get(WORKERS_ENV)
    if env is None:
        return 1
    try:
        return max(1, int(env))
    except ValueError:
        raise UsageError(f"{WORKERS_ENV} must be an integer, got {env!r}") from None


# ------------------------------------------------------------------ context

class Run:
    """Resolved configuration, seed and quadrature for one invocation."""

    def __init__(self, args, overrides=None, standalone=None):
        self.args = args
        if standalone is not None:
            doc = {"standalone": standalone}
            self.run = None
        else:
            doc = read_doc(args.config) if args.config else shipped_doc("reference")
            doc = copy.deepcopy(doc)
            if overrides:
                overrides(doc)
        if args.tol is not None:
            doc.setdefault("quadrature", {})["rel_tol"] = args.tol
        if standalone is None:
            self.run = build(doc)
            self.q = self.run.quadrature
        else:
            self.q = QuadratureSettings(**doc.get("quadrature", {}))
        seed = args.seed
        if seed is None:
            seed = (self.run.seed if self.run is not None else None) or 0
        if not 0 <= seed < 2 ** 64:
            raise UsageError("--seed must be a 64-bit unsigned integer")
        self.seed = int(seed)
        self.hash = config_hash(doc)
        self.doc = doc

    @property
    def table(self):
        return self.run.table

    def horn(self, index=None) -> int:
        horns = self.table.horn_indices
        if index is None:
            if not horns:
                raise BilliardError("the configuration has no horn")
            return horns[0]
        if index not in horns:
            raise BilliardError(f"obstacle {index} is not a horn")
        return index


def _beta_override(args):
    if getattr(args, "beta", None) is None:
        return None

    def apply(doc):
        obs = doc["table"]["obstacles"]
        idx = args.horn if args.horn is not None else next(
            (k for k, o in enumerate(obs) if o.get("kind") == "horn"), None)
        if idx is None or not 0 <= idx < len(obs) or obs[idx].get("kind") != "horn":
            raise BilliardError("--beta needs a horn in the configuration")
        obs[idx]["beta"] = args.beta
    return apply


def _mu_start(run: Run):
    from .suspension import sample_mu
    return sample_mu(run.table, np.random.default_rng(np.random.SeedSequence([run.seed])))


# ------------------------------------------------------------------ commands

def cmd_validate(args):
    from .table import validate_table
    run = Run(args)
    rep = validate_table(run.table)
    for w in rep.warnings:
        print(f"warning: {w}", file=sys.stderr)
    return run, [(rep.ok, rep.min_gap, rep.tau_min, rep.tau_max, rep.samples)], (0 if rep.ok else 1)


def cmd_rotation(args):
    from .profile_horn import HornProfile, excursion
    run = Run(args, standalone={"beta": args.beta, "r0": args.r0})
    prof = HornProfile(args.beta, args.r0)
    if args.grid < 1:
        raise UsageError("--grid must be positive")
    if args.spacing == "log":
        grid = np.geomspace(args.phi_min, args.phi_max, args.grid)
    else:
        grid = np.linspace(args.phi_min, args.phi_max, args.grid)
    rows = []
    for p in grid:
        e = excursion(prof, float(p), run.q)
        rows.append((float(p), e.dtheta, e.kappa, e.tmax))
    return run, rows, 0


def cmd_conditions(args):
    from .tangent import conditions_report
    run = Run(args, overrides=_beta_override(args))
    ob = run.table.obstacles[run.horn(args.horn)]
    rep = conditions_report(ob.profile, run.table, run.q)
    rows = [(it.name, it.passed, k, v) for it in rep.items for k, v in it.witness.items()]
    return run, rows, 0


def cmd_orbit(args):
    from .suspension import orbit
    from .table import CollisionCoord
    run = Run(args)
    if args.start:
        v = _floats(args.start)
        if len(v) != 3:
            raise UsageError("--start takes obstacle,theta,phi")
        x0 = CollisionCoord(int(v[0]), v[1], v[2])
    else:
        x0 = _mu_start(run)
    rec = orbit(run.table, x0, args.n, args.time)
    if rec.termination != "completed":
        print(f"orbit terminated: {rec.termination}", file=sys.stderr)
    rows = [(k, rec.obstacle[k], rec.theta[k], rec.phi[k], rec.tau[k], rec.sojourn[k], rec.time[k])
            for k in range(len(rec))]
    return run, rows, 0


def cmd_tails(args):
    from .profile_horn import HornProfile
    from .suspension import tail_profile
    run = Run(args, standalone={"beta": args.beta, "r0": args.r0})
    rows = [(r.t, r.s_star, r.asymptote_ratio)
            for r in tail_profile(HornProfile(args.beta, args.r0), _floats(args.t), run.q)]
    return run, rows, 0


def cmd_lyapunov(args):
    from .tangent import lyapunov
    run = Run(args)
    res = lyapunov(run.table, args.n, run.seed, args.replicas, workers=args.workers)
    lo, hi = res.ci95
    rows = [(r, float(v), "", "", "", "") for r, v in enumerate(res.replicas)]
    rows.append(("all", res.exponent, res.stderr, lo, hi, res.restarts))
    return run, rows, 0


def _observable(name):
    if name == "cos_theta":
        return lambda th, ph: np.cos(th)
    if name == "sin_phi":
        return lambda th, ph: np.sin(ph)
    if name == "phi":
        return lambda th, ph: ph
    raise UsageError(f"unknown observable {name!r}")


def cmd_acf(args):
    from .stats import acf
    from .suspension import orbit
    run = Run(args)
    rec = orbit(run.table, _mu_start(run), args.n)
    if rec.termination != "completed":
        raise BilliardError(f"orbit terminated early: {rec.termination}")
    series = _observable(args.observable)(rec.theta, rec.phi)
    lo, hi = (int(v) for v in _floats(args.fit_lags))
    res = acf(series, args.max_lag, (lo, hi))
    print(f"slope={res.slope!r} noise_floor={res.noise_floor!r}", file=sys.stderr)
    fitted = set(res.fitted_lags.tolist())
    rows = [(int(k), float(r), int(k) in fitted) for k, r in zip(res.lags, res.rho)]
    return run, rows, 0


def _read_input(path):
    if path in (None, "-"):
        return sys.stdin.read()
    try:
        with open(path) as f:
            return f.read()
    except OSError as e:
        raise BilliardError(f"{path}: {e.strerror}") from None


def cmd_hill(args):
    from .plot import read_csv
    from .stats import hill
    run = Run(args, standalone={"input": args.input or "-", "column": args.column})
    _, cols = read_csv(_read_input(args.input))
    if args.column not in cols:
        raise BilliardError(f"no numeric column {args.column!r}")
    x = cols[args.column]
    if args.where:
        key, _, val = args.where.partition("=")
        if key not in cols:
            raise BilliardError(f"no numeric column {key!r}")
        x = x[cols[key] == float(val)]
    x = np.abs(x) if args.abs else x
    rows = []
    for f in _floats(args.fractions):
        fit = hill(x, f)
        rows.append((f, fit.k_used, fit.index, fit.stderr))
    return run, rows, 0


def cmd_singular_curve(args):
    from .tangent import head_on_curve
    run = Run(args)
    target = run.horn(args.target)
    source = args.source
    if source is None:
        if target not in run.run.opposite_map:
            raise BilliardError(f"no --source given and opposite_map has no entry for {target}")
        source = run.run.opposite_map[target]
    grid = np.linspace(0.0, 2.0 * math.pi, args.grid, endpoint=False)
    cur = head_on_curve(run.table, source, target, grid, args.depth)
    if cur.gaps.size:
        print(f"no head-on root at {cur.gaps.size} of {grid.size} thetas", file=sys.stderr)
    return run, list(zip(cur.theta, cur.phi, cur.residual)), 0


def cmd_limitlaw(args):
    from .stats import limit_law_experiment
    run = Run(args, overrides=_beta_override(args))
    horn = run.horn(args.horn)
    res = limit_law_experiment(run.table, horn, _floats(args.T), args.replicas, run.seed, args.workers)
    if res.trapped:
        print(f"discarded {res.trapped} trapped replicas", file=sys.stderr)
    cen, sc = res.centered(), res.scaled(args.scaling)
    ks = res.ks_consecutive(args.scaling)
    print("ks_consecutive=" + ",".join(repr(v) for v in ks), file=sys.stderr)
    rows = [(r, res.T[k], res.occupation[r, k], cen[r, k], sc[r, k])
            for r in range(res.occupation.shape[0]) for k in range(res.T.size)]
    return run, rows, 0


def cmd_occupation(args):
    from .suspension import horn_occupation, occupation_rate
    run = Run(args, overrides=_beta_override(args))
    horn = run.horn(args.horn)
    T = np.sort(np.array(_floats(args.T)))
    occ = horn_occupation(run.table, _mu_start(run), T, horn)
    rate = occupation_rate(run.table, horn, run.q)
    return run, [(t, o, rate) for t, o in zip(T, np.atleast_1d(occ))], 0


def cmd_plot(args):
    from .plot import render_svg
    run = Run(args, standalone={"input": args.input or "-", "kind": args.kind})
    svg = render_svg(_read_input(args.input), args.kind, args.x, args.y, args.bins,
                     args.logx, args.logy, args.title)
    return run, svg, 0


# ------------------------------------------------------------------ parser

def _common(p, config=True):
    if config:
        p.add_argument("--config", help="JSON run configuration (default: shipped reference table)")
    p.add_argument("--seed", type=int, help="64-bit seed (default: config seed, else 0)")
    p.add_argument("--tol", type=float, help="relative quadrature tolerance (default 1e-10)")
    p.add_argument("--workers", type=int, default=None,
                   help=f"worker threads; never changes results (default ${WORKERS_ENV} or 1)")
    p.add_argument("--out", help="output file (default stdout)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hornbilliard",
                                 description="Billiards with Torricelli-trumpet horns.")
    sub = ap.add_subparsers(dest="command", metavar="command")

    def add(name, help, config=True):
        p = sub.add_parser(name, help=help, description=f"{help[0].upper()}{help[1:]}. CSV columns: {COLUMNS[name]}")
        _common(p, config)
        return p

    add("validate", "check disjointness and finite horizon of the table")

    p = add("rotation", "rotation function, its derivative and half-sojourn on a phi grid", config=False)
    p.add_argument("--beta", type=float, default=1.5)
    p.add_argument("--r0", type=float, default=1.0)
    p.add_argument("--grid", type=int, default=100)
    p.add_argument("--phi-min", type=float, default=1e-3)
    p.add_argument("--phi-max", type=float, default=0.5 * math.pi)
    p.add_argument("--spacing", choices=("linear", "log"), default="linear")

    p = add("conditions", "regularity conditions on the rotation function of a horn")
    p.add_argument("--horn", type=int)
    p.add_argument("--beta", type=float, help="override the horn exponent")

    p = add("orbit", "billiard orbit from a mu-random (or given) start")
    p.add_argument("--n", type=int, help="number of collisions")
    p.add_argument("--time", type=float, help="flow time")
    p.add_argument("--start", help="obstacle,theta,phi")

    p = add("tails", "exact sojourn tail against its power-law asymptote", config=False)
    p.add_argument("--beta", type=float, default=1.5)
    p.add_argument("--r0", type=float, default=1.0)
    p.add_argument("--t", default="1e3,1e4,1e5,1e6")

    p = add("lyapunov", "top Lyapunov exponent per collision (last row: mean and 95%% CI)")
    p.add_argument("--n", type=int, default=100_000)
    p.add_argument("--replicas", type=int, default=50)

    p = add("acf", "autocorrelation of an observable along a mu-random orbit")
    p.add_argument("--n", type=int, default=1_000_000)
    p.add_argument("--max-lag", type=int, default=50)
    p.add_argument("--fit-lags", default="1,15")
    p.add_argument("--observable", default="cos_theta", choices=("cos_theta", "sin_phi", "phi"))

    p = add("hill", "Hill tail index of a CSV column", config=False)
    p.add_argument("--input", help="CSV file (default stdin)")
    p.add_argument("--column", default="scaled")
    p.add_argument("--where", help="restrict rows, e.g. T=20000")
    p.add_argument("--fractions", default="0.02,0.05,0.1")
    p.add_argument("--abs", action="store_true", help="use absolute values")

    p = add("singular-curve", "outgoing points whose next collision is head-on at a horn")
    p.add_argument("--target", type=int)
    p.add_argument("--source", type=int, help="default: opposite_map[target]")
    p.add_argument("--grid", type=int, default=64)
    p.add_argument("--depth", type=int, default=1)

    p = add("limitlaw", "scaled horn occupation over independent mu-random orbits")
    p.add_argument("--horn", type=int)
    p.add_argument("--beta", type=float, help="override the horn exponent")
    p.add_argument("--T", default="5000,20000")
    p.add_argument("--replicas", type=int, default=2000)
    p.add_argument("--scaling", choices=("stable", "tlogt", "sqrt"), default=None,
                   help="default follows beta")

    p = add("occupation", "horn occupation time of one mu-random orbit")
    p.add_argument("--horn", type=int)
    p.add_argument("--beta", type=float, help="override the horn exponent")
    p.add_argument("--T", default="1000,10000")

    p = add("plot", "render a CSV table to a static SVG", config=False)
    p.add_argument("--input", help="CSV file (default stdin)")
    p.add_argument("--kind", choices=("line", "scatter", "hist"), default="line")
    p.add_argument("--x")
    p.add_argument("--y")
    p.add_argument("--bins", type=int, default=50)
    p.add_argument("--logx", action="store_true")
    p.add_argument("--logy", action="store_true")
    p.add_argument("--title", default="")
    return ap


COMMANDS = {
    "validate": cmd_validate, "rotation": cmd_rotation, "conditions": cmd_conditions,
    "orbit": cmd_orbit, "tails": cmd_tails, "lyapunov": cmd_lyapunov, "acf": cmd_acf,
    "hill": cmd_hill, "singular-curve": cmd_singular_curve, "limitlaw": cmd_limitlaw,
    "occupation": cmd_occupation, "plot": cmd_plot,
}


def dispatch(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    if args.command is None:
        ap.print_usage(sys.stderr)
        return 2
    if args.workers is None:
        try:
            args.workers = _default_workers()
        except UsageError as e:
            print(f"hornbilliard: error: {e}", file=sys.stderr)
            return 2
    try:
        run, payload, code = COMMANDS[args.command](args)
    except UsageError as e:
        print(f"hornbilliard {args.command}: error: {e}", file=sys.stderr)
        return 2
    except (BilliardError, ValueError) as e:
        print(f"hornbilliard {args.command}: {type(e).__name__}: {e}", file=sys.stderr)
        return 1
    print(f"seed={run.seed} config_hash={run.hash}", file=sys.stderr)
    text = payload if isinstance(payload, str) else csv_text(COLUMNS[args.command], payload)
    if args.out:
        with open(args.out, "w", newline="\n") as f:
            f.write(text)
    else:
        sys.stdout.write(text)
        sys.stdout.flush()
    return code


def main(argv=None):
    sys.exit(dispatch(argv))


if __name__ == "__main__":
    main()

"""Command-line front end: ``arwsim <subcommand> --seed N ...``.

Each run writes ``<sub>-<hash>.csv``, a JSON sidecar with the summary and a
manifest, where ``<hash>`` is taken over the resolved config (minus
``out`` and ``workers``, which never change results).  Exit codes: 0 ok,
1 validation error, 2 threshold failure in a check subcommand.
"""

from __future__ import annotations

import argparse
import math
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .chains import ChainError, SleepRates, build_ball, parse_chain_spec
from .engine import Configuration
from .io import RunManifest, config_hash, load_config, write_csv, write_json

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_THRESHOLD = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def parse_lambda(text: str, n: int) -> SleepRates:
    """Scalar (``1``, ``0``, ``inf``) or a file with one rate per vertex."""
    text = str(text)
    try:
        return SleepRates.constant(float(text), n)
    except ValueError:
        pass
    path = Path(text)
    if not path.exists():
        raise UsageError(f"--lambda: not a number or a file: {text!r}")
    vals = [float(x) for x in path.read_text().split()]
    if len(vals) != n:
        raise UsageError(f"--lambda file has {len(vals)} rates, chain has {n} vertices")
    return SleepRates(tuple(vals))


def parse_driving(text: str, chain, seed: int):
    """``central[:v]``, ``uniform[:seed]``, ``permutation[:seed]`` or ``file:PATH``."""
    from .process import DrivingSequence

    kind, _, arg = str(text).partition(":")
    n = chain.num_vertices
    if kind == "central":
        v = int(arg) if arg else chain.origin()
        if not 0 <= v < n:
            raise UsageError(f"central vertex {v} outside 0..{n - 1}")
        return DrivingSequence.central(v)
    if kind == "uniform":
        return DrivingSequence.uniform(int(arg) if arg else seed)
    if kind == "permutation":
        return DrivingSequence.permutation(n, int(arg) if arg else seed)
    if kind == "file":
        seq = [int(x) for x in Path(arg).read_text().split()]
        d = DrivingSequence.custom(seq)
        d.validate(n)
        return d
    raise UsageError(f"unknown driving {text!r}")


def _ints(text) -> list[int]:
    if isinstance(text, (list, tuple)):
        return [int(x) for x in text]
    text = str(text)
    if ":" in text:
        lo, hi = text.split(":")[:2]
        return list(range(int(lo), int(hi) + 1))
    return [int(x) for x in text.split(",") if x]


def _floats(text) -> list[float]:
    if isinstance(text, (list, tuple)):
        return [float(x) for x in text]
    return [float(x) for x in str(text).split(",") if x]


def _num(x):
    return float(x) if x is not None else None


# --- subcommands -----------------------------------------------------------
# Each returns (columns, rows, summary, exit_code[, extra files]).


def cmd_sample(a):
    from .process import exact_samples
    from .stats import counts_table

    chain = parse_chain_spec(a.chain)
    rates = parse_lambda(a.lam, chain.num_vertices)
    batch = exact_samples(chain, rates, a.seed, a.samples, a.workers)
    n = chain.num_vertices
    if n <= 62:
        counts = counts_table(batch.codes)
        rows = [{"state": Configuration.from_code(c, n).to_string(), "count": k, "frequency": k / a.samples}
                for c, k in sorted(counts.items())]
        cols = ["state", "count", "frequency"]
    else:
        counts = counts_table(batch.sleepers)
        rows = [{"sleepers": c, "count": k, "frequency": k / a.samples} for c, k in sorted(counts.items())]
        cols = ["sleepers", "count", "frequency"]
    summary = {"mean_sleepers": float(batch.sleepers.mean()), "mean_firings": float(batch.firings.mean())}
    return cols, rows, summary, EXIT_OK


def cmd_run_arw(a):
    from .process import run_arw

    chain = parse_chain_spec(a.chain)
    rates = parse_lambda(a.lam, chain.num_vertices)
    driving = parse_driving(a.driving, chain, a.seed)
    s0 = Configuration.from_string(a.initial) if a.initial else None
    trace = run_arw(chain, rates, driving, a.steps, a.seed, sigma0=s0, trial=a.trial)
    rows = [{"t": s.t, "u": s.u, "config": s.config, "idla": s.idla, "firings": sum(s.increment)}
            for s in trace.steps]
    summary = {"t_full": trace.t_full, "in_theorem_scope": trace.in_theorem_scope}
    return ["t", "u", "config", "idla", "firings"], rows, summary, EXIT_OK, {"jsonl": trace.to_jsonl()}


def cmd_run_idla(a):
    from .process import run_idla

    chain = parse_chain_spec(a.chain)
    driving = parse_driving(a.driving, chain, a.seed)
    t_full, trace = run_idla(chain, driving, a.steps, a.seed, trial=a.trial)
    rows = [{"t": s.t, "u": s.u, "idla": s.idla, "firings": sum(s.increment)} for s in trace.steps]
    return ["t", "u", "idla", "firings"], rows, {"t_full": t_full}, EXIT_OK, {"jsonl": trace.to_jsonl()}


_TAIL_COLS = ["chain", "driving", "threshold", "trials", "exceed", "frequency", "ci_low", "ci_high", "seed"]


def _dim(chain) -> int:
    return 1 if chain.coords is None else int(chain.coords.shape[1])


def cmd_fill_tail(a):
    from .experiments import fill_tail, tail_bound

    chain = parse_chain_spec(a.chain)
    driving = parse_driving(a.driving, chain, a.seed)
    d = _dim(chain)
    alpha = a.alpha if a.alpha is not None else 1.0 - 1.0 / (3 * d)
    est = fill_tail(chain, driving, alpha, a.coefficient, a.trials, a.seed, a.workers)
    r = float(a.chain.split("r=")[1].split(",")[0]) if "r=" in a.chain else float("nan")
    summary = {"alpha": alpha, "bound": tail_bound(d, r, alpha)}
    return _TAIL_COLS, [est.row()], summary, EXIT_OK


def cmd_fill_lower(a):
    from .experiments import fill_lower_bound_probe, lower_exponent

    chain = parse_chain_spec(a.chain)
    driving = parse_driving(a.driving, chain, a.seed)
    beta = a.beta if a.beta is not None else lower_exponent(_dim(chain))
    est = fill_lower_bound_probe(chain, driving, beta, a.b, a.trials, a.seed, a.workers)
    return _TAIL_COLS, [est.row()], {"beta": beta, "b": a.b}, EXIT_OK


def cmd_tree_fill(a):
    from .chains import build_wired_tree
    from .experiments import wired_tree_fill

    chain = build_wired_tree(a.n)
    driving = parse_driving(a.driving, chain, a.seed)
    res = wired_tree_fill(a.n, driving, a.trials, a.seed, workers=a.workers)
    rows = [{"trial": i, "t_full": int(t), "ratio": float(r)} for i, (t, r) in enumerate(zip(res.times, res.ratios))]
    summary = {f"q{int(p * 100):02d}": res.quantile(p) for p in (0.05, 0.5, 0.95)}
    summary["num_vertices"] = res.num_vertices
    return ["trial", "t_full", "ratio"], rows, summary, EXIT_OK


def cmd_mix(a):
    from .experiments import mixing_profile

    chain = parse_chain_spec(a.chain)
    rates = parse_lambda(a.lam, chain.num_vertices)
    driving = parse_driving(a.driving, chain, a.seed)
    rows = mixing_profile(chain, rates, driving, _ints(a.times), a.samples, a.seed,
                          projection=a.projection, workers=a.workers)
    out = [r.row() for r in rows]
    summary = {"projection": a.projection, "all_within_bound": all(r.within_bound for r in rows)}
    return ["t", "start", "tv", "radius", "p_not_full", "samples"], out, summary, EXIT_OK


def cmd_harmonic(a):
    from .experiments import harmonic_table, hitting_frequency

    chain = parse_chain_spec(a.chain)
    table = harmonic_table(chain)
    g = table.green
    hit = table.hitting
    diag = np.diag(g)
    o = chain.origin()
    coords = chain.coords if chain.coords is not None else np.arange(chain.num_vertices)[:, None]
    rows = [{"vertex": z, "coords": " ".join(map(str, coords[z])), "green_diag": float(diag[z]),
             "green_origin": float(g[o, z]), "exit_time": float(table.exit_times[z]),
             "hit_sum": float(hit[:, z].sum())} for z in range(chain.num_vertices)]
    sym = float(np.abs(g - g.T).max())
    ident = float(np.abs(diag[None, :] * hit - g).max())
    col = float(np.abs(g.sum(axis=0) - table.exit_times).max())
    rng = np.random.default_rng(a.seed)
    spots = []
    worst = 0.0
    for _ in range(a.spots):
        y, z = (int(x) for x in rng.integers(chain.num_vertices, size=2))
        f = hitting_frequency(chain, y, z, a.walks, a.seed, a.workers)
        p = float(hit[y, z])
        se = math.sqrt(max(p * (1 - p), 1e-12) / a.walks)
        worst = max(worst, abs(f - p) / se)
        spots.append({"y": y, "z": z, "exact": p, "mc": f, "z_score": abs(f - p) / se})
    summary = {"residual": table.residual, "symmetry": sym, "identity": ident,
               "column_sum_vs_exit_time": col, "spot_checks": spots, "max_z_score": worst}
    ok = max(sym, ident, col) <= 1e-9 and worst <= 4.0
    return ["vertex", "coords", "green_diag", "green_origin", "exit_time", "hit_sum"], rows, summary, \
        EXIT_OK if ok else EXIT_THRESHOLD


def cmd_sandpile(a):
    from .experiments import divisible_sandpile_check

    rep = divisible_sandpile_check(a.d, a.r, a.alpha, a.mass)
    row = rep.row()
    return list(row), [row], {"converged": rep.converged}, EXIT_OK


def cmd_density(a):
    from .experiments import density_probe

    lam = float(a.lam)
    rows = density_probe(a.d, _floats(a.radii), lam, a.trials, a.seed, a.workers)
    return ["r", "num_vertices", "mean", "stderr", "trials"], [r.row() for r in rows], {}, EXIT_OK


def cmd_hyperuniform(a):
    from .experiments import hyperuniformity_probe

    rows, slope = hyperuniformity_probe(_ints(a.lengths), float(a.lam), a.trials, a.seed, a.workers)
    return ["L", "variance", "ci_low", "ci_high", "trials"], [r.row() for r in rows], \
        {"loglog_slope": slope}, EXIT_OK


def cmd_check_abelian(a):
    from .checks import abelian_check

    rows = abelian_check(a.trials, a.seed)
    good = sum(r["match"] for r in rows)
    print(f"{good}/{len(rows)} exact matches")
    cols = ["instance", "vertices", "lambda", "config", "tape_seed", "final", "odometer_total", "match"]
    return cols, rows, {"matches": good}, EXIT_OK if good == len(rows) else EXIT_THRESHOLD


def cmd_sst_check(a):
    from .process import strong_stationarity_check

    chain = parse_chain_spec(a.chain)
    rates = parse_lambda(a.lam, chain.num_vertices)
    driving = parse_driving(a.driving, chain, a.seed)
    s0 = Configuration.from_string(a.initial) if a.initial else None
    rep = strong_stationarity_check(chain, rates, driving, a.t, a.samples, a.seed, s0, workers=a.workers)
    n = chain.num_vertices
    keys = sorted(set(rep.law) | set(rep.reference))
    rows = [{"state": Configuration.from_code(k, n).to_string(), "conditioned": rep.law.get(k, 0.0),
             "reference": rep.reference.get(k, 0.0)} for k in keys]
    summary = {"tv": rep.tv, "radius": rep.radius, "conditioned": rep.conditioned,
               "inconclusive": rep.inconclusive}
    if rep.inconclusive:
        print("inconclusive: too few traces with T_full <= t")
        code = EXIT_THRESHOLD
    else:
        limit = a.max_tv if a.max_tv is not None else 3 * rep.radius
        print(f"TV {rep.tv:.5f} (limit {limit:.5f}, {rep.conditioned} conditioned traces)")
        code = EXIT_OK if rep.tv <= limit else EXIT_THRESHOLD
    return ["state", "conditioned", "reference"], rows, summary, code


def cmd_budget(a):
    from .experiments import coupon_bound, torus_mixing_budget

    row = {"d": a.d, "n": a.n, "N": a.n**a.d, "budget": torus_mixing_budget(a.d, a.n)}
    cols = ["d", "n", "N", "budget"]
    if a.eps is not None:
        row["coupon"] = coupon_bound(a.n**a.d, a.eps)
        cols.append("coupon")
    return cols, [row], {}, EXIT_OK


# --- parser ------------------------------------------------------------------


def _common(p, chain=None, lam=False, driving=None, seed=True, workers=True):
    if chain is not None:
        p.add_argument("--chain", default=chain, help="kind:key=val,... (ball, torus, interval, tree, path)")
    if lam:
        p.add_argument("--lambda", dest="lam", default="1", help="sleep rate: number, inf, or a file")
    if driving is not None:
        p.add_argument("--driving", default=driving, help="central[:v] | uniform | permutation | file:PATH")
    p.add_argument("--seed", type=int, default=None, help="master seed (required)" if seed else "unused")
    if workers:
        p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--config", default=None, help="JSON or TOML file with defaults")


COMMANDS = {}


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="arwsim", description="Activated random walk and IDLA experiments.")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)

    def add(name, fn, help_, seeded=True):
        p = sub.add_parser(name, help=help_)
        p.set_defaults(func=fn, seeded=seeded)
        COMMANDS[name] = p
        return p

    p = add("sample", cmd_sample, "exact stationary samples")
    _common(p, "interval:r=2", lam=True)
    p.add_argument("--samples", "--trials", dest="samples", type=int, default=1000)

    p = add("run-arw", cmd_run_arw, "one driven ARW trace with the coupled IDLA")
    _common(p, "interval:r=2", lam=True, driving="central", workers=False)
    p.add_argument("--steps", type=int, default=20)
    p.add_argument("--trial", type=int, default=0)
    p.add_argument("--initial", default=None, help="starting configuration, e.g. 's.s'")

    p = add("run-idla", cmd_run_idla, "one pure IDLA trace")
    _common(p, "interval:r=2", driving="central", workers=False)
    p.add_argument("--steps", type=int, default=100)
    p.add_argument("--trial", type=int, default=0)

    p = add("fill-tail", cmd_fill_tail, "tail of the IDLA fill time")
    _common(p, "interval:r=50", driving="central")
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--coefficient", type=float, default=1.0)
    p.add_argument("--trials", "--samples", dest="trials", type=int, default=200)

    p = add("fill-lower", cmd_fill_lower, "fill-time tail at the lower-bound exponent")
    _common(p, "interval:r=50", driving="central")
    p.add_argument("--beta", type=float, default=None)
    p.add_argument("--b", type=float, default=1.0)
    p.add_argument("--trials", "--samples", dest="trials", type=int, default=200)

    p = add("tree-fill", cmd_tree_fill, "fill time of the wired tree's bottom layer")
    _common(p, None, driving="central:0")
    p.add_argument("--n", type=int, default=8)
    p.add_argument("--trials", "--samples", dest="trials", type=int, default=100)

    p = add("mix", cmd_mix, "TV distance to stationarity over a time grid")
    _common(p, "interval:r=2", lam=True, driving="central")
    p.add_argument("--times", default="0:10", help="comma list or lo:hi")
    p.add_argument("--samples", "--trials", dest="samples", type=int, default=10000)
    p.add_argument("--projection", action="store_true", help="compare sleeper counts only")

    p = add("harmonic", cmd_harmonic, "Green function and hitting probabilities of a ball")
    _common(p, "ball:d=2,r=10")
    p.add_argument("--walks", type=int, default=100000)
    p.add_argument("--spots", type=int, default=5)

    p = add("sandpile", cmd_sandpile, "divisible sandpile and the Green-function inequality", seeded=False)
    _common(p, None, seed=False, workers=False)
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--r", type=float, default=10)
    p.add_argument("--alpha", type=float, default=5 / 6)
    p.add_argument("--mass", type=float, default=None)

    p = add("density", cmd_density, "density of S[1_B] on a ladder of balls")
    _common(p, None)
    p.add_argument("--lambda", dest="lam", default="1")
    p.add_argument("--d", type=int, default=1)
    p.add_argument("--radii", default="4,8,16")
    p.add_argument("--trials", "--samples", dest="trials", type=int, default=200)

    p = add("hyperuniform", cmd_hyperuniform, "variance of the sleeper count on paths")
    _common(p, None)
    p.add_argument("--lambda", dest="lam", default="1")
    p.add_argument("--lengths", default="8,16,32")
    p.add_argument("--trials", "--samples", dest="trials", type=int, default=200)

    p = add("check-abelian", cmd_check_abelian, "abelian property on random instances")
    _common(p, None, workers=False)
    p.add_argument("--trials", type=int, default=1000)

    p = add("sst-check", cmd_sst_check, "law of sigma_t given T_full <= t versus exact samples")
    _common(p, "interval:r=2", lam=True, driving="central")
    p.add_argument("--t", type=int, default=6)
    p.add_argument("--samples", "--trials", dest="samples", type=int, default=100000)
    p.add_argument("--initial", default=None)
    p.add_argument("--max-tv", type=float, default=None)

    p = add("budget", cmd_budget, "torus mixing budget and coupon bound", seeded=False)
    _common(p, None, seed=False, workers=False)
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--eps", type=float, default=None)
    return ap


_UNHASHED = {"out", "workers", "config", "func", "seeded", "command"}


def _resolve(argv) -> argparse.Namespace:
    ap = build_parser()
    args = ap.parse_args(argv)
    if args.command is None:
        raise UsageError("a subcommand is required")
    if args.config:
        cfg = load_config(args.config)
        sub = COMMANDS[args.command]
        known = {a.dest for a in sub._actions}
        aliases = {"lambda": "lam"}
        cfg = {aliases.get(k, k): v for k, v in cfg.items()}
        unknown = set(cfg) - known
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        sub.set_defaults(**cfg)
        args = ap.parse_args(argv)
    if args.seeded and args.seed is None:
        raise UsageError("--seed is required")
    if getattr(args, "workers", 1) < 1:
        raise UsageError("--workers must be >= 1")
    return args


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    started = datetime.now(timezone.utc).isoformat()
    try:
        args = _resolve(argv)
        if not hasattr(args, "workers"):
            args.workers = 1
        result = args.func(args)
    except (UsageError, ChainError, ValueError, KeyError, OSError) as exc:
        print(f"arwsim: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    cols, rows, summary, code = result[:4]
    extra = result[4] if len(result) > 4 else {}
    config = {k: v for k, v in sorted(vars(args).items()) if k not in _UNHASHED}
    stem = f"{args.command}-{config_hash({'command': args.command, **config})}"
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    paths = [write_csv(out / f"{stem}.csv", cols, rows)]
    for suffix, text in extra.items():
        path = out / f"{stem}.{suffix}"
        path.write_text(text, encoding="utf-8")
        paths.append(path)
    paths.append(write_json(out / f"{stem}.json", {"command": args.command, "config": config,
                                                    "summary": summary, "version": __version__,
                                                    "columns": cols, "rows": len(rows)}))
    manifest = RunManifest(args.command, config, args.seed, __version__, started,
                           datetime.now(timezone.utc).isoformat(), [p.name for p in paths])
    manifest.write(out / f"{stem}.manifest.json")
    print(out / f"{stem}.csv")
    return code


if __name__ == "__main__":
    sys.exit(main())

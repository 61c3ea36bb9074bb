"""Command-line interface: ``oomcraft simulate|learn|eval|reproduce``.

Exit codes: 0 success, 2 usage or configuration error, 3 numerical or rank
error, 4 I/O or file-format error.
"""

import argparse
import configparser
import csv
import io
import logging
import os
import secrets
import shlex
import sys
from dataclasses import fields, replace

import numpy as np

from . import analysis, io_formats, simulate, spectral
from .errors import (
    CapacityError,
    ConfigError,
    InputError,
    OomError,
    ParseError,
    RankDeficiencyError,
    RegularizationError,
)
from .model import (
    BinlessOom,
    BinSpec,
    CoarseGrainedOom,
    Oom,
    binless_expectation_r1,
    coarse_grain_learn,
    sequence_probability,
)

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4

DEFAULT_T_GRID = {
    "2b": (50, 100, 200, 300, 500, 1000),
    "2c": (50, 100, 200, 300, 500, 1000),
    "2d": (50, 100, 200, 300, 500, 1000),
    "3b": (200, 500, 1000, 1500, 2000, 2500),
}

_SIM_KEYS = {
    "beta": float, "dt": float, "n_steps": int, "n_traj": int, "seed": int,
    "substeps": int, "noise_scale": float, "init": str, "init_lo": str, "init_hi": str,
    "box_lo": str, "box_hi": str,
}
_LEARNER_KEYS = {
    "m": int, "L": int, "D1": int, "D2": int, "svd_floor": float, "seed": int, "bandwidth": str,
}
_PLAN_KEYS = {
    "t_grid": str, "budget": int, "repeats": int, "estimators": str, "seed": int,
    "threads": int, "discrete_m": int, "coarse_bins": int, "coarse_L": int,
    "hist_bins": int, "tau": int, "oracle_trajectories": int, "oracle_steps": int,
}
_SECTIONS = {"sim": _SIM_KEYS, "learner": _LEARNER_KEYS, "plan": _PLAN_KEYS}


class UsageError(OomError):
    pass


def _floats(text):
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}") from None


def load_config(path=None, overrides=()):
    """Read an INI config into ``{section: {key: value}}`` with typed values.

    Unknown sections or keys raise :class:`ConfigError`. ``overrides`` are
    ``section.key=value`` strings applied after the file.
    """
    raw = {name: {} for name in _SECTIONS}
    if path is not None:
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        try:
            with open(path, encoding="utf-8") as fh:
                parser.read_file(fh)
        except configparser.Error as err:
            raise ConfigError(f"{path}: {err}") from None
        for section in parser.sections():
            if section not in _SECTIONS:
                raise ConfigError(f"{path}: unknown section [{section}]")
            raw[section].update(parser.items(section))
    for item in overrides:
        key, sep, value = item.partition("=")
        section, dot, name = key.partition(".")
        if not sep or not dot:
            raise ConfigError(f"override {item!r} must look like section.key=value")
        if section not in _SECTIONS:
            raise ConfigError(f"unknown section {section!r} in override {item!r}")
        raw[section][name] = value
    typed = {}
    for section, values in raw.items():
        allowed = _SECTIONS[section]
        typed[section] = {}
        for key, value in values.items():
            if key not in allowed:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")
            try:
                typed[section][key] = allowed[key](value.strip())
            except ValueError:
                raise ConfigError(f"invalid value {value!r} for {section}.{key}") from None
    return typed


def sim_config(system, values, seed):
    base = simulate.default_config_1d() if system == "1d" else simulate.default_config_2d()
    kw = {k: v for k, v in values.items() if k in ("beta", "dt", "n_steps", "n_traj", "substeps", "noise_scale")}
    init = list(base.init)
    if "init" in values:
        init[0] = values["init"]
    if "init_lo" in values:
        init[1] = _floats(values["init_lo"])
    if "init_hi" in values:
        init[2] = _floats(values["init_hi"])
    kw["init"] = tuple(init)
    if "box_lo" in values or "box_hi" in values:
        if values.get("box_lo", "none") == "none":
            kw["box"] = None
        else:
            kw["box"] = (_floats(values["box_lo"]), _floats(values["box_hi"]))
    try:
        return replace(base, seed=seed, **kw)
    except InputError as err:
        raise ConfigError(str(err)) from None


def learner_config(values, seed=None):
    kw = dict(values)
    if "bandwidth" in kw and kw["bandwidth"] != "median":
        try:
            kw["bandwidth"] = float(kw["bandwidth"])
        except ValueError:
            raise ConfigError(f"bandwidth must be 'median' or a number, got {kw['bandwidth']!r}") from None
    if seed is not None:
        kw["seed"] = seed
    try:
        return spectral.LearnerConfig(**kw)
    except InputError as err:
        raise ConfigError(str(err)) from None


def plan_config(values, learner, figure, budget, repeats, seed, threads, t_grid):
    kw = dict(values)
    if "t_grid" in kw:
        kw["t_grid"] = tuple(int(v) for v in _floats(kw["t_grid"]))
    if "estimators" in kw:
        kw["estimators"] = tuple(e.strip() for e in kw["estimators"].split(",") if e.strip())
    kw.setdefault("t_grid", DEFAULT_T_GRID[figure])
    for key, value in (("budget", budget), ("repeats", repeats), ("seed", seed),
                       ("threads", threads), ("t_grid", t_grid)):
        if value is not None:
            kw[key] = value
    names = {f.name for f in fields(analysis.ExperimentPlan)}
    kw = {k: v for k, v in kw.items() if k in names}
    try:
        return analysis.ExperimentPlan(learner=learner, **kw)
    except InputError as err:
        raise ConfigError(str(err)) from None


def _resolve_seed(explicit, configured, label):
    if explicit is not None:
        return explicit
    if configured is not None:
        return configured
    seed = secrets.randbits(63)
    print(f"{label}: using generated seed {seed}", file=sys.stderr)
    return seed


# commands -------------------------------------------------------------------

def cmd_simulate(args):
    cfg_values = load_config(args.config, args.set)
    seed = _resolve_seed(args.seed, cfg_values["sim"].get("seed"), "simulate")
    cfg = sim_config(args.system, cfg_values["sim"], seed)
    potential = simulate.benchmark_potential_1d() if args.system == "1d" else simulate.benchmark_potential_2d()
    obs = None
    threshold = None
    if args.observe == "well":
        if args.system != "1d":
            raise UsageError("the well observation is only defined for the 1d system")
        threshold = simulate.barrier_threshold(potential)
        obs = simulate.well_indicator(threshold)
    meta = {"system": args.system, "seed": str(seed), "beta": repr(cfg.beta), "dt": repr(cfg.dt),
            "n_steps": str(cfg.n_steps), "n_traj": str(cfg.n_traj), "observe": args.observe}
    if threshold is not None:
        meta["threshold"] = io_formats.format_real(threshold)
        meta["alphabet_size"] = "2"
    data = simulate.simulate_trajectories(potential, replace(cfg, metadata=meta), obs)
    path = io_formats.write_dataset(args.out, data)
    print(f"wrote {len(data)} trajectories ({data.n_aborted} aborted) to {path}")
    return EXIT_OK


def cmd_learn(args):
    cfg_values = load_config(args.config, args.set)
    data = io_formats.read_dataset(args.data)
    lvals = dict(cfg_values["learner"])
    if args.mode == "binless":
        seed = _resolve_seed(args.seed, lvals.get("seed"), "learn")
        cfg = learner_config(lvals, seed)
        model = spectral.fit_binless(data, cfg)
    elif args.mode == "coarse":
        if args.bins is None or args.range is None:
            raise UsageError("coarse mode needs --bins and --range")
        lo, hi = _range(args.range, data.dim)
        bins = BinSpec.uniform(lo, hi, [args.bins] * data.dim)
        lvals.setdefault("D1", bins.n_bins ** lvals.get("L", 1))
        lvals.setdefault("D2", lvals["D1"])
        lvals.setdefault("L", 1)
        model = coarse_grain_learn(data, bins, learner_config(lvals))
    else:
        if data.kind != "discrete":
            raise UsageError(f"{args.mode} mode needs discrete data")
        k = data.alphabet_size
        L = lvals.get("L", 3)
        lvals.setdefault("D1", k ** L)
        lvals.setdefault("D2", k ** L)
        lvals.setdefault("m", min(10, k ** L))
        model = spectral.fit_discrete(data, learner_config(lvals), equilibrium=(args.mode == "eq"))
    io_formats.write_model(args.out, model)
    print(f"wrote {args.mode} model to {args.out}")
    return EXIT_OK


def _range(text, dim):
    vals = _floats(text)
    if len(vals) != 2 * dim and len(vals) != 2:
        raise UsageError(f"--range needs lo,hi (or per-axis lo..,hi..), got {text!r}")
    if len(vals) == 2:
        return [vals[0]] * dim, [vals[1]] * dim
    return list(vals[:dim]), list(vals[dim:])


def _csv(rows, header):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _fmt(x):
    return io_formats.format_real(x)


class _QueryParser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"bad query: {message}")


def evaluate_query(model, query):
    """Answer one query string; returns CSV text."""
    tokens = shlex.split(query)
    if not tokens:
        raise UsageError("empty query")
    op, rest = tokens[0], tokens[1:]
    base = model.oom if isinstance(model, CoarseGrainedOom) else model
    if op == "prob":
        if not isinstance(base, Oom):
            raise UsageError("prob queries need a discrete model")
        try:
            seq = [int(t) for t in rest]
        except ValueError:
            raise UsageError(f"symbols must be integers: {rest}") from None
        p = sequence_probability(base, seq)
        return _csv([[" ".join(map(str, seq)), _fmt(p)]], ["sequence", "probability"])
    if op == "expect":
        if not rest:
            raise UsageError("expect needs 'mean', 'marginal' or 'below <x>'")
        what = rest[0]
        if isinstance(base, BinlessOom):
            if what == "mean":
                mean = binless_expectation_r1(base, lambda z: z)
                return _csv([[i, _fmt(v)] for i, v in enumerate(np.atleast_1d(mean))], ["axis", "value"])
            if what == "below" and len(rest) == 2:
                thr = float(rest[1])
                v = binless_expectation_r1(base, lambda z: (z[:, 0] < thr).astype(float))
                return _csv([[rest[1], _fmt(v)]], ["threshold", "probability"])
        elif what == "marginal":
            probs = base.xi @ base.sigma @ base.omega
            return _csv([[k, _fmt(p)] for k, p in enumerate(probs)], ["symbol", "probability"])
        raise UsageError(f"unsupported expectation {' '.join(rest)!r} for this model")
    if op == "hist":
        qp = _QueryParser(prog="hist", add_help=False)
        qp.add_argument("--bins", type=int, required=True)
        qp.add_argument("--range", required=True)
        q = qp.parse_args(rest)
        lo, hi = _floats(q.range)
        bins = BinSpec.uniform(lo, hi, q.bins)
        edges = bins.edges[0]
        if isinstance(model, CoarseGrainedOom):
            src = model.bins.edges[0]
            probs = model.bin_probabilities()
            cdf = np.concatenate([[0.0], np.cumsum(probs)])
            weights = np.diff(np.interp(edges, src, cdf))
        elif isinstance(base, BinlessOom):
            weights = analysis.binless_histogram(base, bins)
        else:
            raise UsageError("hist queries need a binless or coarse-grained model")
        rows = [[_fmt(a), _fmt(b), _fmt(w)] for a, b, w in zip(edges[:-1], edges[1:], weights)]
        return _csv(rows, ["bin_left", "bin_right", "weight"])
    if op == "tica":
        qp = _QueryParser(prog="tica", add_help=False)
        qp.add_argument("--lag", type=int, required=True)
        q = qp.parse_args(rest)
        if not isinstance(base, BinlessOom):
            raise UsageError("tica queries need a binless model")
        res = analysis.tica_from_binless(base, q.lag)
        header = ["lag", "eigenvalue"] + [f"w{i}" for i in range(res.w.shape[0])]
        return _csv([[q.lag, _fmt(res.eigenvalue)] + [_fmt(v) for v in res.w]], header)
    raise UsageError(f"unknown query {op!r}")


def cmd_eval(args):
    model = io_formats.read_model(args.model)
    for query in args.query:
        sys.stdout.write(evaluate_query(model, query))
    return EXIT_OK


def cmd_reproduce(args):
    cfg_values = load_config(args.config, args.set)
    seed = _resolve_seed(args.seed, cfg_values["plan"].get("seed"), "reproduce")
    learner = learner_config(cfg_values["learner"])
    t_grid = tuple(int(v) for v in _floats(args.t_grid)) if args.t_grid else None
    plan = plan_config(cfg_values["plan"], learner, args.figure, args.budget, args.repeats,
                       seed, args.threads, t_grid)
    rows = analysis.run_experiment(plan, args.figure)
    os.makedirs(args.out, exist_ok=True)
    results = [[r.T, r.estimator, r.repeat, _fmt_or_nan(r.value), _fmt_or_nan(r.error)] for r in rows]
    _write(os.path.join(args.out, "results.csv"),
           _csv(results, ["T", "estimator", "repeat", "value", "error"]))
    summary = [[T, est, _fmt_or_nan(m), _fmt_or_nan(s)] for T, est, m, s, _ in analysis.summarize(rows)]
    _write(os.path.join(args.out, "summary.csv"),
           _csv(summary, ["T", "estimator", "mean_error", "std_error"]))
    print(f"figure {args.figure}: seed {seed}, {len(rows)} cells written to {args.out}")
    return EXIT_OK


def _fmt_or_nan(x):
    return "nan" if not np.isfinite(x) else _fmt(x)


def _write(path, text):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def build_parser():
    parser = argparse.ArgumentParser(prog="oomcraft", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="INI file with [sim], [learner], [plan] sections")
        p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                       help="override a config value (repeatable)")

    p = sub.add_parser("simulate", help="simulate a benchmark system")
    p.add_argument("--system", choices=("1d", "2d"), required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--observe", choices=("identity", "well"), default="identity")
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("learn", help="learn a model from a dataset manifest")
    p.add_argument("--mode", choices=("discrete", "eq", "binless", "coarse"), required=True)
    p.add_argument("--data", required=True, help="dataset manifest")
    p.add_argument("--out", required=True, help="model file")
    p.add_argument("--seed", type=int, help="feature-map seed (binless)")
    p.add_argument("--bins", type=int, help="bins per axis (coarse)")
    p.add_argument("--range", help="lo,hi of the bin box (coarse)")
    common(p)
    p.set_defaults(func=cmd_learn)

    p = sub.add_parser("eval", help="evaluate queries against a model file")
    p.add_argument("--model", required=True)
    p.add_argument("--query", action="append", required=True,
                   help="'prob 0 1', 'expect mean|marginal|below X', "
                        "'hist --bins N --range a,b', 'tica --lag N'")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("reproduce", help="rerun a figure's experiment protocol")
    p.add_argument("--figure", choices=sorted(DEFAULT_T_GRID), required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--budget", type=int)
    p.add_argument("--repeats", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--t-grid", help="comma-separated trajectory lengths")
    common(p)
    p.set_defaults(func=cmd_reproduce)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (RankDeficiencyError, RegularizationError, CapacityError, np.linalg.LinAlgError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ParseError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, UsageError, InputError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

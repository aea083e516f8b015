"""Command-line entry point: ``prefgeo {simulate,fit,predict,eval,variogram}``."""
import argparse
import os
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np

from . import __version__
from . import io
from ._rng import derive_rng
from .evaluation import CV_LEVELS, crci, cross_validate, mape, ppd, variogram_envelope
from .inference import ConfigurationError, SamplerError, run_eps, run_nps
from .prediction import ModelMismatchError, PredictionGrid, level_tag, predict
from .region import UNIT_SQUARE, Region
from .simulation import NPS_INTENSITY, PAPER_TRUTH, TrueParams, simulate_nps, simulate_ps

PARAM_NAMES = ("lambda_star", "mu", "tau2", "sigma2", "phi", "beta")


class CliError(Exception):
    pass


# ---------------------------------------------------------------------------
# argument helpers

def parse_params(text):
    """``"150,4,0.1,3,0.15,2"`` (positional) or ``"mu=4,beta=2"`` (named)."""
    values = dict(zip(PARAM_NAMES, PAPER_TRUTH))
    if not text:
        return values, set()
    given = set()
    parts = [p.strip() for p in text.split(",") if p.strip()]
    try:
        if all("=" in p for p in parts):
            for p in parts:
                k, v = (s.strip() for s in p.split("=", 1))
                if k not in PARAM_NAMES:
                    raise CliError(f"unknown parameter {k!r}; expected one of {', '.join(PARAM_NAMES)}")
                values[k] = float(v)
                given.add(k)
        else:
            if len(parts) > len(PARAM_NAMES):
                raise CliError(f"at most {len(PARAM_NAMES)} positional parameters")
            for k, v in zip(PARAM_NAMES, parts):
                values[k] = float(v)
                given.add(k)
    except ValueError as exc:
        raise CliError(f"invalid --params: {exc}") from None
    return values, given


def parse_region(text):
    if not text:
        return None
    try:
        x0, y0, x1, y1 = (float(v) for v in text.split(","))
    except ValueError:
        raise CliError("--region expects 'x0,y0,x1,y1'") from None
    return Region((x0, y0), (x1, y1))


def parse_grid_shape(text):
    try:
        nx, ny = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise CliError(f"grid must look like 30x30, got {text!r}") from None
    if nx < 1 or ny < 1:
        raise CliError("grid dimensions must be positive")
    return nx, ny


def parse_levels(text):
    try:
        levels = tuple(float(v) for v in text.split(","))
    except ValueError:
        raise CliError(f"invalid --levels {text!r}") from None
    if not all(0 < lv < 1 for lv in levels):
        raise CliError("levels must lie in (0, 1)")
    return levels


def _manifest_path(out):
    root, _ = os.path.splitext(out)
    return f"{root}_manifest.txt"


class Manifest:
    """Flat key-value run record, written at start (``status = running``) and at exit."""

    def __init__(self, path, command, seed):
        self.path = path
        self.start = time.time()
        self.data = {"command": command, "status": "running", "seed": str(seed),
                     "version": __version__, "python": platform.python_version(),
                     "numpy": np.__version__}
        self.flush()

    def update(self, mapping, prefix=""):
        for k, v in mapping.items():
            self.data[f"{prefix}{k}"] = v if isinstance(v, str) else io.fmt(v)

    def flush(self):
        io.write_flat(self.path, self.data)

    def finish(self, status, error=None):
        self.data["status"] = status
        self.data["duration_s"] = f"{time.time() - self.start:.3f}"
        if error is not None:
            self.data["error"] = str(error).replace("\n", " ")
        self.flush()


# ---------------------------------------------------------------------------
# subcommands

def cmd_simulate(args):
    values, given = parse_params(args.params)
    region = parse_region(args.region) or UNIT_SQUARE
    rng = derive_rng(args.seed, f"simulate-{args.mode}")
    grid = region.grid(*parse_grid_shape(args.grid)) if args.grid else None
    try:
        if args.mode == "ps":
            params = TrueParams(**values)
            data, truth = simulate_ps(params, region, rng, grid=grid)
        else:
            if "beta" in given:
                raise CliError("--mode nps takes no beta")
            intensity = args.intensity if args.intensity is not None else NPS_INTENSITY / region.area
            params = TrueParams(**{**values, "lambda_star": intensity, "beta": 0.0})
            data, truth = simulate_nps(params, region, rng, intensity=intensity, grid=grid)
    except ValueError as exc:
        raise CliError(f"invalid parameters: {exc}") from None
    io.write_dataset(args.out, data)
    record = {"mode": args.mode, "seed": str(args.seed), "n": str(data.n),
              "region.lower": ",".join(io.fmt(v) for v in region.lower),
              "region.upper": ",".join(io.fmt(v) for v in region.upper)}
    names = PARAM_NAMES if args.mode == "ps" else ("mu", "tau2", "sigma2", "phi")
    record.update({f"true.{k}": io.fmt(getattr(params, k)) for k in names})
    if args.mode == "ps":
        record["k"] = str(len(truth.all_locations))
    else:
        record["intensity"] = io.fmt(params.lambda_star)
    io.write_flat(io.sidecar(args.out, "truth").replace(".csv", ".txt"), record)
    if grid is not None:
        io._write_rows(io.sidecar(args.out, "field"), ["x1", "x2", "s", "y"],
                       np.column_stack([grid, truth.s_grid, truth.y_grid]))
    return 0


def _fit_one(payload):
    model, data, region, priors, config, chain = payload
    if model == "eps":
        return run_eps(data, region, priors, config, chain=chain)
    return run_nps(data, priors, config, region=region, chain=chain)


def cmd_fit(args):
    priors, config, region, mapping = io.read_config(args.config, seed=args.seed)
    if args.model == "nps":
        bad = [k for k in io.EPS_ONLY_KEYS if k in mapping]
        if args.lambda_upper is not None:
            bad.append("--lambda-upper")
        if bad:
            raise CliError(f"--model nps does not accept preferential-only settings: {', '.join(bad)}")
    if args.lambda_upper is not None:
        priors = replace(priors, lambda_upper=args.lambda_upper)
    overrides = {k: getattr(args, k) for k in ("n_iter", "burn_in", "thin") if getattr(args, k) is not None}
    if overrides:
        config = replace(config, **overrides)
    if args.region:
        region = parse_region(args.region)
    data = io.read_dataset(args.data)
    if not np.all(region.contains(data.locations)):
        raise CliError("data locations fall outside the region")

    manifest = Manifest(_manifest_path(args.out), "fit", config.seed)
    manifest.update({"model": args.model, "data": args.data, "chains": str(args.chains), "n": str(data.n)})
    manifest.update(io.config_to_flat(priors, config, region), prefix="config.")
    manifest.flush()
    try:
        payloads = [(args.model, data, region, priors, config, c) for c in range(args.chains)]
        if args.chains == 1:
            results = [_fit_one(payloads[0])]
        else:
            with ProcessPoolExecutor(max_workers=args.chains) as pool:
                results = list(pool.map(_fit_one, payloads))
        if args.chains == 1:
            io.write_samples(args.out, results[0])
            merged = results[0]
        else:
            for c, s in enumerate(results):
                io.write_samples(io.sidecar(args.out, f"chain{c}"), s)
            merged = io.merge_samples(results)
            chain_col = np.concatenate([np.full(len(s), c) for c, s in enumerate(results)])
            io.write_samples(args.out, merged, chain=chain_col)
        for c, s in enumerate(results):
            manifest.update(s.acceptance, prefix=f"chain{c}.acceptance.")
        manifest.update({"draws": str(len(merged))})
        if merged.k is not None and len(merged):
            manifest.update({"k.mean": float(np.mean(merged.k)), "k.min": str(int(merged.k.min())),
                             "k.max": str(int(merged.k.max()))})
    except BaseException as exc:
        manifest.finish("failed", exc)
        raise
    manifest.finish("ok")
    return 0


def _region_for_draws(draws_path, flag):
    region = parse_region(flag)
    if region is not None:
        return region
    mpath = _manifest_path(draws_path)
    if os.path.exists(mpath):
        m = io.read_flat(mpath)
        if "config.region.lower" in m:
            return Region(io._num_list(m["config.region.lower"]), io._num_list(m["config.region.upper"]))
    return UNIT_SQUARE


def cmd_predict(args):
    samples = io.read_samples(args.draws)
    data = io.read_dataset(args.data)
    if samples.s_data.shape[1] != data.n:
        raise CliError(f"draws carry {samples.s_data.shape[1]} latent values but data has {data.n} rows")
    region = _region_for_draws(args.draws, args.region)
    levels = parse_levels(args.levels)
    if os.path.exists(args.grid):
        locs, cov, _ = io.read_points(args.grid)
        grid = PredictionGrid.from_locations(locs, cov, region)
    else:
        if data.n_coef > 1:
            raise CliError("data has covariates; pass --grid as a CSV with x1,x2,d1..dp")
        grid = PredictionGrid.from_locations(region.grid(*parse_grid_shape(args.grid)))
    if grid.design.shape[1] != samples.eta.shape[1]:
        raise CliError("grid covariates do not match the fitted model")
    samples = samples.thinned(args.max_draws)
    response, intensity = predict(samples, data, grid, derive_rng(args.seed, "predict"),
                                  condition_on=args.condition_on)
    io.write_prediction(args.out, response, levels)
    if intensity is not None:
        io.write_prediction(io.sidecar(args.out, "intensity"), intensity, levels)
    if args.mixture:
        io.write_mixture(io.sidecar(args.out, "mixture"), response)
    return 0


def _keys(locs):
    return [f"{io.fmt(a)},{io.fmt(b)}" for a, b in locs]


def cmd_eval(args):
    levels = parse_levels(args.levels)
    if args.crossval:
        if not args.data:
            raise CliError("--crossval needs --data")
        priors, config, region, _ = io.read_config(args.config, seed=args.seed)
        if args.region:
            region = parse_region(args.region)
        data = io.read_dataset(args.data)
        folds = args.folds if args.folds == "loo" else int(args.folds)
        report = cross_validate(data, region, priors, config, folds=folds, model=args.model,
                                levels=levels, iter_scale=args.iter_scale)
        out = {"mode": "crossval", "model": args.model, "n_p": str(report.n_p),
               "mape": io.fmt(report.mape), "ppd": io.fmt(report.ppd)}
        out.update({f"crci.{level_tag(lv)}": io.fmt(v) for lv, v in report.crci.items()})
    else:
        if not (args.pred and args.truth):
            raise CliError("eval needs --pred and --truth, or --crossval")
        ph, pt = io._read_table(args.pred)
        _, _, truth_cols = io.read_points(args.truth)
        if "y" not in truth_cols:
            raise CliError(f"{args.truth}: needs a y column")
        pcol = dict(zip(ph, pt.T))
        pkeys = _keys(np.column_stack([pcol["x1"], pcol["x2"]]))
        tkeys = _keys(np.column_stack([truth_cols["x1"], truth_cols["x2"]]))
        if sorted(pkeys) != sorted(tkeys):
            raise CliError("prediction and truth locations do not match")
        order = {k: i for i, k in enumerate(tkeys)}
        perm = np.array([order[k] for k in pkeys])
        truth = truth_cols["y"][perm]
        out = {"mode": "holdout", "n_p": str(len(truth)), "mape": io.fmt(mape(pcol["mean"], truth))}
        for lv in levels:
            tag = level_tag(lv)
            if f"lo{tag}" not in pcol:
                raise CliError(f"prediction file lacks interval columns for level {lv}")
            out[f"crci.{tag}"] = io.fmt(crci(np.column_stack([pcol[f"lo{tag}"], pcol[f"hi{tag}"]]), truth, lv))
        if args.mixture:
            comps = io.read_mixture(args.mixture)
            if len(comps) != len(truth):
                raise CliError("mixture file does not match prediction points")
            out["ppd"] = io.fmt(sum(ppd(m, v, t) for (m, v), t in zip(comps, truth)))
    io.write_flat(args.out, out)
    return 0


def cmd_variogram(args):
    data = io.read_dataset(args.data)
    env = variogram_envelope(data, args.bins, args.permutations, derive_rng(args.seed, "variogram"),
                             region=parse_region(args.region))
    io._write_rows(args.out, ["h", "gamma", "lo", "hi", "n_pairs", "outside"],
                   np.column_stack([env.centers, env.gamma, env.lower, env.upper, env.n_pairs,
                                    env.outside.astype(int)]))
    if len(env.dropped):
        print(f"dropped empty bins: {', '.join(map(str, env.dropped))}", file=sys.stderr)
    return 0


# ---------------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="prefgeo", description="Exact Bayesian geostatistics under preferential sampling")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="generate a synthetic dataset")
    s.add_argument("--mode", choices=("ps", "nps"), default="ps")
    s.add_argument("--params", default="", help="lambda_star,mu,tau2,sigma2,phi,beta or name=value pairs")
    s.add_argument("--intensity", type=float, help="sampling intensity for --mode nps (default 72/|B|)")
    s.add_argument("--region", help="x0,y0,x1,y1 (default unit square)")
    s.add_argument("--grid", help="also write the field on an NxM grid")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    f = sub.add_parser("fit", help="run the MCMC")
    f.add_argument("--model", choices=("eps", "nps"), default="eps")
    f.add_argument("--data", required=True)
    f.add_argument("--config")
    f.add_argument("--seed", type=int)
    f.add_argument("--out", required=True)
    f.add_argument("--chains", type=int, default=1)
    f.add_argument("--lambda-upper", type=float, help="truncate lambda* (preferential model only)")
    f.add_argument("--n-iter", type=int)
    f.add_argument("--burn-in", type=int)
    f.add_argument("--thin", type=int)
    f.add_argument("--region")
    f.set_defaults(func=cmd_fit)

    r = sub.add_parser("predict", help="posterior predictive summaries on a grid")
    r.add_argument("--draws", required=True)
    r.add_argument("--data", required=True)
    r.add_argument("--grid", default="30x30", help="NxM or a CSV of x1,x2[,d1..dp]")
    r.add_argument("--levels", default="0.95")
    r.add_argument("--condition-on", choices=("all", "data"), default="all")
    r.add_argument("--max-draws", type=int)
    r.add_argument("--mixture", action="store_true", help="also write mixture components for PPD")
    r.add_argument("--region")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_predict)

    e = sub.add_parser("eval", help="prediction scores or cross-validation")
    e.add_argument("--pred")
    e.add_argument("--truth")
    e.add_argument("--mixture")
    e.add_argument("--crossval", action="store_true")
    e.add_argument("--data")
    e.add_argument("--config")
    e.add_argument("--model", choices=("eps", "nps"), default="eps")
    e.add_argument("--folds", default="loo")
    e.add_argument("--iter-scale", type=float, default=1.0)
    e.add_argument("--levels", default=",".join(str(v) for v in CV_LEVELS))
    e.add_argument("--region")
    e.add_argument("--seed", type=int)
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_eval)

    v = sub.add_parser("variogram", help="empirical semivariogram with permutation envelope")
    v.add_argument("--data", required=True)
    v.add_argument("--bins", type=int, default=15)
    v.add_argument("--permutations", type=int, default=99)
    v.add_argument("--region")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--out", required=True)
    v.set_defaults(func=cmd_variogram)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CliError, ConfigurationError, io.FormatError, ModelMismatchError, SamplerError,
            ValueError, OSError) as exc:
        print(f"prefgeo {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

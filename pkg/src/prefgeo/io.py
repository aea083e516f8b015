"""File formats: dataset CSV, flat ``key = value`` config, draws, predictions and manifests.

Floats are written with 17 significant digits so a write/read round trip is exact.
"""
import csv
import os
from dataclasses import fields

import numpy as np

from .dataset import GeoDataset
from .inference import ConfigurationError, McmcConfig, PosteriorSamples, Priors
from .region import UNIT_SQUARE, Region


class FormatError(ValueError):
    pass


def fmt(x):
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return format(float(x), ".17g")


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, str) else fmt(v) for v in row])


def _read_table(path):
    """Header and float rows; errors carry the 1-based line number."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise FormatError(f"{path}: empty file") from None
        rows = []
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise FormatError(f"{path}:{line_no}: expected {len(header)} fields, got {len(row)}")
            try:
                rows.append([float(c) for c in row])
            except ValueError as exc:
                raise FormatError(f"{path}:{line_no}: {exc}") from None
    return header, np.asarray(rows, dtype=float).reshape(-1, len(header))


# ---------------------------------------------------------------------------
# datasets

def write_dataset(path, data):
    cov = data.covariates
    header = ["x1", "x2", "y"] + [f"d{j + 1}" for j in range(cov.shape[1])]
    _write_rows(path, header, np.column_stack([data.locations, data.y, cov]))


def read_dataset(path):
    header, table = _read_table(path)
    if header[:3] != ["x1", "x2", "y"]:
        raise FormatError(f"{path}:1: header must start with x1,x2,y, got {','.join(header)}")
    extra = header[3:]
    if extra != [f"d{j + 1}" for j in range(len(extra))]:
        raise FormatError(f"{path}:1: covariate columns must be named d1..dp")
    return GeoDataset.from_arrays(table[:, :2], table[:, 2], table[:, 3:] if extra else None)


def read_points(path):
    """Locations (and optional covariates d1..dp) from a CSV with x1,x2 leading columns."""
    header, table = _read_table(path)
    if header[:2] != ["x1", "x2"]:
        raise FormatError(f"{path}:1: header must start with x1,x2")
    dcols = [i for i, h in enumerate(header) if h.startswith("d") and h[1:].isdigit()]
    return table[:, :2], (table[:, dcols] if dcols else None), dict(zip(header, table.T))


# ---------------------------------------------------------------------------
# flat key = value text (config, manifests, truth sidecars)

def parse_flat(text, source="<config>"):
    out = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"{source}:{line_no}: expected 'key = value'")
        key, value = (p.strip() for p in line.split("=", 1))
        if not key:
            raise FormatError(f"{source}:{line_no}: empty key")
        out[key] = value
    return out


def dump_flat(mapping):
    return "".join(f"{k} = {v}\n" for k, v in mapping.items())


def read_flat(path):
    with open(path) as fh:
        return parse_flat(fh.read(), str(path))


def write_flat(path, mapping):
    with open(path, "w") as fh:
        fh.write(dump_flat(mapping))


def _num_list(value):
    return tuple(float(v) for v in value.split(","))


_PRIOR_KEYS = {
    "prior.lambda_star.shape": "lambda_shape",
    "prior.lambda_star.rate": "lambda_rate",
    "prior.lambda_star.upper": "lambda_upper",
    "prior.eta.mean": "eta_mean",
    "prior.eta.var": "eta_var",
    "prior.tau2.shape": "tau2_shape",
    "prior.tau2.scale": "tau2_scale",
    "prior.sigma2.shape": "sigma2_shape",
    "prior.sigma2.scale": "sigma2_scale",
    "prior.phi.shape": "phi_shape",
    "prior.phi.rate": "phi_rate",
    "prior.beta.mean": "beta_mean",
    "prior.beta.var": "beta_var",
}

_MCMC_KEYS = {
    "mcmc.n_iter": ("n_iter", int),
    "mcmc.burn_in": ("burn_in", int),
    "mcmc.thin": ("thin", int),
    "mcmc.step.sigma2": ("step_sigma2", float),
    "mcmc.step.phi": ("step_phi", float),
    "mcmc.step.beta": ("step_beta", float),
    "mcmc.fix_phi": ("fix_phi", float),
    "mcmc.fix_beta": ("fix_beta", float),
    "mcmc.adapt": ("adapt", lambda v: v.lower() in ("1", "true", "yes")),
    "mcmc.target_accept": ("target_accept", float),
    "mcmc.store_discarded": ("store_discarded", lambda v: v.lower() in ("1", "true", "yes")),
}

EPS_ONLY_KEYS = ("prior.lambda_star.upper", "mcmc.fix_beta")


def config_from_flat(mapping, seed=None):
    """Build ``(Priors, McmcConfig, Region)`` from a flat mapping; unknown keys are errors."""
    prior_kw, mcmc_kw, region = {}, {}, UNIT_SQUARE
    known = set(_PRIOR_KEYS) | set(_MCMC_KEYS) | {"region.lower", "region.upper", "seed"}
    unknown = sorted(set(mapping) - known)
    if unknown:
        raise ConfigurationError(f"unknown config keys: {', '.join(unknown)}")
    try:
        for key, name in _PRIOR_KEYS.items():
            if key in mapping:
                prior_kw[name] = _num_list(mapping[key]) if name == "eta_mean" else float(mapping[key])
        for key, (name, conv) in _MCMC_KEYS.items():
            if key in mapping:
                mcmc_kw[name] = conv(mapping[key])
        if "region.lower" in mapping or "region.upper" in mapping:
            region = Region(_num_list(mapping.get("region.lower", "0,0")),
                            _num_list(mapping.get("region.upper", "1,1")))
        if seed is not None:
            mcmc_kw["seed"] = int(seed)
        elif "seed" in mapping:
            mcmc_kw["seed"] = int(mapping["seed"])
    except ValueError as exc:
        if isinstance(exc, ConfigurationError):
            raise
        raise ConfigurationError(f"bad config value: {exc}") from None
    return Priors(**prior_kw), McmcConfig(**mcmc_kw), region


def config_to_flat(priors, config, region):
    out = {}
    for key, name in _PRIOR_KEYS.items():
        v = getattr(priors, name)
        if v is None:
            continue
        out[key] = ",".join(fmt(x) for x in v) if name == "eta_mean" else fmt(v)
    for key, (name, _) in _MCMC_KEYS.items():
        v = getattr(config, name)
        if v is None:
            continue
        out[key] = str(v).lower() if isinstance(v, bool) else fmt(v)
    out["seed"] = str(config.seed)
    out["region.lower"] = ",".join(fmt(x) for x in region.lower)
    out["region.upper"] = ",".join(fmt(x) for x in region.upper)
    return out


def read_config(path, seed=None):
    mapping = read_flat(path) if path else {}
    return config_from_flat(mapping, seed) + (mapping,)


# ---------------------------------------------------------------------------
# posterior draws

def sidecar(path, suffix):
    root, ext = os.path.splitext(path)
    return f"{root}_{suffix}{ext or '.csv'}"


def write_samples(path, samples, chain=None):
    """Main parameter file plus ``*_latent.csv`` (S at data) and, when stored,
    ``*_discarded.csv`` (long format: draw, x1, x2, s)."""
    table = samples.parameter_table()
    lead = [] if chain is None else ["chain"]
    header = lead + ["draw", "iteration"] + list(table)
    cols = [np.arange(len(samples)), samples.iteration] + list(table.values())
    if chain is not None:
        cols = [np.asarray(chain)] + cols
    _write_rows(path, header, _int_aware(cols, header))
    n = samples.s_data.shape[1]
    _write_rows(sidecar(path, "latent"), ["draw"] + [f"s{i + 1}" for i in range(n)],
                ([m] + list(row) for m, row in enumerate(samples.s_data)))
    if samples.discarded_locs is not None:
        rows = ([m, x[0], x[1], s] for m, (locs, ss) in enumerate(zip(samples.discarded_locs, samples.discarded_s))
                for x, s in zip(locs, ss))
        _write_rows(sidecar(path, "discarded"), ["draw", "x1", "x2", "s"], rows)


def _int_aware(cols, header):
    ints = {"chain", "draw", "iteration", "k"}
    for vals in zip(*cols):
        yield [int(v) if h in ints else float(v) for h, v in zip(header, vals)]


def read_samples(path):
    header, table = _read_table(path)
    col = dict(zip(header, table.T))
    if "draw" not in col or "tau2" not in col:
        raise FormatError(f"{path}: not a draws file")
    eps = "beta" in col
    eta = np.column_stack([col[h] for h in header if h.startswith("eta")])
    m = len(table)
    lat_header, lat = _read_table(sidecar(path, "latent"))
    if len(lat) != m:
        raise FormatError(f"{sidecar(path, 'latent')}: {len(lat)} rows for {m} draws")
    samples = PosteriorSamples(
        model="eps" if eps else "nps",
        iteration=col["iteration"].astype(int),
        eta=eta,
        tau2=col["tau2"], sigma2=col["sigma2"], phi=col["phi"],
        s_data=lat[:, 1:],
        lambda_star=col.get("lambda_star"),
        beta=col.get("beta"),
        k=col["k"].astype(int) if "k" in col else None,
    )
    disc = sidecar(path, "discarded")
    if eps and os.path.exists(disc):
        _, d = _read_table(disc)
        idx = d[:, 0].astype(int)
        samples.discarded_locs = [d[idx == j, 1:3] for j in range(m)]
        samples.discarded_s = [d[idx == j, 3] for j in range(m)]
    return samples


def merge_samples(parts):
    """Concatenate chains (draws keep their per-chain order)."""
    first = parts[0]

    def cat(name):
        vals = [getattr(p, name) for p in parts]
        if vals[0] is None:
            return None
        if isinstance(vals[0], list):
            return [x for v in vals for x in v]
        return np.concatenate(vals)

    kw = {f.name: cat(f.name) for f in fields(PosteriorSamples) if f.name not in ("model", "acceptance")}
    return PosteriorSamples(model=first.model, acceptance={}, **kw)


# ---------------------------------------------------------------------------
# predictions

def write_prediction(path, field, levels):
    summ = field.summary(levels)
    header = ["x1", "x2"] + list(summ)
    _write_rows(path, header, np.column_stack([field.locations] + list(summ.values())))


def write_mixture(path, field):
    """Long format mixture components behind a response prediction: point, draw, mean, var."""
    mean = field.component_mean
    var = np.broadcast_to(np.asarray(field.component_var)[:, None], mean.shape)
    rows = ([j, m, mean[m, j], var[m, j]] for j in range(mean.shape[1]) for m in range(mean.shape[0]))
    _write_rows(path, ["point", "draw", "mean", "var"], rows)


def read_mixture(path):
    _, t = _read_table(path)
    pts = t[:, 0].astype(int)
    n_pts = pts.max() + 1 if len(pts) else 0
    return [(t[pts == j, 2], t[pts == j, 3]) for j in range(n_pts)]

"""Experiment orchestration: configs, per-point pipelines, records and emission."""
from __future__ import annotations

import csv
import io
import itertools
import json
import logging
import math
import os
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from ._accel import set_num_threads_from_env
from .cache import CacheKey, SpectrumCache
from .chaos import brody_loglike, fit_brody, select_window, spacing_histogram, spacings, unfold
from .errors import ConfigError, DomainError
from .evolve import estimate_bounds
from .model import (LadderParams, build_hamiltonian, build_observable_D, build_sector_basis,
                    default_two_sz)
from .spectral import diagonal_elements, diagonalize, eth_stats_exact
from .typicality import (ModSpec, ModTargets, eth_stats_typicality, lambda_estimate,
                         prepare_mod_state, relaxation_run, tune_mod_parameters)

logger = logging.getLogger(__name__)

MODES = ("eth-exact", "eth-typicality", "mod-relax", "nnsd", "scan")

_ETH_VALUES = ("d_bar", "sigma2", "delta2", "v", "d_eff")
# CSV layout per record kind: leading input columns, then values, then err_*
CSV_INPUTS = {
    "eth-exact": ("n", "kappa", "e_bar", "sigma_e"),
    "eth-typicality": ("n", "kappa", "e_bar", "sigma_e"),
    "lambda": ("n", "kappa", "e_bar", "sigma_e", "d0"),
    "nnsd": ("n", "kappa", "two_sz", "e_bar", "half_width"),
    "gamma": ("kappa", "sizes"),
}
CSV_VALUES = {
    "eth-exact": _ETH_VALUES,
    "eth-typicality": _ETH_VALUES,
    "lambda": ("lambda", "d_init", "e_mean", "e_width", "plateau_std", "converged"),
    "nnsd": ("omega", "ks_stat", "log_likelihood", "n_spacings", "mean_spacing"),
    "gamma": ("gamma", "residual"),
}


@dataclass(frozen=True)
class ExperimentConfig:
    mode: str
    kappas: tuple
    n_rights: tuple
    seeds: tuple = (0, 1, 2, 3, 4)
    delta: float = 0.1
    e_bar: float = 0.0
    sigma_e: float = 0.6
    dt: float = 0.5
    t_max: float = 400.0
    window_fraction: float = 0.25
    avg_window: tuple = (50.0, 400.0)
    nnsd_half_width: float = 2.0
    fit_degree: int = 9
    two_sz: Optional[int] = None
    d0_sign: int = 1
    out: Optional[str] = None
    cache_dir: Optional[str] = None
    threads: Optional[int] = None

    def __post_init__(self):
        for name in ("kappas", "n_rights", "seeds", "avg_window"):
            object.__setattr__(self, name, tuple(getattr(self, name)))

    def validate(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; choose one of {', '.join(MODES)}")
        if not self.kappas:
            raise ConfigError("the kappa grid is empty")
        if not self.n_rights:
            raise ConfigError("the N_R grid is empty")
        if not self.seeds:
            raise ConfigError("the seed list is empty")
        if any(k < 0 or not math.isfinite(k) for k in self.kappas):
            raise ConfigError("kappa values must be finite and non-negative")
        if any(int(n) != n or n < 1 for n in self.n_rights):
            raise ConfigError("N_R values must be positive integers")
        if not self.dt > 0:
            raise ConfigError("dt must be positive")
        if not self.t_max > self.dt:
            raise ConfigError("t_max must exceed dt")
        if not self.sigma_e > 0:
            raise ConfigError("sigma_e must be positive")
        if not 0 < self.window_fraction < 1:
            raise ConfigError("window_fraction must lie in (0, 1)")
        t0, t1 = self.avg_window
        if not 0 <= t0 < t1:
            raise ConfigError("averaging window must satisfy 0 <= start < end")
        if self.d0_sign not in (1, -1):
            raise ConfigError("d0_sign must be +1 or -1")
        return self

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ResultRecord:
    kind: str
    inputs: dict
    values: dict = field(default_factory=dict)
    errors: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)
    status: str = "ok"
    message: str = ""

    def __post_init__(self):
        if self.status == "ok" and set(self.values) != set(self.errors):
            raise ValueError(f"every value needs an error entry: {sorted(self.values)} vs {sorted(self.errors)}")

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def to_json(self) -> str:
        # json writes floats with repr, the shortest round-trip form
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "ResultRecord":
        return cls(**json.loads(line))


@dataclass
class RunResult:
    records: list
    series: dict = field(default_factory=dict)
    histograms: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(r.ok for r in self.records)


@dataclass(frozen=True)
class GammaFit:
    gamma: float
    intercept: float
    residual: float


def fit_gamma(sigma2_by_n: Sequence[float], d_eff_by_n: Sequence[float]) -> GammaFit:
    """Exponent of Sigma ~ d_eff^-gamma by least squares in log-log."""
    s2 = np.asarray(sigma2_by_n, dtype=float)
    de = np.asarray(d_eff_by_n, dtype=float)
    if s2.shape != de.shape or s2.ndim != 1:
        raise DomainError("need matching one-dimensional sequences")
    if s2.size < 3:
        raise DomainError("need at least three sizes")
    if np.any(s2 <= 0) or np.any(de <= 0):
        raise DomainError("Sigma^2 and d_eff must be positive")
    x = np.log(de)
    y = 0.5 * np.log(s2)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    return GammaFit(float(-slope), float(intercept), float(np.sqrt(np.mean(resid ** 2))))


# --------------------------------------------------------------------------
# per-point pipelines
# --------------------------------------------------------------------------

class _Context:
    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        cache_dir = cfg.cache_dir or (Path(cfg.out) / "cache" if cfg.out else None)
        self.cache = SpectrumCache(cache_dir) if cache_dir else None

    def system(self, kappa, n_right, two_sz=None):
        p = LadderParams(int(n_right), self.cfg.delta, float(kappa))
        if two_sz is None:
            two_sz = self.cfg.two_sz if self.cfg.two_sz is not None else default_two_sz(p.n_sites)
        b = build_sector_basis(p.n_sites, two_sz)
        return p, b, build_hamiltonian(p, b), build_observable_D(p, b)

    def spectrum(self, p, b, H, D, need_diag):
        def compute():
            spec = diagonalize(H, want_vectors=need_diag)
            return diagonal_elements(D, spec) if need_diag else spec
        key = CacheKey(p.n_sites, b.two_sz, p.kappa, p.delta)
        if self.cache is None:
            return compute(), key, False
        spec, hit = self.cache.get_or_compute(key, compute, need_diag=need_diag)
        return spec, key, hit

    def provenance(self, **extra):
        out = dict(code_version=__version__, timestamp=time.strftime("%Y-%m-%dT%H:%M:%S%z"))
        out.update(extra)
        return out


def _spread(x):
    x = np.asarray(x, dtype=float)
    return float(np.std(x, ddof=1)) if x.size > 1 else 0.0


def _eth_record(kind, p, b, cfg, stats, prov):
    inputs = dict(n=p.n_sites, n_right=p.n_right, kappa=p.kappa, delta=p.delta,
                  two_sz=b.two_sz, e_bar=cfg.e_bar, sigma_e=cfg.sigma_e)
    values = {k: float(getattr(stats, k)) for k in _ETH_VALUES}
    errors = {k: float(getattr(stats, "err_" + k)) for k in _ETH_VALUES}
    return ResultRecord(kind, inputs, values, errors, prov)


def _eth_exact_point(ctx, kappa, n_right):
    cfg = ctx.cfg
    p, b, H, D = ctx.system(kappa, n_right)
    spec, key, hit = ctx.spectrum(p, b, H, D, need_diag=True)
    stats = eth_stats_exact(spec, cfg.e_bar, cfg.sigma_e)
    rec = _eth_record("eth-exact", p, b, cfg, stats,
                      ctx.provenance(seed=None, cache_key=key.label(), cache_hit=hit))
    return [rec], {}, {}


def _eth_typ_point(ctx, kappa, n_right):
    cfg = ctx.cfg
    p, b, H, D = ctx.system(kappa, n_right)
    t0, t1 = cfg.avg_window
    stats = eth_stats_typicality(H, D, cfg.e_bar, cfg.sigma_e, t_start=t0, t_end=t1, dt=cfg.dt,
                                 seeds=list(cfg.seeds))
    rec = _eth_record("eth-typicality", p, b, cfg, stats,
                      ctx.provenance(seed=list(cfg.seeds), avg_window=[t0, t1]))
    return [rec], {}, {}


def _mod_point(ctx, kappa, n_right):
    cfg = ctx.cfg
    p, b, H, D = ctx.system(kappa, n_right)
    hb, db = estimate_bounds(H), estimate_bounds(D)
    targets = ModTargets(e_bar=cfg.e_bar, sigma_e=cfg.sigma_e)
    spec = tune_mod_parameters(H, D, cfg.d0_sign, targets, n_left=p.n_left, seed=cfg.seeds[0],
                               h_bounds=hb, d_bounds=db)
    rows, series = [], {}
    for seed in cfg.seeds:
        state = prepare_mod_state(H, D, replace(spec, seed=int(seed)), hb, db)
        meta = dict(kappa=p.kappa, n=p.n_sites, two_sz=b.two_sz, seed=int(seed))
        ts = relaxation_run(state, H, D, cfg.t_max, cfg.dt, hb, meta)
        lam = lambda_estimate(ts, cfg.window_fraction)
        rows.append((lam.lam, state.d_init, state.e_mean, state.e_width, lam.plateau_std,
                     float(lam.converged)))
        series[(p.n_sites, p.kappa, int(seed))] = ts
    rows = np.array(rows)
    names = CSV_VALUES["lambda"]
    values = {k: float(v) for k, v in zip(names, rows.mean(axis=0))}
    errors = {k: _spread(rows[:, i]) for i, k in enumerate(names)}
    if len(cfg.seeds) == 1:
        # no resampling possible: fall back on the plateau fluctuation
        errors["lambda"] = float(rows[0, 4] / abs(rows[0, 1]))
    inputs = dict(n=p.n_sites, n_right=p.n_right, kappa=p.kappa, delta=p.delta, two_sz=b.two_sz,
                  e_bar=cfg.e_bar, sigma_e=cfg.sigma_e, d0=spec.d0, h0=spec.h0, beta=spec.beta,
                  sigma=spec.sigma, t_max=cfg.t_max, dt=cfg.dt, window_fraction=cfg.window_fraction)
    rec = ResultRecord("lambda", inputs, values, errors,
                       ctx.provenance(seed=[int(s) for s in cfg.seeds]))
    return [rec], series, {}


def _omega_error(s, omega, h=1e-3):
    curv = (brody_loglike(s, omega + h) - 2 * brody_loglike(s, omega) + brody_loglike(s, omega - h)) / h ** 2
    return float(1 / math.sqrt(-curv)) if curv < 0 else float("inf")


def _nnsd_point(ctx, kappa, n_right):
    cfg = ctx.cfg
    n_sites = 3 * int(n_right) - 1
    two_sz = cfg.two_sz if cfg.two_sz is not None else default_two_sz(n_sites, spacing_stats=True)
    p, b, H, D = ctx.system(kappa, n_right, two_sz)
    spec, key, hit = ctx.spectrum(p, b, H, D, need_diag=False)
    window = select_window(spec.energies, cfg.e_bar, cfg.nnsd_half_width)
    us = unfold(window, cfg.fit_degree, context=spec.energies)
    s = spacings(us)
    fit = fit_brody(s)
    inputs = dict(n=p.n_sites, n_right=p.n_right, kappa=p.kappa, delta=p.delta, two_sz=b.two_sz,
                  e_bar=cfg.e_bar, half_width=cfg.nnsd_half_width, fit_degree=cfg.fit_degree)
    values = dict(omega=fit.omega, ks_stat=fit.ks_stat, log_likelihood=fit.log_likelihood,
                  n_spacings=float(fit.n_spacings), mean_spacing=float(s.mean()))
    errors = {k: 0.0 for k in values}
    errors["omega"] = _omega_error(s, fit.omega)
    rec = ResultRecord("nnsd", inputs, values, errors,
                       ctx.provenance(seed=None, cache_key=key.label(), cache_hit=hit,
                                      at_boundary=fit.at_boundary))
    hist = {(p.n_sites, p.kappa): spacing_histogram(s, fit.omega)}
    return [rec], {}, hist


def _scan_point(ctx, kappa, n_right):
    out_r, out_s, out_h = [], {}, {}
    for fn in (_eth_exact_point, _mod_point):
        r, s, h = _guarded(fn, ctx, kappa, n_right)
        out_r += r
        out_s.update(s)
        out_h.update(h)
    return out_r, out_s, out_h


_PIPELINES = {
    "eth-exact": _eth_exact_point,
    "eth-typicality": _eth_typ_point,
    "mod-relax": _mod_point,
    "nnsd": _nnsd_point,
    "scan": _scan_point,
}
_FAILURE_KIND = {
    _eth_exact_point: "eth-exact", _eth_typ_point: "eth-typicality", _mod_point: "lambda",
    _nnsd_point: "nnsd",
}


def _guarded(fn, ctx, kappa, n_right):
    try:
        return fn(ctx, kappa, n_right)
    except Exception as exc:  # one bad point must not sink the scan
        logger.error("point kappa=%s N_R=%s failed: %s", kappa, n_right, exc)
        rec = ResultRecord(_FAILURE_KIND.get(fn, "point"),
                           dict(n=3 * int(n_right) - 1, n_right=int(n_right), kappa=float(kappa)),
                           provenance=ctx.provenance(), status="error",
                           message=f"{type(exc).__name__}: {exc}")
        return [rec], {}, {}


def _gamma_records(ctx, records):
    out = []
    exact = [r for r in records if r.kind == "eth-exact" and r.ok]
    for kappa in ctx.cfg.kappas:
        rows = sorted((r.inputs["n"], r.values["sigma2"], r.values["d_eff"])
                      for r in exact if r.inputs["kappa"] == float(kappa))
        if len(rows) < 3:
            continue
        sizes = "/".join(str(n) for n, _, _ in rows)
        try:
            g = fit_gamma([x[1] for x in rows], [x[2] for x in rows])
        except DomainError as exc:
            out.append(ResultRecord("gamma", dict(kappa=float(kappa), sizes=sizes),
                                    provenance=ctx.provenance(), status="error", message=str(exc)))
            continue
        out.append(ResultRecord("gamma", dict(kappa=float(kappa), sizes=sizes),
                                dict(gamma=g.gamma, residual=g.residual),
                                dict(gamma=g.residual, residual=0.0), ctx.provenance()))
    return out


def run(config: ExperimentConfig) -> RunResult:
    """Execute every grid point of ``config``; failures become error records."""
    cfg = config.validate()
    ctx = _Context(cfg)
    workers = cfg.threads or set_num_threads_from_env()
    points = list(itertools.product(cfg.kappas, cfg.n_rights))
    fn = _PIPELINES[cfg.mode]
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        results = list(pool.map(lambda pt: _guarded(fn, ctx, *pt), points))
    out = RunResult([])
    for recs, series, hists in results:
        out.records.extend(recs)
        out.series.update(series)
        out.histograms.update(hists)
    if cfg.mode == "scan":
        out.records.extend(_gamma_records(ctx, out.records))
    return out


# --------------------------------------------------------------------------
# emission
# --------------------------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, bool):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".12g")
    return str(x)


def csv_text(records, kind: str) -> str:
    cols_in = CSV_INPUTS[kind]
    cols_val = CSV_VALUES[kind]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(cols_in) + list(cols_val) + ["err_" + c for c in cols_val])
    for r in records:
        if r.kind != kind or not r.ok:
            continue
        w.writerow([_fmt(r.inputs.get(c, "")) for c in cols_in]
                   + [_fmt(r.values[c]) for c in cols_val]
                   + [_fmt(r.errors[c]) for c in cols_val])
    return buf.getvalue()


def _table_text(header, columns) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in zip(*columns):
        w.writerow([_fmt(x) for x in row])
    return buf.getvalue()


def _atomic_write(path: Path, text: str):
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=path.parent)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _slug(x: float) -> str:
    return format(float(x), "g").replace(".", "p").replace("-", "m")


def emit(result, out_dir, formats=("csv", "jsonl", "tables")) -> list:
    """Write CSV tables, a JSONL record stream and per-point data tables.

    Everything is rendered in memory first and each file is moved into place
    atomically, so an I/O failure leaves earlier outputs untouched.
    """
    if isinstance(result, RunResult):
        records, series, hists = result.records, result.series, result.histograms
    else:
        records, series, hists = list(result), {}, {}
    if not records:
        raise ValueError("nothing to emit")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if not os.access(out, os.W_OK):
        raise PermissionError(f"output directory {out} is not writable")
    files = {}
    if "csv" in formats:
        for kind in CSV_VALUES:
            if any(r.kind == kind and r.ok for r in records):
                files[out / f"{kind.replace('-', '_')}.csv"] = csv_text(records, kind)
    if "jsonl" in formats:
        files[out / "records.jsonl"] = "".join(r.to_json() + "\n" for r in records)
    if "tables" in formats:
        for (n, kappa), (centres, dens, curve) in sorted(hists.items()):
            files[out / f"nnsd_hist_n{n}_k{_slug(kappa)}.csv"] = _table_text(
                ["bin_center", "density", "brody"], [centres, dens, curve])
        for (n, kappa, seed), ts in sorted(series.items()):
            files[out / f"relax_n{n}_k{_slug(kappa)}_s{seed}.csv"] = _table_text(
                ["t", "d"], [ts.times, ts.d_values])
    for path, text in files.items():
        _atomic_write(path, text)
    return sorted(files)


def load_records(path) -> list:
    with open(path) as fh:
        return [ResultRecord.from_json(line) for line in fh if line.strip()]

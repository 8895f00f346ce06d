"""Command-line entry point: ``mfcloads <mode> [--config FILE] [--key=value ...]``.

Modes: simulate, pde, spectrum, steady, sweep, fit, validate.  The
configuration is a YAML tree (see :data:`DEFAULTS`); ``--section.key=value``
flags override it, and a bare ``--key=value`` is accepted when ``key`` names
exactly one leaf.  Exit codes: 0 success, 2 configuration error, 3 solver
failure, 4 validation failure.
"""

from __future__ import annotations

import argparse
import copy
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from . import spectral as sp
from .analysis import FitSettings, FitWindowError, Observable, compare_to_spectrum, fit_decay
from .density import DensityGrid
from .ensemble import InitialCondition, SimConfig, simulate
from .io import metadata_lines, read_csv, write_csv, write_json
from .model import FeedbackLaw, GForm, ModelParams
from .pde import CFLError, default_dt, initial_field, integrate
from .series import TimeSeries
from .steady import stationary_profile

log = logging.getLogger("mfcloads")

MODES = ("simulate", "pde", "spectrum", "steady", "sweep", "fit", "validate")
OUT_ENV = "MFCLOADS_OUT"

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_VALIDATION = 0, 2, 3, 4

DEFAULTS = {
    "model": {"tau": 1.0, "r": 100.0, "s": 0.0, "x_down": -1.0, "x_up": 1.0,
              "g_form": GForm.COMPUTATIONAL.value},
    "sim": {"n_devices": 100_000, "t_end": 20.0, "seed": 0, "dt": None, "sample_every": 10,
            "initial_condition": "UNIFORM_BAND_ALL_ON", "histogram_bins": 56, "h1_every": 0},
    "pde": {"cells_per_band": 400, "courant": 1.0, "t_end": 20.0, "sample_dt": 0.01,
            "initial_condition": "IC1", "h1_reference": "discrete"},
    "spectral": {"s": [0.0, 200.0], "k_range": [-3, 2], "window": None},
    "sweep": {"r": [1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0, 200.0, 500.0],
              "s": [0.0, 20.0, 200.0]},
    "fit": {"input": None, "observable": "N_UP_DEV", "t_min": 0.0, "t_max": None,
            "tail_fraction": 0.1, "plateau_factor": 3.0, "compare": True, "rel_tol": 0.15},
    "validate": {"criteria": None},
    "outputs": {"directory": None, "formats": ["csv"], "svg": False},
}


class ConfigError(ValueError):
    pass


# --------------------------------------------------------------------------
# configuration


def load_config(path=None) -> dict:
    """Defaults merged with the YAML file at ``path`` (unknown keys are errors)."""
    cfg = copy.deepcopy(DEFAULTS)
    if path is None:
        return cfg
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise ConfigError(f"{path}: YAML parse error{where}: {getattr(exc, 'problem', exc)}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    _merge(cfg, data, path=str(path))
    return cfg


def _merge(base, data, path, prefix=""):
    for key, val in data.items():
        name = f"{prefix}{key}"
        if key == "mode":
            base[key] = val
            continue
        if key not in base:
            raise ConfigError(f"{path}: unknown field '{name}'")
        if isinstance(base[key], dict):
            if not isinstance(val, dict):
                raise ConfigError(f"{path}: field '{name}' must be a mapping")
            _merge(base[key], val, path, prefix=f"{name}.")
        else:
            base[key] = val


def _leaves(cfg, prefix=""):
    for key, val in cfg.items():
        if isinstance(val, dict):
            yield from _leaves(val, f"{prefix}{key}.")
        else:
            yield f"{prefix}{key}"


# Section that a bare key refers to when it exists in several sections.
MODE_SECTION = {"simulate": "sim", "pde": "pde", "spectrum": "spectral", "sweep": "sweep",
                "fit": "fit"}


def apply_overrides(cfg: dict, overrides, mode=None) -> dict:
    """Apply ``key=value`` strings; values are parsed as YAML scalars or lists.

    A bare key matching several leaves resolves to the section of ``mode``
    first, then to ``model``.
    """
    leaves = list(_leaves(DEFAULTS))
    for item in overrides:
        key, sep, raw = item.partition("=")
        if not sep:
            raise ConfigError(f"override '{item}' must look like --key=value")
        key = key.lstrip("-")
        if key not in leaves:
            match = [leaf for leaf in leaves if leaf.rsplit(".", 1)[-1] == key]
            for section in (MODE_SECTION.get(mode), "model"):
                if len(match) > 1 and f"{section}.{key}" in match:
                    match = [f"{section}.{key}"]
            if len(match) != 1:
                hint = f" (candidates: {', '.join(match)})" if match else ""
                raise ConfigError(f"unknown or ambiguous override '{key}'{hint}")
            key = match[0]
        try:
            val = yaml.safe_load(raw)
        except yaml.YAMLError as exc:
            raise ConfigError(f"override '{item}': cannot parse value") from exc
        node = cfg
        *parents, leaf = key.split(".")
        for part in parents:
            node = node[part]
        node[leaf] = val
    return cfg


def _num(cfg, section, key, kind=float, allow_none=False):
    val = cfg[section][key]
    if val is None and allow_none:
        return None
    try:
        return kind(val)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"field '{section}.{key}': expected {kind.__name__}, got {val!r}") from exc


def model_params(cfg, s=None) -> ModelParams:
    try:
        return ModelParams.from_tau(_num(cfg, "model", "tau"), _num(cfg, "model", "r"),
                                    _num(cfg, "model", "s") if s is None else float(s),
                                    _num(cfg, "model", "x_down"), _num(cfg, "model", "x_up"))
    except ValueError as exc:
        raise ConfigError(f"model: {exc}") from exc


def feedback_law(cfg, params) -> FeedbackLaw:
    try:
        form = GForm(str(cfg["model"]["g_form"]).lower())
    except ValueError as exc:
        raise ConfigError(f"field 'model.g_form': {exc}") from exc
    return FeedbackLaw.from_params(params, form)


def sim_config(cfg) -> SimConfig:
    try:
        return SimConfig(
            n_devices=_num(cfg, "sim", "n_devices", int), t_end=_num(cfg, "sim", "t_end"),
            seed=_num(cfg, "sim", "seed", int), dt=_num(cfg, "sim", "dt", float, True),
            sample_every=_num(cfg, "sim", "sample_every", int),
            initial_condition=InitialCondition(cfg["sim"]["initial_condition"]),
            histogram_bins=_num(cfg, "sim", "histogram_bins", int),
            h1_every=_num(cfg, "sim", "h1_every", int), jobs=cfg.get("_jobs"))
    except ValueError as exc:
        raise ConfigError(f"sim: {exc}") from exc


def output_dir(cfg) -> Path:
    out = cfg["outputs"]["directory"] or os.environ.get(OUT_ENV) or "mfcloads_out"
    path = Path(out)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"output directory {path} is not writable: {exc}") from exc
    if not os.access(path, os.W_OK):
        raise ConfigError(f"output directory {path} is not writable")
    return path


def _meta(cfg, mode, **extra):
    echo = copy.deepcopy({k: v for k, v in cfg.items() if not k.startswith("_")})
    # where the artifact was written does not affect its content
    echo["outputs"].pop("directory", None)
    meta = {"mode": mode, "config": echo, "seed": cfg["sim"]["seed"], "version": __version__}
    meta.update(extra)
    return meta


def _formats(cfg):
    fmts = cfg["outputs"]["formats"]
    fmts = [fmts] if isinstance(fmts, str) else list(fmts)
    bad = set(fmts) - {"csv", "json"}
    if bad:
        raise ConfigError(f"field 'outputs.formats': unsupported {sorted(bad)}")
    return fmts


# --------------------------------------------------------------------------
# modes


def _write_series(ts: TimeSeries, cfg, out, stem, mode):
    ts.meta = _meta(cfg, mode, run=ts.meta)
    written = []
    for fmt in _formats(cfg):
        path = out / f"{stem}.{fmt}"
        written.append(ts.to_csv(path) if fmt == "csv" else ts.to_json(path))
    if cfg["outputs"]["svg"]:
        from .plotting import plot_decay

        written.append(plot_decay(ts, out / f"{stem}.svg", title=f"{mode}, s={cfg['model']['s']}"))
    return written


def run_simulate(cfg, out):
    p = model_params(cfg)
    ts = simulate(p, feedback_law(cfg, p), sim_config(cfg))
    ts.meta.pop("config", None)
    return _write_series(ts, cfg, out, "simulate", "simulate")


def run_pde(cfg, out):
    p = model_params(cfg)
    grid = DensityGrid.aligned(p, _num(cfg, "pde", "cells_per_band", int))
    try:
        f0 = initial_field(str(cfg["pde"]["initial_condition"]), p, grid)
    except KeyError as exc:
        raise ConfigError(f"field 'pde.initial_condition': unknown {exc}") from exc
    dt = default_dt(grid, p, _num(cfg, "pde", "courant"))
    ts = integrate(f0, p, feedback_law(cfg, p), _num(cfg, "pde", "t_end"), dt=dt,
                   sample_dt=_num(cfg, "pde", "sample_dt", float, True),
                   h1_reference=str(cfg["pde"]["h1_reference"]))
    return _write_series(ts, cfg, out, "pde", "pde")


def _spectrum_at(p, s, k_range, window):
    roots = sp.spectrum_minus(p.with_(s=s), s, k_range, window)
    lead = sp.leading_minus(p.with_(s=s), s)
    return roots, lead


def run_spectrum(cfg, out):
    p = model_params(cfg)
    s_list = cfg["spectral"]["s"]
    s_list = [float(s_list)] if np.isscalar(s_list) else [float(s) for s in s_list]
    k_range = tuple(int(k) for k in cfg["spectral"]["k_range"])
    window = cfg["spectral"]["window"]
    window = tuple(float(w) for w in window) if window else None
    plus = [e for e in sp.spectrum_s0(p, k_range) if e.branch is sp.Branch.PLUS and e.index_k != 0]
    rows, leads, all_roots = [], [], list(plus)
    for s in s_list:
        roots, lead = _spectrum_at(p, s, k_range, window)
        if all(abs(e.lam - lead.lam) > 1e-12 for e in roots):
            roots.append(lead)
        all_roots += roots
        for e in roots:
            rows.append(sp.spectrum_rows([e])[0] + [e is lead or e.lam == lead.lam])
        leads.append({"s": s, "lambda0": lead.to_dict()})
    for e in plus:
        rows.append(sp.spectrum_rows([e])[0] + [e.index_k == 1])
    meta = _meta(cfg, "spectrum")
    written = []
    fmts = _formats(cfg)
    if "csv" in fmts:
        written.append(write_csv(out / "spectrum.csv", sp.SPECTRUM_COLUMNS + ["leading"], rows,
                                 metadata_lines(meta)))
    summary = {"meta": meta, "leading_minus": leads, "leading_plus": sp.leading_plus(p).to_dict(),
               "roots": [dict(zip(sp.SPECTRUM_COLUMNS + ["leading"], r)) for r in rows]}
    written.append(write_json(out / "spectrum.json", summary))
    if cfg["outputs"]["svg"]:
        from .plotting import plot_spectrum

        written.append(plot_spectrum(all_roots, out / "spectrum.svg"))
    return written


def run_steady(cfg, out):
    p = model_params(cfg)
    prof = stationary_profile(p)
    data = {"meta": _meta(cfg, "steady"), "n_out_st": prof.n_out_st, "n_up_st": prof.n_up_st,
            "c_band": prof.c_band, "decay_length": prof.decay_length}
    return [write_json(out / "steady.json", data)]


def _regime_point(args):
    params, r, s = args
    return sp.regime_grid(params, [r], [s])[0]


def run_sweep(cfg, out):
    p = model_params(cfg)
    pts = [(p, float(r), float(s)) for r in cfg["sweep"]["r"] for s in cfg["sweep"]["s"]]
    jobs = cfg.get("_jobs") or 1
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_regime_point, pts))
    else:
        rows = [_regime_point(a) for a in pts]
    written = [write_csv(out / "regime_map.csv", sp.REGIME_COLUMNS, rows,
                         metadata_lines(_meta(cfg, "sweep")))]
    if cfg["outputs"]["svg"]:
        from .plotting import plot_regime_map

        written.append(plot_regime_map(rows, out / "regime_map.svg"))
    return written


def read_series(path) -> TimeSeries:
    meta, cols, rows = read_csv(path)
    try:
        data = np.array(rows, dtype=float)
        col = {c: data[:, i] for i, c in enumerate(cols)}
        h1 = col.get("h1")
        if h1 is not None and np.all(np.isnan(h1)):
            h1 = None
        return TimeSeries(col["t"], col["n_up"], col.get("n_out", np.zeros(len(data))), h1=h1,
                          meta=meta)
    except (KeyError, ValueError, IndexError) as exc:
        raise ConfigError(f"{path}: not a time-series CSV ({exc})") from exc


def run_fit(cfg, out):
    src = cfg["fit"]["input"]
    if not src:
        raise ConfigError("field 'fit.input': path to a time-series CSV is required")
    ts = read_series(src)
    try:
        obs = Observable(str(cfg["fit"]["observable"]).upper())
    except ValueError as exc:
        raise ConfigError(f"field 'fit.observable': {exc}") from exc
    settings = FitSettings(tail_fraction=_num(cfg, "fit", "tail_fraction"),
                           plateau_factor=_num(cfg, "fit", "plateau_factor"),
                           t_min=_num(cfg, "fit", "t_min"),
                           t_max=_num(cfg, "fit", "t_max", float, True))
    fit = fit_decay(ts, obs, settings)
    report = {"meta": _meta(cfg, "fit", input=str(src)), "fit": fit.to_dict()}
    if cfg["fit"]["compare"]:
        p = model_params(cfg)
        if obs is Observable.H1:
            pred = sp.leading_plus(p).lam
        else:
            pred = sp.leading_minus(p, p.s).lam
        report["comparison"] = compare_to_spectrum(fit, pred, _num(cfg, "fit", "rel_tol")).to_dict()
    written = [write_json(out / "fit.json", report)]
    if cfg["outputs"]["svg"]:
        from .plotting import plot_decay

        written.append(plot_decay(ts, out / "fit.svg", fit=fit))
    return written


def run_validate(cfg, out):
    from .validation import run_all

    sel = cfg["validate"]["criteria"]
    if sel is not None:
        sel = {int(sel)} if np.isscalar(sel) else {int(c) for c in sel}
    results = run_all(sel)
    passed = sum(r.passed for r in results)
    print(f"{passed}/{len(results)} criteria passed")
    write_json(out / "validation.json", {"meta": _meta(cfg, "validate"),
                                         "results": [r.to_dict() for r in results]})
    return passed == len(results)


RUNNERS = {"simulate": run_simulate, "pde": run_pde, "spectrum": run_spectrum,
           "steady": run_steady, "sweep": run_sweep, "fit": run_fit}


# --------------------------------------------------------------------------
# entry point


def build_parser():
    ap = argparse.ArgumentParser(prog="mfcloads", description=__doc__.split("\n")[0],
                                 allow_abbrev=False)
    ap.add_argument("mode", choices=MODES)
    ap.add_argument("--config", help="YAML configuration file")
    ap.add_argument("--seed", type=int, help="simulation seed (unsigned 64-bit)")
    ap.add_argument("--jobs", type=int, help="worker threads / processes")
    ap.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./mfcloads_out)")
    ap.add_argument("--svg", action="store_true", help="also write SVG figures")
    ap.add_argument("--format", choices=("csv", "json"), action="append",
                    help="artifact format (repeatable)")
    ap.add_argument("-v", "--verbose", action="store_true")
    ap.add_argument("--version", action="version", version=f"mfcloads {__version__}")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args, extra = ap.parse_known_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        bad = [e for e in extra if not (e.startswith("--") and "=" in e)]
        if bad:
            raise ConfigError(f"unrecognized arguments: {' '.join(bad)}")
        cfg = load_config(args.config)
        cfg_mode = cfg.pop("mode", None)
        if cfg_mode is not None and cfg_mode != args.mode:
            raise ConfigError(f"config selects mode '{cfg_mode}' but '{args.mode}' was requested")
        apply_overrides(cfg, extra, args.mode)
        if args.seed is not None:
            cfg["sim"]["seed"] = args.seed
        if args.out:
            cfg["outputs"]["directory"] = args.out
        if args.svg:
            cfg["outputs"]["svg"] = True
        if args.format:
            cfg["outputs"]["formats"] = args.format
        cfg["_jobs"] = args.jobs
        out = output_dir(cfg)
        if args.mode == "validate":
            return EXIT_OK if run_validate(cfg, out) else EXIT_VALIDATION
        for path in RUNNERS[args.mode](cfg, out):
            print(path)
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (sp.ContinuationError, sp.SpuriousRootError, sp.PoleProximityError, CFLError,
            FitWindowError, FloatingPointError) as exc:
        print(f"solver failure ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())

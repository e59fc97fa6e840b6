"""
Command-line entry point.

Every command reads an optional JSON config (validated against the bundled
schema), lets flags override it, and writes machine output to ``--out`` or
standard output.  Human-readable progress goes to standard error.

Exit codes: 0 success, 1 runtime or fit failure, 2 configuration error.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import cascade_mc as mc
from . import correlator as corr
from . import decayfit as df
from . import polarization as pol
from . import rate_model as rm
from .errors import CascadeError, ConfigurationError, ValidationError
from .timetags import TimeTagStream, read_stream, write_stream

EXIT_OK, EXIT_FAILURE, EXIT_CONFIG = 0, 1, 2


class ConfigError(Exception):
    """Raised for anything that maps to exit code 2."""


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def load_schema() -> dict:
    text = resources.files("cascadekit").joinpath("config_schema.json").read_text()
    return json.loads(text)


def load_config(path: str | None) -> dict:
    if path is None:
        cfg = {}
    else:
        try:
            cfg = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
    validate_config(cfg)
    return cfg


def validate_config(cfg: dict) -> None:
    try:
        jsonschema.validate(cfg, load_schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config error at {where}: {exc.message}") from None


# building library objects from config sections ---------------------------

def emitter_from_config(cfg: dict) -> mc.EmitterModel:
    sec = cfg.get("emitter")
    if sec is None:
        raise ConfigError("config needs an 'emitter' section")
    p = sec["pump"]
    if p["mode"] == "cw":
        pump = mc.CW(p["rate"], p.get("rate_xx"))
    else:
        pump = mc.Pulsed(p["period_ps"], p["capture_probability"])
    sb = sec.get("slow_branch")
    branch = None if sb is None else mc.SlowBranch(sb["probability"], sb["slow_rate"])
    return mc.EmitterModel(pump, sec.get("gamma_xx", 1 / 106.0),
                           sec.get("gamma_x", 1 / 142.0), branch)


def detectors_from_config(cfg: dict) -> dict:
    common = cfg.get("detector", {})
    per_line = cfg.get("detectors", {})
    return {line: mc.DetectorModel(**{**common, **per_line.get(line, {})})
            for line in ("xx", "x")}


def _require_seed(cfg: dict) -> int:
    if "seed" not in cfg:
        raise ConfigError("a seed is required (config 'seed' or --seed)")
    return int(cfg["seed"])


def _out_dir(cfg: dict) -> Path | None:
    out = cfg.get("out")
    if out is None:
        return None
    d = Path(out)
    try:
        d.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {d}: {exc}") from None
    return d


def _emit(cfg: dict, name: str, text: str) -> None:
    """Write ``text`` to ``out/name`` or to standard output."""
    d = _out_dir(cfg)
    if d is None:
        sys.stdout.write(text)
    else:
        (d / name).write_text(text)
        _log(f"wrote {d / name}")


def _read_input(path: str) -> TimeTagStream | None:
    data = Path(path).read_bytes()
    if not data.strip():
        return None
    return read_stream(data)


# commands ----------------------------------------------------------------

def cmd_simulate(cfg: dict, args) -> int:
    seed = _require_seed(cfg)
    if "duration_ps" not in cfg:
        raise ConfigError("simulate needs 'duration_ps'")
    try:
        emitter = emitter_from_config(cfg)
        detectors = detectors_from_config(cfg)
    except (ValidationError, ConfigurationError) as exc:
        raise ConfigError(str(exc)) from None
    out = _out_dir(cfg)
    if out is None:
        raise ConfigError("simulate needs an output directory (--out)")
    xx, x = mc.simulate(emitter, detectors, cfg["duration_ps"], seed,
                        cfg.get("resolution_ps", 1))
    (out / "xx.ttag").write_bytes(write_stream(xx))
    (out / "x.ttag").write_bytes(write_stream(x))
    # the output location is left out so reruns elsewhere stay byte-identical
    echo = {k: v for k, v in cfg.items() if k != "out"}
    manifest = {"config": echo, "files": {"xx": "xx.ttag", "x": "x.ttag"},
                "counts": {"xx": len(xx), "x": len(x)}}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    _log(f"simulated {len(xx)} XX and {len(x)} X detections over "
         f"{cfg['duration_ps']:.4g} ps into {out}")
    return EXIT_OK


def _correlation_config(cfg: dict) -> tuple[corr.CorrelationConfig, dict]:
    sec = dict(cfg.get("correlation") or {})
    if "bin_width_ps" not in sec or "tau_max_ps" not in sec:
        raise ConfigError("correlate needs correlation.bin_width_ps and tau_max_ps")
    extra = {k: sec.pop(k) for k in ("mode", "auto_method", "partitions") if k in sec}
    try:
        return corr.CorrelationConfig(**sec), extra
    except ConfigurationError as exc:
        raise ConfigError(str(exc)) from None


def cmd_correlate(cfg: dict, args) -> int:
    ccfg, extra = _correlation_config(cfg)
    mode = args.mode or extra.get("mode", "cross")
    method = extra.get("auto_method", "direct")
    streams = [_read_input(p) for p in args.inputs]
    if mode == "cross" and len(streams) not in (1, 2):
        raise ConfigError("cross mode takes two files, or one file with channels 0 and 1")
    if mode == "auto" and len(streams) != 1:
        raise ConfigError("auto mode takes exactly one file")
    if any(s is None for s in streams):
        _log("warning: empty input file; writing an all-zero histogram")
        hist = corr.CorrelationHistogram(ccfg, np.zeros(ccfg.n_bins, dtype=np.int64),
                                         0, 0, 0.0)
        summary = None
    else:
        if mode == "cross":
            a, b = (streams if len(streams) == 2
                    else (streams[0].select(0), streams[0].select(1)))
            hist = corr.cross_correlate(a, b, ccfg, partitions=extra.get("partitions", 1))
        else:
            s = streams[0] if args.channel is None else streams[0].select(args.channel)
            if method == "hbt":
                hist = corr.auto_correlate_hbt(s, ccfg, mc.seed_sequence(_require_seed(cfg), 10))
            else:
                hist = corr.auto_correlate(s, ccfg)
        summary = None
        if ccfg.mode == "pulsed":
            pg = corr.normalize_pulsed(hist)
            summary = {"g2_zero": pg.g2_zero, "g2_zero_err": pg.g2_zero_err,
                       "areas": {str(k): v for k, v in pg.areas.items()}}
            _log(f"pulsed g2(0) = {pg.g2_zero:.4f} +- {pg.g2_zero_err:.4f}")
        elif hist.duration_ps > 0:
            hist = corr.normalize_cw(hist)
    hist.channels = {"mode": mode}
    fmt = cfg.get("format", "csv")
    if fmt == "json":
        doc = json.loads(hist.to_json())
        if summary is not None:
            doc["pulsed"] = summary
        _emit(cfg, "histogram.json", json.dumps(doc, indent=2) + "\n")
    else:
        _emit(cfg, "histogram.csv", hist.to_csv())
        if summary is not None and cfg.get("out") is not None:
            _emit(cfg, "pulsed_g2.json", json.dumps(summary, indent=2) + "\n")
    _log(f"{mode} histogram: {int(hist.counts.sum())} coincidences in {ccfg.n_bins} bins")
    return EXIT_OK


def _read_table(path: str) -> tuple[list[str], np.ndarray]:
    text = Path(path).read_text()
    lines = [ln for ln in text.strip().splitlines() if ln.strip()]
    if not lines:
        raise CascadeError(f"{path} is empty")
    header = [h.strip() for h in lines[0].split(",")]
    try:
        data = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]],
                        dtype=float).reshape(-1, len(header))
    except ValueError as exc:
        raise CascadeError(f"bad row in {path}: {exc}") from None
    return header, data


def _column(header, data, *names):
    for n in names:
        if n in header:
            return data[:, header.index(n)]
    raise CascadeError(f"input lacks a column named {' or '.join(names)}")


def _fit_decay(cfg: dict, path: str):
    sec = cfg.get("decay", {})
    data = Path(path).read_bytes()
    if data.lstrip().startswith(b"t_ps,"):
        header, arr = _read_table(path)
        t, y = _column(header, arr, "t_ps"), _column(header, arr, "counts")
    else:
        if "period_ps" not in sec:
            raise ConfigError("a time-tag input needs decay.period_ps")
        stream = read_stream(data)
        t, y = df.transient_histogram(stream, sec["period_ps"], sec.get("bin_width_ps", 16.0),
                                      sec.get("offset_ps", -400.0))
    bw = float(t[1] - t[0]) if t.size > 1 else 1.0
    taus = sec.get("taus_ps", [120.0])
    total = float(np.sum(y)) * bw
    comps = tuple((total / len(taus), tau) for tau in taus)
    t0 = sec.get("t0_ps", float(t[np.argmax(y)]) - 50.0)
    init = df.DecayModel(comps, t0, sec.get("irf_sigma_ps", 50.0), sec.get("baseline", 1.0))
    return df.fit_decay(t, y, init, set(sec.get("fixed", ())))


def _fit_g2(cfg: dict, path: str):
    sec = cfg.get("g2_fit", {})
    text = Path(path).read_text()
    if text.lstrip().startswith("{"):
        h = corr.CorrelationHistogram.from_json(text)
        if h.g2 is None:
            h = corr.normalize_cw(h)
        edges, g2, err = h.config.edges, h.g2, h.g2_err
    else:
        header, arr = _read_table(path)
        tau = _column(header, arr, "tau_ps")
        g2, err = _column(header, arr, "g2"), _column(header, arr, "g2_err")
        if tau.size < 2:
            raise CascadeError("need at least two bins")
        bw = tau[1] - tau[0]
        edges = np.append(tau - bw / 2, tau[-1] + bw / 2)
    init = df.CrossG2Model(
        gamma_x=sec.get("gamma_x", 1 / 100.0), gamma_xx=sec.get("gamma_xx", 1 / 106.0),
        pump=sec.get("pump", 1 / 300.0), irf_sigma_ps=sec.get("irf_sigma_ps", 61.6),
        tau_offset_ps=sec.get("tau_offset_ps", 0.0))
    fixed = set(sec.get("fixed", ("irf_sigma_ps", "tau_offset_ps")))
    return df.fit_g2_cross(edges, g2, err, init, fixed=fixed)


def cmd_fit(cfg: dict, args) -> int:
    kind = args.kind
    if kind == "decay":
        res = _fit_decay(cfg, args.input)
        report = json.loads(df.fit_report_json(res, kind=kind))
    elif kind == "g2":
        res = _fit_g2(cfg, args.input)
        report = json.loads(df.fit_report_json(res, kind=kind))
    elif kind == "power":
        header, arr = _read_table(args.input)
        k, se = df.fit_power_law(_column(header, arr, "pump", "power"),
                                 _column(header, arr, "value", "intensity"),
                                 cfg.get("power", {}).get("cutoff_index"))
        report = {"kind": kind, "parameters": {"k": k}, "uncertainties": {"k": se},
                  "converged": True}
    else:
        sec = cfg.get("ellipticity", {})
        header, arr = _read_table(args.input)
        theta = _column(header, arr, "qwp_angle_rad", "angle_rad")
        y = _column(header, arr, "intensity", "value")
        f = pol.fit_ellipticity(theta, y, sec.get("hwp_angle", 0.0),
                                sec.get("polarizer_angle", 0.0),
                                tuple(sec.get("order", ("qwp", "hwp", "polarizer"))))
        report = {"kind": kind,
                  "parameters": {"chi": f.chi, "psi": f.psi, "chi_over_pi": f.chi / math.pi,
                                 "amplitude": f.amplitude, "offset": f.offset},
                  "uncertainties": {"chi": f.chi_err, "psi": f.psi_err},
                  "converged": bool(f.fit.converged),
                  "reduced_chi2": f.fit.reduced_chi2}
    _emit(cfg, f"fit_{kind}.json", json.dumps(report, indent=2, default=float) + "\n")
    params = report["parameters"]
    _log(f"{kind} fit: " + ", ".join(f"{k}={v:.6g}" for k, v in params.items()
                                    if isinstance(v, float)))
    if not report.get("converged", False):
        _log("fit did not converge")
        return EXIT_FAILURE
    return EXIT_OK


def _predict_curve(model: rm.RateModel, kind: str, taus: np.ndarray, sigma: float):
    if kind == "cross":
        g = rm.predict_cross_g2(model, taus)
        on_zero = taus == 0.0
        if sigma > 0:
            g[on_zero] = 0.5 * g[on_zero]
    else:
        g = rm.predict_auto_g2(model, kind, taus)
    if sigma > 0:
        g = rm.convolve_irf(taus, g - 1.0, sigma) + 1.0
    return g


def cmd_predict(cfg: dict, args) -> int:
    sec = cfg.get("predict", {})
    try:
        model = rm.RateModel(sec.get("gamma_x", 1 / 142.0), sec.get("gamma_xx", 1 / 106.0),
                             sec.get("pump", 1 / 500.0), sec.get("pump_xx"))
    except (ValidationError, ConfigurationError) as exc:
        raise ConfigError(str(exc)) from None
    if args.curve == "power":
        pumps = np.geomspace(sec.get("pump_min", 1e-7), sec.get("pump_max", 1e-1),
                             sec.get("n_points", 61))
        ix, ixx = rm.predict_intensity_vs_power(model, pumps)
        x, y, xname = pumps, (ixx if args.line == "xx" else ix), "pump"
    else:
        step = sec.get("step_ps", 1.0)
        taus = np.arange(sec.get("tau_min_ps", -1000.0),
                         sec.get("tau_max_ps", 1000.0) + step / 2, step)
        kind = "cross" if args.curve == "cross" else args.line
        x, y, xname = taus, _predict_curve(model, kind, taus, sec.get("irf_sigma_ps", 0.0)), "tau_ps"
    lines = [f"{xname},value"] + [f"{a:.10g},{b:.10g}" for a, b in zip(x, y)]
    _emit(cfg, f"predict_{args.curve}.csv", "\n".join(lines) + "\n")
    return EXIT_OK


def cmd_reproduce(cfg: dict, args) -> int:
    from .pipelines import reproduce

    sec = cfg.get("reproduce", {})
    quick = args.quick or sec.get("quick", False)
    strict = args.strict or sec.get("strict", False)
    seed = int(cfg.get("seed", 1))
    rows = reproduce(seed, quick=quick)
    doc = {"seed": seed, "quick": quick, "rows": [r.as_dict() for r in rows]}
    _emit(cfg, "summary.json", json.dumps(doc, indent=2, default=float) + "\n")
    width = max(len(r.name) for r in rows)
    _log(f"{'quantity':<{width}}  {'value':>12}  {'target':<24} result")
    for r in rows:
        _log(f"{r.name:<{width}}  {r.value:>12.5g}  {r.target:<24} "
             f"{'PASS' if r.passed else 'FAIL'}  {r.note}")
    failed = [r.name for r in rows if not r.passed]
    _log(f"{len(rows) - len(failed)}/{len(rows)} rows within tolerance")
    return EXIT_FAILURE if strict and failed else EXIT_OK


# argument parsing --------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON run configuration")
    common.add_argument("--seed", type=int, help="overrides the config seed")
    common.add_argument("--out", metavar="DIR", help="output directory (default: stdout)")
    common.add_argument("--format", choices=("csv", "json"), help="machine output format")

    p = argparse.ArgumentParser(prog="cascadekit", description=__doc__.strip().splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="simulate detected XX and X streams")
    s.add_argument("--duration-ps", type=float, help="overrides duration_ps")
    s.set_defaults(func=cmd_simulate)

    c = sub.add_parser("correlate", parents=[common], help="coincidence histogram")
    c.add_argument("inputs", nargs="+", help="TTAG or CSV time-tag files")
    c.add_argument("--mode", choices=("auto", "cross"))
    c.add_argument("--channel", type=int, help="auto mode: use only this channel")
    c.set_defaults(func=cmd_correlate)

    f = sub.add_parser("fit", parents=[common], help="fit a decay, g2, power law or QWP sweep")
    f.add_argument("kind", choices=("decay", "g2", "power", "ellipticity"))
    f.add_argument("input")
    f.set_defaults(func=cmd_fit)

    pr = sub.add_parser("predict", parents=[common], help="rate-model curves as CSV")
    pr.add_argument("curve", choices=("cross", "auto", "power"))
    pr.add_argument("--line", choices=("x", "xx"), default="x")
    pr.set_defaults(func=cmd_predict)

    r = sub.add_parser("reproduce", parents=[common], help="headline numbers with ground truths")
    r.add_argument("--quick", action="store_true", help="reduced statistics (smoke test)")
    r.add_argument("--strict", action="store_true", help="exit 1 if any row fails")
    r.set_defaults(func=cmd_reproduce)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        for key in ("seed", "out", "format"):
            if getattr(args, key) is not None:
                cfg[key] = getattr(args, key)
        if getattr(args, "duration_ps", None) is not None:
            cfg["duration_ps"] = args.duration_ps
        validate_config(cfg)
        return args.func(cfg, args)
    except ConfigError as exc:
        _log(f"error: {exc}")
        return EXIT_CONFIG
    except (CascadeError, OSError, ValueError) as exc:
        _log(f"error: {exc}")
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())

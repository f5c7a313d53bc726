"""Command-line entry point: ``conveyor <subcommand> [options]``.

Exit codes: 0 success, 1 invalid configuration or usage, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys

import numpy as np

from . import __version__
from .config import RunConfig
from .core import energy, ground_state, poschl_teller_energy, well_potential
from .disturbance import (DisturbanceModel, TauSweep, fit_asymptotic_escape, fit_quadratic_disturbance,
                          model_from_sweeps, sweep_tau)
from .errors import ConfigurationError, NumericalError, UsageError
from .harmonic import harmonic_check
from .predictor import Prediction, compare, fingerprint, predict
from .propagator import SurvivalSeries, propagate
from .tunneling import GammaTable, gamma_scan

log = logging.getLogger("conveyor")

SERIES_COLUMNS = ("t", "p", "norm")
SWEEP_COLUMNS = ("tau", "p_escape")


class _Parser(argparse.ArgumentParser):
    """argparse with exit code 1 on usage errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# file formats


def _fmt(v) -> str:
    return f"{float(v):.12g}"


def write_csv(path, columns, rows, fp: str) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# fingerprint={fp}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def read_csv(path) -> tuple[list[str], np.ndarray, dict]:
    """Parse a CSV written by this tool; '#' lines carry metadata."""
    meta, header, rows = {}, None, []
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}") from exc
    with fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition("=")
                meta[key.strip()] = value.strip()
                continue
            cells = next(csv.reader([line]))
            if header is None:
                header = cells
                continue
            if len(cells) != len(header):
                raise UsageError(f"{path}, line {lineno}: expected {len(header)} fields, got {len(cells)}")
            try:
                rows.append([float(c) for c in cells])
            except ValueError as exc:
                raise UsageError(f"{path}, line {lineno}: {exc}") from exc
    if header is None or not rows:
        raise UsageError(f"{path}: no data rows")
    return header, np.array(rows), meta


def write_json(path, obj) -> None:
    with open(path, "w", newline="\n") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load_json(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read {path}: {exc}") from exc


def read_series(path) -> SurvivalSeries:
    header, data, meta = read_csv(path)
    if list(header[:2]) != ["t", "p"] and list(header[:2]) != ["t", "p_fit"]:
        raise UsageError(f"{path}: expected a survival series with columns t, p")
    return SurvivalSeries(data[:, 0], data[:, 1], data[:, 2] if data.shape[1] > 2 else np.ones(len(data)), {}, meta)


def read_prediction(path) -> Prediction:
    header, data, meta = read_csv(path)
    if tuple(header) != ("t", "p_fit", "d_ini", "d_inst", "gamma_integral"):
        raise UsageError(f"{path}: not a prediction CSV")
    return Prediction(*(data[:, k] for k in range(5)), inputs=meta)


def read_sweep(path) -> TauSweep:
    if str(path).endswith(".json"):
        return TauSweep.from_dict(_load_json(path))
    header, data, meta = read_csv(path)
    if tuple(header) != SWEEP_COLUMNS:
        raise UsageError(f"{path}: not a sweep CSV")
    return TauSweep(meta.get("family", ""), float(meta.get("L", "nan")), data[:, 0], data[:, 1])


# ---------------------------------------------------------------------------
# argument handling


def _protocol_overrides(args, cfg: RunConfig) -> None:
    variant = getattr(args, "protocol", None) or (cfg.protocol or {}).get("variant")
    given = {k: getattr(args, k) for k in ("L", "tau", "a", "c", "phi") if getattr(args, k, None) is not None}
    if getattr(args, "coeffs", None):
        given["coeffs"] = [float(c) for c in args.coeffs.split(",")]
    if variant is None and not given:
        return
    if variant is None:
        raise ConfigurationError("protocol parameters given without --protocol")
    base = dict(cfg.protocol or {}) if (cfg.protocol or {}).get("variant") == variant else {}
    base.update(given)
    base["variant"] = variant
    cfg.protocol = base


def build_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    if args.dt is not None:
        cfg.dt = args.dt
    if args.stride is not None:
        cfg.sample_stride = args.stride
    if args.n_points is not None:
        cfg.grid = dict(cfg.grid, n_points=args.n_points)
    if args.out is not None:
        cfg.out = args.out
    if args.command == "sweep-tau":
        # tau is the swept variable; L belongs to the sweep
        if args.L is not None:
            cfg.options["L"] = args.L
    else:
        _protocol_overrides(args, cfg)
    for key in ("a_min", "a_max", "steps", "T", "family", "taus", "t_min", "samples"):
        value = getattr(args, key, None)
        if value is not None:
            cfg.options[key] = value
    cfg.validate()
    cfg.workers = cfg.resolved_workers(args.workers)
    return cfg


def _require_out(cfg: RunConfig) -> str:
    if not cfg.out:
        raise ConfigurationError("no output path (--out)")
    return cfg.out


# ---------------------------------------------------------------------------
# subcommands


def cmd_ground_state(args, cfg: RunConfig) -> dict:
    s = cfg.settings()
    psi, e0 = ground_state(s.grid, s.params)
    result = {"energy": e0, "closed_form": poschl_teller_energy(s.params),
              "energy_check": energy(psi, well_potential(s.grid, s.params), s.params),
              "norm": psi.norm2(), "dx": s.grid.dx, "fingerprint": cfg.fingerprint()}
    if cfg.out:
        write_json(cfg.out, result)
    return result


def cmd_propagate(args, cfg: RunConfig) -> dict:
    out = _require_out(cfg)
    series = propagate(cfg.build_protocol(), cfg.settings())
    write_csv(out, SERIES_COLUMNS, zip(series.times, series.p, series.norm), cfg.fingerprint())
    for w in series.warnings:
        log.warning(w)
    return {"p_final": series.final(), "warnings": series.warnings}


def _scan_values(cfg: RunConfig) -> list[float]:
    opt = cfg.options
    if "a_values" in opt:
        return [float(a) for a in opt["a_values"]]
    try:
        a_min, a_max, steps = float(opt["a_min"]), float(opt["a_max"]), int(opt["steps"])
    except KeyError as exc:
        raise ConfigurationError(f"gamma-scan needs --a-min, --a-max and --steps ({exc} missing)") from exc
    if steps < 1 or a_min <= 0 or a_max < a_min:
        raise ConfigurationError("need 0 < a_min <= a_max and steps >= 1")
    return [float(a) for a in np.round(np.linspace(a_min, a_max, steps), 12)]


def cmd_gamma_scan(args, cfg: RunConfig) -> dict:
    out = _require_out(cfg)
    table = gamma_scan(_scan_values(cfg), T=float(cfg.options.get("T", 500.0)), settings=cfg.settings(),
                       workers=cfg.workers)
    data = table.to_dict()
    data["fingerprint"] = cfg.fingerprint()
    write_json(out, data)
    return {"entries": len(table.entries), "monotone": table.is_monotone(resolved_only=True)}


def cmd_sweep_tau(args, cfg: RunConfig) -> dict:
    out = _require_out(cfg)
    opt = cfg.options
    family = opt.get("family") or getattr(args, "protocol", None)
    L = opt.get("L")
    if family is None or L is None or "taus" not in opt:
        raise ConfigurationError("sweep-tau needs --family, --L and --taus")
    taus = [float(t) for t in (opt["taus"].split(",") if isinstance(opt["taus"], str) else opt["taus"])]
    sweep = sweep_tau(family, float(L), taus, cfg.settings(), cfg.workers)
    fp = cfg.fingerprint()
    if out.endswith(".json"):
        data = sweep.to_dict()
        data["fingerprint"] = fp
        write_json(out, data)
    else:
        with open(out, "w", newline="") as fh:
            fh.write(f"# fingerprint={fp}\n# family={family}\n# L={_fmt(L)}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(SWEEP_COLUMNS)
            for row in zip(sweep.taus, sweep.p_escape):
                w.writerow([_fmt(v) for v in row])
    return {"p_escape": sweep.p_escape.tolist()}


def cmd_fit_disturbance(args, cfg: RunConfig) -> dict:
    out = _require_out(cfg)
    table = GammaTable.load(args.gamma_table) if args.gamma_table else None
    quadratic = fit_quadratic_disturbance(table) if table is not None else None
    fits = {}
    for family, path in (("cos", args.cos_sweep), ("sin", args.sin_sweep)):
        if path:
            sweep = read_sweep(path)
            if sweep.family and sweep.family != family:
                raise UsageError(f"{path} holds a {sweep.family} sweep, expected {family}")
            n = 0 if family == "cos" else 1
            fits[family] = (fit_asymptotic_escape(sweep, n, table), sweep.L)
    if quadratic is None and not fits:
        raise ConfigurationError("fit-disturbance needs --gamma-table and/or sweep files")
    cos_fit, L_cos = fits.get("cos", (None, 0.0))
    sin_fit, L_sin = fits.get("sin", (None, 0.0))
    model = model_from_sweeps(cos_fit, sin_fit, L_cos, L_sin, quadratic)
    data = model.to_dict()
    data["fingerprint"] = fingerprint({"config": cfg.fingerprint(), "inputs": [
        fingerprint(_load_json(args.gamma_table)) if args.gamma_table else None,
        args.cos_sweep and fingerprint(read_sweep(args.cos_sweep).to_dict()),
        args.sin_sweep and fingerprint(read_sweep(args.sin_sweep).to_dict())]})
    write_json(out, data)
    return {"B": data["B"], "quadratic_coefficient": quadratic}


def _sample_times(cfg: RunConfig, tau: float) -> np.ndarray:
    if "samples" in cfg.options:
        return np.linspace(0.0, tau, int(cfg.options["samples"]))
    n_steps = max(1, int(round(tau / cfg.dt)))
    stride = cfg.sample_stride
    idx = np.r_[np.arange(0, n_steps, stride), n_steps]
    return idx * (tau / n_steps)


def cmd_predict(args, cfg: RunConfig) -> dict:
    out = _require_out(cfg)
    if not args.gamma_table or not args.b_model:
        raise ConfigurationError("predict needs --gamma-table and --b-model")
    protocol = cfg.build_protocol()
    table, model = GammaTable.load(args.gamma_table), DisturbanceModel.load(args.b_model)
    pred = predict(protocol, _sample_times(cfg, protocol.tau), table, model)
    fp = fingerprint({"config": cfg.fingerprint(), **pred.inputs})
    write_csv(out, ("t", "p_fit", "d_ini", "d_inst", "gamma_integral"),
              zip(pred.times, pred.p_fit, pred.d_ini, pred.d_inst, pred.gamma_integral), fp)
    return {"p_fit_final": float(pred.p_fit[-1])}


def cmd_compare(args, cfg: RunConfig) -> dict:
    if not args.sim or not args.pred:
        raise ConfigurationError("compare needs --sim and --pred")
    sim, pred = read_series(args.sim), read_prediction(args.pred)
    report = compare(sim, pred, t_min=float(cfg.options.get("t_min", 0.0))).to_dict()
    report["fingerprint"] = fingerprint({"sim": sim.metadata.get("fingerprint"),
                                         "pred": pred.inputs.get("fingerprint"), "t_min": report["t_min"]})
    if cfg.out:
        write_json(cfg.out, report)
    return report


def cmd_harmonic_check(args, cfg: RunConfig) -> dict:
    results = harmonic_check(cfg.settings().grid)
    report = {"suites": {r.name: {"passed": bool(r.passed), "detail": _jsonable(r.detail)} for r in results},
              "passed": all(r.passed for r in results), "fingerprint": cfg.fingerprint()}
    if cfg.out:
        write_json(cfg.out, report)
    if not report["passed"]:
        raise NumericalError("harmonic oracle suite failed: " + ", ".join(r.name for r in results if not r.passed))
    return report


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


def cmd_plot(args, cfg: RunConfig) -> dict:
    out = _require_out(cfg)
    if not args.inputs:
        raise ConfigurationError("plot needs at least one CSV input")
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "conveyor"
    fig, ax = plt.subplots(figsize=(6, 4))
    prints = []
    for k, path in enumerate(args.inputs):
        header, data, meta = read_csv(path)
        xcol = header.index(args.x) if args.x else 0
        ycol = header.index(args.y) if args.y and args.y in header else 1
        x, y = data[:, xcol], data[:, ycol]
        if args.logy:
            y = np.where(y > 0, y, np.nan)
        style = "o" if k % 2 else "-"
        ax.plot(x, y, style, markersize=3, fillstyle="none", label=f"{path} ({header[ycol]})")
        ax.set_xlabel(header[xcol])
        prints.append(meta.get("fingerprint", ""))
    if args.logx:
        ax.set_xscale("log")
    if args.logy:
        ax.set_yscale("log")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fp = fingerprint(prints)
    fig.savefig(out, format="svg", metadata={"Date": None, "Description": f"fingerprint={fp}"})
    plt.close(fig)
    return {"out": out}


COMMANDS = {
    "ground-state": cmd_ground_state,
    "propagate": cmd_propagate,
    "gamma-scan": cmd_gamma_scan,
    "fit-disturbance": cmd_fit_disturbance,
    "sweep-tau": cmd_sweep_tau,
    "predict": cmd_predict,
    "compare": cmd_compare,
    "harmonic-check": cmd_harmonic_check,
    "plot": cmd_plot,
}


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--out", help="output path")
    common.add_argument("--workers", type=int, help="worker processes (default $CONVEYOR_WORKERS, else 1)")
    common.add_argument("--dt", type=float)
    common.add_argument("--stride", type=int, help="record every N steps")
    common.add_argument("--n-points", type=int)
    common.add_argument("-v", "--verbose", action="store_true")

    proto = _Parser(add_help=False)
    proto.add_argument("--protocol", choices=["cos", "sin", "poly5", "const", "shifted_sin", "taylor"])
    proto.add_argument("--L", type=float)
    proto.add_argument("--tau", type=float)
    proto.add_argument("--a", type=float, help="constant acceleration")
    proto.add_argument("--c", type=float, help="shifted-sin amplitude")
    proto.add_argument("--phi", type=float, help="shifted-sin phase")
    proto.add_argument("--coeffs", help="taylor coefficients, comma separated")

    parser = _Parser(prog="conveyor", description="Survival of a particle carried by an accelerated well.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sub.add_parser("ground-state", parents=[common], help="relax the well ground state")
    sub.add_parser("propagate", parents=[common, proto], help="survival probability along a protocol")
    p = sub.add_parser("gamma-scan", parents=[common], help="tabulate Gamma(a) from constant-a runs")
    p.add_argument("--a-min", type=float)
    p.add_argument("--a-max", type=float)
    p.add_argument("--steps", type=int)
    p.add_argument("--T", type=float, help="run length (default 500)")
    p = sub.add_parser("fit-disturbance", parents=[common], help="fit the B_n model")
    p.add_argument("--gamma-table")
    p.add_argument("--cos-sweep")
    p.add_argument("--sin-sweep")
    p = sub.add_parser("sweep-tau", parents=[common, proto], help="escape probability against tau")
    p.add_argument("--family", choices=["cos", "sin", "poly5"])
    p.add_argument("--taus", help="comma-separated tau values")
    p = sub.add_parser("predict", parents=[common, proto], help="closed-form survival estimate")
    p.add_argument("--gamma-table")
    p.add_argument("--b-model")
    p.add_argument("--samples", type=int, help="evenly spaced sample count (default: match propagate)")
    p = sub.add_parser("compare", parents=[common], help="deviation of a prediction from a simulation")
    p.add_argument("--sim")
    p.add_argument("--pred")
    p.add_argument("--t-min", type=float)
    sub.add_parser("harmonic-check", parents=[common], help="moving harmonic trap oracle suites")
    p = sub.add_parser("plot", parents=[common], help="SVG plot of CSV outputs")
    p.add_argument("inputs", nargs="*")
    p.add_argument("--x")
    p.add_argument("--y")
    p.add_argument("--logx", action="store_true")
    p.add_argument("--logy", action="store_true")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = build_config(args)
        result = COMMANDS[args.command](args, cfg)
    except (ConfigurationError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(json.dumps(_jsonable(result), sort_keys=True, default=str))
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

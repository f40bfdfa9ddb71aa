"""Command-line entry point: ``eprcollide simulate | sweep | check``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import CSV_SCHEMA, RunConfig, load_file, resolve
from .ensemble import CsvSampleSink
from .errors import BracketError, ValidationError
from .scenarios import Analysis, analyze, initial_state
from .states import COORDS, GaussianState, heisenberg_check
from .sweeps import refine_optimum, sweep

logger = logging.getLogger("eprcollide")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3

# physical dimension of every exported report quantity (dimensionless if absent)
REPORT_DIMENSIONS = {
    "duan_sum": "action", "duan_bound": "action",
    "reid_x": "length2", "reid_p": "momentum2", "reid_product": "action2", "reid_bound": "action2",
    "reid_x_rev": "length2", "reid_p_rev": "momentum2", "reid_product_rev": "action2",
    "det_a": "action2", "det_b": "action2", "bound": "action2", "t1": "time",
}
COORD_DIMENSIONS = ("length", "momentum", "length", "momentum")
_PAIR_DIMENSIONS = {("length", "length"): "length2", ("momentum", "momentum"): "momentum2",
                    ("length", "momentum"): "action", ("momentum", "length"): "action"}


def fmt(value) -> str:
    """17 significant digits, enough to round-trip any double."""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return "nan"
    return format(float(value), ".17g")


class _Table:
    def __init__(self, header):
        self.buf = io.StringIO()
        self.writer = csv.writer(self.buf, lineterminator="\n")
        self.writer.writerow(header)

    def row(self, *values):
        self.writer.writerow([v if isinstance(v, str) else fmt(v) for v in values])

    def text(self) -> str:
        return self.buf.getvalue()


def write_atomic(out_dir: Path, files: dict[str, str], pending: dict[str, Path] | None = None) -> None:
    """Write every file under a temporary name first, then rename them all into place."""
    out_dir.mkdir(parents=True, exist_ok=True)
    staged = dict(pending or {})
    try:
        for name, text in files.items():
            tmp = out_dir / f".{name}.tmp"
            tmp.write_text(text, encoding="utf-8")
            staged[name] = tmp
        for name, tmp in staged.items():
            os.replace(tmp, out_dir / name)
    except BaseException:
        for tmp in staged.values():
            tmp.unlink(missing_ok=True)
        raise


def manifest_text(cfg: RunConfig, command: str, files) -> str:
    doc = {
        "program": "eprcollide",
        "version": __version__,
        "command": command,
        "csv_schema": CSV_SCHEMA,
        "output_units": cfg.units_mode,
        "files": sorted(files),
        "config": cfg.resolved,
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _si(cfg: RunConfig, value, dim):
    if cfg.units_mode != "si" or dim is None:
        return value
    return cfg.units.to_si(value, dim)


def _cov_dim(i, j):
    return _PAIR_DIMENSIONS[(COORD_DIMENSIONS[i], COORD_DIMENSIONS[j])]


def _report_rows(table: _Table, cfg: RunConfig, source: str, values: dict, stderr: dict | None = None):
    for key, value in values.items():
        dim = REPORT_DIMENSIONS.get(key)
        se = (stderr or {}).get(key, math.nan)
        table.row(source, key, _si(cfg, value, dim), _si(cfg, se, dim))


def _heisenberg_values(state: GaussianState) -> dict:
    rep = heisenberg_check(state)
    return {"det_a": rep.products[0], "det_b": rep.products[1], "bound": rep.bound,
            "passed": rep.ok}


def build_report(cfg: RunConfig, res: Analysis) -> str:
    t = _Table(("source", "quantity", "value", "stderr"))
    sc = res.scenario
    _report_rows(t, cfg, "scenario", {"mass_ratio": sc.mass_ratio, "squeeze_a": sc.squeeze_a,
                                       "squeeze_b": sc.squeeze_b, "t1": sc.measurement_time})
    _report_rows(t, cfg, "linear", res.linear_report.values())
    if res.ensemble_report is not None:
        _report_rows(t, cfg, "ensemble", res.ensemble_report.values(), res.ensemble_stderr)
        e = res.ensemble
        _report_rows(t, cfg, "ensemble_diagnostics", {
            "n_samples": e.final.n_samples, "n_used": e.final.n_used, "n_rejected": e.final.n_rejected,
            "n_collided": e.n_collided, "n_missed": e.n_missed,
            "max_momentum_error": e.max_momentum_error, "max_energy_error": e.max_energy_error,
        })
    r = res.regime
    _report_rows(t, cfg, "regime", {"eps_v": r.eps_v, "eps_pa": r.eps_pa, "eps_xb": r.eps_xb,
                                     "neglected_term_ratio": r.neglected_term_ratio,
                                     "max_ratio": r.max_ratio, "threshold": r.threshold,
                                     "in_paper_regime": r.in_paper_regime})
    _report_rows(t, cfg, "heisenberg_t0", _heisenberg_values(res.state0))
    _report_rows(t, cfg, "heisenberg_linear", _heisenberg_values(res.linear_state))
    return t.text()


def build_moments(cfg: RunConfig, res: Analysis) -> str:
    t = _Table(("source", "kind", "i", "j", "value", "stderr"))

    def emit(source, mean, cov, mean_se=None, cov_se=None):
        for i in range(4):
            se = math.nan if mean_se is None else mean_se[i]
            t.row(source, "mean", COORDS[i], "", _si(cfg, mean[i], COORD_DIMENSIONS[i]),
                  _si(cfg, se, COORD_DIMENSIONS[i]))
        for i in range(4):
            for j in range(i, 4):
                se = math.nan if cov_se is None else cov_se[i, j]
                t.row(source, "cov", COORDS[i], COORDS[j], _si(cfg, cov[i, j], _cov_dim(i, j)),
                      _si(cfg, se, _cov_dim(i, j)))

    emit("initial", res.state0.mean, res.state0.cov)
    emit("linear", res.linear_state.mean, res.linear_state.cov)
    if res.ensemble is not None:
        ini, fin = res.ensemble.initial, res.ensemble.final
        emit("ensemble_initial", ini.mean, ini.cov, ini.mean_stderr, ini.cov_stderr)
        emit("ensemble", fin.mean, fin.cov, fin.mean_stderr, fin.cov_stderr)
    return t.text()


def cmd_simulate(cfg: RunConfig) -> int:
    out = cfg.output_dir
    pending = {}
    sink_fh = None
    try:
        sink = None
        if cfg.emit_samples:
            out.mkdir(parents=True, exist_ok=True)
            tmp = out / ".samples.csv.tmp"
            pending["samples.csv"] = tmp
            sink_fh = open(tmp, "w", encoding="utf-8", newline="")
            scales = [cfg.units.scale(d) if cfg.units_mode == "si" else 1.0 for d in COORD_DIMENSIONS]
            t_scale = cfg.units.scale("time") if cfg.units_mode == "si" else 1.0
            sink = CsvSampleSink(sink_fh, scales, t_scale)
        res = analyze(cfg.scenario, cfg.ensemble, cfg.gain_mode, sink=sink)
        if sink_fh is not None:
            sink_fh.close()
            sink_fh = None
        files = {"report.csv": build_report(cfg, res), "moments.csv": build_moments(cfg, res)}
        names = list(files) + list(pending) + ["manifest.json"]
        files["manifest.json"] = manifest_text(cfg, "simulate", names)
        write_atomic(out, files, pending)
    except BaseException:
        if sink_fh is not None:
            sink_fh.close()
        for tmp in pending.values():
            tmp.unlink(missing_ok=True)
        raise
    rep = res.ensemble_report or res.linear_report
    logger.info("reid_product=%.6g epr=%s duan_ratio=%.6g inseparable=%s",
                rep.reid_product, rep.epr_flag, rep.duan_ratio, rep.inseparable_flag)
    print(f"wrote {', '.join(sorted(files) + sorted(pending))} to {out}")
    return EXIT_OK


def cmd_sweep(cfg: RunConfig) -> int:
    spec = cfg.sweep
    dim = {"v_mean": "velocity", "x0": "length"}.get(spec.variable)
    obj_dim = REPORT_DIMENSIONS.get(spec.objective)
    rows = sweep(spec, workers=cfg.ensemble.workers)
    t = _Table(("value", "objective", "objective_stderr", "flag"))
    for r in rows:
        t.row(_si(cfg, r.value, dim), _si(cfg, r.objective, obj_dim), _si(cfg, r.objective_stderr, obj_dim),
              r.flag)
    opt = _Table(("variable", "argmin", "objective", "tolerance", "bracket_lo", "bracket_hi", "status"))
    ok_rows = [r for r in rows if r.ok]
    if not ok_rows:
        raise ValidationError("every sweep point failed; nothing to report")
    status = "grid"
    best = None
    if cfg.refine:
        try:
            best = refine_optimum(spec, rows=None if spec.ensemble is not None else rows)
            status = "refined"
        except BracketError as exc:
            logger.warning("no refinement: %s", exc)
            status = "edge"
    if best is not None:
        opt.row(spec.variable, _si(cfg, best.argmin, dim), _si(cfg, best.objective, obj_dim),
                _si(cfg, best.tolerance, dim), _si(cfg, best.bracket[0], dim),
                _si(cfg, best.bracket[1], dim), status)
    else:
        sign = -1.0 if spec.objective == "corr_p" else 1.0
        r = min(ok_rows, key=lambda r: sign * r.objective)
        values = [x.value for x in rows]
        k = values.index(r.value)
        step = max(abs(values[min(k + 1, len(values) - 1)] - values[max(k - 1, 0)]) / 2, 0.0)
        opt.row(spec.variable, _si(cfg, r.value, dim), _si(cfg, r.objective, obj_dim), _si(cfg, step, dim),
                _si(cfg, values[max(k - 1, 0)], dim), _si(cfg, values[min(k + 1, len(values) - 1)], dim), status)
    files = {"sweep.csv": t.text(), "optimum.csv": opt.text()}
    files["manifest.json"] = manifest_text(cfg, "sweep", list(files) + ["manifest.json"])
    write_atomic(cfg.output_dir, files)
    n_failed = len(rows) - len(ok_rows)
    print(f"wrote sweep.csv ({len(rows)} rows, {n_failed} failed), optimum.csv, manifest.json to {cfg.output_dir}")
    return EXIT_OK


def cmd_check(cfg: RunConfig) -> int:
    sc = cfg.scenario
    print(f"config: ok (scenario {sc.name}, units {cfg.units_mode}, mass ratio {sc.mass_ratio:.6g})")
    try:
        state = initial_state(sc)
    except ValidationError as exc:
        print(f"heisenberg: FAIL {exc}")
        return EXIT_CONFIG
    rep = heisenberg_check(state)
    for name, product, ok in zip("AB", rep.products, rep.passed):
        print(f"heisenberg {name}: {'PASS' if ok else 'FAIL'} det={product:.6g} bound={rep.bound:.6g}")
    if not rep.ok:
        return EXIT_CONFIG
    from .linearized import regime_report
    r = regime_report(state, sc.mass_a, sc.mass_b, sc.x0, sc.v_mean)
    print(f"regime: eps_v={r.eps_v:.3g} eps_pa={r.eps_pa:.3g} eps_xb={r.eps_xb:.3g} "
          f"neglected_term_ratio={r.neglected_term_ratio:.3g}")
    if r.in_paper_regime:
        print(f"regime: PASS inside paper regime (max ratio {r.max_ratio:.3g} < {r.threshold:g})")
    else:
        print(f"WARNING: outside paper regime (max ratio {r.max_ratio:.3g} >= {r.threshold:g})")
    if cfg.sweep is not None:
        print(f"sweep: {cfg.sweep.variable} over {len(cfg.sweep.grid)} points, objective {cfg.sweep.objective}")
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "sweep": cmd_sweep, "check": cmd_check}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="eprcollide",
                                     description="EPR correlations from an elastic collision of squeezed particles")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (("simulate", "linearized and Monte Carlo run with report and moments"),
                       ("sweep", "one-dimensional parameter sweep with optimum refinement"),
                       ("check", "validate a config and print regime and Heisenberg checks")):
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", type=Path, help="TOML or JSON config (a manifest.json also works)")
        p.add_argument("--seed", type=int, help="RNG seed (unsigned 64-bit)")
        p.add_argument("--samples", type=int, help="number of Monte Carlo samples")
        p.add_argument("--out", type=Path, help="output directory (default: $EPRCOLLIDE_OUT_DIR)")
        p.add_argument("--preset", help="scenario preset name")
        p.add_argument("--emit-samples", action="store_true", default=None, help="also write samples.csv")
        p.add_argument("--workers", type=int, help="worker threads")
        p.add_argument("-v", "--verbose", action="count", default=0)
    return parser


def _error(kind: str, exc: BaseException, code: int) -> int:
    record = {"error": kind, "type": type(exc).__name__, "message": str(exc), "exit_code": code}
    print(json.dumps(record), file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        raw = load_file(args.config) if args.config else {}
        cfg = resolve(raw, seed=args.seed, samples=args.samples, out=args.out, preset=args.preset,
                      emit_samples=args.emit_samples, workers=args.workers,
                      require_sweep=args.command == "sweep")
        return COMMANDS[args.command](cfg)
    except ValidationError as exc:
        return _error("config", exc, EXIT_CONFIG)
    except (RuntimeError, OSError, ArithmeticError) as exc:
        return _error("runtime", exc, EXIT_RUNTIME)


if __name__ == "__main__":
    sys.exit(main())

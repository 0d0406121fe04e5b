"""Command-line entry point.

Subcommands::

    gen           indices.csv, tiles.json (and optionally a test signal)
    verify        verify.json with metric, separation, summability, covering and weight checks
    gram          gram.csv, decay.json, decay.svg
    decay-report  decay.json, decay.svg recomputed from an existing gram.csv
    frame         coefficients.csv, reconstruction.json for a sampled signal

Exit codes: 0 success, 1 a verification failed, 2 bad configuration or input.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from . import covering, frame_ops, gram, metric
from .index_space import ParamError, SystemParams, enumerate_indices
from .packets import SampledField
from .prototypes import get_prototypes

log = logging.getLogger("wavepackets")

EXIT_OK, EXIT_FAILED, EXIT_INPUT = 0, 1, 2


class InputError(Exception):
    """Configuration or input file problem (exit code 2)."""


@dataclass
class RunConfig:
    params: SystemParams = field(default_factory=SystemParams)
    prototypes: str = "gaussian"
    output_dir: str = "out"
    threads: int = field(default_factory=lambda: os.cpu_count() or 1)
    seed: int = 0
    grid_resolution: int = 256
    threshold: float = gram.DEFAULT_THRESHOLD
    exponent: float = 6.0
    triangle_trials: int = 100_000
    time_step: float = 1.0 / 16
    cg_max_iterations: int = 200
    cg_tol: float = 1e-8
    atom_tail: float = 1e-14

    def validate(self) -> None:
        self.params.validate()
        if self.threads < 1:
            raise InputError("threads must be at least 1")
        if self.grid_resolution < 64:
            raise InputError("grid_resolution must be at least 64")
        if not self.threshold >= 0:
            raise InputError("threshold must be non-negative")
        if self.exponent <= 5:
            raise InputError("exponent must exceed 5")
        if self.triangle_trials < 1 or self.cg_max_iterations < 1:
            raise InputError("trial and iteration counts must be positive")
        if not 0 < self.time_step < 1:
            raise InputError("time_step must lie in (0, 1)")
        try:
            get_prototypes(self.prototypes)
        except ValueError as exc:
            raise InputError(str(exc)) from None

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        pnames = {f.name for f in dataclasses.fields(SystemParams)}
        pdict = dict(d.pop("params", {}))
        for k in list(d):
            if k in pnames:
                pdict[k] = d.pop(k)
        known = {f.name for f in dataclasses.fields(cls)} - {"params"}
        unknown = set(d) - known
        if unknown:
            raise InputError(f"unknown config fields: {sorted(unknown)}")
        return cls(params=SystemParams.from_dict(pdict), **d)

    def to_dict(self) -> dict:
        """Everything that influences results (thread count and paths are excluded)."""
        d = {f.name: getattr(self, f.name) for f in dataclasses.fields(self)
             if f.name not in ("params", "threads", "output_dir")}
        d["params"] = self.params.to_dict()
        return d


PARAM_FLAGS = {
    "alpha": float, "beta": float, "s": float, "p": float, "q": float, "epsilon": float,
    "n_sectors": int, "j_max": int, "delta": float, "k_radius": int,
}
RUN_FLAGS = {
    "prototypes": str, "output_dir": str, "threads": int, "seed": int, "grid_resolution": int,
    "threshold": float, "exponent": float, "triangle_trials": int, "time_step": float,
    "cg_max_iterations": int, "cg_tol": float, "atom_tail": float,
}


def _number(kind):
    def conv(text):
        if kind is float and text.lower() in ("inf", "infinity"):
            return math.inf
        return kind(text)
    conv.__name__ = kind.__name__
    return conv


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file; flags override its fields")
    for name, kind in {**PARAM_FLAGS, **RUN_FLAGS}.items():
        common.add_argument("--" + name.replace("_", "-"), dest=name, type=_number(kind), default=None)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="wavepackets", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    g = sub.add_parser("gen", parents=[common], help="write the index and tile manifests")
    g.add_argument("--signal", action="store_true", help="also write a Gaussian test signal")
    g.add_argument("--sigma", type=float, default=0.8)
    sub.add_parser("verify", parents=[common], help="run the structural checks")
    sub.add_parser("gram", parents=[common], help="Gram scan and decay report")
    d = sub.add_parser("decay-report", parents=[common], help="decay report from an existing gram.csv")
    d.add_argument("--gram", help="path of gram.csv (default: output dir)")
    f = sub.add_parser("frame", parents=[common], help="analysis, norms and reconstruction of a signal")
    f.add_argument("signal", help="signal file in the binary sampled-field format")
    return parser


def load_config(args: argparse.Namespace) -> RunConfig:
    base: dict = {}
    if args.config:
        try:
            base = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(base, dict):
            raise InputError("config must be a JSON object")
    base = dict(base)
    params = dict(base.pop("params", {}))
    for name in PARAM_FLAGS:
        if getattr(args, name, None) is not None:
            params[name] = getattr(args, name)
    for name in RUN_FLAGS:
        if getattr(args, name, None) is not None:
            base[name] = getattr(args, name)
    try:
        cfg = RunConfig.from_dict({**base, "params": params})
        cfg.validate()
    except (ParamError, TypeError, ValueError) as exc:
        raise InputError(str(exc)) from None
    return cfg


def _out(cfg: RunConfig) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else ("inf" if x > 0 else "-inf" if x < 0 else "nan")
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


# ----------------------------------------------------------------------------
# commands

def cmd_gen(cfg: RunConfig, sigma: float = 0.8, signal: bool = False) -> int:
    out = _out(cfg)
    p = cfg.params
    with open(out / "indices.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["j", "m", "l", "k1", "k2"])
        for i in enumerate_indices(p):
            w.writerow(list(i))
    tiles = covering.all_tiles(p)
    nbrs = covering.neighbor_lists(tiles)
    manifest = {
        "params": p.to_dict(),
        "tiles": [{
            "index": list(t.index),
            "kind": t.kind,
            "linear": t.linear.tolist(),
            "offset": t.offset.tolist(),
            "vertices": None if t.is_disk else t.vertices().tolist(),
            "radius": t.radius if t.is_disk else None,
            "neighbors": [list(tiles[b].index) for b in nbrs[a]],
        } for a, t in enumerate(tiles)],
    }
    _write_json(out / "tiles.json", manifest)
    if signal:
        grid = frame_ops.grid_for(p, step=cfg.time_step)
        frame_ops.gaussian_signal(grid, sigma).save(out / "signal.bin")
    log.info("wrote %s", out)
    return EXIT_OK


def cmd_verify(cfg: RunConfig) -> int:
    p = cfg.params
    idx = enumerate_indices(p)
    checks = {}

    ax = metric.check_metric_axioms(idx, p, trials=cfg.triangle_trials, seed=cfg.seed)
    checks["metric_axioms"] = ax

    sep = metric.separation(idx, p)
    checks["separation"] = sep

    bigger = p.replace(k_radius=2 * p.k_radius if p.k_radius else 1)
    s1 = metric.summability(idx, p, n=cfg.exponent, workers=cfg.threads)
    s2 = metric.summability(enumerate_indices(bigger), bigger, n=cfg.exponent, workers=cfg.threads)
    checks["summability"] = {
        "exponent": cfg.exponent,
        "k_radius": [p.k_radius, bigger.k_radius],
        "sup_row_sum": [s1, s2],
        "relative_change": (s2 - s1) / s1,
        "passed": bool(math.isfinite(s2) and s2 >= s1),
    }

    cov = covering.verify_covering(p, cfg.grid_resolution, workers=cfg.threads)
    sweep_max, hist = covering.neighbor_stats(p)
    brute_max, _ = covering.neighbor_stats(p, brute_force=True)
    cov_summary = {k: v for k, v in cov.items() if k != "params"}
    cov_summary.update({
        "uncovered_count": len(cov["uncovered"]),
        "max_neighbors": sweep_max,
        "max_neighbors_brute_force": brute_max,
        "neighbor_histogram": hist,
        "passed": bool(not cov["uncovered"] and sweep_max == brute_max),
    })
    checks["covering"] = cov_summary

    mod = covering.verify_moderate(p)
    mod["passed"] = bool(math.isfinite(mod["constant"]))
    checks["moderate_weight"] = mod

    passed = all(c["passed"] for c in checks.values())
    _write_json(_out(cfg) / "verify.json", {"config": cfg.to_dict(), "checks": checks, "passed": passed})
    for name, c in checks.items():
        print(f"{name}: {'pass' if c['passed'] else 'FAIL'}")
    return EXIT_OK if passed else EXIT_FAILED


def _decay_outputs(cfg: RunConfig, table: gram.GramTable, out: Path) -> dict:
    rep = gram.decay_report(table, n=cfg.exponent)
    loc = gram.intrinsic_localization_check(table, n=cfg.exponent)
    half = gram.intrinsic_localization_check(table, n=cfg.exponent, constant=rep["c_emp"] / 2)
    report = {
        "config": cfg.to_dict(),
        "decay": rep,
        "intrinsic_localization": loc,
        "halved_constant": half,
        "time_envelope": gram.time_envelope(table),
        "passed": bool(rep["envelope_non_increasing"] and rep["slope_ok"] and loc["holds"]),
    }
    _write_json(out / "decay.json", report)
    (out / "decay.svg").write_text(decay_svg(table, rep))
    return report


def cmd_gram(cfg: RunConfig) -> int:
    out = _out(cfg)
    p = cfg.params
    protos = get_prototypes(cfg.prototypes)
    table = gram.gram_matrix(enumerate_indices(p), p, protos, cfg.threshold, workers=cfg.threads)
    table.write_csv(out / "gram.csv")
    report = _decay_outputs(cfg, table, out)
    print(f"records: {len(table)}  c_emp: {report['decay']['c_emp']:.6g}  slope: {report['decay']['slope']:.4g}")
    return EXIT_OK if report["passed"] else EXIT_FAILED


def cmd_decay_report(cfg: RunConfig, gram_path: str | None = None) -> int:
    out = _out(cfg)
    path = Path(gram_path) if gram_path else out / "gram.csv"
    try:
        table = gram.read_gram_csv(path, cfg.threshold)
    except (OSError, ValueError) as exc:
        raise InputError(f"cannot read {path}: {exc}") from None
    if len(table) == 0:
        raise InputError(f"{path} holds no records")
    report = _decay_outputs(cfg, table, out)
    return EXIT_OK if report["passed"] else EXIT_FAILED


def cmd_frame(cfg: RunConfig, signal_path: str) -> int:
    out = _out(cfg)
    p = cfg.params
    protos = get_prototypes(cfg.prototypes)
    try:
        f = SampledField.load(signal_path)
    except (OSError, ValueError) as exc:
        raise InputError(f"cannot read signal {signal_path}: {exc}") from None
    try:
        atoms = frame_ops.AtomMatrix(enumerate_indices(p), f.grid, p, protos, tail=cfg.atom_tail,
                                     workers=cfg.threads)
    except frame_ops.GridTooSmall as exc:
        raise InputError(str(exc)) from None
    coeffs = frame_ops.analyze(f, p, protos, atoms=atoms)
    coeffs.write_csv(out / "coefficients.csv")
    norms = {
        "configured": frame_ops.coefficient_norm(coeffs, p.s, p.p, p.q),
        "q=1": frame_ops.coefficient_norm(coeffs, p.s, p.p, 1.0),
        "q=2": frame_ops.coefficient_norm(coeffs, p.s, p.p, 2.0),
        "q=inf": frame_ops.coefficient_norm(coeffs, p.s, p.p, math.inf),
    }
    k = int(np.argmax(np.abs(coeffs.values)))
    report = {
        "config": cfg.to_dict(),
        "signal": {"path": Path(signal_path).name, "counts": list(f.grid.counts), "l2_norm": f.norm(2)},
        "coefficient_norm": norms,
        "max_coefficient": {"index": list(coeffs.indices[k]), "modulus": float(abs(coeffs.values[k]))},
    }
    status = EXIT_OK
    if f.norm(2) == 0:
        report["reconstruction"] = {"relative_error": 0.0, "iterations": 0, "skipped": "zero signal"}
    else:
        try:
            rec = frame_ops.reconstruct(f, p, protos, cfg.cg_max_iterations, cfg.cg_tol, atoms=atoms)
            report["reconstruction"] = rec.to_dict()
        except frame_ops.BandLimitError as exc:
            # reconstruction needs a band-limited signal; analysis and norms stand
            report["reconstruction"] = {"skipped": str(exc)}
        except frame_ops.StagnationError as exc:
            report["reconstruction"] = {**exc.result.to_dict(), "stagnated": str(exc)}
            status = EXIT_FAILED
    _write_json(out / "reconstruction.json", report)
    rec = report["reconstruction"]
    if "relative_error" in rec:
        print(f"relative error: {rec['relative_error']:.3e}")
    for key in ("skipped", "stagnated"):
        if key in rec:
            print(rec[key], file=sys.stderr)
    return status


# ----------------------------------------------------------------------------
# plot

def _fmt(x: float) -> str:
    return f"{x:.2f}"


def decay_svg(table: gram.GramTable, report: dict, width: int = 640, height: int = 480,
              max_points: int = 4000) -> str:
    """Scatter of ``log(1 + rho)`` against ``log|G|`` with the fitted and reference lines."""
    mod = table.modulus
    keep = mod > report["floor"]
    x = np.log1p(table.rho[keep])
    y = np.log(mod[keep])
    stride = max(1, int(math.ceil(len(x) / max_points)))
    xs, ys = x[::stride], y[::stride]
    pad = 50
    x0, x1 = 0.0, max(float(x.max()) if x.size else 1.0, 1e-9)
    y0, y1 = (float(y.min()), float(y.max())) if y.size else (-1.0, 0.0)
    if y1 - y0 < 1e-9:
        y0 -= 1.0

    def px(v):
        return pad + (v - x0) / (x1 - x0) * (width - 2 * pad)

    def py(v):
        return height - pad - (v - y0) / (y1 - y0) * (height - 2 * pad)

    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<polyline points="{pad},{pad} {pad},{height - pad} {width - pad},{height - pad}" fill="none" stroke="black"/>',
    ]
    for a, b in zip(xs, ys):
        parts.append(f'<circle cx="{_fmt(px(a))}" cy="{_fmt(py(b))}" r="1.2" fill="steelblue" fill-opacity="0.5"/>')

    def line(slope, intercept, colour, dash=""):
        pts = []
        for v in np.linspace(x0, x1, 50):
            w = slope * v + intercept
            if y0 <= w <= y1:
                pts.append(f"{_fmt(px(v))},{_fmt(py(w))}")
        if len(pts) >= 2:
            extra = f' stroke-dasharray="{dash}"' if dash else ""
            parts.append(f'<polyline points="{" ".join(pts)}" fill="none" stroke="{colour}" stroke-width="1.5"{extra}/>')

    if math.isfinite(report["slope"]):
        line(report["slope"], report["intercept"], "crimson")
    n = report["exponent"]
    line(-n, math.log(report["c_emp"]), "black", "6,4")
    labels = [
        (width / 2, height - 12, "log(1 + rho)"),
        (pad, pad - 20, f"log |G|   fitted slope {report['slope']:.3f} (red), reference slope {-n:g} (dashed)"),
    ]
    for lx, ly, text in labels:
        anchor = "middle" if lx == width / 2 else "start"
        parts.append(f'<text x="{_fmt(lx)}" y="{_fmt(ly)}" font-family="sans-serif" font-size="12" '
                     f'text-anchor="{anchor}">{escape(text)}</text>')
    for v in np.linspace(x0, x1, 5):
        parts.append(f'<text x="{_fmt(px(v))}" y="{height - pad + 15}" font-family="sans-serif" '
                     f'font-size="10" text-anchor="middle">{v:.2f}</text>')
    for v in np.linspace(y0, y1, 5):
        parts.append(f'<text x="{pad - 5}" y="{_fmt(py(v))}" font-family="sans-serif" '
                     f'font-size="10" text-anchor="end">{v:.1f}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args)
        if args.command == "gen":
            return cmd_gen(cfg, args.sigma, args.signal)
        if args.command == "verify":
            return cmd_verify(cfg)
        if args.command == "gram":
            return cmd_gram(cfg)
        if args.command == "decay-report":
            return cmd_decay_report(cfg, args.gram)
        if args.command == "frame":
            return cmd_frame(cfg, args.signal)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    parser.error(f"unknown command {args.command}")
    return EXIT_INPUT

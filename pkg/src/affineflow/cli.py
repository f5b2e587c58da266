"""Command-line front end.

Every command reads an optional JSON config (``--config``) whose keys match
:class:`RunConfig`; flags given on the command line override it.  Tables are
written as CSV into the output directory (``--outdir``, else the
``AFFINEFLOW_OUTDIR`` environment variable, else the working directory).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.integrate import cumulative_trapezoid

from . import curves, flow, isoper, variation
from .curves import AnalyticCurve, SampledClosedCurve
from .errors import AffineFlowError, InflectionPoint, InputError, InvalidParams, NumericalFailure
from .invariants import Group, curve_jets, ga_quantity, plane_ga_invariants, subgroup_curvatures

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3
NUMBER_FORMAT = "%.12e"
OUTDIR_ENV = "AFFINEFLOW_OUTDIR"
TABLE_SPAN = 30.0  # xi range tabulated for families without a finite window


@dataclass
class RunConfig:
    command: str = ""
    curve: str = "ellipse"
    params: dict = field(default_factory=dict)
    points: str | None = None
    group: str = "GA"
    dim: int = 2
    N: int = 256
    samples: int = 64
    T: float = 1.0
    dt_max: float = 0.05
    rtol: float = 1e-7
    snapshot_every: float | None = None
    outdir: str | None = None
    plot: bool = False
    family: str | None = None
    shift: float = 0.0
    phi: float | None = None
    eps: int | None = None
    example: str | None = None
    seed: int = 0

    def validate(self) -> None:
        numeric = [self.N, self.samples, self.T, self.dt_max, self.rtol, self.shift, self.dim]
        numeric += [v for v in (self.phi, self.eps, self.snapshot_every) if v is not None]
        numeric += [v for v in self.params.values() if isinstance(v, (int, float))]
        if not all(math.isfinite(float(v)) for v in numeric):
            raise InvalidParams("numeric settings must be finite")
        if self.N < 32 or self.N % 2:
            raise InvalidParams("N must be even and at least 32")
        if self.T < 0:
            raise InvalidParams("T must be non-negative")
        if self.dt_max <= 0 or self.rtol <= 0 or self.samples < 2:
            raise InvalidParams("dt_max and rtol must be positive and samples at least 2")
        try:
            Group(self.group)
        except ValueError:
            raise InvalidParams(f"unknown group {self.group!r}") from None

    @property
    def output_dir(self) -> Path:
        path = Path(self.outdir or os.environ.get(OUTDIR_ENV) or ".")
        path.mkdir(parents=True, exist_ok=True)
        return path


# output helpers -----------------------------------------------------------------------------

def _cell(value) -> str:
    if isinstance(value, str):
        return value
    return NUMBER_FORMAT % (float(value) + 0.0)  # adding 0.0 turns -0.0 into 0.0


def write_csv(path: Path, header: Sequence[str], rows) -> Path:
    """Comma-separated table, header first, ``%.12e`` numbers, ``\\n`` line endings."""
    lines = [",".join(header)]
    lines += [",".join(_cell(v) for v in row) for row in rows]
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    return path


def write_svg(path: Path, polylines: list[tuple[str, np.ndarray]], size: int = 480) -> Path:
    """Closed polylines in a shared axis box, with a legend."""
    allpts = np.vstack([p for _, p in polylines])
    lo, hi = allpts.min(axis=0), allpts.max(axis=0)
    span = float(np.max(hi - lo)) or 1.0
    pad, legend = 20, 16 * len(polylines) + 10
    scale = (size - 2 * pad) / span

    def tx(p):
        return pad + (p[:, 0] - lo[0]) * scale, size - pad - (p[:, 1] - lo[1]) * scale

    colours = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"]
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size + legend}">',
           f'<rect x="{pad}" y="{pad}" width="{size - 2 * pad}" height="{size - 2 * pad}" fill="none" stroke="black"/>']
    for i, (label, pts) in enumerate(polylines):
        x, y = tx(np.vstack([pts, pts[:1]]))
        path_pts = " ".join(f"{a:.3f},{b:.3f}" for a, b in zip(x, y))
        colour = colours[i % len(colours)]
        out.append(f'<polyline points="{path_pts}" fill="none" stroke="{colour}" stroke-width="1.2"/>')
        ly = size + 14 + 16 * i
        out.append(f'<line x1="{pad}" y1="{ly - 4}" x2="{pad + 20}" y2="{ly - 4}" stroke="{colour}"/>')
        out.append(f'<text x="{pad + 26}" y="{ly}" font-size="12" font-family="sans-serif">{label}</text>')
    out.append("</svg>")
    path.write_text("\n".join(out) + "\n")
    return path


# curve specification ------------------------------------------------------------------------

def load_points(path: str, period: float = curves.TWO_PI) -> SampledClosedCurve:
    """Closed curve from a CSV/whitespace file of ``x,y`` rows (an optional header is skipped)."""
    rows = []
    for line in Path(path).read_text().splitlines():
        parts = line.replace(",", " ").split()
        if not parts:
            continue
        try:
            rows.append([float(v) for v in parts])
        except ValueError:
            if rows:
                raise InvalidParams(f"unparseable row in {path}: {line!r}") from None
    if not rows:
        raise InvalidParams(f"no points in {path}")
    return SampledClosedCurve(np.array(rows), period)


def resolve_curve(cfg: RunConfig):
    if cfg.points:
        return load_points(cfg.points)
    return curves.builtin(cfg.curve, **cfg.params)


def _parameters(curve, count: int) -> np.ndarray:
    if isinstance(curve, SampledClosedCurve):
        return curve.nodes
    lo, hi = curve.domain
    if curve.closed:
        return lo + np.arange(count) * (curve.period / count)
    return np.linspace(lo, hi, count)


# commands -----------------------------------------------------------------------------------

def _locate_inflection(curve, p: np.ndarray) -> float:
    x = curve_jets(curve, p, 5)
    F, scale = ga_quantity(x)
    ratio = np.abs(F.value) / np.maximum(1.0, scale)
    return float(np.atleast_1d(p)[int(np.argmin(ratio))])


def cmd_invariants(cfg: RunConfig) -> int:
    curve = resolve_curve(cfg)
    p = _parameters(curve, cfg.samples)
    group = Group(cfg.group)
    if group is not Group.GA or curve.dim != 2:
        k = subgroup_curvatures(group, curve, p)
        header = ["p"] + [f"k{i + 1}" for i in range(k.shape[0])]
        path = write_csv(cfg.output_dir / "invariants.csv", header, np.column_stack([p, k.T]))
        print(f"wrote {path}")
        return EXIT_OK
    try:
        inv = plane_ga_invariants(curve, p)
    except InflectionPoint as exc:
        where = _locate_inflection(curve, p)
        raise InflectionPoint(f"fully affine inflection near p = {where:.6g}: {exc}") from None
    xi = cumulative_trapezoid(inv.g, p, initial=0.0)
    rows = np.column_stack([p, xi, inv.g, inv.phi, inv.lam, inv.eps])
    path = write_csv(cfg.output_dir / "invariants.csv", ["p", "xi", "g", "phi", "lambda", "eps"], rows)
    print(f"wrote {path} ({len(p)} rows)")
    return EXIT_OK


def _snapshot_rows(state: flow.CurvatureState) -> np.ndarray:
    pts, _ = flow.curve_points(state)
    p = np.arange(state.N) * (state.period / state.N)
    return np.column_stack([p, pts[:, 0], pts[:, 1], state.g, state.phi])


def cmd_flow(cfg: RunConfig) -> int:
    curve = resolve_curve(cfg)
    state = flow.curvature_state(curve, cfg.N)
    every = cfg.snapshot_every or (cfg.T / 5 if cfg.T > 0 else 1.0)
    times = [0.0] + [k * every for k in range(1, int(np.floor(cfg.T / every + 1e-9)) + 1)]
    run = flow.run_heat_flow(state, cfg.T, dt_max=cfg.dt_max, rtol=cfg.rtol, snapshot_times=times)
    out = cfg.output_dir
    write_csv(out / "monitor.csv", ["t", "L", "E", "meanphi", "dLdt"], run.monitors.rows())
    polylines = []
    for i, snap in enumerate(run.snapshots):
        rows = _snapshot_rows(snap)
        write_csv(out / f"snapshot_{i:03d}.csv", ["p", "x", "y", "g", "phi"], rows)
        polylines.append((f"t = {snap.t:.4g}", rows[:, 1:3]))
    if cfg.plot and polylines:
        write_svg(out / "flow.svg", polylines)
    m = run.monitors
    print(f"t = {m.t[-1]:.6g}  L = {m.L[-1]:.10f}  E = {m.E[-1]:.6e}  steps = {len(m.t) - 1}")
    if run.error is not None:
        print(f"error: {run.error}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_stability(cfg: RunConfig) -> int:
    name = cfg.family or "tanh"
    if name not in variation.FAMILIES:
        raise InvalidParams(f"unknown family {name!r}; choose from {', '.join(variation.FAMILIES)}")
    rep = variation.classify_family(name, cfg.shift, cfg.phi, cfg.eps)
    fam = variation.extremal_family(name, cfg.shift, cfg.phi, cfg.eps)
    print(f"family {name}  eps = {rep.eps}  verdict: {rep.verdict}")
    for iv in rep.intervals:
        signs = " ".join(f"{s:+d}" for s in iv.signs)
        print(f"  [{iv.lo:.6g}, {iv.hi:.6g}]  signs P0..P3: {signs}  {iv.verdict}")
    for key, (computed, closed) in rep.thresholds.items():
        print(f"  threshold {key}: computed {computed:.10f}  closed form {closed:.10f}")
    stable = rep.stable_set()
    if stable:
        print("  stable set: " + ", ".join(f"[{a:.6g}, {b:.6g}]" for a, b in stable))
    lo, hi = (float(np.clip(v, -TABLE_SPAN, TABLE_SPAN)) for v in fam.window)
    xi = np.linspace(lo, hi, max(cfg.samples, 2))
    poles = fam.poles(lo, hi)
    if len(poles):
        xi = xi[np.min(np.abs(xi[:, None] - np.asarray(poles)[None, :]), axis=1) > variation.POLE_MARGIN]
    P = variation.stability_fields(fam, xi)
    path = write_csv(cfg.output_dir / "stability.csv", ["xi", "P0", "P1", "P2", "P3"], np.column_stack([xi, P.T]))
    print(f"wrote {path}")
    return EXIT_OK


SOLITON_DEFAULTS = {"ellipse": {}, "hyperbola": {}, "xlogx": {}, "power": {"alpha": 3.0},
                    "spiral": {"beta": np.pi / 6}}


def _soliton_row(kind: str, params: dict, t: float):
    residual = flow.verify_soliton_flow(kind, params, t)
    curve = flow.explicit_soliton(kind, params, t)
    lo, hi = curve.domain
    p = np.linspace(lo, hi, 42)[1:-1] if not curve.closed else np.linspace(lo, hi, 40, endpoint=False)
    inv = plane_ga_invariants(curve, p, order=10)
    eps = int(np.sign(np.mean(inv.eps)))
    fit = flow.soliton_classify(inv.phi_xi[:3], eps)
    if isinstance(fit, flow.NotASoliton):
        return [kind, "none", fit.a, eps, residual]
    return [kind, fit.kind, fit.a, eps, residual]


def cmd_soliton(cfg: RunConfig) -> int:
    kinds = [cfg.example] if cfg.example else list(SOLITON_DEFAULTS)
    rows = []
    for kind in kinds:
        if kind not in SOLITON_DEFAULTS:
            raise InvalidParams(f"unknown soliton example {kind!r}; choose from {', '.join(SOLITON_DEFAULTS)}")
        params = {**SOLITON_DEFAULTS[kind], **cfg.params}
        rows.append(_soliton_row(kind, params, cfg.T if cfg.T else 0.0))
    for kind, fam, a, eps, res in rows:
        print(f"{kind:10s} family {fam:10s} a = {a:+.10f}  eps = {eps:+d}  flow residual = {res:.3e}")
    path = write_csv(cfg.output_dir / "soliton.csv", ["example", "family", "a", "eps", "residual"], rows)
    print(f"wrote {path}")
    return EXIT_OK


def cmd_isoper(cfg: RunConfig) -> int:
    rep = isoper.isoper_report(resolve_curve(cfg), cfg.N)
    d = rep.as_dict()
    for k, v in d.items():
        print(f"{k:22s} {v}")
    path = write_csv(cfg.output_dir / "isoper.csv", list(d), [[float(v) for v in d.values()]])
    print(f"wrote {path}")
    return EXIT_OK


def cmd_verify(cfg: RunConfig) -> int:
    from .identities import run_identity_suite

    results = run_identity_suite(seed=cfg.seed)
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    failed = sum(not ok for _, ok, _ in results)
    print(f"{len(results) - failed}/{len(results)} identities hold")
    return EXIT_OK if not failed else EXIT_NUMERIC


COMMANDS = {
    "invariants": cmd_invariants,
    "flow": cmd_flow,
    "stability": cmd_stability,
    "soliton": cmd_soliton,
    "isoper": cmd_isoper,
    "verify": cmd_verify,
}


# argument handling --------------------------------------------------------------------------

def _param(text: str) -> tuple[str, float]:
    key, sep, value = text.partition("=")
    if not sep:
        raise argparse.ArgumentTypeError("parameters look like name=value")
    try:
        return key, float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"parameter {key} needs a number") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="affineflow", description="Fully affine curve invariants and flows.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON file with RunConfig keys")
        p.add_argument("--curve", help=f"builtin curve ({', '.join(sorted(curves.CATALOG))})")
        p.add_argument("--param", action="append", type=_param, dest="params", help="curve parameter name=value")
        p.add_argument("--points", help="file of x,y rows describing a closed curve")
        p.add_argument("--group", choices=[g.value for g in Group])
        p.add_argument("--N", type=int)
        p.add_argument("--samples", type=int)
        p.add_argument("--T", type=float)
        p.add_argument("--dt-max", type=float, dest="dt_max")
        p.add_argument("--rtol", type=float)
        p.add_argument("--snapshot-every", type=float, dest="snapshot_every")
        p.add_argument("--outdir")
        p.add_argument("--plot", action="store_true", default=None)
        p.add_argument("--family")
        p.add_argument("--shift", type=float)
        p.add_argument("--phi", type=float)
        p.add_argument("--eps", type=int, choices=[-1, 1])
        p.add_argument("--example")
        p.add_argument("--seed", type=int)
    return parser


def make_config(args: argparse.Namespace) -> RunConfig:
    data: dict = {}
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise InvalidParams(f"cannot read config {args.config}: {exc}") from None
        known = {f.name for f in fields(RunConfig)}
        unknown = set(data) - known
        if unknown:
            raise InvalidParams(f"unknown config keys: {', '.join(sorted(unknown))}")
    overrides = {k: v for k, v in vars(args).items() if v is not None and k not in ("config", "params")}
    data.update(overrides)
    if args.params:
        data["params"] = {**data.get("params", {}), **dict(args.params)}
    cfg = RunConfig(**data)
    cfg.validate()
    return cfg


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = make_config(args)
        return COMMANDS[cfg.command](cfg)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except AffineFlowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())

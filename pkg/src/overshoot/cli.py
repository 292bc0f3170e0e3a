"""Command-line experiment runner.

Each command writes CSV files and a ``manifest.json`` into ``--out``.
Settings can also come from a ``key = value`` file given with
``--config``; flags on the command line override it.

Examples::

    overshoot proj-sweep --space p1dg --t-steps 101 --h 1.0
    overshoot proj-adapt --iters 20
    overshoot rd1d --case matched --eps 1e-16 --theta 0.8 --iters 20
    overshoot transport2d --case strip_pi3 --degree 0 --iters 15
    overshoot plot --csv out/sweep_p1dg.csv --kind os-vs-t
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import subprocess
import sys
import time
from dataclasses import asdict, dataclass, field
from importlib import metadata
from pathlib import Path

import numpy as np

from . import adapt, fem1d, mesh1d, mesh2d, stepproj, transport2d
from .numkit import NoConvergence, SingularMatrix

__all__ = [
    "ExperimentConfig",
    "InvalidConfig",
    "SchemaMismatch",
    "ComputeFailure",
    "build_parser",
    "parse_config",
    "run",
    "plot",
    "main",
]

COMMANDS = ("proj-sweep", "proj-adapt", "rd1d", "transport2d", "plot")
PLOT_KINDS = ("os-vs-t", "os-vs-iter", "projected-solution")


class InvalidConfig(ValueError):
    """Bad flags, config file entries or parameter values (exit status 2)."""


class SchemaMismatch(InvalidConfig):
    """A CSV handed to ``plot`` lacks the columns the plot kind needs."""


class ComputeFailure(RuntimeError):
    """A solver broke down during a run (exit status 1)."""


@dataclass
class ExperimentConfig:
    command: str
    out: str = "out"
    seed: int = 0
    params: dict = field(default_factory=dict)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise InvalidConfig(message)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    g = common.add_argument_group("run options")
    g.add_argument("--config", metavar="FILE",
                   help="key = value file; command-line flags take precedence")
    g.add_argument("--out", default="out", help="output directory")
    g.add_argument("--seed", type=int, default=0,
                   help="recorded in the manifest; all runs are deterministic")

    fmt = argparse.ArgumentDefaultsHelpFormatter
    top = _Parser(prog="overshoot",
                  description="Overshoot experiments for adaptive finite elements "
                              "with discontinuous solutions.")
    sub = top.add_subparsers(dest="command", metavar="COMMAND")

    s = sub.add_parser("proj-sweep", parents=[common], formatter_class=fmt,
                       help="closed-form projections of a step over the cut position t")
    s.add_argument("--space", choices=sorted(stepproj._CLOSED), default="p1dg",
                   help="projection space of the closed form")
    s.add_argument("--t-steps", type=int, default=101, help="equispaced t values in [0, 1]")
    s.add_argument("--h", type=float, default=1.0, help="length of the cut element")

    s = sub.add_parser("proj-adapt", parents=[common], formatter_class=fmt,
                       help="refine/coarsen continuous P1 projection of a step on (-1, 1)")
    s.add_argument("--iters", type=int, default=20, help="remeshing steps (solves = iters + 1)")
    s.add_argument("--coarsening", choices=adapt.COARSENING_MODES, default="merge",
                   help="merge runs of marked elements or only sibling pairs")

    s = sub.add_parser("rd1d", parents=[common], formatter_class=fmt,
                       help="adaptive 1D reaction-diffusion with P1, P1-DG and P0 mixed")
    s.add_argument("--case", choices=sorted(fem1d.CASES), default="matched",
                   help="initial mesh and data")
    s.add_argument("--eps", type=float, default=1e-16, help="diffusion coefficient")
    s.add_argument("--mu", type=float, default=10.0, help="DG penalty")
    s.add_argument("--theta", type=float, default=0.8, help="maximum-marking fraction")
    s.add_argument("--iters", type=int, default=20, help="remeshing steps (solves = iters + 1)")
    s.add_argument("--load-rule", choices=fem1d.LOAD_RULES, default="split",
                   help="exact load integration, or 2-point Gauss per element")
    s.add_argument("--coarsening", choices=adapt.COARSENING_MODES, default="merge",
                   help="merge runs of marked elements or only sibling pairs")

    s = sub.add_parser("transport2d", parents=[common], formatter_class=fmt,
                       help="adaptive upwind DG transport benchmark")
    s.add_argument("--case", choices=["strip_pi3", "half_disk", "curved2"], default="strip_pi3",
                   help="benchmark problem")
    s.add_argument("--degree", type=int, choices=[0, 1], default=0, help="polynomial degree")
    s.add_argument("--iters", type=int, default=15, help="refinement steps (solves = iters + 1)")
    s.add_argument("--theta", type=float, default=0.8, help="maximum-marking fraction")

    s = sub.add_parser("plot", parents=[common], formatter_class=fmt,
                       help="render a CSV written by another command as SVG")
    s.add_argument("--csv", required=True, help="input CSV")
    s.add_argument("--kind", choices=PLOT_KINDS, required=True, help="which columns to draw")
    s.add_argument("--output", help="SVG path; None writes the CSV name with .svg into --out")
    return top


def _config_tokens(path) -> tuple[str | None, list[str]]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InvalidConfig(f"cannot read config file: {exc}") from exc
    command, tokens = None, []
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip().replace("_", "-"), value.strip()
        if not sep or not key:
            raise InvalidConfig(f"{path}:{n}: expected 'key = value'")
        if key == "command":
            command = value
        else:
            tokens += [f"--{key}", value]
    return command, tokens


def parse_config(argv) -> ExperimentConfig:
    """Flags plus optional config file -> :class:`ExperimentConfig`."""
    argv = list(argv)
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if known.config:
        command, tokens = _config_tokens(known.config)
        if argv and argv[0] in COMMANDS:
            argv = argv[:1] + tokens + argv[1:]
        elif command:
            argv = [command] + tokens + argv
        else:
            argv = tokens + argv
    ns = build_parser().parse_args(argv)
    if ns.command is None:
        raise InvalidConfig(f"missing command; choose from {', '.join(COMMANDS)}")
    params = {k: v for k, v in vars(ns).items()
              if k not in ("command", "out", "seed", "config")}
    return ExperimentConfig(ns.command, ns.out, ns.seed, params)


def _version() -> str:
    try:
        base = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        base = "0+unknown"
    try:
        desc = subprocess.run(["git", "describe", "--always", "--dirty"],
                              cwd=Path(__file__).parent, capture_output=True,
                              text=True, timeout=5)
    except (OSError, subprocess.SubprocessError):
        return base
    if desc.returncode != 0 or not desc.stdout.strip():
        return base
    return f"{base}+g{desc.stdout.strip()}"


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow(["" if v is None else (repr(float(v)) if isinstance(v, float) else v)
                        for v in r])


def _check_positive(name, value):
    if not value > 0:
        raise InvalidConfig(f"--{name} must be positive")


def _proj_sweep(cfg, out, say):
    q = cfg.params
    if q["t_steps"] < 2:
        raise InvalidConfig("--t-steps must be at least 2")
    _check_positive("h", q["h"])
    rows = stepproj.sweep(q["space"], q["t_steps"], q["h"])
    path = out / f"sweep_{q['space']}.csv"
    stepproj.write_sweep_csv(rows, path)
    best = max(rows, key=lambda r: r["os"])
    say(f"max_os={best['os']!r} at t={best['t']!r}")
    return [path]


def _proj_adapt(cfg, out, say):
    q = cfg.params
    if q["iters"] < 0:
        raise InvalidConfig("--iters must be non-negative")
    recs = stepproj.refine_coarsen_projection(max_iter=q["iters"] + 1,
                                              coarsening=q["coarsening"])
    files = [out / "proj_adapt_records.csv"]
    adapt.write_records_csv(recs, files[0])
    files.append(out / "proj_adapt_mesh.txt")
    mesh1d.write_mesh(recs[-1].mesh, files[-1])
    say(f"elements={recs[-1].mesh.n_elements}")
    say(f"overshoot={recs[-1].overshoot!r}")
    return files


def _rd1d(cfg, out, say):
    q = cfg.params
    if q["iters"] < 0:
        raise InvalidConfig("--iters must be non-negative")
    try:
        run_ = fem1d.run_case(q["case"], q["eps"], q["theta"], q["iters"], q["mu"],
                              q["load_rule"], q["coarsening"])
    except ValueError as exc:
        raise InvalidConfig(str(exc)) from exc
    stem = f"rd1d_{q['case']}"
    files = [out / f"{stem}_records.csv"]
    adapt.write_records_csv(run_.records, files[0])
    mesh = run_.mesh
    x = mesh.nodes
    u = run_.conforming.nodal_values()
    dg = run_.dg.coefficients.reshape(-1, 2)
    eta = run_.records[-1].eta
    rows = [(k, float(x[k]), float(x[k + 1]), float(u[k]), float(u[k + 1]),
             float(dg[k, 0]), float(dg[k, 1]), float(run_.mixed.coefficients[k]),
             float(eta[k])) for k in range(mesh.n_elements)]
    files.append(out / f"{stem}_final.csv")
    _write_rows(files[-1], ["element", "x_left", "x_right", "conforming_left",
                            "conforming_right", "dg_left", "dg_right", "mixed", "eta"], rows)
    files.append(out / f"{stem}_mesh.txt")
    mesh1d.write_mesh(mesh, files[-1])
    for name, v in run_.overshoots().items():
        say(f"overshoot_{name}={v!r}")
    say(f"conforming_max={float(u.max())!r}")
    say(f"conforming_min={float(u.min())!r}")
    say(f"dg_min={float(dg.min())!r}")
    say(f"elements={mesh.n_elements}")
    return files


def _transport2d(cfg, out, say):
    q = cfg.params
    if q["iters"] < 0:
        raise InvalidConfig("--iters must be non-negative")
    if not 0 < q["theta"] < 1:
        raise InvalidConfig("--theta must lie in (0, 1)")
    recs = transport2d.benchmark(q["case"], q["degree"], q["iters"], q["theta"])
    stem = f"transport2d_{q['case']}_k{q['degree']}"
    files = [out / f"{stem}_records.csv"]
    adapt.write_records_csv(recs, files[0])
    u, mesh = recs[-1].solution, recs[-1].mesh
    files.append(out / f"{stem}_projected.csv")
    transport2d.write_projected_csv(u, q["case"], files[-1])
    # one line per triangle: its vertices followed by its coefficients
    files.append(out / f"{stem}_solution.txt")
    V = mesh.vertices
    lines = []
    for t, c in zip(mesh.triangles, u.coefficients):
        xs = " ".join(f"{V[i, 0]!r} {V[i, 1]!r}" for i in t)
        lines.append(xs + " " + " ".join(repr(float(v)) for v in c))
    files[-1].write_text("\n".join(lines) + "\n")
    files.append(out / f"{stem}_mesh.txt")
    mesh2d.write_mesh2d(mesh, files[-1])
    say(f"max_overshoot={max(r.overshoot for r in recs)!r}")
    say(f"final_overshoot={recs[-1].overshoot!r}")
    say(f"dofs={recs[-1].dofs}")
    return files


# --------------------------------------------------------------------------
# SVG


def _read_columns(path, need):
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise InvalidConfig(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise SchemaMismatch(f"{path} is empty")
    head = rows[0]
    missing = [c for c in need if c not in head]
    if missing:
        raise SchemaMismatch(f"{path} lacks columns {missing}")
    if len(rows) < 2:
        raise SchemaMismatch(f"{path} has a header but no data")
    idx = [head.index(c) for c in need]
    try:
        data = np.array([[float(r[i]) for i in idx] for r in rows[1:]], dtype=float)
    except (ValueError, IndexError) as exc:
        raise SchemaMismatch(f"{path}: non-numeric or short row ({exc})") from exc
    return data[:, 0], data[:, 1]


def _ticks(lo, hi, n=5):
    if hi <= lo:
        lo, hi = lo - 0.5, hi + 0.5
    raw = (hi - lo) / n
    mag = 10.0 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw))
    start = math.ceil(lo / step - 1e-9) * step
    vals = np.arange(start, hi + 1e-9 * step, step)
    return lo, hi, [0.0 if abs(v) < 1e-12 * step else float(v) for v in vals]


_LABELS = {
    "os-vs-t": (("t", "os"), "t", "overshoot", "line"),
    "os-vs-iter": (("iter", "overshoot"), "iteration", "overshoot", "line"),
    "projected-solution": (("coord", "value"), "coordinate", "u_h", "scatter"),
}


def plot(csv_path, kind: str, svg_path=None) -> Path:
    """Render ``csv_path`` as a static SVG and return the SVG path."""
    if kind not in _LABELS:
        raise InvalidConfig(f"unknown plot kind {kind!r}")
    cols, xlabel, ylabel, style = _LABELS[kind]
    x, y = _read_columns(csv_path, cols)
    keep = np.isfinite(x) & np.isfinite(y)
    x, y = x[keep], y[keep]
    if x.size == 0:
        raise SchemaMismatch(f"{csv_path} has no finite ({cols[0]}, {cols[1]}) pairs")
    W, H, L, R, T, B = 640, 420, 70, 20, 20, 50
    x0, x1, xt = _ticks(float(x.min()), float(x.max()))
    y0, y1, yt = _ticks(float(y.min()), float(y.max()))

    def sx(v):
        return L + (v - x0) / (x1 - x0) * (W - L - R)

    def sy(v):
        return H - B - (v - y0) / (y1 - y0) * (H - T - B)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
           f'viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">',
           f'<rect width="{W}" height="{H}" fill="white"/>',
           f'<line x1="{L}" y1="{H - B}" x2="{W - R}" y2="{H - B}" stroke="black"/>',
           f'<line x1="{L}" y1="{T}" x2="{L}" y2="{H - B}" stroke="black"/>']
    for v in xt:
        px = sx(v)
        out.append(f'<line x1="{px:.2f}" y1="{H - B}" x2="{px:.2f}" y2="{H - B + 5}" stroke="black"/>')
        out.append(f'<text x="{px:.2f}" y="{H - B + 18}" text-anchor="middle">{v:.4g}</text>')
    for v in yt:
        py = sy(v)
        out.append(f'<line x1="{L - 5}" y1="{py:.2f}" x2="{L}" y2="{py:.2f}" stroke="black"/>')
        out.append(f'<text x="{L - 8}" y="{py + 4:.2f}" text-anchor="end">{v:.4g}</text>')
    out.append(f'<text x="{(L + W - R) / 2}" y="{H - 10}" text-anchor="middle">{xlabel}</text>')
    out.append(f'<text x="15" y="{(T + H - B) / 2}" text-anchor="middle" '
               f'transform="rotate(-90 15 {(T + H - B) / 2})">{ylabel}</text>')
    if style == "line":
        pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(x, y))
        out.append(f'<polyline points="{pts}" fill="none" stroke="steelblue" stroke-width="1.5"/>')
    else:
        out += [f'<circle cx="{sx(a):.2f}" cy="{sy(b):.2f}" r="1.5" fill="steelblue"/>'
                for a, b in zip(x, y)]
    out.append("</svg>")
    svg_path = Path(svg_path) if svg_path else Path(csv_path).with_suffix(".svg")
    svg_path.write_text("\n".join(out) + "\n")
    return svg_path


def _plot(cfg, out, say):
    q = cfg.params
    target = q["output"] or (out / Path(q["csv"]).with_suffix(".svg").name)
    path = plot(q["csv"], q["kind"], target)
    say(f"svg={path}")
    return [path]


_RUNNERS = {
    "proj-sweep": _proj_sweep,
    "proj-adapt": _proj_adapt,
    "rd1d": _rd1d,
    "transport2d": _transport2d,
    "plot": _plot,
}


def run(cfg: ExperimentConfig, stream=None) -> int:
    """Execute one command, write its files and the manifest, return 0.

    Raises :class:`InvalidConfig` or :class:`ComputeFailure`; :func:`main`
    turns them into exit statuses 2 and 1.
    """
    stream = stream or sys.stdout
    if cfg.command not in _RUNNERS:
        raise InvalidConfig(f"unknown command {cfg.command!r}")
    out = Path(cfg.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise InvalidConfig(f"cannot create output directory: {exc}") from exc
    np.random.seed(cfg.seed)
    lines = []

    def say(text):
        lines.append(text)
        print(text, file=stream)

    start = time.perf_counter()
    try:
        files = _RUNNERS[cfg.command](cfg, out, say)
    except (SingularMatrix, NoConvergence, transport2d.AmbiguousUpwind,
            mesh2d.ClosureOverflow) as exc:
        raise ComputeFailure(f"{type(exc).__name__}: {exc}") from exc
    wall = time.perf_counter() - start
    manifest = {
        "config": asdict(cfg),
        "version": _version(),
        "wall_time_s": wall,
        "outputs": [str(f) for f in files],
        "summary": lines,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, default=str) + "\n")
    return 0


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        return run(parse_config(argv))
    except InvalidConfig as exc:
        print(f"overshoot: error: {exc}", file=sys.stderr)
        return 2
    except ComputeFailure as exc:
        print(f"overshoot: computation failed: {exc}", file=sys.stderr)
        return 1

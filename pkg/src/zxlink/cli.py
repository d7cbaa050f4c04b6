"""``zx`` command line: frames, precoders, bound curves, gamma tables, Monte Carlo, plots.

Every subcommand accepts ``--config FILE``, a flat ``key = value`` document
with ``#`` comments. Flags override file values and unknown keys are
rejected. Exit codes: 0 ok, 2 bad configuration or input, 3 numerical
failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import math
import sys
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import __version__
from .config import NoiseSplit, SystemConfig
from .errors import (
    BitLengthError,
    ConfigError,
    DimensionError,
    InvalidSymbolError,
    NonPsdError,
    QpError,
    RankDeficientError,
    TargetUnreachableError,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4

CSV_HEADERS = {
    "bound": ("gamma", "ser_ub", "ber_ub", "err_est"),
    "gamma-table": ("ser_target", "gamma"),
    "mc": ("gamma", "ser", "ber", "symbols", "ci95_ser"),
}

# Keys accepted in a config file, with their types and defaults. The system
# keys mirror SystemConfig; n_symbols = 0 means "N=1 for M_Rx=3, N=2 for M_Rx=2"
# and m_tx = 0 means m_tx = m_rx.
_SYSTEM_DEFAULTS = {f.name: f.default for f in dataclasses.fields(SystemConfig)}
_SYSTEM_DEFAULTS["n_symbols"] = 0
_SYSTEM_DEFAULTS["m_tx"] = 0  # 0 = same as m_rx
_SYSTEM_DEFAULTS["noise_split"] = NoiseSplit.FULL.value
CONFIG_SCHEMA: dict[str, tuple[type, object]] = {
    name: (bool if isinstance(v, bool) else type(v), v) for name, v in _SYSTEM_DEFAULTS.items()
}
CONFIG_SCHEMA.update(
    {
        "seed": (int, 0),
        "blocks": (int, 10000),
        "channel": (str, "identity"),
        "known_pilot": (bool, False),
        "table": (str, "derived"),
        "eps": (float, 1e-5),
        "rel_eps": (float, 1e-3),
        "grid_step": (float, 0.05),
        "threads": (int, 0),
    }
)
TABLE_SOURCES = ("derived", "paper", "printed", "as-plotted")
# keys that never change results
_NON_SEMANTIC = {"threads"}

# flag dest -> config key
_FLAG_KEYS = {
    "mrx": "m_rx",
    "mtx": "m_tx",
    "n": "n_symbols",
    "users": "n_users",
    "antennas": "n_tx_antennas",
    "rolloff_tx": "rolloff_tx",
    "rolloff_rx": "rolloff_rx",
    "sigma2": "noise_variance",
    "beta": "beamforming_gain",
    "noise_split": "noise_split",
    "refine": "refine",
    "seed": "seed",
    "blocks": "blocks",
    "channel": "channel",
    "known_pilot": "known_pilot",
    "table": "table",
    "eps": "eps",
    "rel_eps": "rel_eps",
    "grid_step": "grid_step",
    "threads": "threads",
}


# ---------------------------------------------------------------- parsing


def parse_range(spec: str) -> list[float]:
    """``"a:step:b"`` -> inclusive grid a, a+step, ..., b.

    A single number is a one-point grid. The endpoint is kept when it lies
    within step*1e-9 of a grid point.
    """
    parts = str(spec).strip().split(":")
    try:
        nums = [float(p) for p in parts]
    except ValueError:
        raise ConfigError(f"malformed range {spec!r}, expected a:step:b") from None
    if len(nums) == 1:
        return nums
    if len(nums) != 3:
        raise ConfigError(f"malformed range {spec!r}, expected a:step:b")
    a, step, b = nums
    if not all(math.isfinite(v) for v in nums):
        raise ConfigError(f"range {spec!r} has non-finite entries")
    if not step > 0:
        raise ConfigError(f"range {spec!r} needs a positive step")
    if a > b:
        raise ConfigError(f"range {spec!r} has start above end")
    count = int(math.floor((b - a) / step + 1e-9)) + 1
    # round away binary noise so 0.1 + 5*0.5 prints as 2.6
    return [float(round(a + k * step, 12)) for k in range(count)]


def parse_list(text: str, kind=float) -> list:
    try:
        return [kind(t) for t in str(text).split(",") if t.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse list {text!r}") from None


def _coerce(key: str, raw):
    kind, _ = CONFIG_SCHEMA[key]
    if isinstance(raw, kind) and not (kind is int and isinstance(raw, bool)):
        return raw
    text = str(raw).strip()
    try:
        if kind is bool:
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
        return text
    except ValueError:
        raise ConfigError(f"{key}: cannot read {raw!r} as {kind.__name__}") from None


def read_config_file(path: str) -> dict:
    """Parse a flat ``key = value`` file. Blank lines and ``#`` comments are skipped."""
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise OSError(f"cannot read config {path}: {exc.strerror or exc}") from exc
    out = {}
    for num, line in enumerate(lines, 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"{path}:{num}: expected key = value")
        key, value = (s.strip() for s in body.split("=", 1))
        if key not in CONFIG_SCHEMA:
            raise ConfigError(f"{path}:{num}: unknown key {key!r}")
        if key in out:
            raise ConfigError(f"{path}:{num}: duplicate key {key!r}")
        out[key] = _coerce(key, value)
    return out


@dataclass(frozen=True)
class RunConfig:
    """Resolved settings for one invocation: defaults < config file < flags."""

    values: dict

    @classmethod
    def resolve(cls, args: argparse.Namespace) -> "RunConfig":
        values = {k: v for k, (_, v) in CONFIG_SCHEMA.items()}
        if getattr(args, "config", None):
            values.update(read_config_file(args.config))
        for dest, key in _FLAG_KEYS.items():
            flag = getattr(args, dest, None)
            if flag is not None:
                values[key] = _coerce(key, flag)
        if values["n_symbols"] == 0:
            values["n_symbols"] = {3: 1, 2: 2}.get(values["m_rx"], 1)
        if values["m_tx"] == 0:
            values["m_tx"] = values["m_rx"]
        cfg = cls(values)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        v = self.values
        if v["blocks"] < 1:
            raise ConfigError("blocks must be positive")
        if v["threads"] < 0:
            raise ConfigError("threads must be nonnegative (0 = automatic)")
        if not 0 <= v["seed"] < 2**64:
            raise ConfigError("seed must fit in 64 bits")
        if v["table"] not in TABLE_SOURCES:
            raise ConfigError(f"table must be one of {', '.join(TABLE_SOURCES)}, got {v['table']!r}")
        if v["channel"] not in ("identity", "iid-gaussian"):
            raise ConfigError(f"channel must be identity or iid-gaussian, got {v['channel']!r}")
        for key in ("eps", "grid_step"):
            if not v[key] > 0:
                raise ConfigError(f"{key} must be positive")
        if not v["rel_eps"] >= 0:
            raise ConfigError("rel_eps must be nonnegative")
        self.system()  # SystemConfig checks its own ranges

    def system(self) -> SystemConfig:
        return SystemConfig(**{k: self.values[k] for k in _SYSTEM_DEFAULTS})

    def __getitem__(self, key: str):
        return self.values[key]

    def config_hash(self, extra: dict | None = None) -> str:
        """SHA-256 prefix over every result-affecting key plus command inputs."""
        doc = {k: v for k, v in self.values.items() if k not in _NON_SEMANTIC}
        if extra:
            doc.update(extra)
        blob = json.dumps(doc, sort_keys=True, default=repr, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


# ---------------------------------------------------------------- output


def format_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def format_csv(header: Sequence[str], rows: Iterable[Sequence], meta: dict | None = None) -> str:
    lines = [",".join(header)]
    for row in rows:
        if len(row) != len(header):
            raise ValueError(f"row has {len(row)} fields, header has {len(header)}")
        lines.append(",".join(format_value(v) for v in row))
    if meta is not None:
        lines.append("# meta: " + " ".join(f"{k}={meta[k]}" for k in meta))
    return "\n".join(lines) + "\n"


def emit_csv(header: Sequence[str], rows: Iterable[Sequence], path: str | None, meta: dict | None = None) -> None:
    """Write CSV with LF endings to ``path`` (stdout when None or ``-``)."""
    text = format_csv(header, rows, meta)
    if path in (None, "-"):
        sys.stdout.write(text)
        return
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def read_csv(path: str) -> tuple[list[str], list[list[float]], dict]:
    """Inverse of :func:`emit_csv`: (header, numeric rows, meta)."""
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc.strerror or exc}") from exc
    if not lines:
        raise ConfigError(f"{path} is empty")
    header = lines[0].split(",")
    rows, meta = [], {}
    for line in lines[1:]:
        if line.startswith("# meta:"):
            for item in line[len("# meta:") :].split():
                key, _, value = item.partition("=")
                meta[key] = value
        elif line.strip() and not line.startswith("#"):
            try:
                rows.append([float(t) for t in line.split(",")])
            except ValueError:
                raise ConfigError(f"{path}: non-numeric row {line!r}") from None
    return header, rows, meta


# ---------------------------------------------------------------- plotting


@dataclass(frozen=True)
class SweepSeries:
    label: str
    points: tuple[tuple[float, float], ...]

    def __post_init__(self) -> None:
        pts = tuple((float(x), float(y)) for x, y in self.points)
        if not pts:
            raise ValueError(f"series {self.label!r} is empty")
        xs = [p[0] for p in pts]
        if any(b <= a for a, b in zip(xs, xs[1:])):
            raise ValueError(f"series {self.label!r}: x must be strictly increasing")
        object.__setattr__(self, "points", pts)


_COLORS = ("#1f5fbf", "#c0392b", "#2e8b57", "#8e44ad", "#d68910", "#34495e")
_W, _H = 640, 440
_LEFT, _RIGHT, _TOP, _BOTTOM = 70, 20, 20, 55


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _nice_ticks(lo: float, hi: float, count: int = 6) -> list[float]:
    raw = (hi - lo) / max(count, 1)
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw), default=10 * mag)
    first = math.ceil(lo / step - 1e-9) * step
    ticks = []
    t = first
    while t <= hi + step * 1e-9:
        ticks.append(round(t, 12))
        t += step
    return ticks


def render_svg(
    series: Sequence[SweepSeries],
    log_y: bool = True,
    xlabel: str = "gamma",
    ylabel: str = "SER",
    xlim: tuple[float, float] | None = None,
    ylim: tuple[float, float] | None = None,
) -> str:
    """Standalone SVG text with one polyline and markers per series."""
    if not series:
        raise ValueError("nothing to plot")
    if log_y:
        for s in series:
            if any(y <= 0 for _, y in s.points):
                raise ValueError(f"series {s.label!r} has nonpositive y on a log axis")
    xs = [x for s in series for x, _ in s.points]
    ys = [y for s in series for _, y in s.points]
    x0, x1 = xlim if xlim else (min(xs), max(xs))
    if x1 <= x0:
        x1 = x0 + 1.0
    if ylim:
        y0, y1 = ylim
    elif log_y:
        y0 = 10 ** math.floor(math.log10(min(ys)))
        y1 = 10 ** math.ceil(math.log10(max(ys)))
    else:
        y0, y1 = min(ys), max(ys)
    if y1 <= y0:
        y1 = y0 * 10 if log_y else y0 + 1.0
    if log_y and y0 <= 0:
        raise ValueError("log axis needs a positive lower limit")

    pw, ph = _W - _LEFT - _RIGHT, _H - _TOP - _BOTTOM

    def px(x):
        return _LEFT + (x - x0) / (x1 - x0) * pw

    def py(y):
        if log_y:
            frac = (math.log10(y) - math.log10(y0)) / (math.log10(y1) - math.log10(y0))
        else:
            frac = (y - y0) / (y1 - y0)
        return _TOP + (1.0 - frac) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" viewBox="0 0 {_W} {_H}">',
        f'<rect x="0" y="0" width="{_W}" height="{_H}" fill="white"/>',
        f'<defs><clipPath id="plot"><rect x="{_LEFT}" y="{_TOP}" width="{pw}" height="{ph}"/></clipPath></defs>',
    ]
    # grid
    for t in _nice_ticks(x0, x1):
        if x0 - 1e-12 <= t <= x1 + 1e-12:
            X = _fmt(px(t))
            out.append(f'<line x1="{X}" y1="{_TOP}" x2="{X}" y2="{_TOP + ph}" stroke="#dddddd"/>')
            out.append(
                f'<text x="{X}" y="{_TOP + ph + 18}" font-size="12" text-anchor="middle">{t:g}</text>'
            )
    if log_y:
        for e in range(math.floor(math.log10(y0) + 1e-9), math.ceil(math.log10(y1) - 1e-9) + 1):
            y = 10.0**e
            if y0 * (1 - 1e-9) <= y <= y1 * (1 + 1e-9):
                Y = _fmt(py(y))
                out.append(f'<line x1="{_LEFT}" y1="{Y}" x2="{_LEFT + pw}" y2="{Y}" stroke="#dddddd"/>')
                out.append(
                    f'<text x="{_LEFT - 6}" y="{Y}" font-size="12" text-anchor="end" dominant-baseline="middle">1e{e}</text>'
                )
    else:
        for t in _nice_ticks(y0, y1):
            Y = _fmt(py(t))
            out.append(f'<line x1="{_LEFT}" y1="{Y}" x2="{_LEFT + pw}" y2="{Y}" stroke="#dddddd"/>')
            out.append(
                f'<text x="{_LEFT - 6}" y="{Y}" font-size="12" text-anchor="end" dominant-baseline="middle">{t:g}</text>'
            )
    out.append(f'<rect x="{_LEFT}" y="{_TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>')
    out.append(f'<text x="{_LEFT + pw / 2:.2f}" y="{_H - 12}" font-size="14" text-anchor="middle">{_esc(xlabel)}</text>')
    out.append(
        f'<text x="16" y="{_TOP + ph / 2:.2f}" font-size="14" text-anchor="middle" '
        f'transform="rotate(-90 16 {_TOP + ph / 2:.2f})">{_esc(ylabel)}</text>'
    )
    # data
    for i, s in enumerate(series):
        color = _COLORS[i % len(_COLORS)]
        pts = [(_fmt(px(x)), _fmt(py(y))) for x, y in s.points]
        if len(pts) > 1:
            path = " ".join(f"{a},{b}" for a, b in pts)
            out.append(
                f'<polyline points="{path}" fill="none" stroke="{color}" stroke-width="1.5" clip-path="url(#plot)"/>'
            )
        for a, b in pts:
            out.append(f'<circle cx="{a}" cy="{b}" r="2.5" fill="{color}" clip-path="url(#plot)"/>')
    # legend
    lx, ly = _LEFT + pw - 150, _TOP + 14
    for i, s in enumerate(series):
        color = _COLORS[i % len(_COLORS)]
        y = ly + 18 * i
        out.append(f'<line x1="{lx}" y1="{y}" x2="{lx + 24}" y2="{y}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{lx + 30}" y="{y}" font-size="12" dominant-baseline="middle">{_esc(s.label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _esc(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;").replace('"', "&quot;")


def plot_svg(series: Sequence[SweepSeries], path: str, **axes) -> None:
    text = render_svg(series, **axes)
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


# ---------------------------------------------------------------- commands


def _meta(cfg: RunConfig, extra: dict | None = None, rng: str | None = None) -> dict:
    meta = {"seed": cfg["seed"], "config_hash": cfg.config_hash(extra), "version": __version__}
    if rng:
        meta["rng"] = rng
    return meta


def cmd_map(args, cfg: RunConfig) -> int:
    from .zx_modem import ZxAlphabet, forward_map, parse_symbol

    alphabet = ZxAlphabet(cfg["m_rx"])
    symbols = [parse_symbol(t) for t in args.symbols.split(",") if t.strip()]
    frame = forward_map(symbols, int(args.pilot), alphabet)
    print(",".join(str(int(v)) for v in frame.full))
    return EXIT_OK


def cmd_precode(args, cfg: RunConfig) -> int:
    from .precoding import precode_user
    from .signal_chain import build_operators
    from .zx_modem import ZxAlphabet, forward_map, parse_symbol

    system = cfg.system()
    alphabet = ZxAlphabet(system.m_rx)
    sym_i = [parse_symbol(t) for t in args.symbols.split(",") if t.strip()]
    sym_q = [parse_symbol(t) for t in (args.symbols_q or args.symbols).split(",") if t.strip()]
    for syms in (sym_i, sym_q):
        if len(syms) != system.n_symbols:
            raise DimensionError(f"expected {system.n_symbols} symbols per component, got {len(syms)}")
    pilot = int(args.pilot)
    frame_i = forward_map(sym_i, pilot, alphabet).full
    frame_q = forward_map(sym_q, pilot, alphabet).full
    ops = build_operators(system)
    res = precode_user(frame_i, frame_q, ops, float(args.gamma), system.beamforming_gain)
    doc = {
        "p_x": {"re": res.p_x_i.tolist(), "im": res.p_x_q.tolist()},
        "min_margin": res.min_margin,
        "objective": res.objective,
        "frame_i": frame_i.tolist(),
        "frame_q": frame_q.tolist(),
    }
    text = json.dumps(doc, indent=2) + "\n"
    if args.out in (None, "-"):
        sys.stdout.write(text)
    else:
        try:
            with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
        except OSError as exc:
            raise OSError(f"cannot write {args.out}: {exc.strerror or exc}") from exc
    return EXIT_OK


def cmd_bound(args, cfg: RunConfig) -> int:
    from .ser_bound import bound_curve, region_table
    from .signal_chain import build_operators

    system = cfg.system()
    gammas = parse_range(args.gamma)
    ops = build_operators(system)
    table = region_table(system.m_rx, cfg["table"])
    results = bound_curve(gammas, ops, table=table, eps=cfg["eps"], rel_eps=cfg["rel_eps"], seed=cfg["seed"])
    rows = [(r.gamma, r.ser_ub, r.ber_ub, r.err_est) for r in results]
    emit_csv(CSV_HEADERS["bound"], rows, args.out, _meta(cfg, {"gamma": gammas}, rng="lattice-shifts:numpy-PCG64(seed)"))
    return EXIT_OK


def cmd_gamma_table(args, cfg: RunConfig) -> int:
    from .ser_bound import gamma_for_target, region_table
    from .signal_chain import build_operators

    system = cfg.system()
    targets = parse_list(args.targets)
    if not targets:
        raise ConfigError("no targets given")
    ops = build_operators(system)
    table = region_table(system.m_rx, cfg["table"])
    rows = [(t, gamma_for_target(t, ops, table=table, grid_step=cfg["grid_step"], seed=cfg["seed"])) for t in targets]
    emit_csv(CSV_HEADERS["gamma-table"], rows, args.out, _meta(cfg, {"targets": targets}))
    return EXIT_OK


def cmd_mc(args, cfg: RunConfig) -> int:
    from .montecarlo import RNG_NAME, McConfig, default_threads, run_sweep

    system = cfg.system()
    gammas = parse_range(args.gamma)
    template = McConfig(
        system=system,
        gamma=gammas[0],
        n_blocks=cfg["blocks"],
        seed=cfg["seed"],
        channel=cfg["channel"],
        known_pilot=cfg["known_pilot"],
    )
    threads = cfg["threads"] or default_threads()

    def progress(done, total, res):
        if args.progress:
            print(f"[{done}/{total}] gamma={res.gamma:g} ser={res.ser:.6g}", file=sys.stderr, flush=True)

    results = run_sweep(template, gammas, threads=threads, progress=progress)
    rows = [(r.gamma, r.ser, r.ber, r.symbols, r.ci95_ser) for r in results]
    emit_csv(CSV_HEADERS["mc"], rows, args.out, _meta(cfg, {"gamma": gammas}, rng=RNG_NAME))
    return EXIT_OK


def _load_series(spec: str, log_y: bool) -> SweepSeries:
    """``path[:column[:label]]``; x is the first column, y defaults to the second."""
    path, _, rest = spec.partition(":")
    column, _, label = rest.partition(":")
    header, rows, _ = read_csv(path)
    col = column or header[1]
    if col not in header:
        raise ConfigError(f"{path} has no column {col!r} (columns: {','.join(header)})")
    j = header.index(col)
    points = [(r[0], r[j]) for r in rows]
    dropped = [p for p in points if log_y and p[1] <= 0]
    if dropped:
        print(f"{path}: {len(dropped)} zero points left off the log axis", file=sys.stderr)
    points = [p for p in points if not (log_y and p[1] <= 0)]
    return SweepSeries(label or f"{path}:{col}", tuple(points))


def cmd_plot(args, cfg: RunConfig) -> int:
    log_y = not args.linear_y
    series = [_load_series(s, log_y) for s in args.series]
    xlim = tuple(parse_list(args.xlim)) if args.xlim else None
    ylim = tuple(parse_list(args.ylim)) if args.ylim else None
    for lim, name in ((xlim, "xlim"), (ylim, "ylim")):
        if lim is not None and len(lim) != 2:
            raise ConfigError(f"{name} needs two values")
    plot_svg(series, args.out, log_y=log_y, xlabel=args.xlabel, ylabel=args.ylabel, xlim=xlim, ylim=ylim)
    return EXIT_OK


def cmd_ops(args, cfg: RunConfig) -> int:
    from .signal_chain import build_operators

    ops = build_operators(cfg.system())
    mats = {
        "g_tx": ops.g_tx_mat,
        "g_rx": ops.g_rx_mat,
        "u": ops.u_mat,
        "v": ops.v_mat,
        "w": ops.w_mat,
        "vu": ops.vu,
        "sigma": ops.noise_cov,
    }
    mat = np.atleast_2d(mats[args.matrix])
    header = [f"c{j}" for j in range(mat.shape[1])]
    emit_csv(header, mat.tolist(), args.out, _meta(cfg, {"matrix": args.matrix}))
    return EXIT_OK


# ---------------------------------------------------------------- argparse


def _add_system_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("system")
    g.add_argument("--config", help="flat key = value settings file")
    g.add_argument("--mrx", type=int, help="receive oversampling M_Rx (default 3)")
    g.add_argument("--mtx", type=int, help="transmit factor M_Tx (default M_Rx)")
    g.add_argument("--n", type=int, help="symbols per block (default 1 for M_Rx=3, 2 for M_Rx=2)")
    g.add_argument("--users", type=int)
    g.add_argument("--antennas", type=int)
    g.add_argument("--rolloff-tx", type=float)
    g.add_argument("--rolloff-rx", type=float)
    g.add_argument("--sigma2", type=float, help="noise variance sigma_n^2 (default 1)")
    g.add_argument("--beta", type=float, help="beamforming gain in the QOS constraints")
    g.add_argument("--noise-split", choices=[s.value for s in NoiseSplit])
    g.add_argument("--refine", type=int, help="grid refinement for v(t)")
    g.add_argument("--seed", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="zx", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("map", help="print the +-1 frame (pilot first) for a symbol list")
    _add_system_flags(p)
    p.add_argument("--symbols", required=True, help="comma list such as b4,b2,b3,b1")
    p.add_argument("--pilot", type=int, choices=(1, -1), default=1)
    p.set_defaults(func=cmd_map)

    p = sub.add_parser("precode", help="solve the QOS precoder for one block, print JSON")
    _add_system_flags(p)
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--symbols", required=True, help="in-phase symbols")
    p.add_argument("--symbols-q", help="quadrature symbols (default: same as --symbols)")
    p.add_argument("--pilot", type=int, choices=(1, -1), default=1)
    p.add_argument("--out")
    p.set_defaults(func=cmd_precode)

    p = sub.add_parser("bound", help="SER/BER upper bound over a gamma grid")
    _add_system_flags(p)
    p.add_argument("--gamma", required=True, help="a:step:b or a single value")
    p.add_argument("--table", choices=TABLE_SOURCES)
    p.add_argument("--eps", type=float, help="absolute integration tolerance")
    p.add_argument("--rel-eps", type=float, help="relative integration tolerance")
    p.add_argument("--out")
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("gamma-table", help="smallest grid gamma reaching each SER target")
    _add_system_flags(p)
    p.add_argument("--targets", required=True, help="comma list, e.g. 1e-1,1e-2")
    p.add_argument("--table", choices=TABLE_SOURCES)
    p.add_argument("--grid-step", type=float)
    p.add_argument("--out")
    p.set_defaults(func=cmd_gamma_table)

    p = sub.add_parser("mc", help="Monte Carlo SER/BER over a gamma grid")
    _add_system_flags(p)
    p.add_argument("--gamma", required=True, help="a:step:b or a single value")
    p.add_argument("--blocks", type=int, help="blocks per gamma point")
    p.add_argument("--channel", choices=("identity", "iid-gaussian"))
    p.add_argument("--known-pilot", action="store_const", const=True, default=None,
                   help="replace the received pilot sample by the transmitted one")
    p.add_argument("--threads", type=int, help="worker cap (default ZX_THREADS or all cores)")
    p.add_argument("--progress", action="store_true", help="print one line per gamma to stderr")
    p.add_argument("--out")
    p.set_defaults(func=cmd_mc)

    p = sub.add_parser("plot", help="render CSV columns to a deterministic SVG")
    _add_system_flags(p)
    p.add_argument("series", nargs="+", help="path[:column[:label]]; x is the first column")
    p.add_argument("--out", required=True)
    p.add_argument("--linear-y", action="store_true")
    p.add_argument("--xlim", help="x0,x1")
    p.add_argument("--ylim", help="y0,y1")
    p.add_argument("--xlabel", default="gamma")
    p.add_argument("--ylabel", default="SER")
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("ops", help="export a signal-chain matrix as CSV")
    _add_system_flags(p)
    p.add_argument("--matrix", required=True, choices=("g_tx", "g_rx", "u", "v", "w", "vu", "sigma"))
    p.add_argument("--out")
    p.set_defaults(func=cmd_ops)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = RunConfig.resolve(args)
        return args.func(args, cfg)
    except (QpError, NonPsdError, RankDeficientError, TargetUnreachableError, np.linalg.LinAlgError) as exc:
        # checked first: some numerical errors also derive from ValueError
        print(f"zx: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigError, InvalidSymbolError, BitLengthError, DimensionError, ValueError) as exc:
        print(f"zx: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"zx: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())

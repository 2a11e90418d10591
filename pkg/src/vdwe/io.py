"""Output artifacts: series CSV, binary snapshots, summary text and plot data.

``series.csv`` holds one row per output time with every number written to
17 significant digits, so re-reading it reproduces the floats bit for bit.
Snapshots are a 64-byte header followed by little-endian float64 arrays,
row-major, one per component in the order ``pi, w_1..w_d, s``.
"""

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import serialize_config
from .diagnostics import SobolevSeries
from .solver import FieldSet

MAGIC = b"VDWE"
SNAPSHOT_VERSION = 1
_HEADER = struct.Struct("<4sIIIIdI")
HEADER_SIZE = 64


@dataclass
class RunRecord:
    """Config echo, series, event log and summary of one experiment."""

    config: object
    series: SobolevSeries = None
    events: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)
    plots: dict = field(default_factory=dict)
    snapshots: list = field(default_factory=list)
    report: object = None
    version: str = __version__

    @property
    def config_hash(self):
        return self.config.digest()

    @property
    def passed(self):
        return all(self.checks.values())


def _fmt(x):
    return format(float(x), ".17g")


def series_header(series):
    m, d = series.m, series.d
    cols = ["t"] + [f"Y{k}" for k in range(m + 1)] + ["Z", "zeta", "min_pi", "max_rho", "mass"]
    cols += [f"momentum_{ax}" for ax in "xyz"[:d]] + ["energy"]
    cols += [f"N{k}" for k in range(m + 1)] + ["U_inf", "DU_inf", "D2U_inf", "max_pi"]
    return cols


def write_series_csv(series, path):
    path = Path(path)
    n = len(series)
    Z = series.Z if series.Z is not None else np.full(n, np.nan)
    zeta = series.zeta if series.zeta is not None else np.full(n, np.nan)
    Y, N, mom, sup = series.Y_array(), series.N_array(), series.momentum_array(), series.sup_array()
    lines = [",".join(series_header(series))]
    for i in range(n):
        row = [series.times[i], *Y[i], Z[i], zeta[i], series.min_pi[i], series.max_rho[i], series.mass[i]]
        row += [*mom[i], series.energy[i], *N[i], *sup[i], series.max_pi[i]]
        lines.append(",".join(_fmt(v) for v in row))
    try:
        path.write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def read_series_csv(path):
    """Inverse of :func:`write_series_csv`."""
    path = Path(path)
    rows = path.read_text().strip().splitlines()
    header = rows[0].split(",")
    data = np.array([[float(v) for v in r.split(",")] for r in rows[1:]]).reshape(-1, len(header))
    col = {name: data[:, i] for i, name in enumerate(header)}
    m = sum(1 for h in header if h.startswith("Y"))
    d = sum(1 for h in header if h.startswith("momentum_"))
    series = SobolevSeries(m=m - 1, d=d)
    for i in range(data.shape[0]):
        series.append(
            t=col["t"][i],
            Y=[col[f"Y{k}"][i] for k in range(m)],
            N=[col[f"N{k}"][i] for k in range(m)],
            min_pi=col["min_pi"][i],
            max_rho=col["max_rho"][i],
            mass=col["mass"][i],
            momentum=[col[f"momentum_{ax}"][i] for ax in "xyz"[:d]],
            energy=col["energy"][i],
            sup=[col["U_inf"][i], col["DU_inf"][i], col["D2U_inf"][i]],
            max_pi=col["max_pi"][i],
        )
    series.Z = col["Z"]
    series.zeta = col["zeta"]
    return series


def write_snapshot(fields, path):
    d = fields.w.shape[0]
    shape = fields.pi.shape
    comps = [fields.pi] + list(fields.w) + [fields.s]
    dims = list(shape) + [0] * (2 - len(shape))
    head = _HEADER.pack(MAGIC, SNAPSHOT_VERSION, d, dims[0], dims[1], float(fields.t), len(comps))
    head = head.ljust(HEADER_SIZE, b"\0")
    body = b"".join(np.ascontiguousarray(c, dtype="<f8").tobytes(order="C") for c in comps)
    try:
        Path(path).write_bytes(head + body)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def read_snapshot_header(path):
    raw = Path(path).read_bytes()[:HEADER_SIZE]
    magic, version, d, n0, n1, t, ncomp = _HEADER.unpack(raw[: _HEADER.size])
    if magic != MAGIC:
        raise ValueError(f"{path}: not a snapshot file (magic {magic!r})")
    shape = (n0,) if d == 1 else (n0, n1)
    return {"version": version, "d": d, "shape": shape, "t": t, "ncomp": ncomp}


def read_snapshot(path):
    """Return the :class:`FieldSet` stored by :func:`write_snapshot`."""
    head = read_snapshot_header(path)
    raw = Path(path).read_bytes()[HEADER_SIZE:]
    data = np.frombuffer(raw, dtype="<f8").reshape((head["ncomp"],) + head["shape"])
    d = head["d"]
    return FieldSet(pi=data[0].copy(), w=data[1:1 + d].copy(), s=data[1 + d].copy(), t=head["t"])


def _plot_file(path, x, y, header):
    arr = np.column_stack([np.asarray(x, dtype=float), np.asarray(y, dtype=float)])
    np.savetxt(path, arr, fmt="%.17g", header=header)


def write_summary(record, path):
    lines = [
        f"vdwe {record.version}",
        f"config hash {record.config_hash}",
        "",
        "checks:",
    ]
    lines += [f"  {'PASS' if ok else 'FAIL'}  {name}" for name, ok in record.checks.items()]
    lines += ["", "summary:"]
    lines += [f"  {k}: {v}" for k, v in record.summary.items()]
    if record.events:
        lines += ["", "events:"]
        lines += [f"  t={t if t is None else format(t, '.6g')}  {kind}: {msg}" for t, kind, msg in record.events]
    Path(path).write_text("\n".join(lines) + "\n")


def write_outputs(record, out_dir, snapshots=()):
    """Write ``config.txt``, ``series.csv``, ``summary.txt``, ``plotdata/`` and snapshots."""
    out = Path(out_dir)
    try:
        (out / "plotdata").mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    (out / "config.txt").write_text(serialize_config(record.config))
    if record.series is not None and len(record.series):
        write_series_csv(record.series, out / "series.csv")
        s = record.series
        Y = s.Y_array()
        for k in range(s.m + 1):
            _plot_file(out / "plotdata" / f"Y{k}.txt", s.t, Y[:, k], f"t Y{k}")
        _plot_file(out / "plotdata" / "min_pi.txt", s.t, s.min_pi, "t min_pi")
        _plot_file(out / "plotdata" / "mass.txt", s.t, s.mass, "t mass")
        if s.zeta is not None:
            _plot_file(out / "plotdata" / "zeta.txt", s.t, s.zeta, "t zeta")
    for name, (x, y, header) in record.plots.items():
        _plot_file(out / "plotdata" / f"{name}.txt", x, y, header)
    for i, snap in enumerate(snapshots):
        write_snapshot(snap, out / f"snapshot_{i:04d}.bin")
    write_summary(record, out / "summary.txt")
    return out

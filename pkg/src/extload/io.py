"""Ingestion, run configuration and result files.

Result files are comma-separated text. Metadata lines come first, each
``# key: value``; then one header row and the numeric rows. Floats are
written with 17 significant digits so they round-trip exactly.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import math
import os
import tempfile
from dataclasses import dataclass, field
from datetime import datetime

import numpy as np

from .mle import RegressionData

try:
    from importlib.metadata import version as _pkg_version
    VERSION = _pkg_version("artifact")
except Exception:  # pragma: no cover - running from a source tree
    VERSION = "0.1.0"


class IngestError(ValueError):
    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


# --------------------------------------------------------------------------
# raw aggregation
# --------------------------------------------------------------------------


def _parse_time(text):
    try:
        return float(text)
    except ValueError:
        return datetime.fromisoformat(text.strip()).timestamp()


def read_raw(stream):
    """Yield ``(line_no, t, v, y)`` from delimited ``timestamp,v,y`` text.

    Blank lines, ``#`` comments and a non-numeric header row are skipped.
    """
    for line_no, line in enumerate(stream, start=1):
        text = line.strip()
        if not text or text.startswith("#"):
            continue
        parts = [p.strip() for p in text.replace(";", ",").split(",")]
        if len(parts) < 3:
            raise IngestError(f"expected 3 fields, got {len(parts)}", line_no)
        try:
            t = _parse_time(parts[0])
            v, y = float(parts[1]), float(parts[2])
        except ValueError:
            if line_no == 1 or all(not _numeric(p) for p in parts):
                continue
            raise IngestError(f"cannot parse {text!r}", line_no) from None
        if not (math.isfinite(t) and math.isfinite(v) and math.isfinite(y)):
            raise IngestError("non-finite value", line_no)
        yield line_no, t, v, y


def _numeric(text):
    try:
        float(text)
        return True
    except ValueError:
        return False


@dataclass
class AggregateResult:
    v: np.ndarray
    s: np.ndarray
    y: np.ndarray
    n_dropped: int = 0
    block_start: np.ndarray = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return int(self.v.size)


def aggregate_raw(rows, block_len: float = 600.0) -> AggregateResult:
    """Ten-minute statistics of a raw ``(t, v, y)`` stream.

    ``rows`` yields ``(t, v, y)`` or ``(line_no, t, v, y)``. Blocks are
    aligned to the first timestamp. A block is complete when the stream
    reaches its end boundary, i.e. some later sample falls at or beyond it,
    or the last sample is within one sampling interval of it. Incomplete
    blocks, and blocks with fewer than two samples, are dropped and
    counted. Timestamps must increase strictly.
    """
    if block_len <= 0:
        raise ValueError("block_len must be positive")
    blocks = {}
    t0 = prev = None
    last_dt = None
    for k, row in enumerate(rows, start=1):
        line_no, t, v, y = row if len(row) == 4 else (k, *row)
        if prev is not None and t <= prev:
            raise IngestError(f"timestamp {t!r} does not increase", line_no)
        if prev is not None:
            last_dt = t - prev
        if t0 is None:
            t0 = t
        prev = t
        b = int(math.floor((t - t0) / block_len))
        blocks.setdefault(b, []).append((v, y))
    if t0 is None:
        return AggregateResult(np.empty(0), np.empty(0), np.empty(0), 0, np.empty(0))
    last_block = max(blocks)
    tail_end = t0 + (last_block + 1) * block_len
    tail_complete = last_dt is not None and prev + last_dt >= tail_end - 1e-9 * block_len
    n_expected = last_block + 1
    out_v, out_s, out_y, starts = [], [], [], []
    for b in range(n_expected):
        pts = blocks.get(b)
        if not pts or len(pts) < 2 or (b == last_block and not tail_complete):
            continue
        arr = np.asarray(pts, dtype=float)
        out_v.append(arr[:, 0].mean())
        out_s.append(arr[:, 0].std(ddof=1))
        out_y.append(arr[:, 1].max())
        starts.append(t0 + b * block_len)
    return AggregateResult(np.array(out_v), np.array(out_s), np.array(out_y),
                           n_expected - len(out_v), np.array(starts))


# --------------------------------------------------------------------------
# delimited tables
# --------------------------------------------------------------------------


def _fmt(x):
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def render_table(columns: dict, meta: dict | None = None) -> str:
    buf = io.StringIO()
    for key, val in (meta or {}).items():
        buf.write(f"# {key}: {val}\n")
    names = list(columns)
    cols = [np.atleast_1d(np.asarray(columns[c], dtype=object)) for c in names]
    n = max((c.size for c in cols), default=0)
    if any(c.size != n for c in cols):
        raise ValueError("columns differ in length")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(names)
    for i in range(n):
        writer.writerow([_fmt(c[i]) for c in cols])
    return buf.getvalue()


def atomic_write(path, text: str):
    """Write ``text`` to ``path`` through a temporary file and a rename."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".csv")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_table(path, columns: dict, meta: dict | None = None):
    atomic_write(path, render_table(columns, meta))


def read_table(path):
    """Return ``(meta, columns)``; numeric columns come back as float arrays."""
    meta, lines = {}, []
    with open(path, newline="") as fh:
        for line in fh:
            if line.startswith("#"):
                key, _, val = line[1:].partition(":")
                meta[key.strip()] = val.strip()
            elif line.strip():
                lines.append(line)
    if not lines:
        raise IngestError(f"{path}: no header row")
    rows = list(csv.reader(lines))
    names = [n.strip() for n in rows[0]]
    body = rows[1:]
    cols = {}
    for j, name in enumerate(names):
        raw = []
        for i, r in enumerate(body):
            if len(r) != len(names):
                raise IngestError(f"{path}: expected {len(names)} fields", i + 2 + len(meta))
            raw.append(r[j].strip())
        try:
            cols[name] = np.array([float(x) for x in raw])
        except ValueError:
            cols[name] = np.array(raw, dtype=object)
    return meta, cols


def payload(path) -> str:
    """Non-metadata part of a result file, for reproducibility comparisons."""
    with open(path) as fh:
        return "".join(line for line in fh if not line.startswith("#"))


def read_records(path) -> RegressionData:
    """Load a ten-minute record file with columns ``v``, ``s`` (optional), ``y``."""
    _, cols = read_table(path)
    for name in ("v", "y"):
        if name not in cols or cols[name].dtype == object:
            raise IngestError(f"{path}: missing numeric column {name!r}")
    v, y = cols["v"], cols["y"]
    s = cols.get("s", np.zeros_like(v))
    if s.dtype == object:
        raise IngestError(f"{path}: column 's' is not numeric")
    if not (np.all(np.isfinite(v)) and np.all(np.isfinite(s)) and np.all(np.isfinite(y))):
        raise IngestError(f"{path}: non-finite values")
    if np.any(s < 0):
        raise IngestError(f"{path}: negative wind-speed standard deviation")
    return RegressionData(y, v, s)


# --------------------------------------------------------------------------
# run configuration
# --------------------------------------------------------------------------


DESK = {"burn_in": 200, "m_l": 500, "m_w": 100, "n_w": 100, "n_l": 100}
FULL = {"burn_in": 1000, "m_l": 10000, "m_w": 1000, "n_w": 100, "n_l": 100}


@dataclass
class RunConfig:
    seed: int = 0
    t_years: tuple = (20.0, 50.0)
    burn_in: int = DESK["burn_in"]
    m_l: int = DESK["m_l"]
    m_w: int = DESK["m_w"]
    n_w: int = DESK["n_w"]
    n_l: int = DESK["n_l"]
    k_max: int = 40
    n_v_bins: int = 10
    n_s_bins: int = 6
    exclude_threshold: float = 0.5
    loc_types: tuple = (1, 2, 3)
    scale_types: tuple = (1, 2)
    score_taus: tuple = (0.9, 0.99)
    score_bs: tuple = (0.0, 1.0, 2.0)
    score_repeats: int = 10
    split_frac: float = 0.8
    n_post: int = 50
    sim_blocks: int = 1000
    sim_block_size: int = 1000
    sim_weibull: tuple = (2.0, 8.0, 3.0)
    ref_datasets: int = 100
    ref_size: int = 100000

    def __post_init__(self):
        for name in ("t_years", "loc_types", "scale_types", "score_taus", "score_bs",
                     "sim_weibull"):
            setattr(self, name, tuple(np.atleast_1d(getattr(self, name)).tolist()))
        for f in dataclasses.fields(self):
            val = getattr(self, f.name)
            if f.type == "int" and (not isinstance(val, (int, np.integer)) or val < 0):
                raise ValueError(f"{f.name} must be a nonnegative integer")
        for name in ("m_l", "m_w", "n_w", "n_l", "k_max", "n_v_bins", "n_s_bins",
                     "score_repeats", "n_post", "sim_blocks", "sim_block_size",
                     "ref_datasets", "ref_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        if not 0 < self.split_frac < 1:
            raise ValueError("split_frac must lie inside (0, 1)")
        if not self.t_years or any(t <= 0 for t in self.t_years):
            raise ValueError("t_years must be positive")

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)

    def hash(self) -> str:
        canon = ";".join(f"{k}={_canon(v)}" for k, v in sorted(self.as_dict().items()))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]

    def header(self, **extra) -> dict:
        meta = {"config_hash": self.hash(), "seed": self.seed, "burn_in": self.burn_in,
                "m_l": self.m_l, "m_w": self.m_w, "n_w": self.n_w, "n_l": self.n_l,
                "version": VERSION}
        meta.update(extra)
        return meta


def _canon(v):
    if isinstance(v, (tuple, list)):
        return ",".join(_canon(x) for x in v)
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def _coerce(name, text, default):
    if isinstance(default, bool):
        return text.lower() in ("1", "true", "yes", "on")
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float):
        return float(text)
    if isinstance(default, tuple):
        items = [x for x in text.replace(";", ",").split(",") if x.strip()]
        kind = type(default[0]) if default else float
        return tuple(kind(float(x)) if kind is int else kind(x) for x in items)
    return text


def parse_config_text(text: str) -> dict:
    """``key = value`` lines; ``#`` starts a comment."""
    out = {}
    defaults = RunConfig().as_dict()
    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        key = key.strip().replace("-", "_")
        if not sep:
            raise IngestError(f"expected key=value, got {line!r}", line_no)
        if key not in defaults:
            raise IngestError(f"unknown config key {key!r}", line_no)
        try:
            out[key] = _coerce(key, val.strip(), defaults[key])
        except ValueError as exc:
            raise IngestError(f"bad value for {key}: {exc}", line_no) from None
    return out


def build_config(path=None, full_scale=False, overrides=None) -> RunConfig:
    """Defaults, then the scale profile, then the file, then flags."""
    values = dict(FULL) if full_scale else {}
    if path is not None:
        with open(path) as fh:
            values.update(parse_config_text(fh.read()))
    for key, val in (overrides or {}).items():
        if val is not None:
            values[key] = val
    return RunConfig(**values)

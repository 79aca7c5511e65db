"""Persistence formats and the run configuration.

Field dump layout (little-endian)::

    0   4s   magic b"PRHF"
    4   u32  format version
    8   u32  n
    12  f64  L
    20  12x  reserved (zero)
    32  n^3 f64 values, row-major with i outermost
"""

from __future__ import annotations

import configparser
import csv
import json
import math
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .energy import EnergyBreakdown, PotentialSpec
from .grid import Field, Grid
from .ground_state import QState
from .minimizer import MinimizerResult

__all__ = [
    "FieldFormatError",
    "ConfigError",
    "write_field",
    "read_field",
    "save_qstate",
    "load_qstate",
    "SWEEP_COLUMNS",
    "write_sweep_csv",
    "append_sweep_row",
    "read_sweep_csv",
    "result_from_row",
    "write_json",
    "read_json",
    "write_table",
    "write_columns",
    "RunConfig",
    "load_config",
]

MAGIC = b"PRHF"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIId12x")
assert _HEADER.size == 32

SWEEP_COLUMNS = ("a", "e_a", "kinetic", "potential", "hartree", "mu_a", "residual", "iterations")


class FieldFormatError(ValueError):
    """A field dump is truncated or carries the wrong header."""


class ConfigError(ValueError):
    """The run configuration is missing a key or holds an invalid value."""


def write_field(path, f: Field) -> None:
    path = Path(path)
    header = _HEADER.pack(MAGIC, FORMAT_VERSION, f.grid.n, f.grid.L)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(f.values, dtype="<f8").tobytes(order="C"))


def read_field(path) -> Field:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise FieldFormatError(f"{path}: shorter than the 32-byte header")
    magic, version, n, L = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FieldFormatError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise FieldFormatError(f"{path}: unsupported version {version}")
    expected = _HEADER.size + 8 * n**3
    if len(data) != expected:
        raise FieldFormatError(f"{path}: expected {expected} bytes, found {len(data)}")
    vals = np.frombuffer(data, dtype="<f8", offset=_HEADER.size).reshape(n, n, n)
    return Field(Grid(n, L), vals.astype(np.float64))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def write_json(path, payload) -> None:
    text = json.dumps(_jsonable(payload), indent=2, sort_keys=True)
    Path(path).write_text(text + "\n")


def read_json(path):
    def fix(v):
        if isinstance(v, str) and v in ("nan", "inf", "-inf"):
            return float(v)
        if isinstance(v, dict):
            return {k: fix(x) for k, x in v.items()}
        if isinstance(v, list):
            return [fix(x) for x in v]
        return v

    return fix(json.loads(Path(path).read_text()))


def save_qstate(q: QState, stem) -> tuple[Path, Path]:
    """Write ``<stem>.prhf`` and the ``<stem>.json`` sidecar."""
    stem = Path(stem)
    fpath, jpath = stem.with_suffix(".prhf"), stem.with_suffix(".json")
    write_field(fpath, q.q)
    write_json(jpath, {
        "astar": q.astar, "kinetic_half": q.kinetic_half, "hartree": q.hartree,
        "pohozaev_ratios": list(q.pohozaev_ratios), "decay_slope": q.decay_slope,
        "residual": q.residual, "iterations": q.iterations,
        "grid": {"n": q.grid.n, "L": q.grid.L}, "field": fpath.name,
    })
    return fpath, jpath


def load_qstate(stem) -> QState:
    stem = Path(stem)
    fpath, jpath = stem.with_suffix(".prhf"), stem.with_suffix(".json")
    for p in (fpath, jpath):
        if not p.exists():
            raise FileNotFoundError(f"ground state file {p} not found; run 'ground-state' first")
    meta = read_json(jpath)
    f = read_field(fpath)
    if meta["grid"] != {"n": f.grid.n, "L": f.grid.L}:
        raise FieldFormatError(f"{jpath}: grid metadata does not match {fpath}")
    return QState(
        q=f, astar=meta["astar"], kinetic_half=meta["kinetic_half"], hartree=meta["hartree"],
        pohozaev_ratios=tuple(meta["pohozaev_ratios"]), decay_slope=meta["decay_slope"],
        residual=meta["residual"], iterations=meta["iterations"],
    )


def _fmt(v):
    return str(int(v)) if isinstance(v, (int, np.integer)) else repr(float(v))


def write_sweep_csv(path, results) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SWEEP_COLUMNS)
        for r in results:
            row = r.row() if hasattr(r, "row") else r
            w.writerow([_fmt(row[c]) for c in SWEEP_COLUMNS])


def append_sweep_row(path, result) -> None:
    """Append one row, writing the header first if the file is new."""
    path = Path(path)
    new = not path.exists() or path.stat().st_size == 0
    with open(path, "a", newline="") as fh:
        w = csv.writer(fh)
        if new:
            w.writerow(SWEEP_COLUMNS)
        row = result.row() if hasattr(result, "row") else result
        w.writerow([_fmt(row[c]) for c in SWEEP_COLUMNS])
        fh.flush()
        os.fsync(fh.fileno())


def read_sweep_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != SWEEP_COLUMNS:
            raise ValueError(f"{path}: columns {reader.fieldnames} differ from {list(SWEEP_COLUMNS)}")
        rows = []
        for rec in reader:
            row = {c: float(rec[c]) for c in SWEEP_COLUMNS}
            row["iterations"] = int(rec["iterations"])
            rows.append(row)
    return rows


def result_from_row(row: dict, u: Field, m: float) -> MinimizerResult:
    """Rebuild a result from a persisted sweep row and its field."""
    b = EnergyBreakdown(row["kinetic"], row["potential"], row["hartree"], row["a"], m)
    return MinimizerResult(u=u, breakdown=b, mu_a=row["mu_a"],
                           iterations=int(row["iterations"]), residual=row["residual"])


def write_table(path, rows, columns) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for r in rows:
            w.writerow([r[c] if isinstance(r[c], str) else _fmt(r[c]) for c in columns])


def write_columns(path, x, y, header: str = "") -> None:
    """Plot-ready two-column text file."""
    with open(path, "w") as fh:
        if header:
            fh.write(f"# {header}\n")
        for a, b in zip(x, y):
            fh.write(f"{float(a)!r} {float(b)!r}\n")


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.replace(",", " ").split()]


@dataclass
class RunConfig:
    """Parsed run configuration.

    Sections: ``[grid]`` n, L; ``[physics]`` m, a_fraction(s);
    ``[potential]`` points (``;``-separated triples), exponents;
    ``[solver]`` tol, max_iter, tau0; ``[ground_state]`` n, L, tol, max_iter,
    qstate; ``[nonexistence]`` a_fractions, R_values, delta;
    ``[trial]`` R, delta, x0, a_fraction; ``[output]`` directory, dump_fields.
    Only output paths have defaults.
    """

    parser: configparser.ConfigParser
    path: str = ""
    out_dir: Path = field(default_factory=lambda: Path("runs"))

    def _get(self, section, key):
        if not self.parser.has_option(section, key):
            raise ConfigError(f"missing [{section}] {key} in {self.path or 'config'}")
        return self.parser.get(section, key).strip()

    def has(self, section, key) -> bool:
        return self.parser.has_option(section, key)

    def get_float(self, section, key) -> float:
        raw = self._get(section, key)
        try:
            v = float(raw)
        except ValueError as exc:
            raise ConfigError(f"[{section}] {key} = {raw!r} is not a number") from exc
        if not math.isfinite(v):
            raise ConfigError(f"[{section}] {key} must be finite")
        return v

    def get_int(self, section, key) -> int:
        raw = self._get(section, key)
        try:
            return int(raw)
        except ValueError as exc:
            raise ConfigError(f"[{section}] {key} = {raw!r} is not an integer") from exc

    def get_floats(self, section, key) -> list[float]:
        raw = self._get(section, key)
        try:
            vals = _floats(raw)
        except ValueError as exc:
            raise ConfigError(f"[{section}] {key} = {raw!r} is not a list of numbers") from exc
        if not vals:
            raise ConfigError(f"[{section}] {key} is empty")
        return vals

    def grid(self, section="grid") -> Grid:
        n, L = self.get_int(section, "n"), self.get_float(section, "L")
        try:
            return Grid(n, L)
        except ValueError as exc:
            raise ConfigError(f"[{section}]: {exc}") from exc

    def potential(self) -> PotentialSpec:
        raw = self._get("potential", "points")
        try:
            pts = [tuple(_floats(t)) for t in raw.split(";") if t.strip()]
            spec = PotentialSpec(pts, self.get_floats("potential", "exponents"))
        except ValueError as exc:
            raise ConfigError(f"[potential]: {exc}") from exc
        return spec

    def fractions(self, section, key) -> list[float]:
        vals = self.get_floats(section, key)
        bad = [v for v in vals if not 0.0 <= v <= 2.0]
        if bad:
            raise ConfigError(f"[{section}] {key}: fractions of a* must lie in [0, 2], got {bad}")
        return vals

    def dump_fields(self) -> bool:
        if not self.has("output", "dump_fields"):
            return False
        return self.parser.getboolean("output", "dump_fields")

    def qstate_stem(self) -> Path:
        if self.has("ground_state", "qstate"):
            p = Path(self._get("ground_state", "qstate"))
            return p if p.is_absolute() else self.out_dir / p
        return self.out_dir / "qstate"

    def validate_potential(self, grid: Grid) -> PotentialSpec:
        spec = self.potential()
        try:
            spec.check_inside(grid)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return spec


def load_config(path=None, text: str | None = None, out_dir=None) -> RunConfig:
    """Read an INI-style configuration from ``path`` or ``text``."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    parser.optionxform = str
    try:
        if text is not None:
            parser.read_string(text)
        elif path is not None:
            if not Path(path).exists():
                raise ConfigError(f"config file {path} not found")
            with open(path) as fh:
                parser.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from exc
    cfg = RunConfig(parser, str(path or ""))
    if out_dir is not None:
        cfg.out_dir = Path(out_dir)
    elif parser.has_option("output", "directory"):
        cfg.out_dir = Path(parser.get("output", "directory"))
    return cfg

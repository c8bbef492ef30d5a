"""File formats for trajectory datasets and coupling matrices.

Dataset CSV::

    # source=synthetic
    # preset=z
    # true_couplings=[[0.0, ...], ...]
    t,IX,IY,IZ,XI,XX,XY,XZ,YI,YX,YY,YZ,ZI,ZX,ZY,ZZ
    0.0,0.7071067811865476,...

Metadata lines are optional ``# key=value`` comments before the header.
Floats are written with ``repr`` so a write/read cycle is lossless.

Couplings JSON::

    {"format": "hampinn-couplings", "version": 1, "preset": "z",
     "couplings": [[...4 rows of 4...]]}
"""

from __future__ import annotations

import json
import math
import warnings
from pathlib import Path

import numpy as np

from .pauli import LABELS, Preset
from .sim import TrajectoryDataset, validate_couplings

HEADER = ("t",) + LABELS
VALUE_BOUND = 1.05
COUPLINGS_FORMAT = "hampinn-couplings"
COUPLINGS_VERSION = 1


class DataFormatError(ValueError):
    """Base class for every parse/validation failure."""

    def __init__(self, message, path=None, line=None):
        where = []
        if path is not None:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        super().__init__(f"{': '.join(where)}: {message}" if where else message)
        self.path = path
        self.line = line


class SchemaError(DataFormatError):
    """Header does not match the expected columns."""

    def __init__(self, message, column=None, **kw):
        super().__init__(message, **kw)
        self.column = column


class MonotonicityError(DataFormatError):
    """Collocation times are not strictly increasing."""

    def __init__(self, message, row=None, **kw):
        super().__init__(message, **kw)
        self.row = row


class RangeError(DataFormatError):
    """Non-finite or out-of-range observable value."""

    def __init__(self, message, row=None, column=None, **kw):
        super().__init__(message, **kw)
        self.row = row
        self.column = column


class CouplingFormatError(DataFormatError):
    """Malformed couplings document."""


class PresetMismatchError(CouplingFormatError):
    """Coupling matrix has entries outside its declared preset."""


def _fmt(x) -> str:
    return repr(float(x))


def _metadata(dataset: TrajectoryDataset) -> dict:
    meta = {"source": dataset.source, "t_final": _fmt(dataset.t_final)}
    if dataset.preset is not None:
        meta["preset"] = dataset.preset.value
    if dataset.sigma is not None:
        meta["sigma"] = _fmt(dataset.sigma)
    if dataset.seed is not None:
        meta["seed"] = str(int(dataset.seed))
    if dataset.true_couplings is not None:
        meta["true_couplings"] = json.dumps(dataset.true_couplings.tolist())
    for key, value in dataset.extra.items():
        meta.setdefault(key, str(value))
    return meta


def format_dataset(dataset: TrajectoryDataset) -> str:
    lines = [f"# {k}={v}" for k, v in _metadata(dataset).items()]
    lines.append(",".join(HEADER))
    for t, row in zip(dataset.times, dataset.values):
        lines.append(",".join([_fmt(t)] + [_fmt(x) for x in row]))
    return "\n".join(lines) + "\n"


def write_dataset(dataset: TrajectoryDataset, destination) -> None:
    path = Path(destination)
    try:
        path.write_text(format_dataset(dataset))
    except OSError as exc:
        raise OSError(f"cannot write dataset to {path}: {exc}") from exc


def parse_dataset(text: str, path=None) -> TrajectoryDataset:
    """Parse dataset CSV text; see the module docstring for the layout."""
    meta = {}
    header_seen = False
    times, rows = [], []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            if header_seen:
                continue
            body = line[1:].strip()
            if "=" in body:
                key, value = body.split("=", 1)
                meta[key.strip()] = value.strip()
            continue
        cells = [c.strip() for c in line.split(",")]
        if not header_seen:
            for col, (got, want) in enumerate(zip(cells, HEADER), start=1):
                if got != want:
                    raise SchemaError(f"column {col}: expected {want!r}, found {got!r}",
                                      column=col, path=path, line=lineno)
            if len(cells) != len(HEADER):
                col = min(len(cells), len(HEADER)) + 1
                raise SchemaError(f"expected {len(HEADER)} columns, found {len(cells)}",
                                  column=col, path=path, line=lineno)
            header_seen = True
            continue
        row = len(rows) + 1
        if len(cells) != len(HEADER):
            raise SchemaError(f"row {row}: expected {len(HEADER)} fields, found {len(cells)}",
                              path=path, line=lineno)
        values = []
        for col, (name, cell) in enumerate(zip(HEADER, cells), start=1):
            try:
                x = float(cell)
            except ValueError:
                raise RangeError(f"row {row}, column {col} ({name}): {cell!r} is not a number",
                                 row=row, column=col, path=path, line=lineno) from None
            if not math.isfinite(x):
                raise RangeError(f"row {row}, column {col} ({name}): non-finite value",
                                 row=row, column=col, path=path, line=lineno)
            if col > 1 and abs(x) > VALUE_BOUND:
                raise RangeError(f"row {row}, column {col} ({name}): {x} outside "
                                 f"[-{VALUE_BOUND}, {VALUE_BOUND}]",
                                 row=row, column=col, path=path, line=lineno)
            values.append(x)
        if times and values[0] <= times[-1]:
            raise MonotonicityError(f"row {row}: t={values[0]} does not exceed previous "
                                    f"t={times[-1]}", row=row, path=path, line=lineno)
        times.append(values[0])
        rows.append(values[1:])
    if not header_seen:
        raise SchemaError("missing header line", column=1, path=path)
    if len(rows) < 2:
        raise DataFormatError(f"need at least 2 data rows, found {len(rows)}", path=path)
    return _dataset_from(times, rows, meta, path)


def _dataset_from(times, rows, meta, path) -> TrajectoryDataset:
    known = {"source", "t_final", "preset", "sigma", "seed", "true_couplings"}
    try:
        preset = Preset.parse(meta["preset"]) if "preset" in meta else None
        truth = None
        if "true_couplings" in meta:
            truth = validate_couplings(json.loads(meta["true_couplings"]), preset)
        return TrajectoryDataset(
            times=np.array(times), values=np.array(rows),
            source=meta.get("source", "external"),
            t_final=float(meta["t_final"]) if "t_final" in meta else None,
            sigma=float(meta["sigma"]) if "sigma" in meta else None,
            true_couplings=truth, preset=preset,
            seed=int(meta["seed"]) if "seed" in meta else None,
            extra={k: v for k, v in meta.items() if k not in known},
        )
    except (ValueError, TypeError) as exc:
        raise DataFormatError(f"bad metadata: {exc}", path=path) from exc


def read_dataset(source) -> TrajectoryDataset:
    path = Path(source)
    try:
        text = path.read_text()
    except OSError as exc:
        raise OSError(f"cannot read dataset {path}: {exc}") from exc
    return parse_dataset(text, path=path)


def write_couplings(J, destination, preset=Preset.GENERAL) -> None:
    preset = Preset.parse(preset)
    J = validate_couplings(J, preset)
    rows = ",\n  ".join(json.dumps(row) for row in J.tolist())
    text = (f'{{"format": "{COUPLINGS_FORMAT}", "version": {COUPLINGS_VERSION}, '
            f'"preset": "{preset.value}",\n "couplings": [\n  {rows}\n ]}}\n')
    path = Path(destination)
    try:
        path.write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write couplings to {path}: {exc}") from exc


def parse_couplings(text: str, path=None) -> tuple[np.ndarray, Preset]:
    """Return ``(J, preset)``; a nonzero ``J[0][0]`` is zeroed with a warning."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CouplingFormatError(f"column {exc.colno}: {exc.msg}",
                                  path=path, line=exc.lineno) from None
    if not isinstance(doc, dict):
        raise CouplingFormatError("top level must be an object", path=path)
    if doc.get("format", COUPLINGS_FORMAT) != COUPLINGS_FORMAT:
        raise CouplingFormatError(f"unexpected format tag {doc.get('format')!r}", path=path)
    try:
        preset = Preset.parse(doc.get("preset", "general"))
    except ValueError as exc:
        raise CouplingFormatError(f"key 'preset': {exc}", path=path) from None
    rows = doc.get("couplings")
    if not isinstance(rows, list) or len(rows) != 4:
        raise CouplingFormatError("key 'couplings': expected a list of 4 rows", path=path)
    J = np.zeros((4, 4))
    for k, row in enumerate(rows):
        if not isinstance(row, list) or len(row) != 4:
            raise CouplingFormatError(f"couplings[{k}]: expected 4 numbers", path=path)
        for l, x in enumerate(row):
            if isinstance(x, bool) or not isinstance(x, (int, float)) or not math.isfinite(x):
                raise CouplingFormatError(f"couplings[{k}][{l}]: {x!r} is not a finite number",
                                          path=path)
            J[k, l] = x
    if J[0, 0] != 0.0:
        warnings.warn(f"{path or 'couplings'}: J[0][0]={J[0, 0]} only shifts the energy "
                      "reference; set to 0", stacklevel=2)
        J[0, 0] = 0.0
    stray = (J != 0) & ~preset.mask()
    if stray.any():
        k, l = map(int, np.argwhere(stray)[0])
        raise PresetMismatchError(f"couplings[{k}][{l}]={J[k, l]} is inactive for "
                                  f"preset {preset.value!r}", path=path)
    return J, preset


def read_couplings(source) -> tuple[np.ndarray, Preset]:
    path = Path(source)
    try:
        text = path.read_text()
    except OSError as exc:
        raise OSError(f"cannot read couplings {path}: {exc}") from exc
    return parse_couplings(text, path=path)

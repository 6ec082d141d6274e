"""File formats: OCGRID raster container, sample-table CSV, model JSON.

OCGRID layout (all integers little-endian)::

    bytes 0..7    magic  b"OCGRID\\x00\\x01"
    bytes 8..11   uint32 header_len
    next header_len bytes: UTF-8 JSON object with keys
        n_rows, n_cols, lat_north, lat_south, lon_west, lon_east,
        band_names (list, "chl" last when present), fill_value,
        time_start, time_end (ISO-8601 strings or null)
    payload: one float32 plane per band, in band_names order, each
        n_rows * n_cols values, rows north to south, columns west to east.

The file must end exactly at the end of the last plane.
"""
from __future__ import annotations

import csv
import io
import json
import math
import struct
from typing import Any

import numpy as np

from .core import BAND_NAMES, CHL_BAND, GeoGrid, GridStack, SampleTable
from .errors import (ArgumentError, ChlError, FormatError, LengthError,
                     ParseError, SchemaError, VersionError)
from .estimators import (KINDS, EnsemblePayload, EstimatorSpec, FittedModel, KNNPayload,
                         LinearPayload, SVRPayload, TreePayload)
from .core import FeatureStats

GRID_MAGIC = b"OCGRID\x00\x01"
TABLE_HEADER = ("rrs_412", "rrs_443", "rrs_490", "rrs_510", "rrs_555", "rrs_670", "chl_a")
MODEL_FORMAT_VERSION = 1
_U32 = struct.Struct("<I")


# ---------------------------------------------------------------------------
# grids


def write_grid(stack: GridStack) -> bytes:
    ref = stack.reference
    planes = dict(stack.bands)
    if stack.chl is not None:
        planes[CHL_BAND] = stack.chl
    fills = {g.fill_value for g in planes.values()}
    if len(fills) != 1:
        raise SchemaError("all planes of a grid file share one fill value")
    fill32 = float(np.float32(ref.fill_value))
    header = {
        "n_rows": ref.n_rows,
        "n_cols": ref.n_cols,
        "lat_north": ref.lat_north,
        "lat_south": ref.lat_south,
        "lon_west": ref.lon_west,
        "lon_east": ref.lon_east,
        "band_names": list(planes),
        "fill_value": fill32,
        "time_start": stack.time_start,
        "time_end": stack.time_end,
    }
    head = json.dumps(header).encode("utf-8")
    out = [GRID_MAGIC, _U32.pack(len(head)), head]
    for g in planes.values():
        v = np.where(g.values == g.fill_value, fill32, g.values)
        out.append(v.astype("<f4").tobytes())
    return b"".join(out)


def _num(header: dict, key: str) -> float:
    v = header.get(key)
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise FormatError(f"header field {key!r} must be a finite number")
    return float(v)


def _pos_int(header: dict, key: str) -> int:
    v = header.get(key)
    if isinstance(v, bool) or not isinstance(v, int) or v < 1:
        raise FormatError(f"header field {key!r} must be a positive integer")
    return v


def read_grid(data: bytes) -> GridStack:
    data = bytes(data)
    if len(data) < len(GRID_MAGIC) + 4:
        if not GRID_MAGIC.startswith(data[: len(GRID_MAGIC)]):
            raise FormatError("not an OCGRID file (bad magic)")
        raise LengthError("file shorter than the fixed preamble")
    if data[: len(GRID_MAGIC)] != GRID_MAGIC:
        raise FormatError("not an OCGRID file (bad magic)")
    (hlen,) = _U32.unpack_from(data, len(GRID_MAGIC))
    start = len(GRID_MAGIC) + 4
    if start + hlen > len(data):
        raise LengthError(f"header declares {hlen} bytes but the file ends first")
    try:
        header = json.loads(data[start:start + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError, RecursionError) as exc:
        raise ParseError(f"malformed grid header: {exc}") from exc
    if not isinstance(header, dict):
        raise ParseError("grid header must be a JSON object")

    n_rows = _pos_int(header, "n_rows")
    n_cols = _pos_int(header, "n_cols")
    geo = [_num(header, k) for k in ("lat_north", "lat_south", "lon_west", "lon_east")]
    fill = _num(header, "fill_value")
    names = header.get("band_names")
    if not isinstance(names, list) or not names or not all(isinstance(n, str) for n in names):
        raise FormatError("band_names must be a non-empty list of strings")
    if len(set(names)) != len(names):
        raise FormatError("band_names contains duplicates")
    if CHL_BAND in names and names[-1] != CHL_BAND:
        raise FormatError("the chl plane must be listed last")
    times = []
    for key in ("time_start", "time_end"):
        t = header.get(key)
        if t is not None and not isinstance(t, str):
            raise FormatError(f"{key} must be an ISO-8601 string or null")
        times.append(t)

    plane = n_rows * n_cols
    payload = len(data) - start - hlen
    expected = plane * len(names) * 4
    if payload != expected:
        raise LengthError(f"payload is {payload} bytes, header declares {expected}")
    with np.errstate(invalid="ignore"):  # signalling NaNs in the payload
        arr = np.frombuffer(data, dtype="<f4", offset=start + hlen).astype(np.float64)
    arr = arr.reshape(len(names), n_rows, n_cols)
    try:
        grids = {n: GeoGrid(arr[i], *geo, fill_value=fill) for i, n in enumerate(names)}
    except ArgumentError as exc:
        raise FormatError(f"invalid georeferencing: {exc}") from exc
    chl = grids.pop(CHL_BAND, None)
    return GridStack(grids, chl, *times)


def save_grid(path, stack: GridStack) -> None:
    with open(path, "wb") as fh:
        fh.write(write_grid(stack))


def load_grid(path) -> GridStack:
    with open(path, "rb") as fh:
        return read_grid(fh.read())


# ---------------------------------------------------------------------------
# sample tables


def format_number(x: float) -> str:
    """Shortest round-trip decimal, positional notation."""
    return np.format_float_positional(float(x), unique=True, trim="0")


def write_table(table: SampleTable) -> str:
    buf = io.StringIO()
    buf.write(",".join(TABLE_HEADER) + "\n")
    for r, c in zip(table.rrs.tolist(), table.chl.tolist()):
        cells = [format_number(v) for v in r]
        cells.append("" if math.isnan(c) else format_number(c))
        buf.write(",".join(cells) + "\n")
    return buf.getvalue()


def _cell(text: str, line: int, col: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise ParseError(f"line {line}, column {col}: not a number: {text!r}") from None
    if not math.isfinite(v):
        raise ParseError(f"line {line}, column {col}: non-finite value {text!r}")
    return v


def read_table(text: str) -> SampleTable:
    if not isinstance(text, str):
        raise ParseError("table text must be a string")
    reader = csv.reader(io.StringIO(text, newline=""))
    try:
        header = next(reader, None)
        if header is None:
            raise SchemaError("empty table file (missing header)")
        if tuple(h.strip() for h in header) != TABLE_HEADER:
            raise SchemaError(f"table header must be {','.join(TABLE_HEADER)}")
        rrs, chl = [], []
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(TABLE_HEADER):
                raise ParseError(f"line {line}: expected {len(TABLE_HEADER)} cells, got {len(row)}")
            rrs.append([_cell(row[i], line, TABLE_HEADER[i]) for i in range(6)])
            chl.append(np.nan if row[6].strip() == "" else _cell(row[6], line, "chl_a"))
    except csv.Error as exc:
        raise ParseError(f"malformed CSV: {exc}") from exc
    return SampleTable(np.asarray(rrs, dtype=np.float64).reshape(-1, 6),
                       np.asarray(chl, dtype=np.float64))


def save_table(path, table: SampleTable) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(write_table(table))


def _read_text(path) -> str:
    with open(path, "rb") as fh:
        raw = fh.read()
    try:
        return raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(f"{path}: not UTF-8 text: {exc}") from exc


def load_table(path) -> SampleTable:
    return read_table(_read_text(path))


# ---------------------------------------------------------------------------
# models


def _jsonable_hyperparams(hp: dict) -> dict:
    return {k: v for k, v in hp.items()}


def save_model(model: FittedModel) -> str:
    doc = {
        "format_version": MODEL_FORMAT_VERSION,
        "model_type": model.kind,
        "hyperparams": _jsonable_hyperparams(model.spec.hyperparams),
        "seed": model.spec.seed,
        "log_target": model.spec.log_target,
        "preprocessing": None if model.preprocessing is None else model.preprocessing.to_dict(),
        "payload": model.payload.to_json(),
    }
    return json.dumps(doc, allow_nan=False)


def _payload_from_json(kind: str, payload: dict, spec: EstimatorSpec):
    if kind in ("linear", "ridge"):
        return LinearPayload.from_json(payload)
    if kind == "tree":
        return TreePayload.from_json(payload)
    if kind in ("bagging", "forest", "extra_trees"):
        return EnsemblePayload.from_json(payload)
    if kind == "svr":
        return SVRPayload.from_json(payload)
    return KNNPayload.from_json(payload, spec.hp("k"), spec.hp("aggregation"))


def load_model(text: str | bytes) -> FittedModel:
    try:
        doc = json.loads(text)
    except (UnicodeDecodeError, json.JSONDecodeError, RecursionError, TypeError) as exc:
        raise ParseError(f"model file is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise FormatError("model file must hold a JSON object")
    version = doc.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise VersionError(f"unsupported model format_version {version!r}")
    kind = doc.get("model_type")
    if kind not in KINDS:
        raise FormatError(f"unknown model_type {kind!r}")
    try:
        hp = doc["hyperparams"]
        if not isinstance(hp, dict):
            raise FormatError("hyperparams must be an object")
        spec = EstimatorSpec(kind, hp, doc.get("seed", 0), bool(doc.get("log_target", False)))
        pre = doc.get("preprocessing")
        stats = None if pre is None else FeatureStats.from_dict(pre)
        if stats is not None and tuple(stats.band_names) != BAND_NAMES:
            raise FormatError("preprocessing band list does not match the six bands")
        payload = doc["payload"]
        if not isinstance(payload, dict):
            raise FormatError("payload must be an object")
        model = FittedModel(spec, _payload_from_json(kind, payload, spec), stats)
    except ChlError as exc:
        if isinstance(exc, FormatError):
            raise
        raise FormatError(f"invalid {kind} model: {exc}") from exc
    except (KeyError, TypeError, ValueError, IndexError, AttributeError, RecursionError,
            OverflowError) as exc:
        raise FormatError(f"invalid {kind} payload: {exc!r}") from exc
    return model


def save_model_file(path, model: FittedModel) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(save_model(model))


def load_model_file(path) -> FittedModel:
    return load_model(_read_text(path))


def dump_json(obj: Any) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


__all__ = [
    "GRID_MAGIC", "TABLE_HEADER", "load_grid", "load_model", "load_model_file",
    "load_table", "read_grid", "read_table", "save_grid", "save_model", "save_model_file",
    "save_table", "write_grid", "write_table",
]

"""Domain data model: samples, tables, grids and the sampling protocol."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Optional, Sequence

import numpy as np

from . import _backend, rng
from .errors import ArgumentError, DimensionError, SchemaError

WAVELENGTHS = (412, 443, 490, 510, 555, 670)
BAND_NAMES = tuple(f"rrs_{w}" for w in WAVELENGTHS)
CHL_BAND = "chl"
N_BANDS = len(BAND_NAMES)


def band_name(wavelength: int | str) -> str:
    """``443`` or ``"443"`` or ``"rrs_443"`` -> ``"rrs_443"``."""
    s = str(wavelength)
    return s if s.startswith("rrs_") else f"rrs_{s}"


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Sample:
    """One pixel: six reflectances (412..670 nm) and optional chlorophyll-a (mg/m^3)."""

    rrs: tuple[float, ...]
    chl: Optional[float] = None

    def __post_init__(self):
        rrs = tuple(float(v) for v in self.rrs)
        if len(rrs) != N_BANDS:
            raise SchemaError(f"expected {N_BANDS} reflectances, got {len(rrs)}")
        if not all(math.isfinite(v) for v in rrs):
            raise ArgumentError("reflectances must be finite")
        object.__setattr__(self, "rrs", rrs)
        if self.chl is not None:
            chl = float(self.chl)
            if not math.isfinite(chl):
                raise ArgumentError("chl must be finite when present")
            object.__setattr__(self, "chl", chl)

    def band(self, wavelength: int | str) -> float:
        return self.rrs[BAND_NAMES.index(band_name(wavelength))]

    @property
    def admissible(self) -> bool:
        """Passes the learning validity rule (positive bands, positive chl)."""
        return all(v > 0 for v in self.rrs) and self.chl is not None and self.chl > 0


@dataclass(frozen=True, eq=False)
class SampleTable:
    """Column-oriented table of samples.

    ``rrs`` is an ``(N, 6)`` array; ``chl`` is ``(N,)`` with NaN where the
    target is absent.  ``pixels`` optionally maps each row back to its
    ``(row, col)`` grid location.
    """

    rrs: np.ndarray
    chl: np.ndarray
    band_names: tuple[str, ...] = BAND_NAMES
    pixels: Optional[np.ndarray] = None

    def __post_init__(self):
        rrs = _frozen(np.asarray(self.rrs, dtype=np.float64).reshape(-1, len(self.band_names)))
        chl = _frozen(np.asarray(self.chl, dtype=np.float64).reshape(-1))
        if tuple(self.band_names) != BAND_NAMES:
            raise SchemaError(f"band order must be {BAND_NAMES}, got {tuple(self.band_names)}")
        if chl.shape[0] != rrs.shape[0]:
            raise DimensionError("rrs and chl row counts differ")
        if not np.isfinite(rrs).all():
            raise ArgumentError("reflectances must be finite")
        if np.isinf(chl).any():
            raise ArgumentError("chl must be finite when present")
        object.__setattr__(self, "rrs", rrs)
        object.__setattr__(self, "chl", chl)
        object.__setattr__(self, "band_names", tuple(self.band_names))
        if self.pixels is not None:
            px = np.array(self.pixels, dtype=np.int64).reshape(-1, 2)
            px.flags.writeable = False
            if px.shape[0] != rrs.shape[0]:
                raise DimensionError("pixel index list length differs from row count")
            object.__setattr__(self, "pixels", px)

    @classmethod
    def from_samples(cls, samples: Sequence[Sample]) -> "SampleTable":
        rrs = np.array([s.rrs for s in samples], dtype=np.float64).reshape(-1, N_BANDS)
        chl = np.array([np.nan if s.chl is None else s.chl for s in samples], dtype=np.float64)
        return cls(rrs, chl)

    @classmethod
    def from_arrays(cls, X, y=None) -> "SampleTable":
        X = np.asarray(X, dtype=np.float64)
        if y is None:
            y = np.full(X.shape[0], np.nan)
        return cls(X, y)

    def __len__(self) -> int:
        return self.rrs.shape[0]

    def __iter__(self) -> Iterator[Sample]:
        return iter(self.rows)

    @property
    def rows(self) -> list[Sample]:
        return [
            Sample(tuple(r), None if math.isnan(c) else float(c))
            for r, c in zip(self.rrs.tolist(), self.chl.tolist())
        ]

    @property
    def has_chl(self) -> np.ndarray:
        return ~np.isnan(self.chl)

    def require_target(self) -> None:
        if not self.has_chl.all():
            raise SchemaError("every row of a training table needs chl")

    def admissible_mask(self) -> np.ndarray:
        """Rows with all bands > 0 and a positive chl target."""
        with np.errstate(invalid="ignore"):
            return (self.rrs > 0).all(axis=1) & (self.chl > 0)

    def take(self, idx) -> "SampleTable":
        idx = np.asarray(idx, dtype=np.int64)
        px = None if self.pixels is None else self.pixels[idx]
        return SampleTable(self.rrs[idx], self.chl[idx], self.band_names, px)


@dataclass(frozen=True, eq=False)
class GeoGrid:
    """A georeferenced raster plane; row 0 is the northernmost row."""

    values: np.ndarray
    lat_north: float
    lat_south: float
    lon_west: float
    lon_east: float
    fill_value: float = -999.0

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64, copy=True)
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise DimensionError(f"grid plane must be 2-D and non-empty, got shape {v.shape}")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)
        if not self.lat_north > self.lat_south:
            raise ArgumentError("lat_north must exceed lat_south")
        if not self.lon_east > self.lon_west:
            raise ArgumentError("lon_east must exceed lon_west")
        if not math.isfinite(self.fill_value):
            raise ArgumentError("fill_value must be finite")

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_cols(self) -> int:
        return self.values.shape[1]

    @property
    def georef(self) -> tuple:
        return (self.n_rows, self.n_cols, self.lat_north, self.lat_south,
                self.lon_west, self.lon_east)

    def valid_mask(self) -> np.ndarray:
        return np.isfinite(self.values) & (self.values != self.fill_value)

    def with_values(self, values: np.ndarray) -> "GeoGrid":
        return GeoGrid(values, self.lat_north, self.lat_south, self.lon_west,
                       self.lon_east, self.fill_value)

    def pixel_center(self, row: int, col: int) -> tuple[float, float]:
        """(lat, lon) of a pixel centre by linear indexing."""
        dlat = (self.lat_north - self.lat_south) / self.n_rows
        dlon = (self.lon_east - self.lon_west) / self.n_cols
        return self.lat_north - (row + 0.5) * dlat, self.lon_west + (col + 0.5) * dlon


def check_same_geometry(grids: Sequence[GeoGrid]) -> None:
    if not grids:
        return
    ref = grids[0].georef
    for g in grids[1:]:
        if g.georef != ref:
            raise DimensionError(f"grid geometry {g.georef} differs from {ref}")


@dataclass(frozen=True, eq=False)
class GridStack:
    """Reflectance planes keyed by band name, optional chl plane, time window."""

    bands: Mapping[str, GeoGrid]
    chl: Optional[GeoGrid] = None
    time_start: Optional[str] = None
    time_end: Optional[str] = None

    def __post_init__(self):
        bands = dict(self.bands)
        if CHL_BAND in bands:
            raise SchemaError("chl must be passed as the chl plane, not a band")
        object.__setattr__(self, "bands", bands)
        members = list(bands.values()) + ([self.chl] if self.chl is not None else [])
        if not members:
            raise SchemaError("a grid stack needs at least one plane")
        check_same_geometry(members)

    @property
    def reference(self) -> GeoGrid:
        return next(iter(self.bands.values())) if self.bands else self.chl

    @property
    def shape(self) -> tuple[int, int]:
        ref = self.reference
        return ref.n_rows, ref.n_cols

    def require_bands(self, names: Sequence[str] = BAND_NAMES) -> None:
        missing = [n for n in names if n not in self.bands]
        if missing:
            raise SchemaError(f"grid stack lacks band plane(s): {', '.join(missing)}")

    def feature_planes(self) -> np.ndarray:
        """``(n_rows, n_cols, 6)`` array in canonical band order."""
        self.require_bands()
        return np.stack([self.bands[b].values for b in BAND_NAMES], axis=-1)

    def valid_feature_mask(self) -> np.ndarray:
        """Pixels where all six bands are non-fill, finite and positive."""
        self.require_bands()
        mask = np.ones(self.shape, dtype=bool)
        for b in BAND_NAMES:
            g = self.bands[b]
            mask &= g.valid_mask() & (g.values > 0)
        return mask


@dataclass(frozen=True, eq=False)
class TrainTestSplit:
    train: SampleTable
    test: SampleTable
    seed: int
    train_frac: float
    test_frac: float
    train_index: np.ndarray = field(default_factory=lambda: np.empty(0, np.int64))
    test_index: np.ndarray = field(default_factory=lambda: np.empty(0, np.int64))


@dataclass(frozen=True, eq=False)
class FeatureStats:
    """Population statistics of the six feature columns."""

    mean: np.ndarray
    sd: np.ndarray
    min: np.ndarray
    max: np.ndarray
    band_names: tuple[str, ...] = BAND_NAMES

    def apply(self, X: np.ndarray) -> np.ndarray:
        """``(x - mean) / sd`` per column; columns with ``sd == 0`` map to 0."""
        X = np.asarray(X, dtype=np.float64)
        safe = np.where(self.sd > 0, self.sd, 1.0)
        Z = (X - self.mean) / safe
        Z[:, self.sd == 0] = 0.0
        return Z

    def to_dict(self) -> dict:
        return {
            "band_names": list(self.band_names),
            "mean": self.mean.tolist(),
            "sd": self.sd.tolist(),
            "min": self.min.tolist(),
            "max": self.max.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureStats":
        arrs = [np.asarray(d[k], dtype=np.float64).reshape(-1) for k in ("mean", "sd", "min", "max")]
        names = tuple(d["band_names"])
        if any(a.shape != (len(names),) for a in arrs):
            raise SchemaError("statistics do not match the band list")
        return cls(*arrs, band_names=names)


# ---------------------------------------------------------------------------
# operations


def flatten_grid_stack(stack: GridStack) -> SampleTable:
    """Admissible pixels of a stack as a table, in row-major north-to-south order.

    A pixel is kept iff every band (and the chl plane, when present) is
    non-fill, finite and positive there.  ``table.pixels`` holds the
    ``(row, col)`` of each row.
    """
    mask = stack.valid_feature_mask()
    if stack.chl is not None:
        mask &= stack.chl.valid_mask() & (stack.chl.values > 0)
    rows, cols = np.nonzero(mask)
    X = stack.feature_planes()[rows, cols]
    if stack.chl is not None:
        y = stack.chl.values[rows, cols]
    else:
        y = np.full(rows.size, np.nan)
    return SampleTable(X, y, BAND_NAMES, np.column_stack([rows, cols]))


def shuffled_indices(n: int, seed: int) -> np.ndarray:
    """Seeded Fisher-Yates permutation of ``range(n)``.

    Step ``k`` (k = 0..n-2) swaps position ``i = n-1-k`` with
    ``j = floor(u_k * (i+1))``, ``u_k`` being draw ``k`` of the split stream.
    """
    if n <= 1:
        return np.arange(n, dtype=np.int64)
    key = rng.stream_key(seed, rng.SPLIT_STREAM)
    bounds = np.arange(n, 1, -1, dtype=np.int64)
    js = (rng.uniform(key, 0, n - 1) * bounds).astype(np.int64)
    js = np.minimum(js, bounds - 1)
    return _backend.kernels().fisher_yates(js)


def split_train_test(table: SampleTable, train_frac: float, test_frac: float,
                     seed: int) -> TrainTestSplit:
    """Shuffle the admissible rows, then take ``floor(f * N_valid)`` rows per side."""
    for name, f in (("train_frac", train_frac), ("test_frac", test_frac)):
        if not (0.0 <= f <= 1.0):
            raise ArgumentError(f"{name} must lie in [0, 1], got {f}")
    if train_frac + test_frac > 1.0:
        raise ArgumentError(f"train_frac + test_frac = {train_frac + test_frac} exceeds 1")
    table.require_target()
    valid = np.flatnonzero(table.admissible_mask())
    n = valid.size
    perm = valid[shuffled_indices(n, seed)]
    n_train = math.floor(train_frac * n)
    n_test = math.floor(test_frac * n)
    tr = perm[:n_train]
    te = perm[n_train:n_train + n_test]
    return TrainTestSplit(table.take(tr), table.take(te), int(seed), float(train_frac),
                          float(test_frac), tr, te)


def table_stats(table: SampleTable | np.ndarray) -> FeatureStats:
    X = table.rrs if isinstance(table, SampleTable) else np.asarray(table, dtype=np.float64)
    if X.shape[0] == 0:
        raise ArgumentError("statistics of an empty table are undefined")
    mean = X.mean(axis=0)
    sd = np.sqrt(((X - mean) ** 2).mean(axis=0))
    return FeatureStats(mean, sd, X.min(axis=0), X.max(axis=0))


def standardize(table: SampleTable, stats: FeatureStats) -> SampleTable:
    """Apply ``stats`` to the feature columns; the target column is untouched.

    Not idempotent: applying the same stats twice transforms twice.
    """
    if tuple(stats.band_names) != tuple(table.band_names):
        raise SchemaError("statistics were computed for a different band set")
    return SampleTable(stats.apply(table.rrs), table.chl, table.band_names, table.pixels)

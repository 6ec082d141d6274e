"""Metrics, density curves, composites, error maps and model comparison."""
from __future__ import annotations

import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import GeoGrid, TrainTestSplit, check_same_geometry
from .errors import ArgumentError, ChlError, DegenerateBandwidthError
from .estimators import EstimatorSpec, fit

RELATIVE_ERROR_FLOOR = 1e-6


def _pair(pred, truth, min_len: int) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(pred, dtype=np.float64).reshape(-1)
    t = np.asarray(truth, dtype=np.float64).reshape(-1)
    if p.size != t.size:
        raise ArgumentError(f"length mismatch: {p.size} predictions vs {t.size} targets")
    if p.size < min_len:
        raise ArgumentError(f"need at least {min_len} values, got {p.size}")
    return p, t


def mae(pred, truth) -> float:
    """Mean absolute error, in the units of the inputs (mg/m^3)."""
    p, t = _pair(pred, truth, 1)
    return float(np.abs(p - t).mean())


def r2_accuracy(pred, truth) -> float:
    """Coefficient of determination in percent; negative when worse than the mean."""
    p, t = _pair(pred, truth, 2)
    ss_tot = float(((t - t.mean()) ** 2).sum())
    if ss_tot == 0.0:
        raise ArgumentError("accuracy is undefined for a constant truth vector (zero variance)")
    ss_res = float(((t - p) ** 2).sum())
    return 100.0 * (1.0 - ss_res / ss_tot)


@dataclass(frozen=True)
class ReportRow:
    name: str
    mae: float
    accuracy: float
    n_test: int


@dataclass(frozen=True)
class EvaluationReport:
    rows: list[ReportRow]
    metadata: dict = field(default_factory=dict)

    def row(self, name: str) -> ReportRow:
        for r in self.rows:
            if r.name == name:
                return r
        raise KeyError(name)

    def to_csv(self) -> str:
        lines = ["model,mae,accuracy,n_test"]
        for r in self.rows:
            lines.append(f"{r.name},{r.mae!r},{r.accuracy!r},{r.n_test}")
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        name_w = max([len("Regression")] + [len(r.name) for r in self.rows])
        head = f"{'Regression':<{name_w}}  {'MAE (mg/m3)':>12}  {'Accuracy (%)':>12}  {'n_test':>7}"
        lines = [head, "-" * len(head)]
        for r in self.rows:
            lines.append(f"{r.name:<{name_w}}  {r.mae:>12.4f}  {r.accuracy:>12.2f}  {r.n_test:>7d}")
        return "\n".join(lines) + "\n"


def compare_models(specs: Sequence[EstimatorSpec], split: TrainTestSplit,
                   names: Optional[Sequence[str]] = None, n_jobs: int = 1,
                   dataset_id: str = "", predictions: Optional[dict] = None) -> EvaluationReport:
    """Fit every spec on ``split.train`` and score it on ``split.test``.

    Rows come back in input order.  When ``predictions`` is a dict it is
    filled with each model's test predictions keyed by name.
    """
    if len(split.train) == 0 or len(split.test) == 0:
        raise ArgumentError("both sides of the split must be non-empty")
    names = list(names) if names is not None else [s.kind for s in specs]
    if len(names) != len(specs):
        raise ArgumentError("one name per spec is required")
    truth = split.test.chl

    def run(i: int):
        try:
            model = fit(specs[i], split.train)
            return model.predict(split.test.rrs)
        except ChlError as exc:
            raise type(exc)(f"{names[i]}: {exc}") from exc

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            preds = list(pool.map(run, range(len(specs))))
    else:
        preds = [run(i) for i in range(len(specs))]
    rows = [ReportRow(n, mae(p, truth), r2_accuracy(p, truth), int(truth.size))
            for n, p in zip(names, preds)]
    if predictions is not None:
        predictions.update(zip(names, preds))
    meta = {"seed": split.seed, "train_frac": split.train_frac, "test_frac": split.test_frac,
            "n_train": len(split.train), "dataset": dataset_id}
    return EvaluationReport(rows, meta)


# ---------------------------------------------------------------------------
# kernel density


@dataclass(frozen=True, eq=False)
class DensityCurve:
    xs: np.ndarray
    ys: np.ndarray
    bandwidth: float
    n: int

    def integral(self) -> float:
        return float(np.trapezoid(self.ys, self.xs)) if hasattr(np, "trapezoid") \
            else float(np.trapz(self.ys, self.xs))

    def to_csv(self) -> str:
        lines = ["x,density"] + [f"{x!r},{y!r}" for x, y in zip(self.xs.tolist(), self.ys.tolist())]
        return "\n".join(lines) + "\n"


def silverman_bandwidth(values) -> float:
    """``0.9 * min(sd, IQR/1.34) * N**-0.2`` with population sd.

    When the IQR is zero but the data are not constant, ``sd`` is used alone.
    """
    v = np.asarray(values, dtype=np.float64).reshape(-1)
    if v.size < 2:
        raise DegenerateBandwidthError(f"need at least 2 values, got {v.size}")
    sd = float(v.std())
    if not sd > 0:
        raise DegenerateBandwidthError("bandwidth is undefined for constant data")
    q75, q25 = np.percentile(v, [75, 25])
    iqr = float(q75 - q25)
    spread = min(sd, iqr / 1.34) if iqr > 0 else sd
    return 0.9 * spread * v.size ** -0.2


def default_grid(values, bandwidth: float, n_points: int = 512) -> np.ndarray:
    v = np.asarray(values, dtype=np.float64)
    return np.linspace(v.min() - 3 * bandwidth, v.max() + 3 * bandwidth, n_points)


def kde_density(values, bandwidth: float, xs) -> DensityCurve:
    """Gaussian KDE ``f(x) = 1/(N h) sum phi((x - v_i) / h)`` evaluated on ``xs``."""
    if not (isinstance(bandwidth, (int, float, np.floating)) and bandwidth > 0
            and math.isfinite(bandwidth)):
        raise ArgumentError(f"bandwidth must be positive, got {bandwidth!r}")
    v = np.asarray(values, dtype=np.float64).reshape(-1)
    if v.size == 0:
        raise ArgumentError("no values to estimate a density from")
    xs = np.asarray(xs, dtype=np.float64).reshape(-1)
    if np.any(np.diff(xs) < 0):
        raise ArgumentError("evaluation points must be sorted")
    ys = np.zeros(xs.size)
    norm = 1.0 / (v.size * bandwidth * math.sqrt(2.0 * math.pi))
    for start in range(0, v.size, 4096):
        u = (xs[:, None] - v[None, start:start + 4096]) / bandwidth
        ys += np.exp(-0.5 * u * u).sum(axis=1)
    return DensityCurve(xs, ys * norm, float(bandwidth), int(v.size))


# ---------------------------------------------------------------------------
# grids


def composite_average(grids: Sequence[GeoGrid], return_counts: bool = False):
    """Per-pixel mean over the grids where the pixel is valid.

    Pixels invalid in every input are fill (taken from the first grid).
    With ``return_counts`` the per-pixel contribution count is returned too.
    """
    if not grids:
        raise ArgumentError("composite of zero grids")
    check_same_geometry(grids)
    ref = grids[0]
    total = np.zeros((ref.n_rows, ref.n_cols))
    count = np.zeros((ref.n_rows, ref.n_cols), dtype=np.int64)
    # sum in sorted-value order per pixel so the result ignores list order
    stack = np.stack([np.where(g.valid_mask(), g.values, np.nan) for g in grids])
    stack = np.sort(stack, axis=0)
    for layer in stack:
        ok = ~np.isnan(layer)
        total[ok] += layer[ok]
        count[ok] += 1
    out = np.full(total.shape, ref.fill_value)
    has = count > 0
    out[has] = total[has] / count[has]
    grid = ref.with_values(out)
    return (grid, count) if return_counts else grid


def relative_error_grid(pred: GeoGrid, truth: GeoGrid) -> GeoGrid:
    """Signed ``(pred - truth) / truth`` where both are valid and truth >= 1e-6."""
    check_same_geometry([pred, truth])
    ok = pred.valid_mask() & truth.valid_mask() & (truth.values >= RELATIVE_ERROR_FLOOR)
    out = np.full(truth.values.shape, truth.fill_value)
    out[ok] = (pred.values[ok] - truth.values[ok]) / truth.values[ok]
    return truth.with_values(out)


# Nine anchor colours sampled from matplotlib's viridis at 0, 1/8, ..., 1.
# Colours between anchors are linearly interpolated per channel and rounded.
RAMP = np.array([
    [68, 1, 84], [71, 44, 122], [59, 81, 139], [44, 113, 142], [33, 144, 141],
    [39, 173, 129], [92, 200, 99], [170, 220, 50], [253, 231, 37],
], dtype=np.float64)
FILL_COLOR = (128, 128, 128)


def ramp_color(t: np.ndarray) -> np.ndarray:
    t = np.clip(np.asarray(t, dtype=np.float64), 0.0, 1.0)
    pos = t * (len(RAMP) - 1)
    lo = np.minimum(np.floor(pos).astype(np.int64), len(RAMP) - 2)
    frac = (pos - lo)[..., None]
    rgb = RAMP[lo] * (1.0 - frac) + RAMP[lo + 1] * frac
    return np.rint(rgb).astype(np.uint8)


def render_map(grid: GeoGrid, lo: float = 0.01, hi: float = 10.0, scale: str = "log10") -> bytes:
    """Binary PPM (P6) of a grid; fill and non-finite pixels are neutral grey."""
    if scale not in ("log10", "linear"):
        raise ArgumentError(f"scale must be log10 or linear, got {scale!r}")
    if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
        raise ArgumentError(f"need finite lo < hi, got lo={lo}, hi={hi}")
    if scale == "log10" and not lo > 0:
        raise ArgumentError("log10 scale needs lo > 0")
    valid = grid.valid_mask()
    v = np.clip(np.where(valid, grid.values, lo), lo, hi)
    if scale == "log10":
        t = (np.log10(v) - math.log10(lo)) / (math.log10(hi) - math.log10(lo))
    else:
        t = (v - lo) / (hi - lo)
    rgb = ramp_color(t)
    rgb[~valid] = FILL_COLOR
    buf = io.BytesIO()
    buf.write(f"P6\n{grid.n_cols} {grid.n_rows}\n255\n".encode("ascii"))
    buf.write(np.ascontiguousarray(rgb, dtype=np.uint8).tobytes())
    return buf.getvalue()


__all__ = [
    "DensityCurve", "EvaluationReport", "ReportRow", "compare_models",
    "composite_average", "default_grid", "kde_density", "mae", "r2_accuracy",
    "relative_error_grid", "render_map", "silverman_bandwidth",
]

"""Desk-scale synthetic reflectance/chlorophyll data and the comparison benchmark.

Forward model, per sample:

* ``R ~ U[-0.3, 1.0]`` and one numerator band drawn uniformly from 443/490/510;
* ``rrs_555 = 0.005``, the drawn band ``= rrs_555 * 10**R``, the two other
  numerator bands ``= 0.45 * rrs_555`` (below ``10**-0.3 * rrs_555``, so the
  maximum ratio always picks the drawn band), ``rrs_412 = 0.6 * rrs_555``,
  ``rrs_670 = 0.08 * rrs_555``;
* ``chl`` = band-ratio polynomial of the noise-free bands;
* every band is then multiplied by ``exp(noise * z)``, ``z`` standard normal
  (Box-Muller over the stream's uniforms).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import rng
from .baseline import PAPER, BandRatioCoeffs, baseline_chl
from .core import BAND_NAMES, SampleTable, TrainTestSplit, split_train_test
from .errors import ArgumentError
from .estimators import EstimatorSpec, default_specs
from .evaluation import EvaluationReport, compare_models, mae, r2_accuracy

RRS_555 = 0.005
OTHER_NUMERATOR_FRACTION = 0.45
RRS_412_FRACTION = 0.6
RRS_670_FRACTION = 0.08
R_RANGE = (-0.3, 1.0)
NUMERATORS = ("rrs_443", "rrs_490", "rrs_510")


def generate(n: int, noise: float, seed: int, coeffs: BandRatioCoeffs = PAPER) -> SampleTable:
    if n < 1:
        raise ArgumentError("n must be positive")
    if not noise >= 0:
        raise ArgumentError("noise must be >= 0")
    key = rng.stream_key(seed, rng.SYNTH_STREAM)
    lo, hi = R_RANGE
    R = lo + (hi - lo) * rng.uniform(key, 0, n)
    pick = rng.bounded(key, n, n, len(NUMERATORS))

    X = np.empty((n, len(BAND_NAMES)))
    col = {b: i for i, b in enumerate(BAND_NAMES)}
    X[:, col["rrs_555"]] = RRS_555
    X[:, col["rrs_412"]] = RRS_412_FRACTION * RRS_555
    X[:, col["rrs_670"]] = RRS_670_FRACTION * RRS_555
    for k, b in enumerate(NUMERATORS):
        X[:, col[b]] = np.where(pick == k, RRS_555 * 10.0 ** R, OTHER_NUMERATOR_FRACTION * RRS_555)
    chl = baseline_chl(X, coeffs)

    if noise > 0:
        m = n * len(BAND_NAMES)
        u1 = 1.0 - rng.uniform(key, 2 * n, m)
        u2 = rng.uniform(key, 2 * n + m, m)
        z = np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)
        X = X * np.exp(noise * z.reshape(n, len(BAND_NAMES)))
    return SampleTable(X, chl)


@dataclass
class BenchResult:
    report: EvaluationReport
    split: TrainTestSplit
    baseline_mae: float
    baseline_accuracy: float
    paths: dict = field(default_factory=dict)

    def summary(self) -> dict:
        out = {"n_train": len(self.split.train), "n_test": len(self.split.test),
               "baseline_mae": f"{self.baseline_mae:.6g}"}
        for r in self.report.rows:
            out[f"{r.name}_mae"] = f"{r.mae:.6g}"
            out[f"{r.name}_acc"] = f"{r.accuracy:.4g}"
        return out


def run_synthetic_benchmark(n: int, noise: float, seed: int,
                            out_dir: Optional[str | Path] = None, *,
                            train_frac: float = 0.05, test_frac: float = 0.01,
                            coeffs: BandRatioCoeffs = PAPER,
                            specs: Optional[Sequence[EstimatorSpec]] = None) -> BenchResult:
    """Generate, split with the 5 % / 1 % protocol, compare the estimators.

    With ``out_dir`` the table, both split tables and the report (CSV and
    text) are written there.
    """
    from .formats import save_table

    if n < 1000:
        raise ArgumentError(f"the benchmark needs n >= 1000, got {n}")
    table = generate(n, noise, seed, coeffs)
    split = split_train_test(table, train_frac, test_frac, seed)
    specs = list(specs) if specs is not None else default_specs(seed)
    report = compare_models(specs, split, dataset_id=f"synthetic(n={n},noise={noise},seed={seed})")
    base = baseline_chl(split.test.rrs, coeffs)
    result = BenchResult(report, split, mae(base, split.test.chl),
                         r2_accuracy(base, split.test.chl))
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {"table": out / "synthetic.csv", "train": out / "train.csv",
                 "test": out / "test.csv", "report": out / "report.csv",
                 "report_text": out / "report.txt"}
        save_table(paths["table"], table)
        save_table(paths["train"], split.train)
        save_table(paths["test"], split.test)
        paths["report"].write_text(report.to_csv(), encoding="utf-8")
        text = report.to_text() + (f"\nOC4 baseline: mae={result.baseline_mae:.4f} "
                                   f"accuracy={result.baseline_accuracy:.2f}\n")
        paths["report_text"].write_text(text, encoding="utf-8")
        result.paths = {k: str(v) for k, v in paths.items()}
    return result

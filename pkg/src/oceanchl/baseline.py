"""Maximum-band-ratio polynomial chlorophyll algorithm (OC4-style).

``R = log10(max_k rrs(num_k) / rrs(den))`` and
``chl = 10 ** (a0 + a1 R + a2 R^2 + a3 R^3 + a4 R^4)``.

Two coefficient sets ship: ``PAPER`` carries the cubic term as 6.049, while
``CANONICAL`` uses the widely published OC4V4 value 0.649.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import BAND_NAMES, GeoGrid, GridStack, Sample, band_name
from .errors import ArgumentError, DomainError, SchemaError


@dataclass(frozen=True)
class BandRatioCoeffs:
    a: tuple[float, float, float, float, float]
    numerator_bands: tuple[int, ...] = (443, 490, 510)
    denominator_band: int = 555

    def __post_init__(self):
        a = tuple(float(v) for v in self.a)
        if len(a) != 5 or not all(math.isfinite(v) for v in a):
            raise ArgumentError("exactly five finite polynomial coefficients are required")
        num = tuple(int(b) for b in self.numerator_bands)
        den = int(self.denominator_band)
        if not num:
            raise ArgumentError("at least one numerator band is required")
        if den in num or len(set(num)) != len(num):
            raise ArgumentError("numerator bands must be distinct and exclude the denominator")
        for b in num + (den,):
            if band_name(b) not in BAND_NAMES:
                raise SchemaError(f"unknown band {b}")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "numerator_bands", num)
        object.__setattr__(self, "denominator_band", den)

    @property
    def required_bands(self) -> list[str]:
        return [band_name(b) for b in self.numerator_bands + (self.denominator_band,)]

    def to_json(self) -> dict:
        return {"a": list(self.a), "numerator": list(self.numerator_bands),
                "denominator": self.denominator_band}

    @classmethod
    def from_json(cls, d: dict) -> "BandRatioCoeffs":
        try:
            return cls(tuple(d["a"]), tuple(d["numerator"]), d["denominator"])
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ArgumentError):
                raise
            raise SchemaError(f"bad coefficient object: {exc}") from exc


PAPER = BandRatioCoeffs((0.366, -3.067, 1.930, 6.049, -1.532))
CANONICAL = BandRatioCoeffs((0.366, -3.067, 1.930, 0.649, -1.532))
NAMED = {"paper": PAPER, "canonical": CANONICAL}


def load_coeffs(name_or_path: str) -> BandRatioCoeffs:
    """``paper``, ``canonical`` or a path to a JSON coefficient object."""
    if name_or_path in NAMED:
        return NAMED[name_or_path]
    try:
        doc = json.loads(Path(name_or_path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"coefficient file is not JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise SchemaError("coefficient file must hold a JSON object")
    return BandRatioCoeffs.from_json(doc)


def max_band_ratio(sample: Sample | Sequence[float], coeffs: BandRatioCoeffs = PAPER) -> float:
    """log10 of the largest numerator/denominator reflectance ratio."""
    rrs = sample.rrs if isinstance(sample, Sample) else tuple(sample)
    X = np.asarray([rrs], dtype=np.float64)
    _check_positive(X, coeffs)
    return float(max_band_ratio_array(X, coeffs)[0])


def _check_positive(X: np.ndarray, coeffs: BandRatioCoeffs) -> None:
    cols = [BAND_NAMES.index(b) for b in coeffs.required_bands]
    bad = ~(X[:, cols] > 0)
    if bad.any():
        raise DomainError("band-ratio bands must be > 0")


def max_band_ratio_array(X: np.ndarray, coeffs: BandRatioCoeffs = PAPER) -> np.ndarray:
    """Row-wise R for an ``(n, 6)`` array; rows must already be positive."""
    den = X[:, BAND_NAMES.index(band_name(coeffs.denominator_band))]
    best = None
    for b in coeffs.numerator_bands:
        r = X[:, BAND_NAMES.index(band_name(b))] / den
        best = r if best is None else np.maximum(best, r)
    return np.log10(best)


def polynomial_chl(R, coeffs: BandRatioCoeffs = PAPER):
    """``10 ** poly(R)`` by Horner's scheme; scalar in, scalar out."""
    a0, a1, a2, a3, a4 = coeffs.a
    R = np.asarray(R, dtype=np.float64)
    if not np.isfinite(R).all():
        raise DomainError("R must be finite")
    # scalars go through the 1-d ufunc loops too, so they match array results bitwise
    r = R.reshape(-1)
    p = (((a4 * r + a3) * r + a2) * r + a1) * r + a0
    out = (10.0 ** p).reshape(R.shape)
    return float(out[()]) if out.ndim == 0 else out


def baseline_chl(X: np.ndarray, coeffs: BandRatioCoeffs = PAPER) -> np.ndarray:
    """Chlorophyll for each row of an ``(n, 6)`` positive reflectance array."""
    X = np.asarray(X, dtype=np.float64)
    _check_positive(X, coeffs)
    return polynomial_chl(max_band_ratio_array(X, coeffs), coeffs)


def baseline_grid(stack: GridStack, coeffs: BandRatioCoeffs = PAPER) -> GeoGrid:
    """Per-pixel band-ratio chlorophyll; invalid pixels become fill."""
    stack.require_bands(coeffs.required_bands)
    ref = stack.reference
    mask = np.ones(stack.shape, dtype=bool)
    for b in coeffs.required_bands:
        g = stack.bands[b]
        mask &= g.valid_mask() & (g.values > 0)
    X = np.ones(stack.shape + (len(BAND_NAMES),))
    for b in coeffs.required_bands:
        X[..., BAND_NAMES.index(b)] = stack.bands[b].values
    out = np.full(stack.shape, ref.fill_value, dtype=np.float64)
    if mask.any():
        out[mask] = polynomial_chl(max_band_ratio_array(X[mask], coeffs), coeffs)
    return ref.with_values(out)

"""Empirical measures, synthetic samplers and batch constructions.

Every random draw goes through :class:`RngSeed`, which derives an independent
Philox (counter-based) stream from a master seed and a stream path, so the
same ``(master, stream)`` always yields bit-identical samples.
"""

from __future__ import annotations

import functools
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Union

import numpy as np

from .errors import IngestionError, ValidationError

WEIGHT_SUM_TOL = 1e-12
FILE_WEIGHT_TOL = 1e-6


@dataclass(frozen=True)
class RngSeed:
    """Master seed plus a stream path; ``child`` descends one level."""

    master: int
    stream: int = 0
    path: tuple[int, ...] = ()

    def __post_init__(self):
        if self.master < 0 or self.stream < 0 or any(p < 0 for p in self.path):
            raise ValidationError("seed components must be nonnegative")

    def child(self, index: int) -> "RngSeed":
        return replace(self, path=self.path + (int(index),))

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.master, spawn_key=(self.stream, *self.path))
        return np.random.Generator(np.random.Philox(ss))


def as_generator(rng) -> np.random.Generator:
    """Accept an :class:`RngSeed`, an ``int`` master seed or a live generator."""
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngSeed):
        return rng.generator()
    if isinstance(rng, (int, np.integer)):
        return RngSeed(int(rng)).generator()
    raise ValidationError(f"cannot build a random generator from {type(rng).__name__}")


class EmpiricalMeasure:
    """Weighted finite point cloud in R^d.

    Points are stored as an ``(n, d)`` float64 array and weights as an ``(n,)``
    array summing to one. Both arrays are made read-only on construction.
    """

    __slots__ = ("points", "weights")

    def __init__(self, points, weights=None):
        pts = np.array(points, dtype=np.float64)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] < 1:
            raise ValidationError(f"points must be a nonempty (n, d) array, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValidationError("points contain NaN or Inf")
        n = pts.shape[0]
        if weights is None:
            w = np.full(n, 1.0 / n)
        else:
            w = np.array(weights, dtype=np.float64).reshape(-1)
            if w.shape[0] != n:
                raise ValidationError(f"{w.shape[0]} weights for {n} points")
            if not np.all(np.isfinite(w)) or np.any(w < 0):
                raise ValidationError("weights must be finite and nonnegative")
            if abs(w.sum() - 1.0) > WEIGHT_SUM_TOL:
                raise ValidationError(f"weights sum to {w.sum()!r}, expected 1")
        pts.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    def __setattr__(self, name, value):
        raise AttributeError("EmpiricalMeasure is immutable")

    @classmethod
    def from_unnormalized(cls, points, weights) -> "EmpiricalMeasure":
        w = np.asarray(weights, dtype=np.float64)
        total = w.sum()
        if not np.isfinite(total) or total <= 0:
            raise ValidationError("weights must have a positive finite sum")
        return cls(points, w / total)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def is_uniform(self) -> bool:
        return bool(np.all(self.weights == self.weights[0]))

    def mean(self) -> np.ndarray:
        return self.weights @ self.points

    def __repr__(self):
        return f"EmpiricalMeasure(n={self.n}, d={self.dim}, uniform={self.is_uniform})"


# -- distribution specs -----------------------------------------------------


@dataclass(frozen=True)
class StandardGaussian:
    dim: int

    def __post_init__(self):
        if self.dim < 1:
            raise ValidationError("StandardGaussian needs dim >= 1")

    def draw(self, n: int, gen: np.random.Generator) -> np.ndarray:
        return gen.standard_normal((n, self.dim))


@dataclass(frozen=True)
class GaussianMixture:
    centers: np.ndarray = field(repr=False)
    stds: np.ndarray = field(repr=False)
    mix_weights: np.ndarray = field(repr=False)

    def __post_init__(self):
        c = np.atleast_2d(np.asarray(self.centers, dtype=np.float64))
        s = np.asarray(self.stds, dtype=np.float64).reshape(-1)
        w = np.asarray(self.mix_weights, dtype=np.float64).reshape(-1)
        if not (c.shape[0] == s.shape[0] == w.shape[0]):
            raise ValidationError("centers, stds and mix_weights must have equal length")
        if np.any(s <= 0):
            raise ValidationError("mixture stds must be positive")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ValidationError("mixture weights must be nonnegative and sum to 1")
        object.__setattr__(self, "centers", c)
        object.__setattr__(self, "stds", s)
        object.__setattr__(self, "mix_weights", w)

    @property
    def dim(self) -> int:
        return self.centers.shape[1]

    def draw_labeled(self, n: int, gen: np.random.Generator):
        labels = gen.choice(len(self.mix_weights), size=n, p=self.mix_weights)
        noise = gen.standard_normal((n, self.dim))
        return self.centers[labels] + self.stds[labels, None] * noise, labels

    def draw(self, n: int, gen: np.random.Generator) -> np.ndarray:
        return self.draw_labeled(n, gen)[0]


@dataclass(frozen=True)
class Bernoulli:
    theta: float

    def __post_init__(self):
        if not 0.0 <= self.theta <= 1.0:
            raise ValidationError(f"Bernoulli parameter {self.theta} outside [0, 1]")

    dim = 1

    def draw(self, n: int, gen: np.random.Generator) -> np.ndarray:
        return (gen.random(n) < self.theta).astype(np.float64)[:, None]


@dataclass(frozen=True)
class FromFile:
    """Resample (with replacement) the rows of a point-cloud file."""

    path: str
    skip_header: bool = False
    weight_column: bool = False

    def measure(self) -> EmpiricalMeasure:
        try:
            mtime = os.stat(self.path).st_mtime_ns
        except OSError as exc:
            raise IngestionError(f"cannot read {self.path}: {exc.strerror}") from exc
        return _load_cached(str(self.path), self.skip_header, self.weight_column, mtime)

    def draw(self, n: int, gen: np.random.Generator) -> np.ndarray:
        m = self.measure()
        idx = gen.choice(m.n, size=n, p=m.weights)
        return m.points[idx]


@functools.lru_cache(maxsize=8)
def _load_cached(path, skip_header, weight_column, _mtime):
    return load_measure(path, skip_header=skip_header, weight_column=weight_column)


DistributionSpec = Union[StandardGaussian, GaussianMixture, Bernoulli, FromFile]


def eight_mode_mixture(radius: float = 2.0, std: float = 0.05, modes: int = 8) -> GaussianMixture:
    """Equal-weight isotropic modes equally spaced on a circle."""
    angles = 2 * np.pi * np.arange(modes) / modes
    centers = radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    return GaussianMixture(centers, np.full(modes, std), np.full(modes, 1.0 / modes))


def sample(spec: DistributionSpec, n: int, rng) -> EmpiricalMeasure:
    """Draw ``n`` i.i.d. points from ``spec`` as a uniform empirical measure."""
    if n < 1:
        raise ValidationError("sample size must be >= 1")
    gen = as_generator(rng)
    return EmpiricalMeasure(spec.draw(int(n), gen))


def subsample(m: EmpiricalMeasure, n: int, rng, replace: bool = False) -> EmpiricalMeasure:
    """Mini-batch of ``n`` atoms of a finite measure, drawn according to its weights."""
    gen = as_generator(rng)
    if not replace and n > m.n:
        raise ValidationError(f"cannot draw {n} atoms without replacement from {m.n}")
    if m.is_uniform and not replace:
        idx = gen.choice(m.n, size=n, replace=False)
    else:
        idx = gen.choice(m.n, size=n, replace=replace, p=m.weights)
    return EmpiricalMeasure(m.points[idx])


def load_measure(path, skip_header: bool = False, weight_column: bool = False) -> EmpiricalMeasure:
    """Read one point per row from a comma- or whitespace-separated file.

    With ``weight_column`` the last column holds nonnegative weights. Weights
    summing to 1 within ``1e-6`` are renormalized exactly; anything further
    off is rejected.
    """
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise IngestionError(f"cannot read {p}: {exc.strerror or exc}") from exc
    rows = []
    width = None
    lines = text.splitlines()
    for lineno, line in enumerate(lines, start=1):
        if skip_header and lineno == 1:
            continue
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        tokens = stripped.replace(",", " ").split()
        try:
            row = [float(t) for t in tokens]
        except ValueError as exc:
            raise IngestionError(f"{p}: row {lineno}: non-numeric token ({exc})") from exc
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise IngestionError(f"{p}: row {lineno}: expected {width} values, found {len(row)}")
        rows.append(row)
    if not rows:
        raise IngestionError(f"{p}: no rows")
    data = np.asarray(rows, dtype=np.float64)
    if not np.all(np.isfinite(data)):
        bad = int(np.argwhere(~np.isfinite(data))[0, 0])
        raise IngestionError(f"{p}: data row {bad + 1}: non-finite value")
    if not weight_column:
        return EmpiricalMeasure(data)
    if data.shape[1] < 2:
        raise IngestionError(f"{p}: weight column requested but rows have a single value")
    pts, w = data[:, :-1], data[:, -1]
    if np.any(w < 0):
        raise IngestionError(f"{p}: data row {int(np.argmax(w < 0)) + 1}: negative weight")
    total = w.sum()
    if abs(total - 1.0) > FILE_WEIGHT_TOL:
        raise IngestionError(f"{p}: weights sum to {total!r}, not 1 within {FILE_WEIGHT_TOL}")
    return EmpiricalMeasure(pts, w / total)


def save_measure(m: EmpiricalMeasure, path, weight_column: bool = False) -> None:
    arr = np.column_stack([m.points, m.weights]) if weight_column else m.points
    with open(path, "w") as fh:
        for row in arr:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def mean_batch(m: EmpiricalMeasure, n: int) -> EmpiricalMeasure:
    """``n`` copies of the weighted mean of ``m``."""
    if n < 1:
        raise ValidationError("mean batch size must be >= 1")
    return EmpiricalMeasure(np.repeat(m.mean()[None, :], n, axis=0))

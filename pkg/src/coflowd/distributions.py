"""Flow-size distributions parameterized by mean and coefficient of variation.

Every family is described by a :class:`SizeSpec`.  ``sample`` draws one
value, ``sample_many`` draws a vector; both take an externally owned
``numpy.random.Generator`` so streams are reproducible per worker.

Normal sizes are resampled until strictly positive, which shifts the
realized mean upward for large CV.  ``spec_moments`` returns the moments of
the distribution that is actually sampled (truncated where relevant);
``nominal`` mean/CV stay available on the spec itself.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, NamedTuple

import numpy as np

FAMILIES = ("fixed", "gamma", "normal", "pareto", "empirical")


class ConfigError(ValueError):
    """Invalid distribution or instance configuration."""


@dataclass(frozen=True)
class SizeSpec:
    family: str
    mean: float = 0.0
    cv: float = 0.0
    table: tuple[tuple[float, float], ...] | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown size family {self.family!r}")
        if self.family == "empirical":
            if not self.table:
                raise ConfigError("empirical size spec needs a non-empty table")
            total = sum(p for _, p in self.table)
            if abs(total - 1.0) > 1e-9:
                raise ConfigError(f"empirical probabilities sum to {total}, not 1")
            if any(v < 0 or p < 0 for v, p in self.table):
                raise ConfigError("empirical table entries must be nonnegative")
            mean = sum(v * p for v, p in self.table)
            var = sum(p * (v - mean) ** 2 for v, p in self.table)
            # derived, so keep them consistent with the table
            object.__setattr__(self, "mean", mean)
            object.__setattr__(self, "cv", math.sqrt(var) / mean if mean > 0 else 0.0)
            if mean <= 0:
                raise ConfigError("empirical table has zero mean")
            return
        if not self.mean > 0:
            raise ConfigError(f"size mean must be positive, got {self.mean}")
        if self.cv < 0:
            raise ConfigError(f"coefficient of variation must be >= 0, got {self.cv}")

    @classmethod
    def fixed(cls, value: float) -> "SizeSpec":
        return cls("fixed", float(value), 0.0)

    @property
    def is_degenerate(self) -> bool:
        if self.family == "empirical":
            return len(self.table) == 1
        return self.family == "fixed" or self.cv == 0.0

    def to_json(self):
        if self.family == "empirical":
            return {"family": "empirical", "table": [[v, p] for v, p in self.table]}
        if self.family == "fixed":
            return {"family": "fixed", "mean": self.mean}
        return {"family": self.family, "mean": self.mean, "cv": self.cv}

    @classmethod
    def from_json(cls, obj) -> "SizeSpec":
        if isinstance(obj, (int, float)):
            return cls.fixed(obj)
        fam = obj.get("family")
        if fam == "empirical":
            return cls("empirical", table=tuple((float(v), float(p)) for v, p in obj["table"]))
        return cls(fam, float(obj["mean"]), float(obj.get("cv", 0.0)))


class Params(NamedTuple):
    """Internal parameters of a family. Unused slots are ``nan``."""
    family: str
    shape: float = math.nan
    scale: float = math.nan
    loc: float = math.nan


def moments_to_params(spec: SizeSpec) -> Params:
    """Convert (mean, CV) into the family's native parameters.

    gamma: shape 1/cv**2, scale mean*cv**2.  normal: (mean, cv*mean).
    pareto: shape 1 + sqrt(1 + 1/cv**2), scale mean*(shape-1)/shape.
    A zero CV collapses every family to ``fixed``.
    """
    if spec.family == "empirical":
        return Params("empirical")
    if spec.is_degenerate:
        return Params("fixed", loc=spec.mean)
    m, eta = spec.mean, spec.cv
    if spec.family == "gamma":
        return Params("gamma", shape=1.0 / eta**2, scale=m * eta**2)
    if spec.family == "normal":
        return Params("normal", loc=m, scale=eta * m)
    # pareto: positive root of cv**2 = 1 / (z (z - 2))
    z = 1.0 + math.sqrt(1.0 + 1.0 / eta**2)
    return Params("pareto", shape=z, scale=m * (z - 1.0) / z)


def _phi(x):
    return math.exp(-0.5 * x * x) / math.sqrt(2 * math.pi)


def _upper_tail(x):
    return 0.5 * math.erfc(x / math.sqrt(2))


def analytic_moments(params: Params) -> tuple[float, float]:
    """(mean, cv) implied by native parameters, untruncated."""
    if params.family == "fixed":
        return params.loc, 0.0
    if params.family == "gamma":
        return params.shape * params.scale, 1.0 / math.sqrt(params.shape)
    if params.family == "normal":
        return params.loc, params.scale / params.loc
    if params.family == "pareto":
        z, xm = params.shape, params.scale
        mean = z * xm / (z - 1)
        return mean, math.sqrt(1.0 / (z * (z - 2)))
    raise ConfigError("empirical specs carry no native parameters")


def spec_moments(spec: SizeSpec) -> tuple[float, float]:
    """(mean, std) of the distribution actually sampled.

    Differs from the nominal (mean, cv*mean) only for normal specs, whose
    samples are conditioned on being positive.
    """
    if spec.family == "normal" and not spec.is_degenerate:
        mu, sd = spec.mean, spec.cv * spec.mean
        a = -mu / sd
        tail = _upper_tail(a)
        lam = _phi(a) / tail
        mean = mu + sd * lam
        var = sd * sd * (1 + a * lam - lam * lam)
        return mean, math.sqrt(var)
    return spec.mean, spec.cv * spec.mean


def expected_size(spec: SizeSpec) -> float:
    return spec_moments(spec)[0]


def sample_many(spec: SizeSpec, rng: np.random.Generator, size: int) -> np.ndarray:
    """Draw ``size`` i.i.d. values; all > 0 except empirical zero entries."""
    p = moments_to_params(spec)
    if p.family == "fixed":
        return np.full(size, p.loc, dtype=float)
    if p.family == "gamma":
        return rng.gamma(p.shape, p.scale, size)
    if p.family == "pareto":
        return p.scale * (1.0 + rng.pareto(p.shape, size))
    if p.family == "normal":
        out = rng.normal(p.loc, p.scale, size)
        bad = out <= 0
        while bad.any():
            out[bad] = rng.normal(p.loc, p.scale, int(bad.sum()))
            bad = out <= 0
        return out
    values = np.array([v for v, _ in spec.table])
    probs = np.array([q for _, q in spec.table])
    return values[rng.choice(len(values), size=size, p=probs / probs.sum())]


def sample(spec: SizeSpec, rng: np.random.Generator) -> float:
    return float(sample_many(spec, rng, 1)[0])


def empirical_from_trace(sizes: Iterable[float]) -> SizeSpec:
    """Empirical spec whose table is the frequency table of observed sizes."""
    sizes = [float(s) for s in sizes]
    if not sizes:
        raise ConfigError("cannot build an empirical distribution from an empty trace")
    counts = Counter(sizes)
    n = len(sizes)
    table = tuple((v, c / n) for v, c in sorted(counts.items()))
    # re-normalize away float drift so the 1e-9 check never trips
    drift = 1.0 - sum(p for _, p in table)
    if drift:
        v0, p0 = table[-1]
        table = table[:-1] + ((v0, p0 + drift),)
    return SizeSpec("empirical", table=table)

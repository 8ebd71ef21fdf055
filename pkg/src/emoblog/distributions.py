"""Discrete probability tables used for delays, lifetimes and new-post rates."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .model import LogFormatError


class EmptyDistributionError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class DiscreteDistribution:
    """Finite table ``value -> probability``.

    Values are sorted ascending and probabilities normalised on construction.
    ``label`` records where the table came from (``"empirical"`` or the name
    of a parametric fallback).
    """

    values: np.ndarray
    probs: np.ndarray
    label: str = "empirical"

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).ravel()
        probs = np.asarray(self.probs, dtype=float).ravel()
        if len(values) == 0:
            raise EmptyDistributionError("distribution has no support")
        if len(values) != len(probs):
            raise ValueError("values and probs differ in length")
        if np.any(probs < 0) or not np.all(np.isfinite(probs)):
            raise ValueError("probabilities must be finite and nonnegative")
        total = probs.sum()
        if total <= 0:
            raise EmptyDistributionError("probabilities sum to zero")
        order = np.argsort(values, kind="stable")
        values, probs = values[order], probs[order] / total
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "probs", probs)
        cdf = np.cumsum(probs)
        cdf[-1] = 1.0
        object.__setattr__(self, "_cdf", cdf)

    @classmethod
    def from_samples(cls, samples, label: str = "empirical") -> "DiscreteDistribution":
        samples = np.asarray(samples, dtype=float)
        if samples.size == 0:
            raise EmptyDistributionError("no samples")
        values, counts = np.unique(samples, return_counts=True)
        return cls(values, counts, label)

    @classmethod
    def power_law(cls, exponent: float, lo: int, hi: int, shift: float = 0.0,
                  label: str | None = None) -> "DiscreteDistribution":
        """Integers ``lo..hi`` with P(x) proportional to ``(x + shift)**-exponent``."""
        if hi < lo:
            raise ValueError("hi < lo")
        x = np.arange(lo, hi + 1, dtype=float)
        if np.any(x + shift <= 0):
            raise ValueError("x + shift must stay positive")
        return cls(x, (x + shift) ** -exponent, label or f"power_law({exponent},{lo},{hi},{shift})")

    def sample(self, rng: np.random.Generator, size=None):
        u = rng.random(size)
        idx = np.searchsorted(self._cdf, u, side="right")
        idx = np.minimum(idx, len(self.values) - 1)
        return self.values[idx]

    def mean(self) -> float:
        return float(np.dot(self.values, self.probs))

    def cdf(self, x) -> np.ndarray:
        idx = np.searchsorted(self.values, x, side="right")
        out = np.concatenate(([0.0], self._cdf))
        return out[idx]

    def log_binned(self, factor: float = 2.0) -> tuple[np.ndarray, np.ndarray]:
        """Probability mass per geometric bin.

        Bin edges are 0, 1, factor, factor**2, ... so a value of 0 lands in
        its own first bin. Returns (edges, mass) with ``len(edges) ==
        len(mass) + 1``.
        """
        edges = log_bin_edges(max(self.values.max(), 1.0), factor)
        return edges, _bin_mass(self.values, self.probs, edges)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("value", "probability"))
            for x, p in zip(self.values, self.probs):
                w.writerow((_num(x), repr(float(p))))

    @classmethod
    def from_csv(cls, path: str | Path) -> "DiscreteDistribution":
        values, probs = [], []
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or [h.strip() for h in header] != ["value", "probability"]:
                raise LogFormatError("expected header value,probability", 1)
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                try:
                    values.append(float(row[0]))
                    probs.append(float(row[1]))
                except (ValueError, IndexError):
                    raise LogFormatError(f"bad row {row!r}", lineno) from None
        return cls(np.array(values), np.array(probs), label=f"file:{Path(path).name}")


def _num(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(float(x))


def log_bin_edges(xmax: float, factor: float = 2.0) -> np.ndarray:
    edges = [0.0, 1.0]
    while edges[-1] <= xmax:
        edges.append(edges[-1] * factor)
    return np.array(edges)


def _bin_mass(values, probs, edges):
    idx = np.searchsorted(edges, values, side="right") - 1
    idx = np.clip(idx, 0, len(edges) - 2)
    return np.bincount(idx, weights=probs, minlength=len(edges) - 1)


def total_variation(p: DiscreteDistribution, q: DiscreteDistribution,
                    log_bin_factor: float | None = 2.0) -> float:
    """Total-variation distance, optionally after geometric binning of both."""
    if log_bin_factor is None:
        support = np.union1d(p.values, q.values)
        pm = np.zeros(len(support))
        qm = np.zeros(len(support))
        pm[np.searchsorted(support, p.values)] = p.probs
        qm[np.searchsorted(support, q.values)] = q.probs
    else:
        edges = log_bin_edges(max(p.values.max(), q.values.max(), 1.0), log_bin_factor)
        pm = _bin_mass(p.values, p.probs, edges)
        qm = _bin_mass(q.values, q.probs, edges)
    return 0.5 * float(np.abs(pm - qm).sum())


# Labelled stand-ins for when no empirical tables are supplied. The shapes
# follow the qualitative look of the published histograms; none of the
# numbers are measured values.

def default_delay_distribution() -> DiscreteDistribution:
    # Exponent 1 keeps the renewal rate falling off with time so idle agents
    # drift out; 1.5 lets every agent come back often and activity runs away.
    return DiscreteDistribution.power_law(1.0, 1, 100_000, label="fallback:delay")


def default_lifetime_distribution(t0: int) -> DiscreteDistribution:
    return DiscreteDistribution.power_law(1.2, int(t0), 100_000, label="fallback:lifetime")


def default_g_distribution() -> DiscreteDistribution:
    g = np.arange(1, 21) / 20.0
    nonzero = 0.1 * (1.0 / g) / (1.0 / g).sum()
    return DiscreteDistribution(np.concatenate(([0.0], g)), np.concatenate(([0.9], nonzero)),
                                label="fallback:g")

"""Observables of a run: time series, spectra, degree statistics, circumplex maps."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import optimize
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .model import BipartiteGraph, CommentEvent

SERIES_NAMES = ("N_c", "N_plus", "N_minus", "Q", "N_ap", "N_au")


class FitRefused(ValueError):
    """Not enough usable points for a fit."""


# --------------------------------------------------------------------------
# time series


@dataclass
class SeriesBundle:
    N_c: np.ndarray
    N_plus: np.ndarray
    N_minus: np.ndarray
    Q: np.ndarray
    N_ap: np.ndarray
    N_au: np.ndarray
    t0: int = 0

    def __len__(self):
        return len(self.N_c)

    def __getitem__(self, name: str) -> np.ndarray:
        if name not in SERIES_NAMES:
            raise KeyError(name)
        return getattr(self, name)

    def rows(self):
        for k in range(len(self)):
            yield (self.t0 + k, *(int(getattr(self, n)[k]) for n in SERIES_NAMES))


def build_series(events: Iterable[CommentEvent], n_bins: int | None = None,
                 t0: int = 0) -> SeriesBundle:
    """Per-bin counts from an event log.

    ``N_ap`` counts distinct posts that received an event in the bin and
    ``N_au`` distinct acting agents. Bins run from ``t0`` to ``t0 + n_bins - 1``
    (default: up to the last event).
    """
    ev = list(events)
    t = np.array([e.time for e in ev], dtype=np.int64) - t0
    if n_bins is None:
        n_bins = int(t.max()) + 1 if len(t) else 0
    keep = (t >= 0) & (t < n_bins)
    cls = np.array([e.valence_class for e in ev], dtype=np.int64)
    agents = np.array([e.agent for e in ev], dtype=np.int64)
    posts = np.array([e.post for e in ev], dtype=np.int64)
    t, cls, agents, posts = t[keep], cls[keep], agents[keep], posts[keep]
    n_c = np.bincount(t, minlength=n_bins)
    n_plus = np.bincount(t[cls > 0], minlength=n_bins)
    n_minus = np.bincount(t[cls < 0], minlength=n_bins)

    def distinct(ids):
        if len(t) == 0:
            return np.zeros(n_bins, dtype=np.int64)
        pairs = np.unique(np.stack((t, ids)), axis=1)
        return np.bincount(pairs[0], minlength=n_bins)

    return SeriesBundle(n_c, n_plus, n_minus, n_plus - n_minus, distinct(posts), distinct(agents), t0)


# --------------------------------------------------------------------------
# power spectra


@dataclass
class Spectrum:
    freqs: np.ndarray
    power: np.ndarray
    binned_freqs: np.ndarray
    binned_power: np.ndarray
    binned_counts: np.ndarray | None = None
    exponent: float = float("nan")
    stderr: float = float("nan")
    fit_range: tuple[float, float] | None = None
    fit_refused: bool = False


def periodogram(x, segments: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Plain periodogram ``|FFT|^2`` of the mean-removed series.

    Frequencies are in cycles per bin and exclude zero. With ``segments > 1``
    the series is cut into that many equal pieces and their periodograms
    averaged.
    """
    x = np.asarray(x, dtype=float)
    if segments > 1:
        n = len(x) // segments
        parts = [periodogram(x[k * n:(k + 1) * n]) for k in range(segments)]
        return parts[0][0], np.mean([p for _, p in parts], axis=0)
    x = x - x.mean()
    spec = np.abs(np.fft.rfft(x)) ** 2
    freqs = np.fft.rfftfreq(len(x))
    return freqs[1:], spec[1:]


def log_bin(freqs, power, factor: float = 1.3, return_counts: bool = False):
    """Average a spectrum over geometric frequency bins.

    Both frequency and power are averaged in log space (geometric means).
    Periodogram ordinates scatter exponentially, so the mean of their logs
    sits a constant offset below the log of the true power whatever the bin
    occupancy; an arithmetic mean would bias the sparse low-frequency bins
    and tilt fitted slopes. Bins whose power is all zero report 0; empty
    bins are dropped.
    """
    freqs = np.asarray(freqs, dtype=float)
    power = np.asarray(power, dtype=float)
    if factor <= 1:
        raise ValueError("log-bin factor must exceed 1")
    edges = freqs[0] * factor ** np.arange(int(np.ceil(np.log(freqs[-1] / freqs[0]) / np.log(factor))) + 2)
    idx = np.searchsorted(edges, freqs, side="right") - 1
    counts = np.bincount(idx)
    used = counts > 0
    logf = np.bincount(idx, weights=np.log(freqs))[used] / counts[used]
    pos = power > 0
    n_pos = np.bincount(idx[pos], minlength=len(counts))[used]
    logp = np.bincount(idx[pos], weights=np.log(power[pos]), minlength=len(counts))[used]
    with np.errstate(divide="ignore", invalid="ignore"):
        p = np.where(n_pos > 0, np.exp(logp / np.maximum(n_pos, 1)), 0.0)
    if return_counts:
        return np.exp(logf), p, counts[used]
    return np.exp(logf), p


def fit_power_law(freqs, power, fit_range: tuple[float, float], weights=None) -> tuple[float, float]:
    """Least-squares slope on log-log points in ``fit_range``.

    ``weights`` (e.g. the number of periodogram ordinates behind each binned
    point) make it a weighted fit. Returns ``(phi, stderr)`` with
    ``S ~ 1/f**phi``.
    """
    lo, hi = fit_range
    freqs = np.asarray(freqs, dtype=float)
    power = np.asarray(power, dtype=float)
    w = np.ones_like(freqs) if weights is None else np.asarray(weights, dtype=float)
    sel = (freqs >= lo) & (freqs <= hi) & (power > 0) & (w > 0)
    if sel.sum() < 3:
        raise FitRefused(f"only {int(sel.sum())} positive points in range {fit_range}")
    x = np.log10(freqs[sel])
    y = np.log10(power[sel])
    w = w[sel]
    X = np.column_stack((x, np.ones_like(x)))
    sw = np.sqrt(w)
    coef, *_ = np.linalg.lstsq(X * sw[:, None], y * sw, rcond=None)
    dof = len(x) - 2
    if dof > 0:
        resid = y - X @ coef
        sigma2 = float(np.sum(w * resid ** 2)) / dof
        cov = sigma2 * np.linalg.inv((X * w[:, None]).T @ X)
        stderr = float(np.sqrt(cov[0, 0]))
    else:
        stderr = float("nan")
    return float(-coef[0]), stderr


DEFAULT_FIT_RANGE = (1.0 / 2000, 1.0 / 24)


def power_spectrum(series, log_bin_factor: float = 1.3,
                   fit_range: tuple[float, float] | None = DEFAULT_FIT_RANGE,
                   segments: int = 1) -> Spectrum:
    """Periodogram, log-binned spectrum and power-law exponent of a series."""
    x = np.asarray(series, dtype=float)
    if x.ndim != 1 or len(x) < 64:
        raise ValueError("need a 1-d series of length >= 64")
    freqs, power = periodogram(x, segments)
    bf, bp, bc = log_bin(freqs, power, log_bin_factor, return_counts=True)
    spec = Spectrum(freqs, power, bf, bp, bc, fit_range=fit_range)
    if np.all(power == 0):
        spec.fit_refused = True
        return spec
    if fit_range is not None:
        try:
            spec.exponent, spec.stderr = fit_power_law(bf, bp, fit_range, weights=bc)
        except FitRefused:
            spec.fit_refused = True
    return spec


class PowerSpectrumEstimator(BaseEstimator):
    """``fit(series)`` sets ``spectrum_``, ``exponent_`` and ``stderr_``."""

    def __init__(self, log_bin_factor=1.3, fit_range=DEFAULT_FIT_RANGE, segments=1):
        self.log_bin_factor = log_bin_factor
        self.fit_range = fit_range
        self.segments = segments

    def fit(self, X, y=None):
        x = check_array(np.asarray(X, dtype=float).reshape(-1, 1), ensure_min_samples=64).ravel()
        self.spectrum_ = power_spectrum(x, self.log_bin_factor, self.fit_range, self.segments)
        self.exponent_ = self.spectrum_.exponent
        self.stderr_ = self.spectrum_.stderr
        return self


def peak_ratio(spec: Spectrum, frequency: float) -> float:
    """Raw power at ``frequency`` over the median of its surrounding decade.

    The decade spans ``[f/sqrt(10), f*sqrt(10)]``; the peak bin and its two
    immediate neighbours are left out of the median.
    """
    k = int(np.argmin(np.abs(spec.freqs - frequency)))
    lo, hi = frequency / np.sqrt(10), frequency * np.sqrt(10)
    sel = (spec.freqs >= lo) & (spec.freqs <= hi)
    sel[max(k - 1, 0): k + 2] = False
    return float(spec.power[k] / np.median(spec.power[sel]))


# --------------------------------------------------------------------------
# degree distributions


def degrees(graph: BipartiteGraph) -> tuple[np.ndarray, np.ndarray]:
    """Unweighted degrees of (agents, posts), isolated nodes included."""
    return (np.array([len(a.links) for a in graph.agents], dtype=np.int64),
            np.array([len(p.links) for p in graph.posts], dtype=np.int64))


def log_binned_histogram(values, factor: float = 1.5) -> tuple[np.ndarray, np.ndarray]:
    """Normalised density of positive integer data in geometric bins.

    Each bin's probability mass is divided by the number of integers it
    covers, so the result estimates P(k). Returns (centres, density) for
    nonempty bins.
    """
    k = np.asarray(values)
    k = k[k > 0]
    if len(k) == 0:
        return np.zeros(0), np.zeros(0)
    edges = [1]
    while edges[-1] <= k.max():
        edges.append(max(edges[-1] + 1, int(np.ceil(edges[-1] * factor))))
    edges = np.array(edges)
    counts, _ = np.histogram(k, bins=edges)
    width = np.diff(edges)
    dens = counts / (len(k) * width)
    centres = np.sqrt(edges[:-1] * (edges[1:] - 1).clip(min=edges[:-1]))
    used = counts > 0
    return centres[used], dens[used]


def _log_user_form(k, logC, tau, X):
    return logC - tau * np.log(k) - k / X


def _log_exponential(k, logC, X):
    return logC - k / X


def _log_power(k, logC, tau):
    return logC - tau * np.log(k)


def _log_qexp(k, logC, q, X):
    base = 1.0 - (1.0 - q) * (k / X)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = logC + np.log(np.where(base > 0, base, np.nan)) / (1.0 - q)
    return np.where(np.isfinite(out), out, -1e3)


@dataclass
class FitResult:
    name: str
    params: dict
    rss: float


def _curve_fit(name, fn, k, logp, starts, bounds, names):
    best = None
    for p0 in starts:
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                popt, _ = optimize.curve_fit(fn, k, logp, p0=p0, bounds=bounds, maxfev=20000)
        except (RuntimeError, ValueError):
            continue
        rss = float(np.sum((fn(k, *popt) - logp) ** 2))
        if best is None or rss < best.rss:
            best = FitResult(name, dict(zip(names, map(float, popt))), rss)
    if best is None:
        raise FitRefused(f"{name} fit did not converge")
    return best


MIN_FIT_BINS = 5


def fit_degree_models(k, density) -> dict[str, FitResult]:
    """Least-squares fits in (natural) log density of the four degree families.

    Keys: ``user`` (power law times exponential cut-off), ``exponential``,
    ``power`` and ``qexp`` (q-exponential).
    """
    k = np.asarray(k, dtype=float)
    d = np.asarray(density, dtype=float)
    sel = d > 0
    k, logp = k[sel], np.log(d[sel])
    if len(k) < MIN_FIT_BINS:
        raise FitRefused(f"{len(k)} histogram bins, need {MIN_FIT_BINS}")
    kmax = k.max()
    c0 = logp[0]
    inf = np.inf
    out = {}
    out["user"] = _curve_fit(
        "user", _log_user_form, k, logp,
        [(c0, t, X) for t in (0.5, 1.0, 2.0) for X in (kmax / 10, kmax, 10 * kmax)],
        ([-inf, -5.0, 1e-6], [inf, 10.0, 1e9]), ("logC", "tau", "X"))
    out["exponential"] = _curve_fit(
        "exponential", _log_exponential, k, logp,
        [(c0, X) for X in (kmax / 10, kmax, 10 * kmax)],
        ([-inf, 1e-6], [inf, 1e9]), ("logC", "X"))
    out["power"] = _curve_fit(
        "power", _log_power, k, logp, [(c0, 1.0), (c0, 2.0)],
        ([-inf, -5.0], [inf, 10.0]), ("logC", "tau"))
    out["qexp"] = _curve_fit(
        "qexp", _log_qexp, k, logp,
        [(c0, q, X) for q in (1.2, 1.5, 2.0) for X in (1.0, kmax / 10, kmax)],
        ([-inf, 1.0001, 1e-6], [inf, 5.0, 1e9]), ("logC", "q", "X"))
    return out


@dataclass
class DegreeReport:
    agent_hist: tuple[np.ndarray, np.ndarray]
    post_hist: tuple[np.ndarray, np.ndarray]
    agent_fits: dict[str, FitResult] | None = None
    post_fits: dict[str, FitResult] | None = None
    notes: list[str] = field(default_factory=list)


def degree_distributions(graph: BipartiteGraph, factor: float = 1.5) -> DegreeReport:
    if graph.n_agents == 0 or graph.n_posts == 0:
        raise ValueError("empty graph")
    ka, kp = degrees(graph)
    report = DegreeReport(log_binned_histogram(ka, factor), log_binned_histogram(kp, factor))
    for side, hist in (("agent", report.agent_hist), ("post", report.post_hist)):
        try:
            setattr(report, f"{side}_fits", fit_degree_models(*hist))
        except FitRefused as exc:
            report.notes.append(f"{side}: {exc}")
    return report


# --------------------------------------------------------------------------
# assortativity


def assortativity(graph: BipartiteGraph) -> tuple[dict[int, float], dict[int, float]]:
    """Mean neighbour degree as a function of own degree, for both partitions.

    Returns ``(agent_curve, post_curve)``: ``agent_curve[k]`` is the mean
    degree of posts linked to agents of degree ``k``, and the other way
    round for ``post_curve``.
    """
    ka, kp = degrees(graph)

    def curve(nodes, own, other):
        sums: dict[int, float] = {}
        counts: dict[int, int] = {}
        for node in nodes:
            if not node.links:
                continue
            k = int(own[node.id])
            nbr = np.mean([other[j] for j in node.links])
            sums[k] = sums.get(k, 0.0) + nbr
            counts[k] = counts.get(k, 0) + 1
        return {k: sums[k] / counts[k] for k in sorted(sums)}

    return curve(graph.agents, ka, kp), curve(graph.posts, kp, ka)


def loglog_slope(curve: dict[int, float], kmin: float = 1, kmax: float = np.inf) -> float:
    k = np.array([x for x in curve if kmin <= x <= kmax], dtype=float)
    y = np.array([curve[int(x)] for x in k])
    if len(k) < 2:
        raise FitRefused("need two degrees for a slope")
    return float(np.polyfit(np.log10(k), np.log10(y), 1)[0])


# --------------------------------------------------------------------------
# circumplex


def circumplex_coords(arousal, valence) -> tuple[np.ndarray, np.ndarray]:
    """Map (arousal in [0,1], valence in [-1,1]) onto the unit disk.

    Arousal is first stretched to ``a1 = 2a - 1``; both coordinates are then
    divided by ``sqrt(1 + z**2)`` with ``z = min(|a1|, |v|)``.
    """
    a = np.asarray(arousal, dtype=float)
    v = np.asarray(valence, dtype=float)
    if np.any((a < 0) | (a > 1)) or np.any((v < -1) | (v > 1)):
        raise ValueError("arousal must lie in [0, 1] and valence in [-1, 1]")
    a1 = 2.0 * a - 1.0
    z = np.minimum(np.abs(a1), np.abs(v))
    s = np.sqrt(1.0 + z * z)
    return a1 / s, v / s


@dataclass
class CircumplexGrid:
    """Occupancy over the square [-1,1]^2; rows index v', columns a'."""

    counts: np.ndarray
    edges: np.ndarray
    n_actions: int

    @property
    def empty(self) -> bool:
        return self.n_actions == 0

    @property
    def density(self) -> np.ndarray:
        if self.n_actions == 0:
            return np.zeros_like(self.counts, dtype=float)
        return self.counts / self.n_actions


def circumplex_map(actions: Sequence[tuple[float, float]], grid: int = 50) -> CircumplexGrid:
    """Histogram the circumplex images of (arousal, valence) actions."""
    edges = np.linspace(-1.0, 1.0, grid + 1)
    acts = np.asarray(actions, dtype=float).reshape(-1, 2)
    if len(acts) == 0:
        return CircumplexGrid(np.zeros((grid, grid)), edges, 0)
    ap, vp = circumplex_coords(acts[:, 0], acts[:, 1])
    counts, _, _ = np.histogram2d(vp, ap, bins=(edges, edges))
    return CircumplexGrid(counts, edges, len(acts))


class CircumplexTransformer(TransformerMixin, BaseEstimator):
    """Stateless transformer: (n, 2) arousal/valence -> (n, 2) (a', v')."""

    def fit(self, X, y=None):
        check_array(X)
        self.n_features_in_ = 2
        return self

    def transform(self, X):
        check_is_fitted(self, "n_features_in_")
        X = check_array(X)
        if X.shape[1] != 2:
            raise ValueError(f"expected 2 columns (arousal, valence), got {X.shape[1]}")
        return np.column_stack(circumplex_coords(X[:, 0], X[:, 1]))

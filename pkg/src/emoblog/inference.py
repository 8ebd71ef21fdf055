"""Estimate model inputs (delays, lifetimes, mu, g, arrivals) from an event log."""
from __future__ import annotations

from collections import defaultdict
from typing import Iterable, Sequence

import numpy as np
from sklearn.base import BaseEstimator

from .distributions import DiscreteDistribution, EmptyDistributionError
from .model import NEW_POST, CommentEvent


def _check_nonempty(log: Sequence[CommentEvent]) -> None:
    if len(log) == 0:
        raise ValueError("empty event log")


def user_timelines(log: Iterable[CommentEvent]) -> dict[int, list[int]]:
    out: dict[int, list[int]] = defaultdict(list)
    for ev in log:
        out[ev.agent].append(ev.time)
    return out


def post_timelines(log: Iterable[CommentEvent]) -> dict[int, list[int]]:
    out: dict[int, list[int]] = defaultdict(list)
    for ev in log:
        out[ev.post].append(ev.time)
    return out


def delay_samples(log: Sequence[CommentEvent]) -> np.ndarray:
    gaps = [np.diff(np.sort(ts)) for ts in user_timelines(log).values() if len(ts) > 1]
    return np.concatenate(gaps) if gaps else np.zeros(0)


def infer_delay_distribution(log: Sequence[CommentEvent]) -> DiscreteDistribution:
    """Pooled histogram of gaps between consecutive actions of the same user."""
    _check_nonempty(log)
    gaps = delay_samples(log)
    if len(gaps) == 0:
        raise EmptyDistributionError("no user acts twice; delay distribution undefined")
    return DiscreteDistribution.from_samples(gaps)


def lifetime_samples(log: Sequence[CommentEvent]) -> np.ndarray:
    return np.array([max(ts) - min(ts) for ts in post_timelines(log).values()], dtype=float)


def infer_lifetime_distribution(log: Sequence[CommentEvent]) -> DiscreteDistribution:
    """Histogram of first-to-last activity span per post (single events give 0)."""
    _check_nonempty(log)
    return DiscreteDistribution.from_samples(lifetime_samples(log))


def infer_mu(log: Sequence[CommentEvent], T0: int) -> float:
    """Mean over posts of the fraction of their events later than ``T0`` after creation.

    A post's creation time is its ``new_post`` row if present, else its
    first event.
    """
    if T0 < 0:
        raise ValueError("T0 must be nonnegative")
    _check_nonempty(log)
    created: dict[int, int] = {}
    times: dict[int, list[int]] = defaultdict(list)
    for ev in log:
        times[ev.post].append(ev.time)
        if ev.kind == NEW_POST:
            created[ev.post] = ev.time
    fractions = []
    for post, ts in times.items():
        t0 = created.get(post, min(ts))
        ts = np.asarray(ts)
        fractions.append(np.count_nonzero(ts > t0 + T0) / len(ts))
    return float(np.mean(fractions))


def g_samples(log: Sequence[CommentEvent]) -> np.ndarray:
    authored: dict[int, set[int]] = defaultdict(set)
    touched: dict[int, set[int]] = defaultdict(set)
    for ev in log:
        touched[ev.agent].add(ev.post)
        if ev.kind == NEW_POST:
            authored[ev.agent].add(ev.post)
    return np.array([len(authored[u]) / len(posts) for u, posts in touched.items()])


def infer_g_distribution(log: Sequence[CommentEvent]) -> DiscreteDistribution:
    """Histogram over users of (posts authored) / (distinct posts touched)."""
    _check_nonempty(log)
    return DiscreteDistribution.from_samples(g_samples(log))


def extract_arrival_series(log: Sequence[CommentEvent], bin_width: int = 1,
                           t_start: int | None = None, t_end: int | None = None) -> np.ndarray:
    """New users per bin, counted at each user's first event.

    The series covers ``t_start`` (default: first event) through ``t_end``
    (default: last event).
    """
    if bin_width < 1:
        raise ValueError("bin_width must be >= 1")
    if len(log) == 0:
        return np.zeros(0, dtype=np.int64)
    first: dict[int, int] = {}
    for ev in log:
        if ev.agent not in first or ev.time < first[ev.agent]:
            first[ev.agent] = ev.time
    times = np.fromiter(first.values(), dtype=np.int64)
    all_t = [ev.time for ev in log]
    lo = min(all_t) if t_start is None else t_start
    hi = max(all_t) if t_end is None else t_end
    n_bins = (hi - lo) // bin_width + 1
    idx = (times - lo) // bin_width
    idx = idx[(idx >= 0) & (idx < n_bins)]
    return np.bincount(idx, minlength=n_bins).astype(np.int64)


class ParameterInference(BaseEstimator):
    """Fit all data-driven model inputs from one log.

    After ``fit(log)`` the estimator carries ``delay_``, ``lifetime_``,
    ``g_`` (distributions), ``mu_`` and ``arrivals_``. A log where nobody
    acts twice leaves ``delay_`` as ``None``.
    """

    def __init__(self, T0=576, bin_width=1):
        self.T0 = T0
        self.bin_width = bin_width

    def fit(self, X, y=None):
        log = list(X)
        _check_nonempty(log)
        try:
            self.delay_ = infer_delay_distribution(log)
        except EmptyDistributionError:
            self.delay_ = None
        self.lifetime_ = infer_lifetime_distribution(log)
        self.g_ = infer_g_distribution(log)
        self.mu_ = infer_mu(log, self.T0)
        self.arrivals_ = extract_arrival_series(log, self.bin_width)
        return self

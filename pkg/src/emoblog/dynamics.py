"""Arousal/valence maps and the network fields that drive them.

Everything here is a pure function of its arguments. The scalar functions
(:func:`arousal_field`, :func:`valence_field`) work on one agent; the batch
function :func:`local_fields` evaluates the same expressions for many agents
at once from a sparse agent x post weight matrix and is what the simulator
calls inside a step.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

POLARITY_EPS = 1e-9


class NonConvergenceError(RuntimeError):
    def __init__(self, message, last_value, n_iter):
        super().__init__(message)
        self.last_value = last_value
        self.n_iter = n_iter


@dataclass(frozen=True)
class MapParams:
    d1: float = 1.0
    d2: float = 0.5
    c1: float = 1.0
    c2: float = 2.0
    gamma: float = 0.05
    q: float = 0.4

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")
        if not 0.0 <= self.q <= 1.0:
            raise ValueError(f"q must lie in [0, 1], got {self.q}")


@dataclass
class ActiveRegionSnapshot:
    """Posts that received comments in the two most recent bins.

    Arrays are aligned by position; ``posts`` holds the post ids.
    ``total_arousal`` is the sum over comments, ``mean_valence`` the average.
    """

    posts: np.ndarray
    total_arousal: np.ndarray
    mean_valence: np.ndarray
    n_comments: np.ndarray
    n_pos: np.ndarray
    n_neg: np.ndarray

    def __post_init__(self):
        self.posts = np.asarray(self.posts, dtype=np.int64)
        self.total_arousal = np.asarray(self.total_arousal, dtype=float)
        self.mean_valence = np.asarray(self.mean_valence, dtype=float)
        self.n_comments = np.asarray(self.n_comments, dtype=float)
        self.n_pos = np.asarray(self.n_pos, dtype=float)
        self.n_neg = np.asarray(self.n_neg, dtype=float)
        n = len(self.posts)
        for name in ("total_arousal", "mean_valence", "n_comments", "n_pos", "n_neg"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"{name} has length {len(getattr(self, name))}, expected {n}")
        if np.any(self.n_comments < 1):
            raise ValueError("every active post needs at least one comment")
        if np.any(self.n_pos + self.n_neg > self.n_comments):
            raise ValueError("more emotional comments than comments")

    def __len__(self):
        return len(self.posts)

    @classmethod
    def empty(cls) -> "ActiveRegionSnapshot":
        z = np.zeros(0)
        return cls(z, z, z, z, z, z)

    @property
    def n_emo(self) -> np.ndarray:
        return self.n_pos + self.n_neg

    def mean_fields(self) -> tuple[float, float, float]:
        """(arousal mean field, positive fraction, negative fraction)."""
        n = self.n_comments.sum()
        h_a = self.total_arousal.sum() / n if n > 0 else 0.0
        emo = self.n_emo.sum()
        if emo > 0:
            return h_a, self.n_pos.sum() / emo, self.n_neg.sum() / emo
        return h_a, 0.0, 0.0


def polarity(valence):
    """Sign of the valence, with 0 inside a 1e-9 band around zero."""
    v = np.asarray(valence, dtype=float)
    r = np.where(np.abs(v) < POLARITY_EPS, 0.0, np.sign(v))
    return float(r) if r.ndim == 0 else r


def _polar_mix(r, frac_pos, frac_neg):
    return (1 - 0.4 * r) / 1.4 * frac_pos - (1 + 0.4 * r) / 1.4 * frac_neg


def arousal_field(valence: float, weights, snapshot: ActiveRegionSnapshot) -> tuple[float, float]:
    """Local and mean arousal fields seen by one agent.

    ``weights`` gives the agent's link weight to each snapshot post (0 if
    unlinked).
    """
    if len(snapshot) == 0:
        return 0.0, 0.0
    w = np.asarray(weights, dtype=float)
    sim = w * (1.0 + valence * snapshot.mean_valence)
    den = np.dot(sim, snapshot.n_comments)
    local = float(np.dot(sim, snapshot.total_arousal) / den) if den > 0 else 0.0
    return local, snapshot.mean_fields()[0]


def valence_field(r: float, weights, snapshot: ActiveRegionSnapshot) -> tuple[float, float]:
    """Local and mean valence fields for an agent of polarity ``r``."""
    if len(snapshot) == 0:
        return 0.0, 0.0
    w = np.asarray(weights, dtype=float)
    emo = np.dot(w, snapshot.n_emo)
    if emo > 0:
        local = _polar_mix(r, np.dot(w, snapshot.n_pos) / emo, np.dot(w, snapshot.n_neg) / emo)
    else:
        local = 0.0
    _, fp, fn = snapshot.mean_fields()
    return float(local), float(_polar_mix(r, fp, fn))


def local_fields(valence: np.ndarray, weights: sp.spmatrix, snapshot: ActiveRegionSnapshot):
    """Batch version of the local fields.

    ``weights`` is an (agents x snapshot posts) sparse matrix. Returns the
    local arousal and valence fields as two arrays.
    """
    valence = np.asarray(valence, dtype=float)
    if len(snapshot) == 0:
        z = np.zeros(len(valence))
        return z, z.copy()
    A = sp.csr_matrix(weights)
    a, n, vbar = snapshot.total_arousal, snapshot.n_comments, snapshot.mean_valence
    num = A @ a + valence * (A @ (a * vbar))
    den = A @ n + valence * (A @ (n * vbar))
    h_a = np.divide(num, den, out=np.zeros_like(num), where=den > 0)

    emo = A @ snapshot.n_emo
    fp = np.divide(A @ snapshot.n_pos, emo, out=np.zeros_like(emo), where=emo > 0)
    fn = np.divide(A @ snapshot.n_neg, emo, out=np.zeros_like(emo), where=emo > 0)
    h_v = _polar_mix(polarity(valence), fp, fn)
    return h_a, h_v


def mean_valence_field(r, snapshot: ActiveRegionSnapshot):
    _, fp, fn = snapshot.mean_fields()
    return _polar_mix(r, fp, fn)


def update_emotion(arousal, valence, h_arousal, h_valence, params: MapParams, prompted=True):
    """One step of the arousal and valence maps.

    ``h_arousal`` and ``h_valence`` are the combined fields ``h + q*h_mf``.
    Prompted entries get the full nonlinear map, the rest only relax by
    ``1 - gamma``. Works elementwise on arrays; results are clipped to
    [0, 1] x [-1, 1].
    """
    a = np.asarray(arousal, dtype=float)
    v = np.asarray(valence, dtype=float)
    decay = 1.0 - params.gamma
    a_rel = decay * a
    v_rel = decay * v
    ha = np.asarray(h_arousal, dtype=float)
    hv = np.asarray(h_valence, dtype=float)
    a_full = a_rel + ha * (params.d1 + params.d2 * (a - a * a)) * (1.0 - a)
    v_full = v_rel + hv * (params.c1 + params.c2 * (v - v ** 3)) * (1.0 - np.abs(v))
    a_new = np.where(prompted, a_full, a_rel)
    v_new = np.where(prompted, v_full, v_rel)
    np.clip(a_new, 0.0, 1.0, out=a_new)
    np.clip(v_new, -1.0, 1.0, out=v_new)
    if a_new.ndim == 0:
        return float(a_new), float(v_new)
    return a_new, v_new


def combined_fields(local_a, mf_a, local_v, mf_v, params: MapParams):
    return local_a + params.q * mf_a, local_v + params.q * mf_v


def map_fixed_point(params: MapParams, field: float, which: str = "arousal", x0: float = 0.5,
                    tol: float = 1e-10, max_iter: int = 1_000_000) -> float:
    """Attracting fixed point of a single prompted map under a constant field.

    ``x0`` is the starting value; for valence its sign selects the branch
    searched. Raises :class:`NonConvergenceError` if successive iterates do
    not settle within ``tol`` after ``max_iter`` steps.
    """
    if which not in ("arousal", "valence"):
        raise ValueError(f"which must be 'arousal' or 'valence', got {which!r}")
    x = float(x0)
    for i in range(max_iter):
        if which == "arousal":
            nxt, _ = update_emotion(x, 0.0, field, 0.0, params)
        else:
            _, nxt = update_emotion(0.0, x, 0.0, field, params)
        if abs(nxt - x) < tol:
            return nxt
        x = nxt
    raise NonConvergenceError(f"{which} map did not converge for field {field}", x, max_iter)

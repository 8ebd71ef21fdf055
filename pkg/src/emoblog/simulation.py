"""Time-stepped simulation of emotional agents on an evolving agent-post network.

One step is one 5-minute bin. Within a step the phases run in a fixed order:

1. driving: ``p(t)`` new agents arrive with a random emotion, get one
   mean-field update and a new-post probability ``g``, and join the active list;
2. every pre-existing agent relaxes by ``1 - gamma``;
3. posts commented in the two previous bins form the active region; agents
   linked to them are exposed and draw a fresh delay;
4. agents whose delay is below one bin are prompted: full map update with
   their current fields, then activation with probability ``a0 * arousal``
   (otherwise a fresh delay);
5. active agents act once each in ascending id order: new post with
   probability ``g``, else an old post (probability ``mu``) or an exposed
   post, chosen preferentially;
6. all agents that did not act count their delay down by one.

Random draws all come from one ``numpy.random.Generator`` (PCG64) in this
order per step: new-agent arousal, valence, ``g``; exposure delays (agents
ascending); prompted activation uniforms; redraws for prompted agents that
stay idle; then per acting agent three uniforms, a lifetime if a post is
created, and the agent's next delay.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from sklearn.base import BaseEstimator

from .distributions import (
    DiscreteDistribution,
    default_delay_distribution,
    default_g_distribution,
    default_lifetime_distribution,
)
from .dynamics import ActiveRegionSnapshot, MapParams, local_fields, polarity, update_emotion
from .dynamics import _polar_mix
from .model import COMMENT, NEW_POST, BipartiteGraph, CommentEvent, EmotionState, valence_class

BINS_PER_DAY = 288


class ConfigError(ValueError):
    pass


# --------------------------------------------------------------------------
# driving


def synthesize_driving(base_rate: float, steps: int, rng: np.random.Generator,
                       amplitude: float = 0.0, period: int = BINS_PER_DAY,
                       noise_beta: float = 0.0, noise_sigma: float = 0.0) -> np.ndarray:
    """Poisson arrival counts around a daily cycle.

    The rate is ``base_rate * (1 + amplitude * sin(2 pi t / period))``,
    optionally multiplied by a log-normal factor whose log is Gaussian noise
    with a ``1/f**noise_beta`` spectrum (mean-preserving).
    """
    if base_rate <= 0:
        raise ValueError("base_rate must be positive")
    if not 0 <= amplitude < 1:
        raise ValueError("amplitude must lie in [0, 1)")
    t = np.arange(steps)
    rate = base_rate * (1.0 + amplitude * np.sin(2 * np.pi * t / period))
    if noise_sigma > 0:
        x = power_law_noise(steps, noise_beta, rng)
        rate = rate * np.exp(noise_sigma * x - 0.5 * noise_sigma ** 2)
    return rng.poisson(rate).astype(np.int64)


def power_law_noise(n: int, beta: float, rng: np.random.Generator) -> np.ndarray:
    """Unit-variance Gaussian series with spectrum ~ 1/f**beta."""
    white = rng.standard_normal(n)
    spec = np.fft.rfft(white)
    f = np.fft.rfftfreq(n)
    f[0] = f[1] if n > 1 else 1.0
    spec *= f ** (-beta / 2.0)
    spec[0] = 0.0
    x = np.fft.irfft(spec, n)
    sd = x.std()
    return x / sd if sd > 0 else x


def parse_driving(spec: str) -> tuple[str, object]:
    """``constant:<p>``, ``synthetic`` or ``empirical:<csv>``."""
    kind, _, arg = spec.partition(":")
    if kind == "constant":
        try:
            p = int(arg)
        except ValueError:
            raise ConfigError(f"constant driving needs an integer, got {arg!r}") from None
        if p < 0:
            raise ConfigError("constant driving must be nonnegative")
        return kind, p
    if kind == "synthetic":
        return kind, None
    if kind == "empirical":
        if not arg:
            raise ConfigError("empirical driving needs a file path")
        return kind, arg
    raise ConfigError(f"unknown driving mode {spec!r}")


def read_driving_series(path: str | Path) -> np.ndarray:
    """Arrival series from a CSV whose last column holds the counts.

    A header row is optional; ``t,p`` as written by ``infer --what arrivals``
    works directly.
    """
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read driving file {path}: {exc}") from None
    out = []
    for i, line in enumerate(lines):
        if not line.strip():
            continue
        cell = line.split(",")[-1].strip()
        try:
            out.append(int(float(cell)))
        except ValueError:
            if i == 0:
                continue
            raise ConfigError(f"{path}:{i + 1}: bad count {cell!r}") from None
    return np.array(out, dtype=np.int64)


# --------------------------------------------------------------------------
# configuration


@dataclass
class SimConfig:
    """Flat run configuration; keys match the config file."""

    d1: float = 1.0
    d2: float = 0.5
    c1: float = 1.0
    c2: float = 2.0
    gamma: float = 0.05
    q: float = 0.4
    a0: float = 0.5
    T0: int = 576
    mu: float = 0.05
    driving: str = "constant:6"
    synthetic_base_rate: float = 6.0
    synthetic_amplitude: float = 0.8
    synthetic_noise_beta: float = 0.0
    synthetic_noise_sigma: float = 0.0
    delay_table: str = ""
    lifetime_table: str = ""
    g_table: str = ""
    seed: int = 0
    steps: int = 4032
    init_agents: int = 10
    init_posts: int = 10

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not 0 < self.a0 <= 1:
            raise ConfigError(f"a0 must lie in (0, 1], got {self.a0}")
        if not 0 <= self.mu <= 1:
            raise ConfigError(f"mu must lie in [0, 1], got {self.mu}")
        if self.T0 < 1:
            raise ConfigError(f"T0 must be >= 1, got {self.T0}")
        if self.steps < 1:
            raise ConfigError(f"steps must be >= 1, got {self.steps}")
        if self.init_agents < 1 or self.init_posts < 0:
            raise ConfigError("need at least one initial agent and a nonnegative post count")
        try:
            MapParams(self.d1, self.d2, self.c1, self.c2, self.gamma, self.q)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        parse_driving(self.driving)

    @property
    def map_params(self) -> MapParams:
        return MapParams(self.d1, self.d2, self.c1, self.c2, self.gamma, self.q)

    @classmethod
    def from_file(cls, path: str | Path, **overrides) -> "SimConfig":
        """Read ``key = value`` lines; ``#`` starts a comment."""
        types = {f.name: f.type for f in fields(cls)}
        values: dict[str, object] = {}
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, val = line.partition("=")
            key, val = key.strip(), val.strip()
            if not sep:
                raise ConfigError(f"{path}:{lineno}: expected key = value")
            if key not in types:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            if key in values:
                raise ConfigError(f"{path}:{lineno}: key {key!r} given twice")
            values[key] = _coerce(types[key], val, f"{path}:{lineno}")
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)

    def to_text(self) -> str:
        return "".join(f"{f.name} = {getattr(self, f.name)}\n" for f in fields(self))

    def load_distributions(self):
        """(delay, lifetime, g) tables, falling back to the labelled defaults."""
        def load(path, fallback):
            if not path:
                return fallback
            try:
                return DiscreteDistribution.from_csv(path)
            except OSError as exc:
                raise ConfigError(f"cannot read distribution {path}: {exc}") from None
            except ValueError as exc:
                raise ConfigError(f"bad distribution file {path}: {exc}") from None
        return (load(self.delay_table, default_delay_distribution()),
                load(self.lifetime_table, default_lifetime_distribution(self.T0)),
                load(self.g_table, default_g_distribution()))

    def driving_series(self, rng: np.random.Generator) -> np.ndarray:
        kind, arg = parse_driving(self.driving)
        if kind == "constant":
            return np.full(self.steps, arg, dtype=np.int64)
        if kind == "empirical":
            return read_driving_series(arg)[: self.steps]
        return synthesize_driving(self.synthetic_base_rate, self.steps, rng,
                                  amplitude=self.synthetic_amplitude,
                                  noise_beta=self.synthetic_noise_beta,
                                  noise_sigma=self.synthetic_noise_sigma)


def _coerce(typ, val: str, where: str):
    typ = typ if isinstance(typ, str) else typ.__name__
    try:
        if typ == "int":
            return int(val)
        if typ == "float":
            return float(val)
    except ValueError:
        raise ConfigError(f"{where}: expected {typ}, got {val!r}") from None
    return val


# --------------------------------------------------------------------------
# world state


class _Grow:
    """Append-only numpy column with amortised growth."""

    def __init__(self, dtype, capacity=1024, fill=0):
        self.data = np.full(capacity, fill, dtype=dtype)
        self.n = 0
        self.fill = fill

    def extend(self, values) -> None:
        values = np.asarray(values)
        need = self.n + len(values)
        if need > len(self.data):
            new = np.full(max(need, 2 * len(self.data)), self.fill, dtype=self.data.dtype)
            new[: self.n] = self.data[: self.n]
            self.data = new
        self.data[self.n: need] = values
        self.n = need

    @property
    def view(self) -> np.ndarray:
        return self.data[: self.n]


@dataclass
class StepStats:
    n_new: int = 0
    n_exposed: int = 0
    n_prompted: int = 0
    n_acting: int = 0


class World:
    """Mutable simulation state plus the step rule.

    ``exposure`` selects how step 3 treats agents linked to active posts:
    ``"every_step"`` redraws their delay on every step they stay exposed,
    ``"on_exposure"`` only when they were not exposed in the previous step.
    ``mean_field="exposed"`` withholds the mean fields from prompted agents
    that are not linked to any active post (the default gives them to all).
    """

    def __init__(self, params: MapParams, a0: float, T0: int, mu: float,
                 delay: DiscreteDistribution, lifetime: DiscreteDistribution,
                 g: DiscreteDistribution, rng: np.random.Generator,
                 init_agents: int = 10, init_posts: int = 10, exposure: str = "every_step",
                 mean_field: str = "global"):
        if exposure not in ("every_step", "on_exposure"):
            raise ValueError(f"unknown exposure rule {exposure!r}")
        if mean_field not in ("global", "exposed"):
            raise ValueError(f"unknown mean-field scope {mean_field!r}")
        self.params = params
        self.a0 = a0
        self.T0 = T0
        self.mu = mu
        self.delay_dist = delay
        self.lifetime_dist = lifetime
        self.g_dist = g
        self.rng = rng
        self.exposure = exposure
        self.mean_field = mean_field

        self.graph = BipartiteGraph()
        self.events: list[CommentEvent] = []
        self.arousal = _Grow(float)
        self.valence = _Grow(float)
        self.delay = _Grow(float)
        self.g = _Grow(float)
        # per-post columns mirrored from the graph for vectorised selection
        self.created = _Grow(np.int64)
        self.expiry = _Grow(float)
        self.n_comments = _Grow(float)
        self.charge = _Grow(float)
        self.window_valence = _Grow(float)
        self._bin_posts: dict[int, set[int]] = {}
        self._prev_exposed = np.zeros(0, dtype=np.int64)
        self._first_exposed_post = 0
        self.stats: list[StepStats] = []
        self._initialize(init_agents, init_posts)

    # -- setup ------------------------------------------------------------

    def _add_agents(self, arousal, valence, g, t) -> np.ndarray:
        start = self.graph.n_agents
        for _ in range(len(arousal)):
            self.graph.add_agent(arrival_time=t)
        self.arousal.extend(arousal)
        self.valence.extend(valence)
        self.g.extend(g)
        self.delay.extend(np.zeros(len(arousal)))
        return np.arange(start, self.graph.n_agents)

    def _initialize(self, n_agents: int, n_posts: int) -> None:
        rng = self.rng
        a = rng.random(n_agents)
        v = rng.uniform(-1.0, 1.0, n_agents)
        g = self.g_dist.sample(rng, n_agents)
        self._add_agents(a, v, g, 0)
        for k in range(n_posts):
            self._new_post(k % n_agents, 0)
        self.delay.view[:] = self.delay_dist.sample(rng, n_agents)

    # -- helpers ----------------------------------------------------------

    def _emit(self, t: int, agent: int, post: int, kind: str) -> None:
        a = float(self.arousal.data[agent])
        v = float(self.valence.data[agent])
        ev = CommentEvent(t, agent, post, kind, a, v)
        self.graph.record_event(ev)
        self.events.append(ev)
        self.n_comments.data[post] += 1
        self.charge.data[post] += valence_class(v)
        self._bin_posts.setdefault(t, set()).add(post)

    def _new_post(self, agent: int, t: int) -> int:
        life = float(self.lifetime_dist.sample(self.rng))
        post = self.graph.add_post(agent, t, life)
        self.created.extend([t])
        self.expiry.extend([t + life])
        self.n_comments.extend([0.0])
        self.charge.extend([0.0])
        self.window_valence.extend([0.0])
        self._emit(t, agent, post.id, NEW_POST)
        return post.id

    def snapshot(self, t: int) -> ActiveRegionSnapshot:
        """Active region from the ledgers of bins ``t-1`` and ``t-2``."""
        window = (t - 1, t - 2)
        posts = sorted(set().union(*(self._bin_posts.get(b, ()) for b in window)))
        m = len(posts)
        tot_a = np.zeros(m)
        tot_v = np.zeros(m)
        n = np.zeros(m)
        npos = np.zeros(m)
        nneg = np.zeros(m)
        for k, p in enumerate(posts):
            ledgers = self.graph.posts[p].per_bin_ledger
            for b in window:
                led = ledgers.get(b)
                if led is not None:
                    tot_a[k] += led.sum_arousal
                    tot_v[k] += led.sum_valence
                    n[k] += led.n_comments
                    npos[k] += led.n_pos
                    nneg[k] += led.n_neg
        return ActiveRegionSnapshot(posts, tot_a, tot_v / np.maximum(n, 1), n, npos, nneg)

    def _compact(self, t: int) -> None:
        old = t - 3
        for p in self._bin_posts.pop(old, ()):
            self.graph.posts[p].compact(t, keep=2)

    def _choose(self, weights: np.ndarray, u: float) -> int:
        c = np.cumsum(weights)
        return int(np.searchsorted(c, u * c[-1], side="right"))

    def _pick_exposed(self, t: int, v_i: float, u: float) -> int | None:
        created = self.created.view
        lo = self._first_exposed_post
        while lo < len(created) and created[lo] < t - self.T0:
            lo += 1
        self._first_exposed_post = lo
        hi = len(created)
        if lo >= hi:
            return None
        w = self.n_comments.data[lo:hi] + 0.5 * (1.0 + self.window_valence.data[lo:hi] * v_i)
        w = np.where(self.expiry.data[lo:hi] < t, 0.0, w)
        if not w.any():
            return None
        return lo + self._choose(w, u)

    def _pick_old(self, t: int, u: float) -> int | None:
        hi = self._first_exposed_post
        if hi == 0:
            return None
        q = self.charge.data[:hi]
        w = np.where(q < 0, 0.5 - q, 0.5)
        w = np.where(self.expiry.data[:hi] < t, 0.0, w)
        if not w.any():
            return None
        return self._choose(w, u)

    # -- the step -----------------------------------------------------------

    def step(self, t: int, n_new: int) -> list[CommentEvent]:
        rng = self.rng
        params = self.params
        first_event = len(self.events)
        stats = StepStats(n_new=n_new)
        snap = self.snapshot(t)
        h_a_mf, frac_pos, frac_neg = snap.mean_fields()
        wv = self.window_valence.view
        wv[:] = 0.0
        if len(snap):
            wv[snap.posts] = snap.mean_valence
        n_old = self.graph.n_agents

        # 1. driving
        if n_new:
            a = rng.random(n_new)
            v = rng.uniform(-1.0, 1.0, n_new)
            g = self.g_dist.sample(rng, n_new)
            hv_mf = _polar_mix(polarity(v), frac_pos, frac_neg)
            a, v = update_emotion(a, v, params.q * h_a_mf, params.q * hv_mf, params, True)
            new_ids = self._add_agents(a, v, g, t)
        else:
            new_ids = np.zeros(0, dtype=np.int64)

        # 2. relaxation
        decay = 1.0 - params.gamma
        self.arousal.data[:n_old] *= decay
        self.valence.data[:n_old] *= decay

        # 3. exposure
        delay = self.delay.view
        if len(snap):
            rows, cols, vals = [], [], []
            for k, p in enumerate(snap.posts):
                links = self.graph.posts[p].links
                ag = np.fromiter(links.keys(), dtype=np.int64, count=len(links))
                rows.append(ag)
                cols.append(np.full(len(ag), k, dtype=np.int64))
                vals.append(np.fromiter(links.values(), dtype=float, count=len(links)))
            rows = np.concatenate(rows)
            A = sp.csr_matrix((np.concatenate(vals), (rows, np.concatenate(cols))),
                              shape=(n_old, len(snap)))
            exposed = np.unique(rows)
            exposed = exposed[exposed < n_old]
        else:
            A = None
            exposed = np.zeros(0, dtype=np.int64)
        redraw = exposed
        if self.exposure == "on_exposure":
            redraw = np.setdiff1d(exposed, self._prev_exposed, assume_unique=True)
        self._prev_exposed = exposed
        delay[redraw] = self.delay_dist.sample(rng, len(redraw))
        stats.n_exposed = len(exposed)

        # 4. prompting and activation
        prompted = np.flatnonzero(delay[:n_old] < 1.0)
        stats.n_prompted = len(prompted)
        if len(prompted):
            va = self.valence.data[prompted]
            if A is not None:
                h_a, h_v = local_fields(va, A[prompted], snap)
            else:
                h_a = np.zeros(len(prompted))
                h_v = np.zeros(len(prompted))
            hv_mf = _polar_mix(polarity(va), frac_pos, frac_neg)
            ha_mf = np.full(len(prompted), h_a_mf)
            if self.mean_field == "exposed":
                linked = np.isin(prompted, exposed)
                hv_mf = np.where(linked, hv_mf, 0.0)
                ha_mf = np.where(linked, ha_mf, 0.0)
            a_new, v_new = update_emotion(self.arousal.data[prompted], va,
                                          h_a + params.q * ha_mf, h_v + params.q * hv_mf,
                                          params, True)
            self.arousal.data[prompted] = a_new
            self.valence.data[prompted] = v_new
            u = rng.random(len(prompted))
            go = u < self.a0 * a_new
            idle = prompted[~go]
            delay[idle] = self.delay_dist.sample(rng, len(idle))
            activated = prompted[go]
        else:
            activated = np.zeros(0, dtype=np.int64)

        # 5. actions
        acting = np.concatenate((activated, new_ids))
        stats.n_acting = len(acting)
        U = rng.random((len(acting), 3))
        for k, i in enumerate(acting):
            i = int(i)
            post = None
            if U[k, 0] >= self.g.data[i]:
                v_i = float(self.valence.data[i])
                if U[k, 1] < self.mu:
                    post = self._pick_old(t, U[k, 2])
                    if post is None:
                        post = self._pick_exposed(t, v_i, U[k, 2])
                else:
                    post = self._pick_exposed(t, v_i, U[k, 2])
            if post is None:
                self._new_post(i, t)
            else:
                self._emit(t, i, post, COMMENT)
            self.delay.data[i] = self.delay_dist.sample(rng)

        # 6. countdown
        delay = self.delay.view
        mask = np.ones(len(delay), dtype=bool)
        mask[acting] = False
        delay[mask] = np.maximum(delay[mask] - 1.0, 0.0)
        self._compact(t)
        self.stats.append(stats)
        return self.events[first_event:]

    def sync_graph(self) -> BipartiteGraph:
        """Copy emotion, delay and ``g`` columns into the graph's agent records."""
        for i, agent in enumerate(self.graph.agents):
            agent.emotion = EmotionState(self.arousal.data[i], self.valence.data[i])
            agent.delay_remaining = float(self.delay.data[i])
            agent.new_post_prob = float(self.g.data[i])
        return self.graph


# --------------------------------------------------------------------------
# runs


@dataclass
class SimulationResult:
    events: list[CommentEvent]
    graph: BipartiteGraph
    driving: np.ndarray
    steps: int
    stats: list[StepStats] = field(default_factory=list)

    def series(self):
        from .analysis import build_series
        return build_series(self.events, n_bins=self.steps + 1)


def run(config: SimConfig, exposure: str = "every_step", mean_field: str = "global",
        max_events: int | None = None) -> SimulationResult:
    """Run a full simulation. Identical config and seed give identical logs.

    ``max_events`` stops the run early once the log grows past it (for
    exploratory sweeps); the result then covers only the steps completed.
    """
    config.validate()
    delay, lifetime, g = config.load_distributions()
    rng = np.random.default_rng(config.seed)
    driving = config.driving_series(rng)
    world = World(config.map_params, config.a0, config.T0, config.mu, delay, lifetime, g, rng,
                  config.init_agents, config.init_posts, exposure=exposure, mean_field=mean_field)
    n_steps = min(config.steps, len(driving))
    for t in range(1, n_steps + 1):
        world.step(t, int(driving[t - 1]))
        if max_events and len(world.events) > max_events:
            n_steps = t
            break
    return SimulationResult(world.events, world.sync_graph(), driving[:n_steps], n_steps,
                            world.stats)


class EmotionalBlogSimulator(BaseEstimator):
    """Estimator-style wrapper around :func:`run`.

    Constructor arguments mirror :class:`SimConfig`, so ``get_params`` /
    ``set_params`` and ``sklearn.base.clone`` work for parameter sweeps.
    ``fit`` runs the simulation and stores ``events_``, ``graph_``,
    ``series_`` and ``driving_``.
    """

    def __init__(self, d1=1.0, d2=0.5, c1=1.0, c2=2.0, gamma=0.05, q=0.4, a0=0.5, T0=576,
                 mu=0.05, driving="constant:6", synthetic_base_rate=6.0,
                 synthetic_amplitude=0.8, synthetic_noise_beta=0.0, synthetic_noise_sigma=0.0,
                 delay_table="", lifetime_table="", g_table="", seed=0, steps=4032,
                 init_agents=10, init_posts=10):
        self.d1 = d1
        self.d2 = d2
        self.c1 = c1
        self.c2 = c2
        self.gamma = gamma
        self.q = q
        self.a0 = a0
        self.T0 = T0
        self.mu = mu
        self.driving = driving
        self.synthetic_base_rate = synthetic_base_rate
        self.synthetic_amplitude = synthetic_amplitude
        self.synthetic_noise_beta = synthetic_noise_beta
        self.synthetic_noise_sigma = synthetic_noise_sigma
        self.delay_table = delay_table
        self.lifetime_table = lifetime_table
        self.g_table = g_table
        self.seed = seed
        self.steps = steps
        self.init_agents = init_agents
        self.init_posts = init_posts

    @classmethod
    def from_config(cls, config: SimConfig) -> "EmotionalBlogSimulator":
        return cls(**{f.name: getattr(config, f.name) for f in fields(config)})

    def to_config(self) -> SimConfig:
        return SimConfig(**self.get_params())

    def fit(self, X=None, y=None):
        result = run(self.to_config())
        self.events_ = result.events
        self.graph_ = result.graph
        self.driving_ = result.driving
        self.series_ = result.series()
        self.n_steps_ = result.steps
        return self

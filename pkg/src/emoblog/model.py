"""Domain types shared by the simulator and the analysis pipeline.

The event log is the single exchange format between every stage: the
simulator writes it, the inference and analysis tools read it, and empirical
data can be dropped in using the same columns.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

NEUTRAL_BAND = 0.01

EVENT_LOG_HEADER = ("time_bin", "agent_id", "post_id", "kind", "arousal", "valence")
EDGE_LIST_HEADER = ("agent_id", "post_id", "weight")

NEW_POST = "new_post"
COMMENT = "comment"
KINDS = (NEW_POST, COMMENT)


class StructuralError(ValueError):
    """Reference to an agent or post that does not exist."""


class ExpiredPostError(ValueError):
    """An action targeted a post past its lifetime."""


class LogFormatError(ValueError):
    """Malformed event-log or edge-list file.

    ``line`` and ``column`` locate the offending cell (1-based line numbers,
    header is line 1).
    """

    def __init__(self, message: str, line: int | None = None, column: str | None = None):
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f" (line {line}" + (f", column {column!r}" if column else "") + ")"
        super().__init__(message + where)


def valence_class(valence: float) -> int:
    """+1, -1 or 0 for positive, negative and neutral valence."""
    if valence > NEUTRAL_BAND:
        return 1
    if valence < -NEUTRAL_BAND:
        return -1
    return 0


@dataclass
class EmotionState:
    arousal: float = 0.0
    valence: float = 0.0

    def __post_init__(self):
        self.arousal = min(max(float(self.arousal), 0.0), 1.0)
        self.valence = min(max(float(self.valence), -1.0), 1.0)


@dataclass(frozen=True)
class CommentEvent:
    """One action: a new post or a comment on an existing post."""

    time: int
    agent: int
    post: int
    kind: str = COMMENT
    arousal: float = math.nan
    valence: float = math.nan

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown event kind {self.kind!r}")

    @property
    def valence_class(self) -> int:
        if math.isnan(self.valence):
            return 0
        return valence_class(self.valence)


@dataclass
class AgentState:
    id: int
    emotion: EmotionState
    new_post_prob: float = 0.0
    arrival_time: int = 0
    delay_remaining: float = 0.0
    links: dict[int, int] = field(default_factory=dict)


@dataclass
class BinLedger:
    n_comments: int = 0
    sum_arousal: float = 0.0
    sum_valence: float = 0.0
    n_pos: int = 0
    n_neg: int = 0

    def add(self, arousal: float, valence: float, cls: int) -> None:
        self.n_comments += 1
        if not math.isnan(arousal):
            self.sum_arousal += arousal
        if not math.isnan(valence):
            self.sum_valence += valence
        if cls > 0:
            self.n_pos += 1
        elif cls < 0:
            self.n_neg += 1


@dataclass
class PostState:
    """A post and its comment ledger.

    ``per_bin_ledger`` holds only the most recent bins; anything older is
    folded into the ``total`` ledger by :meth:`compact`.
    """

    id: int
    author: int
    created_at: int
    lifetime: float = math.inf
    per_bin_ledger: dict[int, BinLedger] = field(default_factory=dict)
    total: BinLedger = field(default_factory=BinLedger)
    links: dict[int, int] = field(default_factory=dict)

    @property
    def cumulative_charge(self) -> int:
        return self.total.n_pos - self.total.n_neg

    @property
    def n_comments(self) -> int:
        return self.total.n_comments

    def expired(self, now: int) -> bool:
        return now > self.created_at + self.lifetime

    def compact(self, now: int, keep: int = 2) -> None:
        for t in [t for t in self.per_bin_ledger if t < now - keep]:
            del self.per_bin_ledger[t]


class BipartiteGraph:
    """Weighted agent-post network with mirrored adjacency.

    Weights count comments (including the authoring ``new_post`` event).
    Agents and posts are dense integer ids in order of first appearance.
    """

    def __init__(self):
        self.agents: list[AgentState] = []
        self.posts: list[PostState] = []
        self.total_weight = 0

    @property
    def n_agents(self) -> int:
        return len(self.agents)

    @property
    def n_posts(self) -> int:
        return len(self.posts)

    def add_agent(self, emotion: EmotionState | None = None, new_post_prob: float = 0.0,
                  arrival_time: int = 0) -> AgentState:
        agent = AgentState(len(self.agents), emotion or EmotionState(), new_post_prob, arrival_time)
        self.agents.append(agent)
        return agent

    def add_post(self, author: int, created_at: int, lifetime: float = math.inf) -> PostState:
        self._check_agent(author)
        post = PostState(len(self.posts), author, created_at, lifetime)
        self.posts.append(post)
        return post

    def _check_agent(self, agent: int) -> None:
        if not 0 <= agent < len(self.agents):
            raise StructuralError(f"unknown agent id {agent}")

    def record_event(self, event: CommentEvent) -> None:
        """Apply one action to the network and the post ledger."""
        self._check_agent(event.agent)
        if not 0 <= event.post < len(self.posts):
            raise StructuralError(f"unknown post id {event.post}")
        post = self.posts[event.post]
        if post.expired(event.time):
            raise ExpiredPostError(
                f"post {event.post} expired at {post.created_at + post.lifetime}, event at {event.time}")
        agent = self.agents[event.agent]
        agent.links[event.post] = agent.links.get(event.post, 0) + 1
        post.links[event.agent] = post.links.get(event.agent, 0) + 1
        self.total_weight += 1
        cls = event.valence_class
        ledger = post.per_bin_ledger.get(event.time)
        if ledger is None:
            ledger = post.per_bin_ledger[event.time] = BinLedger()
        ledger.add(event.arousal, event.valence, cls)
        post.total.add(event.arousal, event.valence, cls)

    def weight(self, agent: int, post: int) -> int:
        return self.agents[agent].links.get(post, 0)

    def edges(self) -> Iterator[tuple[int, int, int]]:
        for agent in self.agents:
            for post, w in sorted(agent.links.items()):
                yield agent.id, post, w

    @classmethod
    def from_events(cls, events: Iterable[CommentEvent]) -> "BipartiteGraph":
        """Replay an event log.

        Agents are created on first appearance; posts are created by their
        ``new_post`` row and never expire on replay.
        """
        graph = cls()
        agent_ids: dict[int, int] = {}
        post_ids: dict[int, int] = {}
        for ev in events:
            if ev.agent not in agent_ids:
                agent_ids[ev.agent] = graph.add_agent(arrival_time=ev.time).id
            a = agent_ids[ev.agent]
            if ev.kind == NEW_POST:
                if ev.post in post_ids:
                    raise StructuralError(f"post {ev.post} created twice")
                post_ids[ev.post] = graph.add_post(a, ev.time).id
            elif ev.post not in post_ids:
                raise StructuralError(f"comment on post {ev.post} before its new_post row")
            graph.record_event(CommentEvent(ev.time, a, post_ids[ev.post], ev.kind,
                                            ev.arousal, ev.valence))
        return graph

    @classmethod
    def from_edges(cls, edges: Iterable[tuple[int, int, int]]) -> "BipartiteGraph":
        """Rebuild from a weighted edge list; ids must be dense."""
        graph = cls()
        for a, p, w in edges:
            if w < 1:
                raise ValueError(f"edge ({a}, {p}) has weight {w} < 1")
            while graph.n_agents <= a:
                graph.add_agent()
            while graph.n_posts <= p:
                graph.posts.append(PostState(graph.n_posts, -1, 0))
            graph.agents[a].links[p] = graph.agents[a].links.get(p, 0) + w
            graph.posts[p].links[a] = graph.posts[p].links.get(a, 0) + w
            graph.total_weight += w
        return graph


def _fmt(x: float) -> str:
    return "" if math.isnan(x) else repr(float(x))


def write_event_log(path: str | Path, events: Iterable[CommentEvent]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EVENT_LOG_HEADER)
        for ev in events:
            w.writerow((ev.time, ev.agent, ev.post, ev.kind, _fmt(ev.arousal), _fmt(ev.valence)))


def _parse_float(text: str, line: int, column: str) -> float:
    if text.strip() == "":
        return math.nan
    try:
        return float(text)
    except ValueError:
        raise LogFormatError(f"not a number: {text!r}", line, column) from None


def _parse_int(text: str, line: int, column: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise LogFormatError(f"not an integer: {text!r}", line, column) from None


def read_event_log(path: str | Path) -> list[CommentEvent]:
    """Parse an event-log CSV. Arousal and valence may be blank."""
    events = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != EVENT_LOG_HEADER:
            raise LogFormatError(f"expected header {','.join(EVENT_LOG_HEADER)}", 1)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(EVENT_LOG_HEADER):
                raise LogFormatError(f"expected {len(EVENT_LOG_HEADER)} fields, got {len(row)}", lineno)
            kind = row[3].strip()
            if kind not in KINDS:
                raise LogFormatError(f"unknown kind {kind!r}", lineno, "kind")
            events.append(CommentEvent(
                _parse_int(row[0], lineno, "time_bin"),
                _parse_int(row[1], lineno, "agent_id"),
                _parse_int(row[2], lineno, "post_id"),
                kind,
                _parse_float(row[4], lineno, "arousal"),
                _parse_float(row[5], lineno, "valence"),
            ))
    return events


def write_edge_list(path: str | Path, graph: BipartiteGraph) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EDGE_LIST_HEADER)
        w.writerows(graph.edges())


def read_edge_list(path: str | Path) -> list[tuple[int, int, int]]:
    edges = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != EDGE_LIST_HEADER:
            raise LogFormatError(f"expected header {','.join(EDGE_LIST_HEADER)}", 1)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise LogFormatError(f"expected 3 fields, got {len(row)}", lineno)
            edges.append((_parse_int(row[0], lineno, "agent_id"),
                          _parse_int(row[1], lineno, "post_id"),
                          _parse_int(row[2], lineno, "weight")))
    return edges

"""Command-line entry point: simulate, infer, analyze, communities, circumplex.

Every subcommand writes into ``--out`` (a directory) and leaves a flat
``manifest.txt`` there listing the command, the inputs and outputs with
their sha256 digests, and the tool version. Exit codes: 0 success,
2 usage, 3 malformed input file, 4 configuration, 5 analysis refused,
1 anything else.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    SERIES_NAMES,
    FitRefused,
    SeriesBundle,
    assortativity,
    build_series,
    circumplex_coords,
    circumplex_map,
    degree_distributions,
    power_spectrum,
)
from .communities import (
    EmptyProjectionError,
    SpectralCommunities,
    SpectrumTooLargeError,
    community_series,
    scatter_rows,
)
from .distributions import EmptyDistributionError
from .inference import (
    extract_arrival_series,
    infer_delay_distribution,
    infer_g_distribution,
    infer_lifetime_distribution,
    infer_mu,
)
from .model import BipartiteGraph, LogFormatError, read_edge_list, read_event_log, write_edge_list, write_event_log
from .simulation import ConfigError, SimConfig, run

EXIT_OK, EXIT_OTHER, EXIT_USAGE, EXIT_FORMAT, EXIT_CONFIG, EXIT_REFUSED = 0, 1, 2, 3, 4, 5


class UsageError(Exception):
    pass


def sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class Manifest:
    """Flat ``key = value`` record of one invocation."""

    def __init__(self, command: str):
        self.items: list[tuple[str, str]] = [("tool", "emoblog"), ("version", __version__),
                                             ("command", command)]

    def add(self, key: str, value) -> None:
        self.items.append((key, str(value)))

    def file(self, role: str, name: str, path: Path) -> None:
        self.add(f"{role}.{name}.path", path)
        self.add(f"{role}.{name}.sha256", sha256(path))

    def write(self, out: Path) -> Path:
        path = out / "manifest.txt"
        path.write_text("".join(f"{k} = {v}\n" for k, v in self.items))
        return path


def read_manifest(path: str | Path) -> dict[str, str]:
    out = {}
    for line in Path(path).read_text().splitlines():
        key, sep, val = line.partition("=")
        if sep:
            out[key.strip()] = val.strip()
    return out


def _writer(path: Path):
    fh = open(path, "w", newline="")
    return fh, csv.writer(fh, lineterminator="\n")


def _num(x) -> str:
    if x is None:
        return ""
    x = float(x)
    if not np.isfinite(x):
        return ""
    return str(int(x)) if x.is_integer() and abs(x) < 1e15 else repr(x)


def _outdir(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _fit_range(text: str) -> tuple[float, float]:
    try:
        lo, hi = (float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected lo,hi got {text!r}") from None
    if not 0 < lo < hi:
        raise argparse.ArgumentTypeError("fit range needs 0 < lo < hi")
    return lo, hi


def write_series(path: Path, bundle: SeriesBundle) -> None:
    fh, w = _writer(path)
    with fh:
        w.writerow(("t", *SERIES_NAMES))
        w.writerows(bundle.rows())


def read_series(path: str | Path) -> SeriesBundle:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != ("t", *SERIES_NAMES):
            raise LogFormatError(f"expected header t,{','.join(SERIES_NAMES)}", 1)
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                rows.append([int(x) for x in row])
            except ValueError:
                raise LogFormatError(f"non-integer entry in {row!r}", lineno) from None
            if len(row) != len(SERIES_NAMES) + 1:
                raise LogFormatError(f"expected {len(SERIES_NAMES) + 1} fields", lineno)
    a = np.array(rows, dtype=np.int64).reshape(-1, len(SERIES_NAMES) + 1)
    t0 = int(a[0, 0]) if len(a) else 0
    return SeriesBundle(*(a[:, j + 1] for j in range(len(SERIES_NAMES))), t0=t0)


# --------------------------------------------------------------------------
# simulate


def cmd_simulate(args) -> int:
    overrides = {"seed": args.seed, "steps": args.steps, "driving": args.driving}
    if args.config:
        config = SimConfig.from_file(args.config, **overrides)
    else:
        config = SimConfig(**{k: v for k, v in overrides.items() if v is not None})
    out = _outdir(args.out)
    result = run(config)
    man = Manifest("simulate")
    man.add("seed", config.seed)
    for key, val in vars(config).items():
        man.add(f"config.{key}", val)
    if args.config:
        man.file("input", "config", Path(args.config))
    delay, lifetime, g = config.load_distributions()
    for name, dist in (("delay", delay), ("lifetime", lifetime), ("g", g)):
        man.add(f"distribution.{name}", dist.label)

    snapshot = out / "config.txt"
    snapshot.write_text(config.to_text())
    write_event_log(out / "events.csv", result.events)
    write_edge_list(out / "edges.csv", result.graph)
    write_series(out / "series.csv", result.series())
    for name in ("config.txt", "events.csv", "edges.csv", "series.csv"):
        man.file("output", name.split(".")[0], out / name)
    man.write(out)
    print(f"{len(result.events)} events, {result.graph.n_agents} agents, "
          f"{result.graph.n_posts} posts -> {out}")
    return EXIT_OK


# --------------------------------------------------------------------------
# infer


def cmd_infer(args) -> int:
    log = read_event_log(args.log)
    out = _outdir(args.out)
    path = out / f"{args.what}.csv"
    if args.what == "mu":
        mu = infer_mu(log, args.t0)
        fh, w = _writer(path)
        with fh:
            w.writerow(("t0", "mu"))
            w.writerow((args.t0, _num(mu)))
        print(f"mu({args.t0}) = {mu:.6g}")
    elif args.what == "arrivals":
        p = extract_arrival_series(log, args.bin_width)
        t_start = min(ev.time for ev in log)
        fh, w = _writer(path)
        with fh:
            w.writerow(("t", "p"))
            for k, n in enumerate(p):
                w.writerow((t_start + k * args.bin_width, int(n)))
    else:
        infer = {"delay": infer_delay_distribution, "lifetime": infer_lifetime_distribution,
                 "g": infer_g_distribution}[args.what]
        infer(log).to_csv(path)
    man = Manifest("infer")
    man.add("what", args.what)
    man.add("t0", args.t0)
    man.add("bin_width", args.bin_width)
    man.file("input", "log", Path(args.log))
    man.file("output", args.what, path)
    man.write(out)
    return EXIT_OK


# --------------------------------------------------------------------------
# analyze


def _load_graph(args, log):
    if args.edges:
        return BipartiteGraph.from_edges(read_edge_list(args.edges))
    if log is not None:
        return BipartiteGraph.from_events(log)
    raise UsageError("need --edges or --events for network measures")


def read_assignment(path: str | Path) -> dict[int, int]:
    out = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["node", "community"]:
            raise LogFormatError("expected header node,community", 1)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                out[int(row[0])] = int(row[1])
            except (ValueError, IndexError):
                raise LogFormatError(f"bad row {row!r}", lineno) from None
    return out


def write_circumplex(out: Path, log, assignment, grid: int, man: Manifest) -> None:
    groups: dict = {}
    for ev in log:
        if np.isnan(ev.arousal) or np.isnan(ev.valence):
            continue
        label = "all" if assignment is None else assignment.get(ev.agent, "other")
        groups.setdefault(label, []).append((ev.arousal, ev.valence))
    for label in sorted(groups, key=str):
        g = circumplex_map(groups[label], grid)
        centres = 0.5 * (g.edges[:-1] + g.edges[1:])
        path = out / f"circumplex_{label}.csv"
        fh, w = _writer(path)
        with fh:
            w.writerow(("a_prime", "v_prime", "density"))
            dens = g.density
            for i, vc in enumerate(centres):
                for j, ac in enumerate(centres):
                    if dens[i, j] > 0:
                        w.writerow((_num(ac), _num(vc), _num(dens[i, j])))
        man.file("output", f"circumplex_{label}", path)


def cmd_analyze(args) -> int:
    if not (args.spectrum or args.degrees or args.assortativity or args.circumplex):
        raise UsageError("nothing to do: pass --spectrum, --degrees, --assortativity or --circumplex")
    out = _outdir(args.out)
    man = Manifest("analyze")
    log = read_event_log(args.events) if args.events else None
    if args.events:
        man.file("input", "events", Path(args.events))
    if args.edges:
        man.file("input", "edges", Path(args.edges))

    if args.spectrum:
        if args.series:
            bundle = read_series(args.series)
            man.file("input", "series", Path(args.series))
        elif log is not None:
            bundle = build_series(log)
        else:
            raise UsageError("--spectrum needs --series or --events")
        names = SERIES_NAMES if args.spectrum == "all" else [args.spectrum]
        for name in names:
            if name not in SERIES_NAMES:
                raise UsageError(f"unknown series {name!r}; choose from {', '.join(SERIES_NAMES)}")
            x = bundle[name][args.skip:]
            spec = power_spectrum(x, args.log_bin, args.fit_range, args.segments)
            path = out / f"spectrum_{name}.csv"
            fh, w = _writer(path)
            with fh:
                w.writerow(("nu", "S", "phi", "stderr", "fit_lo", "fit_hi"))
                for f, s in zip(spec.binned_freqs, spec.binned_power):
                    w.writerow((_num(f), _num(s), _num(spec.exponent), _num(spec.stderr),
                                _num(args.fit_range[0]), _num(args.fit_range[1])))
            man.file("output", f"spectrum_{name}", path)
            msg = "fit refused" if spec.fit_refused else f"phi = {spec.exponent:.3f} +- {spec.stderr:.3f}"
            print(f"{name}: {msg}")

    if args.degrees or args.assortativity:
        graph = _load_graph(args, log)
    if args.degrees:
        rep = degree_distributions(graph)
        for side, (k, d) in (("agents", rep.agent_hist), ("posts", rep.post_hist)):
            path = out / f"degrees_{side}.csv"
            fh, w = _writer(path)
            with fh:
                w.writerow(("k", "density"))
                w.writerows((_num(a), _num(b)) for a, b in zip(k, d))
            man.file("output", f"degrees_{side}", path)
        path = out / "degree_fits.csv"
        fh, w = _writer(path)
        with fh:
            w.writerow(("partition", "family", "parameter", "value"))
            for side, fits in (("agents", rep.agent_fits), ("posts", rep.post_fits)):
                for fam, res in (fits or {}).items():
                    for pname, val in res.params.items():
                        w.writerow((side, fam, pname, _num(val)))
                    w.writerow((side, fam, "rss", _num(res.rss)))
        man.file("output", "degree_fits", path)
        for note in rep.notes:
            print(f"degrees: {note}", file=sys.stderr)
    if args.assortativity:
        agent_curve, post_curve = assortativity(graph)
        path = out / "assortativity.csv"
        fh, w = _writer(path)
        with fh:
            w.writerow(("partition", "k", "knn"))
            for side, curve in (("agents", agent_curve), ("posts", post_curve)):
                for k in sorted(curve):
                    w.writerow((side, k, _num(curve[k])))
        man.file("output", "assortativity", path)

    if args.circumplex:
        if log is None:
            raise UsageError("--circumplex needs --events")
        assignment = None
        if args.circumplex != "all":
            assignment = read_assignment(args.circumplex)
            man.file("input", "assignment", Path(args.circumplex))
        write_circumplex(out, log, assignment, args.grid, man)
    man.write(out)
    return EXIT_OK


# --------------------------------------------------------------------------
# communities


def cmd_communities(args) -> int:
    graph = BipartiteGraph.from_edges(read_edge_list(args.edges))
    out = _outdir(args.out)
    est = SpectralCommunities(partition=args.partition, min_degree=args.min_degree,
                              min_strength=args.min_strength, commons=args.commons,
                              max_communities=args.kmax).fit(graph)
    man = Manifest("communities")
    for key in ("partition", "min_degree", "min_strength", "commons", "kmax"):
        man.add(key, getattr(args, key))
    man.add("retained_nodes", len(est.projection_))
    man.add("n_communities", est.n_communities_)
    man.file("input", "edges", Path(args.edges))

    path = out / "eigenvalues.csv"
    fh, w = _writer(path)
    with fh:
        w.writerow(("index", "eigenvalue"))
        w.writerows((i, repr(float(x))) for i, x in enumerate(est.eigenvalues_))
    man.file("output", "eigenvalues", path)
    path = out / "scatter.csv"
    fh, w = _writer(path)
    with fh:
        w.writerow(("node", "v1", "v2", "v3"))
        for node, *vals in scatter_rows(est.projection_, est.eigenvectors_):
            w.writerow((node, *(repr(v) for v in vals)))
    man.file("output", "scatter", path)
    path = out / "assignment.csv"
    fh, w = _writer(path)
    with fh:
        w.writerow(("node", "community"))
        w.writerows(sorted(est.assignment_.items()))
    man.file("output", "assignment", path)

    if args.events:
        if args.partition != "agents":
            raise UsageError("--events series need --partition agents")
        series = community_series(est.assignment_, read_event_log(args.events))
        path = out / "community_series.csv"
        fh, w = _writer(path)
        with fh:
            w.writerow(("community", "t", *SERIES_NAMES))
            for label in sorted(series, key=str):
                for row in series[label].rows():
                    w.writerow((label, *row))
        man.file("input", "events", Path(args.events))
        man.file("output", "community_series", path)
    man.write(out)
    sizes = np.bincount(est.labels_) if len(est.labels_) else []
    print(f"{len(est.projection_)} nodes, {est.n_communities_} communities, sizes {list(map(int, sizes))}")
    return EXIT_OK


# --------------------------------------------------------------------------
# circumplex


def cmd_circumplex(args) -> int:
    log = read_event_log(args.events)
    out = _outdir(args.out)
    man = Manifest("circumplex")
    man.file("input", "events", Path(args.events))
    rows = [(ev.agent, ev.arousal, ev.valence) for ev in log
            if not (np.isnan(ev.arousal) or np.isnan(ev.valence))]
    arr = np.array(rows, dtype=float).reshape(-1, 3)
    ap, vp = circumplex_coords(arr[:, 1], arr[:, 2])
    path = out / "circumplex_points.csv"
    fh, w = _writer(path)
    with fh:
        w.writerow(("agent_id", "arousal", "valence", "a_prime", "v_prime"))
        for (agent, a, v), x, y in zip(arr, ap, vp):
            w.writerow((int(agent), repr(a), repr(v), repr(float(x)), repr(float(y))))
    man.file("output", "circumplex_points", path)
    assignment = read_assignment(args.assignment) if args.assignment else None
    if args.assignment:
        man.file("input", "assignment", Path(args.assignment))
    write_circumplex(out, log, assignment, args.grid, man)
    man.write(out)
    return EXIT_OK


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="emoblog", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run the agent-based model")
    s.add_argument("--config", help="key = value config file")
    s.add_argument("--seed", type=int)
    s.add_argument("--steps", type=int)
    s.add_argument("--driving", help="constant:<p> | synthetic | empirical:<csv>")
    s.add_argument("--out", default="run")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("infer", help="estimate model inputs from an event log")
    s.add_argument("log")
    s.add_argument("--what", required=True, choices=("delay", "lifetime", "mu", "g", "arrivals"))
    s.add_argument("--t0", type=int, default=576)
    s.add_argument("--bin-width", type=int, default=1)
    s.add_argument("--out", default="inferred")
    s.set_defaults(func=cmd_infer)

    s = sub.add_parser("analyze", help="spectra, degrees, assortativity, circumplex")
    s.add_argument("--events")
    s.add_argument("--edges")
    s.add_argument("--series", help="series CSV; default is to rebuild from --events")
    s.add_argument("--spectrum", metavar="SERIES", help=f"one of {', '.join(SERIES_NAMES)} or all")
    s.add_argument("--fit-range", type=_fit_range, default=(1 / 2000, 1 / 24))
    s.add_argument("--log-bin", type=float, default=1.3)
    s.add_argument("--segments", type=int, default=1)
    s.add_argument("--skip", type=int, default=0, help="drop this many leading bins")
    s.add_argument("--degrees", action="store_true")
    s.add_argument("--assortativity", action="store_true")
    s.add_argument("--circumplex", metavar="ASSIGNMENT|all")
    s.add_argument("--grid", type=int, default=50)
    s.add_argument("--out", default="analysis")
    s.set_defaults(func=cmd_analyze)

    s = sub.add_parser("communities", help="spectral communities of a projection")
    s.add_argument("edges")
    s.add_argument("--partition", choices=("agents", "posts"), default="agents")
    s.add_argument("--min-degree", type=int, default=5)
    s.add_argument("--min-strength", type=float, default=0.0)
    s.add_argument("--commons", choices=("min", "product"), default="min")
    s.add_argument("--kmax", type=int, default=8)
    s.add_argument("--events", help="also write per-community series")
    s.add_argument("--out", default="communities")
    s.set_defaults(func=cmd_communities)

    s = sub.add_parser("circumplex", help="map event emotions onto the unit disk")
    s.add_argument("events")
    s.add_argument("--assignment", help="node,community CSV for per-community grids")
    s.add_argument("--grid", type=int, default=50)
    s.add_argument("--out", default="circumplex")
    s.set_defaults(func=cmd_circumplex)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error[usage]: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except LogFormatError as exc:
        print(f"error[format]: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except ConfigError as exc:
        print(f"error[config]: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FitRefused, EmptyDistributionError, EmptyProjectionError, SpectrumTooLargeError) as exc:
        print(f"error[refused]: {exc}", file=sys.stderr)
        return EXIT_REFUSED
    except OSError as exc:
        print(f"error[io]: {exc}", file=sys.stderr)
        return EXIT_OTHER
    except ValueError as exc:
        print(f"error[value]: {exc}", file=sys.stderr)
        return EXIT_OTHER


if __name__ == "__main__":
    sys.exit(main())

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from emoblog.analysis import (
    CircumplexTransformer,
    FitRefused,
    PowerSpectrumEstimator,
    assortativity,
    build_series,
    circumplex_coords,
    circumplex_map,
    degree_distributions,
    degrees,
    fit_degree_models,
    log_bin,
    log_binned_histogram,
    loglog_slope,
    peak_ratio,
    periodogram,
    power_spectrum,
)
from emoblog.model import COMMENT, NEW_POST, BipartiteGraph, CommentEvent
from emoblog.simulation import power_law_noise


def test_series_counting():
    log = [CommentEvent(0, 0, 0, NEW_POST, 0.5, 0.5), CommentEvent(0, 1, 0, COMMENT, 0.5, -0.5),
           CommentEvent(0, 2, 0, COMMENT, 0.5, 0.0)]
    s = build_series(log)
    assert (s.N_c[0], s.N_plus[0], s.N_minus[0], s.Q[0]) == (3, 1, 1, 0)
    twice = build_series([CommentEvent(4, 0, 0), CommentEvent(4, 0, 1)])
    assert twice.N_c[4] == 2 and twice.N_au[4] == 1 and twice.N_ap[4] == 2


def test_series_rows_and_totals(small_run):
    s = small_run.series()
    assert s.N_c.sum() == small_run.graph.total_weight
    assert np.all(s.N_plus + s.N_minus <= s.N_c)
    rows = list(s.rows())
    assert rows[0][0] == 0 and len(rows) == len(s)


def test_sinusoid_peak():
    t = np.arange(288 * 14)
    spec = power_spectrum(np.sin(2 * np.pi * t / 288), fit_range=None)
    assert spec.freqs[np.argmax(spec.power)] == pytest.approx(1 / 288)


def test_parseval(rng):
    x = rng.standard_normal(1000)
    f, p = periodogram(x)
    # one-sided |FFT|^2 without the zero bin: double all but the Nyquist term
    two_sided = 2 * p[:-1].sum() + p[-1]
    assert two_sided / len(x) == pytest.approx(len(x) * x.var(), rel=1e-6)


def test_short_and_constant_series():
    with pytest.raises(ValueError):
        power_spectrum(np.ones(10))
    spec = power_spectrum(np.full(500, 3.0))
    assert spec.fit_refused and np.all(spec.power == 0)


def test_white_noise_monte_carlo():
    phis = [power_spectrum(np.random.default_rng(s).standard_normal(4032)).exponent
            for s in range(20)]
    assert abs(np.mean(phis)) < 0.05
    assert max(abs(p) for p in phis) < 0.3


def test_shaped_noise_recovery():
    phis = np.array([power_spectrum(power_law_noise(4032, 1.5, np.random.default_rng(s))).exponent
                     for s in range(20)])
    assert abs(phis.mean() - 1.5) < 0.1
    assert np.count_nonzero(np.abs(phis - 1.5) <= 0.2) >= 18


def test_log_bin_geometric_mean():
    f = np.array([1.0, 1.1, 2.0, 4.0])
    p = np.array([1.0, 4.0, 3.0, 0.0])
    bf, bp, n = log_bin(f, p, 1.5, return_counts=True)
    assert bp[0] == pytest.approx(2.0)
    assert list(n) == [2, 1, 1]
    assert bp[-1] == 0.0


def test_spectrum_estimator(rng):
    est = PowerSpectrumEstimator().fit(rng.standard_normal(2048))
    assert np.isfinite(est.exponent_) and est.stderr_ > 0


def test_peak_ratio_for_cycle(rng):
    t = np.arange(4032)
    x = rng.poisson(6 * (1 + 0.8 * np.sin(2 * np.pi * t / 288)))
    assert peak_ratio(power_spectrum(x), 1 / 288) > 10
    assert peak_ratio(power_spectrum(rng.poisson(6, 4032)), 1 / 288) < 10


def star(k):
    return BipartiteGraph.from_edges([(a, 0, 1) for a in range(k)])


def test_star_degrees():
    ka, kp = degrees(star(7))
    assert list(kp) == [7] and set(ka) == {1}
    rep = degree_distributions(star(7))
    assert rep.agent_fits is None and rep.notes


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 8), st.integers(0, 8), st.integers(1, 3)), min_size=1, max_size=40))
def test_degree_balance(edges):
    edges = sorted({(a, p): w for a, p, w in edges}.items())
    g = BipartiteGraph.from_edges([(a, p, w) for (a, p), w in edges])
    ka, kp = degrees(g)
    assert ka.sum() == kp.sum() == len(edges)


def test_user_form_roundtrip():
    k = np.arange(1, 3000)
    p = k ** -1.2 * np.exp(-k / 100)
    taus = []
    for seed in range(5):
        x = np.random.default_rng(seed).choice(k, 20000, p=p / p.sum())
        taus.append(fit_degree_models(*log_binned_histogram(x))["user"].params["tau"])
    assert all(abs(t - 1.2) <= 0.2 for t in taus)


def test_nested_fits_not_worse():
    k = np.arange(1, 3000)
    p = k ** -0.8 * np.exp(-k / 50)
    x = np.random.default_rng(0).choice(k, 20000, p=p / p.sum())
    fits = fit_degree_models(*log_binned_histogram(x))
    assert fits["user"].rss <= fits["exponential"].rss + 1e-9
    assert fits["user"].rss <= fits["power"].rss + 1e-9


def test_too_few_bins_refused():
    with pytest.raises(FitRefused):
        fit_degree_models([1, 2, 3], [0.5, 0.3, 0.2])


def test_assortativity_complete_bipartite():
    g = BipartiteGraph.from_edges([(a, p, 1) for a in range(3) for p in range(5)])
    agent_curve, post_curve = assortativity(g)
    assert agent_curve == {5: 3.0}
    assert post_curve == {3: 5.0}
    assert assortativity(BipartiteGraph.from_edges([(0, 0, 1)])) == ({1: 1.0}, {1: 1.0})


def test_simulated_agent_assortativity_flat(constant_runs):
    # pre-cutoff range: every degree held by at least 10 agents
    res = constant_runs[1]
    curve, _ = assortativity(res.graph)
    ka, _ = degrees(res.graph)
    ks, n = np.unique(ka, return_counts=True)
    assert abs(loglog_slope(curve, 1, ks[n >= 10].max())) < 0.15


def test_circumplex_examples():
    a, v = circumplex_coords([1.0, 1.0, 0.5], [0.0, 1.0, 0.0])
    np.testing.assert_allclose(a, [1.0, 1 / np.sqrt(2), 0.0], atol=1e-15)
    np.testing.assert_allclose(v, [0.0, 1 / np.sqrt(2), 0.0], atol=1e-15)
    with pytest.raises(ValueError):
        circumplex_coords([1.2], [0.0])


@settings(max_examples=300, deadline=None)
@given(st.floats(0, 1), st.floats(-1, 1))
def test_circumplex_inside_disk(a, v):
    x, y = circumplex_coords(a, v)
    assert x * x + y * y <= 1 + 1e-12


def test_circumplex_grid_normalised(rng):
    acts = np.column_stack((rng.random(500), rng.uniform(-1, 1, 500)))
    g = circumplex_map(acts, grid=20)
    assert g.density.sum() == pytest.approx(1.0)
    assert circumplex_map([], 10).empty


def test_circumplex_transformer(rng):
    X = np.column_stack((rng.random(10), rng.uniform(-1, 1, 10)))
    Y = CircumplexTransformer().fit_transform(X)
    np.testing.assert_allclose(Y, np.column_stack(circumplex_coords(X[:, 0], X[:, 1])))
    with pytest.raises(ValueError):
        CircumplexTransformer().fit(X).transform(np.ones((2, 3)))

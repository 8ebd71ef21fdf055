import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from emoblog.distributions import (
    DiscreteDistribution,
    EmptyDistributionError,
    default_delay_distribution,
    default_g_distribution,
    default_lifetime_distribution,
    total_variation,
)
from emoblog.inference import (
    ParameterInference,
    extract_arrival_series,
    infer_delay_distribution,
    infer_g_distribution,
    infer_lifetime_distribution,
    infer_mu,
)
from emoblog.model import COMMENT, NEW_POST, CommentEvent
from emoblog.simulation import SimConfig, run


def ev(t, agent, post, kind=COMMENT):
    return CommentEvent(t, agent, post, kind)


def as_dict(dist):
    return {float(x): float(p) for x, p in zip(dist.values, dist.probs)}


# distributions ------------------------------------------------------------


def test_distribution_normalises_and_sorts():
    d = DiscreteDistribution([3, 1, 2], [2, 1, 1])
    assert list(d.values) == [1, 2, 3]
    assert d.probs.sum() == pytest.approx(1.0)
    assert d.mean() == pytest.approx(2.25)
    assert d.cdf(2) == pytest.approx(0.5)


def test_distribution_rejects_bad_tables():
    with pytest.raises(EmptyDistributionError):
        DiscreteDistribution([], [])
    with pytest.raises(ValueError):
        DiscreteDistribution([1, 2], [1, -1])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(0, 50), min_size=1, max_size=30), st.integers(0, 2 ** 32 - 1))
def test_samples_stay_in_support(samples, seed):
    d = DiscreteDistribution.from_samples(samples)
    draws = d.sample(np.random.default_rng(seed), 200)
    assert set(draws) <= set(d.values)


def test_sampling_frequencies(rng):
    d = DiscreteDistribution([0, 1, 5], [0.2, 0.5, 0.3])
    x = d.sample(rng, 100_000)
    for v, p in zip(d.values, d.probs):
        assert np.mean(x == v) == pytest.approx(p, abs=0.01)


def test_csv_roundtrip(tmp_path):
    d = DiscreteDistribution([1, 2.5, 7], [1, 2, 1])
    d.to_csv(tmp_path / "d.csv")
    assert (tmp_path / "d.csv").read_text().splitlines()[0] == "value,probability"
    back = DiscreteDistribution.from_csv(tmp_path / "d.csv")
    np.testing.assert_allclose(back.values, d.values)
    np.testing.assert_allclose(back.probs, d.probs)


def test_total_variation():
    p = DiscreteDistribution([1, 2], [1, 1])
    q = DiscreteDistribution([2, 3], [1, 1])
    assert total_variation(p, q, None) == pytest.approx(0.5)
    assert total_variation(p, p) == 0.0


def test_fallbacks_are_labelled():
    assert default_delay_distribution().label.startswith("fallback")
    assert default_delay_distribution().values.min() == 1
    life = default_lifetime_distribution(576)
    assert life.values.min() == 576 and life.values.max() == 100_000
    g = default_g_distribution()
    assert g.probs[g.values == 0][0] == pytest.approx(0.9)
    assert g.values.max() <= 1.0


# inference ----------------------------------------------------------------


def test_delay_hand_example():
    log = [ev(0, 0, 0, NEW_POST), ev(5, 0, 0), ev(5, 0, 0), ev(17, 0, 0)]
    assert as_dict(infer_delay_distribution(log)) == pytest.approx({0.0: 1 / 3, 5.0: 1 / 3, 12.0: 1 / 3})


def test_delay_needs_repeat_actors():
    with pytest.raises(EmptyDistributionError):
        infer_delay_distribution([ev(0, 0, 0, NEW_POST), ev(1, 1, 0)])


def test_delay_pooling_invariance():
    a = [ev(0, 0, 0, NEW_POST), ev(3, 0, 0), ev(10, 0, 0)]
    b = a + [ev(100, 1, 0), ev(103, 1, 0), ev(110, 1, 0)]
    assert as_dict(infer_delay_distribution(a)) == pytest.approx(as_dict(infer_delay_distribution(b)))


def test_lifetime():
    log = [ev(10, 0, 0, NEW_POST), ev(100, 1, 0), ev(20, 1, 1, NEW_POST)]
    assert as_dict(infer_lifetime_distribution(log)) == pytest.approx({0.0: 0.5, 90.0: 0.5})


def test_mu_examples():
    log = [ev(0, 0, 0, NEW_POST), ev(2, 1, 0), ev(4, 1, 0),
           ev(1, 1, 1, NEW_POST), ev(1, 0, 1), ev(3, 0, 1),
           ev(5, 2, 2, NEW_POST)]
    assert infer_mu(log, 100) == 0.0
    # late fractions at T0 = 0: post 0 -> 2/3, post 1 -> 1/3, post 2 -> 0
    assert infer_mu(log, 0) == pytest.approx((2 / 3 + 1 / 3 + 0) / 3)
    # T0 = 2: only the comment at 4 on post 0 is late
    assert infer_mu(log, 2) == pytest.approx((1 / 3) / 3)


def test_g_examples():
    log = [ev(0, 0, 0, NEW_POST), ev(1, 0, 1), ev(2, 0, 2), ev(3, 0, 3),
           ev(0, 1, 1, NEW_POST), ev(0, 2, 2, NEW_POST), ev(0, 3, 3, NEW_POST)]
    d = as_dict(infer_g_distribution(log))
    assert d == pytest.approx({0.25: 0.25, 1.0: 0.75})


def test_g_two_point():
    log = [ev(0, 0, 0, NEW_POST), ev(1, 1, 0), ev(2, 2, 0), ev(3, 3, 1, NEW_POST)]
    assert as_dict(infer_g_distribution(log)) == pytest.approx({0.0: 0.5, 1.0: 0.5})


def test_arrivals():
    log = [ev(3, 0, 0, NEW_POST), ev(9, 0, 0), ev(5, 1, 0), ev(9, 2, 0)]
    np.testing.assert_array_equal(extract_arrival_series(log), [1, 0, 1, 0, 0, 0, 1])
    np.testing.assert_array_equal(extract_arrival_series(log, bin_width=4), [2, 1])
    same_bin = [ev(0, a, 0) for a in range(4)] + [ev(2, 0, 0)]
    np.testing.assert_array_equal(extract_arrival_series(same_bin), [4, 0, 0])


def test_arrival_roundtrip_from_simulation(tmp_path):
    rng = np.random.default_rng(3)
    p = rng.integers(0, 5, 300)
    path = tmp_path / "p.csv"
    path.write_text("t,p\n" + "".join(f"{t},{n}\n" for t, n in enumerate(p)))
    res = run(SimConfig(driving=f"empirical:{path}", steps=300, seed=2, init_agents=10))
    arrivals = extract_arrival_series(res.events, t_start=0, t_end=300)
    # bin 0 holds the initial agents; new agents of step t act in bin t
    assert arrivals[0] == 10
    np.testing.assert_array_equal(arrivals[1:], p)


def test_parameter_inference_estimator(small_run):
    est = ParameterInference(T0=576).fit(small_run.events)
    assert 0.0 <= est.mu_ <= 1.0
    for dist in (est.delay_, est.lifetime_, est.g_):
        assert dist.probs.sum() == pytest.approx(1.0)
        assert np.all(dist.probs >= 0)
    assert est.arrivals_.sum() == small_run.graph.n_agents
    assert est.get_params() == {"T0": 576, "bin_width": 1}

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from emoblog.dynamics import (
    ActiveRegionSnapshot,
    MapParams,
    NonConvergenceError,
    arousal_field,
    local_fields,
    map_fixed_point,
    polarity,
    update_emotion,
    valence_field,
)

P = MapParams()
unit = st.floats(0, 1)
sym = st.floats(-1, 1)
field = st.floats(-3, 3)


def snap(total_a, vbar, n, npos, nneg):
    return ActiveRegionSnapshot(np.arange(len(n)), total_a, vbar, n, npos, nneg)


def test_params_validated():
    with pytest.raises(ValueError):
        MapParams(gamma=1.0)
    with pytest.raises(ValueError):
        MapParams(q=1.5)


def test_snapshot_invariants_checked():
    with pytest.raises(ValueError):
        snap([1.0], [0.0], [0], [0], [0])
    with pytest.raises(ValueError):
        snap([1.0], [0.0], [1], [1], [1])


def test_single_post_arousal_field():
    s = snap([0.6], [0.4], [2], [1], [0])
    for v in (-0.9, 0.0, 0.7):
        local, mf = arousal_field(v, [1.0], s)
        assert local == pytest.approx(0.3, abs=1e-15)
        assert mf == pytest.approx(0.3, abs=1e-15)


def test_unlinked_agent_has_no_local_field():
    s = snap([0.6], [0.4], [2], [1], [0])
    assert arousal_field(0.2, [0.0], s)[0] == 0.0
    assert valence_field(1.0, [0.0], s)[0] == 0.0


def test_duplicate_posts_same_field():
    one = snap([0.9], [-0.2], [3], [1], [1])
    two = snap([0.9, 0.9], [-0.2, -0.2], [3, 3], [1, 1], [1, 1])
    assert arousal_field(0.5, [2.0, 1.0], two)[0] == pytest.approx(arousal_field(0.5, [1.0], one)[0])


def test_valence_field_examples():
    pos = snap([1.0], [0.5], [2], [2], [0])
    neg = snap([1.0], [-0.5], [2], [0], [2])
    assert valence_field(1.0, [1.0], pos)[0] == pytest.approx(0.6 / 1.4, abs=1e-15)
    assert valence_field(1.0, [1.0], neg)[0] == pytest.approx(-1.0, abs=1e-15)
    assert valence_field(0.0, [1.0], snap([1.0], [0.0], [2], [0], [0])) == (0.0, 0.0)


def test_empty_snapshot():
    s = ActiveRegionSnapshot.empty()
    assert arousal_field(0.3, [], s) == (0.0, 0.0)
    assert valence_field(1.0, [], s) == (0.0, 0.0)


def test_polarity_band():
    assert polarity(1e-10) == 0.0
    assert polarity(-1e-8) == -1.0
    np.testing.assert_array_equal(polarity([0.3, 0.0, -2.0]), [1.0, 0.0, -1.0])


def test_relaxation_example():
    a, v = update_emotion(0.8, -0.5, 0.7, 0.2, P, prompted=False)
    assert a == pytest.approx(0.76, abs=1e-15)
    assert v == pytest.approx(-0.475, abs=1e-15)


def test_origin_fixed():
    assert update_emotion(0.0, 0.0, 0.0, 0.0, P) == (0.0, 0.0)


@settings(max_examples=300, deadline=None)
@given(unit, sym, field, field, st.booleans())
def test_update_stays_in_box(a, v, ha, hv, prompted):
    a2, v2 = update_emotion(a, v, ha, hv, P, prompted)
    assert 0.0 <= a2 <= 1.0 and -1.0 <= v2 <= 1.0


@settings(max_examples=100, deadline=None)
@given(unit, sym, st.integers(0, 60))
def test_relaxation_is_geometric(a, v, k):
    x, y = a, v
    for _ in range(k):
        x, y = update_emotion(x, y, 0.5, 0.5, P, prompted=False)
    assert x == pytest.approx(a * 0.95 ** k, rel=1e-9, abs=1e-300)
    assert y == pytest.approx(v * 0.95 ** k, rel=1e-9, abs=1e-300)


@settings(max_examples=200, deadline=None)
@given(sym, st.floats(-1, 1), st.floats(0.5, 3), st.floats(0, 3))
def test_valence_map_odd_without_cubic_term(v, h, c1, d2):
    params = MapParams(c1=c1, c2=0.0, d2=d2)
    _, plus = update_emotion(0.5, v, 0.1, h, params)
    _, minus = update_emotion(0.5, -v, 0.1, -h, params)
    assert minus == pytest.approx(-plus, abs=1e-15)


def test_valence_map_not_odd_with_cubic_term():
    # c1 + c2 (v - v^3) is not even in v, so the default map breaks the mirror.
    _, plus = update_emotion(0.5, 0.5, 0.0, 0.3, P)
    _, minus = update_emotion(0.5, -0.5, 0.0, -0.3, P)
    assert plus != pytest.approx(-minus, abs=1e-3)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 1), sym, st.integers(1, 6), st.integers(0, 6),
                          st.integers(0, 6), st.floats(0, 4)), min_size=1, max_size=6), sym)
def test_field_bounds(posts, v):
    n = np.array([p[2] for p in posts], dtype=float)
    npos = np.array([min(p[3], p[2]) for p in posts], dtype=float)
    nneg = np.array([min(p[4], p[2] - npos[i]) for i, p in enumerate(posts)], dtype=float)
    total = np.array([p[0] for p in posts]) * n
    s = snap(total, [p[1] for p in posts], n, npos, nneg)
    w = [p[5] for p in posts]
    la, ma = arousal_field(v, w, s)
    lv, mv = valence_field(polarity(v), w, s)
    assert 0 <= la <= 1 + 1e-12 and 0 <= ma <= 1 + 1e-12
    assert -1 <= lv <= 1 and -1 <= mv <= 1


def test_batched_fields_match_scalar(rng):
    n_posts, n_agents = 5, 40
    n = rng.integers(1, 6, n_posts).astype(float)
    npos = np.floor(rng.random(n_posts) * (n + 1))
    nneg = np.floor(rng.random(n_posts) * (n - npos + 1))
    s = snap(rng.random(n_posts) * n, rng.uniform(-1, 1, n_posts), n, npos, nneg)
    W = rng.integers(0, 3, (n_agents, n_posts)).astype(float)
    v = rng.uniform(-1, 1, n_agents)
    ha, hv = local_fields(v, sp.csr_matrix(W), s)
    for i in range(n_agents):
        assert ha[i] == pytest.approx(arousal_field(v[i], W[i], s)[0], abs=1e-14)
        assert hv[i] == pytest.approx(valence_field(polarity(v[i]), W[i], s)[0], abs=1e-14)


# Fixed points below were obtained with a bracketing root finder on
# -gamma*x + h*(1 + d2*(x - x^2))*(1 - x) = 0 (and the valence analogue).
ROOTS_AROUSAL = {0.1: 0.6888921825340181, 0.3: 0.863992369746392, 0.6: 0.9254507433853083}


@pytest.mark.parametrize("h", sorted(ROOTS_AROUSAL))
def test_arousal_fixed_point_matches_root(h):
    assert map_fixed_point(P, h) == pytest.approx(ROOTS_AROUSAL[h], abs=1e-8)


def test_arousal_fixed_point_monotone():
    fields = np.linspace(0.0, 1.0, 10)
    fps = [map_fixed_point(P, h) for h in fields]
    assert fps[0] == pytest.approx(0.0, abs=1e-8)
    assert all(b >= a - 1e-12 for a, b in zip(fps, fps[1:]))


def test_valence_branches():
    up = map_fixed_point(P, 0.1, "valence", 0.5)
    down = map_fixed_point(P, -0.1, "valence", -0.5)
    assert up == pytest.approx(0.7656556977064148, abs=1e-8)
    assert down == pytest.approx(-0.39780438570625826, abs=1e-8)
    flat = MapParams(c2=0.0)
    assert map_fixed_point(flat, -0.2, "valence", -0.5) == pytest.approx(
        -map_fixed_point(flat, 0.2, "valence", 0.5), abs=1e-9)


def test_fixed_point_nonconvergence_reported():
    with pytest.raises(NonConvergenceError) as err:
        map_fixed_point(P, 0.3, max_iter=3)
    assert err.value.n_iter == 3

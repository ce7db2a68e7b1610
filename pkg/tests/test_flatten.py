"""The flattening map: exact uniformity on q, distance contraction on p != q."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from smpinfer import Distribution, RngStream, tv_distance
from smpinfer.dist import sample_iid
from smpinfer.flatten import goldreich_map, goldreich_pushforward, goldreich_sample


def prob_vectors(min_size=2, max_size=8):
    return (
        st.lists(st.floats(0.01, 1.0), min_size=min_size, max_size=max_size)
        .map(lambda xs: np.array(xs) / np.sum(xs))
    )


@st.composite
def prob_vector_pairs(draw, min_size=2, max_size=8):
    size = draw(st.integers(min_size, max_size))
    return (
        draw(prob_vectors(size, size)),
        draw(prob_vectors(size, size)),
    )


def test_reference_maps_to_exact_uniform():
    q = np.array([0.5, 0.3, 0.15, 0.05])
    fmap = goldreich_map(q)
    image = goldreich_pushforward(fmap, q)
    np.testing.assert_allclose(image.probs, 1.0 / 20.0, atol=1e-12)


def test_block_sizes_and_domain():
    q = np.array([0.5, 0.3, 0.15, 0.05])
    fmap = goldreich_map(q)
    assert fmap.image_size == 20
    # floor(4k q_i + 1) with k = 4
    np.testing.assert_array_equal(fmap.block_size, [9, 5, 3, 1])
    assert fmap.block_size.sum() + fmap.leftover_size == 20
    assert np.all(fmap.accept_prob <= 1.0)
    assert np.all(fmap.accept_prob > 0.0)


def test_grained_reference_has_no_leftover():
    # 4k q_i integral for every i: accept probability one, empty leftover.
    q = np.array([6, 4, 3, 3], dtype=float) / 16.0
    fmap = goldreich_map(q)
    np.testing.assert_allclose(fmap.accept_prob, 1.0, atol=1e-12)
    assert fmap.leftover_size == 0
    np.testing.assert_array_equal(fmap.block_size, [7, 5, 4, 4])


def test_grained_contraction_is_exactly_four_fifths():
    q = np.array([6, 4, 3, 3], dtype=float) / 16.0
    p = np.array([0.5, 0.25, 0.125, 0.125])
    fmap = goldreich_map(q)
    image = goldreich_pushforward(fmap, p)
    uniform = Distribution.uniform(fmap.image_size)
    assert tv_distance(image, uniform) == pytest.approx(
        0.8 * tv_distance(p, q), abs=1e-12
    )


@settings(max_examples=60, deadline=None)
@given(prob_vector_pairs())
def test_contraction_lower_bound(pair):
    # Universal floor: the mixing stage keeps 4/5 of the distance and every
    # symbol keeps strictly more than half of its deviation in its dedicated
    # block, so the image is always > (2/5) tv(p, q) from uniform.  The 16/25
    # factor needs more (see the grained test below): symbols can retain as
    # little as (floor(x)+1)/(x+1) of their deviation, x = 4k q_i, which dips
    # toward 1/2 as x -> 1 from below.
    q, p = pair
    fmap = goldreich_map(q)
    image = goldreich_pushforward(fmap, p)
    uniform = Distribution.uniform(fmap.image_size)
    lhs = tv_distance(image, uniform)
    rhs = (2.0 / 5.0) * tv_distance(p, q)
    assert lhs >= rhs - 1e-12


@settings(max_examples=60, deadline=None)
@given(prob_vector_pairs())
def test_grained_reference_contracts_by_exactly_four_fifths(pair):
    # When 4k q_i is integral for every i, each symbol keeps its whole
    # deviation (dedicated blocks only, no leftover), so only the mixing
    # factor remains and the 16/25 bound holds with room to spare.
    raw, p = pair
    k = raw.size
    grains = np.maximum(1, np.round(raw * 4 * k)).astype(int)
    grains[0] += 4 * k - grains.sum()
    if grains[0] < 1:
        return
    q = grains / (4.0 * k)
    fmap = goldreich_map(q)
    image = goldreich_pushforward(fmap, p)
    uniform = Distribution.uniform(fmap.image_size)
    assert tv_distance(image, uniform) == pytest.approx(
        0.8 * tv_distance(p, q), abs=1e-12
    )


def test_contraction_floor_is_nearly_sharp():
    # Both perturbation signs on symbols with 4k q_i = 0.9, where only
    # 1/1.9 of the deviation survives: the ratio lands at 0.8/1.9 ~ 0.421.
    k = 8
    q = np.full(k, 1.0 / k)
    q[0] = q[1] = 0.9 / (4 * k)
    q[2:] = (1.0 - q[0] - q[1]) / (k - 2)
    p = q.copy()
    move = 0.9 * q[0]
    p[0] += move
    p[1] -= move
    fmap = goldreich_map(q)
    ratio = tv_distance(goldreich_pushforward(fmap, p),
                        Distribution.uniform(fmap.image_size)) / tv_distance(p, q)
    assert ratio == pytest.approx(0.8 / 1.9, abs=1e-12)
    assert ratio < 16.0 / 25.0


@settings(max_examples=40, deadline=None)
@given(prob_vectors())
def test_pushforward_of_reference_is_uniform(q):
    fmap = goldreich_map(q)
    image = goldreich_pushforward(fmap, q)
    np.testing.assert_allclose(image.probs, 1.0 / fmap.image_size, atol=1e-9)


def test_sampling_matches_pushforward():
    q = np.array([0.5, 0.3, 0.15, 0.05])
    p = np.array([0.4, 0.4, 0.1, 0.1])
    fmap = goldreich_map(q)
    gen = RngStream(31, 0).generator
    source = sample_iid(p, 300_000, gen)
    ys = goldreich_sample(fmap, source, gen)
    freq = np.bincount(ys, minlength=fmap.image_size) / ys.size
    np.testing.assert_allclose(freq, goldreich_pushforward(fmap, p).probs, atol=0.004)


def test_sample_scalar_round_trip():
    fmap = goldreich_map([0.5, 0.5])
    y = goldreich_sample(fmap, 1, RngStream(4, 4))
    assert np.ndim(y) == 0
    assert 0 <= int(y) < fmap.image_size


def test_sample_determinism():
    fmap = goldreich_map([0.25, 0.25, 0.5])
    xs = np.array([0, 1, 2, 2, 1, 0])
    a = goldreich_sample(fmap, xs, RngStream(8, 0))
    b = goldreich_sample(fmap, xs, RngStream(8, 0))
    np.testing.assert_array_equal(a, b)


def test_pushforward_validates_size():
    fmap = goldreich_map([0.5, 0.5])
    with pytest.raises(ValueError):
        goldreich_pushforward(fmap, [0.2, 0.3, 0.5])

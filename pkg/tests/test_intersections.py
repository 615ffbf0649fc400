import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from strandseg.clustering import ClusterModel, ForegroundEmbeddings
from strandseg.intersections import (ResolveConfig, build_instances,
                                     min_similarity, resolve_pixel,
                                     similarity_scores)


def test_similarity_point_values():
    # gap of 1 at beta=2 -> 1/(1+e^-2); equal distances -> exactly 0.5
    s = similarity_scores(np.array([1.0, 2.0]), beta=2.0)
    assert s[0] == pytest.approx(0.8807970779778823, abs=1e-6)
    s = similarity_scores(np.array([0.5, 0.7]), beta=2.0)
    assert s[0] == pytest.approx(0.598687660112452, abs=1e-6)
    s = similarity_scores(np.array([1.3, 1.3]), beta=2.0)
    assert s[0] == 0.5


def test_similarity_multiple_candidates_use_common_reference():
    d = np.array([1.0, 1.5, 4.0])
    s = similarity_scores(d, beta=2.0)
    assert s.shape == (2,)
    expected = 1.0 / (1.0 + np.exp(-2.0 * (d[1:] - d[0])))
    np.testing.assert_allclose(s, expected, atol=1e-12)


def test_similarity_validation():
    with pytest.raises(ValueError):
        similarity_scores(np.array([2.0, 1.0]), beta=2.0)  # not sorted
    with pytest.raises(ValueError):
        similarity_scores(np.array([-0.1, 1.0]), beta=2.0)
    with pytest.raises(ValueError):
        similarity_scores(np.array([1.0]), beta=2.0)  # need >= 2 entries


@settings(max_examples=60, deadline=None)
@given(st.floats(0.0, 5.0), st.floats(0.0, 5.0), st.floats(0.5, 4.0),
       st.floats(0.55, 0.95))
def test_gap_threshold_equivalence(d1, gap, beta, a):
    # s < a  <=>  d_i - d_1 < ln(a/(1-a)) / beta
    d = np.array([d1, d1 + gap])
    s = float(similarity_scores(d, beta=beta)[0])
    cutoff = math.log(a / (1 - a)) / beta
    assert (s < a) == (gap < cutoff)


def test_similarity_in_half_open_interval():
    rng = np.random.default_rng(0)
    for _ in range(50):
        d = np.sort(rng.uniform(0, 6, size=4))
        s = similarity_scores(d, beta=2.0)
        assert np.all(s >= 0.5) and np.all(s < 1.0)


# --- per-pixel resolution -------------------------------------------------


def _model(*centers):
    c = np.asarray(centers, dtype=float)
    return ClusterModel(centers=c, assignment=np.zeros(0, dtype=int))


def test_resolve_single_cluster_is_nearest_only():
    model = _model([0, 0, 0, 0, 0])
    got = resolve_pixel(np.array([5.0, 0, 0, 0, 0]), model.centers,
                        ResolveConfig())
    assert got == {0}


def test_resolve_midpoint_claims_both():
    model = _model([0, 0, 0, 0, 0], [3.0, 0, 0, 0, 0])
    got = resolve_pixel(np.array([1.5, 0, 0, 0, 0]), model.centers,
                        ResolveConfig(beta=2.0, threshold_a=0.7))
    assert got == {0, 1}


def test_resolve_clear_pixel_single_owner():
    # gap 3.0 - 0.0 far above the ~0.42 cutoff: only the nearest claims it
    model = _model([0, 0, 0, 0, 0], [3.0, 0, 0, 0, 0])
    got = resolve_pixel(np.array([0.0, 0, 0, 0, 0]), model.centers,
                        ResolveConfig())
    assert got == {0}


def test_resolve_monotone_in_threshold():
    # raising a admits more co-owners, never fewer
    model = _model([0, 0, 0, 0, 0], [1.0, 0, 0, 0, 0], [2.0, 0, 0, 0, 0])
    pixel = np.array([0.3, 0, 0, 0, 0])
    sizes = []
    for a in (0.55, 0.7, 0.85, 0.99):
        got = resolve_pixel(pixel, model.centers,
                            ResolveConfig(beta=2.0, threshold_a=a))
        sizes.append(len(got))
        assert 0 in got  # nearest always included
    assert sizes == sorted(sizes)


def test_resolve_constant_shift_invariance():
    model = _model([0, 0, 0, 0, 0], [1.2, 0, 0, 0, 0])
    pixel = np.array([0.5, 0, 0, 0, 0])
    base = resolve_pixel(pixel, model.centers, ResolveConfig())
    shift = np.full(5, 7.25)
    moved = resolve_pixel(pixel + shift, model.centers + shift, ResolveConfig())
    assert moved == base


def test_resolve_config_validation():
    with pytest.raises(ValueError):
        ResolveConfig(threshold_a=0.5)
    with pytest.raises(ValueError):
        ResolveConfig(threshold_a=1.0)
    with pytest.raises(ValueError):
        ResolveConfig(beta=0.0)


# --- whole-frame assembly ---------------------------------------------------


def _frame_fixture():
    """4x4 frame, two clusters; pixel (1,1) exactly between them."""
    h = w = 4
    pixels = np.array([[0, 0], [0, 1], [1, 1], [2, 2], [2, 3]])
    vectors = np.zeros((5, 5))
    vectors[0, 0] = 0.0
    vectors[1, 0] = 0.0
    vectors[2, 0] = 1.5  # midpoint
    vectors[3, 0] = 3.0
    vectors[4, 0] = 3.0
    fe = ForegroundEmbeddings(pixels=pixels, vectors=vectors, height=h, width=w)
    model = ClusterModel(centers=np.array([[0.0, 0, 0, 0, 0],
                                           [3.0, 0, 0, 0, 0]]),
                         assignment=np.array([0, 0, 0, 1, 1]))
    return fe, model


def test_build_instances_oracle():
    fe, model = _frame_fixture()
    inst = build_instances(fe, model, ResolveConfig())
    assert len(inst) == 2
    a = np.zeros((4, 4), bool)
    a[0, 0] = a[0, 1] = a[1, 1] = True
    b = np.zeros((4, 4), bool)
    b[2, 2] = b[2, 3] = b[1, 1] = True  # midpoint double-assigned
    np.testing.assert_array_equal(inst.masks[0], a)
    np.testing.assert_array_equal(inst.masks[1], b)


def test_build_instances_union_covers_foreground():
    fe, model = _frame_fixture()
    inst = build_instances(fe, model, ResolveConfig())
    fg = np.zeros((4, 4), bool)
    fg[tuple(fe.pixels.T)] = True
    np.testing.assert_array_equal(inst.union(), fg)


def test_build_instances_tight_threshold_no_sharing():
    # a near-midpoint pixel (gap 0.2) is shared at the default threshold but
    # not once the allowed gap shrinks below it
    fe, model = _frame_fixture()
    fe.vectors[2, 0] = 1.4  # distances 1.4 vs 1.6
    shared = build_instances(fe, model, ResolveConfig())
    assert shared.overlap()[1, 1]
    tight = build_instances(fe, model, ResolveConfig(threshold_a=0.501))
    assert not tight.overlap().any()
    np.testing.assert_array_equal(tight.union(), shared.union())


def test_min_similarity_map():
    fe, model = _frame_fixture()
    sim = min_similarity(fe, model, ResolveConfig())
    assert sim.shape == (4, 4)
    # background stays at the no-ambiguity value
    assert sim[3, 3] == 1.0
    # the midpoint pixel carries an exact 0.5 tie
    assert sim[1, 1] == pytest.approx(0.5)
    # clear pixels: gap 3.0 at beta 2 -> sigmoid(6)
    assert sim[0, 0] == pytest.approx(1 / (1 + math.exp(-6.0)), abs=1e-9)


def test_min_similarity_single_cluster_all_one():
    pixels = np.array([[0, 0], [1, 1]])
    vectors = np.zeros((2, 5))
    fe = ForegroundEmbeddings(pixels=pixels, vectors=vectors, height=2, width=2)
    model = ClusterModel(centers=np.zeros((1, 5)), assignment=np.zeros(2, int))
    sim = min_similarity(fe, model, ResolveConfig())
    assert np.all(sim == 1.0)

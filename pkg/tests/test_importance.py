import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from radcs.geometry import N_BLOCKS, BlockIndex, polar_to_xy
from radcs.importance import (
    Detection,
    MaskConfig,
    PatternVariant,
    SizeClass,
    build_mask,
    classify_size,
    detection_blocks,
    near_av_augment,
    pattern_3x3,
    pattern_5x5,
    pattern_T,
)

R1, R2 = PatternVariant.RADINFO1, PatternVariant.RADINFO2


def S(*pairs):
    return frozenset(BlockIndex(a, r) for a, r in pairs)


# hand-enumerated block sets
PATTERN_FIXTURES = [
    ("3x3 interior", pattern_3x3, (10, 5),
     S((9, 4), (10, 4), (11, 4), (9, 5), (10, 5), (11, 5), (9, 6), (10, 6), (11, 6))),
    ("3x3 near range edge, wrap", pattern_3x3, (0, 0),
     S((19, 0), (0, 0), (1, 0), (19, 1), (0, 1), (1, 1))),
    ("3x3 far range edge, wrap", pattern_3x3, (19, 11),
     S((18, 10), (19, 10), (0, 10), (18, 11), (19, 11), (0, 11))),
    ("5x5 interior", pattern_5x5, (10, 5),
     S(*[(a, r) for a in (8, 9, 10, 11, 12) for r in (3, 4, 5, 6, 7)])),
    ("5x5 wrap low", pattern_5x5, (1, 1),
     S(*[(a, r) for a in (19, 0, 1, 2, 3) for r in (0, 1, 2, 3)])),
    ("5x5 wrap high, far edge", pattern_5x5, (18, 10),
     S(*[(a, r) for a in (16, 17, 18, 19, 0) for r in (8, 9, 10, 11)])),
    ("T interior", pattern_T, (10, 8),
     S((9, 7), (10, 7), (11, 7), (9, 8), (10, 8), (11, 8), (8, 9), (9, 9), (10, 9), (11, 9), (12, 9))),
    ("T at far edge, wrap", pattern_T, (0, 11),
     S((19, 10), (0, 10), (1, 10), (19, 11), (0, 11), (1, 11))),
    ("T at near edge, wrap", pattern_T, (19, 0),
     S((18, 0), (19, 0), (0, 0), (17, 1), (18, 1), (19, 1), (0, 1), (1, 1))),
]


@pytest.mark.parametrize("name, fn, centre, expected", PATTERN_FIXTURES, ids=[f[0] for f in PATTERN_FIXTURES])
def test_pattern_fixtures(name, fn, centre, expected):
    assert fn(BlockIndex(*centre)) == expected


@pytest.mark.parametrize("centre, range_m, expected", [
    ((5, 1), 10.0, S((2, 1), (3, 1), (4, 1), (6, 1), (7, 1), (8, 1))),
    ((1, 0), 5.0, S((18, 0), (19, 0), (0, 0), (2, 0), (3, 0), (4, 0))),
    ((5, 1), 16.0, S()),
    ((5, 1), 15.999, S((2, 1), (3, 1), (4, 1), (6, 1), (7, 1), (8, 1))),
])
def test_near_av_fixtures(centre, range_m, expected):
    assert near_av_augment(BlockIndex(*centre), range_m) == expected


def test_size_classes():
    assert classify_size(Detection(0, 30, 2.0, 5.9)) is SizeClass.SMALL
    assert classify_size(Detection(0, 30, 6.0, 2.0)) is SizeClass.LARGE
    assert Detection(0, 30, 2.5, 12.0).size_class is SizeClass.LARGE


def test_detection_validation():
    with pytest.raises(ValueError):
        Detection(0, 30, 0.0, 2.0)
    with pytest.raises(ValueError):
        Detection(90, 90, 2.0, 2.0)
    with pytest.raises(ValueError):
        Detection(0, 30, 2.0, 2.0, score=1.5)


def det_at(range_m, bearing, large=False, score=1.0):
    x, y = polar_to_xy(range_m, bearing)
    return Detection(x, y, 2.5, 12.0 if large else 4.5, score)


def test_pattern_choice_per_variant():
    far_large = det_at(70, 100, large=True)
    assert len(detection_blocks(far_large, R1)) == 25
    assert len(detection_blocks(far_large, R2)) == 11
    near_small = det_at(30, 100)
    assert len(detection_blocks(near_small, R1)) == 9
    assert len(detection_blocks(near_small, R2)) == 9
    near_large = det_at(30, 100, large=True)
    assert len(detection_blocks(near_large, R2)) == 25
    assert len(detection_blocks(near_large, R2, MaskConfig(radinfo2_large_near="3x3"))) == 9


def test_near_av_defaults():
    close = det_at(10, 100)  # block (5, 1)
    # the strip adds 6 blocks, 2 of which the 3x3 already holds
    assert len(detection_blocks(close, R2)) == 13
    assert len(detection_blocks(close, R1)) == 9
    assert len(detection_blocks(close, R1, MaskConfig(near_av=True))) == 13
    assert len(detection_blocks(close, R2, MaskConfig(near_av=False))) == 9


def test_mask_unions_and_filters_scores():
    a, b = det_at(30, 100), det_at(30, 110)  # azimuth blocks 5 and 6, overlapping
    mask = build_mask([a, b], R1)
    assert len(mask) == 12
    assert mask.source_detections == (a, b)
    weak = det_at(70, 300, score=0.3)
    assert build_mask([weak], R2).important == frozenset()
    assert len(build_mask([weak], R2, MaskConfig(score_threshold=0.2))) == 11


def test_empty_and_bitmap():
    mask = build_mask([], R2)
    assert len(mask) == 0 and not mask.bitmap().any()
    mask = build_mask([det_at(30, 100)], R1)
    bits = mask.bitmap()
    assert bits.sum() == 9
    assert len(mask.packed()) == 30
    assert np.array_equal(np.unpackbits(np.frombuffer(mask.packed(), np.uint8)).astype(bool), bits)
    rows = list(mask.csv_rows())
    assert len(rows) == N_BLOCKS and sum(r[2] for r in rows) == 9


@given(st.integers(0, 19), st.integers(0, 11))
def test_pattern_containment(a, r):
    c = BlockIndex(a, r)
    assert c in pattern_3x3(c) and c in pattern_T(c)
    assert pattern_3x3(c) <= pattern_5x5(c)
    assert pattern_3x3(c) <= pattern_T(c)
    assert pattern_T(c) <= pattern_5x5(c)


def centre_of(block: BlockIndex):
    """Cartesian point in the middle of ``block``."""
    return polar_to_xy((block.range_block + 0.5) * 100 / 12, (block.az_block + 0.5) * 18)


@given(st.lists(st.tuples(st.integers(0, 19), st.integers(6, 11)), min_size=1, max_size=6))
def test_far_large_masks_never_grow(specs):
    dets = [Detection(*centre_of(BlockIndex(a, r)), 2.5, 12.0) for a, r in specs]
    assert all(d.range_m >= 50 for d in dets)
    m1, m2 = build_mask(dets, R1), build_mask(dets, R2)
    assert m2.important <= m1.important
    assert len(m2) <= len(m1)


def test_far_small_object_gets_T():
    """Beyond 50 m RadInfo2 uses the T pattern whatever the size, so a small
    far object gets 11 blocks against RadInfo1's 9."""
    d = Detection(*centre_of(BlockIndex(4, 8)), 1.8, 4.5)
    assert len(build_mask([d], R1)) == 9
    assert len(build_mask([d], R2)) == 11


def test_far_mask_sizes_exhaustive():
    checked = 0
    for flat in range(N_BLOCKS):
        b = BlockIndex.from_flat(flat)
        x, y = centre_of(b)
        if math.hypot(x, y) < 50:
            continue
        d = Detection(x, y, 2.5, 12.0)
        m1, m2 = build_mask([d], R1), build_mask([d], R2)
        assert m2.important <= m1.important
        if 1 <= b.range_block <= 9:
            assert (len(m1), len(m2)) == (25, 11)
        checked += 1
    assert checked == 120


@given(st.floats(0.5, 17.5), st.floats(10, 99))
def test_wraparound_cardinality(bearing, rng_m):
    a = Detection(*polar_to_xy(rng_m, bearing), 2.0, 4.5)
    b = Detection(-a.center_x_m, a.center_y_m, 2.0, 4.5)  # bearing 360 - bearing
    for v in (R1, R2):
        assert len(build_mask([a], v)) == len(build_mask([b], v))


@given(st.lists(st.tuples(st.floats(5, 99), st.floats(0, 359.9), st.booleans()), max_size=5),
       st.tuples(st.floats(5, 99), st.floats(0, 359.9), st.booleans()))
def test_adding_a_detection_never_removes_blocks(base, extra):
    def mk(r, t, large):
        return Detection(*polar_to_xy(r, t), 2.5, 12.0 if large else 4.5)

    dets = [mk(*d) for d in base]
    for v in (R1, R2):
        assert build_mask(dets, v).important <= build_mask(dets + [mk(*extra)], v).important

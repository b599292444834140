import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import ap_bruteforce, box_iou
from radcs.detector import GroundTruthBox
from radcs.evaluation import (
    AP_THRESHOLDS,
    FrameSummary,
    average_precision,
    box_corners,
    box_nmse,
    frame_metrics,
    frame_row,
    iou,
    mean_ap,
    nmse,
    pooled_average_precision,
    psnr_db,
    scene_row,
    truth_pixel_mask,
)
from radcs.geometry import N_AZIMUTH, N_RANGE, PolarFrame
from radcs.importance import Detection


def gt(x, y, w=2.0, h=4.0, fid=1):
    return GroundTruthBox(fid, x, y, w, h)


def det(x, y, score, w=2.0, h=4.0):
    return Detection(x, y, w, h, score)


TRUTH = [gt(0, 30), gt(20, 20), gt(-30, 10), gt(10, -40)]


def test_thresholds():
    assert AP_THRESHOLDS == (0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95)


# (detections as (truth index or None, score), number of truths, expected AP by hand)
AP_FIXTURES = [
    ([(0, 0.9), (None, 0.8), (1, 0.7)], 2, 0.5 + 0.5 * 2 / 3),
    ([(0, 0.9), (1, 0.8)], 2, 1.0),
    ([(None, 0.9), (0, 0.8)], 1, 0.5),
    ([(0, 0.9)], 3, 1 / 3),
    ([(None, 0.95), (None, 0.9), (0, 0.5), (1, 0.4)], 2, 0.5),  # envelope lifts 1/3 to 1/2
    ([(0, 0.9), (0, 0.8), (1, 0.7)], 2, 0.5 + 0.5 * 2 / 3),  # duplicate is a false positive
    ([(3, 0.6), (2, 0.7), (1, 0.8), (0, 0.9)], 4, 1.0),
    ([], 4, 0.0),
]


def build(spec):
    out = []
    for k, (j, s) in enumerate(spec):
        if j is None:
            out.append(det(-60 + 6 * k, -60, s))
        else:
            out.append(det(TRUTH[j].center_x_m, TRUTH[j].center_y_m, s))
    return out


@pytest.mark.parametrize("spec, n_truth, expected", AP_FIXTURES)
def test_ap_fixtures(spec, n_truth, expected):
    dets = build(spec)
    truth = TRUTH[:n_truth]
    got = average_precision(dets, truth, 0.5)
    assert got == pytest.approx(expected, abs=1e-12)
    seen, tp = set(), []
    for j, _ in spec:
        tp.append(j is not None and j not in seen)
        seen.add(j)
    assert got == pytest.approx(ap_bruteforce([s for _, s in spec], tp, n_truth), abs=1e-12)


def test_ap_edge_cases():
    truth = TRUTH[:3]
    perfect = [det(t.center_x_m, t.center_y_m, 1.0) for t in truth]
    assert average_precision(perfect, truth) == 1.0
    assert mean_ap([(perfect, truth)]) == 1.0
    assert average_precision([], truth) == 0.0
    assert average_precision([], []) == 1.0
    assert average_precision(perfect, []) == 0.0


def test_greedy_match_prefers_best_iou():
    # two truths overlap the first detection; it should take the better one
    t_a, t_b = gt(0, 30), gt(0.5, 30)
    d1 = det(0.45, 30, 0.9)
    d2 = det(0, 30, 0.8)
    assert average_precision([d1, d2], [t_a, t_b], 0.5) == 1.0


def test_iou_against_oracle():
    a, b = det(0, 0, 1, 2, 4), det(1, 1, 1, 2, 4)
    assert iou(a, b) == pytest.approx(box_iou(box_corners(a), box_corners(b)))
    assert iou(a, b) == pytest.approx(3 / 13)
    assert iou(a, a) == 1.0
    assert iou(a, det(50, 50, 1)) == 0.0


@given(st.tuples(st.floats(-50, 50), st.floats(-50, 50), st.floats(0.5, 10), st.floats(0.5, 10)),
       st.tuples(st.floats(-50, 50), st.floats(-50, 50), st.floats(0.5, 10), st.floats(0.5, 10)))
def test_iou_properties(a, b):
    da, db = det(a[0], a[1], 1, a[2], a[3]), det(b[0], b[1], 1, b[2], b[3])
    v = iou(da, db)
    assert 0.0 <= v <= 1.0
    assert v == pytest.approx(iou(db, da))
    assert v == pytest.approx(box_iou(box_corners(da), box_corners(db)), abs=1e-12)


@given(st.lists(st.tuples(st.one_of(st.none(), st.integers(0, 3)), st.integers(1, 10**6)),
                max_size=8, unique_by=lambda t: t[1]),
       st.integers(0, 4))
def test_ap_matches_bruteforce(spec, n_truth):
    spec = [(j if j is not None and j < n_truth else None, s / 1e6) for j, s in spec]
    dets = build(spec)
    order = sorted(range(len(spec)), key=lambda i: -spec[i][1])
    seen, tp = set(), [False] * len(spec)
    for i in order:
        j = spec[i][0]
        if j is not None and j not in seen:
            tp[i] = True
            seen.add(j)
    expected = ap_bruteforce([s for _, s in spec], tp, n_truth)
    assert average_precision(dets, TRUTH[:n_truth]) == pytest.approx(expected, abs=1e-12)


@given(st.lists(st.floats(0.01, 1.0), min_size=1, max_size=6), st.floats(0.5, 0.95))
def test_ap_in_unit_interval(scores, thr):
    dets = [det(-20 + 8 * i, 50, s) for i, s in enumerate(scores)]
    v = average_precision(dets, TRUTH, thr)
    assert 0.0 <= v <= 1.0


def test_pooled_ap_keeps_frames_apart():
    t1, t2 = [gt(0, 30)], [gt(0, 30, fid=2)]
    d_wrong = [det(0, 30, 0.9)]
    # a detection on frame 1 cannot match frame 2's truth
    assert pooled_average_precision([(d_wrong, t1), ([], t2)]) == 0.5


def test_nmse_and_psnr():
    x = np.array([1.0, 2.0, 3.0, 4.0])
    assert nmse(x, x) == 0.0
    assert nmse(x, np.zeros(4)) == 1.0
    assert nmse(x, x + 1) == pytest.approx(4 / 30)
    assert math.isnan(nmse(np.zeros(4), x))
    assert psnr_db(x, x) == math.inf
    assert psnr_db(x, x + 1) == pytest.approx(10 * math.log10(16 / 1))


def test_box_nmse_only_sees_boxes():
    data = np.zeros((N_AZIMUTH, N_RANGE), np.float32)
    data[0:3, 170:176] = 100.0  # straight ahead around 30 m
    orig = PolarFrame(data, 1)
    truth = [gt(0, 30, 3, 3)]
    mask = truth_pixel_mask(truth)
    assert mask[0, 172] and not mask[200, 172]
    # error outside the box leaves box_nmse untouched
    noisy = data.copy()
    noisy[200:210, 300:310] = 50
    assert box_nmse(orig, PolarFrame(noisy, 1), truth) == 0.0
    assert box_nmse(orig, PolarFrame.zeros(1), truth) == pytest.approx(1.0)
    m = frame_metrics(orig, PolarFrame(noisy, 1), [], truth)
    assert m.nmse > 0 and m.box_nmse == 0.0 and m.ap50 == 0.0


def test_scene_row_aggregation():
    zero = PolarFrame.zeros(1)
    data = np.zeros((N_AZIMUTH, N_RANGE), np.float32)
    data[5, 5] = 2.0
    f = PolarFrame(data, 2)
    m_undefined = frame_metrics(zero, zero, [], [])
    m_half = frame_metrics(f, PolarFrame(data / 2, 2), [], [])
    assert not m_undefined.nmse_defined and m_half.nmse == pytest.approx(0.25)
    sums = [FrameSummary(1, m_undefined, [], [], 100), FrameSummary(2, m_half, [], [], 200, 3)]
    row = scene_row(sums)
    assert row["nmse"] == pytest.approx(0.25)
    assert row["plan_total_m"] == 300 and row["n_unconverged"] == 3
    assert row["ap50"] == 1.0  # nothing to find, nothing found
    assert frame_row(sums[1])["frame_id"] == 2

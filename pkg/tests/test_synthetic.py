import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from radcs.geometry import FRAME_PERIOD_S, cartesian_point_to_block, extract_block, polar_to_cartesian
from radcs.synthetic import (
    MAX_SPEED_MPS,
    SceneSpec,
    SceneSpecError,
    Target,
    generate_synthetic_scene,
    random_targets,
    render_targets,
    validate,
)


def test_target_motion():
    t = Target(0, 30, vx_mps=4.0, vy_mps=-8.0)
    assert t.center_at(0) == (0, 30)
    assert t.center_at(4) == pytest.approx((4.0 * 4 * FRAME_PERIOD_S, 30 - 8.0))


def test_validation():
    with pytest.raises(SceneSpecError):
        validate(SceneSpec((Target(0, 30, vx_mps=MAX_SPEED_MPS + 1),)))
    with pytest.raises(SceneSpecError):
        validate(SceneSpec((Target(0, 97, height_m=8),)))
    with pytest.raises(SceneSpecError):
        validate(SceneSpec((Target(0, 1.0),)))  # covers the origin
    with pytest.raises(SceneSpecError):
        validate(SceneSpec((Target(0, 90, vy_mps=10),), n_frames=20))  # drives out of the disc
    with pytest.raises(SceneSpecError):
        SceneSpec(n_frames=0)
    with pytest.raises(SceneSpecError):
        SceneSpec(noise_level=-1)


def test_rendered_energy_matches_area():
    # coverage weights integrate to area / pixel area in Cartesian terms
    t = Target(0, 50, width_m=4.0, height_m=4.0, intensity=1.0)
    img = render_targets([(0, 50)], [t])
    polar_px_area = np.radians(0.9) * (np.arange(576) + 0.5) * 0.173611 ** 2
    assert (img * polar_px_area[None, :]).sum() == pytest.approx(16.0, rel=0.03)


def test_scene_generation_and_annotations():
    spec = SceneSpec((Target(10, 40, 2, 3), Target(-20, -50, width_m=2.5, height_m=12)), n_frames=5)
    frames, boxes = generate_synthetic_scene(spec)
    assert [f.frame_id for f in frames] == [1, 2, 3, 4, 5]
    assert len(boxes) == 10
    assert boxes[2].frame_id == 2 and boxes[2].center_x_m == pytest.approx(10 + 2 * 0.25)
    for f in frames:
        assert f.data.dtype == np.float32 and f.data.min() >= 0
    # the target's own block is bright
    b = cartesian_point_to_block(10, 40)
    assert extract_block(frames[0], b).max() > 100
    cart = polar_to_cartesian(frames[0])
    r, c = (np.array(cart.xy_to_pixel(10, 40)) // 1).astype(int)
    assert cart.data[r, c] > 100


def test_generation_is_deterministic():
    spec = SceneSpec(random_targets(3, 4, seed=5), n_frames=4, noise_level=2.0, seed=5)
    a, ba = generate_synthetic_scene(spec)
    b, bb = generate_synthetic_scene(spec)
    assert a == b and ba == bb
    c, _ = generate_synthetic_scene(SceneSpec(spec.targets, 4, 2.0, seed=6))
    assert a != c


def test_noise_has_requested_mean():
    frames, _ = generate_synthetic_scene(SceneSpec((), n_frames=1, noise_level=3.0))
    assert frames[0].data.mean() == pytest.approx(3.0, rel=0.01)


@given(st.integers(1, 6), st.integers(1, 20), st.integers(0, 10**6))
def test_random_targets_are_valid(n, n_frames, seed):
    targets = random_targets(n, n_frames, seed)
    assert len(targets) == n
    validate(SceneSpec(targets, n_frames))
    assert all(t.speed <= MAX_SPEED_MPS for t in targets)
    assert all(10 <= math.hypot(t.x_m, t.y_m) <= 90 for t in targets)

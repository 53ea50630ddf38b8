import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from roves.halfcar import BumpExcitation, HalfCarState, SimulationResult, preset, simulate
from roves.heightfield import GroundPlane
from roves.pose import (
    CorrectionFrame, CorrectionSeries, Delete, PoseSequence, Rotate, Translate, apply_correction,
    config_hash, edit_pose, load_poses, sample_correction, save_poses,
)

EGO = preset("ego")


def straight(n=5, yaw=0.0, vid="car"):
    t = np.arange(n) * 0.1
    half = yaw / 2
    q = np.tile([math.cos(half), 0.0, 0.0, math.sin(half)], (n, 1))
    p = np.column_stack([np.arange(n) * 0.5, np.zeros(n), np.full(n, 0.5)])
    return PoseSequence(vid, t, q, p)


def rodrigues(axis, angle, v):
    """Rotate ``v`` about unit ``axis`` by ``angle`` (right-handed), written out by hand."""
    kx, ky, kz = axis
    c, s = math.cos(angle), math.sin(angle)
    x, y, z = v
    dot = kx * x + ky * y + kz * z
    cross = (ky * z - kz * y, kz * x - kx * z, kx * y - ky * x)
    return np.array([
        x * c + cross[0] * s + kx * dot * (1 - c),
        y * c + cross[1] * s + ky * dot * (1 - c),
        z * c + cross[2] * s + kz * dot * (1 - c),
    ])


# -- sequences -------------------------------------------------------------------------------


def test_sequence_validation():
    with pytest.raises(ValueError, match="increasing"):
        PoseSequence("a", [0.0, 0.0], [[1, 0, 0, 0]] * 2, [[0, 0, 0]] * 2)
    with pytest.raises(ValueError, match="unit"):
        PoseSequence("a", [0.0], [[2, 0, 0, 0]], [[0, 0, 0]])
    with pytest.raises(ValueError, match="frame count"):
        PoseSequence("a", [0.0, 1.0], [[1, 0, 0, 0]], [[0, 0, 0]] * 2)


def test_trajectory_heading_follows_yaw():
    traj = straight(3, yaw=math.pi / 2).trajectory(GroundPlane.horizontal())
    np.testing.assert_allclose(traj.heading, np.tile([0.0, 1.0], (3, 1)), atol=1e-12)


# -- edits ---------------------------------------------------------------------------------------


def test_translate_zero_is_identity():
    s = straight()
    out = edit_pose(s, Translate((0.0, 0.0, 0.0)))
    assert np.array_equal(out.p, s.p) and np.array_equal(out.q, s.q)


def test_translate_adds_offset():
    s = straight()
    out = edit_pose(s, Translate((1.0, -2.0, 0.5)))
    np.testing.assert_allclose(out.p, s.p + [1.0, -2.0, 0.5])


def test_rotate_identity():
    s = straight(yaw=0.3)
    out = edit_pose(s, Rotate((1.0, 0.0, 0.0, 0.0)))
    assert np.array_equal(out.q, s.q)


def test_rotate_left_multiplies():
    s = straight(yaw=0.3)
    out = edit_pose(s, Rotate((math.cos(0.1), 0.0, 0.0, math.sin(0.1))))
    # two yaw rotations compose by adding angles
    np.testing.assert_allclose(out.q[0], [math.cos(0.25), 0, 0, math.sin(0.25)], atol=1e-12)


def test_rotate_normalises_with_warning():
    s = straight()
    with pytest.warns(UserWarning, match="normalised"):
        out = edit_pose(s, Rotate((2.0, 0.0, 0.0, 0.0)))
    np.testing.assert_allclose(out.q, s.q)


def test_delete_all_frames():
    s = straight()
    out = edit_pose(s, Delete(0, len(s)))
    assert len(out) == 0 and out.q.shape == (0, 4)


@given(st.integers(0, 12), st.data())
def test_delete_bookkeeping(n, data):
    s = straight(n) if n else PoseSequence("e", [], np.zeros((0, 4)), np.zeros((0, 3)))
    a = data.draw(st.integers(0, n))
    b = data.draw(st.integers(a, n))
    out = edit_pose(s, Delete(a, b))
    assert len(out) == n - (b - a)


def test_delete_out_of_range():
    with pytest.raises(ValueError):
        edit_pose(straight(3), Delete(2, 5))


@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(-5, 5))
def test_zero_correction_then_edit_equals_edit(dx, dy, dz):
    s = straight()
    corrected = apply_correction(s, CorrectionSeries.zeros(s.t))
    a = edit_pose(corrected, Translate((dx, dy, dz)))
    b = edit_pose(s, Translate((dx, dy, dz)))
    assert np.array_equal(a.p, b.p) and np.array_equal(a.q, b.q)


# -- sampling -------------------------------------------------------------------------------------


def _sim():
    bump = BumpExcitation(0.07, 0.4, 5.0, EGO.wheelbase, t_start=0.2)
    return simulate(HalfCarState(), bump, EGO, 2.0, 1e-3)


def test_sample_on_grid_points_is_exact():
    sim = _sim()
    idx = np.array([0, 10, 500, 2000])
    c = sample_correction(sim, sim.t[idx])
    np.testing.assert_array_equal(c.dz, sim.z_s[idx])
    np.testing.assert_array_equal(c.dtheta, sim.theta[idx])


def test_sample_midpoint():
    states = np.zeros((3, 8))
    states[:, 0] = [0.0, 0.02, 0.04]
    sim = SimulationResult(np.array([0.0, 1.0, 2.0]), states, 1.0)
    assert sample_correction(sim, [1.5]).dz[0] == pytest.approx(0.03)


def test_frame_rate_sampling_matches_piecewise_linear_oracle():
    sim = _sim()
    frames = np.arange(0.0, 2.0 + 1e-9, 0.1) + 0.0003
    frames = frames[frames <= sim.t[-1]]
    c = sample_correction(sim, frames)
    for t, dz, th in zip(frames, c.dz, c.dtheta):
        i = int(np.searchsorted(sim.t, t, side="right") - 1)
        i = min(i, len(sim.t) - 2)
        w = (t - sim.t[i]) / (sim.t[i + 1] - sim.t[i])
        assert dz == pytest.approx(sim.z_s[i] * (1 - w) + sim.z_s[i + 1] * w, abs=1e-12)
        assert th == pytest.approx(sim.theta[i] * (1 - w) + sim.theta[i + 1] * w, abs=1e-12)


def test_sample_outside_names_frame():
    sim = _sim()
    with pytest.raises(ValueError, match="frame 2"):
        sample_correction(sim, [0.0, 1.0, 3.0])


# -- correction ----------------------------------------------------------------------------------


def test_zero_correction_is_identity():
    s = straight(yaw=0.4)
    out = apply_correction(s, CorrectionSeries.zeros(s.t))
    assert np.array_equal(out.q, s.q) and np.array_equal(out.p, s.p)


def test_vertical_offset_only():
    s = PoseSequence("a", [0.0], [[1, 0, 0, 0]], [[1.0, 2.0, 3.0]])
    out = apply_correction(s, CorrectionSeries(np.array([0.0]), np.array([0.05]), np.array([0.0])))
    np.testing.assert_allclose(out.p, [[1.0, 2.0, 3.05]])
    assert np.array_equal(out.q, s.q)


def test_positive_pitch_lowers_front_point():
    s = PoseSequence("a", [0.0], [[1, 0, 0, 0]], [[0.0, 0.0, 0.0]])
    out = apply_correction(s, CorrectionSeries(np.array([0.0]), np.array([0.0]), np.array([0.01])))
    body = np.array([EGO.l_f, 0.0, 0.0])
    moved = out.transform_points(0, body)
    # positive rotation about body +y carries +x toward -z
    oracle = rodrigues((0.0, 1.0, 0.0), 0.01, body)
    np.testing.assert_allclose(moved, oracle, atol=1e-12)
    assert moved[2] == pytest.approx(-EGO.l_f * 0.01, rel=1e-4)


def test_pitch_axis_follows_body_yaw():
    yaw = 0.7
    s = straight(1, yaw=yaw)
    out = apply_correction(s, CorrectionSeries(s.t, np.zeros(1), np.array([0.02])))
    body = np.array([1.0, 0.0, 0.0])
    before = s.transform_points(0, body) - s.p[0]
    after = out.transform_points(0, body) - out.p[0]
    lateral = rodrigues((0.0, 0.0, 1.0), yaw, (0.0, 1.0, 0.0))
    np.testing.assert_allclose(after, rodrigues(lateral, 0.02, before), atol=1e-12)


def test_pitch_about_pivot_keeps_com_fixed():
    frame = CorrectionFrame(pivot=(-1.0, 0.0, -0.5))
    s = PoseSequence("cam", [0.0], [[1, 0, 0, 0]], [[3.0, 0.0, 1.5]])
    out = apply_correction(s, CorrectionSeries(np.array([0.0]), np.array([0.0]), np.array([0.05])), frame)
    com_before = s.transform_points(0, frame.pivot)
    com_after = out.transform_points(0, frame.pivot)
    np.testing.assert_allclose(com_after, com_before, atol=1e-12)


def test_camera_axes_convention():
    # x right, y down, z forward camera: lateral axis is -x; positive pitch tips forward down
    # camera looking along world +x: body z -> world x, body x -> world -y, body y -> world -z
    R = np.array([[0.0, 0.0, 1.0], [-1.0, 0.0, 0.0], [0.0, -1.0, 0.0]])
    q = Rotation.from_matrix(R).as_quat(scalar_first=True)
    s = PoseSequence("cam", [0.0], [q], [[0.0, 0.0, 1.0]])
    out = apply_correction(s, CorrectionSeries(np.array([0.0]), np.array([0.0]), np.array([0.01])),
                           CorrectionFrame(lateral_axis=(-1.0, 0.0, 0.0)))
    fwd = out.transform_points(0, [0.0, 0.0, 1.0]) - out.p[0]
    assert fwd[2] < 0 and fwd[0] > 0.99


@given(st.floats(-0.19, 0.19), st.floats(-math.pi, math.pi), st.floats(-0.3, 0.3))
def test_heading_preserved(dtheta, yaw, dz):
    s = straight(1, yaw=yaw)
    out = apply_correction(s, CorrectionSeries(s.t, np.array([dz]), np.array([dtheta])))
    h0 = s.trajectory().heading
    h1 = out.trajectory().heading
    np.testing.assert_allclose(h1, h0, atol=1e-9)


def test_correction_count_mismatch():
    with pytest.raises(ValueError, match="corrections"):
        apply_correction(straight(3), CorrectionSeries.zeros([0.0, 0.1]))


def test_up_must_be_unit():
    s = straight(2)
    with pytest.raises(ValueError, match="unit"):
        apply_correction(s, CorrectionSeries.zeros(s.t), CorrectionFrame(up=(0.0, 0.0, 2.0)))


# -- files ---------------------------------------------------------------------------------------


def test_pose_file_round_trip(tmp_path):
    seqs = {"a": straight(4, 0.3, "a"), "b": straight(2, -1.0, "b")}
    save_poses(tmp_path / "p.json", seqs, provenance={"sim_config_sha256": "x"})
    doc = json.loads((tmp_path / "p.json").read_text())
    assert set(doc) == {"a", "b", "provenance"}
    assert set(doc["a"][0]) == {"t", "q", "p"}
    back = load_poses(tmp_path / "p.json")
    assert set(back) == {"a", "b"}
    for k in seqs:
        assert np.array_equal(back[k].q, seqs[k].q) and np.array_equal(back[k].p, seqs[k].p)


def test_missing_keys_reported(tmp_path):
    (tmp_path / "p.json").write_text(json.dumps({"a": [{"t": 0.0, "q": [1, 0, 0, 0]}]}))
    with pytest.raises(ValueError, match="'p'"):
        load_poses(tmp_path / "p.json")


def test_config_hash_is_order_independent():
    assert config_hash({"a": 1, "b": [1, 2]}) == config_hash({"b": [1, 2], "a": 1})
    assert config_hash({"a": 1}) != config_hash({"a": 2})


def test_correction_csv(tmp_path):
    c = CorrectionSeries(np.array([0.0, 0.1]), np.array([0.01, 0.02]), np.array([0.001, -0.002]))
    c.to_csv(tmp_path / "c.csv")
    lines = (tmp_path / "c.csv").read_text().splitlines()
    assert lines[0] == "t,z_s,theta" and len(lines) == 3

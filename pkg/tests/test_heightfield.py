import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from roves.halfcar import preset
from roves.heightfield import (
    GroundPlane, HeightField, Trajectory, build_heightfield, excitation_along, fit_ground_plane,
    sample_height,
)

EGO = preset("ego")
FLAT = GroundPlane.horizontal()


# -- plane fit --------------------------------------------------------------------


def test_plane_exact_z0(rng):
    pts = np.column_stack([rng.uniform(-5, 5, (200, 2)), np.zeros(200)])
    plane = fit_ground_plane(pts)
    np.testing.assert_allclose(plane.normal, [0, 0, 1], atol=1e-12)
    assert abs(plane.offset) < 1e-12


def test_plane_ignores_outlier(rng):
    xy = rng.uniform(-5, 5, (1000, 2))
    pts = np.vstack([np.column_stack([xy, np.full(1000, 0.1)]), [[0.3, -0.2, 5.0]]])
    plane = fit_ground_plane(pts)
    # closed-form least squares on the inliers alone is z = 0.1 exactly
    np.testing.assert_allclose(plane.normal, [0, 0, 1], atol=1e-6)
    assert abs(-plane.offset - 0.1) < 1e-6


def test_plane_tilted(rng):
    xy = rng.uniform(-5, 5, (500, 2))
    pts = np.column_stack([xy, 0.01 * xy[:, 0]])
    plane = fit_ground_plane(pts)
    n_true = np.array([-0.01, 0.0, 1.0]) / np.sqrt(1.0001)
    angle = np.arccos(np.clip(plane.normal @ n_true, -1, 1))
    assert angle < 1e-6


def test_plane_normal_points_up(rng):
    xy = rng.uniform(-1, 1, (50, 2))
    plane = fit_ground_plane(np.column_stack([xy, -0.5 * xy[:, 1] + 2.0]))
    assert plane.normal[2] > 0
    assert np.linalg.norm(plane.normal) == pytest.approx(1.0, abs=1e-9)


@pytest.mark.parametrize("pts", [
    np.zeros((5, 3)),
    np.column_stack([np.arange(6.0), 2 * np.arange(6.0), np.zeros(6)]),
    np.zeros((2, 3)),
])
def test_plane_rejects_degenerate(pts):
    with pytest.raises(ValueError):
        fit_ground_plane(pts)


def test_plane_coordinates_round_trip(rng):
    plane = GroundPlane(np.array([0.1, -0.2, 1.0]) / np.linalg.norm([0.1, -0.2, 1.0]), -0.3)
    uv = rng.normal(size=(20, 2))
    h = rng.normal(size=20)
    w = plane.to_world(uv, h)
    np.testing.assert_allclose(plane.to_plane(w), uv, atol=1e-12)
    np.testing.assert_allclose(plane.residual(w), h, atol=1e-12)


# -- build -------------------------------------------------------------------------


def test_single_point():
    f = build_heightfield([[1.0, 2.0, 0.08]], FLAT, 0.05, "max")
    assert f.occupied.sum() == 1
    r, c = f.cell_index([1.0, 2.0])
    assert f.residuals[r, c] == pytest.approx(0.08)
    others = np.ones(f.shape, bool)
    others[r, c] = False
    assert np.all(f.residuals[others] == 0) and not f.occupied[others].any()


def test_two_points_one_cell():
    pts = [[0.01, 0.01, 0.05], [0.02, 0.02, 0.08]]
    assert build_heightfield(pts, FLAT, 0.05, "max").residuals.max() == pytest.approx(0.08)
    fmin = build_heightfield(pts, FLAT, 0.05, "min")
    assert fmin.residuals[fmin.occupied].item() == pytest.approx(0.05)


def test_hump_crest():
    # dense half-sine hump: 0.07 m high, 0.4 m long, 1 m wide
    x = np.linspace(0.0, 0.4, 401)
    y = np.linspace(-0.5, 0.5, 51)
    gx, gy = np.meshgrid(x, y)
    z = 0.07 * np.sin(np.pi * gx / 0.4)
    f = build_heightfield(np.column_stack([gx.ravel(), gy.ravel(), z.ravel()]), FLAT, 0.05, "max")
    # each cell keeps its highest sample; the crest cell contains x = 0.2
    assert abs(f.residuals.max() - 0.07) <= 0.07 * (1 - np.cos(np.pi * 0.05 / 0.4))
    assert f.residuals.max() == pytest.approx(0.07, abs=1e-9)


def test_grid_has_one_cell_margin(rng):
    pts = np.column_stack([rng.uniform(0, 1, (100, 2)), rng.uniform(0, 0.1, 100)])
    f = build_heightfield(pts, FLAT, 0.1)
    assert not f.occupied[0].any() and not f.occupied[-1].any()
    assert not f.occupied[:, 0].any() and not f.occupied[:, -1].any()


def test_build_rejects_bad_input():
    with pytest.raises(ValueError):
        build_heightfield(np.zeros((0, 3)), FLAT)
    with pytest.raises(ValueError):
        build_heightfield([[0, 0, 0]], FLAT, 0.0)
    with pytest.raises(ValueError):
        build_heightfield([[0, 0, 0]], FLAT, 0.05, "mean")


cloud_st = arrays(np.float64, st.tuples(st.integers(1, 60), st.just(3)),
                  elements=st.floats(-2.0, 2.0, allow_nan=False))


@given(cloud_st, st.sampled_from([0.05, 0.1, 0.37]))
def test_projection_totality(pts, cs):
    f = build_heightfield(pts, FLAT, cs)
    assert f.counts.sum() == pts.shape[0]
    assert np.array_equal(f.occupied, f.counts > 0)
    assert np.all(f.residuals[~f.occupied] == 0)


@given(cloud_st)
def test_mode_monotonicity(pts):
    fmax = build_heightfield(pts, FLAT, 0.1, "max")
    fmin = build_heightfield(pts, FLAT, 0.1, "min")
    assert np.all(fmax.residuals[fmax.occupied] >= fmin.residuals[fmin.occupied])


@given(cloud_st, arrays(np.float64, (20, 2), elements=st.floats(-3.0, 3.0)))
def test_sampling_bounds(pts, queries):
    f = build_heightfield(pts, FLAT, 0.1)
    occ = f.residuals[f.occupied]
    h = sample_height(f, queries)
    # zero padding makes 0 part of every convex combination
    assert np.all(h <= max(0.0, occ.max()) + 1e-12)
    assert np.all(h >= min(0.0, occ.min()) - 1e-12)


# -- sampling ------------------------------------------------------------------------


def _grid(values, cs=1.0):
    values = np.asarray(values, float)
    return HeightField(np.zeros(2), cs, values, values != 0)


def test_sample_far_outside():
    f = _grid([[0.05, 0.05], [0.05, 0.05]])
    assert sample_height(f, [100.0, -50.0]) == 0.0


def test_sample_at_cell_centre():
    f = _grid([[0.0, 0.0, 0.0], [0.0, 0.05, 0.0], [0.0, 0.0, 0.0]])
    assert sample_height(f, [1.5, 1.5]) == pytest.approx(0.05)


def test_sample_midway():
    f = _grid([[0.0, 0.0, 0.0, 0.0], [0.0, 0.02, 0.06, 0.0], [0.0, 0.0, 0.0, 0.0]])
    assert sample_height(f, [2.0, 1.5]) == pytest.approx(0.04)


def test_sample_vectorised_matches_scalar(rng):
    f = _grid(rng.uniform(-0.1, 0.1, (5, 7)), 0.2)
    q = rng.uniform(-0.5, 2.0, (30, 2))
    vec = sample_height(f, q)
    assert np.allclose(vec, [sample_height(f, p) for p in q], rtol=0, atol=0)


# -- excitation ----------------------------------------------------------------------


def test_zero_field_gives_zero_excitation():
    f = _grid(np.zeros((4, 4)))
    traj = Trajectory.straight([0.0, 1.0], [1.0, 0.0], 5.0, np.linspace(0, 1, 11))
    exc = excitation_along(f, traj, EGO, 1e-3)
    assert np.all(exc.z_rf == 0) and np.all(exc.z_rr == 0)


def test_stationary_on_plateau():
    pts = np.array([[x, y, 0.05] for x in np.arange(-3, 3, 0.02) for y in np.arange(-0.5, 0.5, 0.02)])
    f = build_heightfield(pts, FLAT, 0.05)
    traj = Trajectory(np.array([0.0, 1.0]), np.zeros((2, 2)), np.tile([1.0, 0.0], (2, 1)))
    exc = excitation_along(f, traj, EGO, 1e-2)
    np.testing.assert_allclose(exc.z_rf, 0.05, atol=1e-12)
    np.testing.assert_allclose(exc.z_rr, 0.05, atol=1e-12)


def _hump_field():
    x = np.arange(0.0, 0.4 + 1e-9, 0.01)
    y = np.arange(-1.0, 1.0 + 1e-9, 0.05)
    gx, gy = np.meshgrid(x, y)
    z = 0.07 * np.sin(np.pi * gx / 0.4)
    return build_heightfield(np.column_stack([gx.ravel() + 10.0, gy.ravel(), z.ravel()]), FLAT, 0.05)


@pytest.mark.parametrize("name", ["ego", "front"])
@pytest.mark.parametrize("speed", [3.0, 5.0, 11.0])
def test_rear_excitation_is_delayed_front(name, speed):
    p = preset(name)
    dt = 1e-3
    f = _hump_field()
    traj = Trajectory.straight([0.0, 0.0], [1.0, 0.0], speed, np.array([0.0, 20.0 / speed]))
    exc = excitation_along(f, traj, p, dt)
    zf, zr = exc.z_rf, exc.z_rr
    # lag maximising the cross-correlation
    xc = np.correlate(zr, zf, mode="full")
    lag = (np.argmax(xc) - (zf.size - 1)) * dt
    assert abs(lag - p.wheelbase / speed) <= dt
    # time-shift comparison of the two series
    shifted = np.interp(exc.times - p.wheelbase / speed, exc.times, zf, left=0.0)
    assert np.abs(zr - shifted).max() < 0.07 * 0.05


def test_excitation_starts_at_trajectory_time():
    f = _grid(np.zeros((2, 2)))
    traj = Trajectory.straight([0.0, 0.0], [1.0, 0.0], 1.0, np.array([2.0, 3.0]))
    exc = excitation_along(f, traj, EGO, 0.1)
    assert exc.span == pytest.approx((2.0, 3.0))


def test_trajectory_validation():
    with pytest.raises(ValueError, match="empty"):
        Trajectory(np.zeros(0), np.zeros((0, 2)), np.zeros((0, 2)))
    with pytest.raises(ValueError, match="increasing"):
        Trajectory(np.array([0.0, 0.0]), np.zeros((2, 2)), np.tile([1.0, 0.0], (2, 1)))
    with pytest.raises(ValueError, match="unit"):
        Trajectory(np.array([0.0]), np.zeros((1, 2)), np.array([[2.0, 0.0]]))


# -- files ---------------------------------------------------------------------------


@pytest.mark.parametrize("mode", ["max", "min"])
def test_file_round_trip(tmp_path, rng, mode):
    pts = np.column_stack([rng.uniform(0, 2, (300, 2)), rng.normal(0, 0.03, 300)])
    f = build_heightfield(pts, FLAT, 0.1, mode)
    path = tmp_path / "f.bin"
    f.save(path)
    raw = path.read_bytes()
    assert raw[:8] == b"ROVESHF\x00" and len(raw) > 16
    g = HeightField.load(path)
    assert g.mode == mode and g.cell_size == f.cell_size
    np.testing.assert_array_equal(g.origin, f.origin)
    np.testing.assert_array_equal(g.occupied, f.occupied)
    np.testing.assert_array_equal(g.residuals, f.residuals.astype(np.float32).astype(np.float64))


def test_file_rejects_bad_magic(tmp_path):
    path = tmp_path / "x.bin"
    path.write_bytes(b"NOTAFIELD" + bytes(40))
    with pytest.raises(ValueError):
        HeightField.load(path)


def test_pgm_export(tmp_path):
    f = _grid([[0.0, 0.1], [-0.1, 0.05]])
    path = tmp_path / "f.pgm"
    f.save_pgm(path)
    raw = path.read_bytes()
    assert raw.startswith(b"P5\n2 2\n65535\n")
    vals = np.frombuffer(raw[len(b"P5\n2 2\n65535\n"):], dtype=">u2").reshape(2, 2)
    assert vals.max() == 65535 and vals.min() == 0

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import single_vehicle_scene
from synthlidar.geometry import Pose
from synthlidar.raycast import SensorModel, scan_frame
from synthlidar.scene import RETRO
from synthlidar.shading import (
    N_BOUNDS, R1_BOUNDS, R2_BOUNDS, FalloffParams, ShadingParams, apply_range_noise,
    apply_raydrop, base_brightness, detect_retroreflectors, frame_view,
    point_intensity, shade_frame,
)


@pytest.fixture(scope="module")
def vehicle_frame():
    # yaw 0: the rear retro plate faces the sensor.
    scene = single_vehicle_scene(distance=10.0, yaw=0.0)
    m = SensorModel(kind="dual_velodyne", azimuth_step_deg=0.09)
    return scan_frame(scene, m, Pose(position=np.array([0, 0, 1.73])), 0)


class TestBaseBrightness:
    def test_affine_formula(self):
        # 0.4 * 0.5 + 0.25 = 0.45, inside the clamp band.
        assert base_brightness(0.5, 0.4, 0.25) == pytest.approx(0.45)

    def test_clamped_to_band(self):
        assert base_brightness(0.0, 0.25, 0.2) == pytest.approx(0.2)
        assert base_brightness(1.0, 0.5, 0.3) == pytest.approx(0.8)

    @settings(max_examples=100, deadline=None)
    @given(st.floats(0, 1), st.floats(*R1_BOUNDS), st.floats(*R2_BOUNDS))
    def test_always_in_band(self, g, r1, r2):
        b = base_brightness(g, r1, r2)
        assert 0.2 <= b <= 0.8

    def test_rejects_out_of_range_params(self):
        with pytest.raises(ValueError):
            base_brightness(0.5, 0.6, 0.25)
        with pytest.raises(ValueError):
            base_brightness(0.5, 0.4, 0.5)
        with pytest.raises(ValueError):
            base_brightness(1.5, 0.4, 0.25)


class TestPointIntensity:
    def test_cosine_power(self):
        assert point_intensity(0.5, 0.5, 2.0) == pytest.approx(0.125)

    def test_zero_exponent_is_identity(self):
        # 0^0 == 1: a zero exponent ignores incidence entirely.
        assert point_intensity(0.4, 0.0, 0.0) == pytest.approx(0.4)

    def test_backfacing_clamped(self):
        assert point_intensity(0.5, -0.3, 1.0) == pytest.approx(0.0)

    @settings(max_examples=100, deadline=None)
    @given(st.floats(0.2, 0.8), st.floats(-1, 1), st.floats(*N_BOUNDS))
    def test_bounded_by_brightness(self, b, c, n):
        i = point_intensity(b, c, n)
        assert 0.0 <= i <= b + 1e-12


class TestShadingParams:
    def test_defaults_match_bounds(self):
        p = ShadingParams()
        assert p.r1_range == R1_BOUNDS
        assert p.r2_range == R2_BOUNDS
        assert p.n_range == N_BOUNDS
        assert p.epsilon == 0.02

    def test_range_validation(self):
        with pytest.raises(ValueError):
            ShadingParams(r1_range=(0.1, 0.5))
        with pytest.raises(ValueError):
            ShadingParams(n_range=(0.0, 9.0))
        with pytest.raises(ValueError):
            ShadingParams(epsilon=0.0)

    def test_from_dict(self):
        p = ShadingParams.from_dict({"epsilon": 0.05, "falloff": {"d0": 20.0, "gamma": 0.3},
                                     "r1_range": [0.3, 0.4]})
        assert p.epsilon == 0.05
        assert p.falloff == FalloffParams(20.0, 0.3)
        assert p.r1_range == (0.3, 0.4)


class TestShadeFrame:
    def test_deterministic(self, vehicle_frame):
        a = shade_frame(vehicle_frame, ShadingParams(), 3)
        b = shade_frame(vehicle_frame, ShadingParams(), 3)
        assert np.array_equal(a.intensity, b.intensity)

    def test_seed_changes_intensities(self, vehicle_frame):
        a = shade_frame(vehicle_frame, ShadingParams(), 3)
        b = shade_frame(vehicle_frame, ShadingParams(), 4)
        assert not np.array_equal(a.intensity, b.intensity)

    def test_intensities_in_unit_interval(self, vehicle_frame):
        v = shade_frame(vehicle_frame, ShadingParams(), 3)
        assert np.all(v.intensity >= 0.0) and np.all(v.intensity <= 1.0)

    def test_mask_selects_subset(self, vehicle_frame):
        mask = vehicle_frame.points["azimuth"] % 2 == 0
        v = shade_frame(vehicle_frame, ShadingParams(), 3, mask=mask)
        assert len(v.intensity) == int(mask.sum())

    def test_retro_points_boosted(self, vehicle_frame):
        params = ShadingParams()
        v = shade_frame(vehicle_frame, params, 3)
        retro = v.material == RETRO
        assert retro.any(), "no retro plate points in frame"
        # Boosted draws live in [0.75, 1.0] before noise; allow noise margin.
        assert v.intensity[retro].min() >= 0.75 - 5 * params.intensity_noise_sigma

    def test_grayscale_peak_detection(self, vehicle_frame):
        v = frame_view(vehicle_frame)
        flags = detect_retroreflectors(v, retro_threshold=0.98)
        assert np.all(flags[v.material == RETRO])
        flat = frame_view(vehicle_frame)
        flat.grayscale = np.full(len(flat.grayscale), 0.5)
        flat.material = np.zeros_like(flat.material)
        # A perfectly flat grayscale field has no strict peaks.
        assert not detect_retroreflectors(flat, 0.98).any()


class TestRaydrop:
    def test_epsilon_semantics(self):
        view = frame_view_stub(np.array([0.5, 0.02, 0.019999, 0.0]))
        out = apply_raydrop(view, 0.02)
        assert out.intensity[0] == pytest.approx(0.48)
        assert out.intensity[1] == 0.0 and not out.dropped[1]  # exactly epsilon survives at 0
        assert out.dropped[2] and out.dropped[3]
        assert np.all(out.intensity >= 0.0)

    def test_rejects_nonpositive_epsilon(self):
        with pytest.raises(ValueError):
            apply_raydrop(frame_view_stub(np.array([0.5])), 0.0)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(0, 1), min_size=1, max_size=64),
           st.floats(0.001, 0.2))
    def test_invariants(self, values, eps):
        view = frame_view_stub(np.array(values))
        out = apply_raydrop(view, eps)
        keep = out.retained()
        assert np.all(out.intensity[keep] >= 0.0)
        # Every dropped point had pre-epsilon intensity < epsilon.
        assert np.all(view.intensity[out.dropped] < eps)
        assert np.all(view.intensity[keep] >= eps)


class TestRangeNoise:
    def test_moves_points_along_ray(self, vehicle_frame):
        v = frame_view(vehicle_frame)
        out = apply_range_noise(v, 0.1, 7)
        delta = out.ranges - v.ranges
        assert np.std(delta) == pytest.approx(0.1, rel=0.05)
        # Displacement is purely radial (relative to the channel origin).
        origins = v.channel_origins[v.channel]
        d_old = np.linalg.norm(v.xyz - origins, axis=1)
        d_new = np.linalg.norm(out.xyz - origins, axis=1)
        assert np.allclose(d_new - d_old, delta, atol=1e-9)

    def test_zero_sigma_noop(self, vehicle_frame):
        v = frame_view(vehicle_frame)
        out = apply_range_noise(v, 0.0, 7)
        assert out is v


def frame_view_stub(intensities: np.ndarray):
    from synthlidar.shading import ShadedFrame
    n = len(intensities)
    return ShadedFrame(
        frame_id=0, xyz=np.zeros((n, 3)), ranges=np.full(n, 10.0),
        normals=np.tile([1.0, 0.0, 0.0], (n, 1)), material=np.zeros(n, dtype=np.uint8),
        actor_id=np.full(n, -1), grayscale=np.full(n, 0.5),
        channel=np.zeros(n, dtype=int), azimuth=np.zeros(n, dtype=int),
        intensity=np.asarray(intensities, dtype=float), dropped=np.zeros(n, dtype=bool),
    )

"""
Tests for reverse-mode differentiation, the optimizer and the trajectory network.
"""

import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

# Add backend to path
backend_path = Path(__file__).parent.parent / "backend"
sys.path.insert(0, str(backend_path))

from autodiff import (
    AdamState,
    MLPSpec,
    ParamVector,
    adam_step,
    cosine_lr,
    encode_time,
    finite_difference_gradient,
    init_mlp_params,
    mlp_eval,
    squash,
    unsquash,
    value_and_gradient,
)
from autodiff import tensor as ad
from biomech import MarkerOffsets, ScaleParams, build_default_upper_body, marker_positions
from camera import project_points
from errors import ContractViolationError, NonFiniteError
from models.schemas import Arm, FitConfig, LossConfig, RigSpec
from solvers import TrialObservations, reprojection_loss
from solvers.end_to_end import huber_on_squared, offsets_from_block, scale_from_block
from synthetic.render import default_rig

MODEL = build_default_upper_body("right")


def _composite(blocks):
    x, w = blocks["x"], blocks["w"]
    y = ad.matmul(x, w)
    a = ad.sin(y) * ad.exp(x / 3.0)
    b = ad.sqrt(x * x + 1.0) + ad.log(y * y + 2.0) / (1.0 + ad.sigmoid(x))
    c = ad.where(ad.value_of(x) > 0, ad.tanh(x), ad.cos(x))
    d = ad.concatenate([a, b], axis=0)
    e = ad.stack([ad.getitem(c, 0), ad.getitem(c, 2)])
    f = ad.swapaxes(ad.reshape(x, (2, 3)), 0, 1) ** 3
    return ad.mean(d * d) + ad.tsum(ad.maximum(e, 0.1)) + ad.tsum(f) - ad.tsum(ad.transpose(w) * w)


class TestGradients:
    """Reverse mode against central finite differences."""

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2 ** 32 - 1))
    def test_composite_expression(self, seed):
        rng = np.random.default_rng(seed)
        at = ParamVector.from_blocks({"x": rng.normal(size=(3, 2)), "w": rng.normal(size=(2, 2))})
        value, grad = value_and_gradient(_composite, at)
        assert value == pytest.approx(float(_composite(at.view(at.values))))
        np.testing.assert_allclose(grad, finite_difference_gradient(_composite, at), rtol=1e-5, atol=1e-6)

    def test_constant_loss_has_zero_gradient(self):
        at = ParamVector.from_blocks({"x": np.ones(3)})
        value, grad = value_and_gradient(lambda blocks: 4.0, at)
        assert value == 4.0
        np.testing.assert_array_equal(grad, np.zeros(3))

    def test_loss_must_be_scalar(self):
        at = ParamVector.from_blocks({"x": np.ones(3)})
        with pytest.raises(ContractViolationError, match="scalar"):
            value_and_gradient(lambda blocks: blocks["x"] * 2.0, at)

    def test_non_finite_values_are_reported(self):
        at = ParamVector.from_blocks({"x": np.array([-1.0])})
        with pytest.raises(NonFiniteError):
            value_and_gradient(lambda blocks: ad.tsum(ad.log(blocks["x"])), at)

    def test_huber_regimes(self):
        assert float(huber_on_squared(np.array(4.0), 10.0)) == pytest.approx(2.0)
        assert float(huber_on_squared(np.array(400.0), 10.0)) == pytest.approx(150.0)

    def test_offsets_stay_inside_radius(self):
        raw = np.array([[100.0, 0.0, 0.0], [0.3, -0.4, 0.0]])
        offsets = offsets_from_block(raw, 0.05)
        assert np.all(np.linalg.norm(offsets, axis=1) < 0.05)
        np.testing.assert_allclose(offsets[1], 0.05 * raw[1] / np.sqrt(1.25))


class TestReprojectionLossGradient:
    """Gradient of the full markerless loss on a small problem."""

    def _problem(self, seed=7):
        rng = np.random.default_rng(seed)
        rig = default_rig(RigSpec(n_cameras=3))
        spec = MLPSpec.for_model(MODEL, hidden=(4,), fourier_pairs=1)
        phi = init_mlp_params(spec, rng, output_gain=1.0)
        theta = mlp_eval(spec, phi, np.linspace(0.0, 1.0, 4))
        positions = marker_positions(MODEL, ScaleParams.uniform(MODEL), MarkerOffsets.zeros(MODEL), theta)
        uv = np.zeros((4, 3, len(MODEL.markers), 2))
        for c, camera in enumerate(rig.cameras):
            u, v, _ = project_points(camera, positions)
            uv[:, c, :, 0], uv[:, c, :, 1] = u, v
        uv += rng.uniform(-20.0, 20.0, uv.shape)
        confidence = rng.uniform(0.5, 1.0, uv.shape[:3])
        confidence[1, 0, 2] = 0.1
        trial = TrialObservations("t1", "p1", Arm.AFFECTED, 60.0, rig.ids, uv, confidence)
        config = FitConfig(loss=LossConfig(huber_delta_px=10.0, smoothness_weight=0.1, offset_weight=1.0))
        at = ParamVector.from_blocks({
            "log_scale": rng.normal(0.0, 0.05, len(MODEL.segments)),
            "offset_raw": rng.normal(0.0, 0.2, (len(MODEL.markers), 3)),
            "phi": phi,
        })

        def loss(blocks):
            scale = scale_from_block(MODEL, blocks["log_scale"])
            offsets = offsets_from_block(blocks["offset_raw"], config.loss.offset_radius_m)
            return reprojection_loss(MODEL, rig, scale, offsets, {"t1": blocks["phi"]}, [trial], config, spec)

        return loss, at

    @pytest.mark.parametrize("seed", range(20))
    def test_matches_finite_differences(self, seed):
        loss, at = self._problem(seed)
        _, grad = value_and_gradient(loss, at)
        numeric = finite_difference_gradient(loss, at)
        np.testing.assert_allclose(grad, numeric, rtol=1e-5, atol=1e-6 * np.abs(numeric).max())

    def test_untraced_value_matches_traced(self):
        loss, at = self._problem()
        value, _ = value_and_gradient(loss, at)
        assert value == pytest.approx(float(ad.value_of(loss(at.view(at.values)))), rel=1e-12)


class TestParamVector:
    """Named blocks over one flat vector."""

    def test_blocks_keep_order_and_shape(self):
        params = ParamVector.from_blocks({"a": np.arange(6.0).reshape(2, 3), "b": np.array([7.0])})
        assert list(params.names()) == ["a", "b"]
        assert params.size == 7
        np.testing.assert_array_equal(params.block("a"), [[0, 1, 2], [3, 4, 5]])
        assert params.slice_of("b") == slice(6, 7)

    def test_replace_block_returns_new_vector(self):
        params = ParamVector.from_blocks({"a": np.zeros(2), "b": np.zeros(3)})
        updated = params.replace_block("b", np.ones(3))
        np.testing.assert_array_equal(updated.values, [0, 0, 1, 1, 1])
        np.testing.assert_array_equal(params.values, np.zeros(5))

    def test_unknown_block(self):
        with pytest.raises(ContractViolationError, match="unknown parameter block"):
            ParamVector.from_blocks({"a": np.zeros(2)}).block("z")

    def test_non_finite_values_rejected(self):
        with pytest.raises(ContractViolationError, match="non-finite"):
            ParamVector.from_blocks({"a": np.array([1.0, np.nan])})

    def test_with_values_checks_shape(self):
        with pytest.raises(ContractViolationError):
            ParamVector.from_blocks({"a": np.zeros(2)}).with_values(np.zeros(3))


class TestAdam:
    """Bias-corrected Adam and the cosine schedule."""

    def test_first_step_moves_by_lr_against_gradient_sign(self):
        params = ParamVector.from_blocks({"x": np.array([1.0, -2.0])})
        state = AdamState.zeros(2, lr=0.01)
        updated, state = adam_step(state, params, np.array([3.0, -0.5]))
        np.testing.assert_allclose(updated.values, [0.99, -1.99], atol=1e-8)
        assert state.step == 1

    def test_minimizes_a_quadratic(self):
        target = np.array([0.5, -1.5, 2.0])
        params = ParamVector.from_blocks({"x": np.zeros(3)})
        state = AdamState.zeros(3, lr=0.05)
        loss = lambda blocks: ad.tsum((blocks["x"] - target) ** 2)
        for step in range(2000):
            _, grad = value_and_gradient(loss, params)
            params, state = adam_step(state.with_lr(cosine_lr(0.05, 1e-5, step, 2000)), params, grad)
        np.testing.assert_allclose(params.values, target, atol=1e-3)

    def test_shape_mismatch(self):
        params = ParamVector.from_blocks({"x": np.zeros(3)})
        with pytest.raises(ContractViolationError):
            adam_step(AdamState.zeros(2), params, np.zeros(3))

    def test_cosine_schedule(self):
        assert cosine_lr(1e-3, 1e-5, 0, 100) == pytest.approx(1e-3)
        assert cosine_lr(1e-3, 1e-5, 100, 100) == pytest.approx(1e-5)
        assert cosine_lr(1e-3, 1e-5, 50, 100) == pytest.approx((1e-3 + 1e-5) / 2)
        assert cosine_lr(1e-3, 1e-5, 250, 100) == pytest.approx(1e-5)
        assert cosine_lr(1e-3, 1e-5, 5, 0) == 1e-3


class TestTrajectoryNetwork:
    """Time-to-angles network with limit squashing."""

    def test_param_count_matches_initialization(self):
        spec = MLPSpec.for_model(MODEL, hidden=(16, 16), fourier_pairs=3)
        assert spec.feature_dim == 7
        assert init_mlp_params(spec, np.random.default_rng(0)).size == spec.param_count

    def test_time_encoding(self):
        features = encode_time(np.array([0.0, 0.5]), 2)
        assert features.shape == (2, 5)
        np.testing.assert_allclose(features[1], [0.5, 1.0, 0.0, 0.0, -1.0], atol=1e-12)

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 2 ** 32 - 1), st.floats(0.1, 5.0))
    def test_outputs_respect_limits(self, seed, gain):
        spec = MLPSpec.for_model(MODEL, hidden=(8,), fourier_pairs=2)
        phi = init_mlp_params(spec, np.random.default_rng(seed), output_gain=gain)
        theta = mlp_eval(spec, phi, np.linspace(0.0, 1.0, 11))
        lower, upper = MODEL.limits()
        assert theta.shape == (11, MODEL.dof_count)
        assert np.all(theta >= lower) and np.all(theta <= upper)

    def test_scalar_time_gives_one_pose(self):
        spec = MLPSpec.for_model(MODEL, hidden=(8,), fourier_pairs=2)
        phi = init_mlp_params(spec, np.random.default_rng(0))
        pose = mlp_eval(spec, phi, 0.5)
        np.testing.assert_allclose(pose, mlp_eval(spec, phi, np.array([0.5]))[0])

    def test_times_outside_unit_interval_are_clamped(self):
        spec = MLPSpec.for_model(MODEL, hidden=(8,), fourier_pairs=2)
        phi = init_mlp_params(spec, np.random.default_rng(0))
        np.testing.assert_allclose(mlp_eval(spec, phi, 1.5), mlp_eval(spec, phi, 1.0))

    def test_unsquash_inverts_squash(self):
        spec = MLPSpec.for_model(MODEL, hidden=(8,))
        lower, upper = MODEL.limits()
        theta = lower + (upper - lower) * np.linspace(0.1, 0.9, MODEL.dof_count)
        np.testing.assert_allclose(squash(spec, unsquash(spec, theta)), theta, atol=1e-12)

    def test_output_dimension_must_match_model(self):
        spec = MLPSpec((8,), (0.0, 0.0), (1.0, 1.0))
        with pytest.raises(ContractViolationError, match="DOF count"):
            spec.check_model(MODEL)

    def test_invalid_specs(self):
        with pytest.raises(ContractViolationError):
            MLPSpec((0,), (0.0,), (1.0,))
        with pytest.raises(ContractViolationError):
            MLPSpec((8,), (1.0,), (0.0,))
        with pytest.raises(ContractViolationError):
            MLPSpec((8,), (0.0,), (1.0,), activation="relu")

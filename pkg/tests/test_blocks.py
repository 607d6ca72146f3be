import numpy as np
import pytest

from xsepconv.blocks import (
    Activation,
    BatchNormParams,
    BlockSpec,
    BlockState,
    BlockVariant,
    LayerState,
    bn_forward,
    block_backward,
    block_forward,
    block_forward_with_cache,
    default_batchnorm,
    effective_geometry,
    effective_kernel,
    identity_batchnorm,
    init_block,
    layer_plans,
    receptive_field,
    set_block_mode,
    with_identity_batchnorm,
)
from xsepconv.conv import DepthwiseWeights, dw_forward, separable_outer
from xsepconv.padding import PadDirection
from xsepconv.tensor import Tensor4, crop, max_abs_diff

RB = PadDirection.RIGHT_BOTTOM


def linear_spec(variant, k=3, c=2, stride=(1, 1)):
    direction = None if variant is BlockVariant.XSEP_NO_2X2 else RB
    if variant is BlockVariant.VANILLA_DW:
        direction = None
    return BlockSpec(variant, k=k, c=c, stride=stride, activation=Activation.IDENTITY, pad_direction=direction)


def linear_state(spec, seed=0):
    return with_identity_batchnorm(init_block(spec, seed))


class TestSpecValidation:
    def test_downsample_requires_stride_two(self):
        with pytest.raises(ValueError, match="stride"):
            BlockSpec(BlockVariant.XSEP_DOWNSAMPLE, k=7, c=4, stride=(1, 1), pad_direction=RB)

    def test_serial_variants_require_stride_one(self):
        with pytest.raises(ValueError, match="stride"):
            BlockSpec(BlockVariant.XSEP, k=5, c=4, stride=(2, 2), pad_direction=RB)

    def test_even_k_rejected(self):
        with pytest.raises(ValueError, match="odd"):
            BlockSpec(BlockVariant.XSEP, k=4, c=4, pad_direction=RB)

    def test_2x2_variants_need_direction(self):
        with pytest.raises(ValueError, match="pad_direction"):
            BlockSpec(BlockVariant.XSEP, k=5, c=4)

    def test_downsample_recommendation_flag(self):
        small = BlockSpec(BlockVariant.XSEP_DOWNSAMPLE, k=5, c=4, stride=(2, 2), pad_direction=RB)
        big = BlockSpec(BlockVariant.XSEP_DOWNSAMPLE, k=7, c=4, stride=(2, 2), pad_direction=RB)
        assert not small.downsample_recommended
        assert big.downsample_recommended


class TestLayerInventory:
    @pytest.mark.parametrize(
        "variant,expected",
        [
            (BlockVariant.VANILLA_DW, [(5, 5)]),
            (BlockVariant.XSEP, [(2, 2), (1, 5), (5, 1)]),
            (BlockVariant.XSEP_NO_2X2, [(1, 5), (5, 1)]),
            (BlockVariant.XSEP_BEHIND, [(1, 5), (5, 1), (2, 2)]),
            (BlockVariant.XSEP_PARALLEL, [(2, 2), (1, 5), (5, 1)]),
        ],
    )
    def test_kernel_shapes(self, variant, expected):
        plans = layer_plans(linear_spec(variant, k=5, c=4))
        assert [(p.kh, p.kw) for p in plans] == expected

    def test_downsample_strides(self):
        spec = linear_spec(BlockVariant.XSEP_DOWNSAMPLE, k=7, c=2, stride=(2, 2))
        plans = layer_plans(spec)
        assert [(p.kh, p.kw, p.stride) for p in plans] == [
            (2, 2, (1, 1)),
            (1, 7, (1, 2)),
            (7, 1, (2, 1)),
        ]


class TestInit:
    def test_deterministic(self):
        spec = linear_spec(BlockVariant.XSEP, k=5, c=8)
        a, b = init_block(spec, 123), init_block(spec, 123)
        for la, lb in zip(a.layers, b.layers):
            assert np.array_equal(la.weights.values, lb.weights.values)

    def test_different_seeds_differ(self):
        spec = linear_spec(BlockVariant.XSEP, k=5, c=8)
        a, b = init_block(spec, 1), init_block(spec, 2)
        assert not np.array_equal(a.layers[0].weights.values, b.layers[0].weights.values)

    def test_xsep_param_count(self):
        spec = linear_spec(BlockVariant.XSEP, k=5, c=8)
        state = init_block(spec, 0)
        assert [tuple(l.weights.values.shape[:2]) for l in state.layers] == [(2, 2), (1, 5), (5, 1)]
        assert state.conv_param_count == 4 * 8 + 5 * 8 + 5 * 8  # 112

    def test_vanilla_param_count(self):
        spec = linear_spec(BlockVariant.VANILLA_DW, k=5, c=8)
        assert init_block(spec, 0).conv_param_count == 25 * 8  # 200

    def test_bound_respects_fan_in(self):
        spec = linear_spec(BlockVariant.XSEP, k=5, c=64)
        state = init_block(spec, 0)
        for layer in state.layers:
            bound = np.sqrt(6.0 / (layer.weights.kh * layer.weights.kw))
            assert np.abs(layer.weights.values).max() <= bound


class TestForward:
    def test_input_validation(self):
        spec = linear_spec(BlockVariant.XSEP, k=5, c=2)
        state = linear_state(spec)
        with pytest.raises(ValueError, match="channel mismatch"):
            block_forward(state, spec, Tensor4(np.zeros((1, 3, 8, 8))))
        with pytest.raises(ValueError, match="too small"):
            block_forward(state, spec, Tensor4(np.zeros((1, 2, 5, 5))))

    def test_forward_is_pure(self):
        spec = linear_spec(BlockVariant.XSEP, k=3, c=2)
        state = linear_state(spec)
        x = Tensor4(np.random.default_rng(0).standard_normal((1, 2, 6, 6)))
        before = x.array.copy()
        block_forward(state, spec, x)
        assert np.array_equal(x.array, before)

    def test_downsample_halves_dims(self):
        spec = linear_spec(BlockVariant.XSEP_DOWNSAMPLE, k=7, c=3, stride=(2, 2))
        state = linear_state(spec)
        x = Tensor4(np.random.default_rng(1).standard_normal((1, 3, 32, 32)))
        assert block_forward(state, spec, x).dims == (1, 3, 16, 16)

    @pytest.mark.parametrize("h,w", [(9, 13), (12, 9), (11, 11)])
    def test_downsample_ceil_on_odd_dims(self, h, w):
        spec = linear_spec(BlockVariant.XSEP_DOWNSAMPLE, k=7, c=1, stride=(2, 2))
        state = linear_state(spec)
        x = Tensor4(np.random.default_rng(2).standard_normal((1, 1, h, w)))
        assert block_forward(state, spec, x).dims == (1, 1, -(-h // 2), -(-w // 2))

    def test_parallel_is_sum_of_branches(self):
        spec = linear_spec(BlockVariant.XSEP_PARALLEL, k=3, c=2)
        state = linear_state(spec)
        x = Tensor4(np.random.default_rng(3).standard_normal((1, 2, 7, 7)))
        merged = block_forward(state, spec, x)
        plans = layer_plans(spec)
        branch_a = dw_forward(x, state.layers[0].weights, plans[0].geom)
        branch_b = dw_forward(
            dw_forward(x, state.layers[1].weights, plans[1].geom),
            state.layers[2].weights,
            plans[2].geom,
        )
        assert max_abs_diff(merged, Tensor4(branch_a.array + branch_b.array)) < 1e-14

    def test_rank_one_no2x2_matches_vanilla(self):
        k, c = 5, 2
        rng = np.random.default_rng(6)
        row = DepthwiseWeights(rng.standard_normal((1, k, c)))
        col = DepthwiseWeights(rng.standard_normal((k, 1, c)))
        spec_sep = linear_spec(BlockVariant.XSEP_NO_2X2, k=k, c=c)
        state_sep = BlockState(
            (
                LayerState(row, identity_batchnorm(c)),
                LayerState(col, identity_batchnorm(c)),
            )
        )
        spec_full = linear_spec(BlockVariant.VANILLA_DW, k=k, c=c)
        state_full = BlockState((LayerState(separable_outer(col, row), identity_batchnorm(c)),))
        x = Tensor4(rng.standard_normal((1, c, 11, 12)))
        assert max_abs_diff(
            block_forward(state_sep, spec_sep, x), block_forward(state_full, spec_full, x)
        ) < 1e-10


class TestEffectiveKernel:
    def test_delta_2x2_reduces_to_outer(self):
        k, c = 3, 1
        delta = np.zeros((2, 2, c))
        delta[0, 0, 0] = 1.0
        rng = np.random.default_rng(8)
        row = DepthwiseWeights(rng.standard_normal((1, k, c)))
        col = DepthwiseWeights(rng.standard_normal((k, 1, c)))
        spec = linear_spec(BlockVariant.XSEP, k=k, c=c)
        state = BlockState(
            (
                LayerState(DepthwiseWeights(delta), identity_batchnorm(c)),
                LayerState(row, identity_batchnorm(c)),
                LayerState(col, identity_batchnorm(c)),
            )
        )
        eff = effective_kernel(state, spec)
        assert eff.values.shape == (k + 1, k + 1, c)
        outer = separable_outer(col, row).values
        assert np.array_equal(eff.values[:k, :k], outer)
        assert np.all(eff.values[k, :, :] == 0.0) and np.all(eff.values[:, k, :] == 0.0)

    def test_all_ones_composition(self):
        c = 1
        spec = linear_spec(BlockVariant.XSEP, k=3, c=c)
        state = BlockState(
            tuple(
                LayerState(DepthwiseWeights(np.ones(shape + (c,))), identity_batchnorm(c))
                for shape in [(2, 2), (1, 3), (3, 1)]
            )
        )
        eff = effective_kernel(state, spec)
        counts = np.array([1.0, 2.0, 2.0, 1.0])
        assert np.array_equal(eff.values[:, :, 0], np.outer(counts, counts))

    def test_behind_matches_ahead(self):
        k, c = 5, 3
        rng = np.random.default_rng(9)
        two = DepthwiseWeights(rng.standard_normal((2, 2, c)))
        row = DepthwiseWeights(rng.standard_normal((1, k, c)))
        col = DepthwiseWeights(rng.standard_normal((k, 1, c)))
        ahead = BlockState(
            tuple(LayerState(w, identity_batchnorm(c)) for w in (two, row, col))
        )
        behind = BlockState(
            tuple(LayerState(w, identity_batchnorm(c)) for w in (row, col, two))
        )
        e1 = effective_kernel(ahead, linear_spec(BlockVariant.XSEP, k=k, c=c))
        e2 = effective_kernel(behind, linear_spec(BlockVariant.XSEP_BEHIND, k=k, c=c))
        assert np.abs(e1.values - e2.values).max() < 1e-12

    def test_rejects_nonlinear_configuration(self):
        spec = BlockSpec(BlockVariant.XSEP, k=3, c=2, activation=Activation.RELU, pad_direction=RB)
        state = linear_state(linear_spec(BlockVariant.XSEP, k=3, c=2))
        with pytest.raises(ValueError, match="identity activation"):
            effective_kernel(state, spec)
        spec_id = linear_spec(BlockVariant.XSEP, k=3, c=2)
        with pytest.raises(ValueError, match="identity batch norm"):
            effective_kernel(init_block(spec_id, 0), spec_id)  # train-mode default norms

    def test_rejects_parallel_and_downsample(self):
        spec = linear_spec(BlockVariant.XSEP_PARALLEL, k=3, c=2)
        with pytest.raises(ValueError, match="no effective kernel"):
            effective_kernel(linear_state(spec), spec)

    def test_interior_equivalence(self):
        spec = linear_spec(BlockVariant.XSEP, k=5, c=2)
        state = linear_state(spec, seed=4)
        x = Tensor4(np.random.default_rng(10).standard_normal((1, 2, 13, 14)))
        y_block = block_forward(state, spec, x)
        geom = effective_geometry(spec)
        y_eff = dw_forward(x, effective_kernel(state, spec), geom)
        assert max_abs_diff(crop(y_block, geom.pad), crop(y_eff, geom.pad)) < 1e-10


class TestReceptiveField:
    @pytest.mark.parametrize(
        "variant,k,expected",
        [
            (BlockVariant.XSEP, 5, (6, 6)),
            (BlockVariant.XSEP_BEHIND, 5, (6, 6)),
            (BlockVariant.VANILLA_DW, 5, (5, 5)),
            (BlockVariant.XSEP_NO_2X2, 5, (5, 5)),
            (BlockVariant.XSEP_PARALLEL, 5, (5, 5)),
            (BlockVariant.XSEP_DOWNSAMPLE, 7, (8, 8)),
        ],
    )
    def test_sizes(self, variant, k, expected):
        stride = (2, 2) if variant is BlockVariant.XSEP_DOWNSAMPLE else (1, 1)
        assert receptive_field(linear_spec(variant, k=k, c=1, stride=stride)) == expected

    @pytest.mark.parametrize("variant", [BlockVariant.XSEP, BlockVariant.VANILLA_DW,
                                         BlockVariant.XSEP_NO_2X2, BlockVariant.XSEP_PARALLEL])
    @pytest.mark.parametrize("k", [3, 5])
    def test_support_certificate(self, variant, k):
        # strictly positive weights so no support tap cancels to zero
        spec = linear_spec(variant, k=k, c=1)
        rng = np.random.default_rng(17)
        layers = tuple(
            LayerState(
                DepthwiseWeights(rng.uniform(0.2, 1.0, size=l.weights.values.shape)),
                identity_batchnorm(1),
            )
            for l in init_block(spec, 0).layers
        )
        state = BlockState(layers)
        side = 4 * k
        x = Tensor4(rng.standard_normal((1, 1, side, side)))
        base = block_forward(state, spec, x)
        bumped = x.array.copy()
        bumped[0, 0, side // 2, side // 2] += 1.0
        diff = np.abs(block_forward(state, spec, Tensor4(bumped)).array - base.array)[0, 0]
        ys, xs = np.nonzero(diff > 1e-12)
        rh, rw = receptive_field(spec)
        assert ys.max() - ys.min() + 1 == rh
        assert xs.max() - xs.min() + 1 == rw


class TestBatchNorm:
    def test_train_normalizes_batch(self):
        rng = np.random.default_rng(20)
        x = rng.normal(3.0, 2.5, size=(16, 4, 6, 6))
        p = default_batchnorm(4)
        y, _, _ = bn_forward(p, x)
        assert np.abs(y.mean(axis=(0, 2, 3))).max() < 1e-6
        assert np.abs(y.var(axis=(0, 2, 3)) - 1.0).max() < 1e-4  # eps shrinks var slightly

    def test_running_stats_update(self):
        rng = np.random.default_rng(21)
        x = rng.normal(2.0, 1.5, size=(8, 2, 5, 5))
        p = default_batchnorm(2)
        _, _, p2 = bn_forward(p, x)
        batch_mean = x.mean(axis=(0, 2, 3))
        assert np.allclose(p2.running_mean, 0.1 * batch_mean)
        assert np.array_equal(p.running_mean, np.zeros(2))  # input untouched

    def test_inference_uses_running_stats(self):
        p = BatchNormParams(
            gamma=np.array([2.0]), beta=np.array([1.0]),
            running_mean=np.array([3.0]), running_var=np.array([4.0]),
            eps=0.0, mode="inference",
        )
        x = np.full((1, 1, 2, 2), 5.0)
        y, _, _ = bn_forward(p, x)
        assert np.allclose(y, 2.0 * (5.0 - 3.0) / 2.0 + 1.0)

    def test_identity_batchnorm_is_exact(self):
        rng = np.random.default_rng(22)
        x = rng.standard_normal((2, 3, 4, 4))
        y, _, _ = bn_forward(identity_batchnorm(3), x)
        assert np.array_equal(y, x)

    def test_validation(self):
        with pytest.raises(ValueError, match="mode"):
            default_batchnorm(2, mode="test")
        with pytest.raises(ValueError, match="non-negative"):
            BatchNormParams(np.ones(1), np.zeros(1), np.zeros(1), np.array([-1.0]))


class TestBackward:
    def test_zero_grad_out_gives_zero_grads(self):
        spec = linear_spec(BlockVariant.XSEP, k=3, c=2)
        state = init_block(spec, 0)
        x = Tensor4(np.random.default_rng(30).standard_normal((2, 2, 6, 6)))
        y = block_forward(state, spec, x)
        gx, grads = block_backward(state, spec, x, Tensor4(np.zeros(y.dims)))
        assert np.all(gx.array == 0.0)
        assert all(np.all(g == 0.0) for g in grads.conv)
        assert all(np.all(g == 0.0) for g in grads.gamma)

    def test_grad_out_dim_mismatch(self):
        spec = linear_spec(BlockVariant.XSEP, k=3, c=2)
        state = init_block(spec, 0)
        x = Tensor4(np.random.default_rng(31).standard_normal((1, 2, 6, 6)))
        with pytest.raises(ValueError, match="dim mismatch"):
            block_backward(state, spec, x, Tensor4(np.zeros((1, 2, 3, 3))))

    @pytest.mark.parametrize("variant", [BlockVariant.XSEP_PARALLEL, BlockVariant.XSEP_DOWNSAMPLE])
    def test_finite_difference_other_variants(self, variant):
        from xsepconv.verify import block_grad_check, randomize_batchnorm

        stride = (2, 2) if variant is BlockVariant.XSEP_DOWNSAMPLE else (1, 1)
        spec = BlockSpec(variant, k=3, c=2, stride=stride,
                         activation=Activation.IDENTITY, pad_direction=RB)
        rng = np.random.default_rng(32)
        # off-identity norms: at beta=0 a downstream per-channel norm makes the
        # function invariant to upstream gammas, so those gradients vanish
        state = randomize_batchnorm(init_block(spec, 3), rng)
        x = Tensor4(rng.standard_normal((2, 2, 6, 6)))
        report = block_grad_check(spec, state, x, tol=1e-5, seed=0)
        assert report.passed, {k: v.max_rel_error for k, v in report.groups.items()}

    def test_mode_switch_helper(self):
        spec = linear_spec(BlockVariant.XSEP, k=3, c=2)
        state = init_block(spec, 0)
        inf = set_block_mode(state, "inference")
        assert all(l.bn.mode == "inference" for l in inf.layers)
        assert all(l.bn.mode == "train" for l in state.layers)

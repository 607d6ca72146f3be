import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from xsepconv.tensor import (
    PadSpec,
    Tensor4,
    centroid,
    crop,
    from_flat,
    from_json,
    impulse,
    max_abs_diff,
    pad,
    to_json,
    zeros,
)

small_dims = st.tuples(
    st.integers(1, 3), st.integers(1, 3), st.integers(1, 5), st.integers(1, 5)
)


def rand(dims, seed=0):
    return Tensor4(np.random.default_rng(seed).standard_normal(dims))


class TestZeros:
    def test_small(self):
        t = zeros((1, 1, 2, 2))
        assert t.array.size == 4
        assert np.all(t.array == 0.0)

    def test_data_length_is_product(self):
        assert zeros((2, 3, 4, 5)).array.size == 120

    def test_rejects_zero_dimension(self):
        with pytest.raises(ValueError, match="zero dimension"):
            zeros((1, 0, 2, 2))


class TestImpulse:
    def test_center(self):
        t = impulse((1, 1, 5, 5), 0, 2, 2)
        assert t.get(0, 0, 2, 2) == 1.0
        assert t.sum() == 1.0

    def test_channel_selection(self):
        t = impulse((1, 2, 3, 3), 1, 0, 0)
        assert t.get(0, 1, 0, 0) == 1.0
        assert t.get(0, 0, 0, 0) == 0.0

    def test_out_of_range(self):
        with pytest.raises(ValueError, match="coordinate out of range"):
            impulse((1, 1, 3, 3), 0, 3, 3)


class TestPadCrop:
    def test_pad_bottom_right(self):
        x = Tensor4(np.ones((1, 1, 2, 2)))
        y = pad(x, PadSpec(0, 1, 0, 1))
        assert y.dims == (1, 1, 3, 3)
        assert np.all(y.array[0, 0, :2, :2] == 1.0)
        assert np.all(y.array[0, 0, 2, :] == 0.0)
        assert np.all(y.array[0, 0, :, 2] == 0.0)

    def test_pad_nothing_is_identity(self):
        x = rand((1, 2, 3, 4))
        assert max_abs_diff(pad(x, PadSpec()), x) == 0.0

    def test_pad_single_pixel(self):
        x = from_flat((1, 1, 1, 1), [7.0])
        y = pad(x, PadSpec(1, 1, 1, 1))
        assert y.dims == (1, 1, 3, 3)
        assert y.get(0, 0, 1, 1) == 7.0
        assert y.sum() == 7.0

    def test_crop_inverts_pad(self):
        x = rand((2, 2, 4, 5), seed=3)
        p = PadSpec(1, 2, 0, 1)
        assert np.array_equal(crop(pad(x, p), p).array, x.array)

    def test_crop_nothing_is_identity(self):
        x = rand((1, 1, 3, 3))
        assert max_abs_diff(crop(x, PadSpec()), x) == 0.0

    def test_crop_too_large(self):
        with pytest.raises(ValueError, match="empty result"):
            crop(rand((1, 1, 2, 2)), PadSpec(1, 1, 0, 0))

    def test_pad_rejects_negative(self):
        with pytest.raises(ValueError, match="non-negative"):
            PadSpec(-1, 0, 0, 0)


class TestMaxAbsDiff:
    def test_equal(self):
        x = rand((1, 1, 2, 2))
        assert max_abs_diff(x, x) == 0.0

    def test_constant_gap(self):
        a = Tensor4(np.full((1, 1, 3, 3), 1.0))
        b = Tensor4(np.full((1, 1, 3, 3), 1.5))
        assert max_abs_diff(a, b) == 0.5

    def test_dim_mismatch(self):
        with pytest.raises(ValueError, match="dim mismatch"):
            max_abs_diff(rand((1, 1, 2, 2)), rand((1, 1, 2, 3)))


class TestCentroid:
    def test_single_point(self):
        assert centroid(impulse((1, 1, 5, 5), 0, 2, 2), 0) == (2.0, 2.0)

    def test_two_equal_masses(self):
        x = zeros((1, 1, 5, 5))
        x.array[0, 0, 0, 0] = 1.0
        x.array[0, 0, 4, 4] = 1.0
        assert centroid(Tensor4(x.array), 0) == (2.0, 2.0)

    def test_zero_mass(self):
        with pytest.raises(ValueError, match="zero mass"):
            centroid(zeros((1, 1, 3, 3)), 0)

    @given(dy=st.integers(-2, 2), dx=st.integers(-2, 2))
    def test_translation_equivariance(self, dy, dx):
        base = centroid(impulse((1, 1, 7, 7), 0, 3, 3), 0)
        moved = centroid(impulse((1, 1, 7, 7), 0, 3 + dy, 3 + dx), 0)
        assert moved == (base[0] + dy, base[1] + dx)


class TestLayout:
    @given(dims=small_dims)
    @settings(max_examples=50)
    def test_flat_index_mapping(self, dims):
        n, c, h, w = dims
        data = np.arange(n * c * h * w, dtype=np.float64)
        t = from_flat(dims, data)
        rng = np.random.default_rng(1)
        for _ in range(10):
            i, j, y, x = (int(rng.integers(0, d)) for d in dims)
            assert t.get(i, j, y, x) == data[((i * c + j) * h + y) * w + x]

    @given(
        dims=small_dims,
        pads=st.tuples(st.integers(0, 3), st.integers(0, 3), st.integers(0, 3), st.integers(0, 3)),
    )
    @settings(max_examples=50)
    def test_pad_crop_roundtrip_bit_exact(self, dims, pads):
        x = rand(dims, seed=hash(dims) % 2**31)
        p = PadSpec(*pads)
        assert np.array_equal(crop(pad(x, p), p).array, x.array)

    @given(dims=small_dims)
    @settings(max_examples=30)
    def test_pad_preserves_integer_sum(self, dims):
        rng = np.random.default_rng(5)
        x = Tensor4(rng.integers(-9, 10, size=dims).astype(np.float64))
        assert pad(x, PadSpec(1, 2, 3, 0)).sum() == x.sum()

    def test_rejects_wrong_rank(self):
        with pytest.raises(ValueError, match="4 dimensions"):
            Tensor4(np.zeros((2, 2)))

    def test_from_flat_length_check(self):
        with pytest.raises(ValueError, match="does not match"):
            from_flat((1, 1, 2, 2), [1.0, 2.0])


class TestJson:
    def test_roundtrip(self):
        x = rand((2, 1, 3, 2), seed=9)
        y = from_json(to_json(x))
        assert y.dims == x.dims
        assert max_abs_diff(x, y) <= 1e-12 * float(np.abs(x.array).max())

    def test_format_is_flat(self):
        obj = json.loads(to_json(zeros((1, 1, 1, 2))))
        assert obj == {"dims": [1, 1, 1, 2], "data": [0.0, 0.0]}

import os
import subprocess
import sys

import numpy as np
import pytest

from twostream_reid import kernels
from twostream_reid.kernels import reference

native = pytest.importorskip("twostream_reid.kernels._native")

SHAPES = [(1, 1, 2, 2), (2, 3, 8, 8), (1, 4, 5, 7), (3, 2, 96, 48)]
DTYPES = [np.float32, np.float64]


def cases(rng):
    for shape in SHAPES:
        for dtype in DTYPES:
            yield rng.standard_normal(shape).astype(dtype)


class TestParity:
    def test_im2col3_matches_reference(self, rng):
        for x in cases(rng):
            got = native.im2col3(x)
            want = reference.im2col3(x)
            assert got.dtype == want.dtype
            np.testing.assert_array_equal(got, want)

    def test_col2im3_matches_reference(self, rng):
        for x in cases(rng):
            cols = reference.im2col3(x)
            _, c, h, w = x.shape
            got = native.col2im3(cols, c, h, w)
            want = reference.col2im3(cols, c, h, w)
            np.testing.assert_allclose(got, want, rtol=0, atol=0)

    def test_maxpool_forward_matches_reference(self, rng):
        for x in cases(rng):
            if x.shape[2] % 2 or x.shape[3] % 2:
                continue
            got_y, got_idx = native.maxpool2x2_forward(x)
            want_y, want_idx = reference.maxpool2x2_forward(x)
            np.testing.assert_array_equal(got_y, want_y)
            np.testing.assert_array_equal(got_idx, want_idx)

    def test_maxpool_backward_matches_reference(self, rng):
        for x in cases(rng):
            if x.shape[2] % 2 or x.shape[3] % 2:
                continue
            y, idx = reference.maxpool2x2_forward(x)
            g = rng.standard_normal(y.shape).astype(x.dtype)
            got = native.maxpool2x2_backward(g, idx, x.shape[2], x.shape[3])
            want = reference.maxpool2x2_backward(g, idx, x.shape[2], x.shape[3])
            np.testing.assert_array_equal(got, want)

    def test_maxpool_ties_pick_first_in_row_major_order(self):
        x = np.zeros((1, 1, 2, 2))
        for impl in (native, reference):
            _, idx = impl.maxpool2x2_forward(x)
            assert idx[0, 0, 0, 0] == 0


class TestBackendSelection:
    def test_native_selected_by_default(self):
        assert kernels.BACKEND == "native"

    def test_env_var_forces_pure_python(self):
        env = dict(os.environ, TWOSTREAM_REID_PURE_PYTHON="1")
        out = subprocess.run(
            [sys.executable, "-c",
             "from twostream_reid import kernels; print(kernels.BACKEND)"],
            env=env, capture_output=True, text=True, check=True,
        )
        assert out.stdout.strip() == "pure-python"

    def test_floor_division_on_odd_extent(self, rng):
        # 5x7 pools to 2x3: the trailing odd row/column is dropped
        x = rng.standard_normal((1, 1, 5, 7))
        for impl in (native, reference):
            y, idx = impl.maxpool2x2_forward(x)
            assert y.shape == (1, 1, 2, 3)
            g = np.ones_like(y)
            gx = impl.maxpool2x2_backward(g, idx, 5, 7)
            assert gx.shape == x.shape
            assert np.all(gx[:, :, 4, :] == 0) and np.all(gx[:, :, :, 6] == 0)

import numpy as np
import pytest

from twostream_reid import serialization as ser
from twostream_reid.errors import FormatError


def sample_params(rng):
    return {
        "conv0.w": rng.standard_normal((4, 3, 3, 3)),
        "conv0.b": np.zeros(4),
        "fc0.w": rng.standard_normal((2, 36)),
        "scalarish": rng.standard_normal(1),
    }


class TestRoundtrip:
    def test_values_and_header_preserved(self, tmp_path, rng):
        path = str(tmp_path / "p.ckpt")
        header = {"format_version": 1, "note": "hello", "dims": [3, 96, 48]}
        params = sample_params(rng)
        ser.save_params(path, header, params)
        got_header, got_params = ser.load_params(path)
        assert got_header == header
        assert set(got_params) == set(params)
        for key in params:
            np.testing.assert_array_equal(got_params[key], params[key])
            assert got_params[key].dtype == np.float64

    def test_float32_values_upcast_exactly(self, tmp_path, rng):
        # storage is always float64; float32 values embed exactly
        path = str(tmp_path / "p.ckpt")
        w32 = rng.standard_normal((3, 3)).astype(np.float32)
        ser.save_params(path, {}, {"w": w32})
        _, got = ser.load_params(path)
        np.testing.assert_array_equal(got["w"], w32.astype(np.float64))

    def test_save_is_byte_deterministic(self, tmp_path, rng):
        params = sample_params(rng)
        a, b = str(tmp_path / "a"), str(tmp_path / "b")
        ser.save_params(a, {"v": 1}, params)
        ser.save_params(b, {"v": 1}, dict(reversed(list(params.items()))))
        assert open(a, "rb").read() == open(b, "rb").read()


class TestRejectsBadFiles:
    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad"
        path.write_bytes(b"NOTTSRM\n")
        with pytest.raises(FormatError):
            ser.load_params(str(path))

    def test_unterminated_header(self, tmp_path):
        path = tmp_path / "bad"
        path.write_bytes(ser.MAGIC + b"key = 1\n")
        with pytest.raises(FormatError):
            ser.load_params(str(path))

    def test_malformed_header_line(self, tmp_path):
        path = tmp_path / "bad"
        path.write_bytes(ser.MAGIC + b"no-separator-here\n---\n")
        with pytest.raises(FormatError):
            ser.load_params(str(path))

    def test_truncated_payload(self, tmp_path, rng):
        path = str(tmp_path / "p.ckpt")
        ser.save_params(path, {}, sample_params(rng))
        blob = open(path, "rb").read()
        open(path, "wb").write(blob[:-9])
        with pytest.raises(FormatError):
            ser.load_params(path)

    def test_no_tmp_file_left_behind(self, tmp_path, rng):
        path = str(tmp_path / "p.ckpt")
        ser.save_params(path, {}, sample_params(rng))
        assert [p.name for p in tmp_path.iterdir()] == ["p.ckpt"]

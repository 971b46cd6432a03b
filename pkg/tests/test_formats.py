import struct

import numpy as np
import pytest

from vrd.exceptions import FormatError
from vrd.formats import read_pgm, read_vrdp, read_vrdt, write_pgm, write_vrdp, write_vrdt
from vrd.lattice import Field

from conftest import make_params


class TestVrdt:
    def test_layout(self, tmp_path):
        path = tmp_path / "f.vrdt"
        write_vrdt(path, Field(np.arange(6.0).reshape(2, 3)))
        raw = path.read_bytes()
        assert raw[:4] == b"VRDT"
        assert struct.unpack("<II", raw[4:12]) == (1, 3)
        assert struct.unpack("<QQQ", raw[12:36]) == (2, 3, 1)
        assert len(raw) == 36 + 6 * 8
        assert struct.unpack("<d", raw[36 + 8:36 + 16]) == (1.0,)

    def test_read_back(self, tmp_path, rng):
        f = Field.random(4, 3, 2, rng)
        write_vrdt(tmp_path / "f.vrdt", f)
        np.testing.assert_array_equal(read_vrdt(tmp_path / "f.vrdt").data, f.data)

    def test_truncated_names_offset(self, tmp_path, rng):
        path = tmp_path / "f.vrdt"
        write_vrdt(path, Field.random(2, 2, 1, rng))
        path.write_bytes(path.read_bytes()[:50])
        with pytest.raises(FormatError, match="byte offset 36"):
            read_vrdt(path)

    def test_truncated_header(self, tmp_path):
        path = tmp_path / "f.vrdt"
        path.write_bytes(b"VRDT" + struct.pack("<I", 1))
        with pytest.raises(FormatError, match="byte offset 8"):
            read_vrdt(path)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "f.vrdt"
        path.write_bytes(b"XXXX" + bytes(40))
        with pytest.raises(FormatError, match="bad magic"):
            read_vrdt(path)

    def test_trailing_bytes(self, tmp_path):
        path = tmp_path / "f.vrdt"
        write_vrdt(path, Field.zeros(1, 1))
        path.write_bytes(path.read_bytes() + b"\0")
        with pytest.raises(FormatError, match="trailing"):
            read_vrdt(path)

    def test_non_finite_data(self, tmp_path):
        path = tmp_path / "f.vrdt"
        header = b"VRDT" + struct.pack("<IIQQQ", 1, 3, 1, 1, 1)
        path.write_bytes(header + struct.pack("<d", float("nan")))
        with pytest.raises(FormatError):
            read_vrdt(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FormatError):
            read_vrdt(tmp_path / "absent.vrdt")


class TestVrdp:
    def test_read_back(self, tmp_path, rng):
        params = make_params(rng, 2, 3)
        write_vrdp(tmp_path / "p.vrdp", params)
        loaded = read_vrdp(tmp_path / "p.vrdp")
        for name in ("r_b", "r_q", "b_i", "q_i"):
            np.testing.assert_array_equal(getattr(loaded, name), getattr(params, name))

    def test_block_order(self, tmp_path, rng):
        params = make_params(rng, 1, 1)
        write_vrdp(tmp_path / "p.vrdp", params)
        raw = (tmp_path / "p.vrdp").read_bytes()
        assert raw[:4] == b"VRDP"
        assert struct.unpack("<III", raw[4:16]) == (1, 1, 1)
        assert struct.unpack("<4d", raw[16:48]) == (params.r_q[0, 0], params.r_b[0, 0],
                                                    params.q_i[0, 0], params.b_i[0, 0])

    def test_truncated(self, tmp_path, rng):
        path = tmp_path / "p.vrdp"
        write_vrdp(path, make_params(rng, 2, 2))
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(FormatError, match="truncated"):
            read_vrdp(path)


class TestPgm:
    def test_header_and_scaling(self, tmp_path):
        path = tmp_path / "g.pgm"
        write_pgm(path, np.array([[0.0, 0.5], [1.0, 2.0], [-1.0, 0.25]]), peak=1.0)
        raw = path.read_bytes()
        assert raw.startswith(b"P5\n2 3\n255\n")
        np.testing.assert_array_equal(read_pgm(path), [[0, 128], [255, 255], [0, 64]])

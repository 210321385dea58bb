import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from strb.storage import MAGIC, StorageError, read_arrays, write_arrays


@settings(max_examples=30, deadline=None)
@given(hnp.arrays(np.float64, hnp.array_shapes(min_dims=0, max_dims=3, min_side=0, max_side=4),
                  elements=st.floats(allow_nan=False)))
def test_round_trip_is_bit_exact(tmp_path_factory, arr):
    path = tmp_path_factory.mktemp("s") / "a.strb"
    write_arrays(path, {"k": [1, 2]}, {"x": arr, "ones": np.ones(3)})
    meta, arrays = read_arrays(path)
    assert meta == {"k": [1, 2]}
    assert arrays["x"].shape == arr.shape
    np.testing.assert_array_equal(arrays["x"], arr)


def test_layout_is_documented_header_then_data(tmp_path):
    path = tmp_path / "a.strb"
    write_arrays(path, {}, {"a": np.array([1.0, 2.0])})
    blob = path.read_bytes()
    assert blob.startswith(MAGIC)
    first = blob.index(b"\n", len(MAGIC))
    n = int(blob[len(MAGIC):first])
    header = json.loads(blob[first + 1: first + 1 + n])
    assert header["arrays"][0]["nbytes"] == 16
    assert blob[first + 1 + n:] == np.array([1.0, 2.0], dtype="<f8").tobytes()


def test_missing_file(tmp_path):
    with pytest.raises(StorageError, match="not found"):
        read_arrays(tmp_path / "nope.strb")


def test_bad_magic(tmp_path):
    path = tmp_path / "a.strb"
    path.write_bytes(b"hello")
    with pytest.raises(StorageError, match="magic"):
        read_arrays(path)


def test_truncation_detected(tmp_path):
    path = tmp_path / "a.strb"
    write_arrays(path, {}, {"a": np.arange(10.0)})
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(StorageError, match="truncated"):
        read_arrays(path)


def test_bit_flip_detected(tmp_path):
    path = tmp_path / "a.strb"
    write_arrays(path, {}, {"a": np.arange(10.0)})
    blob = bytearray(path.read_bytes())
    blob[-3] ^= 0x10
    path.write_bytes(bytes(blob))
    with pytest.raises(StorageError, match="checksum"):
        read_arrays(path)


def test_corrupted_header(tmp_path):
    path = tmp_path / "a.strb"
    write_arrays(path, {}, {"a": np.arange(3.0)})
    blob = path.read_bytes()
    path.write_bytes(blob[: len(MAGIC) + 3] + b"{" + blob[len(MAGIC) + 4:])
    with pytest.raises(StorageError):
        read_arrays(path)


def test_storage_error_is_an_oserror():
    assert issubclass(StorageError, OSError)

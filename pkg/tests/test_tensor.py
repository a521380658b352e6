import numpy as np
import pytest

from tdc import tensor
from tdc.tensor import TensorFormatError

from conftest import philox


def test_frobenius_zero():
    assert tensor.frobenius_norm(np.zeros((2, 2))) == 0.0


def test_frobenius_345():
    assert tensor.frobenius_norm(np.array([3.0, 4.0])) == 5.0


def test_frobenius_matches_elementwise_oracle(rng):
    t = rng.standard_normal((3, 4, 5))
    oracle = np.sqrt(sum(v * v for v in t.ravel()))
    assert tensor.frobenius_norm(t) == pytest.approx(oracle, rel=1e-12)


def test_frobenius_difference_symmetric(rng):
    a = rng.standard_normal((4, 5))
    b = rng.standard_normal((4, 5))
    assert tensor.frobenius_norm(a - b) == pytest.approx(tensor.frobenius_norm(b - a), rel=1e-15)


def test_unfold_matrix_mode0_is_identity(rng):
    m = rng.standard_normal((2, 2))
    assert np.array_equal(tensor.unfold(m, 0), m)


def test_unfold_shapes():
    t = np.zeros((2, 3, 4))
    assert tensor.unfold(t, 1).shape == (3, 8)
    assert tensor.unfold(t, 0).shape == (2, 12)
    assert tensor.unfold(t, 2).shape == (4, 6)


def test_unfold_mode_out_of_range():
    with pytest.raises(ValueError):
        tensor.unfold(np.zeros((2, 2)), 2)


@pytest.mark.parametrize("shape", [(2, 3, 4), (5,), (2, 2), (2, 3, 4, 5), (2, 1, 3, 1, 2)])
def test_fold_unfold_roundtrip_bit_exact(shape):
    g = philox(hash(shape) % (2**31))
    t = g.standard_normal(shape)
    for mode in range(len(shape)):
        back = tensor.fold(tensor.unfold(t, mode), mode, shape)
        assert np.array_equal(back, t)


def test_mode_n_product_identity(rng):
    t = rng.standard_normal((3, 4, 5))
    out = tensor.mode_n_product(t, np.eye(4), 1)
    assert np.array_equal(out, t)


def test_mode_n_product_hand_example():
    t = np.arange(1.0, 9.0).reshape(2, 2, 2)
    out = tensor.mode_n_product(t, np.array([[1.0, 1.0], [0.0, 1.0]]), 0)
    # row 0 of the matrix sums both mode-0 slices
    assert out[0, 0, 0] == 6.0
    assert out.shape == (2, 2, 2)


def test_mode_n_product_elementwise_oracle(rng):
    t = rng.standard_normal((3, 4, 2))
    m = rng.standard_normal((5, 4))
    out = tensor.mode_n_product(t, m, 1)
    for i in range(3):
        for y in range(5):
            for k in range(2):
                expected = sum(t[i, r, k] * m[y, r] for r in range(4))
                assert out[i, y, k] == pytest.approx(expected, rel=1e-12, abs=1e-12)


def test_mode_n_products_commute_across_modes(rng):
    t = rng.standard_normal((3, 4, 5))
    a = rng.standard_normal((2, 3))
    b = rng.standard_normal((6, 5))
    ab = tensor.mode_n_product(tensor.mode_n_product(t, a, 0), b, 2)
    ba = tensor.mode_n_product(tensor.mode_n_product(t, b, 2), a, 0)
    assert np.allclose(ab, ba, rtol=1e-12, atol=1e-12)


def test_mode_n_product_dimension_mismatch(rng):
    with pytest.raises(ValueError):
        tensor.mode_n_product(rng.standard_normal((3, 4)), rng.standard_normal((2, 5)), 1)


def test_degenerate_one_sized_modes(rng):
    t = rng.standard_normal((4, 1, 1, 6))
    assert tensor.unfold(t, 1).shape == (1, 24)
    out = tensor.mode_n_product(t, np.eye(1), 2)
    assert np.array_equal(out, t)


@pytest.mark.parametrize("dtype", ["f64", "f32"])
def test_tdt_roundtrip(tmp_path, rng, dtype):
    t = rng.standard_normal((3, 4, 5))
    path = tmp_path / "t.tdt"
    tensor.write_tensor(path, t, dtype=dtype)
    back = tensor.read_tensor(path)
    header = tensor.read_header(path)
    assert header == {"dtype": dtype, "shape": (3, 4, 5)}
    if dtype == "f64":
        assert np.array_equal(back, t)
    else:
        assert np.array_equal(back, t.astype(np.float32).astype(np.float64))


def test_tdt_rejects_bad_magic(tmp_path):
    p = tmp_path / "bad.tdt"
    p.write_bytes(b"NOPE" + b"\x00" * 20)
    with pytest.raises(TensorFormatError):
        tensor.read_tensor(p)


def test_tdt_rejects_truncated_payload(tmp_path, rng):
    p = tmp_path / "t.tdt"
    tensor.write_tensor(p, rng.standard_normal((3, 3)))
    raw = p.read_bytes()
    p.write_bytes(raw[:-8])
    with pytest.raises(TensorFormatError):
        tensor.read_tensor(p)


def test_tdt_rejects_trailing_bytes(tmp_path, rng):
    p = tmp_path / "t.tdt"
    tensor.write_tensor(p, rng.standard_normal((3, 3)))
    p.write_bytes(p.read_bytes() + b"\x00")
    with pytest.raises(TensorFormatError):
        tensor.read_tensor(p)


def test_tdt_rejects_nonzero_reserved(tmp_path, rng):
    p = tmp_path / "t.tdt"
    tensor.write_tensor(p, rng.standard_normal((2, 2)))
    raw = bytearray(p.read_bytes())
    raw[7] = 1
    p.write_bytes(bytes(raw))
    with pytest.raises(TensorFormatError):
        tensor.read_tensor(p)

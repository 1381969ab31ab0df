import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ssrkit.datamodel import (
    CubeFormatError,
    LabelField,
    SpectralCube,
    Srf,
    box_srf,
    load_cube,
    load_labels_csv,
    load_matrix_csv,
    load_matrix_cube,
    save_cube,
    save_labels_csv,
    save_matrix_csv,
    save_matrix_cube,
    sidecar_path,
    simulate_ms,
    split_overlap,
    write_pgm,
)


def random_cube(rng, bands, height, width):
    return SpectralCube(rng.random((bands, height, width)))


# --- SRF / simulation ---------------------------------------------------------


def test_box_srf_rows_normalized():
    srf = box_srf(220, 13)
    np.testing.assert_allclose(srf.matrix.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(srf.matrix.sum(axis=0) > 0)


def test_srf_validation():
    with pytest.raises(ValueError):
        Srf(np.array([[0.5, 0.6, 0.0]]))
    with pytest.raises(ValueError):
        Srf.normalized(np.eye(3))
    with pytest.raises(ValueError):
        Srf.normalized(np.array([[1.0, -1.0, 1.0]]))


def test_simulate_band_subset(rng):
    hs = random_cube(rng, 6, 3, 4)
    rows = [1, 4]
    srf = Srf(np.eye(6)[rows])
    np.testing.assert_array_equal(simulate_ms(hs, srf).data, hs.data[rows])


def test_simulate_constant_pair_average():
    hs = SpectralCube(np.full((3, 2, 2), 0.7))
    ms = simulate_ms(hs, Srf(np.array([[0.5, 0.5, 0.0]])))
    np.testing.assert_allclose(ms.data, 0.7)


def test_simulate_two_band_pixel():
    hs = SpectralCube(np.array([0.2, 0.6, 0.0]).reshape(3, 1, 1))
    ms = simulate_ms(hs, Srf(np.array([[0.5, 0.5, 0.0]])))
    assert ms.data[0, 0, 0] == pytest.approx(0.4, abs=1e-15)


def test_simulate_dimension_mismatch(rng):
    with pytest.raises(ValueError):
        simulate_ms(random_cube(rng, 5, 2, 2), box_srf(6, 2))


@given(st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 1000))
def test_simulate_is_linear(a, b, seed):
    rng = np.random.default_rng(seed)
    srf = box_srf(7, 3)
    h1, h2 = rng.random((7, 2, 3)), rng.random((7, 2, 3))
    lhs = simulate_ms(SpectralCube(a * h1 + b * h2), srf).data
    rhs = a * simulate_ms(SpectralCube(h1), srf).data + b * simulate_ms(SpectralCube(h2), srf).data
    np.testing.assert_allclose(lhs, rhs, atol=1e-10)


# --- overlap split ------------------------------------------------------------


def test_split_indian_pines_geometry():
    hs = SpectralCube(np.zeros((2, 145, 145), dtype=np.float32))
    split = split_overlap(hs, hs, (0, 45))
    assert (split.n, split.n1) == (6525, 14500)


def test_split_full_width(rng, caplog):
    hs = random_cube(rng, 3, 4, 5)
    split = split_overlap(hs, hs, (0, 5))
    assert split.n1 == 0 and split.m_out.shape == (3, 0)
    assert "full width" in caplog.text


def test_split_toy_enumeration():
    # 4 columns x 3 rows, pixel value encodes (row, col)
    height, width = 3, 4
    data = np.array([[[10 * r + c for c in range(width)] for r in range(height)]], dtype=float)
    hs = SpectralCube(np.concatenate([data, data + 100]))
    ms = SpectralCube(data)
    split = split_overlap(hs, ms, (2, 3))
    assert (split.n, split.n1) == (3, 9)
    expected_in = [10 * r + 2 for r in range(height)]
    expected_out = [10 * r + c for r in range(height) for c in range(width) if c != 2]
    np.testing.assert_array_equal(split.h_in[0], expected_in)
    np.testing.assert_array_equal(split.m_in[0], expected_in)
    np.testing.assert_array_equal(split.h_in[1], np.array(expected_in) + 100)
    np.testing.assert_array_equal(split.m_out[0], expected_out)
    np.testing.assert_array_equal(split.out_cube(split.h_out_ref).data[0], data[0][:, [0, 1, 3]])


@pytest.mark.parametrize("cols", [(2, 2), (-1, 2), (0, 9), (3, 1)])
def test_split_rejects_bad_range(rng, cols):
    hs = random_cube(rng, 2, 3, 5)
    with pytest.raises(ValueError):
        split_overlap(hs, hs, cols)


@given(st.integers(1, 6), st.integers(1, 7), st.data())
def test_split_partitions_and_reassembles(height, width, data):
    start = data.draw(st.integers(0, width - 1))
    stop = data.draw(st.integers(start + 1, width))
    rng = np.random.default_rng(height * 31 + width)
    hs = random_cube(rng, 3, height, width)
    split = split_overlap(hs, hs, (start, stop))
    assert split.n + split.n1 == height * width
    assert set(split.in_index).isdisjoint(split.out_index)
    np.testing.assert_array_equal(split.assemble(split.h_in, split.h_out_ref), hs.pixels())


# --- cube I/O -----------------------------------------------------------------


def test_cube_roundtrip_exact(tmp_path, rng):
    cube = SpectralCube(rng.random((5, 8, 8)).astype(np.float32).astype(np.float64))
    save_cube(cube, tmp_path / "c.bin")
    header = json.loads((tmp_path / "c.json").read_text())
    assert header == {"width": 8, "height": 8, "bands": 5, "data_max": 1.0}
    back = load_cube(tmp_path / "c.bin")
    assert np.array_equal(back.data, cube.data)


def test_cube_normalization(tmp_path):
    raw = SpectralCube(np.array([0.0, 5000.0, 10000.0]).reshape(3, 1, 1))
    save_cube(raw, tmp_path / "c.bin", data_max=10000.0)
    np.testing.assert_allclose(load_cube(tmp_path / "c.bin").data.ravel(), [0.0, 0.5, 1.0])


def test_cube_clip_warns(tmp_path, caplog):
    save_cube(SpectralCube(np.array([-0.1, 0.5, 1.2]).reshape(3, 1, 1)), tmp_path / "c.bin")
    cube = load_cube(tmp_path / "c.bin")
    assert cube.data.min() >= 0 and cube.data.max() <= 1
    assert "clipping" in caplog.text
    with pytest.raises(CubeFormatError):
        load_cube(tmp_path / "c.bin", clip=False)


def test_cube_short_payload(tmp_path, rng):
    save_cube(random_cube(rng, 2, 3, 3), tmp_path / "c.bin")
    data = (tmp_path / "c.bin").read_bytes()
    (tmp_path / "c.bin").write_bytes(data[:-4])
    with pytest.raises(CubeFormatError, match="header promises"):
        load_cube(tmp_path / "c.bin")


def test_cube_zero_bands(tmp_path):
    (tmp_path / "c.bin").write_bytes(b"")
    (tmp_path / "c.json").write_text(json.dumps({"width": 2, "height": 2, "bands": 0, "data_max": 1}))
    with pytest.raises(CubeFormatError):
        load_cube(tmp_path / "c.bin")


def test_cube_missing_header(tmp_path):
    (tmp_path / "c.bin").write_bytes(b"\0" * 16)
    with pytest.raises(CubeFormatError, match="missing header"):
        load_cube(tmp_path / "c.bin")


def test_cube_nonfinite_payload(tmp_path):
    (tmp_path / "c.bin").write_bytes(np.array([np.nan, 0.5], dtype="<f4").tobytes())
    (tmp_path / "c.json").write_text(json.dumps({"width": 2, "height": 1, "bands": 1, "data_max": 1}))
    with pytest.raises(CubeFormatError, match="non-finite"):
        load_cube(tmp_path / "c.bin")


def test_matrix_cube_keeps_sign(tmp_path):
    m = np.array([[-1.5, 2.0, 0.25]])
    save_matrix_cube(m, tmp_path / "m.bin")
    assert sidecar_path(tmp_path / "m.bin").exists()
    np.testing.assert_array_equal(load_matrix_cube(tmp_path / "m.bin"), m)


# --- CSV ------------------------------------------------------------------------


def test_csv_identity(tmp_path):
    (tmp_path / "m.csv").write_text("1,0\n0,1")
    np.testing.assert_array_equal(load_matrix_csv(tmp_path / "m.csv"), np.eye(2))


def test_csv_ragged(tmp_path):
    (tmp_path / "m.csv").write_text("1,0\n0,1,2\n")
    with pytest.raises(ValueError, match="ragged"):
        load_matrix_csv(tmp_path / "m.csv")


def test_csv_roundtrip(tmp_path, rng):
    m = rng.standard_normal((3, 4))
    save_matrix_csv(m, tmp_path / "m.csv")
    assert np.array_equal(load_matrix_csv(tmp_path / "m.csv"), m)


def test_labels_roundtrip(tmp_path):
    labels = np.array([[1, 0, 2], [2, 1, 0]])
    split = np.array([[1, 0, 2], [1, 2, 0]], dtype=np.int8)
    field = LabelField(labels, split)
    save_labels_csv(field, tmp_path / "l.csv")
    back = load_labels_csv(tmp_path / "l.csv", 2, 3)
    np.testing.assert_array_equal(back.labels, labels)
    np.testing.assert_array_equal(back.split, split)
    np.testing.assert_array_equal(back.indices(LabelField.TRAIN), [0, 3])
    np.testing.assert_array_equal(back.indices(LabelField.TEST), [2, 4])


def test_labels_validation(tmp_path):
    with pytest.raises(ValueError, match="contiguous"):
        LabelField(np.array([[1, 3]]), np.array([[1, 2]], dtype=np.int8))
    (tmp_path / "dup.csv").write_text("0,0,1,train\n0,0,1,test\n")
    with pytest.raises(ValueError, match="twice"):
        load_labels_csv(tmp_path / "dup.csv", 1, 1)
    (tmp_path / "tag.csv").write_text("0,0,1,val\n")
    with pytest.raises(ValueError, match="train or test"):
        load_labels_csv(tmp_path / "tag.csv", 1, 1)


def test_write_pgm(tmp_path):
    write_pgm(np.array([[0.0, 1.0], [0.5, 2.0]]), tmp_path / "b.pgm")
    assert (tmp_path / "b.pgm").read_text().split() == ["P2", "2", "2", "255", "0", "255", "128", "255"]

import cv2
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from cops.data import (DepthGrid, FormatError, IntensityImage, Scene, center_crop, crop_offsets,
                       depth_to_raw, load_depth_png16, load_intensity_png, load_scenes,
                       read_manifest, sample_sparse, save_depth_png16, save_intensity_png,
                       save_scene, write_manifest)
from cops.numerics import RngStream


def _scene(h=6, w=8, seed=0):
    rng = np.random.default_rng(seed)
    depth = rng.uniform(1, 30, (h, w))
    gt = DepthGrid.dense(depth)
    sparse = DepthGrid(depth, rng.uniform(size=(h, w)) < 0.3, "sparse-input")
    pseudo = DepthGrid.dense(depth * 1.1, "pseudo")
    return Scene(gt, sparse, pseudo, IntensityImage(rng.uniform(size=(h, w))), "day", "x")


def test_grid_rejects_nonpositive_valid_depth():
    with pytest.raises(ValueError):
        DepthGrid(np.array([[1.0, 0.0]]), np.array([[True, True]]))


def test_grid_zeroes_invalid_cells_and_is_readonly():
    g = DepthGrid(np.array([[1.0, np.nan]]), np.array([[True, False]]))
    assert g.depth.tolist() == [[1.0, 0.0]]
    with pytest.raises(ValueError):
        g.depth[0, 0] = 2.0


def test_intensity_range():
    with pytest.raises(ValueError):
        IntensityImage(np.array([[0.5, 1.5]]))


def test_scene_shape_mismatch():
    s = _scene()
    with pytest.raises(ValueError):
        Scene(s.gt, s.sparse, DepthGrid.dense(np.ones((2, 2)), "pseudo"), s.intensity)


def test_png_load_convention(tmp_path):
    raw = np.array([[256, 0], [512, 65535]], dtype=np.uint16)
    cv2.imwrite(str(tmp_path / "d.png"), raw)
    g = load_depth_png16(tmp_path / "d.png")
    assert g.depth[0, 0] == 1.0 and g.depth[1, 0] == 2.0
    assert g.valid.tolist() == [[True, False], [True, True]]


def test_png_save_convention():
    g = DepthGrid(np.array([[1.0, 5.0]]), np.array([[True, False]]))
    assert depth_to_raw(g).tolist() == [[256, 0]]


@settings(max_examples=25, deadline=None)
@given(arrays(np.uint16, (5, 7), elements=st.integers(0, 65535)))
def test_png_raw_roundtrip_bit_exact(tmp_path_factory, raw):
    path = tmp_path_factory.mktemp("png") / "r.png"
    cv2.imwrite(str(path), raw)
    g = load_depth_png16(path)
    save_depth_png16(g, path)
    assert np.array_equal(cv2.imread(str(path), cv2.IMREAD_UNCHANGED), raw)


def test_png_file_roundtrip_bytewise(tmp_path):
    raw = np.random.default_rng(1).integers(0, 65536, (9, 11)).astype(np.uint16)
    cv2.imwrite(str(tmp_path / "a.png"), raw)
    save_depth_png16(load_depth_png16(tmp_path / "a.png"), tmp_path / "b.png")
    assert (tmp_path / "a.png").read_bytes() == (tmp_path / "b.png").read_bytes()


def test_png_overflow():
    with pytest.raises(OverflowError):
        depth_to_raw(DepthGrid.dense(np.array([[300.0]])))


def test_png_wrong_format(tmp_path):
    cv2.imwrite(str(tmp_path / "c.png"), np.zeros((3, 3, 3), np.uint8))
    with pytest.raises(FormatError):
        load_depth_png16(tmp_path / "c.png")
    cv2.imwrite(str(tmp_path / "e.png"), np.zeros((3, 3), np.uint8))
    with pytest.raises(FormatError):
        load_depth_png16(tmp_path / "e.png")


def test_intensity_png(tmp_path):
    cv2.imwrite(str(tmp_path / "i8.png"), np.array([[0, 255]], np.uint8))
    assert load_intensity_png(tmp_path / "i8.png").values.tolist() == [[0.0, 1.0]]
    img = IntensityImage(np.array([[0.0, 0.25, 1.0]]))
    save_intensity_png(img, tmp_path / "i16.png")
    assert np.allclose(load_intensity_png(tmp_path / "i16.png").values, img.values, atol=1e-5)


def test_manifest_roundtrip(tmp_path):
    s = _scene()
    entry = save_scene(s, tmp_path, "a0", "test")
    write_manifest(tmp_path / "m.json", [entry])
    assert read_manifest(tmp_path / "m.json")["samples"][0]["id"] == "a0"
    (back,) = load_scenes(tmp_path / "m.json", "test")
    assert back.condition == "day" and back.name == "a0"
    assert np.array_equal(back.gt.valid, s.gt.valid)
    assert np.max(np.abs(back.gt.depth - s.gt.depth)) <= 0.5 / 256
    assert load_scenes(tmp_path / "m.json", "train") == []


def test_manifest_missing_key(tmp_path):
    (tmp_path / "m.json").write_text('{"version": 1, "samples": [{"id": "a"}]}')
    with pytest.raises(ValueError):
        read_manifest(tmp_path / "m.json")


def test_sample_sparse_500_points():
    gt = DepthGrid.dense(np.full((416, 512), 7.0))
    sp = sample_sparse(gt, 500, RngStream(0))
    assert sp.n_valid == 500 and sp.kind == "sparse-input"


def test_sample_sparse_full_and_deterministic():
    s = _scene()
    full = sample_sparse(s.gt, s.gt.n_valid, RngStream(1))
    assert np.array_equal(full.valid, s.gt.valid)
    a = sample_sparse(s.gt, 10, RngStream(4))
    b = sample_sparse(s.gt, 10, RngStream(4))
    assert np.array_equal(a.valid, b.valid)
    assert not (a.valid & ~s.gt.valid).any()
    assert np.array_equal(a.depth[a.valid], s.gt.depth[a.valid])


def test_sample_sparse_too_many():
    with pytest.raises(ValueError, match="48"):
        sample_sparse(_scene().gt, 49, RngStream(0))


def test_crop_offsets_training_resolution():
    assert crop_offsets(512, 1280, 256, 640) == (128, 320)


def test_crop_identity_and_errors():
    s = _scene()
    c = center_crop(s, 6, 8)
    assert np.array_equal(c.gt.depth, s.gt.depth)
    with pytest.raises(ValueError):
        center_crop(s, 7, 8)


def test_crop_never_invents_valid_cells():
    s = _scene(20, 24, seed=3)
    sp = sample_sparse(s.gt, 50, RngStream(2))
    cropped_sample = center_crop(Scene(s.gt, sp, s.pseudo, s.intensity), 10, 12).sparse
    cropped = center_crop(s, 10, 12)
    assert not (cropped_sample.valid & ~cropped.gt.valid).any()
    assert cropped_sample.n_valid <= sp.n_valid

import numpy as np
import pytest

from sipseg.errors import LabelValueError, MalformedImageError, NonGrayscaleError
from sipseg.imgcore import (
    SyntheticEyeSpec,
    quantize,
    read_gray,
    read_labels,
    render_synthetic_eye,
    write_gray,
    write_labels,
)


def _write_pgm(path, width, height, maxval, raster):
    with open(path, "wb") as fh:
        fh.write(f"P5\n{width} {height}\n{maxval}\n".encode())
        fh.write(raster)


class TestReadGray:
    def test_all_zero_bytes(self, tmp_path):
        p = tmp_path / "z.pgm"
        _write_pgm(p, 4, 3, 255, bytes(12))
        assert np.array_equal(read_gray(str(p)), np.zeros((3, 4)))

    def test_all_max_bytes(self, tmp_path):
        p = tmp_path / "m.pgm"
        _write_pgm(p, 4, 3, 255, bytes([255] * 12))
        assert np.array_equal(read_gray(str(p)), np.ones((3, 4)))

    def test_exact_rational_mapping(self, tmp_path):
        p = tmp_path / "h.pgm"
        _write_pgm(p, 1, 1, 255, bytes([128]))
        assert read_gray(str(p))[0, 0] == 128 / 255

    def test_header_comments_and_whitespace(self, tmp_path):
        p = tmp_path / "c.pgm"
        with open(p, "wb") as fh:
            fh.write(b"P5 # magic\n# a comment line\n  2\t2 # dims\n255\n")
            fh.write(bytes([0, 64, 128, 255]))
        img = read_gray(str(p))
        assert img.shape == (2, 2) and img[1, 1] == 1.0

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            read_gray(str(tmp_path / "nope.pgm"))

    def test_malformed_magic(self, tmp_path):
        p = tmp_path / "bad.pgm"
        p.write_bytes(b"P6\n2 2\n255\n" + bytes(12))
        with pytest.raises(MalformedImageError):
            read_gray(str(p))

    def test_truncated_raster(self, tmp_path):
        p = tmp_path / "short.pgm"
        _write_pgm(p, 4, 4, 255, bytes(7))
        with pytest.raises(MalformedImageError):
            read_gray(str(p))

    def test_wrong_maxval(self, tmp_path):
        p = tmp_path / "deep.pgm"
        _write_pgm(p, 2, 2, 65535, bytes(8))
        with pytest.raises(NonGrayscaleError):
            read_gray(str(p))

    def test_png_reads_and_rgb_rejected(self, tmp_path):
        from PIL import Image

        gray = tmp_path / "g.png"
        Image.fromarray(np.arange(16, dtype=np.uint8).reshape(4, 4), mode="L").save(gray)
        img = read_gray(str(gray))
        assert img.shape == (4, 4) and img[0, 1] == 1 / 255

        rgb = tmp_path / "c.png"
        Image.fromarray(np.zeros((4, 4, 3), dtype=np.uint8), mode="RGB").save(rgb)
        with pytest.raises(NonGrayscaleError):
            read_gray(str(rgb))


class TestWriteGray:
    def test_half_rounds_up(self, tmp_path):
        p = tmp_path / "h.pgm"
        write_gray(np.full((2, 2), 0.5), str(p))
        assert np.all(read_gray(str(p)) == 128 / 255)

    def test_zero_roundtrip(self, tmp_path):
        p = tmp_path / "z.pgm"
        write_gray(np.zeros((3, 3)), str(p))
        assert np.all(read_gray(str(p)) == 0.0)

    def test_roundtrip_is_one_quantization(self, tmp_path, rng):
        img = rng.random((17, 23))
        p = tmp_path / "r.pgm"
        write_gray(img, str(p))
        once = read_gray(str(p))
        assert np.array_equal(once, quantize(img) / 255.0)
        # quantization is idempotent: writing the read-back image changes nothing
        write_gray(once, str(p))
        assert np.array_equal(read_gray(str(p)), once)

    def test_many_random_roundtrips(self, tmp_path, rng):
        for k in range(20):
            img = rng.random((5, 7))
            p = tmp_path / f"{k}.pgm"
            write_gray(img, str(p))
            assert np.array_equal(read_gray(str(p)), quantize(img) / 255.0)


class TestLabelIO:
    def test_roundtrip_all_zero(self, tmp_path):
        p = tmp_path / "l.pgm"
        write_labels(np.zeros((4, 4), dtype=np.uint8), str(p))
        assert np.array_equal(read_labels(str(p)), np.zeros((4, 4), dtype=np.uint8))

    def test_roundtrip_checkerboard(self, tmp_path):
        lab = np.indices((6, 6)).sum(axis=0) % 2 * 3
        p = tmp_path / "cb.pgm"
        write_labels(lab.astype(np.uint8), str(p))
        assert np.array_equal(read_labels(str(p)), lab)

    def test_out_of_range_byte_rejected(self, tmp_path):
        p = tmp_path / "bad.pgm"
        _write_pgm(p, 2, 2, 255, bytes([0, 1, 2, 7]))
        with pytest.raises(LabelValueError):
            read_labels(str(p))


class TestSyntheticEye:
    def test_noiseless_levels_exact(self):
        spec = SyntheticEyeSpec(eyelash_count=0)
        img, lab = render_synthetic_eye(spec, seed=3)
        for cls, level in enumerate(spec.levels):
            assert np.all(img[lab == cls] == level)

    def test_deterministic(self):
        spec = SyntheticEyeSpec(noise_variance=0.01, eyelash_count=5, reflections=((70, 60, 2),))
        a_img, a_lab = render_synthetic_eye(spec, seed=9)
        b_img, b_lab = render_synthetic_eye(spec, seed=9)
        assert np.array_equal(a_img, b_img) and np.array_equal(a_lab, b_lab)

    def test_pupil_area_near_disk_area(self):
        for r in (8.0, 14.0, 20.0):
            spec = SyntheticEyeSpec(pupil_radius=r, iris_radius=r + 12)
            _, lab = render_synthetic_eye(spec, seed=0)
            count = int((lab == 3).sum())
            assert abs(count - np.pi * r * r) <= 4 * r

    def test_labels_exhaustive_and_exclusive(self, clean_eye):
        _, lab = clean_eye
        assert set(np.unique(lab)) <= {0, 1, 2, 3}
        # every pixel has exactly one class by construction of a label map;
        # check the geometry is nested: pupil inside iris inside sclera
        assert (lab == 3).sum() < (lab >= 2).sum() < (lab >= 1).sum()

    def test_geometry_out_of_bounds_rejected(self):
        spec = SyntheticEyeSpec(pupil_center=(5.0, 64.0))
        with pytest.raises(ValueError):
            render_synthetic_eye(spec, seed=0)

    def test_invariant_ordering_rejected(self):
        spec = SyntheticEyeSpec(pupil_radius=40.0, iris_radius=30.0)
        with pytest.raises(ValueError):
            render_synthetic_eye(spec, seed=0)

    def test_reflections_render_white(self):
        spec = SyntheticEyeSpec(reflections=((70.0, 60.0, 2.0),))
        img, _ = render_synthetic_eye(spec, seed=1)
        assert img[60, 70] == 1.0

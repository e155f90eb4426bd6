import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from zepeye.imgcore import (GrayImage, MalformedHeader, OutOfBounds, Point, Rect, Truncated,
                            UnsupportedMaxval, add_constant, add_gaussian_noise, decode_pgm,
                            encode_pgm, load_pgm, resize_bilinear, save_pgm)

images = arrays(np.uint8, st.tuples(st.integers(1, 24), st.integers(1, 24)))


def test_decode_two_by_two():
    img = decode_pgm(b"P5\n2 2\n255\n" + bytes([0, 255, 128, 64]))
    assert img == GrayImage.from_flat(2, 2, [0, 255, 128, 64])
    assert img.pixels.tolist() == [[0, 255], [128, 64]]


def test_header_comments_and_whitespace():
    data = b"P5 # comment\n# another\n 3\t1 \n255\n" + bytes([1, 2, 3])
    assert decode_pgm(data).pixels.tolist() == [[1, 2, 3]]


@pytest.mark.parametrize("data, exc", [
    (b"P5\n2 2\n65535\n" + bytes(8), UnsupportedMaxval),
    (b"P5\n2 2\n255\n" + bytes(3), Truncated),
    (b"P2\n2 2\n255\n0 0 0 0", MalformedHeader),
    (b"P5\n2 x\n255\n" + bytes(4), MalformedHeader),
    (b"P5\n2 2", MalformedHeader),
])
def test_decode_errors(data, exc):
    with pytest.raises(exc):
        decode_pgm(data)


def test_one_pixel_file(tmp_path):
    path = tmp_path / "one.pgm"
    save_pgm(GrayImage(np.zeros((1, 1), np.uint8)), path)
    raw = path.read_bytes()
    assert raw.endswith(b"\n\x00") and raw.startswith(b"P5")
    assert load_pgm(path).pixels.tolist() == [[0]]


def test_random_300_roundtrip(tmp_path, rng):
    img = GrayImage(rng.integers(0, 256, (300, 300), dtype=np.uint8))
    save_pgm(img, tmp_path / "a.pgm")
    assert load_pgm(tmp_path / "a.pgm") == img


@given(images)
def test_pgm_roundtrip(pixels):
    img = GrayImage(pixels)
    assert decode_pgm(encode_pgm(img)) == img


def test_image_is_immutable():
    img = GrayImage(np.zeros((2, 2), np.uint8))
    with pytest.raises(ValueError):
        img.pixels[0, 0] = 1


@pytest.mark.parametrize("bad", [np.zeros((0, 3)), np.zeros(4), np.array([[256]]), np.array([[-1]]),
                                 np.array([[1.5]])])
def test_invalid_rasters(bad):
    with pytest.raises(ValueError):
        GrayImage(bad)


def test_rect_geometry():
    r = Rect.from_size(2, 3, 4, 5)
    assert (r.row_max, r.col_max, r.height, r.width) == (5, 7, 4, 5)
    assert r.inside(6, 8) and not r.inside(5, 8)
    with pytest.raises(OutOfBounds):
        r.check_inside(5, 8)
    with pytest.raises(ValueError):
        Rect(3, 2, 0, 0)
    assert r.shifted(1, -1) == Rect(3, 6, 2, 6)


def test_point_distance():
    assert Point(0, 0).distance(Point(3, 4)) == 5.0


def test_resize_same_size_identity(rng):
    img = GrayImage(rng.integers(0, 256, (7, 9), dtype=np.uint8))
    assert resize_bilinear(img, 9, 7) == img


def test_resize_single_pixel_to_4x4():
    out = resize_bilinear(GrayImage(np.array([[77]], np.uint8)), 4, 4)
    assert np.all(out.pixels == 77)


def test_resize_checkerboard_center():
    out = resize_bilinear(GrayImage(np.array([[0, 255], [255, 0]], np.uint8)), 3, 3)
    assert out.pixels[1, 1] == 128


@given(st.integers(0, 255), st.integers(1, 12), st.integers(1, 12), st.integers(1, 30), st.integers(1, 30))
def test_resize_constant_stays_constant(v, h, w, nh, nw):
    out = resize_bilinear(GrayImage(np.full((h, w), v, np.uint8)), nw, nh)
    assert out.shape == (nh, nw) and np.all(out.pixels == v)


@given(arrays(np.uint8, st.tuples(st.integers(2, 10), st.integers(2, 10)), elements=st.integers(0, 200)),
       st.integers(1, 55), st.integers(1, 25), st.integers(1, 25))
def test_resize_commutes_with_brightness(pixels, c, nh, nw):
    img = GrayImage(pixels)
    assert resize_bilinear(add_constant(img, c), nw, nh) == add_constant(resize_bilinear(img, nw, nh), c)


def test_resize_rejects_empty_target():
    with pytest.raises(ValueError):
        resize_bilinear(GrayImage(np.zeros((2, 2), np.uint8)), 0, 3)


def test_noise_zero_sigma_is_identity(rng):
    img = GrayImage(rng.integers(0, 256, (5, 5), dtype=np.uint8))
    assert add_gaussian_noise(img, 0, 3) == img


def test_noise_is_unbiased_on_mid_gray():
    img = GrayImage(np.full((120, 120), 128, np.uint8))
    out = add_gaussian_noise(img, 30, 7)
    diff = out.pixels.astype(float) - 128
    assert abs(diff.mean()) <= 1.0
    assert 27 < diff.std() < 33


def test_noise_clamps_at_zero():
    out = add_gaussian_noise(GrayImage(np.zeros((50, 50), np.uint8)), 15, 1)
    assert out.pixels.min() == 0 and out.pixels.max() > 0


def test_noise_reproducible(rng):
    img = GrayImage(rng.integers(0, 256, (20, 20), dtype=np.uint8))
    assert add_gaussian_noise(img, 10, 5) == add_gaussian_noise(img, 10, 5)
    assert add_gaussian_noise(img, 10, 5) != add_gaussian_noise(img, 10, 6)


def test_noise_rejects_negative_sigma():
    with pytest.raises(ValueError):
        add_gaussian_noise(GrayImage(np.zeros((2, 2), np.uint8)), -1, 0)

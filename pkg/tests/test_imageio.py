import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from sdlshrink.errors import ArgumentError, FormatError, LengthError, RangeError, UnsupportedError
from sdlshrink.imageio import read_pnm, resize_bilinear, to_grayscale, write_pnm


def test_read_p5_binary():
    img = read_pnm(b"P5 2 2 255\n" + bytes([0, 128, 255, 64]))
    assert img.shape == (2, 2)
    np.testing.assert_array_equal(img, [[0, 128], [255, 64]])


def test_read_p2_ascii():
    img = read_pnm(b"P2 1 1 255 7")
    assert img.shape == (1, 1)
    assert img[0, 0] == 7


def test_read_p3_and_p6():
    rgb = read_pnm(b"P3\n2 1\n255\n1 2 3 4 5 6\n")
    assert rgb.shape == (1, 2, 3)
    np.testing.assert_array_equal(rgb[0, 1], [4, 5, 6])
    raw = read_pnm(b"P6\n1 1\n255\n" + bytes([9, 8, 7]))
    np.testing.assert_array_equal(raw[0, 0], [9, 8, 7])


def test_header_comments_are_skipped():
    img = read_pnm(b"P2\n# made by hand\n2 1 # width height\n255\n3 4\n")
    np.testing.assert_array_equal(img, [[3, 4]])


def test_truncated_payload_is_length_error():
    with pytest.raises(LengthError):
        read_pnm(b"P5 2 2 255\n" + bytes([1, 2, 3]))


@pytest.mark.parametrize("data", [b"P7 1 1 255\n\x00", b"P5 x 1 255\n\x00", b"P5 1", b""])
def test_malformed_header_is_format_error(data):
    with pytest.raises(FormatError):
        read_pnm(data)


def test_maxval_above_255_unsupported():
    with pytest.raises(UnsupportedError):
        read_pnm(b"P5 1 1 65535\n\x00\x01")


def test_write_p5_exact_bytes():
    assert write_pnm(np.array([[7.0]])) == b"P5\n1 1\n255\n" + bytes([7])


def test_write_rejects_out_of_range():
    with pytest.raises(RangeError):
        write_pnm(np.array([[256.0]]))
    with pytest.raises(RangeError):
        write_pnm(np.array([[-0.5]]))


def test_write_rounds_to_nearest():
    out = read_pnm(write_pnm(np.array([[0.4, 0.5, 254.6]])))
    np.testing.assert_array_equal(out, [[0, 1, 255]])


gray_images = arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 6)),
                     elements=st.integers(0, 255).map(float))
rgb_images = arrays(np.float64, st.tuples(st.integers(1, 5), st.integers(1, 5), st.just(3)),
                    elements=st.integers(0, 255).map(float))


@given(img=st.one_of(gray_images, rgb_images), ascii=st.booleans())
def test_roundtrip_identity_on_integer_images(img, ascii):
    np.testing.assert_array_equal(read_pnm(write_pnm(img, ascii=ascii)), img)


@given(arrays(np.float64, (3, 4), elements=st.floats(0, 255)))
def test_roundtrip_equals_rounded_image(img):
    np.testing.assert_array_equal(read_pnm(write_pnm(img)), np.floor(img + 0.5))


def test_grayscale_examples():
    px = np.array([[[255, 255, 255], [255, 0, 0], [40, 40, 40]]], dtype=float)
    gray = to_grayscale(px)
    assert gray[0, 0] == pytest.approx(255.0)
    # 0.299 * 255
    assert gray[0, 1] == pytest.approx(76.245)
    assert gray[0, 2] == pytest.approx(40.0)


@given(arrays(np.float64, (4, 5, 3), elements=st.floats(0, 255)))
def test_grayscale_is_convex_combination(img):
    gray = to_grayscale(img)
    assert np.all(gray >= img.min(axis=2) - 1e-9)
    assert np.all(gray <= img.max(axis=2) + 1e-9)


def test_resize_constant_image():
    out = resize_bilinear(np.full((244, 244), 100.0), 112, 112)
    assert out.shape == (112, 112)
    np.testing.assert_allclose(out, 100.0, atol=1e-12)


def test_resize_identity():
    img = np.array([[0.0, 255.0], [0.0, 255.0]])
    np.testing.assert_array_equal(resize_bilinear(img, 2, 2), img)
    rnd = np.random.default_rng(3).uniform(0, 255, (7, 9))
    np.testing.assert_array_equal(resize_bilinear(rnd, 7, 9), rnd)


def test_resize_half_pixel_centres():
    # upsampling [0, 255] to width 4 samples at x = -0.25, 0.25, 0.75, 1.25
    out = resize_bilinear(np.array([[0.0, 255.0]]), 1, 4)
    np.testing.assert_allclose(out, [[0.0, 63.75, 191.25, 255.0]])


def test_resize_zero_dimension_rejected():
    with pytest.raises(ArgumentError):
        resize_bilinear(np.zeros((4, 4)), 0, 3)


@settings(max_examples=50)
@given(arrays(np.float64, st.tuples(st.integers(1, 12), st.integers(1, 12)), elements=st.floats(0, 255)),
       st.integers(1, 20), st.integers(1, 20))
def test_resize_preserves_range(img, h, w):
    out = resize_bilinear(img, h, w)
    assert out.shape == (h, w)
    assert out.min() >= img.min() - 1e-9 and out.max() <= img.max() + 1e-9

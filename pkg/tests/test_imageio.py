import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stablesim.errors import BadMagicError, BadMaxvalError, TooSmallError, TruncatedError
from stablesim.imageio import ImageGrid, decode_ppm, encode_ppm, lattice, load_ppm, save_ppm, split_pixels


def test_white_pixel():
    grid = decode_ppm(b"P6\n1 1\n255\n\xff\xff\xff")
    assert grid.pixels.shape == (1, 1, 3) and np.array_equal(grid.pixels, np.ones((1, 1, 3)))


def test_round_trip_random_grid(tmp_path):
    rng = np.random.default_rng(0)
    raw = rng.integers(0, 256, size=(8, 8, 3), dtype=np.uint8)
    grid = ImageGrid(raw / 255.0)
    save_ppm(grid, tmp_path / "a.ppm")
    back = load_ppm(tmp_path / "a.ppm")
    assert np.array_equal(back.to_bytes(), raw)
    assert (tmp_path / "a.ppm").read_bytes() == encode_ppm(back)


def test_header_comments_and_whitespace():
    grid = decode_ppm(b"P6 # made by hand\n2  1\n# another\n255\n" + bytes(range(6)))
    assert grid.width == 2 and grid.height == 1
    assert grid.to_bytes().reshape(-1).tolist() == list(range(6))


def test_errors():
    with pytest.raises(BadMagicError):
        decode_ppm(b"P3\n1 1\n255\n255 255 255\n")
    with pytest.raises(BadMaxvalError):
        decode_ppm(b"P6\n1 1\n65535\n\x00\x00\x00\x00\x00\x00")
    with pytest.raises(TruncatedError):
        decode_ppm(b"P6\n2 2\n255\n\x00\x00\x00")
    with pytest.raises(TruncatedError):
        decode_ppm(b"P6\n2 2\n")


def test_split_small_and_counts():
    s = split_pixels((2, 2))
    assert s.train.tolist() == [[0, 0]] and s.valid.tolist() == [[0, 1]] and s.test.tolist() == [[1, 1]]
    big = split_pixels((512, 512))
    assert len(big.train) == len(big.valid) == len(big.test) == 65536
    with pytest.raises(TooSmallError):
        split_pixels((1, 5))


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 40), st.integers(2, 40))
def test_split_is_disjoint_and_content_free(h, w):
    s = split_pixels((h, w))
    sets = [set(map(tuple, part.tolist())) for part in (s.train, s.valid, s.test)]
    assert sets[0].isdisjoint(sets[1]) and sets[0].isdisjoint(sets[2]) and sets[1].isdisjoint(sets[2])
    if h % 2 == 0 and w % 2 == 0:
        assert all(len(p) == h * w // 4 for p in sets)
    grid = ImageGrid(np.random.default_rng(h * w).uniform(size=(h, w, 3)))
    g = split_pixels(grid)
    assert np.array_equal(g.train, s.train) and np.array_equal(g.test, s.test)


def test_lattice_half_pixel_centres():
    pts = lattice(2, 2)
    assert np.allclose(pts, [[0.25, 0.25], [0.75, 0.25], [0.25, 0.75], [0.75, 0.75]])

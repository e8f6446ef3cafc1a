import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from distress.fields import CantileverField, rigid_translation
from distress.pgm import ImageFormatError, read_pgm, read_sidecar, write_pgm, write_png, write_sidecar
from distress.synth import (
    ResourceError,
    SpeckleSpec,
    generate_speckles,
    make_image_pair,
    rasterize,
    rasterize_disks,
)


def brute_force_coverage(centers, r, width, height, ss=64):
    """Union coverage by dense supersampling, pure numpy."""
    off = (np.arange(ss) + 0.5) / ss - 0.5
    cover = np.zeros((height, width))
    jj, ii = np.mgrid[0:height, 0:width]
    for oy in off:
        for ox in off:
            sx = ii + ox
            sy = jj + oy
            hit = np.zeros((height, width), dtype=bool)
            for cx, cy in centers:
                hit |= (sx - cx) ** 2 + (sy - cy) ** 2 < r * r
            cover += hit
    return cover / ss**2


def test_speckle_counts_and_cells():
    f = generate_speckles(SpeckleSpec(r_a=0.5, r_d=0.1, seed=4))
    assert len(f) == 4
    cells = {(int(x // 0.5), int(y // 0.5)) for x, y in f.centers}
    assert cells == {(0, 0), (0, 1), (1, 0), (1, 1)}
    assert len(generate_speckles(SpeckleSpec(0.01, 0.01, 0))) == 10_000


def test_each_center_lies_in_its_own_cell():
    spec = SpeckleSpec(r_a=0.03, r_d=0.02, seed=11)
    f = generate_speckles(spec)
    n = 34  # ceil(1 / 0.03)
    assert len(f) == n * n
    cells = np.floor(np.minimum(f.centers, 1 - 1e-12) / spec.r_a).astype(int)
    expected = np.stack(np.meshgrid(np.arange(n), np.arange(n), indexing="xy"), -1).reshape(-1, 2)
    np.testing.assert_array_equal(cells, expected)
    assert np.all((f.centers >= 0) & (f.centers <= 1))


def test_speckles_deterministic_per_seed():
    a = generate_speckles(SpeckleSpec(0.02, 0.02, 7)).centers
    b = generate_speckles(SpeckleSpec(0.02, 0.02, 7)).centers
    c = generate_speckles(SpeckleSpec(0.02, 0.02, 8)).centers
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_speckle_cap():
    with pytest.raises(ResourceError):
        generate_speckles(SpeckleSpec(0.001, 0.001), max_speckles=10_000)
    with pytest.raises(ValueError):
        SpeckleSpec(r_a=0.0)


def test_inside_and_background_pixels():
    img = rasterize_disks(np.array([[20.2, 19.6]]), 6.0, 41, 41)
    assert img[20, 20] == 255
    assert img[0, 0] == 0
    assert img[20, 35] == 0


@pytest.mark.parametrize("r", [5.0, 7.5, 10.0, 16.0])
@pytest.mark.parametrize("frac", [(0.0, 0.0), (0.37, 0.81)])
def test_disk_coverage_mass_within_one_percent(r, frac):
    c = 40 + np.array(frac)
    img = rasterize_disks(c[None, :], r, 81, 81)
    mass = img.sum(dtype=np.int64) / 255
    assert abs(mass - np.pi * r * r) <= 0.01 * np.pi * r * r


def test_matches_brute_force_union_coverage():
    rng = np.random.default_rng(5)
    centers = rng.uniform(3, 29, (6, 2))
    img = rasterize_disks(centers, 3.3, 32, 32)
    ref = brute_force_coverage(centers, 3.3, 32, 32)
    # 16x16 vs 64x64 sampling: worst case one boundary pixel differs by a few levels
    assert np.max(np.abs(img.astype(float) - 255 * ref)) <= 8
    assert np.mean(np.abs(img.astype(float) - 255 * ref)) <= 0.5


def test_overlap_saturates():
    img = rasterize_disks(np.array([[10.0, 10.0], [10.0, 10.0], [11.0, 10.0]]), 4.0, 21, 21)
    assert img.max() == 255
    single = rasterize_disks(np.array([[10.0, 10.0]]), 4.0, 21, 21)
    assert np.all(img >= single)


def test_intensity_monotone_as_disk_approaches():
    r = 5.0
    values = []
    for cx in np.linspace(2.0, 10.0, 161):
        img = rasterize_disks(np.array([[cx, 10.3]]), r, 21, 21)
        values.append(int(img[10, 10]))
    assert values[0] == 0 and values[-1] == 255
    assert all(b >= a for a, b in zip(values, values[1:]))


def test_clipped_disk_discards_outside_coverage():
    img = rasterize_disks(np.array([[0.0, 10.0]]), 5.0, 21, 21)
    mass = img.sum(dtype=np.int64) / 255
    # pixel 0 spans [-0.5, 0.5]; the disk portion with x >= -0.5 is a bit over half
    seg = 5.0**2 * np.arccos(0.5 / 5.0) - 0.5 * np.sqrt(25 - 0.25)
    assert abs(mass - (np.pi * 25 - seg)) <= 0.01 * np.pi * 25


def test_identity_field_gives_identical_images():
    ref, dfm, truth = make_image_pair(SpeckleSpec(0.02, 0.02, 1), rigid_translation(0, 0), 128)
    assert np.array_equal(ref, dfm)
    assert ref.dtype == np.uint8 and ref.shape == (128, 128)


@pytest.mark.parametrize("shift", [(3, 0), (0, 2), (-1, 4), (5, -5)])
def test_integer_shift_is_exact_on_interior(shift):
    n = 200
    sx, sy = shift
    ref, dfm, _ = make_image_pair(SpeckleSpec(0.02, 0.02, 3), rigid_translation(sx / n, sy / n), n)
    m = 10
    a = ref[m:n - m, m:n - m]
    b = dfm[m + sy:n - m + sy, m + sx:n - m + sx]
    assert np.array_equal(a, b)


def test_images_are_bit_identical_for_identical_seed():
    f = CantileverField(strict=False).with_max_v(0.005)
    a = make_image_pair(SpeckleSpec(0.02, 0.02, 9), f, 150)
    b = make_image_pair(SpeckleSpec(0.02, 0.02, 9), f, 150)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


def test_rasterize_preconditions():
    f = generate_speckles(SpeckleSpec(0.1, 0.1, 0))
    with pytest.raises(ValueError):
        rasterize(f, None, 8)


@settings(max_examples=25, deadline=None)
@given(cx=st.floats(5, 15), cy=st.floats(5, 15), r=st.floats(0.3, 4.0))
def test_intensities_in_range_and_bounded_by_area(cx, cy, r):
    img = rasterize_disks(np.array([[cx, cy]]), r, 21, 21)
    mass = img.sum(dtype=np.int64) / 255
    # quantization is at most half a level per boundary pixel
    boundary = np.count_nonzero((img > 0) & (img < 255))
    assert abs(mass - np.pi * r * r) <= 0.02 * np.pi * r * r + boundary * (0.5 / 255 + 1 / 256) + 0.05


def test_pgm_roundtrip(tmp_path):
    img = np.arange(35, dtype=np.uint8).reshape(5, 7)
    write_pgm(tmp_path / "a.pgm", img)
    raw = (tmp_path / "a.pgm").read_bytes()
    assert raw.startswith(b"P5\n7 5\n255\n")
    assert np.array_equal(read_pgm(tmp_path / "a.pgm"), img)


def test_pgm_header_with_comment(tmp_path):
    img = np.array([[1, 2], [3, 4]], dtype=np.uint8)
    (tmp_path / "b.pgm").write_bytes(b"P5\n# made elsewhere\n2 2\n255\n" + img.tobytes())
    assert np.array_equal(read_pgm(tmp_path / "b.pgm"), img)


def test_pgm_rejects_bad_input(tmp_path):
    (tmp_path / "c.pgm").write_bytes(b"P2\n2 2\n255\n1 2 3 4\n")
    with pytest.raises(ImageFormatError):
        read_pgm(tmp_path / "c.pgm")
    (tmp_path / "d.pgm").write_bytes(b"P5\n2 2\n255\n\x00")
    with pytest.raises(ImageFormatError):
        read_pgm(tmp_path / "d.pgm")
    with pytest.raises(ImageFormatError):
        write_pgm(tmp_path / "e.pgm", np.zeros((2, 2), dtype=np.float32))


def test_png_and_sidecar(tmp_path):
    img = np.arange(64, dtype=np.uint8).reshape(8, 8)
    write_png(tmp_path / "a.png", img)
    assert (tmp_path / "a.png").read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
    write_sidecar(tmp_path / "m.json", {"seed": 3, "r_a": 0.01})
    assert read_sidecar(tmp_path / "m.json") == {"r_a": 0.01, "seed": 3}


def test_png_decodes_with_independent_reader(tmp_path):
    Image = pytest.importorskip("PIL.Image")
    img = (np.random.default_rng(2).random((13, 21)) * 255).astype(np.uint8)
    write_png(tmp_path / "b.png", img)
    np.testing.assert_array_equal(np.asarray(Image.open(tmp_path / "b.png")), img)

import numpy as np
import pytest

from gmbua.core import DataError, HsiCube
from gmbua.superpix import (
    ScaleOperators,
    SuperpixelMap,
    build_operators,
    coarsen,
    slic_segment,
    upsample,
    write_pgm16,
)


def _dense_w(spmap):
    """Explicit N x M averaging matrix, for oracle comparisons."""
    n = spmap.labels.shape[0]
    m = spmap.n_superpixels
    w = np.zeros((n, m))
    sizes = np.bincount(spmap.labels, minlength=m)
    w[np.arange(n), spmap.labels] = 1.0 / sizes[spmap.labels]
    return w


def _random_map(rng, h=6, w=7, m=5):
    while True:
        labels = rng.integers(0, m, size=h * w)
        if len(np.unique(labels)) == m:
            return SuperpixelMap(labels, h, w)


class TestSuperpixelMap:
    def test_dense_label_requirement(self):
        with pytest.raises(DataError):
            SuperpixelMap(np.array([0, 2, 2, 0]), 2, 2)  # label 1 missing
        with pytest.raises(DataError):
            SuperpixelMap(np.array([0, -1, 1, 0]), 2, 2)

    def test_member_lists(self):
        sp = SuperpixelMap(np.array([1, 0, 1, 0]), 2, 2)
        members = sp.member_lists()
        assert [list(m) for m in members] == [[1, 3], [0, 2]]

    def test_length_check(self):
        with pytest.raises(DataError):
            SuperpixelMap(np.zeros(5, dtype=int), 2, 2)


class TestScaleOperators:
    def test_build(self, rng):
        sp = _random_map(rng)
        ops = build_operators(sp)
        assert ops.n_pixels == 42 and ops.n_superpixels == 5
        for j in range(5):
            members = np.flatnonzero(sp.labels == j)
            assert ops.sizes[j] == len(members)
            assert ops.first_member[j] == members[0]

    def test_coarsen_matches_dense_product(self, rng):
        sp = _random_map(rng)
        ops = build_operators(sp)
        d = rng.normal(size=(9, 42))
        np.testing.assert_allclose(coarsen(d, ops), d @ _dense_w(sp),
                                   atol=1e-12)

    def test_upsample_matches_dense_product(self, rng):
        sp = _random_map(rng)
        ops = build_operators(sp)
        dc = rng.normal(size=(4, 5))
        # W* replicates: row n of (W*)^T selects superpixel label(n)
        wstar = np.zeros((5, 42))
        wstar[sp.labels, np.arange(42)] = 1.0
        np.testing.assert_allclose(upsample(dc, ops), dc @ wstar, atol=1e-14)

    def test_coarsen_of_upsample_is_identity(self, rng):
        # exact (not approximate) round trip: averaging a superpixel whose
        # members are identical must return the shared value bit-for-bit
        sp = _random_map(rng, h=11, w=13, m=9)
        ops = build_operators(sp)
        dc = rng.normal(size=(6, 9))
        np.testing.assert_array_equal(coarsen(upsample(dc, ops), ops), dc)

    def test_shape_checks(self, rng):
        sp = _random_map(rng)
        ops = build_operators(sp)
        with pytest.raises(DataError):
            coarsen(rng.normal(size=(3, 41)), ops)
        with pytest.raises(DataError):
            upsample(rng.normal(size=(3, 6)), ops)


def _block_cube(rng, h=24, w=24, bands=16, blocks=4):
    """Cube that is piecewise constant on a blocks x blocks tiling."""
    base = rng.uniform(0.1, 1.0, size=(bands, blocks * blocks))
    gy = np.minimum(np.arange(h) * blocks // h, blocks - 1)
    gx = np.minimum(np.arange(w) * blocks // w, blocks - 1)
    tile = (gy[:, None] * blocks + gx[None, :]).ravel()
    return HsiCube(data=base[:, tile], height=h, width=w), tile


class TestSlic:
    def test_blockwise_constant_scene(self, rng):
        # with one target superpixel per constant block, SLIC must recover
        # the tiling exactly (labels equal up to renaming)
        cube, tile = _block_cube(rng)
        sp = slic_segment(cube, m_target=16, compactness=0.005)
        assert sp.n_superpixels == 16
        # each recovered superpixel lies inside one block
        for members in sp.member_lists():
            assert len(np.unique(tile[members])) == 1

    def test_m_within_factor_two(self, rng):
        data = rng.uniform(size=(10, 30 * 30))
        cube = HsiCube(data=data, height=30, width=30)
        for m_target in (4, 25, 100):
            sp = slic_segment(cube, m_target=m_target)
            assert 0.5 * m_target <= sp.n_superpixels <= 2.0 * m_target

    def test_special_cases(self, rng):
        cube = HsiCube(data=rng.uniform(size=(5, 36)), height=6, width=6)
        assert slic_segment(cube, 1).n_superpixels == 1
        sp = slic_segment(cube, 36)
        np.testing.assert_array_equal(sp.labels, np.arange(36))

    def test_target_out_of_range(self, rng):
        cube = HsiCube(data=rng.uniform(size=(5, 36)), height=6, width=6)
        with pytest.raises(DataError):
            slic_segment(cube, 0)
        with pytest.raises(DataError):
            slic_segment(cube, 37)

    def test_deterministic(self, rng):
        data = rng.uniform(size=(10, 400))
        cube = HsiCube(data=data, height=20, width=20)
        a = slic_segment(cube, 25)
        b = slic_segment(cube, 25)
        np.testing.assert_array_equal(a.labels, b.labels)

    def test_connected_components(self, rng):
        cube, _ = _block_cube(rng, h=20, w=20, blocks=2)
        sp = slic_segment(cube, m_target=10)
        labels = sp.labels.reshape(20, 20)
        for lab in range(sp.n_superpixels):
            mask = labels == lab
            seen = np.zeros_like(mask)
            ys, xs = np.nonzero(mask)
            stack = [(ys[0], xs[0])]
            seen[ys[0], xs[0]] = True
            while stack:
                y, x = stack.pop()
                for ny, nx in ((y - 1, x), (y + 1, x), (y, x - 1), (y, x + 1)):
                    if 0 <= ny < 20 and 0 <= nx < 20 and mask[ny, nx] and not seen[ny, nx]:
                        seen[ny, nx] = True
                        stack.append((ny, nx))
            assert np.array_equal(seen, mask)


class TestPgmExport:
    def test_header_and_payload(self, rng, tmp_path):
        sp = _random_map(rng, h=3, w=4, m=3)
        path = tmp_path / "labels.pgm"
        write_pgm16(sp, path)
        blob = path.read_bytes()
        assert blob.startswith(b"P5\n4 3\n65535\n")
        payload = np.frombuffer(blob.split(b"65535\n", 1)[1], dtype=">u2")
        np.testing.assert_array_equal(payload.astype(np.int64), sp.labels)

import math

import numpy as np
import pytest

import oracles
from demopt import _kernels
from demopt.chunking import ChunkGeometry, chunk
from demopt.dct import (
    BasisCache,
    build_basis,
    dct_forward_blocks,
    dct_forward_chunk,
    dct_inverse_blocks,
    dct_inverse_chunk,
)


class TestBuildBasis:
    def test_n1_is_identity(self):
        b = build_basis(1)
        np.testing.assert_allclose(b.forward, [[1.0]], atol=1e-15)

    def test_n2_closed_form(self):
        b = build_basis(2)
        r = 1.0 / math.sqrt(2.0)
        np.testing.assert_allclose(b.forward, [[r, r], [r, -r]], atol=1e-12)

    @pytest.mark.parametrize("n", [1, 2, 3, 4, 8, 16, 64, 128])
    def test_orthonormal_rows(self, n):
        b = build_basis(n)
        np.testing.assert_allclose(b.forward @ b.forward.T, np.eye(n),
                                   atol=1e-12)

    @pytest.mark.parametrize("n", [2, 4, 8, 64])
    def test_forward_times_inverse_is_identity(self, n):
        b = build_basis(n)
        err = np.abs(b.forward @ b.inverse - np.eye(n)).max()
        assert err < 1e-12

    @pytest.mark.parametrize("n", [2, 3, 5, 8, 16])
    def test_matches_naive_definition(self, n, rng):
        b = build_basis(n)
        x = rng.normal(size=n)
        np.testing.assert_allclose(b.forward @ x, oracles.naive_dct2_1d(x),
                                   atol=1e-12)


class TestBasisCache:
    def test_lazy_population(self):
        c = BasisCache()
        assert c.sizes() == ()
        c.get(8)
        c.get(4)
        c.get(8)
        assert c.sizes() == (4, 8)

    def test_same_object_returned(self):
        c = BasisCache()
        assert c.get(16) is c.get(16)

    def test_concurrent_get_builds_once(self):
        import threading

        c = BasisCache()
        got = []
        barrier = threading.Barrier(8)

        def hit():
            barrier.wait()
            got.append(c.get(32))

        threads = [threading.Thread(target=hit) for _ in range(8)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert all(b is got[0] for b in got)


class TestForward:
    def test_constant_maps_to_dc(self, cache):
        out = dct_forward_chunk(np.array([1.0, 1.0, 1.0, 1.0]), cache)
        np.testing.assert_allclose(out, [2.0, 0.0, 0.0, 0.0], atol=1e-12)

    def test_unit_impulse_matches_naive_oracle(self, cache):
        x = np.array([1.0, 0.0, 0.0, 0.0])
        np.testing.assert_allclose(dct_forward_chunk(x, cache),
                                   oracles.naive_dct2_1d(x), atol=1e-12)

    def test_2d_constant_block(self, cache):
        c = 0.75
        out = dct_forward_chunk(np.full((4, 4), c), cache)
        expect = np.zeros((4, 4))
        expect[0, 0] = 4.0 * c
        np.testing.assert_allclose(out, expect, atol=1e-12)

    @pytest.mark.parametrize("shape", [(8,), (4, 4), (8, 8), (2, 3, 4)])
    def test_matches_scipy_oracle(self, shape, cache, rng):
        x = rng.normal(size=shape)
        mine = dct_forward_chunk(x, cache)
        np.testing.assert_allclose(mine, oracles.scipy_dct2_nd(x), atol=1e-10)

    def test_batch_matches_per_chunk(self, cache, rng):
        blocks = rng.normal(size=(6, 4, 4))
        batch = dct_forward_blocks(blocks, cache)
        for i in range(6):
            np.testing.assert_array_equal(batch[i],
                                          dct_forward_chunk(blocks[i], cache))


class TestInverse:
    def test_roundtrip_random_8x8(self, cache, rng):
        x = rng.normal(size=(8, 8)).astype(np.float32)
        back = dct_inverse_chunk(dct_forward_chunk(x, cache), cache)
        assert np.abs(back - x).max() < 1e-5

    def test_zero_coeffs_zero_block(self, cache):
        out = dct_inverse_chunk(np.zeros((4, 4)), cache)
        np.testing.assert_array_equal(out, np.zeros((4, 4)))

    def test_dc_only_gives_constant_quarter(self, cache):
        coeffs = np.zeros((4, 4))
        coeffs[0, 0] = 1.0
        out = dct_inverse_chunk(coeffs, cache)
        np.testing.assert_allclose(out, np.full((4, 4), 0.25), atol=1e-12)

    @pytest.mark.parametrize("shape", [(16,), (4, 4), (2, 3, 4)])
    def test_matches_scipy_inverse(self, shape, cache, rng):
        c = rng.normal(size=shape)
        np.testing.assert_allclose(dct_inverse_chunk(c, cache),
                                   oracles.scipy_dct3_nd(c), atol=1e-10)

    def test_roundtrip_float64_tight(self, cache, rng):
        x = rng.normal(size=(4, 4, 4))
        back = dct_inverse_chunk(dct_forward_chunk(x, cache), cache)
        assert np.abs(back - x).max() < 1e-12


class TestProperties:
    def test_parseval_per_chunk(self, cache, rng):
        for shape in [(64,), (8, 8), (4, 4, 4)]:
            x = rng.normal(size=shape).astype(np.float32)
            co = dct_forward_chunk(x, cache)
            ex = float(np.sum(np.square(x, dtype=np.float64)))
            ec = float(np.sum(np.square(co, dtype=np.float64)))
            assert abs(ex - ec) / ex < 1e-4

    def test_linearity(self, cache, rng):
        x = rng.normal(size=(8, 8))
        y = rng.normal(size=(8, 8))
        a, b = 2.5, -1.25
        lhs = dct_forward_chunk(a * x + b * y, cache)
        rhs = a * dct_forward_chunk(x, cache) + b * dct_forward_chunk(y, cache)
        np.testing.assert_allclose(lhs, rhs, atol=1e-10)

    def test_axis_order_irrelevant(self, cache, rng):
        """Transforming axis 1 then 2 equals axis 2 then 1."""
        blocks = rng.normal(size=(5, 4, 6))
        b4 = cache.get(4).forward
        b6 = cache.get(6).forward

        def apply_axis(arr, mat, axis):
            pre = int(np.prod(arr.shape[:axis]))
            n = arr.shape[axis]
            post = int(np.prod(arr.shape[axis + 1:]))
            out = _kernels.dct_axis(
                np.ascontiguousarray(arr).reshape(pre, n, post), mat)
            return out.reshape(arr.shape)

        one = apply_axis(apply_axis(blocks, b4, 1), b6, 2)
        two = apply_axis(apply_axis(blocks, b6, 2), b4, 1)
        np.testing.assert_allclose(one, two, atol=1e-10)
        np.testing.assert_allclose(one, dct_forward_blocks(blocks, cache),
                                   atol=1e-10)

    def test_energy_compaction_ar1_beats_identity(self, cache):
        """Mean top-8 energy fraction on autocorrelated signals, 1000 trials.

        Expected fractions pinned from an independent oracle (tolerance
        0.02): DCT 0.918592, identity 0.412917.
        """
        rng = np.random.default_rng(0)
        g = ChunkGeometry((64,), (64,))
        dct_mean = 0.0
        ident_mean = 0.0
        trials = 1000
        for _ in range(trials):
            x = oracles.ar1_signal(rng, 64, 0.95)
            co = dct_forward_blocks(chunk(x, g), cache)[0]
            dct_mean += oracles.topk_energy_fraction(co, 8)
            ident_mean += oracles.topk_energy_fraction(x, 8)
        dct_mean /= trials
        ident_mean /= trials
        assert dct_mean > ident_mean
        assert abs(dct_mean - 0.918592) < 0.02
        assert abs(ident_mean - 0.412917) < 0.02

    def test_inverse_blocks_roundtrip_batch(self, cache, rng):
        blocks = rng.normal(size=(10, 8, 8)).astype(np.float32)
        back = dct_inverse_blocks(dct_forward_blocks(blocks, cache), cache)
        assert np.abs(back - blocks).max() < 1e-5

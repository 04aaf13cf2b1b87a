import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import d1_oracle, project_oracle, projection_mse_oracle, random_frame
from voxsr import VoxelFrame, d1_psnr, project_face, projection_psnr
from voxsr.errors import ParameterError
from voxsr.metrics import FACES, mean_finite


def perturb(frame, rng, k, amount=32):
    cols = frame.colors.astype(np.int64).copy()
    idx = rng.choice(len(frame), size=k, replace=False)
    cols[idx] += rng.choice([-amount, amount], size=(k, 3))
    return VoxelFrame(frame.depth, frame.voxels, np.clip(cols, 0, 255))


class TestProjectFace:
    def test_single_voxel(self):
        img = project_face(VoxelFrame(1, [(0, 0, 0)], [(1, 2, 3)]), "Z", "-")
        assert img.occupancy.sum() == 1 and img.occupancy[0, 0]
        assert img.depth[0, 0] == 0
        assert img.color[0, 0].tolist() == [1, 2, 3]

    def test_depth_buffer(self):
        f = VoxelFrame(1, [(0, 0, 0), (0, 0, 1)], [(10, 10, 10), (20, 20, 20)])
        assert project_face(f, "Z", "-").color[0, 0].tolist() == [10, 10, 10]
        plus = project_face(f, "Z", "+")
        assert plus.color[0, 0].tolist() == [20, 20, 20] and plus.depth[0, 0] == 0

    def test_colorless_is_gray(self):
        img = project_face(VoxelFrame(2, [(1, 2, 3)]), "X", "+")
        assert img.color[2, 3].tolist() == [128, 128, 128]
        assert img.depth[2, 3] == 2

    def test_bad_face(self):
        with pytest.raises(ParameterError):
            project_face(VoxelFrame(1, [(0, 0, 0)]), "W", "+")

    @pytest.mark.parametrize("axis,direction", FACES)
    def test_random_matches_column_scan(self, axis, direction, rng):
        f = random_frame(rng, 4, 500)
        img = project_face(f, axis, direction)
        want = project_oracle(f, axis, direction)
        assert int(img.occupancy.sum()) == len(want)
        for (i, j), (d, col) in want.items():
            assert img.occupancy[i, j]
            assert img.depth[i, j] == d
            assert tuple(img.color[i, j]) == col
        assert (img.depth[~img.occupancy] == -1).all()


class TestProjectionPsnr:
    def test_identity(self, rng):
        f = random_frame(rng, 4, 300)
        r = projection_psnr(f, f)
        assert all(v == math.inf for v in r.per_face_psnr.values())
        assert r.mean_psnr == math.inf and r.occupancy_agreement == 1.0

    def test_one_level_color_step(self):
        a = VoxelFrame(2, [(1, 1, 1)], [(255, 255, 255)])
        b = VoxelFrame(2, [(1, 1, 1)], [(254, 254, 254)])
        r = projection_psnr(a, b)
        for fid, mse in r.per_face_mse.items():
            assert mse == 1.0
            assert r.per_face_psnr[fid] == pytest.approx(48.1308036, abs=1e-6)
        assert r.mean_psnr == pytest.approx(48.1308036, abs=1e-6)

    def test_no_overlap(self):
        r = projection_psnr(VoxelFrame(2, [(0, 0, 0)]), VoxelFrame(2, [(3, 3, 3)]))
        assert r.occupancy_agreement == 0.0
        assert r.mean_psnr == math.inf

    def test_depth_mismatch(self):
        with pytest.raises(ParameterError):
            projection_psnr(VoxelFrame(2, [(0, 0, 0)]), VoxelFrame(3, [(0, 0, 0)]))

    @pytest.mark.parametrize("k", [1, 10, 50])
    def test_matches_full_render_oracle(self, k, rng):
        a = random_frame(rng, 4, 400)
        b = perturb(a, rng, k)
        r = projection_psnr(a, b)
        want = projection_mse_oracle(a, b)
        psnrs = []
        for fid, mse in want.items():
            assert r.per_face_mse[fid] == pytest.approx(mse, rel=1e-12)
            psnrs.append(math.inf if mse == 0 else 10 * math.log10(255 ** 2 / mse))
        finite = [p for p in psnrs if math.isfinite(p)]
        assert r.mean_psnr == pytest.approx(sum(finite) / len(finite), rel=1e-12)

    def test_symmetric(self, rng):
        a = random_frame(rng, 4, 300)
        b = perturb(random_frame(rng, 4, 300), rng, 30)
        assert projection_psnr(a, b).per_face_psnr == projection_psnr(b, a).per_face_psnr

    def test_occupancy_agreement_pooled(self):
        a = VoxelFrame(1, [(0, 0, 0)])
        b = VoxelFrame.from_coords(1, [(0, 0, 0), (1, 1, 1)])
        # every face: a covers 1 pixel, b covers 2, they share 1
        assert projection_psnr(a, b).occupancy_agreement == pytest.approx(0.5)

    def test_color_noise_degrades(self):
        rng = np.random.default_rng(3)
        base = random_frame(rng, 4, 600)
        means = []
        for sigma in (2, 8, 32):
            trials = []
            for _ in range(30):
                noise = rng.normal(0, sigma, size=base.colors.shape)
                noisy = VoxelFrame(4, base.voxels, np.clip(np.rint(base.colors + noise), 0, 255))
                trials.append(np.mean([m for m in projection_psnr(base, noisy).per_face_mse.values()]))
            means.append(np.mean(trials))
        assert means[0] <= means[1] <= means[2]


def test_mean_finite():
    assert mean_finite([1.0, math.inf, 3.0]) == 2.0
    assert mean_finite([math.inf] * 6) == math.inf


class TestD1:
    def test_identical(self, rng):
        f = random_frame(rng, 4, 50)
        assert d1_psnr(f, f) == math.inf

    def test_single_pair(self):
        a, b = VoxelFrame(2, [(0, 0, 0)]), VoxelFrame(2, [(1, 0, 0)])
        assert d1_psnr(a, b) == pytest.approx(14.3136376, abs=1e-6)

    def test_empty(self):
        with pytest.raises(ParameterError):
            d1_psnr(VoxelFrame.empty(2), VoxelFrame(2, [(0, 0, 0)]))

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_all_pairs(self, seed):
        rng = np.random.default_rng(seed)
        a = random_frame(rng, 5, 120, colors=False)
        b = random_frame(rng, 5, 180, colors=False)
        assert abs(d1_psnr(a, b) - d1_oracle(a, b, 5)) < 1e-9

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_symmetric_and_finite_iff_different(self, seed):
        rng = np.random.default_rng(seed)
        a = random_frame(rng, 3, int(rng.integers(1, 30)), colors=False)
        b = random_frame(rng, 3, int(rng.integers(1, 30)), colors=False)
        assert d1_psnr(a, b) == d1_psnr(b, a)
        assert math.isfinite(d1_psnr(a, b)) == (not a.same_geometry(b))

import json

import numpy as np
import pytest
from PIL import Image

from eraserkit.clients import StubFeatureExtractor
from eraserkit.errors import DegenerateImage, ExtractorUnavailable, ShapeMismatch
from eraserkit.metrics import (
    MetricsReport,
    PairMetrics,
    _gaussian_window,
    _luma,
    evaluate,
    fid,
    lpips,
    psnr,
    resize_pad_512,
    ssim,
)


def ssim_bruteforce(a, b):
    """Per-window loop over the Wang-style formulation (valid region)."""
    x = _luma(a)
    y = _luma(b)
    win = _gaussian_window()
    c1 = (0.01 * 255.0) ** 2
    c2 = (0.03 * 255.0) ** 2
    h, w = x.shape
    values = []
    for i in range(h - 10):
        for j in range(w - 10):
            px = x[i : i + 11, j : j + 11]
            py = y[i : i + 11, j : j + 11]
            mx = (px * win).sum()
            my = (py * win).sum()
            vx = (px * px * win).sum() - mx * mx
            vy = (py * py * win).sum() - my * my
            vxy = (px * py * win).sum() - mx * my
            values.append(
                ((2 * mx * my + c1) * (2 * vxy + c2))
                / ((mx * mx + my * my + c1) * (vx + vy + c2))
            )
    return float(np.mean(values))


class TestResizePad:
    def test_square_identity(self):
        img = np.random.default_rng(0).integers(0, 255, (512, 512, 3)).astype(np.uint8)
        out = resize_pad_512(img)
        assert np.array_equal(out, img)

    def test_1024x768(self):
        img = np.full((768, 1024, 3), 200, dtype=np.uint8)
        out = resize_pad_512(img)
        assert out.shape == (512, 512, 3)
        # content 384 rows, 64 pad rows each side
        assert (out[:64] == 0).all() and (out[-64:] == 0).all()
        assert (out[64:448] == 200).all()

    def test_2000x500(self):
        img = np.full((500, 2000, 3), 77, dtype=np.uint8)
        out = resize_pad_512(img)
        assert out.shape == (512, 512, 3)
        content_rows = np.flatnonzero(out.any(axis=(1, 2)))
        assert len(content_rows) == 128
        pad_total = 512 - 128
        assert pad_total == 384
        # even split: 192 top, 192 bottom
        assert content_rows[0] == 192 and content_rows[-1] == 319

    def test_odd_pad_goes_bottom(self):
        img = np.full((255, 512, 3), 10, dtype=np.uint8)  # resizes to 255 rows
        out = resize_pad_512(img)
        rows = np.flatnonzero(out.any(axis=(1, 2)))
        top_pad = rows[0]
        bottom_pad = 512 - 1 - rows[-1]
        assert top_pad + bottom_pad + len(rows) == 512
        assert bottom_pad == top_pad + 1  # leftover line lands at the bottom

    def test_aspect_ratio_preserved_within_rounding(self):
        rng = np.random.default_rng(1)
        for _ in range(10):
            h = int(rng.integers(20, 900))
            w = int(rng.integers(20, 900))
            out = resize_pad_512(np.full((h, w, 3), 50, np.uint8))
            rows = np.flatnonzero(out.any(axis=(1, 2)))
            cols = np.flatnonzero(out.any(axis=(0, 2)))
            ch, cw = len(rows), len(cols)
            assert max(ch, cw) == 512
            assert abs(ch / cw - h / w) <= (1 / min(ch, cw)) * (ch / cw) + 1e-6

    def test_nonsquare_always_padded(self):
        out = resize_pad_512(np.full((100, 200, 3), 9, np.uint8))
        assert (out == 0).any()

    def test_degenerate_rejected(self):
        with pytest.raises(DegenerateImage):
            resize_pad_512(np.zeros((0, 10, 3), np.uint8))


class TestPsnr:
    def test_identical_capped(self):
        img = np.random.default_rng(0).integers(0, 255, (8, 8, 3)).astype(np.uint8)
        assert psnr(img, img) == 100.0

    def test_uniform_diff_16(self):
        a = np.full((32, 32, 3), 100, dtype=np.uint8)
        b = np.full((32, 32, 3), 116, dtype=np.uint8)
        expected = 10 * np.log10(255**2 / 256)  # direct formula oracle
        assert abs(psnr(a, b) - expected) < 1e-3

    def test_max_error_zero_db(self):
        a = np.zeros((4, 4, 3), np.uint8)
        b = np.full((4, 4, 3), 255, np.uint8)
        assert psnr(a, b) == pytest.approx(0.0)

    def test_strictly_decreasing_in_noise_amplitude(self):
        rng = np.random.default_rng(2)
        base = rng.integers(60, 190, (16, 16, 3)).astype(np.float64)
        noise = rng.normal(0, 1, base.shape)
        values = [
            psnr(base, np.clip(base + amp * noise, 0, 255))
            for amp in (2, 4, 8, 16, 32)
        ]
        assert all(b < a for a, b in zip(values, values[1:]))

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            psnr(np.zeros((2, 2, 3)), np.zeros((3, 3, 3)))


class TestSsim:
    def test_self_similarity(self):
        img = np.random.default_rng(3).integers(0, 255, (24, 24, 3)).astype(np.uint8)
        assert ssim(img, img) == pytest.approx(1.0)

    def test_symmetry(self):
        rng = np.random.default_rng(4)
        a = rng.integers(0, 255, (20, 20, 3)).astype(np.uint8)
        b = rng.integers(0, 255, (20, 20, 3)).astype(np.uint8)
        assert ssim(a, b) == pytest.approx(ssim(b, a), abs=1e-12)

    def test_constant_shift_matches_bruteforce(self):
        a = np.full((16, 16, 3), 60, dtype=np.uint8)
        b = np.full((16, 16, 3), 188, dtype=np.uint8)
        assert ssim(a, b) == pytest.approx(ssim_bruteforce(a, b), abs=1e-12)

    def test_random_images_match_bruteforce(self):
        rng = np.random.default_rng(5)
        a = rng.integers(0, 255, (14, 17, 3)).astype(np.uint8)
        b = (a.astype(int) + rng.integers(-40, 40, a.shape)).clip(0, 255).astype(np.uint8)
        assert ssim(a, b) == pytest.approx(ssim_bruteforce(a, b), abs=1e-10)

    def test_inverted_high_contrast_below_half(self):
        tile = np.zeros((16, 16, 3), np.uint8)
        tile[::2] = 255  # stripes
        inverted = 255 - tile
        assert ssim(tile, inverted) < 0.5


class TestLpips:
    def test_self_distance_zero(self):
        img = np.random.default_rng(6).integers(0, 255, (8, 8, 3)).astype(np.uint8)
        assert lpips(img, img, StubFeatureExtractor()) < 1e-6

    def test_symmetry(self):
        rng = np.random.default_rng(7)
        a = rng.integers(0, 255, (8, 8, 3)).astype(np.uint8)
        b = rng.integers(0, 255, (8, 8, 3)).astype(np.uint8)
        fx = StubFeatureExtractor()
        assert abs(lpips(a, b, fx) - lpips(b, a, fx)) < 1e-6

    def test_stub_pass_through(self):
        a = np.zeros((4, 4, 3), np.uint8)
        b = np.full((4, 4, 3), 51, np.uint8)
        # the stub reports mean absolute diff / 255
        assert lpips(a, b, StubFeatureExtractor()) == pytest.approx(51 / 255)

    def test_missing_extractor(self):
        with pytest.raises(ExtractorUnavailable):
            lpips(np.zeros((2, 2, 3)), np.zeros((2, 2, 3)), None)


class TestFid:
    def test_identical_sets_zero(self):
        rng = np.random.default_rng(8)
        feats = rng.normal(size=(64, 12))
        assert fid(feats, feats) < 1e-6

    def test_symmetry(self):
        rng = np.random.default_rng(9)
        a = rng.normal(size=(50, 6))
        b = rng.normal(1.0, 1.3, size=(60, 6))
        assert fid(a, b) == pytest.approx(fid(b, a), rel=1e-9)

    def test_1d_gaussians_analytic(self):
        # N(0,1) vs N(1,1): squared mean gap 1, equal variances -> FID ~ 1
        rng = np.random.default_rng(10)
        a = rng.normal(0.0, 1.0, (100_000, 1))
        b = rng.normal(1.0, 1.0, (100_000, 1))
        assert fid(a, b) == pytest.approx(1.0, abs=0.05)

    def test_diagonal_covariance_closed_form(self):
        # independent dims: FID = sum_d (mu_a-mu_b)^2 + (s_a-s_b)^2
        rng = np.random.default_rng(11)
        mu_a, mu_b = np.array([0.0, 2.0]), np.array([1.0, -1.0])
        sd_a, sd_b = np.array([1.0, 0.5]), np.array([2.0, 1.5])
        n = 200_000
        a = rng.normal(mu_a, sd_a, (n, 2))
        b = rng.normal(mu_b, sd_b, (n, 2))
        expected = np.sum((mu_a - mu_b) ** 2 + (sd_a - sd_b) ** 2)
        assert fid(a, b) == pytest.approx(expected, rel=0.02)

    def test_near_singular_covariance_clamped(self):
        # a constant dimension keeps the sqrt finite via the eigen floor
        rng = np.random.default_rng(12)
        a = np.hstack([rng.normal(size=(40, 2)), np.zeros((40, 1))])
        b = np.hstack([rng.normal(size=(40, 2)), np.zeros((40, 1))])
        value = fid(a, b)
        assert np.isfinite(value) and value >= 0

    def test_too_few_samples(self):
        with pytest.raises(ValueError):
            fid(np.zeros((1, 3)), np.zeros((5, 3)))


class TestEvaluate:
    def _write(self, directory, name, arr):
        directory.mkdir(parents=True, exist_ok=True)
        Image.fromarray(arr).save(directory / f"{name}.png")

    def _toy_pairs(self, tmp_path, n=4, shuffle=False):
        rng = np.random.default_rng(13)
        res, ref = tmp_path / "results", tmp_path / "refs"
        arrays = [
            rng.integers(0, 255, (64, 48, 3)).astype(np.uint8) for _ in range(n)
        ]
        for i, arr in enumerate(arrays):
            noisy = np.clip(
                arr.astype(int) + rng.integers(-20, 20, arr.shape), 0, 255
            ).astype(np.uint8)
            self._write(res, f"img{i}", noisy)
            target = arrays[(i + 1) % n] if shuffle else arr
            self._write(ref, f"img{i}", target)
        return res, ref

    def test_identical_pair(self, tmp_path):
        img = np.random.default_rng(14).integers(0, 255, (32, 32, 3)).astype(np.uint8)
        self._write(tmp_path / "a", "x", img)
        self._write(tmp_path / "b", "x", img)
        report = evaluate(tmp_path / "a", tmp_path / "b", StubFeatureExtractor())
        assert report.pairs[0].psnr == 100.0
        assert report.pairs[0].ssim == pytest.approx(1.0)

    def test_aggregate_means_equal_hand_computed(self, tmp_path):
        res, ref = self._toy_pairs(tmp_path, n=10)
        report = evaluate(res, ref, StubFeatureExtractor())
        for key in ("psnr", "ssim", "lpips"):
            values = [getattr(p, key) for p in report.pairs]
            assert report.aggregate[key] == pytest.approx(
                sum(values) / len(values), abs=1e-12
            )

    def test_shuffled_pairing_differs(self, tmp_path):
        res, ref = self._toy_pairs(tmp_path, n=4)
        res_s, ref_s = self._toy_pairs(tmp_path / "s", n=4, shuffle=True)
        aligned = evaluate(res, ref, StubFeatureExtractor())
        shuffled = evaluate(res_s, ref_s, StubFeatureExtractor())
        assert aligned.aggregate["psnr"] != shuffled.aggregate["psnr"]

    def test_missing_pairs_listed_and_continues(self, tmp_path):
        res, ref = self._toy_pairs(tmp_path, n=3)
        extra = np.zeros((16, 16, 3), np.uint8)
        self._write(res, "only_in_results", extra)
        report = evaluate(res, ref, StubFeatureExtractor())
        assert len(report.pairs) == 3
        assert {"id": "only_in_results", "missing_in": "references"} in report.missing

    def test_report_files_written(self, tmp_path):
        res, ref = self._toy_pairs(tmp_path, n=2)
        out = tmp_path / "report.json"
        report = evaluate(res, ref, StubFeatureExtractor(), out_path=out)
        doc = json.loads(out.read_text())
        assert doc["aggregate"]["psnr"] == pytest.approx(report.aggregate["psnr"])
        assert doc["config_hash"] == report.config_hash
        table = out.with_suffix(".txt").read_text()
        assert "psnr_db" in table and "fid" in table

    def test_aggregate_invariant_enforced(self):
        with pytest.raises(ValueError):
            MetricsReport(
                pairs=[PairMetrics(id="a", psnr=10.0, ssim=0.5, lpips=0.1)],
                aggregate={"psnr": 11.0, "ssim": 0.5, "lpips": 0.1, "fid": 0.0},
            )

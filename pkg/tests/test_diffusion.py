import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from eraserkit.clients import IdentityInpainter, MeanFillInpainter, ToyVae
from eraserkit.diffusion import (
    ConditioningBundle,
    LatentState,
    assemble_unet_input,
    build_schedule,
    content_initialize,
    denoise_loop,
    forward_noise,
    predict_z0,
    steps_from_strength,
)
from eraserkit.errors import (
    DenoiserFailure,
    InvalidSchedule,
    InvalidStrength,
    ShapeMismatch,
)


def direct_product_alpha_bars(betas):
    """Independent oracle: plain running product, no vectorization."""
    out = []
    acc = 1.0
    for b in betas:
        acc *= 1.0 - b
        out.append(acc)
    return np.array(out)


class TestBuildSchedule:
    def test_single_step(self):
        sched = build_schedule(1, 0.1, 0.1)
        assert sched.alpha_bars[0] == pytest.approx(0.9)

    def test_three_step_product(self):
        sched = build_schedule(3, 0.1, 0.3)
        assert np.allclose(sched.betas, [0.1, 0.2, 0.3])
        assert sched.alpha_bars[2] == pytest.approx(0.9 * 0.8 * 0.7)

    def test_default_range_monotone(self):
        sched = build_schedule(1000)
        oracle = direct_product_alpha_bars(sched.betas)
        assert np.max(np.abs(sched.alpha_bars - oracle) / oracle) < 1e-12
        assert np.all(np.diff(sched.alpha_bars) < 0)
        assert sched.alpha_bars[-1] < 0.05

    def test_scaled_linear(self):
        sched = build_schedule(10, 0.00085, 0.012, kind="scaled_linear")
        roots = np.sqrt(sched.betas)
        assert np.allclose(np.diff(roots), np.diff(roots)[0])

    @pytest.mark.parametrize(
        "T,lo,hi",
        [(0, 0.1, 0.2), (5, 0.0, 0.2), (5, 0.3, 0.2), (5, 0.1, 1.0)],
    )
    def test_invalid_bounds(self, T, lo, hi):
        with pytest.raises(InvalidSchedule):
            build_schedule(T, lo, hi)

    def test_tampered_alpha_bars_rejected(self):
        sched = build_schedule(5, 0.1, 0.3)
        bad = sched.alpha_bars.copy()
        bad[2] *= 1.0 + 1e-6
        from eraserkit.diffusion import NoiseSchedule

        with pytest.raises(InvalidSchedule):
            NoiseSchedule(T=5, betas=sched.betas, alphas=sched.alphas, alpha_bars=bad)

    def test_running_product_invariant_random_ranges(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            lo = rng.uniform(1e-5, 0.01)
            hi = rng.uniform(lo, 0.5)
            sched = build_schedule(int(rng.integers(1, 200)), lo, hi)
            oracle = direct_product_alpha_bars(sched.betas)
            assert np.allclose(sched.alpha_bars, oracle, rtol=1e-12)


class TestForwardNoise:
    def _state(self, value=1.0, shape=(2, 2, 4)):
        return LatentState(z=np.full(shape, value), t=0)

    def test_zero_noise(self):
        sched = build_schedule(4, 0.1, 0.4)
        z = self._state(2.0)
        out = forward_noise(z, 3, sched, np.zeros_like(z.z))
        assert np.allclose(out.z, np.sqrt(sched.alpha_bars[2]) * 2.0)
        assert out.t == 3

    def test_alpha_bar_to_zero_limit(self):
        sched = build_schedule(60, 0.3, 0.9)  # aggressive: abar_T ~ 0
        z = self._state(5.0)
        eps = np.random.default_rng(0).normal(size=z.z.shape)
        out = forward_noise(z, 60, sched, eps)
        assert np.allclose(out.z, eps, atol=1e-4)

    def test_scalar_arithmetic(self):
        # abar = 0.64: sqrt terms 0.8 / 0.6
        sched = build_schedule(1, 0.36, 0.36)
        z = LatentState(z=np.full((1, 1, 4), 1.0), t=0)
        out = forward_noise(z, 1, sched, np.full((1, 1, 4), 0.5))
        assert np.allclose(out.z, 0.8 * 1.0 + 0.6 * 0.5)

    def test_shape_mismatch(self):
        sched = build_schedule(2, 0.1, 0.2)
        with pytest.raises(ShapeMismatch):
            forward_noise(self._state(), 1, sched, np.zeros((3, 3, 4)))

    @given(st.floats(-4, 4).filter(lambda a: abs(a) > 1e-3))
    @settings(max_examples=25, deadline=None)
    def test_linearity(self, a):
        sched = build_schedule(5, 0.05, 0.2)
        rng = np.random.default_rng(7)
        z = rng.normal(size=(2, 2, 4))
        eps = rng.normal(size=(2, 2, 4))
        lhs = forward_noise(LatentState(z=a * z, t=0), 4, sched, a * eps).z
        rhs = a * forward_noise(LatentState(z=z, t=0), 4, sched, eps).z
        assert np.allclose(lhs, rhs, rtol=1e-10, atol=1e-10)

    def test_mean_variance_match_closed_form_and_chain(self):
        # pooled statistics over injected draws vs both routes of the math
        sched = build_schedule(10, 0.05, 0.3)
        t_prime = 7
        rng = np.random.default_rng(11)
        z0 = rng.normal(size=(2, 2, 4))
        n = 4000
        draws = rng.normal(size=(n,) + z0.shape)
        closed = np.stack(
            [forward_noise(LatentState(z=z0, t=0), t_prime, sched, e).z for e in draws]
        )
        abar = sched.alpha_bars[t_prime - 1]
        resid = (closed - np.sqrt(abar) * z0) / np.sqrt(1 - abar)
        pooled = resid.reshape(n, -1)
        se_mean = 1.0 / np.sqrt(pooled.size)
        assert abs(pooled.mean()) < 3 * se_mean
        se_var = np.sqrt(2.0 / (pooled.size - 1))
        assert abs(pooled.var() - 1.0) < 3 * se_var

        # per-step chain: z_t = sqrt(alpha_t) z_{t-1} + sqrt(beta_t) eps_t
        chain_rng = np.random.default_rng(13)
        chain = np.empty((n,) + z0.shape)
        for i in range(n):
            z = z0.copy()
            for step in range(t_prime):
                e = chain_rng.normal(size=z0.shape)
                z = np.sqrt(sched.alphas[step]) * z + np.sqrt(sched.betas[step]) * e
            chain[i] = z
        resid_c = (chain - np.sqrt(abar) * z0) / np.sqrt(1 - abar)
        pooled_c = resid_c.reshape(n, -1)
        assert abs(pooled_c.mean()) < 3 * se_mean
        assert abs(pooled_c.var() - 1.0) < 3 * se_var


class TestStepsFromStrength:
    def test_full_strength(self):
        assert steps_from_strength(50, 1.0) == 50

    def test_shipped_default(self):
        assert steps_from_strength(50, 0.9) == 45

    def test_clamp_to_one(self):
        assert steps_from_strength(10, 0.05) == 1

    @pytest.mark.parametrize("s", [0.0, -0.5, 1.5])
    def test_invalid(self, s):
        with pytest.raises(InvalidStrength):
            steps_from_strength(10, s)

    @given(st.integers(1, 500))
    @settings(max_examples=30, deadline=None)
    def test_monotone_in_strength(self, T):
        values = [steps_from_strength(T, s) for s in np.linspace(0.01, 1.0, 40)]
        assert all(b >= a for a, b in zip(values, values[1:]))


class TestAssemble:
    def _inputs(self, h=2, w=2, seed=0):
        rng = np.random.default_rng(seed)
        z = LatentState(z=rng.normal(size=(h, w, 4)), t=1)
        cond = ConditioningBundle(
            z_masked=rng.normal(size=(h, w, 4)),
            mask=(rng.random((h, w)) < 0.5).astype(float),
            text_embedding=rng.normal(size=(3, 8)),
        )
        return z, cond

    def test_channel_slices_recover_inputs(self):
        z, cond = self._inputs()
        x = assemble_unet_input(z, cond)
        assert x.shape == (2, 2, 9)
        assert np.array_equal(x[:, :, :4], z.z)
        assert np.array_equal(x[:, :, 4:8], cond.z_masked)
        assert np.array_equal(x[:, :, 8], cond.mask)

    def test_element_by_element(self):
        z, cond = self._inputs(seed=5)
        x = assemble_unet_input(z, cond)
        for i in range(2):
            for j in range(2):
                for c in range(9):
                    if c < 4:
                        expected = z.z[i, j, c]
                    elif c < 8:
                        expected = cond.z_masked[i, j, c - 4]
                    else:
                        expected = cond.mask[i, j]
                    assert x[i, j, c] == expected

    def test_shape_mismatch(self):
        z, cond = self._inputs()
        bad = LatentState(z=np.zeros((3, 3, 4)), t=0)
        with pytest.raises(ShapeMismatch):
            assemble_unet_input(bad, cond)


class TestDenoiseLoop:
    def _cond(self, h, w, seed=0):
        rng = np.random.default_rng(seed)
        return ConditioningBundle(
            z_masked=rng.normal(size=(h, w, 4)),
            mask=np.zeros((h, w)),
            text_embedding=rng.normal(size=(2, 8)),
        )

    def test_degenerate_zero_steps(self):
        sched = build_schedule(5, 0.1, 0.2)
        z = LatentState(z=np.ones((2, 2, 4)), t=0)
        out = denoise_loop(z, self._cond(2, 2), sched, denoiser=None)
        assert out is z

    def test_perfect_denoiser_recovers_z0(self):
        sched = build_schedule(8, 0.05, 0.3)
        rng = np.random.default_rng(2)
        z0 = rng.normal(size=(2, 2, 4))
        eps = rng.normal(size=(2, 2, 4))
        noisy = forward_noise(LatentState(z=z0, t=0), 1, sched, eps)

        def perfect(x9, t, emb, attn_hook=None):
            return eps

        out = denoise_loop(noisy, self._cond(2, 2), sched, perfect)
        assert out.t == 0
        assert np.max(np.abs(out.z - z0)) < 1e-5

    def test_perfect_denoiser_recovers_z0_multi_step(self):
        # algebraic inversion of the closed form holds at every abar_{t-1}
        sched = build_schedule(8, 0.05, 0.3)
        rng = np.random.default_rng(3)
        z0 = rng.normal(size=(2, 2, 4))
        eps = rng.normal(size=(2, 2, 4))
        noisy = forward_noise(LatentState(z=z0, t=0), 6, sched, eps)
        out = denoise_loop(noisy, self._cond(2, 2), sched, lambda *a, **k: eps)
        assert np.max(np.abs(out.z - z0)) < 1e-5

    def test_bit_identical_repeats(self):
        sched = build_schedule(6, 0.1, 0.3)
        rng = np.random.default_rng(4)
        z_init = LatentState(z=rng.normal(size=(2, 2, 4)), t=6)
        cond = self._cond(2, 2, seed=4)

        def denoiser(x9, t, emb, attn_hook=None):
            return np.tanh(x9[:, :, :4]) * 0.1 + x9[:, :, 4:8] * 0.01

        a = denoise_loop(z_init, cond, sched, denoiser)
        b = denoise_loop(z_init, cond, sched, denoiser)
        assert np.array_equal(a.z, b.z)

    def test_denoiser_failure_carries_step(self):
        sched = build_schedule(5, 0.1, 0.2)
        z_init = LatentState(z=np.ones((2, 2, 4)), t=3)

        def broken(x9, t, emb, attn_hook=None):
            if t == 2:
                raise RuntimeError("boom")
            return np.zeros((2, 2, 4))

        with pytest.raises(DenoiserFailure) as err:
            denoise_loop(z_init, self._cond(2, 2), sched, broken)
        assert err.value.step == 2

    def test_predict_z0_inverts_forward(self):
        sched = build_schedule(9, 0.02, 0.3)
        rng = np.random.default_rng(5)
        z0 = rng.normal(size=(3, 3, 4))
        eps = rng.normal(size=(3, 3, 4))
        zt = forward_noise(LatentState(z=z0, t=0), 5, sched, eps)
        assert np.allclose(predict_z0(zt.z, 5, sched, eps), z0)


class TestContentInitialize:
    def test_empty_mask_bypasses_inpainter(self):
        calls = []

        class Recorder:
            def inpaint(self, image, mask):
                calls.append(1)
                return image

        vae = ToyVae()
        img = np.full((16, 16, 3), 100, dtype=np.uint8)
        out = content_initialize(img, np.zeros((16, 16)), Recorder(), vae)
        assert calls == []
        assert np.allclose(out.z, vae.encode(img))
        assert out.t == 0

    def test_identity_inpainter(self):
        vae = ToyVae()
        rng = np.random.default_rng(0)
        img = rng.integers(0, 255, (16, 16, 3)).astype(np.uint8)
        mask = np.zeros((16, 16))
        mask[4:8, 4:8] = 1
        out = content_initialize(img, mask, IdentityInpainter(), vae)
        assert np.allclose(out.z, vae.encode(img))

    def test_mean_fill_checkerboard(self):
        # oracle: recompute the mean fill in pixel space
        img = np.zeros((16, 16, 3), dtype=np.uint8)
        img[::2, ::2] = 255
        img[1::2, 1::2] = 255
        mask = np.zeros((16, 16))
        mask[6:10, 6:10] = 1

        vae = ToyVae()
        out = content_initialize(img, mask, MeanFillInpainter(), vae)

        keep = mask == 0
        expected_fill = img[keep].mean(axis=0)
        pre = img.astype(np.float64).copy()
        pre[mask == 1] = expected_fill.astype(np.uint8)  # inpainter casts to uint8
        assert np.allclose(out.z, vae.encode(pre))

# # The evaluation harness
#
# Results and references are compared at 512x512: the long side is
# bilinearly mapped to 512 and the short side zero-padded. PSNR and SSIM
# are computed in-repo; LPIPS and FID features come from an injected
# client (here the deterministic stub).

import numpy as np

from eraserkit.clients import StubFeatureExtractor
from eraserkit.metrics import fid, lpips, psnr, resize_pad_512, ssim

rng = np.random.default_rng(0)
fx = StubFeatureExtractor()

# Geometry: three aspect ratios through the resize/pad rule.

for h, w in ((512, 512), (768, 1024), (500, 2000)):
    out = resize_pad_512(np.full((h, w, 3), 150, np.uint8))
    rows = np.flatnonzero(out.any(axis=(1, 2)))
    cols = np.flatnonzero(out.any(axis=(0, 2)))
    print(f"{h:4d}x{w:<4d} -> content {len(rows)}x{len(cols)}, "
          f"pad rows {512 - len(rows)}, pad cols {512 - len(cols)}")

# Pairwise metrics under increasing uniform noise: PSNR falls, SSIM falls,
# the stub LPIPS (mean absolute difference) rises.

base = rng.integers(40, 210, (128, 128, 3)).astype(np.float64)
print("\namp   psnr_db   ssim    lpips")
for amp in (2, 8, 32):
    noisy = np.clip(base + rng.normal(0, amp, base.shape), 0, 255)
    print(f"{amp:3d}  {psnr(base, noisy):7.2f}  {ssim(base, noisy):6.4f}"
          f"  {lpips(base, noisy, fx):6.4f}")

# FID on feature sets: identical sets are at 0; unit mean separation in
# 1-D lands near 1; growing covariance mismatch grows the distance.

feats = rng.normal(size=(4000, 8))
print("\nfid(X, X)          = %.2e" % fid(feats, feats))
a = rng.normal(0.0, 1.0, (50_000, 1))
b = rng.normal(1.0, 1.0, (50_000, 1))
print("fid(N(0,1), N(1,1)) = %.3f (analytic 1.0)" % fid(a, b))
for sigma in (1.5, 2.0, 3.0):
    c = rng.normal(0.0, sigma, (50_000, 1))
    print(f"fid(N(0,1), N(0,{sigma})) = {fid(a, c):.3f} "
          f"(analytic {(1 - sigma) ** 2:.3f})")

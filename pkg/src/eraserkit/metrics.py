"""Evaluation protocol: geometry normalization and the four metrics.

Images are compared after mapping the long side to 512 with bilinear
resampling and zero-padding the short side to square (both images of a
pair get identical padding, so padded rows contribute identically).

    psnr = 10 log10(255^2 / MSE)            capped at 100 dB
    ssim = mean local SSIM, 11x11 Gaussian window (sigma 1.5) on luma,
           C1 = (0.01*255)^2, C2 = (0.03*255)^2
    lpips = delegated to the injected perceptual client
    fid  = ||mu_a - mu_b||^2 + Tr(Sa + Sb - 2 (Sa Sb)^{1/2})

The FID matrix square root uses the symmetric form
(Sa^{1/2} Sb Sa^{1/2})^{1/2} via eigendecomposition with eigenvalues
floored at 1e-10, which keeps near-singular covariances finite.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image
from scipy.signal import fftconvolve

from .errors import DegenerateImage, ExtractorUnavailable, ShapeMismatch

PSNR_CAP_DB = 100.0
TARGET_SIDE = 512
EIGENVALUE_FLOOR = 1e-10

_SSIM_C1 = (0.01 * 255.0) ** 2
_SSIM_C2 = (0.03 * 255.0) ** 2


def resize_pad_512(image: np.ndarray) -> np.ndarray:
    """Long side to 512 (bilinear), aspect preserved, zero-pad to square.

    The pad splits evenly; an odd leftover line goes to the bottom/right.
    """
    arr = np.asarray(image)
    if arr.ndim == 2:
        arr = arr[:, :, None].repeat(3, axis=2)
    h, w = arr.shape[:2]
    if h == 0 or w == 0:
        raise DegenerateImage(f"zero-sized image {h}x{w}")
    scale = TARGET_SIDE / max(h, w)
    new_h = TARGET_SIDE if h >= w else max(1, round(h * scale))
    new_w = TARGET_SIDE if w >= h else max(1, round(w * scale))
    resized = np.array(
        Image.fromarray(arr.astype(np.uint8)).resize((new_w, new_h), Image.BILINEAR)
    )
    pad_h = TARGET_SIDE - new_h
    pad_w = TARGET_SIDE - new_w
    top, left = pad_h // 2, pad_w // 2
    return np.pad(
        resized,
        ((top, pad_h - top), (left, pad_w - left), (0, 0)),
    )


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak-255 PSNR in dB; identical images report the 100 dB cap."""
    pa = np.asarray(a, dtype=np.float64)
    pb = np.asarray(b, dtype=np.float64)
    if pa.shape != pb.shape:
        raise ShapeMismatch(f"psnr inputs {pa.shape} vs {pb.shape}")
    mse = np.mean((pa - pb) ** 2)
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 10.0 * np.log10(255.0**2 / mse))


def _luma(img: np.ndarray) -> np.ndarray:
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim == 2:
        return arr
    return arr[..., 0] * 0.299 + arr[..., 1] * 0.587 + arr[..., 2] * 0.114


def _gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    half = (size - 1) / 2
    coords = np.arange(size) - half
    g = np.exp(-(coords**2) / (2 * sigma**2))
    kernel = np.outer(g, g)
    return kernel / kernel.sum()


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Mean local SSIM over valid 11x11 Gaussian windows on luma."""
    if np.asarray(a).shape != np.asarray(b).shape:
        raise ShapeMismatch(f"ssim inputs {np.asarray(a).shape} vs {np.asarray(b).shape}")
    x = _luma(a)
    y = _luma(b)
    if min(x.shape) < 11:
        raise ShapeMismatch("ssim needs at least 11 pixels per side")
    win = _gaussian_window()
    mu_x = fftconvolve(x, win, mode="valid")
    mu_y = fftconvolve(y, win, mode="valid")
    xx = fftconvolve(x * x, win, mode="valid") - mu_x**2
    yy = fftconvolve(y * y, win, mode="valid") - mu_y**2
    xy = fftconvolve(x * y, win, mode="valid") - mu_x * mu_y
    num = (2 * mu_x * mu_y + _SSIM_C1) * (2 * xy + _SSIM_C2)
    den = (mu_x**2 + mu_y**2 + _SSIM_C1) * (xx + yy + _SSIM_C2)
    return float(np.mean(num / den))


def lpips(a: np.ndarray, b: np.ndarray, fx) -> float:
    """Perceptual distance, delegated to the injected client."""
    if fx is None:
        raise ExtractorUnavailable("no feature extractor client")
    try:
        return float(fx.perceptual_distance(a, b))
    except ExtractorUnavailable:
        raise
    except Exception as exc:
        raise ExtractorUnavailable(str(exc)) from exc


def _sqrtm_psd(mat: np.ndarray) -> np.ndarray:
    sym = (mat + mat.T) / 2.0
    vals, vecs = np.linalg.eigh(sym)
    vals = np.maximum(vals, EIGENVALUE_FLOOR)
    return (vecs * np.sqrt(vals)) @ vecs.T


def fid(features_a: np.ndarray, features_b: np.ndarray) -> float:
    """Frechet distance between Gaussian fits of two feature sets."""
    fa = np.atleast_2d(np.asarray(features_a, dtype=np.float64))
    fb = np.atleast_2d(np.asarray(features_b, dtype=np.float64))
    if fa.shape[0] < 2 or fb.shape[0] < 2:
        raise ValueError("fid needs at least 2 samples per set")
    if fa.shape[1] != fb.shape[1]:
        raise ShapeMismatch(f"feature dims differ: {fa.shape[1]} vs {fb.shape[1]}")
    mu_a, mu_b = fa.mean(axis=0), fb.mean(axis=0)
    cov_a = np.atleast_2d(np.cov(fa, rowvar=False))
    cov_b = np.atleast_2d(np.cov(fb, rowvar=False))
    sqrt_a = _sqrtm_psd(cov_a)
    cross = _sqrtm_psd(sqrt_a @ cov_b @ sqrt_a)
    value = float(
        np.sum((mu_a - mu_b) ** 2) + np.trace(cov_a + cov_b - 2.0 * cross)
    )
    return max(0.0, value)


# ---------------------------------------------------------------------------
# directory evaluation


@dataclass
class PairMetrics:
    id: str
    psnr: float
    ssim: float
    lpips: float


@dataclass
class MetricsReport:
    pairs: list[PairMetrics]
    aggregate: dict
    missing: list[dict] = field(default_factory=list)
    dataset_id: str = ""
    config_hash: str = ""
    clients: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.pairs:
            for key in ("psnr", "ssim", "lpips"):
                mean = float(np.mean([getattr(p, key) for p in self.pairs]))
                if abs(mean - self.aggregate[key]) > 1e-9:
                    raise ValueError(f"aggregate {key} is not the mean of pairs")

    def to_json(self) -> dict:
        return {
            "pairs": [vars(p) for p in self.pairs],
            "aggregate": self.aggregate,
            "missing": self.missing,
            "dataset_id": self.dataset_id,
            "config_hash": self.config_hash,
            "clients": self.clients,
        }


def _image_ids(directory: Path) -> dict[str, Path]:
    return {
        p.stem: p
        for p in sorted(directory.iterdir())
        if p.suffix.lower() in (".png", ".jpg", ".jpeg", ".bmp")
    }


def _text_table(report: MetricsReport) -> str:
    rows = [("id", "psnr_db", "ssim", "lpips")]
    for p in report.pairs:
        rows.append((p.id, f"{p.psnr:.3f}", f"{p.ssim:.4f}", f"{p.lpips:.4f}"))
    agg = report.aggregate
    rows.append(
        (
            "mean",
            f"{agg['psnr']:.3f}",
            f"{agg['ssim']:.4f}",
            f"{agg['lpips']:.4f}",
        )
    )
    rows.append(("fid", f"{agg['fid']:.4f}", "", ""))
    widths = [max(len(r[i]) for r in rows) for i in range(4)]
    lines = ["  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)) for row in rows]
    return "\n".join(lines) + "\n"


def evaluate(results_dir, references_dir, fx, out_path=None) -> MetricsReport:
    """Pairwise metrics over two directories matched by filename stem.

    Unmatched ids are listed in the report and evaluation continues.
    Writes ``out_path`` (JSON) and a sibling .txt table when requested.
    """
    results = _image_ids(Path(results_dir))
    references = _image_ids(Path(references_dir))
    missing = [
        {"id": rid, "missing_in": "references"}
        for rid in sorted(set(results) - set(references))
    ] + [
        {"id": rid, "missing_in": "results"}
        for rid in sorted(set(references) - set(results))
    ]
    shared = sorted(set(results) & set(references))

    pairs = []
    res_images, ref_images = [], []
    for rid in shared:
        res = resize_pad_512(np.array(Image.open(results[rid]).convert("RGB")))
        ref = resize_pad_512(np.array(Image.open(references[rid]).convert("RGB")))
        res_images.append(res)
        ref_images.append(ref)
        pairs.append(
            PairMetrics(
                id=rid,
                psnr=psnr(res, ref),
                ssim=ssim(res, ref),
                lpips=lpips(res, ref, fx),
            )
        )

    aggregate = {
        "psnr": float(np.mean([p.psnr for p in pairs])) if pairs else float("nan"),
        "ssim": float(np.mean([p.ssim for p in pairs])) if pairs else float("nan"),
        "lpips": float(np.mean([p.lpips for p in pairs])) if pairs else float("nan"),
    }
    if len(pairs) >= 2:
        try:
            aggregate["fid"] = fid(fx.embed(res_images), fx.embed(ref_images))
        except Exception as exc:
            raise ExtractorUnavailable(str(exc)) from exc
    else:
        aggregate["fid"] = float("nan")

    config = {
        "target_side": TARGET_SIDE,
        "psnr_cap_db": PSNR_CAP_DB,
        "extractor": type(fx).__name__,
    }
    report = MetricsReport(
        pairs=pairs,
        aggregate=aggregate,
        missing=missing,
        dataset_id=f"{Path(results_dir).name}_vs_{Path(references_dir).name}",
        config_hash=hashlib.sha256(
            json.dumps(config, sort_keys=True).encode()
        ).hexdigest(),
        clients={"feature_extractor": type(fx).__name__},
    )
    if out_path is not None:
        out = Path(out_path)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(json.dumps(report.to_json(), indent=1, sort_keys=True))
        out.with_suffix(".txt").write_text(_text_table(report))
    return report

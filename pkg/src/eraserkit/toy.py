"""Desk-scale denoiser and text encoder.

The toy denoiser is a 2-level convolutional encoder/decoder with a single
self-attention block at half resolution (16x16 for the nominal 32x32
latent), taking the 9-channel inpainting input. It exists to exercise
every contract of the real model at laptop cost: the 9-channel input,
text conditioning through a pooled embedding, the self-attention hook
the refocus module plugs into, and the attention projections LoRA
targets.

The frozen base weights are random but deliberately miscalibrated: conv
biases and the output bias are drawn wide, so the untrained model has a
strong systematic error for adapter training to correct. A well-centered
random init would leave the adapters nothing measurable to learn, which
would defeat the point of a training testbed.
"""

from __future__ import annotations

import numpy as np

from .autograd import Tensor, concat, conv2d, upsample_nearest2x

EMBED_WIDTH = 64
PLACEHOLDER_LITERAL = "R_*"

# words the desk-scale corpus and prompt templates can produce
_VOCAB_WORDS = [
    "<unk>", "<pad>", PLACEHOLDER_LITERAL,
    "a", "an", "the", "photo", "of", "and", "in", "on", "is", "are",
    "image", "describe", "with", "scene", "background", "scenery",
    "sky", "grass", "gravel", "beach", "sand", "water", "sea", "road",
    "snow", "rock", "dirt", "field", "forest", "wall", "floor", "mountain",
    "person", "sheep", "dog", "cat", "car", "boat", "bird", "cow", "horse",
    "green", "blue", "gray", "brown", "lush", "scattered", "throughout",
    "clear", "soft", "smooth", "wide", "open", "empty", "it", "this", "that",
]


class ToyTextEncoder:
    """Word-level embedding lookup with an injectable placeholder row.

    Same prompt always yields the same embedding matrix. The table is
    exposed so the trainer can swap in a learnable placeholder vector.
    """

    def __init__(self, seed: int = 0, embed_width: int = EMBED_WIDTH):
        rng = np.random.default_rng(seed)
        self.embed_width = embed_width
        self.vocab = {w.lower(): i for i, w in enumerate(_VOCAB_WORDS)}
        self.embedding_table = rng.normal(0.0, 1.0, (len(_VOCAB_WORDS), embed_width))
        self.placeholder_index = self.vocab[PLACEHOLDER_LITERAL.lower()]

    def tokenize(self, prompt: str) -> list[int]:
        ids = []
        for raw in prompt.split():
            word = raw.strip(".,;:!?\"'()").lower()
            if not word:
                continue
            ids.append(self.vocab.get(word, self.vocab["<unk>"]))
        if not ids:
            ids = [self.vocab["<pad>"]]
        return ids

    def encode(self, prompt: str) -> np.ndarray:
        """Prompt -> (n_tokens, embed_width) conditioning matrix."""
        return self.embedding_table[self.tokenize(prompt)].copy()

    def placeholder_positions(self, prompt: str) -> np.ndarray:
        ids = self.tokenize(prompt)
        return np.array([i for i, t in enumerate(ids) if t == self.placeholder_index])


def time_features(t: int, period: int = 1000) -> np.ndarray:
    """Fixed sinusoidal step-index features, 8-dim."""
    freqs = 2.0 ** np.arange(4)
    angle = 2.0 * np.pi * (t / period) * freqs
    return np.concatenate([np.sin(angle), np.cos(angle)])


# layer ids LoRA can target
ATTN_PROJECTIONS = ("attn.q", "attn.k", "attn.v", "attn.out")


class ToyDenoiser:
    """Frozen-weight eps-prediction network; see module docstring.

    forward() runs on the autograd tape so gradients reach whatever
    trainable Tensors the caller passed in (placeholder embedding inside
    ``text_emb``, LoRA factors in ``adapters``); the base weights are
    wrapped without requires_grad and never accumulate gradients.
    """

    def __init__(self, seed: int = 0, channels: int = 16, embed_width: int = EMBED_WIDTH):
        rng = np.random.default_rng(seed)
        c, c2 = channels, 2 * channels
        k = embed_width
        self.channels = channels
        self.embed_width = k

        def w(shape, std):
            return rng.normal(0.0, std, shape)

        he = lambda fan_in: np.sqrt(2.0 / fan_in)

        def film(std_text, std_time=0.02):
            # strong text conditioning, mild time conditioning: the step
            # index must not dominate the loss scale across drawn t
            block = w((k + 8, c2), std_text)
            block[k:] = w((8, c2), std_time)
            return block

        # wide biases and value/out gains are the deliberate miscalibration:
        # they give the frozen base a strong systematic error that adapter
        # training has the leverage to correct
        self.params: dict[str, np.ndarray] = {
            "conv_in.w": w((3, 3, 9, c), he(81)),
            "conv_in.b": w((c,), 4.0),
            "conv_down.w": w((3, 3, c, c2), he(9 * c)),
            "conv_down.b": w((c2,), 4.0),
            "film_scale.w": film(0.3),
            "film_scale.b": np.zeros(c2),
            "film_shift.w": film(0.3),
            "film_shift.b": np.zeros(c2),
            "attn.q": w((c2, c2), 1.0 / np.sqrt(c2)),
            "attn.k": w((c2, c2), 1.0 / np.sqrt(c2)),
            "attn.v": w((c2, c2), 1.5 / np.sqrt(c2)),
            "attn.out": w((c2, c2), 1.5 / np.sqrt(c2)),
            "conv_mid.w": w((3, 3, c2, c2), he(9 * c2)),
            "conv_mid.b": w((c2,), 4.0),
            "conv_up.w": w((3, 3, c2, c), he(9 * c2)),
            "conv_up.b": w((c,), 4.0),
            "conv_out.w": w((3, 3, c, 4), he(9 * c)),
            "conv_out.b": w((4,), 3.0),
        }

    def forward(
        self,
        x9,
        t: int,
        text_emb,
        adapters: dict | None = None,
        attn_hook=None,
    ) -> Tensor:
        """One sample (h, w, 9) -> predicted noise (h, w, 4), on the tape.

        h and w must be even. ``adapters`` maps a projection id from
        ATTN_PROJECTIONS to an object with ``down``/``up`` Tensors and a
        ``scale``; the effective weight is base + scale * (up @ down).
        ``attn_hook(raw_scores, (gh, gw))`` may return an additive logit
        matrix applied before the 1/sqrt(d) scaling.
        """
        p = {name: Tensor(arr) for name, arr in self.params.items()}
        x = x9 if isinstance(x9, Tensor) else Tensor(x9)
        emb = text_emb if isinstance(text_emb, Tensor) else Tensor(text_emb)
        h, w_dim, _ = x.shape
        if h % 2 or w_dim % 2:
            raise ValueError(f"spatial dims must be even, got {h}x{w_dim}")
        c2 = 2 * self.channels

        h0 = conv2d(x, p["conv_in.w"], p["conv_in.b"]).silu()
        h1 = conv2d(h0, p["conv_down.w"], p["conv_down.b"], stride=2).silu()

        # conditioning enters once, as a feature-wise affine at the bottleneck
        n_tokens = emb.shape[0]
        pooled = emb.mean_axis0() * float(n_tokens)  # sum pooling
        cond = concat([pooled, Tensor(time_features(t))], axis=0).reshape(1, -1)
        scale = cond.matmul(p["film_scale.w"]) + p["film_scale.b"]
        shift = cond.matmul(p["film_shift.w"]) + p["film_shift.b"]
        h1 = h1 * (scale + 1.0) + shift

        gh, gw = h1.shape[0], h1.shape[1]
        tokens = h1.reshape(gh * gw, c2)
        q = tokens.matmul(self._proj(p, adapters, "attn.q"))
        k_ = tokens.matmul(self._proj(p, adapters, "attn.k"))
        v = tokens.matmul(self._proj(p, adapters, "attn.v"))
        scores = q.matmul(k_.transpose())
        if attn_hook is not None:
            m = attn_hook(scores.data, (gh, gw))
            if m is not None:
                scores = scores + Tensor(m)
        att = (scores * (1.0 / np.sqrt(c2))).softmax_rows()
        attended = att.matmul(v).matmul(self._proj(p, adapters, "attn.out"))
        h1 = (tokens + attended).reshape(gh, gw, c2)

        h2 = conv2d(h1, p["conv_mid.w"], p["conv_mid.b"]).silu()
        h3 = upsample_nearest2x(h2)
        h4 = conv2d(h3, p["conv_up.w"], p["conv_up.b"]).silu()
        return conv2d(h4, p["conv_out.w"], p["conv_out.b"])

    @staticmethod
    def _proj(p: dict, adapters: dict | None, name: str) -> Tensor:
        """Effective (d_in, d_out) projection: base plus the LoRA delta.

        Adapter factors may be live autograd Tensors (training) or plain
        arrays (inference); either way delta = scale * up @ down.
        """
        base = p[name]
        if adapters and name in adapters:
            ad = adapters[name]
            up = ad.up if isinstance(ad.up, Tensor) else Tensor(ad.up)
            down = ad.down if isinstance(ad.down, Tensor) else Tensor(ad.down)
            delta = up.matmul(down) * float(ad.scale)  # (d_out, d_in)
            return base + delta.transpose()
        return base

    def predict(self, x9, t, text_emb, adapters=None, attn_hook=None) -> np.ndarray:
        """Inference convenience: plain arrays in, plain array out."""
        return self.forward(x9, t, text_emb, adapters=adapters, attn_hook=attn_hook).data

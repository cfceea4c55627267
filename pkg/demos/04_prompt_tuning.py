# # Prompt tuning: a placeholder token plus low-rank adapters
#
# The "background completion" concept lives in a single learned token
# embedding (literal R_*) used as "A photo of R_* <tag>", trained jointly
# with rank-4 adapters on the denoiser's attention projections. The base
# weights stay frozen; the dataset is what demo 03 built.

from pathlib import Path

from eraserkit.clients import ToyVae
from eraserkit.diffusion import build_schedule
from eraserkit.olrd import load_train_samples
from eraserkit.prompt_tuning import (
    TrainConfig,
    init_placeholder,
    smoothed,
    train,
)
from eraserkit.toy import ToyDenoiser, ToyTextEncoder

dataset = Path(__file__).parent / "out" / "olrd_demo"
if not dataset.exists():
    raise SystemExit("run 03_dataset_construction.py first")

samples = load_train_samples(dataset, ToyVae())
print(f"{len(samples)} training samples, prompts like: {samples[0].simple_prompt!r}")

encoder = ToyTextEncoder(seed=0)
denoiser = ToyDenoiser(seed=1)
schedule = build_schedule(50)

# Phase 1: textual inversion warms up the token alone.

token = init_placeholder(samples, steps=50, encoder=encoder, denoiser=denoiser,
                         schedule=schedule, seed=0)
print("placeholder embedding norm after inversion: %.3f"
      % float((token.embedding ** 2).sum() ** 0.5))

# Phase 2: joint training of the token and the adapters. Each drawn
# sample flips a 50/50 coin between the constructed prompt and the
# dataset caption.

config = TrainConfig(steps=300, lr=1e-4, rank=4, seed=7, batch_size=2,
                     checkpoint_every=100)
ckpt_dir = Path(__file__).parent / "out" / "checkpoints"
result = train(config, samples, encoder, denoiser, schedule,
               checkpoint_dir=ckpt_dir, token=token)

curve = smoothed(result.losses, window=50)
print(f"loss: start {result.losses[0]:.1f} -> end {result.losses[-1]:.1f}")
print("smoothed checkpoints:", [round(float(v), 1) for v in curve[::40]])
print("checkpoints written:", sorted(p.name for p in ckpt_dir.glob("*.npz")))

try:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7, 3.2))
    ax.plot(result.losses, lw=0.6, alpha=0.5, label="per step")
    ax.plot(range(len(result.losses) - len(curve), len(result.losses)), curve,
            lw=2, label="smoothed (50)")
    ax.set(xlabel="step", ylabel="loss", title="adapter + token training")
    ax.legend()
    fig.tight_layout()
    out = Path(__file__).parent / "out" / "training_curve.png"
    fig.savefig(out, dpi=120)
    print("curve saved to", out)
except ImportError:
    pass

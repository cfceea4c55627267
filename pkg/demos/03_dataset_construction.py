# # Building an object-level removal dataset
#
# Ordinary inpainting data (random masks over anything) teaches a model
# to restore whatever was there, including objects. For erasure we need
# pairs where the masked content is an object and the answer is pure
# background. The trick: shift a segmented object onto background, paste
# it hard-edged, and keep the original image as the target.

from pathlib import Path

import numpy as np
from PIL import Image

from eraserkit.clients import TemplateVlm
from eraserkit.errors import NoErasableObject, PlacementNotFound
from eraserkit.olrd import build_sample, read_dataset, validate_sample, write_dataset
from eraserkit.synth import make_corpus

out_dir = Path(__file__).parent / "out"
out_dir.mkdir(exist_ok=True)

scenes = make_corpus(12, seed=21, size=(64, 64))
vlm = TemplateVlm()

samples = []
for i, scene in enumerate(scenes):
    try:
        sample = build_sample(scene, seed=100 + i, vlm=vlm, source_id=f"demo_{i}")
    except (NoErasableObject, PlacementNotFound) as exc:
        print(f"scene {i}: skipped ({exc})")
        continue
    problems = validate_sample(sample, scene)
    print(f"scene {i}: object={sample.provenance['object_category']}"
          f" offset={sample.provenance['offset']}"
          f" tags={sample.background_tags} valid={not problems}")
    samples.append(sample)

manifest = write_dataset(samples, out_dir / "olrd_demo")
print(f"\nwrote {len(manifest['samples'])} samples under {out_dir / 'olrd_demo'}")

# Read one record back and save a side-by-side strip:
# original | blended (object pasted twice) | shifted mask.

rec = read_dataset(out_dir / "olrd_demo")[0]
strip = np.concatenate(
    [rec.original, rec.blended, np.repeat(rec.shifted_mask[:, :, None] * 255, 3, axis=2)],
    axis=1,
).astype(np.uint8)
Image.fromarray(strip).save(out_dir / "olrd_sample_strip.png")
print("caption:", rec.caption)
print("strip saved to", out_dir / "olrd_sample_strip.png")

"""Object-erasure toolkit: diffusion-side erase pipeline at desk scale.

Subpackage map:

- diffusion: schedules, closed-form noising, sampling loop
- refocus: label maps and self-attention logit modulation
- prompt_tuning: placeholder-token inversion + low-rank adapters
- olrd: object-level removal dataset construction
- metrics: PSNR/SSIM/LPIPS/FID evaluation harness
- service, api, cli: pipeline orchestration, job queue, HTTP, CLI
- toy, clients, synth: laptop-scale model and stub externals
"""

__version__ = "0.1.0"

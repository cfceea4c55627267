import json

import numpy as np
import pytest
from PIL import Image

from eraserkit.cli import main
from eraserkit.synth import make_scene


@pytest.fixture(scope="module")
def dataset_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "olrd"
    rc = main(["build-dataset", "--out", str(out), "--scenes", "6", "--seed", "3"])
    assert rc == 0
    return out


class TestBuildDataset:
    def test_manifest_written(self, dataset_dir):
        manifest = json.loads((dataset_dir / "manifest.json").read_text())
        assert manifest["format_version"] == 1
        assert len(manifest["samples"]) >= 4


class TestTrain:
    def test_train_writes_checkpoints_and_telemetry(self, dataset_dir, tmp_path):
        ckpt = tmp_path / "ckpts"
        rc = main(
            [
                "train",
                "--dataset", str(dataset_dir),
                "--steps", "6",
                "--lr", "1e-4",
                "--rank", "4",
                "--seed", "1",
                "--out", str(ckpt),
                "--checkpoint-every", "3",
                "--ti-steps", "2",
            ]
        )
        assert rc == 0
        assert (ckpt / "step_000006.npz").exists()
        telemetry = json.loads((ckpt / "telemetry.json").read_text())
        assert len(telemetry["losses"]) == 6

    def test_resume_from_checkpoint(self, dataset_dir, tmp_path):
        ckpt = tmp_path / "c2"
        main(
            ["train", "--dataset", str(dataset_dir), "--steps", "3",
             "--seed", "2", "--out", str(ckpt), "--checkpoint-every", "3"]
        )
        rc = main(
            ["train", "--dataset", str(dataset_dir), "--steps", "6",
             "--seed", "2", "--out", str(ckpt), "--checkpoint-every", "3",
             "--resume", str(ckpt / "step_000003.npz")]
        )
        assert rc == 0
        assert (ckpt / "step_000006.npz").exists()


class TestEraseCli:
    def test_erase_round_trip(self, tmp_path):
        scene = make_scene(seed=4, size=(64, 64), things=("person",))
        thing = next(s for s in scene.segments if s.kind == "thing")
        img_path = tmp_path / "in.png"
        mask_path = tmp_path / "mask.png"
        out_path = tmp_path / "out.png"
        Image.fromarray(scene.image).save(img_path)
        Image.fromarray((thing.mask * 255).astype(np.uint8)).save(mask_path)
        rc = main(
            ["erase", "--image", str(img_path), "--mask", str(mask_path),
             "--out", str(out_path), "--strength", "0.9", "--seed", "5",
             "--steps", "6"]
        )
        assert rc == 0
        out = np.array(Image.open(out_path))
        assert out.shape == scene.image.shape


class TestEvalCli:
    def test_eval_report(self, tmp_path):
        rng = np.random.default_rng(0)
        res, refs = tmp_path / "res", tmp_path / "refs"
        res.mkdir()
        refs.mkdir()
        for i in range(3):
            img = rng.integers(0, 255, (40, 40, 3)).astype(np.uint8)
            noisy = np.clip(img.astype(int) + rng.integers(-10, 10, img.shape), 0, 255)
            Image.fromarray(noisy.astype(np.uint8)).save(res / f"p{i}.png")
            Image.fromarray(img).save(refs / f"p{i}.png")
        out = tmp_path / "report.json"
        rc = main(
            ["eval", "--results", str(res), "--refs", str(refs), "--out", str(out)]
        )
        assert rc == 0
        doc = json.loads(out.read_text())
        assert set(doc["aggregate"]) == {"psnr", "ssim", "lpips", "fid"}
        assert len(doc["pairs"]) == 3

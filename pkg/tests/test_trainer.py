# tests/test_trainer.py
import numpy as np
import pytest

from core.config_models import TrainConfig
from core.errors import ConfigurationError, DecodeError
from core.metrics import bench_latency
from core.model_zoo import build_network
from core.pose import CameraModel
from core.trainer import (
    BEST_WEIGHTS,
    CHECKPOINT_INDEX,
    LOSS_LOG,
    Trainer,
    read_loss_log,
    save_training_chart,
)
from dataset.scene_renderer import generate_scene, random_pose, random_scene


def make_samples(count):
    camera = CameraModel()
    samples = []
    for seed in range(count):
        scene = random_scene(seed, noise=0.02)
        samples.append(generate_scene(scene, camera, random_pose(scene, seed), sample_id=f"s{seed}"))
    return samples


def small_net():
    return build_network("improved", 3, 2, 32, width=1 / 64, seed=3)


CFG = TrainConfig(iterations=4, checkpoint_interval=2, batch_size=2, subdivisions=1, input_size=32)


def test_training_writes_checkpoints_and_logs(tmp_path):
    samples = make_samples(4)
    trainer = Trainer(small_net(), CFG, samples[:3], samples[3:], tmp_path, seed=5, progress=False)
    result = trainer.run()

    assert result.iterations == 4
    assert len(result.losses) == 4 and all(np.isfinite(result.losses))
    assert [c.iteration for c in result.checkpoints] == [2, 4]
    assert result.best is not None and result.best.iteration in (2, 4)
    assert (tmp_path / BEST_WEIGHTS).exists()
    assert (tmp_path / "ckpt_000002.weights").exists()
    assert (tmp_path / "ckpt_000004.state.npz").exists()
    assert len((tmp_path / CHECKPOINT_INDEX).read_text().splitlines()) == 2
    assert [it for it, _ in read_loss_log(tmp_path / LOSS_LOG)] == [1, 2, 3, 4]

    chart = save_training_chart(tmp_path)
    assert chart is not None and chart.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_subdivisions_split_the_batch_without_changing_the_update(tmp_path, monkeypatch):
    samples = make_samples(4)
    weights, losses, chunk_sizes = [], [], {}
    for subdivisions in (1, 2, 4):
        cfg = TrainConfig(batch_size=4, subdivisions=subdivisions, input_size=32)
        trainer = Trainer(small_net(), cfg, samples, (), tmp_path / str(subdivisions), seed=5, progress=False)
        sizes = chunk_sizes.setdefault(subdivisions, [])
        accumulate = trainer._accumulate

        def recording(chunk, scale, totals, sizes=sizes, accumulate=accumulate):
            sizes.append(len(chunk))
            return accumulate(chunk, scale, totals)

        monkeypatch.setattr(trainer, "_accumulate", recording)
        losses.append(trainer.train_step(trainer.train_samples).total)
        weights.append([p.value.copy() for p in trainer.net.params()])

    assert chunk_sizes == {1: [4], 2: [2, 2], 4: [1, 1, 1, 1]}
    assert losses[0] == losses[1] == losses[2]
    for other in weights[1:]:
        for a, b in zip(weights[0], other):
            np.testing.assert_array_equal(a, b)


def test_resume_continues_the_same_run(tmp_path):
    samples = make_samples(4)
    fresh_dir, resumed_dir = tmp_path / "fresh", tmp_path / "resumed"
    Trainer(small_net(), CFG, samples[:3], samples[3:], fresh_dir, seed=5, progress=False).run()

    trainer = Trainer(small_net(), CFG, samples[:3], samples[3:], resumed_dir, seed=5, progress=False)
    assert trainer.resume(fresh_dir / "ckpt_000002.weights") == 2
    result = trainer.run()
    assert result.iterations == 4

    fresh_lines = (fresh_dir / LOSS_LOG).read_text().splitlines()
    assert (resumed_dir / LOSS_LOG).read_text().splitlines() == fresh_lines[2:]
    assert (fresh_dir / "ckpt_000004.weights").read_bytes() == (resumed_dir / "ckpt_000004.weights").read_bytes()


def test_resume_needs_state_file(tmp_path):
    samples = make_samples(2)
    trainer = Trainer(small_net(), CFG, samples, out_dir=tmp_path, progress=False)
    with pytest.raises(DecodeError):
        trainer.resume(tmp_path / "ckpt_000002.weights")
    with pytest.raises(ConfigurationError):
        Trainer(small_net(), CFG, [], out_dir=tmp_path)


def test_chart_needs_a_loss_log(tmp_path):
    assert save_training_chart(tmp_path) is None


@pytest.mark.slow
def test_single_sample_overfits(tmp_path):
    cfg = TrainConfig(iterations=60, checkpoint_interval=60, batch_size=1, subdivisions=1,
                      input_size=32, learning_rate=0.01, augment_online=False)
    sample = make_samples(1)
    result = Trainer(small_net(), cfg, sample, out_dir=tmp_path, progress=False).run()
    assert np.mean(result.losses[-5:]) < np.mean(result.losses[:5])


@pytest.mark.slow
def test_improved_variant_is_slower():
    rng = np.random.default_rng(0)
    images = [rng.uniform(size=(3, 64, 64)) for _ in range(2)]
    default = build_network("default", 3, 2, 64, width=0.25, seed=1)
    improved = build_network("improved", 3, 2, 64, width=0.25, seed=1)
    assert bench_latency(improved, images, 5).mean > bench_latency(default, images, 5).mean

# core/trainer.py
"""
Mini-batch SGD training loop for the grid detector.

Every iteration draws `batch_size` samples, runs forward/backward on each in
turn, accumulates parameter gradients scaled by 1/batch_size and applies one
momentum SGD step. Outputs in the run directory:

    loss.log                     iter coord iou cls total, one line per iteration
    ckpt_XXXXXX.weights          every checkpoint_interval iterations
    ckpt_XXXXXX.state.npz        momentum buffers, iteration, best mAP, sampler state
    best.weights                 copy of the highest validation-mAP checkpoint
    checkpoints.txt              iteration, mAP, path per checkpoint
    training_chart.png           loss curve with validation mAP per checkpoint
"""

import json
import logging
import shutil
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from tqdm import tqdm

from dataset.augmentation import augment
from dataset.samples import Sample, resize

from .config_models import AugmentConfig, DetectConfig, TrainConfig
from .detection import run_detector
from .errors import ConfigurationError, DecodeError
from .metrics import evaluate_frames
from .model_zoo import Network
from .tensor_engine import backward, sgd_step, zero_grad
from .weights_io import load_weights, save_weights
from .yolo_loss import LossBreakdown, assign_targets, yolo_loss_and_grad

logger = logging.getLogger(__name__)

LOSS_LOG = "loss.log"
BEST_WEIGHTS = "best.weights"
CHECKPOINT_INDEX = "checkpoints.txt"
CHART_FILE = "training_chart.png"


def checkpoint_name(iteration: int) -> str:
    return f"ckpt_{iteration:06d}"


@dataclass
class Checkpoint:
    iteration: int
    map: float
    path: Path


@dataclass
class TrainResult:
    iterations: int
    losses: List[float]
    checkpoints: List[Checkpoint] = field(default_factory=list)
    best: Optional[Checkpoint] = None
    plateau_warnings: int = 0

    @property
    def initial_loss(self) -> float:
        return self.losses[0] if self.losses else float("nan")

    @property
    def final_loss(self) -> float:
        return self.losses[-1] if self.losses else float("nan")


class Trainer:
    def __init__(self, net: Network, cfg: TrainConfig, train_samples: Sequence[Sample],
                 val_samples: Sequence[Sample] = (), out_dir: Union[str, Path] = "runs/train",
                 augment_cfg: Optional[AugmentConfig] = None, detect_cfg: Optional[DetectConfig] = None,
                 seed: int = 0, progress: bool = True):
        if not train_samples:
            raise ConfigurationError("training needs at least one sample")
        self.net = net
        self.cfg = cfg
        self.augment_cfg = augment_cfg or AugmentConfig()
        self.detect_cfg = detect_cfg or DetectConfig()
        size = net.input_size
        self.train_samples = [resize(s, size) for s in train_samples]
        self.val_samples = [resize(s, size) for s in val_samples]
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.progress = progress

        self.rng = np.random.default_rng([seed, 0x7A1])
        self._order: List[int] = []
        self._cursor = 0
        self.iteration = 0
        self.best_map = -1.0
        self.best_iteration = 0
        self.losses: List[float] = []
        self.checkpoints: List[Checkpoint] = []
        self._best_loss = np.inf
        self._since_improvement = 0
        self.plateau_warnings = 0

    # ------------------------------------------------------------ sampling

    def _next_index(self) -> int:
        if self._cursor >= len(self._order):
            self._order = [int(i) for i in self.rng.permutation(len(self.train_samples))]
            self._cursor = 0
        index = self._order[self._cursor]
        self._cursor += 1
        return index

    def next_batch(self) -> List[Sample]:
        batch = [self.train_samples[self._next_index()] for _ in range(self.cfg.batch_size)]
        if self.cfg.augment_online:
            batch = [augment(s, self.augment_cfg, self.rng) for s in batch]
        return batch

    # ------------------------------------------------------------ one iteration

    def train_step(self, batch: Sequence[Sample]) -> LossBreakdown:
        """One SGD update over the batch, fed through the network in mini_batch chunks.

        Gradients of all chunks accumulate before the update and are scaled by
        1/len(batch), so the result does not depend on subdivisions.
        """
        params = self.net.params()
        zero_grad(params)
        scale = 1.0 / len(batch)
        totals = LossBreakdown(0.0, 0.0, 0.0)
        size = self.cfg.mini_batch
        for start in range(0, len(batch), size):
            totals = self._accumulate(batch[start:start + size], scale, totals)
        sgd_step(params, self.cfg)
        return totals

    def _accumulate(self, chunk: Sequence[Sample], scale: float, totals: LossBreakdown) -> LossBreakdown:
        config = self.net.config
        coord, iou, cls = totals.coord_err, totals.iou_err, totals.cls_err
        degenerate = totals.degenerate
        for sample in chunk:
            out, tape = self.net.forward(sample.image, record=True)
            targets = assign_targets(sample.truths, config.grid_size, config.boxes_per_cell,
                                     out, config.num_classes)
            breakdown, grad = yolo_loss_and_grad(out, targets, self.cfg.lambda_coord, self.cfg.lambda_noobj)
            backward(tape, grad * scale)
            coord += breakdown.coord_err * scale
            iou += breakdown.iou_err * scale
            cls += breakdown.cls_err * scale
            degenerate = degenerate or breakdown.degenerate
        return LossBreakdown(coord, iou, cls, degenerate)

    def _watch_plateau(self, loss: float) -> None:
        if loss < self._best_loss:
            self._best_loss = loss
            self._since_improvement = 0
            return
        self._since_improvement += 1
        if self._since_improvement >= self.cfg.patience:
            self.plateau_warnings += 1
            logger.warning("loss has not improved on %.6g for %d iterations (iteration %d)",
                           self._best_loss, self.cfg.patience, self.iteration)
            self._since_improvement = 0

    # ------------------------------------------------------------ evaluation

    def validation_map(self) -> float:
        samples = self.val_samples or self.train_samples
        frames = [(run_detector(self.net, s.image, self.detect_cfg.conf_thresh, self.detect_cfg.iou_thresh),
                   s.truths) for s in samples]
        return evaluate_frames(frames, self.net.config.num_classes, self.detect_cfg.strict_duplicates).map

    # ------------------------------------------------------------ checkpoints

    def save_checkpoint(self) -> Checkpoint:
        stem = self.out_dir / checkpoint_name(self.iteration)
        weights_path = save_weights(self.net, stem.with_suffix(".weights"))
        map_value = self.validation_map()
        if map_value > self.best_map:
            self.best_map = map_value
            self.best_iteration = self.iteration
            shutil.copyfile(weights_path, self.out_dir / BEST_WEIGHTS)
            logger.info("new best checkpoint at iteration %d (mAP %.2f)", self.iteration, map_value)
        buffers = {f"momentum_{i}": p.momentum_buf for i, p in enumerate(self.net.params())}
        np.savez(
            self.out_dir / f"{checkpoint_name(self.iteration)}.state.npz",
            iteration=self.iteration,
            best_map=self.best_map,
            best_iteration=self.best_iteration,
            cursor=self._cursor,
            order=np.asarray(self._order, dtype=np.int64),
            rng_state=json.dumps(self.rng.bit_generator.state),
            **buffers,
        )
        checkpoint = Checkpoint(self.iteration, map_value, weights_path)
        self.checkpoints.append(checkpoint)
        with (self.out_dir / CHECKPOINT_INDEX).open("a", encoding="utf-8") as fh:
            fh.write(f"{self.iteration} {map_value:.4f} {weights_path.name}\n")
        logger.info("checkpoint %s written (validation mAP %.2f)", weights_path.name, map_value)
        return checkpoint

    def resume(self, weights_path: Union[str, Path]) -> int:
        """Restore weights and optimizer state; returns the iteration to continue from"""
        weights_path = Path(weights_path)
        state_path = weights_path.with_name(weights_path.stem + ".state.npz")
        if not state_path.exists():
            raise DecodeError(f"checkpoint state not found: {state_path}")
        load_weights(self.net, weights_path)
        with np.load(state_path) as state:
            params = self.net.params()
            for i, param in enumerate(params):
                key = f"momentum_{i}"
                if key not in state.files or state[key].shape != param.value.shape:
                    raise DecodeError(f"checkpoint state does not match the network ({key})")
                param.momentum_buf[...] = state[key]
            self.iteration = int(state["iteration"])
            self.best_map = float(state["best_map"])
            self.best_iteration = int(state["best_iteration"])
            self._cursor = int(state["cursor"])
            self._order = [int(i) for i in state["order"]]
            self.rng.bit_generator.state = json.loads(str(state["rng_state"]))
        logger.info("resumed from %s at iteration %d", weights_path.name, self.iteration)
        return self.iteration

    # ------------------------------------------------------------ main loop

    def run(self, iterations: Optional[int] = None) -> TrainResult:
        total = iterations or self.cfg.iterations
        log_path = self.out_dir / LOSS_LOG
        mode = "a" if self.iteration > 0 else "w"
        if self.iteration == 0:
            (self.out_dir / CHECKPOINT_INDEX).unlink(missing_ok=True)
        with log_path.open(mode, encoding="utf-8") as log, \
                tqdm(total=total, initial=self.iteration, disable=not self.progress,
                     desc="train", unit="it") as bar:
            while self.iteration < total:
                self.iteration += 1
                breakdown = self.train_step(self.next_batch())
                if breakdown.degenerate:
                    logger.debug("negative w/h prediction clamped at iteration %d", self.iteration)
                self.losses.append(breakdown.total)
                log.write(breakdown.log_line(self.iteration) + "\n")
                self._watch_plateau(breakdown.total)
                bar.set_postfix(loss=f"{breakdown.total:.4f}")
                bar.update(1)
                if self.iteration % self.cfg.checkpoint_interval == 0:
                    log.flush()
                    self.save_checkpoint()
        best = next((c for c in self.checkpoints if c.iteration == self.best_iteration), None)
        return TrainResult(self.iteration, list(self.losses), list(self.checkpoints), best,
                           self.plateau_warnings)


def read_loss_log(path: Union[str, Path]) -> List[Tuple[int, float]]:
    rows = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        parts = line.split()
        if len(parts) == 5:
            rows.append((int(parts[0]), float(parts[4])))
    return rows


def save_training_chart(out_dir: Union[str, Path]) -> Optional[Path]:
    """Loss per iteration with validation mAP per checkpoint on a second axis"""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir = Path(out_dir)
    log_path = out_dir / LOSS_LOG
    if not log_path.exists():
        return None
    losses = read_loss_log(log_path)
    checkpoints = []
    index = out_dir / CHECKPOINT_INDEX
    if index.exists():
        for line in index.read_text(encoding="utf-8").splitlines():
            parts = line.split()
            checkpoints.append((int(parts[0]), float(parts[1])))

    fig, ax = plt.subplots(figsize=(8, 4.5))
    if losses:
        its, values = zip(*losses)
        ax.plot(its, values, color="tab:blue", linewidth=0.8, label="loss")
    ax.set_xlabel("iteration")
    ax.set_ylabel("loss")
    ax.set_yscale("log")
    if checkpoints:
        ax2 = ax.twinx()
        its, maps = zip(*checkpoints)
        ax2.plot(its, maps, "o-", color="tab:red", label="validation mAP")
        ax2.set_ylabel("mAP (%)")
        ax2.set_ylim(0, 100)
    ax.set_title("training")
    fig.tight_layout()
    path = out_dir / CHART_FILE
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return path

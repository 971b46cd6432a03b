"""
Trainer Module for VRD

This module handles training of VRD networks on synthetic segmentation data:
1. Parsing the plain-text training config
2. The sequential per-example AdaGrad training loop
3. Held-out evaluation
4. Saving parameters, checkpoints, loss history and metrics
"""

import json
import logging
import math
from dataclasses import dataclass, asdict
from pathlib import Path
from typing import Dict, List, Tuple

import numpy as np
import pandas as pd

from .config import DEFAULT_TRAIN_CONFIG
from .data import LabeledExample, gen_synthetic, split_dataset
from .exceptions import ConfigError, ConvergenceError, NotPositiveDefiniteError, TrainingDivergedError
from .formats import write_vrdp
from .lattice import Field
from .metrics import max_f1_and_average_precision, pixel_accuracy
from .model import AdaGradState, Network, VrdLayer, adagrad_step, net_backward, net_forward, parse_arch, softmax_xent

logger = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    """Settings of one training run."""
    epochs: int = DEFAULT_TRAIN_CONFIG["epochs"]
    lr: float = DEFAULT_TRAIN_CONFIG["lr"]
    seed: int = DEFAULT_TRAIN_CONFIG["seed"]
    noise_sigma: float = DEFAULT_TRAIN_CONFIG["noise_sigma"]
    grid: Tuple[int, int] = DEFAULT_TRAIN_CONFIG["grid"]
    classes: int = DEFAULT_TRAIN_CONFIG["classes"]
    arch: str = DEFAULT_TRAIN_CONFIG["arch"]
    n_train: int = DEFAULT_TRAIN_CONFIG["n_train"]
    n_test: int = DEFAULT_TRAIN_CONFIG["n_test"]
    anneal: bool = DEFAULT_TRAIN_CONFIG["anneal"]


def parse_grid(text: str) -> Tuple[int, int]:
    """Parse "HxW" (or a single edge length) into (height, width)."""
    parts = text.lower().split("x")
    try:
        dims = tuple(int(p) for p in parts)
    except ValueError:
        raise ConfigError(f"bad grid size {text!r}, expected HxW")
    if len(dims) == 1:
        dims = (dims[0], dims[0])
    if len(dims) != 2 or min(dims) < 1:
        raise ConfigError(f"bad grid size {text!r}, expected HxW")
    return dims


def _parse_bool(text: str) -> bool:
    lowered = text.lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


_PARSERS = {
    "epochs": int,
    "lr": float,
    "seed": int,
    "noise_sigma": float,
    "grid": parse_grid,
    "classes": int,
    "arch": str,
    "n_train": int,
    "n_test": int,
    "anneal": _parse_bool,
}


def parse_config(text: str) -> TrainConfig:
    """
    Parse a training config: one `key = value` per line, `#` starts a comment.

    Raises:
        ConfigError: unknown key, malformed line or bad value
    """
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _PARSERS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        try:
            values[key] = _PARSERS[key](value)
        except (ValueError, ConfigError) as e:
            raise ConfigError(f"line {lineno}: bad value for {key}: {e}")
    config = TrainConfig(**values)
    if config.epochs < 0 or config.lr < 0 or config.classes < 2 or config.noise_sigma < 0:
        raise ConfigError("epochs and lr must be nonnegative, noise_sigma nonnegative, classes at least 2")
    if config.n_train < 1:
        raise ConfigError("n_train must be at least 1")
    parse_arch(config.arch)
    return config


def load_config(path) -> TrainConfig:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e.strerror}")
    return parse_config(text)


def train(net: Network, dataset: List[LabeledExample], epochs: int, lr: float, seed: int = 0,
          anneal: bool = False) -> Tuple[Network, List[float]]:
    """
    Sequential per-example AdaGrad training.

    Examples are visited in one seeded order, every epoch, with one update per
    example. With anneal the learning rate halves every max(1, epochs // 2)
    epochs.

    Args:
        net: network, updated in place
        dataset: nonempty list of examples
        epochs: number of passes over the data
        lr: AdaGrad learning rate
        seed: seed of the presentation order
        anneal: enable stepwise annealing

    Returns:
        (net, mean training loss of each epoch)

    Raises:
        TrainingDivergedError: on a non-finite loss or parameters, or when the
            parameters no longer give a valid VRD factorization
    """
    if not dataset:
        raise ValueError("training needs a nonempty dataset")
    order = np.random.default_rng(seed).permutation(len(dataset))
    state = AdaGradState(lr)
    params = net.named_parameters()
    period = max(1, epochs // 2)
    history = []
    for epoch in range(epochs):
        if anneal and epoch > 0 and epoch % period == 0:
            state.learning_rate *= 0.5
        total = 0.0
        for idx in order:
            example = dataset[idx]
            try:
                scores, caches = net_forward(net, example.input)
                loss, dl_dscores = softmax_xent(scores, example.labels)
                if not math.isfinite(loss):
                    raise TrainingDivergedError(f"loss became {loss} in epoch {epoch + 1}")
                grads, _ = net_backward(net, caches, dl_dscores)
            except (ValueError, NotPositiveDefiniteError, ConvergenceError) as e:
                # Overflowing parameters surface as invalid matrices in the VRD factorization
                raise TrainingDivergedError(f"parameters became invalid in epoch {epoch + 1}: {e}") from e
            adagrad_step(state, params, grads)
            if not all(np.all(np.isfinite(array)) for _, array in params):
                raise TrainingDivergedError(f"parameters became non-finite in epoch {epoch + 1}")
            total += loss
        history.append(total / len(dataset))
        logger.info("Epoch %d/%d: loss %.6f", epoch + 1, epochs, history[-1])
    return net, history


def evaluate(net: Network, examples: List[LabeledExample]) -> Dict[str, float]:
    """
    Held-out metrics: mean loss and pixel accuracy, plus max F1 and AP for
    two-class problems (computed over all pixels pooled).
    """
    losses, correct, pixels = [], 0, 0
    pooled_scores, pooled_labels = [], []
    for example in examples:
        scores, _ = net_forward(net, example.input)
        loss, _ = softmax_xent(scores, example.labels)
        losses.append(loss)
        correct += pixel_accuracy(scores, example.labels) * example.labels.size
        pixels += example.labels.size
        pooled_scores.append(scores.data.reshape(1, -1, scores.channels))
        pooled_labels.append(example.labels.reshape(1, -1))
    metrics = {
        "loss": float(np.mean(losses)) if losses else float("nan"),
        "pixel_accuracy": correct / pixels if pixels else float("nan"),
    }
    if examples and net.n_out == 2:
        scores = Field(np.concatenate(pooled_scores, axis=1), check=False)
        labels = np.concatenate(pooled_labels, axis=1)
        metrics["max_f1"], metrics["average_precision"] = max_f1_and_average_precision(scores, labels)
    return metrics


def save_network(path, net: Network):
    """Write a full network checkpoint as a .npz archive."""
    arrays = {f"param:{name}": array for name, array in net.named_parameters()}
    np.savez(path, arch=np.array(net.arch), n_in=np.array(net.n_in),
             rng_seed=np.array(net.rng_seed), **arrays)


def load_network(path) -> Network:
    """Read a checkpoint written by save_network."""
    with np.load(path) as archive:
        net = Network.from_arch(str(archive["arch"]), int(archive["n_in"]), int(archive["rng_seed"]))
        for name, array in net.named_parameters():
            array[...] = archive[f"param:{name}"]
    return net


class Trainer:
    """Runs a configured training job end to end and writes its artifacts."""

    def __init__(self, config: TrainConfig):
        """Initialize the Trainer."""
        self.config = config

    def build_data(self) -> Tuple[List[LabeledExample], List[LabeledExample]]:
        """Generate the synthetic dataset and split it into train and held-out parts."""
        cfg = self.config
        total = cfg.n_train + cfg.n_test
        examples = gen_synthetic(cfg.seed, total, cfg.grid[0], cfg.grid[1], cfg.classes, cfg.noise_sigma)
        return split_dataset(examples, cfg.n_train / total, cfg.seed)

    def build_network(self) -> Network:
        cfg = self.config
        net = Network.from_arch(cfg.arch, cfg.classes, cfg.seed)
        if net.n_out != cfg.classes:
            raise ConfigError(f"architecture {cfg.arch!r} produces {net.n_out} channels, expected {cfg.classes}")
        return net

    def run(self, out_path) -> Dict:
        """
        Train, evaluate and write every artifact next to out_path.

        Returns:
            Dictionary with the network, loss history, metrics and written paths
        """
        cfg = self.config
        out_path = Path(out_path)
        out_path.parent.mkdir(parents=True, exist_ok=True)

        print(f"Training {cfg.arch} on {cfg.n_train} examples of {cfg.grid[0]}x{cfg.grid[1]} for {cfg.epochs} epochs")
        train_set, test_set = self.build_data()
        net = self.build_network()
        net, history = train(net, train_set, cfg.epochs, cfg.lr, cfg.seed, cfg.anneal)
        metrics = evaluate(net, test_set)

        written = self._save_outputs(out_path, net, history, metrics)
        return {"network": net, "history": history, "metrics": metrics, "files": written}

    def _save_outputs(self, out_path: Path, net: Network, history: List[float], metrics: Dict) -> List[str]:
        stem = out_path.with_suffix("")
        written = []

        vrd_layers = [layer for layer in net.layers if isinstance(layer, VrdLayer)]
        for k, layer in enumerate(vrd_layers):
            path = out_path if k == 0 else Path(f"{stem}.layer{k}.vrdp")
            write_vrdp(path, layer.params)
            written.append(str(path))
        if not vrd_layers:
            logger.warning("Architecture %s has no VRD layer; no VRDP file written", net.arch)

        checkpoint = f"{stem}.net.npz"
        save_network(checkpoint, net)
        written.append(checkpoint)

        history_path = f"{stem}.loss.csv"
        df = pd.DataFrame({"epoch": np.arange(1, len(history) + 1, dtype=int), "loss": history})
        df.to_csv(history_path, index=False)
        written.append(history_path)

        metrics_path = f"{stem}.metrics.json"
        with open(metrics_path, "w") as f:
            json.dump({"config": asdict(self.config), "metrics": metrics}, f, indent=2)
        written.append(metrics_path)

        for path in written:
            print(f"Saved {path}")
        return written

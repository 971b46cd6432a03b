"""
Model Module for VRD

A minimal trainable network for dense per-pixel prediction:
1. Layers: per-pixel channel mixing (1x1 affine), VRD, ReLU
2. Network composition with forward/backward passes
3. Softmax cross-entropy loss averaged over pixels
4. The AdaGrad optimizer
"""

import logging
import re
from typing import Dict, List, Optional, Tuple

import numpy as np

from .config import ADAGRAD_EPSILON
from .core import VrdParams, vrd_backward, vrd_forward
from .exceptions import ConfigError, ShapeMismatchError
from .lattice import Field, mix_channels

logger = logging.getLogger(__name__)


class ChannelMix:
    """Per-pixel affine map s(x) -> W s(x) + b."""

    kind = "mix"

    def __init__(self, weight: np.ndarray, bias: np.ndarray):
        self.weight = np.array(weight, dtype=np.float64)
        self.bias = np.array(bias, dtype=np.float64)
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise ShapeMismatchError(
                f"channel mix weight {self.weight.shape} and bias {self.bias.shape} disagree")

    @classmethod
    def initial(cls, n_in: int, n_out: int, rng: np.random.Generator) -> "ChannelMix":
        bound = 1.0 / np.sqrt(n_in)
        return cls(rng.uniform(-bound, bound, size=(n_out, n_in)), np.zeros(n_out))

    @property
    def n_in(self) -> int:
        return self.weight.shape[1]

    @property
    def n_out(self) -> int:
        return self.weight.shape[0]

    def parameters(self) -> Dict[str, np.ndarray]:
        return {"weight": self.weight, "bias": self.bias}

    def forward(self, x: Field):
        y = mix_channels(self.weight, x).data + self.bias
        return Field(y, check=False), x

    def backward(self, grad: Field, cache: Field):
        x = cache
        grads = {
            "weight": np.einsum("hwo,hwi->oi", grad.data, x.data),
            "bias": grad.data.sum(axis=(0, 1)),
        }
        return mix_channels(self.weight.T, grad), grads

    def describe(self) -> str:
        return f"mix:{self.n_out}"


class VrdLayer:
    """VRD inference as a network layer."""

    kind = "vrd"

    def __init__(self, params: VrdParams):
        self.params = params

    @property
    def n_in(self) -> int:
        return self.params.n_in

    @property
    def n_out(self) -> int:
        return self.params.n_out

    def parameters(self) -> Dict[str, np.ndarray]:
        return {"r_b": self.params.r_b, "r_q": self.params.r_q,
                "b_i": self.params.b_i, "q_i": self.params.q_i}

    def forward(self, x: Field):
        y, cache = vrd_forward(x, self.params)
        return y, (x, cache)

    def backward(self, grad: Field, cache):
        x, vrd_cache = cache
        g = vrd_backward(grad, vrd_cache, x, self.params)
        grads = {"r_b": g.dl_drb, "r_q": g.dl_drq, "b_i": g.dl_dbi, "q_i": g.dl_dqi}
        return g.dl_dsi, grads

    def describe(self) -> str:
        return f"vrd:{self.n_out}"


class Relu:
    """Elementwise max(0, x)."""

    kind = "relu"

    def __init__(self, channels: int):
        self.channels = channels

    @property
    def n_in(self) -> int:
        return self.channels

    @property
    def n_out(self) -> int:
        return self.channels

    def parameters(self) -> Dict[str, np.ndarray]:
        return {}

    def forward(self, x: Field):
        return Field(np.maximum(x.data, 0.0), check=False), x.data > 0.0

    def backward(self, grad: Field, cache):
        return Field(grad.data * cache, check=False), {}

    def describe(self) -> str:
        return "relu"


_LAYER_RE = re.compile(r"^(mix|vrd):(\d+)$")


def parse_arch(arch: str) -> List[Tuple[str, Optional[int]]]:
    """
    Parse a layer descriptor list such as "mix:16,vrd:8,relu,mix:2".

    Returns:
        List of (kind, output channels) pairs; relu carries None
    """
    specs = []
    for token in (t.strip() for t in arch.split(",")):
        if not token:
            continue
        if token == "relu":
            specs.append(("relu", None))
            continue
        match = _LAYER_RE.match(token)
        if not match or int(match.group(2)) < 1:
            raise ConfigError(f"bad layer descriptor {token!r}")
        specs.append((match.group(1), int(match.group(2))))
    return specs


class Network:
    """Ordered list of layers with deterministic initialization."""

    def __init__(self, layers: List, n_in: int, rng_seed: int = 0):
        """
        Initialize the Network.

        Args:
            layers: layer objects (ChannelMix, VrdLayer, Relu)
            n_in: channel count of the network input
            rng_seed: seed the layers were initialized from
        """
        self.layers = list(layers)
        self.n_in = n_in
        self.rng_seed = rng_seed
        channels = n_in
        for i, layer in enumerate(self.layers):
            if layer.n_in != channels:
                raise ShapeMismatchError(
                    f"layer {i} ({layer.describe()}) expects {layer.n_in} channels, receives {channels}")
            channels = layer.n_out

    @classmethod
    def from_arch(cls, arch: str, n_in: int, seed: int = 0) -> "Network":
        """Build and initialize a network from a descriptor string."""
        rng = np.random.default_rng(seed)
        layers = []
        channels = n_in
        for kind, n_out in parse_arch(arch):
            if kind == "mix":
                layers.append(ChannelMix.initial(channels, n_out, rng))
            elif kind == "vrd":
                layers.append(VrdLayer(VrdParams.initial(channels, n_out, rng)))
            else:
                layers.append(Relu(channels))
                n_out = channels
            channels = n_out
        return cls(layers, n_in, seed)

    @property
    def n_out(self) -> int:
        return self.layers[-1].n_out if self.layers else self.n_in

    @property
    def arch(self) -> str:
        return ",".join(layer.describe() for layer in self.layers)

    def named_parameters(self) -> List[Tuple[str, np.ndarray]]:
        """Every parameter tensor, keyed "<layer index>.<name>"."""
        return [(f"{i}.{name}", array)
                for i, layer in enumerate(self.layers)
                for name, array in layer.parameters().items()]

    def parameter_vector(self) -> np.ndarray:
        arrays = [a.ravel() for _, a in self.named_parameters()]
        return np.concatenate(arrays) if arrays else np.zeros(0)

    def set_parameter_vector(self, vector: np.ndarray):
        offset = 0
        for _, array in self.named_parameters():
            array[...] = vector[offset:offset + array.size].reshape(array.shape)
            offset += array.size


def net_forward(net: Network, x: Field) -> Tuple[Field, list]:
    """
    Apply every layer in order.

    Returns:
        (final scores, per-layer caches)
    """
    if x.channels != net.n_in:
        raise ShapeMismatchError(f"network expects {net.n_in} input channels, got {x.channels}")
    caches = []
    for layer in net.layers:
        x, cache = layer.forward(x)
        caches.append(cache)
    return x, caches


def net_backward(net: Network, caches: list, dl_dscores: Field) -> Tuple[Dict[str, np.ndarray], Field]:
    """
    Back-propagate through every layer.

    Returns:
        (gradients keyed like Network.named_parameters, dL/dinput)
    """
    grads = {}
    grad = dl_dscores
    for i in range(len(net.layers) - 1, -1, -1):
        grad, layer_grads = net.layers[i].backward(grad, caches[i])
        for name, g in layer_grads.items():
            grads[f"{i}.{name}"] = g
    return grads, grad


def softmax(scores: np.ndarray) -> np.ndarray:
    """Softmax over the channel axis with max-subtraction."""
    shifted = scores - scores.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_xent(scores: Field, labels: np.ndarray) -> Tuple[float, Field]:
    """
    Pixel-averaged softmax cross-entropy.

    Args:
        scores: K-channel score field
        labels: (height, width) integer class indices in [0, K)

    Returns:
        (loss, dL/dscores)
    """
    labels = np.asarray(labels)
    k = scores.channels
    if labels.shape != scores.grid:
        raise ShapeMismatchError(f"labels shape {labels.shape} differs from score grid {scores.grid}")
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise ValueError(f"labels must lie in [0, {k})")
    n_pixels = labels.size
    shifted = scores.data - scores.data.max(axis=-1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=-1))
    picked = np.take_along_axis(shifted, labels[..., np.newaxis].astype(np.intp), axis=-1)[..., 0]
    loss = float(np.sum(log_norm - picked) / n_pixels)
    grad = softmax(scores.data)
    onehot = np.eye(k)[labels]
    return loss, Field((grad - onehot) / n_pixels, check=False)


class AdaGradState:
    """Per-coordinate accumulated squared gradients."""

    def __init__(self, learning_rate: float, epsilon: float = ADAGRAD_EPSILON):
        """
        Initialize the AdaGradState.

        Args:
            learning_rate: positive step size
            epsilon: added to the root of the accumulator
        """
        if learning_rate < 0.0:
            raise ValueError(f"learning rate must be nonnegative, got {learning_rate}")
        self.learning_rate = learning_rate
        self.epsilon = epsilon
        self.accumulators: Dict[str, np.ndarray] = {}

    def step(self, params: List[Tuple[str, np.ndarray]], grads: Dict[str, np.ndarray]):
        """Update params in place: acc += g^2; theta -= lr g / (sqrt(acc) + eps)."""
        adagrad_step(self, params, grads)


def adagrad_step(state: AdaGradState, params: List[Tuple[str, np.ndarray]],
                 grads: Dict[str, np.ndarray]) -> List[Tuple[str, np.ndarray]]:
    """
    One AdaGrad update, applied in place.

    Args:
        state: optimizer state
        params: (name, array) pairs as returned by Network.named_parameters
        grads: gradients keyed by the same names

    Returns:
        The updated params
    """
    for name, theta in params:
        g = grads[name]
        if g.shape != theta.shape:
            raise ShapeMismatchError(f"gradient {name} has shape {g.shape}, parameter {theta.shape}")
        acc = state.accumulators.setdefault(name, np.zeros_like(theta))
        acc += g * g
        theta -= state.learning_rate * g / (np.sqrt(acc) + state.epsilon)
    return params

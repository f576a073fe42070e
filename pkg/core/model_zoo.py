# core/model_zoo.py
"""
Network configurations for the two detector variants and the Network object
that owns initialized parameters and runs inference.

default:  7 x (3x3 conv, leaky) with a max pool after each of the first six,
          then the 1x1 linear detection head.
improved: the same trunk with mish everywhere, plus two extra 3x3 convs
          (512, 1024 filters) before the head.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Tuple, Union

import numpy as np

from .block_format import dump_blocks, parse_blocks
from .config_models import Variant
from .errors import ConfigurationError, DecodeError, ShapeError
from .tensor_engine import (
    Activation,
    Conv2DLayer,
    DetectHeadLayer,
    Layer,
    MaxPoolLayer,
    Param,
    Tape,
    Tensor,
    run_layers,
)

logger = logging.getLogger(__name__)

TOTAL_DOWNSAMPLING = 32
TRUNK_FILTERS = (16, 32, 64, 128, 256, 512, 1024)
EXTRA_FILTERS = (512, 1024)


class LayerKind(str, Enum):
    CONV = "conv"
    MAXPOOL = "maxpool"
    DETECT_HEAD = "detect_head"


@dataclass(frozen=True)
class LayerSpec:
    kind: LayerKind
    filters: int = 0
    kernel: int = 1
    stride: int = 1
    pad: int = 0
    activation: Activation = Activation.LINEAR


@dataclass
class NetworkConfig:
    variant: Variant
    layers: List[LayerSpec]
    num_classes: int
    boxes_per_cell: int
    input_size: int
    channels: int = 3
    width: float = 1.0

    @property
    def grid_size(self) -> int:
        return self.input_size // TOTAL_DOWNSAMPLING

    @property
    def head_depth(self) -> int:
        return self.boxes_per_cell * 5 + self.num_classes

    def count(self, kind: LayerKind) -> int:
        return sum(1 for spec in self.layers if spec.kind == kind)

    def validate(self) -> "NetworkConfig":
        if self.num_classes < 1 or self.boxes_per_cell < 1:
            raise ConfigurationError("num_classes and boxes_per_cell must be >= 1")
        if self.input_size < TOTAL_DOWNSAMPLING or self.input_size % TOTAL_DOWNSAMPLING:
            raise ConfigurationError(
                f"input_size {self.input_size} is not a positive multiple of {TOTAL_DOWNSAMPLING}"
            )
        heads = [i for i, spec in enumerate(self.layers) if spec.kind == LayerKind.DETECT_HEAD]
        if heads != [len(self.layers) - 1]:
            raise ConfigurationError("detect_head must appear exactly once, as the last layer")
        if self.layers[-1].activation != Activation.LINEAR:
            raise ConfigurationError("detect_head must use linear activation")
        for spec in self.layers:
            if spec.kind == LayerKind.CONV:
                if spec.activation == Activation.LINEAR:
                    raise ConfigurationError("hidden conv layers use leaky or mish")
                if spec.filters < 1:
                    raise ConfigurationError("conv layer needs at least one filter")
        expected_conv = 7 if self.variant == Variant.DEFAULT else 9
        if self.count(LayerKind.CONV) != expected_conv or self.count(LayerKind.MAXPOOL) != 6:
            raise ConfigurationError(
                f"{self.variant.value} network needs {expected_conv} conv and 6 maxpool layers"
            )
        hidden = Activation.LEAKY if self.variant == Variant.DEFAULT else Activation.MISH
        if any(s.kind == LayerKind.CONV and s.activation != hidden for s in self.layers):
            raise ConfigurationError(f"{self.variant.value} network uses {hidden.value} on hidden convs")
        if self.output_hw() != self.grid_size:
            raise ConfigurationError(
                f"layer plan maps {self.input_size}px to {self.output_hw()} cells, expected {self.grid_size}"
            )
        return self

    def output_hw(self) -> int:
        size = self.input_size
        for spec in self.layers:
            if spec.kind == LayerKind.MAXPOOL:
                size = (size + spec.pad - spec.kernel) // spec.stride + 1
            elif spec.kind == LayerKind.CONV:
                size = (size + 2 * spec.pad - spec.kernel) // spec.stride + 1
        return size


def _scaled(filters: int, width: float) -> int:
    return max(1, int(round(filters * width)))


def layer_plan(variant: Union[Variant, str], head_depth: int, width: float = 1.0) -> List[LayerSpec]:
    variant = Variant(variant)
    act = Activation.LEAKY if variant == Variant.DEFAULT else Activation.MISH
    layers: List[LayerSpec] = []
    for index, filters in enumerate(TRUNK_FILTERS):
        layers.append(LayerSpec(LayerKind.CONV, _scaled(filters, width), 3, 1, 1, act))
        if index < 5:
            layers.append(LayerSpec(LayerKind.MAXPOOL, kernel=2, stride=2))
        elif index == 5:
            layers.append(LayerSpec(LayerKind.MAXPOOL, kernel=2, stride=1, pad=1))
    if variant == Variant.IMPROVED:
        for filters in EXTRA_FILTERS:
            layers.append(LayerSpec(LayerKind.CONV, _scaled(filters, width), 3, 1, 1, act))
    layers.append(LayerSpec(LayerKind.DETECT_HEAD, head_depth, 1, 1, 0, Activation.LINEAR))
    return layers


class Network:
    """Initialized parameters + layer objects for one NetworkConfig"""

    def __init__(self, config: NetworkConfig, seed: int = 0, dtype=np.float64):
        self.config = config.validate()
        self.dtype = np.dtype(dtype)
        rng = np.random.default_rng(seed)
        self.layers: List[Layer] = []
        in_channels = config.channels
        for position, spec in enumerate(config.layers):
            if spec.kind == LayerKind.MAXPOOL:
                self.layers.append(MaxPoolLayer(spec.kernel, spec.stride, spec.pad))
                continue
            weight, bias = self._init_params(rng, spec.filters, in_channels, spec.kernel, position)
            if spec.kind == LayerKind.CONV:
                self.layers.append(Conv2DLayer(weight, bias, spec.stride, spec.pad, spec.activation))
            else:
                self.layers.append(
                    DetectHeadLayer(weight, bias, config.boxes_per_cell, config.num_classes)
                )
            in_channels = spec.filters

    def _init_params(self, rng: np.random.Generator, filters: int, in_channels: int, kernel: int,
                     position: int) -> Tuple[Param, Param]:
        fan_in = in_channels * kernel * kernel
        limit = np.sqrt(2.0 / fan_in)
        value = rng.uniform(-limit, limit, size=(filters, in_channels, kernel, kernel))
        weight = Param(value.astype(self.dtype), name=f"layer{position}.weight")
        bias = Param(np.zeros(filters, dtype=self.dtype), name=f"layer{position}.bias")
        return weight, bias

    @property
    def variant(self) -> Variant:
        return self.config.variant

    @property
    def input_size(self) -> int:
        return self.config.input_size

    @property
    def grid_size(self) -> int:
        return self.config.grid_size

    def parametric_layers(self) -> List[Layer]:
        return [layer for layer in self.layers if layer.params()]

    def params(self) -> List[Param]:
        """All params in declaration order, biases before weights per layer"""
        return [param for layer in self.layers for param in layer.params()]

    def param_count(self) -> int:
        return sum(param.size for param in self.params())

    def forward(self, image: Tensor, record: bool = False) -> Union[Tensor, Tuple[Tensor, Tape]]:
        expected = (self.config.channels, self.input_size, self.input_size)
        if image.shape != expected:
            raise ShapeError(f"network expects image of shape {expected}, got {image.shape}")
        x = np.asarray(image, dtype=self.dtype)
        tape = Tape() if record else None
        out = run_layers(self.layers, x, tape)
        return (out, tape) if record else out


def build_network(variant: Union[Variant, str], num_classes: int, boxes_per_cell: int,
                  input_size: int, width: float = 1.0, seed: int = 0, channels: int = 3,
                  dtype=np.float64) -> Network:
    variant = Variant(variant)
    if input_size % TOTAL_DOWNSAMPLING or input_size < TOTAL_DOWNSAMPLING:
        raise ConfigurationError(
            f"input_size {input_size} must be a positive multiple of {TOTAL_DOWNSAMPLING}"
        )
    if width <= 0:
        raise ConfigurationError("width multiplier must be positive")
    config = NetworkConfig(
        variant=variant,
        layers=layer_plan(variant, boxes_per_cell * 5 + num_classes, width),
        num_classes=num_classes,
        boxes_per_cell=boxes_per_cell,
        input_size=input_size,
        channels=channels,
        width=width,
    )
    net = Network(config, seed=seed, dtype=dtype)
    logger.debug("built %s network: %d params, grid %d", variant.value, net.param_count(), net.grid_size)
    return net


def forward(net: Network, image: Tensor) -> Tensor:
    return net.forward(image)


def config_to_text(config: NetworkConfig) -> str:
    header = {
        "variant": config.variant.value,
        "num_classes": config.num_classes,
        "boxes_per_cell": config.boxes_per_cell,
        "input_size": config.input_size,
        "channels": config.channels,
        "width": float(config.width),
    }
    blocks = [("", header)]
    for spec in config.layers:
        blocks.append(("layer", {
            "kind": spec.kind.value,
            "filters": spec.filters,
            "kernel": spec.kernel,
            "stride": spec.stride,
            "pad": spec.pad,
            "activation": spec.activation.value,
        }))
    return dump_blocks(blocks)


def config_from_text(text: str) -> NetworkConfig:
    header: Dict[str, str] = {}
    layers: List[LayerSpec] = []
    try:
        for section, values in parse_blocks(text):
            if section == "":
                header = values
            elif section == "layer":
                layers.append(LayerSpec(
                    kind=LayerKind(values["kind"]),
                    filters=int(values.get("filters", 0)),
                    kernel=int(values.get("kernel", 1)),
                    stride=int(values.get("stride", 1)),
                    pad=int(values.get("pad", 0)),
                    activation=Activation(values.get("activation", "linear")),
                ))
            else:
                raise DecodeError(f"unknown section [{section}] in network config")
        config = NetworkConfig(
            variant=Variant(header["variant"]),
            layers=layers,
            num_classes=int(header["num_classes"]),
            boxes_per_cell=int(header["boxes_per_cell"]),
            input_size=int(header["input_size"]),
            channels=int(header.get("channels", 3)),
            width=float(header.get("width", 1.0)),
        )
    except (KeyError, ValueError) as exc:
        raise ConfigurationError(f"malformed network config: {exc}") from exc
    return config.validate()


def preset_config(variant: Union[Variant, str], num_classes: int = 3, boxes_per_cell: int = 2,
                  input_size: int = 416, width: float = 1.0) -> NetworkConfig:
    variant = Variant(variant)
    return NetworkConfig(
        variant=variant,
        layers=layer_plan(variant, boxes_per_cell * 5 + num_classes, width),
        num_classes=num_classes,
        boxes_per_cell=boxes_per_cell,
        input_size=input_size,
        width=width,
    ).validate()


def preset_text(variant: Union[Variant, str]) -> str:
    """Embedded full-scale preset (C=3, B=2, 416px)"""
    return config_to_text(preset_config(variant))


def network_from_config(config: NetworkConfig, seed: int = 0, dtype=np.float64) -> Network:
    return Network(config, seed=seed, dtype=dtype)


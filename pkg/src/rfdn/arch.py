"""Feature distillation blocks and the full RFDN graph.

All forward functions are written against :mod:`rfdn.autograd`, so they run
on plain arrays for inference and record onto a tape when any weight is a
:class:`~rfdn.autograd.Node`.

Block weights are looked up by block-local names::

    dl1..dl4   distillation convs (dl4 is always 3x3)
    rl1..rl3   refinement convs on the main body (3x3, width preserving)
    fuse       1x1 conv over the four concatenated distilled maps
    cca_down   1x1 attention bottleneck
    cca_up     1x1 attention expansion

each followed by ``.weight`` / ``.bias``. In a full model the same names are
prefixed with ``block{i}.`` (``i`` counts from 1), next to ``head``,
``fuse1``, ``fuse3`` and ``recon``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterator, Mapping

import numpy as np

from . import autograd as ag
from .errors import ConfigError, ShapeError
from .tensor import ConvWeights

CCA_REDUCTION = 16


def distilled_width(channels: int, rate: float) -> int:
    # half-up rounding, so 50 * 0.25 gives 13 rather than round()'s 12
    return int(np.floor(channels * rate + 0.5))


def attention_width(channels: int) -> int:
    return max(1, channels // CCA_REDUCTION)


@dataclass(frozen=True)
class ModelConfig:
    scale: int = 4
    channels: int = 48
    num_blocks: int = 6
    distill_rate: float = 0.5

    def __post_init__(self):
        if self.scale not in (2, 3, 4):
            raise ConfigError(f"scale must be 2, 3 or 4, got {self.scale}")
        if self.channels < 2:
            raise ConfigError("channels must be at least 2")
        if self.num_blocks < 1:
            raise ConfigError("num_blocks must be at least 1")
        if not 0 < self.distill_rate < 1:
            raise ConfigError(f"distill_rate must lie in (0, 1), got {self.distill_rate}")
        if not 1 <= self.distilled < self.channels:
            raise ConfigError(f"{self.channels} channels at rate {self.distill_rate} "
                              f"give {self.distilled} distilled channels")

    @property
    def distilled(self) -> int:
        return distilled_width(self.channels, self.distill_rate)

    @property
    def recon_channels(self) -> int:
        return 3 * self.scale ** 2


RFDN = ModelConfig()
RFDN_L = ModelConfig(channels=52)


class BlockVariant(enum.Enum):
    """Ablation blocks.

    BASE distils by channel splitting, written in its decoupled form: a 3x3
    distillation conv next to each plain conv+act refinement layer. SRB keeps
    those convs but makes each refinement layer a shallow residual block.
    FDC swaps the 3x3 distillation convs for 1x1 connections, and RFDB has
    both changes.
    """

    BASE = "base"
    SRB = "srb"
    FDC = "fdc"
    RFDB = "rfdb"

    @property
    def distill_kernel(self) -> int:
        return 1 if self in (BlockVariant.FDC, BlockVariant.RFDB) else 3

    @property
    def residual(self) -> bool:
        return self in (BlockVariant.SRB, BlockVariant.RFDB)


@dataclass(frozen=True)
class LayerSpec:
    name: str
    c_in: int
    c_out: int
    k: int

    @property
    def params(self) -> int:
        return self.c_in * self.c_out * self.k * self.k + self.c_out

    def shapes(self) -> dict[str, tuple[int, ...]]:
        return {f"{self.name}.weight": (self.c_out, self.c_in, self.k, self.k),
                f"{self.name}.bias": (self.c_out,)}


def block_layers(channels: int, distilled: int,
                 variant: BlockVariant = BlockVariant.RFDB, prefix: str = "") -> list[LayerSpec]:
    c, d, k = channels, distilled, variant.distill_kernel
    layers = [LayerSpec(f"{prefix}dl{j}", c, d, k) for j in (1, 2, 3)]
    layers += [LayerSpec(f"{prefix}rl{j}", c, c, 3) for j in (1, 2, 3)]
    layers += [
        LayerSpec(f"{prefix}dl4", c, d, 3),
        LayerSpec(f"{prefix}fuse", 4 * d, c, 1),
        LayerSpec(f"{prefix}cca_down", c, attention_width(c), 1),
        LayerSpec(f"{prefix}cca_up", attention_width(c), c, 1),
    ]
    return layers


def imdb_layers(channels: int, distilled: int, prefix: str = "") -> list[LayerSpec]:
    """Coupled IMDB layers: each of l1..l3 emits distilled + coarse channels."""
    c, d = channels, distilled
    layers = [LayerSpec(f"{prefix}l{j}", c, d + c, 3) for j in (1, 2, 3)]
    layers += [
        LayerSpec(f"{prefix}l4", c, d, 3),
        LayerSpec(f"{prefix}fuse", 4 * d, c, 1),
        LayerSpec(f"{prefix}cca_down", c, attention_width(c), 1),
        LayerSpec(f"{prefix}cca_up", attention_width(c), c, 1),
    ]
    return layers


@dataclass(frozen=True)
class Model:
    """An RFDN graph: configuration plus the block type stacked in its body."""

    config: ModelConfig
    variant: BlockVariant = BlockVariant.RFDB

    def layers(self) -> list[LayerSpec]:
        cfg = self.config
        c = cfg.channels
        layers = [LayerSpec("head", 3, c, 3)]
        for i in range(1, cfg.num_blocks + 1):
            layers += block_layers(c, cfg.distilled, self.variant, prefix=f"block{i}.")
        layers += [
            LayerSpec("fuse1", cfg.num_blocks * c, c, 1),
            LayerSpec("fuse3", c, c, 3),
            LayerSpec("recon", c, cfg.recon_channels, 3),
        ]
        return layers

    def shapes(self) -> dict[str, tuple[int, ...]]:
        out = {}
        for layer in self.layers():
            out.update(layer.shapes())
        return dict(sorted(out.items()))

    def __call__(self, weights, x):
        return rfdn_forward(self, weights, x)


class WeightStore(Mapping):
    """Named parameter tensors, iterated in lexicographic name order."""

    def __init__(self, tensors: Mapping[str, np.ndarray] | None = None):
        self._data = dict(sorted((tensors or {}).items()))

    def __getitem__(self, name):
        return self._data[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self._data)

    def __len__(self):
        return len(self._data)

    def __repr__(self):
        return f"WeightStore({len(self)} tensors, {self.num_params()} params)"

    def num_params(self) -> int:
        return int(sum(v.size for v in self._data.values()))

    def replace(self, updates: Mapping[str, np.ndarray]) -> "WeightStore":
        merged = dict(self._data)
        merged.update(updates)
        return WeightStore(merged)

    def copy(self) -> "WeightStore":
        return WeightStore({k: v.copy() for k, v in self._data.items()})


def init_weights(layers, seed: int = 0, dtype=np.float32) -> WeightStore:
    """Uniform(+-1/sqrt(fan_in)) kernels and zero biases, drawn in name order."""
    rng = np.random.default_rng(seed)
    out = {}
    for layer in sorted(layers, key=lambda l: l.name):
        bound = 1.0 / np.sqrt(layer.c_in * layer.k * layer.k)
        shape = (layer.c_out, layer.c_in, layer.k, layer.k)
        out[f"{layer.name}.weight"] = rng.uniform(-bound, bound, shape).astype(dtype)
        out[f"{layer.name}.bias"] = np.zeros(layer.c_out, dtype)
    return WeightStore(out)


def zero_weights(layers, dtype=np.float32) -> WeightStore:
    out = {}
    for layer in layers:
        for name, shape in layer.shapes().items():
            out[name] = np.zeros(shape, dtype)
    return WeightStore(out)


def conv_weights(weights: Mapping, name: str) -> ConvWeights:
    try:
        return ConvWeights(weights[f"{name}.weight"], weights[f"{name}.bias"])
    except KeyError as exc:
        raise ConfigError(f"missing weight tensor {exc.args[0]!r}") from None


def sub_weights(weights: Mapping, prefix: str) -> dict:
    n = len(prefix)
    return {k[n:]: v for k, v in weights.items() if k.startswith(prefix)}


def _check_layer(w: ConvWeights, name: str, c_in: int, c_out: int, k: int | None = None):
    shape = w.shape
    if shape[0] != c_out or shape[1] != c_in or (k is not None and shape[2] != k):
        want = f"({c_out}, {c_in}, {k or '?'}, {k or '?'})"
        raise ConfigError(f"layer {name} has kernel shape {shape}, expected {want}")


# --------------------------------------------------------------------------
# blocks


def srb_forward(x, w: ConvWeights):
    """Shallow residual block: act(conv3x3(x) + x)."""
    c = ag.value(x).shape[1]
    _check_layer(w, "srb", c, c, 3)
    return ag.leaky_relu(ag.add(ag.conv2d(x, w), x))


def cca_forward(x, w_down: ConvWeights, w_up: ConvWeights):
    """Contrast-aware channel attention: gate channels by sigmoid of (mean + std) features."""
    stats = ag.channel_stats_pool(x)
    gate = ag.sigmoid(ag.conv2d(ag.leaky_relu(ag.conv2d(stats, w_down)), w_up))
    return ag.mul(x, gate)


def _distill_block(x, weights: Mapping, residual: bool):
    c = ag.value(x).shape[1]
    dl = [conv_weights(weights, f"dl{j}") for j in (1, 2, 3, 4)]
    rl = [conv_weights(weights, f"rl{j}") for j in (1, 2, 3)]
    d = dl[0].c_out
    for j, w in enumerate(dl, 1):
        _check_layer(w, f"dl{j}", c, d, 3 if j == 4 else None)
    for j, w in enumerate(rl, 1):
        _check_layer(w, f"rl{j}", c, c, 3)
    fuse = conv_weights(weights, "fuse")
    _check_layer(fuse, "fuse", 4 * d, c, 1)

    distilled = []
    feat = x
    for j in range(3):
        distilled.append(ag.leaky_relu(ag.conv2d(feat, dl[j])))
        if residual:
            feat = srb_forward(feat, rl[j])
        else:
            feat = ag.leaky_relu(ag.conv2d(feat, rl[j]))
    distilled.append(ag.leaky_relu(ag.conv2d(feat, dl[3])))
    fused = ag.conv2d(ag.concat_channels(distilled), fuse)
    attended = cca_forward(fused, conv_weights(weights, "cca_down"), conv_weights(weights, "cca_up"))
    return ag.add(attended, x)


def rfdb_forward(x, weights: Mapping):
    """Residual feature distillation block.

    Distillation connections branch off before each shallow residual block;
    the four distilled maps are concatenated, fused by a 1x1 conv, gated by
    channel attention and added back onto the block input.
    """
    return _distill_block(x, weights, residual=True)


def imdb_r_forward(x, weights: Mapping):
    """Decoupled IMDB: parallel distillation / refinement convs at every stage."""
    return _distill_block(x, weights, residual=False)


def imdb_forward(x, weights: Mapping, rate: float):
    """IMDB with explicit channel splitting.

    Each of ``l1..l3`` produces ``distilled + channels`` maps after activation;
    the first ``distilled`` are retained and the rest feed the next stage.
    """
    c = ag.value(x).shape[1]
    d = distilled_width(c, rate)
    layers = [conv_weights(weights, f"l{j}") for j in (1, 2, 3, 4)]
    for j, w in enumerate(layers[:3], 1):
        _check_layer(w, f"l{j}", c, d + c, 3)
    _check_layer(layers[3], "l4", c, d, 3)

    distilled = []
    coarse = x
    for w in layers[:3]:
        out = ag.leaky_relu(ag.conv2d(coarse, w))
        distilled.append(ag.slice_channels(out, 0, d))
        coarse = ag.slice_channels(out, d, d + c)
    distilled.append(ag.leaky_relu(ag.conv2d(coarse, layers[3])))
    fused = ag.conv2d(ag.concat_channels(distilled), conv_weights(weights, "fuse"))
    attended = cca_forward(fused, conv_weights(weights, "cca_down"), conv_weights(weights, "cca_up"))
    return ag.add(attended, x)


def split_decompose(layer: ConvWeights, distilled: int) -> tuple[ConvWeights, ConvWeights]:
    """Split one conv into the distilling filters ``[0, distilled)`` and the rest."""
    c_out = layer.c_out
    if not 0 < distilled < c_out:
        raise ConfigError(f"cannot split {c_out} filters at {distilled}")
    k, b = layer.kernel, layer.bias
    dl = ConvWeights(np.array(k[:distilled]), np.array(b[:distilled]))
    rl = ConvWeights(np.array(k[distilled:]), np.array(b[distilled:]))
    return dl, rl


def imdb_to_imdb_r(weights: Mapping, distilled: int) -> dict:
    """Rewrite coupled IMDB weights (l1..l4) as decoupled dl/rl weights."""
    out = {}
    for j in (1, 2, 3):
        dl, rl = split_decompose(conv_weights(weights, f"l{j}"), distilled)
        out[f"dl{j}.weight"], out[f"dl{j}.bias"] = dl.kernel, dl.bias
        out[f"rl{j}.weight"], out[f"rl{j}.bias"] = rl.kernel, rl.bias
    out["dl4.weight"], out["dl4.bias"] = weights["l4.weight"], weights["l4.bias"]
    for name in ("fuse", "cca_down", "cca_up"):
        out[f"{name}.weight"], out[f"{name}.bias"] = weights[f"{name}.weight"], weights[f"{name}.bias"]
    return out


# --------------------------------------------------------------------------
# full network

_BLOCK_FN = {
    BlockVariant.BASE: imdb_r_forward,
    BlockVariant.SRB: rfdb_forward,
    BlockVariant.FDC: imdb_r_forward,
    BlockVariant.RFDB: rfdb_forward,
}


def build_variant(variant: BlockVariant | str, config: ModelConfig = RFDN) -> Model:
    return Model(config, BlockVariant(variant))


def build_rfdn(config: ModelConfig = RFDN, seed: int = 0,
               variant: BlockVariant | str = BlockVariant.RFDB) -> tuple[Model, WeightStore]:
    model = build_variant(variant, config)
    return model, init_weights(model.layers(), seed)


def rfdn_forward(model: Model, weights: Mapping, x):
    """Map an LR batch ``(n, 3, h, w)`` in [0, 1] to ``(n, 3, h*s, w*s)``.

    feature extraction -> chained blocks -> 1x1 fusion (+act) and 3x3
    smoothing of all block outputs -> global skip -> 3x3 conv -> sub-pixel
    shuffle.
    """
    cfg = model.config
    block = _BLOCK_FN[model.variant]
    if ag.value(x).shape[1] != 3:
        raise ConfigError(f"model expects 3 input channels, got {ag.value(x).shape[1]}")
    f0 = ag.conv2d(x, conv_weights(weights, "head"))
    feat, outs = f0, []
    for i in range(1, cfg.num_blocks + 1):
        feat = block(feat, sub_weights(weights, f"block{i}."))
        outs.append(feat)
    fused = ag.leaky_relu(ag.conv2d(ag.concat_channels(outs), conv_weights(weights, "fuse1")))
    assembled = ag.conv2d(fused, conv_weights(weights, "fuse3"))
    recon = ag.conv2d(ag.add(assembled, f0), conv_weights(weights, "recon"))
    return ag.pixel_shuffle(recon, cfg.scale)


def check_weights(model: Model, weights: Mapping) -> None:
    """Raise ``ShapeError`` naming the first tensor that does not fit ``model``."""
    expected = model.shapes()
    for name in sorted(set(expected) | set(weights)):
        if name not in weights:
            raise ShapeError(f"{name}: missing from weights")
        if name not in expected:
            raise ShapeError(f"{name}: unexpected tensor for this configuration")
        got = tuple(np.shape(weights[name]))
        if got != expected[name]:
            raise ShapeError(f"{name}: shape {got} != expected {expected[name]}")


def warm_start(weights: Mapping, config: ModelConfig, seed: int = 0) -> WeightStore:
    """Reuse trained weights for a new scale; only the reconstruction conv is redrawn."""
    model = Model(config)
    fresh = init_weights([l for l in model.layers() if l.name == "recon"], seed)
    kept = {k: np.array(v) for k, v in weights.items() if not k.startswith("recon.")}
    store = WeightStore({**kept, **dict(fresh)})
    check_weights(model, store)
    return store


# --------------------------------------------------------------------------
# complexity


def count_params(model) -> int:
    """Parameter count from layer geometry alone (kernels + biases)."""
    layers = model.layers() if hasattr(model, "layers") else model
    return sum(layer.params for layer in layers)


def count_mult_adds(model: Model, hr_h: int, hr_w: int) -> int:
    """Multiply-accumulates to produce an ``hr_h x hr_w`` output.

    Every conv runs at LR resolution (``hr // scale``). Attention (pooling and
    its 1x1 convs on pooled vectors) and elementwise ops are not counted.
    """
    s = model.config.scale
    pixels = (hr_h // s) * (hr_w // s)
    total = 0
    for layer in model.layers():
        if ".cca_" in layer.name:
            continue
        total += layer.c_in * layer.c_out * layer.k * layer.k * pixels
    return total

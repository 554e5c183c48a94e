"""History encoder: temporal convolutions over the recent-word window.

The encoder sees a fixed window of the last ``window`` word embeddings,
padded according to the step index: at t=0 every row is the projected
image vector, for 0 < t < window the embeddings so far are followed by
zero rows, and from t >= window only the last ``window`` embeddings enter
(earlier words cannot affect the output at all).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .errors import DimensionError

HIGHWAY_GATE_BIAS = -2.0
WEIGHT_INIT_RANGE = 0.08

WINDOW_KERNELS = {
    16: (5, 5, 3, 3, 3),
    8: (5, 3, 2),
    4: (3, 2),
    2: (2,),
}

HISTORY_KINDS = ("cnn", "mean")


@dataclass(frozen=True)
class ConvStage:
    """One step of the temporal plan: a convolution or a max-pool."""

    kind: str  # "conv" | "pool"
    kernel: int
    stride: int = 1


@dataclass
class LangCnnConfig:
    window: int = 16
    embed_dim: int = 512
    kernels: tuple[int, ...] = (5, 5, 3, 3, 3)
    use_max_pool: bool = False
    history: str = "cnn"
    stages: tuple[ConvStage, ...] = field(init=False)
    lengths: tuple[int, ...] = field(init=False)

    def __post_init__(self):
        if self.window < 1:
            raise DimensionError(f"window must be >= 1, got {self.window}")
        if self.embed_dim < 1:
            raise DimensionError(f"embed_dim must be >= 1, got {self.embed_dim}")
        if self.history not in HISTORY_KINDS:
            raise ValueError(f"history must be one of {HISTORY_KINDS}")
        self.kernels = tuple(int(k) for k in self.kernels)
        if self.history == "cnn" and not self.kernels:
            raise DimensionError("at least one convolution layer is required")
        self.stages, self.lengths = self._plan()

    def _plan(self) -> tuple[tuple[ConvStage, ...], tuple[int, ...]]:
        if self.history == "mean":
            return (), (self.window,)
        stages: list[ConvStage] = []
        lengths = [self.window]
        for i, kernel in enumerate(self.kernels):
            if kernel < 1:
                raise DimensionError(f"kernel sizes must be >= 1, got {kernel}")
            current = lengths[-1]
            # In the pooled variant the 2nd and 4th layers become max-pools.
            if self.use_max_pool and i in (1, 3):
                if current < 2:
                    raise DimensionError(
                        f"pool stage {i + 1} cannot run on temporal length {current}"
                    )
                stages.append(ConvStage("pool", 2, 2))
                lengths.append((current - 2) // 2 + 1)
                continue
            eff = kernel
            if self.use_max_pool and eff > current:
                # Pooling shrinks lengths faster than the plain stack; clamp
                # the kernel rather than reject the published layout.
                eff = current
            if eff > current:
                raise DimensionError(
                    f"conv kernel {kernel} exceeds temporal length {current} "
                    f"at layer {i + 1}"
                )
            stages.append(ConvStage("conv", eff, 1))
            lengths.append(current - eff + 1)
        if lengths[-1] < 1:
            raise DimensionError("temporal length collapsed below 1")
        return tuple(stages), tuple(lengths)

    @property
    def final_length(self) -> int:
        return self.lengths[-1]


def preset(name: str, embed_dim: int = 512) -> LangCnnConfig:
    """Named ablation configurations.

    window16/window8/window4/window2 select the matched kernel stacks;
    maxpool16 swaps layers 2 and 4 for max-pools; avg_history replaces the
    convolution stack with a plain mean over the window rows.
    """
    if name == "maxpool16":
        return LangCnnConfig(
            window=16, embed_dim=embed_dim, kernels=WINDOW_KERNELS[16],
            use_max_pool=True,
        )
    if name == "avg_history":
        return LangCnnConfig(window=16, embed_dim=embed_dim, history="mean")
    if name.startswith("window"):
        size = int(name[len("window"):])
        if size in WINDOW_KERNELS:
            return LangCnnConfig(
                window=size, embed_dim=embed_dim, kernels=WINDOW_KERNELS[size]
            )
    raise ValueError(f"unknown language-cnn preset {name!r}")


def build_input_window(
    embeddings: Sequence[Tensor], image_vec: Tensor, window: int
) -> Tensor:
    """Assemble the (window, K) input matrix for step t = len(embeddings).

    t == 0: every row is the image vector. 0 < t < window: the embeddings
    so far, then zero rows. t >= window: the last ``window`` embeddings.
    """
    k = image_vec.shape[0]
    for e in embeddings:
        if e.ndim != 1 or e.shape[0] != k:
            raise DimensionError(
                f"embedding rows must have width {k}, got shape {e.shape}"
            )
    t = len(embeddings)
    if t == 0:
        return ag.concat_rows([image_vec] * window)
    if t >= window:
        return ag.concat_rows(list(embeddings[t - window:]))
    pad = Tensor(np.zeros((window - t, k)))
    return ag.concat_rows(list(embeddings) + [pad])


def temporal_conv_forward(
    x: Tensor, kernel: int, weights: Tensor, bias: Tensor, activation: str = "relu"
) -> Tensor:
    """Stride-1 valid convolution over rows: (M, K) -> (M - kernel + 1, K).

    Each output position is an affine map of the flattened kernel x K
    segment, then the activation.
    """
    m, k = x.shape
    if weights.shape != (kernel * k, k):
        raise DimensionError(
            f"conv weights must be ({kernel * k}, {k}), got {weights.shape}"
        )
    if bias.shape != (k,):
        raise DimensionError(f"conv bias must be ({k},), got {bias.shape}")
    segments = ag.unfold_windows(x, kernel)
    pre = ag.add(ag.matmul(segments, weights), bias)
    if activation == "relu":
        return ag.relu(pre)
    if activation == "tanh":
        return ag.tanh(pre)
    if activation == "linear":
        return pre
    raise ValueError(f"unknown activation {activation!r}")


def highway_forward(
    x: Tensor, gate_w: Tensor, gate_b: Tensor, trans_w: Tensor, trans_b: Tensor
) -> Tensor:
    """g*relu(Wx+b) + (1-g)*x with g = sigmoid(gate affine)."""
    gate = ag.sigmoid(ag.add(ag.matmul(gate_w, x), gate_b))
    trans = ag.relu(ag.add(ag.matmul(trans_w, x), trans_b))
    carry = ag.scale_shift(gate, -1.0, 1.0)
    return ag.add(ag.mul(gate, trans), ag.mul(carry, x))


def init_encoder_params(
    config: LangCnnConfig, rng: np.random.Generator
) -> dict[str, Tensor]:
    """Parameter tensors for the history encoder; empty for the mean variant."""

    def uniform(*shape):
        return Tensor(
            rng.uniform(-WEIGHT_INIT_RANGE, WEIGHT_INIT_RANGE, size=shape),
            requires_grad=True,
        )

    if config.history == "mean":
        return {}
    k = config.embed_dim
    params: dict[str, Tensor] = {}
    conv_i = 0
    # Biases are drawn like the weights: zero-padded window rows then sit
    # a bias-width away from the relu kink instead of exactly on it.
    for stage in config.stages:
        if stage.kind != "conv":
            continue
        params[f"conv{conv_i}_w"] = uniform(stage.kernel * k, k)
        params[f"conv{conv_i}_b"] = uniform(k)
        conv_i += 1
    flat = config.final_length * k
    params["proj_w"] = uniform(k, flat)
    params["proj_b"] = uniform(k)
    params["hw_gate_w"] = uniform(k, k)
    params["hw_gate_b"] = Tensor(np.full(k, HIGHWAY_GATE_BIAS), requires_grad=True)
    params["hw_trans_w"] = uniform(k, k)
    params["hw_trans_b"] = uniform(k)
    return params


def encode_history(
    window: Tensor, config: LangCnnConfig, params: dict[str, Tensor]
) -> Tensor:
    """Window matrix -> history summary vector of width embed_dim."""
    if window.shape != (config.window, config.embed_dim):
        raise DimensionError(
            f"window must be ({config.window}, {config.embed_dim}), "
            f"got {window.shape}"
        )
    if config.history == "mean":
        return ag.mean_rows(window)
    x = window
    conv_i = 0
    for stage in config.stages:
        if stage.kind == "pool":
            x = ag.max_pool_rows(x, stage.kernel, stage.stride)
        else:
            x = temporal_conv_forward(
                x, stage.kernel, params[f"conv{conv_i}_w"], params[f"conv{conv_i}_b"]
            )
            conv_i += 1
    flat = ag.flatten(x)
    projected = ag.relu(ag.add(ag.matmul(params["proj_w"], flat), params["proj_b"]))
    return highway_forward(
        projected,
        params["hw_gate_w"],
        params["hw_gate_b"],
        params["hw_trans_w"],
        params["hw_trans_b"],
    )

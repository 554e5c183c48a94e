"""The captioner: embeddings, history encoder, fusion, cell, output layer.

Teacher-forced loss sums -log softmax over every step t = 0..N-1 of a
<START> ... <END> token record, including the t=0 step that predicts
<START> from the all-image window. Image features enter the computation
twice: as window padding at t=0 and through the g_v branch of the fusion
at every step (or, with the encoder disabled, only at t=0 through g_v).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autograd as ag
from . import cells, language_cnn
from .autograd import Tensor
from .data import CaptionRecord
from .errors import DimensionError

WEIGHT_INIT_RANGE = 0.08
DEFAULT_DROPOUT = 0.5


@dataclass
class ModelConfig:
    vocab_size: int
    feature_dim: int
    embed_dim: int = 512
    hidden_dim: int = 512
    cell: str = "simple_rnn"
    cell_layers: int = 1
    use_cnn_l: bool = True
    dropout: float = DEFAULT_DROPOUT
    langcnn: language_cnn.LangCnnConfig = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.vocab_size < 4:
            raise ValueError(
                f"vocab_size must cover the specials plus a word, got {self.vocab_size}"
            )
        if self.feature_dim < 1 or self.embed_dim < 1 or self.hidden_dim < 1:
            raise ValueError("dimensions must be positive")
        if self.cell not in cells.CELL_KINDS:
            raise ValueError(f"cell must be one of {cells.CELL_KINDS}")
        if self.cell_layers < 1 or (self.cell_layers > 1 and self.cell != "lstm"):
            raise ValueError("only lstm cells stack; cell_layers must be 1 otherwise")
        if self.cell == "lstm" and self.cell_layers > 3:
            raise ValueError("lstm stacks of up to 3 layers are supported")
        if not (0.0 <= self.dropout < 1.0):
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.langcnn is None:
            self.langcnn = language_cnn.LangCnnConfig(embed_dim=self.embed_dim)
        if self.langcnn.embed_dim != self.embed_dim:
            raise DimensionError(
                "history encoder embed_dim must match the model embed_dim"
            )


class CaptionerModel:
    """Holds every parameter tensor plus the training-mode switch."""

    def __init__(self, config: ModelConfig, seed: int = 0):
        self.config = config
        self.training = False
        self._dropout_rng: np.random.Generator | None = None
        rng = np.random.default_rng(seed)

        def uniform(*shape):
            return Tensor(
                rng.uniform(-WEIGHT_INIT_RANGE, WEIGHT_INIT_RANGE, size=shape),
                requires_grad=True,
            )

        v, k, d = config.vocab_size, config.embed_dim, config.hidden_dim
        params: dict[str, Tensor] = {}
        params["embedding"] = uniform(v, k)
        params["img_w"] = uniform(k, config.feature_dim)
        params["img_b"] = uniform(k)
        if config.use_cnn_l:
            for name, t in language_cnn.init_encoder_params(config.langcnn, rng).items():
                params[f"enc_{name}"] = t
            params["fuse_y_w"] = uniform(k, k)
            params["fuse_y_b"] = uniform(k)
        params["fuse_v_w"] = uniform(k, k)
        params["fuse_v_b"] = uniform(k)
        for name, t in cells.init_cell_params(
            config.cell, 2 * k, d, rng, layers=config.cell_layers
        ).items():
            params[f"cell_{name}"] = t
        params["out_w"] = uniform(v, d)
        params["out_b"] = uniform(v)
        self.params = params
        # Encoder params under their local names; tensors are shared, so
        # in-place updates through either view stay coherent.
        self.encoder_params = {
            name[len("enc_"):]: t for name, t in params.items()
            if name.startswith("enc_")
        }

    def set_training(self, training: bool, rng: np.random.Generator | None = None):
        self.training = bool(training)
        if training and rng is None and self._dropout_rng is None:
            rng = np.random.default_rng(0)
        if rng is not None:
            self._dropout_rng = rng

    def parameters(self) -> dict[str, Tensor]:
        return self.params

    def zero_grads(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def initial_state(self) -> list[cells.CellState]:
        return cells.initial_state(
            self.config.cell, self.config.cell_layers, self.config.hidden_dim
        )

    def _dropout(self, x: Tensor) -> Tensor:
        """Inverted dropout; the identity outside training mode."""
        rate = self.config.dropout
        if not self.training or rate == 0.0:
            return x
        mask = (self._dropout_rng.random(x.shape) >= rate) / (1.0 - rate)
        return ag.mul(x, Tensor(mask))


def multimodal_fuse(
    y_t: Tensor, v_proj: Tensor, params: dict[str, Tensor]
) -> Tensor:
    """m = 1.7159 * tanh(2/3 * (f_y(y) + g_v(V))); both branches affine."""
    f_y = ag.add(ag.matmul(params["fuse_y_w"], y_t), params["fuse_y_b"])
    g_v = ag.add(ag.matmul(params["fuse_v_w"], v_proj), params["fuse_v_b"])
    return ag.scaled_tanh(ag.add(f_y, g_v))


def step(
    model: CaptionerModel,
    history: list[int],
    features: np.ndarray,
    state: list[cells.CellState],
) -> tuple[Tensor, list[cells.CellState]]:
    """Logits over the next token given the word history so far.

    ``history`` holds the already-known tokens S[0..t-1]; the returned
    logits score S[t]. The advanced cell state must be threaded into the
    next call.
    """
    config = model.config
    features = np.asarray(features, dtype=np.float64)
    if features.shape != (config.feature_dim,):
        raise DimensionError(
            f"feature vector must have shape ({config.feature_dim},), "
            f"got {features.shape}"
        )
    v = config.vocab_size
    for tok in history:
        if not (0 <= int(tok) < v):
            raise IndexError(f"history token {tok} out of range for vocab {v}")
    params = model.params
    t = len(history)
    v_proj = ag.add(
        ag.matmul(params["img_w"], Tensor(features)), params["img_b"]
    )
    embs = [ag.embedding_lookup(params["embedding"], tok) for tok in history]
    if config.use_cnn_l:
        window = language_cnn.build_input_window(embs, v_proj, config.langcnn.window)
        y_t = language_cnn.encode_history(window, config.langcnn, model.encoder_params)
        m_t = model._dropout(multimodal_fuse(y_t, v_proj, params))
    elif t == 0:
        m_t = ag.add(ag.matmul(params["fuse_v_w"], v_proj), params["fuse_v_b"])
    else:
        m_t = Tensor(np.zeros(config.embed_dim))
    x_prev = embs[-1] if t >= 1 else Tensor(np.zeros(config.embed_dim))
    z = cells.make_input_z(m_t, x_prev)
    new_state = cells.step_stack(config.cell, state, z, params, base="cell_")
    r_top = model._dropout(new_state[-1].r)
    logits = ag.add(ag.matmul(params["out_w"], r_top), params["out_b"])
    return logits, new_state


def sequence_loss(
    model: CaptionerModel, record: CaptionRecord, features: np.ndarray
) -> Tensor:
    """Sum of per-step cross-entropies under teacher forcing."""
    tokens = record.tokens
    if len(tokens) < 2:
        raise ValueError("caption records need at least <START> and <END>")
    state = model.initial_state()
    total: Tensor | None = None
    for t, target in enumerate(tokens):
        logits, state = step(model, tokens[:t], features, state)
        ce = ag.softmax_cross_entropy(logits, target)
        total = ce if total is None else ag.add(total, ce)
    return total


def parameter_count(model: CaptionerModel) -> tuple[int, dict[str, int]]:
    """Total scalar parameters and a per-component breakdown."""
    groups = {
        "embedding": ("embedding",),
        "image_projection": ("img_",),
        "history_encoder": ("enc_",),
        "fusion": ("fuse_",),
        "cell": ("cell_",),
        "output": ("out_",),
    }
    breakdown = {name: 0 for name in groups}
    for name, tensor in model.params.items():
        for group, prefixes in groups.items():
            if any(name == p or name.startswith(p) for p in prefixes):
                breakdown[group] += tensor.data.size
                break
        else:
            raise AssertionError(f"parameter {name!r} not covered by any group")
    breakdown = {g: n for g, n in breakdown.items() if n > 0}
    return sum(breakdown.values()), breakdown


def format_parameter_report(model: CaptionerModel) -> str:
    total, breakdown = parameter_count(model)
    lines = [f"{group}\t{count}" for group, count in breakdown.items()]
    lines.append(f"total\t{total}")
    return "\n".join(lines)

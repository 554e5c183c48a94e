"""Flat run configuration: ``key = value`` files plus command-line overrides.

Every model, encoder, data, and trainer knob is addressable by a dotted
key from the registry below. Unknown keys are rejected. The effective
configuration is echoed verbatim into the output directory of commands
that produce one.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ParseError, UsageError
from .language_cnn import WINDOW_KERNELS, LangCnnConfig
from .model import ModelConfig
from .training import TrainConfig


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("true", "1", "yes", "on"):
        return True
    if low in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_kernels(text: str):
    text = text.strip()
    if text == "auto":
        return "auto"
    return tuple(int(k) for k in text.split(",") if k.strip())


def _parse_optional_float(text: str):
    return None if text.strip().lower() == "none" else float(text)


# key -> (parser, default, help)
REGISTRY: dict[str, tuple] = {
    "model.cell": (str, "simple_rnn", "simple_rnn | lstm | gru | rhn"),
    "model.cell_layers": (int, 1, "stacked layers (lstm only, 1..3)"),
    "model.embed_dim": (int, 512, "word/image embedding width K"),
    "model.hidden_dim": (int, 512, "recurrent hidden width d"),
    "model.dropout": (float, 0.5, "dropout rate on fused and output vectors"),
    "model.use_cnn_l": (_parse_bool, True, "enable the history-convolution branch"),
    "model.seed": (int, 0, "parameter initialization seed"),
    "cnn.window": (int, 16, "history window length (2, 4, 8, or 16 for presets)"),
    "cnn.kernels": (_parse_kernels, "auto", "comma kernels, or auto from window"),
    "cnn.max_pool": (_parse_bool, False, "swap conv layers 2 and 4 for max-pools"),
    "cnn.history": (str, "cnn", "cnn | mean (mean = averaged history baseline)"),
    "data.min_count": (int, 5, "minimum token count kept in the vocabulary"),
    "data.max_words": (int, 16, "interior caption truncation length"),
    "train.base_lr": (float, 2e-4, "Adam base learning rate"),
    "train.epochs": (int, 20, "maximum training epochs"),
    "train.batch_size": (int, 16, "records per Adam update"),
    "train.clip_norm": (_parse_optional_float, 5.0, "global grad-norm clip; none disables"),
    "train.patience": (int, 5, "epochs past the best CIDEr before stopping"),
    "train.beam": (int, 2, "beam width for validation decoding"),
    "train.seed": (int, 0, "shuffle/dropout seed"),
    "train.eval_every": (int, 1, "validate every this many epochs"),
    "train.restart_period": (int, 5, "epochs in the first cosine period"),
    "train.restart_mult": (int, 2, "period growth factor at each restart"),
    "train.lr_floor": (_parse_optional_float, None, "cosine floor; none = base/100"),
    "train.max_decode_len": (int, 16, "interior decode cap"),
}


@dataclass
class RunConfig:
    values: dict

    @classmethod
    def defaults(cls) -> "RunConfig":
        return cls({key: default for key, (_, default, _) in REGISTRY.items()})

    def set(self, key: str, raw: str) -> None:
        if key not in REGISTRY:
            raise UsageError(f"unknown config key {key!r}")
        parser = REGISTRY[key][0]
        try:
            self.values[key] = parser(raw)
        except ValueError as exc:
            raise UsageError(f"bad value for {key}: {exc}")

    def apply_file(self, path) -> None:
        with open(path, encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise ParseError("expected key = value", path, line_no)
                key, _, value = line.partition("=")
                try:
                    self.set(key.strip(), value.strip())
                except UsageError as exc:
                    raise ParseError(str(exc), path, line_no)

    def apply_overrides(self, overrides: list[str] | None) -> None:
        for item in overrides or []:
            if "=" not in item:
                raise UsageError(f"override must look like key=value, got {item!r}")
            key, _, value = item.partition("=")
            self.set(key.strip(), value.strip())

    @classmethod
    def load(cls, path=None, overrides: list[str] | None = None) -> "RunConfig":
        """Defaults, then file values, then ``key=value`` overrides on top."""
        config = cls.defaults()
        if path is not None:
            config.apply_file(path)
        config.apply_overrides(overrides)
        return config

    def echo(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for key in sorted(self.values):
                value = self.values[key]
                if isinstance(value, tuple):
                    value = ",".join(str(v) for v in value)
                elif isinstance(value, bool):
                    value = str(value).lower()
                fh.write(f"{key} = {value}\n")

    def langcnn_config(self) -> LangCnnConfig:
        window = self.values["cnn.window"]
        kernels = self.values["cnn.kernels"]
        if kernels == "auto":
            if window not in WINDOW_KERNELS:
                raise UsageError(
                    f"no kernel preset for window {window}; set cnn.kernels"
                )
            kernels = WINDOW_KERNELS[window]
        return LangCnnConfig(
            window=window,
            embed_dim=self.values["model.embed_dim"],
            kernels=kernels,
            use_max_pool=self.values["cnn.max_pool"],
            history=self.values["cnn.history"],
        )

    def model_config(self, vocab_size: int, feature_dim: int) -> ModelConfig:
        return ModelConfig(
            vocab_size=vocab_size,
            feature_dim=feature_dim,
            embed_dim=self.values["model.embed_dim"],
            hidden_dim=self.values["model.hidden_dim"],
            cell=self.values["model.cell"],
            cell_layers=self.values["model.cell_layers"],
            use_cnn_l=self.values["model.use_cnn_l"],
            dropout=self.values["model.dropout"],
            langcnn=self.langcnn_config(),
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            base_lr=self.values["train.base_lr"],
            epochs=self.values["train.epochs"],
            batch_size=self.values["train.batch_size"],
            clip_norm=self.values["train.clip_norm"],
            patience=self.values["train.patience"],
            beam_size=self.values["train.beam"],
            seed=self.values["train.seed"],
            eval_every=self.values["train.eval_every"],
            restart_period=self.values["train.restart_period"],
            restart_mult=self.values["train.restart_mult"],
            lr_floor=self.values["train.lr_floor"],
            max_decode_len=self.values["train.max_decode_len"],
        )

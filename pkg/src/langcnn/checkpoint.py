"""Checkpoints: a directory holding the config manifest, the vocabulary,
and every parameter in one flat little-endian float64 blob with a named
offset index. Round-trips are bit-exact.

    manifest.txt   key = value lines (model + encoder config)
    vocab.tsv      index<TAB>token<TAB>count
    params.bin     concatenated raw float64 values
    params.idx     name<TAB>offset<TAB>dim1,dim2,...
"""

from __future__ import annotations

import os

import numpy as np

from .data import Vocabulary
from .errors import ParseError
from .language_cnn import LangCnnConfig
from .model import CaptionerModel, ModelConfig

_BLOB_DTYPE = "<f8"


def _manifest_items(config: ModelConfig) -> list[tuple[str, str]]:
    lc = config.langcnn
    return [
        ("vocab_size", str(config.vocab_size)),
        ("feature_dim", str(config.feature_dim)),
        ("embed_dim", str(config.embed_dim)),
        ("hidden_dim", str(config.hidden_dim)),
        ("cell", config.cell),
        ("cell_layers", str(config.cell_layers)),
        ("use_cnn_l", str(config.use_cnn_l).lower()),
        ("dropout", repr(config.dropout)),
        ("cnn_window", str(lc.window)),
        ("cnn_kernels", ",".join(str(k) for k in lc.kernels)),
        ("cnn_max_pool", str(lc.use_max_pool).lower()),
        ("cnn_history", lc.history),
    ]


def _parse_manifest(path) -> ModelConfig:
    values: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ParseError("expected key = value", path, line_no)
            key, _, value = line.partition("=")
            values[key.strip()] = value.strip()
    try:
        langcnn = LangCnnConfig(
            window=int(values["cnn_window"]),
            embed_dim=int(values["embed_dim"]),
            kernels=tuple(
                int(k) for k in values["cnn_kernels"].split(",") if k
            ) or (5, 5, 3, 3, 3),
            use_max_pool=values["cnn_max_pool"] == "true",
            history=values["cnn_history"],
        )
        return ModelConfig(
            vocab_size=int(values["vocab_size"]),
            feature_dim=int(values["feature_dim"]),
            embed_dim=int(values["embed_dim"]),
            hidden_dim=int(values["hidden_dim"]),
            cell=values["cell"],
            cell_layers=int(values["cell_layers"]),
            use_cnn_l=values["use_cnn_l"] == "true",
            dropout=float(values["dropout"]),
            langcnn=langcnn,
        )
    except KeyError as exc:
        raise ParseError(f"manifest missing key {exc.args[0]!r}", path)


def save_checkpoint(directory, model: CaptionerModel, vocab: Vocabulary) -> None:
    os.makedirs(directory, exist_ok=True)
    with open(os.path.join(directory, "manifest.txt"), "w", encoding="utf-8") as fh:
        for key, value in _manifest_items(model.config):
            fh.write(f"{key} = {value}\n")
    vocab.save(os.path.join(directory, "vocab.tsv"))
    offset = 0
    index_lines = []
    chunks = []
    for name, tensor in model.params.items():
        flat = np.ascontiguousarray(tensor.data, dtype=_BLOB_DTYPE).reshape(-1)
        dims = ",".join(str(d) for d in tensor.data.shape)
        index_lines.append(f"{name}\t{offset}\t{dims}")
        chunks.append(flat.tobytes())
        offset += flat.size
    with open(os.path.join(directory, "params.bin"), "wb") as fh:
        fh.write(b"".join(chunks))
    with open(os.path.join(directory, "params.idx"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(index_lines) + "\n")


def load_checkpoint(directory) -> tuple[CaptionerModel, Vocabulary]:
    manifest = os.path.join(directory, "manifest.txt")
    if not os.path.exists(manifest):
        raise ParseError("not a checkpoint directory (manifest.txt missing)", directory)
    config = _parse_manifest(manifest)
    vocab = Vocabulary.load(os.path.join(directory, "vocab.tsv"))
    if len(vocab) != config.vocab_size:
        raise ParseError(
            f"vocabulary size {len(vocab)} does not match manifest "
            f"vocab_size {config.vocab_size}",
            directory,
        )
    model = CaptionerModel(config, seed=0)
    blob = np.fromfile(os.path.join(directory, "params.bin"), dtype=_BLOB_DTYPE)
    idx_path = os.path.join(directory, "params.idx")
    seen = set()
    with open(idx_path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ParseError("expected name<TAB>offset<TAB>dims", idx_path, line_no)
            name, offset_s, dims_s = parts
            if name not in model.params:
                raise ParseError(f"unknown parameter {name!r}", idx_path, line_no)
            tensor = model.params[name]
            shape = tuple(int(d) for d in dims_s.split(",") if d)
            if shape != tensor.data.shape:
                raise ParseError(
                    f"parameter {name!r} shape {shape} does not match model "
                    f"shape {tensor.data.shape}",
                    idx_path,
                    line_no,
                )
            offset = int(offset_s)
            size = tensor.data.size
            if offset + size > blob.size:
                raise ParseError(f"blob too short for {name!r}", idx_path, line_no)
            tensor.data[...] = blob[offset : offset + size].reshape(shape)
            seen.add(name)
    missing = set(model.params) - seen
    if missing:
        raise ParseError(f"checkpoint missing parameters: {sorted(missing)}", idx_path)
    return model, vocab

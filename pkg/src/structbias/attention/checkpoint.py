"""Model checkpoints as a directory of plain files.

* ``config.json``: model config and vocabulary;
* ``weights.npz``: every parameter except the bias tables;
* ``bias_tables.json``: bias tables as explicit (head, key, value) records,
  so a table can be read back by key without knowing the bucket layout.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from structbias.attention.bias import BiasTable
from structbias.attention.model import ModelConfig, Seq2Seq, Vocab


class CheckpointError(ValueError):
    pass


def save(path: str | Path, model: Seq2Seq, vocab: Vocab, extra: dict | None = None) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    meta = {"config": model.config.to_dict(), "vocab": vocab.itos, **(extra or {})}
    (path / "config.json").write_text(json.dumps(meta, indent=2, ensure_ascii=False) + "\n")
    dense = {k: v for k, v in model.params.items() if not k.startswith("bias.")}
    np.savez(path / "weights.npz", **dense)
    tables = {name: {"kind": t.kind, "heads": t.n_heads, "entries": t.to_entries()}
              for name, t in model.bias_tables().items()}
    (path / "bias_tables.json").write_text(json.dumps(tables, indent=1) + "\n")
    return path


def load(path: str | Path) -> tuple[Seq2Seq, Vocab, dict]:
    path = Path(path)
    try:
        meta = json.loads((path / "config.json").read_text())
        tables = json.loads((path / "bias_tables.json").read_text())
        with np.load(path / "weights.npz") as z:
            dense = {k: z[k].copy() for k in z.files}
    except FileNotFoundError as e:
        raise CheckpointError(f"incomplete checkpoint: {e.filename} is missing") from None
    config = ModelConfig.from_dict(meta["config"])
    vocab = Vocab(meta["vocab"][4:])
    if vocab.itos != meta["vocab"]:
        raise CheckpointError("vocabulary does not start with the special tokens")
    if len(vocab) != config.vocab_size:
        raise CheckpointError(f"vocabulary has {len(vocab)} entries, config says {config.vocab_size}")
    model = Seq2Seq(config)
    expected = {k: v.shape for k, v in model.params.items() if not k.startswith("bias.")}
    got = {k: v.shape for k, v in dense.items()}
    if expected != got:
        diff = sorted(set(expected.items()) ^ set(got.items()))
        raise CheckpointError(f"weights do not match the config: {diff[:4]}")
    model.params.update(dense)
    want = set(model.bias_tables())
    if set(tables) != want:
        raise CheckpointError(f"bias tables {sorted(tables)} do not match placement {config.placement!r}")
    for name, spec in tables.items():
        kind = config.dec_kind if name == "dec" else config.enc_kind
        if spec["kind"] != kind or spec["heads"] != config.n_heads:
            raise CheckpointError(f"bias table {name} has kind {spec['kind']} / {spec['heads']} heads")
        t = BiasTable.from_entries(kind, config.n_heads, spec["entries"], config.clips)
        if name == "dec":
            model.params["bias.dec"][:] = t.values
        else:
            model.params["bias.enc"][int(name.split(".")[1])] = t.values
    extra = {k: v for k, v in meta.items() if k not in ("config", "vocab")}
    return model, vocab, extra

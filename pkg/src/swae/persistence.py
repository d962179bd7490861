"""Binary checkpoints: parameters, Adam moments, vocabulary, config, counters and RNG state.

Layout (all integers little-endian)::

    b"SWAE"  version:u8
    manifest_len:u64  manifest:JSON(utf-8)  manifest_crc32:u32
    data_crc32:u32  data: float64-LE arrays at the manifest offsets
"""

from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .config import TrainConfig
from .data import Vocab
from .objectives import AnnealSchedule
from .seqmodel import ModelDims, SeqModel

MAGIC = b"SWAE"
VERSION = 1


class CheckpointError(Exception):
    pass


class UnsupportedFormatError(CheckpointError):
    pass


class IntegrityError(CheckpointError):
    pass


def _pack(arrays: dict[str, np.ndarray]) -> tuple[list[dict], bytes]:
    entries = []
    chunks = []
    offset = 0
    for name, arr in arrays.items():
        raw = np.ascontiguousarray(arr, dtype="<f8").tobytes()
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset, "nbytes": len(raw)})
        chunks.append(raw)
        offset += len(raw)
    return entries, b"".join(chunks)


def save_checkpoint(path, trainer=None, *, model=None, optim=None, vocab=None, config=None, counters=None) -> None:
    """Write a checkpoint from a :class:`~swae.training.Trainer` or from explicit parts."""
    if trainer is not None:
        model, optim, vocab, config = trainer.model, trainer.optim, trainer.vocab, trainer.config
        counters = {
            "epoch": trainer.epoch,
            "step": trainer.step,
            "batch_in_epoch": trainer.batch_in_epoch,
            "lr": trainer.lr,
            "epoch_weighted_kl": trainer.epoch_weighted_kl,
            "epoch_examples": trainer.epoch_examples,
            "schedule": None if trainer.schedule is None else trainer.schedule.state(),
            "rng": trainer.rng.bit_generator.state,
        }
    counters = dict(counters or {})
    arrays = {f"param/{n}": t.data for n, t in model.params.items()}
    if optim is not None and optim.m:
        for n, m, v in zip(model.params, optim.m, optim.v):
            arrays[f"adam_m/{n}"] = m
            arrays[f"adam_v/{n}"] = v
    entries, data = _pack(arrays)
    manifest = {
        "config": config.to_dict() if config is not None else None,
        "vocab": vocab.itos if vocab is not None else None,
        "dims": [model.dims.vocab_size, model.dims.emb_dim, model.dims.hidden_dim, model.dims.latent_dim],
        "optim_step": optim.step if optim is not None else 0,
        "counters": counters,
        "arrays": entries,
    }
    mbytes = json.dumps(manifest, sort_keys=True).encode("utf-8")
    blob = (
        MAGIC
        + bytes([VERSION])
        + struct.pack("<Q", len(mbytes))
        + mbytes
        + struct.pack("<I", zlib.crc32(mbytes))
        + struct.pack("<I", zlib.crc32(data))
        + data
    )
    path = Path(path)
    try:
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_bytes(blob)
        tmp.replace(path)
    except OSError as exc:
        raise CheckpointError(f"cannot write checkpoint {path}: {exc}") from exc


def read_checkpoint(path) -> dict:
    """Parse and verify a checkpoint; returns the manifest with an ``arrays`` name->ndarray map."""
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if len(blob) < 5 or blob[:4] != MAGIC:
        raise UnsupportedFormatError(f"{path}: not a checkpoint (bad magic)")
    if blob[4] != VERSION:
        raise UnsupportedFormatError(f"{path}: unsupported checkpoint version {blob[4]}, expected {VERSION}")
    pos = 5
    if len(blob) < pos + 8:
        raise IntegrityError(f"{path}: truncated header")
    (mlen,) = struct.unpack_from("<Q", blob, pos)
    pos += 8
    if len(blob) < pos + mlen + 8:
        raise IntegrityError(f"{path}: truncated manifest")
    mbytes = blob[pos : pos + mlen]
    pos += mlen
    (mcrc,) = struct.unpack_from("<I", blob, pos)
    (dcrc,) = struct.unpack_from("<I", blob, pos + 4)
    pos += 8
    if zlib.crc32(mbytes) != mcrc:
        raise IntegrityError(f"{path}: manifest checksum mismatch")
    data = blob[pos:]
    if zlib.crc32(data) != dcrc:
        raise IntegrityError(f"{path}: data checksum mismatch or truncated data")
    manifest = json.loads(mbytes.decode("utf-8"))
    arrays = {}
    for e in manifest["arrays"]:
        start, stop = e["offset"], e["offset"] + e["nbytes"]
        if stop > len(data):
            raise IntegrityError(f"{path}: array {e['name']} extends past end of data")
        arrays[e["name"]] = np.frombuffer(data[start:stop], dtype="<f8").astype(np.float64).reshape(e["shape"])
    manifest["arrays"] = arrays
    return manifest


def load_checkpoint(path):
    """Return ``(model, optim, vocab, config, counters)``."""
    m = read_checkpoint(path)
    V, E, H, Z = m["dims"]
    dims = ModelDims(V, E, H, Z)
    arrays = m["arrays"]
    params = {}
    for name in SeqModel.PARAM_NAMES:
        key = f"param/{name}"
        if key not in arrays:
            raise IntegrityError(f"{path}: missing parameter {name}")
        params[name] = Tensor(arrays[key])
    model = SeqModel(dims, params)
    optim = ag.OptimState.for_params([p.data for p in model.parameters()])
    if all(f"adam_m/{n}" in arrays for n in SeqModel.PARAM_NAMES):
        optim.m = [arrays[f"adam_m/{n}"].copy() for n in SeqModel.PARAM_NAMES]
        optim.v = [arrays[f"adam_v/{n}"].copy() for n in SeqModel.PARAM_NAMES]
    optim.step = m["optim_step"]
    vocab = Vocab(m["vocab"][4:]) if m["vocab"] is not None else None
    if vocab is not None and vocab.itos != m["vocab"]:
        raise IntegrityError(f"{path}: reserved vocabulary entries do not match")
    config = TrainConfig.from_dict(m["config"]) if m["config"] is not None else None
    return model, optim, vocab, config, m["counters"]


def load_trainer(path, sources=None, targets=None):
    """Rebuild a :class:`Trainer` mid-run. The corpus is reloaded from the config unless given."""
    from .data import load_corpus, load_paired_corpus
    from .training import Trainer

    model, optim, vocab, config, counters = load_checkpoint(path)
    if sources is None:
        if config.is_dialog:
            sources, targets = load_paired_corpus(config.corpus, config.max_len)
        else:
            sources = load_corpus(config.corpus, config.max_len)
    trainer = Trainer(config, sources, targets, vocab=vocab, model=model)
    trainer.optim = optim
    trainer.epoch = counters["epoch"]
    trainer.step = counters["step"]
    trainer.batch_in_epoch = counters["batch_in_epoch"]
    trainer.lr = counters["lr"]
    trainer.epoch_weighted_kl = counters["epoch_weighted_kl"]
    trainer.epoch_examples = counters["epoch_examples"]
    if counters.get("schedule") is not None:
        trainer.schedule = AnnealSchedule(**counters["schedule"])
    trainer.rng.bit_generator.state = counters["rng"]
    return trainer

import struct

import numpy as np
import pytest

from swae.config import TrainConfig
from swae.data import RESERVED, synth_corpus
from swae.persistence import (
    IntegrityError,
    UnsupportedFormatError,
    load_checkpoint,
    read_checkpoint,
    save_checkpoint,
)
from swae.training import Trainer

CORPUS = synth_corpus(40, np.random.default_rng(0))


def small_config(mode="wae-s", **kw):
    base = dict(seed=3, mode=mode, emb_dim=6, hidden_dim=8, latent_dim=3, batch_size=8, epochs=2, lambda_kl=0.1)
    base.update(kw)
    return TrainConfig(**base)


@pytest.fixture
def trained(tmp_path):
    tr = Trainer(small_config(), CORPUS)
    tr.train_steps(3)
    path = tmp_path / "m.ckpt"
    tr.save(path)
    return tr, path


def test_magic_and_version(trained):
    _, path = trained
    assert path.read_bytes()[:5] == bytes([0x53, 0x57, 0x41, 0x45, 0x01])


def test_round_trip_is_bitwise(trained):
    tr, path = trained
    model, optim, vocab, config, counters = load_checkpoint(path)
    for name, t in tr.model.params.items():
        assert model.params[name].data.tobytes() == t.data.tobytes()
    for a, b in zip(optim.m + optim.v, tr.optim.m + tr.optim.v):
        assert a.tobytes() == b.tobytes()
    assert optim.step == tr.optim.step == 3
    assert config == tr.config
    assert counters["step"] == 3


def test_vocab_round_trip_keeps_reserved_ids(trained):
    tr, path = trained
    vocab = load_checkpoint(path)[2]
    assert vocab == tr.vocab
    assert tuple(vocab.itos[:4]) == RESERVED


def test_manifest_corruption_detected(trained):
    _, path = trained
    blob = bytearray(path.read_bytes())
    blob[13 + 10] ^= 0xFF  # a byte inside the JSON manifest
    path.write_bytes(bytes(blob))
    with pytest.raises(IntegrityError, match="manifest"):
        load_checkpoint(path)


def test_data_corruption_detected(trained):
    _, path = trained
    blob = bytearray(path.read_bytes())
    blob[-3] ^= 0x01
    path.write_bytes(bytes(blob))
    with pytest.raises(IntegrityError):
        load_checkpoint(path)


@pytest.mark.parametrize("keep", [3, 5, 12, 200, -1])
def test_truncation_rejected(trained, keep):
    _, path = trained
    blob = path.read_bytes()
    path.write_bytes(blob[:keep])
    with pytest.raises((IntegrityError, UnsupportedFormatError)):
        load_checkpoint(path)


def test_bad_magic_and_version(trained, tmp_path):
    _, path = trained
    blob = path.read_bytes()
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"NOPE" + blob[4:])
    with pytest.raises(UnsupportedFormatError, match="magic"):
        read_checkpoint(bad)
    bad.write_bytes(blob[:4] + bytes([2]) + blob[5:])
    with pytest.raises(UnsupportedFormatError, match="version 2"):
        read_checkpoint(bad)


def test_manifest_length_prefix(trained):
    _, path = trained
    blob = path.read_bytes()
    (n,) = struct.unpack_from("<Q", blob, 5)
    assert blob[13 : 13 + n].startswith(b"{")


def test_unwritable_path_names_path(tmp_path):
    tr = Trainer(small_config(), CORPUS)
    target = tmp_path / "missing-dir" / "m.ckpt"
    with pytest.raises(Exception, match="missing-dir"):
        save_checkpoint(target, tr)


@pytest.mark.parametrize("mode", ["dae", "vae", "wae-d", "wae-s"])
def test_resume_matches_uninterrupted(tmp_path, mode):
    straight = Trainer(small_config(mode), CORPUS)
    straight.train_steps(10)

    first = Trainer(small_config(mode), CORPUS)
    first.train_steps(5)
    path = tmp_path / f"{mode}.ckpt"
    first.save(path)
    resumed = Trainer.load(path, CORPUS)
    resumed.train_steps(5)

    assert [r.to_tsv() for r in resumed.log] == [r.to_tsv() for r in straight.log[5:]]
    for name, t in straight.model.params.items():
        assert resumed.model.params[name].data.tobytes() == t.data.tobytes()

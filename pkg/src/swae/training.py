"""Training loop and latent-space generation helpers."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autograd as ag
from .config import TrainConfig
from .data import Batch, Sentence, Vocab, build_vocab, load_corpus, load_paired_corpus, make_batch, make_batches
from .latent import KernelConfig
from .objectives import (
    AnnealSchedule,
    LossBreakdown,
    anneal_lambda,
    dae_loss,
    peaking_monitor,
    vae_loss,
    wae_d_loss,
    wae_s_loss,
    word_dropout_rate,
)
from .seqmodel import ModelDims, SeqModel

logger = logging.getLogger(__name__)

LOG_HEADER = ("step", "epoch", "rec", "kl", "mmd", "aux_kl", "lambda", "total")

# independent RNG streams derived from the seed
_INIT_STREAM, _TRAIN_STREAM, _SHUFFLE_STREAM = 0, 1, 2


@dataclass
class LogRow:
    step: int
    epoch: int
    rec: float
    kl: float
    mmd: float
    aux_kl: float
    lam: float
    total: float

    def to_tsv(self) -> str:
        vals = (self.step, self.epoch, self.rec, self.kl, self.mmd, self.aux_kl, self.lam, self.total)
        return "\t".join(repr(v) if isinstance(v, float) else str(v) for v in vals)


class Trainer:
    """Owns the model, optimizer state, schedules and RNG for one training run.

    ``sources`` feed the encoder; ``targets`` (dialog modes) feed the decoder,
    otherwise the decoder reconstructs the sources.
    """

    def __init__(
        self,
        config: TrainConfig,
        sources: Sequence[Sentence],
        targets: Sequence[Sentence] | None = None,
        vocab: Vocab | None = None,
        model: SeqModel | None = None,
    ):
        if config.is_dialog and targets is None:
            raise ValueError(f"mode {config.mode} needs paired sources and targets")
        self.config = config
        self.sources = list(sources)
        self.targets = None if targets is None else list(targets)
        if vocab is None:
            vocab = build_vocab(self.sources + (self.targets or []), config.vocab_size)
        self.vocab = vocab
        dims = ModelDims(len(vocab), config.emb_dim, config.hidden_dim, config.latent_dim)
        if model is None:
            init_rng = np.random.default_rng([config.seed, _INIT_STREAM])
            model = SeqModel.init(dims, init_rng, config.init_scale, config.forget_bias)
        self.model = model
        self.optim = ag.OptimState.for_params([p.data for p in model.parameters()])
        self.rng = np.random.default_rng([config.seed, _TRAIN_STREAM])
        self.kernel = KernelConfig(config.effective_kernel_c)
        self.epoch = 0
        self.step = 0
        self.batch_in_epoch = 0
        self.lr = config.lr
        self.epoch_weighted_kl = 0.0
        self.epoch_examples = 0
        self.log: list[LogRow] = []
        self._batches: list[Batch] | None = None
        self._batches_epoch = -1
        self.schedule = None
        if config.uses_annealing:
            self.schedule = AnnealSchedule.from_epochs(
                config.lambda_vae, self.steps_per_epoch, config.anneal_midpoint_epochs, config.anneal_width_epochs
            )

    @classmethod
    def from_config(cls, config: TrainConfig) -> "Trainer":
        if not config.corpus:
            raise FileNotFoundError("no corpus path configured")
        if not Path(config.corpus).exists():
            raise FileNotFoundError(f"corpus not found: {config.corpus}")
        if config.is_dialog:
            src, tgt = load_paired_corpus(config.corpus, config.max_len)
            return cls(config, src, tgt)
        return cls(config, load_corpus(config.corpus, config.max_len))

    # ------------------------------------------------------------------

    def epoch_batches(self, epoch: int) -> list[Batch]:
        if self._batches_epoch != epoch:
            shuffle = np.random.default_rng([self.config.seed, _SHUFFLE_STREAM, epoch])
            self._batches = make_batches(self.sources, self.vocab, self.config.batch_size, shuffle, self.targets)
            self._batches_epoch = epoch
        return self._batches

    @property
    def steps_per_epoch(self) -> int:
        n = len(self.sources)
        full, rest = divmod(n, self.config.batch_size)
        return full + (1 if rest >= 2 else 0)

    def current_lambda(self) -> float:
        obj = self.config.objective
        if obj == "vae":
            return anneal_lambda(self.schedule, self.step) if self.schedule else self.config.lambda_vae
        if obj in ("wae-d", "wae-s"):
            return self.config.lambda_wae
        return 0.0

    def compute_loss(self, batch: Batch) -> LossBreakdown:
        cfg = self.config
        rate = word_dropout_rate(self.epoch, cfg.word_dropout_step, cfg.word_dropout_max) if cfg.uses_word_dropout else 0.0
        obj = cfg.objective
        if obj == "dae":
            return dae_loss(self.model, batch, rate, self.rng)
        if obj == "vae":
            return vae_loss(self.model, batch, self.current_lambda(), self.step, self.rng, rate)
        if obj == "wae-d":
            return wae_d_loss(self.model, batch, cfg.lambda_wae, self.kernel, self.rng, cfg.cross_factor, rate)
        return wae_s_loss(self.model, batch, cfg.lambda_wae, cfg.lambda_kl, self.kernel, self.rng, cfg.cross_factor, rate)

    def train_step(self) -> LossBreakdown:
        batches = self.epoch_batches(self.epoch)
        batch = batches[self.batch_in_epoch]
        params = self.model.parameters()
        out = self.compute_loss(batch)
        ag.zero_grad(params)
        ag.backward(out.loss)
        grads = [np.zeros_like(p.data) if p.grad is None else p.grad for p in params]
        ag.clip_grad_norm(grads, self.config.clip_norm)
        ag.adam_step([p.data for p in params], grads, self.optim, self.lr, self.config.beta1, self.config.beta2)
        out.loss = None
        row = LogRow(self.step, self.epoch, out.reconstruction, out.kl, out.mmd, out.aux_kl, self.current_lambda(), out.total)
        self.log.append(row)
        if self.config.log:
            self._append_log(row)
        if self.config.objective == "vae":
            self.epoch_weighted_kl += out.lambda_vae * out.kl
            self.epoch_examples += out.examples
        self.step += 1
        self.batch_in_epoch += 1
        if self.batch_in_epoch >= len(batches):
            self._end_epoch()
        return out

    def _end_epoch(self) -> None:
        if self.schedule is not None and self.epoch_examples:
            peaking_monitor(self.schedule, self.epoch_weighted_kl / self.epoch_examples, self.step)
        decay = self.config.effective_lr_decay
        if decay != 1.0:
            self.lr = max(self.lr * decay, self.config.lr_min)
        logger.info("epoch %d done at step %d", self.epoch, self.step)
        self.epoch += 1
        self.batch_in_epoch = 0
        self.epoch_weighted_kl = 0.0
        self.epoch_examples = 0

    def train_steps(self, n: int) -> None:
        for _ in range(n):
            self.train_step()

    def train(self, epochs: int | None = None) -> None:
        target = self.config.epochs if epochs is None else self.epoch + epochs
        while self.epoch < target:
            self.train_step()

    def _append_log(self, row: LogRow) -> None:
        path = Path(self.config.log)
        new = not path.exists() or path.stat().st_size == 0
        with path.open("a", encoding="utf-8") as fh:
            if new:
                fh.write("\t".join(LOG_HEADER) + "\n")
            fh.write(row.to_tsv() + "\n")

    def log_text(self) -> str:
        return "\t".join(LOG_HEADER) + "\n" + "".join(r.to_tsv() + "\n" for r in self.log)

    def epoch_means(self, field: str) -> list[float]:
        """Per-example mean of a log column for each completed epoch."""
        sums: dict[int, float] = {}
        for r in self.log:
            sums[r.epoch] = sums.get(r.epoch, 0.0) + getattr(r, field)
        return [sums[e] / len(self.sources) for e in sorted(sums)]

    def save(self, path) -> None:
        from .persistence import save_checkpoint

        save_checkpoint(path, self)

    @classmethod
    def load(cls, path, sources=None, targets=None) -> "Trainer":
        from .persistence import load_trainer

        return load_trainer(path, sources, targets)


# ---------------------------------------------------------------------------
# generation helpers


def encode_means(model: SeqModel, vocab: Vocab, sentences: Sequence[Sentence], batch_size: int = 256) -> np.ndarray:
    """Posterior means (the deterministic code for DAE/WAE-D) for each sentence."""
    out = []
    with ag.no_grad():
        for i in range(0, len(sentences), batch_size):
            b = make_batch(sentences[i : i + batch_size], vocab)
            h = model.encode_batch(*b.encoder_inputs)
            mu, _ = model.latent_heads(h)
            out.append(mu.data)
    return np.concatenate(out, axis=0)


def encode_sigmas(model: SeqModel, vocab: Vocab, sentences: Sequence[Sentence], batch_size: int = 256) -> np.ndarray:
    out = []
    with ag.no_grad():
        for i in range(0, len(sentences), batch_size):
            b = make_batch(sentences[i : i + batch_size], vocab)
            h = model.encode_batch(*b.encoder_inputs)
            _, log_sigma = model.latent_heads(h)
            out.append(np.exp(log_sigma.data))
    return np.concatenate(out, axis=0)


def greedy_sentences(model: SeqModel, vocab: Vocab, z: np.ndarray, max_len: int) -> list[Sentence]:
    return [vocab.decode(ids) for ids in model.decode_greedy_batch(z, max_len)]


def reconstruct(model: SeqModel, vocab: Vocab, sentences: Sequence[Sentence], max_len: int) -> list[Sentence]:
    return greedy_sentences(model, vocab, encode_means(model, vocab, sentences), max_len)


def sample_prior(model: SeqModel, vocab: Vocab, count: int, rng: np.random.Generator, max_len: int) -> list[Sentence]:
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    z = rng.standard_normal((count, model.dims.latent_dim))
    return greedy_sentences(model, vocab, z, max_len)


def interpolate(model: SeqModel, vocab: Vocab, a: Sentence, b: Sentence, steps: int, max_len: int) -> list[Sentence]:
    if steps < 2:
        raise ValueError(f"steps must be >= 2, got {steps}")
    za, zb = encode_means(model, vocab, [a, b])
    t = np.linspace(0.0, 1.0, steps)[:, None]
    return greedy_sentences(model, vocab, (1.0 - t) * za + t * zb, max_len)

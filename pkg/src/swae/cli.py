"""Command-line entry point: ``swae {train,reconstruct,sample,interpolate,evaluate,sigma-hist}``.

Every failure exits nonzero with a single line on stderr of the form
``error: <code>: <message>``.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, TrainConfig, coerce, load_config
from .data import load_corpus, load_paired_corpus, tokenize
from .metrics import avg_len, bleu, distinct_n, perplexity, train_ngram_lm, unigram_kl, word_entropy
from .latent import histogram_of_sigmas
from .persistence import CheckpointError, load_checkpoint, load_trainer
from .training import Trainer, encode_means, encode_sigmas, greedy_sentences, interpolate, reconstruct, sample_prior


class CliError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


class Report:
    """Collects output lines; echoes to stdout and optionally mirrors to a file."""

    def __init__(self, out: str | None):
        self.out = out
        self.lines: list[str] = []

    def add(self, line: str = "") -> None:
        self.lines.append(line)
        print(line)

    def close(self) -> None:
        if self.out:
            Path(self.out).write_text("\n".join(self.lines) + "\n", encoding="utf-8")


# flags that map one-to-one onto config fields
_CONFIG_FLAGS = (
    "mode", "seed", "corpus", "checkpoint", "log", "epochs", "batch_size", "lr",
    "lambda_wae", "lambda_kl", "lambda_vae", "latent_dim", "hidden_dim", "emb_dim", "kernel_c",
)


def _config_from_args(args) -> TrainConfig:
    overrides = {}
    for key in _CONFIG_FLAGS:
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = coerce(key, str(value))
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError("bad-override", f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        key = key.strip().replace("-", "_")
        try:
            overrides[key] = coerce(key, value)
        except KeyError:
            raise ConfigError("unknown-key", f"unknown config key {key!r}") from None
    if args.mmd_paper_literal:
        overrides["mmd_paper_literal"] = True
    if args.config:
        return load_config(args.config, overrides)
    return TrainConfig.from_dict(overrides)


def _load(path):
    if not Path(path).exists():
        raise CliError("missing-checkpoint", f"checkpoint not found: {path}")
    model, _, vocab, config, _ = load_checkpoint(path)
    return model, vocab, config


def _read_sentences(path, max_len):
    if not Path(path).exists():
        raise CliError("missing-corpus", f"corpus not found: {path}")
    return load_corpus(path, max_len)


def _text(sentences) -> list[str]:
    return [" ".join(s) for s in sentences]


# ---------------------------------------------------------------------------
# subcommands


def cmd_train(args, report: Report) -> None:
    if args.resume:
        if not Path(args.resume).exists():
            raise CliError("missing-checkpoint", f"checkpoint not found: {args.resume}")
        trainer = load_trainer(args.resume)
        if args.epochs is not None:
            trainer.config = trainer.config.replace(epochs=int(args.epochs))
    else:
        config = _config_from_args(args)
        if not config.corpus:
            raise CliError("missing-corpus", "no corpus configured")
        if not Path(config.corpus).exists():
            raise CliError("missing-corpus", f"corpus not found: {config.corpus}")
        trainer = Trainer.from_config(config)
    config = trainer.config
    if not config.checkpoint:
        raise CliError("missing-checkpoint-path", "no checkpoint path configured")
    trainer.train(config.epochs - trainer.epoch)
    trainer.save(config.checkpoint)
    last = trainer.log[-1] if trainer.log else None
    report.add(f"# mode={config.mode} seed={config.seed} epochs={trainer.epoch} steps={trainer.step}")
    if last is not None:
        report.add("\t".join(["rec", "kl", "mmd", "aux_kl", "lambda"]))
        means = [trainer.epoch_means(f)[-1] for f in ("rec", "kl", "mmd", "aux_kl")]
        report.add("\t".join(f"{v:.6g}" for v in means + [last.lam]))
    report.add(f"checkpoint\t{config.checkpoint}")


def cmd_reconstruct(args, report: Report) -> None:
    model, vocab, config = _load(args.checkpoint)
    if config.is_dialog:
        raise CliError("dialog-checkpoint", f"reconstruct needs an autoencoder checkpoint, got mode {config.mode}")
    sentences = _read_sentences(args.corpus, config.max_len)
    outputs = reconstruct(model, vocab, sentences, config.max_len)
    report.add("# greedy decoding from the posterior mean")
    for line in _text(outputs):
        report.add(line)
    report.add(f"BLEU\t{bleu(outputs, sentences):.6f}")


def cmd_sample(args, report: Report) -> None:
    model, vocab, config = _load(args.checkpoint)
    if args.count < 1:
        raise CliError("invalid-count", f"count must be >= 1, got {args.count}")
    rng = np.random.default_rng(args.seed)
    for line in _text(sample_prior(model, vocab, args.count, rng, config.max_len)):
        report.add(line)


def cmd_interpolate(args, report: Report) -> None:
    model, vocab, config = _load(args.checkpoint)
    if args.steps < 2:
        raise CliError("invalid-steps", f"steps must be >= 2, got {args.steps}")
    a, b = tokenize(args.a)[: config.max_len], tokenize(args.b)[: config.max_len]
    if not a or not b:
        raise CliError("empty-sentence", "both endpoints must contain at least one token")
    for line in _text(interpolate(model, vocab, a, b, args.steps, config.max_len)):
        report.add(line)


def _or_nan(metric, *args) -> float:
    # metrics with no defined value on degenerate output (e.g. all-empty decodings)
    try:
        return metric(*args)
    except ValueError:
        return float("nan")


def _evaluate_dialog(model, vocab, config, reference, report: Report) -> None:
    sources, targets = load_paired_corpus(reference, config.max_len)
    responses = greedy_sentences(model, vocab, encode_means(model, vocab, sources), config.max_len)
    cols = ("BLEU-2", "BLEU-4", "Entropy", "Dist-1", "Dist-2")
    vals = (
        bleu(responses, targets, max_n=2),
        bleu(responses, targets, max_n=4),
        word_entropy(responses),
        _or_nan(distinct_n, responses, 1),
        _or_nan(distinct_n, responses, 2),
    )
    report.add(f"# mode={config.mode}; greedy responses from the posterior mean of each source; nan = undefined")
    report.add("\t".join(cols))
    report.add("\t".join(f"{v:.6f}" for v in vals))


def cmd_evaluate(args, report: Report) -> None:
    model, vocab, config = _load(args.checkpoint)
    if not Path(args.reference).exists():
        raise CliError("missing-reference", f"reference corpus not found: {args.reference}")
    if config.is_dialog:
        _evaluate_dialog(model, vocab, config, args.reference, report)
        return
    reference = load_corpus(args.reference, config.max_len)
    recon = reconstruct(model, vocab, reference, config.max_len)
    samples = sample_prior(model, vocab, args.count, np.random.default_rng(args.seed), config.max_len)
    lm = train_ngram_lm(reference, n=3, k=0.01)
    nonempty = [s for s in samples if s]
    vals = (
        bleu(recon, reference),
        perplexity(lm, samples),
        _or_nan(unigram_kl, nonempty, reference),
        _or_nan(word_entropy, nonempty),
        avg_len(samples),
    )
    report.add(
        f"# mode={config.mode}; BLEU: greedy reconstruction from the posterior mean; "
        f"PPL/UniKL/Entropy/AvgLen: {args.count} greedy decodings of N(0,I) samples (seed {args.seed}); "
        "PPL under a trigram add-0.01 LM of the reference corpus"
    )
    report.add("\t".join(("BLEU", "PPL", "UniKL", "Entropy", "AvgLen")))
    report.add("\t".join(f"{v:.6f}" for v in vals))
    report.add(f"# BLEU x100 = {100 * vals[0]:.2f}")


def cmd_sigma_hist(args, report: Report) -> None:
    model, vocab, config = _load(args.checkpoint)
    if not config.is_stochastic:
        raise CliError(
            "deterministic-encoder",
            f"mode {config.mode} has a deterministic encoder; sigma histograms need vae, wae-s, ved or wed-s",
        )
    if not Path(args.corpus).exists():
        raise CliError("missing-corpus", f"corpus not found: {args.corpus}")
    if config.is_dialog:
        sources, _ = load_paired_corpus(args.corpus, config.max_len)
    else:
        sources = load_corpus(args.corpus, config.max_len)
    sigmas = encode_sigmas(model, vocab, sources)
    hist = histogram_of_sigmas(sigmas, args.buckets)
    if args.hist:
        hist.save(args.hist)
    report.add(f"components\t{sigmas.size}")
    report.add(f"frac_below_0.1\t{float((sigmas < 0.1).mean()):.6f}")
    report.add(f"median_sigma\t{float(np.median(sigmas)):.6f}")
    if args.hist:
        report.add(f"histogram\t{args.hist}")
    else:
        for line in hist.to_text().splitlines():
            report.add(line)


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="swae", description="Sentence autoencoders with VAE/WAE objectives.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def with_out(p):
        p.add_argument("--out", help="also write the report to this file")
        return p

    p = with_out(sub.add_parser("train", help="train a model from a config file"))
    p.add_argument("config", nargs="?", help="flat key = value config file")
    p.add_argument("--resume", help="continue training from this checkpoint")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override any config key")
    p.add_argument("--mmd-paper-literal", action="store_true", help="cross term weighted 1 instead of 2")
    for key in _CONFIG_FLAGS:
        p.add_argument("--" + key.replace("_", "-"), dest=key)
    p.set_defaults(func=cmd_train)

    p = with_out(sub.add_parser("reconstruct", help="greedy reconstructions and corpus BLEU"))
    p.add_argument("checkpoint")
    p.add_argument("corpus")
    p.set_defaults(func=cmd_reconstruct)

    p = with_out(sub.add_parser("sample", help="decode samples from the N(0, I) prior"))
    p.add_argument("checkpoint")
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_sample)

    p = with_out(sub.add_parser("interpolate", help="decode along the line between two encodings"))
    p.add_argument("checkpoint")
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--steps", type=int, default=5)
    p.set_defaults(func=cmd_interpolate)

    p = with_out(sub.add_parser("evaluate", help="metric report against a reference corpus"))
    p.add_argument("checkpoint")
    p.add_argument("reference")
    p.add_argument("--count", type=int, default=1000, help="prior samples to decode")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_evaluate)

    p = with_out(sub.add_parser("sigma-hist", help="histogram of posterior sigmas over a corpus"))
    p.add_argument("checkpoint")
    p.add_argument("corpus")
    p.add_argument("--hist", help="write the histogram here")
    p.add_argument("--buckets", type=int, default=200)
    p.set_defaults(func=cmd_sigma_hist)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    report = Report(args.out)
    try:
        args.func(args, report)
        report.close()
    except (CliError, ConfigError) as exc:
        print(f"error: {exc.code}: {exc}", file=sys.stderr)
        return 2
    except CheckpointError as exc:
        print(f"error: bad-checkpoint: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: not-found: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: invalid-input: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: io-error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())

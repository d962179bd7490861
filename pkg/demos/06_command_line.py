"""
The command-line workflow
=========================

Train from a flat config file, then reconstruct, sample, interpolate,
evaluate and inspect sigmas. Each step is the same as running
``swae <subcommand> ...`` in a shell.
"""

import tempfile
from pathlib import Path

import numpy as np

from swae.cli import main
from swae.data import synth_corpus, write_corpus

work = Path(tempfile.mkdtemp())
write_corpus(work / "train.txt", synth_corpus(300, np.random.default_rng(0)))
write_corpus(work / "test.txt", synth_corpus(5, np.random.default_rng(1)))

(work / "run.cfg").write_text(
    f"""# WAE with a stochastic encoder and the auxiliary KL
seed = 3
mode = wae-s
lambda_wae = 10
lambda_kl = 0.01
epochs = 5
corpus = {work / "train.txt"}
checkpoint = {work / "model.ckpt"}
log = {work / "train.tsv"}
"""
)

main(["train", str(work / "run.cfg")])
main(["reconstruct", str(work / "model.ckpt"), str(work / "test.txt")])
main(["sample", str(work / "model.ckpt"), "--count", "3", "--seed", "1"])
main(["interpolate", str(work / "model.ckpt"), "a man is walking .", "two dogs sleep near the river .", "--steps", "4"])
main(["evaluate", str(work / "model.ckpt"), str(work / "test.txt"), "--count", "50"])
main(["sigma-hist", str(work / "model.ckpt"), str(work / "train.txt"), "--hist", str(work / "sigma.txt")])

# errors are one machine-readable line on stderr and a nonzero exit code
print("exit code:", main(["sigma-hist", str(work / "missing.ckpt"), str(work / "train.txt")]))

"""
Why a stochastic WAE encoder turns deterministic
================================================

Minimize k/2 z^2 with z = mu + sigma * eps by SGD. The only gradient sigma
sees is k z eps, and in expectation it shrinks sigma by a factor
(1 - lr k) per step. An auxiliary KL towards N(mu, 1) stops the slide.
"""

import math

import numpy as np

from swae.latent import collapse_harness

lr, k = 0.05, 1.0
free = np.array([collapse_harness(k, 0.5, lr, 2000, 0.0, np.random.default_rng(s)) for s in range(20)])
held = np.array([collapse_harness(k, 0.5, lr, 2000, 1.0, np.random.default_rng(s)) for s in range(20)])

for t in (0, 10, 100, 1000, 1999):
    print(f"step {t:5d}  no aux KL {free[:, t].mean():.3e}   aux KL {held[:, t].mean():.3f}")

rate = np.exp(np.mean(np.diff(np.log(free), axis=1)))
print(f"per-step factor {rate:.4f}, predicted {1 - lr * k:.4f}")
# with the aux term the fixed point solves k s = s - 1/s, i.e. s = 1/sqrt(2) at k=1
print("fixed point", 1 / math.sqrt(2))

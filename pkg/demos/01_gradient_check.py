"""
Checking backprop against finite differences
============================================

The autograd engine is small enough to audit by hand, but the quickest
sanity check is numerical: perturb each parameter, difference the loss,
and compare with the analytic gradient.
"""

import numpy as np

from swae import autograd as ag
from swae.data import Vocab, make_batch
from swae.latent import KernelConfig
from swae.objectives import wae_s_loss
from swae.seqmodel import ModelDims, SeqModel

# a two-layer tanh net first
rng = np.random.default_rng(0)
x = ag.Tensor(rng.uniform(-2, 2, (5, 3)))
w1 = ag.Tensor(rng.normal(size=(3, 4)), requires_grad=True)
w2 = ag.Tensor(rng.normal(size=(4, 1)), requires_grad=True)


def net():
    return ag.tanh(ag.tanh(x @ w1) @ w2).sum()


print("tanh net:", ag.finite_difference_check(net, [w1, w2], 1e-5))

# now the whole sentence pipeline: embed, encode, sample z, decode, score.
# Reseeding inside the closure freezes the reparameterization noise.
dims = ModelDims(vocab_size=20, emb_dim=8, hidden_dim=16, latent_dim=4)
vocab = Vocab([f"w{i}" for i in range(16)])
batch = make_batch([["w1", "w5", "w2"], ["w7", "w7", "w3", "w9"]], vocab)
model = SeqModel.init(dims, np.random.default_rng(1))
params = model.parameters()
for p in params:
    p.requires_grad = True
cfg = KernelConfig.for_latent_dim(dims.latent_dim)


def loss():
    return wae_s_loss(model, batch, 10.0, 0.1, cfg, np.random.default_rng(7)).loss


print("parameters:", sum(p.size for p in params))
print("WAE-S pipeline:", ag.finite_difference_check(loss, params, 1e-5))

# entries that disagree in float64 are re-differenced in extended precision;
# without that step the roundoff of the loss swamps the smallest gradient entries
print("float64 oracle:", ag.finite_difference_check(loss, params, 1e-5, oracle_dtype=np.float64))

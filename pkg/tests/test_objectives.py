import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from swae import autograd as ag
from swae.autograd import Tensor
from swae.data import Vocab, make_batch
from swae.latent import KernelConfig, mmd_estimate
from swae.objectives import (
    AnnealSchedule,
    anneal_lambda,
    dae_loss,
    encode_deterministic,
    peaking_monitor,
    vae_loss,
    wae_d_loss,
    wae_s_loss,
    word_dropout_rate,
)
from swae.seqmodel import ModelDims, SeqModel

DIMS = ModelDims(vocab_size=14, emb_dim=5, hidden_dim=6, latent_dim=3)
VOCAB = Vocab([f"w{i}" for i in range(10)])
SENTS = [["w1", "w2", "w3"], ["w4", "w5"], ["w6", "w7", "w8", "w9"]]
CFG = KernelConfig(6.0)


def model(seed=0, scale=0.3):
    return SeqModel.init(DIMS, np.random.default_rng(seed), scale=scale)


def batch(sents=SENTS):
    return make_batch(sents, VOCAB)


def rng(seed=5):
    return np.random.default_rng(seed)


def standard_normal_heads(m):
    for name in ("mu.w", "mu.b", "logsigma.w", "logsigma.b"):
        m.params[name].data[...] = 0.0


ALL_LOSSES = {
    "dae": lambda m, b, r: dae_loss(m, b, 0.2, r),
    "vae": lambda m, b, r: vae_loss(m, b, 0.7, 0, r, 0.2),
    "wae-d": lambda m, b, r: wae_d_loss(m, b, 3.0, CFG, r),
    "wae-s": lambda m, b, r: wae_s_loss(m, b, 10.0, 0.1, CFG, r),
}


class TestDae:
    def test_uniform_logits(self):
        m = model()
        m.params["out.w"].data[...] = 0.0
        out = dae_loss(m, batch([["w1", "w2", "w3"]]))
        # three words plus EOS, each costing log V
        assert out.reconstruction == pytest.approx(4 * math.log(DIMS.vocab_size), abs=1e-9)
        assert out.kl == out.mmd == out.aux_kl == 0.0
        assert out.tokens == 4 and out.examples == 1

    def test_duplicating_batch_doubles_loss(self):
        m = model(1)
        one = dae_loss(m, batch()).reconstruction
        two = dae_loss(m, batch(SENTS + SENTS)).reconstruction
        assert two == pytest.approx(2 * one, rel=1e-12)

    @given(seed=st.integers(0, 1000))
    def test_non_negative(self, seed):
        assert dae_loss(model(seed, scale=1.0), batch()).reconstruction >= 0.0


class TestVae:
    def test_zero_weight(self):
        out = vae_loss(model(), batch(), 0.0, 0, rng())
        assert out.total == out.reconstruction

    def test_standard_normal_posterior_has_zero_kl(self):
        m = model()
        standard_normal_heads(m)
        assert vae_loss(m, batch(), 1.0, 0, rng()).kl == 0.0

    def test_schedule_weight_is_used(self):
        sched = AnnealSchedule(lambda_max=2.0, slope=1.0, midpoint=4.0)
        out = vae_loss(model(), batch(), sched, 4, rng())
        assert out.lambda_vae == 1.0

    def test_head_gradients(self):
        m = model(2)
        heads = [m.params[n] for n in ("mu.w", "mu.b", "logsigma.w", "logsigma.b")]
        for p in heads:
            p.requires_grad = True
        err = ag.finite_difference_check(lambda: vae_loss(m, batch(), 0.5, 0, rng()).loss, heads, 1e-5)
        assert err < 1e-4


class TestWae:
    @pytest.mark.parametrize("lam", [3.0, 10.0])
    def test_table_lambdas_accepted(self, lam):
        assert wae_d_loss(model(), batch(), lam, CFG, rng()).lambda_wae == lam

    def test_zero_lambda_matches_dae(self):
        m = model(3)
        assert wae_d_loss(m, batch(), 0.0, CFG, rng()).total == dae_loss(m, batch()).total

    def test_mmd_field_matches_standalone(self):
        m = model(4)
        out = wae_d_loss(m, batch(), 10.0, CFG, rng(9))
        with ag.no_grad():
            z = encode_deterministic(m, batch()).data
        prior = rng(9).standard_normal(z.shape)
        assert out.mmd == mmd_estimate(z, prior, CFG)

    @pytest.mark.parametrize("fn", [wae_d_loss, lambda m, b, l, c, r: wae_s_loss(m, b, l, 0.0, c, r)])
    def test_single_example_rejected(self, fn):
        with pytest.raises(ValueError, match="at least 2"):
            fn(model(), batch(SENTS[:1]), 1.0, CFG, rng())

    @pytest.mark.parametrize("lam_kl", [0.0, 0.01, 0.1])
    def test_table_kl_weights_accepted(self, lam_kl):
        assert wae_s_loss(model(), batch(), 10.0, lam_kl, CFG, rng()).lambda_kl == lam_kl

    def test_unit_sigma_has_zero_aux(self):
        m = model()
        m.params["logsigma.w"].data[...] = 0.0
        m.params["logsigma.b"].data[...] = 0.0
        assert wae_s_loss(m, batch(), 10.0, 0.1, CFG, rng()).aux_kl == 0.0

    def test_no_regularizers_is_reconstruction(self):
        out = wae_s_loss(model(), batch(), 0.0, 0.0, CFG, rng())
        assert out.total == out.reconstruction

    def test_tiny_sigma_matches_deterministic(self):
        m = model(6)
        m.params["logsigma.w"].data[...] = 0.0
        m.params["logsigma.b"].data[...] = math.log(1e-8)
        s = wae_s_loss(m, batch(), 10.0, 0.0, CFG, rng(3))
        d = wae_d_loss(m, batch(), 10.0, CFG, rng(3))
        assert s.total == pytest.approx(d.total, abs=1e-6)


@pytest.mark.parametrize("name", sorted(ALL_LOSSES))
def test_total_recomputes_from_fields(name):
    out = ALL_LOSSES[name](model(7), batch(), rng())
    assert out.recompute_total() == out.total


@pytest.mark.parametrize("name", sorted(ALL_LOSSES))
def test_full_pipeline_gradients(name):
    m = model(8, scale=0.5)
    params = m.parameters()
    for p in params:
        p.requires_grad = True
    b = batch([["w1", "w2"], ["w3", "w4", "w5"]])
    err = ag.finite_difference_check(lambda: ALL_LOSSES[name](m, b, rng()).loss, params, 1e-5)
    assert err < 1e-4


class TestAnneal:
    def test_midpoint_and_saturation(self):
        s = AnnealSchedule(lambda_max=1.0, slope=0.5, midpoint=20)
        assert anneal_lambda(s, 20) == 0.5
        assert anneal_lambda(s, 10_000) == pytest.approx(1.0, abs=1e-12)

    def test_monotone_before_freeze(self):
        s = AnnealSchedule(lambda_max=1.0, slope=0.3, midpoint=10)
        values = [anneal_lambda(s, t) for t in range(101)]
        assert all(b >= a for a, b in zip(values, values[1:]))
        assert all(0.0 <= v <= 1.0 for v in values)

    def test_from_epochs_spans_ten_to_ninety_percent(self):
        s = AnnealSchedule.from_epochs(1.0, steps_per_epoch=50, midpoint_epochs=3, width_epochs=2)
        assert anneal_lambda(s, 150) == 0.5
        assert anneal_lambda(s, 100) == pytest.approx(0.1, abs=1e-12)
        assert anneal_lambda(s, 200) == pytest.approx(0.9, abs=1e-12)

    def test_negative_step(self):
        with pytest.raises(ValueError):
            anneal_lambda(AnnealSchedule(), -1)


def _feed(values):
    s = AnnealSchedule(lambda_max=1.0, slope=1.0, midpoint=5)
    frozen_at = None
    for epoch, v in enumerate(values):
        peaking_monitor(s, v, step=epoch * 3)
        if s.frozen and frozen_at is None:
            frozen_at = epoch
    return s, frozen_at


class TestPeakingMonitor:
    def test_first_decrease_freezes(self):
        s, at = _feed([0.1, 0.3, 0.2])
        assert at == 2
        assert s.frozen_value == anneal_lambda(AnnealSchedule(lambda_max=1.0, slope=1.0, midpoint=5), 6)

    def test_increasing_never_freezes(self):
        assert _feed([0.1, 0.2, 0.3, 0.4])[1] is None

    def test_ties_do_not_freeze(self):
        assert _feed([0.25] * 6)[1] is None

    def test_frozen_value_is_held(self):
        s, _ = _feed([0.1, 0.3, 0.2, 0.9, 0.1])
        held = s.frozen_value
        assert all(anneal_lambda(s, t) == held for t in (0, 50, 5000))

    @given(values=st.lists(st.floats(0, 10), min_size=1, max_size=20))
    def test_freezes_exactly_at_first_drop(self, values):
        _, at = _feed(values)
        running = -math.inf
        expected = None
        for i, v in enumerate(values):
            if v < running:
                expected = i
                break
            running = v
        assert at == expected


class TestWordDropoutRamp:
    @pytest.mark.parametrize("epoch, rate", [(0, 0.0), (1, 0.05), (10, 0.5), (100, 0.5)])
    def test_values(self, epoch, rate):
        assert word_dropout_rate(epoch) == rate

    def test_negative_epoch(self):
        with pytest.raises(ValueError):
            word_dropout_rate(-1)

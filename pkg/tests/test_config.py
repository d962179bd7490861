import pytest
from hypothesis import given, strategies as st

from swae.config import ConfigError, TrainConfig, format_config, load_config, parse_config_text


def test_seed_mandatory():
    with pytest.raises(ConfigError) as e:
        TrainConfig.from_dict({"mode": "dae"})
    assert e.value.code == "missing-seed"


@pytest.mark.parametrize(
    "changes, code",
    [
        ({"mode": "gan"}, "invalid-mode"),
        ({"lambda_wae": -1.0}, "negative-lambda"),
        ({"lambda_kl": -0.01}, "negative-lambda"),
        ({"lr": 0.0}, "invalid-lr"),
        ({"batch_size": 1}, "invalid-batch-size"),
        ({"kernel_c": -2.0}, "invalid-kernel-c"),
    ],
)
def test_invalid_values_named(changes, code):
    with pytest.raises(ConfigError) as e:
        TrainConfig(seed=0, **changes)
    assert e.value.code == code


def test_file_format(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("# experiment\nseed = 7\nmode = wae-s   # stochastic\nlambda-kl = 0.01\nkernel_c = auto\nanneal = off\n")
    cfg = load_config(p, {"epochs": 3})
    assert (cfg.seed, cfg.mode, cfg.lambda_kl, cfg.kernel_c, cfg.anneal, cfg.epochs) == (7, "wae-s", 0.01, None, False, 3)


@pytest.mark.parametrize(
    "text, code",
    [("seed 3\n", "bad-config-line"), ("seed = 3\ncolour = red\n", "unknown-key"), ("seed = three\n", "bad-value")],
)
def test_bad_files(text, code):
    with pytest.raises(ConfigError) as e:
        parse_config_text(text)
    assert e.value.code == code


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError) as e:
        load_config(tmp_path / "nope.cfg")
    assert e.value.code == "missing-config"


def test_kernel_scale_defaults_to_twice_latent_dim():
    assert TrainConfig(seed=0, latent_dim=4).effective_kernel_c == 8.0
    assert TrainConfig(seed=0, latent_dim=4, kernel_c=3.0).effective_kernel_c == 3.0


def test_cross_factor_switch():
    assert TrainConfig(seed=0).cross_factor == 2.0
    assert TrainConfig(seed=0, mmd_paper_literal=True).cross_factor == 1.0


def test_irrelevant_lambdas_recorded():
    cfg = TrainConfig(seed=0, mode="dae", lambda_kl=0.1, lambda_wae=3.0)
    assert cfg.to_dict()["lambda_kl"] == 0.1


def test_dialog_lr_decay_default():
    assert TrainConfig(seed=0, mode="wed-s").effective_lr_decay == 0.98
    assert TrainConfig(seed=0, mode="wae-s").effective_lr_decay == 1.0


@given(
    seed=st.integers(0, 2**31),
    mode=st.sampled_from(["dae", "vae", "wae-d", "wae-s", "ded", "ved", "wed-d", "wed-s"]),
    lam=st.floats(0, 100, allow_nan=False),
    wd=st.sampled_from([None, True, False]),
)
def test_text_round_trip(seed, mode, lam, wd):
    cfg = TrainConfig(seed=seed, mode=mode, lambda_wae=lam, word_dropout=wd)
    assert TrainConfig.from_dict(parse_config_text(format_config(cfg))) == cfg

"""LSTM encoder/decoder with the latent vector fed to every decoder step."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .data import BOS, EOS, PAD, UNK


@dataclass
class LstmParams:
    """Gate weights stacked as ``[input, forget, cell, output]`` along the last axis.

    ``wx`` is ``(D, 4H)``, ``wh`` is ``(H, 4H)`` and ``b`` is ``(4H,)``.
    """

    wx: Tensor
    wh: Tensor
    b: Tensor

    @property
    def input_size(self) -> int:
        return self.wx.shape[0]

    @property
    def hidden_size(self) -> int:
        return self.wh.shape[0]

    def check(self) -> None:
        d, h = self.input_size, self.hidden_size
        if self.wx.shape != (d, 4 * h) or self.wh.shape != (h, 4 * h) or self.b.shape != (4 * h,):
            raise ValueError(
                f"inconsistent LSTM shapes wx={self.wx.shape} wh={self.wh.shape} b={self.b.shape}"
            )


def _gates(pre: Tensor, h: Tensor, c: Tensor, hidden: int) -> tuple[Tensor, Tensor]:
    hc = ag.lstm_cell(pre, c)
    return hc[..., :hidden], hc[..., hidden:]


def lstm_step(p: LstmParams, x_t, h, c) -> tuple[Tensor, Tensor]:
    """One LSTM recurrence. Works on single vectors or ``(N, D)`` batches."""
    x_t, h, c = ag.as_tensor(x_t), ag.as_tensor(h), ag.as_tensor(c)
    H = p.hidden_size
    if x_t.shape[-1] != p.input_size or h.shape[-1] != H or c.shape[-1] != H:
        raise ValueError(
            f"lstm_step: expected x[..., {p.input_size}], h/c[..., {H}]; "
            f"got {x_t.shape}, {h.shape}, {c.shape}"
        )
    pre = x_t @ p.wx + h @ p.wh + p.b
    return _gates(pre, h, c, H)


@dataclass(frozen=True)
class ModelDims:
    vocab_size: int
    emb_dim: int = 32
    hidden_dim: int = 64
    latent_dim: int = 16


class SeqModel:
    """Embeddings, LSTM encoder, Gaussian latent heads, LSTM decoder and output layer.

    Parameters live in ``self.params`` (ordered name -> Tensor). The decoder
    input weight is ``(E + Z, 4H)``: rows ``[:E]`` act on the embedded previous
    token and rows ``[E:]`` on the latent vector.
    """

    PARAM_NAMES = (
        "embedding",
        "enc.wx",
        "enc.wh",
        "enc.b",
        "dec.wx",
        "dec.wh",
        "dec.b",
        "mu.w",
        "mu.b",
        "logsigma.w",
        "logsigma.b",
        "out.w",
        "out.b",
    )

    def __init__(self, dims: ModelDims, params: dict[str, Tensor]):
        self.dims = dims
        missing = [n for n in self.PARAM_NAMES if n not in params]
        if missing:
            raise ValueError(f"missing parameters: {missing}")
        self.params = {n: params[n] for n in self.PARAM_NAMES}
        for name, t in self.params.items():
            t.requires_grad = True
            t.name = name
        self._check_shapes()

    @classmethod
    def init(cls, dims: ModelDims, rng: np.random.Generator, scale: float = 0.08, forget_bias: float = 1.0):
        V, E, H, Z = dims.vocab_size, dims.emb_dim, dims.hidden_dim, dims.latent_dim
        shapes = cls.shapes_for(dims)
        params = {}
        for name in cls.PARAM_NAMES:
            if name.endswith(".b"):
                arr = np.zeros(shapes[name])
                if name in ("enc.b", "dec.b"):
                    arr[H : 2 * H] = forget_bias
            else:
                arr = rng.uniform(-scale, scale, size=shapes[name])
            params[name] = Tensor(arr)
        return cls(dims, params)

    @staticmethod
    def shapes_for(dims: ModelDims) -> dict[str, tuple[int, ...]]:
        V, E, H, Z = dims.vocab_size, dims.emb_dim, dims.hidden_dim, dims.latent_dim
        return {
            "embedding": (V, E),
            "enc.wx": (E, 4 * H),
            "enc.wh": (H, 4 * H),
            "enc.b": (4 * H,),
            "dec.wx": (E + Z, 4 * H),
            "dec.wh": (H, 4 * H),
            "dec.b": (4 * H,),
            "mu.w": (H, Z),
            "mu.b": (Z,),
            "logsigma.w": (H, Z),
            "logsigma.b": (Z,),
            "out.w": (H, V),
            "out.b": (V,),
        }

    def _check_shapes(self) -> None:
        expected = self.shapes_for(self.dims)
        for name, t in self.params.items():
            if t.shape != expected[name]:
                raise ValueError(f"parameter {name} has shape {t.shape}, expected {expected[name]}")
            if not np.all(np.isfinite(t.data)):
                raise ValueError(f"parameter {name} contains non-finite values")

    @property
    def encoder(self) -> LstmParams:
        p = self.params
        return LstmParams(p["enc.wx"], p["enc.wh"], p["enc.b"])

    @property
    def decoder(self) -> LstmParams:
        p = self.params
        return LstmParams(p["dec.wx"], p["dec.wh"], p["dec.b"])

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    def copy(self) -> "SeqModel":
        return SeqModel(self.dims, {n: Tensor(t.data.copy()) for n, t in self.params.items()})

    # ------------------------------------------------------------------
    # encoder

    def _check_ids(self, ids: np.ndarray) -> None:
        if ids.size and (ids.min() < 0 or ids.max() >= self.dims.vocab_size):
            raise ValueError(f"token id out of range [0, {self.dims.vocab_size})")

    def encode_batch(self, ids: np.ndarray, lengths: np.ndarray) -> Tensor:
        """Final hidden state of each row of a right-padded ``(N, T)`` id matrix."""
        ids = np.asarray(ids)
        lengths = np.asarray(lengths)
        if ids.ndim != 2 or ids.shape[1] == 0 or np.any(lengths < 1):
            raise ValueError("encode: every input must contain at least one token")
        self._check_ids(ids)
        N, T = ids.shape
        H = self.dims.hidden_dim
        p = self.encoder
        emb = self.params["embedding"][ids]
        xw = emb @ p.wx + p.b
        h = Tensor(np.zeros((N, H)))
        c = Tensor(np.zeros((N, H)))
        states = []
        for t in range(int(lengths.max())):
            pre = xw[:, t, :] + h @ p.wh
            h, c = _gates(pre, h, c, H)
            states.append(h)
        hs = ag.stack(states, axis=0)
        return hs[lengths - 1, np.arange(N)]

    def encode(self, ids) -> Tensor:
        """Final hidden state after reading ``ids`` left to right from a zero state."""
        ids = np.asarray(ids, dtype=np.int64)
        if ids.ndim != 1 or ids.size == 0:
            raise ValueError("encode: token-ids must be a non-empty 1-d sequence")
        return self.encode_batch(ids[None, :], np.array([ids.size]))[0]

    def latent_heads(self, h: Tensor) -> tuple[Tensor, Tensor]:
        p = self.params
        mu = h @ p["mu.w"] + p["mu.b"]
        log_sigma = h @ p["logsigma.w"] + p["logsigma.b"]
        return mu, log_sigma

    # ------------------------------------------------------------------
    # decoder

    def decode_batch(self, z: Tensor, inputs: np.ndarray) -> Tensor:
        """Teacher-forced logits ``(N, T, V)`` for decoder input ids ``(N, T)``."""
        inputs = np.asarray(inputs)
        self._check_ids(inputs)
        z = ag.as_tensor(z)
        N, T = inputs.shape
        E, H = self.dims.emb_dim, self.dims.hidden_dim
        p = self.decoder
        w_tok = p.wx[0:E]
        w_z = p.wx[E:]
        emb = self.params["embedding"][inputs]
        xw = emb @ w_tok
        zw = z @ w_z + p.b
        h = Tensor(np.zeros((N, H)))
        c = Tensor(np.zeros((N, H)))
        states = []
        for t in range(T):
            pre = xw[:, t, :] + zw + h @ p.wh
            h, c = _gates(pre, h, c, H)
            states.append(h)
        hs = ag.stack(states, axis=1)
        return hs @ self.params["out.w"] + self.params["out.b"]

    def decode_teacher_forced(self, z, target_ids, word_dropout_rate: float = 0.0, rng=None) -> Tensor:
        """Per-step logits ``(|target|, V)`` for one sequence conditioned on ``z``.

        The input at step ``t`` is the previous target token (BOS first),
        replaced by UNK with probability ``word_dropout_rate``.
        """
        target_ids = np.asarray(target_ids, dtype=np.int64)
        inputs = np.concatenate([[BOS], target_ids[:-1]])[None, :]
        inputs = apply_word_dropout(inputs, np.ones_like(inputs, dtype=bool), word_dropout_rate, rng)
        z = ag.as_tensor(z)
        return self.decode_batch(z.reshape(1, -1), inputs)[0]

    def _run_free(self, z: np.ndarray, max_len: int, pick) -> list[list[int]]:
        z = np.atleast_2d(np.asarray(z, dtype=float))
        N = z.shape[0]
        E, H = self.dims.emb_dim, self.dims.hidden_dim
        P = {n: t.data for n, t in self.params.items()}
        w_tok, w_z = P["dec.wx"][:E], P["dec.wx"][E:]
        zw = z @ w_z + P["dec.b"]
        h = np.zeros((N, H))
        c = np.zeros((N, H))
        prev = np.full(N, BOS)
        done = np.zeros(N, dtype=bool)
        out: list[list[int]] = [[] for _ in range(N)]
        for _ in range(max_len):
            pre = P["embedding"][prev] @ w_tok + zw + h @ P["dec.wh"]
            i = ag._sigmoid(pre[:, :H])
            f = ag._sigmoid(pre[:, H : 2 * H])
            g = np.tanh(pre[:, 2 * H : 3 * H])
            o = ag._sigmoid(pre[:, 3 * H :])
            c = f * c + i * g
            h = o * np.tanh(c)
            logits = h @ P["out.w"] + P["out.b"]
            tok = pick(logits)
            for n in np.flatnonzero(~done):
                if tok[n] == EOS:
                    done[n] = True
                else:
                    out[n].append(int(tok[n]))
            if done.all():
                break
            prev = tok
        return out

    def decode_greedy_batch(self, z, max_len: int) -> list[list[int]]:
        if max_len < 1:
            raise ValueError("decode_greedy: max_len must be >= 1")
        # argmax returns the first maximum, so ties go to the lowest id
        return self._run_free(z, max_len, lambda logits: logits.argmax(axis=1))

    def decode_greedy(self, z, max_len: int) -> list[int]:
        """Argmax decoding from BOS until EOS or ``max_len`` tokens (EOS not returned)."""
        return self.decode_greedy_batch(np.asarray(z, dtype=float)[None, :], max_len)[0]

    def decode_sample_batch(self, z, max_len: int, temperature: float, rng: np.random.Generator) -> list[list[int]]:
        if temperature <= 0:
            raise ValueError(f"decode_sample: temperature must be positive, got {temperature}")
        if max_len < 1:
            raise ValueError("decode_sample: max_len must be >= 1")

        def pick(logits):
            probs = np.exp(ag._log_softmax(logits / temperature))
            u = rng.random(logits.shape[0])
            cdf = np.cumsum(probs, axis=1)
            return np.minimum((cdf < u[:, None]).sum(axis=1), logits.shape[1] - 1)

        return self._run_free(z, max_len, pick)

    def decode_sample(self, z, max_len: int, temperature: float, rng: np.random.Generator) -> list[int]:
        return self.decode_sample_batch(np.asarray(z, dtype=float)[None, :], max_len, temperature, rng)[0]


def apply_word_dropout(inputs: np.ndarray, valid: np.ndarray, rate: float, rng) -> np.ndarray:
    """Replace decoder inputs after the leading BOS with UNK at ``rate``.

    One uniform draw is consumed per position of ``inputs[:, 1:]`` whenever
    ``rate > 0``, so the mask depends only on the RNG stream and the shape.
    """
    if not 0.0 <= rate <= 1.0:
        raise ValueError(f"word dropout rate must lie in [0, 1], got {rate}")
    if rate == 0.0:
        return inputs
    if rng is None:
        raise ValueError("word dropout needs an rng when rate > 0")
    out = inputs.copy()
    drop = rng.random(out[:, 1:].shape) < rate
    drop &= valid[:, 1:] & (out[:, 1:] != PAD)
    out[:, 1:][drop] = UNK
    return out

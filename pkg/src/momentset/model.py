"""Trainable network: non-overlap 1D conv tokenizer, temporal injection,
transformer encoder, moment-query decoder, and projection heads.

Pre-norm blocks with GELU FFNs throughout. With zero layers configured the
encoder reduces to token+TE addition and the decoder to the raw queries,
which the tests rely on.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as tt
from .errors import ConfigError, InputTooShortError
from .temporal import TemporalTable
from .tensor import Tensor


@dataclass
class ModelConfig:
    feature_dim: int = 64        # C
    model_dim: int = 64          # d
    conv_kernel: int = 7         # kernel == stride (non-overlap)
    enc_layers: int = 2
    dec_layers: int = 2
    heads: int = 4
    head_dim: int = 16
    queries: int = 16            # N
    temporal_rows: int = 64      # T0
    ffn_hidden: int = 256
    # SigLIP-style scales: t = 10, bias = -10. A bias of 0 unsaturates the
    # unmatched pairs, useful for hard-negative overfit runs.
    loss_bias_init: float = -10.0

    def validate(self):
        problems = []
        if self.heads * self.head_dim != self.model_dim:
            problems.append(
                f"heads*head_dim ({self.heads}*{self.head_dim}) != model_dim "
                f"({self.model_dim})")
        if self.model_dim % 2 != 0:
            problems.append(f"model_dim must be even, got {self.model_dim}")
        if self.conv_kernel < 1:
            problems.append("conv_kernel must be >= 1")
        if self.temporal_rows < 2:
            problems.append("temporal_rows must be >= 2")
        if self.queries < 1:
            problems.append("queries must be >= 1")
        if problems:
            raise ConfigError("; ".join(problems))

    @classmethod
    def paper_scale(cls) -> "ModelConfig":
        return cls(feature_dim=1024, model_dim=512, conv_kernel=7,
                   enc_layers=6, dec_layers=6, heads=8, head_dim=64,
                   queries=32, temporal_rows=128, ffn_hidden=2048)


@dataclass
class MomentPrediction:
    """The predicted moment set: unit-row visual and start/end TE matrices."""
    visual: Tensor       # N x C
    te_start: Tensor     # N x d
    te_end: Tensor       # N x d


def _init_linear(params, name, fan_in, fan_out, rng):
    params[f"{name}.w"] = Tensor(
        rng.standard_normal((fan_in, fan_out)) / math.sqrt(fan_in),
        requires_grad=True)
    params[f"{name}.b"] = Tensor(np.zeros(fan_out), requires_grad=True)


def _init_layernorm(params, name, dim):
    params[f"{name}.g"] = Tensor(np.ones(dim), requires_grad=True)
    params[f"{name}.b"] = Tensor(np.zeros(dim), requires_grad=True)


def _linear(params, name, x: Tensor) -> Tensor:
    return tt.matmul(x, params[f"{name}.w"]) + params[f"{name}.b"]


def _layernorm(params, name, x: Tensor) -> Tensor:
    return tt.layernorm(x) * params[f"{name}.g"] + params[f"{name}.b"]


def _ffn(params, name, x: Tensor) -> Tensor:
    return _linear(params, f"{name}.fc2", tt.gelu(_linear(params, f"{name}.fc1", x)))


class MomentSetModel:
    """Owns all learnable tensors and the forward composition."""

    def __init__(self, config: ModelConfig, rng: np.random.Generator):
        config.validate()
        self.config = config
        c = config
        p: dict[str, Tensor] = {}
        _init_linear(p, "conv", c.conv_kernel * c.feature_dim, c.model_dim, rng)
        for i in range(c.enc_layers):
            pre = f"enc.{i}"
            _init_layernorm(p, f"{pre}.ln1", c.model_dim)
            for w in ("wq", "wk", "wv", "wo"):
                _init_linear(p, f"{pre}.attn.{w}", c.model_dim, c.model_dim, rng)
            _init_layernorm(p, f"{pre}.ln2", c.model_dim)
            _init_linear(p, f"{pre}.ffn.fc1", c.model_dim, c.ffn_hidden, rng)
            _init_linear(p, f"{pre}.ffn.fc2", c.ffn_hidden, c.model_dim, rng)
        p["queries"] = Tensor(
            rng.standard_normal((c.queries, c.model_dim)) / math.sqrt(c.model_dim),
            requires_grad=True)
        for i in range(c.dec_layers):
            pre = f"dec.{i}"
            _init_layernorm(p, f"{pre}.ln1", c.model_dim)
            for w in ("wq", "wk", "wv", "wo"):
                _init_linear(p, f"{pre}.self.{w}", c.model_dim, c.model_dim, rng)
            _init_layernorm(p, f"{pre}.ln2", c.model_dim)
            for w in ("wq", "wk", "wv", "wo"):
                _init_linear(p, f"{pre}.cross.{w}", c.model_dim, c.model_dim, rng)
            _init_layernorm(p, f"{pre}.ln3", c.model_dim)
            _init_linear(p, f"{pre}.ffn.fc1", c.model_dim, c.ffn_hidden, rng)
            _init_linear(p, f"{pre}.ffn.fc2", c.ffn_hidden, c.model_dim, rng)
        _init_linear(p, "head.visual.fc1", c.model_dim, c.ffn_hidden, rng)
        _init_linear(p, "head.visual.fc2", c.ffn_hidden, c.feature_dim, rng)
        _init_linear(p, "head.temporal.fc1", c.model_dim, c.ffn_hidden, rng)
        _init_linear(p, "head.temporal.fc2", c.ffn_hidden, 2 * c.model_dim, rng)
        p["loss.log_t"] = Tensor(np.array(math.log(10.0)), requires_grad=True)
        p["loss.b"] = Tensor(np.array(float(c.loss_bias_init)), requires_grad=True)
        self.params = p
        self.temporal = TemporalTable(
            TemporalTable.init_sinusoidal(c.temporal_rows, c.model_dim).table)
        p["temporal.table"] = self.temporal.table

    # ------------------------------------------------------------------
    def parameters(self) -> dict[str, Tensor]:
        return self.params

    def param_count(self) -> int:
        return sum(p.data.size for p in self.params.values())

    def _attention(self, prefix: str, q_in: Tensor, kv_in: Tensor) -> Tensor:
        p = self.params
        c = self.config
        q = _linear(p, f"{prefix}.wq", q_in)
        k = _linear(p, f"{prefix}.wk", kv_in)
        v = _linear(p, f"{prefix}.wv", kv_in)
        inv = 1.0 / math.sqrt(c.head_dim)
        outs = []
        for h in range(c.heads):
            lo = h * c.head_dim
            qh = tt.narrow(q, 1, lo, c.head_dim)
            kh = tt.narrow(k, 1, lo, c.head_dim)
            vh = tt.narrow(v, 1, lo, c.head_dim)
            att = tt.softmax(tt.scale(tt.matmul(qh, tt.transpose(kh)), inv))
            outs.append(tt.matmul(att, vh))
        return _linear(p, f"{prefix}.wo", tt.cat(outs, axis=1))

    def tokenize(self, features: np.ndarray) -> Tensor:
        """Non-overlap 1D conv: T frames -> floor(T/kernel) tokens."""
        c = self.config
        features = np.asarray(features, dtype=np.float64)
        T = features.shape[0]
        if T < c.conv_kernel:
            raise InputTooShortError(
                f"{T} frames < conv kernel {c.conv_kernel}")
        n_tok = T // c.conv_kernel
        windows = features[: n_tok * c.conv_kernel].reshape(
            n_tok, c.conv_kernel * c.feature_dim)
        return _linear(self.params, "conv", Tensor(windows))

    def encode(self, tokens: Tensor) -> Tensor:
        p = self.params
        x = tokens + self.temporal.interpolate(tokens.data.shape[0])
        for i in range(self.config.enc_layers):
            pre = f"enc.{i}"
            h = _layernorm(p, f"{pre}.ln1", x)
            x = x + self._attention(f"{pre}.attn", h, h)
            x = x + _ffn(p, f"{pre}.ffn", _layernorm(p, f"{pre}.ln2", x))
        return x

    def decode(self, memory: Tensor) -> Tensor:
        p = self.params
        x = p["queries"]
        for i in range(self.config.dec_layers):
            pre = f"dec.{i}"
            h = _layernorm(p, f"{pre}.ln1", x)
            x = x + self._attention(f"{pre}.self", h, h)
            x = x + self._attention(
                f"{pre}.cross", _layernorm(p, f"{pre}.ln2", x), memory)
            x = x + _ffn(p, f"{pre}.ffn", _layernorm(p, f"{pre}.ln3", x))
        return x

    def project(self, decoded: Tensor) -> MomentPrediction:
        p = self.params
        d = self.config.model_dim
        visual = tt.l2_normalize(_ffn(p, "head.visual", decoded))
        te = _ffn(p, "head.temporal", decoded)
        te_start = tt.l2_normalize(tt.narrow(te, 1, 0, d))
        te_end = tt.l2_normalize(tt.narrow(te, 1, d, d))
        return MomentPrediction(visual, te_start, te_end)

    def forward(self, features: np.ndarray) -> MomentPrediction:
        return self.project(self.decode(self.encode(self.tokenize(features))))

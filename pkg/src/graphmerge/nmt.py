"""Desk-scale multilingual encoder-decoder translation model.

A standard transformer whose embedding table can be re-parameterized by the
graph message-passing stack. The stack's forward/backward run through the
numpy implementation in :mod:`graphmerge.gnn` via a custom autograd
function, so the same analytic gradients drive end-to-end training.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, asdict, replace

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from . import gnn

TIE_MODES = ("reparam", "original", "none")

PRESETS = {
    # desk-scale default; small/base mirror the full-scale configurations
    "desk": dict(d_model=64, enc_layers=2, dec_layers=2, heads=2, ffn_dim=128),
    "small": dict(d_model=512, enc_layers=6, dec_layers=6, heads=4, ffn_dim=1024),
    "base": dict(d_model=512, enc_layers=6, dec_layers=6, heads=8, ffn_dim=2048),
}


@dataclass
class ModelConfig:
    d_model: int = 64
    enc_layers: int = 2
    dec_layers: int = 2
    heads: int = 2
    ffn_dim: int = 128
    dropout: float = 0.1
    label_smoothing: float = 0.1
    tie_mode: str = "reparam"
    hops: int = 0
    activation: str = "relu"
    peak_lr: float = 5e-4
    warmup_steps: int = 4000
    max_steps: int = 1000
    batch_size: int = 32
    eval_interval: int = 200
    patience: int = 5
    temperature: float = 2.0
    max_len: int = 64
    freeze_graph_stack: bool = False

    def __post_init__(self):
        if self.d_model % self.heads != 0:
            raise ValueError("d_model must be divisible by heads")
        for rate in (self.dropout, self.label_smoothing):
            if not (0.0 <= rate < 1.0):
                raise ValueError("rates must lie in [0, 1)")
        if self.tie_mode not in TIE_MODES:
            raise ValueError("tie_mode must be one of %s" % (TIE_MODES,))
        if self.hops < 0:
            raise ValueError("hops must be >= 0")

    @classmethod
    def preset(cls, name: str, **overrides):
        base = dict(PRESETS[name])
        base.update(overrides)
        return cls(**base)

    @classmethod
    def from_file(cls, path):
        with open(path, encoding="utf-8") as f:
            data = json.load(f)
        preset = data.pop("preset", None)
        if preset:
            return cls.preset(preset, **data)
        return cls(**data)

    def save(self, path):
        with open(path, "w", encoding="utf-8") as f:
            json.dump(asdict(self), f, indent=2, sort_keys=True)
            f.write("\n")

    def config_hash(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def derive_seed(base_seed: int, component: str) -> int:
    """Per-component seed derived from one base seed: first 8 bytes of
    sha256('<base>:<component>')."""
    digest = hashlib.sha256(("%d:%s" % (base_seed, component)).encode()).digest()
    return int.from_bytes(digest[:8], "little") % (2**63)


class _StackFunction(torch.autograd.Function):
    """Bridges the numpy stack forward/backward into torch autograd.

    Parameter tensors arrive flattened as (w1_0, w2_0, b_0, w1_1, ...).
    """

    @staticmethod
    def forward(ctx, x, graph, activations, *params):
        layers = []
        for t in range(len(activations)):
            w1, w2, b = params[3 * t: 3 * t + 3]
            layers.append(gnn.GraphLayerParams(
                w1.detach().numpy().astype(np.float64),
                w2.detach().numpy().astype(np.float64),
                b.detach().numpy().astype(np.float64),
                activation=activations[t]))
        stack = gnn.GraphMergeStack(layers)
        x_np = x.detach().numpy().astype(np.float64)
        h = gnn.stack_forward(graph, x_np, stack)
        ctx.graph = graph
        ctx.stack = stack
        ctx.x_np = x_np
        ctx.in_dtype = x.dtype
        return torch.from_numpy(h).to(x.dtype)

    @staticmethod
    def backward(ctx, grad_out):
        upstream = grad_out.detach().numpy().astype(np.float64)
        grad_x, layer_grads = gnn.stack_backward(
            ctx.graph, ctx.x_np, ctx.stack, upstream)
        grads = [torch.from_numpy(np.ascontiguousarray(grad_x)).to(ctx.in_dtype),
                 None, None]
        for gw1, gw2, gb in layer_grads:
            grads.append(torch.from_numpy(np.ascontiguousarray(gw1)).double())
            grads.append(torch.from_numpy(np.ascontiguousarray(gw2)).double())
            grads.append(torch.from_numpy(np.ascontiguousarray(gb)).double())
        return tuple(grads)


def sinusoidal_positions(max_len: int, dim: int) -> torch.Tensor:
    pos = torch.arange(max_len, dtype=torch.float32).unsqueeze(1)
    div = torch.exp(torch.arange(0, dim, 2, dtype=torch.float32)
                    * (-math.log(10000.0) / dim))
    pe = torch.zeros(max_len, dim)
    pe[:, 0::2] = torch.sin(pos * div)
    pe[:, 1::2] = torch.cos(pos * div)
    return pe


class TranslationModel(nn.Module):
    def __init__(self, config: ModelConfig, vocab, graph=None, seed: int = 0):
        super().__init__()
        if config.hops > 0 and graph is None:
            raise ValueError("hops > 0 requires an equivalence graph")
        self.config = config
        self.vocab = vocab
        self.graph = graph

        d = config.d_model
        # transformer/backbone parameters draw from their own seed stream so
        # the baseline and graph variants share identical backbone init
        torch.manual_seed(derive_seed(seed, "backbone"))
        self.embed = nn.Parameter(torch.randn(len(vocab), d) * (d ** -0.5))
        self.transformer = nn.Transformer(
            d_model=d,
            nhead=config.heads,
            num_encoder_layers=config.enc_layers,
            num_decoder_layers=config.dec_layers,
            dim_feedforward=config.ffn_dim,
            dropout=config.dropout,
            batch_first=True,
        )
        # keep the reference (non-nested-tensor) encoder path in eval mode
        self.transformer.encoder.enable_nested_tensor = False
        self.free_out_proj = None
        if config.tie_mode == "none":
            self.free_out_proj = nn.Parameter(torch.randn(len(vocab), d) * (d ** -0.5))

        self.stack_params = nn.ParameterList()
        self.stack_activations = []
        if config.hops > 0:
            init = gnn.GraphMergeStack.init(
                d, config.hops, derive_seed(seed, "graph-stack"),
                activation=config.activation)
            for layer in init.layers:
                self.stack_params.append(nn.Parameter(torch.from_numpy(layer.w1)))
                self.stack_params.append(nn.Parameter(torch.from_numpy(layer.w2)))
                self.stack_params.append(nn.Parameter(torch.from_numpy(layer.b)))
                self.stack_activations.append(layer.activation)
            if config.freeze_graph_stack:
                for p in self.stack_params:
                    p.requires_grad_(False)

        self.register_buffer("positions",
                             sinusoidal_positions(2048, d), persistent=False)

    # -- graph stack -------------------------------------------------------

    def has_stack(self) -> bool:
        return self.config.hops > 0

    def set_identity_stack(self):
        """Force every graph layer to the exact no-op configuration."""
        d = self.config.d_model
        with torch.no_grad():
            for t in range(self.config.hops):
                self.stack_params[3 * t].copy_(torch.eye(d, dtype=torch.float64))
                self.stack_params[3 * t + 1].zero_()
                self.stack_params[3 * t + 2].zero_()
        self.stack_activations = ["identity"] * self.config.hops

    def numpy_stack(self) -> gnn.GraphMergeStack:
        layers = []
        for t in range(self.config.hops):
            layers.append(gnn.GraphLayerParams(
                self.stack_params[3 * t].detach().numpy().copy(),
                self.stack_params[3 * t + 1].detach().numpy().copy(),
                self.stack_params[3 * t + 2].detach().numpy().copy(),
                activation=self.stack_activations[t]))
        return gnn.GraphMergeStack(layers)

    def reparam_table(self) -> torch.Tensor:
        """Embedding table consumed by the backbone: the graph-stack output
        when hops > 0, otherwise the original table."""
        if not self.has_stack():
            return self.embed
        return _StackFunction.apply(self.embed, self.graph,
                                    tuple(self.stack_activations),
                                    *self.stack_params)

    # -- parameter accounting ------------------------------------------------

    def extra_parameter_count(self) -> int:
        """Trainable parameters added by the graph stack: hops * (2 d^2 + d)."""
        return sum(p.numel() for p in self.stack_params)

    def total_parameter_count(self) -> int:
        return sum(p.numel() for p in self.parameters())

    # -- forward -------------------------------------------------------------

    def _embed_tokens(self, table, indices):
        return (F.embedding(indices, table, padding_idx=self.vocab.pad)
                * math.sqrt(self.config.d_model)
                + self.positions[: indices.shape[1]])

    def _output_table(self, reparam):
        if self.config.tie_mode == "reparam":
            return reparam
        if self.config.tie_mode == "original":
            return self.embed
        return self.free_out_proj

    def logits(self, src, tgt_in):
        """Teacher-forced decoder logits, (batch, tgt_len, |V|)."""
        if int(src.max()) >= len(self.vocab) or int(tgt_in.max()) >= len(self.vocab):
            raise ValueError("token index out of vocabulary")
        table = self.reparam_table()
        src_pad = src.eq(self.vocab.pad)
        tgt_pad = tgt_in.eq(self.vocab.pad)
        causal = torch.triu(
            torch.ones(tgt_in.shape[1], tgt_in.shape[1], dtype=torch.bool), 1)
        out = self.transformer(
            self._embed_tokens(table, src),
            self._embed_tokens(table, tgt_in),
            tgt_mask=causal,
            src_key_padding_mask=src_pad,
            tgt_key_padding_mask=tgt_pad,
            memory_key_padding_mask=src_pad,
        )
        return out @ self._output_table(table).T

    @torch.no_grad()
    def greedy_decode(self, src_tokens, tgt_lang: str, max_len: int = 64):
        """Argmax decoding of one pre-tokenized source sentence until eos or
        max_len tokens."""
        self.eval()
        vocab = self.vocab
        src = torch.tensor([[vocab.tag_index(tgt_lang)]
                            + [vocab.lookup(t) for t in src_tokens]])
        table = self.reparam_table()
        memory = self.transformer.encoder(self._embed_tokens(table, src))
        out_table = self._output_table(table)
        ys = [vocab.bos]
        result = []
        for _ in range(max_len):
            tgt = torch.tensor([ys])
            causal = torch.triu(
                torch.ones(len(ys), len(ys), dtype=torch.bool), 1)
            dec = self.transformer.decoder(
                self._embed_tokens(table, tgt), memory, tgt_mask=causal)
            logits = dec[0, -1] @ out_table.T
            nxt = int(logits.argmax())
            if nxt == vocab.eos:
                break
            ys.append(nxt)
            result.append(vocab.token_of(nxt))
        return result


def label_smoothed_loss(logits, targets, pad_idx: int, smoothing: float):
    """Label-smoothed cross entropy averaged over non-pad target tokens.

    Returns (loss, token count, correct-argmax count).
    """
    logp = F.log_softmax(logits, dim=-1)
    nll = -logp.gather(-1, targets.unsqueeze(-1)).squeeze(-1)
    smooth = -logp.mean(dim=-1)
    per_tok = (1.0 - smoothing) * nll + smoothing * smooth
    mask = targets.ne(pad_idx)
    ntokens = int(mask.sum())
    if ntokens == 0:
        raise ValueError("batch contains no target tokens")
    loss = (per_tok * mask).sum() / ntokens
    ncorrect = int((logits.argmax(dim=-1).eq(targets) & mask).sum())
    return loss, ntokens, ncorrect


def forward_loss(model: TranslationModel, batch):
    """Loss and token statistics for one padded batch dict with keys
    ``src``, ``tgt_in``, ``tgt_out``."""
    logits = model.logits(batch["src"], batch["tgt_in"])
    return label_smoothed_loss(logits, batch["tgt_out"], model.vocab.pad,
                               model.config.label_smoothing)


def tie_output_projection(model: TranslationModel, mode: str):
    """Rebind the decoder output projection without copying values."""
    if mode not in TIE_MODES:
        raise ValueError("invalid tie mode %r" % mode)
    if mode == "none" and model.free_out_proj is None:
        d = model.config.d_model
        model.free_out_proj = nn.Parameter(
            torch.randn(len(model.vocab), d) * (d ** -0.5))
    model.config = replace(model.config, tie_mode=mode)

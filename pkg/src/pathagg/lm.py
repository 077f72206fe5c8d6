"""Small decoder-only transformer trained from random initialization.

Pre-norm blocks, learned positional embeddings, input/output embedding
tying. The training objective is mean next-token negative log-likelihood
over each chunk; the published form of the objective is written as a
positive sum of log-probabilities but named a loss, so the implementation
minimizes its negation.

Training runs in float32; gradient-check tests build float64 models.
Given fixed seeds and a fixed torch thread count, training is bitwise
reproducible.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .dist import EntityDistribution, stable_softmax
from .errors import ConfigError, DataError, NumericError
from .walks import TokenCorpus, Vocabulary, make_query_prompt

CHECKPOINT_FORMAT = "lm-checkpoint-v1"


@dataclass
class LmConfig:
    vocab_size: int
    context_len: int = 256
    layers: int = 4
    heads: int = 4
    model_dim: int = 128
    ff_dim: int = 0  # 0 -> 4 * model_dim
    dropout: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.ff_dim == 0:
            self.ff_dim = 4 * self.model_dim
        if self.model_dim % self.heads != 0:
            raise ConfigError(f"model_dim {self.model_dim} not divisible by heads {self.heads}")
        if self.context_len < 8:
            raise ConfigError(f"context_len must be >= 8, got {self.context_len}")


@dataclass
class TrainConfig:
    steps: int
    batch_size: int = 16
    learning_rate: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01
    grad_clip: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.steps < 0:
            raise ConfigError(f"steps must be >= 0, got {self.steps}")
        for name in ("batch_size", "learning_rate", "beta1", "beta2", "eps"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")


class Block(nn.Module):
    """Pre-norm causal self-attention + feed-forward residual block."""

    def __init__(self, cfg: LmConfig):
        super().__init__()
        self.heads = cfg.heads
        self.ln1 = nn.LayerNorm(cfg.model_dim)
        self.qkv = nn.Linear(cfg.model_dim, 3 * cfg.model_dim)
        self.proj = nn.Linear(cfg.model_dim, cfg.model_dim)
        self.ln2 = nn.LayerNorm(cfg.model_dim)
        self.fc1 = nn.Linear(cfg.model_dim, cfg.ff_dim)
        self.fc2 = nn.Linear(cfg.ff_dim, cfg.model_dim)
        self.drop = nn.Dropout(cfg.dropout)

    def forward(self, x: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        b, t, d = x.shape
        hd = d // self.heads
        q, k, v = self.qkv(self.ln1(x)).split(d, dim=2)
        q = q.view(b, t, self.heads, hd).transpose(1, 2)
        k = k.view(b, t, self.heads, hd).transpose(1, 2)
        v = v.view(b, t, self.heads, hd).transpose(1, 2)
        att = (q @ k.transpose(-2, -1)) / math.sqrt(hd)
        att = att.masked_fill(mask[:t, :t] == 0, float("-inf"))
        att = self.drop(att.softmax(dim=-1))
        y = (att @ v).transpose(1, 2).contiguous().view(b, t, d)
        x = x + self.drop(self.proj(y))
        x = x + self.drop(self.fc2(F.gelu(self.fc1(self.ln2(x)))))
        return x


class TinyLm(nn.Module):
    def __init__(self, cfg: LmConfig):
        super().__init__()
        self.cfg = cfg
        self.tok_emb = nn.Embedding(cfg.vocab_size, cfg.model_dim)
        self.pos_emb = nn.Embedding(cfg.context_len, cfg.model_dim)
        self.drop = nn.Dropout(cfg.dropout)
        self.blocks = nn.ModuleList(Block(cfg) for _ in range(cfg.layers))
        self.ln_f = nn.LayerNorm(cfg.model_dim)
        self.register_buffer("mask", torch.tril(torch.ones(cfg.context_len, cfg.context_len)))

    def forward(self, tokens: torch.Tensor) -> torch.Tensor:
        b, t = tokens.shape
        if t > self.cfg.context_len:
            raise ConfigError(f"sequence length {t} exceeds context_len {self.cfg.context_len}")
        if int(tokens.max()) >= self.cfg.vocab_size or int(tokens.min()) < 0:
            raise IndexError("token id out of vocabulary range")
        pos = torch.arange(t, device=tokens.device)
        x = self.drop(self.tok_emb(tokens) + self.pos_emb(pos))
        for block in self.blocks:
            x = block(x, self.mask)
        x = self.ln_f(x)
        # output projection tied to the input embedding
        return F.linear(x, self.tok_emb.weight)

    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.parameters())


def init_model(cfg: LmConfig, dtype: torch.dtype = torch.float32) -> TinyLm:
    """Fresh model with N(0, 0.02) weights, zero biases, unit layer-norm scales."""
    model = TinyLm(cfg).to(dtype)
    g = torch.Generator().manual_seed(cfg.seed)
    ln_params = {id(p) for m in model.modules() if isinstance(m, nn.LayerNorm)
                 for p in m.parameters()}
    with torch.no_grad():
        for name, p in model.named_parameters():
            if id(p) in ln_params:
                p.fill_(0.0 if name.endswith("bias") else 1.0)
            elif name.endswith("bias"):
                p.zero_()
            else:
                p.normal_(0.0, 0.02, generator=g)
    return model


def nll_loss(model: TinyLm, chunks: torch.Tensor) -> torch.Tensor:
    """Mean next-token NLL over all predicted positions of a chunk batch."""
    logits = model(chunks)
    return F.cross_entropy(
        logits[:, :-1].reshape(-1, logits.shape[-1]),
        chunks[:, 1:].reshape(-1),
    )


def loss_and_param_grads(model: TinyLm, chunks: torch.Tensor) -> tuple[float, dict[str, np.ndarray]]:
    """Loss value plus reverse-mode gradients for every parameter tensor."""
    model.zero_grad(set_to_none=True)
    loss = nll_loss(model, chunks)
    loss.backward()
    grads = {n: p.grad.detach().clone().numpy() for n, p in model.named_parameters()}
    model.zero_grad(set_to_none=True)
    return float(loss.item()), grads


def train(
    model: TinyLm,
    corpus: TokenCorpus,
    cfg: TrainConfig,
    log_path: str | Path | None = None,
) -> list[tuple[int, float]]:
    """Decoupled-weight-decay adaptive-moment training on packed chunks.

    Batches are chunk indices drawn with replacement from a generator seeded
    by ``cfg.seed``; dropout uses the torch seed, so two serial runs with the
    same seeds produce bitwise-identical parameters and losses.
    """
    if corpus.n_chunks == 0:
        raise DataError("corpus is empty")
    if corpus.t_chunk > model.cfg.context_len:
        raise ConfigError(
            f"corpus t_chunk {corpus.t_chunk} exceeds model context_len {model.cfg.context_len}")
    data = torch.from_numpy(np.ascontiguousarray(corpus.chunks)).long()
    rng = np.random.default_rng(cfg.seed)
    torch.manual_seed(cfg.seed)
    opt = torch.optim.AdamW(
        model.parameters(),
        lr=cfg.learning_rate,
        betas=(cfg.beta1, cfg.beta2),
        eps=cfg.eps,
        weight_decay=cfg.weight_decay,
    )
    model.train()
    history: list[tuple[int, float]] = []
    for step in range(cfg.steps):
        idx = rng.integers(0, corpus.n_chunks, size=cfg.batch_size)
        batch = data[torch.from_numpy(idx)]
        loss = nll_loss(model, batch)
        value = float(loss.item())
        if not math.isfinite(value):
            raise NumericError(
                f"non-finite loss {value} at step {step} (lr={cfg.learning_rate})")
        opt.zero_grad(set_to_none=True)
        loss.backward()
        if cfg.grad_clip > 0:
            torch.nn.utils.clip_grad_norm_(model.parameters(), cfg.grad_clip)
        opt.step()
        history.append((step, value))
    model.eval()
    if log_path is not None:
        with open(log_path, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["step", "loss"])
            for step, value in history:
                w.writerow([step, f"{value:.10g}"])
    return history


def entity_logits(model: TinyLm, vocab: Vocabulary, queries: list[tuple[int, int]]) -> np.ndarray:
    """Final-position logits over the entity token block for (e1, r) prompts."""
    model.eval()
    prompts = torch.tensor([make_query_prompt(e1, r, vocab) for e1, r in queries], dtype=torch.long)
    with torch.no_grad():
        logits = model(prompts)[:, -1, : vocab.entity_count]
    return logits.double().numpy()


def lm_entity_distribution(model: TinyLm, vocab: Vocabulary, e1: int, r: int) -> EntityDistribution:
    """Softmax over entity logits for the prompt (e1, r); strictly positive."""
    logits = entity_logits(model, vocab, [(e1, r)])[0]
    return EntityDistribution(stable_softmax(logits), "lm")


def predict(model: TinyLm, vocab: Vocabulary, e1: int, r: int) -> int:
    """Argmax entity for the query; exact ties resolve to the smallest id."""
    return int(np.argmax(entity_logits(model, vocab, [(e1, r)])[0]))


def save_checkpoint(
    path: str | Path,
    model: TinyLm,
    meta: dict | None = None,
    optimizer: torch.optim.Optimizer | None = None,
) -> None:
    payload = {
        "format": CHECKPOINT_FORMAT,
        "lm_config": asdict(model.cfg),
        "state_dict": model.state_dict(),
        "optimizer": optimizer.state_dict() if optimizer is not None else None,
        "meta": meta or {},
    }
    torch.save(payload, path)


def load_checkpoint(path: str | Path) -> tuple[TinyLm, dict]:
    if not Path(path).exists():
        raise DataError(f"checkpoint {path} not found")
    payload = torch.load(path, map_location="cpu", weights_only=False)
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise DataError(f"{path}: not a model checkpoint")
    model = TinyLm(LmConfig(**payload["lm_config"]))
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model, payload["meta"]

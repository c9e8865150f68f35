"""Tiny decoder-only transformer with a static or SCET embedding layer."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .errors import ConfigError, LengthError
from .rng import derive_seed
from .stochastic_kernel import SamplerConfig, select_state

EMBEDDING_MODES = ("static", "scet")
TRAIN_PATHS = ("soft_expectation", "mc_score_function", "mc_relaxed")
SCOPES = ("per_token", "shared")


@dataclass
class ModelConfig:
    layers: int = 2
    heads: int = 2
    model_dim: int = 64
    state_count: int = 4
    vocab_size: int = 512
    context_length: int = 128
    embedding_mode: str = "scet"
    mc_samples: int = 1
    train_path: str = "soft_expectation"
    lambda_kl: float = 0.01
    beta_entropy: float = 0.01
    tau: float = 1.0
    transition_scope: str = "per_token"
    initial_distribution: list[float] | None = None
    ff_mult: int = 4
    seed: int = 0

    def __post_init__(self):
        for name in ("layers", "heads", "model_dim", "state_count", "vocab_size", "context_length", "mc_samples",
                     "ff_mult"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be a positive integer")
        if self.model_dim % self.heads:
            raise ConfigError(f"model_dim {self.model_dim} is not divisible by heads {self.heads}")
        if self.embedding_mode not in EMBEDDING_MODES:
            raise ConfigError(f"embedding_mode must be one of {EMBEDDING_MODES}")
        if self.train_path not in TRAIN_PATHS:
            raise ConfigError(f"train_path must be one of {TRAIN_PATHS}")
        if self.transition_scope not in SCOPES:
            raise ConfigError(f"transition_scope must be one of {SCOPES}")
        if not self.tau > 0 or self.lambda_kl < 0 or self.beta_entropy < 0:
            raise ConfigError("tau must be positive and regularizer weights non-negative")
        if self.embedding_mode == "static":
            self.state_count = 1
        if self.initial_distribution is not None:
            pi = np.asarray(self.initial_distribution, dtype=np.float64)
            if pi.shape != (self.state_count,) or np.any(pi < 0) or abs(pi.sum() - 1) > 1e-9:
                raise ConfigError("initial_distribution must be a probability vector of length state_count")
            self.initial_distribution = [float(v) for v in pi]

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**doc)


@dataclass
class ForwardOutput:
    logits: torch.Tensor                 # B x T x V
    hidden: list[torch.Tensor]           # L+1 tensors B x T x d; index 0 is the block input
    q: torch.Tensor | None = None        # B x T x S selection distributions
    states: torch.Tensor | None = None   # B x T realized state ids (sampled modes)
    log_prob: torch.Tensor | None = None  # B x T mean log q of the drawn states (score-function path)
    extras: dict = field(default_factory=dict)


class Block(nn.Module):
    def __init__(self, d: int, heads: int, ff_mult: int):
        super().__init__()
        self.heads = heads
        self.ln1 = nn.LayerNorm(d)
        self.qkv = nn.Linear(d, 3 * d)
        self.proj = nn.Linear(d, d)
        self.ln2 = nn.LayerNorm(d)
        self.fc = nn.Linear(d, ff_mult * d)
        self.out = nn.Linear(ff_mult * d, d)

    def _split(self, x):
        B, T, d = x.shape
        return x.view(B, T, self.heads, d // self.heads).transpose(1, 2)

    def _attend(self, q, k, v, mask):
        att = (q @ k.transpose(-2, -1)) / math.sqrt(q.shape[-1])
        if mask is not None:
            att = att.masked_fill(mask, float("-inf"))
        y = torch.softmax(att, dim=-1) @ v
        B, H, T, dh = y.shape
        return self.proj(y.transpose(1, 2).reshape(B, T, H * dh))

    def _mlp(self, x):
        return x + self.out(F.gelu(self.fc(self.ln2(x))))

    def forward(self, x):
        T = x.shape[1]
        q, k, v = self.qkv(self.ln1(x)).split(x.shape[-1], dim=-1)
        mask = torch.ones(T, T, dtype=torch.bool, device=x.device).triu(1)
        x = x + self._attend(self._split(q), self._split(k), self._split(v), mask)
        return self._mlp(x)

    def step(self, x, cache: list):
        """One new position ``x`` (B x 1 x d); ``cache`` holds earlier keys and values."""
        q, k, v = self.qkv(self.ln1(x)).split(x.shape[-1], dim=-1)
        cache[0].append(self._split(k))
        cache[1].append(self._split(v))
        keys = torch.cat(cache[0], dim=2)
        values = torch.cat(cache[1], dim=2)
        x = x + self._attend(self._split(q), keys, values, None)
        return self._mlp(x)


class ScetModel(nn.Module):
    def __init__(self, config: ModelConfig, dtype: torch.dtype = torch.float32):
        super().__init__()
        self.config = config
        V, S, d = config.vocab_size, config.state_count, config.model_dim
        self.table = nn.Parameter(torch.empty(V, S, d, dtype=dtype))
        self.pos = nn.Parameter(torch.empty(config.context_length, d, dtype=dtype))
        if self.is_scet:
            n_mats = V if config.transition_scope == "per_token" else 1
            self.transition_logits = nn.Parameter(torch.zeros(n_mats, S, S, dtype=dtype))
            self.start = nn.Parameter(torch.empty(d, dtype=dtype))
        else:
            self.register_parameter("transition_logits", None)
            self.register_parameter("start", None)
        self.blocks = nn.ModuleList(Block(d, config.heads, config.ff_mult) for _ in range(config.layers))
        self.ln_f = nn.LayerNorm(d)
        self.head = nn.Linear(d, V)
        self.to(dtype)
        pi = config.initial_distribution or [1.0 / S] * S
        self.register_buffer("initial", torch.tensor(pi, dtype=dtype), persistent=False)
        self.reset_parameters()

    @property
    def is_scet(self) -> bool:
        return self.config.embedding_mode == "scet"

    def reset_parameters(self):
        gen = torch.Generator().manual_seed(derive_seed(self.config.seed, "model/init") % 2**63)
        for name, p in self.named_parameters():
            with torch.no_grad():
                if name == "transition_logits":
                    p.zero_()
                elif name.endswith("bias"):
                    p.zero_()
                elif ".ln" in name or name.startswith("ln_f"):
                    p.fill_(1.0)
                else:
                    p.copy_(torch.randn(p.shape, generator=gen, dtype=torch.float64).to(p.dtype) * 0.02)

    def parameter_groups(self) -> dict[str, list[str]]:
        groups: dict[str, list[str]] = {}
        for name, _ in self.named_parameters():
            key = name.split(".")[0] if not name.startswith("blocks.") else ".".join(name.split(".")[:3])
            groups.setdefault(key, []).append(name)
        return groups

    def transition_rows(self, tokens: torch.Tensor) -> torch.Tensor:
        """Row-stochastic matrices for ``tokens`` (any shape) -> ``tokens.shape + (S, S)``."""
        theta = self.transition_logits
        if theta.shape[0] == 1:
            theta = theta.expand(self.config.vocab_size, -1, -1)
        return torch.softmax(theta[tokens], dim=-1)

    def regularizer(self) -> torch.Tensor:
        """``lambda * mean KL(P_row || uniform) - beta * mean H(P_row)``."""
        c = self.config
        if not self.is_scet or (c.lambda_kl == 0 and c.beta_entropy == 0):
            return self.table.new_zeros(())
        logp = torch.log_softmax(self.transition_logits, dim=-1)
        p = logp.exp()
        neg_entropy = (p * logp).sum(-1)
        kl = neg_entropy + math.log(c.state_count)
        return c.lambda_kl * kl.mean() + c.beta_entropy * neg_entropy.mean()

    def _check_length(self, T: int):
        if T > self.config.context_length:
            raise LengthError(f"sequence of length {T} exceeds context_length {self.config.context_length}")

    def forward_parallel(self, tokens: torch.Tensor) -> ForwardOutput:
        """Standard lookup and causal stack, used for static and single-state models."""
        B, T = tokens.shape
        self._check_length(T)
        x = self.table[tokens, 0] + self.pos[:T]
        hidden = [x]
        for block in self.blocks:
            x = block(x)
            hidden.append(x)
        logits = self.head(self.ln_f(x))
        out = ForwardOutput(logits, hidden)
        if self.is_scet:
            out.q = torch.ones(B, T, 1, dtype=x.dtype)
            out.states = torch.zeros(B, T, dtype=torch.long)
        return out

    def forward(self, tokens: torch.Tensor, path: str | None = None, sampler: SamplerConfig | None = None,
                rngs=None, generator: torch.Generator | None = None, sequential: bool = False) -> ForwardOutput:
        """Logits for every position.

        ``path`` is one of the training paths, or ``"sample"`` to realize a
        state per position with ``sampler`` and one numpy stream per batch
        row in ``rngs``.  Static and single-state models take the parallel
        path unless ``sequential`` is set.
        """
        tokens = torch.as_tensor(tokens, dtype=torch.long)
        if tokens.dim() == 1:
            tokens = tokens[None]
        if not self.is_scet or (self.config.state_count == 1 and not sequential):
            return self.forward_parallel(tokens)
        B, T = tokens.shape
        self._check_length(T)
        path = path or self.config.train_path
        carry = self.begin(B)
        E_all = self.table[tokens]
        P_all = self.transition_rows(tokens)
        outs = [self.step(tokens[:, t], carry, path, sampler, rngs, generator, E=E_all[:, t], P=P_all[:, t],
                          project=False) for t in range(T)]
        out = ForwardOutput(
            logits=self.head(torch.stack([o["final"] for o in outs], 1)),
            hidden=[torch.stack([o["hidden"][i] for o in outs], 1) for i in range(len(self.blocks) + 1)],
            q=torch.stack([o["q"] for o in outs], 1),
        )
        if outs and outs[0]["states"] is not None:
            out.states = torch.stack([o["states"] for o in outs], 1)
        if outs and outs[0]["log_prob"] is not None:
            out.log_prob = torch.stack([o["log_prob"] for o in outs], 1)
        return out

    def begin(self, batch: int) -> dict:
        """Fresh per-sequence carry: context, previous-state distribution, caches."""
        d = self.config.model_dim
        ctx = self.start.expand(batch, d) if self.is_scet else None
        return {"t": 0, "context": ctx, "prev": self.initial.expand(batch, -1),
                "cache": [([], []) for _ in self.blocks]}

    def step(self, token: torch.Tensor, carry: dict, path: str = "soft_expectation",
             sampler: SamplerConfig | None = None, rngs=None, generator: torch.Generator | None = None,
             E: torch.Tensor | None = None, P: torch.Tensor | None = None, project: bool = True) -> dict:
        """Advance one position for a batch of tokens (shape ``B``).

        ``E`` and ``P`` may carry the token's state vectors and transition
        rows when the caller gathered them for the whole sequence at once.
        """
        c = self.config
        t = carry["t"]
        self._check_length(t + 1)
        if E is None:
            E = self.table[token]  # B x S x d
        q = states = log_prob = None
        if self.is_scet:
            scores = (E @ carry["context"].unsqueeze(-1)).squeeze(-1) / math.sqrt(c.model_dim)
            if P is None:
                P = self.transition_rows(token)
            prior = (carry["prev"].unsqueeze(1) @ P).squeeze(1)
            logq = torch.log_softmax(torch.log(prior.clamp_min(1e-30)) + scores / c.tau, dim=-1)
            q = logq.exp()
            emb, prev, states, log_prob = self._select(E, q, logq, path, sampler, rngs, generator)
            carry["prev"] = prev
        else:
            emb = E[:, 0]
        x = (emb + self.pos[t]).unsqueeze(1)
        hidden = [x[:, 0]]
        for block, cache in zip(self.blocks, carry["cache"]):
            x = block.step(x, cache)
            hidden.append(x[:, 0])
        final = self.ln_f(x[:, 0])
        carry["context"] = final
        carry["t"] = t + 1
        return {"logits": self.head(final) if project else None, "final": final, "hidden": hidden, "q": q, "states": states, "log_prob": log_prob}

    def _select(self, E, q, logq, path, sampler, rngs, generator):
        B, S, _ = E.shape
        M = self.config.mc_samples
        rows = torch.arange(B)
        if path == "soft_expectation":
            return (q.unsqueeze(1) @ E).squeeze(1), q, None, None
        if path == "mc_relaxed":
            u = torch.rand((M, B, S), generator=generator, dtype=q.dtype).clamp(1e-20, 1.0 - 1e-7)
            y = torch.softmax((logq - torch.log(-torch.log(u))) / self.config.tau, dim=-1)
            emb = torch.einsum("mbs,bsd->bd", y, E) / M
            return emb, y.mean(0), y.argmax(-1)[0], None
        if path == "mc_score_function":
            draws = torch.multinomial(q.detach(), M, replacement=True, generator=generator)  # B x M
            emb = E[rows[:, None], draws].mean(1)
            prev = F.one_hot(draws, S).to(q.dtype).mean(1)
            return emb, prev, draws[:, 0], logq.gather(1, draws).mean(1)
        if path == "sample":
            sampler = sampler or SamplerConfig()
            qn = q.detach().to(torch.float64).numpy()
            picked = [select_state(qn[b] / qn[b].sum(), sampler, rngs[b] if rngs is not None else None)
                      for b in range(B)]
            idx = torch.tensor(picked, dtype=torch.long)
            return E[rows, idx], F.one_hot(idx, S).to(q.dtype), idx, None
        raise ConfigError(f"unknown forward path {path!r}")

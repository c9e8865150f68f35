"""Loss, optimization loop, finite-difference gradient check and generation."""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from .errors import ConfigError, DivergenceError, LengthError
from .model import ModelConfig, ScetModel
from .rng import derive_seed, stream
from .stochastic_kernel import SamplerConfig

LOSS_COLUMNS = ("step", "loss", "ce_term", "reg_term")


@dataclass
class TrainConfig:
    steps: int = 2000
    batch_size: int = 16
    seq_len: int = 32
    lr: float = 3e-4
    warmup_steps: int = 100
    weight_decay: float = 0.0
    grad_clip: float = 1.0
    log_every: int = 10
    divergence_factor: float = 10.0
    divergence_patience: int = 100

    def __post_init__(self):
        if self.steps < 0 or self.batch_size < 1 or self.seq_len < 1 or self.log_every < 1:
            raise ConfigError("steps must be >= 0; batch_size, seq_len and log_every must be positive")
        if not self.lr > 0 or self.warmup_steps < 0:
            raise ConfigError("lr must be positive and warmup_steps non-negative")

    @classmethod
    def from_dict(cls, doc: dict) -> "TrainConfig":
        unknown = set(doc) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"unknown train config keys: {sorted(unknown)}")
        return cls(**doc)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class LossTerms:
    total: torch.Tensor
    ce: torch.Tensor
    reg: torch.Tensor


@dataclass
class TrainResult:
    model: ScetModel
    history: list[dict] = field(default_factory=list)
    initial_loss: float = float("nan")
    final_loss: float = float("nan")


def lr_factor(step: int, warmup: int, total: int) -> float:
    """Linear warmup to 1, then cosine decay to 0 at ``total``."""
    if warmup and step < warmup:
        return (step + 1) / warmup
    span = max(total - warmup, 1)
    return 0.5 * (1.0 + math.cos(math.pi * min(step - warmup, span) / span))


def loss_terms(model: ScetModel, batch: torch.Tensor, generator: torch.Generator | None = None) -> LossTerms:
    """Mean next-token cross-entropy plus the transition regularizer.

    On the score-function path the transition gradient comes from the
    surrogate ``log q(s) * (loss_t - b_t)`` where ``b_t`` is the
    leave-one-out batch mean of the per-position loss.  The surrogate is
    added as ``s - s.detach()`` so the reported value is unchanged.
    """
    inputs, targets = batch[:, :-1], batch[:, 1:]
    out = model(inputs, generator=generator)
    B, T, V = out.logits.shape
    per_pos = F.cross_entropy(out.logits.reshape(-1, V), targets.reshape(-1), reduction="none").view(B, T)
    ce = per_pos.mean()
    reg = model.regularizer()
    total = ce + reg
    if out.log_prob is not None:
        loss_t = per_pos.detach()
        baseline = (loss_t.sum(0, keepdim=True) - loss_t) / (B - 1) if B > 1 else torch.zeros_like(loss_t)
        surrogate = (out.log_prob * (loss_t - baseline)).mean()
        total = total + (surrogate - surrogate.detach())
    return LossTerms(total, ce, reg)


def sample_batch(data: np.ndarray, batch_size: int, seq_len: int, rng: np.random.Generator) -> torch.Tensor:
    n = len(data) - seq_len - 1
    if n < 0:
        raise LengthError(f"token stream of {len(data)} tokens is shorter than seq_len + 1 = {seq_len + 1}")
    starts = rng.integers(0, n + 1, size=batch_size)
    return torch.from_numpy(np.stack([data[s:s + seq_len + 1] for s in starts]).astype(np.int64))


def write_loss_csv(path, history: list[dict]):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=LOSS_COLUMNS, lineterminator="\n")
        w.writeheader()
        for row in history:
            w.writerow({k: (f"{row[k]:.8g}" if k != "step" else row[k]) for k in LOSS_COLUMNS})


def train(config: ModelConfig, data: np.ndarray, tc: TrainConfig | None = None, model: ScetModel | None = None,
          progress=None) -> TrainResult:
    """Adam with warmup and cosine decay on random windows of ``data``.

    Raises :class:`DivergenceError` when the loss or a parameter becomes
    non-finite, or the loss stays above ``divergence_factor`` times its
    initial value for ``divergence_patience`` consecutive steps.
    """
    tc = tc or TrainConfig()
    data = np.asarray(data, dtype=np.int64)
    if data.size and (data.min() < 0 or data.max() >= config.vocab_size):
        raise ConfigError(f"token ids must lie in [0, {config.vocab_size})")
    if tc.seq_len > config.context_length:
        raise ConfigError(f"seq_len {tc.seq_len} exceeds context_length {config.context_length}")
    model = model or ScetModel(config)
    model.train()
    opt = torch.optim.Adam(model.parameters(), lr=tc.lr, weight_decay=tc.weight_decay)
    sched = torch.optim.lr_scheduler.LambdaLR(opt, lambda s: lr_factor(s, tc.warmup_steps, tc.steps))
    batch_rng = stream(config.seed, "train/batches")
    mc_gen = torch.Generator().manual_seed(derive_seed(config.seed, "train/monte-carlo") % 2**63)
    result = TrainResult(model)
    over = 0
    for step in range(tc.steps):
        batch = sample_batch(data, tc.batch_size, tc.seq_len, batch_rng)
        terms = loss_terms(model, batch, mc_gen)
        loss = float(terms.total.detach())
        if not math.isfinite(loss):
            raise DivergenceError(f"non-finite loss {loss} at step {step} (ce={float(terms.ce.detach())}, "
                                  f"reg={float(terms.reg.detach())}, lr={sched.get_last_lr()[0]:.3g})", step=step)
        if step == 0:
            result.initial_loss = loss
        over = over + 1 if loss > tc.divergence_factor * result.initial_loss else 0
        if over >= tc.divergence_patience:
            raise DivergenceError(f"loss {loss:.4g} stayed above {tc.divergence_factor}x the initial "
                                  f"{result.initial_loss:.4g} for {over} steps (step {step})", step=step)
        opt.zero_grad(set_to_none=True)
        terms.total.backward()
        if tc.grad_clip:
            torch.nn.utils.clip_grad_norm_(model.parameters(), tc.grad_clip)
        opt.step()
        sched.step()
        for name, p in model.named_parameters():
            if not torch.isfinite(p).all():
                raise DivergenceError(f"parameter {name} became non-finite at step {step}", step=step)
        if step % tc.log_every == 0 or step == tc.steps - 1:
            row = {"step": step, "loss": loss, "ce_term": float(terms.ce.detach()), "reg_term": float(terms.reg.detach())}
            result.history.append(row)
            if progress:
                progress(row)
        result.final_loss = loss
    model.eval()
    return result


def evaluate_loss(model: ScetModel, data: np.ndarray, seq_len: int, max_windows: int = 64) -> float:
    """Mean cross-entropy over consecutive non-overlapping windows (soft path)."""
    data = np.asarray(data, dtype=np.int64)
    n = min((len(data) - 1) // seq_len, max_windows)
    if n < 1:
        raise LengthError("not enough tokens for one evaluation window")
    batch = torch.from_numpy(np.stack([data[i * seq_len:(i + 1) * seq_len + 1] for i in range(n)]))
    with torch.no_grad():
        out = model(batch[:, :-1], path="soft_expectation")
        V = out.logits.shape[-1]
        return float(F.cross_entropy(out.logits.reshape(-1, V), batch[:, 1:].reshape(-1)))


def next_token_accuracy(model: ScetModel, data: np.ndarray, seq_len: int, max_windows: int = 64) -> float:
    data = np.asarray(data, dtype=np.int64)
    n = min((len(data) - 1) // seq_len, max_windows)
    batch = torch.from_numpy(np.stack([data[i * seq_len:(i + 1) * seq_len + 1] for i in range(n)]))
    with torch.no_grad():
        out = model(batch[:, :-1], path="soft_expectation")
    return float((out.logits.argmax(-1) == batch[:, 1:]).double().mean())


# -- gradient check ---------------------------------------------------------

TINY = dict(layers=2, heads=2, model_dim=8, state_count=3, vocab_size=16, context_length=8,
            lambda_kl=0.05, beta_entropy=0.05, tau=0.7)


def _randomize(model: ScetModel, gen: torch.Generator):
    # move every parameter off its structured initialization so no gradient is trivially zero
    with torch.no_grad():
        for name, p in model.named_parameters():
            scale = 0.8 if name == "transition_logits" else 0.3
            p.add_(torch.randn(p.shape, generator=gen, dtype=p.dtype) * scale)


def _group_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    denom = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-12)
    return float(np.linalg.norm(analytic - numeric) / denom)


def grad_check(config: ModelConfig | None = None, seq_len: int = 6, batch_size: int = 2, h: float = 1e-4,
               coords_per_group: int = 24, seed: int = 0) -> dict:
    """Central differences against autograd for every parameter group (float64, soft path).

    The error of a group is ``||g_analytic - g_numeric|| / max(norms)`` over
    the sampled coordinates.  Also checks the regularizer on its own.
    """
    config = config or ModelConfig(**TINY, seed=seed)
    if config.train_path != "soft_expectation":
        raise ConfigError("grad_check runs on the soft_expectation path")
    if config.vocab_size > 20 or config.model_dim > 16 or config.state_count > 4 or seq_len > 8:
        raise ConfigError("grad_check expects V <= 20, d <= 16, S <= 4, length <= 8")
    model = ScetModel(config, dtype=torch.float64)
    gen = torch.Generator().manual_seed(derive_seed(seed, "grad-check/params") % 2**63)
    _randomize(model, gen)
    rng = stream(seed, "grad-check/coords")
    batch = torch.from_numpy(rng.integers(0, config.vocab_size, size=(batch_size, seq_len + 1)))

    def total():
        return loss_terms(model, batch).total

    def reg_only():
        return model.regularizer()

    report = {"groups": {}, "h": h}
    params = dict(model.named_parameters())
    for fn, key in ((total, "groups"), (reg_only, "regularizer")):
        model.zero_grad(set_to_none=True)
        fn().backward()
        names = list(params) if key == "groups" else (["transition_logits"] if model.is_scet else [])
        per_group: dict[str, tuple[list, list]] = {}
        for name in names:
            p = params[name]
            grad = p.grad.detach().clone() if p.grad is not None else torch.zeros_like(p)
            flat = p.data.view(-1)
            picks = rng.choice(flat.numel(), size=min(coords_per_group, flat.numel()), replace=False)
            group = name if key == "regularizer" else next(g for g, ns in model.parameter_groups().items()
                                                            if name in ns)
            a_list, n_list = per_group.setdefault(group, ([], []))
            for i in picks:
                orig = flat[i].item()
                with torch.no_grad():
                    flat[i] = orig + h
                    up = float(fn())
                    flat[i] = orig - h
                    down = float(fn())
                    flat[i] = orig
                a_list.append(float(grad.view(-1)[i]))
                n_list.append((up - down) / (2 * h))
        errors = {g: _group_error(np.array(a), np.array(n)) for g, (a, n) in per_group.items()}
        if key == "groups":
            report["groups"] = errors
        else:
            report["regularizer"] = errors.get("transition_logits", 0.0)
    report["max_relative_error"] = max(report["groups"].values())
    report["transition_logits"] = report["groups"].get("transition_logits")
    return report


# -- generation -------------------------------------------------------------

def trial_seed(master_seed: int, trial: int) -> int:
    return derive_seed(master_seed, f"generate/trial/{trial}")


def _pick_token(logits: np.ndarray, temperature: float, rng: np.random.Generator) -> int:
    if temperature == 0:
        return int(np.argmax(logits))
    z = (logits - logits.max()) / temperature
    p = np.exp(z)
    cdf = np.cumsum(p)
    return min(int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right")), len(p) - 1)


@torch.no_grad()
def generate_one(model: ScetModel, prompt: list[int], max_tokens: int, sampler: SamplerConfig, seed: int,
                 vocab_temperature: float = 0.0) -> dict:
    """Sample a continuation; stops early when the context window is full."""
    if not prompt:
        raise ConfigError("prompt must contain at least one token")
    if vocab_temperature < 0:
        raise ConfigError("vocab_temperature must be >= 0")
    state_rng = stream(seed, "generate/states")
    vocab_rng = stream(seed, "generate/vocab")
    limit = model.config.context_length
    tokens = list(prompt[:limit])
    carry = model.begin(1)
    states, dists = [], []
    out = None
    for tok in tokens:
        out = model.step(torch.tensor([tok]), carry, "sample", sampler, [state_rng])
        if model.is_scet:
            states.append(int(out["states"][0]))
            dists.append(out["q"][0].tolist())
    produced = 0
    while produced < max_tokens and len(tokens) < limit:
        nxt = _pick_token(out["logits"][0].double().numpy(), vocab_temperature, vocab_rng)
        tokens.append(nxt)
        produced += 1
        if len(tokens) < limit and produced < max_tokens:
            out = model.step(torch.tensor([nxt]), carry, "sample", sampler, [state_rng])
            if model.is_scet:
                states.append(int(out["states"][0]))
                dists.append(out["q"][0].tolist())
    record = {"seed": seed, "tokens": tokens, "prompt_length": len(prompt[:limit])}
    if model.is_scet:
        record["states"] = states
        record["q"] = dists
    return record


def generate(model: ScetModel, prompt: list[int], max_tokens: int, sampler: SamplerConfig | None = None,
             n_trials: int = 1, master_seed: int = 0, vocab_temperature: float = 0.0,
             seeds: list[int] | None = None) -> list[dict]:
    """``n_trials`` independent continuations; trial ``i`` uses ``trial_seed(master_seed, i)``."""
    sampler = sampler or SamplerConfig()
    if seeds is not None and len(seeds) != n_trials:
        raise ConfigError("need one seed per trial")
    records = []
    for i in range(n_trials):
        seed = seeds[i] if seeds is not None else trial_seed(master_seed, i)
        rec = generate_one(model, prompt, max_tokens, sampler, seed, vocab_temperature)
        rec["trial"] = i
        records.append(rec)
    return records

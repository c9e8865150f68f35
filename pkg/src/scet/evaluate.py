"""Metric battery over a checkpoint and a prompt set, plus report serialization."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import torch

from .checkpoint import Checkpoint
from .errors import ConfigError
from .metrics import (
    BUCKETS,
    bootstrap_ci,
    cluster_shift,
    cosine_rows,
    exact_match_rate,
    rare_word_recall,
    sentence_length_buckets,
    token_uniqueness,
    transition_histogram,
    trial_variability,
    type_token_ratio,
)
from .rng import derive_seed, stream
from .stochastic_kernel import SamplerConfig
from .training import generate


@dataclass
class EvalOptions:
    max_new_tokens: int = 64
    n_trials: int = 10
    sampler_mode: str = "categorical"
    sampler_temperature: float = 1.0
    vocab_temperature: float = 0.0
    uniqueness_window: int = 50
    rare_weighting: str = "inverse"
    histogram_bins: int = 20
    layer_pairs: list | None = None
    clusters: int = 4
    bootstrap_resamples: int = 1000
    max_prompts: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.n_trials < 1 or self.max_new_tokens < 0:
            raise ConfigError("n_trials must be >= 1 and max_new_tokens >= 0")
        self.sampler = SamplerConfig(self.sampler_mode, self.sampler_temperature)

    @classmethod
    def from_dict(cls, doc: dict) -> "EvalOptions":
        unknown = set(doc) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"unknown eval option keys: {sorted(unknown)}")
        return cls(**doc)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass
class EvalItem:
    prompt: str
    continuation: str


def load_eval_items(path) -> list[EvalItem]:
    """JSON list of ``{"prompt": ..., "continuation": ...}``."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"eval prompts file not found: {path}")
    doc = json.loads(path.read_text(encoding="utf-8"))
    items = []
    for i, entry in enumerate(doc):
        if set(entry) != {"prompt", "continuation"}:
            raise ConfigError(f"eval item {i} must have exactly the keys prompt and continuation")
        items.append(EvalItem(entry["prompt"], entry["continuation"]))
    if not items:
        raise ConfigError("empty evaluation set")
    return items


@dataclass
class MetricsReport:
    mode: str
    scalars: dict[str, dict] = field(default_factory=dict)   # name -> {value, ci_low, ci_high}
    sentence_buckets: dict[str, int] = field(default_factory=dict)
    layer_cosine: list[dict] = field(default_factory=list)
    histogram: dict | None = None
    projection: list[list[float]] = field(default_factory=list)
    generations: list[dict] = field(default_factory=list)

    def put(self, name: str, value: float, ci=(None, None)):
        self.scalars[name] = {"value": float(value), "ci_low": ci[0], "ci_high": ci[1]}

    def value(self, name: str) -> float:
        return self.scalars[name]["value"]

    def to_json(self) -> dict:
        doc = asdict(self)
        doc.pop("generations")
        return doc

    def write(self, out_dir, stem: str = "metrics"):
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / f"{stem}.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["name", "value", "ci_low", "ci_high"])
            for name, v in self.scalars.items():
                w.writerow([name, _num(v["value"]), _num(v["ci_low"]), _num(v["ci_high"])])
        (out / f"{stem}.json").write_text(json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n",
                                          encoding="utf-8")
        if self.histogram is not None:
            with open(out / f"{stem}_histogram.csv", "w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["bin_low", "bin_high", "count"])
                edges, counts = self.histogram["edges"], self.histogram["counts"]
                for i, c in enumerate(counts):
                    w.writerow([_num(edges[i]), _num(edges[i + 1]), c])
        with open(out / f"{stem}_projection.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x", "y", "cluster"])
            for row in self.projection:
                w.writerow([_num(row[0]), _num(row[1]), int(row[2])])


def _num(v) -> str:
    return "" if v is None else repr(float(v))


def _rows(n: int, seed: int, label: str):
    return [stream(derive_seed(seed, f"{label}/{i}"), "states") for i in range(n)]


@torch.no_grad()
def _forward(model, ids: list[int], options: EvalOptions, label: str):
    ids = ids[: model.config.context_length]
    return model(torch.tensor([ids]), path="sample", sampler=options.sampler,
                 rngs=_rows(1, options.seed, label)), ids


def evaluate(ckpt: Checkpoint, items: list[EvalItem], options: EvalOptions | None = None,
             rare_counts: dict | None = None) -> MetricsReport:
    options = options or EvalOptions()
    model, tok = ckpt.model, ckpt.tokenizer
    if tok is None:
        raise ConfigError("checkpoint carries no tokenizer")
    if not items:
        raise ConfigError("empty evaluation set")
    items = items[: options.max_prompts] if options.max_prompts else items
    rare_counts = rare_counts if rare_counts is not None else {
        int(k): v for k, v in ckpt.extra.get("rare_counts", {}).items()}
    L = model.config.layers
    pairs = [tuple(p) for p in (options.layer_pairs or [(1, L)])]
    for a, b in pairs:
        if not (0 <= a <= L and 0 <= b <= L):
            raise ConfigError(f"layer pair {(a, b)} outside 0..{L}")
    report = MetricsReport(model.config.embedding_mode)

    # teacher-forced next-token accuracy over every continuation position
    preds, targets, per_item = [], [], []
    cos_a = {p: [] for p in pairs}
    cos_b = {p: [] for p in pairs}
    sims = []
    for i, item in enumerate(items):
        p_ids, c_ids = tok.encode(item.prompt), tok.encode(item.continuation)
        out, ids = _forward(model, p_ids + c_ids, options, f"eval/forward/{i}")
        n_p = min(len(p_ids), len(ids))
        if len(ids) > n_p and n_p > 0:
            guess = out.logits[0, n_p - 1:len(ids) - 1].argmax(-1).numpy()
            truth = np.array(ids[n_p:])
            preds.append(guess)
            targets.append(truth)
            per_item.append(float(np.mean(guess == truth)))
            final = out.hidden[-1][0].double().numpy()
            sims.append(cosine_rows(final[:n_p].mean(0, keepdims=True), final[n_p:].mean(0, keepdims=True))[0])
        for a, b in pairs:
            cos_a[(a, b)].append(out.hidden[a][0].double().numpy())
            cos_b[(a, b)].append(out.hidden[b][0].double().numpy())
    if not preds:
        raise ConfigError("no evaluation item has both a prompt and a continuation")
    report.put("completion_accuracy", exact_match_rate(np.concatenate(preds), np.concatenate(targets)),
               bootstrap_ci(per_item, options.bootstrap_resamples, seed=options.seed))
    for a, b in pairs:
        mean, skipped = cosine_rows(np.vstack(cos_a[(a, b)]), np.vstack(cos_b[(a, b)]))
        report.layer_cosine.append({"layers": [a, b], "mean_cosine": mean, "excluded_zero_vectors": skipped})
        report.put(f"layer_cosine_{a}_{b}", mean)
    report.put("semantic_similarity_proxy", float(np.mean(sims)),
               bootstrap_ci(sims, options.bootstrap_resamples, seed=options.seed))

    # repeated-trial generation
    ttr, uniq, var, generated_all = [], [], [], []
    buckets = dict.fromkeys(BUCKETS, 0)
    for i, item in enumerate(items):
        p_ids = tok.encode(item.prompt)
        if not p_ids:
            continue
        recs = generate(model, p_ids, options.max_new_tokens, options.sampler, options.n_trials,
                        derive_seed(options.seed, f"eval/prompt/{i}"), options.vocab_temperature)
        outs = [r["tokens"][r["prompt_length"]:] for r in recs]
        for r, g in zip(recs, outs):
            report.generations.append({"item": i, "trial": r["trial"], "seed": r["seed"], "tokens": g})
            if g:
                ttr.append(type_token_ratio(g))
                uniq.append(token_uniqueness(g, options.uniqueness_window))
                generated_all.append(g)
                for k, v in _quiet_buckets(tok.decode(g)).items():
                    buckets[k] += v
        if len(outs) >= 2:
            var.append(trial_variability(outs))
    n_boot, s = options.bootstrap_resamples, options.seed
    if ttr:
        report.put("type_token_ratio", float(np.mean(ttr)), bootstrap_ci(ttr, n_boot, seed=s))
        report.put("token_uniqueness", float(np.mean(uniq)), bootstrap_ci(uniq, n_boot, seed=s))
    if var:
        report.put("trial_variability", float(np.mean(var)), bootstrap_ci(var, n_boot, seed=s))
    if rare_counts and generated_all:
        report.put("rare_word_recall", rare_word_recall(generated_all, rare_counts, options.rare_weighting))
    report.sentence_buckets = buckets
    total = sum(buckets.values())
    for k in BUCKETS:
        report.put(f"sentences_{k}", buckets[k] / total if total else 0.0)

    # representation geometry
    if model.is_scet:
        P = torch.softmax(model.transition_logits.detach().double(), -1).numpy()
        h = transition_histogram(P, options.histogram_bins)
        report.histogram = {"edges": h.edges.tolist(), "counts": h.counts.tolist()}
    table = model.table.detach().double().numpy()
    cl = cluster_shift(table.reshape(-1, table.shape[-1]), options.clusters, seed=options.seed)
    report.put("cluster_within", cl.within)
    report.put("cluster_between", cl.between)
    report.projection = [[float(x), float(y), int(c)] for (x, y), c in zip(cl.coords, cl.labels)]
    return report


def _quiet_buckets(text: str) -> dict[str, int]:
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return sentence_length_buckets(text)


def compare_reports(scet: MetricsReport, baseline: MetricsReport) -> list[dict]:
    rows = []
    for name in scet.scalars:
        if name in baseline.scalars:
            a, b = scet.value(name), baseline.value(name)
            rows.append({"metric": name, "scet": a, "baseline": b, "difference": a - b})
    return rows


def write_comparison(path, rows: list[dict]):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["metric", "scet", "baseline", "difference"])
        for r in rows:
            w.writerow([r["metric"], _num(r["scet"]), _num(r["baseline"]), _num(r["difference"])])

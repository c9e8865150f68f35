"""``scet`` command-line entry point.

Verbs: train, generate, eval, validate, bench.  Exit status is 0 on
success, 1 when a check or run fails, 2 for usage, config and I/O errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import fields
from pathlib import Path

import numpy as np
import torch

from .checkpoint import load_checkpoint, save_checkpoint
from .corpus import (
    Tokenizer,
    bpe_train,
    build_frequency_tables,
    encode_documents,
    load_corpus,
    normalize,
    read_manifest,
    write_manifest,
)
from .errors import CheckpointError, ConfigError, DivergenceError, ScetError
from .evaluate import EvalOptions, compare_reports, evaluate, load_eval_items, write_comparison
from .model import ModelConfig
from .rng import derive_seed
from .stochastic_kernel import SamplerConfig
from .training import TrainConfig, generate, train, write_loss_csv
from .validation import run_checks

log = logging.getLogger("scet")

SECTIONS = {"seed", "out", "model", "regularizer", "train", "tokenizer", "corpus", "sampler", "generate", "eval",
            "bench"}
SECTION_KEYS = {
    "regularizer": {"lambda_kl", "beta_entropy"},
    "tokenizer": {"vocab_size", "path", "rare_threshold"},
    "corpus": {"manifest", "files", "fractions"},
    "sampler": {"mode", "temperature"},
    "generate": {"checkpoint", "prompt", "prompt_file", "n_trials", "max_tokens", "vocab_temperature"},
    "bench": {"checkpoint", "baseline", "tokens", "prompt"},
}
EVAL_EXTRA = {"checkpoint", "baseline", "prompts"}


class UsageError(ScetError):
    pass


def _strict(section: str, doc: dict, allowed: set):
    if not isinstance(doc, dict):
        raise ConfigError(f"config section {section!r} must be an object")
    unknown = set(doc) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {section!r}: {sorted(unknown)}")


def load_config(path: str | None) -> tuple[dict, Path]:
    if path is None:
        return {}, Path.cwd()
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"config file not found: {p}")
    try:
        doc = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: invalid JSON: {exc}") from exc
    _strict("top level", doc, SECTIONS)
    for name, allowed in SECTION_KEYS.items():
        if name in doc:
            _strict(name, doc[name], allowed)
    if "eval" in doc:
        _strict("eval", doc["eval"], {f.name for f in fields(EvalOptions)} | EVAL_EXTRA)
    return doc, p.resolve().parent


def _path(base: Path, value) -> Path | None:
    if value is None:
        return None
    p = Path(value)
    return p if p.is_absolute() else base / p


def _resolve_seed(args, cfg) -> int:
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    if not 0 <= int(seed) < 2**64:
        raise ConfigError("seed must fit in an unsigned 64-bit integer")
    return int(seed)


def _out_dir(args, cfg, base: Path, default: str) -> Path:
    out = Path(args.out) if args.out else (_path(base, cfg["out"]) if "out" in cfg else Path(default))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, doc):
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _model_config(cfg: dict, seed: int) -> ModelConfig:
    model = dict(cfg.get("model", {}))
    if "seed" in model:
        raise ConfigError("set the seed at the top level or with --seed, not inside 'model'")
    model.update(cfg.get("regularizer", {}))
    return ModelConfig.from_dict({**model, "seed": seed})


def _sampler(cfg: dict, args) -> SamplerConfig:
    s = cfg.get("sampler", {})
    mode = getattr(args, "sampler_mode", None) or s.get("mode", "categorical")
    temp = getattr(args, "sampler_temperature", None)
    return SamplerConfig(mode, temp if temp is not None else s.get("temperature", 1.0))


# -- verbs -------------------------------------------------------------------

def cmd_train(args) -> int:
    cfg, base = load_config(args.config)
    seed = _resolve_seed(args, cfg)
    corpus_cfg = cfg.get("corpus", {})
    files = [_path(base, f) for f in corpus_cfg.get("files", [])]
    manifest = _path(base, corpus_cfg.get("manifest"))
    if manifest is not None:
        if not manifest.is_file():
            raise FileNotFoundError(f"corpus manifest not found: {manifest}")
        corpus = read_manifest(manifest)
        files = [_path(manifest.parent, f) for f in json.loads(manifest.read_text())["files"]]
    elif files:
        for f in files:
            if not f.is_file():
                raise FileNotFoundError(f"corpus file not found: {f}")
        corpus = load_corpus(files, tuple(corpus_cfg.get("fractions", (0.8, 0.1, 0.1))), seed)
    else:
        raise ConfigError("config needs corpus.files or corpus.manifest")

    tok_cfg = cfg.get("tokenizer", {})
    model_cfg = _model_config(cfg, seed)
    tok_path = _path(base, tok_cfg.get("path"))
    if tok_path is not None:
        if not tok_path.is_file():
            raise FileNotFoundError(f"tokenizer file not found: {tok_path}")
        tok = Tokenizer.load(tok_path)
    else:
        tok = bpe_train(corpus.split("train"), int(tok_cfg.get("vocab_size", model_cfg.vocab_size)))
    if tok.vocab_size > model_cfg.vocab_size:
        raise ConfigError(f"tokenizer has {tok.vocab_size} tokens but model.vocab_size is {model_cfg.vocab_size}")
    freq = build_frequency_tables(corpus, tok, int(tok_cfg.get("rare_threshold", 10)))
    data = encode_documents(tok, corpus.split("train"))
    tc = TrainConfig.from_dict(cfg.get("train", {}))
    out = _out_dir(args, cfg, base, "scet-run")

    def progress(row):
        if not args.quiet:
            print(f"step {row['step']:>6}  loss {row['loss']:.4f}  ce {row['ce_term']:.4f}  "
                  f"reg {row['reg_term']:.5f}", file=sys.stderr)

    try:
        result = train(model_cfg, data, tc, progress=progress)
    except DivergenceError as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return 1
    rare = {str(t): int(freq.counts[t]) for t in sorted(freq.rare)}
    save_checkpoint(out / "checkpoint.scet", result.model, tok, {"rare_counts": rare})
    write_loss_csv(out / "loss.csv", result.history)
    tok.save(out / "tokenizer.json")
    write_manifest(out / "manifest.json", [str(f.resolve()) for f in files], corpus)
    resolved = {"seed": seed, "out": str(out.resolve()), "model": {k: v for k, v in model_cfg.to_dict().items() if k != "seed"},
                "train": tc.to_dict(), "tokenizer": {"vocab_size": tok.vocab_size, "path": "tokenizer.json",
                                                     "rare_threshold": freq.threshold},
                "corpus": {"manifest": "manifest.json"}}
    _write_json(out / "resolved_config.json", resolved)
    if not args.quiet:
        print(f"wrote {out / 'checkpoint.scet'} (final loss {result.final_loss:.4f})", file=sys.stderr)
    return 0


def _load(path) -> "Checkpoint":  # noqa: F821
    if path is None:
        raise UsageError("a checkpoint path is required")
    return load_checkpoint(path)


def cmd_generate(args) -> int:
    cfg, base = load_config(args.config)
    seed = _resolve_seed(args, cfg)
    g = cfg.get("generate", {})
    ckpt = _load(args.checkpoint or _path(base, g.get("checkpoint")))
    if ckpt.tokenizer is None:
        raise CheckpointError("checkpoint carries no tokenizer")
    prompt_file = args.prompt_file or _path(base, g.get("prompt_file"))
    if args.prompt is not None:
        prompts = [args.prompt]
    elif prompt_file is not None:
        pf = Path(prompt_file)
        if not pf.is_file():
            raise FileNotFoundError(f"prompt file not found: {pf}")
        prompts = [line for line in pf.read_text(encoding="utf-8").splitlines() if line.strip()]
    elif "prompt" in g:
        prompts = [g["prompt"]]
    else:
        raise UsageError("give --prompt or --prompt-file")
    n_trials = args.n_trials if args.n_trials is not None else g.get("n_trials", 1)
    max_tokens = args.max_tokens if args.max_tokens is not None else g.get("max_tokens", 32)
    vtemp = args.vocab_temperature if args.vocab_temperature is not None else g.get("vocab_temperature", 0.0)
    sampler = _sampler(cfg, args)
    out = _out_dir(args, cfg, base, "scet-generate")
    mode = ckpt.config.embedding_mode
    lines = []
    for pi, prompt in enumerate(prompts):
        ids = ckpt.tokenizer.encode(normalize(prompt))
        master = seed if len(prompts) == 1 else derive_seed(seed, f"generate/prompt/{pi}")
        for rec in generate(ckpt.model, ids, max_tokens, sampler, n_trials, master, vtemp):
            row = {"prompt_index": pi, "trial": rec["trial"], "seed": rec["seed"], "mode": mode,
                   "tokens": rec["tokens"], "text": ckpt.tokenizer.decode(rec["tokens"])}
            if mode == "scet":
                row["states"] = rec["states"]
            lines.append(json.dumps(row, sort_keys=True))
    (out / "generations.jsonl").write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
    _write_json(out / "resolved_config.json", {
        "seed": seed, "out": str(out), "sampler": {"mode": sampler.mode, "temperature": sampler.temperature},
        "generate": {"checkpoint": str(Path(args.checkpoint or _path(base, g.get("checkpoint"))).resolve()),
                     "prompts": prompts, "n_trials": n_trials, "max_tokens": max_tokens,
                     "vocab_temperature": vtemp}})
    if not args.quiet:
        for line in lines:
            print(json.loads(line)["text"])
    return 0


def cmd_eval(args) -> int:
    cfg, base = load_config(args.config)
    seed = _resolve_seed(args, cfg)
    e = dict(cfg.get("eval", {}))
    ckpt_path = args.checkpoint or _path(base, e.pop("checkpoint", None))
    base_path = args.baseline or _path(base, e.pop("baseline", None))
    prompts = args.prompts or _path(base, e.pop("prompts", None))
    for key in EVAL_EXTRA:
        e.pop(key, None)
    if prompts is None:
        raise UsageError("give --prompts or eval.prompts")
    items = load_eval_items(prompts)
    options = EvalOptions.from_dict({**e, "seed": seed})
    ckpt = _load(ckpt_path)
    other = _load(base_path) if base_path else None
    if other is not None and (ckpt.tokenizer is None or other.tokenizer is None
                              or ckpt.tokenizer.to_json() != other.tokenizer.to_json()):
        raise CheckpointError("the two checkpoints do not share a tokenizer")
    out = _out_dir(args, cfg, base, "scet-eval")
    report = evaluate(ckpt, items, options)
    report.write(out, "metrics")
    if other is not None:
        baseline = evaluate(other, items, options)
        baseline.write(out, "metrics_baseline")
        rows = compare_reports(report, baseline)
        write_comparison(out / "comparison.csv", rows)
        if not args.quiet:
            print(f"{'metric':<28}{'scet':>12}{'baseline':>12}{'difference':>12}")
            for r in rows:
                print(f"{r['metric']:<28}{r['scet']:>12.4f}{r['baseline']:>12.4f}{r['difference']:>12.4f}")
    elif not args.quiet:
        for name, v in report.scalars.items():
            print(f"{name:<28}{v['value']:>12.4f}")
    _write_json(out / "resolved_config.json", {
        "seed": seed, "out": str(out),
        "eval": {**options.to_dict(), "checkpoint": str(Path(ckpt_path).resolve()),
                 "baseline": str(Path(base_path).resolve()) if base_path else None,
                 "prompts": str(Path(prompts).resolve())}})
    return 0


def cmd_validate(args) -> int:
    cfg, _ = load_config(args.config)
    seed = _resolve_seed(args, cfg)
    names = args.only.split(",") if args.only else None
    results = run_checks(names, seed, report=(None if args.quiet else lambda r: print(r.line(), flush=True)))
    failed = [r.name for r in results if not r.passed]
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        _write_json(out / "validate.json", [{"name": r.name, "passed": r.passed, "measured": r.measured,
                                             "thresholds": r.thresholds} for r in results])
    print(f"{len(results) - len(failed)}/{len(results)} checks passed" + (f"; failed: {', '.join(failed)}"
                                                                        if failed else ""))
    return 1 if failed else 0


def _latencies(model, ids: list[int], n: int) -> list[float]:
    sampler = SamplerConfig("categorical")
    rngs = [np.random.default_rng(0)]
    times = []
    with torch.no_grad():
        carry = model.begin(1)
        tok = ids[0]
        for i in range(min(n, model.config.context_length)):
            t0 = time.perf_counter()
            out = model.step(torch.tensor([tok]), carry, "sample", sampler, rngs)
            tok = int(out["logits"][0].argmax())
            times.append((time.perf_counter() - t0) * 1000.0)
    return times


def _stats(ms: list[float]) -> dict:
    if not ms:
        return {"n": 0, "mean_ms": None, "p50_ms": None, "p95_ms": None}
    a = np.array(ms)
    return {"n": len(ms), "mean_ms": float(a.mean()), "p50_ms": float(np.percentile(a, 50)),
            "p95_ms": float(np.percentile(a, 95))}


def cmd_bench(args) -> int:
    cfg, base = load_config(args.config)
    b = cfg.get("bench", {})
    scet = _load(args.checkpoint or _path(base, b.get("checkpoint")))
    static = _load(args.baseline or _path(base, b.get("baseline")))
    n = args.tokens if args.tokens is not None else b.get("tokens", 100)
    ids = [0]
    if scet.tokenizer is not None:
        ids = scet.tokenizer.encode(b.get("prompt", "the")) or [0]
    # warm-up so one-time allocation does not land in the first sample
    _latencies(scet.model, ids, min(n, 4))
    _latencies(static.model, ids, min(n, 4))
    a, s = _stats(_latencies(scet.model, ids, n)), _stats(_latencies(static.model, ids, n))
    ratio = a["mean_ms"] / s["mean_ms"] if a["n"] and s["mean_ms"] else None
    doc = {"scet": a, "static": s, "overhead_ratio": ratio}
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        _write_json(out / "bench.json", doc)
    print(json.dumps(doc, indent=2, sort_keys=True))
    return 0


# -- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run config")
    common.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--quiet", action="store_true")
    p = argparse.ArgumentParser(prog="scet", description="Stochastic concept embedding transitions toolkit.")
    sub = p.add_subparsers(dest="verb", required=True)

    sub.add_parser("train", parents=[common], help="train a model from a config")

    g = sub.add_parser("generate", parents=[common], help="sample continuations")
    g.add_argument("--checkpoint")
    g.add_argument("--prompt")
    g.add_argument("--prompt-file")
    g.add_argument("--n-trials", type=int)
    g.add_argument("--max-tokens", type=int)
    g.add_argument("--sampler-mode", choices=["argmax", "categorical", "relaxed"])
    g.add_argument("--sampler-temperature", type=float)
    g.add_argument("--vocab-temperature", type=float)

    e = sub.add_parser("eval", parents=[common], help="compute the metric battery")
    e.add_argument("--checkpoint")
    e.add_argument("--baseline", help="second checkpoint for a side-by-side table")
    e.add_argument("--prompts", help="JSON list of {prompt, continuation}")

    v = sub.add_parser("validate", parents=[common], help="run the numerical self-checks")
    v.add_argument("--only", help="comma-separated check names")

    b = sub.add_parser("bench", parents=[common], help="per-token latency, scet vs static")
    b.add_argument("--checkpoint", help="scet checkpoint")
    b.add_argument("--baseline", help="static checkpoint")
    b.add_argument("--tokens", type=int)
    return p


VERBS = {"train": cmd_train, "generate": cmd_generate, "eval": cmd_eval, "validate": cmd_validate,
         "bench": cmd_bench}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s")
    torch.set_num_threads(1)
    try:
        return VERBS[args.verb](args)
    except (ScetError, OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

"""Build the shipped sample config, eval prompts and the two sample checkpoints.

    python3 scripts/build_sample_models.py

Writes into src/scet/data/: sample_config.json, sample_static_config.json,
sample_eval.json, sample_scet.scet and sample_static.scet.  Every file is
a deterministic function of the shipped corpus and the seeds below.
"""

import json
import shutil
import tempfile
from pathlib import Path

from scet.cli import main
from scet.corpus import load_corpus

DATA = Path(__file__).resolve().parents[1] / "src" / "scet" / "data"

BASE = {
    "seed": 0,
    "model": {"layers": 2, "heads": 2, "model_dim": 64, "state_count": 4, "vocab_size": 512,
              "context_length": 128, "embedding_mode": "scet", "train_path": "soft_expectation"},
    "regularizer": {"lambda_kl": 0.01, "beta_entropy": 0.01},
    "train": {"steps": 2000, "batch_size": 16, "seq_len": 32, "lr": 3e-4, "warmup_steps": 100},
    "tokenizer": {"vocab_size": 512, "rare_threshold": 10},
    "corpus": {"files": ["sample_corpus.txt"], "fractions": [0.8, 0.1, 0.1]},
    "sampler": {"mode": "categorical", "temperature": 1.0},
}


def eval_items(n=24, prompt_words=10, continuation_words=10):
    corpus = load_corpus(DATA / "sample_corpus.txt", seed=BASE["seed"])
    items = []
    for doc in corpus.split("test"):
        words = doc.split()
        if len(words) >= prompt_words + continuation_words:
            items.append({"prompt": " ".join(words[:prompt_words]),
                          "continuation": " " + " ".join(words[prompt_words:prompt_words + continuation_words])})
        if len(items) == n:
            break
    return items


def main_build():
    static = json.loads(json.dumps(BASE))
    static["model"]["embedding_mode"] = "static"
    (DATA / "sample_config.json").write_text(json.dumps(BASE, indent=2) + "\n")
    (DATA / "sample_static_config.json").write_text(json.dumps(static, indent=2) + "\n")
    (DATA / "sample_eval.json").write_text(json.dumps(eval_items(), indent=2) + "\n")
    for name, cfg in (("sample_scet", "sample_config.json"), ("sample_static", "sample_static_config.json")):
        with tempfile.TemporaryDirectory() as tmp:
            code = main(["train", "--config", str(DATA / cfg), "--out", tmp, "--quiet"])
            if code:
                raise SystemExit(code)
            shutil.copy(Path(tmp) / "checkpoint.scet", DATA / f"{name}.scet")
        print("built", name)


if __name__ == "__main__":
    main_build()

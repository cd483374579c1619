"""Pre-train the tiny preset on a synthetic corpus and watch the loss fall.

The corpus is 32 sentences over a 64-word alphabet, so the masked-token
objective is learnable from scratch in a few hundred optimizer steps on a
laptop. Artifacts (checkpoint, loss log, loss curve) land in --out.
"""

from __future__ import annotations

import argparse
import time
from pathlib import Path

import numpy as np

from lusoforge.cli import emit_loss_curve
from lusoforge.pretrain import TrainRunConfig, train
from lusoforge.tokenizer import train_tokenizer


def synthetic_corpus(n_sentences: int = 32, seed: int = 123) -> list[str]:
    rng = np.random.default_rng(seed)
    words = ["w%02d" % i for i in range(64)]
    return [" ".join(rng.choice(words, size=rng.integers(12, 20)))
            for _ in range(n_sentences)]


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--preset", default="tiny")
    ap.add_argument("--steps", type=int, default=300)
    ap.add_argument("--seq-len", type=int, default=64)
    ap.add_argument("--peak-lr", type=float, default=5e-4)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--out", type=Path, default=Path("runs/pretrain_demo"))
    args = ap.parse_args()

    sents = synthetic_corpus()
    tokenizer = train_tokenizer(sents, vocab_size=256)
    print(f"tokenizer: {tokenizer.vocab_size} tokens")

    config = TrainRunConfig(
        seed=args.seed, preset=args.preset, seq_len=args.seq_len,
        micro_batch_size=8, accumulation_steps=1, peak_lr=args.peak_lr,
        warmup_steps=max(1, args.steps // 10), total_steps=args.steps,
        dropout_rate=0.0, checkpoint_every=0, out_dir=str(args.out),
    )
    t0 = time.time()
    _, log = train(config, sents, tokenizer)
    dt = time.time() - t0

    stride = max(1, len(log) // 12)
    for e in log.entries[::stride]:
        print(f"step {e.step:5d}  lr {e.lr:.2e}  loss {e.loss:7.4f}  ema {e.ema_loss:7.4f}")
    final = log.entries[-1]
    print(f"step {final.step:5d}  lr {final.lr:.2e}  loss {final.loss:7.4f}  "
          f"ema {final.ema_loss:7.4f}")
    print(f"{len(log)} steps in {dt:.0f}s "
          f"({np.log(tokenizer.vocab_size):.3f} is chance-level loss)")
    emit_loss_curve(log, args.out / "loss_curve.csv", args.out / "loss_curve.svg")
    print(f"artifacts in {args.out}/")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

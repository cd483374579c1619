"""Generate the synthetic fixtures used by the README walkthrough.

Writes a small two-source web corpus as JSONL plus train/test TSVs for the
marker-word entailment task, so every CLI command in the README can be run
verbatim against files on disk.
"""

from __future__ import annotations

import argparse
from pathlib import Path

import numpy as np

from lusoforge.corpus import Document, write_jsonl
from lusoforge.finetune import TASKS, synthetic_task_examples, write_task_tsv


def random_words(n: int, rng: np.random.Generator) -> list[str]:
    letters = np.array(list("abcdefghijklmnopqrstuvwxyz"))
    return ["".join(rng.choice(letters, size=rng.integers(5, 11))) for _ in range(n)]


def make_corpus(per_source: int, seed: int) -> list[Document]:
    rng = np.random.default_rng(seed)
    words = random_words(400, rng)
    docs = []
    k = 0
    for source in ("OSCAR", "DCEP"):
        for _ in range(per_source):
            body = " ".join(rng.choice(words, size=60))
            docs.append(Document(id=f"doc-{k:04d}", text=body, source=source,
                                 url=f"https://example.pt/{k}"))
            k += 1
    return docs


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=Path("fixtures"))
    ap.add_argument("--docs-per-source", type=int, default=24)
    ap.add_argument("--train-size", type=int, default=96)
    ap.add_argument("--test-size", type=int, default=32)
    ap.add_argument("--seed", type=int, default=5)
    args = ap.parse_args()

    args.out.mkdir(parents=True, exist_ok=True)
    corpus_path = args.out / "corpus.jsonl"
    write_jsonl(make_corpus(args.docs_per_source, args.seed), corpus_path)

    rte = TASKS["rte"]
    train_path = args.out / "rte_train.tsv"
    test_path = args.out / "rte_test.tsv"
    write_task_tsv(synthetic_task_examples(rte, args.train_size, seed=args.seed + 1),
                   train_path, rte)
    write_task_tsv(synthetic_task_examples(rte, args.test_size, seed=args.seed + 2),
                   test_path, rte)

    for p in (corpus_path, train_path, test_path):
        print(f"wrote {p}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

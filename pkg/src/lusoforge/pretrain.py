"""Masked-language-model pre-training: masking, batching, schedule, loop.

Determinism is the organizing idea. One seed fans out through independent
SeedSequence streams (init / masking / shuffling / dropout), and masking is
keyed per (epoch, original sequence index) rather than per batch, so the
realized mask pattern is identical whether a window of data arrives as one
large batch or as several accumulated micro-batches. That is what makes the
accumulation-equivalence property exact rather than approximate.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from lusoforge import autodiff as ad
from lusoforge import tokenizer as tok_mod
from lusoforge.checkpoint import load_checkpoint, params_from_arrays, save_checkpoint
from lusoforge.encoder import DisentangledEncoder, EncoderConfig, init_params, preset
from lusoforge.errors import DataError, NumericalError
from lusoforge.optim import Adam
from lusoforge.tokenizer import MASK, PAD

EMA_FACTOR = 0.95
MIN_SEQUENCE_TOKENS = 8


@dataclass
class TrainRunConfig:
    seed: int = 0
    preset: str = "tiny"
    seq_len: int = 128
    micro_batch_size: int = 8
    accumulation_steps: int = 4
    peak_lr: float = 5e-4
    warmup_steps: int = 100
    total_steps: int = 2000
    epochs: int = 0              # 0 = run epochs until total_steps is reached
    mask_rate: float = 0.15
    dropout_rate: float | None = None  # None = the preset's own rate
    weight_decay: float = 0.01
    checkpoint_every: int = 500
    out_dir: str | None = None
    init_checkpoint: str | None = None

    def __post_init__(self):
        if not (self.total_steps >= self.warmup_steps >= 0):
            raise ValueError(
                f"need total_steps >= warmup_steps >= 0, got {self.total_steps}/{self.warmup_steps}"
            )
        if not 0.0 <= self.mask_rate <= 1.0:
            raise ValueError(f"mask_rate {self.mask_rate} outside [0, 1]")

    @property
    def effective_batch(self) -> int:
        return self.micro_batch_size * self.accumulation_steps


# Reference-scale runs, kept as documentation of the target regime; the
# xlarge preset they name is constructible but far beyond desk-scale compute.
REFERENCE_RUNS: dict[str, TrainRunConfig] = {
    "ptbr": TrainRunConfig(seed=42, preset="xlarge", seq_len=128, micro_batch_size=112,
                           accumulation_steps=8, peak_lr=1e-5, warmup_steps=10_000,
                           total_steps=200_000, epochs=50, mask_rate=0.15),
    "ptpt": TrainRunConfig(seed=42, preset="xlarge", seq_len=128, micro_batch_size=104,
                           accumulation_steps=8, peak_lr=1e-5, warmup_steps=10_000,
                           total_steps=245_000, epochs=25, mask_rate=0.15),
}


# ---------------------------------------------------------------------------
# masking


def apply_mlm_masking(
    ids: np.ndarray,
    special_ids: frozenset[int] | set[int],
    mask_rate: float,
    rng: np.random.Generator,
    vocab_size: int,
    mask_id: int = MASK,
    ignore_index: int = -100,
) -> tuple[np.ndarray, np.ndarray]:
    """Select non-special positions at mask_rate; replace 80% with the mask
    id, 10% with a uniform random non-special token, 10% left unchanged.
    Labels hold original ids at selected positions and ignore_index elsewhere.

    Three fixed-shape draws per call, so the RNG stream advances identically
    regardless of token content.
    """
    ids = np.asarray(ids, dtype=np.int64)
    specials = np.asarray(sorted(special_ids), dtype=np.int64)
    eligible = ~np.isin(ids, specials)
    select = (rng.random(ids.shape) < mask_rate) & eligible
    action = rng.random(ids.shape)
    n_specials = len(specials)
    randoms = rng.integers(n_specials, vocab_size, size=ids.shape)

    out = ids.copy()
    out[select & (action < 0.8)] = mask_id
    pick_random = select & (action >= 0.8) & (action < 0.9)
    out[pick_random] = randoms[pick_random]
    labels = np.where(select, ids, ignore_index)
    return out, labels


# ---------------------------------------------------------------------------
# schedule


def lr_at(step: int, warmup_steps: int, total_steps: int, peak_lr: float) -> float:
    """Linear 0->peak over [0, warmup], then linear peak->0 over [warmup, total].

    warmup_steps == 0 starts directly at peak. Steps past total clamp to 0
    with a warning rather than going negative.
    """
    if step < 0:
        raise ValueError(f"negative step {step}")
    if step > total_steps:
        warnings.warn(f"step {step} beyond total_steps {total_steps}; lr clamped to 0")
        return 0.0
    if warmup_steps > 0 and step <= warmup_steps:
        return peak_lr * (step / warmup_steps)
    if total_steps == warmup_steps:
        return peak_lr
    return peak_lr * ((total_steps - step) / (total_steps - warmup_steps))


# ---------------------------------------------------------------------------
# batching


@dataclass
class Batch:
    ids: np.ndarray        # [B, W] int64, PAD-padded
    labels: np.ndarray     # [B, W] int64, ignore_index at unselected/pad
    attn_mask: np.ndarray  # [B, W] float32, 1 at real positions
    indices: list[int]     # original sequence indices (for debugging)


def make_batches(
    sequences: Sequence[Sequence[int]],
    micro_batch_size: int,
    seq_len: int,
    seed: int,
    labels: Sequence[Sequence[int]] | None = None,
) -> list[Batch]:
    """Shuffle deterministically, then pad each batch to its own longest
    sequence (never beyond seq_len). A trailing short batch is kept."""
    if not sequences:
        raise DataError("make_batches: empty corpus")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    perm = rng.permutation(len(sequences))
    batches: list[Batch] = []
    for start in range(0, len(perm), micro_batch_size):
        idxs = [int(i) for i in perm[start : start + micro_batch_size]]
        seqs = [list(sequences[i])[:seq_len] for i in idxs]
        width = max(len(s) for s in seqs)
        ids = np.full((len(seqs), width), PAD, dtype=np.int64)
        labs = np.full((len(seqs), width), -100, dtype=np.int64)
        mask = np.zeros((len(seqs), width), dtype=np.float32)
        for r, s in enumerate(seqs):
            ids[r, : len(s)] = s
            mask[r, : len(s)] = 1.0
            if labels is not None:
                lab = list(labels[idxs[r]])[:seq_len]
                labs[r, : len(lab)] = lab
        batches.append(Batch(ids=ids, labels=labs, attn_mask=mask, indices=idxs))
    return batches


# ---------------------------------------------------------------------------
# loss logging


@dataclass
class LossLogEntry:
    step: int
    epoch: int
    lr: float
    loss: float
    ema_loss: float


class LossLog:
    """Per-optimizer-step records with an exponential moving average,
    ema[t] = 0.95 * ema[t-1] + 0.05 * loss[t], seeded at the first loss."""

    def __init__(self):
        self.entries: list[LossLogEntry] = []

    def append(self, step: int, epoch: int, lr: float, loss: float):
        if self.entries:
            ema = EMA_FACTOR * self.entries[-1].ema_loss + (1.0 - EMA_FACTOR) * loss
        else:
            ema = loss
        self.entries.append(LossLogEntry(step, epoch, lr, loss, ema))

    def __len__(self):
        return len(self.entries)

    @property
    def steps(self) -> list[int]:
        return [e.step for e in self.entries]

    @property
    def lrs(self) -> list[float]:
        return [e.lr for e in self.entries]

    @property
    def losses(self) -> list[float]:
        return [e.loss for e in self.entries]

    @property
    def ema_losses(self) -> list[float]:
        return [e.ema_loss for e in self.entries]

    def to_csv(self, path: str | Path):
        with open(path, "w", encoding="utf-8", newline="") as f:
            w = csv.writer(f)
            w.writerow(["step", "epoch", "lr", "loss", "ema_loss"])
            for e in self.entries:
                w.writerow([e.step, e.epoch, repr(e.lr), repr(e.loss), repr(e.ema_loss)])

    @classmethod
    def from_csv(cls, path: str | Path) -> "LossLog":
        log = cls()
        try:
            handle = open(path, "r", encoding="utf-8", newline="")
        except OSError as e:
            raise DataError(f"cannot read loss log {path}: {e}") from e
        with handle as f:
            for row in csv.DictReader(f):
                log.entries.append(LossLogEntry(
                    step=int(row["step"]), epoch=int(row["epoch"]), lr=float(row["lr"]),
                    loss=float(row["loss"]), ema_loss=float(row["ema_loss"]),
                ))
        return log


# ---------------------------------------------------------------------------
# training


def tokenize_corpus(corpus: Iterable, tokenizer, seq_len: int) -> list[list[int]]:
    """Encode one sequence per document, truncated at seq_len; documents
    shorter than MIN_SEQUENCE_TOKENS tokens are skipped."""
    seqs: list[list[int]] = []
    for doc in corpus:
        text = doc if isinstance(doc, str) else getattr(doc, "text", "")
        ids = tok_mod.encode(tokenizer, text, max_len=seq_len, add_specials=True).ids
        if len(ids) >= MIN_SEQUENCE_TOKENS:
            seqs.append(ids)
    return seqs


def build_encoder_config(config: TrainRunConfig, vocab_size: int) -> EncoderConfig:
    overrides: dict = {"vocab_size": vocab_size}
    base = preset(config.preset)
    if config.dropout_rate is not None:
        overrides["dropout_rate"] = config.dropout_rate
    if config.seq_len > base.max_seq_len:
        overrides["max_seq_len"] = config.seq_len
    return preset(config.preset, **overrides)


def _mask_epoch(
    sequences: list[list[int]],
    epoch: int,
    config: TrainRunConfig,
    special_ids: frozenset[int],
    vocab_size: int,
    mask_entropy: int,
) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Masked views of every sequence for one epoch, keyed by (epoch, index)
    so the pattern is independent of shuffling and batch shape."""
    masked: list[np.ndarray] = []
    labels: list[np.ndarray] = []
    for i, seq in enumerate(sequences):
        rng = np.random.default_rng(np.random.SeedSequence([mask_entropy, epoch, i]))
        m, lab = apply_mlm_masking(np.asarray(seq), special_ids, config.mask_rate,
                                   rng, vocab_size)
        masked.append(m)
        labels.append(lab)
    return masked, labels


def train(config: TrainRunConfig, corpus: Iterable, tokenizer) -> tuple[DisentangledEncoder, LossLog]:
    """Run the MLM objective for total_steps optimizer steps.

    Each optimizer step consumes accumulation_steps micro-batches; gradients
    are summed and divided by the window's total count of predicted tokens,
    which reproduces single-large-batch training exactly. Non-finite loss
    aborts with the most recent periodic checkpoint left on disk.
    """
    sequences = tokenize_corpus(corpus, tokenizer, config.seq_len)
    if not sequences:
        raise DataError("training corpus is empty after tokenization")

    enc_config = build_encoder_config(config, tokenizer.vocab_size)
    root = np.random.SeedSequence(config.seed)
    init_ss, mask_ss, shuffle_ss, dropout_ss = root.spawn(4)

    if config.init_checkpoint:
        loaded_cfg, arrays, _ = load_checkpoint(config.init_checkpoint)
        enc_config = loaded_cfg
        params = params_from_arrays(arrays)  # every layer kept as stored
    else:
        params = init_params(enc_config, np.random.default_rng(init_ss))
    model = DisentangledEncoder(enc_config, params)

    opt = Adam(params, lr=0.0, weight_decay=config.weight_decay)
    dropout_rng = np.random.default_rng(dropout_ss)
    shuffle_rng = np.random.default_rng(shuffle_ss)
    mask_entropy = int(mask_ss.generate_state(1, dtype=np.uint64)[0])
    special_ids = frozenset(tokenizer.special_ids)

    out_dir = Path(config.out_dir) if config.out_dir else None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)

    log = LossLog()
    drop_rate = enc_config.dropout_rate
    train_rng = dropout_rng if drop_rate > 0 else None
    step = 0
    epoch = 0
    done = False
    while not done:
        if config.epochs and epoch >= config.epochs:
            break
        masked, labels = _mask_epoch(sequences, epoch, config, special_ids,
                                     enc_config.vocab_size, mask_entropy)
        epoch_seed = int(shuffle_rng.integers(np.iinfo(np.int64).max))
        batches = make_batches(masked, config.micro_batch_size, config.seq_len,
                               epoch_seed, labels=labels)
        window = config.accumulation_steps
        for w_start in range(0, len(batches), window):
            micro = batches[w_start : w_start + window]
            total_count = sum(int((b.labels != -100).sum()) for b in micro)
            if total_count == 0:
                continue
            opt.zero_grad()
            window_nll = 0.0
            for b in micro:
                if not (b.labels != -100).any():
                    continue  # all-ignored micro-batch: zero loss, zero gradient
                logits = model.mlm_logits(b.ids, attn_mask=b.attn_mask, rng=train_rng)
                flat = ad.reshape(logits, (logits.shape[0] * logits.shape[1], logits.shape[2]))
                loss = ad.cross_entropy(flat, b.labels.reshape(-1), reduction="sum")
                scaled = ad.scale(loss, 1.0 / total_count)
                ad.backward(scaled)
                window_nll += float(loss.data)
            mean_loss = window_nll / total_count
            if not np.isfinite(mean_loss):
                raise NumericalError(
                    f"non-finite loss {mean_loss} at optimizer step {step + 1}; "
                    "last periodic checkpoint retained"
                )
            step += 1
            lr = lr_at(step, config.warmup_steps, config.total_steps, config.peak_lr)
            opt.lr = lr
            opt.step()
            log.append(step=step, epoch=epoch, lr=lr, loss=mean_loss)
            if out_dir and config.checkpoint_every and step % config.checkpoint_every == 0:
                save_checkpoint(out_dir / f"model_step{step:06d}.ckpt", enc_config,
                                params, meta={"step": step, "epoch": epoch})
            if step >= config.total_steps:
                done = True
                break
        epoch += 1

    if out_dir:
        save_checkpoint(out_dir / "model.ckpt", enc_config, params,
                        meta={"step": step, "epoch": epoch})
        log.to_csv(out_dir / "loss_log.csv")
    return model, log

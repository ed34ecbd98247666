"""Training loop: temperature-sampled batches, inverse-sqrt schedule,
dev-loss checkpoint selection with early stopping, deterministic per seed."""

from __future__ import annotations

import pickle
import time
from dataclasses import dataclass, field

import numpy as np
import torch

from . import gnn
from .corpus import sample_batch_rng, temperature_weights
from .nmt import TranslationModel, derive_seed, forward_loss


class TrainingDiverged(RuntimeError):
    pass


def inverse_sqrt_lr(step: int, peak: float, warmup: int) -> float:
    """Linear warmup to the peak, then decay proportional to 1/sqrt(step)."""
    if step < 1:
        raise ValueError("step must be >= 1")
    if step <= warmup:
        return peak * step / warmup
    return peak * (warmup / step) ** 0.5


def pad_block(seqs, pad_idx: int) -> torch.Tensor:
    width = max(len(s) for s in seqs)
    out = torch.full((len(seqs), width), pad_idx, dtype=torch.long)
    for r, s in enumerate(seqs):
        out[r, : len(s)] = torch.tensor(s, dtype=torch.long)
    return out


def make_batch(collection, vocab, draws, max_len: int):
    """Tensor batch from (corpus idx, pair idx) draws. The target-language
    tag is prepended to the source here, not stored in the corpora."""
    src_rows, tin_rows, tout_rows = [], [], []
    for cid, pid in draws:
        corpus = collection.corpora[cid]
        src, tgt = corpus.pairs[pid]
        src_ids = ([vocab.tag_index(corpus.tgt_lang)]
                   + [vocab.lookup(t) for t in src[: max_len - 1]])
        tgt_ids = [vocab.lookup(t) for t in tgt[: max_len - 1]]
        src_rows.append(src_ids)
        tin_rows.append([vocab.bos] + tgt_ids)
        tout_rows.append(tgt_ids + [vocab.eos])
    return {
        "src": pad_block(src_rows, vocab.pad),
        "tgt_in": pad_block(tin_rows, vocab.pad),
        "tgt_out": pad_block(tout_rows, vocab.pad),
    }


def full_batches(collection, vocab, batch_size: int, max_len: int):
    """Every pair of every corpus once, in deterministic order."""
    draws = [(cid, pid)
             for cid, corpus in enumerate(collection.corpora)
             for pid in range(len(corpus))]
    for lo in range(0, len(draws), batch_size):
        yield make_batch(collection, vocab, draws[lo: lo + batch_size], max_len)


@torch.no_grad()
def evaluate(model: TranslationModel, collection, batch_size=64):
    """Mean per-token dev loss and token accuracy over a whole collection."""
    model.eval()
    total_loss, total_tok, total_correct = 0.0, 0, 0
    for batch in full_batches(collection, model.vocab, batch_size,
                              model.config.max_len):
        loss, ntok, ncorrect = forward_loss(model, batch)
        total_loss += float(loss) * ntok
        total_tok += ntok
        total_correct += ncorrect
    model.train()
    return total_loss / total_tok, total_correct / total_tok


@dataclass
class TrainResult:
    log_rows: list  # (step, lr, train_loss, dev_loss, wps)
    loss_curve: list  # per-step training loss
    best_step: int
    best_dev_loss: float
    best_dev_accuracy: float
    checkpoint: dict = field(repr=False, default=None)
    stopped_early: bool = False


def _state_to_numpy(obj):
    if isinstance(obj, torch.Tensor):
        return obj.detach().cpu().numpy().copy()
    if isinstance(obj, dict):
        return {k: _state_to_numpy(obj[k]) for k in obj}
    if isinstance(obj, (list, tuple)):
        return type(obj)(_state_to_numpy(v) for v in obj)
    return obj


def _state_to_torch(obj):
    if isinstance(obj, np.ndarray):
        return torch.from_numpy(obj.copy())
    if isinstance(obj, dict):
        return {k: _state_to_torch(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return type(obj)(_state_to_torch(v) for v in obj)
    return obj


def snapshot_checkpoint(model, optimizer, step: int, seed: int):
    """Checkpoint payload with model, optimizer, RNG state, and the exported
    re-parameterized table. Numpy-backed so serialization is byte-stable."""
    if model.has_stack():
        reparam = gnn.stack_forward(
            model.graph, model.embed.detach().numpy().astype(np.float64),
            model.numpy_stack())
    else:
        reparam = model.embed.detach().numpy().astype(np.float64)
    return {
        "step": step,
        "seed": seed,
        "config": model.config.__dict__.copy(),
        "model_state": _state_to_numpy(model.state_dict()),
        "stack_activations": list(model.stack_activations),
        "optimizer_state": _state_to_numpy(optimizer.state_dict()),
        "torch_rng": torch.get_rng_state().numpy().copy(),
        "reparam_table": reparam,
    }


def save_checkpoint(payload, path):
    with open(path, "wb") as f:
        pickle.dump(payload, f, protocol=4)


def load_checkpoint(path):
    with open(path, "rb") as f:
        return pickle.load(f)


def restore_model(model: TranslationModel, payload):
    model.load_state_dict(_state_to_torch(payload["model_state"]))
    model.stack_activations = list(payload["stack_activations"])
    return model


def train(model: TranslationModel, train_collection, dev_collection,
          config, seed: int, log_hook=None):
    """Run the training loop; returns a TrainResult with the best checkpoint
    (selected by dev loss) and the CSV-ready log rows."""
    sizes = [len(c) for c in train_collection.corpora]
    weights = temperature_weights(sizes, config.temperature)
    batch_rng = np.random.default_rng(derive_seed(seed, "batches"))
    torch.manual_seed(derive_seed(seed, "train"))

    trainable = [p for p in model.parameters() if p.requires_grad]
    optimizer = torch.optim.Adam(trainable, lr=config.peak_lr,
                                 betas=(0.9, 0.98), eps=1e-9)

    model.train()
    log_rows = []
    loss_curve = []
    best = None  # (dev_loss, step, payload, accuracy)
    bad_evals = 0
    running_loss, running_tok = 0.0, 0
    tokens_since_log, tic = 0, time.perf_counter()

    for step in range(1, config.max_steps + 1):
        lr = inverse_sqrt_lr(step, config.peak_lr, config.warmup_steps)
        for group in optimizer.param_groups:
            group["lr"] = lr

        draws = sample_batch_rng(train_collection, weights,
                                 config.batch_size, batch_rng)
        batch = make_batch(train_collection, model.vocab, draws, config.max_len)
        optimizer.zero_grad()
        loss, ntok, _ = forward_loss(model, batch)
        if not torch.isfinite(loss):
            raise TrainingDiverged(
                "non-finite loss %r at step %d (lr %.3g)"
                % (float(loss.detach()), step, lr))
        loss.backward()
        optimizer.step()

        step_loss = float(loss.detach())
        loss_curve.append(step_loss)
        running_loss += step_loss * ntok
        running_tok += ntok
        tokens_since_log += ntok

        if step % config.eval_interval == 0 or step == config.max_steps:
            dev_loss, dev_acc = evaluate(model, dev_collection)
            elapsed = time.perf_counter() - tic
            wps = tokens_since_log / max(elapsed, 1e-9)
            row = (step, lr, running_loss / running_tok, dev_loss, wps)
            log_rows.append(row)
            if log_hook:
                log_hook(row)
            running_loss, running_tok = 0.0, 0
            tokens_since_log, tic = 0, time.perf_counter()

            if best is None or dev_loss < best[0]:
                best = (dev_loss, step,
                        snapshot_checkpoint(model, optimizer, step, seed),
                        dev_acc)
                bad_evals = 0
            else:
                bad_evals += 1
                if bad_evals >= config.patience:
                    return TrainResult(log_rows, loss_curve, best[1], best[0],
                                       best[3], best[2], stopped_early=True)

    return TrainResult(log_rows, loss_curve, best[1], best[0], best[3], best[2])

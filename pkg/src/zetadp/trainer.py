"""Differentially private SGD for complex-valued networks.

Each step samples a lot, computes one conjugate gradient per sample on its
own tape, clips every gradient to the bound, privatizes the clipped sum with
circular Gaussian noise at per-component std noise_multiplier * bound, and
descends. Setting noise_multiplier = 0 with a huge bound degenerates to
plain complex SGD (the non-private baseline); no ledger is reported then.

Randomness is split by purpose and step index into disjoint Philox streams,
so results are bit-reproducible for a fixed seed no matter how per-sample
work is scheduled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from . import nn
from .accountant import PrivacyLedger
from .ctensor import Rng
from .data import ComplexDataset
from .errors import DomainError, TrainingDiverged
from .mechanism import clip_conjugate_gradient, privatize_lot
from .wirtinger import ConjugateGradient, backward, forward

NONPRIVATE_BOUND = 1e12

# Stream-id layout: one block of ids per purpose, offset by step index.
_STREAM_INIT = 0
_STREAM_LOT = 1
_STREAM_NOISE = 2
_STREAMS_PER_STEP = 2


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float
    noise_multiplier: float
    sampling_rate: float
    clip_bound: float
    steps: int
    sampling_mode: str = "poisson"
    seed: int = 0
    target_delta: float = 1e-5
    lr_decay_factor: float | None = None
    lr_decay_every: int | None = None

    def __post_init__(self):
        if self.learning_rate < 0:
            raise DomainError("learning rate must be >= 0")
        if self.noise_multiplier < 0:
            raise DomainError("noise multiplier must be >= 0")
        if not 0 < self.sampling_rate <= 1:
            raise DomainError(f"sampling rate must be in (0, 1], got {self.sampling_rate}")
        if not self.clip_bound > 0:
            raise DomainError("clip bound must be > 0")
        if self.steps < 0:
            raise DomainError("steps must be >= 0")
        if self.sampling_mode not in ("poisson", "uniform"):
            raise DomainError(f"unknown sampling mode {self.sampling_mode!r}")
        if (self.lr_decay_factor is None) != (self.lr_decay_every is None):
            raise DomainError("lr decay needs both a factor and a period")

    @property
    def private(self) -> bool:
        return self.noise_multiplier > 0

    def learning_rate_at(self, step: int) -> float:
        if self.lr_decay_factor is None:
            return self.learning_rate
        return self.learning_rate * self.lr_decay_factor ** (step // self.lr_decay_every)


@dataclass
class TrainReport:
    losses: list[float]
    lot_sizes: list[int]
    params: dict[str, np.ndarray]
    accuracy: float | None = None
    auc: float | None = None
    epsilon: float | None = None
    delta: float | None = None
    best_alpha: float | None = None
    approximate_under_uniform: bool = False
    ledger: PrivacyLedger | None = None


def sample_lot(dataset: ComplexDataset, rate: float, mode: str, rng: Rng) -> np.ndarray:
    """Sorted sample indices for one lot.

    poisson: each index included independently with probability `rate` (the
    lot size is random, possibly zero). uniform: exactly round(rate * N)
    distinct indices chosen uniformly without replacement.
    """
    if not 0 < rate <= 1:
        raise DomainError(f"sampling rate must be in (0, 1], got {rate}")
    n = len(dataset)
    u = rng.uniform(n)
    if mode == "poisson":
        return np.flatnonzero(u < rate)
    if mode == "uniform":
        size = int(round(rate * n))
        if size == 0:
            raise DomainError("uniform sampling with round(rate * N) = 0")
        return np.sort(np.argsort(u)[:size])
    raise DomainError(f"unknown sampling mode {mode!r}")


def lot_denominator(config: TrainConfig, n: int, lot_size: int) -> int:
    """Averaging denominator: expected lot size under Poisson sampling (the
    realised size is random there), the exact size under uniform sampling."""
    if config.sampling_mode == "poisson":
        return max(1, int(round(config.sampling_rate * n)))
    return lot_size


def train_step(
    params: dict[str, np.ndarray],
    dataset: ComplexDataset,
    lot: np.ndarray,
    loss_model,
    config: TrainConfig,
    step: int,
    ledger: PrivacyLedger | None,
    noise_rng: Rng,
    clip_hook=None,
    workers: int = 1,
) -> tuple[dict[str, np.ndarray], float]:
    """One descent step over a sampled lot; returns (new params, mean loss).

    Per-sample passes read the parameters only and own their tapes, so they
    may run on a thread pool; the reduction stays in lot order and the noise
    stream is keyed by step, making the result identical for any `workers`.

    `clip_hook`, when given, receives the list of post-clip per-sample
    gradient norms. It is a debug instrument only: the CLI never wires it up
    in private mode, so per-sample statistics cannot leak into outputs.
    """
    if len(lot) == 0:
        raise DomainError("empty lot")

    def sample_pass(i):
        x, label = dataset.examples[i], int(dataset.labels[i])
        loss, tape = forward(lambda p, xv: loss_model(p, xv, label), params, x)
        if not math.isfinite(loss):
            raise TrainingDiverged(f"non-finite loss {loss} at step {step}, sample {i}")
        return loss, clip_conjugate_gradient(backward(tape), config.clip_bound)

    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(sample_pass, lot))
    else:
        results = [sample_pass(i) for i in lot]
    losses = [loss for loss, _ in results]
    per_sample = [grad for _, grad in results]
    if clip_hook is not None:
        clip_hook([g.norm() for g in per_sample])

    denom = lot_denominator(config, len(dataset), len(lot))
    g = privatize_lot(per_sample, config.clip_bound, config.noise_multiplier, denom, noise_rng)
    eta = config.learning_rate_at(step)
    new_params = {k: np.asarray(v) - eta * g.grads[k] for k, v in params.items()}
    if ledger is not None and config.private:
        ledger.record(config.noise_multiplier, config.sampling_rate, 1, config.sampling_mode)
    return new_params, float(np.mean(losses))


def train(
    train_set: ComplexDataset,
    arch: nn.Architecture,
    config: TrainConfig,
    eval_set: ComplexDataset | None = None,
    progress=None,
    workers: int = 1,
) -> TrainReport:
    """Run `config.steps` descent steps and report metrics plus the privacy
    cost of the recorded ledger. `progress(step, loss, lot_size, eps)` is
    invoked once per step when given. `workers` caps the per-sample worker
    pool; the result is bit-identical for any value."""
    if workers < 1:
        raise DomainError(f"workers must be >= 1, got {workers}")
    rng = Rng(config.seed)
    params = nn.init_params(arch, rng.stream_at(_STREAM_INIT))
    ledger = PrivacyLedger(target_delta=config.target_delta) if config.private else None

    losses: list[float] = []
    lot_sizes: list[int] = []
    for t in range(config.steps):
        lot_rng = rng.stream_at(_STREAM_LOT + _STREAMS_PER_STEP * t)
        noise_rng = rng.stream_at(_STREAM_NOISE + _STREAMS_PER_STEP * t)
        lot = sample_lot(train_set, config.sampling_rate, config.sampling_mode, lot_rng)
        if len(lot) == 0:
            # Possible under Poisson sampling: the mechanism still releases a
            # noised (zero) sum, so the update and the ledger entry happen.
            if config.private:
                denom = lot_denominator(config, len(train_set), 0)
                g = privatize_lot([ConjugateGradient.zeros_like(params)],
                                  config.clip_bound, config.noise_multiplier,
                                  denom, noise_rng)
                eta = config.learning_rate_at(t)
                params = {k: np.asarray(v) - eta * g.grads[k] for k, v in params.items()}
                ledger.record(config.noise_multiplier, config.sampling_rate, 1,
                              config.sampling_mode)
            losses.append(math.nan)
            lot_sizes.append(0)
            continue
        params, loss = train_step(
            params, train_set, lot, nn.loss_fn(arch), config, t, ledger, noise_rng,
            workers=workers)
        losses.append(loss)
        lot_sizes.append(len(lot))
        if progress is not None:
            eps = ledger.epsilon()[0] if (ledger is not None and ledger.total_steps) else None
            progress(t, loss, len(lot), eps)

    report = TrainReport(losses=losses, lot_sizes=lot_sizes, params=params,
                         delta=config.target_delta if config.private else None,
                         ledger=ledger)
    if ledger is not None:
        eps, alpha = ledger.epsilon()
        report.epsilon = eps
        report.best_alpha = alpha
        report.approximate_under_uniform = ledger.approximate_under_uniform
    if eval_set is not None:
        metrics = evaluate(params, arch, eval_set)
        report.accuracy = metrics["accuracy"]
        report.auc = metrics.get("auc")
    return report


def evaluate(params: dict[str, np.ndarray], arch: nn.Architecture,
             dataset: ComplexDataset) -> dict[str, float]:
    """Accuracy under argmax scoring; ROC-AUC as well for binary tasks."""
    if len(dataset) == 0:
        raise DomainError("cannot evaluate on an empty dataset")
    labels = np.asarray(dataset.labels)
    binary = arch.head == "magnitude_sigmoid" or arch.classes == 2
    scores = []
    correct = 0
    for x, label in zip(dataset.examples, labels):
        s = nn.predict_scores(arch, params, x)
        if arch.head == "magnitude_sigmoid":
            pred = int(s > 0.5)
            scores.append(float(s))
        else:
            pred = int(np.argmax(s))
            scores.append(float(s[1]) if arch.classes == 2 else float("nan"))
        correct += int(pred == label)
    out = {"accuracy": correct / len(dataset)}
    if binary:
        out["auc"] = roc_auc(np.asarray(scores), labels)
    return out


def roc_auc(scores: np.ndarray, labels: np.ndarray) -> float:
    """Rank-statistic ROC-AUC (ties get average rank)."""
    labels = np.asarray(labels)
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DomainError("ROC-AUC needs both classes present")
    ranks = rankdata(scores)
    return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))

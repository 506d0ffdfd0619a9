"""Skip-gram / CBOW word2vec with negative sampling, trained on a walk corpus.

The per-row loss and its derivative live in :func:`_row_loss_grad`, shared by
the SGD kernel and by :func:`ns_loss_grad`, which :func:`gradient_check`
verifies against finite differences.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Collection, Iterable

import numpy as np
from numba import njit, prange

from .errors import DataError, TrainingError
from .walker import WalkCorpus

logger = logging.getLogger(__name__)

MODES = ("skipgram", "cbow")
NOISE_EXPONENT = 0.75


@dataclass(frozen=True)
class TrainConfig:
    dimension: int = 100
    window: int = 5
    negatives: int = 5
    epochs: int = 5
    learning_rate: float = 0.025
    min_learning_rate: float = 0.0001
    mode: str = "skipgram"
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.dimension < 1 or self.window < 1 or self.epochs < 1:
            raise ValueError("dimension, window and epochs must be >= 1")
        if self.negatives < 0:
            raise ValueError("negatives must be >= 0")
        if not 0 < self.min_learning_rate <= self.learning_rate:
            raise ValueError("need 0 < min_learning_rate <= learning_rate")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")


@dataclass
class Vocabulary:
    tokens: list[str]
    counts: np.ndarray
    index: dict[str, int] = field(repr=False)

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.index

    @property
    def noise_distribution(self) -> np.ndarray:
        p = self.counts.astype(float) ** NOISE_EXPONENT
        return p / p.sum()


def build_vocabulary(corpus: WalkCorpus | Iterable[tuple[str, ...]]) -> Vocabulary:
    """Every token gets an entry (min count 1), most frequent first, ties by first occurrence."""
    counts: dict[str, int] = {}
    for walk in corpus:
        for tok in walk:
            counts[tok] = counts.get(tok, 0) + 1
    if not counts:
        raise DataError("cannot build a vocabulary from an empty corpus")
    tokens = sorted(counts, key=lambda t: -counts[t])
    return Vocabulary(tokens, np.array([counts[t] for t in tokens], dtype=np.int64),
                      {t: i for i, t in enumerate(tokens)})


@dataclass
class EmbeddingMatrix:
    vocabulary: Vocabulary
    input_vectors: np.ndarray
    output_vectors: np.ndarray
    epoch_losses: list[float] = field(default_factory=list)

    @property
    def dimension(self) -> int:
        return self.input_vectors.shape[1]

    def __contains__(self, token: str) -> bool:
        return token in self.vocabulary

    def __getitem__(self, token: str) -> np.ndarray:
        return self.input_vectors[self.vocabulary.index[token]]


def alias_table(p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vose alias tables for O(1) sampling from the discrete distribution ``p``.

    Draw ``i`` uniformly, keep it with probability ``prob[i]``, else take ``alias[i]``.
    """
    n = len(p)
    scaled = np.asarray(p, dtype=float) * n / np.sum(p)
    prob = np.ones(n)
    alias = np.arange(n, dtype=np.int64)
    small = [i for i in range(n) if scaled[i] < 1.0]
    large = [i for i in range(n) if scaled[i] >= 1.0]
    while small and large:
        s, l = small.pop(), large.pop()
        prob[s] = scaled[s]
        alias[s] = l
        scaled[l] -= 1.0 - scaled[s]
        (small if scaled[l] < 1.0 else large).append(l)
    return prob, alias


# ---------------------------------------------------------------------------
# loss / gradient

@njit(cache=True)
def _sigmoid(x):
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    z = math.exp(x)
    return z / (1.0 + z)


@njit(cache=True)
def _log_sigmoid(x):
    if x >= 0:
        return -math.log1p(math.exp(-x))
    return x - math.log1p(math.exp(x))


@njit(cache=True)
def _row_loss_grad(score, label):
    """Loss term and d loss/d score for one output row with score ``u . h``."""
    if label == 1:
        return -_log_sigmoid(score), _sigmoid(score) - 1.0
    return -_log_sigmoid(-score), _sigmoid(score)


@njit(cache=True)
def ns_loss_grad(h, out, labels):
    """Negative-sampling loss of hidden vector ``h`` against the rows of ``out``.

    ``labels[r]`` is 1 for the true target row and 0 for noise rows.
    Returns ``(loss, d loss/d h, d loss/d out)`` with
    ``loss = -sum_pos log s(u.h) - sum_neg log s(-u.h)``.
    """
    grad_h = np.zeros_like(h)
    grad_out = np.zeros_like(out)
    loss = 0.0
    for r in range(out.shape[0]):
        l, g = _row_loss_grad(np.dot(out[r], h), labels[r])
        loss += l
        grad_h += g * out[r]
        grad_out[r] = g * h
    return loss, grad_h, grad_out


@njit(cache=True)
def _train_walk(tokens, a, b, W_in, W_out, noise_prob, noise_alias, window, negatives, cbow, lr):
    """One SGD step per (input, target) example of a walk; returns (loss sum, examples).

    Skip-gram predicts each context token from the center token; CBOW
    predicts the center from the mean of its context.  Noise samples that
    hit the target are dropped.  Each output row contributes to the input
    gradient before it is itself updated, so the step matches
    :func:`ns_loss_grad` unless a noise token repeats within one example.
    """
    dim = W_in.shape[1]
    n_vocab = noise_prob.shape[0]
    inputs = np.empty(2 * window + 1, dtype=np.int64)
    rows = np.empty(negatives + 1, dtype=np.int64)
    h = np.empty(dim, dtype=np.float64)
    grad_h = np.empty(dim, dtype=np.float64)
    loss = 0.0
    examples = 0
    for i in range(a, b):
        lo = max(a, i - window)
        hi = min(b, i + window + 1)
        if cbow:
            n_targets = 1
            n_in = 0
            for j in range(lo, hi):
                if j != i:
                    inputs[n_in] = tokens[j]
                    n_in += 1
            if n_in == 0:
                continue
        else:
            n_targets = hi - lo - 1
            n_in = 1
            inputs[0] = tokens[i]
        for t in range(n_targets):
            if cbow:
                target = tokens[i]
            else:
                j = lo + t
                if j >= i:
                    j += 1
                target = tokens[j]
            rows[0] = target
            n_rows = 1
            for _ in range(negatives):
                w = int(np.random.random() * n_vocab)
                if w >= n_vocab:
                    w = n_vocab - 1
                if np.random.random() >= noise_prob[w]:
                    w = noise_alias[w]
                if w != target:
                    rows[n_rows] = w
                    n_rows += 1
            for k in range(dim):
                h[k] = 0.0
                grad_h[k] = 0.0
            for m in range(n_in):
                for k in range(dim):
                    h[k] += W_in[inputs[m], k]
            for k in range(dim):
                h[k] /= n_in
            for r in range(n_rows):
                row = rows[r]
                score = 0.0
                for k in range(dim):
                    score += W_out[row, k] * h[k]
                l, g = _row_loss_grad(score, 1 if r == 0 else 0)
                loss += l
                for k in range(dim):
                    grad_h[k] += g * W_out[row, k]
                    W_out[row, k] -= lr * g * h[k]
            # h is the mean of the inputs, so each input receives grad_h / n_in
            step = lr / n_in
            for m in range(n_in):
                for k in range(dim):
                    W_in[inputs[m], k] -= step * grad_h[k]
            examples += 1
    return loss, examples


@njit(cache=True)
def _lr_at(lr0, lr_min, done, total):
    lr = lr0 - (lr0 - lr_min) * done / total
    return lr if lr > lr_min else lr_min


@njit(cache=True)
def _train_epoch(tokens, starts, W_in, W_out, noise_prob, noise_alias, window, negatives, cbow,
                 lr0, lr_min, done0, total, seed):
    np.random.seed(seed)
    loss = 0.0
    pairs = 0
    for w in range(starts.shape[0] - 1):
        lr = _lr_at(lr0, lr_min, done0 + starts[w], total)
        l, p = _train_walk(tokens, starts[w], starts[w + 1], W_in, W_out, noise_prob,
                           noise_alias, window, negatives, cbow, lr)
        loss += l
        pairs += p
    return loss, pairs


@njit(cache=True, parallel=True)
def _train_epoch_parallel(tokens, starts, W_in, W_out, noise_prob, noise_alias, window, negatives, cbow,
                          lr0, lr_min, done0, total, seed):
    # lock-free concurrent updates; results depend on thread scheduling
    np.random.seed(seed)
    loss = 0.0
    pairs = 0
    for w in prange(starts.shape[0] - 1):
        lr = _lr_at(lr0, lr_min, done0 + starts[w], total)
        l, p = _train_walk(tokens, starts[w], starts[w + 1], W_in, W_out, noise_prob,
                           noise_alias, window, negatives, cbow, lr)
        loss += l
        pairs += p
    return loss, pairs


# ---------------------------------------------------------------------------
# training

def _encode(corpus, vocab: Vocabulary) -> tuple[np.ndarray, np.ndarray]:
    lengths = [len(w) for w in corpus]
    starts = np.zeros(len(lengths) + 1, dtype=np.int64)
    np.cumsum(lengths, out=starts[1:])
    index = vocab.index
    tokens = np.fromiter((index[t] for w in corpus for t in w), dtype=np.int64, count=int(starts[-1]))
    return tokens, starts


def train(corpus: WalkCorpus | list[tuple[str, ...]], cfg: TrainConfig = TrainConfig(),
          vocab: Vocabulary | None = None) -> EmbeddingMatrix:
    """Fit input/output vectors by SGD on the negative-sampling objective.

    The learning rate decays linearly from ``cfg.learning_rate`` to
    ``cfg.min_learning_rate`` over all epochs.  With ``cfg.workers == 1`` the
    result is a pure function of (corpus, cfg).
    """
    vocab = vocab or build_vocabulary(corpus)
    tokens, starts = _encode(corpus, vocab)
    dim = cfg.dimension
    rng = np.random.default_rng(cfg.seed)
    W_in = rng.uniform(-0.5 / dim, 0.5 / dim, size=(len(vocab), dim)).astype(np.float32)
    W_out = np.zeros((len(vocab), dim), dtype=np.float32)
    noise_prob, noise_alias = alias_table(vocab.noise_distribution)

    kernel = _train_epoch_parallel if cfg.workers > 1 else _train_epoch
    n_tok = int(starts[-1])
    total = float(max(1, n_tok * cfg.epochs))
    losses = []
    for epoch in range(cfg.epochs):
        seed = (cfg.seed * 1_000_003 + epoch) % (2**32)
        loss, pairs = kernel(tokens, starts, W_in, W_out, noise_prob, noise_alias, cfg.window, cfg.negatives,
                             cfg.mode == "cbow", cfg.learning_rate, cfg.min_learning_rate,
                             float(epoch * n_tok), total, seed)
        if pairs == 0:
            break
        mean = loss / pairs
        if not math.isfinite(mean) or not np.isfinite(W_in).all():
            raise TrainingError(
                f"non-finite loss in epoch {epoch + 1} (learning rate {cfg.learning_rate} too high?)")
        losses.append(mean)
        logger.info("epoch %d/%d mean loss %.6f over %d examples", epoch + 1, cfg.epochs, mean, pairs)
    return EmbeddingMatrix(vocab, W_in, W_out, losses)


# ---------------------------------------------------------------------------
# gradient check

def example_objective(W_in: np.ndarray, W_out: np.ndarray, inputs, target: int, noise) -> tuple[float, np.ndarray, np.ndarray]:
    """Loss of one training example and its gradient w.r.t. both full matrices.

    ``inputs`` holds the center token (skip-gram) or the context tokens (CBOW,
    averaged); ``target`` is the token to predict and ``noise`` the sampled
    negatives.
    """
    inputs = np.asarray(inputs, dtype=np.int64)
    rows = np.concatenate([[target], np.asarray(noise, dtype=np.int64)]).astype(np.int64)
    labels = np.zeros(len(rows), dtype=np.int64)
    labels[0] = 1
    h = W_in[inputs].mean(axis=0)
    loss, grad_h, grad_rows = ns_loss_grad(h, np.ascontiguousarray(W_out[rows]), labels)
    g_in = np.zeros_like(W_in)
    g_out = np.zeros_like(W_out)
    np.add.at(g_in, inputs, grad_h / len(inputs))
    np.add.at(g_out, rows, grad_rows)
    return float(loss), g_in, g_out


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> np.ndarray:
    return np.abs(analytic - numeric) / np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)


def gradient_check(cfg: TrainConfig = TrainConfig(dimension=4, negatives=3), vocab_size: int = 8,
                   step: float = 1e-5) -> float:
    """Max relative error of the analytic gradient against central differences.

    Builds a random float64 model of ``vocab_size`` tokens and
    ``cfg.dimension`` dimensions, draws one training example in ``cfg.mode``
    and perturbs every parameter of both matrices by ``+-step``.
    """
    if vocab_size > 10 or cfg.dimension > 5:
        raise ValueError("gradient check is meant for vocab <= 10 and dimension <= 5")
    rng = np.random.default_rng(cfg.seed)
    W_in = rng.normal(0.0, 0.5, size=(vocab_size, cfg.dimension))
    W_out = rng.normal(0.0, 0.5, size=(vocab_size, cfg.dimension))
    target = int(rng.integers(vocab_size))
    if cfg.mode == "cbow":
        inputs = rng.integers(vocab_size, size=int(rng.integers(1, 2 * cfg.window + 1)))
    else:
        inputs = rng.integers(vocab_size, size=1)
    others = [t for t in range(vocab_size) if t != target]
    noise = rng.choice(others, size=cfg.negatives) if cfg.negatives else np.empty(0, dtype=np.int64)

    _, g_in, g_out = example_objective(W_in, W_out, inputs, target, noise)
    worst = 0.0
    for W, g in ((W_in, g_in), (W_out, g_out)):
        num = np.zeros_like(W)
        for idx in np.ndindex(W.shape):
            orig = W[idx]
            W[idx] = orig + step
            plus = example_objective(W_in, W_out, inputs, target, noise)[0]
            W[idx] = orig - step
            minus = example_objective(W_in, W_out, inputs, target, noise)[0]
            W[idx] = orig
            num[idx] = (plus - minus) / (2 * step)
        worst = max(worst, float(relative_error(g, num).max()))
    return worst


# ---------------------------------------------------------------------------
# word2vec text format

def export_embeddings(m: EmbeddingMatrix,
                      keep: Collection[str] | Callable[[str], bool] | None = None) -> str:
    """Render vectors in word2vec text format, optionally restricted to some tokens."""
    if keep is None:
        chosen = list(range(len(m.vocabulary)))
    else:
        pred = keep if callable(keep) else keep.__contains__
        chosen = [i for i, t in enumerate(m.vocabulary.tokens) if pred(t)]
    if not chosen:
        raise DataError("no tokens left to export after filtering")
    lines = [f"{len(chosen)} {m.dimension}"]
    for i in chosen:
        lines.append(m.vocabulary.tokens[i] + " " + " ".join(format(float(x), ".9g") for x in m.input_vectors[i]))
    return "\n".join(lines) + "\n"


def read_word2vec(path: str | Path) -> tuple[list[str], np.ndarray]:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        try:
            count, dim = int(header[0]), int(header[1])
        except (IndexError, ValueError):
            raise DataError(f"{path}: bad word2vec header") from None
        tokens, rows = [], []
        for line in fh:
            parts = line.rstrip("\n").split(" ")
            if len(parts) != dim + 1:
                raise DataError(f"{path}: expected {dim} values for {parts[0]!r}")
            tokens.append(parts[0])
            rows.append([float(x) for x in parts[1:]])
    if len(tokens) != count:
        raise DataError(f"{path}: header says {count} vectors, found {len(tokens)}")
    return tokens, np.array(rows, dtype=np.float32).reshape(count, dim)

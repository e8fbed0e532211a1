"""Adam training, cross-entropy loss, and the repetition-wise 5-fold protocol.

Fold k holds out repetition k for testing and trains on the other four, so a
window never shares a repetition with the fold that evaluates it. Every fold
starts from the same seed-derived initialization; batches are reshuffled each
epoch with a per-(fold, epoch) seeded generator, and the last partial batch
is kept. All reported accuracies are window-level.
"""
from __future__ import annotations

import multiprocessing
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ContractError, ParameterError, ProtocolError, ShapeError
from .segment import WindowTensor, patch_batch, patch_geometry
from .vit import VitConfig, VitParams, forward_batch, init_params, load_state, parameter_count

NUM_FOLDS = 5

_SHUFFLE_STREAM = 0x53484646
_INIT_STREAM = 0x494E4954


@dataclass(frozen=True)
class TrainConfig:
    beta1: float = 0.9
    beta2: float = 0.999
    learning_rate: float = 1e-4
    weight_decay: float = 1e-3
    batch_size: int = 128
    epochs: int = 30
    seed: int = 0
    adam_eps: float = 1e-8
    decoupled_weight_decay: bool = True

    def __post_init__(self):
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ParameterError("beta1 and beta2 must lie in [0, 1)")
        if not self.learning_rate > 0:
            raise ParameterError("learning_rate must be positive")
        if self.batch_size < 1 or self.epochs < 1:
            raise ParameterError("batch_size and epochs must be >= 1")
        if self.weight_decay < 0:
            raise ParameterError("weight_decay must be non-negative")


@dataclass(frozen=True)
class FoldReport:
    """Per-fold test accuracies plus summary statistics and timings.

    std is the sample standard deviation over folds (divisor n-1). Timing
    fields are wall-clock measurements and are the only nondeterministic
    entries; everything else is a pure function of inputs and seed.
    """

    fold_accuracies: tuple
    mean_accuracy: float
    std: float
    parameter_count: int
    preprocess_seconds: float
    train_seconds: float

    def __post_init__(self):
        accs = tuple(float(a) for a in self.fold_accuracies)
        object.__setattr__(self, "fold_accuracies", accs)
        if abs(self.mean_accuracy - sum(accs) / len(accs)) > 1e-12:
            raise ContractError("mean_accuracy must equal the mean of fold_accuracies")

    @classmethod
    def from_accuracies(cls, accs, param_count, preprocess_seconds, train_seconds):
        accs = [float(a) for a in accs]
        return cls(
            fold_accuracies=tuple(accs),
            mean_accuracy=float(np.mean(accs)),
            std=float(np.std(accs, ddof=1)) if len(accs) > 1 else 0.0,
            parameter_count=int(param_count),
            preprocess_seconds=float(preprocess_seconds),
            train_seconds=float(train_seconds),
        )

    def to_dict(self) -> dict:
        return {
            "per_fold": list(self.fold_accuracies),
            "mean": self.mean_accuracy,
            "std": self.std,
            "param_count": self.parameter_count,
            "preprocess_s": self.preprocess_seconds,
            "train_s": self.train_seconds,
        }


@dataclass
class AdamState:
    """First/second moment accumulators keyed by parameter name."""

    m: dict
    v: dict

    @classmethod
    def for_params(cls, params) -> "AdamState":
        return cls(
            m={name: np.zeros_like(values) for name, values, _ in params},
            v={name: np.zeros_like(values) for name, values, _ in params},
        )


def adam_step(params, grads, state: AdamState, config: TrainConfig, t: int) -> None:
    """One Adam update with bias correction, in place.

    params: sequence of (name, values_array, decay_applies) triples.
    grads: mapping name -> gradient array of matching shape.
    t: 1-based step count.

    Decoupled decay (default) shrinks the already-updated value by
    lr * weight_decay; the coupled variant adds weight_decay * theta to the
    gradient before the moment updates. Either way decay touches only the
    triples flagged decay_applies (weight matrices; never biases, LayerNorm
    gains, the class token or positional embeddings).
    """
    if t < 1:
        raise ContractError(f"step index must be >= 1, got {t}")
    b1, b2 = config.beta1, config.beta2
    lr, wd = config.learning_rate, config.weight_decay
    bias1 = 1.0 - b1 ** t
    bias2 = 1.0 - b2 ** t
    for name, values, decays in params:
        g = grads[name]
        if g is None or g.shape != values.shape:
            raise ContractError(f"gradient for {name} missing or of wrong shape")
        if decays and wd and not config.decoupled_weight_decay:
            g = g + wd * values
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        values -= lr * (m / bias1) / (np.sqrt(v / bias2) + config.adam_eps)
        if decays and wd and config.decoupled_weight_decay:
            values -= lr * wd * values


def cross_entropy(logits: T.Tensor, label: int) -> T.Tensor:
    """-log softmax(logits)[label] for one logits vector, as a scalar tensor."""
    logits = logits if isinstance(logits, T.Tensor) else T.Tensor(logits)
    if logits.ndim != 1:
        raise ContractError(f"expected a logits vector, got shape {logits.shape}")
    row = T.reshape(logits, (1, logits.shape[0]))
    return T.tensor_sum(T.cross_entropy_with_logits(row, np.array([int(label)])))


def make_folds(dataset, num_repetitions: int = NUM_FOLDS):
    """Five (train, test) splits partitioning the windows by repetition id.

    Fold k tests on repetition k and trains on the rest. Splits are by
    repetition, never by window, so no repetition leaks across the boundary.
    """
    if num_repetitions != NUM_FOLDS:
        raise ProtocolError(
            f"the protocol is {NUM_FOLDS}-fold by repetition, got {num_repetitions}"
        )
    dataset = list(dataset)
    reps = np.array([w.repetition_id for w in dataset])
    if reps.size == 0:
        raise ProtocolError("empty dataset")
    if reps.min() < 0 or reps.max() >= num_repetitions:
        raise ProtocolError(
            f"repetition ids must lie in [0, {num_repetitions}), "
            f"found range [{reps.min()}, {reps.max()}]"
        )
    present = set(int(r) for r in reps)
    missing = sorted(set(range(num_repetitions)) - present)
    if missing:
        raise ProtocolError(f"dataset is missing repetitions {missing}")
    folds = []
    for k in range(num_repetitions):
        test = [w for w in dataset if w.repetition_id == k]
        train = [w for w in dataset if w.repetition_id != k]
        folds.append((train, test))
    return folds


def _assert_partition(folds, total: int) -> None:
    """Test sets must be pairwise disjoint and cover the dataset."""
    sizes = [len(test) for _, test in folds]
    if sum(sizes) != total:
        raise ProtocolError(
            f"fold test sets cover {sum(sizes)} windows, dataset has {total}"
        )
    for k, (train, test) in enumerate(folds):
        test_reps = {w.repetition_id for w in test}
        train_reps = {w.repetition_id for w in train}
        if test_reps & train_reps:
            raise ProtocolError(f"fold {k} leaks repetitions {test_reps & train_reps}")


def _labels_of(windows) -> np.ndarray:
    return np.array([w.gesture_id for w in windows], dtype=np.int64)


def train_model(
    patches: np.ndarray,
    labels: np.ndarray,
    params: VitParams,
    config: TrainConfig,
    fold_tag: int = 0,
):
    """Train in place over (num_windows, N, patch_dim) patches.

    Returns the per-epoch mean training loss history.
    """
    n = len(patches)
    slots = [(name, t.values, decays) for name, t, decays in params.named_parameters()]
    state = AdamState.for_params(slots)
    history = []
    step = 0
    for epoch in range(config.epochs):
        rng = np.random.default_rng([config.seed, _SHUFFLE_STREAM, fold_tag, epoch])
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            params.zero_grads()
            logits = forward_batch(patches[idx], params)
            loss = T.tensor_mean(T.cross_entropy_with_logits(logits, labels[idx]))
            T.backward(loss)
            grads = {name: t.grad for name, t, _ in params.named_parameters()}
            step += 1
            adam_step(slots, grads, state, config, step)
            epoch_loss += loss.item() * len(idx)
        history.append(epoch_loss / n)
    return history


def _evaluate(patches: np.ndarray, labels: np.ndarray, params: VitParams, batch_size: int) -> float:
    correct = 0
    with T.no_grad():
        for start in range(0, len(patches), batch_size):
            logits = forward_batch(patches[start : start + batch_size], params)
            correct += int(np.sum(np.argmax(logits.values, axis=1) == labels[start : start + len(logits.values)]))
    return correct / len(patches)


def _run_fold(payload):
    """Train and evaluate one fold; used directly and in worker processes."""
    k, train_windows, test_windows, vit_config, train_config, patch_layout, want_state = payload
    params = init_params(vit_config, seed=train_config.seed)
    train_patches = patch_batch(train_windows, vit_config.patch_side, patch_layout)
    train_model(train_patches, _labels_of(train_windows), params, train_config, fold_tag=k)
    test_patches = patch_batch(test_windows, vit_config.patch_side, patch_layout)
    accuracy = _evaluate(
        test_patches, _labels_of(test_windows), params, train_config.batch_size
    )
    state = (
        {name: t.values for name, t, _ in params.named_parameters()} if want_state else None
    )
    return k, accuracy, state


def run_cv(
    dataset,
    vit_config: VitConfig,
    train_config: TrainConfig,
    patch_layout: str = "time_by_channels",
    preprocess_seconds: float = 0.0,
    on_fold=None,
    jobs: int = 1,
) -> FoldReport:
    """Repetition-wise 5-fold cross-validation of the transformer.

    Each fold trains a fresh model from the same seed-derived initialization
    and reports window-level test accuracy. Deterministic given the seed
    regardless of jobs; only the timing fields vary between runs. on_fold,
    when given, receives (fold_index, trained VitParams) in fold order.
    jobs > 1 trains folds in spawned worker processes.
    """
    dataset = list(dataset)
    if not dataset:
        raise ProtocolError("empty dataset")
    w0 = dataset[0]
    t, rows, cols = w0.data.shape
    n, pd = patch_geometry(t, rows, cols, vit_config.patch_side, patch_layout)
    if (n, pd) != (vit_config.num_patches, vit_config.patch_dim):
        raise ShapeError(
            f"window geometry gives ({n}, {pd}) patches, config expects "
            f"({vit_config.num_patches}, {vit_config.patch_dim})"
        )
    labels = _labels_of(dataset)
    if labels.min() < 0 or labels.max() >= vit_config.num_classes:
        raise ProtocolError(
            f"gesture ids must lie in [0, {vit_config.num_classes})"
        )
    folds = make_folds(dataset)
    _assert_partition(folds, len(dataset))
    want_state = on_fold is not None
    payloads = [
        (k, train_w, test_w, vit_config, train_config, patch_layout, want_state)
        for k, (train_w, test_w) in enumerate(folds)
    ]

    started = time.perf_counter()
    if jobs > 1:
        # spawn (not fork): compiled-kernel thread pools do not survive forking
        ctx = multiprocessing.get_context("spawn")
        with ProcessPoolExecutor(max_workers=jobs, mp_context=ctx) as pool:
            results = list(pool.map(_run_fold, payloads))
    else:
        results = [_run_fold(p) for p in payloads]
    train_seconds = time.perf_counter() - started

    results.sort(key=lambda r: r[0])
    accuracies = [acc for _, acc, _ in results]
    if on_fold is not None:
        for k, _, state in results:
            on_fold(k, load_state(vit_config, state))

    return FoldReport.from_accuracies(
        accuracies,
        param_count=parameter_count(vit_config),
        preprocess_seconds=preprocess_seconds,
        train_seconds=train_seconds,
    )


def shuffle_labels(dataset, seed: int):
    """Permute gesture labels across windows (chance-level control)."""
    dataset = list(dataset)
    rng = np.random.default_rng([seed, 0x4C424C53])
    permuted = rng.permutation(_labels_of(dataset))
    return [
        WindowTensor(
            data=w.data,
            gesture_id=int(g),
            subject_id=w.subject_id,
            repetition_id=w.repetition_id,
        )
        for w, g in zip(dataset, permuted)
    ]

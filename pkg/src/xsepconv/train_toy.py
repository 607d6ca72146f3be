"""End-to-end training smoke test on a synthetic oriented-bar task.

Classifies 16x16 single-channel images containing a horizontal, vertical, or
diagonal bar. The classifier is a pointwise channel lift, three depthwise
blocks sharing one cross-layer padding schedule, global average pooling, and
a linear head, trained with plain SGD. The separated-pair-only variant can be
run on the same data for a side-by-side loss/accuracy comparison; diagonal
bars are included precisely because the separated pair is blind to diagonal
structure on its own.

Everything is deterministic given the seed. The only assertion made of a run
is that training reduced the loss; accuracy numbers are reported, not judged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .blocks import (
    Activation,
    BlockGrads,
    BlockSpec,
    BlockState,
    BlockVariant,
    block_backward_from_cache,
    block_forward_with_cache,
    init_block,
    set_block_mode,
    sgd_step,
)
from .padding import PadDirection, improved_schedule
from .tensor import Tensor4

IMAGE_SIZE = 16
N_CLASSES = 3
N_TRAIN = 512
N_TEST = 256
LIFT_CHANNELS = 8
LEARNING_RATE = 0.05
BATCH_SIZE = 64


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    train_loss: float
    train_accuracy: float
    test_loss: float
    test_accuracy: float


@dataclass
class ToyModel:
    lift: np.ndarray  # (LIFT_CHANNELS, 1) pointwise channel expansion
    specs: tuple[BlockSpec, ...]
    blocks: list[BlockState]
    head_w: np.ndarray  # (LIFT_CHANNELS, N_CLASSES)
    head_b: np.ndarray  # (N_CLASSES,)


def make_dataset(seed: int, count: int) -> tuple[np.ndarray, np.ndarray]:
    """``count`` bar images with labels 0=horizontal, 1=vertical, 2=diagonal."""
    rng = np.random.default_rng(seed)
    images = rng.normal(0.0, 0.05, size=(count, 1, IMAGE_SIZE, IMAGE_SIZE))
    labels = rng.integers(0, N_CLASSES, size=count)
    for i, label in enumerate(labels):
        offset = int(rng.integers(2, IMAGE_SIZE - 2))
        if label == 0:
            images[i, 0, offset, :] += 1.0
        elif label == 1:
            images[i, 0, :, offset] += 1.0
        else:
            shift = offset - IMAGE_SIZE // 2
            for y in range(IMAGE_SIZE):
                x = y + shift
                if 0 <= x < IMAGE_SIZE:
                    images[i, 0, y, x] += 1.0
    return images, labels


def build_model(seed: int, variant: BlockVariant = BlockVariant.XSEP, k: int = 5) -> ToyModel:
    rng = np.random.default_rng(seed)
    n_blocks = 3
    # one schedule for the whole network: each 2x2-bearing block takes one entry
    has_2x2 = variant is not BlockVariant.XSEP_NO_2X2 and variant is not BlockVariant.VANILLA_DW
    schedule = improved_schedule(n_blocks if has_2x2 else 0)
    specs = []
    for i in range(n_blocks):
        direction = None
        if has_2x2:
            entry = schedule.entries[i]
            direction = entry if isinstance(entry, PadDirection) else PadDirection.RIGHT_BOTTOM
        specs.append(
            BlockSpec(
                variant,
                k=k,
                c=LIFT_CHANNELS,
                activation=Activation.HARD_SWISH,
                pad_direction=direction,
            )
        )
    blocks = [init_block(spec, seed + 100 + i) for i, spec in enumerate(specs)]
    lift = rng.normal(0.0, 1.0, size=(LIFT_CHANNELS, 1))
    head_w = rng.normal(0.0, 0.1, size=(LIFT_CHANNELS, N_CLASSES))
    head_b = np.zeros(N_CLASSES)
    return ToyModel(lift=lift, specs=tuple(specs), blocks=blocks, head_w=head_w, head_b=head_b)


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _forward(model: ToyModel, images: np.ndarray, train: bool):
    """Returns (logits, cache-for-backward, blocks-with-updated-running-stats)."""
    lifted = np.einsum("oc,nchw->nohw", model.lift, images)
    x = Tensor4(lifted)
    block_caches = []
    new_blocks = []
    for spec, state in zip(model.specs, model.blocks):
        run_state = state if train else set_block_mode(state, "inference")
        x, cache, updated = block_forward_with_cache(run_state, spec, x)
        block_caches.append((run_state, cache))
        new_blocks.append(updated if train else state)
    features = x.array.mean(axis=(2, 3))  # global average pool -> (batch, channels)
    logits = features @ model.head_w + model.head_b
    cache = (images, block_caches, x.dims, features)
    return logits, cache, new_blocks


def _backward(model: ToyModel, cache, dlogits: np.ndarray):
    images, block_caches, feat_dims, features = cache
    dhead_w = features.T @ dlogits
    dhead_b = dlogits.sum(axis=0)
    dfeatures = dlogits @ model.head_w.T
    _, _, fh, fw = feat_dims
    g = np.broadcast_to(
        dfeatures[:, :, None, None] / (fh * fw), feat_dims
    ).copy()
    block_grads: list[BlockGrads] = [None] * len(model.blocks)  # type: ignore[list-item]
    gt = Tensor4(g)
    for i in reversed(range(len(model.blocks))):
        run_state, bcache = block_caches[i]
        gt, block_grads[i] = block_backward_from_cache(run_state, model.specs[i], bcache, gt)
    dlift = np.einsum("nohw,nchw->oc", gt.array, images)
    return dlift, block_grads, dhead_w, dhead_b


def _loss_and_grad(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray, float]:
    probs = _softmax(logits)
    batch = logits.shape[0]
    nll = -np.log(np.clip(probs[np.arange(batch), labels], 1e-12, None))
    dlogits = probs.copy()
    dlogits[np.arange(batch), labels] -= 1.0
    dlogits /= batch
    accuracy = float((logits.argmax(axis=1) == labels).mean())
    return float(nll.mean()), dlogits, accuracy


def _evaluate(model: ToyModel, images: np.ndarray, labels: np.ndarray) -> tuple[float, float]:
    logits, _, _ = _forward(model, images, train=False)
    loss, _, acc = _loss_and_grad(logits, labels)
    return loss, acc


def train(
    epochs: int, seed: int, variant: BlockVariant = BlockVariant.XSEP
) -> list[EpochStats]:
    """Train for ``epochs`` epochs; returns per-epoch statistics."""
    if epochs < 1:
        raise ValueError(f"epochs must be >= 1, got {epochs}")
    train_x, train_y = make_dataset(seed, N_TRAIN)
    test_x, test_y = make_dataset(seed + 1, N_TEST)
    model = build_model(seed, variant)
    rng = np.random.default_rng(seed + 2)
    history = []
    for epoch in range(1, epochs + 1):
        order = rng.permutation(N_TRAIN)
        losses = []
        accs = []
        for start in range(0, N_TRAIN, BATCH_SIZE):
            idx = order[start : start + BATCH_SIZE]
            logits, cache, new_blocks = _forward(model, train_x[idx], train=True)
            loss, dlogits, acc = _loss_and_grad(logits, train_y[idx])
            if not np.isfinite(loss):
                raise FloatingPointError(f"divergence: non-finite loss at epoch {epoch}")
            dlift, block_grads, dhead_w, dhead_b = _backward(model, cache, dlogits)
            model.blocks = [
                sgd_step(state, grads, LEARNING_RATE)
                for state, grads in zip(new_blocks, block_grads)
            ]
            model.lift = model.lift - LEARNING_RATE * dlift
            model.head_w = model.head_w - LEARNING_RATE * dhead_w
            model.head_b = model.head_b - LEARNING_RATE * dhead_b
            losses.append(loss)
            accs.append(acc)
        test_loss, test_acc = _evaluate(model, test_x, test_y)
        history.append(
            EpochStats(
                epoch=epoch,
                train_loss=float(np.mean(losses)),
                train_accuracy=float(np.mean(accs)),
                test_loss=test_loss,
                test_accuracy=test_acc,
            )
        )
    return history

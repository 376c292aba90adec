from __future__ import annotations

from typing import Sequence

import numpy as np


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_xent(logits: np.ndarray, targets: Sequence[int], mask: Sequence[bool] | None = None
                 ) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over masked-in rows of ``logits`` ``[T, C]``.

    Returns the loss and its gradient with respect to ``logits``; masked-out
    rows get zero gradient.
    """
    logits = np.asarray(logits, dtype=np.float64)
    T, C = logits.shape
    targets = np.asarray(targets, dtype=np.int64)
    mask = np.ones(T, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    if targets.shape != (T,) or mask.shape != (T,):
        raise ValueError("targets and mask must have one entry per row")
    active = int(mask.sum())
    if active == 0:
        raise ValueError("no active positions")
    if np.any((targets[mask] < 0) | (targets[mask] >= C)):
        raise ValueError(f"target outside [0, {C})")
    safe_targets = np.where(mask, targets, 0)
    z = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1))
    rows = np.arange(T)
    nll = log_norm - z[rows, safe_targets]
    loss = float(nll[mask].sum() / active)
    grad = softmax(logits)
    grad[rows, safe_targets] -= 1.0
    grad *= mask[:, None] / active
    return loss, grad

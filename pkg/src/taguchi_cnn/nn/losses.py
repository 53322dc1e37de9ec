"""Margin losses for +/-1 labels."""

from __future__ import annotations

import numpy as np

LOSSES = ("hinge", "squared_hinge")


def loss(scores: np.ndarray, labels: np.ndarray, kind: str) -> tuple[float, np.ndarray]:
    """Mean hinge or squared-hinge loss and its gradient w.r.t. ``scores``.

    hinge = max(0, 1 - t*y); the subgradient is 0 when the margin is exactly 1.
    """
    y = np.asarray(scores, dtype=np.float64)
    t = np.asarray(labels, dtype=np.float64).reshape(y.shape)
    if not np.all((t == 1.0) | (t == -1.0)):
        raise ValueError("labels must be -1 or +1")
    n = y.shape[0]
    margin = 1.0 - t * y
    h = np.maximum(margin, 0.0)
    active = margin > 0
    if kind == "hinge":
        return float(h.mean()), np.where(active, -t, 0.0) / n
    if kind == "squared_hinge":
        return float((h**2).mean()), -2.0 * t * h / n
    raise ValueError(f"unknown loss {kind!r}; expected one of {', '.join(LOSSES)}")


def accuracy(scores: np.ndarray, labels: np.ndarray) -> float:
    """Share of samples whose score sign matches the label; a zero score counts as +1."""
    pred = np.where(np.asarray(scores).ravel() >= 0, 1.0, -1.0)
    return float(np.mean(pred == np.asarray(labels, dtype=np.float64).ravel()))

"""Temperature softmax, KL distillation, cross-entropy and their combination.

Loss functions return the batch-mean scalar; with ``return_grad=True`` they
also return the gradient with respect to the student logits.  Teacher
distributions are always treated as constants.
"""

from __future__ import annotations

import numpy as np

from unlearnkit.errors import NonFiniteError, ShapeError

DTYPE = np.float64
TINY = np.finfo(DTYPE).tiny


def softmax_with_temperature(logits: np.ndarray, tau: float = 1.0) -> np.ndarray:
    """Row-wise ``exp(z_j / tau) / sum_k exp(z_k / tau)`` with max-subtraction."""
    if not tau > 0:
        raise ValueError(f"temperature must be positive, got {tau}")
    z = np.asarray(logits, dtype=DTYPE)
    if z.ndim == 1:
        z = z[None, :]
    z = z / tau
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    # floor at the smallest normal float: entries more than ~745 below the row
    # max (e.g. a logit spread of 200 at tau=0.1) would otherwise underflow to 0
    out = np.maximum(e / e.sum(axis=1, keepdims=True), TINY)
    if not np.isfinite(out).all():
        raise NonFiniteError("softmax produced non-finite probabilities")
    return out


def log_softmax_with_temperature(logits: np.ndarray, tau: float = 1.0) -> np.ndarray:
    if not tau > 0:
        raise ValueError(f"temperature must be positive, got {tau}")
    z = np.asarray(logits, dtype=DTYPE)
    if z.ndim == 1:
        z = z[None, :]
    z = z / tau
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def _xlogy_ratio(p: np.ndarray, log_p: np.ndarray, log_q: np.ndarray) -> np.ndarray:
    # 0 * log 0 := 0
    with np.errstate(invalid="ignore"):
        return np.where(p > 0, p * (log_p - log_q), 0.0)


def kl_divergence(p: np.ndarray, q: np.ndarray) -> float:
    """Batch mean of ``sum_j p_j log(p_j / q_j)`` for two probability tables."""
    p = np.atleast_2d(np.asarray(p, dtype=DTYPE))
    q = np.atleast_2d(np.asarray(q, dtype=DTYPE))
    if p.shape != q.shape:
        raise ShapeError(f"KL shape mismatch: p {p.shape} vs q {q.shape}")
    if np.any(q <= 0):
        raise ValueError("q must be strictly positive")
    with np.errstate(divide="ignore"):
        log_p = np.log(p)
    value = _xlogy_ratio(p, log_p, np.log(q)).sum(axis=1).mean()
    return float(value)


def distill_kl(
    teacher_probs: np.ndarray,
    student_logits: np.ndarray,
    tau: float,
    return_grad: bool = False,
    tau2_scaling: bool = False,
):
    """KL(teacher || softmax(student_logits / tau)), batch mean.

    The gradient w.r.t. the student logits is ``(q - p) / (tau * B)``, times
    ``tau**2`` when ``tau2_scaling`` is on (the scaling also applies to the value).
    """
    p = np.asarray(teacher_probs, dtype=DTYPE)
    z = np.asarray(student_logits, dtype=DTYPE)
    if p.shape != z.shape:
        raise ShapeError(f"KL shape mismatch: teacher {p.shape} vs student {z.shape}")
    log_q = log_softmax_with_temperature(z, tau)
    with np.errstate(divide="ignore"):
        log_p = np.log(p)
    value = float(_xlogy_ratio(p, log_p, log_q).sum(axis=1).mean())
    scale = tau * tau if tau2_scaling else 1.0
    value *= scale
    if not return_grad:
        return value
    grad = (np.exp(log_q) - p) * (scale / (tau * z.shape[0]))
    return value, grad


def cross_entropy(logits: np.ndarray, labels, return_grad: bool = False):
    """Batch mean of ``-log softmax(logits)[label]``."""
    z = np.atleast_2d(np.asarray(logits, dtype=DTYPE))
    y = np.asarray(labels).reshape(-1)
    if y.shape[0] != z.shape[0]:
        raise ShapeError(f"{y.shape[0]} labels for {z.shape[0]} logit rows")
    n = z.shape[1]
    if y.size and (y.min() < 0 or y.max() >= n):
        raise ValueError(f"labels must lie in [0, {n}), got range [{y.min()}, {y.max()}]")
    y = y.astype(np.intp)
    log_q = log_softmax_with_temperature(z, 1.0)
    rows = np.arange(z.shape[0])
    value = float(-log_q[rows, y].mean())
    if not return_grad:
        return value
    grad = np.exp(log_q)
    grad[rows, y] -= 1.0
    grad /= z.shape[0]
    return value, grad


def total_loss(ce: float, kl: float, alpha: float) -> float:
    """``ce + alpha * kl``; returns ``ce`` itself when alpha is zero."""
    if alpha == 0:
        return ce
    return ce + alpha * kl

"""Braid-prediction head: edge features, per-mode 3-class logits, and the
best-mode-gated weighted cross-entropy loss.

Logit columns follow ``braid.CLASS_ORDER`` (below, over, no_crossing).
Every gradient here is analytic; the test suite checks each one against
central finite differences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .braid import CLASS_ORDER, CrossingClass
from .core import AgentId, Scene, frame_of_agent, wrap_angle
from .errors import WidthMismatch

RELATIVE_FEATURE_WIDTH = 5


@dataclass(frozen=True)
class BraidLossConfig:
    """Braid-loss weighting: overall factor and per-class weights in
    ``CLASS_ORDER``.  Crossing classes default to weight 8 because crossings
    are much rarer than no_crossing edges."""

    lam: float = 1.0
    class_weights: tuple[float, float, float] = (8.0, 8.0, 1.0)

    def __post_init__(self) -> None:
        if self.lam < 0:
            raise ValueError("lam must be >= 0")
        if len(self.class_weights) != 3 or any(w <= 0 for w in self.class_weights):
            raise ValueError("class_weights must be 3 positive reals")


def relative_feature(scene: Scene, i: AgentId, j: AgentId, width: int = RELATIVE_FEATURE_WIDTH) -> np.ndarray:
    """Geometric pair feature [dx, dy, cos dtheta, sin dtheta, range] of agent
    i in agent j's frame at t = 0, zero-padded to ``width``.

    Headings fall back through the frame-of-agent chain, so heading-less
    agents are supported.

    Raises:
        MissingCurrentState: either agent lacks a valid t = 0 state.
        WidthMismatch: width < 5 (the raw feature cannot be truncated).
    """
    if width < RELATIVE_FEATURE_WIDTH:
        raise WidthMismatch(f"width {width} < {RELATIVE_FEATURE_WIDTH}")
    frame_i = frame_of_agent(scene, i)
    frame_j = frame_of_agent(scene, j)
    c, s = math.cos(frame_j.axis_angle), math.sin(frame_j.axis_angle)
    gx = frame_i.origin[0] - frame_j.origin[0]
    gy = frame_i.origin[1] - frame_j.origin[1]
    dx = c * gx + s * gy
    dy = -s * gx + c * gy
    dtheta = wrap_angle(frame_i.axis_angle - frame_j.axis_angle)
    out = np.zeros(width, dtype=np.float64)
    out[:RELATIVE_FEATURE_WIDTH] = (dx, dy, math.cos(dtheta), math.sin(dtheta), math.hypot(dx, dy))
    return out


@dataclass(frozen=True)
class EmbeddingSet:
    """Final per-agent, per-mode embeddings: one (K, D) array per agent."""

    width: int
    vectors: dict[AgentId, np.ndarray]

    def __post_init__(self) -> None:
        k = None
        for aid, v in self.vectors.items():
            a = np.asarray(v, dtype=np.float64)
            if a.ndim != 2 or a.shape[1] != self.width:
                raise WidthMismatch(f"agent {aid!r}: embedding must be (K, {self.width})")
            if not np.isfinite(a).all():
                raise WidthMismatch(f"agent {aid!r}: non-finite embedding")
            if k is None:
                k = a.shape[0]
            elif a.shape[0] != k:
                raise WidthMismatch("all agents must share the same mode count")


def edge_features(emb: EmbeddingSet, r: np.ndarray, i: AgentId, j: AgentId) -> np.ndarray:
    """Per-mode edge features [m_i,k ; m_j,k ; r], shape (K, 3D)."""
    r = np.asarray(r, dtype=np.float64)
    if r.shape != (emb.width,):
        raise WidthMismatch(f"relative feature width {r.shape} != ({emb.width},)")
    mi = np.asarray(emb.vectors[i], dtype=np.float64)
    mj = np.asarray(emb.vectors[j], dtype=np.float64)
    k = mi.shape[0]
    return np.concatenate([mi, mj, np.broadcast_to(r, (k, emb.width))], axis=1)


@dataclass(frozen=True)
class EdgeClassifierHead:
    """One-hidden-layer rectifier MLP mapping edge features to 3 logits."""

    w1: np.ndarray  # (in_width, hidden)
    b1: np.ndarray  # (hidden,)
    w2: np.ndarray  # (hidden, 3)
    b2: np.ndarray  # (3,)

    def __post_init__(self) -> None:
        if self.w1.ndim != 2 or self.w2.ndim != 2 or self.w2.shape[1] != 3:
            raise WidthMismatch("head must map (in_width -> hidden -> 3)")
        if self.w1.shape[1] != self.w2.shape[0] or self.b1.shape != (self.w1.shape[1],):
            raise WidthMismatch("hidden widths disagree")
        if self.b2.shape != (3,):
            raise WidthMismatch("output bias must have width 3")

    @property
    def in_width(self) -> int:
        return self.w1.shape[0]


def init_head(in_width: int, hidden: int, rng: np.random.Generator) -> EdgeClassifierHead:
    return EdgeClassifierHead(
        w1=rng.normal(0.0, 1.0 / math.sqrt(in_width), size=(in_width, hidden)),
        b1=np.zeros(hidden),
        w2=rng.normal(0.0, 1.0 / math.sqrt(hidden), size=(hidden, 3)),
        b2=np.zeros(3),
    )


def classify_edge(head: EdgeClassifierHead, f: np.ndarray) -> np.ndarray:
    """Per-mode forward pass: (K, 3D) features -> (K, 3) logits."""
    f = np.asarray(f, dtype=np.float64)
    if f.ndim != 2 or f.shape[1] != head.in_width:
        raise WidthMismatch(f"features {f.shape} do not match head input {head.in_width}")
    hidden = np.maximum(f @ head.w1 + head.b1, 0.0)
    return hidden @ head.w2 + head.b2


def classify_edge_from_encodings(
    enc_i: np.ndarray, enc_j: np.ndarray, r: np.ndarray, head: EdgeClassifierHead
) -> np.ndarray:
    """Mode-free variant: a single logit row from t = 0 agent encodings."""
    f = np.concatenate([np.asarray(enc_i), np.asarray(enc_j), np.asarray(r)]).astype(np.float64)
    return classify_edge(head, f[None, :])[0]


@dataclass(frozen=True)
class HeadGradients:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray


def classify_edge_backward(
    head: EdgeClassifierHead, f: np.ndarray, dlogits: np.ndarray
) -> tuple[np.ndarray, HeadGradients]:
    """Backprop through :func:`classify_edge`.

    Returns (d_features, head parameter gradients) for an upstream gradient
    ``dlogits`` of shape (K, 3).
    """
    f = np.asarray(f, dtype=np.float64)
    dlogits = np.asarray(dlogits, dtype=np.float64)
    pre = f @ head.w1 + head.b1
    hidden = np.maximum(pre, 0.0)
    dw2 = hidden.T @ dlogits
    db2 = dlogits.sum(axis=0)
    dhidden = dlogits @ head.w2.T
    dpre = dhidden * (pre > 0.0)
    dw1 = f.T @ dpre
    db1 = dpre.sum(axis=0)
    df = dpre @ head.w1.T
    return df, HeadGradients(w1=dw1, b1=db1, w2=dw2, b2=db2)


def log_softmax(z: np.ndarray) -> np.ndarray:
    m = z.max()
    return z - (m + math.log(np.exp(z - m).sum()))


def softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max())
    return e / e.sum()


def braid_loss(
    logits: np.ndarray,
    true_class: CrossingClass,
    k_star: int,
    cfg: BraidLossConfig,
) -> tuple[float, np.ndarray]:
    """Class-weighted cross-entropy on the best joint mode only.

    Returns (loss, gradient w.r.t. logits); the gradient is nonzero only in
    row ``k_star`` where it equals weight * (softmax - onehot).
    """
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 2 or logits.shape[1] != 3:
        raise WidthMismatch(f"logits must be (K, 3), got {logits.shape}")
    if not 0 <= k_star < logits.shape[0]:
        raise ValueError(f"k_star {k_star} outside [0, {logits.shape[0]})")
    c = true_class.index
    w = cfg.class_weights[c]
    row = logits[k_star]
    logp = log_softmax(row)
    loss = w * (-logp[c])
    grad = np.zeros_like(logits)
    p = np.exp(logp)
    p[c] -= 1.0
    grad[k_star] = w * p
    return float(loss), grad


def encoding_braid_loss(
    logits_row: np.ndarray, true_class: CrossingClass, cfg: BraidLossConfig
) -> tuple[float, np.ndarray]:
    """Cross-entropy for the mode-free variant (single logit row, no gating)."""
    logits_row = np.asarray(logits_row, dtype=np.float64)
    c = true_class.index
    w = cfg.class_weights[c]
    logp = log_softmax(logits_row)
    p = np.exp(logp)
    p[c] -= 1.0
    return float(w * (-logp[c])), w * p


def combined_loss(reg_loss: float, cls_loss: float, braid_total: float, lam: float) -> float:
    """Total multi-task objective: regression + mode classification +
    lam * mean braid loss over batch edges."""
    if lam < 0:
        raise ValueError("lam must be >= 0")
    return reg_loss + cls_loss + lam * braid_total


__all__ = [
    "BraidLossConfig",
    "EdgeClassifierHead",
    "EmbeddingSet",
    "HeadGradients",
    "RELATIVE_FEATURE_WIDTH",
    "braid_loss",
    "classify_edge",
    "classify_edge_backward",
    "classify_edge_from_encodings",
    "combined_loss",
    "edge_features",
    "encoding_braid_loss",
    "init_head",
    "log_softmax",
    "relative_feature",
    "softmax",
    "CLASS_ORDER",
    "CrossingClass",
]

"""Ranking and classification losses with exact analytic gradients.

Every function returns a :class:`LossValue` carrying the scalar total, a
per-term breakdown and the gradient with respect to each input score. The
hinge [z]+ = max(z, 0) uses subgradient 0 at z == 0 (a measure-zero event,
so the choice never matters for training and keeps gradients conservative
at the boundary).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

LABEL_SIMILAR = 1
LABEL_DISSIMILAR = 0

# logit/probability index conventions for the two-dimensional head
SIMILAR_INDEX = 0
DISSIMILAR_INDEX = 1


@dataclass(frozen=True)
class MarginConfig:
    """Margins for the ranking losses; alpha1 doubles as the triplet margin."""

    alpha1: float = 1.0
    alpha2: float = 0.5
    alpha_cts: float = 1.0
    softmax_aux_weight: float = 1.0

    def __post_init__(self):
        for name in ("alpha1", "alpha2", "alpha_cts", "softmax_aux_weight"):
            v = getattr(self, name)
            if v < 0:
                raise ValueError(f"{name} must be >= 0, got {v}")

    def require_quadruplet_order(self) -> None:
        if self.alpha1 < self.alpha2:
            raise ValueError(
                f"quadruplet margins need alpha1 >= alpha2, got "
                f"{self.alpha1} < {self.alpha2}"
            )


@dataclass
class LossValue:
    """Loss total, per-term breakdown and per-input gradients."""

    total: float
    terms: dict = field(default_factory=dict)
    grads: dict = field(default_factory=dict)


def hinge(z: float) -> tuple[float, bool]:
    """[z]+ and whether the hinge is active (strictly positive)."""
    return (z, True) if z > 0.0 else (0.0, False)


def _check_unit_range(name: str, value: float) -> None:
    if not 0.0 <= value <= 1.0:
        raise ValueError(
            f"{name}={value} outside [0, 1]; scores from an unnormalized head "
            f"invalidate the margin"
        )


def triplet_embed_loss(d_ij: float, d_ik: float, alpha: float) -> LossValue:
    """[d_ij^2 - d_ik^2 + alpha]+ on embedding distances."""
    if alpha < 0:
        raise ValueError(f"alpha must be >= 0, got {alpha}")
    if d_ij < 0 or d_ik < 0:
        raise ValueError("distances must be >= 0")
    value, active = hinge(d_ij * d_ij - d_ik * d_ik + alpha)
    return LossValue(
        total=value,
        terms={"hinge": value, "active": active},
        grads={
            "d_ij": 2.0 * d_ij if active else 0.0,
            "d_ik": -2.0 * d_ik if active else 0.0,
        },
    )


def triplet_metric_loss(
    g_ij: float, g_ik: float, alpha: float, check_range: bool = True
) -> LossValue:
    """[g_ij^2 - g_ik^2 + alpha]+ on learned metric scores.

    ``check_range=False`` admits scores outside [0, 1]; the unnormalized
    baseline head produces those by design.
    """
    if alpha < 0:
        raise ValueError(f"alpha must be >= 0, got {alpha}")
    if check_range:
        _check_unit_range("g_ij", g_ij)
        _check_unit_range("g_ik", g_ik)
    value, active = hinge(g_ij * g_ij - g_ik * g_ik + alpha)
    return LossValue(
        total=value,
        terms={"hinge": value, "active": active},
        grads={
            "g_ij": 2.0 * g_ij if active else 0.0,
            "g_ik": -2.0 * g_ik if active else 0.0,
        },
    )


def quadruplet_loss(g_ij: float, g_ik: float, g_lk: float, margins: MarginConfig) -> LossValue:
    """Strong same-probe push plus weaker different-probe push.

    term1 = [g_ij^2 - g_ik^2 + alpha1]+   (same probe, dominant)
    term2 = [g_ij^2 - g_lk^2 + alpha2]+   (different probe, auxiliary)
    """
    margins.require_quadruplet_order()
    _check_unit_range("g_ij", g_ij)
    _check_unit_range("g_ik", g_ik)
    _check_unit_range("g_lk", g_lk)
    sq_ij = g_ij * g_ij
    t1, a1 = hinge(sq_ij - g_ik * g_ik + margins.alpha1)
    t2, a2 = hinge(sq_ij - g_lk * g_lk + margins.alpha2)
    return LossValue(
        total=t1 + t2,
        terms={"term1": t1, "term2": t2, "term1_active": a1, "term2_active": a2},
        grads={
            "g_ij": 2.0 * g_ij * (float(a1) + float(a2)),
            "g_ik": -2.0 * g_ik if a1 else 0.0,
            "g_lk": -2.0 * g_lk if a2 else 0.0,
        },
    )


def contrastive_loss(score: float, label: int, alpha_cts: float) -> LossValue:
    """y*v + (1-y)*[alpha_cts - v]+ with v = score^2.

    ``score`` is an embedding distance or a metric score; the loss squares
    it internally.
    """
    if label not in (LABEL_SIMILAR, LABEL_DISSIMILAR):
        raise ValueError(f"label must be 0 or 1, got {label}")
    if alpha_cts < 0:
        raise ValueError(f"alpha_cts must be >= 0, got {alpha_cts}")
    v = score * score
    if label == LABEL_SIMILAR:
        return LossValue(
            total=v, terms={"positive": v}, grads={"score": 2.0 * score}
        )
    value, active = hinge(alpha_cts - v)
    return LossValue(
        total=value,
        terms={"negative": value, "active": active},
        grads={"score": -2.0 * score if active else 0.0},
    )


def pair_softmax_loss(logits: np.ndarray, label: int) -> LossValue:
    """Cross-entropy of softmax(logits) against similar/dissimilar.

    Gradient to the logits is softmax(logits) - onehot(label).
    """
    z = np.asarray(logits, dtype=np.float64).reshape(2)
    if not np.all(np.isfinite(z)):
        raise ValueError("non-finite logits")
    if label not in (LABEL_SIMILAR, LABEL_DISSIMILAR):
        raise ValueError(f"label must be 0 or 1, got {label}")
    shifted = z - z.max()
    log_norm = np.log(np.exp(shifted).sum())
    log_p = shifted - log_norm
    target = SIMILAR_INDEX if label == LABEL_SIMILAR else DISSIMILAR_INDEX
    onehot = np.zeros(2)
    onehot[target] = 1.0
    probs = np.exp(log_p)
    return LossValue(
        total=float(-log_p[target]),
        terms={"cross_entropy": float(-log_p[target])},
        grads={"logits": probs - onehot},
    )

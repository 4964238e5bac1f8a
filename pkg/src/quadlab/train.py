"""SGD training loop over the seven ablation modes.

Per-batch losses are summed over the batch (matching the summed form of
the ranking losses), and the update is plain SGD at the configured
learning rate; momentum is available but defaults to 0. An epoch is
ceil(positive-pair count / batch size) batches, which ties epoch length
to dataset size since the quadruplet space itself has no natural epoch.

The adaptive-margin mode trains on fixed margins for the warm-start
fraction of epochs, then switches to batch statistics; during the
adaptive phase each epoch record keeps the last batch's scores alongside
the margins actually used, so the logged margins can be re-derived
offline.

Determinism: everything downstream of the seed is reproducible bit for
bit except the wall_time log field, which measures physical time.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .config import TrainConfig
from .data import Dataset, positive_pair_count
from .model import (
    ModelParams,
    init_params,
    pair_distances,
    distance_backward,
    score_pairs,
    score_backward,
    sgd_step,
)
from .numeric import make_rng
from .quadruplets import batch_loss_adaptive, mining_report, sample_batch

SIMILAR_COLUMN = 0
DISSIMILAR_COLUMN = 1


@dataclass
class EpochRecord:
    epoch: int
    loss: float  # mean batch loss
    term1: float
    term2: float
    aux: float
    active_fraction_term1: float
    active_fraction_term2: float
    alpha1: float
    alpha2: float
    adaptive: bool
    wall_time: float
    last_batch_scores: dict | None = None


@dataclass
class TrainLog:
    mode: str
    batches_per_epoch: int
    records: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "batches_per_epoch": self.batches_per_epoch,
            "epochs": [
                {
                    "epoch": r.epoch,
                    "loss": r.loss,
                    "term1": r.term1,
                    "term2": r.term2,
                    "aux": r.aux,
                    "active_fraction_term1": r.active_fraction_term1,
                    "active_fraction_term2": r.active_fraction_term2,
                    "alpha1": r.alpha1,
                    "alpha2": r.alpha2,
                    "adaptive": r.adaptive,
                    "wall_time": r.wall_time,
                    "last_batch_scores": r.last_batch_scores,
                }
                for r in self.records
            ],
        }


@dataclass
class _BatchOutcome:
    loss: float
    term1: float = 0.0
    term2: float = 0.0
    aux: float = 0.0
    frac1: float = 0.0
    frac2: float = 0.0
    alpha1: float = 0.0
    alpha2: float = 0.0
    scores: dict | None = None


def _cross_entropy_rows(logits: np.ndarray, target_col: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-row CE of softmax(logits) against one target column, with dlogits."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_p = shifted - log_norm
    losses = -log_p[:, target_col]
    dlogits = np.exp(log_p)
    dlogits[:, target_col] -= 1.0
    return losses, dlogits


def _aux_dlogits(logits: np.ndarray, target_col: int, weight: float) -> tuple[float, np.ndarray]:
    losses, dlogits = _cross_entropy_rows(logits, target_col)
    return weight * float(losses.sum()), weight * dlogits


def _sample_doublets(
    dataset: Dataset, m: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Balanced labelled pairs: first half positive, second half negative."""
    dataset.check_ranking_feasible()
    person = dataset.person_ids
    n = len(dataset)
    all_idx = np.arange(n)
    rows_a, rows_b, labels = [], [], []
    n_pos = m // 2
    for t in range(m):
        i = int(rng.integers(n))
        if t < n_pos:
            same = dataset.indices_of_identity(int(person[i]))
            j = i
            while j == i:
                j = int(same[rng.integers(len(same))])
            labels.append(1)
        else:
            pool = all_idx[person != person[i]]
            j = int(pool[rng.integers(len(pool))])
            labels.append(0)
        rows_a.append(i)
        rows_b.append(j)
    return np.asarray(rows_a), np.asarray(rows_b), np.asarray(labels)


def _quad_tensors(dataset: Dataset, quads) -> tuple[np.ndarray, ...]:
    xi = dataset.features[[q.i for q in quads]]
    xj = dataset.features[[q.j for q in quads]]
    xk = dataset.features[[q.k for q in quads]]
    xl = dataset.features[[q.l for q in quads]]
    return xi, xj, xk, xl


def _step_triplet_embed(params, xi, xj, xk, cfg) -> tuple[_BatchOutcome, object]:
    d_ij, c1 = pair_distances(params, xi, xj)
    d_ik, c2 = pair_distances(params, xi, xk)
    z = d_ij**2 - d_ik**2 + cfg.alpha1
    active = z > 0.0
    loss = float(z[active].sum())
    grads = distance_backward(params, c1, 2.0 * d_ij * active)
    grads.iadd(distance_backward(params, c2, -2.0 * d_ik * active))
    out = _BatchOutcome(
        loss=loss, term1=loss, frac1=float(active.mean()),
        alpha1=cfg.alpha1, alpha2=0.0,
    )
    return out, grads


def _step_triplet_metric(params, xi, xj, xk, cfg, aux: bool) -> tuple[_BatchOutcome, object]:
    g_ij, c1 = score_pairs(params, xi, xj)
    g_ik, c2 = score_pairs(params, xi, xk)
    z = g_ij**2 - g_ik**2 + cfg.alpha1
    active = z > 0.0
    loss = float(z[active].sum())
    aux_loss = 0.0
    dl1 = dl2 = None
    if aux:
        a1, dl1 = _aux_dlogits(c1.logits, SIMILAR_COLUMN, cfg.softmax_aux_weight)
        a2, dl2 = _aux_dlogits(c2.logits, DISSIMILAR_COLUMN, cfg.softmax_aux_weight)
        aux_loss = a1 + a2
    grads = score_backward(params, c1, 2.0 * g_ij * active, dl1)
    grads.iadd(score_backward(params, c2, -2.0 * g_ik * active, dl2))
    out = _BatchOutcome(
        loss=loss + aux_loss, term1=loss, aux=aux_loss,
        frac1=float(active.mean()), alpha1=cfg.alpha1, alpha2=0.0,
        scores={"g_ij": g_ij.tolist(), "g_ik": g_ik.tolist()},
    )
    return out, grads


def _step_quadruplet(params, xi, xj, xk, xl, cfg, adaptive: bool) -> tuple[_BatchOutcome, object]:
    g_ij, c1 = score_pairs(params, xi, xj)
    g_ik, c2 = score_pairs(params, xi, xk)
    g_lk, c3 = score_pairs(params, xl, xk)

    if adaptive:
        result = batch_loss_adaptive(g_ij, g_ik, g_lk, mode="exact")
        report = mining_report(result.mask)
        d_ij, d_ik, d_lk = (result.grads[k] for k in ("g_ij", "g_ik", "g_lk"))
        term1, term2 = result.loss.terms["term1"], result.loss.terms["term2"]
        alpha1, alpha2 = result.stats.alpha1, result.stats.alpha2
        frac1, frac2 = report.term1_fraction, report.term2_fraction
    else:
        z1 = g_ij**2 - g_ik**2 + cfg.alpha1
        z2 = g_ij**2 - g_lk**2 + cfg.alpha2
        a1, a2 = z1 > 0.0, z2 > 0.0
        term1, term2 = float(z1[a1].sum()), float(z2[a2].sum())
        d_ij = 2.0 * g_ij * (a1.astype(float) + a2.astype(float))
        d_ik = -2.0 * g_ik * a1
        d_lk = -2.0 * g_lk * a2
        alpha1, alpha2 = cfg.alpha1, cfg.alpha2
        frac1, frac2 = float(a1.mean()), float(a2.mean())

    aux1, dl1 = _aux_dlogits(c1.logits, SIMILAR_COLUMN, cfg.softmax_aux_weight)
    aux2, dl2 = _aux_dlogits(c2.logits, DISSIMILAR_COLUMN, cfg.softmax_aux_weight)
    aux3, dl3 = _aux_dlogits(c3.logits, DISSIMILAR_COLUMN, cfg.softmax_aux_weight)
    aux_loss = aux1 + aux2 + aux3

    grads = score_backward(params, c1, d_ij, dl1)
    grads.iadd(score_backward(params, c2, d_ik, dl2))
    grads.iadd(score_backward(params, c3, d_lk, dl3))
    out = _BatchOutcome(
        loss=term1 + term2 + aux_loss, term1=term1, term2=term2, aux=aux_loss,
        frac1=frac1, frac2=frac2, alpha1=alpha1, alpha2=alpha2,
        scores={"g_ij": g_ij.tolist(), "g_ik": g_ik.tolist(), "g_lk": g_lk.tolist()},
    )
    return out, grads


def _step_classification(params, dataset, m, rng, cfg) -> tuple[_BatchOutcome, object]:
    rows_a, rows_b, labels = _sample_doublets(dataset, m, rng)
    g, cache = score_pairs(params, dataset.features[rows_a], dataset.features[rows_b])
    pos = labels == 1
    v = g**2
    hinge_active = (cfg.alpha_cts - v > 0.0) & ~pos
    cts = float(v[pos].sum()) + float((cfg.alpha_cts - v)[hinge_active].sum())
    d_g = np.where(pos, 2.0 * g, 0.0) + np.where(hinge_active, -2.0 * g, 0.0)

    losses_sim, dl_sim = _cross_entropy_rows(cache.logits, SIMILAR_COLUMN)
    losses_dis, dl_dis = _cross_entropy_rows(cache.logits, DISSIMILAR_COLUMN)
    aux_rows = np.where(pos, losses_sim, losses_dis)
    dlogits = np.where(pos[:, None], dl_sim, dl_dis) * cfg.softmax_aux_weight
    aux_loss = cfg.softmax_aux_weight * float(aux_rows.sum())

    grads = score_backward(params, cache, d_g, dlogits)
    out = _BatchOutcome(
        loss=cts + aux_loss, term1=cts, aux=aux_loss,
        frac1=float((pos | hinge_active).mean()),
        alpha1=cfg.alpha_cts, alpha2=0.0,
        scores={"g": g.tolist(), "labels": labels.tolist()},
    )
    return out, grads


def train(config: TrainConfig, dataset: Dataset) -> tuple[ModelParams, TrainLog]:
    """Run SGD on the configured mode; deterministic per config seed."""
    config.validate()
    if config.epochs > 0:
        dataset.check_ranking_feasible()
    init_seed, batch_seed = (
        int(s) for s in np.random.SeedSequence(config.seed).generate_state(2, dtype=np.uint64)
    )
    params = init_params(
        dataset.dim,
        list(config.embed_dims),
        config.head_kind,
        seed=init_seed,
        head_dims=list(config.head_dims),
    )
    rng = make_rng(batch_seed)

    batches = max(1, math.ceil(positive_pair_count(dataset) / config.batch_size))
    log = TrainLog(mode=config.mode, batches_per_epoch=batches)
    warm_epochs = int(config.warm_start_fraction * config.epochs)
    velocity = None

    for epoch in range(config.epochs):
        t0 = time.perf_counter()
        adaptive = config.mode == "quadruplet_margohnm" and epoch >= warm_epochs
        sums = {"loss": 0.0, "term1": 0.0, "term2": 0.0, "aux": 0.0, "frac1": 0.0, "frac2": 0.0}
        outcome = None
        for b in range(batches):
            if config.mode == "classification":
                outcome, grads = _step_classification(params, dataset, config.batch_size, rng, config)
            else:
                quads = sample_batch(dataset, config.batch_size, rng)
                xi, xj, xk, xl = _quad_tensors(dataset, quads)
                if config.mode == "triplet_embed":
                    outcome, grads = _step_triplet_embed(params, xi, xj, xk, config)
                elif config.mode == "triplet_metric":
                    outcome, grads = _step_triplet_metric(params, xi, xj, xk, config, aux=False)
                elif config.mode == "triplet_improved_nosfx":
                    outcome, grads = _step_triplet_metric(params, xi, xj, xk, config, aux=False)
                elif config.mode == "triplet_improved":
                    outcome, grads = _step_triplet_metric(params, xi, xj, xk, config, aux=True)
                elif config.mode in ("quadruplet", "quadruplet_margohnm"):
                    outcome, grads = _step_quadruplet(params, xi, xj, xk, xl, config, adaptive)
                else:
                    raise ValueError(f"unhandled mode {config.mode!r}")
            if not np.isfinite(outcome.loss):
                raise FloatingPointError(
                    f"non-finite loss at epoch {epoch}, batch {b}: {outcome.loss}"
                )
            params, velocity = sgd_step(
                params, grads, config.learning_rate, config.momentum, velocity
            )
            sums["loss"] += outcome.loss
            sums["term1"] += outcome.term1
            sums["term2"] += outcome.term2
            sums["aux"] += outcome.aux
            sums["frac1"] += outcome.frac1
            sums["frac2"] += outcome.frac2

        log.records.append(
            EpochRecord(
                epoch=epoch,
                loss=sums["loss"] / batches,
                term1=sums["term1"] / batches,
                term2=sums["term2"] / batches,
                aux=sums["aux"] / batches,
                active_fraction_term1=sums["frac1"] / batches,
                active_fraction_term2=sums["frac2"] / batches,
                alpha1=outcome.alpha1,
                alpha2=outcome.alpha2,
                adaptive=adaptive,
                wall_time=time.perf_counter() - t0,
                last_batch_scores=outcome.scores,
            )
        )
    return params, log

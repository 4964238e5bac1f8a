"""Executable loss-relationship analysis.

Three checks connect the binary-classification (contrastive) view to the
ranking view:

1. Doublet-to-quadruplet transformation: a batch of M labelled pairs
   (a positive, M-a negative) expands into the a*(M-a) Cartesian pairings
   of one positive with one negative doublet, partitioned by whether the
   negative shares the positive's probe identity. No new sample is
   introduced; only usage frequency grows.
2. The max identity  c + [t]+ = max(c, c + t)  that rewrites each summand
   of the transformed contrastive loss as a thresholded hinge.
3. A constructed two-case demo: a score layout that is per-probe perfect
   but globally overlapping (case 1) versus one that is globally separable
   except for a single pair but has a wrong per-probe order (case 2). A
   threshold classifier prefers case 2; the quadruplet loss prefers case 1.

The case layouts are constructed, not measured: each pair is a (probe
image, gallery image) with a similarity score, dissimilarity g = 1 - s.
The demo margins are small so that order violations dominate the hinge
values; with large margins every hinge saturates and the comparison
degenerates into a pure gap comparison.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .losses import MarginConfig, contrastive_loss, hinge
from .numeric import make_rng

DEMO_MARGINS = MarginConfig(alpha1=0.02, alpha2=0.01)
DEMO_ALPHA_CTS = 1.0


@dataclass
class DoubletBatch:
    """M labelled pairs over a shared sample registry.

    ``identities[r]`` is the person identity of sample ref r; ``pairs``
    holds (probe_ref, gallery_ref) rows. A pair's label is 1 iff its two
    refs share an identity.
    """

    identities: np.ndarray
    pairs: np.ndarray

    def __post_init__(self):
        self.identities = np.asarray(self.identities, dtype=np.int64)
        self.pairs = np.asarray(self.pairs, dtype=np.int64).reshape(-1, 2)

    @property
    def m(self) -> int:
        return self.pairs.shape[0]

    @property
    def labels(self) -> np.ndarray:
        return (
            self.identities[self.pairs[:, 0]] == self.identities[self.pairs[:, 1]]
        ).astype(np.int64)

    @property
    def a(self) -> int:
        return int(self.labels.sum())


@dataclass
class TransformedBatch:
    """a*(M-a) quadruplets (i, j, l, k) from pairing positives with negatives."""

    quadruplets: np.ndarray  # (n, 4) sample refs i, j, l, k
    pos_index: np.ndarray  # source positive doublet per quadruplet
    neg_index: np.ndarray  # source negative doublet per quadruplet
    same_probe: np.ndarray  # bool: negative's probe identity equals positive's

    @property
    def b(self) -> int:
        return int(self.same_probe.sum())


def transform(batch: DoubletBatch) -> TransformedBatch:
    """Cartesian product of positive and negative doublets.

    Requires 0 < a < M. The same-probe subset collects quadruplets whose
    negative pair is probed by the positive pair's identity.
    """
    labels = batch.labels
    a = int(labels.sum())
    if a == 0 or a == batch.m:
        raise ValueError(f"need both positive and negative doublets, got a={a} of M={batch.m}")
    pos = np.where(labels == 1)[0]
    neg = np.where(labels == 0)[0]

    quads, pos_idx, neg_idx, same = [], [], [], []
    for p in pos:
        i, j = batch.pairs[p]
        for q in neg:
            l, k = batch.pairs[q]
            quads.append((i, j, l, k))
            pos_idx.append(p)
            neg_idx.append(q)
            same.append(batch.identities[i] == batch.identities[l])
    return TransformedBatch(
        quadruplets=np.asarray(quads, dtype=np.int64),
        pos_index=np.asarray(pos_idx, dtype=np.int64),
        neg_index=np.asarray(neg_idx, dtype=np.int64),
        same_probe=np.asarray(same, dtype=bool),
    )


def max_identity_check(g_ij: float, g_lk: float, alpha: float) -> tuple[float, float]:
    """Both sides of  g_ij^2 + [alpha - g_lk^2]+ = max(g_ij^2, g_ij^2 + alpha - g_lk^2).

    Returns (lhs, rhs); they agree exactly, bit for bit, because both
    branches evaluate the identical float expression.
    """
    c = g_ij * g_ij
    t = alpha - g_lk * g_lk
    lhs = c + (t if t > 0.0 else 0.0)
    rhs = max(c, c + t)
    return lhs, rhs


def contrastive_sum_equivalence(batch: DoubletBatch, scores, alpha_cts: float) -> dict:
    """Verify the transformed sum against the weighted doublet sums.

    sum over a*(M-a) quadruplets of max[g_p^2, g_p^2 + alpha - g_n^2]
    equals (M-a) * (positive doublet part) + a * (negative doublet part);
    for a = M/2 both equal (M/2) * L_cts.
    """
    scores = np.asarray(scores, dtype=np.float64).ravel()
    if scores.shape != (batch.m,):
        raise ValueError(f"need one score per doublet, got {scores.shape} for M={batch.m}")
    labels = batch.labels
    a = int(labels.sum())
    tb = transform(batch)

    g_pos = scores[tb.pos_index]
    g_neg = scores[tb.neg_index]
    transformed_sum = float(
        np.maximum(g_pos**2, g_pos**2 + alpha_cts - g_neg**2).sum()
    )

    pos_part = float((scores[labels == 1] ** 2).sum())
    neg_part = float(np.maximum(0.0, alpha_cts - scores[labels == 0] ** 2).sum())
    weighted = (batch.m - a) * pos_part + a * neg_part

    report = {
        "m": batch.m,
        "a": a,
        "b": tb.b,
        "transformed_size": int(tb.quadruplets.shape[0]),
        "transformed_sum": transformed_sum,
        "weighted_doublet_sum": weighted,
        "abs_deviation": abs(transformed_sum - weighted),
    }
    if 2 * a == batch.m:
        l_cts = pos_part + neg_part
        report["l_cts"] = l_cts
        report["ratio"] = transformed_sum / l_cts if l_cts else float("nan")
        report["expected_ratio"] = batch.m / 2.0
    return report


def random_doublet_batch(
    m: int, a: int, n_identities: int, rng: np.random.Generator
) -> DoubletBatch:
    """Fresh sample registry with the first ``a`` doublets positive."""
    if not 0 < a < m:
        raise ValueError(f"need 0 < a < M, got a={a}, M={m}")
    if n_identities < 2:
        raise ValueError("need >= 2 identities to form negative pairs")
    identities, pairs = [], []
    for t in range(m):
        if t < a:
            ident = int(rng.integers(n_identities))
            identities += [ident, ident]
        else:
            i1 = int(rng.integers(n_identities))
            i2 = i1
            while i2 == i1:
                i2 = int(rng.integers(n_identities))
            identities += [i1, i2]
        pairs.append((2 * t, 2 * t + 1))
    return DoubletBatch(np.asarray(identities), np.asarray(pairs))


# --------------------------------------------------------------------------
# two-case preference demo


@dataclass(frozen=True)
class ScoredPair:
    """A (probe, gallery) image pair with a similarity score."""

    probe: int
    gallery: int
    probe_identity: int
    gallery_identity: int
    similarity: float

    @property
    def positive(self) -> bool:
        return self.probe_identity == self.gallery_identity

    @property
    def g(self) -> float:
        return 1.0 - self.similarity


def _case_pairs(similarities: dict[str, float]) -> list[ScoredPair]:
    # Images: A1=0 A2=1 B1=2 B2=3 C1=4 C2=5; identities A=0 B=1 C=2.
    ident = [0, 0, 1, 1, 2, 2]
    layout = {
        "PA": (0, 1),
        "NA_b": (0, 2),
        "NA_c": (0, 4),
        "PB": (2, 3),
        "NB_c": (2, 5),
        "NB_a": (2, 1),
        "PC": (4, 5),
        "NC_a": (4, 1),
        "NC_b": (4, 3),
    }
    return [
        ScoredPair(p, q, ident[p], ident[q], similarities[name])
        for name, (p, q) in layout.items()
    ]


CASE1_SIMILARITIES = {
    # per-probe orders all correct; NA_b sits above PB and NA_c above PC,
    # so no single threshold separates positives from negatives
    "PA": 0.95, "NA_b": 0.52, "NA_c": 0.47,
    "PB": 0.50, "NB_c": 0.12, "NB_a": 0.10,
    "PC": 0.44, "NC_a": 0.08, "NC_b": 0.05,
}

CASE2_SIMILARITIES = {
    # globally separable except NC_a, which outranks its own probe's
    # positive PC: one threshold error but a wrong rank-1 order at C
    "PA": 0.90, "NA_b": 0.20, "NA_c": 0.15,
    "PB": 0.85, "NB_c": 0.12, "NB_a": 0.10,
    "PC": 0.40, "NC_a": 0.55, "NC_b": 0.05,
}


def _rank1_errors(pairs: list[ScoredPair]) -> int:
    errors = 0
    for probe in sorted({p.probe for p in pairs}):
        mine = [p for p in pairs if p.probe == probe]
        pos = [p for p in mine if p.positive]
        neg = [p for p in mine if not p.positive]
        if any(n.similarity >= p.similarity for p in pos for n in neg):
            errors += 1
    return errors


def _best_threshold_errors(pairs: list[ScoredPair]) -> tuple[int, float]:
    """Exhaustive sweep: classify similarity >= t as positive."""
    scores = sorted({p.similarity for p in pairs})
    candidates = scores + [scores[-1] + 1.0]
    best_err, best_t = None, None
    for t in candidates:
        err = sum(1 for p in pairs if p.positive and p.similarity < t)
        err += sum(1 for p in pairs if not p.positive and p.similarity >= t)
        if best_err is None or err < best_err:
            best_err, best_t = err, t
    return best_err, best_t


def _case_quadruplet_loss(pairs: list[ScoredPair], margins: MarginConfig) -> float:
    margins.require_quadruplet_order()
    positives = [p for p in pairs if p.positive]
    negatives = [p for p in pairs if not p.positive]
    total = 0.0
    for pos in positives:
        for neg in negatives:
            if neg.probe == pos.probe:
                # same probe image: the strong first term
                total += hinge(pos.g**2 - neg.g**2 + margins.alpha1)[0]
            elif (
                neg.probe_identity != pos.probe_identity
                and neg.gallery_identity != pos.probe_identity
            ):
                # different probe, disjoint identities: the weak second term
                total += hinge(pos.g**2 - neg.g**2 + margins.alpha2)[0]
    return total


def _case_contrastive_loss(pairs: list[ScoredPair], alpha_cts: float) -> float:
    return sum(
        contrastive_loss(p.g, 1 if p.positive else 0, alpha_cts).total for p in pairs
    )


def fig3_preference_demo(
    margins: MarginConfig = DEMO_MARGINS, alpha_cts: float = DEMO_ALPHA_CTS
) -> dict:
    """Evaluate the two constructed cases under both criteria.

    Contract: the threshold classifier (misclassification count and
    contrastive loss) prefers case 2; per-probe ranking and the
    quadruplet loss prefer case 1.
    """
    report = {"margins": {"alpha1": margins.alpha1, "alpha2": margins.alpha2},
              "alpha_cts": alpha_cts, "cases": {}}
    results = {}
    for name, sims in (("case1", CASE1_SIMILARITIES), ("case2", CASE2_SIMILARITIES)):
        pairs = _case_pairs(sims)
        thr_err, thr = _best_threshold_errors(pairs)
        results[name] = {
            "similarities": dict(sims),
            "rank1_errors": _rank1_errors(pairs),
            "best_threshold_errors": thr_err,
            "best_threshold": thr,
            "quadruplet_loss": _case_quadruplet_loss(pairs, margins),
            "contrastive_loss": _case_contrastive_loss(pairs, alpha_cts),
        }
    report["cases"] = results
    c1, c2 = results["case1"], results["case2"]
    report["classifier_prefers_case2"] = (
        c2["best_threshold_errors"] < c1["best_threshold_errors"]
        and c2["contrastive_loss"] < c1["contrastive_loss"]
    )
    report["ranking_prefers_case1"] = (
        c1["rank1_errors"] < c2["rank1_errors"]
        and c1["quadruplet_loss"] < c2["quadruplet_loss"]
    )
    return report


def run_equivalence_suite(
    seed: int = 0, n_triples: int = 1_000_000, n_batches: int = 1000
) -> dict:
    """Full suite for the CLI: identity checks, sum equivalence, the demo."""
    rng = make_rng(seed)

    g_ij = rng.uniform(0.0, 1.0, n_triples)
    g_lk = rng.uniform(0.0, 1.0, n_triples)
    alpha = rng.uniform(0.0, 1.0, n_triples)
    c = g_ij**2
    t = alpha - g_lk**2
    lhs = c + np.maximum(0.0, t)
    rhs = np.maximum(c, c + t)
    max_identity_dev = float(np.max(np.abs(lhs - rhs)))

    max_sum_dev = 0.0
    max_ratio_dev = 0.0
    for _ in range(n_batches):
        m = int(rng.integers(2, 17)) * 2
        a = m // 2
        batch = random_doublet_batch(m, a, n_identities=int(rng.integers(2, 8)), rng=rng)
        scores = rng.uniform(0.0, 1.0, m)
        rep = contrastive_sum_equivalence(batch, scores, alpha_cts=float(rng.uniform(0.1, 1.0)))
        max_sum_dev = max(max_sum_dev, rep["abs_deviation"])
        max_ratio_dev = max(max_ratio_dev, abs(rep["ratio"] - rep["expected_ratio"]))

    return {
        "max_identity": {"triples": n_triples, "max_abs_deviation": max_identity_dev},
        "contrastive_sum": {
            "batches": n_batches,
            "max_abs_deviation": max_sum_dev,
            "max_ratio_deviation": max_ratio_dev,
        },
        "fig3": fig3_preference_demo(),
    }

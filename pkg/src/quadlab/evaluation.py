"""CMC evaluation under the single-shot protocol and distance-distribution stats.

The single-shot protocol: per trial, the gallery holds exactly one
randomly chosen gallery-camera sample per identity (identity order is a
fresh permutation each trial); every probe-camera sample queries the
gallery and the rank of its own identity is recorded. Rank-n accuracy is
the fraction of probes whose identity appears within the top n, averaged
over trials. Ties in distance are broken by gallery position (stable
sort), which is what makes a constant scorer come out at 1/N rank-1.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .model import ModelParams, pair_distances, score_pairs

EVAL_MODES = ("embed", "metric", "metric_symmetrized")
DEFAULT_TRIALS = 10
DEFAULT_HISTOGRAM_BINS = 20


@dataclass(frozen=True)
class CmcResult:
    rank_accuracy: np.ndarray  # (gallery_size,) accuracies at rank 1..N
    trials: int
    protocol: str

    @property
    def rank1(self) -> float:
        return float(self.rank_accuracy[0])

    def rank(self, n: int) -> float:
        return float(self.rank_accuracy[min(n, len(self.rank_accuracy)) - 1])


@dataclass(frozen=True)
class VariationStats:
    intra_mean: float
    inter_mean: float
    bin_edges: np.ndarray  # (bins + 1,)
    intra_counts: np.ndarray  # (bins,)
    inter_counts: np.ndarray
    n_intra: int
    n_inter: int
    normalized: bool  # True if distances were min-max rescaled into [0, 1]


def _score_block(params: ModelParams, probes: np.ndarray, gallery: np.ndarray, mode: str) -> np.ndarray:
    n_p, n_g = probes.shape[0], gallery.shape[0]
    pi = np.repeat(np.arange(n_p), n_g)
    gi = np.tile(np.arange(n_g), n_p)
    xp, xg = probes[pi], gallery[gi]
    if mode == "embed":
        d, _ = pair_distances(params, xp, xg)
    elif mode == "metric":
        d, _ = score_pairs(params, xp, xg)
    elif mode == "metric_symmetrized":
        fwd, _ = score_pairs(params, xp, xg)
        bwd, _ = score_pairs(params, xg, xp)
        d = 0.5 * (fwd + bwd)
    else:
        raise ValueError(f"mode must be one of {EVAL_MODES}, got {mode!r}")
    return d.reshape(n_p, n_g)


def distance_matrix(
    params: ModelParams, probes: np.ndarray, gallery: np.ndarray, mode: str = "metric"
) -> np.ndarray:
    """(p, g) model distance for every probe/gallery row combination."""
    probes = np.atleast_2d(np.asarray(probes, dtype=np.float64))
    gallery = np.atleast_2d(np.asarray(gallery, dtype=np.float64))
    if probes.shape[1] != gallery.shape[1]:
        raise ValueError(
            f"probe dim {probes.shape[1]} != gallery dim {gallery.shape[1]}"
        )
    return _score_block(params, probes, gallery, mode)


def cmc_single_shot(
    params: ModelParams,
    test_set: Dataset,
    trials: int = DEFAULT_TRIALS,
    rng: np.random.Generator | None = None,
    mode: str = "metric",
    seed: int = 0,
) -> CmcResult:
    """Single-shot CMC over randomly resampled galleries.

    The lowest camera id is the probe view, the next one the gallery
    view. Every identity must appear in both views. Deterministic per
    (params, test_set, seed/rng, mode).
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if rng is None:
        rng = np.random.Generator(np.random.PCG64(seed))
    cameras = test_set.cameras
    if len(cameras) < 2:
        raise ValueError(f"single-shot protocol needs >= 2 cameras, found {len(cameras)}")
    probe_cam, gallery_cam = int(cameras[0]), int(cameras[1])

    identities = test_set.identities
    n_ids = len(identities)
    gallery_pool: dict[int, np.ndarray] = {}
    for ident in identities:
        idx = test_set.indices_of_identity(int(ident))
        g_idx = idx[test_set.camera_ids[idx] == gallery_cam]
        if len(g_idx) == 0:
            raise ValueError(f"identity {int(ident)} has no sample in gallery camera {gallery_cam}")
        gallery_pool[int(ident)] = g_idx

    probe_mask = test_set.camera_ids == probe_cam
    probe_idx = np.where(probe_mask)[0]
    if len(probe_idx) == 0:
        raise ValueError(f"no samples in probe camera {probe_cam}")
    probe_X = test_set.features[probe_idx]
    probe_ids = test_set.person_ids[probe_idx]

    hits = np.zeros(n_ids, dtype=np.float64)  # hits[r] = probes with rank <= r+1
    total_probes = 0
    for _ in range(trials):
        order = rng.permutation(n_ids)
        gallery_ids = identities[order]
        chosen = np.array(
            [gallery_pool[int(ident)][rng.integers(len(gallery_pool[int(ident)]))] for ident in gallery_ids]
        )
        dmat = _score_block(params, probe_X, test_set.features[chosen], mode)
        ranking = np.argsort(dmat, axis=1, kind="stable")  # ascending distance
        ranked_ids = gallery_ids[ranking]
        match = ranked_ids == probe_ids[:, None]
        ranks = np.argmax(match, axis=1)  # 0-based rank of the correct identity
        for r in ranks:
            hits[r:] += 1.0
        total_probes += len(probe_idx)

    return CmcResult(
        rank_accuracy=hits / total_probes,
        trials=trials,
        protocol=f"single-shot, probe camera {probe_cam}, gallery camera {gallery_cam}",
    )


def variation_stats(
    params: ModelParams,
    dataset: Dataset,
    mode: str = "metric",
    bins: int = DEFAULT_HISTOGRAM_BINS,
) -> VariationStats:
    """Intra-/inter-identity distance distributions over all sample pairs.

    Distances already confined to [0, 1] (embed distances, softmax metric
    scores) are histogrammed as-is; scores from an unnormalized head are
    min-max rescaled into [0, 1] first so the histograms stay comparable.
    """
    n = len(dataset)
    if n < 2 or len(dataset.identities) < 2:
        raise ValueError("variation stats need >= 2 samples spanning >= 2 identities")
    iu, ju = np.triu_indices(n, k=1)
    if mode == "embed":
        d, _ = pair_distances(params, dataset.features[iu], dataset.features[ju])
    elif mode == "metric":
        d, _ = score_pairs(params, dataset.features[iu], dataset.features[ju])
    elif mode == "metric_symmetrized":
        fwd, _ = score_pairs(params, dataset.features[iu], dataset.features[ju])
        bwd, _ = score_pairs(params, dataset.features[ju], dataset.features[iu])
        d = 0.5 * (fwd + bwd)
    else:
        raise ValueError(f"mode must be one of {EVAL_MODES}, got {mode!r}")

    normalized = False
    if d.min() < 0.0 or d.max() > 1.0:
        span = d.max() - d.min()
        d = (d - d.min()) / (span if span > 0 else 1.0)
        normalized = True

    intra = d[dataset.person_ids[iu] == dataset.person_ids[ju]]
    inter = d[dataset.person_ids[iu] != dataset.person_ids[ju]]
    if len(intra) == 0 or len(inter) == 0:
        raise ValueError("need at least one intra-identity and one inter-identity pair")

    edges = np.linspace(0.0, 1.0, bins + 1)
    intra_counts, _ = np.histogram(intra, bins=edges)
    inter_counts, _ = np.histogram(inter, bins=edges)
    return VariationStats(
        intra_mean=float(intra.mean()),
        inter_mean=float(inter.mean()),
        bin_edges=edges,
        intra_counts=intra_counts,
        inter_counts=inter_counts,
        n_intra=int(len(intra)),
        n_inter=int(len(inter)),
        normalized=normalized,
    )


def write_cmc_csv(result: CmcResult, path: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["rank", "accuracy"])
        for r, acc in enumerate(result.rank_accuracy, start=1):
            writer.writerow([r, repr(float(acc))])


def write_variation_csv(stats: VariationStats, path: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin_low", "bin_high", "intra_count", "inter_count"])
        for b in range(len(stats.intra_counts)):
            writer.writerow(
                [
                    repr(float(stats.bin_edges[b])),
                    repr(float(stats.bin_edges[b + 1])),
                    int(stats.intra_counts[b]),
                    int(stats.inter_counts[b]),
                ]
            )

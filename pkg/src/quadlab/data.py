"""Synthetic identity datasets, feature-CSV ingestion, identity-disjoint splits.

A dataset is a flat table of feature vectors, each tagged with a person
identity and a camera identity. The ranking losses need every identity to
have at least two samples and the quadruplet constraints need at least
three distinct identities; those requirements are checked where they are
actually needed (batch sampling, splitting, synthesis), not at load time,
so arbitrary CSVs can still be inspected.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .numeric import make_rng

CSV_HEADER_PREFIX = ("person_id", "camera_id")


@dataclass(frozen=True)
class Sample:
    """One feature vector with its person and camera identity."""

    features: np.ndarray
    person_id: int
    camera_id: int


@dataclass
class Dataset:
    """Array-backed sample table; immutable by convention once built."""

    features: np.ndarray  # (n, d) float64
    person_ids: np.ndarray  # (n,) int64
    camera_ids: np.ndarray  # (n,) int64
    _by_identity: dict[int, np.ndarray] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.person_ids = np.asarray(self.person_ids, dtype=np.int64)
        self.camera_ids = np.asarray(self.camera_ids, dtype=np.int64)
        n = self.features.shape[0]
        if self.person_ids.shape != (n,) or self.camera_ids.shape != (n,):
            raise ValueError("features, person_ids and camera_ids disagree on length")
        if not np.all(np.isfinite(self.features)):
            raise ValueError("dataset features contain non-finite entries")

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def identities(self) -> np.ndarray:
        return np.unique(self.person_ids)

    @property
    def cameras(self) -> np.ndarray:
        return np.unique(self.camera_ids)

    def sample(self, i: int) -> Sample:
        return Sample(self.features[i], int(self.person_ids[i]), int(self.camera_ids[i]))

    def indices_of_identity(self, person_id: int) -> np.ndarray:
        if self._by_identity is None:
            by_id = {int(p): np.where(self.person_ids == p)[0] for p in self.identities}
            object.__setattr__(self, "_by_identity", by_id)
        return self._by_identity[int(person_id)]

    def subset(self, indices: np.ndarray) -> "Dataset":
        indices = np.asarray(indices)
        return Dataset(
            self.features[indices].copy(),
            self.person_ids[indices].copy(),
            self.camera_ids[indices].copy(),
        )

    def check_ranking_feasible(self) -> None:
        """Quadruplet sampling needs >= 3 identities, each with >= 2 samples."""
        ids, counts = np.unique(self.person_ids, return_counts=True)
        if len(ids) < 3:
            raise ValueError(f"need at least 3 identities, dataset has {len(ids)}")
        thin = ids[counts < 2]
        if thin.size:
            raise ValueError(
                f"every identity needs >= 2 samples; identities {thin.tolist()} do not"
            )


@dataclass(frozen=True)
class Split:
    """Identity-disjoint train/test partition."""

    train: Dataset
    test: Dataset


def synth_generate(
    num_ids: int,
    samples_per_id_per_camera: int,
    dim: int,
    intra_sigma: float,
    inter_spread: float,
    camera_shift_sigma: float,
    seed: int,
    num_cameras: int = 2,
) -> Dataset:
    """Clustered synthetic identities seen from several cameras.

    Each identity gets a center drawn uniformly from
    ``[-inter_spread, inter_spread]^dim``. Each sample is
    ``center + N(0, intra_sigma^2) + offset`` where the offset is drawn
    once per (identity, camera) from ``N(0, camera_shift_sigma^2)``, so a
    camera shifts all of an identity's samples in that view coherently.
    Deterministic per seed.
    """
    if num_ids < 3:
        raise ValueError(f"num_ids must be >= 3 to support quadruplets, got {num_ids}")
    if dim < 2:
        raise ValueError(f"dim must be >= 2, got {dim}")
    if samples_per_id_per_camera < 1:
        raise ValueError("samples_per_id_per_camera must be >= 1")
    if intra_sigma < 0 or camera_shift_sigma < 0 or inter_spread <= 0:
        raise ValueError("sigmas must be >= 0 and inter_spread > 0")
    if num_cameras < 1:
        raise ValueError("num_cameras must be >= 1")

    rng = make_rng(seed)
    n = num_ids * num_cameras * samples_per_id_per_camera
    features = np.empty((n, dim), dtype=np.float64)
    person_ids = np.empty(n, dtype=np.int64)
    camera_ids = np.empty(n, dtype=np.int64)

    row = 0
    for pid in range(num_ids):
        center = rng.uniform(-inter_spread, inter_spread, size=dim)
        for cam in range(num_cameras):
            offset = rng.normal(0.0, camera_shift_sigma, size=dim)
            for _ in range(samples_per_id_per_camera):
                noise = rng.normal(0.0, intra_sigma, size=dim)
                features[row] = center + noise + offset
                person_ids[row] = pid
                camera_ids[row] = cam
                row += 1
    return Dataset(features, person_ids, camera_ids)


def save_csv(dataset: Dataset, path: str) -> None:
    """Write ``person_id,camera_id,f0,...`` rows; floats use repr precision."""
    header = list(CSV_HEADER_PREFIX) + [f"f{i}" for i in range(dataset.dim)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(len(dataset)):
            row = [int(dataset.person_ids[i]), int(dataset.camera_ids[i])]
            row += [repr(float(v)) for v in dataset.features[i]]
            writer.writerow(row)


def load_csv(path: str) -> Dataset:
    """Load a feature CSV; dimension is inferred from the header.

    Raises ValueError naming the offending line for ragged rows,
    non-numeric features or an unknown header.
    """
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if tuple(header[:2]) != CSV_HEADER_PREFIX:
            raise ValueError(
                f"{path}: line 1: header must start with 'person_id,camera_id', "
                f"got {header[:2]}"
            )
        dim = len(header) - 2
        expected = list(CSV_HEADER_PREFIX) + [f"f{i}" for i in range(dim)]
        if header != expected:
            raise ValueError(f"{path}: line 1: feature columns must be f0..f{dim - 1}")

        features, person_ids, camera_ids = [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != dim + 2:
                raise ValueError(
                    f"{path}: line {lineno}: expected {dim + 2} fields, got {len(row)}"
                )
            try:
                person_ids.append(int(row[0]))
                camera_ids.append(int(row[1]))
                features.append([float(v) for v in row[2:]])
            except ValueError:
                raise ValueError(f"{path}: line {lineno}: non-numeric value") from None

    return Dataset(
        np.asarray(features, dtype=np.float64).reshape(len(features), dim),
        np.asarray(person_ids, dtype=np.int64),
        np.asarray(camera_ids, dtype=np.int64),
    )


def split_identities(dataset: Dataset, test_fraction: float, seed: int) -> Split:
    """Partition identities (not samples) into disjoint train/test sets.

    ``test_fraction`` of the identities (rounded) is held out. Both sides
    must end up with at least 3 identities so either can feed the
    quadruplet sampler. Deterministic per seed.
    """
    if not 0.0 < test_fraction < 1.0:
        raise ValueError(f"test_fraction must be in (0, 1), got {test_fraction}")
    identities = dataset.identities
    n_ids = len(identities)
    n_test = int(round(n_ids * test_fraction))
    if n_test < 3 or n_ids - n_test < 3:
        raise ValueError(
            f"split of {n_ids} identities at fraction {test_fraction} leaves "
            f"{n_ids - n_test}/{n_test} identities; both sides need >= 3"
        )
    rng = make_rng(seed)
    perm = rng.permutation(n_ids)
    test_ids = set(identities[perm[:n_test]].tolist())
    test_mask = np.isin(dataset.person_ids, list(test_ids))
    return Split(
        train=dataset.subset(np.where(~test_mask)[0]),
        test=dataset.subset(np.where(test_mask)[0]),
    )


def positive_pair_count(dataset: Dataset) -> int:
    """Number of unordered same-identity pairs; defines epoch length."""
    _, counts = np.unique(dataset.person_ids, return_counts=True)
    return int((counts * (counts - 1) // 2).sum())

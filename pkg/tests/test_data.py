import numpy as np
import pytest

from quadlab.data import (
    Dataset,
    load_csv,
    positive_pair_count,
    save_csv,
    split_identities,
    synth_generate,
)


def test_synth_degenerate_variance_collapses_identities():
    ds = synth_generate(3, 2, 4, intra_sigma=0.0, inter_spread=1.0,
                        camera_shift_sigma=0.0, seed=0)
    for ident in ds.identities:
        rows = ds.features[ds.indices_of_identity(int(ident))]
        assert np.max(np.abs(rows - rows[0])) == 0.0


def test_synth_too_few_identities():
    with pytest.raises(ValueError, match="num_ids"):
        synth_generate(2, 2, 4, 0.1, 1.0, 0.1, seed=0)


def test_synth_deterministic_per_seed():
    a = synth_generate(5, 3, 8, 0.2, 1.0, 0.1, seed=9)
    b = synth_generate(5, 3, 8, 0.2, 1.0, 0.1, seed=9)
    assert np.array_equal(a.features, b.features)
    assert np.array_equal(a.person_ids, b.person_ids)
    assert np.array_equal(a.camera_ids, b.camera_ids)


def test_synth_within_identity_variance_monte_carlo():
    # Estimator: half the mean squared per-coordinate difference over
    # same-identity cross-camera pairs, which targets intra^2 + camera^2.
    intra, cam = 0.3, 0.4
    ds = synth_generate(625, 4, 4, intra, 2.0, cam, seed=123)
    assert len(ds) == 625 * 2 * 4 >= 10_000 // 2
    sq_sum, count = 0.0, 0
    for ident in ds.identities:
        idx = ds.indices_of_identity(int(ident))
        cam_a = idx[ds.camera_ids[idx] == 0]
        cam_b = idx[ds.camera_ids[idx] == 1]
        for i in cam_a:
            for j in cam_b:
                diff = ds.features[i] - ds.features[j]
                sq_sum += float((diff**2).mean())
                count += 1
    estimate = 0.5 * sq_sum / count
    expected = intra**2 + cam**2
    assert abs(estimate - expected) / expected < 0.20


def test_csv_two_row_file(tmp_path):
    path = tmp_path / "tiny.csv"
    path.write_text("person_id,camera_id,f0,f1\n1,0,0.5,1.25\n1,1,-0.5,2.0\n")
    ds = load_csv(str(path))
    assert len(ds) == 2
    assert ds.dim == 2
    assert np.array_equal(ds.features, [[0.5, 1.25], [-0.5, 2.0]])


def test_csv_ragged_row_names_line(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("person_id,camera_id,f0,f1\n1,0,0.5,1.0\n2,1,0.25\n")
    with pytest.raises(ValueError, match="line 3"):
        load_csv(str(path))


def test_csv_non_numeric_names_line(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("person_id,camera_id,f0\n1,0,abc\n")
    with pytest.raises(ValueError, match="line 2"):
        load_csv(str(path))


def test_csv_unknown_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("id,camera,f0\n1,0,0.5\n")
    with pytest.raises(ValueError, match="header"):
        load_csv(str(path))


def test_csv_round_trip_exact(tmp_path):
    ds = synth_generate(4, 2, 5, 0.3, 1.5, 0.2, seed=3)
    path = tmp_path / "round.csv"
    save_csv(ds, str(path))
    back = load_csv(str(path))
    assert np.max(np.abs(back.features - ds.features)) < 1e-12
    assert np.array_equal(back.features, ds.features)  # repr round-trips exactly
    assert np.array_equal(back.person_ids, ds.person_ids)
    assert np.array_equal(back.camera_ids, ds.camera_ids)


def test_split_ten_identities_half():
    ds = synth_generate(10, 2, 4, 0.2, 1.0, 0.1, seed=0)
    split = split_identities(ds, 0.5, seed=1)
    assert len(split.train.identities) == 5
    assert len(split.test.identities) == 5


def test_split_viper_shape_632_identities():
    # two-view set of 632 persons divided into two equal parts
    ds = synth_generate(632, 1, 2, 0.1, 1.0, 0.05, seed=4)
    split = split_identities(ds, 0.5, seed=4)
    assert len(split.train.identities) == 316
    assert len(split.test.identities) == 316


def test_split_disjoint_and_exhaustive():
    ds = synth_generate(20, 2, 4, 0.2, 1.0, 0.1, seed=5)
    split = split_identities(ds, 0.3, seed=6)
    train_ids = set(split.train.identities.tolist())
    test_ids = set(split.test.identities.tolist())
    assert train_ids & test_ids == set()
    assert train_ids | test_ids == set(ds.identities.tolist())


def test_split_deterministic():
    ds = synth_generate(12, 2, 4, 0.2, 1.0, 0.1, seed=7)
    a = split_identities(ds, 0.5, seed=8)
    b = split_identities(ds, 0.5, seed=8)
    assert np.array_equal(a.test.person_ids, b.test.person_ids)
    assert np.array_equal(a.train.features, b.train.features)


def test_split_too_few_identities_for_fraction():
    ds = synth_generate(4, 2, 4, 0.2, 1.0, 0.1, seed=9)
    with pytest.raises(ValueError, match="both sides need"):
        split_identities(ds, 0.5, seed=0)


def test_ranking_feasibility_checks():
    ds = Dataset(
        features=np.zeros((4, 2)),
        person_ids=np.array([0, 0, 1, 1]),
        camera_ids=np.array([0, 1, 0, 1]),
    )
    with pytest.raises(ValueError, match="3 identities"):
        ds.check_ranking_feasible()
    thin = Dataset(
        features=np.zeros((5, 2)),
        person_ids=np.array([0, 0, 1, 1, 2]),
        camera_ids=np.array([0, 1, 0, 1, 0]),
    )
    with pytest.raises(ValueError, match=">= 2 samples"):
        thin.check_ranking_feasible()


def test_positive_pair_count():
    ds = Dataset(
        features=np.zeros((7, 2)),
        person_ids=np.array([0, 0, 0, 1, 1, 2, 2]),
        camera_ids=np.zeros(7, dtype=int),
    )
    assert positive_pair_count(ds) == 3 + 1 + 1

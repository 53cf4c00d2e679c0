import os

import numpy as np
import pytest

from cupdisc.data import (
    AUGMENT_OPS,
    DataError,
    DatasetManifest,
    FundusSample,
    augment,
    encode_mask,
    load_drishti,
    load_labelmap,
    load_rimone,
    load_sample,
    load_split,
    resize_sample,
    save_labelmap,
    split,
)
from cupdisc.metrics import evaluate_pair, structure_mask
from cupdisc.synthetic import make_disk_labels, phantom_sample, write_drishti_tree


# -- mask encoding ------------------------------------------------------------

def test_encode_mask_basic_regions():
    disc = np.zeros((8, 8))
    cup = np.zeros((8, 8))
    disc[2:6, 2:6] = 1.0
    cup[3:5, 3:5] = 1.0
    labels = encode_mask(disc, cup)
    assert labels[0, 0] == 0
    assert labels[2, 2] == 1
    assert labels[3, 3] == 2
    assert set(np.unique(labels)) == {0, 1, 2}


def test_encode_mask_cup_promotes_disc():
    disc = np.zeros((6, 6))
    cup = np.zeros((6, 6))
    cup[1:3, 1:3] = 1.0  # cup claimed where the disc map saw nothing
    labels = encode_mask(disc, cup)
    assert (labels[1:3, 1:3] == 2).all()
    assert structure_mask(labels, "cup").sum() == 4
    # nesting invariant: every cup pixel is also a disc pixel
    assert (structure_mask(labels, "cup") & ~structure_mask(labels, "disc")).sum() == 0


def test_encode_mask_threshold_is_inclusive():
    disc = np.full((2, 2), 0.5)
    cup = np.zeros((2, 2))
    assert (encode_mask(disc, cup, threshold=0.5) == 1).all()
    assert (encode_mask(disc, cup, threshold=0.50001) == 0).all()


def test_encode_mask_round_trip_to_structure_masks():
    rng = np.random.default_rng(3)
    disc = rng.random((16, 16))
    cup = rng.random((16, 16))
    labels = encode_mask(disc, cup, threshold=0.5)
    want_cup = cup >= 0.5
    want_disc = (disc >= 0.5) | want_cup
    assert np.array_equal(structure_mask(labels, "cup"), want_cup)
    assert np.array_equal(structure_mask(labels, "disc"), want_disc)


def test_encode_mask_rejects_bad_inputs():
    with pytest.raises(DataError):
        encode_mask(np.zeros((4, 4)), np.zeros((4, 5)))
    for bad in (0.0, 1.0, -0.2, 1.5):
        with pytest.raises(DataError):
            encode_mask(np.zeros((4, 4)), np.zeros((4, 4)), threshold=bad)


# -- resizing -----------------------------------------------------------------

def test_resize_keeps_label_alphabet():
    sample = phantom_sample(96, cup_ratio=0.6, seed=4)
    small = resize_sample(sample, 64)
    assert small.image.shape == (64, 64, 3)
    assert small.labels.shape == (64, 64)
    assert set(np.unique(small.labels)) <= {0, 1, 2}
    # nearest-neighbor labels keep the nesting invariant
    assert (structure_mask(small.labels, "cup") & ~structure_mask(small.labels, "disc")).sum() == 0


def test_resize_identity_and_validation():
    sample = phantom_sample(64, seed=1)
    assert resize_sample(sample, 64) is sample
    for bad in (0, -32, 50):
        with pytest.raises(DataError):
            resize_sample(sample, bad)


# -- splitting ----------------------------------------------------------------

def test_split_counts_and_partition(drishti_manifest):
    assigned = split(drishti_manifest, (0.5, 0.0, 0.5), seed=7)
    assert len(assigned.subset("train")) == 50
    assert len(assigned.subset("val")) == 0
    assert len(assigned.subset("test")) == 51
    ids = [r.id for r in assigned.records]
    assert sorted(ids) == sorted(drishti_manifest.ids())
    # every record lands in exactly one split
    assert all(r.split in ("train", "val", "test") for r in assigned.records)


def test_split_deterministic_and_seed_sensitive(drishti_manifest):
    a = split(drishti_manifest, (0.5, 0.0, 0.5), seed=7)
    b = split(drishti_manifest, (0.5, 0.0, 0.5), seed=7)
    c = split(drishti_manifest, (0.5, 0.0, 0.5), seed=8)
    assert [r.split for r in a.records] == [r.split for r in b.records]
    assert [r.split for r in a.records] != [r.split for r in c.records]


def test_split_stratifies_by_diagnosis(rimone_manifest):
    assigned = split(rimone_manifest, (0.7, 0.0, 0.3), seed=0)
    train = assigned.subset("train")
    # floor(74 * 0.7) = 51 glaucoma and floor(85 * 0.7) = 59 healthy
    assert sum(r.diagnosis == "glaucoma" for r in train) == 51
    assert sum(r.diagnosis == "healthy" for r in train) == 59
    assert len(assigned.subset("test")) == 74 + 85 - 51 - 59


def test_split_rejects_bad_ratios(drishti_manifest):
    for bad in ((0.9, 0.2, 0.1), (0.5, 0.5, 0.5), (1.0, -0.2, 0.2), (0.5, 0.5)):
        with pytest.raises(DataError):
            split(drishti_manifest, bad, seed=0)


# -- augmentation -------------------------------------------------------------

@pytest.mark.parametrize("op,period", [("hflip", 2), ("vflip", 2), ("rotate90", 4)])
def test_augment_ops_are_cyclic(op, period):
    sample = phantom_sample(64, seed=9)
    current = sample
    for i in range(1, period + 1):
        current = augment(current, {op})
        same = np.array_equal(current.labels, sample.labels) and np.array_equal(
            current.image, sample.image
        )
        assert same == (i == period)


def test_augment_unknown_op():
    sample = phantom_sample(64, seed=9)
    with pytest.raises(DataError):
        augment(sample, {"hflip", "shear"})


def test_augment_seeded_is_deterministic():
    sample = phantom_sample(64, seed=2)
    a = augment(sample, AUGMENT_OPS, seed=123)
    b = augment(sample, AUGMENT_OPS, seed=123)
    assert np.array_equal(a.image, b.image)
    assert np.array_equal(a.labels, b.labels)
    # over many seeds at least one draw must differ from the identity
    assert any(
        not np.array_equal(augment(sample, AUGMENT_OPS, seed=s).labels, sample.labels)
        for s in range(8)
    )


def test_metrics_invariant_under_joint_augmentation():
    truth = phantom_sample(64, cup_ratio=0.5, seed=5)
    pred_labels = make_disk_labels(64, 15.0, 0.6, center=(30.0, 34.0))
    pred = FundusSample(id="p", image=truth.image, labels=pred_labels, diagnosis="unknown")
    before = evaluate_pair(pred.labels, truth.labels)
    for op in AUGMENT_OPS:
        after = evaluate_pair(augment(pred, {op}).labels, augment(truth, {op}).labels)
        assert after == before


# -- manifest scanning and persistence ----------------------------------------

def test_load_drishti_fixture(drishti_manifest):
    assert drishti_manifest.source == "drishti"
    assert len(drishti_manifest) == 101
    ids = drishti_manifest.ids()
    assert ids == sorted(ids)
    counts = drishti_manifest.diagnosis_counts()
    assert counts["unknown"] == 101
    assert sum(counts.values()) == 101


def test_load_rimone_fixture(rimone_manifest):
    assert rimone_manifest.source == "rimone"
    assert len(rimone_manifest) == 159
    counts = rimone_manifest.diagnosis_counts()
    assert counts["glaucoma"] == 74
    assert counts["healthy"] == 85
    assert sum(counts.values()) == 159


def test_load_drishti_missing_gt_names_the_id(tmp_path):
    root = write_drishti_tree(tmp_path / "d", count=3, side=64, seed=0)
    os.remove(os.path.join(root, "gt", "drishti_002_cup_soft.png"))
    with pytest.raises(DataError, match="drishti_002"):
        load_drishti(root)


def test_load_drishti_rejects_missing_tree(tmp_path):
    with pytest.raises(DataError, match="dataset not found"):
        load_drishti(tmp_path / "nowhere")


def test_load_drishti_skips_unreadable_image(tmp_path):
    root = write_drishti_tree(tmp_path / "d", count=3, side=64, seed=0)
    with open(os.path.join(root, "images", "drishti_001.png"), "wb") as fh:
        fh.write(b"not a png at all")
    manifest = load_drishti(root)
    assert len(manifest) == 2
    assert [sid for sid, _ in manifest.skipped] == ["drishti_001"]


def test_load_rimone_skips_unreadable_image(tmp_path):
    from cupdisc.synthetic import write_rimone_tree

    root = write_rimone_tree(tmp_path / "r", glaucoma=2, healthy=2, side=64, seed=0)
    with open(os.path.join(root, "healthy", "rim_h_001.png"), "wb") as fh:
        fh.write(b"junk")
    manifest = load_rimone(root)
    assert len(manifest) == 3
    counts = manifest.diagnosis_counts()
    assert counts["glaucoma"] == 2 and counts["healthy"] == 1


def test_manifest_save_load_round_trip(tmp_path, rimone_manifest):
    assigned = split(rimone_manifest, (0.7, 0.1, 0.2), seed=3)
    path = tmp_path / "manifest.txt"
    assigned.save(path)
    loaded = DatasetManifest.load(path)
    assert loaded.source == assigned.source
    assert loaded.root == assigned.root
    assert loaded.seed == assigned.seed
    assert loaded.ratios == pytest.approx(assigned.ratios)
    assert loaded.records == assigned.records
    # root override rehomes a copied tree
    rehomed = DatasetManifest.load(path, root="/elsewhere")
    assert rehomed.root == "/elsewhere"


def test_manifest_unknown_id(drishti_manifest):
    with pytest.raises(DataError):
        drishti_manifest.record("no_such_id")


# -- sample materialization -----------------------------------------------------

def test_load_sample_matches_soft_maps(drishti_manifest):
    record = drishti_manifest.records[0]
    sample = load_sample(drishti_manifest, record)
    assert sample.id == record.id
    assert sample.image.dtype == np.uint8
    assert sample.labels.shape == sample.image.shape[:2]
    assert set(np.unique(sample.labels)) <= {0, 1, 2}
    # loading by id gives the same sample
    again = load_sample(drishti_manifest, record.id)
    assert np.array_equal(again.labels, sample.labels)


def test_load_sample_resizes(drishti_manifest):
    sample = load_sample(drishti_manifest, drishti_manifest.records[1], side=32)
    assert sample.image.shape == (32, 32, 3)
    assert sample.labels.shape == (32, 32)


def test_load_sample_cache(tmp_path, drishti_manifest):
    record = drishti_manifest.records[2]
    cache = tmp_path / "cache"
    first = load_sample(drishti_manifest, record, side=32, cache_dir=cache)
    files = list(cache.iterdir())
    assert len(files) == 1 and files[0].suffix == ".npz"
    second = load_sample(drishti_manifest, record, side=32, cache_dir=cache)
    assert np.array_equal(first.image, second.image)
    assert np.array_equal(first.labels, second.labels)
    # different geometry gets its own cache entry
    load_sample(drishti_manifest, record, side=64, cache_dir=cache)
    assert len(list(cache.iterdir())) == 2


def test_load_split_returns_assigned_records(drishti_manifest):
    assigned = split(drishti_manifest, (0.02, 0.0, 0.98), seed=1)
    samples = load_split(assigned, "train", side=32)
    assert len(samples) == len(assigned.subset("train")) == 2
    assert all(s.labels.shape == (32, 32) for s in samples)


# -- label map PNG round trip ---------------------------------------------------

def test_labelmap_png_round_trip(tmp_path):
    labels = make_disk_labels(48, 14.0, 0.55)
    path = tmp_path / "mask.png"
    save_labelmap(labels, path)
    assert np.array_equal(load_labelmap(path), labels)

"""Dataset container: format round-trips, grouped splits, balancing."""

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pidistill.data import (EmbeddingDataset, Record, SplitPlan,
                            balance_by_label, load_dataset, make_split,
                            split_hash, write_dataset)
from pidistill.errors import ConfigError, DataError, LoadError


def toy_dataset(n=12, d_image=4, d_text=3, n_classes=2, seed=0,
                samples_per_group=2, with_text=True):
    rng = np.random.default_rng(seed)
    records = []
    for i in range(n):
        records.append(Record(
            image=rng.standard_normal((int(rng.integers(1, 4)), d_image)),
            text=(rng.standard_normal((int(rng.integers(1, 3)), d_text))
                  if with_text else None),
            label=int(i % n_classes),
            group_id=f"subj{i // samples_per_group:04d}",
        ))
    return EmbeddingDataset(records, n_classes=n_classes,
                            has_cls={"image": False, "text": False},
                            provenance={"source": "unit-test"})


def single_group_dataset(n, n_classes=2, seed=0):
    rng = np.random.default_rng(seed)
    records = [Record(image=rng.standard_normal((1, 2)), text=None,
                      label=int(rng.integers(0, n_classes)),
                      group_id=f"g{i:06d}")
               for i in range(n)]
    return EmbeddingDataset(records, n_classes=n_classes)


class TestContainer:
    def test_rejects_empty(self):
        with pytest.raises(DataError, match="empty"):
            EmbeddingDataset([], n_classes=2)

    def test_rejects_bad_label(self):
        rec = Record(image=np.zeros((1, 2)), text=None, label=5, group_id="a")
        with pytest.raises(DataError, match="label"):
            EmbeddingDataset([rec], n_classes=2)

    def test_rejects_non_finite(self):
        rec = Record(image=np.array([[np.nan, 0.0]]), text=None, label=0,
                     group_id="a")
        with pytest.raises(DataError, match="non-finite"):
            EmbeddingDataset([rec], n_classes=2)

    def test_rejects_mixed_text_presence(self):
        recs = [
            Record(np.zeros((1, 2)), np.zeros((1, 3)), 0, "a"),
            Record(np.zeros((1, 2)), None, 1, "b"),
        ]
        with pytest.raises(DataError, match="text presence"):
            EmbeddingDataset(recs, n_classes=2)

    def test_rejects_inconsistent_width(self):
        recs = [
            Record(np.zeros((1, 2)), None, 0, "a"),
            Record(np.zeros((1, 3)), None, 1, "b"),
        ]
        with pytest.raises(DataError):
            EmbeddingDataset(recs, n_classes=2)

    def test_widens_to_float64(self):
        ds = toy_dataset()
        assert all(r.image.dtype == np.float64 for r in ds.records)
        assert all(r.text.dtype == np.float64 for r in ds.records)


class TestRoundTrip:
    def test_write_load_write_byte_identity(self, tmp_path):
        ds = toy_dataset(n=10)
        m1, b1 = tmp_path / "a.json", tmp_path / "a.bin"
        write_dataset(ds, m1, b1)
        loaded = load_dataset(m1, b1)
        m2, b2 = tmp_path / "b.json", tmp_path / "b.bin"
        write_dataset(loaded, m2, b2)
        assert m1.read_bytes() == m2.read_bytes()
        assert b1.read_bytes() == b2.read_bytes()

    def test_content_preserved(self, tmp_path):
        ds = toy_dataset(n=6)
        write_dataset(ds, tmp_path / "m.json", tmp_path / "b.bin")
        loaded = load_dataset(tmp_path / "m.json", tmp_path / "b.bin")
        assert loaded.n_classes == ds.n_classes
        assert loaded.d_image == ds.d_image and loaded.d_text == ds.d_text
        assert loaded.provenance == ds.provenance
        assert loaded.group_ids == ds.group_ids
        assert np.array_equal(loaded.labels, ds.labels)
        for a, b in zip(loaded.records, ds.records):
            # float32 storage: values round but shapes and order survive
            assert np.allclose(a.image, b.image, atol=1e-6)
            assert np.allclose(a.text, b.text, atol=1e-6)

    def test_no_text_round_trip(self, tmp_path):
        ds = toy_dataset(n=5, with_text=False)
        write_dataset(ds, tmp_path / "m.json", tmp_path / "b.bin")
        loaded = load_dataset(tmp_path / "m.json", tmp_path / "b.bin")
        assert loaded.d_text == 0
        assert not loaded.has_text
        assert all(r.text is None for r in loaded.records)

    def test_blob_is_little_endian_row_major_float32(self, tmp_path):
        rec = Record(image=np.array([[1.0, 2.0], [3.0, 4.0]]), text=None,
                     label=0, group_id="a")
        rec2 = Record(image=np.array([[5.0, 6.0]]), text=None, label=1,
                      group_id="b")
        ds = EmbeddingDataset([rec, rec2], n_classes=2)
        write_dataset(ds, tmp_path / "m.json", tmp_path / "b.bin")
        raw = np.frombuffer((tmp_path / "b.bin").read_bytes(), dtype="<f4")
        assert raw.tolist() == [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]
        manifest = json.loads((tmp_path / "m.json").read_text())
        assert manifest["records"][1]["image_offset"] == 4

    def test_refuses_nan_tokens(self, tmp_path):
        ds = toy_dataset(n=3)
        ds.records[1].image = ds.records[1].image.copy()
        ds.records[1].image[0, 0] = np.nan
        with pytest.raises(DataError, match="sample 1"):
            write_dataset(ds, tmp_path / "m.json", tmp_path / "b.bin")


class TestLoadErrors:
    @pytest.fixture()
    def stored(self, tmp_path):
        write_dataset(toy_dataset(n=4), tmp_path / "m.json", tmp_path / "b.bin")
        return tmp_path / "m.json", tmp_path / "b.bin"

    def edit(self, manifest_path, blob_path, mutate):
        manifest = json.loads(manifest_path.read_text())
        mutate(manifest)
        manifest_path.write_text(json.dumps(manifest, sort_keys=True, indent=2))
        return manifest_path, blob_path

    def test_version_mismatch(self, stored):
        m, b = self.edit(*stored, lambda d: d.update(format_version=99))
        with pytest.raises(LoadError, match="format_version"):
            load_dataset(m, b)

    def test_checksum_mismatch(self, stored):
        m, b = stored
        blob = bytearray(b.read_bytes())
        blob[0] ^= 0xFF
        b.write_bytes(bytes(blob))
        with pytest.raises(LoadError, match="checksum"):
            load_dataset(m, b)

    def test_truncated_blob(self, stored):
        m, b = stored
        b.write_bytes(b.read_bytes()[:8])
        with pytest.raises(LoadError):
            load_dataset(m, b)

    def test_offset_out_of_bounds(self, stored):
        def mutate(d):
            d["records"][2]["image_offset"] = 10 ** 9
        m, b = self.edit(*stored, mutate)
        # checksum still matches; the offset check itself must fire
        with pytest.raises(LoadError, match="sample 2"):
            load_dataset(m, b)

    def test_overlapping_segments(self, stored):
        def mutate(d):
            d["records"][1]["image_offset"] = d["records"][0]["image_offset"]
        m, b = self.edit(*stored, mutate)
        with pytest.raises(LoadError, match="overlapping"):
            load_dataset(m, b)

    def test_text_offsets_with_zero_d_text(self, stored):
        def mutate(d):
            d["d_text"] = 0
        m, b = self.edit(*stored, mutate)
        with pytest.raises(LoadError, match="d_text"):
            load_dataset(m, b)

    def test_empty_dataset(self, stored):
        def mutate(d):
            d["records"] = []
            d["n_samples"] = 0
        m, b = self.edit(*stored, mutate)
        with pytest.raises(LoadError, match="empty dataset"):
            load_dataset(m, b)

    def test_record_count_mismatch(self, stored):
        m, b = self.edit(*stored, lambda d: d.update(n_samples=7))
        with pytest.raises(LoadError, match="record count"):
            load_dataset(m, b)

    def test_garbage_manifest(self, tmp_path):
        p = tmp_path / "m.json"
        p.write_text("{not json")
        with pytest.raises(LoadError, match="parse"):
            load_dataset(p, tmp_path / "missing.bin")

    def test_non_finite_blob_values(self, stored):
        m, b = stored
        blob = bytearray(b.read_bytes())
        blob[0:4] = np.array([np.inf], dtype="<f4").tobytes()
        b.write_bytes(bytes(blob))
        manifest = json.loads(m.read_text())
        import hashlib
        manifest["checksum"]["value"] = hashlib.sha256(bytes(blob)).hexdigest()
        m.write_text(json.dumps(manifest, sort_keys=True, indent=2))
        with pytest.raises(LoadError, match="sample 0.*non-finite"):
            load_dataset(m, b)


class TestSplits:
    def test_disjoint_and_grouped(self):
        ds = toy_dataset(n=40, samples_per_group=4)
        plan = make_split(ds, seed=3, fraction=1.0)
        assert not set(plan.train) & set(plan.validation)
        gids = ds.group_ids
        train_groups = {gids[i] for i in plan.train}
        val_groups = {gids[i] for i in plan.validation}
        assert not train_groups & val_groups

    def test_full_fraction_takes_whole_pool(self):
        ds = toy_dataset(n=40, samples_per_group=4)
        plan = make_split(ds, seed=3, fraction=1.0)
        assert len(plan.train) + len(plan.validation) == len(ds)
        assert len(plan.train) == plan.pool_size

    def test_validation_stable_across_fractions(self):
        ds = toy_dataset(n=60, samples_per_group=3)
        plans = [make_split(ds, seed=9, fraction=f)
                 for f in (0.05, 0.1, 0.5, 1.0)]
        assert len({p.validation for p in plans}) == 1

    def test_nestedness(self):
        ds = toy_dataset(n=60, samples_per_group=3)
        prev: set = set()
        for f in (0.1, 0.3, 0.6, 1.0):
            cur = set(make_split(ds, seed=4, fraction=f).train)
            assert prev <= cur
            prev = cur

    def test_small_fraction_is_prefix(self):
        ds = toy_dataset(n=60, samples_per_group=3)
        big = make_split(ds, seed=4, fraction=1.0)
        small = make_split(ds, seed=4, fraction=0.2)
        assert small.train == big.train[: len(small.train)]

    def test_deterministic_and_seed_sensitive(self):
        ds = toy_dataset(n=40, samples_per_group=2)
        a = make_split(ds, seed=7, fraction=0.5)
        b = make_split(ds, seed=7, fraction=0.5)
        c = make_split(ds, seed=8, fraction=0.5)
        assert a == b
        assert a.train != c.train
        assert split_hash(a) == split_hash(b)
        assert split_hash(a) != split_hash(c)

    def test_table_row_five_percent_of_4220_pool(self):
        # 4689 single-sample groups, 10% validation -> 469 held out,
        # leaving a 4220 pool; 5% of it must be exactly 211
        ds = single_group_dataset(4689)
        plan = make_split(ds, seed=0, fraction=0.05, validation_share=0.1)
        assert plan.pool_size == 4220
        assert len(plan.train) == 211

    def test_zero_sample_fraction_rejected(self):
        ds = toy_dataset(n=12)
        with pytest.raises(ConfigError, match="yields 0"):
            make_split(ds, seed=0, fraction=1e-4)

    def test_bad_parameters_rejected(self):
        ds = toy_dataset(n=12)
        with pytest.raises(ConfigError):
            make_split(ds, seed=0, fraction=0.0)
        with pytest.raises(ConfigError):
            make_split(ds, seed=0, fraction=1.5)
        with pytest.raises(ConfigError):
            make_split(ds, seed=0, fraction=0.5, validation_share=0.0)

    def test_per_image_mode_splits_within_groups(self):
        ds = toy_dataset(n=30, samples_per_group=30)  # one giant group
        with pytest.raises(DataError):
            make_split(ds, seed=0, fraction=0.5)  # grouped: cannot split
        plan = make_split(ds, seed=0, fraction=0.5, per_image=True)
        assert len(plan.validation) >= 1
        assert not plan.grouped

    def test_overlap_rejected_at_construction(self):
        with pytest.raises(DataError):
            SplitPlan(seed=0, fraction=1.0, validation_share=0.1,
                      train=(1, 2), validation=(2, 3))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10 ** 6), st.sampled_from([0.05, 0.1, 0.25, 0.5, 1.0]))
def test_split_hygiene_property(seed, fraction):
    ds = toy_dataset(n=48, samples_per_group=3)
    plan = make_split(ds, seed=seed, fraction=fraction)
    gids = ds.group_ids
    assert not {gids[i] for i in plan.train} & {gids[i] for i in plan.validation}
    full = make_split(ds, seed=seed, fraction=1.0)
    assert set(plan.train) <= set(full.train)
    assert plan.validation == full.validation


class TestBalance:
    def test_counts_80_20(self):
        rng = np.random.default_rng(0)
        records = [Record(rng.standard_normal((1, 2)), None,
                          0 if i < 80 else 1, f"g{i}")
                   for i in range(100)]
        ds = EmbeddingDataset(records, n_classes=2)
        balanced = balance_by_label(ds, range(100), seed=1)
        labels = ds.labels[list(balanced)]
        assert len(balanced) == 40
        assert (labels == 0).sum() == 20 and (labels == 1).sum() == 20

    def test_already_balanced_is_identity_up_to_order(self):
        ds = toy_dataset(n=20, n_classes=2)
        balanced = balance_by_label(ds, range(20), seed=5)
        assert sorted(balanced) == list(range(20))

    def test_histogram_equal_across_seeds(self):
        rng = np.random.default_rng(2)
        records = [Record(rng.standard_normal((1, 2)), None,
                          0 if i < 30 else 1, f"g{i}")
                   for i in range(42)]
        ds = EmbeddingDataset(records, n_classes=2)
        for seed in range(100):
            balanced = balance_by_label(ds, range(42), seed=seed)
            labels = ds.labels[list(balanced)]
            assert (labels == 0).sum() == 12
            assert (labels == 1).sum() == 12

    def test_deterministic_per_seed(self):
        ds = toy_dataset(n=30)
        assert (balance_by_label(ds, range(30), seed=3)
                == balance_by_label(ds, range(30), seed=3))
        assert (balance_by_label(ds, range(30), seed=3)
                != balance_by_label(ds, range(30), seed=4))

    def test_multiclass_rejected(self):
        ds = toy_dataset(n=12, n_classes=3)
        with pytest.raises(ConfigError):
            balance_by_label(ds, range(12), seed=0)

    def test_single_class_pool_rejected(self):
        ds = toy_dataset(n=12, n_classes=2)
        only_zeros = [i for i in range(12) if ds.records[i].label == 0]
        with pytest.raises(DataError):
            balance_by_label(ds, only_zeros, seed=0)

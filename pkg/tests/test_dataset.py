import io
import json

import numpy as np
import pytest
from PIL import Image

from skullmatch.dataset import (
    AugmentationSpec,
    FoldPlan,
    ManifestRecord,
    augment,
    check_pairing,
    degrade_to_skull,
    estimate_alignment,
    gallery_records,
    labeled_pairs,
    load_manifest,
    plan_folds,
    plan_to_json,
    preprocess,
    probe_records,
    register,
    synth_paired,
    training_pairs,
    unlabeled_skulls,
    warp,
    write_corpus,
)
from skullmatch.errors import ArgumentError, DataError, ProtocolError


def png_bytes(arr, mode="L"):
    buf = io.BytesIO()
    Image.fromarray(arr, mode=mode).save(buf, format="PNG")
    return buf.getvalue()


def record(sample_id, subject_id, modality, labeled, **kw):
    return ManifestRecord(sample_id=sample_id, subject_id=subject_id,
                          modality=modality, path=f"{sample_id}.png",
                          labeled=labeled, **kw)


class TestManifestRecord:
    def test_bad_modality(self):
        with pytest.raises(DataError):
            record("a", "s", "xray", True)

    def test_nonbool_labeled(self):
        with pytest.raises(DataError):
            record("a", "s", "face", "yes")

    def test_empty_id(self):
        with pytest.raises(DataError):
            record("", "s", "face", True)


class TestPairing:
    def test_valid(self):
        recs = [record("f1", "s1", "face", True), record("k1", "s1", "skull", True)]
        check_pairing(recs)

    def test_dangling(self):
        with pytest.raises(DataError, match="dangling pair"):
            check_pairing([record("f1", "s1", "face", True)])

    def test_duplicate_side(self):
        recs = [record("f1", "s1", "face", True), record("f2", "s1", "face", True),
                record("k1", "s1", "skull", True)]
        with pytest.raises(DataError):
            check_pairing(recs)

    def test_unlabeled_exempt(self):
        check_pairing([record("k9", "u1", "skull", False)])

    def test_labeled_pairs_sorted(self):
        recs = [record("kb", "b", "skull", True), record("fb", "b", "face", True),
                record("fa", "a", "face", True), record("ka", "a", "skull", True)]
        pairs = labeled_pairs(recs)
        assert [f.subject_id for f, _ in pairs] == ["a", "b"]
        assert all(f.modality == "face" and s.modality == "skull" for f, s in pairs)


def write_manifest(tmp_path, entries, with_images=True):
    if with_images:
        for e in entries:
            img = np.zeros((8, 8), dtype=np.uint8)
            (tmp_path / e["path"]).write_bytes(png_bytes(img))
    path = tmp_path / "manifest.json"
    path.write_text(json.dumps(entries))
    return path


def entry(sample_id, subject_id, modality, labeled, **kw):
    return dict(sample_id=sample_id, subject_id=subject_id, modality=modality,
                path=f"{sample_id}.png", labeled=labeled, **kw)


class TestLoadManifest:
    def test_empty(self, tmp_path):
        assert load_manifest(write_manifest(tmp_path, [])) == []

    def test_basic(self, tmp_path):
        entries = [entry("f1", "s1", "face", True), entry("k1", "s1", "skull", True),
                   entry("u1", "x1", "skull", False)]
        recs = load_manifest(write_manifest(tmp_path, entries))
        assert [r.sample_id for r in recs] == ["f1", "k1", "u1"]
        assert recs[0].path.endswith("f1.png")

    def test_duplicate_sample_id(self, tmp_path):
        entries = [entry("f1", "s1", "face", False), entry("f1", "s2", "face", False)]
        with pytest.raises(DataError, match="duplicate sample_id"):
            load_manifest(write_manifest(tmp_path, entries))

    def test_dangling_pair(self, tmp_path):
        with pytest.raises(DataError, match="dangling pair"):
            load_manifest(write_manifest(tmp_path, [entry("f1", "s1", "face", True)]))

    def test_unknown_key(self, tmp_path):
        e = entry("f1", "s1", "face", False)
        e["color"] = "red"
        with pytest.raises(DataError, match="unknown keys"):
            load_manifest(write_manifest(tmp_path, [e]))

    def test_missing_key(self, tmp_path):
        e = entry("f1", "s1", "face", False)
        del e["modality"]
        with pytest.raises(DataError, match="missing keys"):
            load_manifest(write_manifest(tmp_path, [e]))

    def test_missing_image(self, tmp_path):
        path = write_manifest(tmp_path, [entry("f1", "s1", "face", False)],
                              with_images=False)
        with pytest.raises(DataError, match="missing image file"):
            load_manifest(path)

    def test_not_json(self, tmp_path):
        path = tmp_path / "manifest.json"
        path.write_text("nope[")
        with pytest.raises(DataError):
            load_manifest(path)

    def test_extended_gallery_flag(self, tmp_path):
        entries = [entry("g1", "d1", "face", False, extended_gallery=True)]
        recs = load_manifest(write_manifest(tmp_path, entries))
        assert recs[0].extended_gallery is True


class TestPreprocess:
    def test_grayscale_pass_through(self):
        rng = np.random.default_rng(0)
        raw = rng.integers(0, 256, size=(64, 64), dtype=np.uint8)
        out = preprocess(png_bytes(raw))
        assert np.array_equal(out, raw.astype(np.float64) / 255.0)

    def test_center_crop(self):
        raw = np.zeros((128, 64), dtype=np.uint8)
        raw[32:96, :] = 200
        out = preprocess(png_bytes(raw))
        # central 64x64 region is the uniform 200 band
        assert np.all(out == 200 / 255.0)

    def test_white_rgb(self):
        raw = np.full((64, 64, 3), 255, dtype=np.uint8)
        assert np.all(preprocess(png_bytes(raw, mode="RGB")) == 1.0)

    def test_luma_weights(self):
        raw = np.zeros((64, 64, 3), dtype=np.uint8)
        raw[..., 0] = 255
        out = preprocess(png_bytes(raw, mode="RGB"))
        assert np.allclose(out, 0.299, atol=1e-12)

    def test_resize_shape(self):
        raw = np.random.default_rng(1).integers(0, 256, (100, 90), dtype=np.uint8)
        assert preprocess(png_bytes(raw)).shape == (64, 64)

    def test_undecodable(self):
        with pytest.raises(DataError):
            preprocess(b"not an image at all")


class TestWarp:
    def test_integer_shift_moves_content(self):
        img = np.zeros((8, 8))
        img[2, 3] = 1.0
        out = warp(img, 3, -2)
        assert out[5, 1] == 1.0
        assert out[2, 3] == 0.0

    def test_replicate_border(self):
        img = np.arange(16, dtype=np.float64).reshape(4, 4) / 15.0
        out = warp(img, 2, 0)
        assert np.array_equal(out[0], img[0])
        assert np.array_equal(out[1], img[0])

    def test_identity(self):
        img = np.random.default_rng(2).random((10, 10))
        assert np.array_equal(warp(img, 0, 0), img)


@pytest.fixture(scope="module")
def face():
    _, images = synth_paired(5, 0.0, seed=3)
    return images["face_s000"]


class TestEstimateAlignment:

    def test_self_identity(self, face):
        dy, dx, s, ncc = estimate_alignment(face, face, 3)
        assert (dy, dx, s) == (0, 0, 1.0)
        assert ncc == pytest.approx(1.0, abs=1e-12)

    def test_shift_recovery(self, face):
        shifted = warp(face, 3, -2)
        dy, dx, s, _ = estimate_alignment(shifted, face, max_shift=5)
        assert abs(dy - (-3)) <= 1 and abs(dx - 2) <= 1

    def test_scale_recovery(self, face):
        enlarged = warp(face, 0.0, 0.0, 1.05)
        dy, dx, s, _ = estimate_alignment(enlarged, face, max_shift=1,
                                          scales=(0.95, 1.0, 1.05))
        assert s == 0.95

    def test_constant_guard(self, face):
        dy, dx, s, _ = estimate_alignment(np.full((64, 64), 0.5), face, 2)
        assert (dy, dx, s) == (0, 0, 1.0)

    def test_register_never_worse(self, face):
        rng = np.random.default_rng(4)
        noisy = np.clip(warp(face, 2, 1) + 0.05 * rng.standard_normal(face.shape), 0, 1)
        def ncc(a, b):
            a = a - a.mean(); b = b - b.mean()
            return float(np.sum(a * b) / (np.linalg.norm(a) * np.linalg.norm(b)))
        out = register(noisy, face, max_shift=3)
        assert ncc(out, face) >= ncc(noisy, face) - 1e-12

    def test_max_shift_bound(self, face):
        with pytest.raises(ArgumentError):
            estimate_alignment(face, face, max_shift=9)

    def test_scale_bound(self, face):
        with pytest.raises(ArgumentError):
            estimate_alignment(face, face, 2, scales=(1.2,))


class TestAugment:
    def test_count_and_order(self):
        img = np.random.default_rng(5).random((16, 16))
        out = augment([img], AugmentationSpec(flip_y=True, brightness_factors=(0.8, 1.2)))
        assert len(out) == 6
        assert np.array_equal(out[0], img)
        assert np.array_equal(out[1], img[:, ::-1])
        assert np.array_equal(out[2], np.clip(img * 0.8, 0, 1))
        assert np.array_equal(out[3], np.clip(img * 1.2, 0, 1))
        assert np.array_equal(out[4], np.clip(img[:, ::-1] * 0.8, 0, 1))
        assert np.array_equal(out[5], np.clip(img[:, ::-1] * 1.2, 0, 1))

    def test_flip_involution(self):
        img = np.random.default_rng(6).random((8, 8))
        out = augment([img], AugmentationSpec(flip_y=True, brightness_factors=()))
        assert np.array_equal(out[1][:, ::-1], out[0])

    def test_unit_factor_is_identity(self):
        img = np.random.default_rng(7).random((8, 8))
        out = augment([img], AugmentationSpec(flip_y=False, brightness_factors=(1.0,)))
        assert len(out) == 2
        assert np.array_equal(out[1], img)

    def test_multiplicity(self):
        assert AugmentationSpec(True, (0.8, 1.2)).multiplicity == 6
        assert AugmentationSpec(False, (0.9,)).multiplicity == 2

    def test_negative_factor_rejected(self):
        with pytest.raises(ArgumentError):
            AugmentationSpec(brightness_factors=(-0.5,))


def paired_records(n):
    recs = []
    for i in range(n):
        recs.append(record(f"f{i}", f"s{i:03d}", "face", True))
        recs.append(record(f"k{i}", f"s{i:03d}", "skull", True))
    return recs


class TestPlanFolds:
    def test_thirty_five_subjects_p1(self):
        plan = plan_folds(paired_records(35), "P1", seed=0)
        assert [len(f) for f in plan.folds] == [7, 7, 7, 7, 7]
        all_subjects = sorted(s for f in plan.folds for s in f)
        assert all_subjects == [f"s{i:03d}" for i in range(35)]

    def test_deterministic(self):
        a = plan_folds(paired_records(35), "P1", seed=9)
        b = plan_folds(paired_records(35), "P1", seed=9)
        assert a.folds == b.folds

    def test_seed_changes_membership(self):
        a = plan_folds(paired_records(35), "P1", seed=0)
        b = plan_folds(paired_records(35), "P1", seed=1)
        assert [len(f) for f in a.folds] == [len(f) for f in b.folds]
        assert a.folds != b.folds

    def test_too_few_subjects(self):
        with pytest.raises(ArgumentError):
            plan_folds(paired_records(4), "P1", seed=0)

    def test_p2_needs_flags(self):
        with pytest.raises(ProtocolError):
            plan_folds(paired_records(10), "P2", seed=0)

    def test_p2_gallery_and_probes(self):
        recs = paired_records(10)
        for j in range(13):
            recs.append(record(f"g{j}", f"d{j:03d}", "face", False,
                               extended_gallery=True))
        plan = plan_folds(recs, "P2", seed=0)
        g = gallery_records(plan, recs, 0)
        p = probe_records(plan, recs, 0)
        assert len(g) == 2 + 13
        assert len(p) == 2
        assert all(r.modality == "face" for r in g)
        assert all(r.modality == "skull" for r in p)

    def test_no_leakage(self):
        recs = paired_records(20)
        plan = plan_folds(recs, "P1", seed=2)
        for i in range(5):
            held = set(plan.folds[i])
            train = training_pairs(plan, recs, i)
            assert len(train) == 16
            assert all(f.subject_id not in held for f, _ in train)

    def test_folds_disjoint_enforced(self):
        with pytest.raises(ArgumentError):
            FoldPlan("P1", (("a",), ("a",)), (), 0)


class TestPlanJson:
    def test_structure(self):
        recs = paired_records(10)
        plan = plan_folds(recs, "P1", seed=1)
        payload = json.loads(plan_to_json(plan, recs))
        assert payload["protocol"] == "P1"
        assert payload["seed"] == 1
        assert len(payload["folds"]) == 5
        assert len(payload["fold_details"]) == 5
        d0 = payload["fold_details"][0]
        assert len(d0["gallery"]) == len(d0["probes"]) == 2

    def test_deterministic_text(self):
        recs = paired_records(10)
        plan = plan_folds(recs, "P1", seed=1)
        assert plan_to_json(plan, recs) == plan_to_json(plan, recs)


class TestSynthPaired:
    def test_counts(self):
        records, images = synth_paired(5, 0.05, seed=0)
        assert len(records) == 5 * 2 + 10
        assert len(images) == len(records)
        assert len(labeled_pairs(records)) == 5
        assert len(unlabeled_skulls(records)) == 10

    def test_distractors_flagged(self):
        records, _ = synth_paired(5, 0.05, seed=0, n_distractors=4)
        flagged = [r for r in records if r.extended_gallery]
        assert len(flagged) == 4
        assert all(r.modality == "face" and not r.labeled for r in flagged)

    def test_same_seed_bit_identical(self):
        r1, i1 = synth_paired(6, 0.05, seed=11)
        r2, i2 = synth_paired(6, 0.05, seed=11)
        assert r1 == r2
        assert all(np.array_equal(i1[k], i2[k]) for k in i1)

    def test_images_in_range(self):
        _, images = synth_paired(5, 0.3, seed=2)
        for img in images.values():
            assert img.shape == (64, 64)
            assert img.min() >= 0.0 and img.max() <= 1.0

    def test_too_few_subjects(self):
        with pytest.raises(ArgumentError):
            synth_paired(3, 0.05, seed=0)

    def test_degrade_deterministic(self):
        _, images = synth_paired(5, 0.0, seed=4)
        face = images["face_s000"]
        assert np.array_equal(degrade_to_skull(face), degrade_to_skull(face))


class TestWriteCorpus:
    def test_round_trip(self, tmp_path):
        records, images = synth_paired(5, 0.05, seed=8, n_distractors=3)
        manifest = write_corpus(tmp_path, records, images)
        back = load_manifest(manifest)
        assert [r.sample_id for r in back] == [r.sample_id for r in records]
        assert sum(r.extended_gallery for r in back) == 3

    def test_quantization_bound(self, tmp_path):
        records, images = synth_paired(5, 0.05, seed=9)
        manifest = write_corpus(tmp_path, records, images)
        back = load_manifest(manifest)
        img = preprocess(back[0].path)
        assert np.abs(img - images[back[0].sample_id]).max() <= 0.5 / 255.0 + 1e-12

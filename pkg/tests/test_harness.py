import dataclasses
import json

import numpy as np
import pytest

from calikd import harness
from calikd.errors import DegenerateSeriesError, InvalidInputError
from calikd.harness import (
    RECORDS_HEADER,
    ExperimentRecord,
    SyntheticSpec,
    TeacherSpec,
    checkpoint_name,
    gen_dataset,
    run_calibrator_comparison,
    run_correlation_study,
    run_teacher_zoo,
    run_temperature_ablation,
)
from calikd.metrics import full_report
from calikd.nn import TrainConfig, load_checkpoint, model_probs


def tiny_train(epochs=6, seed=50, lr0=0.1, wd=0.0, mixup=0.0):
    return {"epochs": epochs, "batch_size": 32, "lr0": lr0, "lr_decay_epochs": [],
            "lr_decay_factor": 0.1, "momentum": 0.9, "weight_decay": wd,
            "seed": seed, "mixup_alpha": mixup}


def tiny_manifest():
    return {
        "dataset": {"n_train": 300, "n_val": 80, "n_test": 120, "d": 6, "k": 3,
                    "class_separation": 4.0, "label_noise": 0.1, "seed": 3},
        "zoo": [
            {"teacher_id": "a", "hidden": [16], "train": tiny_train(8, 50)},
            {"teacher_id": "b", "hidden": [8, 8], "train": tiny_train(8, 51)},
            {"teacher_id": "c", "hidden": [12], "train": tiny_train(4, 52)},
        ],
        "student": {"hidden": [6], "train": tiny_train(5, 0)},
        "kd": {"lambda": 0.9, "t_kd": 1.0, "t_cal": 1.5, "scale_kd_by_t_squared": True},
        "calibrators": [{"kind": "none"}, {"kind": "fixed_temperature", "t": 1.0}],
        "t_cal_grid": [1.0, 2.0],
        "ablation_teacher": "a",
        "comparison_teachers": ["a"],
        "seeds": [0, 1],
        "ablation_seeds": [0, 1],
        "m_bins": 10,
        "r_bins": 10,
    }


def test_gen_dataset_is_deterministic():
    spec = SyntheticSpec(n_train=100, n_val=30, n_test=50, d=4, k=3,
                         class_separation=3.0, label_noise=0.2, seed=11)
    d1, d2 = gen_dataset(spec), gen_dataset(spec)
    np.testing.assert_array_equal(d1.features, d2.features)
    np.testing.assert_array_equal(d1.labels, d2.labels)


def test_gen_dataset_separated_clusters_are_easy():
    spec = SyntheticSpec(n_train=500, n_val=100, n_test=400, d=8, k=4,
                         class_separation=10.0, label_noise=0.0, seed=5)
    ds = gen_dataset(spec)
    x_train, y_train = ds.split("train")
    x_test, y_test = ds.split("test")
    centroids = np.stack([x_train[y_train == c].mean(axis=0) for c in range(4)])
    d2 = ((x_test[:, None, :] - centroids[None]) ** 2).sum(axis=-1)
    assert np.mean(d2.argmin(axis=1) == y_test) >= 0.99


def test_gen_dataset_label_noise_rate():
    spec = SyntheticSpec(n_train=5000, n_val=10, n_test=10, d=4, k=5,
                         class_separation=3.0, label_noise=0.2, seed=9)
    noisy = gen_dataset(spec)
    clean = gen_dataset(dataclasses.replace(spec, label_noise=0.0))
    train_idx = noisy.splits["train"]
    flip_rate = np.mean(noisy.labels[train_idx] != clean.labels[train_idx])
    assert abs(flip_rate - 0.2) <= 0.02
    for name in ("val", "test"):
        idx = noisy.splits[name]
        np.testing.assert_array_equal(noisy.labels[idx], clean.labels[idx])


def test_gen_dataset_splits_cover_everything():
    spec = SyntheticSpec(n_train=40, n_val=10, n_test=20, d=3, k=2,
                         class_separation=2.0, label_noise=0.0, seed=1)
    ds = gen_dataset(spec)
    all_idx = np.concatenate([ds.splits[s] for s in ("train", "val", "test")])
    assert len(np.unique(all_idx)) == 70 == len(ds.labels)


def test_duplicate_zoo_entries_give_identical_reports():
    manifest = tiny_manifest()
    ds = gen_dataset(SyntheticSpec.from_json_dict(manifest["dataset"]))
    spec = TeacherSpec.from_json_dict(manifest["zoo"][0])
    twin = TeacherSpec("twin", spec.hidden, spec.train)
    results = run_teacher_zoo(ds, [spec, twin])
    assert results[0].report == dataclasses.replace(results[1].report)


def test_zoo_records_failures_and_continues():
    manifest = tiny_manifest()
    ds = gen_dataset(SyntheticSpec.from_json_dict(manifest["dataset"]))
    bad = TeacherSpec("bad", (8,), TrainConfig.from_json_dict(tiny_train(5, 1, lr0=1e150)))
    good = TeacherSpec.from_json_dict(manifest["zoo"][0])
    with np.errstate(over="ignore"):
        results = run_teacher_zoo(ds, [bad, good])
    assert results[0].model is None and results[0].error
    assert results[1].model is not None


def test_correlation_study_record_count_and_determinism(tmp_path):
    manifest = tiny_manifest()
    out1, out2 = tmp_path / "run1", tmp_path / "run2"
    r1 = harness.run_correlation_from_manifest(manifest, out1)
    r2 = harness.run_correlation_from_manifest(manifest, out2)
    assert len(r1["records"]) == len(manifest["zoo"]) * len(manifest["seeds"])
    assert (out1 / "records.csv").read_bytes() == (out2 / "records.csv").read_bytes()
    assert (out1 / "summary.json").read_bytes() == (out2 / "summary.json").read_bytes()


def test_parallel_execution_matches_serial(tmp_path, monkeypatch):
    manifest = tiny_manifest()
    monkeypatch.setenv("CALIKD_THREADS", "1")
    harness.run_correlation_from_manifest(manifest, tmp_path / "serial")
    monkeypatch.setenv("CALIKD_THREADS", "3")
    harness.run_correlation_from_manifest(manifest, tmp_path / "parallel")
    assert ((tmp_path / "serial" / "records.csv").read_bytes()
            == (tmp_path / "parallel" / "records.csv").read_bytes())


def test_records_match_persisted_student_checkpoints(tmp_path):
    manifest = tiny_manifest()
    out = tmp_path / "run"
    result = harness.run_correlation_from_manifest(manifest, out)
    _, ds = harness.manifest_dataset(manifest)
    x_test, y_test = ds.split("test")
    for record in result["records"]:
        path = out / "checkpoints" / checkpoint_name(
            record.teacher_id, record.calibrator, record.seed)
        student = load_checkpoint(path)
        report = full_report(model_probs(student, x_test), y_test,
                             manifest["m_bins"], manifest["r_bins"])
        assert abs(report.accuracy - record.student_accuracy) <= 1e-12
        assert abs(report.ace - record.student_ace) <= 1e-12
        assert abs(report.ece_over - record.student_ece_over) <= 1e-12
        assert abs(report.ece_under - record.student_ece_under) <= 1e-12


def test_identical_teachers_trigger_degenerate_path():
    manifest = tiny_manifest()
    ds = gen_dataset(SyntheticSpec.from_json_dict(manifest["dataset"]))
    spec = TeacherSpec.from_json_dict(manifest["zoo"][0])
    clones = [TeacherSpec(f"c{i}", spec.hidden, spec.train) for i in range(3)]
    teachers = run_teacher_zoo(ds, clones)
    hidden, student_train = harness.manifest_student(manifest)
    result = run_correlation_study(ds, teachers, hidden, student_train,
                                   harness.manifest_kd(manifest), seeds=[0])
    summary = result["summary"]
    assert summary["r2_acc"] is None and summary["r2_ace"] is None
    assert summary["spearman_ace"] is None
    assert summary["notes"]


def test_temperature_ablation_shape_and_baseline_requirement(tmp_path):
    manifest = tiny_manifest()
    result = harness.run_temperature_from_manifest(manifest, tmp_path / "temp")
    assert len(result["rows"]) == len(manifest["t_cal_grid"])
    assert (tmp_path / "temp" / "ablation.csv").read_text().count("\n") == 3
    bad = dict(manifest, t_cal_grid=[1.5, 2.0])
    with pytest.raises(InvalidInputError):
        harness.run_temperature_from_manifest(bad)


def test_ablation_with_unit_grid_reduces_to_baseline_distillation():
    manifest = tiny_manifest()
    ds = gen_dataset(SyntheticSpec.from_json_dict(manifest["dataset"]))
    teacher = run_teacher_zoo(ds, [TeacherSpec.from_json_dict(manifest["zoo"][0])])[0]
    hidden, student_train = harness.manifest_student(manifest)
    kd_cfg = harness.manifest_kd(manifest)
    ablation = run_temperature_ablation(ds, teacher, hidden, student_train, kd_cfg,
                                        t_cal_grid=[1.0], seeds=[0, 1])
    baseline = run_correlation_study(ds, [teacher], hidden, student_train, kd_cfg,
                                     seeds=[0, 1])
    assert len(ablation["rows"]) == 1
    for abl_rec, base_rec in zip(ablation["records"], baseline["records"]):
        assert abl_rec.student_accuracy == base_rec.student_accuracy
        assert abl_rec.student_ece_over == base_rec.student_ece_over
        assert abl_rec.student_ace == base_rec.student_ace


def test_comparison_none_rows_equal_correlation_rows():
    manifest = tiny_manifest()
    ds = gen_dataset(SyntheticSpec.from_json_dict(manifest["dataset"]))
    teacher = run_teacher_zoo(ds, [TeacherSpec.from_json_dict(manifest["zoo"][0])])[0]
    hidden, student_train = harness.manifest_student(manifest)
    kd_cfg = harness.manifest_kd(manifest)
    comparison = run_calibrator_comparison(ds, [teacher], [{"kind": "none"}],
                                           hidden, student_train, kd_cfg, seeds=[0, 1])
    correlation = run_correlation_study(ds, [teacher], hidden, student_train, kd_cfg,
                                        seeds=[0, 1])
    for cmp_rec, corr_rec in zip(comparison["records"], correlation["records"]):
        assert cmp_rec.teacher_id == corr_rec.teacher_id
        assert cmp_rec.seed == corr_rec.seed
        assert cmp_rec.student_accuracy == corr_rec.student_accuracy
        assert cmp_rec.student_ace == corr_rec.student_ace


def test_unit_fixed_temperature_rows_match_none_rows(tmp_path):
    manifest = tiny_manifest()
    result = harness.run_calibrators_from_manifest(manifest, tmp_path / "cal")
    by_calibrator = {}
    for record in result["records"]:
        by_calibrator.setdefault(record.calibrator, []).append(record)
    for none_rec, unit_rec in zip(by_calibrator["none"], by_calibrator["fixed_t=1"]):
        assert none_rec.student_accuracy == unit_rec.student_accuracy
        assert none_rec.student_ace == unit_rec.student_ace
        assert none_rec.student_ece_over == unit_rec.student_ece_over
        assert none_rec.seed == unit_rec.seed


def test_calibrator_comparison_covers_all_kinds(tmp_path):
    manifest = tiny_manifest()
    manifest["calibrators"] = [
        {"kind": "none"},
        {"kind": "fixed_temperature", "t": 1.5},
        {"kind": "fitted_temperature"},
        {"kind": "vector_scaling", "steps": 100},
        {"kind": "mixup_teacher", "alpha": 0.2},
    ]
    result = harness.run_calibrators_from_manifest(manifest, tmp_path / "cal")
    descs = {r.calibrator for r in result["records"]}
    assert "none" in descs and "fixed_t=1.5" in descs
    assert any(d.startswith("fitted_t=") for d in descs)
    assert "vector_scaling" in descs and "mixup_a=0.2" in descs
    assert len(result["records"]) == 5 * len(manifest["seeds"])


def test_fitted_temperature_improves_overconfident_teacher_nll():
    spec = SyntheticSpec(n_train=1500, n_val=400, n_test=400, d=8, k=4,
                         class_separation=3.0, label_noise=0.1, seed=4)
    ds = gen_dataset(spec)
    overfit = TeacherSpec("over", (64, 64), TrainConfig.from_json_dict(
        tiny_train(60, 2, lr0=0.05)))
    teacher = run_teacher_zoo(ds, [overfit])[0]
    report = harness.evaluate_model(teacher.model, ds, "test")
    assert report.ece_over > report.ece_under  # standard training overfits confident
    calibrator = harness.fit_teacher_calibrator(teacher.model, ds,
                                                {"kind": "fitted_temperature"})
    assert calibrator.fit_metadata["nll_after"] < calibrator.fit_metadata["nll_before"]
    assert calibrator.t > 1.0


def test_records_csv_header_has_no_wall_time():
    assert "wall_time" not in RECORDS_HEADER
    fields = [f.name for f in dataclasses.fields(ExperimentRecord)]
    assert "wall_time" in fields
    assert list(RECORDS_HEADER) == fields[:-1]


def test_teacher_zoo_persists_checkpoints(tmp_path):
    manifest = tiny_manifest()
    ds = gen_dataset(SyntheticSpec.from_json_dict(manifest["dataset"]))
    run_teacher_zoo(ds, harness.manifest_zoo(manifest), out_dir=tmp_path)
    for spec in manifest["zoo"]:
        ckpt = tmp_path / "checkpoints" / f"teacher_{spec['teacher_id']}.json"
        report = tmp_path / "checkpoints" / f"teacher_{spec['teacher_id']}_report.json"
        assert ckpt.is_file() and report.is_file()
        payload = json.loads(report.read_text())
        assert set(payload) == {"ece", "ece_over", "ece_under", "ace", "accuracy",
                                "nll", "n", "k", "m_bins", "r_bins"}


def test_manifest_rejects_unknown_ablation_teacher():
    manifest = tiny_manifest()
    manifest["ablation_teacher"] = "nope"
    with pytest.raises(InvalidInputError):
        harness.run_temperature_from_manifest(manifest)


def test_dataset_json_roundtrip():
    spec = SyntheticSpec(n_train=50, n_val=20, n_test=30, d=4, k=3,
                         class_separation=3.0, label_noise=0.1, seed=2)
    ds = gen_dataset(spec)
    loaded = harness.dataset_from_json_dict(
        json.loads(json.dumps(harness.dataset_to_json_dict(ds, spec))))
    np.testing.assert_array_equal(loaded.features, ds.features)
    np.testing.assert_array_equal(loaded.labels, ds.labels)
    assert loaded.n_classes == ds.n_classes


def test_default_manifest_shape():
    manifest = harness.default_manifest()
    assert len(manifest["zoo"]) >= 10
    assert manifest["kd"]["lambda"] == 0.9
    assert manifest["t_cal_grid"][0] == 1.0
    ids = [t["teacher_id"] for t in manifest["zoo"]]
    assert manifest["ablation_teacher"] in ids
    assert all(t in ids for t in manifest["comparison_teachers"])

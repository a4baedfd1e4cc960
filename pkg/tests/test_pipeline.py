"""Stage orchestration on the tiny cohort: files in, files out."""

import csv
import json

import numpy as np
import pytest

from ngage import pipeline
from ngage.config import load_config
from ngage.core import load_schedule_and_surveys
from ngage.errors import ValidationError
from ngage.features import TARGETS, all_feature_names
from ngage.model import load_model, predict_gbm


def _read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def test_boundaries_structure_and_tolerance(tiny_cohort, tiny_artifacts):
    header, rows = _read_csv(tiny_artifacts["boundaries"])
    assert header == ["class_id", "actual_start", "actual_end",
                      "n_participants_used"]
    classes, _ = load_schedule_and_surveys(tiny_cohort["schedule"], None)
    by_id = {c.class_id: c for c in classes}
    assert [r[0] for r in rows] == sorted(by_id)
    for class_id, start_s, end_s, n_used in rows:
        info = by_id[class_id]
        start, end = float(start_s), float(end_s)
        assert abs(start - info.scheduled_start) <= 300.0
        assert abs(end - info.scheduled_end) <= 300.0
        assert start < end
        assert int(n_used) >= 0


def test_read_boundaries_round_trip(tiny_artifacts):
    bounds = pipeline.read_boundaries(tiny_artifacts["boundaries"])
    header, rows = _read_csv(tiny_artifacts["boundaries"])
    assert set(bounds) == {r[0] for r in rows}
    first = rows[0]
    assert bounds[first[0]] == (float(first[1]), float(first[2]))


def test_read_boundaries_rejects_foreign_header(tmp_path):
    bad = tmp_path / "boundaries.csv"
    bad.write_text("class,begin,finish\nc1,0,1\n")
    with pytest.raises(ValidationError):
        pipeline.read_boundaries(bad)


def test_quality_covers_every_session(tiny_cohort, tiny_artifacts):
    header, rows = _read_csv(tiny_artifacts["quality"])
    assert header == ["participant_id", "class_id", "flat_fraction",
                      "n_abrupt_drops", "quantization", "accepted", "reasons"]
    classes, _ = load_schedule_and_surveys(tiny_cohort["schedule"], None)
    expected = {(p, c.class_id) for c in classes for p in c.enrolled}
    assert {(r[0], r[1]) for r in rows} == expected
    assert [(r[0], r[1]) for r in rows] == sorted((r[0], r[1]) for r in rows)
    for r in rows:
        assert r[5] in ("True", "False")
        # a rejected session states why; an accepted one is silent
        assert (r[5] == "False") == bool(r[6])


def test_features_csv_structure(tiny_artifacts):
    header, rows = _read_csv(tiny_artifacts["features"])
    assert header == (["participant_id", "class_id", "subject"]
                      + all_feature_names() + list(TARGETS))
    keys = [(r[0], r[1]) for r in rows]
    assert keys == sorted(keys)
    assert len(set(keys)) == len(keys)
    for r in rows:
        for label in r[-4:]:
            assert 1.0 <= float(label) <= 5.0


def test_features_round_trip_preserves_missing(tiny_artifacts):
    records = pipeline.read_features_csv(tiny_artifacts["features"])
    header, rows = _read_csv(tiny_artifacts["features"])
    assert len(records) == len(rows)
    names = all_feature_names()
    raw = {(r[0], r[1]): r for r in rows}
    for rec in records:
        row = raw[(rec.participant_id, rec.class_id)]
        for j, name in enumerate(names):
            cell = row[3 + j]
            if cell == "":
                assert rec.features[name] is None
            else:
                assert rec.features[name] == float(cell)
        assert rec.scores.overall == float(row[-1])


def test_read_features_rejects_wrong_header(tmp_path):
    bad = tmp_path / "features.csv"
    bad.write_text("participant_id,class_id,foo\n")
    with pytest.raises(ValidationError):
        pipeline.read_features_csv(bad)


def test_train_stage_writes_loadable_model(tiny_artifacts, tmp_path):
    model_path = tmp_path / "model.ngage"
    config = load_config(None, overrides={
        "grid": {"num_leaves": [7], "learning_rate": [0.1], "n_rounds": [20]}})
    pipeline.stage_train(tiny_artifacts["features"], "overall", config,
                         model_path)
    model = load_model(model_path)
    assert model.feature_names == tuple(all_feature_names())
    records = pipeline.read_features_csv(tiny_artifacts["features"])
    X = np.array([[np.nan if rec.features[n] is None else rec.features[n]
                   for n in model.feature_names] for rec in records])
    preds = predict_gbm(model, X)
    assert preds.shape == (len(records),)
    assert np.isfinite(preds).all()


def test_train_stage_rejects_unknown_target(tiny_artifacts, tmp_path):
    config = load_config(None)
    with pytest.raises(ValidationError):
        pipeline.stage_train(tiny_artifacts["features"], "focus", config,
                             tmp_path / "m.ngage")


def _eval_config():
    return load_config(None, overrides={
        "grid": {"num_leaves": [7], "learning_rate": [0.3], "n_rounds": [15]},
        "cv": {"outer_k": 3, "inner_l": 2}})


def test_eval_stage_emits_report_and_tables(tiny_artifacts, tmp_path):
    regimes = tmp_path / "regimes.json"
    regimes.write_text(json.dumps([
        {"families": ["EDA"], "target": "overall"},
        {"subject": "Maths", "target": "overall"},
    ]))
    report_path = tmp_path / "report.json"
    pipeline.stage_eval(tiny_artifacts["features"], ["overall"],
                        _eval_config(), seed=5, out_path=report_path,
                        regimes_path=regimes)
    for name in ("report.json", "table6.csv", "table7.csv",
                 "regime_table.csv", "per_participant_errors.csv"):
        assert (tmp_path / name).is_file()

    payload = json.loads(report_path.read_text())
    assert payload["seed"] == 5
    assert list(payload["targets"]) == ["overall"]
    metrics = payload["targets"]["overall"]["metrics"]
    assert set(metrics) == {"model", "linear", "average", "random"}
    assert payload["metadata"]["outer_k"] == 3
    assert payload["metadata"]["inner_l"] == 2
    assert payload["metadata"]["inner_cells_per_outer_fold"] == 2  # 1 combo x 2

    # the regime table is the same artifact under two names
    assert (tmp_path / "table7.csv").read_bytes() \
        == (tmp_path / "regime_table.csv").read_bytes()
    header7, rows7 = _read_csv(tmp_path / "table7.csv")
    assert header7 == ["families", "subject", "target", "skipped", "n_rows",
                       "mae", "rmse", "reason"]
    assert rows7[0][0] == "EDA"
    assert rows7[1][0] == "EDA+HRV+ACC+ST+ENV"
    # the tiny cohort has too few Maths sessions for a subject regime
    assert rows7[1][3] == "True" and "fewer than" in rows7[1][7]

    header6, rows6 = _read_csv(tmp_path / "table6.csv")
    assert header6 == ["dimension", "predictor", "mae", "rmse"]
    assert [r[1] for r in rows6] == ["model", "linear", "average", "random"]

    _, per_rows = _read_csv(tmp_path / "per_participant_errors.csv")
    assert len(per_rows) == payload["n_rows"]
    for r in per_rows:
        assert abs(float(r[5]) - abs(float(r[4]) - float(r[3]))) < 1e-12


def test_eval_stage_is_byte_deterministic(tiny_artifacts, tmp_path):
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    for out in (out_a, out_b):
        pipeline.stage_eval(tiny_artifacts["features"], ["overall", "emotional"],
                            _eval_config(), seed=9, out_path=out / "report.json")
    for name in ("report.json", "table6.csv", "table7.csv",
                 "regime_table.csv", "per_participant_errors.csv"):
        assert (out_a / name).read_bytes() == (out_b / name).read_bytes()


def test_reemit_report_reproduces_tables(tiny_artifacts, tmp_path):
    src = tmp_path / "src"
    pipeline.stage_eval(tiny_artifacts["features"], ["overall"],
                        _eval_config(), seed=5, out_path=src / "report.json")
    dst = tmp_path / "dst"
    pipeline.reemit_report(src / "report.json", dst)
    for name in ("table6.csv", "table7.csv", "regime_table.csv",
                 "per_participant_errors.csv"):
        assert (src / name).read_bytes() == (dst / name).read_bytes()


def test_eval_rejects_unknown_target(tiny_artifacts, tmp_path):
    with pytest.raises(ValidationError):
        pipeline.stage_eval(tiny_artifacts["features"], ["zeal"],
                            _eval_config(), seed=1,
                            out_path=tmp_path / "report.json")


def test_resolve_session(tiny_cohort):
    classes, _ = load_schedule_and_surveys(tiny_cohort["schedule"], None)
    target = classes[0]
    pid = target.enrolled[0]
    resolved = pipeline.resolve_session(f"{pid}:{target.class_id}", classes)
    assert resolved[0] == pid
    with pytest.raises(ValidationError):
        pipeline.resolve_session("nobody:" + target.class_id, classes)
    with pytest.raises(ValidationError):
        pipeline.resolve_session(f"{pid}:c9999", classes)
    with pytest.raises(ValidationError):
        pipeline.resolve_session("malformed", classes)


def test_single_session_stages(tiny_cohort, tiny_artifacts, tmp_path):
    classes, _ = load_schedule_and_surveys(tiny_cohort["schedule"], None)
    target = classes[0]
    session = f"{target.enrolled[0]}:{target.class_id}"
    config = load_config(None)

    decomp_path = tmp_path / "decomp.csv"
    pipeline.stage_eda_session(tiny_cohort["root"], tiny_cohort["schedule"],
                               tiny_cohort["surveys"], session, config,
                               decomp_path,
                               boundaries_path=tiny_artifacts["boundaries"])
    header, rows = _read_csv(decomp_path)
    assert header == ["t", "mixed", "tonic", "phasic", "driver", "residual"]
    assert len(rows) > 4 * 60  # at least a minute of 4 Hz samples
    mixed = np.array([float(r[1]) for r in rows])
    parts = np.array([[float(r[2]), float(r[3]), float(r[5])] for r in rows])
    np.testing.assert_allclose(parts.sum(axis=1), mixed, atol=1e-6)

    hrv_path = tmp_path / "hrv.csv"
    pipeline.stage_hrv_session(tiny_cohort["root"], tiny_cohort["schedule"],
                               tiny_cohort["surveys"], session, config,
                               hrv_path,
                               boundaries_path=tiny_artifacts["boundaries"])
    hrv_header, hrv_rows = _read_csv(hrv_path)
    assert len(hrv_rows) == 1
    assert "hrv_bpm" in hrv_header and "hrv_ratio_lf_hf" in hrv_header
    bpm = dict(zip(hrv_header, hrv_rows[0]))["hrv_bpm"]
    assert 40.0 < float(bpm) < 130.0

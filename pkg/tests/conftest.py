"""Shared fixtures: one small synthetic cohort, generated and processed once.

The cohort is deliberately tiny (6 students, 2 days) so the session-scoped
feature table stays cheap; scale-sensitive checks live in test_acceptance.
"""

import pytest

from ngage import pipeline
from ngage.config import load_config
from ngage.synth import SynthConfig, generate_cohort


@pytest.fixture(scope="session")
def tiny_cohort(tmp_path_factory):
    root = tmp_path_factory.mktemp("cohort")
    cfg = SynthConfig(n_students=6, n_teachers=2, days=2, classes_per_day=3,
                      class_minutes=6.0, gap_minutes=4.0, survey_rate=0.9,
                      seed=11)
    generate_cohort(cfg, root)
    return {
        "root": root,
        "schedule": root / "schedule.csv",
        "surveys": root / "surveys.csv",
        "env": root / "env.csv",
        "synth_config": cfg,
    }


@pytest.fixture(scope="session")
def tiny_artifacts(tiny_cohort, tmp_path_factory):
    """boundaries.csv, quality.csv and features.csv for the tiny cohort."""
    out = tmp_path_factory.mktemp("artifacts")
    config = load_config(None)
    boundaries = out / "boundaries.csv"
    quality = out / "quality.csv"
    features = out / "features.csv"
    pipeline.stage_segment(tiny_cohort["root"], tiny_cohort["schedule"],
                           tiny_cohort["surveys"], config, boundaries)
    pipeline.stage_clean(tiny_cohort["root"], tiny_cohort["schedule"],
                         tiny_cohort["surveys"], config, quality,
                         boundaries_path=boundaries)
    pipeline.stage_features(tiny_cohort["root"], tiny_cohort["schedule"],
                            tiny_cohort["surveys"], tiny_cohort["env"],
                            config, features, boundaries_path=boundaries)
    return {"out": out, "boundaries": boundaries, "quality": quality,
            "features": features, "config": config}

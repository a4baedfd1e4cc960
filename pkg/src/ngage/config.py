"""Pipeline configuration: defaults, JSON overrides, unknown-key rejection.

Every tunable named in the module contracts lives here so that each CLI
flag has a config-file equivalent. Flags win over config values; config
values win over defaults.
"""

import copy
import json

from .errors import DataIOError, ValidationError

DEFAULTS = {
    "seed": 7,
    "timezone_offset_hours": 10.0,
    # flag equivalents: any CLI path/selection flag can come from here;
    # None means "derive from --data or the subcommand default"
    "paths": {
        "data": "data",
        "schedule": None,
        "surveys": None,
        "env": None,
        "boundaries": None,
        "features": "features.csv",
        "model": "model.ngage",
        "regimes": None,
        "report": "report.json",
        "out": None,
        "out_dir": ".",
    },
    "run": {
        "target": "overall",
        "session": None,
    },
    "window": {
        # school-day clip in local wall-clock time
        "school_start": "09:00",
        "school_end": "15:35",
        "min_segment_seconds": 15.0,
        "max_gap_seconds": 5.0,
        "boundary_margin_seconds": 300.0,
    },
    "gate": {
        "flat_level_us": 0.01,
        "flat_run_seconds": 10.0,
        "theta_flat": 0.2,
        "drop_us": 0.5,
        "theta_drop": 10,
        "quant_window_seconds": 60.0,
        "quant_min_distinct": 3,
    },
    "filters": {
        "eda_median_seconds": 5.0,
        "acc_median_seconds": 0.2,
        "st_median_seconds": 0.5,
    },
    "eda": {
        "tau0": 2.0,
        "tau1": 0.7,
        "delta_knot_seconds": 10.0,
        "alpha": 8e-4,
        "gamma": 1e-2,
        "reltol": 1e-6,
        "max_iter": 100,
        "normalization": "zscore",
        "scr_min_amplitude": 0.01,
        "arousal_window_seconds": 60.0,
        "arousal_levels": 4,
    },
    "hrv": {
        "beat_window_seconds": 0.75,
        "refractory_ms": 250.0,
        "rr_min_ms": 250.0,
        "rr_max_ms": 2000.0,
        "resample_hz": 4.0,
        "welch_segment_seconds": 64.0,
        "min_span_seconds": 120.0,
    },
    "sync": {
        "rate_hz": 1.0,
        "band_fraction": 0.1,
    },
    "model": {
        "min_samples_leaf": 5,
        "top_k_features": 10,
    },
    "grid": {
        "num_leaves": [7, 15, 31],
        "learning_rate": [0.05, 0.1],
        "n_rounds": [100, 300],
    },
    "cv": {
        "outer_k": 5,
        "inner_l": 3,
        "min_subject_sessions": 30,
    },
    "synth": {
        "n_students": 23,
        "n_teachers": 6,
        "days": 16,
        "classes_per_day": 5,
        "class_minutes": 6.0,
        "gap_minutes": 5.0,
        "first_class_local": "09:30",
        "start_date": "2019-09-09",
        "n_rooms": 3,
        "survey_rate": 0.353,
        "c_eda": 0.35,
        "c_hrv": 12.0,
        "c_acc": -0.35,
        "c_env": 2.0,
        "trait_std": 0.6,
        "class_latent_std": 0.35,
        "likert_noise_prob": 0.25,
        "scr_rate_per_min": 4.0,
        "acc_burst_rate_per_min": 3.0,
        "artifact_prob": 0.03,
        "noise_eda": 0.005,
        "noise_bvp": 0.01,
        "noise_acc": 0.02,
        "noise_st": 0.01,
    },
}


def default_config():
    """Deep copy of the built-in defaults."""
    return copy.deepcopy(DEFAULTS)


def _merge(base, override, path=""):
    for key, value in override.items():
        here = f"{path}.{key}" if path else key
        if key not in base:
            raise ValidationError(f"unknown config key: {here}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ValidationError(f"config key {here} expects a table")
            _merge(base[key], value, here)
        else:
            base[key] = value


def load_config(path=None, overrides=None):
    """Build the effective config: defaults <- JSON file <- overrides.

    Unknown keys anywhere raise ValidationError. `overrides` is a nested
    dict with the same shape (used by the CLI for flag values).
    """
    cfg = default_config()
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                data = json.load(fh)
        except OSError as exc:
            raise DataIOError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config {path} is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ValidationError(f"config {path} must contain a JSON object")
        _merge(cfg, data)
    if overrides:
        _merge(cfg, overrides)
    return cfg


def local_seconds(hhmm):
    """Parse 'HH:MM' into seconds since local midnight."""
    try:
        hh, mm = hhmm.split(":")
        hh, mm = int(hh), int(mm)
    except (ValueError, AttributeError) as exc:
        raise ValidationError(f"bad wall-clock time {hhmm!r}, expected HH:MM") from exc
    if not (0 <= hh < 24 and 0 <= mm < 60):
        raise ValidationError(f"bad wall-clock time {hhmm!r}")
    return 3600 * hh + 60 * mm

"""Python bindings for the ermica C++ core."""

import json

from . import _core
from ._core import (
    Dataset,
    LinearTransform,
    Model,
    accuracy_avg,
    corr_matrix,
    fit_ica,
    fit_pca,
    fit_whiten,
    hungarian_max,
    load_dataset,
    load_model,
    make_dataset,
    mcc,
    r2_avg,
    readout_score,
    train,
)

__all__ = [
    "Dataset",
    "LinearTransform",
    "Model",
    "accuracy_avg",
    "corr_matrix",
    "fit_ica",
    "fit_pca",
    "fit_whiten",
    "hungarian_max",
    "load_dataset",
    "load_model",
    "make_dataset",
    "mcc",
    "r2_avg",
    "readout_score",
    "run_cell",
    "run_sweep",
    "train",
]


def run_cell(task_type, d, k, seed=0, config=None):
    """ERM, ERM-PCA and ERM-ICA rows for one cell; `config` takes the same
    keys as the sweep config file (train overrides, ica settings, sizes)."""
    return _core.run_cell(task_type, d, k, seed, json.dumps(config or {}))


def run_sweep(config):
    """Runs a sweep from a config dict and writes results under its
    output_dir. Returns (rows, failures)."""
    return _core.run_sweep(json.dumps(config))

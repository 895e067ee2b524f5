"""beta-TCVAE: ELBO decomposition, minibatch estimators and disentanglement metrics."""

import json as _json

from . import _core
from ._core import (
    ConfigError,
    Dataset,
    Model,
    TrainingAborted,
    exact_aggregated_logdensity,
    higgins,
    kim_mnih,
    make_dataset,
    minibatch_log_qz,
    mss_log_f,
    pearson,
    render_bump,
    sign_test_p_value,
    spearman,
)

__all__ = [
    "ConfigError", "Dataset", "Model", "TrainingAborted", "exact_aggregated_logdensity",
    "exact_decomposition", "higgins", "kim_mnih", "make_dataset", "mig", "minibatch_log_qz",
    "mss_log_f", "pearson", "render_bump", "sign_test_p_value", "spearman", "sweep", "train",
]


def _stringify(overrides):
    out = {}
    for key, value in overrides.items():
        if isinstance(value, bool):
            value = "true" if value else "false"
        elif isinstance(value, (list, tuple)):
            value = ",".join(str(v) for v in value)
        out[key] = str(value)
    return out


def exact_decomposition(means, log_vars, samples=100000, seed=0):
    return _json.loads(_core.exact_decomposition_json(means, log_vars, samples, seed))


def mig(means, log_vars, dataset, seed=0, samples_per_value=10000, entropy_samples=10000):
    return _json.loads(
        _core.mig_json(means, log_vars, dataset, seed, samples_per_value, entropy_samples))


def train(**overrides):
    """Train one model; keys are the experiment-file keys. Returns (Model, record dict)."""
    model, record = _core.train_json(_stringify(overrides))
    return model, _json.loads(record)


def sweep(**overrides):
    return _json.loads(_core.sweep_json(_stringify(overrides)))

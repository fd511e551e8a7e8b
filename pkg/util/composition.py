"""Weighted score-sum composition of diffusion policies.

Sampling from prod_i q_i(a)^{w_i} is approximated by running the ancestral sampler with
eps = sum_i w_i eps_i, which is the same as summing the per-model scores.
"""
import json
import os

import numpy as np
import torch

from util.dataset import DemoSet, Trajectory
from util.diffusion import ancestral_sample, load_model, prepare_obs, unflatten
from util.exceptions import DataError, DimensionMismatchError, SimplexError

ZERO_WEIGHT = 1e-12
SIMPLEX_TOL = 1e-9


class CompositionWeights(object):
    def __init__(self, w):
        w = np.asarray(w, dtype=np.float64).reshape(-1)
        if w.size < 1:
            raise SimplexError('composition weights are empty')
        if not np.all(np.isfinite(w)):
            raise SimplexError('composition weights have non-finite entries: {}'.format(w.tolist()))
        if np.any(w < 0):
            raise SimplexError('composition weights must be non-negative: {}'.format(w.tolist()))
        if abs(w.sum() - 1.0) > SIMPLEX_TOL:
            raise SimplexError('composition weights must sum to 1, got {!r}'.format(float(w.sum())))
        self.w = w

    @classmethod
    def one_hot(cls, n, k):
        w = np.zeros(n)
        w[k] = 1.0
        return cls(w)

    @classmethod
    def uniform(cls, n):
        return cls(np.full(n, 1.0 / n))

    def __len__(self):
        return self.w.shape[0]

    def __getitem__(self, i):
        return float(self.w[i])

    def __iter__(self):
        return iter(self.w.tolist())

    def tolist(self):
        return self.w.tolist()

    def __repr__(self):
        return 'CompositionWeights({})'.format(', '.join('{:.4f}'.format(v) for v in self.w))


def as_weights(weights):
    return weights if isinstance(weights, CompositionWeights) else CompositionWeights(weights)


def parse_weights(text):
    """'0.25,0.75' -> CompositionWeights."""
    try:
        values = [float(v) for v in text.split(',') if v.strip()]
    except ValueError:
        raise DataError('weights must be a comma separated list of numbers, got {}'.format(text))
    return CompositionWeights(values)


def load_weights(path):
    if not os.path.isfile(path):
        raise DataError('weights file does not exist: {}'.format(path))
    with open(path, 'r') as f:
        try:
            values = json.load(f)
        except ValueError as e:
            raise DataError('weights file {} is not valid JSON: {}'.format(path, e))
    if isinstance(values, dict):
        values = values.get('weights')
    if not isinstance(values, list):
        raise DataError('weights file {} must hold a JSON array'.format(path))
    return CompositionWeights(values)


def save_weights(weights, path):
    with open(path, 'w') as f:
        json.dump(as_weights(weights).tolist(), f)


class PolicyEnsemble(object):
    """Models composed together. They must share horizon, dof, obs_dim, schedule and normaliser."""

    def __init__(self, models, labels=None):
        models = list(models)
        if not models:
            raise DataError('an ensemble needs at least one model')
        labels = list(labels) if labels is not None else ['policy_{}'.format(i) for i in range(len(models))]
        if len(labels) != len(models):
            raise DimensionMismatchError('{} labels for {} models'.format(len(labels), len(models)))
        ref = models[0]
        for label, m in zip(labels, models):
            if (m.horizon, m.dof, m.obs_dim) != (ref.horizon, ref.dof, ref.obs_dim):
                raise DimensionMismatchError('model {} has shape {} but {} has {}'.format(
                    label, (m.horizon, m.dof, m.obs_dim), labels[0], (ref.horizon, ref.dof, ref.obs_dim)))
            if m.schedule != ref.schedule:
                raise DataError('model {} uses a different noise schedule than {}'.format(label, labels[0]))
            if m.normalizer != ref.normalizer:
                raise DataError('model {} uses a different normaliser than {}'.format(label, labels[0]))
        self.models = models
        self.labels = labels

    @classmethod
    def from_manifest(cls, path):
        """JSON manifest {"models": [{"path": ..., "label": ...}, ...]}; paths relative to the manifest."""
        if not os.path.isfile(path):
            raise DataError('manifest does not exist: {}'.format(path))
        with open(path, 'r') as f:
            try:
                manifest = json.load(f)
            except ValueError as e:
                raise DataError('manifest {} is not valid JSON: {}'.format(path, e))
        entries = manifest.get('models', []) if isinstance(manifest, dict) else manifest
        root = os.path.dirname(os.path.abspath(path))
        models, labels = [], []
        for entry in entries:
            if isinstance(entry, str):
                entry = {'path': entry}
            model_path = entry['path'] if os.path.isabs(entry['path']) else os.path.join(root, entry['path'])
            models.append(load_model(model_path))
            labels.append(entry.get('label', os.path.splitext(os.path.basename(model_path))[0]))
        return cls(models, labels)

    @staticmethod
    def save_manifest(paths, labels, path):
        with open(path, 'w') as f:
            json.dump({'models': [{'path': p, 'label': l} for p, l in zip(paths, labels)]}, f, indent=2)

    def __len__(self):
        return len(self.models)

    def with_model(self, model, label):
        return PolicyEnsemble(self.models + [model], self.labels + [label])

    def subset(self, indices):
        return PolicyEnsemble([self.models[i] for i in indices], [self.labels[i] for i in indices])

    @property
    def schedule(self):
        return self.models[0].schedule

    @property
    def normalizer(self):
        return self.models[0].normalizer

    @property
    def horizon(self):
        return self.models[0].horizon

    @property
    def dof(self):
        return self.models[0].dof

    @property
    def obs_dim(self):
        return self.models[0].obs_dim

    @property
    def x_dim(self):
        return self.models[0].x_dim

    @property
    def dtype(self):
        return self.models[0].dtype

    @property
    def dt(self):
        return self.models[0].meta.get('dt', 1.0)


def _check_weights(ensemble, weights):
    weights = as_weights(weights)
    if len(weights) != len(ensemble):
        raise DimensionMismatchError('{} weights for {} models'.format(len(weights), len(ensemble)))
    return weights


def composed_eps(ensemble, weights, a_t, obs, t):
    """sum_i w_i eps_i(a_t, obs, t), accumulated in model order; models with w_i < 1e-12 are skipped."""
    weights = _check_weights(ensemble, weights)
    out = None
    for w, model in zip(weights, ensemble.models):
        if w < ZERO_WEIGHT:
            continue
        term = w * model(a_t, obs, t)
        out = term if out is None else out + term
    return out


def composed_sample_batch(ensemble, weights, obs, seed):
    """One composed trajectory per observation row -> [B, horizon, dof]."""
    weights = _check_weights(ensemble, weights)
    for m in ensemble.models:
        m.eval()
    obs_t = prepare_obs(ensemble.normalizer, obs, ensemble.obs_dim, ensemble.dtype)

    def eps_fn(x, o, t):
        return composed_eps(ensemble, weights, x, o, t)

    x = ancestral_sample(eps_fn, ensemble.schedule, obs_t, ensemble.x_dim, seed, ensemble.dtype)
    return unflatten(ensemble.normalizer, x, ensemble.horizon, ensemble.dof)


def composed_sample(ensemble, weights, obs, seed, dt=None):
    obs = np.asarray(obs, dtype=np.float64).reshape(ensemble.obs_dim)
    traj = composed_sample_batch(ensemble, weights, obs, seed)[0]
    return Trajectory(traj, dt if dt is not None else ensemble.dt)


def mode_filtering_check(policy_a, policy_b, obs, seed, weights=(0.5, 0.5)):
    """Composed samples of two policies, one per observation row, as a DemoSet for MMD-FK scoring."""
    ensemble = PolicyEnsemble([policy_a, policy_b], ['A', 'B'])
    obs = np.asarray(obs, dtype=np.float64)
    if obs.ndim == 1:
        obs = obs[None]
    with torch.no_grad():
        trajs = composed_sample_batch(ensemble, weights, obs, seed)
    return DemoSet(obs, trajs, ensemble.dt)

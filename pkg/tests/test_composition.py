import json
import math

import numpy as np
import pytest
import torch
import torch.nn as nn

from conftest import unit_normalizer
from model.denoiser import DenoiserModel
from util.composition import (CompositionWeights, PolicyEnsemble, composed_eps, composed_sample,
                              composed_sample_batch, load_weights, mode_filtering_check, parse_weights,
                              save_weights)
from util.diffusion import NoiseSchedule, sample, sample_batch, save_model
from util.exceptions import DataError, DimensionMismatchError, SimplexError


class ConstantNet(nn.Module):
    def __init__(self, value):
        super().__init__()
        self.value = nn.Parameter(torch.as_tensor(value, dtype=torch.float64))

    def forward(self, x_t, obs, t):
        return self.value.expand(x_t.shape[0], -1)


def _constant_model(value, schedule, normalizer):
    return DenoiserModel(1, 3, 0, schedule, normalizer, net=ConstantNet(value))


def test_weights_must_lie_on_the_simplex():
    assert CompositionWeights([0.25, 0.75]).tolist() == [0.25, 0.75]
    assert CompositionWeights.one_hot(3, 1).tolist() == [0.0, 1.0, 0.0]
    assert sum(CompositionWeights.uniform(3)) == pytest.approx(1.0)
    for bad in ([], [0.5, 0.6], [-0.1, 1.1], [np.nan, 1.0]):
        with pytest.raises(SimplexError):
            CompositionWeights(bad)
    # SimplexError is a data error (exit code 3)
    assert issubclass(SimplexError, DataError)


def test_weights_text_and_file(tmp_path):
    assert parse_weights('0.25, 0.75').tolist() == [0.25, 0.75]
    with pytest.raises(DataError):
        parse_weights('a,b')
    path = str(tmp_path / 'w.json')
    save_weights([0.5, 0.5], path)
    assert load_weights(path).tolist() == [0.5, 0.5]
    (tmp_path / 'wd.json').write_text(json.dumps({'weights': [1.0, 0.0]}))
    assert load_weights(str(tmp_path / 'wd.json')).tolist() == [1.0, 0.0]
    (tmp_path / 'bad.json').write_text('"x"')
    with pytest.raises(DataError):
        load_weights(str(tmp_path / 'bad.json'))


def test_composed_eps_is_the_weighted_sum(short_schedule):
    norm = unit_normalizer(1, 3, 0)
    u, v = [1.0, -2.0, 4.0], [3.0, 0.5, -1.0]
    ensemble = PolicyEnsemble([_constant_model(u, short_schedule, norm), _constant_model(v, short_schedule, norm)])
    x = torch.zeros(2, 3, dtype=torch.float64)
    t = torch.tensor([5, 5])
    out = composed_eps(ensemble, [0.25, 0.75], x, torch.zeros(2, 0), t)
    expected = 0.25 * np.asarray(u) + 0.75 * np.asarray(v)
    np.testing.assert_allclose(out.detach().numpy(), np.tile(expected, (2, 1)), atol=1e-12)
    # the result lies on the segment between the two predictions
    e0 = composed_eps(ensemble, [1.0, 0.0], x, torch.zeros(2, 0), t).detach().numpy()
    e1 = composed_eps(ensemble, [0.0, 1.0], x, torch.zeros(2, 0), t).detach().numpy()
    np.testing.assert_allclose(out.detach().numpy(), 0.25 * e0 + 0.75 * e1, atol=1e-12)
    with pytest.raises(DimensionMismatchError):
        composed_eps(ensemble, [1.0], x, torch.zeros(2, 0), t)


def test_zero_weight_models_are_not_evaluated(short_schedule):
    norm = unit_normalizer(1, 3, 0)
    calls = []

    class Counting(ConstantNet):
        def forward(self, x_t, obs, t):
            calls.append(1)
            return super().forward(x_t, obs, t)

    a = _constant_model([1.0, 1.0, 1.0], short_schedule, norm)
    b = DenoiserModel(1, 3, 0, short_schedule, norm, net=Counting([2.0, 2.0, 2.0]))
    ensemble = PolicyEnsemble([a, b])
    composed_eps(ensemble, [1.0, 0.0], torch.zeros(1, 3, dtype=torch.float64), torch.zeros(1, 0), torch.tensor([1]))
    assert calls == []


def test_identical_models_compose_to_themselves(mlp_model, short_schedule):
    norm = unit_normalizer(4, 2, 2)
    m = mlp_model(0, short_schedule, norm)
    ensemble = PolicyEnsemble([m, m])
    x = torch.randn(3, 8, dtype=torch.float64)
    obs = torch.randn(3, 2, dtype=torch.float64)
    t = torch.tensor([1, 7, 20])
    torch.testing.assert_close(composed_eps(ensemble, [0.3, 0.7], x, obs, t), m(x, obs, t))


def test_one_hot_composition_is_bit_exact(mlp_model, short_schedule):
    norm = unit_normalizer(4, 2, 2)
    models = [mlp_model(seed, short_schedule, norm) for seed in range(3)]
    ensemble = PolicyEnsemble(models)
    obs = np.array([[0.1, -0.2], [0.5, 0.3], [0.0, 0.0]])
    for k, model in enumerate(models):
        composed = composed_sample_batch(ensemble, CompositionWeights.one_hot(3, k), obs, seed=11)
        single = sample_batch(model, obs, seed=11)
        assert composed.tobytes() == single.tobytes()
    traj = composed_sample(ensemble, CompositionWeights.one_hot(3, 1), obs[0], seed=2)
    assert traj.steps.tobytes() == sample(models[1], obs[0], seed=2).steps.tobytes()


def test_joint_permutation_leaves_samples_unchanged(mlp_model, short_schedule):
    norm = unit_normalizer(4, 2, 2)
    a, b = mlp_model(0, short_schedule, norm), mlp_model(1, short_schedule, norm)
    obs = np.array([[0.2, 0.1]])
    ab = composed_sample_batch(PolicyEnsemble([a, b]), [0.3, 0.7], obs, seed=5)
    ba = composed_sample_batch(PolicyEnsemble([b, a]), [0.7, 0.3], obs, seed=5)
    np.testing.assert_allclose(ab, ba, atol=1e-10)


def test_ensemble_compatibility(mlp_model, short_schedule):
    norm = unit_normalizer(4, 2, 2)
    m = mlp_model(0, short_schedule, norm)
    with pytest.raises(DataError):
        PolicyEnsemble([])
    with pytest.raises(DimensionMismatchError):
        PolicyEnsemble([m, mlp_model(0, short_schedule, unit_normalizer(5, 2, 2), horizon=5)])
    with pytest.raises(DataError):
        PolicyEnsemble([m, mlp_model(0, NoiseSchedule.linear(), norm)])
    with pytest.raises(DataError):
        PolicyEnsemble([m, mlp_model(0, short_schedule, unit_normalizer(4, 2, 2, std=2.0))])
    with pytest.raises(DimensionMismatchError):
        PolicyEnsemble([m], labels=['a', 'b'])
    ensemble = PolicyEnsemble([m], ['a']).with_model(m, 'b')
    assert ensemble.labels == ['a', 'b'] and ensemble.x_dim == 8
    assert ensemble.subset([1]).labels == ['b']


def test_manifest_round_trip(mlp_model, short_schedule, tmp_path):
    norm = unit_normalizer(4, 2, 2)
    paths = []
    for i in range(2):
        path = tmp_path / 'models' / 'm{}.pth'.format(i)
        save_model(mlp_model(i, short_schedule, norm), str(path))
        paths.append('models/m{}.pth'.format(i))
    manifest = str(tmp_path / 'ensemble.json')
    PolicyEnsemble.save_manifest(paths, ['line', 'circle'], manifest)
    ensemble = PolicyEnsemble.from_manifest(manifest)
    assert ensemble.labels == ['line', 'circle']
    with pytest.raises(DataError):
        PolicyEnsemble.from_manifest(str(tmp_path / 'missing.json'))


def _toy_ensemble(gaussian_model):
    schedule = NoiseSchedule.linear()
    norm = unit_normalizer(1, 2, 0)
    return PolicyEnsemble([gaussian_model(np.array([[5.0, 5.0]]), schedule, norm),
                           gaussian_model(np.array([[-5.0, -5.0]]), schedule, norm)])


def _projection(points):
    return float(np.mean(points @ np.array([1.0, 1.0]) / math.sqrt(2.0)))


def test_weight_sweep_interpolates_between_modes(gaussian_model):
    ensemble = _toy_ensemble(gaussian_model)
    obs = np.zeros((200, 0))
    projections = []
    for w1 in (0.0, 1.0 / 3.0, 0.5, 2.0 / 3.0, 1.0):
        pts = composed_sample_batch(ensemble, [w1, 1.0 - w1], obs, seed=0)[:, 0]
        projections.append(_projection(pts))
    assert all(a < b for a, b in zip(projections, projections[1:]))
    assert projections[0] < projections[2] < projections[4]
    first = composed_sample_batch(ensemble, [1.0, 0.0], obs, seed=0)[:, 0]
    assert np.linalg.norm(first.mean(axis=0) - 5.0) < 1.0


def test_mode_filtering_check_returns_scored_sets(gaussian_model):
    ensemble = _toy_ensemble(gaussian_model)
    result = mode_filtering_check(ensemble.models[0], ensemble.models[1], np.zeros((10, 0)), seed=1)
    assert len(result) == 10 and result.trajs.shape == (10, 1, 2)
    same = mode_filtering_check(ensemble.models[0], ensemble.models[0], np.zeros((10, 0)), seed=1)
    np.testing.assert_allclose(same.trajs, sample_batch(ensemble.models[0], np.zeros((10, 0)), 1), atol=1e-10)

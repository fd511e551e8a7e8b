import json

import numpy as np
import pytest

from conftest import chain_path
from util.config import CfgNode
from util.experiment import ExperimentSpec, run_few_shot, run_mode_filtering, run_toy2d
from util.logger import get_logger

pytestmark = pytest.mark.slow


def _cfg(**experiment):
    cfg = {'chain': chain_path('arm4'), 'horizon': 8, 'dt': 0.1,
           'T': 50, 'beta_start': 0.0001, 'beta_end': 0.3,
           'seed': 0, 'epochs': 200, 'batch_size': 32, 'base_lr': 0.002, 'optimizer': 'Adam',
           'scheduler': 'none', 'hidden_sizes': [64, 64], 'time_dim': 16, 'max_grad_norm': 1.0,
           'print_freq': 1000,
           'gamma': 0.0, 'kernel_mode': 'aligned', 'link_weights': None,
           'opt_iter': 10, 'num_samples': 8, 'restarts': 2, 'num_inference_steps': 50, 'tol': 0.001,
           'include_vanilla': True, 'simplex_step': 1.0}
    cfg.update(experiment)
    return CfgNode(cfg)


def test_shared_mode_wins_the_composition(tmp_path):
    cfg = _cfg(name='modes', kind='mode_filtering', base_count=96, eval_count=24, seeds=[0],
               policy_a={'kind': 'MultiModalLine', 'directions': [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]], 'speed': 0.2},
               policy_b={'kind': 'MultiModalLine', 'directions': [[1.0, 0.0, 0.0], [0.0, -1.0, 0.0]], 'speed': 0.2},
               reference={'kind': 'LineX', 'speed': 0.2})
    summary = run_mode_filtering(ExperimentSpec.from_cfg(cfg), cfg, str(tmp_path), get_logger())
    run = summary['runs'][0]
    assert run['mmd_to_reference'] < min(run['mmd_to_a'], run['mmd_to_b'])
    assert summary['reference_closest']


def test_trained_gaussians_interpolate(tmp_path):
    cfg = _cfg(toy_count=256, toy_samples=200, epochs=150, batch_size=64)
    summary = run_toy2d(cfg, str(tmp_path), seed=0, logger=get_logger())
    projections = summary['diagonal_projection']
    assert summary['weights'] == pytest.approx([0.0, 1 / 3, 0.5, 2 / 3, 1.0])
    assert all(a < b for a, b in zip(projections, projections[1:]))
    assert summary['monotone']
    # w = (1, 0) samples the first Gaussian, centred at (5, 5)
    assert np.linalg.norm(np.asarray(summary['means'][-1]) - [5.0, 5.0]) < 1.0
    assert np.linalg.norm(np.asarray(summary['means'][0]) - [-5.0, -5.0]) < 1.0


def test_dse_is_no_worse_than_the_fine_tuned_policy(tmp_path):
    cfg = _cfg(name='spiral', kind='few_shot', base_count=64, eval_count=16, seeds=[0], epochs=100,
               labels=['LineX', 'CircleX'],
               bases=[{'kind': 'LineX', 'speed': 0.2}, {'kind': 'CircleX', 'amplitude': 0.1, 'speed': 0.3}],
               demo_skill={'kind': 'Spiral', 'axis': 'X', 'amplitude': 0.1, 'speed': 0.3, 'advance_speed': 0.2},
               demo_counts=[5])
    rows = run_few_shot(ExperimentSpec.from_cfg(cfg), cfg, str(tmp_path), get_logger())
    task, demos, vanilla, fine_tuned, dse = rows[0]
    assert (task, demos) == ('spiral', 5)
    assert dse <= fine_tuned + 0.1
    # on the demos themselves the selection never loses to the fine-tuned corner
    run = json.loads((tmp_path / 'summary.json').read_text())['runs'][0]
    assert run['objective'] <= run['baselines']['fine_tuned']
    assert abs(sum(run['weights']) - 1.0) < 1e-9

import os

import numpy as np
import pytest
import torch
import torch.nn as nn

from model.denoiser import DenoiserModel
from util.dataset import Normalizer
from util.diffusion import NoiseSchedule
from util.kinematics import load_chain

REPO_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def chain_path(name):
    return os.path.join(REPO_ROOT, 'config', 'chains', '{}.json'.format(name))


class GaussianEpsNet(nn.Module):
    """Exact noise predictor for data x0 ~ N(mu, I) in normalised space."""

    def __init__(self, mu, schedule):
        super().__init__()
        self.register_buffer('mu', torch.as_tensor(np.asarray(mu, dtype=np.float64).reshape(-1)))
        self.register_buffer('alpha_bars', torch.as_tensor(np.concatenate([[1.0], schedule.alpha_bars])))
        self.dummy = nn.Parameter(torch.zeros((), dtype=torch.float64))

    def forward(self, x_t, obs, t):
        abar = self.alpha_bars[t][:, None]
        return torch.sqrt(1.0 - abar) * (x_t - torch.sqrt(abar) * self.mu)


@pytest.fixture
def planar2():
    return load_chain(chain_path('planar2'))


@pytest.fixture
def planar3():
    return load_chain(chain_path('planar3'))


@pytest.fixture
def short_schedule():
    return NoiseSchedule.linear(T=20, beta_start=1e-4, beta_end=0.5)


@pytest.fixture
def gaussian_model():
    """Factory: analytic denoiser over [horizon, dof] trajectories centred on ``mean`` (joint units)."""

    def make(mean, schedule, normalizer, obs_dim=0):
        mean = np.asarray(mean, dtype=np.float64)
        horizon, dof = mean.shape
        mu = normalizer.normalize_traj(mean).reshape(-1)
        model = DenoiserModel(horizon, dof, obs_dim, schedule, normalizer, net=GaussianEpsNet(mu, schedule))
        model.meta = {'dt': 0.1}
        return model.eval()

    return make


@pytest.fixture
def mlp_model():
    """Factory: small float64 MLP denoiser with a randomised output layer."""

    def make(seed, schedule, normalizer, horizon=4, dof=2, obs_dim=2, hidden_sizes=(16, 16)):
        torch.manual_seed(seed)
        model = DenoiserModel(horizon, dof, obs_dim, schedule, normalizer, hidden_sizes=hidden_sizes,
                              time_dim=8).to(torch.float64)
        nn.init.normal_(model.net.head.weight, std=0.3)
        nn.init.normal_(model.net.head.bias, std=0.3)
        model.meta = {'dt': 0.1}
        return model.eval()

    return make


def unit_normalizer(horizon, dof, obs_dim, std=1.0):
    return Normalizer(np.zeros((horizon, dof)), np.full((horizon, dof), std), np.zeros(obs_dim), np.ones(obs_dim))

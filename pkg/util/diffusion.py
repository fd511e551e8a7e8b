"""DDPM schedule, forward process, score identity and ancestral sampling.

Diffusion steps are 1-based: t = 1..T. The boundary t = 0 means "no noise" (alpha_bar = 1).
"""
import math
import os

import numpy as np
import torch

from util.common_util import torch_generator
from util.dataset import Normalizer, Trajectory
from util.exceptions import DataError, DimensionMismatchError, SingularityError


class NoiseSchedule(object):
    def __init__(self, betas, require_terminal_noise=False):
        betas = np.asarray(betas, dtype=np.float64).reshape(-1)
        if betas.size < 1:
            raise DataError('a noise schedule needs at least one step')
        if not (np.all(betas > 0) and np.all(betas < 1)):
            raise DataError('betas must lie in (0, 1)')
        self.betas = betas
        self.alphas = 1.0 - betas
        self.alpha_bars = np.cumprod(self.alphas)
        if require_terminal_noise and not self.alpha_bars[-1] < 1e-2:
            raise DataError('alpha_bar_T = {:.3e} is not small enough for q(a_T) to be standard normal'.format(
                self.alpha_bars[-1]))

    @classmethod
    def linear(cls, T=100, beta_start=1e-4, beta_end=0.2):
        return cls(np.linspace(beta_start, beta_end, T), require_terminal_noise=True)

    @classmethod
    def from_alphas(cls, alphas):
        return cls(1.0 - np.asarray(alphas, dtype=np.float64))

    @property
    def T(self):
        return self.betas.shape[0]

    def check_step(self, t, allow_zero=False):
        t = np.asarray(t)
        lo = 0 if allow_zero else 1
        if np.any(t < lo) or np.any(t > self.T):
            raise DataError('diffusion step {} outside [{}, {}]'.format(t.tolist(), lo, self.T))

    def alpha_bar(self, t):
        """alpha_bar for (arrays of) steps t in 0..T, with alpha_bar(0) = 1."""
        self.check_step(t, allow_zero=True)
        return np.concatenate([[1.0], self.alpha_bars])[np.asarray(t)]

    def alpha(self, t):
        self.check_step(t)
        return float(self.alphas[t - 1])

    def beta(self, t):
        self.check_step(t)
        return float(self.betas[t - 1])

    def loss_weights(self, mode='simple'):
        """lambda_t for t = 1..T."""
        if mode == 'simple':
            w = np.ones(self.T)
        elif mode == 'schedule':
            w = self.betas / (self.alphas * np.maximum(1.0 - self.alpha_bars, 1e-12))
            w = w / w.mean()
        else:
            raise ValueError('No such loss weighting {}'.format(mode))
        return w

    def to_dict(self):
        return {'betas': self.betas.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(d['betas'])

    def __eq__(self, other):
        if not isinstance(other, NoiseSchedule):
            return NotImplemented
        return np.array_equal(self.betas, other.betas)

    def __ne__(self, other):
        result = self.__eq__(other)
        return result if result is NotImplemented else not result


def _broadcast_step(values, like):
    """Per-sample schedule values as a tensor broadcastable against ``like`` [B, ...]."""
    v = torch.as_tensor(np.asarray(values, dtype=np.float64), dtype=like.dtype)
    if v.ndim == 0:
        return v
    return v.reshape(-1, *([1] * (like.ndim - 1)))


def forward_diffuse(schedule, a0, t, noise):
    """a_t = sqrt(alpha_bar_t) a0 + sqrt(1 - alpha_bar_t) noise; t scalar or per-sample [B]."""
    is_numpy = isinstance(a0, np.ndarray)
    a0_t = torch.as_tensor(a0)
    noise_t = torch.as_tensor(noise, dtype=a0_t.dtype)
    if a0_t.shape != noise_t.shape:
        raise DimensionMismatchError('noise of shape {} for data of shape {}'.format(
            tuple(noise_t.shape), tuple(a0_t.shape)))
    t = t.cpu().numpy() if isinstance(t, torch.Tensor) else np.asarray(t)
    abar = schedule.alpha_bar(t)
    a_t = (_broadcast_step(np.sqrt(abar), a0_t) * a0_t
           + _broadcast_step(np.sqrt(1.0 - abar), a0_t) * noise_t)
    return a_t.numpy() if is_numpy else a_t


def score_from_eps(eps_hat, schedule, t):
    """Score estimate grad log q(a_t) = -eps_hat / sqrt(1 - alpha_bar_t)."""
    abar = float(schedule.alpha_bar(t))
    if abar >= 1.0:
        raise SingularityError('score undefined where alpha_bar_t = 1 (t = {})'.format(t))
    return -eps_hat / math.sqrt(1.0 - abar)


@torch.no_grad()
def ancestral_sample(eps_fn, schedule, obs, x_dim, seed, dtype=torch.float32):
    """DDPM reverse chain from x_T ~ N(0, I) down to x_0 in normalised space.

    One noise draw per step is shared by the whole batch state; ``eps_fn(x, obs, t)`` may be a
    single model or a composition of several.
    """
    g = torch_generator(seed)
    B = obs.shape[0]
    x = torch.randn(B, x_dim, generator=g, dtype=dtype)
    for t in range(schedule.T, 0, -1):
        tt = torch.full((B,), t, dtype=torch.long)
        eps = eps_fn(x, obs, tt)
        score = score_from_eps(eps, schedule, t)
        x = (x + schedule.beta(t) * score) / math.sqrt(schedule.alpha(t))
        if t > 1:
            x = x + math.sqrt(schedule.beta(t)) * torch.randn(B, x_dim, generator=g, dtype=dtype)
    return x


def prepare_obs(normalizer, obs, obs_dim, dtype):
    """Raw observations [B, obs_dim] (or a single [obs_dim]) -> normalised tensor [B, obs_dim]."""
    obs = np.asarray(obs, dtype=np.float64)
    if obs.ndim == 1:
        obs = obs[None]
    if obs.ndim != 2 or obs.shape[1] != obs_dim:
        raise DimensionMismatchError('observation of shape {} for a model conditioned on {} values'.format(
            obs.shape, obs_dim))
    return torch.as_tensor(normalizer.normalize_obs(obs), dtype=dtype)


def unflatten(normalizer, x, horizon, dof):
    x = x.detach().cpu().to(torch.float64).numpy().reshape(-1, horizon, dof)
    return normalizer.denormalize_traj(x)


def sample_batch(model, obs, seed):
    """One trajectory per observation row -> [B, horizon, dof] in joint units."""
    model.eval()
    obs_t = prepare_obs(model.normalizer, obs, model.obs_dim, model.dtype)
    x = ancestral_sample(model, model.schedule, obs_t, model.x_dim, seed, model.dtype)
    return unflatten(model.normalizer, x, model.horizon, model.dof)


def sample(model, obs, seed, dt=None):
    traj = sample_batch(model, np.asarray(obs, dtype=np.float64).reshape(model.obs_dim), seed)[0]
    return Trajectory(traj, dt if dt is not None else model.meta.get('dt', 1.0))


def save_model(model, path):
    dirname = os.path.dirname(path)
    if dirname:
        os.makedirs(dirname, exist_ok=True)
    torch.save({'arch': model.arch(), 'schedule': model.schedule.to_dict(),
                'normalizer': model.normalizer.to_dict(), 'state_dict': model.state_dict(),
                'meta': model.meta}, path)


def load_model(path):
    from model.denoiser import DenoiserModel

    if not os.path.isfile(path):
        raise DataError('model file does not exist: {}'.format(path))
    checkpoint = torch.load(path, map_location='cpu')
    arch = checkpoint['arch']
    model = DenoiserModel(arch['horizon'], arch['dof'], arch['obs_dim'],
                          NoiseSchedule.from_dict(checkpoint['schedule']),
                          Normalizer.from_dict(checkpoint['normalizer']),
                          hidden_sizes=arch['hidden_sizes'], time_dim=arch['time_dim'],
                          activation=arch['activation'])
    model.to(getattr(torch, arch.get('dtype', 'float32')))
    model.load_state_dict(checkpoint['state_dict'], strict=True)
    model.meta = checkpoint.get('meta', {})
    model.eval()
    return model

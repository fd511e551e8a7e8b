import json
import os

import numpy as np
from torch.utils.data import Dataset

from util.exceptions import DataError, DimensionMismatchError


class Trajectory(object):
    """Fixed-length sequence of joint configurations sampled every ``dt`` seconds."""

    def __init__(self, steps, dt):
        steps = np.asarray(steps, dtype=np.float64)
        if steps.ndim != 2:
            raise DimensionMismatchError('trajectory steps must be [L, dof], got shape {}'.format(steps.shape))
        if steps.shape[0] < 2:
            raise DataError('a trajectory needs at least 2 steps, got {}'.format(steps.shape[0]))
        if not dt > 0:
            raise DataError('dt must be positive, got {}'.format(dt))
        self.steps = steps
        self.dt = float(dt)

    @property
    def length(self):
        return self.steps.shape[0]

    @property
    def dof(self):
        return self.steps.shape[1]

    def __len__(self):
        return self.length

    def __getitem__(self, i):
        return self.steps[i]


class DemoSet(Dataset):
    """Observation/trajectory pairs: obs [N, obs_dim], trajs [N, L, dof], shared dt."""

    def __init__(self, obs, trajs, dt):
        trajs = np.asarray(trajs, dtype=np.float64)
        if trajs.ndim != 3:
            raise DimensionMismatchError('trajectories must be [N, L, dof], got shape {}'.format(trajs.shape))
        obs = np.asarray(obs, dtype=np.float64)
        if obs.size == 0:
            obs = np.zeros((trajs.shape[0], obs.shape[-1] if obs.ndim == 2 else 0))
        else:
            obs = obs.reshape(trajs.shape[0], -1)
        if obs.shape[0] != trajs.shape[0]:
            raise DimensionMismatchError('{} observations for {} trajectories'.format(obs.shape[0], trajs.shape[0]))
        if not dt > 0:
            raise DataError('dt must be positive, got {}'.format(dt))
        if trajs.shape[1] < 1:
            raise DataError('trajectories must have at least one step')
        self.obs = obs
        self.trajs = trajs
        self.dt = float(dt)

    def __len__(self):
        return self.trajs.shape[0]

    def __getitem__(self, index):
        return self.obs[index], self.trajs[index]

    @property
    def horizon(self):
        return self.trajs.shape[1]

    @property
    def dof(self):
        return self.trajs.shape[2]

    @property
    def obs_dim(self):
        return self.obs.shape[1]

    def trajectories(self):
        return [Trajectory(t, self.dt) for t in self.trajs]

    def subset(self, indices):
        indices = np.asarray(indices, dtype=np.int64)
        return DemoSet(self.obs[indices], self.trajs[indices], self.dt)

    def split_halves(self):
        half = len(self) // 2
        return self.subset(np.arange(half)), self.subset(np.arange(half, 2 * half))

    @staticmethod
    def concat(sets):
        sets = list(sets)
        if not sets:
            raise DataError('nothing to concatenate')
        dims = {(s.horizon, s.dof, s.obs_dim) for s in sets}
        if len(dims) != 1:
            raise DimensionMismatchError('cannot concatenate datasets with shapes {}'.format(sorted(dims)))
        return DemoSet(np.concatenate([s.obs for s in sets]), np.concatenate([s.trajs for s in sets]), sets[0].dt)

    def save_jsonl(self, path):
        dirname = os.path.dirname(path)
        if dirname:
            os.makedirs(dirname, exist_ok=True)
        with open(path, 'w') as f:
            for o, t in zip(self.obs, self.trajs):
                record = {'obs': o.tolist(), 'traj': t.tolist(), 'dt': self.dt}
                f.write(json.dumps(record) + '\n')

    @classmethod
    def load_jsonl(cls, path):
        if not os.path.isfile(path):
            raise DataError('dataset file does not exist: {}'.format(path))
        obs, trajs, dts = [], [], set()
        with open(path, 'r') as f:
            for lineno, line in enumerate(f, 1):
                if not line.strip():
                    continue
                try:
                    record = json.loads(line)
                    obs.append(record['obs'])
                    trajs.append(record['traj'])
                    dts.add(float(record['dt']))
                except (ValueError, KeyError, TypeError) as e:
                    raise DataError('{}:{}: malformed record ({})'.format(path, lineno, e))
        if not trajs:
            raise DataError('dataset file {} is empty'.format(path))
        if len(dts) != 1:
            raise DataError('dataset file {} mixes dt values {}'.format(path, sorted(dts)))
        shapes = {np.shape(t) for t in trajs}
        if len(shapes) != 1:
            raise DimensionMismatchError('dataset file {} mixes trajectory shapes {}'.format(path, sorted(shapes)))
        if len({len(o) for o in obs}) != 1:
            raise DimensionMismatchError('dataset file {} mixes observation sizes'.format(path))
        return cls(np.asarray(obs, dtype=np.float64), np.asarray(trajs, dtype=np.float64), dts.pop())


class Normalizer(object):
    """Per-dimension affine map of trajectories and observations to zero mean, unit variance."""

    def __init__(self, traj_mean, traj_std, obs_mean, obs_std):
        self.traj_mean = np.asarray(traj_mean, dtype=np.float64)
        self.traj_std = np.asarray(traj_std, dtype=np.float64)
        self.obs_mean = np.asarray(obs_mean, dtype=np.float64).reshape(-1)
        self.obs_std = np.asarray(obs_std, dtype=np.float64).reshape(-1)

    @classmethod
    def fit(cls, demos, min_std=1e-6):
        traj_mean = demos.trajs.mean(axis=0)
        traj_std = demos.trajs.std(axis=0)
        traj_std = np.where(traj_std < min_std, 1.0, traj_std)
        obs_mean = demos.obs.mean(axis=0)
        obs_std = demos.obs.std(axis=0)
        obs_std = np.where(obs_std < min_std, 1.0, obs_std)
        return cls(traj_mean, traj_std, obs_mean, obs_std)

    @property
    def shape(self):
        return self.traj_mean.shape

    def normalize_traj(self, trajs):
        return (np.asarray(trajs) - self.traj_mean) / self.traj_std

    def denormalize_traj(self, x):
        return np.asarray(x) * self.traj_std + self.traj_mean

    def normalize_obs(self, obs):
        obs = np.asarray(obs, dtype=np.float64)
        if obs.ndim == 1:
            obs = obs[None]
        if obs.shape[-1] != self.obs_mean.shape[0]:
            raise DimensionMismatchError('observation of size {} for a normaliser fitted on {}'.format(
                obs.shape[-1], self.obs_mean.shape[0]))
        return (obs - self.obs_mean) / self.obs_std

    def to_dict(self):
        return {'traj_mean': self.traj_mean.tolist(), 'traj_std': self.traj_std.tolist(),
                'obs_mean': self.obs_mean.tolist(), 'obs_std': self.obs_std.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(d['traj_mean'], d['traj_std'], d['obs_mean'], d['obs_std'])

    def __eq__(self, other):
        if not isinstance(other, Normalizer):
            return NotImplemented
        return all(np.array_equal(a, b) for a, b in zip(
            (self.traj_mean, self.traj_std, self.obs_mean, self.obs_std),
            (other.traj_mean, other.traj_std, other.obs_mean, other.obs_std)))

    def __ne__(self, other):
        result = self.__eq__(other)
        return result if result is NotImplemented else not result

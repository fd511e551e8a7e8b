import math

import torch
import torch.nn as nn

from util.common_util import init_weights

_ACTIVATIONS = {'silu': nn.SiLU, 'mish': nn.Mish, 'gelu': nn.GELU}


class SinusoidalTimeEmbedding(nn.Module):
    """Sinusoidal embedding of the integer diffusion step."""

    def __init__(self, dim):
        super().__init__()
        assert dim % 2 == 0 and dim >= 4
        self.dim = dim

    def forward(self, t):
        half_dim = self.dim // 2
        scale = math.log(10000) / (half_dim - 1)
        freqs = torch.exp(torch.arange(half_dim, dtype=torch.float64, device=t.device) * -scale)
        args = t.to(torch.float64)[:, None] * freqs[None, :]
        return torch.cat([torch.sin(args), torch.cos(args)], dim=-1)


class ConditionalMlp(nn.Module):
    """eps_hat(x_t, o, t): MLP over [x_t, o, emb(t)] with a zero-initialised output layer."""

    def __init__(self, x_dim, obs_dim, hidden_sizes=(128, 128, 128), time_dim=32, activation='silu'):
        super().__init__()
        if activation not in _ACTIVATIONS:
            raise ValueError('activation {} not supported yet'.format(activation))
        self.x_dim = x_dim
        self.obs_dim = obs_dim
        self.time_embed = SinusoidalTimeEmbedding(time_dim)
        layers = []
        in_dim = x_dim + obs_dim + time_dim
        for h in hidden_sizes:
            layers += [nn.Linear(in_dim, h), _ACTIVATIONS[activation]()]
            in_dim = h
        self.body = nn.Sequential(*layers)
        self.head = nn.Linear(in_dim, x_dim)
        init_weights(self, linear="xavier", zero=[self.head])

    def forward(self, x_t, obs, t):
        emb = self.time_embed(t).to(x_t.dtype)
        h = torch.cat([x_t, obs.to(x_t.dtype), emb], dim=-1)
        return self.head(self.body(h))


class DenoiserModel(nn.Module):
    """Noise predictor over flattened, normalised trajectories plus its schedule and normaliser.

    ``forward`` works in normalised space: x_t [B, horizon*dof], obs [B, obs_dim], t [B] in 1..T.
    """

    def __init__(self, horizon, dof, obs_dim, schedule, normalizer, hidden_sizes=(128, 128, 128),
                 time_dim=32, activation='silu', net=None):
        super().__init__()
        self.horizon = int(horizon)
        self.dof = int(dof)
        self.obs_dim = int(obs_dim)
        self.schedule = schedule
        self.normalizer = normalizer
        self.hidden_sizes = tuple(int(h) for h in hidden_sizes)
        self.time_dim = int(time_dim)
        self.activation = activation
        if net is None:
            net = ConditionalMlp(self.x_dim, self.obs_dim, self.hidden_sizes, self.time_dim, activation)
        self.net = net
        self.meta = {}

    @property
    def x_dim(self):
        return self.horizon * self.dof

    @property
    def dtype(self):
        for p in self.parameters():
            return p.dtype
        return torch.get_default_dtype()

    def arch(self):
        return {'horizon': self.horizon, 'dof': self.dof, 'obs_dim': self.obs_dim,
                'hidden_sizes': list(self.hidden_sizes), 'time_dim': self.time_dim,
                'activation': self.activation, 'dtype': str(self.dtype).replace('torch.', '')}

    def forward(self, x_t, obs, t):
        return self.net(x_t, obs, t)

    def parameter_vector(self):
        return nn.utils.parameters_to_vector(self.parameters()).detach()

    def load_parameter_vector(self, vec):
        nn.utils.vector_to_parameters(vec, self.parameters())

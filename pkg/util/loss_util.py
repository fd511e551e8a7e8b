import torch

from util.diffusion import forward_diffuse
from util.exceptions import DimensionMismatchError


def step_weights(schedule, t, weighting, dtype):
    """lambda_t for a batch of steps t [B] (1-based)."""
    w = schedule.loss_weights(weighting)
    return torch.as_tensor(w[t.cpu().numpy() - 1], dtype=dtype)


def diffusion_loss(model, x0, obs, t, noise, weighting='simple'):
    """mean_b lambda_t ||eps_b - eps_hat(a_t, o_b, t_b)||^2 in normalised space.

    x0, noise: [B, horizon*dof]; obs: [B, obs_dim]; t: [B] long in 1..T.
    """
    if x0.shape != noise.shape or x0.shape[-1] != model.x_dim:
        raise DimensionMismatchError('data {} / noise {} for a model over {} values'.format(
            tuple(x0.shape), tuple(noise.shape), model.x_dim))
    if obs.shape[0] != x0.shape[0] or t.shape[0] != x0.shape[0]:
        raise DimensionMismatchError('batch sizes disagree: data {}, obs {}, t {}'.format(
            x0.shape[0], obs.shape[0], t.shape[0]))
    x_t = forward_diffuse(model.schedule, x0, t, noise)
    eps_hat = model(x_t, obs, t)
    per_sample = ((noise - eps_hat) ** 2).sum(dim=-1)
    return (step_weights(model.schedule, t, weighting, per_sample.dtype) * per_sample).mean()


def loss_and_gradient(model, batch, t, noise, weighting='simple'):
    """Loss value and its exact gradient, flattened in ``model.parameters()`` order.

    batch: (x0 [B, x_dim], obs [B, obs_dim]) already normalised.
    """
    x0, obs = batch
    model.zero_grad(set_to_none=True)
    loss = diffusion_loss(model, x0, obs, t, noise, weighting)
    params = [p for p in model.parameters()]
    grads = torch.autograd.grad(loss, params, allow_unused=True)
    flat = torch.cat([(torch.zeros_like(p) if g is None else g).reshape(-1) for p, g in zip(params, grads)])
    return float(loss.detach()), flat.detach()


@torch.no_grad()
def dataset_loss(model, x0, obs, generator, weighting='simple'):
    """One Monte-Carlo pass of the loss over a whole (normalised) dataset."""
    B = x0.shape[0]
    t = torch.randint(1, model.schedule.T + 1, (B,), generator=generator)
    noise = torch.randn(x0.shape, generator=generator, dtype=x0.dtype)
    return float(diffusion_loss(model, x0, obs, t, noise, weighting))

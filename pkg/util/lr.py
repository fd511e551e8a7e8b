import math

from torch.optim.lr_scheduler import LambdaLR

from util.exceptions import DataError

SCHEDULERS = ('none', 'Poly', 'StepLR', 'Cosine')


class WarmupLR(LambdaLR):
  """Per-iteration multiplier: linear warmup over `warmup_iters`, then `decay(s)` on the rest."""

  def __init__(self, optimizer, decay, warmup_iters=0, warmup_ratio=1e-3, last_step=-1):
    self.warmup_iters = int(warmup_iters)

    def factor(s):
      if s < self.warmup_iters:
        return warmup_ratio + (1 - warmup_ratio) * s / self.warmup_iters
      return decay(s - self.warmup_iters)

    super(WarmupLR, self).__init__(optimizer, factor, last_step)


def poly_decay(max_iter, power):
  return lambda s: max(0.0, 1 - s / (max_iter + 1)) ** power


def step_decay(step_size, gamma):
  return lambda s: gamma ** (s // step_size)


def cosine_decay(max_iter, floor=0.0):
  return lambda s: floor + (1 - floor) * 0.5 * (1 + math.cos(math.pi * min(s, max_iter) / max(max_iter, 1)))


def initialize_scheduler(optimizer, config, max_iter):
  """Scheduler stepped once per optimizer iteration; `config` is a TrainConfig."""
  warmup = int(max_iter * config.warmup_fraction)
  rest = max(1, max_iter - warmup)
  if config.scheduler == 'none':
    decay = lambda s: 1.0
  elif config.scheduler == 'Poly':
    decay = poly_decay(rest, config.poly_power)
  elif config.scheduler == 'StepLR':
    decay = step_decay(max(1, int(rest * config.step_fraction)), config.step_gamma)
  elif config.scheduler == 'Cosine':
    decay = cosine_decay(rest)
  else:
    raise DataError("No such scheduler {}".format(config.scheduler))
  return WarmupLR(optimizer, decay, warmup_iters=warmup)

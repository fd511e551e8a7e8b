import math
import os
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np
import torch
from tensorboardX import SummaryWriter
from torch.utils.data import DataLoader, TensorDataset

from model.denoiser import DenoiserModel
from util.common_util import AverageMeter, set_seed, torch_generator
from util.dataset import Normalizer
from util.diffusion import save_model
from util.exceptions import DataError, DimensionMismatchError, TrainingDivergedError
from util.logger import get_logger
from util.loss_util import dataset_loss, diffusion_loss
from util.lr import SCHEDULERS, initialize_scheduler


@dataclass
class TrainConfig:
    epochs: int = 200
    batch_size: int = 64
    base_lr: float = 0.01
    seed: int = 0
    loss_weighting: str = 'simple'
    optimizer: str = 'SGD'
    momentum: float = 0.9
    weight_decay: float = 0.0
    scheduler: str = 'none'
    poly_power: float = 0.9
    step_fraction: float = 0.5
    step_gamma: float = 0.1
    warmup_fraction: float = 0.0
    hidden_sizes: tuple = (128, 128, 128)
    time_dim: int = 32
    activation: str = 'silu'
    print_freq: int = 50
    max_grad_norm: float = 0.0
    dtype: str = 'float32'

    def __post_init__(self):
        self.hidden_sizes = tuple(int(h) for h in self.hidden_sizes)
        if self.epochs < 1 or self.batch_size < 1 or not self.base_lr > 0:
            raise DataError('epochs, batch_size and base_lr must be positive, got {}, {}, {}'.format(
                self.epochs, self.batch_size, self.base_lr))
        if self.loss_weighting not in ('simple', 'schedule'):
            raise DataError('loss_weighting must be simple or schedule, got {}'.format(self.loss_weighting))
        if self.optimizer not in ('SGD', 'Adam', 'AdamW'):
            raise DataError('optimizer must be SGD, Adam or AdamW, got {}'.format(self.optimizer))
        if self.dtype not in ('float32', 'float64'):
            raise DataError('dtype must be float32 or float64, got {}'.format(self.dtype))
        if self.scheduler not in SCHEDULERS:
            raise DataError('scheduler must be one of {}, got {}'.format(SCHEDULERS, self.scheduler))
        if not 0 <= self.warmup_fraction < 1:
            raise DataError('warmup_fraction must be in [0, 1), got {}'.format(self.warmup_fraction))

    @classmethod
    def from_cfg(cls, cfg, **overrides):
        """Pick the TRAIN keys out of a flattened CfgNode."""
        kwargs = {f.name: cfg[f.name] for f in fields(cls) if f.name in cfg}
        kwargs.update(overrides)
        return cls(**kwargs)

    def to_dict(self):
        d = asdict(self)
        d['hidden_sizes'] = list(self.hidden_sizes)
        return d

    @property
    def torch_dtype(self):
        return getattr(torch, self.dtype)


def build_optimizer(model, config):
    if config.optimizer == 'SGD':
        return torch.optim.SGD(model.parameters(), lr=config.base_lr, momentum=config.momentum,
                               weight_decay=config.weight_decay)
    elif config.optimizer == 'Adam':
        return torch.optim.Adam(model.parameters(), lr=config.base_lr, weight_decay=config.weight_decay)
    return torch.optim.AdamW(model.parameters(), lr=config.base_lr, weight_decay=config.weight_decay)


def train_denoiser(dataset, config, schedule, normalizer=None, save_path=None, logger=None):
    """Fit a conditional noise predictor to ``dataset`` (a DemoSet).

    ``normalizer`` defaults to one fitted on the dataset; pass a shared one for models that will be
    composed. ``save_path`` is a run directory receiving ``model.pth`` and tensorboard scalars.
    """
    logger = logger or get_logger()
    if len(dataset) == 0:
        raise DataError('cannot train on an empty dataset')
    if normalizer is None:
        normalizer = Normalizer.fit(dataset)
    if normalizer.shape != (dataset.horizon, dataset.dof) or normalizer.obs_mean.shape[0] != dataset.obs_dim:
        raise DimensionMismatchError('normaliser of shape {} / {} for data {} / {}'.format(
            normalizer.shape, normalizer.obs_mean.shape[0], (dataset.horizon, dataset.dof), dataset.obs_dim))

    set_seed(config.seed)
    model = DenoiserModel(dataset.horizon, dataset.dof, dataset.obs_dim, schedule, normalizer,
                          hidden_sizes=config.hidden_sizes, time_dim=config.time_dim,
                          activation=config.activation).to(config.torch_dtype)
    dtype = config.torch_dtype
    X = torch.as_tensor(normalizer.normalize_traj(dataset.trajs).reshape(len(dataset), -1), dtype=dtype)
    O = torch.as_tensor(normalizer.normalize_obs(dataset.obs), dtype=dtype)

    g = torch_generator(config.seed)
    loader = DataLoader(TensorDataset(X, O), batch_size=min(config.batch_size, len(dataset)), shuffle=True,
                        generator=torch_generator(config.seed + 1), drop_last=False, num_workers=0)
    optimizer = build_optimizer(model, config)
    scheduler = initialize_scheduler(optimizer, config, max_iter=config.epochs * len(loader))

    writer = None
    if save_path:
        os.makedirs(save_path, exist_ok=True)
        writer = SummaryWriter(save_path)

    logger.info("=> training denoiser: {} samples, horizon {}, dof {}, obs_dim {}".format(
        len(dataset), dataset.horizon, dataset.dof, dataset.obs_dim))
    logger.info('#Model parameters: {}'.format(sum([x.nelement() for x in model.parameters()])))

    model.eval()
    initial_loss = dataset_loss(model, X, O, torch_generator(config.seed + 2), config.loss_weighting)
    history = []
    batch_time = AverageMeter()
    end = time.time()
    for epoch in range(config.epochs):
        model.train()
        loss_meter = AverageMeter()
        for i, (x0, obs) in enumerate(loader):
            B = x0.shape[0]
            t = torch.randint(1, schedule.T + 1, (B,), generator=g)
            noise = torch.randn(x0.shape, generator=g, dtype=dtype)
            loss = diffusion_loss(model, x0, obs, t, noise, config.loss_weighting)
            loss_value = loss.item()
            if not math.isfinite(loss_value):
                raise TrainingDivergedError(epoch, loss_value)

            optimizer.zero_grad()
            loss.backward()
            if config.max_grad_norm > 0:
                torch.nn.utils.clip_grad_norm_(model.parameters(), config.max_grad_norm)
            optimizer.step()
            scheduler.step()

            loss_meter.update(loss_value, B)
            batch_time.update(time.time() - end)
            end = time.time()
            current_iter = epoch * len(loader) + i + 1
            if writer is not None:
                writer.add_scalar('loss_train_batch', loss_meter.val, current_iter)

        history.append(loss_meter.avg)
        if writer is not None:
            writer.add_scalar('loss_train', loss_meter.avg, epoch + 1)
        if (epoch + 1) % config.print_freq == 0 or epoch + 1 == config.epochs:
            logger.info('Epoch: [{}/{}] Batch {batch_time.avg:.4f} Loss {loss:.4f} Lr: {lr:.6f}'.format(
                epoch + 1, config.epochs, batch_time=batch_time, loss=loss_meter.avg,
                lr=scheduler.get_last_lr()[0]))

    model.eval()
    final_loss = dataset_loss(model, X, O, torch_generator(config.seed + 2), config.loss_weighting)
    if not math.isfinite(final_loss):
        raise TrainingDivergedError(config.epochs, final_loss)
    if final_loss >= initial_loss:
        logger.warning('training loss did not decrease: {:.4f} -> {:.4f}'.format(initial_loss, final_loss))
    logger.info('=> trained: loss {:.4f} -> {:.4f}'.format(initial_loss, final_loss))

    model.meta = {'seed': int(config.seed), 'epochs': int(config.epochs), 'dt': float(dataset.dt),
                  'initial_loss': initial_loss, 'final_loss': final_loss,
                  'loss_history': [float(v) for v in history], 'train_config': config.to_dict()}
    if writer is not None:
        writer.close()
    if save_path:
        filename = os.path.join(save_path, 'model.pth')
        logger.info('Saving model to: ' + filename)
        save_model(model, filename)
    return model


def loss_history(model):
    return np.asarray(model.meta.get('loss_history', []), dtype=np.float64)

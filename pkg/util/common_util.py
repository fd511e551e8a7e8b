import random
import zlib

import numpy as np
import torch
from torch import nn


class AverageMeter(object):
    """Running mean of a per-batch quantity, weighted by batch size."""
    def __init__(self):
        self.val = 0.0
        self.sum = 0.0
        self.count = 0

    @property
    def avg(self):
        return self.sum / self.count if self.count else 0.0

    def update(self, val, n=1):
        self.val = val
        self.sum += val * n
        self.count += n


def derive_seed(seed, name, *indices):
    """Child seed for the named substream ("data", "train", "sample", "opt") of a root seed.

    The name is hashed with CRC32 so the mapping is stable across interpreter runs.
    """
    entropy = [int(seed) & 0xFFFFFFFF, zlib.crc32(name.encode("utf-8"))] + [int(i) for i in indices]
    return int(np.random.SeedSequence(entropy).generate_state(1, dtype=np.uint32)[0])


def set_seed(seed):
    random.seed(seed)
    np.random.seed(seed)
    torch.manual_seed(seed)


def torch_generator(seed):
    g = torch.Generator()
    g.manual_seed(int(seed))
    return g


def init_weights(model, linear='xavier', zero=()):
    """Re-initialise every nn.Linear of `model`; layers listed in `zero` start at exactly 0."""
    zero_ids = {id(m) for m in zero}
    for m in model.modules():
        if not isinstance(m, nn.Linear):
            continue
        if id(m) in zero_ids:
            nn.init.zeros_(m.weight)
        elif linear == 'kaiming':
            nn.init.kaiming_normal_(m.weight, nonlinearity='relu')
        elif linear == 'xavier':
            nn.init.xavier_normal_(m.weight)
        else:
            raise ValueError("init type of linear error: {}".format(linear))
        if m.bias is not None:
            nn.init.zeros_(m.bias)

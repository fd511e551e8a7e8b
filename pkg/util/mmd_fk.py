"""MMD with a forward-kinematics kernel (MMD-FK).

K_RQ(x, y) = (1 + gamma/2 |x - y|^2)^-2 on control-point positions, K_FK averages K_RQ over the
control points of two configurations (optionally link-weighted) and the trajectory kernel
averages K_FK over aligned timesteps. ``mmd_fk`` is the unbiased squared-MMD estimate.
"""
import math

import numpy as np
from scipy.spatial.distance import cdist

from util.dataset import DemoSet, Trajectory
from util.exceptions import DataError, DimensionMismatchError
from util.kinematics import forward_kinematics, forward_kinematics_batch
from util.logger import get_logger

MODES = ('aligned', 'pooled')


class KernelParams(object):
    def __init__(self, gamma, chain, link_weights=None, mode='aligned'):
        if not gamma > 0 or not math.isfinite(gamma):
            raise DataError('kernel width gamma must be positive, got {}'.format(gamma))
        if mode not in MODES:
            raise DataError('kernel mode must be one of {}, got {}'.format(MODES, mode))
        self.gamma = float(gamma)
        self.chain = chain
        self.mode = mode
        M = chain.num_points
        if link_weights is None:
            link_weights = np.full(M, 1.0 / M)
        link_weights = np.asarray(link_weights, dtype=np.float64).reshape(-1)
        if link_weights.shape[0] != M:
            raise DimensionMismatchError('{} link weights for {} control points'.format(link_weights.shape[0], M))
        if np.any(link_weights < 0) or not link_weights.sum() > 0:
            raise DataError('link weights must be non-negative with a positive sum: {}'.format(link_weights.tolist()))
        self.link_weights = link_weights / link_weights.sum()

    def with_gamma(self, gamma):
        return KernelParams(gamma, self.chain, self.link_weights, self.mode)

    def to_dict(self):
        return {'gamma': self.gamma, 'link_weights': self.link_weights.tolist(), 'mode': self.mode}


def rq(sq_dist, gamma):
    return (1.0 + 0.5 * gamma * sq_dist) ** -2


def k_rq(x, y, gamma):
    if not gamma > 0:
        raise DataError('kernel width gamma must be positive, got {}'.format(gamma))
    d = np.asarray(x, dtype=np.float64) - np.asarray(y, dtype=np.float64)
    return float(rq(float(d @ d), gamma))


def k_fk(params, q1, q2):
    P1 = forward_kinematics(params.chain, q1)
    P2 = forward_kinematics(params.chain, q2)
    d2 = ((P1 - P2) ** 2).sum(axis=-1)
    return float(params.link_weights @ rq(d2, params.gamma))


def _as_traj_array(X, dof=None):
    """DemoSet / sequence of Trajectory / ndarray -> [N, L, dof]."""
    if isinstance(X, DemoSet):
        arr = X.trajs
    elif isinstance(X, Trajectory):
        arr = X.steps[None]
    else:
        arr = np.asarray([x.steps if isinstance(x, Trajectory) else x for x in X], dtype=np.float64)
    if arr.ndim != 3:
        raise DimensionMismatchError('expected trajectories [N, L, dof], got shape {}'.format(arr.shape))
    if dof is not None and arr.shape[2] != dof:
        raise DimensionMismatchError('trajectories with {} joints for a {}-dof chain'.format(arr.shape[2], dof))
    return arr


def control_points(params, X):
    """World positions of every control point of every step: [N, L, M, 3], computed once per set."""
    return forward_kinematics_batch(params.chain, _as_traj_array(X, params.chain.dof))


def k_traj(params, t1, t2):
    s1 = t1.steps if isinstance(t1, Trajectory) else np.asarray(t1, dtype=np.float64)
    s2 = t2.steps if isinstance(t2, Trajectory) else np.asarray(t2, dtype=np.float64)
    if s1.shape != s2.shape:
        raise DimensionMismatchError('trajectories of shapes {} and {} are not aligned'.format(s1.shape, s2.shape))
    P1 = forward_kinematics_batch(params.chain, s1)
    P2 = forward_kinematics_batch(params.chain, s2)
    per_step = rq(((P1 - P2) ** 2).sum(axis=-1), params.gamma) @ params.link_weights
    return float(per_step.mean())


def _points_for_mode(points, mode):
    if mode == 'pooled':
        # every step becomes its own one-step sample
        N, L = points.shape[:2]
        return points.reshape(N * L, 1, *points.shape[2:])
    return points


def _gram_from_points(params, PX, PY):
    """Aligned-timestep trajectory kernel between two control-point caches."""
    if PX.shape[1:] != PY.shape[1:]:
        raise DimensionMismatchError('trajectory sets of lengths {} and {} are not aligned'.format(
            PX.shape[1], PY.shape[1]))
    L, M = PX.shape[1], PX.shape[2]
    K = np.zeros((PX.shape[0], PY.shape[0]))
    for t in range(L):
        for m in range(M):
            if params.link_weights[m] == 0:
                continue
            d2 = cdist(PX[:, t, m], PY[:, t, m], 'sqeuclidean')
            K += params.link_weights[m] * rq(d2, params.gamma)
    return K / L


def gram_matrix(params, X, Y=None):
    PX = _points_for_mode(control_points(params, X), params.mode)
    PY = PX if Y is None else _points_for_mode(control_points(params, Y), params.mode)
    return _gram_from_points(params, PX, PY)


def _offdiag_fsum(K):
    mask = ~np.eye(K.shape[0], dtype=bool)
    return math.fsum(K[mask].tolist())


def mmd_fk(params, X, Y):
    """Unbiased squared-MMD estimate between two trajectory sets; symmetric in (X, Y)."""
    CX, CY = control_points(params, X), control_points(params, Y)
    # the precondition counts trajectories, also when pooling splits them into steps
    if CX.shape[0] < 2 or CY.shape[0] < 2:
        raise DataError('MMD-FK needs at least 2 trajectories per set, got {} and {}'.format(CX.shape[0], CY.shape[0]))
    PX, PY = _points_for_mode(CX, params.mode), _points_for_mode(CY, params.mode)
    m, n = PX.shape[0], PY.shape[0]
    kxx = _offdiag_fsum(_gram_from_points(params, PX, PX)) / (m * (m - 1))
    kyy = _offdiag_fsum(_gram_from_points(params, PY, PY)) / (n * (n - 1))
    kxy = math.fsum(_gram_from_points(params, PX, PY).ravel().tolist()) / (m * n)
    return (kxx + kyy) - 2.0 * kxy


def median_gamma(params, X, Y, max_pairs=1000, seed=0):
    """gamma = 1 / median squared control-point distance over sampled cross pairs."""
    PX = control_points(params, X)
    PY = control_points(params, Y)
    if PX.shape[1:] != PY.shape[1:]:
        raise DimensionMismatchError('trajectory sets of lengths {} and {} are not aligned'.format(
            PX.shape[1], PY.shape[1]))
    rng = np.random.default_rng(seed)
    total = PX.shape[0] * PY.shape[0]
    if total <= max_pairs:
        ii, jj = np.divmod(np.arange(total), PY.shape[0])
    else:
        ii = rng.integers(PX.shape[0], size=max_pairs)
        jj = rng.integers(PY.shape[0], size=max_pairs)
    d2 = ((PX[ii] - PY[jj]) ** 2).sum(axis=-1)
    med = float(np.median(d2))
    if not med > 0:
        get_logger().warning('median squared distance is zero, falling back to gamma = 1')
        return 1.0
    return 1.0 / med

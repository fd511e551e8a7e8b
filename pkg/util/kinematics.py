"""Serial-chain kinematics with standard (proximal) Denavit-Hartenberg parameters.

Every link carries one control point expressed in its own frame. Frame ``i`` is the frame
after joint ``i``; joint ``i`` rotates about the z-axis of frame ``i-1`` (frame 0 is the base).
All joints are revolute.
"""
import json
import os

import numpy as np
import scipy.linalg

from util.exceptions import DataError, DimensionMismatchError, SingularityError


class KinematicChain(object):
    def __init__(self, dh, limits, control_points=None, name='chain', home=None):
        self.name = name
        self.dh = np.asarray(dh, dtype=np.float64).reshape(-1, 4)  # rows: a, alpha, d, theta_offset
        n = self.dh.shape[0]
        if n < 1:
            raise DataError('a kinematic chain needs at least one link')
        self.limits = np.asarray(limits, dtype=np.float64).reshape(-1, 2)
        if self.limits.shape[0] != n:
            raise DimensionMismatchError('{} joint limits for {} links'.format(self.limits.shape[0], n))
        if not np.all(self.limits[:, 0] < self.limits[:, 1]):
            raise DataError('joint limits must satisfy lo < hi, got {}'.format(self.limits.tolist()))
        if control_points is None:
            control_points = np.zeros((n, 3))
        self.control_points = np.asarray(control_points, dtype=np.float64).reshape(-1, 3)
        if self.control_points.shape[0] != n:
            raise DimensionMismatchError('{} control points for {} links'.format(self.control_points.shape[0], n))
        if home is None:
            home = self.limits.mean(axis=1)
        self.home = self.check_config(home)

    @property
    def dof(self):
        return self.dh.shape[0]

    @property
    def num_points(self):
        return self.control_points.shape[0]

    def check_config(self, q):
        q = np.asarray(q, dtype=np.float64)
        if q.shape[-1:] != (self.dof,):
            raise DimensionMismatchError('configuration of shape {} for a {}-dof chain'.format(q.shape, self.dof))
        if not np.all(np.isfinite(q)):
            raise DataError('configuration has non-finite entries')
        return q

    def clip(self, q):
        return np.clip(q, self.limits[:, 0], self.limits[:, 1])

    def within_limits(self, q, tol=1e-12):
        q = np.asarray(q)
        return bool(np.all(q >= self.limits[:, 0] - tol) and np.all(q <= self.limits[:, 1] + tol))

    def to_dict(self):
        return {'name': self.name, 'dh': self.dh.tolist(), 'limits': self.limits.tolist(),
                'control_points': self.control_points.tolist(), 'home': self.home.tolist()}

    @classmethod
    def from_dict(cls, d):
        try:
            return cls(d['dh'], d['limits'], d.get('control_points'), name=d.get('name', 'chain'), home=d.get('home'))
        except KeyError as e:
            raise DataError('chain config is missing key {}'.format(e))

    def __repr__(self):
        return 'KinematicChain(name={}, dof={})'.format(self.name, self.dof)


def load_chain(path):
    if not os.path.isfile(path):
        raise DataError('chain file does not exist: {}'.format(path))
    with open(path, 'r') as f:
        try:
            d = json.load(f)
        except ValueError as e:
            raise DataError('chain file {} is not valid JSON: {}'.format(path, e))
    return KinematicChain.from_dict(d)


def save_chain(chain, path):
    with open(path, 'w') as f:
        json.dump(chain.to_dict(), f, indent=2)


def dh_transform(a, alpha, d, theta):
    """Homogeneous transform Rz(theta) Tz(d) Tx(a) Rx(alpha); broadcasts over theta."""
    theta = np.asarray(theta, dtype=np.float64)
    ct, st = np.cos(theta), np.sin(theta)
    ca, sa = np.cos(alpha) * np.ones_like(theta), np.sin(alpha) * np.ones_like(theta)
    zero, one = np.zeros_like(theta), np.ones_like(theta)
    T = np.stack([
        np.stack([ct, -st * ca, st * sa, a * ct], -1),
        np.stack([st, ct * ca, -ct * sa, a * st], -1),
        np.stack([zero, sa, ca, d * one], -1),
        np.stack([zero, zero, zero, one], -1),
    ], -2)
    return T


def link_frames(chain, Q):
    """World transforms of frames 1..n for configurations Q[..., dof] -> [..., n, 4, 4]."""
    Q = chain.check_config(Q)
    frames = []
    T = np.broadcast_to(np.eye(4), Q.shape[:-1] + (4, 4))
    for i in range(chain.dof):
        a, alpha, d, offset = chain.dh[i]
        T = T @ dh_transform(a, alpha, d, Q[..., i] + offset)
        frames.append(T)
    return np.stack(frames, -3)


def forward_kinematics_batch(chain, Q):
    """Control-point positions for configurations Q[..., dof] -> [..., M, 3]."""
    frames = link_frames(chain, Q)
    R, p = frames[..., :3, :3], frames[..., :3, 3]
    return np.einsum('...mij,mj->...mi', R, chain.control_points) + p


def forward_kinematics(chain, q):
    q = chain.check_config(q)
    if q.ndim != 1:
        raise DimensionMismatchError('expected a single configuration, got shape {}'.format(q.shape))
    return forward_kinematics_batch(chain, q)


def end_effector_path(chain, traj):
    """Last control point over the steps of a trajectory [L, dof] -> [L, 3]."""
    return forward_kinematics_batch(chain, np.asarray(traj))[..., -1, :]


def jacobian(chain, q, point_index=-1):
    """Positional Jacobian (3 x dof) of one control point; distal joints get zero columns."""
    q = chain.check_config(q)
    M = chain.num_points
    if not -M <= point_index < M:
        raise IndexError('control point index {} out of range for {} points'.format(point_index, M))
    m = point_index % M
    frames = link_frames(chain, q)
    p = frames[m, :3, :3] @ chain.control_points[m] + frames[m, :3, 3]
    J = np.zeros((3, chain.dof))
    z, o = np.array([0.0, 0.0, 1.0]), np.zeros(3)
    for j in range(m + 1):
        J[:, j] = np.cross(z, p - o)
        z, o = frames[j, :3, 2], frames[j, :3, 3]
    return J


def damped_least_squares(J, v, lam):
    """q_dot = J^T (J J^T + lam^2 I)^-1 v."""
    J = np.asarray(J, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if lam < 0:
        raise DataError('damping must be non-negative, got {}'.format(lam))
    if not np.all(np.isfinite(v)):
        raise DataError('target velocity has non-finite entries')
    if v.shape != (J.shape[0],):
        raise DimensionMismatchError('velocity of shape {} for a {}-row Jacobian'.format(v.shape, J.shape[0]))
    A = J @ J.T + (lam ** 2) * np.eye(J.shape[0])
    if lam == 0 and np.linalg.matrix_rank(J) < J.shape[0]:
        raise SingularityError('undamped least squares at a singular Jacobian')
    try:
        y = scipy.linalg.solve(A, v, assume_a='pos')
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as e:
        raise SingularityError('damped least squares system is singular: {}'.format(e))
    qdot = J.T @ y
    if not np.all(np.isfinite(qdot)):
        raise SingularityError('damped least squares produced non-finite joint velocities')
    return qdot


def damped_ls_ik_step(chain, q, target_velocity, lam=0.05, point_index=-1, locked=()):
    """Joint velocity tracking a task-space velocity of one control point.

    Joints in ``locked`` keep zero velocity (their Jacobian columns are dropped).
    """
    J = jacobian(chain, q, point_index)
    if len(locked):
        J[:, list(locked)] = 0.0
    return damped_least_squares(J, target_velocity, lam)

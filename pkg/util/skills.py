"""Parametric skill generators.

A skill is a task-space reference path for the end-effector, started from a randomized initial
joint configuration and tracked with damped least-squares differential IK. Osc skills instead
drive one mid-chain joint sinusoidally while the remaining joints servo the end-effector.
"""
import math

import numpy as np

from util.dataset import DemoSet
from util.exceptions import DataError, GenerationError
from util.kinematics import damped_ls_ik_step, forward_kinematics, link_frames

SKILL_KINDS = (
    'LineX', 'LineY', 'LineZ',
    'CircleX', 'CircleY', 'CircleZ',
    'OscX', 'OscY', 'OscZ',
    'Spiral', 'Step', 'SMotion', 'Spring',
    'MultiModalLine', 'OscLine',
)

_AXES = {'X': np.array([1.0, 0.0, 0.0]), 'Y': np.array([0.0, 1.0, 0.0]), 'Z': np.array([0.0, 0.0, 1.0])}
# in-plane basis (u, v) of the plane normal to each axis, right-handed
_PLANES = {'X': ('Y', 'Z'), 'Y': ('Z', 'X'), 'Z': ('X', 'Y')}


def skill_kind_from_name(name):
    """'line-x' / 'multi-modal-line' / 'LineX' -> canonical kind."""
    key = name.replace('-', '').replace('_', '').lower()
    for kind in SKILL_KINDS:
        if kind.lower() == key:
            return kind
    raise DataError('unknown skill {}; expected one of {}'.format(name, ', '.join(SKILL_KINDS)))


class SkillSpec(object):
    """Parameters of one skill.

    amplitude: circle/spiral/spring radius, S-motion lateral amplitude, step height (length units),
        or the Osc joint amplitude (radians).
    speed: path speed in length units per second (arc speed for circles and spirals).
    """

    def __init__(self, kind, amplitude=0.1, speed=0.2, axis=None, direction=None, directions=None,
                 advance_speed=0.1, frequency=1.0, home=None, jitter=0.1, lam=0.05,
                 ik_iters=100, track_tol=1e-3):
        self.kind = skill_kind_from_name(kind)
        if not amplitude > 0 or not speed > 0:
            raise DataError('amplitude and speed must be positive, got {} and {}'.format(amplitude, speed))
        if jitter < 0:
            raise DataError('jitter must be non-negative, got {}'.format(jitter))
        self.amplitude = float(amplitude)
        self.speed = float(speed)
        self.axis = (axis or self._default_axis()).upper()
        if self.axis not in _AXES:
            raise DataError('axis must be one of X, Y, Z, got {}'.format(axis))
        self.direction = None if direction is None else _unit(direction)
        if directions is None and self.kind == 'MultiModalLine':
            directions = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]
        self.directions = None if directions is None else [_unit(d) for d in directions]
        self.advance_speed = float(advance_speed)
        self.frequency = float(frequency)
        self.home = None if home is None else np.asarray(home, dtype=np.float64)
        self.jitter = float(jitter)
        self.lam = float(lam)
        self.ik_iters = int(ik_iters)
        self.track_tol = float(track_tol)

    def _default_axis(self):
        last = self.kind[-1]
        return last if last in _AXES and self.kind != 'MultiModalLine' else 'X'

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        kind = d.pop('kind', None) or d.pop('skill', None)
        if kind is None:
            raise DataError('skill spec is missing its kind')
        try:
            return cls(kind, **d)
        except TypeError as e:
            raise DataError('bad skill spec {}: {}'.format(kind, e))

    def to_dict(self):
        d = {'kind': self.kind, 'amplitude': self.amplitude, 'speed': self.speed, 'axis': self.axis,
             'advance_speed': self.advance_speed, 'frequency': self.frequency, 'jitter': self.jitter,
             'lam': self.lam, 'ik_iters': self.ik_iters, 'track_tol': self.track_tol}
        if self.direction is not None:
            d['direction'] = self.direction.tolist()
        if self.directions is not None:
            d['directions'] = [v.tolist() for v in self.directions]
        if self.home is not None:
            d['home'] = self.home.tolist()
        return d

    @property
    def is_osc(self):
        return self.kind.startswith('Osc')


def _unit(v):
    v = np.asarray(v, dtype=np.float64).reshape(3)
    n = np.linalg.norm(v)
    if not n > 0:
        raise DataError('direction must be non-zero')
    return v / n


def _smoothstep(s):
    s = np.clip(s, 0.0, 1.0)
    return s * s * (3.0 - 2.0 * s)


def reference_path(spec, p0, times, rng):
    """End-effector reference positions [L, 3] starting at p0."""
    t = np.asarray(times, dtype=np.float64)[:, None]
    duration = max(float(times[-1]), 1e-12)
    axis = _AXES[spec.axis]
    u, v = (_AXES[k] for k in _PLANES[spec.axis])
    r = spec.amplitude

    def circle(phase):
        centre = p0 - r * u
        return centre + r * (np.cos(phase) * u + np.sin(phase) * v)

    kind = spec.kind
    if kind.startswith('Line') or kind == 'OscLine':
        default = np.array([1.0, 0.0, 1.0]) / math.sqrt(2.0) if kind == 'OscLine' else axis
        direction = spec.direction if spec.direction is not None else default
        return p0 + direction * spec.speed * t
    if kind == 'MultiModalLine':
        direction = spec.directions[rng.integers(len(spec.directions))]
        return p0 + direction * spec.speed * t
    if kind.startswith('Circle'):
        return circle(spec.speed * t / r)
    if kind == 'Spiral':
        return circle(spec.speed * t / r) + axis * spec.advance_speed * t
    if kind == 'Spring':
        return circle(2.0 * math.pi * spec.frequency * t) + axis * spec.advance_speed * t
    if kind == 'Step':
        # advance along +X, rise by `amplitude` along +Z around the midpoint
        width = 0.2 * duration
        rise = _smoothstep((t - (0.5 * duration - 0.5 * width)) / width)
        return p0 + _AXES['X'] * spec.speed * t + _AXES['Z'] * r * rise
    if kind == 'SMotion':
        return p0 + _AXES['X'] * spec.speed * t + _AXES['Y'] * r * np.sin(2.0 * math.pi * t / duration)
    if kind.startswith('Osc'):
        return np.repeat(p0[None], len(times), axis=0)
    raise DataError('no reference path for skill {}'.format(kind))


def osc_joint(chain, q0, axis):
    """Mid-chain joint whose rotation axis at q0 is most aligned with ``axis``."""
    candidates = list(range(1, chain.dof - 1))
    if not candidates:
        raise DataError('Osc skills need a chain with at least 3 joints, got {}'.format(chain.dof))
    frames = link_frames(chain, q0)
    # joint j rotates about z of frame j-1
    alignment = [abs(float(frames[j - 1, :3, 2] @ _AXES[axis])) for j in candidates]
    return candidates[int(np.argmax(alignment))]


def _track(chain, q0, targets, spec, sample_index, driven=None, drive_values=None):
    q = q0.copy()
    steps = [q.copy()]
    locked = () if driven is None else (driven,)
    inner_tol = 0.01 * spec.track_tol
    for k in range(1, targets.shape[0]):
        if driven is not None:
            q[driven] = drive_values[k]
        for _ in range(spec.ik_iters):
            err = targets[k] - forward_kinematics(chain, q)[-1]
            if np.linalg.norm(err) < inner_tol:
                break
            q = chain.clip(q + damped_ls_ik_step(chain, q, err, spec.lam, locked=locked))
        err = np.linalg.norm(targets[k] - forward_kinematics(chain, q)[-1])
        if err > spec.track_tol:
            raise GenerationError(sample_index, 'IK tracking error {:.2e} at step {} exceeds {:.1e}'.format(
                err, k, spec.track_tol))
        steps.append(q.copy())
    return np.stack(steps)


def generate_skill_sample(chain, spec, horizon, dt, seed, sample_index):
    rng = np.random.default_rng([int(seed), int(sample_index)])
    home = chain.home if spec.home is None else chain.check_config(spec.home)
    q0 = chain.clip(home + rng.uniform(-spec.jitter, spec.jitter, size=chain.dof))
    times = np.arange(horizon) * dt
    p0 = forward_kinematics(chain, q0)[-1]
    targets = reference_path(spec, p0, times, rng)
    driven, drive_values = None, None
    if spec.is_osc:
        driven = osc_joint(chain, q0, spec.axis)
        drive_values = q0[driven] + spec.amplitude * np.sin(2.0 * math.pi * spec.frequency * times)
        lo, hi = chain.limits[driven]
        if drive_values.min() < lo or drive_values.max() > hi:
            raise GenerationError(sample_index, 'oscillation of joint {} leaves its limits'.format(driven))
    traj = _track(chain, q0, targets, spec, sample_index, driven, drive_values)
    return q0, traj


def generate_skill_dataset(chain, spec, count, horizon, dt, seed):
    """``count`` (initial configuration, trajectory) pairs; sample i depends only on (seed, i)."""
    if count < 1:
        raise DataError('count must be at least 1, got {}'.format(count))
    if horizon < 2:
        raise DataError('trajectory length must be at least 2, got {}'.format(horizon))
    if not dt > 0:
        raise DataError('dt must be positive, got {}'.format(dt))
    obs, trajs = [], []
    for i in range(count):
        q0, traj = generate_skill_sample(chain, spec, horizon, dt, seed, i)
        obs.append(q0)
        trajs.append(traj)
    return DemoSet(np.stack(obs), np.stack(trajs), dt)

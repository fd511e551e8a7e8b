import math

import numpy as np
import pytest

from util.exceptions import DataError, GenerationError
from util.kinematics import end_effector_path, forward_kinematics
from util.skills import SkillSpec, generate_skill_dataset, generate_skill_sample, skill_kind_from_name

HORIZON, DT = 8, 0.1


def test_skill_names():
    assert skill_kind_from_name('line-x') == 'LineX'
    assert skill_kind_from_name('multi-modal-line') == 'MultiModalLine'
    assert skill_kind_from_name('Spiral') == 'Spiral'
    with pytest.raises(DataError):
        skill_kind_from_name('zigzag')


def test_skill_spec_validation():
    with pytest.raises(DataError):
        SkillSpec('LineX', amplitude=0.0)
    with pytest.raises(DataError):
        SkillSpec('LineX', axis='W')
    with pytest.raises(DataError):
        SkillSpec.from_dict({'speed': 0.1})
    spec = SkillSpec.from_dict({'kind': 'circle-z', 'amplitude': 0.05})
    assert spec.kind == 'CircleZ' and spec.axis == 'Z'
    assert SkillSpec.from_dict(spec.to_dict()).to_dict() == spec.to_dict()


def test_line_without_jitter_is_a_straight_segment(planar3):
    spec = SkillSpec('LineX', speed=0.1, jitter=0.0)
    data = generate_skill_dataset(planar3, spec, 3, HORIZON, DT, seed=0)
    assert data.trajs.shape == (3, HORIZON, 3)
    np.testing.assert_array_equal(data.trajs[0], data.trajs[1])
    path = end_effector_path(planar3, data.trajs[0])
    expected = path[0] + np.outer(np.arange(HORIZON) * DT, [0.1, 0.0, 0.0])
    assert np.max(np.linalg.norm(path - expected, axis=1)) < 1e-3
    np.testing.assert_array_equal(data.obs, data.trajs[:, 0])


def test_circle_stays_on_its_ring(planar3):
    spec = SkillSpec('CircleZ', amplitude=0.05, speed=0.1)
    data = generate_skill_dataset(planar3, spec, 4, HORIZON, DT, seed=1)
    for traj in data.trajs:
        path = end_effector_path(planar3, traj)
        centre = path[0] - np.array([0.05, 0.0, 0.0])
        radius = np.linalg.norm(path[:, :2] - centre[:2], axis=1)
        assert np.all(np.abs(radius - 0.05) < 1e-2)


def test_unreachable_path_names_the_sample(planar3):
    # a planar chain cannot leave its plane
    with pytest.raises(GenerationError) as info:
        generate_skill_dataset(planar3, SkillSpec('CircleX', amplitude=0.1, speed=0.1), 2, HORIZON, DT, seed=0)
    assert info.value.sample_index == 0


def test_osc_keeps_end_effector_fixed(planar3):
    spec = SkillSpec('OscZ', amplitude=0.1, frequency=1.0, jitter=0.0)
    data = generate_skill_dataset(planar3, spec, 1, HORIZON, DT, seed=0)
    traj = data.trajs[0]
    path = end_effector_path(planar3, traj)
    assert np.max(np.linalg.norm(path - path[0], axis=1)) < 1e-3
    times = np.arange(HORIZON) * DT
    np.testing.assert_allclose(traj[:, 1], traj[0, 1] + 0.1 * np.sin(2 * math.pi * times), atol=1e-12)


def test_multi_modal_line_picks_one_direction_per_sample(planar3):
    spec = SkillSpec('MultiModalLine', speed=0.1, directions=[[-1, 0, 0], [0, -1, 0]])
    data = generate_skill_dataset(planar3, spec, 6, HORIZON, DT, seed=2)
    for traj in data.trajs:
        path = end_effector_path(planar3, traj)
        step = (path[-1] - path[0]) / np.linalg.norm(path[-1] - path[0])
        assert min(np.linalg.norm(step - [-1, 0, 0]), np.linalg.norm(step - [0, -1, 0])) < 5e-2


def test_generation_is_deterministic_and_within_limits(planar3):
    spec = SkillSpec('LineY', speed=0.1, direction=[0, -1, 0])
    a = generate_skill_dataset(planar3, spec, 5, HORIZON, DT, seed=7)
    b = generate_skill_dataset(planar3, spec, 5, HORIZON, DT, seed=7)
    c = generate_skill_dataset(planar3, spec, 5, HORIZON, DT, seed=8)
    np.testing.assert_array_equal(a.trajs, b.trajs)
    assert not np.array_equal(a.trajs, c.trajs)
    assert all(planar3.within_limits(q) for traj in a.trajs for q in traj)
    # sample i only depends on (seed, i)
    d = generate_skill_dataset(planar3, spec, 2, HORIZON, DT, seed=7)
    np.testing.assert_array_equal(d.trajs, a.trajs[:2])


def test_generation_preconditions(planar3):
    spec = SkillSpec('LineX', speed=0.1)
    with pytest.raises(DataError):
        generate_skill_dataset(planar3, spec, 0, HORIZON, DT, seed=0)
    with pytest.raises(DataError):
        generate_skill_dataset(planar3, spec, 1, 1, DT, seed=0)


def test_initial_pose_is_forward_kinematics_start(planar3):
    data = generate_skill_dataset(planar3, SkillSpec('LineX', speed=0.1), 2, HORIZON, DT, seed=3)
    for q0, traj in zip(data.obs, data.trajs):
        np.testing.assert_allclose(forward_kinematics(planar3, q0)[-1], end_effector_path(planar3, traj)[0])


def test_sample_depends_only_on_seed_and_index(planar3):
    spec = SkillSpec('CircleZ', amplitude=0.05, speed=0.1)
    data = generate_skill_dataset(planar3, spec, 4, HORIZON, DT, seed=3)
    q0, traj = generate_skill_sample(planar3, spec, HORIZON, DT, seed=3, sample_index=2)
    np.testing.assert_array_equal(q0, data.obs[2])
    np.testing.assert_array_equal(traj, data.trajs[2])

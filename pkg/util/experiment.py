"""Canned experiment pipelines: few-shot skill transfer, mode filtering, blends and the 2D toy sweep.

Every stage draws its randomness from ``derive_seed(seed, <stream>, ...)`` so a rerun with the same
config reproduces the CSV files exactly.
"""
import contextlib
import csv
import json
import math
import os

import numpy as np

from util.common_util import derive_seed
from util.composition import CompositionWeights, PolicyEnsemble, composed_sample_batch, mode_filtering_check
from util.dataset import DemoSet, Normalizer
from util.diffusion import NoiseSchedule, sample_batch
from util.dse import DseConfig, mse_from_rollouts, optimize_weights
from util.exceptions import DataError, DseError
from util.kinematics import load_chain
from util.logger import get_logger
from util.mmd_fk import KernelParams, median_gamma, mmd_fk
from util.skills import SkillSpec, generate_skill_dataset
from util.train_util import TrainConfig, train_denoiser
from util.vis_util import write_end_effector_svg, write_toy_panels_svg

KINDS = ('few_shot', 'mode_filtering', 'blend')
REPO_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
TOY_WEIGHTS = (0.0, 1.0 / 3.0, 0.5, 2.0 / 3.0, 1.0)


def resolve_path(path):
    """Paths in configs may be relative to the working directory or to the repository root."""
    if path is None or os.path.isabs(path) or os.path.exists(path):
        return path
    candidate = os.path.join(REPO_ROOT, path)
    return candidate if os.path.exists(candidate) else path


def build_schedule(cfg):
    return NoiseSchedule.linear(int(cfg.get('T', 100)), float(cfg.get('beta_start', 1e-4)),
                                float(cfg.get('beta_end', 0.2)))


def _skill(d, label):
    if isinstance(d, SkillSpec):
        return d
    if not isinstance(d, dict):
        raise DataError('{} must be a skill mapping, got {!r}'.format(label, d))
    return SkillSpec.from_dict(d)


class ExperimentSpec(object):
    def __init__(self, name, kind, chain, horizon, dt, base_count=100, eval_count=50, seeds=(0,),
                 bases=(), demo_skill=None, demo_counts=(5, 15, 40), policy_a=None, policy_b=None,
                 reference=None, parents=(), labels=None):
        if kind not in KINDS:
            raise DataError('experiment kind must be one of {}, got {}'.format(KINDS, kind))
        chain_path = resolve_path(chain)
        if not chain_path or not os.path.isfile(chain_path):
            raise DataError('chain file does not exist: {}'.format(chain))
        self.name = name
        self.kind = kind
        self.chain_path = chain_path
        self.chain = load_chain(chain_path)
        self.horizon = int(horizon)
        self.dt = float(dt)
        self.base_count = int(base_count)
        self.eval_count = int(eval_count)
        self.seeds = [int(s) for s in seeds]
        self.bases = [_skill(b, 'base skill') for b in bases]
        self.labels = list(labels) if labels else [b.kind for b in self.bases]
        self.demo_skill = None if demo_skill is None else _skill(demo_skill, 'demo_skill')
        self.demo_counts = [int(c) for c in demo_counts]
        self.policy_a = None if policy_a is None else _skill(policy_a, 'policy_a')
        self.policy_b = None if policy_b is None else _skill(policy_b, 'policy_b')
        self.reference = None if reference is None else _skill(reference, 'reference')
        self.parents = [_skill(p, 'parent skill') for p in parents]
        if self.eval_count < 2 or self.base_count < 2:
            raise DataError('base_count and eval_count must be at least 2')
        if kind == 'few_shot':
            if not self.bases or self.demo_skill is None:
                raise DataError('a few_shot experiment needs bases and a demo_skill')
            if any(c < 2 for c in self.demo_counts):
                raise DataError('demo counts must be at least 2, got {}'.format(self.demo_counts))
            if len(self.labels) != len(self.bases):
                raise DataError('{} labels for {} bases'.format(len(self.labels), len(self.bases)))
        if kind == 'mode_filtering' and None in (self.policy_a, self.policy_b, self.reference):
            raise DataError('a mode_filtering experiment needs policy_a, policy_b and reference')
        if kind == 'blend' and len(self.parents) != 2:
            raise DataError('a blend experiment needs exactly two parents, got {}'.format(len(self.parents)))

    @classmethod
    def from_cfg(cls, cfg):
        keys = ('name', 'kind', 'chain', 'horizon', 'dt', 'base_count', 'eval_count', 'seeds', 'bases',
                'demo_skill', 'demo_counts', 'policy_a', 'policy_b', 'reference', 'parents', 'labels')
        kwargs = {k: cfg[k] for k in keys if k in cfg and cfg[k] is not None}
        for required in ('name', 'kind', 'chain', 'horizon', 'dt'):
            if required not in kwargs:
                raise DataError('experiment config is missing {}'.format(required))
        return cls(**kwargs)


@contextlib.contextmanager
def stage(name, logger):
    logger.info('=> stage: {}'.format(name))
    try:
        yield
    except DseError as e:
        e.stage = name
        logger.error('stage {} failed: {}'.format(name, e))
        raise


def write_csv(path, header, rows):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(header)
        for row in rows:
            writer.writerow(['{:.6f}'.format(v) if isinstance(v, float) else v for v in row])


def write_json(path, obj):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, 'w') as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write('\n')


def _generate(spec, skill, count, seed, stream_index, logger):
    with stage('generate {}'.format(skill.kind), logger):
        return generate_skill_dataset(spec.chain, skill, count, spec.horizon, spec.dt,
                                      derive_seed(seed, 'data', stream_index))


def train_policies(datasets, labels, schedule, normalizer, train_config, seed, out_dir, logger):
    models = []
    for i, (data, label) in enumerate(zip(datasets, labels)):
        cfg = TrainConfig(**{**train_config.to_dict(), 'seed': derive_seed(seed, 'train', i)})
        with stage('train {}'.format(label), logger):
            models.append(train_denoiser(data, cfg, schedule, normalizer=normalizer,
                                         save_path=os.path.join(out_dir, 'models', label), logger=logger))
    return PolicyEnsemble(models, labels)


def _kernel(spec, cfg, reference, seed):
    params = KernelParams(1.0, spec.chain, link_weights=cfg.get('link_weights'), mode=cfg.get('kernel_mode', 'aligned'))
    gamma = float(cfg.get('gamma', 0.0) or 0.0)
    if gamma <= 0:
        gamma = median_gamma(params, reference, reference, seed=seed)
    return params.with_gamma(gamma)


def arm_seeds(spec, cfg):
    """(label, root seed) per listed seed; the roots hang off the global seed."""
    root = int(cfg.get('seed', 0))
    return [(s, derive_seed(root, 'arm', s)) for s in spec.seeds]


def run_few_shot(spec, cfg, out_dir, logger):
    """Base skills + a few demos of a new skill -> CSV of MMD-FK (and MSE) for vanilla / fine-tuned / DSE."""
    schedule = build_schedule(cfg)
    train_config = TrainConfig.from_cfg(cfg)
    per_seed = []
    for label, seed in arm_seeds(spec, cfg):
        seed_dir = os.path.join(out_dir, 'seed_{}'.format(label))
        base_data = [_generate(spec, b, spec.base_count, seed, i, logger) for i, b in enumerate(spec.bases)]
        pool = _generate(spec, spec.demo_skill, max(spec.demo_counts) + spec.eval_count, seed, len(spec.bases), logger)
        held_out = pool.subset(np.arange(max(spec.demo_counts), len(pool)))
        normalizer = Normalizer.fit(DemoSet.concat(base_data))
        bases = train_policies(base_data, spec.labels, schedule, normalizer, train_config, seed, seed_dir, logger)
        params = _kernel(spec, cfg, held_out, seed)

        for count in spec.demo_counts:
            demos = pool.subset(np.arange(count))
            dse_config = DseConfig.from_cfg(cfg, train=train_config, seed=derive_seed(seed, 'opt', count),
                                            include_vanilla=True)
            with stage('dse {} demos'.format(count), logger):
                result = optimize_weights(bases, demos, dse_config, params=params, prior_datasets=base_data,
                                          save_path=os.path.join(seed_dir, 'models', 'fine_tuned_{}'.format(count)),
                                          logger=logger)
            ensemble = bases.with_model(result.few_shot_model, 'fine_tuned')
            rollout_seed = derive_seed(seed, 'sample', count)
            with stage('rollouts {} demos'.format(count), logger):
                rollouts = {
                    'vanilla': composed_sample_batch(bases, result.baselines['vanilla_weights'], held_out.obs,
                                                     rollout_seed),
                    'fine_tuned': sample_batch(result.few_shot_model, held_out.obs, rollout_seed),
                    'dse': composed_sample_batch(ensemble, result.weights, held_out.obs, rollout_seed),
                }
            row = {'seed': label, 'demos': count, 'weights': result.weights.tolist(), 'labels': result.labels,
                   'objective': result.objective, 'baselines': dict(result.baselines)}
            for arm, trajs in rollouts.items():
                row['mmd_' + arm] = mmd_fk(params, trajs, held_out.trajs)
                row['mse_' + arm] = mse_from_rollouts(trajs, held_out)
            per_seed.append(row)
            write_json(os.path.join(seed_dir, 'dse_{}.json'.format(count)), result.to_dict())
            write_end_effector_svg(spec.chain, held_out.trajs[:10],
                                   {arm: trajs[:10] for arm, trajs in rollouts.items()},
                                   os.path.join(out_dir, 'plots', '{}_{}demos_seed{}.svg'.format(spec.name, count, label)),
                                   title='{} ({} demos)'.format(spec.name, count))
            logger.info('{} demos: vanilla {:.4f} fine_tuned {:.4f} dse {:.4f}'.format(
                count, row['mmd_vanilla'], row['mmd_fine_tuned'], row['mmd_dse']))

    arms = ('vanilla', 'fine_tuned', 'dse')
    mmd_rows, mse_rows = [], []
    for count in spec.demo_counts:
        rows = [r for r in per_seed if r['demos'] == count]
        mmd_rows.append([spec.name, count] + [float(np.mean([r['mmd_' + arm] for r in rows])) for arm in arms])
        mse_rows.append([spec.name, count] + [float(np.mean([r['mse_' + arm] for r in rows])) for arm in arms])
    write_csv(os.path.join(out_dir, 'results.csv'), ['task', 'demos'] + list(arms), mmd_rows)
    write_csv(os.path.join(out_dir, 'mse.csv'), ['task', 'demos'] + list(arms), mse_rows)
    write_json(os.path.join(out_dir, 'summary.json'), {'name': spec.name, 'runs': per_seed})
    return mmd_rows


def run_mode_filtering(spec, cfg, out_dir, logger):
    """Compose two multi-modal policies sharing one mode; the blend should sit closest to that mode."""
    schedule = build_schedule(cfg)
    train_config = TrainConfig.from_cfg(cfg)
    runs = []
    for label, seed in arm_seeds(spec, cfg):
        seed_dir = os.path.join(out_dir, 'seed_{}'.format(label))
        skills = [spec.policy_a, spec.policy_b, spec.reference]
        train_sets = [_generate(spec, s, spec.base_count, seed, i, logger) for i, s in enumerate(skills)]
        eval_sets = [_generate(spec, s, spec.eval_count, seed, 10 + i, logger) for i, s in enumerate(skills)]
        normalizer = Normalizer.fit(DemoSet.concat(train_sets))
        ensemble = train_policies(train_sets, ['A', 'B', 'reference'], schedule, normalizer, train_config, seed,
                                  seed_dir, logger)
        params = _kernel(spec, cfg, DemoSet.concat(eval_sets), seed)
        with stage('compose', logger):
            composed = mode_filtering_check(ensemble.models[0], ensemble.models[1], eval_sets[2].obs,
                                            derive_seed(seed, 'sample'))
        run = {'seed': label,
               'mmd_to_a': mmd_fk(params, composed, eval_sets[0]),
               'mmd_to_b': mmd_fk(params, composed, eval_sets[1]),
               'mmd_to_reference': mmd_fk(params, composed, eval_sets[2])}
        run['reference_closest'] = bool(run['mmd_to_reference'] < min(run['mmd_to_a'], run['mmd_to_b']))
        runs.append(run)
        write_end_effector_svg(spec.chain, eval_sets[2].trajs[:10], {'A+B': composed.trajs[:10]},
                               os.path.join(out_dir, 'plots', '{}_seed{}.svg'.format(spec.name, label)),
                               title=spec.name)
        logger.info('seed {}: to A {:.4f}, to B {:.4f}, to reference {:.4f}'.format(
            label, run['mmd_to_a'], run['mmd_to_b'], run['mmd_to_reference']))
    write_csv(os.path.join(out_dir, 'results.csv'), ['seed', 'mmd_to_a', 'mmd_to_b', 'mmd_to_reference'],
              [[r['seed'], r['mmd_to_a'], r['mmd_to_b'], r['mmd_to_reference']] for r in runs])
    summary = {'name': spec.name, 'runs': runs, 'reference_closest': all(r['reference_closest'] for r in runs)}
    write_json(os.path.join(out_dir, 'summary.json'), summary)
    return summary


def blend_report(spec, cfg, out_dir, logger):
    """MMD-FK of an equal-weight blend to each parent, next to each parent's self-comparison."""
    schedule = build_schedule(cfg)
    train_config = TrainConfig.from_cfg(cfg)
    rows = []
    for label, seed in arm_seeds(spec, cfg):
        seed_dir = os.path.join(out_dir, 'seed_{}'.format(label))
        labels = [p.kind for p in spec.parents]
        train_sets = [_generate(spec, p, spec.base_count, seed, i, logger) for i, p in enumerate(spec.parents)]
        eval_sets = [_generate(spec, p, 2 * spec.eval_count, seed, 10 + i, logger) for i, p in enumerate(spec.parents)]
        normalizer = Normalizer.fit(DemoSet.concat(train_sets))
        ensemble = train_policies(train_sets, labels, schedule, normalizer, train_config, seed, seed_dir, logger)
        params = _kernel(spec, cfg, DemoSet.concat(eval_sets), seed)
        obs = eval_sets[0].obs[:spec.eval_count]
        with stage('compose', logger):
            composed = composed_sample_batch(ensemble, CompositionWeights.uniform(2), obs, derive_seed(seed, 'sample'))
        for parent, data in zip(labels, eval_sets):
            first, second = data.split_halves()
            rows.append([label, 'composed', parent, mmd_fk(params, composed, data)])
            rows.append([label, 'self', parent, mmd_fk(params, first, second)])
        write_end_effector_svg(spec.chain, composed[:10], {l: d.trajs[:10] for l, d in zip(labels, eval_sets)},
                               os.path.join(out_dir, 'plots', '{}_seed{}.svg'.format(spec.name, label)),
                               title=spec.name)
    write_csv(os.path.join(out_dir, 'blend.csv'), ['seed', 'row', 'parent', 'mmd'], rows)
    return rows


def run_experiment(cfg, out_dir, logger=None):
    logger = logger or get_logger()
    spec = ExperimentSpec.from_cfg(cfg)
    os.makedirs(out_dir, exist_ok=True)
    logger.info('=> experiment {} ({}) -> {}'.format(spec.name, spec.kind, out_dir))
    if spec.kind == 'few_shot':
        return run_few_shot(spec, cfg, out_dir, logger)
    elif spec.kind == 'mode_filtering':
        return run_mode_filtering(spec, cfg, out_dir, logger)
    return blend_report(spec, cfg, out_dir, logger)


def gaussian_demos(mean, count, seed, std=1.0):
    """2D Gaussian points as one-step trajectories with no observation."""
    rng = np.random.default_rng(seed)
    pts = rng.normal(loc=mean, scale=std, size=(count, 2))
    return DemoSet(np.zeros((count, 0)), pts[:, None, :], 1.0)


def diagonal_projection(points):
    points = np.asarray(points).reshape(-1, 2)
    return float(np.mean(points @ np.array([1.0, 1.0]) / math.sqrt(2.0)))


def run_toy2d(cfg, out_dir, seed=0, logger=None):
    """Two Gaussians at (5, 5) and (-5, -5); sweep the weight on the first and track the sample mean."""
    logger = logger or get_logger()
    schedule = build_schedule(cfg)
    train_config = TrainConfig.from_cfg(cfg)
    count = int(cfg.get('toy_count', 1000))
    num_samples = int(cfg.get('toy_samples', 200))
    modes = [(5.0, 5.0), (-5.0, -5.0)]
    data = [gaussian_demos(m, count, derive_seed(seed, 'data', i)) for i, m in enumerate(modes)]
    normalizer = Normalizer.fit(DemoSet.concat(data))
    ensemble = train_policies(data, ['gaussian_1', 'gaussian_2'], schedule, normalizer, train_config, seed,
                              out_dir, logger)
    obs = np.zeros((num_samples, 0))
    panels, rows, projections, means = [], [], [], []
    for w1 in TOY_WEIGHTS:
        weights = CompositionWeights([w1, 1.0 - w1])
        pts = composed_sample_batch(ensemble, weights, obs, derive_seed(seed, 'sample'))[:, 0, :]
        projections.append(diagonal_projection(pts))
        means.append(pts.mean(axis=0).tolist())
        panels.append(('w1 = {:.3f}'.format(w1), pts))
        write_csv(os.path.join(out_dir, 'toy2d_w{:.3f}.csv'.format(w1)), ['x', 'y'],
                  [[float(p[0]), float(p[1])] for p in pts])
        rows.append([w1, projections[-1], means[-1][0], means[-1][1]])
    write_csv(os.path.join(out_dir, 'toy2d.csv'), ['w1', 'diagonal_projection', 'mean_x', 'mean_y'], rows)
    write_toy_panels_svg(panels, os.path.join(out_dir, 'toy2d.svg'), modes=modes)
    summary = {'weights': list(TOY_WEIGHTS), 'diagonal_projection': projections, 'means': means,
               'monotone': bool(all(a < b for a, b in zip(projections, projections[1:])))}
    write_json(os.path.join(out_dir, 'summary.json'), summary)
    logger.info('toy2d projections: {}'.format(', '.join('{:.3f}'.format(p) for p in projections)))
    return summary

import argparse
import json
import os
import sys

import numpy as np

from util import config
from util.common_util import derive_seed
from util.composition import PolicyEnsemble, composed_sample_batch, parse_weights
from util.dataset import DemoSet, Normalizer
from util.diffusion import load_model, sample_batch
from util.dse import DseConfig, optimize_weights, vanilla_composition_baseline
from util.exceptions import DataError, DseError
from util.experiment import build_schedule, resolve_path, run_experiment, run_toy2d
from util.kinematics import load_chain
from util.logger import get_logger
from util.mmd_fk import KernelParams, median_gamma, mmd_fk
from util.skills import SkillSpec, generate_skill_dataset, skill_kind_from_name
from util.train_util import TrainConfig, train_denoiser

DEFAULT_CONFIG = 'config/dse/default.yaml'


def get_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', type=str, default=DEFAULT_CONFIG, help='config file')
    common.add_argument('--seed', type=int, default=None, help='root seed for every random stream')
    common.add_argument('--chain', type=str, default=None, help='kinematic chain json')
    common.add_argument('--out', type=str, default=None, help='output root (default $DSE_OUTPUT_ROOT or runs)')

    parser = argparse.ArgumentParser(description='Diffusion policy composition with MMD-FK weight estimation')
    sub = parser.add_subparsers(dest='command')
    sub.required = True

    p = sub.add_parser('gen-data', parents=[common], help='generate a skill dataset (JSON Lines)')
    p.add_argument('--skill', required=True, help='skill name, e.g. line-x, circle-z, spiral')
    p.add_argument('--count', type=int, default=100)
    p.add_argument('--horizon', type=int, default=None)
    p.add_argument('--dt', type=float, default=None)
    p.add_argument('--amplitude', type=float, default=None)
    p.add_argument('--speed', type=float, default=None)
    p.add_argument('--axis', type=str, default=None)
    p.add_argument('--direction', type=str, default=None, help='comma separated 3-vector')
    p.add_argument('--output', type=str, default=None)

    p = sub.add_parser('train', parents=[common], help='train a denoiser on a dataset')
    p.add_argument('--data', required=True)
    p.add_argument('--fit-on', type=str, default=None,
                   help='comma separated datasets to fit the shared normaliser on (models to be composed)')
    p.add_argument('--output', type=str, default=None, help='run directory for model.pth')

    for name, text in (('sample', 'sample trajectories from one model or a composition'),
                       ('compose-sample', 'sample from a weighted composition')):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument('--model', type=str, default=None)
        p.add_argument('--manifest', type=str, default=None)
        p.add_argument('--weights', type=str, default=None, help='comma separated simplex weights')
        p.add_argument('--obs-from', type=str, default=None, help='dataset whose observations condition the samples')
        p.add_argument('--obs', type=str, default=None, help='comma separated initial configuration')
        p.add_argument('--count', type=int, default=1)
        p.add_argument('--output', type=str, default=None)

    p = sub.add_parser('mmdfk', parents=[common], help='MMD-FK between two trajectory datasets')
    p.add_argument('x')
    p.add_argument('y', nargs='?', default=None)
    p.add_argument('--gamma', type=float, default=None)
    p.add_argument('--mode', choices=('aligned', 'pooled'), default=None)
    p.add_argument('--split', action='store_true', help='compare the two halves of X')

    for name, text in (('dse', 'estimate composition weights with a demo-trained policy'),
                       ('vanilla', 'estimate composition weights over base policies only')):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument('--bases', type=str, default=None, help='comma separated model files')
        p.add_argument('--manifest', type=str, default=None)
        p.add_argument('--demos', required=True)
        p.add_argument('--prior-data', type=str, default=None, help='comma separated base datasets')
        p.add_argument('--gamma', type=float, default=None)
        p.add_argument('--output', type=str, default=None)

    sub.add_parser('experiment', parents=[common], help='run an experiment config')
    sub.add_parser('toy2d', parents=[common], help='2D Gaussian weight sweep')

    for name, p in sub.choices.items():
        # a REMAINDER tail after positionals would swallow the flags that follow them
        nargs = '*' if name == 'mmdfk' else argparse.REMAINDER
        p.add_argument('opts', help='KEY VALUE overrides of the config', default=None, nargs=nargs)
    return parser


def load_cfg(args):
    cfg = config.load_cfg_from_cfg_file(resolve_path(args.config))
    if args.opts:
        cfg = config.merge_cfg_from_list(cfg, args.opts)
    if args.seed is not None:
        cfg.seed = args.seed
    cfg.setdefault('seed', 0)
    if args.chain is not None:
        cfg.chain = args.chain
    return cfg


def output_root(args):
    return args.out or os.environ.get('DSE_OUTPUT_ROOT') or 'runs'


def emit(obj):
    sys.stdout.write(json.dumps(obj, sort_keys=True) + '\n')


def _chain(cfg):
    if not cfg.get('chain'):
        raise DataError('no kinematic chain given (--chain or chain: in the config)')
    return load_chain(resolve_path(cfg.chain))


def _floats(text):
    try:
        return [float(v) for v in text.split(',') if v.strip()]
    except ValueError:
        raise DataError('expected comma separated numbers, got {}'.format(text))


def cmd_gen_data(args, cfg, parser):
    try:
        kind = skill_kind_from_name(args.skill)
    except DataError as e:
        parser.error(str(e))
    chain = _chain(cfg)
    overrides = {k: getattr(args, k) for k in ('amplitude', 'speed', 'axis') if getattr(args, k) is not None}
    if args.direction:
        overrides['direction'] = _floats(args.direction)
    spec = SkillSpec(kind, **overrides)
    horizon = args.horizon or int(cfg.horizon)
    dt = args.dt or float(cfg.dt)
    data = generate_skill_dataset(chain, spec, args.count, horizon, dt, derive_seed(cfg.seed, 'data'))
    path = args.output or os.path.join(output_root(args), 'data', '{}.jsonl'.format(args.skill))
    data.save_jsonl(path)
    emit({'path': path, 'count': len(data), 'horizon': data.horizon, 'dof': data.dof, 'skill': kind})


def cmd_train(args, cfg, logger):
    data = DemoSet.load_jsonl(args.data)
    normalizer = None
    if args.fit_on:
        normalizer = Normalizer.fit(DemoSet.concat([DemoSet.load_jsonl(p) for p in args.fit_on.split(',')]))
    train_config = TrainConfig.from_cfg(cfg, seed=derive_seed(cfg.seed, 'train'))
    run_dir = args.output or os.path.join(output_root(args), 'models',
                                          os.path.splitext(os.path.basename(args.data))[0])
    model = train_denoiser(data, train_config, build_schedule(cfg), normalizer=normalizer, save_path=run_dir,
                           logger=logger)
    config.dump_cfg(cfg, os.path.join(run_dir, 'config.yaml'))
    emit({'model': os.path.join(run_dir, 'model.pth'), 'initial_loss': model.meta['initial_loss'],
          'final_loss': model.meta['final_loss'], 'epochs': model.meta['epochs']})


def _sample_obs(args, cfg, obs_dim):
    if args.obs_from:
        obs = DemoSet.load_jsonl(args.obs_from).obs
        return obs[np.arange(args.count) % len(obs)]
    if args.obs:
        return np.tile(np.asarray(_floats(args.obs)), (args.count, 1))
    if obs_dim == 0:
        return np.zeros((args.count, 0))
    return np.tile(_chain(cfg).home, (args.count, 1))


def cmd_sample(args, cfg, parser, composed=False):
    if args.count < 1:
        parser.error('--count must be positive')
    seed = derive_seed(cfg.seed, 'sample')
    if args.manifest:
        if not args.weights:
            parser.error('--manifest needs --weights')
        ensemble = PolicyEnsemble.from_manifest(args.manifest)
        obs = _sample_obs(args, cfg, ensemble.obs_dim)
        trajs = composed_sample_batch(ensemble, parse_weights(args.weights), obs, seed)
        dt = ensemble.dt
    elif args.model and not composed:
        model = load_model(args.model)
        obs = _sample_obs(args, cfg, model.obs_dim)
        trajs = sample_batch(model, obs, seed)
        dt = model.meta.get('dt', 1.0)
    else:
        parser.error('give --model, or --manifest with --weights')
    path = args.output or os.path.join(output_root(args), 'samples', 'samples_{}.jsonl'.format(cfg.seed))
    DemoSet(obs, trajs, dt).save_jsonl(path)
    emit({'path': path, 'count': int(trajs.shape[0]), 'horizon': int(trajs.shape[1]), 'dof': int(trajs.shape[2])})


def cmd_mmdfk(args, cfg):
    chain = _chain(cfg)
    X = DemoSet.load_jsonl(args.x)
    if args.split or args.y is None or os.path.abspath(args.y) == os.path.abspath(args.x):
        X, Y = X.split_halves()
    else:
        Y = DemoSet.load_jsonl(args.y)
    params = KernelParams(1.0, chain, link_weights=cfg.get('link_weights'),
                          mode=args.mode or cfg.get('kernel_mode', 'aligned'))
    gamma = args.gamma if args.gamma is not None else float(cfg.get('gamma', 0.0) or 0.0)
    if gamma <= 0:
        gamma = median_gamma(params, X, Y, seed=derive_seed(cfg.seed, 'opt'))
    params = params.with_gamma(gamma)
    emit({'mmd_fk': mmd_fk(params, X, Y), 'm': len(X), 'n': len(Y), 'gamma': gamma, 'mode': params.mode})


def cmd_dse(args, cfg, parser, logger, vanilla=False):
    if args.manifest:
        bases = PolicyEnsemble.from_manifest(args.manifest)
    elif args.bases:
        paths = args.bases.split(',')
        bases = PolicyEnsemble([load_model(p) for p in paths],
                               [os.path.splitext(os.path.basename(p))[0] for p in paths])
    else:
        parser.error('give --bases or --manifest')
    demos = DemoSet.load_jsonl(args.demos)
    overrides = {'seed': derive_seed(cfg.seed, 'opt')}
    if args.gamma is not None:
        overrides['gamma'] = args.gamma
    dse_config = DseConfig.from_cfg(cfg, **overrides)
    priors = [DemoSet.load_jsonl(p) for p in args.prior_data.split(',')] if args.prior_data else None
    chain = _chain(cfg)
    out_dir = os.path.join(output_root(args), 'vanilla' if vanilla else 'dse')
    if vanilla:
        result = vanilla_composition_baseline(bases, demos, dse_config, chain=chain, prior_datasets=priors,
                                              logger=logger)
    else:
        result = optimize_weights(bases, demos, dse_config, chain=chain, prior_datasets=priors,
                                  save_path=os.path.join(out_dir, 'fine_tuned'), logger=logger)
    out = result.to_dict()
    path = args.output or os.path.join(out_dir, 'result.json')
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, 'w') as f:
        json.dump(out, f, indent=2, sort_keys=True)
    emit(out)


def main():
    parser = get_parser()
    args = parser.parse_args()
    try:
        cfg = load_cfg(args)
        logger = get_logger(None if args.command in ('mmdfk', 'gen-data') else output_root(args))
        if args.command == 'gen-data':
            cmd_gen_data(args, cfg, parser)
        elif args.command == 'train':
            cmd_train(args, cfg, logger)
        elif args.command in ('sample', 'compose-sample'):
            cmd_sample(args, cfg, parser, composed=args.command == 'compose-sample')
        elif args.command == 'mmdfk':
            cmd_mmdfk(args, cfg)
        elif args.command in ('dse', 'vanilla'):
            cmd_dse(args, cfg, parser, logger, vanilla=args.command == 'vanilla')
        elif args.command == 'experiment':
            name = cfg.get('name', os.path.splitext(os.path.basename(args.config))[0])
            run_experiment(cfg, os.path.join(output_root(args), name), logger)
            config.dump_cfg(cfg, os.path.join(output_root(args), name, 'config.yaml'))
            emit({'experiment': name, 'out': os.path.join(output_root(args), name)})
        elif args.command == 'toy2d':
            summary = run_toy2d(cfg, os.path.join(output_root(args), 'toy2d'), seed=cfg.seed, logger=logger)
            emit(summary)
    except DseError as e:
        stage = getattr(e, 'stage', None)
        prefix = 'error in stage {}: '.format(stage) if stage else 'error: '
        sys.stderr.write(prefix + str(e) + '\n')
        sys.exit(e.exit_code)


if __name__ == '__main__':
    main()

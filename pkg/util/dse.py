"""Composition-weight estimation against few-shot demonstrations.

A policy is trained on the demonstrations and appended to the base policies; the simplex weights
of the ensemble are then chosen by minimising MMD-FK between composed samples and the demos.
The search runs Nelder-Mead over softmax logits, from one similarity-based start and several
random Dirichlet starts. Corners (single policies) are scored explicitly so the result is never
worse than any single policy under the shared selection seed.
"""
import math
from dataclasses import dataclass, field, fields

import numpy as np
import scipy.optimize

from util.common_util import derive_seed
from util.composition import CompositionWeights, PolicyEnsemble, composed_sample_batch
from util.dataset import DemoSet
from util.diffusion import sample_batch
from util.exceptions import DataError, DimensionMismatchError
from util.logger import get_logger
from util.mmd_fk import KernelParams, median_gamma, mmd_fk
from util.train_util import TrainConfig, train_denoiser

SIMILARITY_DELTA = 1e-3


@dataclass
class DseConfig:
    opt_iter: int = 60
    num_samples: int = 0  # 0 picks clamp(|demos|, 16, 64)
    restarts: int = 4
    seed: int = 0
    num_inference_steps: int = 0  # 0 means the schedule's T
    tol: float = 1e-3
    include_vanilla: bool = True
    gamma: float = 0.0  # 0 selects the median heuristic
    kernel_mode: str = 'aligned'
    simplex_step: float = 1.0
    link_weights: list = None  # None weighs every control point equally
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if self.opt_iter < 1 or self.restarts < 1:
            raise DataError('opt_iter and restarts must be positive, got {} and {}'.format(self.opt_iter, self.restarts))
        if self.num_samples and self.num_samples < 2:
            raise DataError('num_samples must be at least 2, got {}'.format(self.num_samples))
        if not self.tol > 0:
            raise DataError('tol must be positive, got {}'.format(self.tol))
        if self.gamma < 0:
            raise DataError('gamma must be positive (or 0 for the median heuristic), got {}'.format(self.gamma))

    @classmethod
    def from_cfg(cls, cfg, train=None, **overrides):
        kwargs = {f.name: cfg[f.name] for f in fields(cls) if f.name in cfg and f.name != 'train'}
        kwargs.update(overrides)
        return cls(train=train or TrainConfig.from_cfg(cfg), **kwargs)

    def samples_for(self, num_demos):
        if self.num_samples:
            return int(self.num_samples)
        return int(min(max(num_demos, 16), 64))

    def check_schedule(self, schedule):
        if self.num_inference_steps and self.num_inference_steps != schedule.T:
            raise DataError('num_inference_steps={} but the models were trained with T={}; '
                            'accelerated samplers are not supported'.format(self.num_inference_steps, schedule.T))


@dataclass
class RestartTrace:
    index: int
    initial_weights: list
    evaluations: list = field(default_factory=list)  # [(weights, objective)]
    best_so_far: list = field(default_factory=list)
    best_weights: list = None
    best_objective: float = math.inf
    converged: bool = False

    def record(self, weights, objective):
        self.evaluations.append((list(weights), float(objective)))
        if objective < self.best_objective:
            self.best_objective = float(objective)
            self.best_weights = list(weights)
        self.best_so_far.append(self.best_objective)

    def to_dict(self):
        return {'index': self.index, 'initial_weights': self.initial_weights,
                'initial_objective': self.evaluations[0][1] if self.evaluations else None,
                'evaluations': [{'weights': w, 'objective': o} for w, o in self.evaluations],
                'best_so_far': self.best_so_far, 'best_weights': self.best_weights,
                'best_objective': self.best_objective, 'converged': self.converged}


@dataclass
class DseResult:
    weights: CompositionWeights
    objective: float
    labels: list
    restarts: list = field(default_factory=list)
    corner_objectives: dict = field(default_factory=dict)
    baselines: dict = field(default_factory=dict)
    candidates: list = field(default_factory=list)
    exhausted: bool = False
    gamma: float = None
    link_weights: list = None
    few_shot_model: object = None

    def weight_of(self, label):
        return self.weights[self.labels.index(label)]

    def to_dict(self):
        return {'weights': self.weights.tolist(), 'labels': list(self.labels), 'objective': self.objective,
                'gamma': self.gamma, 'link_weights': self.link_weights, 'exhausted': self.exhausted,
                'corner_objectives': dict(self.corner_objectives), 'baselines': dict(self.baselines),
                'candidates': self.candidates, 'restarts': [r.to_dict() for r in self.restarts]}


def softmax_weights(z):
    """Logits z [K-1] -> simplex point [K]; the last logit is pinned to 0."""
    z = np.concatenate([np.asarray(z, dtype=np.float64), [0.0]])
    e = np.exp(z - z.max())
    return e / e.sum()


def weights_to_logits(w, floor=1e-6):
    w = np.maximum(np.asarray(w, dtype=np.float64), floor)
    w = w / w.sum()
    return np.log(w[:-1]) - np.log(w[-1])


def _demo_obs(demos, count):
    # round-robin over the demo observations
    return demos.obs[np.arange(count) % len(demos)]


def dse_objective(ensemble, weights, demos, params, config, seed):
    """MMD-FK between ``num_samples`` composed trajectories and the demonstrations."""
    if len(demos) < 2:
        raise DataError('at least 2 demonstrations are needed, got {}'.format(len(demos)))
    config.check_schedule(ensemble.schedule)
    obs = _demo_obs(demos, config.samples_for(len(demos)))
    samples = composed_sample_batch(ensemble, weights, obs, seed)
    return mmd_fk(params, samples, demos.trajs)


def _kernel_params(config, chain, demos):
    if chain is None:
        raise DataError('a kinematic chain is needed to build the MMD-FK kernel')
    params = KernelParams(1.0, chain, link_weights=config.link_weights, mode=config.kernel_mode)
    gamma = config.gamma if config.gamma > 0 else median_gamma(params, demos, demos, seed=config.seed)
    return params.with_gamma(gamma)


def _as_ensemble(policies):
    if isinstance(policies, PolicyEnsemble):
        return policies
    return PolicyEnsemble(list(policies))


def _similarity_weights(objectives):
    # lower MMD-FK means higher initial weight; unbiased estimates may dip below 0
    inv = 1.0 / (np.maximum(np.asarray(objectives, dtype=np.float64), 0.0) + SIMILARITY_DELTA)
    return inv / inv.sum()


def _optimize(ensemble, demos, params, config, similarity, logger, stream='opt'):
    """Restarted Nelder-Mead over softmax logits. Returns the per-restart traces."""
    K = len(ensemble)
    traces = []
    for r in range(config.restarts):
        if r == 0:
            w0 = np.asarray(similarity, dtype=np.float64)
        else:
            rng = np.random.default_rng(derive_seed(config.seed, stream, r))
            w0 = rng.dirichlet(np.ones(K))
        objective_seed = derive_seed(config.seed, 'sample', r)
        z0 = weights_to_logits(w0)
        trace = RestartTrace(index=r, initial_weights=softmax_weights(z0).tolist())
        cache = {}

        def f(z):
            key = tuple(np.asarray(z, dtype=np.float64).tolist())
            if key not in cache:
                w = CompositionWeights(softmax_weights(z))
                value = dse_objective(ensemble, w, demos, params, config, objective_seed)
                trace.record(w.tolist(), value)
                cache[key] = value
            return cache[key]

        initial_simplex = np.vstack([z0, z0 + config.simplex_step * np.eye(K - 1)])
        res = scipy.optimize.minimize(f, z0, method='Nelder-Mead', options={
            'initial_simplex': initial_simplex, 'xatol': np.inf, 'fatol': config.tol,
            'maxfev': config.opt_iter})
        trace.converged = bool(res.success)
        logger.info('restart {}/{}: {} evaluations, best objective {:.5f} at {}'.format(
            r + 1, config.restarts, len(trace.evaluations), trace.best_objective,
            np.round(trace.best_weights, 4).tolist()))
        traces.append(trace)
    return traces


def _corner_objectives(ensemble, demos, params, config, seed):
    K = len(ensemble)
    return [dse_objective(ensemble, CompositionWeights.one_hot(K, k), demos, params, config, seed) for k in range(K)]


def _check_inputs(ensemble, demos):
    if len(demos) < 2:
        raise DataError('at least 2 demonstrations are needed, got {}'.format(len(demos)))
    if (demos.horizon, demos.dof, demos.obs_dim) != (ensemble.horizon, ensemble.dof, ensemble.obs_dim):
        raise DimensionMismatchError('demos of shape {} for policies over {}'.format(
            (demos.horizon, demos.dof, demos.obs_dim), (ensemble.horizon, ensemble.dof, ensemble.obs_dim)))


def _search(ensemble, demos, params, config, prior_datasets, logger, stream, extra_candidates=()):
    """Corners, restarted search, then a re-score of every candidate under the selection seed."""
    K = len(ensemble)
    labels = list(ensemble.labels)
    select_seed = derive_seed(config.seed, 'select')
    corners = _corner_objectives(ensemble, demos, params, config, select_seed)
    corner_objectives = dict(zip(labels, corners))
    scored = [{'name': 'corner:' + label, 'weights': CompositionWeights.one_hot(K, k).tolist(), 'objective': corners[k]}
              for k, label in enumerate(labels)]
    traces = []
    if K > 1:
        similarity_objectives = list(corners)
        if prior_datasets is not None:
            if len(prior_datasets) > K:
                raise DimensionMismatchError('{} prior datasets for {} policies'.format(len(prior_datasets), K))
            for i, prior in enumerate(prior_datasets):
                similarity_objectives[i] = mmd_fk(params, prior, demos)
        traces = _optimize(ensemble, demos, params, config, _similarity_weights(similarity_objectives), logger, stream)
        candidates = [('restart:{}'.format(t.index), t.best_weights) for t in traces] + list(extra_candidates)
        restart_scores = []
        for name, w in candidates:
            value = dse_objective(ensemble, w, demos, params, config, select_seed)
            restart_scores.append({'name': name, 'weights': CompositionWeights(w).tolist(), 'objective': value})
        # restart candidates first so ties go to the searched weights
        scored = restart_scores + scored
    best = min(range(len(scored)), key=lambda i: (scored[i]['objective'], i))
    winner = scored[best]
    return DseResult(CompositionWeights(winner['weights']), winner['objective'], labels, restarts=traces,
                     corner_objectives=corner_objectives, candidates=scored,
                     exhausted=not all(t.converged for t in traces), gamma=params.gamma,
                     link_weights=params.link_weights.tolist())


def vanilla_composition_baseline(base_policies, demos, config, params=None, chain=None, prior_datasets=None,
                                 logger=None):
    """Weight search over the base policies only, without a demo-trained policy."""
    logger = logger or get_logger()
    ensemble = _as_ensemble(base_policies)
    _check_inputs(ensemble, demos)
    config.check_schedule(ensemble.schedule)
    params = params or _kernel_params(config, chain, demos)
    logger.info('=> vanilla composition over {}'.format(', '.join(ensemble.labels)))
    return _search(ensemble, demos, params, config, prior_datasets, logger, 'opt-vanilla')


def optimize_weights(base_policies, demos, config, params=None, chain=None, prior_datasets=None,
                     few_shot_model=None, save_path=None, logger=None):
    """Train the demo policy, then search weights over bases + that policy.

    ``few_shot_model`` skips training when a demo-trained model is already available.
    """
    logger = logger or get_logger()
    bases = _as_ensemble(base_policies)
    _check_inputs(bases, demos)
    config.check_schedule(bases.schedule)
    params = params or _kernel_params(config, chain, demos)
    logger.info('=> DSE: {} base policies, {} demos, gamma {:.4f}'.format(len(bases), len(demos), params.gamma))

    if few_shot_model is None:
        train_config = TrainConfig(**{**config.train.to_dict(), 'seed': derive_seed(config.seed, 'train')})
        few_shot_model = train_denoiser(demos, train_config, bases.schedule, normalizer=bases.normalizer,
                                        save_path=save_path, logger=logger)
    ensemble = bases.with_model(few_shot_model, 'fine_tuned')

    extra = []
    vanilla = None
    if config.include_vanilla:
        vanilla = vanilla_composition_baseline(bases, demos, config, params=params, prior_datasets=prior_datasets,
                                               logger=logger)
        extra.append(('vanilla', vanilla.weights.tolist() + [0.0]))

    result = _search(ensemble, demos, params, config, prior_datasets, logger, 'opt', extra_candidates=extra)
    result.baselines['fine_tuned'] = result.corner_objectives['fine_tuned']
    if vanilla is not None:
        result.baselines['vanilla'] = next(c['objective'] for c in result.candidates if c['name'] == 'vanilla')
        result.baselines['vanilla_weights'] = vanilla.weights.tolist()
    result.few_shot_model = few_shot_model
    logger.info('=> DSE weights {} objective {:.5f} (fine-tuned only {:.5f})'.format(
        np.round(result.weights.tolist(), 4).tolist(), result.objective, result.baselines['fine_tuned']))
    return result


def mse_from_rollouts(rollouts, demos):
    """Mean squared joint error over every demo, step and joint."""
    rollouts = np.asarray(rollouts, dtype=np.float64)
    target = demos.trajs if isinstance(demos, DemoSet) else np.asarray(demos, dtype=np.float64)
    if rollouts.shape != target.shape:
        raise DimensionMismatchError('rollouts of shape {} for demos of shape {}'.format(rollouts.shape, target.shape))
    return float(np.mean((rollouts - target) ** 2))


def mse_vs_demos(policy, demos, weights=None, seed=0):
    """Roll out from each demo's initial configuration and compare with the demo.

    ``policy`` is a single model, or an ensemble together with ``weights``.
    """
    if weights is None:
        rollouts = sample_batch(policy, demos.obs, seed)
    else:
        rollouts = composed_sample_batch(_as_ensemble(policy), weights, demos.obs, seed)
    return mse_from_rollouts(rollouts, demos)

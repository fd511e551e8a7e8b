import os

import matplotlib
matplotlib.use('Agg')
import matplotlib.pyplot as pyplot
import numpy as np

from util.kinematics import end_effector_path

colors7 = [[255, 0, 0], [255, 125, 0], [0, 170, 0], [0, 170, 255], [0, 0, 255], [255, 0, 255], [120, 120, 120]]

# fixed ids and no timestamps so reruns produce identical files
matplotlib.rcParams['svg.hashsalt'] = 'dse'
matplotlib.rcParams['svg.fonttype'] = 'none'


def _color(i):
    c = colors7[i % len(colors7)]
    return [x / 255.0 for x in c]


def _savefig(fig, out_filename):
    dirname = os.path.dirname(out_filename)
    if dirname:
        os.makedirs(dirname, exist_ok=True)
    fig.savefig(out_filename, format='svg', metadata={'Date': None})
    pyplot.close(fig)


def write_end_effector_svg(chain, demos, rollouts, out_filename, title=None):
    """ Overlay end-effector paths of demos (black) and rollout sets (coloured) in XY and XZ

    rollouts: dict label -> [N, L, dof] trajectories
    """
    fig, axes = pyplot.subplots(1, 2, figsize=(10, 4.5))
    planes = [('x', 'y', 0, 1), ('x', 'z', 0, 2)]
    demo_paths = end_effector_path(chain, np.asarray(demos))
    for ax, (xl, yl, i, j) in zip(axes, planes):
        for k, path in enumerate(demo_paths):
            ax.plot(path[:, i], path[:, j], color='k', lw=1.5, alpha=0.8, label='demos' if k == 0 else None)
        for c, (label, trajs) in enumerate(rollouts.items()):
            paths = end_effector_path(chain, np.asarray(trajs))
            for k, path in enumerate(paths):
                ax.plot(path[:, i], path[:, j], color=_color(c), lw=0.8, alpha=0.6, label=label if k == 0 else None)
        ax.set_xlabel(xl)
        ax.set_ylabel(yl)
        ax.set_aspect('equal', adjustable='datalim')
    axes[0].legend(loc='best', fontsize=8)
    if title:
        fig.suptitle(title)
    _savefig(fig, out_filename)


def write_toy_panels_svg(panels, out_filename, modes=None):
    """ One scatter panel per weight setting: panels is a list of (title, [N, 2] samples) """
    fig, axes = pyplot.subplots(1, len(panels), figsize=(3.2 * len(panels), 3.4), sharex=True, sharey=True)
    axes = np.atleast_1d(axes)
    for c, (ax, (title, pts)) in enumerate(zip(axes, panels)):
        pts = np.asarray(pts)
        ax.scatter(pts[:, 0], pts[:, 1], s=4, color=_color(c))
        if modes is not None:
            for m in modes:
                ax.plot(m[0], m[1], 'k+', ms=10)
        ax.set_title(title, fontsize=9)
        ax.set_aspect('equal', adjustable='box')
    _savefig(fig, out_filename)

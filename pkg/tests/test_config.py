import glob
import os

import pytest

from conftest import REPO_ROOT
from util.common_util import derive_seed
from util.config import dump_cfg, load_cfg_from_cfg_file, merge_cfg_from_list
from util.dse import DseConfig
from util.exceptions import DataError
from util.experiment import ExperimentSpec
from util.train_util import TrainConfig

DEFAULT = os.path.join(REPO_ROOT, 'config', 'dse', 'default.yaml')


def test_sections_are_flattened():
    cfg = load_cfg_from_cfg_file(DEFAULT)
    assert cfg.horizon == 16 and cfg.T == 100 and cfg.opt_iter == 60
    assert cfg.kernel_mode == 'aligned' and cfg.link_weights is None
    assert list(cfg.hidden_sizes) == [128, 128, 128]


def test_overrides_are_decoded_and_coerced():
    cfg = load_cfg_from_cfg_file(DEFAULT)
    new = merge_cfg_from_list(cfg, ['hidden_sizes', '[16, 8]', 'tol', '1', 'optimizer', 'Adam',
                                    'link_weights', '[1.0, 2.0, 1.0]'])
    assert new.hidden_sizes == [16, 8]
    assert new.tol == 1.0 and isinstance(new.tol, float)
    assert new.optimizer == 'Adam'
    assert new.link_weights == [1.0, 2.0, 1.0]
    # the source node is left alone
    assert cfg.optimizer == 'SGD'


def test_bad_overrides(tmp_path):
    cfg = load_cfg_from_cfg_file(DEFAULT)
    with pytest.raises(DataError):
        merge_cfg_from_list(cfg, ['not_a_key', '1'])
    with pytest.raises(DataError):
        merge_cfg_from_list(cfg, ['epochs'])
    with pytest.raises(DataError):
        merge_cfg_from_list(cfg, ['epochs', 'many'])
    txt = tmp_path / 'cfg.txt'
    txt.write_text('DATA:\n  horizon: 4\n')
    with pytest.raises(DataError):
        load_cfg_from_cfg_file(str(txt))
    flat = tmp_path / 'flat.yaml'
    flat.write_text('horizon: 4\n')
    with pytest.raises(DataError):
        load_cfg_from_cfg_file(str(flat))


def test_train_and_dse_configs_from_cfg():
    cfg = merge_cfg_from_list(load_cfg_from_cfg_file(DEFAULT), ['epochs', '3', 'restarts', '2'])
    train = TrainConfig.from_cfg(cfg)
    assert train.epochs == 3 and train.hidden_sizes == (128, 128, 128)
    dse = DseConfig.from_cfg(cfg, seed=5)
    assert dse.restarts == 2 and dse.seed == 5 and dse.train.epochs == 3
    assert dse.samples_for(3) == 16 and dse.samples_for(100) == 64
    with pytest.raises(DataError):
        TrainConfig.from_cfg(cfg, optimizer='LBFGS')
    with pytest.raises(DataError):
        DseConfig.from_cfg(cfg, opt_iter=0)


@pytest.mark.parametrize('path', sorted(glob.glob(os.path.join(REPO_ROOT, 'config', 'experiments', '*.yaml'))))
def test_shipped_experiments_load(path):
    cfg = load_cfg_from_cfg_file(path)
    if cfg.name == 'toy2d':
        assert cfg.toy_count > 0
        return
    spec = ExperimentSpec.from_cfg(cfg)
    assert spec.chain.dof == 4
    if spec.kind == 'few_shot':
        assert len(spec.labels) == len(spec.bases)


def test_derive_seed_streams():
    assert derive_seed(0, 'train') == derive_seed(0, 'train')
    seeds = {derive_seed(0, 'train'), derive_seed(0, 'sample'), derive_seed(1, 'train'), derive_seed(0, 'train', 1)}
    assert len(seeds) == 4
    assert 0 <= derive_seed(2 ** 40, 'data') < 2 ** 32


def test_unknown_key_suggests_a_close_one():
    cfg = load_cfg_from_cfg_file(DEFAULT)
    with pytest.raises(DataError, match='did you mean restarts'):
        merge_cfg_from_list(cfg, ['restart', '2'])


def test_duplicate_keys_across_sections(tmp_path):
    path = tmp_path / 'dup.yaml'
    path.write_text('DATA:\n  horizon: 4\nTRAIN:\n  horizon: 8\n')
    with pytest.raises(DataError):
        load_cfg_from_cfg_file(str(path))


def test_dumped_config_reloads(tmp_path):
    cfg = merge_cfg_from_list(load_cfg_from_cfg_file(DEFAULT), ['epochs', '7'])
    path = str(tmp_path / 'run' / 'config.yaml')
    dump_cfg(cfg, path)
    again = load_cfg_from_cfg_file(path)
    assert dict(again) == dict(cfg)
    assert again.section('TRAIN')['epochs'] == 7
    assert 'epochs' not in again.section('DSE')

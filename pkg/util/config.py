# -----------------------------------------------------------------------------
# Sectioned yaml configs and KEY VALUE overrides
# -----------------------------------------------------------------------------
import copy
import difflib
import os
from ast import literal_eval

import yaml

from util.exceptions import DataError


class CfgNode(dict):
    """
    Flat, attribute-accessible view of a sectioned config. Keys are unique
    across sections; `sections` remembers which section each key came from so
    the config can be written back in the same shape.
    """

    def __init__(self, init_dict=None, sections=None):
        super(CfgNode, self).__init__(init_dict or {})
        object.__setattr__(self, 'sections', dict(sections or {}))

    def __getattr__(self, name):
        if name in self:
            return self[name]
        raise AttributeError(name)

    def __setattr__(self, name, value):
        self[name] = value

    def __deepcopy__(self, memo):
        return CfgNode(copy.deepcopy(dict(self), memo), self.sections)

    def section(self, name):
        return {k: v for k, v in self.items() if self.sections.get(k) == name}

    def __str__(self):
        by_section = {}
        for k in sorted(self):
            by_section.setdefault(self.sections.get(k, 'EXTRA'), []).append('  {}: {}'.format(k, self[k]))
        return '\n'.join('{}:\n{}'.format(s, '\n'.join(lines)) for s, lines in by_section.items())

    def __repr__(self):
        return "{}({})".format(self.__class__.__name__, super(CfgNode, self).__repr__())


def load_cfg_from_cfg_file(file):
    """Read a sectioned yaml file (DATA:, TRAIN:, ...) into one flat CfgNode."""
    if not (file and os.path.isfile(file) and file.endswith('.yaml')):
        raise DataError('{} is not a yaml file'.format(file))

    with open(file, 'r') as f:
        try:
            cfg_from_file = yaml.safe_load(f) or {}
        except yaml.YAMLError as e:
            raise DataError('cannot parse {}: {}'.format(file, e))
    if not isinstance(cfg_from_file, dict):
        raise DataError('{} must map section names to sections'.format(file))

    cfg, sections = {}, {}
    for name, section in cfg_from_file.items():
        if not isinstance(section, dict):
            raise DataError('section {} in {} is not a mapping'.format(name, file))
        for k, v in section.items():
            if k in cfg:
                raise DataError('key {} appears in both {} and {} of {}'.format(k, sections[k], name, file))
            cfg[k] = v
            sections[k] = name

    return CfgNode(cfg, sections)


def merge_cfg_from_list(cfg, cfg_list):
    """Apply KEY VALUE pairs; a dotted key (TRAIN.epochs) is matched by its last part."""
    new_cfg = copy.deepcopy(cfg)
    if len(cfg_list) % 2 != 0:
        raise DataError('config overrides must come in KEY VALUE pairs, got {}'.format(cfg_list))
    for full_key, v in zip(cfg_list[0::2], cfg_list[1::2]):
        subkey = full_key.split('.')[-1]
        if subkey not in cfg:
            close = difflib.get_close_matches(subkey, list(cfg), n=1)
            hint = ' (did you mean {}?)'.format(close[0]) if close else ''
            raise DataError('Non-existent key: {}{}'.format(full_key, hint))
        value = _decode_cfg_value(v)
        value = _check_and_coerce_cfg_value_type(value, cfg[subkey], full_key)
        setattr(new_cfg, subkey, value)

    return new_cfg


def dump_cfg(cfg, path):
    """Write the resolved config next to the outputs it produced."""
    out = {}
    for k in sorted(cfg):
        v = cfg[k]
        out.setdefault(cfg.sections.get(k, 'EXTRA'), {})[k] = list(v) if isinstance(v, tuple) else v
    dirname = os.path.dirname(path)
    if dirname:
        os.makedirs(dirname, exist_ok=True)
    with open(path, 'w') as f:
        yaml.safe_dump(out, f, sort_keys=True, default_flow_style=None)


def _decode_cfg_value(v):
    if not isinstance(v, str):
        return v
    # paths and bare words stay strings
    try:
        v = literal_eval(v)
    except (ValueError, SyntaxError):
        pass
    return v


def _check_and_coerce_cfg_value_type(replacement, original, full_key):
    """Overrides keep the type of the value they replace, up to list/tuple and int -> float."""
    if original is None or type(replacement) == type(original):
        return replacement
    if isinstance(replacement, (list, tuple)) and isinstance(original, (list, tuple)):
        return type(original)(replacement)
    if type(replacement) == int and type(original) == float:
        return float(replacement)
    raise DataError(
        "Type mismatch ({} vs. {}) with values ({} vs. {}) for config key: {}".format(
            type(original).__name__, type(replacement).__name__, original, replacement, full_key))

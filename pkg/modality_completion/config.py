"""
JSON configuration with strict keys, seed overrides and a stable hash.

A configuration holds the sections ``train``, ``synthetic``, ``missingness``
and ``paths`` plus the top-level ``seed``, ``methods`` and ``threads``. The
master seed is resolved as ``--seed`` flag, then the ``MCDBN_SEED``
environment variable, then the file, and is copied into every section before
the configuration is hashed.
"""

import dataclasses
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

from .data import MissingnessSpec, SyntheticSpec, parse_method
from .errors import ConfigError
from .evaluation import DEFAULT_METHODS
from .training import LossSwitches, TrainConfig

logger = logging.getLogger(__name__)

SEED_ENV = 'MCDBN_SEED'
FNV_OFFSET = 0xcbf29ce484222325
FNV_PRIME = 0x100000001b3


@dataclass
class PathsConfig:
    data_dir: str = 'data'
    out_dir: str = 'out'


@dataclass
class Config:
    train: TrainConfig = field(default_factory=TrainConfig)
    synthetic: SyntheticSpec = field(default_factory=SyntheticSpec)
    missingness: MissingnessSpec = field(default_factory=MissingnessSpec)
    paths: PathsConfig = field(default_factory=PathsConfig)
    seed: int = 0
    methods: list = field(default_factory=lambda: list(DEFAULT_METHODS))
    threads: int = 1


def _item_type(f):
    """Element type of a list field, read off its default"""
    default = f.default_factory() if f.default_factory is not dataclasses.MISSING else f.default
    if not isinstance(default, (list, tuple)):
        return None
    kinds = {type(item) for item in default}
    return kinds.pop() if len(kinds) == 1 else None


def _check_type(value, expected, key, item_type=None):
    if expected is float:
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
    elif expected is int:
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif expected in (list, tuple):
        ok = isinstance(value, (list, tuple))
        if ok and item_type is not None:
            for i, item in enumerate(value):
                _check_type(item, item_type, f'{key}[{i}]')
    else:
        ok = isinstance(value, expected)
    if not ok:
        raise ConfigError(f'{key} must be of type {expected.__name__}, got {value!r}')
    return float(value) if expected is float else value


def _build(cls, document, prefix):
    if not isinstance(document, dict):
        raise ConfigError(f'{prefix or "config"} must be a JSON object')
    fields = {f.name: f for f in dataclasses.fields(cls) if f.init}
    unknown = sorted(set(document) - set(fields))
    if unknown:
        raise ConfigError(f'unknown key {prefix + "." if prefix else ""}{unknown[0]}')
    kwargs = {}
    for name, value in document.items():
        key = f'{prefix}.{name}' if prefix else name
        expected = fields[name].type
        if dataclasses.is_dataclass(expected):
            kwargs[name] = _build(expected, value, key)
        else:
            kwargs[name] = _check_type(value, expected, key, _item_type(fields[name]))
    return cls(**kwargs)


def resolve_seed(config_seed, flag=None, env=None):
    """flag > environment > config"""
    if flag is not None:
        return int(flag)
    env = os.environ if env is None else env
    if env.get(SEED_ENV, '').strip():
        try:
            return int(env[SEED_ENV])
        except ValueError:
            raise ConfigError(f'{SEED_ENV} must be an integer, got {env[SEED_ENV]!r}')
    return config_seed


def config_from_dict(document, seed=None, env=None):
    config = _build(Config, document, '')
    master = resolve_seed(config.seed, seed, env)
    if master < 0:
        raise ConfigError(f'seed must be non-negative, got {master}')
    config = dataclasses.replace(
        config, seed=master,
        train=dataclasses.replace(config.train, seed=master),
        synthetic=dataclasses.replace(config.synthetic, seed=master),
        missingness=dataclasses.replace(config.missingness, seed=master),
    )
    return validate(config)


def validate(config):
    config.train.validate()
    if config.threads < 1:
        raise ConfigError(f'threads must be at least 1, got {config.threads}')
    if not config.methods:
        raise ConfigError('methods must name at least one completion method')
    for method in config.methods:
        if method not in ('single', 'mcdbn'):
            parse_method(method)
    return config


def load_config(path=None, seed=None, env=None):
    """Configuration from a JSON file; defaults when ``path`` is None"""
    if path is None:
        return config_from_dict({}, seed, env)
    path = Path(path)
    try:
        document = json.loads(path.read_text(encoding='utf-8'))
    except OSError as e:
        raise ConfigError(f'cannot read config {path}: {e}')
    except json.JSONDecodeError as e:
        raise ConfigError(f'{path} is not valid JSON: {e}')
    logger.debug(f'loaded config {path}')
    return config_from_dict(document, seed, env)


def config_to_dict(config):
    return json.loads(json.dumps(dataclasses.asdict(config)))


def canonical_json(config):
    document = config if isinstance(config, dict) else config_to_dict(config)
    return json.dumps(document, sort_keys=True, separators=(',', ':'), ensure_ascii=False)


def fnv1a_64(data):
    h = FNV_OFFSET
    for byte in data:
        h = ((h ^ byte) * FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


def config_hash(config):
    """16 hex digits of the FNV-1a hash of the canonical JSON"""
    return f'{fnv1a_64(canonical_json(config).encode("utf-8")):016x}'


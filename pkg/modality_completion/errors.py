"""
Exception hierarchy of the modality completion package.

Every exception carries a ``category`` that the command line prints as
``ERROR:<category>:<message>`` and an ``exit_code`` used by ``cli.dispatch``.
"""


class McdbnError(Exception):
    category = 'error'
    exit_code = 2


class ConfigError(McdbnError):
    """Invalid configuration, hyper-parameter or unknown config key"""
    category = 'config'
    exit_code = 1


class UsageError(ConfigError):
    """Bad command line"""
    category = 'usage'


class ShapeError(McdbnError):
    category = 'shape'


class DomainError(McdbnError):
    category = 'domain'


class DataError(McdbnError):
    """Input data violates its contract (ordering, duplicates, one-hot labels)"""
    category = 'data'


class ParseError(DataError):
    category = 'parse'


class DegenerateInputError(McdbnError):
    """Statistic requested over an empty support"""
    category = 'degenerate'


class UnsupportedError(McdbnError):
    category = 'unsupported'


class CheckpointError(McdbnError):
    category = 'checkpoint'


class DivergenceError(McdbnError):
    """Non-finite loss or parameter during training"""
    category = 'divergence'
    exit_code = 3


def shape_mismatch(what, a, b):
    """Build a ShapeError that names both shapes"""
    return ShapeError(f'{what}: shapes {tuple(a)} and {tuple(b)} do not match')

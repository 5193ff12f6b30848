from __future__ import annotations

import enum
import logging
import string
import time
from contextlib import contextmanager
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Union

import numpy as np

try:
    from termcolor import colored
except ImportError:
    def colored(t, *args, **kwargs):
        return t

JSONType = Union[str, bool, int, float, None, List['JSONType'], Dict[str, 'JSONType']]
JSONDict = Dict[str, JSONType]

log = logging.getLogger('main.utils')


def json_converters(value: Any) -> JSONType:
    if isinstance(value, datetime):
        return value.isoformat()
    if isinstance(value, enum.Enum):
        return value.value
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    if hasattr(value, 'name') and hasattr(value, 'kind'):
        return value.name
    raise TypeError(type(value))


SIMPLEJSON_KWARGS = {
    'ensure_ascii': True,
    'default': json_converters,
    'for_json': True,
    'iterable_as_array': True,
    'ignore_nan': True,
    'indent': 2,
    'sort_keys': False,
}


def fmtnumber(value) -> str:
    """17 significant digits, enough to round-trip a double."""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return '%.17g' % value
    return str(value)


def utcnow() -> datetime:
    return datetime.now(timezone.utc)


def timestamp_slug(dt: datetime = None) -> str:
    return (dt or utcnow()).strftime('%Y%m%dT%H%M%SZ')


PATH_UNSAFE = ''.join(set(string.punctuation + ' ') - set('-_.'))


def replace_unsafe_chars(s, repl='-', chars=PATH_UNSAFE):
    for c in chars:
        if c in s:
            s = s.replace(c, repl)
    return s


class Timing:
    """Duration holder filled in by :func:`watch_for_timing`."""

    def __init__(self, name):
        self.name = name
        self.seconds = None

    @property
    def ms(self) -> float:
        return 1000 * (self.seconds or 0.0)


@contextmanager
def watch_for_timing(name, limit=0):
    timing = Timing(name)
    start = time.perf_counter()
    try:
        yield timing
    finally:
        timing.seconds = duration = time.perf_counter() - start
        message = None
        level = None
        if limit and duration > limit:
            message = colored(f'[Performance violation] {name} took {duration * 1000:.0f}ms; '
                              f'desired time is {limit * 1000:.0f}ms.', color='yellow')
            level = logging.INFO
        elif not limit:
            message = f'{name} took {duration * 1000:.0f}ms'
            level = logging.DEBUG
        if message:
            logging.getLogger('profiler.timing').log(level, message)

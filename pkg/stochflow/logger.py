# MIT License
#
# Copyright (c) 2020 Tony Wu <tony[dot]wu(at)nyu[dot]edu>
#
# Permission is hereby granted, free of charge, to any person obtaining a copy
# of this software and associated documentation files (the "Software"), to deal
# in the Software without restriction, including without limitation the rights
# to use, copy, modify, merge, publish, distribute, sublicense, and/or sell
# copies of the Software, and to permit persons to whom the Software is
# furnished to do so, subject to the following conditions:
#
# The above copyright notice and this permission notice shall be included in all
# copies or substantial portions of the Software.
#
# THE SOFTWARE IS PROVIDED "AS IS", WITHOUT WARRANTY OF ANY KIND, EXPRESS OR
# IMPLIED, INCLUDING BUT NOT LIMITED TO THE WARRANTIES OF MERCHANTABILITY,
# FITNESS FOR A PARTICULAR PURPOSE AND NONINFRINGEMENT. IN NO EVENT SHALL THE
# AUTHORS OR COPYRIGHT HOLDERS BE LIABLE FOR ANY CLAIM, DAMAGES OR OTHER
# LIABILITY, WHETHER IN AN ACTION OF CONTRACT, TORT OR OTHERWISE, ARISING FROM,
# OUT OF OR IN CONNECTION WITH THE SOFTWARE OR THE USE OR OTHER DEALINGS IN THE
# SOFTWARE.

import logging
import sys
from typing import Dict, Union

try:
    import termcolor
    _ = termcolor.colored
except ImportError:
    _ = None

try:
    import colorama
    colorama.init()
except ImportError:
    pass

# Logger trees whose warnings end up in the run manifest
SOLVER_LOGGERS = ('fields', 'solver', 'worker', 'reference')


def compose_mappings(*mappings):
    """Deep-merge dictConfig fragments; later fragments win, containers are merged."""
    base = dict(mappings[0])
    for m in mappings[1:]:
        for k, v in m.items():
            if k in base and type(base[k]) is type(v):
                if isinstance(v, dict):
                    base[k] = compose_mappings(base[k], v)
                elif isinstance(v, list):
                    base[k] = [*base[k], *v]
                else:
                    base[k] = v
            else:
                base[k] = v
    return base


class _Sections:
    pass


class _ColoredFormatter(logging.Formatter):
    def __init__(self, fmt=None, datefmt=None, style='%', *, color='white'):
        super().__init__(fmt, datefmt, style)
        if isinstance(color, str):
            self.color_args = lambda record: (color,)
        elif isinstance(color, tuple):
            self.color_args = lambda record: color
        else:
            self.color_args = color

    def format(self, record):
        return _(super().format(record), *self.color_args(record))


class _CascadingFormatter(logging.Formatter):
    """Formats each section of a record with its own formatter, then joins them."""

    def __init__(self, sections: str, stylesheet: Dict[str, Union[str, logging.Formatter]],
                 style='%', stacktrace=None, datefmt=None):
        self.stylesheet = {}
        for section, fmt in stylesheet.items():
            formatter = logging.Formatter(fmt) if isinstance(fmt, str) else fmt
            if section != stacktrace:
                formatter.formatException = lambda info: ''
                formatter.formatStack = lambda info: ''
            self.stylesheet[section] = formatter
        super().__init__(sections, datefmt, style)

    def format(self, record):
        sections = _Sections()
        for name, fmt in self.stylesheet.items():
            setattr(sections, name, fmt.format(record))
        return super().formatMessage(sections)

    @classmethod
    def from_config(cls, *, sections, stylesheet, **kwargs):
        built = {}
        for k, fmt in stylesheet.items():
            if isinstance(fmt, str):
                built[k] = fmt
                continue
            fmt = dict(fmt)
            factory = fmt.pop('()', logging.Formatter)
            built[k] = factory(**fmt)
        return cls(sections, built, **kwargs)


LEVEL_COLORS = {
    'DEBUG': ('magenta', None, ['bold']),
    'INFO': ('white', None, ['bold']),
    'WARNING': ('yellow', None, ['bold']),
    'ERROR': ('red', None, ['bold']),
    'CRITICAL': ('grey', 'on_red', ['bold']),
}
LEVEL_COLORS_DEBUG = {**LEVEL_COLORS, 'INFO': ('blue', None, ['bold'])}


def _by_level(rules, default=('white',)):
    return lambda record: rules.get(record.levelname, default)


def _message_color(record):
    return ('red',) if record.exc_info else ('white',)


FMT_PREFIX = '%(asctime)s %(levelname)8s'
FMT_LOGGER = '[%(processName)s:%(name)s]'
FMT_SOURCE = '(%(module)s.%(funcName)s:%(lineno)d)'


def _style(with_source: bool):
    plain = f'{FMT_PREFIX} {FMT_LOGGER}{FMT_SOURCE if with_source else ""} %(message)s'
    stylesheet = {
        'prefix': {'()': _ColoredFormatter, 'fmt': FMT_PREFIX,
                   'color': _by_level(LEVEL_COLORS_DEBUG if with_source else LEVEL_COLORS)},
        'name': {'()': _ColoredFormatter, 'fmt': FMT_LOGGER, 'color': 'blue'},
    }
    sections = '%(prefix)s %(name)s'
    if with_source:
        stylesheet['source'] = {'()': _ColoredFormatter, 'fmt': FMT_SOURCE, 'color': 'cyan'}
        sections += '%(source)s'
    stylesheet['message'] = {'()': _ColoredFormatter, 'fmt': '%(message)s', 'color': _message_color}
    return {
        'normal': {'format': plain},
        'colored': {
            '()': _CascadingFormatter.from_config,
            'sections': f'{sections} %(message)s',
            'stylesheet': stylesheet,
            'stacktrace': 'message',
        },
    }


formatter_styles = {
    'standard': _style(False),
    'debug': _style(True),
}

logging_config_template = {
    'disable_existing_loggers': False,
    'version': 1,
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'stream': sys.stderr,
        },
    },
    'loggers': {
        'main': {'level': logging.NOTSET},
        'worker.sde': {'level': logging.INFO},
        'profiler.timing': {'level': logging.NOTSET},
    },
    'root': {
        'handlers': ['console'],
    },
}


def make_logging_config(
    app_name, *overrides, level=logging.INFO,
    style='standard', colored=True, datefmt=None,
    logfile=None,
):
    color_mode = 'colored' if colored and _ else 'normal'
    formatter = formatter_styles[style][color_mode] if style in formatter_styles else style

    app_logging_config = {
        'formatters': {'default_fmt': formatter},
        'handlers': {'console': {'formatter': 'default_fmt', 'level': level}},
        'loggers': {app_name: {'level': logging.NOTSET}},
        'root': {'level': level},
    }

    file_handler_config = {}
    if logfile:
        file_handler_config = {
            'formatters': {
                'no_color': formatter_styles[style]['normal'] if style in formatter_styles else style,
            },
            'handlers': {
                'file': {
                    'class': 'logging.FileHandler',
                    'filename': str(logfile),
                    'formatter': 'no_color',
                },
            },
            'root': {'handlers': ['file']},
        }

    datefmt_config = {}
    if datefmt:
        datefmt_config = {
            'formatters': {
                'default_fmt': {'datefmt': datefmt},
                **({'no_color': {'datefmt': datefmt}} if logfile else {}),
            },
        }

    return compose_mappings(
        logging_config_template,
        app_logging_config,
        file_handler_config,
        datefmt_config,
        *overrides,
    )

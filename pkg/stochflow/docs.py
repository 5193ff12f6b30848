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

"""Settings manual printed by ``python -m stochflow options``.

Setting groups subclass :class:`OptionsContributor` and return their entries
from ``_help_options``. Help text may use the inline marks of ``INLINE_MARKS``.
"""

import re
from functools import wraps
from textwrap import dedent, indent
from typing import Dict, Iterator, List, Tuple

import click

from . import settings

docs: List[Tuple[type, Dict[str, str], int]] = []

INLINE_MARKS = (
    (re.compile(r'`(.*?)`'), {'fg': 'green'}),
    (re.compile(r'~(.*?)~'), {'fg': 'blue', 'underline': True}),
    (re.compile(r'\*\*(.*?)\*\*'), {'fg': 'yellow', 'bold': True}),
)

BANNER = """\
Every run is configured by a set of uppercase settings. Defaults live in
`stochflow/settings.py`; a run configuration file overrides them, and
command-line flags override the file.

A configuration file is a JSON object or a TOML table of `KEY = value` pairs,
keys in any case, such as `{"nu": 0.1, "paths": 20000}`. Pass it with
~--config <path>~. Unknown keys are rejected.

Any setting may also be given directly with ~--set KEY=VALUE~; the common ones
have their own flags (`--nu`, `--T`, `--paths`, ...).

Example configurations are located in the `presets/` directory.
"""

HEADED_PARAGRAPH = re.compile(r'(^ *)(.+)\n\s*(?:-+|=+)\n((?:.+\n)+)')


def render_inline(text: str) -> str:
    for pattern, styles in INLINE_MARKS:
        text = pattern.sub(lambda m, styles=styles: click.style(m.group(1), **styles), text)
    return text


def inline_marks(func):
    @wraps(func)
    def wrapped(*args, **kwargs):
        for chunk in func(*args, **kwargs):
            yield render_inline(chunk)
    return wrapped


def paragraphs(doc: str) -> Iterator[str]:
    """Blank-line separated paragraphs; a paragraph underlined with ``---`` gets a bold header."""
    blocks = re.findall(r'((?:.+\n)+)', dedent(doc).strip('\n') + '\n')
    for i, block in enumerate(blocks):
        match = HEADED_PARAGRAPH.match(block) if i else None
        if match:
            margin, header, block = match.groups()
            yield indent(click.style(header if margin else header.upper(), bold=True), margin) + '\n'
        yield (block if not i else indent(block, '    ')) + '\n'


def default_of(key: str) -> str:
    value = getattr(settings, key, None)
    if value is None:
        return 'unset'
    if isinstance(value, (list, tuple)):
        return ', '.join(map(str, value))
    return str(value)


class OptionsContributor:
    """Settings documentation; subclasses register their ``_help_options`` on definition."""

    _subclassed = set()

    @classmethod
    def __init_subclass__(cls, _doc_order=0):
        if any(c.__qualname__ in cls._subclassed for c in cls.mro()):
            return
        cls._subclassed.add(cls.__qualname__)
        docs.append((cls, cls._help_options(), _doc_order))

    @staticmethod
    def documented_keys():
        return {key for _, options, _ in docs for key in options}

    @staticmethod
    @inline_marks
    def format_docs():
        yield click.style('STOCHFLOW RUN SETTINGS\n\n', fg='black', bg='white', bold=True)
        yield BANNER
        yield '\n' + click.style('============*============', fg='white', bold=True) + '\n\n'

        for cls, options, _ in sorted(docs, key=lambda t: t[2], reverse=True):
            yield click.style('-------------', fg='black', bold=True) + '\n'
            yield f'**{cls.__name__}**\n\n'
            if cls.__doc__:
                yield from paragraphs(cls.__doc__)
            for key, doc in options.items():
                yield f'  ~{key}~  (default: `{default_of(key)}`)\n'
                yield f'{indent(dedent(doc).strip(), "      ")}\n\n'
            yield '\n'

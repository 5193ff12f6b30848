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

"""Artifact writers.

Rows are mappings; the target file of each row comes from a ``%``-style
filename template filled with the row itself, so one exporter can fan rows out
to several files (for example one snapshot per time node). Numbers are
written with :func:`~stochflow.utils.fmtnumber`.
"""

import csv
import logging
import os
from abc import ABC, abstractmethod
from pathlib import Path
from typing import Callable, Sequence

import simplejson as json

from .utils import SIMPLEJSON_KWARGS, JSONDict, fmtnumber, replace_unsafe_chars


class MappingExporter(ABC):
    def __init__(self, output: Path, filename: str, escape: Callable[[str], str] = replace_unsafe_chars):
        self.output = Path(output)
        self.filename = filename
        self.escape = escape or (lambda s: s)
        self.files = {}
        self.written = []
        self.logger = logging.getLogger('main.exporter')

    @abstractmethod
    def format(self, item: JSONDict):
        return item

    def path_for(self, item: JSONDict) -> Path:
        return self.output / self.escape(self.filename % item)

    def open_file(self, path: Path):
        out = self.files.get(path)
        is_newfile = out is None
        if is_newfile:
            os.makedirs(path.parent, exist_ok=True)
            self.logger.debug(f'New file {path}')
            self.files[path] = out = open(path, 'w', newline='')
            self.written.append(path)
        return out, is_newfile

    def write(self, item: JSONDict):
        out, _ = self.open_file(self.path_for(item))
        out.write(f'{self.format(item)}\n')

    def close(self):
        if not self.files:
            self.logger.warning(f'Exported nothing to {self.output / self.filename}')
        for f in self.files.values():
            f.close()

    def __enter__(self):
        return self

    def __exit__(self, typ, val=None, tb=None):
        self.close()
        return False


class MappingCSVExporter(MappingExporter):
    """Long-format CSV with a fixed header; extra keys (used by the template) are dropped."""

    def __init__(self, fieldnames: Sequence[str], *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.fieldnames = tuple(fieldnames)
        self.writers = {}

    def format(self, item: JSONDict):
        return {k: fmtnumber(item[k]) for k in self.fieldnames}

    def write(self, item: JSONDict):
        path = self.path_for(item)
        f, new = self.open_file(path)
        writer = self.writers.get(path)
        if writer is None:
            writer = self.writers[path] = csv.DictWriter(f, self.fieldnames, extrasaction='ignore',
                                                         lineterminator='\n')
            if new:
                writer.writeheader()
        writer.writerow(self.format(item))


def write_json(path: Path, document) -> Path:
    path = Path(path)
    os.makedirs(path.parent, exist_ok=True)
    tmp = path.with_name(f'.{path.name}.tmp')
    with open(tmp, 'w') as f:
        json.dump(document, f, **SIMPLEJSON_KWARGS)
        f.write('\n')
    os.replace(tmp, path)
    return path


def write_table(path: Path, fieldnames: Sequence[str], rows) -> Path:
    """One CSV file with its header, written even when there are no rows."""
    path = Path(path)
    os.makedirs(path.parent, exist_ok=True)
    with open(path, 'w', newline='') as f:
        writer = csv.DictWriter(f, fieldnames, extrasaction='ignore', lineterminator='\n')
        writer.writeheader()
        for row in rows:
            writer.writerow({k: fmtnumber(row[k]) for k in fieldnames})
    return path

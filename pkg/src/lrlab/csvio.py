"""CSV files written by the command line tool, and a reader for all of them.

Every file starts with a block of ``# meta ...`` comment lines (tool version,
subcommand, the config file echoed line by line).  Kernel files then carry the
``# d,L,N,alpha,m2`` header followed by a commented value line and rows
``x_1,...,x_d,value``; every other file has a plain CSV header row.  Floats are
written with ``repr`` so a round trip through ``read_csv`` is exact.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .errors import ConfigError
from .lattice import KernelField, LatticeSpec, torus_displacements

KERNEL_HEADER = "d,L,N,alpha,m2"


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def meta_lines(command: str, config_lines=(), extra: dict | None = None) -> list[str]:
    out = [f"# meta tool=lrlab {__version__}", f"# meta command={command}"]
    for k, v in (extra or {}).items():
        out.append(f"# meta {k}={v}")
    for line in config_lines:
        out.append(f"# meta config: {line.rstrip()}")
    return out


def table_text(columns, rows, meta=()) -> str:
    buf = io.StringIO()
    for m in meta:
        buf.write(m + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([fmt(v) for v in r])
    return buf.getvalue()


def kernel_text(kernel: KernelField, meta=()) -> str:
    """Rows in lexicographic order of the minimal-image displacement."""
    spec = kernel.spec
    disp = torus_displacements(spec.M, spec.d).reshape(-1, spec.d)
    vals = kernel.values.ravel()
    order = np.lexsort(disp.T[::-1])
    buf = io.StringIO()
    for m in meta:
        buf.write(m + "\n")
    m2 = 0.0 if kernel.m2 is None else kernel.m2
    buf.write(f"# {KERNEL_HEADER}\n")
    buf.write("# " + ",".join(fmt(v) for v in (spec.d, spec.L, spec.N, float(spec.alpha), float(m2))) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    for i in order:
        w.writerow([fmt(int(c)) for c in disp[i]] + [fmt(float(vals[i]))])
    return buf.getvalue()


@dataclass
class CsvData:
    meta: list = field(default_factory=list)
    columns: list = field(default_factory=list)
    rows: list = field(default_factory=list)
    kernel_header: dict | None = None

    def column(self, name: str) -> np.ndarray:
        i = self.columns.index(name)
        return np.array([float(r[i]) for r in self.rows])

    def to_kernel(self) -> KernelField:
        h = self.kernel_header
        if h is None:
            raise ConfigError("not a kernel file")
        spec = LatticeSpec(int(h["d"]), int(h["L"]), int(h["N"]), float(h["alpha"]))
        vals = np.zeros((spec.M,) * spec.d)
        for r in self.rows:
            idx = tuple(int(c) % spec.M for c in r[:-1])
            vals[idx] = float(r[-1])
        m2 = float(h["m2"])
        return KernelField(spec, vals, m2=m2 if m2 else None)


def _num(s: str):
    try:
        return int(s)
    except ValueError:
        try:
            return float(s)
        except ValueError:
            return s


def read_csv(path) -> CsvData:
    with open(path, encoding="utf-8") as fh:
        return parse_csv(fh.read())


def parse_csv(text: str) -> CsvData:
    out = CsvData()
    lines = text.splitlines()
    body = []
    i = 0
    while i < len(lines):
        line = lines[i]
        if line.startswith("# meta "):
            out.meta.append(line[len("# meta "):])
        elif line.strip() == f"# {KERNEL_HEADER}":
            vals = lines[i + 1][2:].split(",")
            out.kernel_header = dict(zip(KERNEL_HEADER.split(","), vals))
            i += 1
        elif line.startswith("#") or not line.strip():
            pass
        else:
            body.append(line)
        i += 1
    rows = list(csv.reader(body))
    if out.kernel_header is not None:
        d = int(out.kernel_header["d"])
        out.columns = [f"x_{k + 1}" for k in range(d)] + ["value"]
        out.rows = [[_num(c) for c in r] for r in rows]
    elif rows:
        out.columns = rows[0]
        out.rows = [[_num(c) for c in r] for r in rows[1:]]
    return out

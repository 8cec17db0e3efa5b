"""Canonical coefficient tables: CSV with columns line_id, monomial_signature, coefficient."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping

from .series import DEFAULT_POLICY, Monomial, TruncatedSeries, TruncationPolicy

COLUMNS = ("line_id", "monomial_signature", "coefficient")

REFERENCE_TABLES = {
    "plain": "plain_eps1_K0.csv",
    "proximal": "proximal_eps0.01_K70.csv",
    "hyper": "hyper_eps0.01_N30_N1_10.csv",
}

Table = dict[tuple[int, str], float]


class TableError(ValueError):
    pass


def series_rows(lines: Mapping[int, TruncatedSeries] | Iterable[TruncatedSeries],
                start: int = 1) -> list[tuple[int, str, float]]:
    if not isinstance(lines, Mapping):
        lines = dict(enumerate(lines, start))
    return [(n, m.signature(), c) for n in sorted(lines) for m, c in lines[n].items()]


def format_table(rows: Iterable[tuple[int, str, float]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for n, sig, c in rows:
        w.writerow([n, sig, repr(float(c))])
    return buf.getvalue()


def write_table(path: str | Path, rows: Iterable[tuple[int, str, float]]) -> Path:
    path = Path(path)
    path.write_text(format_table(rows))
    return path


def parse_table(text: str, source: str = "<table>") -> Table:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise TableError(f"{source}: empty table") from None
    if tuple(h.strip() for h in header) != COLUMNS:
        raise TableError(f"{source}: expected header {','.join(COLUMNS)}")
    out: Table = {}
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 3:
            raise TableError(f"{source}:{lineno}: expected 3 fields, got {len(row)}")
        try:
            n = int(row[0])
            sig = Monomial.parse(row[1]).signature()
            c = float(row[2])
        except ValueError as exc:
            raise TableError(f"{source}:{lineno}: {exc}") from None
        if not math.isfinite(c):
            raise TableError(f"{source}:{lineno}: coefficient is not finite")
        if (n, sig) in out:
            raise TableError(f"{source}:{lineno}: duplicate entry for line {n}, {sig}")
        out[(n, sig)] = c
    return out


def read_table(path: str | Path) -> Table:
    path = Path(path)
    return parse_table(path.read_text(), str(path))


def reference_table(name: str) -> Table:
    """One of the published tables shipped with the package (``plain``, ``proximal``, ``hyper``)."""
    try:
        fname = REFERENCE_TABLES[name]
    except KeyError:
        raise TableError(f"unknown reference table {name!r}") from None
    text = resources.files("gmol").joinpath("data", fname).read_text()
    return parse_table(text, fname)


def table_series(table: Table, policy: TruncationPolicy = DEFAULT_POLICY) -> dict[int, TruncatedSeries]:
    terms: dict[int, dict[Monomial, float]] = {}
    for (n, sig), c in table.items():
        terms.setdefault(n, {})[Monomial.parse(sig)] = c
    return {n: TruncatedSeries(t, policy) for n, t in terms.items()}


def table_json(lines: Mapping[int, TruncatedSeries]) -> str:
    return json.dumps({str(n): s.to_json_obj() for n, s in sorted(lines.items())}, indent=1)


def series_from_json(text: str, policy: TruncationPolicy = DEFAULT_POLICY) -> dict[int, TruncatedSeries]:
    obj = json.loads(text)
    return {int(n): TruncatedSeries.from_json_obj(rows, policy) for n, rows in obj.items()}


@dataclass
class DiffEntry:
    line: int
    signature: str
    a: float
    b: float

    @property
    def abs_err(self) -> float:
        return abs(self.a - self.b)

    @property
    def rel_err(self) -> float:
        scale = abs(self.b)
        return self.abs_err / scale if scale else (0.0 if self.abs_err == 0 else math.inf)


@dataclass
class DiffReport:
    rel_tol: float
    abs_tol: float
    compared: int
    failures: list[DiffEntry] = field(default_factory=list)
    only_a: list[tuple[int, str]] = field(default_factory=list)
    only_b: list[tuple[int, str]] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures

    def worst(self, count: int = 5) -> list[DiffEntry]:
        return sorted(self.failures, key=lambda e: e.rel_err, reverse=True)[:count]

    def summary(self) -> str:
        head = (f"compared {self.compared} coefficients: "
                f"{'all pass' if self.passed else f'{len(self.failures)} failing'} "
                f"(rel_tol={self.rel_tol:g}, abs_tol={self.abs_tol:g})")
        rows = [f"  line {e.line} {e.signature}: {e.a!r} vs {e.b!r} "
                f"(abs {e.abs_err:.3g}, rel {e.rel_err:.3g})" for e in self.worst()]
        return "\n".join([head, *rows])

    def to_dict(self) -> dict:
        return {"passed": self.passed, "compared": self.compared, "rel_tol": self.rel_tol,
                "abs_tol": self.abs_tol,
                "failures": [{"line": e.line, "signature": e.signature, "a": e.a, "b": e.b}
                             for e in self.worst(len(self.failures))],
                "only_a": [list(k) for k in self.only_a], "only_b": [list(k) for k in self.only_b]}


def diff_tables(a: Table | str | Path, b: Table | str | Path, rel_tol: float = 1e-3,
                abs_tol: float = 0.0, *, keys: str = "union") -> DiffReport:
    """Compare coefficients; an entry passes if ``|a - b| <= abs_tol`` or ``<= rel_tol * |b|``.

    ``keys`` is ``union`` (a missing entry counts as zero), ``a`` (only
    entries present in ``a``, e.g. a hand-transcribed table that omits
    terms) or ``both``.
    """
    ta = a if isinstance(a, dict) else read_table(a)
    tb = b if isinstance(b, dict) else read_table(b)
    if keys == "union":
        kset = set(ta) | set(tb)
    elif keys == "a":
        kset = set(ta)
    elif keys == "both":
        kset = set(ta) & set(tb)
    else:
        raise ValueError(f"unknown key policy {keys!r}")
    rep = DiffReport(rel_tol, abs_tol, len(kset),
                     only_a=sorted(set(ta) - set(tb)), only_b=sorted(set(tb) - set(ta)))
    for key in sorted(kset):
        e = DiffEntry(key[0], key[1], ta.get(key, 0.0), tb.get(key, 0.0))
        if not (e.abs_err <= abs_tol or e.abs_err <= rel_tol * abs(e.b)):
            rep.failures.append(e)
    return rep

import math

import pytest

from gmol.operator import ProblemSpec
from gmol.sweep import plain_solve
from gmol.tables import (COLUMNS, REFERENCE_TABLES, TableError, diff_tables, format_table,
                         parse_table, read_table, reference_table, series_from_json, series_rows,
                         table_json, table_series, write_table)


@pytest.fixture(scope="module")
def eps1_compat():
    return plain_solve(ProblemSpec(1.0), 10, compat=True)


def _rows(bundle):
    return series_rows({n: bundle.lines[n] for n in range(1, bundle.N)})


class TestFormat:
    def test_header_and_round_trip(self, eps1_compat, tmp_path):
        rows = _rows(eps1_compat)
        text = format_table(rows)
        assert text.splitlines()[0] == ",".join(COLUMNS)
        path = write_table(tmp_path / "t.csv", rows)
        assert read_table(path) == {(n, s): c for n, s, c in rows}

    def test_exact_round_trip(self, eps1_compat, tmp_path):
        rows = _rows(eps1_compat)
        a = write_table(tmp_path / "a.csv", rows)
        back = table_series(read_table(a))
        b = write_table(tmp_path / "b.csv", series_rows(back))
        assert diff_tables(a, b, rel_tol=0, abs_tol=0).passed

    def test_json_round_trip(self, eps1_compat):
        lines = {n: eps1_compat.lines[n] for n in range(1, 10)}
        assert series_from_json(table_json(lines)) == lines

    def test_deterministic(self):
        a = format_table(_rows(plain_solve(ProblemSpec(1.0), 10)))
        b = format_table(_rows(plain_solve(ProblemSpec(1.0), 10)))
        assert a == b


class TestParse:
    @pytest.mark.parametrize("text", [
        "",
        "line,sig,coeff\n1,1,0.5\n",
        "line_id,monomial_signature,coefficient\n1,1\n",
        "line_id,monomial_signature,coefficient\n1,1,abc\n",
        "line_id,monomial_signature,coefficient\n1,1,nan\n",
        "line_id,monomial_signature,coefficient\n1,uf^1,0.5\n1,uf,0.25\n",
    ])
    def test_malformed(self, text):
        with pytest.raises(TableError):
            parse_table(text)

    def test_signature_normalized(self):
        t = parse_table("line_id,monomial_signature,coefficient\n2,uf''*uf^3,1.5\n")
        assert t == {(2, "uf^3*uf''^1"): 1.5}


class TestDiff:
    def test_self(self, eps1_compat):
        t = {(n, s): c for n, s, c in _rows(eps1_compat)}
        rep = diff_tables(t, t)
        assert rep.passed and rep.compared == len(t)

    def test_single_perturbation(self, eps1_compat):
        a = {(n, s): c for n, s, c in _rows(eps1_compat)}
        b = dict(a)
        b[(5, "uf^1")] *= 1.01
        rep = diff_tables(b, a, rel_tol=1e-3)
        assert not rep.passed and len(rep.failures) == 1
        assert rep.failures[0].line == 5 and "1 failing" in rep.summary()

    def test_key_policies(self):
        a = {(1, "1"): 1.0, (1, "uf^1"): 2.0}
        b = {(1, "1"): 1.0, (2, "1"): 3.0}
        assert not diff_tables(a, b).passed
        assert not diff_tables(a, b, keys="a").passed
        assert diff_tables(a, b, keys="both").passed
        rep = diff_tables(a, b)
        assert rep.only_a == [(1, "uf^1")] and rep.only_b == [(2, "1")]
        with pytest.raises(ValueError):
            diff_tables(a, b, keys="neither")

    def test_abs_tol(self):
        assert diff_tables({(1, "1"): 1e-9}, {(1, "1"): 0.0}, abs_tol=1e-8).passed
        e = diff_tables({(1, "1"): 1e-9}, {(1, "1"): 0.0}).failures[0]
        assert math.isinf(e.rel_err)

    def test_report_dict(self):
        rep = diff_tables({(1, "1"): 2.0}, {(1, "1"): 1.0})
        d = rep.to_dict()
        assert d["passed"] is False and d["failures"][0]["a"] == 2.0


class TestReference:
    @pytest.mark.parametrize("name", sorted(REFERENCE_TABLES))
    def test_loads(self, name):
        t = reference_table(name)
        assert len(t) > 60 and all(math.isfinite(c) for c in t.values())

    def test_unknown(self):
        with pytest.raises(TableError):
            reference_table("nope")

    def test_plain_reproduced(self, eps1_compat):
        mine = {(n, s): c for n, s, c in _rows(eps1_compat)}
        rep = diff_tables(reference_table("plain"), mine, rel_tol=1e-3, keys="a")
        assert rep.passed, rep.summary()

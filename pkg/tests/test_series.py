import json

import numpy as np
import pytest
from hypothesis import given, settings

import series_cases as sc
from gmol.boundary import FourierBoundary, theta_grid
from gmol.series import (DEFAULT_POLICY, Monomial, PolicyMismatch, SeriesError, TruncatedSeries,
                         TruncationPolicy, add, differentiate_theta, evaluate, isclose, mul,
                         poly_apply, substitute)

ROOT = 1.324717957244746

uf = TruncatedSeries.symbol("uf")
one = TruncatedSeries.constant(1.0)


def S(text: str, policy=DEFAULT_POLICY) -> TruncatedSeries:
    """Tiny parser for tests: ``"0.5*uf^2 + 1"``."""
    terms = {}
    for part in text.replace(" ", "").replace("-", "+-").split("+"):
        if not part:
            continue
        coeff, _, sig = part.partition("@")
        m = Monomial.parse(sig or "1")
        terms[m] = terms.get(m, 0.0) + float(coeff)
    return TruncatedSeries(terms, policy)


class TestMonomial:
    def test_signature_round_trip(self):
        m = Monomial.parse("uf^3*uf''^1*d1^2")
        assert m.signature() == "uf^3*uf''^1*d1^2"
        assert m.degree == 4 and m.step == 2

    def test_parse_merges_repeats(self):
        assert Monomial.parse("uf*uf") == Monomial.parse("uf^2")

    def test_constant(self):
        assert Monomial.parse("1") == Monomial() and Monomial().signature() == "1"


class TestPolicy:
    def test_defaults(self):
        p = TruncationPolicy()
        assert p.degree_caps == (3, 1, 1, 0, 0) and p.step_cap == 2 and p.drop_tol == 1e-14

    def test_rejects_negative_caps(self):
        with pytest.raises(ValueError):
            TruncationPolicy((3, -1))

    def test_rejects_fifth_derivative(self):
        with pytest.raises(ValueError):
            TruncationPolicy((1,) * 6)

    def test_cap_zero_forbids(self):
        s = TruncatedSeries.symbol("uf", 3)
        assert not s and s.discarded == 1.0

    def test_product_of_caps_kept(self):
        s = TruncatedSeries({Monomial.parse("uf^3*uf''"): 2.0})
        assert s.coeff("uf^3*uf''^1") == 2.0

    def test_drop_tolerance(self):
        assert not TruncatedSeries.constant(1e-15)


class TestAdd:
    def test_cancellation(self):
        assert add(one + uf, 2.0 - uf) == TruncatedSeries.constant(3.0)

    def test_identity(self):
        u1 = S("0.0588308 + 0.167434@uf - 0.00214203@uf^2 + 0.0126122@uf''")
        assert add(u1, TruncatedSeries.zero()) == u1

    def test_like_terms(self):
        half = S("0.5@uf^2")
        assert add(half, half).coeff("uf^2") == 1.0

    def test_policy_mismatch(self):
        with pytest.raises(PolicyMismatch):
            add(uf, TruncatedSeries.symbol("uf", policy=TruncationPolicy((2,))))


class TestMul:
    def test_binomial(self):
        assert mul(one + uf, one + uf) == S("1 + 2@uf + 1@uf^2")

    def test_degree_cap(self):
        sq = S("1@uf^2")
        prod = mul(sq, sq)
        assert not prod and prod.discarded == 1.0

    def test_step_cap(self):
        d_uf = TruncatedSeries.symbol("uf", step=1)
        d1 = TruncatedSeries.constant(1.0).graded(1)
        assert not mul(mul(d_uf, d_uf), d1)

    def test_scalar(self):
        assert (uf * 2.0).coeff("uf") == 2.0 and (uf / 4).coeff("uf") == 0.25


class TestPolyApply:
    def test_published_nonlinearity(self):
        assert poly_apply((0, 1, 0, -1), uf) == S("1@uf - 1@uf^3")

    def test_zero_argument(self):
        assert poly_apply((0.7, 2, 3, 4), TruncatedSeries.zero()) == TruncatedSeries.constant(0.7)

    def test_plateau_root(self):
        # -u^3 + u + 1 vanishes at the plateau root
        val = poly_apply((1, 1, 0, -1), TruncatedSeries.constant(ROOT)).constant_term()
        assert abs(val) < 1e-12

    def test_degree_four_rejected(self):
        with pytest.raises(SeriesError):
            poly_apply((0, 0, 0, 0, 1), uf)

    def test_trailing_zero_ok(self):
        assert poly_apply((1, 1, 0, 0, 0), uf) == one + uf


class TestDifferentiate:
    def test_square(self):
        assert differentiate_theta(S("1@uf^2")) == S("2@uf*uf'")

    def test_constant(self):
        assert not differentiate_theta(TruncatedSeries.constant(0.0588308))

    def test_second(self):
        assert differentiate_theta(uf, 2) == TruncatedSeries.symbol("uf", 2)

    def test_over_cap_discarded(self):
        out = differentiate_theta(TruncatedSeries.symbol("uf", 2))
        assert not out and out.discarded == 1.0

    def test_step_carried(self):
        s = TruncatedSeries.symbol("uf", step=2)
        assert differentiate_theta(s).coeff("uf'*d1^2") == 1.0


class TestSubstitute:
    def test_relabel(self):
        s = uf + TruncatedSeries.symbol("uf", 2)
        u5 = TruncatedSeries.symbol("U5")
        assert substitute(s, "uf", u5) == u5 + TruncatedSeries.symbol("U5", 2)

    def test_constant(self):
        assert substitute(S("1@uf^2"), "uf", TruncatedSeries.constant(1.5)) == \
            TruncatedSeries.constant(2.25)

    def test_derivative_of_replacement(self):
        ug2 = S("1@ug^2")
        assert substitute(TruncatedSeries.symbol("uf", 1), "uf", ug2) == S("2@ug*ug'")

    def test_other_families_pass(self):
        s = uf + TruncatedSeries.symbol("x")
        assert substitute(s, "uf", TruncatedSeries.constant(0.0)) == TruncatedSeries.symbol("x")

    def test_self_reference(self):
        with pytest.raises(SeriesError):
            substitute(uf, "uf", uf + 1.0)

    def test_step_room(self):
        s = TruncatedSeries.symbol("x", step=2)
        r = one + TruncatedSeries.symbol("y", step=1)
        assert substitute(s, "x", r) == TruncatedSeries.constant(1.0).graded(2)


class TestEvaluate:
    theta = theta_grid(16)

    def test_published_line_at_zero(self):
        u5 = S("0.146024 + 0.672307@uf - 0.00862244@uf^2")
        out = evaluate(u5, {"uf": FourierBoundary.constant(0.0)}, self.theta)
        assert np.allclose(out, 0.146024, atol=1e-15)

    def test_sin(self):
        out = evaluate(uf, {"uf": FourierBoundary(0.0, sin=(1.0,))}, self.theta)
        assert np.allclose(out, np.sin(self.theta))

    def test_second_derivative(self):
        out = evaluate(TruncatedSeries.symbol("uf", 2), {"uf": FourierBoundary(0.0, sin=(1.0,))},
                       self.theta)
        assert np.allclose(out, -np.sin(self.theta))

    def test_step_marker(self):
        s = TruncatedSeries.constant(2.0).graded(2)
        assert evaluate(s, {}, 4)[0] == 2.0
        assert evaluate(s, {}, 4, step_value=0.5)[0] == 0.5

    def test_unbound(self):
        with pytest.raises(SeriesError):
            evaluate(uf, {}, 8)


class TestSerialization:
    def test_json_round_trip(self):
        s = S("0.0588308 + 0.167434@uf - 0.00214203@uf^2 + 0.0126122@uf''*d1^1")
        assert TruncatedSeries.from_json(s.to_json()) == s

    def test_canonical_order(self):
        a = S("1@uf^2 + 3 + 2@uf")
        rows = json.loads(a.to_json())
        assert [r["coeff"] for r in rows] == [3.0, 2.0, 1.0]

    def test_isclose(self):
        assert isclose(uf, uf + 1e-13) and not isclose(uf, uf + 1e-9)


class TestCarriers:
    def test_set_step(self):
        s = TruncatedSeries.symbol("uf", step=2) + TruncatedSeries.symbol("uf")
        assert s.set_step(1.0) == uf * 2.0

    def test_rename(self):
        assert uf.rename({"uf": "U3"}) == TruncatedSeries.symbol("U3")

    def test_restrict(self):
        assert (one + uf).restrict(["uf"]) == one

    def test_immutable_terms(self):
        s = one + uf
        s.terms.clear()
        assert len(s) == 2


# property suite -----------------------------------------------------------

@settings(max_examples=300, deadline=None)
@given(sc.series, sc.series, sc.series)
def test_ring_laws(a, b, c):
    sc.check_ring_laws(a, b, c)


@settings(max_examples=300, deadline=None)
@given(sc.series, sc.series)
def test_leibniz(a, b):
    sc.check_leibniz(a, b)


@settings(max_examples=300, deadline=None)
@given(sc.series, sc.series, sc.replacement)
def test_substitution_homomorphism(a, b, r):
    sc.check_substitution(a, b, r)


@settings(max_examples=300, deadline=None)
@given(sc.series, sc.series)
def test_evaluate_linearity(a, b):
    sc.check_evaluate_linearity(a, b)


@settings(max_examples=300, deadline=None)
@given(sc.series)
def test_derivative_evaluation(a):
    sc.check_derivative_evaluation(a)


@settings(max_examples=200, deadline=None)
@given(sc.raw_series, sc.raw_series)
def test_commutativity_under_default_caps(ra, rb):
    a, b = sc.build(ra, DEFAULT_POLICY), sc.build(rb, DEFAULT_POLICY)
    assert mul(a, b) == mul(b, a)
    assert mul(a, b).discarded == mul(b, a).discarded


@settings(max_examples=200, deadline=None)
@given(sc.raw_series)
def test_stored_terms_respect_policy(ra):
    s = sc.build(ra, DEFAULT_POLICY)
    for part in (s, mul(s, s), differentiate_theta(s)):
        for m, c in part.items():
            assert DEFAULT_POLICY.admits(m) and abs(c) >= DEFAULT_POLICY.drop_tol

"""Truncated multivariate formal series over boundary-symbol families.

A series is a sparse polynomial whose variables are the angular derivatives
``(family, j)`` of a small number of unknown functions of theta (the outer
boundary ``uf``, node values ``U3``, a transient line symbol during a sweep,
...), plus one formal grading marker for the grid step.  All operations are
pure; a :class:`TruncatedSeries` is never mutated after construction.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import TYPE_CHECKING, Iterable, Mapping, NamedTuple, Sequence

import numpy as np

if TYPE_CHECKING:
    from .boundary import BoundaryFunction

MAX_DERIV = 4

Factor = tuple[str, int, int]  # (family, deriv order, power)


class SymbolKey(NamedTuple):
    family: str
    deriv: int = 0


class Monomial(NamedTuple):
    """Product of symbol powers times ``step ** step_order``.

    ``factors`` is sorted by ``(family, deriv)`` and never holds a zero power,
    so two equal monomials are equal as tuples.
    """

    factors: tuple[Factor, ...] = ()
    step: int = 0

    @property
    def degree(self) -> int:
        return sum(p for _, _, p in self.factors)

    def families(self) -> set[str]:
        return {f for f, _, _ in self.factors}

    def signature(self) -> str:
        """Readable, parseable label such as ``uf^3*uf''^1*d1^2``."""
        parts = [f"{fam}{chr(39) * j}^{p}" for fam, j, p in self.factors]
        if self.step:
            parts.append(f"d1^{self.step}")
        return "*".join(parts) if parts else "1"

    @classmethod
    def parse(cls, sig: str) -> "Monomial":
        sig = sig.strip()
        if sig in ("", "1"):
            return cls()
        factors: dict[tuple[str, int], int] = {}
        step = 0
        for part in sig.split("*"):
            name, _, power = part.partition("^")
            p = int(power) if power else 1
            if name == "d1":
                step += p
                continue
            base = name.rstrip("'")
            key = (base, len(name) - len(base))
            factors[key] = factors.get(key, 0) + p
        return cls(_canon(factors), step)


def _canon(exps: Mapping[tuple[str, int], int]) -> tuple[Factor, ...]:
    return tuple((f, j, p) for (f, j), p in sorted(exps.items()) if p)


def _mono_mul(a: Monomial, b: Monomial) -> Monomial:
    if not a.factors:
        return Monomial(b.factors, a.step + b.step)
    if not b.factors:
        return Monomial(a.factors, a.step + b.step)
    exps: dict[tuple[str, int], int] = {}
    for f, j, p in a.factors:
        exps[(f, j)] = p
    for f, j, p in b.factors:
        exps[(f, j)] = exps.get((f, j), 0) + p
    return Monomial(_canon(exps), a.step + b.step)


def _sort_key(m: Monomial):
    return (m.step, m.degree, m.factors)


@dataclass(frozen=True)
class TruncationPolicy:
    """Degree caps per derivative order, a step-order cap and a drop tolerance.

    A monomial is admissible when, for every family and every derivative
    order ``j``, the summed power of that family's order-``j`` symbols is at
    most ``degree_caps[j]``, and its step order is at most ``step_cap``.
    Derivative orders beyond ``len(degree_caps) - 1`` are never admissible.
    """

    degree_caps: tuple[int, ...] = (3, 1, 1, 0, 0)
    step_cap: int = 2
    drop_tol: float = 1e-14

    def __post_init__(self):
        caps = tuple(int(c) for c in self.degree_caps)
        object.__setattr__(self, "degree_caps", caps)
        if any(c < 0 for c in caps) or self.step_cap < 0:
            raise ValueError("truncation caps must be nonnegative")
        if len(caps) > MAX_DERIV + 1:
            raise ValueError(f"derivative orders above {MAX_DERIV} are not supported")

    def admits(self, m: Monomial) -> bool:
        if m.step > self.step_cap:
            return False
        caps = self.degree_caps
        for _, j, p in m.factors:
            # factors never repeat a (family, deriv) pair, so a per-factor
            # check is the per-family, per-order total
            if j >= len(caps) or p > caps[j]:
                return False
        return True


DEFAULT_POLICY = TruncationPolicy()


class PolicyMismatch(ValueError):
    pass


class SeriesError(ValueError):
    pass


class TruncatedSeries:
    """Immutable sparse polynomial ``{Monomial: coefficient}`` under a policy.

    ``discarded`` records the absolute coefficient mass that the operation
    producing this series had to drop because of the truncation caps.
    """

    __slots__ = ("_terms", "policy", "discarded")

    def __init__(self, terms: Mapping[Monomial, float] | None = None,
                 policy: TruncationPolicy = DEFAULT_POLICY, *,
                 discarded: float = 0.0, _trusted: bool = False):
        self.policy = policy
        if _trusted:
            self._terms = dict(terms or {})
            self.discarded = discarded
            return
        kept: dict[Monomial, float] = {}
        lost = 0.0
        for m, c in (terms or {}).items():
            m = Monomial(_canon({(f, j): p for f, j, p in m.factors}), m.step)
            if not policy.admits(m):
                lost += abs(c)
                continue
            kept[m] = kept.get(m, 0.0) + float(c)
        self._terms = {m: c for m, c in kept.items() if abs(c) >= policy.drop_tol}
        self.discarded = discarded + lost

    # construction ---------------------------------------------------------

    @classmethod
    def zero(cls, policy: TruncationPolicy = DEFAULT_POLICY) -> "TruncatedSeries":
        return cls({}, policy, _trusted=True)

    @classmethod
    def constant(cls, c: float, policy: TruncationPolicy = DEFAULT_POLICY) -> "TruncatedSeries":
        return cls({Monomial(): float(c)}, policy)

    @classmethod
    def symbol(cls, family: str, deriv: int = 0, coeff: float = 1.0, step: int = 0,
               policy: TruncationPolicy = DEFAULT_POLICY) -> "TruncatedSeries":
        return cls({Monomial(((family, deriv, 1),), step): coeff}, policy)

    # inspection -----------------------------------------------------------

    @property
    def terms(self) -> dict[Monomial, float]:
        return dict(self._terms)

    def items(self):
        """Terms in canonical order."""
        return sorted(self._terms.items(), key=lambda kv: _sort_key(kv[0]))

    def __len__(self):
        return len(self._terms)

    def __bool__(self):
        return bool(self._terms)

    def coeff(self, mono: Monomial | str = Monomial()) -> float:
        if isinstance(mono, str):
            mono = Monomial.parse(mono)
        return self._terms.get(mono, 0.0)

    def families(self) -> set[str]:
        out: set[str] = set()
        for m in self._terms:
            out |= m.families()
        return out

    def max_step(self) -> int:
        return max((m.step for m in self._terms), default=0)

    def sup_norm(self) -> float:
        return max((abs(c) for c in self._terms.values()), default=0.0)

    def __eq__(self, other):
        if not isinstance(other, TruncatedSeries):
            return NotImplemented
        return self.policy == other.policy and self._terms == other._terms

    __hash__ = None

    def __repr__(self):
        if not self._terms:
            return "TruncatedSeries(0)"
        body = " + ".join(f"{c:.6g}*{m.signature()}" for m, c in self.items())
        return f"TruncatedSeries({body})"

    # arithmetic -----------------------------------------------------------

    def _check(self, other: "TruncatedSeries"):
        if self.policy != other.policy:
            raise PolicyMismatch("series carry different truncation policies")

    def __add__(self, other):
        if isinstance(other, (int, float)):
            other = TruncatedSeries.constant(other, self.policy)
        return add(self, other)

    __radd__ = __add__

    def __neg__(self):
        return self.scale(-1.0)

    def __sub__(self, other):
        if isinstance(other, (int, float)):
            other = TruncatedSeries.constant(other, self.policy)
        return add(self, other.scale(-1.0))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return self.scale(other)
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other: float):
        return self.scale(1.0 / other)

    def scale(self, k: float) -> "TruncatedSeries":
        tol = self.policy.drop_tol
        terms = {m: c * k for m, c in self._terms.items() if abs(c * k) >= tol}
        return TruncatedSeries(terms, self.policy, _trusted=True)

    def graded(self, step: int) -> "TruncatedSeries":
        """Multiply by ``step_marker ** step``, dropping what exceeds the cap."""
        if step == 0:
            return self
        cap = self.policy.step_cap
        terms, lost = {}, 0.0
        for m, c in self._terms.items():
            if m.step + step > cap:
                lost += abs(c)
            else:
                terms[Monomial(m.factors, m.step + step)] = c
        return TruncatedSeries(terms, self.policy, discarded=lost, _trusted=True)

    def up_to_step(self, cap: int) -> "TruncatedSeries":
        terms = {m: c for m, c in self._terms.items() if m.step <= cap}
        return TruncatedSeries(terms, self.policy, _trusted=True)

    def set_step(self, value: float = 1.0) -> "TruncatedSeries":
        """Replace the grading marker by a number (``d1 = 1.0`` in the listing)."""
        acc: dict[Monomial, float] = {}
        for m, c in self.items():
            key = Monomial(m.factors, 0)
            acc[key] = acc.get(key, 0.0) + c * value ** m.step
        return TruncatedSeries(acc, self.policy)

    def with_policy(self, policy: TruncationPolicy) -> "TruncatedSeries":
        return TruncatedSeries(self._terms, policy)

    def restrict(self, drop_families: Iterable[str]) -> "TruncatedSeries":
        """Set every symbol of the given families to zero."""
        drop = set(drop_families)
        terms = {m: c for m, c in self._terms.items() if not (m.families() & drop)}
        return TruncatedSeries(terms, self.policy, _trusted=True)

    def constant_term(self) -> float:
        """Value with every symbol zero and the step marker at one."""
        return sum(c for m, c in self._terms.items() if not m.factors)

    def rename(self, mapping: Mapping[str, str]) -> "TruncatedSeries":
        acc: dict[Monomial, float] = {}
        for m, c in self._terms.items():
            exps: dict[tuple[str, int], int] = {}
            for f, j, p in m.factors:
                key = (mapping.get(f, f), j)
                exps[key] = exps.get(key, 0) + p
            key = Monomial(_canon(exps), m.step)
            acc[key] = acc.get(key, 0.0) + c
        return TruncatedSeries(acc, self.policy)

    # serialization --------------------------------------------------------

    def to_json_obj(self) -> list[dict]:
        return [{"exponents": [[f, j, p] for f, j, p in m.factors],
                 "stepOrder": m.step, "coeff": c} for m, c in self.items()]

    def to_json(self) -> str:
        return json.dumps(self.to_json_obj())

    @classmethod
    def from_json_obj(cls, obj: Sequence[Mapping], policy: TruncationPolicy = DEFAULT_POLICY):
        terms: dict[Monomial, float] = {}
        for row in obj:
            exps = {(str(f), int(j)): int(p) for f, j, p in row["exponents"]}
            m = Monomial(_canon(exps), int(row.get("stepOrder", 0)))
            terms[m] = terms.get(m, 0.0) + float(row["coeff"])
        return cls(terms, policy)

    @classmethod
    def from_json(cls, text: str, policy: TruncationPolicy = DEFAULT_POLICY):
        return cls.from_json_obj(json.loads(text), policy)


# ---------------------------------------------------------------------------
# core operations


def add(a: TruncatedSeries, b: TruncatedSeries) -> TruncatedSeries:
    a._check(b)
    acc = dict(a._terms)
    for m, c in b._terms.items():
        acc[m] = acc.get(m, 0.0) + c
    tol = a.policy.drop_tol
    return TruncatedSeries({m: c for m, c in acc.items() if abs(c) >= tol}, a.policy,
                           _trusted=True)


def _by_step(s: TruncatedSeries) -> dict[int, list[tuple[Monomial, float]]]:
    groups: dict[int, list[tuple[Monomial, float]]] = {}
    for m, c in s._terms.items():
        groups.setdefault(m.step, []).append((m, c))
    return groups


def _mul(a: TruncatedSeries, b: TruncatedSeries, step_cap: int | None = None) -> TruncatedSeries:
    policy = a.policy
    cap = policy.step_cap if step_cap is None else step_cap
    acc: dict[Monomial, float] = {}
    lost = 0.0
    gb = _by_step(b)
    admits = policy.admits
    for sa, la in _by_step(a).items():
        for sb, lb in gb.items():
            if sa + sb > cap:
                if sa + sb > policy.step_cap:
                    lost += sum(abs(c) for _, c in la) * sum(abs(c) for _, c in lb)
                continue
            for ma, ca in la:
                for mb, cb in lb:
                    m = _mono_mul(ma, mb)
                    if not admits(m):
                        lost += abs(ca * cb)
                        continue
                    acc[m] = acc.get(m, 0.0) + ca * cb
    tol = policy.drop_tol
    return TruncatedSeries({m: c for m, c in acc.items() if abs(c) >= tol}, policy,
                           discarded=lost, _trusted=True)


def mul(a: TruncatedSeries, b: TruncatedSeries) -> TruncatedSeries:
    """Distributive product; inadmissible monomials are discarded, not folded."""
    a._check(b)
    return _mul(a, b)


MAX_POLY_DEGREE = 3


def poly_apply(coeffs: Sequence[float], s: TruncatedSeries) -> TruncatedSeries:
    """``sum_j coeffs[j] * s**j`` with truncation after each power."""
    if len(coeffs) - 1 > MAX_POLY_DEGREE and any(coeffs[MAX_POLY_DEGREE + 1:]):
        raise SeriesError(f"polynomial degree above {MAX_POLY_DEGREE} is not supported")
    out = TruncatedSeries.constant(coeffs[0] if coeffs else 0.0, s.policy)
    power = None
    lost = 0.0
    for j, c in enumerate(coeffs[1:], start=1):
        power = s if power is None else _mul(power, s)
        lost += power.discarded
        if c:
            out = add(out, power.scale(c))
    out.discarded = lost
    return out


def _diff_raw(terms: Mapping[Monomial, float]) -> dict[Monomial, float]:
    acc: dict[Monomial, float] = {}
    for m, c in terms.items():
        fs = m.factors
        for i, (f, j, p) in enumerate(fs):
            exps = {(ff, jj): pp for ff, jj, pp in fs}
            exps[(f, j)] -= 1
            exps[(f, j + 1)] = exps.get((f, j + 1), 0) + 1
            key = Monomial(_canon(exps), m.step)
            acc[key] = acc.get(key, 0.0) + c * p
    return acc


def differentiate_theta(s: TruncatedSeries, order: int = 1) -> TruncatedSeries:
    """Formal theta-derivative by the Leibniz rule, ``order`` times.

    Intermediate derivatives are kept exact; the caps are applied once to the
    final result so that no term is lost early.  Constant coefficients
    differentiate to zero.
    """
    terms: Mapping[Monomial, float] = s._terms
    for _ in range(order):
        terms = _diff_raw(terms)
    return TruncatedSeries(terms, s.policy)


def _derivatives(r: TruncatedSeries, upto: int) -> list[TruncatedSeries]:
    out = [r]
    raw: Mapping[Monomial, float] = r._terms
    for _ in range(upto):
        raw = _diff_raw(raw)
        out.append(TruncatedSeries(raw, r.policy))
    return out


def substitute(s: TruncatedSeries, family: str,
               replacement: TruncatedSeries | Mapping[int, TruncatedSeries]) -> TruncatedSeries:
    """Replace symbol ``(family, j)`` by the ``j``-th theta-derivative of ``replacement``.

    ``replacement`` may also be given as precomputed ``{j: series}``.
    """
    if isinstance(replacement, TruncatedSeries):
        s._check(replacement)
        if family in replacement.families():
            raise SeriesError(f"self-referential substitution of family {family!r}")
        need = max((j for m in s._terms for f, j, _ in m.factors if f == family), default=0)
        derivs = dict(enumerate(_derivatives(replacement, need)))
    else:
        derivs = dict(replacement)
    policy = s.policy
    cap = policy.step_cap
    zero = TruncatedSeries.zero(policy)
    powers: dict[tuple[int, int, int], TruncatedSeries] = {}

    def power(j: int, p: int, room: int) -> TruncatedSeries:
        key = (j, p, room)
        if key not in powers:
            base = derivs.get(j, zero).up_to_step(room)
            powers[key] = base if p == 1 else _mul(power(j, p - 1, room), base, room)
        return powers[key]

    acc: dict[Monomial, float] = {}
    lost = 0.0
    for m, c in s._terms.items():
        rest = tuple(x for x in m.factors if x[0] != family)
        subs = [(j, p) for f, j, p in m.factors if f == family]
        if not subs:
            acc[m] = acc.get(m, 0.0) + c
            continue
        room = cap - m.step
        prod = TruncatedSeries({Monomial(rest, m.step): c}, policy, _trusted=True)
        for j, p in subs:
            prod = _mul(prod, power(j, p, room))
            lost += prod.discarded
            if not prod:
                break
        for mm, cc in prod._terms.items():
            acc[mm] = acc.get(mm, 0.0) + cc
    tol = policy.drop_tol
    return TruncatedSeries({m: c for m, c in acc.items() if abs(c) >= tol}, policy,
                           discarded=lost, _trusted=True)


def evaluate(s: TruncatedSeries, bindings: Mapping[str, "BoundaryFunction"],
             theta: np.ndarray | int, step_value: float = 1.0) -> np.ndarray:
    """Evaluate pointwise on a theta grid (``int`` means a uniform grid of that size)."""
    from .boundary import theta_grid

    if isinstance(theta, (int, np.integer)):
        theta = theta_grid(int(theta))
    theta = np.asarray(theta, dtype=float)
    missing = s.families() - set(bindings)
    if missing:
        raise SeriesError(f"unbound families: {sorted(missing)}")
    cache: dict[tuple[str, int], np.ndarray] = {}
    out = np.zeros_like(theta)
    for m, c in s.items():
        val = np.full_like(theta, c * step_value ** m.step)
        for f, j, p in m.factors:
            if (f, j) not in cache:
                cache[(f, j)] = np.asarray(bindings[f](theta, j), dtype=float) * np.ones_like(theta)
            val = val * cache[(f, j)] ** p
        out += val
    return out


def max_abs_diff(a: TruncatedSeries, b: TruncatedSeries) -> float:
    keys = set(a._terms) | set(b._terms)
    return max((abs(a._terms.get(k, 0.0) - b._terms.get(k, 0.0)) for k in keys), default=0.0)


def isclose(a: TruncatedSeries, b: TruncatedSeries, atol: float = 1e-12) -> bool:
    return max_abs_diff(a, b) <= atol

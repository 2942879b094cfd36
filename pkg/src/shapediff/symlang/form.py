"""Integral terms, measures and forms."""

from __future__ import annotations

import numbers
from dataclasses import dataclass, replace as _dc_replace

from shapediff.errors import ShapeMismatch
from shapediff.symlang import expr as E

CELL = "cell"
EXTERIOR_FACET = "exterior_facet"


@dataclass(frozen=True)
class IntegralTerm:
    integrand: E.Expr
    measure: str = CELL
    subdomain: int | None = None  # None means everywhere
    degree: int | None = None  # None means estimate automatically
    domain: object = None
    reference: bool = False  # integrand already pulled back, includes the measure scaling

    def with_integrand(self, integrand, **changes):
        return _dc_replace(self, integrand=integrand, **changes)


class Measure:
    """``dx`` / ``ds``; call to restrict to a marker, set the domain or the degree."""

    def __init__(self, kind, domain=None, subdomain_id=None, degree=None):
        if kind not in (CELL, EXTERIOR_FACET):
            raise ValueError(f"unknown measure {kind!r}")
        self.kind = kind
        self.domain = domain
        self.subdomain_id = subdomain_id
        self.degree = degree

    def __call__(self, subdomain_id=None, domain=None, degree=None):
        return Measure(
            self.kind,
            domain if domain is not None else self.domain,
            subdomain_id if subdomain_id is not None else self.subdomain_id,
            degree if degree is not None else self.degree,
        )

    def __rmul__(self, integrand):
        integrand = E.as_expr(integrand)
        if integrand is NotImplemented:
            return NotImplemented
        if integrand.shape:
            raise ShapeMismatch(f"integrand must be scalar, got shape {integrand.shape}")
        domain = self.domain if self.domain is not None else E.extract_domain(integrand)
        if domain is None:
            raise ValueError("cannot infer the mesh; use dx(domain=mesh)")
        return Form([IntegralTerm(integrand, self.kind, self.subdomain_id, self.degree, domain)])

    def __repr__(self):
        return f"Measure({self.kind!r}, subdomain_id={self.subdomain_id}, degree={self.degree})"


dx = Measure(CELL)
ds = Measure(EXTERIOR_FACET)


class Form:
    """A sum of integral terms over one mesh."""

    def __init__(self, terms):
        self.terms = tuple(terms)
        domains = {id(t.domain) for t in self.terms}
        if len(domains) > 1:
            raise ValueError("all terms of a form must live on one mesh")

    @property
    def domain(self):
        return self.terms[0].domain if self.terms else None

    def arguments(self):
        args = {}
        for t in self.terms:
            for a in E.extract_arguments(t.integrand):
                args[a.number] = a
        return [args[k] for k in sorted(args)]

    @property
    def arity(self):
        return len(self.arguments())

    def coefficients(self):
        seen = {}
        for t in self.terms:
            for c in E.extract_coefficients(t.integrand):
                seen[c.count] = c
        return [seen[k] for k in sorted(seen)]

    def map_integrands(self, fn):
        out = []
        for t in self.terms:
            new = fn(t)
            if new is None:
                continue
            if isinstance(new, IntegralTerm):
                if not E.is_zero(new.integrand):
                    out.append(new)
            elif not E.is_zero(new):
                out.append(t.with_integrand(new))
        return Form(out)

    def __add__(self, other):
        if isinstance(other, numbers.Number) and other == 0:
            return self
        if not isinstance(other, Form):
            return NotImplemented
        return Form(self.terms + other.terms)

    __radd__ = __add__

    def __neg__(self):
        return (-1.0) * self

    def __sub__(self, other):
        if not isinstance(other, Form):
            return NotImplemented
        return self + (-other)

    def __rmul__(self, scalar):
        s = E.as_expr(scalar)
        if s is NotImplemented or s.shape:
            return NotImplemented
        return Form(t.with_integrand(E.Product(s, t.integrand)) for t in self.terms)

    __mul__ = __rmul__

    def __len__(self):
        return len(self.terms)

    def __repr__(self):
        parts = []
        for t in self.terms:
            tag = "dx" if t.measure == CELL else "ds"
            if t.subdomain is not None:
                tag += f"({t.subdomain})"
            if t.reference:
                tag += "_ref"
            parts.append(f"{t.integrand!r} * {tag}")
        return "Form[" + " + ".join(parts) + "]"

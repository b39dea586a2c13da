"""Set descriptions: concrete syntax, AST, validation, catalog and membership.

The textual syntax is function-call style and whitespace-insensitive:

    implicit(3; x1^2 + x2^2 - x3^2 = 0; x3 > 0)
    curve(3; t, t^2, t^3; domain=(-1/2, 1/2))
    spherecone(4; t, t^2, t^3, sqrt(1 - (t^2 + t^4 + t^6)); domain=(-1/2, 1/2))
    subspace(3; [1, 0, 0]; [0, 1, 0])
    product(A, B)    union(A, B, ...)    point(n)    catalog(name[, n])

Implicit constraints compare an expression against an expression with one of
=, >, <, >=, <= and are normalized to "expr OP 0".  Descriptions are immutable
and print back to a canonical text that reparses to the identical AST.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy import optimize

from .errors import (
    DimensionMismatchError,
    ParseError,
    SqrtInImplicitError,
    UnknownCatalogError,
    ValidationError,
)
from .expr import Expr, Lit, Mul, Neg, Pow, Sqrt, Sub, Var, format_fraction

__all__ = [
    "Constraint", "Implicit", "ParamCurve", "SphereConeOverCurve",
    "LinearSubspace", "Product", "UnionSet", "Point0", "Catalog",
    "parse_set_description", "catalog_example", "resolve", "desc_hash",
    "eval_membership", "membership_mask", "curve_distance", "curve_points",
    "CATALOG_FAMILIES",
]


# ---------------------------------------------------------------------------
# tokenizer

_TOKEN_RE = re.compile(r"""
    (?P<ws>\s+)
  | (?P<number>\d+(?:\.\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>>=|<=|[()\[\],;=><+\-*/^])
""", re.VERBOSE)


@dataclass(frozen=True)
class _Token:
    kind: str          # "number", "ident", one of the operator strings, "eof"
    text: str
    line: int
    col: int


def _tokenize(text: str):
    tokens = []
    line, col = 1, 1
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, col)
        group = m.lastgroup
        chunk = m.group()
        if group != "ws":
            kind = chunk if group == "op" else group
            tokens.append(_Token(kind, chunk, line, col))
        newlines = chunk.count("\n")
        if newlines:
            line += newlines
            col = len(chunk) - chunk.rfind("\n")
        else:
            col += len(chunk)
        pos = m.end()
    tokens.append(_Token("eof", "", line, col))
    return tokens


# ---------------------------------------------------------------------------
# AST nodes

_CMP_PRINT = {"eq": "=", "gt": ">", "lt": "<", "ge": ">=", "le": "<="}


@dataclass(frozen=True)
class Constraint:
    """A relation "expr OP 0" with OP in =, >, <, >=, <=."""

    expr: Expr
    op: str

    def to_text(self) -> str:
        return f"{self.expr.to_text()} {_CMP_PRINT[self.op]} 0"


class SetDescription:
    __slots__ = ()

    @property
    def ambient_dim(self) -> int:
        raise NotImplementedError

    def to_text(self) -> str:
        raise NotImplementedError

    def __str__(self):
        return self.to_text()


@dataclass(frozen=True)
class Implicit(SetDescription):
    n: int
    constraints: tuple

    @property
    def ambient_dim(self):
        return self.n

    @property
    def equations(self):
        return tuple(c.expr for c in self.constraints if c.op == "eq")

    @property
    def sign_conditions(self):
        return tuple(c for c in self.constraints if c.op != "eq")

    def to_text(self):
        body = "; ".join(c.to_text() for c in self.constraints)
        return f"implicit({self.n}; {body})"


@dataclass(frozen=True)
class ParamCurve(SetDescription):
    n: int
    coords: tuple
    domain: tuple  # (Fraction, Fraction), open interval

    @property
    def ambient_dim(self):
        return self.n

    def to_text(self):
        coords = ", ".join(c.to_text() for c in self.coords)
        a, b = self.domain
        return (f"curve({self.n}; {coords}; "
                f"domain=({format_fraction(a)}, {format_fraction(b)}))")


@dataclass(frozen=True)
class SphereConeOverCurve(SetDescription):
    """Cone over a unit-speed-free curve on S^{n-1}: {t*gamma(s), t >= 0}."""

    n: int
    coords: tuple
    domain: tuple

    @property
    def ambient_dim(self):
        return self.n

    def to_text(self):
        coords = ", ".join(c.to_text() for c in self.coords)
        a, b = self.domain
        return (f"spherecone({self.n}; {coords}; "
                f"domain=({format_fraction(a)}, {format_fraction(b)}))")


@dataclass(frozen=True)
class LinearSubspace(SetDescription):
    n: int
    basis: tuple   # tuple of coordinate tuples (Fractions)

    @property
    def ambient_dim(self):
        return self.n

    def basis_matrix(self) -> np.ndarray:
        return np.array([[float(x) for x in v] for v in self.basis])

    def orthonormal_basis(self) -> np.ndarray:
        """Rows form an orthonormal basis of the subspace."""
        q, _ = np.linalg.qr(self.basis_matrix().T)
        return q[:, :len(self.basis)].T

    def to_text(self):
        vecs = "; ".join(
            "[" + ", ".join(format_fraction(x) for x in v) + "]"
            for v in self.basis)
        return f"subspace({self.n}; {vecs})"


@dataclass(frozen=True)
class Product(SetDescription):
    left: SetDescription
    right: SetDescription

    @property
    def ambient_dim(self):
        return self.left.ambient_dim + self.right.ambient_dim

    def to_text(self):
        return f"product({self.left.to_text()}, {self.right.to_text()})"


@dataclass(frozen=True)
class UnionSet(SetDescription):
    members: tuple

    @property
    def ambient_dim(self):
        return self.members[0].ambient_dim

    def to_text(self):
        return "union(" + ", ".join(m.to_text() for m in self.members) + ")"


@dataclass(frozen=True)
class Point0(SetDescription):
    n: int

    @property
    def ambient_dim(self):
        return self.n

    def to_text(self):
        return f"point({self.n})"


@dataclass(frozen=True)
class Catalog(SetDescription):
    name: str
    n: int

    @property
    def ambient_dim(self):
        return self.n

    def to_text(self):
        return f"catalog({self.name}, {self.n})"


# ---------------------------------------------------------------------------
# parser

_VAR_RE = re.compile(r"^x[0-9]+$")


class _Parser:
    def __init__(self, tokens):
        self.tokens = tokens
        self.pos = 0

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def advance(self) -> _Token:
        tok = self.tokens[self.pos]
        if tok.kind != "eof":
            self.pos += 1
        return tok

    def expect(self, kind: str) -> _Token:
        tok = self.peek()
        if tok.kind != kind:
            shown = tok.text if tok.kind != "eof" else "end of input"
            raise ParseError(f"expected {kind!r}, found {shown!r}",
                             tok.line, tok.col)
        return self.advance()

    # ---- set level -------------------------------------------------------

    def parse_set(self) -> SetDescription:
        tok = self.peek()
        if tok.kind != "ident":
            raise ParseError(f"expected a set constructor, found {tok.text!r}",
                             tok.line, tok.col)
        handler = {
            "implicit": self._parse_implicit,
            "curve": self._parse_curve,
            "spherecone": self._parse_spherecone,
            "subspace": self._parse_subspace,
            "product": self._parse_product,
            "union": self._parse_union,
            "point": self._parse_point,
            "catalog": self._parse_catalog,
        }.get(tok.text)
        if handler is None:
            raise ParseError(f"unknown set constructor {tok.text!r}",
                             tok.line, tok.col)
        self.advance()
        self.expect("(")
        node = handler()
        self.expect(")")
        return node

    def _parse_int(self) -> int:
        tok = self.expect("number")
        if "." in tok.text:
            raise ParseError("expected an integer", tok.line, tok.col)
        return int(tok.text)

    def _parse_signed_number(self) -> Fraction:
        negate = False
        if self.peek().kind == "-":
            self.advance()
            negate = True
        value = self._parse_rational()
        return -value if negate else value

    def _parse_rational(self) -> Fraction:
        tok = self.expect("number")
        if "." in tok.text:
            value = Fraction(tok.text)
        else:
            value = Fraction(int(tok.text))
            if self.peek().kind == "/":
                self.advance()
                den_tok = self.expect("number")
                if "." in den_tok.text or int(den_tok.text) == 0:
                    raise ParseError("denominator must be a nonzero integer",
                                     den_tok.line, den_tok.col)
                value = Fraction(value.numerator, int(den_tok.text))
        return value

    def _parse_implicit(self) -> Implicit:
        n = self._parse_int()
        constraints = []
        while self.peek().kind == ";":
            self.advance()
            constraints.append(self._parse_constraint())
        if not constraints:
            tok = self.peek()
            raise ParseError("implicit set needs at least one constraint",
                             tok.line, tok.col)
        return Implicit(n, tuple(constraints))

    def _parse_constraint(self) -> Constraint:
        left = self.parse_expr()
        tok = self.peek()
        ops = {"=": "eq", ">": "gt", "<": "lt", ">=": "ge", "<=": "le"}
        if tok.kind not in ops:
            raise ParseError(f"expected a comparison, found {tok.text!r}",
                             tok.line, tok.col)
        self.advance()
        right = self.parse_expr()
        if right == Lit(Fraction(0)):
            expr = left
        else:
            expr = Sub(left, right)
        return Constraint(expr, ops[tok.kind])

    def _parse_exprlist(self):
        coords = [self.parse_expr()]
        while self.peek().kind == ",":
            self.advance()
            coords.append(self.parse_expr())
        return tuple(coords)

    def _parse_domain(self):
        tok = self.expect("ident")
        if tok.text != "domain":
            raise ParseError(f"expected 'domain', found {tok.text!r}",
                             tok.line, tok.col)
        self.expect("=")
        self.expect("(")
        a = self._parse_signed_number()
        self.expect(",")
        b = self._parse_signed_number()
        self.expect(")")
        return (a, b)

    def _parse_curve(self) -> ParamCurve:
        n = self._parse_int()
        self.expect(";")
        coords = self._parse_exprlist()
        self.expect(";")
        domain = self._parse_domain()
        return ParamCurve(n, coords, domain)

    def _parse_spherecone(self) -> SphereConeOverCurve:
        n = self._parse_int()
        self.expect(";")
        coords = self._parse_exprlist()
        self.expect(";")
        domain = self._parse_domain()
        return SphereConeOverCurve(n, coords, domain)

    def _parse_subspace(self) -> LinearSubspace:
        n = self._parse_int()
        vectors = []
        while self.peek().kind == ";":
            self.advance()
            self.expect("[")
            vec = [self._parse_signed_number()]
            while self.peek().kind == ",":
                self.advance()
                vec.append(self._parse_signed_number())
            self.expect("]")
            vectors.append(tuple(vec))
        if not vectors:
            tok = self.peek()
            raise ParseError("subspace needs at least one basis vector",
                             tok.line, tok.col)
        return LinearSubspace(n, tuple(vectors))

    def _parse_product(self) -> Product:
        left = self.parse_set()
        self.expect(",")
        right = self.parse_set()
        return Product(left, right)

    def _parse_union(self) -> UnionSet:
        members = [self.parse_set()]
        while self.peek().kind == ",":
            self.advance()
            members.append(self.parse_set())
        return UnionSet(tuple(members))

    def _parse_point(self) -> Point0:
        return Point0(self._parse_int())

    def _parse_catalog(self) -> Catalog:
        tok = self.expect("ident")
        name = tok.text
        n = None
        if self.peek().kind == ",":
            self.advance()
            n = self._parse_int()
        family = CATALOG_FAMILIES.get(name)
        if family is None:
            raise UnknownCatalogError(
                f"unknown catalog name {name!r}; known: "
                + ", ".join(sorted(CATALOG_FAMILIES)))
        n = _admissible_n(name, n)
        return Catalog(name, n)

    # ---- expression level ------------------------------------------------

    def parse_expr(self) -> Expr:
        from .expr import Add
        node = self.parse_term()
        while self.peek().kind in ("+", "-"):
            op = self.advance().kind
            rhs = self.parse_term()
            node = Add(node, rhs) if op == "+" else Sub(node, rhs)
        return node

    def parse_term(self) -> Expr:
        node = self.parse_factor()
        while self.peek().kind == "*":
            self.advance()
            node = Mul(node, self.parse_factor())
        return node

    def parse_factor(self) -> Expr:
        tok = self.peek()
        if tok.kind == "-":
            self.advance()
            inner = self.parse_factor()
            # Fold unary minus on literals so printing round-trips.
            if isinstance(inner, Lit):
                return Lit(-inner.value)
            return Neg(inner)
        if tok.kind == "+":
            self.advance()
            return self.parse_factor()
        return self.parse_power()

    def parse_power(self) -> Expr:
        base = self.parse_atom()
        if self.peek().kind == "^":
            self.advance()
            tok = self.expect("number")
            if "." in tok.text or int(tok.text) < 1:
                raise ParseError("exponent must be a positive integer",
                                 tok.line, tok.col)
            return Pow(base, int(tok.text))
        return base

    def parse_atom(self) -> Expr:
        tok = self.peek()
        if tok.kind == "number":
            return Lit(self._parse_rational())
        if tok.kind == "(":
            self.advance()
            node = self.parse_expr()
            self.expect(")")
            return node
        if tok.kind == "ident":
            if tok.text == "sqrt":
                self.advance()
                self.expect("(")
                inner = self.parse_expr()
                self.expect(")")
                return Sqrt(inner)
            if tok.text == "t" or _VAR_RE.match(tok.text):
                self.advance()
                return Var(tok.text)
            raise ParseError(f"unknown identifier {tok.text!r}",
                             tok.line, tok.col)
        raise ParseError(f"expected an expression, found {tok.text!r}",
                         tok.line, tok.col)


def parse_set_description(text: str) -> SetDescription:
    """Parse and validate one set description."""
    parser = _Parser(_tokenize(text))
    node = parser.parse_set()
    trailing = parser.peek()
    if trailing.kind != "eof":
        raise ParseError(f"trailing input {trailing.text!r}",
                         trailing.line, trailing.col)
    validate(node)
    return node


# ---------------------------------------------------------------------------
# validation

def _check_variables(expr: Expr, allowed, where: str):
    bad = expr.variables() - allowed
    if bad:
        raise DimensionMismatchError(
            f"{where} references {', '.join(sorted(bad))} "
            f"outside the allowed variables {{{', '.join(sorted(allowed))}}}")


def validate(desc: SetDescription):
    """Check the structural invariants; raises ValidationError subclasses."""
    if isinstance(desc, Implicit):
        if desc.n < 1:
            raise ValidationError("ambient dimension must be >= 1")
        allowed = {f"x{i}" for i in range(1, desc.n + 1)}
        for c in desc.constraints:
            if c.expr.uses_sqrt():
                raise SqrtInImplicitError(
                    "sqrt is not allowed in implicit constraints")
            _check_variables(c.expr, allowed, "implicit constraint")
    elif isinstance(desc, (ParamCurve, SphereConeOverCurve)):
        kind = "curve" if isinstance(desc, ParamCurve) else "spherecone"
        if len(desc.coords) != desc.n:
            raise DimensionMismatchError(
                f"{kind} in dimension {desc.n} needs {desc.n} coordinates, "
                f"got {len(desc.coords)}")
        for coord in desc.coords:
            _check_variables(coord, {"t"}, f"{kind} coordinate")
        a, b = desc.domain
        if not a < b:
            raise ValidationError("domain must be a nonempty open interval")
        if isinstance(desc, SphereConeOverCurve):
            # Curve must live on the unit sphere: checked at 32 probes.
            ts = np.array([float(a) + (float(b) - float(a)) * (i + 0.5) / 32
                           for i in range(32)])
            pts = curve_points(desc.coords, ts)
            norms_sq = np.sum(pts * pts, axis=1)
            worst = float(np.max(np.abs(norms_sq - 1.0)))
            if worst > 1e-9:
                raise ValidationError(
                    f"spherecone coordinates leave the unit sphere "
                    f"(max |sum of squares - 1| = {worst:.3e})")
    elif isinstance(desc, LinearSubspace):
        if desc.n < 1:
            raise ValidationError("ambient dimension must be >= 1")
        for v in desc.basis:
            if len(v) != desc.n:
                raise DimensionMismatchError(
                    f"basis vector of length {len(v)} in dimension {desc.n}")
        mat = desc.basis_matrix()
        sv = np.linalg.svd(mat, compute_uv=False)
        if len(desc.basis) > desc.n or sv[-1] <= 1e-9 * sv[0]:
            raise ValidationError("basis vectors are linearly dependent")
    elif isinstance(desc, Product):
        validate(desc.left)
        validate(desc.right)
    elif isinstance(desc, UnionSet):
        if not desc.members:
            raise ValidationError("union needs at least one member")
        for m in desc.members:
            validate(m)
        dims = {m.ambient_dim for m in desc.members}
        if len(dims) != 1:
            raise DimensionMismatchError(
                f"union members have mixed ambient dimensions {sorted(dims)}")
    elif isinstance(desc, Point0):
        if desc.n < 1:
            raise ValidationError("ambient dimension must be >= 1")
    elif isinstance(desc, Catalog):
        _admissible_n(desc.name, desc.n)
    else:
        raise ValidationError(f"unknown node {type(desc).__name__}")


# ---------------------------------------------------------------------------
# catalog

def _moment_curve_text(n: int) -> str:
    coords = ", ".join("t" if i == 1 else f"t^{i}" for i in range(1, n + 1))
    return f"curve({n}; {coords}; domain=(-1/2, 1/2))"


def _sphere_curve_text(n: int) -> str:
    # gamma(t) = (t, t^2, ..., t^{n-1}, sqrt(1 - (t^2 + ... + t^{2(n-1)})))
    lead = ", ".join("t" if i == 1 else f"t^{i}" for i in range(1, n))
    radicand = " + ".join(f"t^{2 * i}" for i in range(1, n))
    return (f"spherecone({n}; {lead}, sqrt(1 - ({radicand})); "
            f"domain=(-1/2, 1/2))")


# name -> (fixed n or None, minimal n when variable, text builder)
CATALOG_FAMILIES = {
    "double_cone": (3, None, lambda n: (
        "union("
        "implicit(3; x1^2 + x2^2 - x3^2 = 0; x3 > 0), "
        "implicit(3; x1^2 + x2^2 - x3^2 = 0; x3 < 0))")),
    "crossed_cones": (3, None, lambda n: (
        "union("
        "implicit(3; 2*x1^2 + 2*x2^2 - x3^2 = 0; x3 > 0), "
        "implicit(3; 2*x1^2 + 2*x3^2 - x2^2 = 0; x2 > 0))")),
    "moment_curve": (None, 2, _moment_curve_text),
    "planes_and_cone": (3, None, lambda n: (
        "implicit(3; x1*x2*(x1^2 + x2^2 - x3^2) = 0)")),
    "reversal": (6, None, lambda n: (
        "implicit(6; x1*((x1^2 + x2^2 - x3^4)^2 "
        "+ (x4^2 + x5^2 - x6^4)^2) = 0)")),
    "cone_product": (6, None, lambda n: (
        "product(implicit(3; x1^2 + x2^2 - x3^4 = 0), "
        "implicit(3; x1^2 + x2^2 - x3^4 = 0))")),
    "sphere_curve_cone": (None, 3, _sphere_curve_text),
    "whitney_umbrella": (3, None, lambda n: (
        "implicit(3; x1^2 - x2^2*x3 = 0)")),
    "point": (None, 1, lambda n: f"point({n})"),
}


def _admissible_n(name: str, n) -> int:
    family = CATALOG_FAMILIES.get(name)
    if family is None:
        raise UnknownCatalogError(
            f"unknown catalog name {name!r}; known: "
            + ", ".join(sorted(CATALOG_FAMILIES)))
    fixed_n, min_n, _ = family
    if fixed_n is not None:
        if n is not None and n != fixed_n:
            raise ValidationError(
                f"catalog family {name!r} is fixed in dimension {fixed_n}")
        return fixed_n
    if n is None:
        raise ValidationError(
            f"catalog family {name!r} needs an explicit dimension")
    if n < min_n:
        raise ValidationError(
            f"catalog family {name!r} needs dimension >= {min_n}")
    return n


def catalog_example(name: str, n=None) -> SetDescription:
    """Return the concrete description behind a catalog entry."""
    n = _admissible_n(name, n)
    _, _, builder = CATALOG_FAMILIES[name]
    return parse_set_description(builder(n))


def resolve(desc: SetDescription) -> SetDescription:
    """Replace catalog references by their concrete descriptions."""
    if isinstance(desc, Catalog):
        return catalog_example(desc.name, desc.n)
    if isinstance(desc, Product):
        return Product(resolve(desc.left), resolve(desc.right))
    if isinstance(desc, UnionSet):
        return UnionSet(tuple(resolve(m) for m in desc.members))
    return desc


def desc_hash(desc: SetDescription) -> str:
    """Stable 16-hex-digit content hash of the resolved description."""
    text = resolve(desc).to_text()
    return hashlib.sha256(text.encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# membership and curve distance

def _coord_env(pts: np.ndarray):
    return {f"x{i + 1}": pts[:, i] for i in range(pts.shape[1])}


def membership_mask(desc: SetDescription, pts: np.ndarray,
                    tol: float) -> np.ndarray:
    """Vectorized eval_membership over rows of pts."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    if pts.shape[1] != desc.ambient_dim:
        raise DimensionMismatchError(
            f"points have {pts.shape[1]} coordinates, "
            f"description lives in dimension {desc.ambient_dim}")
    count = pts.shape[0]
    norms = np.linalg.norm(pts, axis=1)

    if isinstance(desc, Catalog):
        return membership_mask(resolve(desc), pts, tol)
    if isinstance(desc, Point0):
        return norms <= tol
    if isinstance(desc, UnionSet):
        ok = np.zeros(count, dtype=bool)
        for m in desc.members:
            ok |= membership_mask(m, pts, tol)
        return ok
    if isinstance(desc, Product):
        nl = desc.left.ambient_dim
        return (membership_mask(desc.left, pts[:, :nl], tol)
                & membership_mask(desc.right, pts[:, nl:], tol))
    if isinstance(desc, LinearSubspace):
        q = desc.orthonormal_basis()
        residual = pts - (pts @ q.T) @ q
        return np.linalg.norm(residual, axis=1) <= tol * (1.0 + norms)
    if isinstance(desc, Implicit):
        env = _coord_env(pts)
        ok = np.ones(count, dtype=bool)
        for c in desc.constraints:
            vals = np.broadcast_to(
                np.asarray(c.expr.evaluate(env), dtype=float), (count,))
            scale = tol * (1.0 + norms ** c.expr.degree())
            if c.op == "eq":
                ok &= np.abs(vals) <= scale
            elif c.op == "gt":
                ok &= vals > 0
            elif c.op == "lt":
                ok &= vals < 0
            elif c.op == "ge":
                ok &= vals >= -scale
            else:
                ok &= vals <= scale
        return ok
    if isinstance(desc, SphereConeOverCurve):
        ok = np.zeros(count, dtype=bool)
        at_vertex = norms <= tol
        ok[at_vertex] = True
        rest = ~at_vertex
        if np.any(rest):
            units = pts[rest] / norms[rest, None]
            dists = np.array([_min_chord_to_curve(desc.coords, desc.domain, u)
                              for u in units])
            ok[rest] = dists <= tol
        return ok
    if isinstance(desc, ParamCurve):
        raise ValidationError(
            "membership on a parametric curve is not defined; "
            "use curve_distance")
    raise ValidationError(f"unknown node {type(desc).__name__}")


def eval_membership(desc: SetDescription, point, tol: float) -> bool:
    """True iff the point lies on the set within degree-weighted tolerance."""
    return bool(membership_mask(desc, np.asarray(point, dtype=float), tol)[0])


def curve_points(coords, tvals: np.ndarray) -> np.ndarray:
    """Evaluate curve coordinates at a vector of parameter values; (M, n)."""
    tvals = np.asarray(tvals, dtype=float)
    env = {"t": tvals}
    cols = [np.broadcast_to(np.asarray(c.evaluate(env), dtype=float),
                            tvals.shape)
            for c in coords]
    return np.column_stack(cols)


def _min_chord_to_curve(coords, domain, point: np.ndarray,
                        grid: int = 2048) -> float:
    """Distance from a point to the curve image over the closed domain."""
    a, b = float(domain[0]), float(domain[1])
    ts = np.linspace(a, b, grid + 1)
    pts = curve_points(coords, ts)
    d2 = np.sum((pts - point) ** 2, axis=1)
    best = int(np.argmin(d2))
    lo = ts[max(best - 1, 0)]
    hi = ts[min(best + 1, grid)]

    def objective(t):
        return float(np.sum((curve_points(coords, np.array([t]))[0]
                             - point) ** 2))

    res = optimize.minimize_scalar(objective, bounds=(lo, hi),
                                   method="bounded",
                                   options={"xatol": 1e-14})
    return float(np.sqrt(min(res.fun, d2[best])))


def curve_distance(desc, point) -> float:
    """Distance from a point to a ParamCurve image (1-D minimization)."""
    if isinstance(desc, Catalog):
        desc = resolve(desc)
    if not isinstance(desc, ParamCurve):
        raise ValidationError("curve_distance expects a curve description")
    point = np.asarray(point, dtype=float)
    if point.shape != (desc.n,):
        raise DimensionMismatchError(
            f"point has shape {point.shape}, curve lives in R^{desc.n}")
    return _min_chord_to_curve(desc.coords, desc.domain, point)

"""Exact-arithmetic expression kernel.

Expression trees over rational constants, parameter symbols, independent
variables and jet variables (partial derivatives treated as coordinates).
Sums and products are flattened, folded and commutatively sorted on
construction, so every `Expr` held by client code is already canonical.
Constants are `fractions.Fraction` throughout; no floats enter symbolic
paths.  sin/cos/exp/log are opaque nodes carrying only a derivative rule.

The module also provides the text grammar (see `parse`), total derivatives
on jet space, substitution, expansion / rational normalization, and the
three-valued equivalence test backed by exact-rational and high-precision
numeric guards.
"""

from __future__ import annotations

import math
import random
from fractions import Fraction
from typing import Callable, Iterable, Mapping

Q = Fraction

MAX_JET_ORDER = 10  # hard bound; models declare 4, on-shell rewriting needs slack

ELEMENTARY_FUNCTIONS = ("sin", "cos", "exp", "log")


class ExprError(Exception):
    """Base class for kernel errors."""


class ExprSyntaxError(ExprError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class UnknownSymbolError(ExprError):
    def __init__(self, name: str, offset: int = -1):
        where = f" (at byte offset {offset})" if offset >= 0 else ""
        super().__init__(f"unknown symbol '{name}'{where}")
        self.name = name
        self.offset = offset


class DomainError(ExprError):
    """Raised on log of a non-positive value, 0**negative, and the like."""


class EvalError(ExprError):
    """Raised when an assignment misses a free symbol."""


# ---------------------------------------------------------------------------
# nodes
# ---------------------------------------------------------------------------


class Expr:
    """Immutable expression node.  All construction goes through the smart
    constructors (`add`, `mul`, `pow_`, `fn`, ...) which canonicalize."""

    __slots__ = ("_hash", "_key")

    # arithmetic sugar -----------------------------------------------------

    def __add__(self, other):
        return add(self, as_expr(other))

    def __radd__(self, other):
        return add(as_expr(other), self)

    def __sub__(self, other):
        return add(self, mul(MINUS_ONE, as_expr(other)))

    def __rsub__(self, other):
        return add(as_expr(other), mul(MINUS_ONE, self))

    def __mul__(self, other):
        return mul(self, as_expr(other))

    def __rmul__(self, other):
        return mul(as_expr(other), self)

    def __truediv__(self, other):
        return mul(self, pow_(as_expr(other), -1))

    def __rtruediv__(self, other):
        return mul(as_expr(other), pow_(self, -1))

    def __pow__(self, other):
        return pow_(self, other)

    def __neg__(self):
        return mul(MINUS_ONE, self)

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return to_string(self)

    def sort_key(self):
        k = self._key
        if k is None:
            k = self._make_key()
            object.__setattr__(self, "_key", k)
        return k

    def _make_key(self):  # pragma: no cover - overridden
        raise NotImplementedError


def _seal(node: Expr, h: int):
    object.__setattr__(node, "_hash", h)
    object.__setattr__(node, "_key", None)


class Rat(Expr):
    __slots__ = ("value",)

    def __init__(self, value: Fraction):
        object.__setattr__(self, "value", value)
        _seal(self, hash(("Rat", value)))

    def __setattr__(self, *a):
        raise AttributeError("Expr nodes are immutable")

    def __eq__(self, other):
        return type(other) is Rat and self.value == other.value

    __hash__ = Expr.__hash__

    def _make_key(self):
        return (0, self.value)


class Param(Expr):
    __slots__ = ("name",)

    def __init__(self, name: str):
        object.__setattr__(self, "name", name)
        _seal(self, hash(("Param", name)))

    def __setattr__(self, *a):
        raise AttributeError("Expr nodes are immutable")

    def __eq__(self, other):
        return type(other) is Param and self.name == other.name

    __hash__ = Expr.__hash__

    def _make_key(self):
        return (1, self.name)


class Indep(Expr):
    __slots__ = ("name",)

    def __init__(self, name: str):
        object.__setattr__(self, "name", name)
        _seal(self, hash(("Indep", name)))

    def __setattr__(self, *a):
        raise AttributeError("Expr nodes are immutable")

    def __eq__(self, other):
        return type(other) is Indep and self.name == other.name

    __hash__ = Expr.__hash__

    def _make_key(self):
        return (2, self.name)


class Jet(Expr):
    """Derivative coordinate u_J of a dependent; order 0 is the dependent
    itself.  `index` is kept sorted by the dependent's variable order, so
    u_xtx and u_txx are the same node."""

    __slots__ = ("dep", "index", "vars")

    def __init__(self, dep: str, index: tuple, vars: tuple):
        if len(index) > MAX_JET_ORDER:
            raise ExprError(f"jet order {len(index)} exceeds bound {MAX_JET_ORDER}")
        pos = {v: i for i, v in enumerate(vars)}
        for v in index:
            if v not in pos:
                raise ExprError(f"index letter '{v}' not a variable of {dep}{vars}")
        index = tuple(sorted(index, key=pos.__getitem__))
        object.__setattr__(self, "dep", dep)
        object.__setattr__(self, "index", index)
        object.__setattr__(self, "vars", vars)
        _seal(self, hash(("Jet", dep, index)))

    def __setattr__(self, *a):
        raise AttributeError("Expr nodes are immutable")

    def __eq__(self, other):
        return (
            type(other) is Jet
            and self.dep == other.dep
            and self.index == other.index
        )

    __hash__ = Expr.__hash__

    @property
    def order(self):
        return len(self.index)

    def raised(self, var: str) -> "Jet":
        return Jet(self.dep, self.index + (var,), self.vars)

    def _make_key(self):
        return (3, self.dep, len(self.index), self.index)


class Fun(Expr):
    __slots__ = ("name", "arg")

    def __init__(self, name: str, arg: Expr):
        object.__setattr__(self, "name", name)
        object.__setattr__(self, "arg", arg)
        _seal(self, hash(("Fun", name, arg)))

    def __setattr__(self, *a):
        raise AttributeError("Expr nodes are immutable")

    def __eq__(self, other):
        return type(other) is Fun and self.name == other.name and self.arg == other.arg

    __hash__ = Expr.__hash__

    def _make_key(self):
        return (4, self.name, self.arg.sort_key())


class Pow(Expr):
    __slots__ = ("base", "exp")

    def __init__(self, base: Expr, exp: Fraction):
        object.__setattr__(self, "base", base)
        object.__setattr__(self, "exp", exp)
        _seal(self, hash(("Pow", base, exp)))

    def __setattr__(self, *a):
        raise AttributeError("Expr nodes are immutable")

    def __eq__(self, other):
        return type(other) is Pow and self.exp == other.exp and self.base == other.base

    __hash__ = Expr.__hash__

    def _make_key(self):
        return (5, self.base.sort_key(), self.exp)


class Prod(Expr):
    __slots__ = ("factors",)

    def __init__(self, factors: tuple):
        object.__setattr__(self, "factors", factors)
        _seal(self, hash(("Prod", factors)))

    def __setattr__(self, *a):
        raise AttributeError("Expr nodes are immutable")

    def __eq__(self, other):
        return type(other) is Prod and self.factors == other.factors

    __hash__ = Expr.__hash__

    def _make_key(self):
        return (6, tuple(f.sort_key() for f in self.factors))


class Sum(Expr):
    __slots__ = ("terms",)

    def __init__(self, terms: tuple):
        object.__setattr__(self, "terms", terms)
        _seal(self, hash(("Sum", terms)))

    def __setattr__(self, *a):
        raise AttributeError("Expr nodes are immutable")

    def __eq__(self, other):
        return type(other) is Sum and self.terms == other.terms

    __hash__ = Expr.__hash__

    def _make_key(self):
        return (7, tuple(t.sort_key() for t in self.terms))


# ---------------------------------------------------------------------------
# smart constructors
# ---------------------------------------------------------------------------

ZERO = Rat(Q(0))
ONE = Rat(Q(1))
MINUS_ONE = Rat(Q(-1))
TWO = Rat(Q(2))
HALF = Rat(Q(1, 2))


def as_expr(x) -> Expr:
    if isinstance(x, Expr):
        return x
    if isinstance(x, (int, Fraction)):
        return Rat(Q(x))
    raise TypeError(f"cannot interpret {x!r} as Expr")


def rat(p, q=1) -> Rat:
    return Rat(Q(p, q))


def _iroot(n: int, k: int):
    """Exact integer k-th root of n >= 0, or None."""
    if n < 0:
        return None
    if n in (0, 1):
        return n
    r = round(n ** (1.0 / k))
    for cand in (r - 1, r, r + 1):
        if cand >= 0 and cand**k == n:
            return cand
    return None


def _rat_pow(value: Q, exp: Q):
    """Exact power of a rational, or None when no exact result exists."""
    if exp.denominator == 1:
        e = int(exp)
        if value == 0 and e <= 0:
            raise DomainError("0 raised to a non-positive power")
        return value**e
    if value == 0:
        if exp > 0:
            return Q(0)
        raise DomainError("0 raised to a negative power")
    neg = value < 0
    if neg and exp.denominator % 2 == 0:
        return None  # stays symbolic; never materialized in-scope
    av = abs(value)
    rn = _iroot(av.numerator, exp.denominator)
    rd = _iroot(av.denominator, exp.denominator)
    if rn is None or rd is None:
        return None
    root = Q(rn, rd)
    if neg:
        root = -root
    return root ** exp.numerator


def pow_(base, exp) -> Expr:
    base = as_expr(base)
    if isinstance(exp, Expr):
        if not isinstance(exp, Rat):
            raise ExprError("power exponents must be rational constants")
        exp = exp.value
    exp = Q(exp)
    if exp == 0:
        if isinstance(base, Rat) and base.value == 0:
            raise DomainError("0**0 is undefined")
        return ONE
    if exp == 1:
        return base
    if isinstance(base, Rat):
        folded = _rat_pow(base.value, exp)
        if folded is not None:
            return Rat(folded)
        return Pow(base, exp)
    if base == ONE:
        return ONE
    if isinstance(base, Pow) and exp.denominator == 1:
        return pow_(base.base, base.exp * exp)
    if isinstance(base, Prod) and exp.denominator == 1:
        return mul(*(pow_(f, exp) for f in base.factors))
    if isinstance(base, Fun) and base.name == "exp":
        return fn("exp", mul(Rat(exp), base.arg))
    return Pow(base, exp)


def mul(*factors) -> Expr:
    coeff = Q(1)
    table: dict[Expr, Q] = {}
    exp_args = []  # exponential factors merge: exp(A)^p * exp(B)^q -> exp(pA+qB)
    stack = [as_expr(f) for f in factors]
    while stack:
        f = stack.pop()
        if isinstance(f, Rat):
            coeff *= f.value
            continue
        if isinstance(f, Prod):
            stack.extend(f.factors)
            continue
        if isinstance(f, Pow):
            b, q = f.base, f.exp
        else:
            b, q = f, Q(1)
        if isinstance(b, Fun) and b.name == "exp":
            exp_args.append(mul(Rat(q), b.arg))
            continue
        table[b] = table.get(b, Q(0)) + q
    if coeff == 0:
        return ZERO
    built = []
    redo = []
    for b, q in table.items():
        if q == 0:
            continue
        p = pow_(b, q)
        if isinstance(p, Rat):
            coeff *= p.value
        elif isinstance(p, Prod):
            redo.append(p)  # e.g. ((a*b)^(1/2))^2 -> a*b
        else:
            built.append(p)
    if exp_args:
        merged = fn("exp", add(*exp_args))
        if isinstance(merged, Rat):
            coeff *= merged.value
        elif isinstance(merged, Fun):
            built.append(merged)
        else:
            redo.append(merged)  # split-off powers re-enter the product
    if redo:
        return mul(Rat(coeff), *built, *redo)
    if coeff == 0:
        return ZERO
    built.sort(key=Expr.sort_key)
    if not built:
        return Rat(coeff)
    if coeff == 1:
        if len(built) == 1:
            return built[0]
        return Prod(tuple(built))
    if len(built) == 1 and isinstance(built[0], Sum):
        # distribute a bare rational over a sum: -(1-n) and (n-1) must agree
        return add(*(mul(Rat(coeff), t) for t in built[0].terms))
    return Prod((Rat(coeff),) + tuple(built))


def _coeff_rest(term: Expr):
    """Split a canonical non-Sum term into (rational coefficient, factor tuple)."""
    if isinstance(term, Rat):
        return term.value, ()
    if isinstance(term, Prod):
        fs = term.factors
        if isinstance(fs[0], Rat):
            return fs[0].value, fs[1:]
        return Q(1), fs
    return Q(1), (term,)


def add(*terms) -> Expr:
    const = Q(0)
    table: dict[tuple, Q] = {}
    stack = [as_expr(t) for t in terms]
    while stack:
        t = stack.pop()
        if isinstance(t, Sum):
            stack.extend(t.terms)
            continue
        if isinstance(t, Rat):
            const += t.value
            continue
        c, rest = _coeff_rest(t)
        table[rest] = table.get(rest, Q(0)) + c
    out = []
    for rest, c in table.items():
        if c == 0:
            continue
        out.append(mul(Rat(c), *rest))
    if const != 0:
        out.append(Rat(const))
    if not out:
        return ZERO
    out.sort(key=Expr.sort_key)
    if len(out) == 1:
        return out[0]
    return Sum(tuple(out))


def fn(name: str, arg) -> Expr:
    arg = as_expr(arg)
    if name == "sin" and isinstance(arg, Rat) and arg.value == 0:
        return ZERO
    if name == "cos" and isinstance(arg, Rat) and arg.value == 0:
        return ONE
    if name == "exp":
        # rational multiples of logarithms leave the exponential as powers:
        # exp(q*log(B) + R) -> B^q * exp(R)   (positive-domain convention)
        if isinstance(arg, Rat) and arg.value == 0:
            return ONE
        terms = arg.terms if isinstance(arg, Sum) else (arg,)
        outer, inner = [], []
        for t in terms:
            c, rest = _coeff_rest(t)
            if len(rest) == 1 and isinstance(rest[0], Fun) and rest[0].name == "log":
                outer.append(pow_(rest[0].arg, c))
            else:
                inner.append(t)
        if outer:
            rest_sum = add(*inner)
            if rest_sum == ZERO:
                return mul(*outer)
            return mul(*outer, Fun("exp", rest_sum))
    if name == "log":
        # split over products and powers (positive-domain convention; every
        # logarithm argument in scope is positive where evaluated)
        if isinstance(arg, Rat):
            if arg.value == 1:
                return ZERO
            if arg.value <= 0:
                raise DomainError("log of a non-positive constant")
        if isinstance(arg, Fun) and arg.name == "exp":
            return arg.arg
        if isinstance(arg, Prod):
            return add(*(fn("log", f) for f in arg.factors))
        if isinstance(arg, Pow):
            return mul(Rat(arg.exp), fn("log", arg.base))
    return Fun(name, arg)


def sym_pow(base, exponent) -> Expr:
    """Power with a symbolic exponent, encoded as exp(exponent*log(base)).

    The node set keeps rational exponents only; source terms like (a*u+b)**n
    go through this helper.  Integer exponents fold back to plain powers.
    """
    base = as_expr(base)
    exponent = as_expr(exponent)
    if isinstance(exponent, Rat):
        return pow_(base, exponent.value)
    return fn("exp", mul(exponent, fn("log", base)))


def canonicalize(e: Expr) -> Expr:
    """Rebuild bottom-up through the constructors (idempotent)."""
    e = as_expr(e)
    if isinstance(e, (Rat, Param, Indep, Jet)):
        return e
    if isinstance(e, Sum):
        return add(*(canonicalize(t) for t in e.terms))
    if isinstance(e, Prod):
        return mul(*(canonicalize(f) for f in e.factors))
    if isinstance(e, Pow):
        return pow_(canonicalize(e.base), e.exp)
    if isinstance(e, Fun):
        return fn(e.name, canonicalize(e.arg))
    raise TypeError(type(e))


# ---------------------------------------------------------------------------
# traversal helpers
# ---------------------------------------------------------------------------


def children(e: Expr) -> tuple:
    if isinstance(e, Sum):
        return e.terms
    if isinstance(e, Prod):
        return e.factors
    if isinstance(e, Pow):
        return (e.base,)
    if isinstance(e, Fun):
        return (e.arg,)
    return ()


def free_atoms(e: Expr) -> frozenset:
    """All Param/Indep/Jet atoms occurring in `e`."""
    out = set()
    stack = [e]
    while stack:
        x = stack.pop()
        if isinstance(x, (Param, Indep, Jet)):
            out.add(x)
        else:
            stack.extend(children(x))
    return frozenset(out)


def jets_in(e: Expr, dep: str | None = None) -> frozenset:
    return frozenset(
        a for a in free_atoms(e)
        if isinstance(a, Jet) and (dep is None or a.dep == dep)
    )


def contains(e: Expr, atom: Expr) -> bool:
    if e == atom:
        return True
    return any(contains(c, atom) for c in children(e))


def contains_fun(e: Expr) -> bool:
    if isinstance(e, Fun):
        return True
    return any(contains_fun(c) for c in children(e))


def has_fractional_power(e: Expr) -> bool:
    if isinstance(e, Pow) and e.exp.denominator != 1:
        return True
    return any(has_fractional_power(c) for c in children(e))


def atom_name(a: Expr) -> str:
    if isinstance(a, (Param, Indep)):
        return a.name
    if isinstance(a, Jet):
        return a.dep if not a.index else a.dep + "_" + "".join(a.index)
    raise TypeError(f"not an atom: {a!r}")


# ---------------------------------------------------------------------------
# derivatives
# ---------------------------------------------------------------------------

_FUN_DERIV: dict[str, Callable[[Expr], Expr]] = {
    "sin": lambda a: fn("cos", a),
    "cos": lambda a: mul(MINUS_ONE, fn("sin", a)),
    "exp": lambda a: fn("exp", a),
    "log": lambda a: pow_(a, -1),
}


def _fun_derivative(name: str, arg: Expr) -> Expr:
    try:
        return _FUN_DERIV[name](arg)
    except KeyError:
        # opaque function: derivative gets a primed name
        return Fun(name + "'", arg)


def derive(e: Expr, leaf_rule: Callable[[Expr], Expr]) -> Expr:
    """Generic derivation: `leaf_rule` gives the derivative of each atom,
    composites follow linearity, Leibniz and the chain rule."""
    if isinstance(e, (Rat, Param, Indep, Jet)):
        return leaf_rule(e)
    if isinstance(e, Sum):
        return add(*(derive(t, leaf_rule) for t in e.terms))
    if isinstance(e, Prod):
        fs = e.factors
        terms = []
        for i, f in enumerate(fs):
            df = derive(f, leaf_rule)
            if df == ZERO:
                continue
            terms.append(mul(*fs[:i], df, *fs[i + 1 :]))
        return add(*terms)
    if isinstance(e, Pow):
        db = derive(e.base, leaf_rule)
        if db == ZERO:
            return ZERO
        return mul(Rat(e.exp), pow_(e.base, e.exp - 1), db)
    if isinstance(e, Fun):
        da = derive(e.arg, leaf_rule)
        if da == ZERO:
            return ZERO
        return mul(_fun_derivative(e.name, e.arg), da)
    raise TypeError(type(e))


def diff_atom(e: Expr, atom: Expr) -> Expr:
    """Partial derivative treating every other atom as constant."""

    def rule(a):
        return ONE if a == atom else ZERO

    return derive(e, rule)


def total_derivative(e: Expr, var: str) -> Expr:
    """Total derivative D_var on jet space: u_J -> u_{J,var} for every
    dependent that carries `var`, explicit occurrences differentiated."""

    def rule(a):
        if isinstance(a, Indep):
            return ONE if a.name == var else ZERO
        if isinstance(a, Jet):
            return a.raised(var) if var in a.vars else ZERO
        return ZERO

    return derive(e, rule)


def total_derivative_multi(e: Expr, index: Iterable[str]) -> Expr:
    for v in index:
        e = total_derivative(e, v)
    return e


# ---------------------------------------------------------------------------
# substitution
# ---------------------------------------------------------------------------


def substitute_many(e: Expr, mapping: Mapping[Expr, Expr]) -> Expr:
    if not mapping:
        return e
    if e in mapping:
        return mapping[e]
    if isinstance(e, (Rat, Param, Indep, Jet)):
        return e
    if isinstance(e, Sum):
        return add(*(substitute_many(t, mapping) for t in e.terms))
    if isinstance(e, Prod):
        return mul(*(substitute_many(f, mapping) for f in e.factors))
    if isinstance(e, Pow):
        return pow_(substitute_many(e.base, mapping), e.exp)
    if isinstance(e, Fun):
        return fn(e.name, substitute_many(e.arg, mapping))
    raise TypeError(type(e))


def substitute(e: Expr, target: Expr, replacement: Expr, ctx=None) -> Expr:
    """Replace every occurrence of the subtree `target`, canonicalizing.

    With a context, the replacement may not introduce undeclared symbols.
    """
    if ctx is not None:
        for a in free_atoms(replacement):
            ctx.check_declared(a)
    return substitute_many(e, {target: replacement})


# ---------------------------------------------------------------------------
# expansion and rational normalization
# ---------------------------------------------------------------------------


def _mul_expanded(a: Expr, b: Expr) -> Expr:
    at = a.terms if isinstance(a, Sum) else (a,)
    bt = b.terms if isinstance(b, Sum) else (b,)
    return add(*(mul(x, y) for x in at for y in bt))


def expand(e: Expr) -> Expr:
    """Distribute products over sums and integer powers of sums."""
    if isinstance(e, (Rat, Param, Indep, Jet)):
        return e
    if isinstance(e, Sum):
        return add(*(expand(t) for t in e.terms))
    if isinstance(e, Fun):
        return fn(e.name, expand(e.arg))
    if isinstance(e, Pow):
        base = expand(e.base)
        if isinstance(base, Sum) and e.exp.denominator == 1 and e.exp > 1:
            out = base
            for _ in range(int(e.exp) - 1):
                out = _mul_expanded(out, base)
            return out
        p = pow_(base, e.exp)
        if isinstance(p, (Prod, Sum)):
            return expand(p)
        return p
    if isinstance(e, Prod):
        out = ONE
        for f in e.factors:
            out = _mul_expanded(out, expand(f))
        return out
    raise TypeError(type(e))


def _denominator_factors(e: Expr) -> dict[Expr, Q]:
    """Decompose a denominator expression into {base: positive exponent}."""
    out: dict[Expr, Q] = {}
    factors = e.factors if isinstance(e, Prod) else (e,)
    for f in factors:
        if isinstance(f, Rat):
            if f.value != 1:
                out[f] = out.get(f, Q(0)) + 1
            continue
        if isinstance(f, Pow):
            out[f.base] = out.get(f.base, Q(0)) + f.exp
        else:
            out[f] = out.get(f, Q(0)) + 1
    return {b: q for b, q in out.items() if q != 0}


def as_numer_denom(e: Expr) -> tuple[Expr, Expr]:
    """Rewrite as num/den with all negative powers cleared into `den`."""
    if isinstance(e, (Rat, Param, Indep, Jet)):
        return e, ONE
    if isinstance(e, Fun):
        return e, ONE
    if isinstance(e, Pow):
        nb, db = as_numer_denom(e.base)
        if e.exp < 0:
            return pow_(db, -e.exp), pow_(nb, -e.exp)
        return pow_(nb, e.exp), pow_(db, e.exp)
    if isinstance(e, Prod):
        nums, dens = [], []
        for f in e.factors:
            nf, df = as_numer_denom(f)
            nums.append(nf)
            dens.append(df)
        return mul(*nums), mul(*dens)
    if isinstance(e, Sum):
        parts = [as_numer_denom(t) for t in e.terms]
        common: dict[Expr, Q] = {}
        for _, d in parts:
            for b, q in _denominator_factors(d).items():
                if common.get(b, Q(0)) < q:
                    common[b] = q
        den = mul(*(pow_(b, q) for b, q in common.items()))
        terms = []
        for n, d in parts:
            dd = _denominator_factors(d)
            fill = mul(*(pow_(b, q - dd.get(b, Q(0))) for b, q in common.items()))
            terms.append(mul(n, fill))
        return add(*terms), den
    raise TypeError(type(e))


def is_zero(e: Expr) -> bool:
    """Exact zero test after expansion and clearing of denominators.

    Complete for rational expressions; conservative (may return False)
    when opaque function nodes hide an identity.
    """
    e = expand(e)
    if e == ZERO:
        return True
    if isinstance(e, (Rat, Param, Indep, Jet, Fun, Pow)):
        return False
    num, _ = as_numer_denom(e)
    return expand(num) == ZERO


def ratnorm(e: Expr) -> Expr:
    """num/den normal form with the numerator expanded."""
    num, den = as_numer_denom(expand(e))
    num = expand(num)
    if num == ZERO:
        return ZERO
    return mul(num, pow_(den, -1))


# ---------------------------------------------------------------------------
# numeric evaluation
# ---------------------------------------------------------------------------


class _NotExact(Exception):
    pass


def eval_exact(e: Expr, env: Mapping[str, Q]) -> Q:
    """Exact rational evaluation; raises _NotExact on opaque functions or
    non-perfect fractional powers."""
    if isinstance(e, Rat):
        return e.value
    if isinstance(e, (Param, Indep, Jet)):
        name = atom_name(e)
        if name not in env:
            raise EvalError(f"assignment missing symbol '{name}'")
        return Q(env[name])
    if isinstance(e, Sum):
        return sum((eval_exact(t, env) for t in e.terms), Q(0))
    if isinstance(e, Prod):
        out = Q(1)
        for f in e.factors:
            out *= eval_exact(f, env)
        return out
    if isinstance(e, Pow):
        b = eval_exact(e.base, env)
        if b == 0 and e.exp <= 0:
            raise DomainError("division by zero in evaluation")
        r = _rat_pow(b, e.exp)
        if r is None:
            raise _NotExact
        return r
    if isinstance(e, Fun):
        raise _NotExact
    raise TypeError(type(e))


def eval_numeric(e: Expr, env: Mapping[str, float]) -> float:
    """IEEE double evaluation.  The assignment must cover every free symbol
    and jet variable; keys use printed atom names like 'u_tt'."""
    if isinstance(e, Rat):
        return float(e.value)
    if isinstance(e, (Param, Indep, Jet)):
        name = atom_name(e)
        if name not in env:
            raise EvalError(f"assignment missing symbol '{name}'")
        return float(env[name])
    if isinstance(e, Sum):
        return math.fsum(eval_numeric(t, env) for t in e.terms)
    if isinstance(e, Prod):
        out = 1.0
        for f in e.factors:
            out *= eval_numeric(f, env)
        return out
    if isinstance(e, Pow):
        b = eval_numeric(e.base, env)
        x = float(e.exp)
        if b == 0.0 and x <= 0:
            raise DomainError("division by zero in evaluation")
        if b < 0.0 and e.exp.denominator != 1:
            raise DomainError("fractional power of a negative value")
        return b**x
    if isinstance(e, Fun):
        a = eval_numeric(e.arg, env)
        if e.name == "sin":
            return math.sin(a)
        if e.name == "cos":
            return math.cos(a)
        if e.name == "exp":
            return math.exp(a)
        if e.name == "log":
            if a <= 0:
                raise DomainError("log of a non-positive value")
            return math.log(a)
        raise EvalError(f"cannot evaluate opaque function '{e.name}'")
    raise TypeError(type(e))


def eval_mp(e: Expr, env: Mapping[str, object]):
    """High-precision evaluation with mpmath (guard path for equivalence)."""
    import mpmath as mp

    if isinstance(e, Rat):
        return mp.mpf(e.value.numerator) / mp.mpf(e.value.denominator)
    if isinstance(e, (Param, Indep, Jet)):
        name = atom_name(e)
        if name not in env:
            raise EvalError(f"assignment missing symbol '{name}'")
        return env[name]
    if isinstance(e, Sum):
        return mp.fsum(eval_mp(t, env) for t in e.terms)
    if isinstance(e, Prod):
        out = mp.mpf(1)
        for f in e.factors:
            out *= eval_mp(f, env)
        return out
    if isinstance(e, Pow):
        b = eval_mp(e.base, env)
        if b == 0 and e.exp <= 0:
            raise DomainError("division by zero in evaluation")
        if b < 0 and e.exp.denominator != 1:
            raise DomainError("fractional power of a negative value")
        return mp.power(b, mp.mpf(e.exp.numerator) / mp.mpf(e.exp.denominator))
    if isinstance(e, Fun):
        a = eval_mp(e.arg, env)
        if e.name in ("sin", "cos", "exp"):
            return getattr(mp, e.name)(a)
        if e.name == "log":
            if a <= 0:
                raise DomainError("log of a non-positive value")
            return mp.log(a)
        raise EvalError(f"cannot evaluate opaque function '{e.name}'")
    raise TypeError(type(e))


# ---------------------------------------------------------------------------
# equivalence
# ---------------------------------------------------------------------------


class Equivalence:
    """Three-valued verdict; truthy for EXACT and PROBABLY."""

    def __init__(self, label: str):
        self.label = label

    def __bool__(self):
        return self.label in ("exact", "probably")

    def __repr__(self):
        return f"Equivalence({self.label})"

    def __eq__(self, other):
        return isinstance(other, Equivalence) and self.label == other.label

    def __hash__(self):
        return hash(self.label)


EXACT = Equivalence("exact")
PROBABLY = Equivalence("probably")  # "probabilistically equal" (numeric guard)
DIFFERENT = Equivalence("different")


def _random_env(atoms, rng):
    return {
        atom_name(a): Q(rng.randint(1, 40), rng.randint(1, 40)) for a in atoms
    }


def equivalent(e1: Expr, e2: Expr, seed: int = 0, samples: int = 12) -> Equivalence:
    """EXACT when the difference normalizes to zero over the rational-function
    field; otherwise a numeric guard at random positive rational points
    decides DIFFERENT vs the distinct "probabilistically equal" verdict for
    identities (trig et al.) that do not cancel structurally."""
    diff = add(e1, mul(MINUS_ONE, e2))
    atoms = sorted(free_atoms(diff), key=Expr.sort_key)
    rng = random.Random(seed)
    if is_zero(diff):
        return EXACT
    exact_path = not contains_fun(diff) and not has_fractional_power(diff)
    if exact_path:
        for _ in range(samples):
            env = _random_env(atoms, rng)
            try:
                v = eval_exact(diff, env)
            except (DomainError, _NotExact):
                continue
            if v != 0:
                return DIFFERENT
        # a rational expression vanishing at `samples` random points and not
        # caught by is_zero would be extraordinary; stay honest about it
        return PROBABLY
    import mpmath as mp

    with mp.workdps(60):
        hits = 0
        for _ in range(samples * 3):
            if hits >= samples:
                break
            env = {
                k: mp.mpf(v.numerator) / mp.mpf(v.denominator)
                for k, v in _random_env(atoms, rng).items()
            }
            try:
                v = eval_mp(diff, env)
                scale = max(
                    mp.mpf(1), abs(eval_mp(e1, env)), abs(eval_mp(e2, env))
                )
            except (DomainError, EvalError):
                continue
            if abs(v) > scale * mp.mpf(10) ** (-40):
                return DIFFERENT
            hits += 1
        if hits == 0:
            raise EvalError("numeric guard found no admissible sample point")
    return PROBABLY


# ---------------------------------------------------------------------------
# printing
# ---------------------------------------------------------------------------


def _exp_str(q: Q) -> str:
    if q.denominator == 1 and q >= 0:
        return str(q.numerator)
    if q.denominator == 1:
        return f"({q.numerator})"
    return f"({q.numerator}/{q.denominator})"


def _pow_base_str(b: Expr) -> str:
    s = to_string(b)
    if isinstance(b, (Sum, Prod, Pow)) or (isinstance(b, Rat) and b.value < 0):
        return f"({s})"
    if isinstance(b, Rat) and b.value.denominator != 1:
        return f"({s})"
    return s


def _factor_str(f: Expr) -> str:
    if isinstance(f, Sum):
        return f"({to_string(f)})"
    if isinstance(f, Pow):
        return _pow_base_str(f.base) + "^" + _exp_str(f.exp)
    return to_string(f)


def to_string(e: Expr) -> str:
    """Deterministic text form; `parse` of the output returns the same tree."""
    if isinstance(e, Rat):
        v = e.value
        return str(v.numerator) if v.denominator == 1 else f"{v.numerator}/{v.denominator}"
    if isinstance(e, (Param, Indep, Jet)):
        return atom_name(e)
    if isinstance(e, Fun):
        return f"{e.name}({to_string(e.arg)})"
    if isinstance(e, Pow):
        return _pow_base_str(e.base) + "^" + _exp_str(e.exp)
    if isinstance(e, Prod):
        fs = e.factors
        sign = ""
        if isinstance(fs[0], Rat):
            c = fs[0].value
            if c < 0:
                sign = "-"
                c = -c
            if c == 1 and len(fs) > 1:
                head = []
            else:
                head = [str(c.numerator) if c.denominator == 1 else f"{c.numerator}/{c.denominator}"]
            rest = [_factor_str(f) for f in fs[1:]]
            return sign + "*".join(head + rest)
        return "*".join(_factor_str(f) for f in fs)
    if isinstance(e, Sum):
        parts = [to_string(e.terms[0])]
        for t in e.terms[1:]:
            s = to_string(t)
            if s.startswith("-"):
                parts.append(" - " + s[1:])
            else:
                parts.append(" + " + s)
        return "".join(parts)
    raise TypeError(type(e))


# ---------------------------------------------------------------------------
# symbol context and parser
# ---------------------------------------------------------------------------


class ExprContext:
    """Declared symbols for parsing and validation.

    Parameters may carry a positivity flag; independents are ordered;
    each dependent maps to the ordered tuple of variables it depends on
    (which fixes the canonical jet multi-index order).
    """

    def __init__(
        self,
        independents: tuple[str, ...],
        dependents: Mapping[str, tuple[str, ...]],
        parameters: Iterable[str] = (),
        positive: Iterable[str] = (),
    ):
        self.independents = tuple(independents)
        self.dependents = dict(dependents)
        self.parameters = frozenset(parameters)
        self.positive = frozenset(positive)
        names = list(self.independents) + list(self.dependents) + list(self.parameters)
        if len(set(names)) != len(names):
            raise ExprError(f"ambiguous symbol declarations: {sorted(names)}")

    def with_parameters(self, *names: str) -> "ExprContext":
        return ExprContext(
            self.independents,
            self.dependents,
            self.parameters | set(names),
            self.positive,
        )

    def with_dependent(self, dep: str, vars: tuple[str, ...]) -> "ExprContext":
        deps = dict(self.dependents)
        deps[dep] = vars
        return ExprContext(self.independents, deps, self.parameters, self.positive)

    def param(self, name: str) -> Param:
        if name not in self.parameters:
            raise UnknownSymbolError(name)
        return Param(name)

    def indep(self, name: str) -> Indep:
        if name not in self.independents:
            raise UnknownSymbolError(name)
        return Indep(name)

    def jet(self, dep: str, index: str = "") -> Jet:
        if dep not in self.dependents:
            raise UnknownSymbolError(dep)
        return Jet(dep, tuple(index), self.dependents[dep])

    def resolve(self, name: str, offset: int = -1) -> Expr:
        if name in self.parameters:
            return Param(name)
        if name in self.independents:
            return Indep(name)
        if name in self.dependents:
            return Jet(name, (), self.dependents[name])
        if "_" in name:
            dep, _, letters = name.partition("_")
            if dep in self.dependents and letters:
                vars = self.dependents[dep]
                if all(ch in vars for ch in letters):
                    return Jet(dep, tuple(letters), vars)
        raise UnknownSymbolError(name, offset)

    def check_declared(self, atom: Expr):
        if isinstance(atom, Param) and atom.name not in self.parameters:
            raise UnknownSymbolError(atom.name)
        if isinstance(atom, Indep) and atom.name not in self.independents:
            raise UnknownSymbolError(atom.name)
        if isinstance(atom, Jet) and atom.dep not in self.dependents:
            raise UnknownSymbolError(atom.dep)


#: parameters every beam model understands; spelling per the text grammar
DEFAULT_CONTEXT = ExprContext(
    independents=("t", "x"),
    dependents={"u": ("t", "x")},
    parameters=(
        "alpha", "beta", "epsilon", "nu", "c", "a", "b", "n",
        "a0", "a1", "A0", "A1", "A2", "C0", "C1", "C2", "C3", "x0",
    ),
    positive=("alpha", "beta", "nu"),
)


_TOKEN_OPS = "+-*/^()"


def _tokenize(text: str):
    """Yields (kind, value, byte_offset); kinds: int, name, op."""
    out = []
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
            continue
        if ch == "−":  # unicode minus from typeset sources
            out.append(("op", "-", i))
            i += 1
            continue
        if ch in _TOKEN_OPS:
            out.append(("op", ch, i))
            i += 1
            continue
        if ch.isdigit():
            j = i
            while j < n and text[j].isdigit():
                j += 1
            out.append(("int", int(text[i:j]), i))
            i = j
            continue
        if ch.isalpha():
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            out.append(("name", text[i:j], i))
            i = j
            continue
        raise ExprSyntaxError(f"unexpected character {ch!r}", i)
    return out


class _Parser:
    def __init__(self, tokens, ctx: ExprContext, length: int):
        self.toks = tokens
        self.pos = 0
        self.ctx = ctx
        self.length = length

    def _peek(self):
        return self.toks[self.pos] if self.pos < len(self.toks) else None

    def _next(self):
        t = self._peek()
        if t is None:
            raise ExprSyntaxError("unexpected end of input", self.length)
        self.pos += 1
        return t

    def _expect_op(self, op):
        t = self._next()
        if t[0] != "op" or t[1] != op:
            raise ExprSyntaxError(f"expected '{op}'", t[2])

    def parse_expr(self) -> Expr:
        neg = False
        t = self._peek()
        if t and t[0] == "op" and t[1] == "-":
            self._next()
            neg = True
        e = self.parse_term()
        if neg:
            e = mul(MINUS_ONE, e)
        while True:
            t = self._peek()
            if t and t[0] == "op" and t[1] in "+-":
                self._next()
                rhs = self.parse_term()
                e = add(e, rhs if t[1] == "+" else mul(MINUS_ONE, rhs))
            else:
                return e

    def parse_term(self) -> Expr:
        e = self.parse_factor()
        while True:
            t = self._peek()
            if t and t[0] == "op" and t[1] in "*/":
                self._next()
                rhs = self.parse_factor()
                e = mul(e, rhs if t[1] == "*" else pow_(rhs, -1))
            else:
                return e

    def parse_factor(self) -> Expr:
        e = self.parse_atom()
        t = self._peek()
        if t and t[0] == "op" and t[1] == "^":
            self._next()
            e = pow_(e, self.parse_rational_exponent())
        return e

    def parse_rational_exponent(self) -> Q:
        # bare exponents are unsigned integers: x^2; a sign or a fraction
        # needs parentheses: x^(-1), x^(1/2) (so m^2/n means (m^2)/n)
        t = self._peek()
        if t and t[0] == "op" and t[1] == "(":
            self._next()
            sign = 1
            t = self._peek()
            if t and t[0] == "op" and t[1] == "-":
                self._next()
                sign = -1
            t = self._next()
            if t[0] != "int":
                raise ExprSyntaxError("expected a rational exponent", t[2])
            num = t[1]
            den = 1
            t = self._peek()
            if t and t[0] == "op" and t[1] == "/":
                self._next()
                t = self._next()
                if t[0] != "int":
                    raise ExprSyntaxError("expected exponent denominator", t[2])
                den = t[1]
            self._expect_op(")")
            return Q(sign * num, den)
        t = self._next()
        if t[0] != "int":
            raise ExprSyntaxError("expected a rational exponent", t[2])
        return Q(t[1])

    def parse_atom(self) -> Expr:
        t = self._next()
        if t[0] == "int":
            return rat(t[1])
        if t[0] == "op" and t[1] == "(":
            e = self.parse_expr()
            self._expect_op(")")
            return e
        if t[0] == "op" and t[1] == "-":
            return mul(MINUS_ONE, self.parse_atom())
        if t[0] == "name":
            name, off = t[1], t[2]
            nxt = self._peek()
            if name in ELEMENTARY_FUNCTIONS and nxt and nxt == ("op", "(", nxt[2]):
                self._next()
                arg = self.parse_expr()
                self._expect_op(")")
                return fn(name, arg)
            return self.ctx.resolve(name, off)
        raise ExprSyntaxError(f"unexpected token {t[1]!r}", t[2])


def parse(text: str, ctx: ExprContext = DEFAULT_CONTEXT) -> Expr:
    """Parse the expression grammar into a canonical Expr.

    expr   := ["-"] term (("+"|"-") term)*
    term   := factor (("*"|"/") factor)*
    factor := atom ("^" rational)?
    atom   := int | name | dep "_" letters | func "(" expr ")" | "(" expr ")"
    """
    p = _Parser(_tokenize(text), ctx, len(text))
    e = p.parse_expr()
    t = p._peek()
    if t is not None:
        raise ExprSyntaxError(f"trailing input {t[1]!r}", t[2])
    return e

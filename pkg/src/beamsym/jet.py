"""Lie point symmetry machinery on jet space.

Vector fields are prolonged to fourth order through the standard recursion
eta^{(J,i)} = D_i eta^{(J)} - sum_j u_{J,j} D_i xi^j.  The symmetry residual
applies a prolonged field to an equation in solved form and eliminates the
leading jet (and every derivative of it) before normalizing, so a vanishing
residual is exactly the point-symmetry condition on the solution manifold.

`solve_determining` regenerates symmetry catalogs from a polynomial ansatz:
xi components polynomial in the independents, eta linear in the dependent
plus a polynomial inhomogeneity.  The linear system over the rational-
function field of the model parameters is solved by exact Gaussian
elimination; pivots that could vanish for special parameter values are
reported as branch assumptions.
"""

from __future__ import annotations

import itertools
import json
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction as Q

from .expr import (
    Expr, ExprContext, ExprError, Indep, Jet, Param, Rat, Pow, Prod, Sum, Fun,
    ZERO, ONE, MINUS_ONE,
    add, atom_name, as_expr, as_numer_denom, diff_atom, expand, free_atoms,
    is_zero, mul, parse, pow_, ratnorm, substitute_many, to_string,
    total_derivative, total_derivative_multi,
)


class JetError(ExprError):
    pass


# ---------------------------------------------------------------------------
# vector fields
# ---------------------------------------------------------------------------


class VectorField:
    """Infinitesimal generator xi^i d/dy^i + eta^A d/du^A.

    Components are expressions in the independents and order-0 dependents
    only (point symmetries: no jets of order >= 1).
    """

    def __init__(self, xi: dict[str, Expr], eta: dict[str, Expr], name: str = ""):
        self.xi = {k: as_expr(v) for k, v in xi.items()}
        self.eta = {k: as_expr(v) for k, v in eta.items()}
        self.name = name
        for comp in list(self.xi.values()) + list(self.eta.values()):
            for a in free_atoms(comp):
                # jets of transformed dependents are forbidden (point symmetry);
                # jets of opaque known functions like w(t,x) are fine
                if isinstance(a, Jet) and a.order >= 1 and a.dep in self.eta:
                    raise JetError(
                        f"point symmetry components cannot contain jet {atom_name(a)}"
                    )

    def component(self, which: str) -> Expr:
        return self.xi.get(which) or self.eta.get(which) or ZERO

    def is_zero(self) -> bool:
        return all(v == ZERO for v in self.xi.values()) and all(
            v == ZERO for v in self.eta.values()
        )

    def __add__(self, other: "VectorField") -> "VectorField":
        keys_xi = set(self.xi) | set(other.xi)
        keys_eta = set(self.eta) | set(other.eta)
        return VectorField(
            {k: add(self.xi.get(k, ZERO), other.xi.get(k, ZERO)) for k in keys_xi},
            {k: add(self.eta.get(k, ZERO), other.eta.get(k, ZERO)) for k in keys_eta},
        )

    def scale(self, factor) -> "VectorField":
        factor = as_expr(factor)
        return VectorField(
            {k: mul(factor, v) for k, v in self.xi.items()},
            {k: mul(factor, v) for k, v in self.eta.items()},
        )

    def __eq__(self, other):
        if not isinstance(other, VectorField):
            return NotImplemented
        keys_xi = set(self.xi) | set(other.xi)
        keys_eta = set(self.eta) | set(other.eta)
        return all(
            self.xi.get(k, ZERO) == other.xi.get(k, ZERO) for k in keys_xi
        ) and all(self.eta.get(k, ZERO) == other.eta.get(k, ZERO) for k in keys_eta)

    def __repr__(self):
        parts = []
        for k, v in self.xi.items():
            if v != ZERO:
                parts.append(f"({to_string(v)})*d_{k}")
        for k, v in self.eta.items():
            if v != ZERO:
                parts.append(f"({to_string(v)})*d_{k}")
        label = f"{self.name}: " if self.name else ""
        return label + (" + ".join(parts) if parts else "0")

    def apply_to(self, f: Expr, dep_vars: dict[str, tuple], coordinate_deps=None) -> Expr:
        """First-order action on a function of the base space (t, x, u).

        Dependents outside `coordinate_deps` (default: the deps this field
        acts on) are treated as known functions of the base, so their jets
        get raised by the base partials — this is what makes brackets with
        superposition-family fields w(t,x)*d_u come out right.
        """
        from .expr import derive

        coords = set(self.eta) if coordinate_deps is None else set(coordinate_deps)

        def base_partial(g, v):
            def rule(a):
                if isinstance(a, Indep):
                    return ONE if a.name == v else ZERO
                if isinstance(a, Jet) and a.dep not in coords and v in a.vars:
                    return a.raised(v)
                return ZERO

            return derive(g, rule)

        out = []
        for v, comp in self.xi.items():
            out.append(mul(comp, base_partial(f, v)))
        for dep, comp in self.eta.items():
            if dep in coords:
                out.append(mul(comp, diff_atom(f, Jet(dep, (), dep_vars[dep]))))
        return add(*out)

    def to_json(self) -> str:
        return json.dumps(
            {
                "xi": {k: to_string(v) for k, v in self.xi.items()},
                "eta": {k: to_string(v) for k, v in self.eta.items()},
            },
            sort_keys=True,
        )

    @staticmethod
    def from_json(text: str, ctx: ExprContext) -> "VectorField":
        data = json.loads(text)
        return VectorField(
            {k: parse(v, ctx) for k, v in data.get("xi", {}).items()},
            {k: parse(v, ctx) for k, v in data.get("eta", {}).items()},
        )


def commutator(v1: VectorField, v2: VectorField, dep_vars: dict[str, tuple] | None = None) -> VectorField:
    """Lie bracket of two first-order operators (bilinear, antisymmetric)."""
    coords = set(v1.eta) | set(v2.eta)
    if dep_vars is None:
        dep_vars = {d: ("t", "x") for d in coords}
    xi = {}
    for k in set(v1.xi) | set(v2.xi):
        xi[k] = add(
            v1.apply_to(v2.xi.get(k, ZERO), dep_vars, coords),
            mul(MINUS_ONE, v2.apply_to(v1.xi.get(k, ZERO), dep_vars, coords)),
        )
    eta = {}
    for k in coords:
        eta[k] = add(
            v1.apply_to(v2.eta.get(k, ZERO), dep_vars, coords),
            mul(MINUS_ONE, v2.apply_to(v1.eta.get(k, ZERO), dep_vars, coords)),
        )
    return VectorField(xi, eta)


# ---------------------------------------------------------------------------
# models in solved form
# ---------------------------------------------------------------------------


def _solved_form(equation: Expr, lead: Jet):
    coeff = diff_atom(equation, lead)
    if coeff == ZERO:
        raise JetError(f"equation does not contain leading jet {atom_name(lead)}")
    if diff_atom(coeff, lead) != ZERO:
        raise JetError("equation must be linear in its leading jet")
    rhs = ratnorm(mul(add(mul(coeff, lead), mul(MINUS_ONE, equation)), pow_(coeff, -1)))
    return coeff, rhs


@dataclass
class PdeModel:
    """A PDE in solved form: equation == lead_coeff * (lead - rhs)."""

    name: str
    kind: str
    ctx: ExprContext
    equation: Expr
    lead: Jet
    rhs: Expr
    lead_coeff: Expr
    params: dict
    source: object = None
    max_order: int = 4

    independents = ("t", "x")
    dependent = "u"

    @staticmethod
    def from_equation(name, kind, ctx, equation, lead, params, source=None) -> "PdeModel":
        coeff, rhs = _solved_form(equation, lead)
        model = PdeModel(name, kind, ctx, equation, lead, rhs, coeff, params, source)
        if not is_zero(substitute_many(equation, {lead: rhs})):
            raise JetError("solved form does not annihilate the equation")
        return model

    def jet(self, index: str = "") -> Jet:
        return Jet(self.dependent, tuple(index), ("t", "x"))

    def eliminate(self, e: Expr, extra_deps: dict[str, Expr] | None = None) -> Expr:
        """On-shell normal form: every jet containing the leading multi-index
        is replaced by the corresponding derivative of the solved form.

        `extra_deps` maps auxiliary dependent names to the right side of
        *their* leading-jet rule (used for superposition-family checks where
        w(t, x) satisfies the linearized equation).
        """
        rules = [(self.dependent, Counter(self.lead.index), self.lead, self.rhs)]
        if extra_deps:
            for dep, rhs in extra_deps.items():
                lead = Jet(dep, self.lead.index, self.lead.vars)
                rules.append((dep, Counter(self.lead.index), lead, rhs))
        for _ in range(64):
            targets = []
            for a in free_atoms(e):
                if not isinstance(a, Jet):
                    continue
                for dep, lead_count, lead, rhs in rules:
                    if a.dep != dep or a.order < len(lead.index):
                        continue
                    diff = Counter(a.index) - lead_count
                    if sum(diff.values()) == a.order - len(lead.index):
                        targets.append((a, diff, rhs))
            if not targets:
                return e
            a, diff, rhs = max(targets, key=lambda t: t[0].order)
            extra = tuple(itertools.chain.from_iterable([v] * c for v, c in sorted(diff.items())))
            e = substitute_many(e, {a: total_derivative_multi(rhs, extra)})
        raise JetError("on-shell elimination did not terminate")


@dataclass
class OdeModel:
    """An ODE in solved form (single independent, single dependent)."""

    name: str
    indep: str
    dep: str
    equation: Expr
    order: int
    ctx: ExprContext
    params: dict
    lead: Jet
    rhs: Expr
    lead_coeff: Expr

    @staticmethod
    def from_equation(name, equation, indep, dep, ctx, params=None) -> "OdeModel":
        jets = [a for a in free_atoms(equation) if isinstance(a, Jet) and a.dep == dep]
        if not jets:
            raise JetError("no derivatives of the dependent in the equation")
        order = max(j.order for j in jets)
        lead = Jet(dep, (indep,) * order, (indep,))
        coeff, rhs = _solved_form(equation, lead)
        model = OdeModel(
            name, indep, dep, equation, order, ctx, dict(params or {}), lead, rhs, coeff
        )
        if not is_zero(substitute_many(equation, {lead: rhs})):
            raise JetError("solved form does not annihilate the equation")
        return model

    def jet(self, k: int) -> Jet:
        return Jet(self.dep, (self.indep,) * k, (self.indep,))

    def renamed(self, name=None, indep=None, dep=None, subs=None) -> "OdeModel":
        """Copy with the independent/dependent renamed and optional extra
        substitutions applied (e.g. alpha*beta -> nu via alpha -> nu/beta)."""
        indep = indep or self.indep
        dep = dep or self.dep
        mapping = dict(subs or {})
        mapping[Indep(self.indep)] = Indep(indep)
        for k in range(self.order + 1):
            mapping[self.jet(k)] = Jet(dep, (indep,) * k, (indep,))
        eq = ratnorm(substitute_many(self.equation, mapping))
        num, _ = as_numer_denom(eq)
        num = expand(num)
        shadowed = {indep, dep} & set(self.ctx.parameters)
        for a in free_atoms(num):
            if isinstance(a, Param) and a.name in shadowed:
                raise JetError(
                    f"cannot rename: parameter '{a.name}' occurs in the equation"
                )
        ctx = ExprContext(
            (indep,), {dep: (indep,)},
            self.ctx.parameters - shadowed, self.ctx.positive - shadowed,
        )
        return OdeModel.from_equation(name or self.name, num, indep, dep, ctx, self.params)

    def cleared(self) -> Expr:
        """The equation with denominators cleared (polynomial form)."""
        num, _ = as_numer_denom(expand(self.equation))
        return expand(num)

    def eliminate(self, e: Expr) -> Expr:
        for _ in range(64):
            jets = [
                a
                for a in free_atoms(e)
                if isinstance(a, Jet) and a.dep == self.dep and a.order >= self.order
            ]
            if not jets:
                return e
            a = max(jets, key=lambda j: j.order)
            rep = total_derivative_multi(self.rhs, (self.indep,) * (a.order - self.order))
            e = substitute_many(e, {a: rep})
        raise JetError("on-shell elimination did not terminate")


# ---------------------------------------------------------------------------
# prolongation
# ---------------------------------------------------------------------------


def _multi_indices(vars: tuple, order: int):
    for k in range(order + 1):
        yield from itertools.combinations_with_replacement(vars, k)


class ProlongedField:
    """A vector field with its extended coefficients eta^{(J)} up to `order`."""

    def __init__(self, base: VectorField, order: int, dep_vars: dict[str, tuple]):
        if order > 4:
            raise JetError("prolongation order above the jet bound 4")
        self.base = base
        self.order = order
        self.dep_vars = dep_vars
        self.coeffs: dict[tuple[str, tuple], Expr] = {}
        for dep, eta0 in base.eta.items():
            vars = dep_vars[dep]
            self.coeffs[(dep, ())] = eta0
            for idx in _multi_indices(vars, order):
                if idx:
                    self._build(dep, idx, vars)

    def _build(self, dep: str, idx: tuple, vars: tuple):
        key = (dep, idx)
        if key in self.coeffs:
            return self.coeffs[key]
        head, last = idx[:-1], idx[-1]
        prev = self.coeffs.get((dep, head))
        if prev is None:
            prev = self._build(dep, head, vars)
        out = total_derivative(prev, last)
        for j, xi_j in self.base.xi.items():
            dxi = total_derivative(xi_j, last)
            if dxi == ZERO:
                continue
            u_head_j = Jet(dep, head + (j,), vars)
            out = add(out, mul(MINUS_ONE, u_head_j, dxi))
        self.coeffs[key] = out
        return out

    def coeff(self, dep: str, index: str | tuple) -> Expr:
        idx = tuple(index)
        vars = self.dep_vars[dep]
        pos = {v: i for i, v in enumerate(vars)}
        idx = tuple(sorted(idx, key=pos.__getitem__))
        return self.coeffs[(dep, idx)]

    def recursion_check(self, dep: str, index: tuple) -> bool:
        """Re-derive eta^{(J)} from every single-step decomposition."""
        vars = self.dep_vars[dep]
        target = self.coeff(dep, index)
        for pos in range(len(index)):
            i = index[pos]
            head = index[:pos] + index[pos + 1 :]
            alt = total_derivative(self.coeff(dep, head), i)
            for j, xi_j in self.base.xi.items():
                alt = add(alt, mul(MINUS_ONE, Jet(dep, head + (j,), vars), total_derivative(xi_j, i)))
            if not is_zero(add(target, mul(MINUS_ONE, alt))):
                return False
        return True


def prolong(vf: VectorField, order: int, dep_vars: dict[str, tuple] | None = None) -> ProlongedField:
    if dep_vars is None:
        dep_vars = {d: ("t", "x") for d in vf.eta}
    return ProlongedField(vf, order, dep_vars)


def apply_prolonged(vf: VectorField, equation: Expr, dep_vars: dict[str, tuple], order: int = 4) -> Expr:
    """Gamma^{[order]} applied to an expression of (independents, jets)."""
    pr = prolong(vf, order, dep_vars)
    out = []
    for a in sorted(free_atoms(equation), key=Expr.sort_key):
        if isinstance(a, Indep) and a.name in vf.xi:
            out.append(mul(vf.xi[a.name], diff_atom(equation, a)))
        elif isinstance(a, Jet) and a.dep in vf.eta:
            out.append(mul(pr.coeff(a.dep, a.index), diff_atom(equation, a)))
    return add(*out)


def symmetry_residual(vf: VectorField, model: PdeModel, family_rhs: dict[str, Expr] | None = None) -> Expr:
    """Prolonged action on the equation, reduced on-shell and normalized.

    Zero exactly when `vf` is a Lie point symmetry.  Denominators (powers of
    declared-nonzero parameters and source bases) are cleared, so the result
    is the expanded numerator of the on-shell residual.
    """
    dep_vars = {model.dependent: ("t", "x")}
    for dep in vf.eta:
        dep_vars.setdefault(dep, ("t", "x"))
    raw = apply_prolonged(vf, model.equation, dep_vars, order=model.max_order)
    onshell = model.eliminate(raw, extra_deps=family_rhs)
    num, _ = as_numer_denom(expand(onshell))
    return expand(num)


# ---------------------------------------------------------------------------
# determining equations
# ---------------------------------------------------------------------------


@dataclass
class AnsatzSpec:
    """Polynomial ansatz: xi^t, xi^x of degree <= degree in (t, x);
    eta = c0*u + w(t, x) with w of degree <= degree."""

    degree: int = 2


@dataclass
class DeterminingResult:
    fields: list            # finite basis, superposition slice quotiented out
    superposition_dim: int  # dimension of the polynomial slice of w(t,x)*d_u
    superposition_fields: list
    assumptions: list       # pivot expressions assumed nonzero (parameters)
    ansatz_unknowns: int

    @property
    def dimension(self) -> int:
        return len(self.fields)


def _poly_monomials(degree: int):
    t, x = Indep("t"), Indep("x")
    out = []
    for i in range(degree + 1):
        for j in range(degree + 1 - i):
            out.append(mul(pow_(t, i), pow_(x, j)))
    return out


def _is_state_atom(base: Expr) -> bool:
    return any(isinstance(a, (Indep, Jet)) for a in free_atoms(base))


def collect_by_state(e: Expr) -> dict[tuple, Expr]:
    """Split an expanded polynomial into {state-monomial-signature: coefficient}.

    State atoms are the independents, the jets, and any opaque function node
    that contains them; everything else (parameters, ansatz unknowns) stays
    in the coefficient.
    """
    out: dict[tuple, list] = {}
    terms = e.terms if isinstance(e, Sum) else (e,)
    for term in terms:
        factors = term.factors if isinstance(term, Prod) else (term,)
        sig = []
        coeff = []
        for f in factors:
            base, q = (f.base, f.exp) if isinstance(f, Pow) else (f, Q(1))
            if isinstance(base, Rat) or not _is_state_atom(base):
                coeff.append(f)
            else:
                sig.append((base.sort_key(), base, q))
        sig.sort(key=lambda s: (s[0], s[2]))
        key = tuple((to_string(b), q) for _, b, q in sig)
        out.setdefault(key, []).append(mul(*coeff) if coeff else ONE)
    return {k: add(*v) for k, v in out.items()}


def _entry_simplify(e: Expr) -> Expr:
    return ratnorm(e)


def _strip_content(e: Expr) -> Expr:
    scaled = _vector_content_scale([e])[0]
    terms = scaled.terms if isinstance(scaled, Sum) else (scaled,)
    first = terms[0]
    fs = first.factors if isinstance(first, Prod) else (first,)
    if fs and isinstance(fs[0], Rat) and fs[0].value < 0:
        scaled = expand(mul(MINUS_ONE, scaled))
    return scaled


def _nonzero_assumption(e: Expr):
    num, den = as_numer_denom(expand(e))
    out = []
    for part in (num, den):
        if any(isinstance(a, Param) for a in free_atoms(part)):
            out.append(_strip_content(part))
    return out


def nullspace(rows: list[list[Expr]], ncols: int):
    """Exact RREF nullspace over the rational-function field.

    Returns (basis vectors, assumptions): each pivot whose expression
    involves parameters is recorded as a nonvanishing assumption (the
    depth-one branch points of the classification).
    """
    # drop duplicate / zero rows early
    seen = set()
    mat = []
    for row in rows:
        row = [_entry_simplify(v) for v in row]
        if all(v == ZERO for v in row):
            continue
        key = tuple(to_string(v) for v in row)
        if key in seen:
            continue
        seen.add(key)
        mat.append(row)

    assumptions: list[Expr] = []
    pivots: dict[int, int] = {}
    r = 0
    for col in range(ncols):
        pivot_row = None
        for i in range(r, len(mat)):
            if not is_zero(mat[i][col]):
                pivot_row = i
                break
        if pivot_row is None:
            continue
        mat[r], mat[pivot_row] = mat[pivot_row], mat[r]
        piv = mat[r][col]
        for expr_part in _nonzero_assumption(piv):
            if all(not is_zero(expr_part - prev) for prev in assumptions):
                assumptions.append(expr_part)
        inv = pow_(piv, -1) if not isinstance(piv, Rat) else Rat(Q(1) / piv.value)
        mat[r] = [_entry_simplify(mul(v, inv)) for v in mat[r]]
        for i in range(len(mat)):
            if i == r:
                continue
            f = mat[i][col]
            if f == ZERO:
                continue
            mat[i] = [
                _entry_simplify(add(a, mul(MINUS_ONE, f, b)))
                for a, b in zip(mat[i], mat[r])
            ]
        pivots[col] = r
        r += 1
        if r == len(mat):
            break
    free_cols = [c for c in range(ncols) if c not in pivots]
    basis = []
    for fc in free_cols:
        vec = [ZERO] * ncols
        vec[fc] = ONE
        for pc, pr in pivots.items():
            vec[pc] = _entry_simplify(mul(MINUS_ONE, mat[pr][fc]))
        basis.append(vec)
    return basis, assumptions


def _vector_content_scale(vec: list[Expr]) -> list[Expr]:
    """Clear denominators and divide out the rational content (pretty basis)."""
    from math import gcd

    dens: dict[Expr, Q] = {}
    for v in vec:
        _, d = as_numer_denom(expand(v))
        factors = d.factors if isinstance(d, Prod) else (d,)
        for f in factors:
            if isinstance(f, Rat):
                continue
            b, q = (f.base, f.exp) if isinstance(f, Pow) else (f, Q(1))
            if dens.get(b, Q(0)) < q:
                dens[b] = q
    mult = mul(*(pow_(b, q) for b, q in dens.items()))
    vec = [expand(mul(mult, v)) for v in vec]
    nums, den_lcm = [], 1
    for v in vec:
        terms = v.terms if isinstance(v, Sum) else (v,)
        for tm in terms:
            fs = tm.factors if isinstance(tm, Prod) else (tm,)
            c = fs[0].value if fs and isinstance(fs[0], Rat) else (
                tm.value if isinstance(tm, Rat) else Q(1)
            )
            if c != 0:
                nums.append(abs(c.numerator))
                den_lcm = den_lcm * c.denominator // gcd(den_lcm, c.denominator)
    if not nums:
        return vec
    g = 0
    for nmr in nums:
        g = gcd(g, nmr)
    scale = Q(den_lcm, g if g else 1)
    return [expand(mul(Rat(scale), v)) for v in vec]


def solve_determining(model: PdeModel, ansatz: AnsatzSpec | None = None) -> DeterminingResult:
    """Regenerate the point-symmetry algebra admitted within the ansatz.

    The infinite superposition family w(t,x)*d_u (w any solution of the
    linearized equation) is represented by its polynomial slice and removed
    from the finite basis; its dimension within the ansatz is reported.
    """
    ansatz = ansatz or AnsatzSpec()
    monos = _poly_monomials(ansatz.degree)
    u0 = model.jet("")

    unknowns: list[Param] = []

    def fresh(prefix, i):
        p = Param(f"_{prefix}{i}")
        unknowns.append(p)
        return p

    xi_t = add(*(mul(fresh("kt", i), m) for i, m in enumerate(monos)))
    xi_x = add(*(mul(fresh("kx", i), m) for i, m in enumerate(monos)))
    c0 = fresh("c", 0)
    w_coeffs = [fresh("kw", i) for i in range(len(monos))]
    eta = add(mul(c0, u0), *(mul(k, m) for k, m in zip(w_coeffs, monos)))

    vf = VectorField({"t": xi_t, "x": xi_x}, {model.dependent: eta})
    residual = symmetry_residual(vf, model)

    rows = []
    for sig, coeff in collect_by_state(residual).items():
        row = [diff_atom(coeff, k) for k in unknowns]
        recon = add(*(mul(r, k) for r, k in zip(row, unknowns)))
        if not is_zero(add(coeff, mul(MINUS_ONE, recon))):
            raise JetError(f"determining equation not linear in ansatz at {sig}")
        rows.append(row)

    basis, assumptions = nullspace(rows, len(unknowns))

    # the polynomial slice of the superposition family, solved directly:
    # pure w(t,x)*d_u with w annihilated by the linearized operator
    w_rows = []
    w_vf = VectorField(
        {"t": ZERO, "x": ZERO},
        {model.dependent: add(*(mul(k, m) for k, m in zip(w_coeffs, monos)))},
    )
    w_res = symmetry_residual(w_vf, model)
    w_index = {k: i for i, k in enumerate(unknowns)}
    for sig, coeff in collect_by_state(w_res).items():
        w_rows.append([diff_atom(coeff, k) for k in w_coeffs])
    w_basis, _ = nullspace(w_rows, len(w_coeffs))

    # lift w-basis vectors into full coordinates
    w_full = []
    for wb in w_basis:
        vec = [ZERO] * len(unknowns)
        for wc, val in zip(w_coeffs, wb):
            vec[w_index[wc]] = val
        w_full.append(vec)

    finite = _quotient(basis, w_full, len(unknowns))
    finite = [_vector_content_scale(v) for v in finite]

    def build(vec):
        env = dict(zip(unknowns, vec))
        sub = {k: env[k] for k in unknowns}
        return VectorField(
            {"t": expand(substitute_many(xi_t, sub)), "x": expand(substitute_many(xi_x, sub))},
            {model.dependent: expand(substitute_many(eta, sub))},
        )

    return DeterminingResult(
        fields=[build(v) for v in finite],
        superposition_dim=len(w_full),
        superposition_fields=[build(v) for v in w_full],
        assumptions=assumptions,
        ansatz_unknowns=len(unknowns),
    )


def _leading_coord(vec, order):
    for c in order:
        if vec[c] != ZERO:
            return c
    return None


def _quotient(basis, sub_basis, n):
    """Representatives of span(basis)/span(sub_basis), reduced for display."""
    order = list(range(n))
    red_sub = []
    for v in sub_basis:
        v = list(v)
        for lead, rv in red_sub:
            if v[lead] != ZERO:
                f = v[lead]
                v = [_entry_simplify(add(a, mul(MINUS_ONE, f, b))) for a, b in zip(v, rv)]
        lead = _leading_coord(v, order)
        if lead is not None:
            inv = pow_(v[lead], -1)
            v = [_entry_simplify(mul(inv, a)) for a in v]
            red_sub.append((lead, v))
    out = []
    reduced_out = []
    for v in basis:
        v = list(v)
        for lead, rv in red_sub:
            if v[lead] != ZERO:
                f = v[lead]
                v = [_entry_simplify(add(a, mul(MINUS_ONE, f, b))) for a, b in zip(v, rv)]
        for lead, rv in reduced_out:
            if v[lead] != ZERO:
                f = v[lead]
                v = [_entry_simplify(add(a, mul(MINUS_ONE, f, b))) for a, b in zip(v, rv)]
        lead = _leading_coord(v, order)
        if lead is None:
            continue
        inv = pow_(v[lead], -1)
        vn = [_entry_simplify(mul(inv, a)) for a in v]
        reduced_out.append((lead, vn))
        out.append(vn)
    return out


def in_span(vf: VectorField, fields: list, model: PdeModel, extra: list | None = None) -> bool:
    """Exact span membership over the rational-function field.

    Components are compared coefficient-wise on the monomial basis in
    (t, x, u); `extra` fields (e.g. the superposition slice) may be added.
    """
    pool = list(fields) + list(extra or [])
    coeffs = [Param(f"_s{i}") for i in range(len(pool))]
    comps = []
    for which in ("t", "x", model.dependent):
        target = vf.xi.get(which, vf.eta.get(which, ZERO))
        combo = add(*(mul(c, f.xi.get(which, f.eta.get(which, ZERO))) for c, f in zip(coeffs, pool)))
        comps.append(expand(add(target, mul(MINUS_ONE, combo))))
    rows, rhs = [], []
    for comp in comps:
        for sig, coeff in collect_by_state(comp).items():
            row = [diff_atom(coeff, c) for c in coeffs]
            const = substitute_many(coeff, {c: ZERO for c in coeffs})
            rows.append(row)
            rhs.append(mul(MINUS_ONE, const))
    # solve the inhomogeneous system by elimination on the augmented matrix
    aug = [row + [b] for row, b in zip(rows, rhs)]
    m = len(coeffs)
    r = 0
    for col in range(m):
        piv = None
        for i in range(r, len(aug)):
            if not is_zero(aug[i][col]):
                piv = i
                break
        if piv is None:
            continue
        aug[r], aug[piv] = aug[piv], aug[r]
        inv = pow_(aug[r][col], -1)
        aug[r] = [_entry_simplify(mul(inv, v)) for v in aug[r]]
        for i in range(len(aug)):
            if i != r and not is_zero(aug[i][col]):
                f = aug[i][col]
                aug[i] = [
                    _entry_simplify(add(a, mul(MINUS_ONE, f, b)))
                    for a, b in zip(aug[i], aug[r])
                ]
        r += 1
    for i in range(r, len(aug)):
        if not is_zero(aug[i][-1]):
            return False
    return True

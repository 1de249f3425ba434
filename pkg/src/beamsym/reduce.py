"""Similarity-reduction engine.

Every reduced ODE is re-derived by substituting the similarity ansatz into
the PDE, rewriting (t, x)-derivatives as derivatives in the invariant
variable through the chain rule, and cancelling the common nonzero
multiplier.  Derived equations are compared against the published reference
forms coefficient-by-coefficient; a mismatch produces a discrepancy report
naming the differing terms rather than silently accepting either side.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field as dc_field
from fractions import Fraction as Q

from .expr import (
    DEFAULT_CONTEXT, DomainError, Expr, Fun, Indep, Jet, Param, Pow, Prod,
    Rat, Sum, ZERO, ONE, MINUS_ONE,
    add, as_expr, as_numer_denom, atom_name, derive, diff_atom, eval_numeric,
    expand, fn, free_atoms, is_zero, mul, pow_, rat, ratnorm, substitute_many,
    sym_pow, to_string, total_derivative, total_derivative_multi,
)
from .jet import OdeModel, PdeModel, VectorField, symmetry_residual
from .models import (
    CTX_SV, ModelError, ReferenceOde, SourceSpec, make_model,
    printed_forced_exp_ode, printed_forced_power_ode, reference_ode,
)


class ReductionError(ModelError):
    pass


class DegenerateRegimeError(ReductionError):
    """Raised when a closed form needs a parameter inequality that fails."""


V0 = Jet("v", (), ("s",))


def _vjet(k: int) -> Jet:
    return Jet("v", ("s",) * k, ("s",))


# ---------------------------------------------------------------------------
# reduction rules
# ---------------------------------------------------------------------------


@dataclass
class ReductionRule:
    """Similarity ansatz u(t, x) = ansatz[v(s)], with the generator it comes
    from and the inverse substitution that eliminates one base variable."""

    name: str
    generator: VectorField
    s_expr: Expr                      # invariant variable in (t, x)
    ansatz: Expr                      # contains v (order-0 jet over s)
    eliminate_var: str                # base variable removed by `inverse`
    inverse: Expr                     # eliminate_var = inverse(s, other var)
    reference: str | None = None      # registry name of the published form
    aux_derivatives: dict = dc_field(default_factory=dict)
    pre_substitutions: dict = dc_field(default_factory=dict)

    def chain_derivative(self, e: Expr, var: str) -> Expr:
        """Total derivative treating v as a function of s(t, x) and the
        auxiliary scale atoms by their registered rules."""
        ds = total_derivative(self.s_expr, var)

        def rule(a):
            if isinstance(a, Indep):
                return ONE if a.name == var else ZERO
            if isinstance(a, Jet):
                if a.dep == "v":
                    return mul(Jet("v", a.index + ("s",), ("s",)), ds)
                if a.dep in self.aux_derivatives:
                    return self.aux_derivatives[a.dep].get(var, ZERO)
                if var in a.vars:
                    return a.raised(var)
            return ZERO

        return derive(e, rule)

    def jet_map(self, jets) -> dict:
        """Images of the u-jets under the ansatz, computed once per index."""
        memo: dict[tuple, Expr] = {(): self.ansatz}

        def image(index: tuple) -> Expr:
            if index in memo:
                return memo[index]
            head, last = index[:-1], index[-1]
            out = self.chain_derivative(image(head), last)
            memo[index] = out
            return out

        return {j: image(j.index) for j in sorted(jets, key=lambda j: j.order)}

    def invariance_defect(self, dep_vars=None) -> Expr:
        """eta - xi^i u_i evaluated on the ansatz (zero iff invariant)."""
        eta = substitute_many(self.generator.eta.get("u", ZERO),
                              {DEFAULT_CONTEXT.jet("u"): self.ansatz})
        cond = eta
        for var, comp in self.generator.xi.items():
            cond = add(cond, mul(MINUS_ONE, comp, self.chain_derivative(self.ansatz, var)))
        cond = substitute_many(cond, {Indep(self.eliminate_var): self.inverse})
        num, _ = as_numer_denom(expand(cond))
        return expand(num)


def _depends_on(e: Expr, names: set[str], deps: set[str]) -> bool:
    if isinstance(e, Indep):
        return e.name in names
    if isinstance(e, Jet):
        return e.dep in deps or any(v in names for v in e.index)
    if isinstance(e, (Rat, Param)):
        return False
    if isinstance(e, Fun):
        return _depends_on(e.arg, names, deps)
    if isinstance(e, Pow):
        return _depends_on(e.base, names, deps)
    kids = e.terms if isinstance(e, Sum) else e.factors
    return any(_depends_on(k, names, deps) for k in kids)


@dataclass
class ReductionOutcome:
    ode: OdeModel
    multiplier: Expr          # E(u)|ansatz = multiplier * ode.equation|s->s_expr
    rule: ReductionRule


def apply_reduction(model: PdeModel, rule: ReductionRule) -> ReductionOutcome:
    """Substitute the ansatz, rewrite in the invariant variable, cancel the
    common multiplier, and return the ODE in s alone (with the multiplier
    kept for soundness checks)."""
    res = symmetry_residual(rule.generator, model)
    if res != ZERO:
        warnings.warn(
            f"rule '{rule.name}': generator is not a symmetry of {model.name} "
            f"(residual {to_string(res)})",
            stacklevel=2,
        )
    defect = rule.invariance_defect()
    if defect != ZERO:
        warnings.warn(
            f"rule '{rule.name}': ansatz is not invariant under the generator "
            f"(defect {to_string(defect)})",
            stacklevel=2,
        )
    equation = substitute_many(model.equation, rule.pre_substitutions)
    ujets = [a for a in free_atoms(equation) if isinstance(a, Jet) and a.dep == model.dependent]
    substituted = substitute_many(equation, rule.jet_map(ujets))
    substituted = substitute_many(substituted, {Indep(rule.eliminate_var): rule.inverse})

    order = max((a.order for a in free_atoms(substituted)
                 if isinstance(a, Jet) and a.dep == "v"), default=0)
    if order == 0:
        raise ReductionError("ansatz produced no derivatives of v")
    lead = _vjet(order)
    lead_coeff = diff_atom(substituted, lead)
    if is_zero(lead_coeff):
        raise ReductionError("zero multiplier on the leading derivative")

    quotient = ratnorm(mul(substituted, pow_(lead_coeff, -1)))
    num, den = as_numer_denom(quotient)
    num = expand(num)
    base_vars = {"t", "x"} - {""}
    leftover_deps = set(rule.aux_derivatives)
    for part in (num, den):
        if _depends_on(part, base_vars, leftover_deps):
            raise ReductionError(
                f"rule '{rule.name}': base variables survive the reduction "
                f"(ansatz not invariant): {to_string(part)}"
            )
    from .jet import _solved_form  # scale to integer content for display
    from .jet import _vector_content_scale

    num = _vector_content_scale([num])[0]
    ctx = CTX_SV
    ode = OdeModel.from_equation(f"{model.name}|{rule.name}", num, "s", "v", ctx)
    multiplier = ratnorm(
        substitute_many(
            mul(lead_coeff, pow_(diff_atom(num, lead), -1), den),
            {Indep("s"): rule.s_expr},
        )
    )
    return ReductionOutcome(ode, multiplier, rule)


# ---------------------------------------------------------------------------
# the named rules
# ---------------------------------------------------------------------------


def _u():
    return DEFAULT_CONTEXT.jet("u")


def travelling_wave_rule(c: Expr | None = None) -> ReductionRule:
    c = as_expr(c) if c is not None else Param("c")
    t, x = Indep("t"), Indep("x")
    s = Indep("s")
    return ReductionRule(
        name="travelling-wave",
        generator=VectorField({"t": ONE, "x": c}, {"u": ZERO}),
        s_expr=add(x, mul(MINUS_ONE, c, t)),
        ansatz=V0,
        eliminate_var="x",
        inverse=add(s, mul(c, t)),
        reference=None,
    )


def scaling_rule_2g3_g4() -> ReductionRule:
    t, x, s = Indep("t"), Indep("x"), Indep("s")
    return ReductionRule(
        name="scaling-2G3+G4",
        generator=VectorField({"t": 2 * t, "x": x}, {"u": 2 * _u()}),
        s_expr=mul(t, pow_(x, -2)),
        ansatz=mul(t, V0),
        eliminate_var="t",
        inverse=mul(s, pow_(x, 2)),
        reference="eq02e",
    )


def scaling_rule_g3_g4() -> ReductionRule:
    t, x, s = Indep("t"), Indep("x"), Indep("s")
    return ReductionRule(
        name="scaling-G3+G4",
        generator=VectorField({"t": 2 * t, "x": x}, {"u": _u()}),
        s_expr=mul(t, pow_(x, -2)),
        ansatz=mul(x, V0),
        eliminate_var="t",
        inverse=mul(s, pow_(x, 2)),
        reference="eq02f",
    )


def forced_power_rule(n: Expr | None = None) -> ReductionRule:
    """Scaling reduction of the power-law forced beam (source a*u^n, b = 0).

    Invariance fixes u = v(s) * t^(-2/(n-1)) with s = x/sqrt(t); the scale
    factor t^q carries a symbolic exponent, so it rides along as an opaque
    atom T with the logarithmic derivative rule T' = q T / t, and the source
    uses the balance identity t^(q n) = T * t^(-2).
    """
    n = as_expr(n) if n is not None else Param("n")
    t, x, s = Indep("t"), Indep("x"), Indep("s")
    q = mul(rat(-2), pow_(add(n, MINUS_ONE), -1))
    T = Jet("T", (), ("t",))
    u = _u()
    source_atom = sym_pow(u, n)  # exp(n log u)
    replacement = mul(sym_pow(V0, n), T, pow_(t, -2))
    return ReductionRule(
        name="forced-power",
        generator=VectorField(
            {"t": mul(rat(2), add(n, MINUS_ONE), t), "x": mul(add(n, MINUS_ONE), x)},
            {"u": mul(rat(-4), u)},
        ),
        s_expr=mul(x, pow_(t, Q(-1, 2))),
        ansatz=mul(T, V0),
        eliminate_var="x",
        inverse=mul(s, pow_(t, Q(1, 2))),
        reference=None,
        aux_derivatives={"T": {"t": mul(q, T, pow_(t, -1)), "x": ZERO}},
        pre_substitutions={source_atom: replacement},
    )


def forced_exp_rule(a: Expr | None = None) -> ReductionRule:
    """Scaling reduction of the exponentially forced beam, b = 0:
    u = -(2/a) log t + v(s), s = x/sqrt(t)."""
    a = as_expr(a) if a is not None else Param("a")
    t, x, s = Indep("t"), Indep("x"), Indep("s")
    return ReductionRule(
        name="forced-exp",
        generator=VectorField({"t": 2 * t, "x": x}, {"u": mul(rat(-4), pow_(a, -1))}),
        s_expr=mul(x, pow_(t, Q(-1, 2))),
        ansatz=add(mul(rat(-2), pow_(a, -1), fn("log", t)), V0),
        eliminate_var="x",
        inverse=mul(s, pow_(t, Q(1, 2))),
        reference=None,
    )


RULE_BUILDERS = {
    "travelling-wave": travelling_wave_rule,
    "scaling-2G3+G4": scaling_rule_2g3_g4,
    "scaling-G3+G4": scaling_rule_g3_g4,
    "forced-power": forced_power_rule,
    "forced-exp": forced_exp_rule,
}


def rule_by_name(name: str, **kwargs) -> ReductionRule:
    try:
        return RULE_BUILDERS[name](**kwargs)
    except KeyError:
        raise ReductionError(
            f"unknown rule '{name}' (known: {', '.join(sorted(RULE_BUILDERS))})"
        ) from None


# ---------------------------------------------------------------------------
# comparison with reference forms
# ---------------------------------------------------------------------------


def _state_monomials(e: Expr, indep: str, dep: str) -> dict[str, tuple[Expr, Expr]]:
    """{signature: (monomial, coefficient)} over atoms containing the ODE's
    variables; coefficients are pure parameter expressions."""
    names = {indep}
    deps = {dep}
    out: dict[str, list] = {}
    monos: dict[str, Expr] = {}
    terms = e.terms if isinstance(e, Sum) else (e,)
    for term in terms:
        factors = term.factors if isinstance(term, Prod) else (term,)
        state, coeff = [], []
        for f in factors:
            base = f.base if isinstance(f, Pow) else f
            if not isinstance(base, Rat) and _depends_on(base, names, deps):
                state.append(f)
            else:
                coeff.append(f)
        monomial = mul(*state) if state else ONE
        key = to_string(monomial)
        monos[key] = monomial
        out.setdefault(key, []).append(mul(*coeff) if coeff else ONE)
    return {k: (monos[k], add(*v)) for k, v in out.items()}


@dataclass
class OdeComparison:
    verdict: str                         # "match" | "discrepancy"
    diffs: list = dc_field(default_factory=list)
    factor: Expr | None = None           # derived = factor * reference
    note: str = ""

    def report(self) -> str:
        if self.verdict == "match":
            return f"match (common factor {to_string(self.factor)})"
        lines = [f"discrepancy ({len(self.diffs)} differing term(s))"]
        for d in self.diffs:
            lines.append(
                f"  term {d['monomial']}: derived coefficient {d['derived']}, "
                f"reference {d['reference']}"
            )
        if self.note:
            lines.append(f"  note: {self.note}")
        return "\n".join(lines)


def compare_odes(derived: OdeModel, reference: OdeModel, note: str = "") -> OdeComparison:
    """Coefficient-for-coefficient comparison after clearing a common factor.

    Both equations are cleared to polynomial form and aligned on their
    monomials in (indep, dep); a single common scale is admitted.
    """
    ref = reference
    if (ref.indep, ref.dep) != (derived.indep, derived.dep):
        ref = ref.renamed(indep=derived.indep, dep=derived.dep)
    A = _state_monomials(expand(derived.cleared()), derived.indep, derived.dep)
    B = _state_monomials(expand(ref.cleared()), derived.indep, derived.dep)
    # anchor the scale on the shared leading derivative when possible
    shared = sorted(set(A) & set(B))
    if not shared:
        return OdeComparison("discrepancy", [
            {"monomial": k, "derived": to_string(A[k][1]), "reference": "absent"}
            for k in sorted(A)
        ] + [
            {"monomial": k, "derived": "absent", "reference": to_string(B[k][1])}
            for k in sorted(B)
        ], note=note)
    anchor = max(shared, key=lambda k: max(
        (a.order for a in free_atoms(A[k][0]) if isinstance(a, Jet)), default=0
    ))
    ca, cb = A[anchor][1], B[anchor][1]
    diffs = []
    for key in sorted(set(A) | set(B)):
        da = A.get(key, (None, ZERO))[1]
        db = B.get(key, (None, ZERO))[1]
        if not is_zero(add(mul(da, cb), mul(MINUS_ONE, db, ca))):
            diffs.append({
                "monomial": key,
                "derived": to_string(ratnorm(mul(da, pow_(ca, -1)))),
                "reference": to_string(ratnorm(mul(db, pow_(cb, -1)))),
            })
    if diffs:
        return OdeComparison("discrepancy", diffs, note=note)
    return OdeComparison("match", factor=ratnorm(mul(ca, pow_(cb, -1))), note=note)


def reduce_and_compare(model: PdeModel, rule: ReductionRule,
                       reference: ReferenceOde | None = None):
    """Run the reduction and diff against the published form; returns
    (outcome, comparison vs printed, comparison vs corrected-or-printed)."""
    outcome = apply_reduction(model, rule)
    if reference is None and rule.reference is not None:
        reference = reference_ode(rule.reference)
    if reference is None:
        return outcome, None, None
    printed_cmp = compare_odes(outcome.ode, reference.printed, note=reference.note)
    auth_cmp = printed_cmp
    if reference.corrected is not None:
        auth_cmp = compare_odes(outcome.ode, reference.corrected, note=reference.note)
    return outcome, printed_cmp, auth_cmp


# ---------------------------------------------------------------------------
# order reductions of ODEs
# ---------------------------------------------------------------------------


def order_reduce(ode: OdeModel, generator: str, rename: tuple[str, str] | None = None) -> OdeModel:
    """Reduce the order by one along d_v (shift) or v d_v (scale).

    shift: new dependent g = v'; scale: new dependent g = v'/v.  The
    generator must be admitted: no bare v for the shift, homogeneity in
    (v, v', ...) for the scale.  `rename` gives the (independent, dependent)
    names of the reduced equation.
    """
    dep, indep = ode.dep, ode.indep
    eq = ode.cleared()
    new_indep, new_dep = rename or (indep, "g" if dep != "g" else "m")
    g0 = Jet(new_dep, (), (indep,))
    if generator == "shift":
        if diff_atom(eq, ode.jet(0)) != ZERO:
            raise ReductionError("shift generator d_v not admitted: equation depends on v")
        mapping = {ode.jet(k): Jet(new_dep, (indep,) * (k - 1), (indep,))
                   for k in range(1, ode.order + 1)}
        new_eq = substitute_many(eq, mapping)
    elif generator == "scale":
        lam = Param("_lambda")
        scaled = expand(substitute_many(
            eq, {ode.jet(k): mul(lam, ode.jet(k)) for k in range(ode.order + 1)}
        ))
        degrees = set()
        for term in (scaled.terms if isinstance(scaled, Sum) else (scaled,)):
            d = Q(0)
            factors = term.factors if isinstance(term, Prod) else (term,)
            for f in factors:
                base, q = (f.base, f.exp) if isinstance(f, Pow) else (f, Q(1))
                if base == lam:
                    d = q
            degrees.add(d)
        if len(degrees) != 1:
            raise ReductionError("scale generator v d_v not admitted: equation not homogeneous")
        # v^(k) = P_k(g, g', ...) * v with P_{k+1} = P_k' + g P_k
        P = [ONE]
        for _ in range(ode.order):
            P.append(add(total_derivative(P[-1], indep), mul(g0, P[-1])))
        mapping = {ode.jet(k): mul(P[k], ode.jet(0)) for k in range(1, ode.order + 1)}
        new_eq = substitute_many(eq, mapping)
        # strip the common power of v (uniform by homogeneity)
        new_eq = substitute_many(new_eq, {ode.jet(0): ONE})
    else:
        raise ReductionError("generator must be 'shift' or 'scale'")
    num, _ = as_numer_denom(expand(new_eq))
    new_eq = expand(num)
    ctx = ode.ctx.__class__(
        (indep,), {new_dep: (indep,)}, ode.ctx.parameters, ode.ctx.positive
    )
    interim = OdeModel.from_equation(
        f"{ode.name}|{generator}", new_eq, indep, new_dep, ctx, ode.params
    )
    if new_indep != indep:
        interim = interim.renamed(name=f"{ode.name}|{generator}", indep=new_indep)
    return interim

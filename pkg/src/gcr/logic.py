"""Clause construction and an exact brute-force equivalence oracle.

A target edge plus its sampled neighbor edges compile into one Horn clause:
every neighbor atom negated, disjoined with the positive target atom. The
oracle side of this module proves, by exhaustive truth-table enumeration,
that this linear-size clause is equivalent to the exponential disjunction
over all neighbor subsets it replaces.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

from .errors import ClauseConstructionError
from .graph import Triple


@dataclass(frozen=True)
class Atom:
    triple: Triple
    negated: bool


@dataclass(frozen=True)
class Clause:
    """Negated neighbor atoms plus one positive target atom."""
    neighbors: tuple[Atom, ...]
    target: Atom

    def atoms(self) -> tuple[Atom, ...]:
        return self.neighbors + (self.target,)

    def __len__(self):
        return len(self.neighbors) + 1


def build_clause(target: Triple, neighbors: list[Triple]) -> Clause:
    """Negate each distinct neighbor and disjoin with the positive target.

    Neighbor order is preserved (any shuffling happens at scoring time);
    duplicates collapse, and a neighbor equal to the target is an error.
    """
    seen = set()
    atoms = []
    for t in neighbors:
        if t == target:
            raise ClauseConstructionError(f"target {target} appears among its neighbors")
        if t not in seen:
            seen.add(t)
            atoms.append(Atom(t, negated=True))
    return Clause(neighbors=tuple(atoms), target=Atom(target, negated=False))


def clause_to_text(clause: Clause) -> str:
    """One-line dump: "-h:r:t" per negated atom, "+h:r:t" for the target."""
    def fmt(atom: Atom) -> str:
        sign = "-" if atom.negated else "+"
        return f"{sign}{atom.triple.head}:{atom.triple.relation}:{atom.triple.tail}"
    return " ".join(fmt(a) for a in clause.atoms())


# -- symbolic expressions ----------------------------------------------------

_CONNECTIVES = ("atom", "not", "and", "or", "implies")


@dataclass(frozen=True)
class SymbolicExpr:
    kind: str
    children: tuple[SymbolicExpr, ...] = ()
    atom: int | None = None

    @staticmethod
    def var(index: int) -> SymbolicExpr:
        return SymbolicExpr("atom", atom=index)

    @staticmethod
    def not_(e: SymbolicExpr) -> SymbolicExpr:
        return SymbolicExpr("not", (e,))

    @staticmethod
    def and_(*es: SymbolicExpr) -> SymbolicExpr:
        return SymbolicExpr("and", tuple(es))

    @staticmethod
    def or_(*es: SymbolicExpr) -> SymbolicExpr:
        return SymbolicExpr("or", tuple(es))

    @staticmethod
    def implies(p: SymbolicExpr, q: SymbolicExpr) -> SymbolicExpr:
        return SymbolicExpr("implies", (p, q))

    def atom_indices(self) -> set[int]:
        if self.kind == "atom":
            return {self.atom}
        out: set[int] = set()
        for c in self.children:
            out |= c.atom_indices()
        return out


def eval_symbolic(expr: SymbolicExpr, assignment: dict[int, bool]) -> bool:
    """Classical two-valued evaluation; implication is (not p) or q."""
    kind = expr.kind
    if kind == "atom":
        if expr.atom not in assignment:
            raise KeyError(f"atom {expr.atom} missing from assignment")
        return assignment[expr.atom]
    if kind == "not":
        return not eval_symbolic(expr.children[0], assignment)
    if kind == "and":
        return all(eval_symbolic(c, assignment) for c in expr.children)
    if kind == "or":
        return any(eval_symbolic(c, assignment) for c in expr.children)
    if kind == "implies":
        p, q = expr.children
        return (not eval_symbolic(p, assignment)) or eval_symbolic(q, assignment)
    raise ValueError(f"unknown connective {kind!r}")


def eliminate_implications(expr: SymbolicExpr) -> SymbolicExpr:
    """Rewrite every (p implies q) into ((not p) or q)."""
    if expr.kind == "atom":
        return expr
    children = tuple(eliminate_implications(c) for c in expr.children)
    if expr.kind == "implies":
        return SymbolicExpr.or_(SymbolicExpr.not_(children[0]), children[1])
    return SymbolicExpr(expr.kind, children)


_ORACLE_MAX_N = 10


def expand_full_expression(n: int) -> SymbolicExpr:
    """The disjunction over every nonempty neighbor subset S of (AND(S) -> Tx).

    Neighbor atoms are indices 0..n-1, the target atom is index n; subsets
    are emitted smallest first. 2^n - 1 disjuncts, so n is capped at 10.
    """
    if not 1 <= n <= _ORACLE_MAX_N:
        raise ValueError(f"n must be in [1, {_ORACLE_MAX_N}], got {n}")
    target = SymbolicExpr.var(n)
    disjuncts = []
    for size in range(1, n + 1):
        for subset in itertools.combinations(range(n), size):
            premise = SymbolicExpr.var(subset[0]) if size == 1 \
                else SymbolicExpr.and_(*(SymbolicExpr.var(i) for i in subset))
            disjuncts.append(SymbolicExpr.implies(premise, target))
    return SymbolicExpr.or_(*disjuncts)


def clause_expression(n: int) -> SymbolicExpr:
    """The simplified form: (not T1) or ... or (not Tn) or Tx."""
    terms = [SymbolicExpr.not_(SymbolicExpr.var(i)) for i in range(n)]
    terms.append(SymbolicExpr.var(n))
    return SymbolicExpr.or_(*terms)


@dataclass
class EquivalenceReport:
    n: int
    n_assignments: int
    equivalent: bool
    target_decides_when_premises_true: bool
    counterexamples: list[dict[int, bool]]

    @property
    def ok(self) -> bool:
        return self.equivalent and self.target_decides_when_premises_true


def check_equivalence(n: int) -> EquivalenceReport:
    """Enumerate all 2^(n+1) assignments over {T1..Tn, Tx} and verify that

    (a) the full subset-implication expansion and the simplified clause
        evaluate identically everywhere, and
    (b) on the slice where every neighbor atom is true, the expression's
        value equals the target atom's value.
    """
    full = expand_full_expression(n)
    clause = clause_expression(n)
    counterexamples: list[dict[int, bool]] = []
    slice_ok = True
    for bits in itertools.product((False, True), repeat=n + 1):
        assignment = dict(enumerate(bits))
        lhs = eval_symbolic(full, assignment)
        rhs = eval_symbolic(clause, assignment)
        if lhs != rhs:
            counterexamples.append(assignment)
        if all(bits[:n]) and lhs != bits[n]:
            slice_ok = False
    return EquivalenceReport(
        n=n,
        n_assignments=2 ** (n + 1),
        equivalent=not counterexamples,
        target_decides_when_premises_true=slice_ok,
        counterexamples=counterexamples,
    )

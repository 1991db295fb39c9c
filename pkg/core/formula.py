"""
iac-analysis Formulas
Metric variables and the linear-arithmetic formulas built over them
"""

from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from math import lcm
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Tuple, Union

from .sexpr import SExpr, render_infix


class Sort(str, Enum):
    INT = "Int"
    REAL = "Real"


class Visibility(str, Enum):
    PUBLIC = "public"
    PRIVATE = "private"


class VarKind(str, Enum):
    NODE = "node"
    EDGE = "edge"


class ConstraintCategory(str, Enum):
    BASIC = "basic"
    INCOMING = "incoming"
    INTRINSIC = "intrinsic"
    OUTGOING = "outgoing"
    USER = "user"


@dataclass(frozen=True)
class Variable:
    """A node variable (node, metric) or an edge variable (node → dest, metric)"""
    kind: VarKind
    node: str
    metric: str
    sort: Sort = Sort.INT
    visibility: Visibility = Visibility.PUBLIC
    dest: Optional[str] = None

    @property
    def owner(self) -> Union[str, Tuple[str, str]]:
        return self.node if self.kind == VarKind.NODE else (self.node, self.dest)

    @property
    def name(self) -> str:
        if self.kind == VarKind.NODE:
            return f"{self.node}.{self.metric}"
        return f"{self.node}->{self.dest}.{self.metric}"

    @property
    def symbol(self) -> str:
        return f"|{self.name}|"

    def __str__(self) -> str:
        return self.name


def node_variable(node: str, metric: str, sort: Sort = Sort.INT,
                  visibility: Visibility = Visibility.PUBLIC) -> Variable:
    return Variable(VarKind.NODE, node, metric, sort, visibility)


def edge_variable(source: str, dest: str, metric: str, sort: Sort = Sort.INT) -> Variable:
    return Variable(VarKind.EDGE, source, metric, sort, Visibility.PUBLIC, dest)


# ════════════════════════════════════════════════════════════════════
#  Numbers
# ════════════════════════════════════════════════════════════════════

def smt_number(value: Fraction, real: bool = False) -> str:
    value = Fraction(value)
    magnitude = abs(value)
    if real:
        if magnitude.denominator == 1:
            text = f"{magnitude.numerator}.0"
        else:
            text = f"(/ {magnitude.numerator}.0 {magnitude.denominator}.0)"
    else:
        if magnitude.denominator != 1:
            text = f"(/ {magnitude.numerator} {magnitude.denominator})"
        else:
            text = str(magnitude.numerator)
    return f"(- {text})" if value < 0 else text


def format_number(value: Fraction) -> str:
    value = Fraction(value)
    if value.denominator == 1:
        return str(value.numerator)
    return f"{value.numerator}/{value.denominator}"


# ════════════════════════════════════════════════════════════════════
#  Linear expressions
# ════════════════════════════════════════════════════════════════════

@dataclass(frozen=True)
class LinearExpr:
    terms: Tuple[Tuple[Variable, Fraction], ...] = ()
    constant: Fraction = Fraction(0)

    @staticmethod
    def of(var: Variable, coefficient: Union[int, Fraction] = 1) -> "LinearExpr":
        return LinearExpr(((var, Fraction(coefficient)),))

    @staticmethod
    def const(value: Union[int, Fraction]) -> "LinearExpr":
        return LinearExpr((), Fraction(value))

    @staticmethod
    def sum_of(variables: Iterable[Variable]) -> "LinearExpr":
        out = LinearExpr()
        for v in variables:
            out = out + LinearExpr.of(v)
        return out

    @property
    def is_constant(self) -> bool:
        return not self.terms

    def __add__(self, other: "LinearExpr") -> "LinearExpr":
        merged: Dict[Variable, Fraction] = dict(self.terms)
        order: List[Variable] = [v for v, _ in self.terms]
        for var, coef in other.terms:
            if var in merged:
                merged[var] += coef
            else:
                merged[var] = coef
                order.append(var)
        terms = tuple((v, merged[v]) for v in order if merged[v] != 0)
        return LinearExpr(terms, self.constant + other.constant)

    def scale(self, factor: Union[int, Fraction]) -> "LinearExpr":
        factor = Fraction(factor)
        if factor == 0:
            return LinearExpr()
        return LinearExpr(tuple((v, c * factor) for v, c in self.terms), self.constant * factor)

    def __neg__(self) -> "LinearExpr":
        return self.scale(-1)

    def __sub__(self, other: "LinearExpr") -> "LinearExpr":
        return self + (-other)

    def variables(self) -> FrozenSet[Variable]:
        return frozenset(v for v, _ in self.terms)

    def evaluate(self, assignment: Mapping[Variable, Fraction]) -> Fraction:
        return self.constant + sum((c * Fraction(assignment[v]) for v, c in self.terms), Fraction(0))

    def denominators(self) -> List[int]:
        return [c.denominator for _, c in self.terms] + [self.constant.denominator]

    def to_smtlib(self, real: bool = False) -> str:
        items = []
        for var, coef in self.terms:
            atom = var.symbol
            if real and var.sort == Sort.INT:
                atom = f"(to_real {atom})"
            if coef == 1:
                items.append(atom)
            elif coef == -1:
                items.append(f"(- {atom})")
            else:
                items.append(f"(* {smt_number(coef, real)} {atom})")
        if self.constant != 0 or not items:
            items.append(smt_number(self.constant, real))
        if len(items) == 1:
            return items[0]
        return "(+ " + " ".join(items) + ")"

    def render(self) -> str:
        parts: List[str] = []
        for var, coef in self.terms:
            magnitude = abs(coef)
            text = var.name if magnitude == 1 else f"{format_number(magnitude)} * {var.name}"
            if not parts:
                parts.append(text if coef > 0 else f"-{text}")
            else:
                parts.append(("+ " if coef > 0 else "- ") + text)
        if self.constant != 0 or not parts:
            if not parts:
                parts.append(format_number(self.constant))
            else:
                sign = "+ " if self.constant > 0 else "- "
                parts.append(sign + format_number(abs(self.constant)))
        return " ".join(parts)


COMPARISONS = ("=", "<=", ">=", "<", ">")


@dataclass(frozen=True)
class Comparison:
    """lhs op rhs over linear expressions; the atomic generated formula"""
    op: str
    lhs: LinearExpr
    rhs: LinearExpr

    def __post_init__(self):
        if self.op not in COMPARISONS:
            raise ValueError(f"unsupported comparison {self.op!r}")

    def free_vars(self) -> FrozenSet[Variable]:
        return self.lhs.variables() | self.rhs.variables()

    @property
    def is_real(self) -> bool:
        return any(v.sort == Sort.REAL for v in self.free_vars())

    def _integral(self) -> "Comparison":
        factor = lcm(*(self.lhs.denominators() + self.rhs.denominators()))
        if factor == 1:
            return self
        return Comparison(self.op, self.lhs.scale(factor), self.rhs.scale(factor))

    def to_smtlib(self) -> str:
        real = self.is_real
        cmp = self if real else self._integral()
        return f"({cmp.op} {cmp.lhs.to_smtlib(real)} {cmp.rhs.to_smtlib(real)})"

    def render(self) -> str:
        return f"{self.lhs.render()} {self.op} {self.rhs.render()}"

    def holds(self, assignment: Mapping[Variable, Fraction]) -> bool:
        left = self.lhs.evaluate(assignment)
        right = self.rhs.evaluate(assignment)
        return {
            "=": left == right,
            "<=": left <= right,
            ">=": left >= right,
            "<": left < right,
            ">": left > right,
        }[self.op]


@dataclass(frozen=True)
class SmtFormula:
    """A user-supplied SMT-LIB term, passed to the solver verbatim"""
    text: str
    tree: SExpr = field(compare=False)
    variables: FrozenSet[Variable] = frozenset()

    def free_vars(self) -> FrozenSet[Variable]:
        return self.variables

    def to_smtlib(self) -> str:
        return self.text

    def render(self) -> str:
        return render_infix(self.tree)


Formula = Union[Comparison, SmtFormula]

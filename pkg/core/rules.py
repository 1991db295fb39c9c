"""
iac-analysis Rule Schemas
The small formula language catalog rules are written in:

    self.<metric>                 node variable of the rule's node
    in.<metric>                   sum of incoming edge variables of that metric
    out.<metric>                  the outgoing edge variable being constrained
    routed(self.monthly_{}s)      sum of node metrics named by the edge's route labels
    prop(Path.To.Key, 128)        numeric configuration value with a default

combined with numbers, + - *, parentheses and one of = <= >= < >.
"""

import re
from abc import ABC, abstractmethod
from dataclasses import dataclass
from fractions import Fraction
from typing import FrozenSet, List, Optional, Tuple, Union

from .errors import CatalogError, RuleInstantiationError
from .formula import COMPARISONS, Comparison, ConstraintCategory, LinearExpr, Variable

RULE_CATEGORIES = (
    ConstraintCategory.INCOMING,
    ConstraintCategory.INTRINSIC,
    ConstraintCategory.OUTGOING,
)

_TOKEN_RE = re.compile(r"""
    \s*(?:
        (?P<routed>routed\(\s*self\.(?P<pattern>[A-Za-z0-9_]*\{\}[A-Za-z0-9_]*)\s*\))
      | (?P<prop>prop\(\s*(?P<path>[A-Za-z0-9_.]+)\s*,\s*(?P<default>[0-9]+(?:\.[0-9]+)?)\s*\))
      | (?P<ref>(?P<scope>self|in|out)\.(?P<metric>[A-Za-z_][A-Za-z0-9_]*))
      | (?P<number>[0-9]+(?:\.[0-9]+)?(?:[eE][+-]?[0-9]+)?)
      | (?P<op><=|>=|=|<|>|\+|-|\*|\(|\))
    )""", re.VERBOSE)


# ─── AST ───────────────────────────────────────────────────────────

@dataclass(frozen=True)
class Num:
    value: Fraction


@dataclass(frozen=True)
class Ref:
    scope: str          # self | in | out
    metric: str


@dataclass(frozen=True)
class Routed:
    pattern: str        # e.g. "monthly_{}s"


@dataclass(frozen=True)
class Prop:
    path: str
    default: Fraction


@dataclass(frozen=True)
class Sum:
    terms: Tuple[Tuple[int, "Node"], ...]


@dataclass(frozen=True)
class Product:
    factors: Tuple["Node", ...]


Node = Union[Num, Ref, Routed, Prop, Sum, Product]


def _walk(node: Node):
    yield node
    if isinstance(node, Sum):
        for _, child in node.terms:
            yield from _walk(child)
    elif isinstance(node, Product):
        for child in node.factors:
            yield from _walk(child)


def _is_constant(node: Node) -> bool:
    return not any(isinstance(n, (Ref, Routed)) for n in _walk(node))


# ─── Parser ────────────────────────────────────────────────────────

class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = self._tokenize(text)
        self.pos = 0

    def _tokenize(self, text: str) -> List[Tuple[str, object]]:
        tokens: List[Tuple[str, object]] = []
        pos = 0
        while pos < len(text):
            if text[pos:].strip() == "":
                break
            m = _TOKEN_RE.match(text, pos)
            if not m or m.end() == pos:
                raise CatalogError(f"rule '{text}': unexpected input at column {pos + 1}")
            pos = m.end()
            if m.group("routed"):
                tokens.append(("node", Routed(m.group("pattern"))))
            elif m.group("prop"):
                tokens.append(("node", Prop(m.group("path"), Fraction(m.group("default")))))
            elif m.group("ref"):
                tokens.append(("node", Ref(m.group("scope"), m.group("metric"))))
            elif m.group("number"):
                tokens.append(("node", Num(Fraction(m.group("number")))))
            else:
                tokens.append(("op", m.group("op")))
        return tokens

    def _peek(self) -> Optional[Tuple[str, object]]:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def _take_op(self, *ops: str) -> Optional[str]:
        token = self._peek()
        if token and token[0] == "op" and token[1] in ops:
            self.pos += 1
            return token[1]
        return None

    def _fail(self, message: str):
        raise CatalogError(f"rule '{self.text}': {message}")

    def parse(self) -> Tuple[str, Node, Node]:
        lhs = self._expr()
        op = self._take_op(*COMPARISONS)
        if op is None:
            self._fail("expected a comparison (= <= >= < >)")
        rhs = self._expr()
        if self._peek() is not None:
            self._fail(f"unexpected trailing {self._peek()[1]!r}")
        return op, lhs, rhs

    def _expr(self) -> Node:
        terms = [(1, self._term())]
        while True:
            op = self._take_op("+", "-")
            if op is None:
                break
            terms.append((1 if op == "+" else -1, self._term()))
        return terms[0][1] if len(terms) == 1 and terms[0][0] == 1 else Sum(tuple(terms))

    def _term(self) -> Node:
        factors = [self._factor()]
        while self._take_op("*"):
            factors.append(self._factor())
        if len(factors) == 1:
            return factors[0]
        if sum(1 for f in factors if not _is_constant(f)) > 1:
            self._fail("non-linear product of metrics")
        return Product(tuple(factors))

    def _factor(self) -> Node:
        if self._take_op("-"):
            return Sum(((-1, self._factor()),))
        if self._take_op("("):
            inner = self._expr()
            if not self._take_op(")"):
                self._fail("missing ')'")
            return inner
        token = self._peek()
        if token is None or token[0] != "node":
            self._fail("expected a number, metric reference, routed() or prop()")
        self.pos += 1
        return token[1]


# ════════════════════════════════════════════════════════════════════
#  Schemas
# ════════════════════════════════════════════════════════════════════

class RuleContext(ABC):
    """What a rule may see while being instantiated at one node"""

    @abstractmethod
    def node_var(self, metric: str) -> Variable:
        ...

    @abstractmethod
    def incoming_sum(self, metric: str) -> LinearExpr:
        ...

    @abstractmethod
    def outgoing_var(self, metric: str) -> Variable:
        ...

    @abstractmethod
    def routed_sum(self, pattern: str) -> LinearExpr:
        ...

    @abstractmethod
    def prop(self, path: str, default: Fraction) -> Fraction:
        ...


@dataclass(frozen=True)
class RuleSchema:
    text: str
    op: str
    lhs: Node
    rhs: Node

    @classmethod
    def parse(cls, text: str) -> "RuleSchema":
        if not isinstance(text, str) or not text.strip():
            raise CatalogError("rule formula must be a non-empty string")
        op, lhs, rhs = _Parser(text).parse()
        return cls(text=text.strip(), op=op, lhs=lhs, rhs=rhs)

    def _nodes(self):
        yield from _walk(self.lhs)
        yield from _walk(self.rhs)

    def refs(self, scope: str) -> FrozenSet[str]:
        return frozenset(n.metric for n in self._nodes() if isinstance(n, Ref) and n.scope == scope)

    @property
    def routed_patterns(self) -> FrozenSet[str]:
        return frozenset(n.pattern for n in self._nodes() if isinstance(n, Routed))

    @property
    def uses_routing(self) -> bool:
        return bool(self.routed_patterns)

    @property
    def out_metric(self) -> Optional[str]:
        out = self.refs("out")
        return next(iter(out)) if len(out) == 1 else None

    @property
    def incoming_metric(self) -> Optional[str]:
        own = self.refs("self")
        return next(iter(own)) if len(own) == 1 else None

    def check_shape(self, category: ConstraintCategory):
        """Placeholder usage must match the rule's category"""
        own, inc, out = self.refs("self"), self.refs("in"), self.refs("out")
        problem = None
        if category == ConstraintCategory.INTRINSIC:
            if inc or out or self.uses_routing:
                problem = "intrinsic rules may only use self.<metric>"
            elif not own:
                problem = "intrinsic rules must mention a self.<metric>"
        elif category == ConstraintCategory.INCOMING:
            if out or self.uses_routing:
                problem = "incoming rules may not use out.<metric> or routed()"
            elif len(own) != 1:
                problem = "incoming rules must mention exactly one self.<metric>"
            elif not inc:
                problem = "incoming rules must mention in.<metric>"
        elif category == ConstraintCategory.OUTGOING:
            if inc:
                problem = "outgoing rules may not use in.<metric>"
            elif len(out) != 1:
                problem = "outgoing rules must mention exactly one out.<metric>"
        else:
            problem = f"'{category.value}' is not a rule category"
        if problem:
            raise CatalogError(f"rule '{self.text}': {problem}")

    def instantiate(self, ctx: RuleContext) -> Comparison:
        return Comparison(self.op, _lower(self.lhs, ctx), _lower(self.rhs, ctx))


def _lower(node: Node, ctx: RuleContext) -> LinearExpr:
    if isinstance(node, Num):
        return LinearExpr.const(node.value)
    if isinstance(node, Prop):
        return LinearExpr.const(ctx.prop(node.path, node.default))
    if isinstance(node, Ref):
        if node.scope == "self":
            return LinearExpr.of(ctx.node_var(node.metric))
        if node.scope == "in":
            return ctx.incoming_sum(node.metric)
        return LinearExpr.of(ctx.outgoing_var(node.metric))
    if isinstance(node, Routed):
        return ctx.routed_sum(node.pattern)
    if isinstance(node, Sum):
        out = LinearExpr()
        for sign, child in node.terms:
            out = out + _lower(child, ctx).scale(sign)
        return out
    result = LinearExpr.const(1)
    for factor in node.factors:
        value = _lower(factor, ctx)
        if result.is_constant:
            result = value.scale(result.constant)
        elif value.is_constant:
            result = result.scale(value.constant)
        else:
            raise RuleInstantiationError("non-linear product after instantiation")
    return result


def route_pattern_regex(pattern: str) -> "re.Pattern[str]":
    before, _, after = pattern.partition("{}")
    return re.compile("^" + re.escape(before) + "([A-Z]+)" + re.escape(after) + "$")

"""
iac-analysis Constraint Engine
Metric variables over the resource graph, categorized constraints
generated node by node, scoping checks and user SMT-LIB constraints
"""

import difflib
import logging
from collections import Counter
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Any, Dict, Iterable, Iterator, List, Optional, Tuple

from .catalog import ANY_ROUTE, Catalog
from .errors import RuleInstantiationError, SmtSyntaxError, UnknownSymbol
from .formula import (
    Comparison, ConstraintCategory, Formula, LinearExpr, SmtFormula, Variable, VarKind,
    Visibility, edge_variable, node_variable,
)
from .graph import NodeRecord, ResourceGraph
from .rules import RuleContext, route_pattern_regex
from .sexpr import Symbol, head, is_numeral, parse_all, symbols_in, to_text
from .template import IntrinsicRef, get_path

logger = logging.getLogger("iac.constraints")

CATEGORY_ORDER = (
    ConstraintCategory.BASIC,
    ConstraintCategory.INCOMING,
    ConstraintCategory.INTRINSIC,
    ConstraintCategory.OUTGOING,
    ConstraintCategory.USER,
)


# ════════════════════════════════════════════════════════════════════
#  Variables
# ════════════════════════════════════════════════════════════════════

@dataclass(frozen=True)
class VariableSet:
    variables: Tuple[Variable, ...] = ()
    _by_name: Dict[str, Variable] = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        index: Dict[str, Variable] = {}
        for v in self.variables:
            if v.name in index:
                raise ValueError(f"duplicate variable {v.symbol}")
            index[v.name] = v
        object.__setattr__(self, "_by_name", index)

    def __iter__(self) -> Iterator[Variable]:
        return iter(self.variables)

    def __len__(self) -> int:
        return len(self.variables)

    def __contains__(self, var: Variable) -> bool:
        return self._by_name.get(var.name) == var

    @property
    def names(self) -> List[str]:
        return list(self._by_name)

    def lookup(self, name: str) -> Optional[Variable]:
        return self._by_name.get(name.strip("|"))

    def node_var(self, node: str, metric: str) -> Optional[Variable]:
        return self._by_name.get(f"{node}.{metric}")

    def edge_var(self, source: str, dest: str, metric: str) -> Optional[Variable]:
        return self._by_name.get(f"{source}->{dest}.{metric}")

    @property
    def node_variables(self) -> List[Variable]:
        return [v for v in self.variables if v.kind == VarKind.NODE]

    @property
    def edge_variables(self) -> List[Variable]:
        return [v for v in self.variables if v.kind == VarKind.EDGE]

    def nv(self, n: str) -> List[Variable]:
        return [v for v in self.variables if v.kind == VarKind.NODE and v.node == n]

    def nv_pub(self, n: str) -> List[Variable]:
        return [v for v in self.nv(n) if v.visibility == Visibility.PUBLIC]

    def nv_priv(self, n: str) -> List[Variable]:
        return [v for v in self.nv(n) if v.visibility == Visibility.PRIVATE]

    def ev_in(self, n: str) -> List[Variable]:
        return [v for v in self.variables if v.kind == VarKind.EDGE and v.dest == n]

    def ev_out(self, n: str) -> List[Variable]:
        return [v for v in self.variables if v.kind == VarKind.EDGE and v.node == n]


def instantiate_variables(graph: ResourceGraph, catalog: Catalog) -> VariableSet:
    """One node variable per (node, metric), one edge variable per (edge, destination public metric)"""
    out: List[Variable] = []
    for node in graph.nodes:
        if not node.supported:
            continue
        public, private = catalog.metrics_of(node.type_name)
        for m in public + private:
            out.append(node_variable(node.logical_id, m.name, m.sort, m.visibility))
    for source, dest in graph.edges:
        target = graph.node(dest)
        if not target.supported:
            continue
        public, _ = catalog.metrics_of(target.type_name)
        for m in public:
            out.append(edge_variable(source, dest, m.name, m.sort))
    return VariableSet(tuple(out))


# ════════════════════════════════════════════════════════════════════
#  Constraints
# ════════════════════════════════════════════════════════════════════

@dataclass(frozen=True)
class Constraint:
    formula: Formula
    category: ConstraintCategory
    anchor: Optional[str] = None
    name: str = ""
    origin: str = ""            # catalog rule text or user file

    @property
    def free_vars(self):
        return self.formula.free_vars()

    def render(self) -> str:
        return self.formula.render()

    def to_smtlib(self) -> str:
        return self.formula.to_smtlib()

    def canonical(self) -> str:
        return f"{self.category.value}|{self.anchor or ''}|{self.to_smtlib()}"

    def describe(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "category": self.category.value,
            "anchor": self.anchor,
            "formula": self.render(),
            "smtlib": self.to_smtlib(),
        }

    def __str__(self) -> str:
        where = f" @ {self.anchor}" if self.anchor else ""
        return f"[{self.category.value}{where}] {self.render()}"


@dataclass(frozen=True)
class ConstraintSet:
    constraints: Tuple[Constraint, ...] = ()

    @classmethod
    def of(cls, constraints: Iterable[Constraint]) -> "ConstraintSet":
        """Name every constraint by category and ordinal (basic0, basic1, ...)"""
        ordinals: Counter = Counter()
        named = []
        for c in constraints:
            named.append(replace(c, name=f"{c.category.value}{ordinals[c.category]}"))
            ordinals[c.category] += 1
        return cls(tuple(named))

    def __iter__(self) -> Iterator[Constraint]:
        return iter(self.constraints)

    def __len__(self) -> int:
        return len(self.constraints)

    def extend(self, more: Iterable[Constraint]) -> "ConstraintSet":
        return ConstraintSet.of(self.constraints + tuple(more))

    def by_category(self, category: ConstraintCategory) -> List[Constraint]:
        return [c for c in self.constraints if c.category == category]

    def anchored_at(self, node: str) -> List[Constraint]:
        return [c for c in self.constraints if c.anchor == node]

    def by_name(self, name: str) -> Optional[Constraint]:
        for c in self.constraints:
            if c.name == name:
                return c
        return None

    def counts(self) -> Dict[str, int]:
        tally = Counter(c.category for c in self.constraints)
        return {cat.value: tally.get(cat, 0) for cat in CATEGORY_ORDER}


# ─── Rule instantiation ────────────────────────────────────────────

def _as_number(value: Any) -> Optional[Fraction]:
    if isinstance(value, bool) or value is None or isinstance(value, IntrinsicRef):
        return None
    if isinstance(value, (int, float, str)):
        try:
            return Fraction(str(value).strip())
        except (ValueError, ZeroDivisionError):
            return None
    return None


class _NodeContext(RuleContext):
    """Exposes NV(n), EV_in(n) and one outgoing edge variable to a rule"""

    def __init__(self, node: NodeRecord, variables: VariableSet, rule_text: str,
                 dest: Optional[str] = None):
        self.node = node
        self.variables = variables
        self.rule_text = rule_text
        self.dest = dest

    def _missing(self, what: str):
        raise RuleInstantiationError(
            f"rule '{self.rule_text}' on {self.node.logical_id} ({self.node.type_name}): {what}"
        )

    def node_var(self, metric: str) -> Variable:
        var = self.variables.node_var(self.node.logical_id, metric)
        if var is None:
            self._missing(f"no metric {metric}")
        return var

    def incoming_sum(self, metric: str) -> LinearExpr:
        return LinearExpr.sum_of(v for v in self.variables.ev_in(self.node.logical_id) if v.metric == metric)

    def outgoing_var(self, metric: str) -> Variable:
        var = self.variables.edge_var(self.node.logical_id, self.dest or "", metric)
        if var is None:
            self._missing(f"no outgoing edge variable {metric} towards {self.dest}")
        return var

    def routed_sum(self, pattern: str) -> LinearExpr:
        regex = route_pattern_regex(pattern)
        own = [v for v in self.variables.nv(self.node.logical_id)]
        chosen: List[Variable] = []
        for label in self.node.routes_to(self.dest or ""):
            if label == ANY_ROUTE:
                picks = [v for v in own if regex.match(v.metric)]
            else:
                picks = [v for v in own if v.metric == pattern.replace("{}", label)]
            chosen.extend(p for p in picks if p not in chosen)
        return LinearExpr.sum_of(chosen)

    def prop(self, path: str, default: Fraction) -> Fraction:
        value = _as_number(get_path(self.node.properties, path))
        return default if value is None else value


def _basic(var: Variable) -> Constraint:
    formula = Comparison(">=", LinearExpr.of(var), LinearExpr.const(0))
    anchor = var.node if var.kind == VarKind.NODE else None
    return Constraint(formula, ConstraintCategory.BASIC, anchor)


def _node_constraints(node: NodeRecord, variables: VariableSet,
                      catalog: Catalog) -> Dict[ConstraintCategory, List[Constraint]]:
    """Constraints anchored at one node; reads only the node, NV(n), EV_in(n) and EV_out(n)"""
    n = node.logical_id
    descriptor = catalog.descriptor(node.type_name)
    rules = catalog.rules_for(node.type_name, node.properties)
    out: Dict[ConstraintCategory, List[Constraint]] = {c: [] for c in CATEGORY_ORDER}

    incoming = variables.ev_in(n)
    if incoming:
        covered = set()
        for rule in rules:
            if rule.category != ConstraintCategory.INCOMING:
                continue
            formula = rule.schema.instantiate(_NodeContext(node, variables, rule.formula))
            out[ConstraintCategory.INCOMING].append(
                Constraint(formula, ConstraintCategory.INCOMING, n, origin=rule.formula)
            )
            covered.add(rule.schema.incoming_metric)
        if descriptor.incoming == "sum":
            for var in variables.nv_pub(n):
                if var.metric in covered:
                    continue
                edges = [e for e in incoming if e.metric == var.metric]
                if not edges:
                    continue
                formula = Comparison("=", LinearExpr.of(var), LinearExpr.sum_of(edges))
                out[ConstraintCategory.INCOMING].append(
                    Constraint(formula, ConstraintCategory.INCOMING, n, origin="incoming sum")
                )

    for rule in rules:
        if rule.category != ConstraintCategory.INTRINSIC:
            continue
        formula = rule.schema.instantiate(_NodeContext(node, variables, rule.formula))
        out[ConstraintCategory.INTRINSIC].append(
            Constraint(formula, ConstraintCategory.INTRINSIC, n, origin=rule.formula)
        )

    outgoing = variables.ev_out(n)
    for rule in rules:
        if rule.category != ConstraintCategory.OUTGOING:
            continue
        metric = rule.schema.out_metric
        for edge_var in outgoing:
            if edge_var.metric != metric:
                continue
            if rule.schema.uses_routing and not node.routes_to(edge_var.dest):
                continue
            ctx = _NodeContext(node, variables, rule.formula, dest=edge_var.dest)
            out[ConstraintCategory.OUTGOING].append(
                Constraint(rule.schema.instantiate(ctx), ConstraintCategory.OUTGOING, n, origin=rule.formula)
            )
    return out


def generate_constraints(graph: ResourceGraph, variables: VariableSet, catalog: Catalog) -> ConstraintSet:
    """Basic constraints first, then incoming, intrinsic and outgoing per node in logical-id order"""
    generated: List[Constraint] = [_basic(v) for v in variables]
    for node in graph.nodes:
        if not node.supported:
            continue
        per_node = _node_constraints(node, variables, catalog)
        for category in (ConstraintCategory.INCOMING, ConstraintCategory.INTRINSIC, ConstraintCategory.OUTGOING):
            generated.extend(per_node[category])
    return ConstraintSet.of(generated)


# ════════════════════════════════════════════════════════════════════
#  Scoping
# ════════════════════════════════════════════════════════════════════

@dataclass(frozen=True)
class ScopeViolation:
    constraint: str
    category: str
    anchor: Optional[str]
    message: str
    offending: Tuple[str, ...] = ()

    def to_dict(self) -> Dict[str, Any]:
        return {
            "constraint": self.constraint,
            "category": self.category,
            "anchor": self.anchor,
            "message": self.message,
            "offending": list(self.offending),
        }


def validate_scoping(constraint: Constraint, graph: ResourceGraph, variables: VariableSet) -> List[ScopeViolation]:
    """Empty list when the constraint's free variables respect its category"""
    fv = set(constraint.free_vars)
    n = constraint.anchor
    category = constraint.category

    def violation(message: str, offending: Iterable[Variable] = ()) -> List[ScopeViolation]:
        return [ScopeViolation(
            constraint.name, category.value, n, message,
            tuple(sorted(v.name for v in offending)),
        )]

    undeclared = [v for v in fv if v not in variables]
    if undeclared:
        return violation("mentions undeclared variables", undeclared)

    if category == ConstraintCategory.BASIC:
        return [] if len(fv) == 1 else violation(f"basic constraints have exactly one variable, found {len(fv)}", fv)
    if category == ConstraintCategory.USER:
        return []
    if n is None or graph.node(n) is None:
        return violation(f"{category.value} constraint needs an anchor node in the graph")

    own = set(variables.nv(n))
    if category == ConstraintCategory.INTRINSIC:
        extra = fv - own
        return violation("intrinsic constraints may only use the node's own variables", extra) if extra else []

    if category == ConstraintCategory.INCOMING:
        node_vars = {v for v in fv if v.kind == VarKind.NODE}
        if len(node_vars) != 1 or not node_vars <= set(variables.nv_pub(n)):
            return violation("incoming constraints bind exactly one public variable of the node", node_vars)
        extra = fv - node_vars - set(variables.ev_in(n))
        return violation("incoming constraints may only add incoming edge variables", extra) if extra else []

    if category == ConstraintCategory.OUTGOING:
        edge_vars = {v for v in fv if v.kind == VarKind.EDGE}
        if len(edge_vars) != 1 or not edge_vars <= set(variables.ev_out(n)):
            return violation("outgoing constraints bind exactly one outgoing edge variable", edge_vars)
        extra = fv - edge_vars - own
        return violation("outgoing constraints may only add the node's own variables", extra) if extra else []

    return violation(f"unknown category {category.value}")


# ════════════════════════════════════════════════════════════════════
#  User constraints
# ════════════════════════════════════════════════════════════════════

IGNORED_COMMANDS = {"set-info", "set-logic", "set-option", "check-sat", "get-model", "exit"}
BUILTIN_SYMBOLS = {
    "+", "-", "*", "/", "=", "<=", ">=", "<", ">", "and", "or", "not", "=>", "xor",
    "ite", "distinct", "to_real", "to_int", "is_int", "abs", "div", "mod",
    "true", "false", "let", "!",
}


def _suggest(name: str, variables: VariableSet) -> Optional[str]:
    matches = difflib.get_close_matches(name, variables.names, n=1, cutoff=0.6)
    return matches[0] if matches else None


def _let_bound(term) -> set:
    bound = set()
    if isinstance(term, list):
        if head(term) == "let" and len(term) >= 2 and isinstance(term[1], list):
            for binding in term[1]:
                if isinstance(binding, list) and binding and isinstance(binding[0], Symbol):
                    bound.add(binding[0].name)
        for item in term:
            bound |= _let_bound(item)
    return bound


def _strip_annotation(term):
    if head(term) == "!" and len(term) >= 2:
        label = None
        rest = term[2:]
        for i, item in enumerate(rest):
            if isinstance(item, Symbol) and item.name == ":named" and i + 1 < len(rest):
                label = str(rest[i + 1])
        return term[1], label
    return term, None


def _resolve_term(term, variables: VariableSet) -> List[Variable]:
    bound = _let_bound(term)
    found: List[Variable] = []
    for sym in symbols_in(term):
        if not sym.quoted and (is_numeral(sym) or sym.name in BUILTIN_SYMBOLS
                               or sym.name in bound or sym.name.startswith(":")):
            continue
        var = variables.lookup(sym.name)
        if var is None:
            raise UnknownSymbol(sym.name, _suggest(sym.name, variables))
        if var not in found:
            found.append(var)
    return found


def parse_user_constraints(smtlib_text: str, variables: VariableSet, origin: str = "") -> List[Constraint]:
    """`(assert ...)` forms over the canonical symbols, passed to the solver verbatim"""
    out: List[Constraint] = []
    for command in parse_all(smtlib_text or ""):
        op = head(command)
        if op in IGNORED_COMMANDS:
            continue
        if op != "assert":
            shown = op or to_text(command)
            raise SmtSyntaxError(f"unsupported command ({shown}) in application constraints")
        if len(command) != 2:
            raise SmtSyntaxError(f"assert takes exactly one term: {to_text(command)}")
        term, label = _strip_annotation(command[1])
        found = _resolve_term(term, variables)
        formula = SmtFormula(to_text(term), term, frozenset(found))
        out.append(Constraint(formula, ConstraintCategory.USER, None, origin=label or origin))
    logger.debug(f"Parsed {len(out)} user constraints{' from ' + origin if origin else ''}")
    return out


def build_constraint_system(graph: ResourceGraph, catalog: Catalog) -> Tuple[VariableSet, ConstraintSet]:
    variables = instantiate_variables(graph, catalog)
    constraints = generate_constraints(graph, variables, catalog)
    for c in constraints:
        problems = validate_scoping(c, graph, variables)
        if problems:
            raise RuleInstantiationError(f"{c.name} breaks scoping: {problems[0].message}")
    logger.debug(f"Generated {len(constraints)} constraints over {len(variables)} variables")
    return variables, constraints

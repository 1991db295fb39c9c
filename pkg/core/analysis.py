"""
iac-analysis Analysis
End-to-end workflows: estimate templates, estimate checking and usage bounds
"""

import math
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import yaml

from .catalog import Catalog, get_catalog
from .config import get_config
from .constraints import (
    CATEGORY_ORDER, Constraint, ConstraintSet, VariableSet, build_constraint_system,
    parse_user_constraints,
)
from .errors import EstimateError, UnknownEstimateKey, UnknownTargetKey
from .formula import ConstraintCategory, Sort, Visibility, smt_number
from .graph import ResourceGraph, build_graph, graph_stats
from .smt import (
    BoundValue, Direction, SolverScript, Status, bound, check, format_rational, make_script,
)
from .template import TemplateModel, load_template, parse_template, read_source, resolve_references

logger = logging.getLogger("iac.analysis")

TEMPLATE_HEADER = (
    "# iac-analysis usage estimates\n"
    "# Fill in expected monthly figures; leave null where unknown.\n"
)

Target = Union[str, Tuple[str, str]]


class Verdict(str, Enum):
    VALID = "Valid"
    INVALID = "Invalid"
    INCONCLUSIVE = "Inconclusive"

    @property
    def exit_code(self) -> int:
        return {Verdict.VALID: 0, Verdict.INVALID: 1, Verdict.INCONCLUSIVE: 2}[self]


@dataclass
class AnalysisOptions:
    max_core_constraints: int = 10
    parallel_bounds: bool = True
    dump_smt: Optional[str] = None

    @classmethod
    def from_config(cls, **overrides) -> "AnalysisOptions":
        settings = get_config().analysis
        options = cls(settings.max_core_constraints, settings.parallel_bounds)
        for key, value in overrides.items():
            if value is not None:
                setattr(options, key, value)
        return options


# ════════════════════════════════════════════════════════════════════
#  Estimates
# ════════════════════════════════════════════════════════════════════

@dataclass(frozen=True)
class EstimateSet:
    entries: Dict[Tuple[str, str], Fraction] = field(default_factory=dict)
    sorts: Dict[Tuple[str, str], Sort] = field(default_factory=dict, compare=False)

    def __len__(self) -> int:
        return len(self.entries)

    def assertions(self) -> List[Tuple[str, str]]:
        """One named equality per entry: estimate0, estimate1, ..."""
        out = []
        for index, ((node, metric), value) in enumerate(sorted(self.entries.items())):
            real = self.sorts.get((node, metric)) == Sort.REAL
            out.append((f"estimate{index}", f"(= |{node}.{metric}| {smt_number(value, real)})"))
        return out

    def describe(self, name: str) -> Optional[Dict[str, Any]]:
        for (assertion, term), ((node, metric), value) in zip(self.assertions(), sorted(self.entries.items())):
            if assertion == name:
                return {
                    "name": name,
                    "category": "estimate",
                    "anchor": node,
                    "formula": f"{node}.{metric} = {format_rational(value)}",
                    "smtlib": term,
                }
        return None

    def without(self, key: Tuple[str, str]) -> "EstimateSet":
        return EstimateSet({k: v for k, v in self.entries.items() if k != key}, self.sorts)

    def to_dict(self) -> Dict[str, Dict[str, Any]]:
        out: Dict[str, Dict[str, Any]] = {}
        for (node, metric), value in sorted(self.entries.items()):
            out.setdefault(node, {})[metric] = format_rational(value)
        return out


def _to_fraction(value: Any, where: str) -> Fraction:
    if isinstance(value, bool):
        raise EstimateError(f"{where}: expected a number, got {value!r}")
    if isinstance(value, float):
        if not math.isfinite(value):
            raise EstimateError(f"{where}: estimates must be finite")
        return Fraction(repr(value))
    if isinstance(value, (int, str)):
        try:
            result = Fraction(str(value).strip().replace("_", ""))
        except (ValueError, ZeroDivisionError):
            raise EstimateError(f"{where}: expected a number, got {value!r}")
        return result
    raise EstimateError(f"{where}: expected a number, got {value!r}")


def load_estimates(text: str, variables: VariableSet) -> EstimateSet:
    """Parse the estimates YAML; null values are unfilled and stay unconstrained"""
    try:
        data = yaml.safe_load(text) if text else None
    except yaml.YAMLError as e:
        raise EstimateError(f"invalid estimates YAML: {e}") from e
    if data is None:
        return EstimateSet()
    if not isinstance(data, dict):
        raise EstimateError("estimates must be a mapping of resource → metric → value")

    public_nodes = sorted({v.node for v in variables.node_variables if v.visibility == Visibility.PUBLIC})
    entries: Dict[Tuple[str, str], Fraction] = {}
    sorts: Dict[Tuple[str, str], Sort] = {}
    for node, metrics in data.items():
        node = str(node)
        public = [v for v in variables.nv_pub(node)]
        if not public:
            raise UnknownEstimateKey(node, None, public_nodes)
        if metrics is None:
            continue
        if not isinstance(metrics, dict):
            raise EstimateError(f"{node}: expected a mapping of metric → value")
        for metric, value in metrics.items():
            var = variables.node_var(node, str(metric))
            if var is None or var.visibility != Visibility.PUBLIC:
                raise UnknownEstimateKey(node, str(metric), [v.metric for v in public])
            if value is None:
                continue
            where = f"{node}.{metric}"
            number = _to_fraction(value, where)
            if number < 0:
                raise EstimateError(f"{where}: estimates must be >= 0, got {value}")
            if var.sort == Sort.INT and number.denominator != 1:
                raise EstimateError(f"{where}: {var.metric} is an integer metric, got {value}")
            entries[(node, var.metric)] = number
            sorts[(node, var.metric)] = var.sort
    return EstimateSet(entries, sorts)


def estimates_template(graph: ResourceGraph, catalog: Catalog) -> str:
    """YAML skeleton: every public metric of every supported node, set to null"""
    skeleton: Dict[str, Dict[str, None]] = {}
    for node in graph.nodes:
        if not node.supported:
            continue
        public, _ = catalog.metrics_of(node.type_name)
        if public:
            skeleton[node.logical_id] = {m.name: None for m in public}
    if not skeleton:
        return TEMPLATE_HEADER
    return TEMPLATE_HEADER + yaml.safe_dump(skeleton, sort_keys=False, default_flow_style=False)


# ════════════════════════════════════════════════════════════════════
#  Reports
# ════════════════════════════════════════════════════════════════════

@dataclass
class CheckReport:
    verdict: Verdict
    conflicting_constraints: List[Dict[str, Any]] = field(default_factory=list)
    witness: Optional[Dict[str, Fraction]] = None
    reason: str = ""
    core_size: int = 0

    @property
    def exit_code(self) -> int:
        return self.verdict.exit_code

    def to_dict(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {"verdict": self.verdict.value}
        if self.verdict == Verdict.INVALID:
            out["conflicting_constraints"] = self.conflicting_constraints
            out["core_size"] = self.core_size
        if self.witness is not None:
            out["witness"] = {k: format_rational(v) for k, v in sorted(self.witness.items())}
        if self.reason:
            out["reason"] = self.reason
        return out

    def render(self) -> str:
        lines = [f"Verdict: {self.verdict.value}"]
        if self.verdict == Verdict.INVALID:
            shown = len(self.conflicting_constraints)
            more = f" (showing {shown} of {self.core_size})" if self.core_size > shown else ""
            lines.append(f"The estimates contradict these constraints{more}:")
            for c in self.conflicting_constraints:
                where = f" @ {c['anchor']}" if c.get("anchor") else ""
                lines.append(f"  [{c['category']}{where}] {c['formula']}")
                lines.append(f"      {c['smtlib']}")
        elif self.verdict == Verdict.VALID and self.witness:
            lines.append("Witness assignment:")
            width = max(len(k) for k in self.witness)
            for name, value in sorted(self.witness.items()):
                lines.append(f"  {name.ljust(width)}  {format_rational(value)}")
        if self.reason:
            lines.append(f"Reason: {self.reason}")
        return "\n".join(lines)


@dataclass
class BoundsReport:
    target: Tuple[str, str]
    lower: BoundValue
    upper: BoundValue
    assumptions: List[str] = field(default_factory=list)

    @property
    def name(self) -> str:
        return f"{self.target[0]}.{self.target[1]}"

    def to_dict(self) -> Dict[str, Any]:
        return {
            "target": self.name,
            "lower": self.lower.to_dict(),
            "upper": self.upper.to_dict(),
            "assumptions": self.assumptions,
        }

    def render(self) -> str:
        return f"{self.name}: [{self.lower.render(Direction.MIN)}, {self.upper.render(Direction.MAX)}]"


# ════════════════════════════════════════════════════════════════════
#  Workflows
# ════════════════════════════════════════════════════════════════════

def _system(graph: ResourceGraph, catalog: Catalog,
            user_constraints: Sequence[Constraint]) -> Tuple[VariableSet, ConstraintSet]:
    variables, generated = build_constraint_system(graph, catalog)
    return variables, generated.extend(user_constraints)


def _dump(script: SolverScript, path: Optional[str]):
    if path:
        Path(path).write_text(script.render(), encoding="utf-8")
        logger.debug(f"Solver script written to {path}")


def _core_descriptions(core: Iterable[str], constraints: ConstraintSet,
                       estimates: EstimateSet) -> List[Dict[str, Any]]:
    order = {cat.value: i for i, cat in enumerate(CATEGORY_ORDER)}
    described = []
    for name in core:
        found = constraints.by_name(name)
        if found is not None:
            described.append(found.describe())
            continue
        entry = estimates.describe(name)
        if entry is not None:
            described.append(entry)
    # estimates and user constraints first: they are what users edit
    rank = {"estimate": -2, "user": -1}
    described.sort(key=lambda d: (rank.get(d["category"], order.get(d["category"], 9)), d["name"]))
    return described


def check_estimates(graph: ResourceGraph, estimates: EstimateSet,
                    user_constraints: Sequence[Constraint] = (),
                    options: Optional[AnalysisOptions] = None,
                    catalog: Optional[Catalog] = None, backend=None) -> CheckReport:
    """Valid iff generated + user constraints + estimate equalities are satisfiable"""
    options = options or AnalysisOptions.from_config()
    catalog = catalog or get_catalog()
    variables, constraints = _system(graph, catalog, user_constraints)
    script = make_script(constraints, variables).with_assertions(estimates.assertions())
    _dump(script, options.dump_smt)

    verdict = check(script, backend=backend)
    if verdict.status == Status.SAT:
        return CheckReport(Verdict.VALID, witness=verdict.model or {})
    if verdict.status == Status.UNKNOWN:
        return CheckReport(Verdict.INCONCLUSIVE, reason=verdict.reason or "solver returned unknown")

    described = _core_descriptions(verdict.core or (), constraints, estimates)
    if not described:
        # no core from the solver: name everything the user supplied
        fallback = [name for name, _ in estimates.assertions()]
        fallback += [c.name for c in constraints.by_category(ConstraintCategory.USER)]
        described = _core_descriptions(fallback, constraints, estimates) or [
            c.describe() for c in constraints.by_category(ConstraintCategory.BASIC)[:1]
        ]
    return CheckReport(
        Verdict.INVALID,
        conflicting_constraints=described[:options.max_core_constraints],
        core_size=len(described),
    )


def resolve_target(target: Target, variables: VariableSet) -> Tuple[str, str]:
    if isinstance(target, tuple):
        node, metric = target
    else:
        node, _, metric = str(target).rpartition(".")
    var = variables.node_var(node, metric) if node else None
    if var is None:
        valid = [v.name for v in variables.nv(node)] if node else []
        raise UnknownTargetKey(f"{node}.{metric}" if node else str(target), valid)
    return node, metric


def usage_bounds(graph: ResourceGraph, target: Target, estimates: Optional[EstimateSet] = None,
                 user_constraints: Sequence[Constraint] = (),
                 options: Optional[AnalysisOptions] = None,
                 catalog: Optional[Catalog] = None, backend=None) -> BoundsReport:
    """[min, max] of one node metric under the constraints and estimates"""
    options = options or AnalysisOptions.from_config()
    catalog = catalog or get_catalog()
    estimates = estimates or EstimateSet()
    variables, constraints = _system(graph, catalog, user_constraints)
    node, metric = resolve_target(target, variables)
    name = f"{node}.{metric}"
    script = make_script(constraints, variables).with_assertions(estimates.assertions())
    _dump(script.with_objective(Direction.MAX, name), options.dump_smt)

    if backend is None:
        from .solvers import get_backend
        backend = get_backend()

    if options.parallel_bounds:
        with ThreadPoolExecutor(max_workers=2, thread_name_prefix="bounds") as pool:
            low = pool.submit(bound, script, name, Direction.MIN, backend)
            high = pool.submit(bound, script, name, Direction.MAX, backend)
            lower, upper = low.result(), high.result()
    else:
        lower = bound(script, name, Direction.MIN, backend)
        upper = bound(script, name, Direction.MAX, backend)

    assumptions = [estimates.describe(n)["formula"] for n, _ in estimates.assertions()]
    assumptions += [c.render() for c in user_constraints]
    return BoundsReport((node, metric), lower, upper, assumptions)


# ════════════════════════════════════════════════════════════════════
#  Session
# ════════════════════════════════════════════════════════════════════

class IacAnalyzer:
    """One template analysed once: graph, variables and constraints shared by every workflow"""

    def __init__(self, model: TemplateModel, catalog: Optional[Catalog] = None, backend=None,
                 options: Optional[AnalysisOptions] = None):
        self.model = model
        self.catalog = catalog or get_catalog()
        self.options = options or AnalysisOptions.from_config()
        self.graph = build_graph(model, self.catalog, resolve_references(model))
        self.variables, self.generated = build_constraint_system(self.graph, self.catalog)
        self.user_constraints: List[Constraint] = []
        self._backend = backend

    @classmethod
    def from_path(cls, path: Union[str, Path], **kwargs) -> "IacAnalyzer":
        return cls(load_template(path), **kwargs)

    @classmethod
    def from_text(cls, text: str, **kwargs) -> "IacAnalyzer":
        return cls(parse_template(text), **kwargs)

    @property
    def backend(self):
        if self._backend is None:
            from .solvers import get_backend
            self._backend = get_backend()
        return self._backend

    # ─── Inputs ───

    def add_user_constraints(self, text: str, origin: str = "") -> List[Constraint]:
        parsed = parse_user_constraints(text, self.variables, origin)
        self.user_constraints.extend(parsed)
        return parsed

    def add_user_constraint_file(self, path: Union[str, Path]) -> List[Constraint]:
        return self.add_user_constraints(read_source(path), str(path))

    def load_estimates(self, text: str) -> EstimateSet:
        return load_estimates(text, self.variables)

    def load_estimates_file(self, path: Union[str, Path]) -> EstimateSet:
        return self.load_estimates(read_source(path))

    # ─── Views ───

    @property
    def constraints(self) -> ConstraintSet:
        return self.generated.extend(self.user_constraints)

    def script(self, estimates: Optional[EstimateSet] = None) -> SolverScript:
        script = make_script(self.constraints, self.variables)
        return script.with_assertions(estimates.assertions()) if estimates else script

    def estimates_template(self) -> str:
        return estimates_template(self.graph, self.catalog)

    def stats(self) -> Dict[str, Any]:
        out = graph_stats(self.graph)
        out["variable_count"] = len(self.variables)
        out["node_variable_count"] = len(self.variables.node_variables)
        out["edge_variable_count"] = len(self.variables.edge_variables)
        out["constraint_counts"] = self.constraints.counts()
        out["constraint_count"] = len(self.constraints)
        return out

    def public_targets(self) -> List[Tuple[str, str]]:
        return [(v.node, v.metric) for v in self.variables.node_variables if v.visibility == Visibility.PUBLIC]

    # ─── Workflows ───

    def check(self, estimates: Optional[EstimateSet] = None) -> CheckReport:
        return check_estimates(self.graph, estimates or EstimateSet(), self.user_constraints,
                               self.options, self.catalog, self.backend)

    def bounds(self, target: Target, estimates: Optional[EstimateSet] = None) -> BoundsReport:
        return usage_bounds(self.graph, target, estimates, self.user_constraints,
                            self.options, self.catalog, self.backend)

    def all_bounds(self, targets: Optional[Sequence[Target]] = None,
                   estimates: Optional[EstimateSet] = None) -> List[BoundsReport]:
        chosen = list(targets) if targets else self.public_targets()
        for target in chosen:
            resolve_target(target, self.variables)
        return [self.bounds(t, estimates) for t in chosen]

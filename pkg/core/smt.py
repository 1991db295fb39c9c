"""
iac-analysis SMT
SMT-LIB 2 scripts, solver verdicts and usage-bound queries
"""

import logging
import time
from dataclasses import dataclass, replace
from enum import Enum
from fractions import Fraction
from typing import TYPE_CHECKING, Any, Dict, FrozenSet, List, Optional, Sequence, Tuple, Union

from .config import get_config
from .formula import Sort, smt_number

if TYPE_CHECKING:
    from .constraints import ConstraintSet, VariableSet
    from .solvers import SolverBackend

logger = logging.getLogger("iac.smt")

LOGIC = "QF_LIRA"


class Direction(str, Enum):
    MIN = "min"
    MAX = "max"

    @property
    def command(self) -> str:
        return "maximize" if self == Direction.MAX else "minimize"


# ════════════════════════════════════════════════════════════════════
#  Scripts
# ════════════════════════════════════════════════════════════════════

@dataclass(frozen=True)
class SolverScript:
    declarations: Tuple[Tuple[str, Sort], ...]          # (variable name, sort)
    assertions: Tuple[Tuple[str, str], ...]             # (assertion name, SMT-LIB term)
    objective: Optional[Tuple[Direction, str]] = None
    logic: str = LOGIC

    def __post_init__(self):
        names = [n for n, _ in self.declarations]
        if len(names) != len(set(names)):
            raise ValueError("a symbol is declared twice")
        labels = [n for n, _ in self.assertions]
        if len(labels) != len(set(labels)):
            raise ValueError("assertion names must be unique")

    @property
    def assertion_names(self) -> List[str]:
        return [n for n, _ in self.assertions]

    def sort_of(self, name: str) -> Optional[Sort]:
        for declared, sort in self.declarations:
            if declared == name:
                return sort
        return None

    def with_assertions(self, extra: Sequence[Union[str, Tuple[str, str]]]) -> "SolverScript":
        """Append named assertions; bare terms are named extra0, extra1, ..."""
        added = []
        for index, item in enumerate(extra):
            added.append(item if isinstance(item, tuple) else (f"extra{index}", item))
        return replace(self, assertions=self.assertions + tuple(added))

    def with_objective(self, direction: Direction, name: str) -> "SolverScript":
        if self.sort_of(name) is None:
            raise KeyError(f"|{name}| is not declared in the script")
        return replace(self, objective=(Direction(direction), name))

    def declaration_lines(self) -> List[str]:
        return [f"(declare-const |{name}| {sort.value})" for name, sort in self.declarations]

    def assertion_lines(self) -> List[str]:
        return [f"(assert (! {term} :named {name}))" for name, term in self.assertions]

    def render(self, check_sat: bool = True) -> str:
        lines = [
            "; iac-analysis constraint script",
            "(set-option :produce-unsat-cores true)",
            "(set-option :produce-models true)",
            f"(set-logic {self.logic})",
        ]
        lines += self.declaration_lines()
        lines += self.assertion_lines()
        if self.objective:
            direction, name = self.objective
            lines.append(f"({direction.command} |{name}|)")
        if check_sat:
            lines.append("(check-sat)")
        return "\n".join(lines) + "\n"


def make_script(constraints: "ConstraintSet", variables: "VariableSet",
                objective: Optional[Tuple[Direction, str]] = None) -> SolverScript:
    script = SolverScript(
        declarations=tuple((v.name, v.sort) for v in variables),
        assertions=tuple((c.name, c.to_smtlib()) for c in constraints),
    )
    if objective:
        script = script.with_objective(*objective)
    return script


def emit_smtlib(constraints: "ConstraintSet", variables: "VariableSet",
                objective: Optional[Tuple[Direction, str]] = None) -> str:
    """Deterministic SMT-LIB 2 text of the constraint system"""
    return make_script(constraints, variables, objective).render()


# ════════════════════════════════════════════════════════════════════
#  Results
# ════════════════════════════════════════════════════════════════════

class Status(str, Enum):
    SAT = "sat"
    UNSAT = "unsat"
    UNKNOWN = "unknown"


class BoundKind(str, Enum):
    FINITE = "finite"
    UNBOUNDED = "unbounded"
    UNKNOWN = "unknown"
    INFEASIBLE = "infeasible"


def format_rational(value: Fraction) -> Union[int, str]:
    return value.numerator if value.denominator == 1 else f"{value.numerator}/{value.denominator}"


@dataclass(frozen=True)
class BoundValue:
    kind: BoundKind
    value: Optional[Fraction] = None
    strict: bool = False        # supremum / infimum not attained
    caveat: str = ""

    @classmethod
    def finite(cls, value: Fraction, strict: bool = False, caveat: str = "") -> "BoundValue":
        return cls(BoundKind.FINITE, Fraction(value), strict, caveat)

    @classmethod
    def unbounded(cls, caveat: str = "") -> "BoundValue":
        return cls(BoundKind.UNBOUNDED, caveat=caveat)

    @classmethod
    def unknown(cls, caveat: str = "") -> "BoundValue":
        return cls(BoundKind.UNKNOWN, caveat=caveat)

    @classmethod
    def infeasible(cls) -> "BoundValue":
        return cls(BoundKind.INFEASIBLE)

    @property
    def is_finite(self) -> bool:
        return self.kind == BoundKind.FINITE

    def render(self, direction: Direction = Direction.MAX) -> str:
        if self.kind == BoundKind.FINITE:
            text = str(format_rational(self.value))
            if self.strict:
                text += " (not attained)"
        elif self.kind == BoundKind.UNBOUNDED:
            text = "+inf" if direction == Direction.MAX else "-inf"
        else:
            text = self.kind.value
        return f"{text} [{self.caveat}]" if self.caveat else text

    def to_dict(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {"kind": self.kind.value}
        if self.value is not None:
            out["value"] = format_rational(self.value)
        if self.strict:
            out["strict"] = True
        if self.caveat:
            out["caveat"] = self.caveat
        return out


@dataclass(frozen=True)
class SolverVerdict:
    status: Status
    model: Optional[Dict[str, Fraction]] = None
    core: Optional[FrozenSet[str]] = None
    objective_value: Optional[BoundValue] = None
    reason: str = ""

    @property
    def sat(self) -> bool:
        return self.status == Status.SAT

    @property
    def unsat(self) -> bool:
        return self.status == Status.UNSAT


# ════════════════════════════════════════════════════════════════════
#  Queries
# ════════════════════════════════════════════════════════════════════

def _backend(backend: Optional["SolverBackend"]) -> "SolverBackend":
    if backend is not None:
        return backend
    from .solvers import get_backend
    return get_backend()


def check(script: SolverScript, extra_assertions: Sequence[Union[str, Tuple[str, str]]] = (),
          backend: Optional["SolverBackend"] = None, want_model: bool = True,
          want_core: bool = True) -> SolverVerdict:
    """Satisfiability of the script plus extra named assertions"""
    solver = _backend(backend)
    full = script.with_assertions(extra_assertions) if extra_assertions else script
    full = replace(full, objective=None)
    started = time.perf_counter()
    verdict = solver.check(full, want_model=want_model, want_core=want_core)
    logger.debug(f"{solver.name}: {verdict.status.value} in {time.perf_counter() - started:.3f}s "
                 f"({len(full.assertions)} assertions)")
    return verdict


def bound(script: SolverScript, name: str, direction: Union[Direction, str],
          backend: Optional["SolverBackend"] = None) -> BoundValue:
    """Minimum or maximum of one variable under the script's assertions"""
    direction = Direction(direction)
    solver = _backend(backend)
    if script.sort_of(name) is None:
        raise KeyError(f"|{name}| is not declared in the script")
    if solver.optimizing:
        result = solver.optimize(replace(script, objective=None), name, direction)
        logger.debug(f"{solver.name}: {direction.value} {name} = {result.render(direction)}")
        return result
    return _search_bound(replace(script, objective=None), name, direction, solver)


# ─── Fallback search ───────────────────────────────────────────────

def _search_bound(script: SolverScript, name: str, direction: Direction,
                  solver: "SolverBackend") -> BoundValue:
    """Probe for unboundedness, then bisect; values are searched as y = ±x so both directions maximize"""
    settings = get_config().solver
    sort = script.sort_of(name)
    real = sort == Sort.REAL
    sign = 1 if direction == Direction.MAX else -1
    cap = Fraction(2) ** int(settings.probe_cap_exponent)
    tolerance = Fraction(str(settings.real_tolerance))
    symbol = f"|{name}|"
    op = ">=" if sign == 1 else "<="

    def at_least(y: Fraction) -> Optional[Fraction]:
        """Best feasible y with y >= bound, None when infeasible; raises on unknown"""
        term = f"({op} {symbol} {smt_number(sign * y, real)})"
        verdict = solver.check(script.with_assertions([("probe", term)]), want_model=True, want_core=False)
        if verdict.status == Status.UNKNOWN:
            raise _Inconclusive(verdict.reason)
        if verdict.unsat:
            return None
        return sign * Fraction((verdict.model or {}).get(name, sign * y))

    base = solver.check(script, want_model=True, want_core=False)
    if base.status == Status.UNKNOWN:
        return BoundValue.unknown(base.reason or "solver returned unknown")
    if base.unsat:
        return BoundValue.infeasible()
    low = sign * Fraction((base.model or {}).get(name, 0))

    try:
        step = Fraction(1)
        while True:
            probe = low + step
            if probe > cap:
                return BoundValue.unbounded(caveat=f"probe cap 2^{settings.probe_cap_exponent} reached")
            found = at_least(probe)
            if found is None:
                high = probe
                break
            low = max(found, probe)
            step *= 2
            logger.debug(f"probe {direction.value} {name}: feasible at {sign * low}")

        if not real:
            while high - low > 1:
                mid = Fraction((low + high) // 2)
                found = at_least(mid)
                if found is None:
                    high = mid
                else:
                    low = max(found, mid)
            return BoundValue.finite(sign * low)

        while high - low > tolerance:
            mid = (low + high) / 2
            found = at_least(mid)
            if found is None:
                high = mid
            else:
                low = max(found, mid)
        beyond = _exceeds(solver, script, symbol, sign, low, real)
        if beyond:
            return BoundValue.finite(sign * low, caveat=f"within {settings.real_tolerance}")
        return BoundValue.finite(sign * low)
    except _Inconclusive as e:
        return BoundValue.unknown(str(e) or "solver returned unknown during search")


def _exceeds(solver: "SolverBackend", script: SolverScript, symbol: str,
             sign: int, y: Fraction, real: bool) -> bool:
    op = ">" if sign == 1 else "<"
    term = f"({op} {symbol} {smt_number(sign * y, real)})"
    verdict = solver.check(script.with_assertions([("probe", term)]), want_model=False, want_core=False)
    return verdict.sat


class _Inconclusive(Exception):
    pass

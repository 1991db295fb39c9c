"""
iac-analysis Solver Backends
External SMT-LIB 2 processes (z3, cvc5, any conforming solver) and the
in-process z3 package, behind one interface
"""

import queue
import shutil
import logging
import subprocess
import threading
import time
from abc import ABC, abstractmethod
from fractions import Fraction
from typing import Dict, FrozenSet, List, Optional, Tuple

from .config import get_config
from .errors import SmtSyntaxError, SolverCrashed, SolverNotFound
from .sexpr import Symbol, head, is_numeral, parse_all, parse_rational, symbols_in, to_text
from .smt import BoundValue, Direction, SolverScript, SolverVerdict, Status

logger = logging.getLogger("iac.solvers")

try:
    import z3
    HAS_Z3 = True
except ImportError:
    z3 = None
    HAS_Z3 = False


class SolverBackend(ABC):
    """One solver; every query is independent so backends may be shared between threads"""

    name: str = "solver"
    optimizing: bool = False

    def __init__(self, timeout: Optional[float] = None):
        self.timeout = timeout if timeout is not None else get_config().solver.timeout_seconds

    @abstractmethod
    def check(self, script: SolverScript, want_model: bool = True, want_core: bool = True) -> SolverVerdict:
        ...

    def optimize(self, script: SolverScript, name: str, direction: Direction) -> BoundValue:
        raise NotImplementedError(f"{self.name} cannot optimize")

    def describe(self) -> str:
        kind = "optimizing" if self.optimizing else "check-only"
        return f"{self.name} ({kind})"


# ─── Value parsing ─────────────────────────────────────────────────

def parse_model(response: str) -> Dict[str, Fraction]:
    """((|A.x| 5) (|B.y| (/ 1 2))) → {"A.x": 5, "B.y": 1/2}"""
    model: Dict[str, Fraction] = {}
    for top in parse_all(response):
        if not isinstance(top, list):
            continue
        for pair in top:
            if isinstance(pair, list) and len(pair) == 2 and isinstance(pair[0], Symbol):
                try:
                    model[pair[0].name] = parse_rational(pair[1])
                except ValueError:
                    logger.debug(f"Skipping non-rational model value {to_text(pair[1])}")
    return model


def parse_core(response: str) -> FrozenSet[str]:
    names = set()
    for top in parse_all(response):
        items = top if isinstance(top, list) else [top]
        for item in items:
            if isinstance(item, Symbol):
                names.add(item.name)
    return frozenset(names)


def _eval_objective(expr) -> Fraction:
    if isinstance(expr, Symbol):
        if expr.name == "epsilon":
            return Fraction(0)
        return parse_rational(expr)
    op = head(expr)
    args = [_eval_objective(a) for a in expr[1:]]
    if op == "+":
        return sum(args, Fraction(0))
    if op == "-":
        return -args[0] if len(args) == 1 else args[0] - sum(args[1:], Fraction(0))
    if op == "*":
        out = Fraction(1)
        for a in args:
            out *= a
        return out
    if op == "/" and len(args) == 2:
        return args[0] / args[1]
    if op == "to_real" and len(args) == 1:
        return args[0]
    raise ValueError(f"unexpected objective term {to_text(expr)}")


def parse_objective_value(expr) -> BoundValue:
    """Optimum as reported by z3: a rational, oo, or a value shifted by epsilon"""
    names = {s.name for s in symbols_in(expr) if not is_numeral(s)}
    if "oo" in names:
        return BoundValue.unbounded()
    try:
        value = _eval_objective(expr)
    except (ValueError, ZeroDivisionError, IndexError) as e:
        return BoundValue.unknown(f"unreadable objective: {e}")
    return BoundValue.finite(value, strict="epsilon" in names)


# ════════════════════════════════════════════════════════════════════
#  External process
# ════════════════════════════════════════════════════════════════════

class _Session:
    """An interactive solver process; stdout is drained by a reader thread into a queue"""

    def __init__(self, command: List[str]):
        self.command = command
        self.lines: "queue.Queue[Optional[str]]" = queue.Queue()
        self.transcript: List[str] = []
        try:
            self.proc = subprocess.Popen(
                command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.STDOUT,
                text=True,
                bufsize=1,
            )
        except OSError as e:
            raise SolverNotFound(f"cannot start solver {command[0]}: {e}") from e
        self.reader = threading.Thread(target=self._drain, daemon=True)
        self.reader.start()

    def _drain(self):
        for line in self.proc.stdout:
            self.lines.put(line)
        self.lines.put(None)

    def send(self, text: str):
        try:
            self.proc.stdin.write(text if text.endswith("\n") else text + "\n")
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError):
            pass

    def read_response(self, deadline: float) -> Optional[str]:
        """One balanced response, or None on timeout"""
        buf: List[str] = []
        while True:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                return None
            try:
                line = self.lines.get(timeout=remaining)
            except queue.Empty:
                return None
            if line is None:
                self._crashed("".join(buf))
            self.transcript.append(line)
            if not line.strip() and not buf:
                continue
            buf.append(line)
            text = "".join(buf).strip()
            try:
                if parse_all(text):
                    return text
            except SmtSyntaxError:
                continue

    def _crashed(self, partial: str):
        code = self.proc.wait(timeout=5)
        output = "".join(self.transcript) or partial
        raise SolverCrashed(
            f"solver {self.command[0]} exited with code {code}: {output.strip()[:300]}",
            exit_code=code,
            output=output,
        )

    def close(self):
        self.send("(exit)")
        try:
            self.proc.stdin.close()
        except OSError:
            pass
        try:
            self.proc.wait(timeout=1)
        except subprocess.TimeoutExpired:
            self.proc.kill()
            self.proc.wait()


class ProcessBackend(SolverBackend):
    """Any SMT-LIB 2 solver speaking stdin/stdout: check, model, unsat core"""

    def __init__(self, command: List[str], name: Optional[str] = None, timeout: Optional[float] = None):
        super().__init__(timeout)
        self.command = list(command)
        self.name = name or self.command[0]

    def _status(self, session: _Session, deadline: float) -> Optional[Status]:
        response = session.read_response(deadline)
        if response is None:
            return None
        if response.startswith("(error"):
            raise SolverCrashed(f"{self.name} rejected the script: {response}", output=response)
        try:
            return Status(response)
        except ValueError:
            raise SolverCrashed(f"{self.name}: unexpected response {response!r}", output=response)

    def _run(self, script: SolverScript, want_model: bool, want_core: bool,
             objective: bool = False) -> Tuple[SolverVerdict, Optional[str]]:
        logger.debug(f"{self.name} script:\n{script.render()}")
        session = _Session(self.command)
        deadline = time.monotonic() + self.timeout
        try:
            session.send(script.render())
            status = self._status(session, deadline)
            if status is None:
                return SolverVerdict(Status.UNKNOWN, reason=f"timeout after {self.timeout}s"), None
            model = core = extra = None
            if status == Status.SAT and objective:
                session.send("(get-objectives)")
                extra = session.read_response(deadline)
            if status == Status.SAT and want_model and script.declarations:
                symbols = " ".join(f"|{name}|" for name, _ in script.declarations)
                session.send(f"(get-value ({symbols}))")
                response = session.read_response(deadline)
                model = parse_model(response) if response else None
            if status == Status.UNSAT and want_core:
                session.send("(get-unsat-core)")
                response = session.read_response(deadline)
                core = parse_core(response) if response else None
            return SolverVerdict(status, model=model, core=core), extra
        finally:
            session.close()

    def check(self, script: SolverScript, want_model: bool = True, want_core: bool = True) -> SolverVerdict:
        verdict, _ = self._run(script, want_model, want_core)
        return verdict


class OptimizingProcessBackend(ProcessBackend):
    """z3 as a process: adds (maximize)/(minimize) with (get-objectives)"""

    optimizing = True

    def optimize(self, script: SolverScript, name: str, direction: Direction) -> BoundValue:
        verdict, response = self._run(script.with_objective(direction, name), False, False, objective=True)
        if verdict.status == Status.UNSAT:
            return BoundValue.infeasible()
        if verdict.status == Status.UNKNOWN or not response:
            return BoundValue.unknown(verdict.reason or "solver returned unknown")
        # (objectives (|X.m| 10))
        for top in parse_all(response):
            if head(top) == "objectives" and len(top) > 1 and isinstance(top[1], list) and len(top[1]) == 2:
                return parse_objective_value(top[1][1])
        return BoundValue.unknown(f"unreadable objectives: {response}")


# ════════════════════════════════════════════════════════════════════
#  In-process z3
# ════════════════════════════════════════════════════════════════════

class Z3Backend(SolverBackend):
    """The z3-solver package fed the same SMT-LIB text; one fresh context per query"""

    name = "z3py"
    optimizing = True

    def __init__(self, timeout: Optional[float] = None):
        if not HAS_Z3:
            raise SolverNotFound("the z3-solver package is not installed")
        super().__init__(timeout)

    def _parse(self, script: SolverScript, ctx) -> list:
        decls = "\n".join(script.declaration_lines())
        body = "\n".join(f"(assert {term})" for _, term in script.assertions)
        try:
            parsed = list(z3.parse_smt2_string(decls + "\n" + body, ctx=ctx))
            if len(parsed) == len(script.assertions):
                return parsed
            parsed = []
            for _, term in script.assertions:
                parsed.extend(z3.parse_smt2_string(f"{decls}\n(assert {term})", ctx=ctx))
            return parsed
        except z3.Z3Exception as e:
            raise SolverCrashed(f"z3 rejected the script: {e}") from e

    def _const(self, name: str, sort, ctx):
        return z3.Real(name, ctx) if sort.value == "Real" else z3.Int(name, ctx)

    @staticmethod
    def _value(ref) -> Optional[Fraction]:
        if z3.is_int_value(ref):
            return Fraction(ref.as_long())
        if z3.is_rational_value(ref):
            return Fraction(ref.numerator_as_long(), ref.denominator_as_long())
        return None

    def check(self, script: SolverScript, want_model: bool = True, want_core: bool = True) -> SolverVerdict:
        ctx = z3.Context()
        solver = z3.Solver(ctx=ctx)
        solver.set("timeout", int(self.timeout * 1000))
        for (name, _), expr in zip(script.assertions, self._parse(script, ctx)):
            if want_core:
                solver.assert_and_track(expr, z3.Bool(name, ctx))
            else:
                solver.add(expr)
        result = solver.check()
        if result == z3.sat:
            model = None
            if want_model:
                m = solver.model()
                model = {}
                for name, sort in script.declarations:
                    value = self._value(m.eval(self._const(name, sort, ctx), model_completion=True))
                    if value is not None:
                        model[name] = value
            return SolverVerdict(Status.SAT, model=model)
        if result == z3.unsat:
            core = frozenset(str(c) for c in solver.unsat_core()) if want_core else None
            return SolverVerdict(Status.UNSAT, core=core)
        return SolverVerdict(Status.UNKNOWN, reason=solver.reason_unknown())

    def optimize(self, script: SolverScript, name: str, direction: Direction) -> BoundValue:
        ctx = z3.Context()
        opt = z3.Optimize(ctx=ctx)
        opt.set("timeout", int(self.timeout * 1000))
        for expr in self._parse(script, ctx):
            opt.add(expr)
        target = self._const(name, script.sort_of(name), ctx)
        handle = opt.maximize(target) if direction == Direction.MAX else opt.minimize(target)
        result = opt.check()
        if result == z3.unsat:
            return BoundValue.infeasible()
        if result != z3.sat:
            return BoundValue.unknown(opt.reason_unknown())
        value = handle.upper() if direction == Direction.MAX else handle.lower()
        return parse_objective_value(parse_all(value.sexpr())[0])


# ════════════════════════════════════════════════════════════════════
#  Discovery
# ════════════════════════════════════════════════════════════════════

def _banner(path: str) -> str:
    try:
        result = subprocess.run([path, "--version"], capture_output=True, text=True, timeout=10)
    except (OSError, subprocess.TimeoutExpired) as e:
        raise SolverNotFound(f"cannot run solver {path}: {e}") from e
    return (result.stdout or result.stderr or "").strip()


def backend_for_executable(path: str, timeout: Optional[float] = None) -> SolverBackend:
    banner = _banner(path)
    logger.debug(f"Solver {path}: {banner.splitlines()[0] if banner else '(no banner)'}")
    if "z3" in banner.lower():
        return OptimizingProcessBackend([path, "-in", "-smt2"], name="z3", timeout=timeout)
    if "cvc5" in banner.lower():
        return ProcessBackend([path, "--lang", "smt2", "--incremental"], name="cvc5", timeout=timeout)
    return ProcessBackend([path], timeout=timeout)


def get_backend(solver_path: Optional[str] = None, backend: Optional[str] = None,
                timeout: Optional[float] = None) -> SolverBackend:
    """Explicit path → z3 on PATH → cvc5 on PATH → in-process z3"""
    settings = get_config().solver
    path = solver_path or settings.path
    kind = backend or settings.backend or "auto"

    if kind == "z3py":
        return Z3Backend(timeout)
    if path:
        return backend_for_executable(path, timeout)
    for candidate in ("z3", "cvc5"):
        found = shutil.which(candidate)
        if found:
            return backend_for_executable(found, timeout)
    if kind == "auto" and HAS_Z3:
        return Z3Backend(timeout)
    raise SolverNotFound(
        "no SMT solver found: install z3 or cvc5, set IAC_ANALYSIS_SOLVER, or pip install z3-solver"
    )


def solver_available() -> bool:
    try:
        get_backend()
    except SolverNotFound:
        return False
    return True

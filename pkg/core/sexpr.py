"""
iac-analysis S-expressions
Minimal SMT-LIB 2 reader shared by user-constraint parsing and solver output parsing
"""

from dataclasses import dataclass
from fractions import Fraction
from typing import Any, List, Union

from .errors import SmtSyntaxError


@dataclass(frozen=True)
class Symbol:
    name: str
    quoted: bool = False

    def __str__(self) -> str:
        return f"|{self.name}|" if self.quoted else self.name


@dataclass(frozen=True)
class StringLit:
    value: str

    def __str__(self) -> str:
        return '"' + self.value.replace('"', '""') + '"'


SExpr = Union[Symbol, StringLit, List[Any]]


def tokenize(text: str) -> List[Union[str, Symbol, StringLit]]:
    tokens: List[Union[str, Symbol, StringLit]] = []
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
        elif ch == ";":
            while i < n and text[i] != "\n":
                i += 1
        elif ch in "()":
            tokens.append(ch)
            i += 1
        elif ch == "|":
            end = text.find("|", i + 1)
            if end < 0:
                raise SmtSyntaxError("unterminated |quoted symbol|")
            tokens.append(Symbol(text[i + 1:end], quoted=True))
            i = end + 1
        elif ch == '"':
            j = i + 1
            buf = []
            while True:
                if j >= n:
                    raise SmtSyntaxError("unterminated string literal")
                if text[j] == '"':
                    if j + 1 < n and text[j + 1] == '"':
                        buf.append('"')
                        j += 2
                        continue
                    break
                buf.append(text[j])
                j += 1
            tokens.append(StringLit("".join(buf)))
            i = j + 1
        else:
            j = i
            while j < n and not text[j].isspace() and text[j] not in '();|"':
                j += 1
            tokens.append(Symbol(text[i:j]))
            i = j
    return tokens


def parse_all(text: str) -> List[SExpr]:
    """Parse every top-level s-expression in text"""
    stack: List[List[Any]] = [[]]
    for token in tokenize(text):
        if token == "(":
            stack.append([])
        elif token == ")":
            if len(stack) == 1:
                raise SmtSyntaxError("unbalanced ')'")
            done = stack.pop()
            stack[-1].append(done)
        else:
            stack[-1].append(token)
    if len(stack) != 1:
        raise SmtSyntaxError("unbalanced '(': missing closing parenthesis")
    return stack[0]


def is_balanced(text: str) -> bool:
    try:
        parse_all(text)
    except SmtSyntaxError:
        return False
    return True


def to_text(expr: SExpr) -> str:
    if isinstance(expr, list):
        return "(" + " ".join(to_text(e) for e in expr) + ")"
    return str(expr)


def head(expr: SExpr) -> str:
    if isinstance(expr, list) and expr and isinstance(expr[0], Symbol):
        return expr[0].name
    return ""


def is_numeral(atom: Any) -> bool:
    if not isinstance(atom, Symbol) or atom.quoted:
        return False
    text = atom.name.lstrip("-")
    if not text:
        return False
    if text.replace(".", "", 1).isdigit():
        return True
    return False


def parse_rational(expr: SExpr) -> Fraction:
    """Numeral, decimal, (- x), (/ p q) or a negative literal as an exact rational"""
    if isinstance(expr, Symbol) and is_numeral(expr):
        return Fraction(expr.name)
    if isinstance(expr, list):
        op = head(expr)
        if op == "-" and len(expr) == 2:
            return -parse_rational(expr[1])
        if op == "/" and len(expr) == 3:
            return parse_rational(expr[1]) / parse_rational(expr[2])
        if op == "to_real" and len(expr) == 2:
            return parse_rational(expr[1])
    raise ValueError(f"not a rational literal: {to_text(expr)}")


PRECEDENCE = {
    "and": 1, "or": 1, "=>": 1,
    "=": 2, "<=": 2, ">=": 2, "<": 2, ">": 2,
    "+": 3, "-": 3,
    "*": 4, "/": 4,
}
INFIX_OPS = set(PRECEDENCE)


def _needs_parens(child: SExpr, parent_op: str) -> bool:
    op = head(child)
    if op not in PRECEDENCE or len(child) <= 2:
        return False
    if PRECEDENCE[op] != PRECEDENCE[parent_op]:
        return PRECEDENCE[op] < PRECEDENCE[parent_op]
    return op != parent_op or op in ("-", "/")


def render_infix(expr: SExpr) -> str:
    """Human-readable infix rendering of a term"""
    if not isinstance(expr, list):
        if isinstance(expr, Symbol):
            return expr.name
        return str(expr)
    if not expr:
        return "()"
    op = head(expr)
    args = expr[1:]
    if op == "-" and len(args) == 1:
        inner = args[0]
        if isinstance(inner, Symbol) and is_numeral(inner):
            return f"-{inner.name}"
        return f"-({render_infix(inner)})"
    if op == "!" and args:
        return render_infix(args[0])
    if op == "to_real" and len(args) == 1:
        return render_infix(args[0])
    if op in INFIX_OPS and len(args) >= 2:
        parts = []
        for arg in args:
            text = render_infix(arg)
            if _needs_parens(arg, op):
                text = f"({text})"
            parts.append(text)
        return f" {op} ".join(parts)
    return f"{op}(" + ", ".join(render_infix(a) for a in args) + ")"


def symbols_in(expr: SExpr) -> List[Symbol]:
    out: List[Symbol] = []
    if isinstance(expr, list):
        for item in expr:
            out.extend(symbols_in(item))
    elif isinstance(expr, Symbol):
        out.append(expr)
    return out

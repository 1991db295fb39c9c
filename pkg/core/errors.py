"""
iac-analysis errors
Every failure the tool reports derives from IacAnalysisError
"""

from typing import List, Optional, Sequence


class IacAnalysisError(Exception):
    """Base class for all iac-analysis errors"""
    pass


# ─── Template ──────────────────────────────────────────────────────

class ParseError(IacAnalysisError):
    """Malformed YAML/JSON"""
    pass


class SchemaError(IacAnalysisError):
    """Well-formed document that is not a usable CloudFormation template"""
    pass


# ─── Catalog ───────────────────────────────────────────────────────

class CatalogError(IacAnalysisError):
    """Broken catalog file or rule schema"""
    pass


class NotSupported(IacAnalysisError):
    def __init__(self, type_name: str, classification: str):
        self.type_name = type_name
        self.classification = classification
        super().__init__(f"{type_name} is not a supported resource type ({classification})")


# ─── Constraints ───────────────────────────────────────────────────

class RuleInstantiationError(IacAnalysisError):
    """A catalog rule names a metric the node does not have"""
    pass


class SmtSyntaxError(IacAnalysisError):
    pass


class UnknownSymbol(IacAnalysisError):
    def __init__(self, symbol: str, suggestion: Optional[str] = None):
        self.symbol = symbol
        self.suggestion = suggestion
        hint = f" (did you mean |{suggestion}|?)" if suggestion else ""
        super().__init__(f"unknown variable |{symbol}|{hint}")


# ─── Solver ────────────────────────────────────────────────────────

class SolverError(IacAnalysisError):
    pass


class SolverNotFound(SolverError):
    pass


class SolverCrashed(SolverError):
    def __init__(self, message: str, exit_code: Optional[int] = None, output: str = ""):
        self.exit_code = exit_code
        self.output = output
        super().__init__(message)


# ─── Analysis ──────────────────────────────────────────────────────

class EstimateError(IacAnalysisError):
    pass


class UnknownEstimateKey(EstimateError):
    def __init__(self, node: str, metric: Optional[str], valid_metrics: Sequence[str]):
        self.node = node
        self.metric = metric
        self.valid_metrics: List[str] = list(valid_metrics)
        if metric is None:
            what = f"unknown resource '{node}' in estimates"
            listing = "resources with public metrics"
        else:
            what = f"'{node}.{metric}' is not a public metric"
            listing = f"valid metrics for {node}"
        super().__init__(f"{what}; {listing}: {', '.join(self.valid_metrics) or '(none)'}")


class UnknownTargetKey(EstimateError):
    def __init__(self, target: str, valid: Sequence[str] = ()):
        self.target = target
        self.valid = list(valid)
        suffix = f"; valid metrics: {', '.join(self.valid)}" if self.valid else ""
        super().__init__(f"unknown bounds target '{target}'{suffix}")

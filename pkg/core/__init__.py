"""
╔═══════════════════════════════════════════════════════════════════╗
║  iac-analysis Core 1.0.0                                            ║
╚═══════════════════════════════════════════════════════════════════╝
"""

__version__ = "1.0.0"

from .config import get_config, IacConfig
from .catalog import Catalog, get_catalog, load_catalog
from .template import TemplateModel, load_template, parse_template, resolve_references
from .graph import ResourceGraph, build_graph, graph_stats
from .constraints import ConstraintSet, VariableSet, build_constraint_system, parse_user_constraints
from .analysis import IacAnalyzer, Verdict, check_estimates, usage_bounds
from .solvers import get_backend

__all__ = [
    "get_config", "IacConfig",
    "Catalog", "get_catalog", "load_catalog",
    "TemplateModel", "load_template", "parse_template", "resolve_references",
    "ResourceGraph", "build_graph", "graph_stats",
    "ConstraintSet", "VariableSet", "build_constraint_system", "parse_user_constraints",
    "IacAnalyzer", "Verdict", "check_estimates", "usage_bounds",
    "get_backend",
]

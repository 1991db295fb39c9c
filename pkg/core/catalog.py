"""
iac-analysis Resource Catalog
Resource-type semantics: classification, metric sets, edge rules and
constraint rules, loaded from config/catalog.yaml
"""

import re
import logging
import threading
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Dict, FrozenSet, List, Mapping, Optional, Tuple, Union

import yaml

from .config import CONFIG_DIR, get_config
from .errors import CatalogError, NotSupported
from .formula import ConstraintCategory, Sort, Visibility
from .rules import RULE_CATEGORIES, RuleSchema
from .template import IntrinsicRef, get_path

logger = logging.getLogger("iac.catalog")

BUNDLED_CATALOG = CONFIG_DIR / "catalog.yaml"
METRIC_NAME_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")
ANY_ROUTE = "ANY"


class Classification(str, Enum):
    SUPPORTED = "Supported"
    NON_DATAFLOW = "NonDataflow"
    UNKNOWN = "Unknown"


class EdgeKind(str, Enum):
    OUTBOUND = "outbound"
    BINDING = "binding"
    VIA = "via"


# ════════════════════════════════════════════════════════════════════
#  Descriptors
# ════════════════════════════════════════════════════════════════════

@dataclass(frozen=True)
class MetricDescriptor:
    name: str
    sort: Sort = Sort.INT
    visibility: Visibility = Visibility.PUBLIC

    def to_dict(self) -> Dict[str, str]:
        return {"name": self.name, "sort": self.sort.value, "visibility": self.visibility.value}


def _normalise(value: Any) -> Any:
    if isinstance(value, str) and value.lower() in ("true", "false"):
        return value.lower() == "true"
    return value


def _matches(properties: Mapping[str, Any], path: str, expected: Any) -> bool:
    actual = get_path(properties, path)
    if expected == "*":
        return actual is not None
    if actual is None or isinstance(actual, IntrinsicRef):
        return False
    return _normalise(actual) == _normalise(expected)


@dataclass(frozen=True)
class ConstraintRule:
    """One constraint template of a resource type"""
    category: ConstraintCategory
    schema: RuleSchema
    when: Tuple[Tuple[str, Any], ...] = ()
    unless: Tuple[Tuple[str, Any], ...] = ()

    @property
    def formula(self) -> str:
        return self.schema.text

    def applies_to(self, properties: Mapping[str, Any]) -> bool:
        if not all(_matches(properties, p, v) for p, v in self.when):
            return False
        if self.unless and all(_matches(properties, p, v) for p, v in self.unless):
            return False
        return True

    @classmethod
    def from_dict(cls, data: Dict[str, Any], type_name: str) -> "ConstraintRule":
        if not isinstance(data, dict):
            raise CatalogError(f"{type_name}: rules must be mappings")
        try:
            category = ConstraintCategory(data.get("category", ""))
        except ValueError:
            raise CatalogError(f"{type_name}: unknown rule category {data.get('category')!r}")
        if category not in RULE_CATEGORIES:
            raise CatalogError(f"{type_name}: '{category.value}' rules cannot appear in the catalog")
        schema = RuleSchema.parse(data.get("formula"))
        schema.check_shape(category)
        when = data.get("when") or {}
        unless = data.get("unless") or {}
        if not isinstance(when, dict) or not isinstance(unless, dict):
            raise CatalogError(f"{type_name}: when/unless must be mappings")
        return cls(
            category=category,
            schema=schema,
            when=tuple(sorted((str(k), v) for k, v in when.items())),
            unless=tuple(sorted((str(k), v) for k, v in unless.items())),
        )

    def to_dict(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {"category": self.category.value, "formula": self.formula}
        if self.when:
            out["when"] = dict(self.when)
        if self.unless:
            out["unless"] = dict(self.unless)
        return out


@dataclass(frozen=True)
class EdgeRule:
    """How a resource's configuration turns into dataflow edges"""
    kind: EdgeKind
    paths: Tuple[str, ...] = ()
    label: Optional[str] = None
    source: Optional[str] = None
    destination: Optional[str] = None
    resource: Optional[str] = None
    link: Optional[str] = None
    label_from: Optional[str] = None
    target_types: Tuple[str, ...] = ()      # outbound only; empty means any type

    @classmethod
    def from_dict(cls, data: Dict[str, Any], type_name: str) -> "EdgeRule":
        if not isinstance(data, dict):
            raise CatalogError(f"{type_name}: edge rules must be mappings")
        if "outbound" in data:
            paths = data["outbound"]
            if isinstance(paths, str):
                paths = [paths]
            targets = data.get("to") or ()
            if isinstance(targets, str):
                targets = [targets]
            return cls(
                EdgeKind.OUTBOUND,
                paths=tuple(str(p) for p in paths),
                label=data.get("label"),
                target_types=tuple(str(t) for t in targets),
            )
        if "binding" in data:
            binding = data["binding"] or {}
            if not binding.get("source") or not binding.get("destination"):
                raise CatalogError(f"{type_name}: binding needs source and destination")
            return cls(EdgeKind.BINDING, source=binding["source"], destination=binding["destination"])
        if "via" in data:
            if not data.get("link") or not data.get("targets"):
                raise CatalogError(f"{type_name}: via needs link and targets")
            return cls(
                EdgeKind.VIA,
                resource=data["via"],
                link=data["link"],
                paths=tuple(str(p) for p in data["targets"]),
                label_from=data.get("label_from"),
            )
        raise CatalogError(f"{type_name}: edge rule needs one of outbound, binding, via")


GENERIC_OUTBOUND = EdgeRule(EdgeKind.OUTBOUND, paths=("*",))


@dataclass(frozen=True)
class ResourceTypeDescriptor:
    type_name: str
    classification: Classification
    public_metrics: Tuple[MetricDescriptor, ...] = ()
    private_metrics: Tuple[MetricDescriptor, ...] = ()
    template_rules: Tuple[ConstraintRule, ...] = ()
    edge_rules: Tuple[EdgeRule, ...] = ()
    incoming: str = "sum"           # sum | none

    @property
    def metrics(self) -> Tuple[MetricDescriptor, ...]:
        return self.public_metrics + self.private_metrics

    def metric(self, name: str) -> Optional[MetricDescriptor]:
        for m in self.metrics:
            if m.name == name:
                return m
        return None

    @classmethod
    def from_dict(cls, type_name: str, data: Dict[str, Any]) -> "ResourceTypeDescriptor":
        if not isinstance(data, dict):
            raise CatalogError(f"{type_name}: entry must be a mapping")
        metrics = data.get("metrics") or {}
        public = _metric_set(type_name, metrics.get("public") or {}, Visibility.PUBLIC)
        private = _metric_set(type_name, metrics.get("private") or {}, Visibility.PRIVATE)
        overlap = {m.name for m in public} & {m.name for m in private}
        if overlap:
            raise CatalogError(f"{type_name}: metrics both public and private: {', '.join(sorted(overlap))}")
        if not public and not private:
            raise CatalogError(f"{type_name}: a supported type needs at least one metric")

        incoming = data.get("incoming", "sum")
        if incoming not in ("sum", "none"):
            raise CatalogError(f"{type_name}: incoming must be 'sum' or 'none'")

        descriptor = cls(
            type_name=type_name,
            classification=Classification.SUPPORTED,
            public_metrics=public,
            private_metrics=private,
            template_rules=tuple(ConstraintRule.from_dict(r, type_name) for r in data.get("rules") or []),
            edge_rules=tuple(EdgeRule.from_dict(e, type_name) for e in data.get("edges") or []),
            incoming=incoming,
        )
        descriptor._check_rule_metrics()
        return descriptor

    def _check_rule_metrics(self):
        public = {m.name for m in self.public_metrics}
        for rule in self.template_rules:
            for name in rule.schema.refs("self"):
                if self.metric(name) is None:
                    raise CatalogError(f"{self.type_name}: rule '{rule.formula}' uses unknown metric {name}")
            if rule.category == ConstraintCategory.INCOMING and rule.schema.incoming_metric not in public:
                raise CatalogError(f"{self.type_name}: incoming rule '{rule.formula}' must bind a public metric")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "type": self.type_name,
            "classification": self.classification.value,
            "public_metrics": [m.to_dict() for m in self.public_metrics],
            "private_metrics": [m.to_dict() for m in self.private_metrics],
            "rules": [r.to_dict() for r in self.template_rules],
        }


def _metric_set(type_name: str, data: Any, visibility: Visibility) -> Tuple[MetricDescriptor, ...]:
    if isinstance(data, list):
        data = {name: "Int" for name in data}
    if not isinstance(data, dict):
        raise CatalogError(f"{type_name}: {visibility.value} metrics must be a mapping of name to sort")
    out = []
    for name, sort in data.items():
        if not isinstance(name, str) or not METRIC_NAME_RE.match(name):
            raise CatalogError(f"{type_name}: invalid metric name {name!r}")
        try:
            out.append(MetricDescriptor(name, Sort(sort or "Int"), visibility))
        except ValueError:
            raise CatalogError(f"{type_name}.{name}: sort must be Int or Real, got {sort!r}")
    return tuple(out)


# ════════════════════════════════════════════════════════════════════
#  Catalog
# ════════════════════════════════════════════════════════════════════

@dataclass(frozen=True)
class Catalog:
    descriptors: Dict[str, ResourceTypeDescriptor] = field(default_factory=dict)
    non_dataflow: FrozenSet[str] = frozenset()

    def classify(self, type_name: str) -> Classification:
        if type_name in self.descriptors:
            return Classification.SUPPORTED
        if type_name in self.non_dataflow:
            return Classification.NON_DATAFLOW
        return Classification.UNKNOWN

    def descriptor(self, type_name: str) -> ResourceTypeDescriptor:
        """The descriptor for any type name; NonDataflow and Unknown ones are empty"""
        found = self.descriptors.get(type_name)
        if found is not None:
            return found
        classification = self.classify(type_name)
        edges = (GENERIC_OUTBOUND,) if classification == Classification.UNKNOWN else ()
        return ResourceTypeDescriptor(type_name, classification, edge_rules=edges)

    def _supported(self, type_name: str) -> ResourceTypeDescriptor:
        found = self.descriptors.get(type_name)
        if found is None:
            raise NotSupported(type_name, self.classify(type_name).value)
        return found

    def metrics_of(self, type_name: str) -> Tuple[Tuple[MetricDescriptor, ...], Tuple[MetricDescriptor, ...]]:
        d = self._supported(type_name)
        return d.public_metrics, d.private_metrics

    def rules_for(self, type_name: str, properties: Mapping[str, Any]) -> List[ConstraintRule]:
        return [r for r in self._supported(type_name).template_rules if r.applies_to(properties)]

    def edge_rules_for(self, type_name: str) -> Tuple[EdgeRule, ...]:
        return self.descriptor(type_name).edge_rules

    @property
    def supported_types(self) -> List[str]:
        return sorted(self.descriptors)

    def via_types(self) -> FrozenSet[str]:
        return frozenset(
            e.resource for d in self.descriptors.values() for e in d.edge_rules if e.kind == EdgeKind.VIA
        )


def _read_catalog_file(path: Path) -> Dict[str, Any]:
    try:
        data = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except (OSError, UnicodeDecodeError) as e:
        raise CatalogError(f"cannot read catalog {path}: {e}") from e
    except yaml.YAMLError as e:
        raise CatalogError(f"invalid catalog YAML {path}: {e}") from e
    if not isinstance(data, dict):
        raise CatalogError(f"catalog {path} must be a mapping")
    return data


def load_catalog(extra: Optional[Union[str, Path]] = None,
                 bundled: Path = BUNDLED_CATALOG) -> Catalog:
    """Load the bundled catalog, optionally merging a user catalog over it"""
    raw_types: Dict[str, Any] = {}
    non_dataflow: set = set()
    sources = [bundled] + ([Path(extra)] if extra else [])

    for source in sources:
        data = _read_catalog_file(source)
        types = data.get("types") or {}
        if not isinstance(types, dict):
            raise CatalogError(f"{source}: 'types' must be a mapping")
        raw_types.update(types)
        names = data.get("non_dataflow") or []
        if not isinstance(names, list):
            raise CatalogError(f"{source}: 'non_dataflow' must be a list")
        non_dataflow.update(str(n) for n in names)
        logger.debug(f"Catalog source {source}: {len(types)} types, {len(names)} non-dataflow")

    descriptors = {
        name: ResourceTypeDescriptor.from_dict(name, body) for name, body in sorted(raw_types.items())
    }
    clash = non_dataflow & set(descriptors)
    if clash:
        # a user catalog that promotes a type to Supported wins over the bundled list
        non_dataflow -= clash
    return Catalog(descriptors=descriptors, non_dataflow=frozenset(non_dataflow))


_catalog: Optional[Catalog] = None
_catalog_lock = threading.Lock()


def get_catalog() -> Catalog:
    """Get catalog (singleton, honours catalog.path from config)"""
    global _catalog
    with _catalog_lock:
        if _catalog is None:
            _catalog = load_catalog(get_config().catalog.path)
        return _catalog


def reset_catalog():
    global _catalog
    _catalog = None

"""
iac-analysis Template Model
CloudFormation (YAML/JSON) parsing, short-form tag normalisation and
intrinsic reference resolution
"""

import json
import re
import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Tuple, Union

import yaml

from .errors import ParseError, SchemaError

logger = logging.getLogger("iac.template")

PropertyPath = Tuple[Union[str, int], ...]
ReferenceMap = Dict[Tuple[str, PropertyPath], str]

TYPE_NAME_RE = re.compile(r"^[A-Za-z0-9]+(::[A-Za-z0-9_@-]+)+$")
SUB_PLACEHOLDER_RE = re.compile(r"\$\{([^}!][^}]*)\}")


class TemplateFormat(str, Enum):
    YAML = "yaml"
    JSON = "json"


class IntrinsicKind(str, Enum):
    REF = "Ref"
    GETATT = "GetAtt"
    SUB = "Sub"
    JOIN = "Join"
    OTHER = "Other"


@dataclass(frozen=True)
class IntrinsicRef:
    """A classified intrinsic leaf: Resolved(target) or Opaque (target None)"""
    kind: IntrinsicKind
    function: str                  # long-form key, e.g. "Fn::GetAtt"
    args: Any
    target: Optional[str] = None

    @property
    def resolved(self) -> bool:
        return self.target is not None

    def to_long_form(self) -> Dict[str, Any]:
        return {self.function: _to_plain(self.args)}


@dataclass(frozen=True)
class ResourceDecl:
    logical_id: str
    type_name: str
    properties: Dict[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class ParameterDecl:
    name: str
    type: Optional[str] = None
    default: Any = None


@dataclass(frozen=True)
class TemplateModel:
    resources: Dict[str, ResourceDecl]
    parameters: Dict[str, ParameterDecl]
    raw_format: TemplateFormat

    def resource(self, logical_id: str) -> Optional[ResourceDecl]:
        return self.resources.get(logical_id)

    def of_type(self, type_name: str) -> List[ResourceDecl]:
        return sorted(
            (r for r in self.resources.values() if r.type_name == type_name),
            key=lambda r: r.logical_id,
        )


# ════════════════════════════════════════════════════════════════════
#  YAML loader with CloudFormation tags
# ════════════════════════════════════════════════════════════════════

class DuplicateKeyError(ValueError):
    pass


class CfnLoader(yaml.SafeLoader):
    """SafeLoader that keeps timestamps as strings and rejects duplicate keys"""

    def construct_mapping(self, node, deep=False):
        seen = set()
        for key_node, _ in node.value:
            key = self.construct_object(key_node, deep=deep)
            if isinstance(key, (str, int, float, bool)) and key in seen:
                raise DuplicateKeyError(
                    f"duplicate key '{key}' at line {key_node.start_mark.line + 1}"
                )
            seen.add(key)
        return super().construct_mapping(node, deep=deep)


CfnLoader.yaml_implicit_resolvers = {
    first: [(tag, rx) for tag, rx in resolvers if tag != "tag:yaml.org,2002:timestamp"]
    for first, resolvers in yaml.SafeLoader.yaml_implicit_resolvers.items()
}


def _construct_node(loader: CfnLoader, node):
    if isinstance(node, yaml.ScalarNode):
        return loader.construct_scalar(node)
    if isinstance(node, yaml.SequenceNode):
        return loader.construct_sequence(node, deep=True)
    return loader.construct_mapping(node, deep=True)


def _construct_cfn_tag(loader: CfnLoader, tag_suffix: str, node):
    value = _construct_node(loader, node)
    if tag_suffix == "Ref":
        return {"Ref": value}
    if tag_suffix == "Condition":
        return {"Condition": value}
    if tag_suffix == "GetAtt" and isinstance(value, str):
        head, _, attr = value.partition(".")
        return {"Fn::GetAtt": [head, attr]}
    return {f"Fn::{tag_suffix}": value}


CfnLoader.add_multi_constructor("!", _construct_cfn_tag)


# ════════════════════════════════════════════════════════════════════
#  Parsing
# ════════════════════════════════════════════════════════════════════

def detect_format(source: str) -> TemplateFormat:
    stripped = source.lstrip()
    return TemplateFormat.JSON if stripped.startswith("{") else TemplateFormat.YAML


def _json_pairs(pairs):
    out = {}
    for k, v in pairs:
        if k in out:
            raise DuplicateKeyError(f"duplicate key '{k}'")
        out[k] = v
    return out


def _load_document(source: str, fmt: TemplateFormat) -> Any:
    try:
        if fmt == TemplateFormat.JSON:
            return json.loads(source, object_pairs_hook=_json_pairs)
        return yaml.load(source, Loader=CfnLoader)
    except DuplicateKeyError as e:
        raise SchemaError(str(e)) from e
    except json.JSONDecodeError as e:
        raise ParseError(f"invalid JSON at line {e.lineno}, column {e.colno}: {e.msg}") from e
    except yaml.YAMLError as e:
        raise ParseError(f"invalid YAML: {e}") from e


def parse_template(source: str, format_hint: str = "auto") -> TemplateModel:
    """Parse a CloudFormation template into a TemplateModel"""
    if not source or not source.strip():
        raise ParseError("empty template")

    fmt = detect_format(source) if format_hint == "auto" else TemplateFormat(format_hint)
    document = _load_document(source, fmt)

    if not isinstance(document, dict) or "Resources" not in document:
        raise SchemaError("template has no Resources section")
    raw_resources = document["Resources"]
    if not isinstance(raw_resources, dict):
        raise SchemaError("Resources must be a mapping")

    logical_ids = set(str(k) for k in raw_resources)
    resources: Dict[str, ResourceDecl] = {}
    for logical_id, body in raw_resources.items():
        if not isinstance(logical_id, str) or not logical_id:
            raise SchemaError(f"invalid logical-id {logical_id!r}")
        if not isinstance(body, dict):
            raise SchemaError(f"resource {logical_id} must be a mapping")
        type_name = body.get("Type")
        if not isinstance(type_name, str) or not TYPE_NAME_RE.match(type_name):
            raise SchemaError(f"resource {logical_id} has invalid Type {type_name!r}")
        props = body.get("Properties") or {}
        if not isinstance(props, dict):
            raise SchemaError(f"resource {logical_id}: Properties must be a mapping")
        resources[logical_id] = ResourceDecl(
            logical_id=logical_id,
            type_name=type_name,
            properties=_classify_tree(props, logical_ids),
        )

    parameters: Dict[str, ParameterDecl] = {}
    raw_params = document.get("Parameters") or {}
    if isinstance(raw_params, dict):
        for name, decl in raw_params.items():
            decl = decl if isinstance(decl, dict) else {}
            parameters[str(name)] = ParameterDecl(
                name=str(name), type=decl.get("Type"), default=decl.get("Default")
            )

    logger.debug(f"Parsed {len(resources)} resources ({fmt.value})")
    return TemplateModel(resources=resources, parameters=parameters, raw_format=fmt)


def read_source(path: Union[str, Path]) -> str:
    """Read a UTF-8 input file; undecodable bytes are a ParseError"""
    try:
        return Path(path).read_text(encoding="utf-8")
    except UnicodeDecodeError as e:
        raise ParseError(f"{path} is not valid UTF-8 (byte {e.start})") from e


def load_template(path: Union[str, Path], format_hint: str = "auto") -> TemplateModel:
    text = read_source(path)
    return parse_template(text, format_hint)


# ─── Intrinsic classification ─────────────────────────────────────

def _is_intrinsic(value: Any) -> bool:
    if not isinstance(value, dict) or len(value) != 1:
        return False
    key = next(iter(value))
    return isinstance(key, str) and (key == "Ref" or key.startswith("Fn::"))


def _sub_template(args: Any) -> Tuple[str, Dict[str, Any]]:
    if isinstance(args, str):
        return args, {}
    if isinstance(args, list) and args and isinstance(args[0], str):
        variables = args[1] if len(args) > 1 and isinstance(args[1], dict) else {}
        return args[0], variables
    return "", {}


def _sub_names(template: str) -> Iterator[str]:
    for match in SUB_PLACEHOLDER_RE.finditer(template):
        yield match.group(1).split(".", 1)[0].strip()


def _classify_intrinsic(value: Dict[str, Any], logical_ids: set) -> IntrinsicRef:
    function, args = next(iter(value.items()))
    target = None
    if function == "Ref":
        kind = IntrinsicKind.REF
        if isinstance(args, str) and args in logical_ids:
            target = args
    elif function == "Fn::GetAtt":
        kind = IntrinsicKind.GETATT
        head = None
        if isinstance(args, list) and args:
            head = args[0]
        elif isinstance(args, str):
            head = args.split(".", 1)[0]
        if isinstance(head, str) and head in logical_ids:
            target = head
    elif function == "Fn::Sub":
        kind = IntrinsicKind.SUB
        template, variables = _sub_template(args)
        for name in _sub_names(template):
            if name in logical_ids and name not in variables:
                target = name
                break
    elif function == "Fn::Join":
        kind = IntrinsicKind.JOIN
    else:
        kind = IntrinsicKind.OTHER
    return IntrinsicRef(
        kind=kind,
        function=function,
        args=_classify_tree(args, logical_ids),
        target=target,
    )


def _classify_tree(value: Any, logical_ids: set) -> Any:
    if _is_intrinsic(value):
        return _classify_intrinsic(value, logical_ids)
    if isinstance(value, dict):
        return {k: _classify_tree(v, logical_ids) for k, v in value.items()}
    if isinstance(value, list):
        return [_classify_tree(v, logical_ids) for v in value]
    return value


def _to_plain(value: Any) -> Any:
    if isinstance(value, IntrinsicRef):
        return value.to_long_form()
    if isinstance(value, dict):
        return {k: _to_plain(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_to_plain(v) for v in value]
    return value


# ════════════════════════════════════════════════════════════════════
#  Emit
# ════════════════════════════════════════════════════════════════════

def emit_template(model: TemplateModel, fmt: str = "json") -> str:
    """Render the model back to a long-form CloudFormation document"""
    document: Dict[str, Any] = {}
    if model.parameters:
        document["Parameters"] = {
            p.name: {k: v for k, v in (("Type", p.type), ("Default", p.default)) if v is not None}
            for p in model.parameters.values()
        }
    document["Resources"] = {
        r.logical_id: {"Type": r.type_name, "Properties": _to_plain(r.properties)}
        for r in model.resources.values()
    }
    if fmt == "yaml":
        return yaml.safe_dump(document, sort_keys=False, default_flow_style=False)
    return json.dumps(document, indent=2)


# ════════════════════════════════════════════════════════════════════
#  Reference resolution
# ════════════════════════════════════════════════════════════════════

def resolve_references(model: TemplateModel) -> ReferenceMap:
    """Every resolvable cross-resource reference, keyed by (logical-id, property path)"""
    found: ReferenceMap = {}
    for logical_id in sorted(model.resources):
        decl = model.resources[logical_id]
        _walk_refs(decl.properties, (), logical_id, model, found)
    return found


def _record(found: ReferenceMap, owner: str, path: PropertyPath, target: Any, model: TemplateModel):
    if isinstance(target, str) and target in model.resources:
        found[(owner, path)] = target


def _walk_refs(value: Any, path: PropertyPath, owner: str, model: TemplateModel, found: ReferenceMap):
    if isinstance(value, IntrinsicRef):
        if value.kind in (IntrinsicKind.REF, IntrinsicKind.GETATT):
            _record(found, owner, path, value.target, model)
            return
        if value.kind == IntrinsicKind.SUB:
            template, variables = _sub_template(value.args)
            for name in _sub_names(template):
                if name not in variables:
                    _record(found, owner, path + (value.function, f"${{{name}}}"), name, model)
            if isinstance(variables, dict):
                for key in variables:
                    _walk_refs(variables[key], path + (value.function, 1, key), owner, model, found)
            return
        _walk_refs(value.args, path + (value.function,), owner, model, found)
        return
    if isinstance(value, dict):
        for key, item in value.items():
            _walk_refs(item, path + (key,), owner, model, found)
    elif isinstance(value, list):
        for index, item in enumerate(value):
            _walk_refs(item, path + (index,), owner, model, found)


def get_path(properties: Dict[str, Any], dotted: str) -> Any:
    """Property lookup by dotted path; None when absent"""
    current: Any = properties
    for part in dotted.split("."):
        if isinstance(current, dict) and part in current:
            current = current[part]
        elif isinstance(current, list) and part.isdigit() and int(part) < len(current):
            current = current[int(part)]
        else:
            return None
    return current


def path_startswith(path: PropertyPath, dotted_prefix: str) -> bool:
    if dotted_prefix == "*":
        return True
    keys = [p for p in path if not isinstance(p, int)]
    prefix = dotted_prefix.split(".")
    return keys[:len(prefix)] == prefix


def format_path(path: PropertyPath) -> str:
    return ".".join(str(p) for p in path)

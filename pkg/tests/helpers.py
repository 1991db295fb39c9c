"""
Shared fixtures and seeded generators for the test suites
"""

import json
import random
import unittest
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from core.catalog import Catalog, Classification
from core.errors import SolverNotFound
from core.formula import Comparison, LinearExpr, Sort, node_variable
from core.graph import NodeRecord, ResourceGraph
from core.smt import SolverScript
from core.solvers import SolverBackend

FIXTURES = Path(__file__).parent / "fixtures"

HTTP_LABELS = ("GET", "POST", "PUT", "PATCH", "DELETE", "ANY")


def fixture(name: str) -> Path:
    return FIXTURES / name


def read_fixture(name: str) -> str:
    return fixture(name).read_text(encoding="utf-8")


def solver_or_skip():
    from core.solvers import get_backend
    try:
        return get_backend()
    except SolverNotFound as e:
        raise unittest.SkipTest(str(e))


class CheckOnly(SolverBackend):
    """Hides optimization so bounds go through the doubling and bisection search"""

    name = "check-only"

    def __init__(self, inner: SolverBackend):
        super().__init__(inner.timeout)
        self.inner = inner

    def check(self, script, want_model=True, want_core=True):
        return self.inner.check(script, want_model=want_model, want_core=want_core)


def fake_solver(directory: Path, name: str, body: str) -> Path:
    """An executable that answers --version and otherwise runs the given shell body"""
    path = Path(directory) / name
    path.write_text(
        "#!/bin/sh\n"
        f'if [ "$1" = "--version" ]; then echo "{name} 0.1"; exit 0; fi\n'
        f"{body}\n",
        encoding="utf-8",
    )
    path.chmod(0o755)
    return path


# ─── Random resource graphs ────────────────────────────────────────

def _random_properties(rng: random.Random, type_name: str) -> Dict:
    if type_name == "AWS::SQS::Queue":
        return {
            "FifoQueue": rng.choice([True, False, "true", "false"]),
            "ContentBasedDeduplication": rng.choice([True, False, "true"]),
        }
    if type_name == "AWS::DynamoDB::Table" and rng.random() < 0.5:
        return {"StreamSpecification": {"StreamViewType": "NEW_IMAGE"}}
    if type_name == "AWS::Kinesis::Stream":
        mode = rng.choice(["PROVISIONED", "ON_DEMAND"])
        return {"ShardCount": rng.randint(1, 8), "StreamModeDetails": {"StreamMode": mode}}
    if type_name == "AWS::Lambda::Function":
        return {"MemorySize": rng.choice([128, 512, 1769]), "Timeout": rng.randint(1, 900)}
    return {}


def random_graph(rng: random.Random, catalog: Catalog, max_nodes: int = 20,
                 edge_probability: Optional[float] = None) -> ResourceGraph:
    """Supported types sampled from the catalog, a few Unknown nodes, random routed edges"""
    count = rng.randint(1, max_nodes)
    types = catalog.supported_types
    nodes: List[NodeRecord] = []
    for i in range(count):
        logical_id = f"R{i:02d}"
        if rng.random() < 0.1:
            nodes.append(NodeRecord(logical_id, "Custom::Widget", Classification.UNKNOWN))
            continue
        type_name = rng.choice(types)
        nodes.append(NodeRecord(logical_id, type_name, Classification.SUPPORTED,
                                _random_properties(rng, type_name)))

    p = edge_probability if edge_probability is not None else rng.uniform(0.02, 0.3)
    edges: List[Tuple[str, str]] = []
    routes: Dict[str, Dict[str, Tuple[str, ...]]] = {}
    for s in nodes:
        for t in nodes:
            if s.logical_id == t.logical_id or rng.random() >= p:
                continue
            edges.append((s.logical_id, t.logical_id))
            if s.type_name == "AWS::ApiGateway::RestApi" and rng.random() < 0.8:
                labels = rng.sample(HTTP_LABELS, rng.randint(1, 3))
                routes.setdefault(s.logical_id, {})[t.logical_id] = tuple(sorted(labels))

    nodes = [
        NodeRecord(n.logical_id, n.type_name, n.classification, n.properties, routes.get(n.logical_id, {}))
        for n in nodes
    ]
    return ResourceGraph(tuple(nodes), tuple(sorted(edges)))


# ─── Random integer constraint systems ─────────────────────────────

Row = Tuple[Tuple[int, ...], str, int]     # (coefficients, op, constant): Σ c_i x_i op constant

BOX = (0, 10)


def random_rows(rng: random.Random, nvars: int) -> List[Row]:
    rows = []
    for _ in range(rng.randint(1, 4)):
        coeffs = tuple(rng.randint(-3, 3) for _ in range(nvars))
        if not any(coeffs):
            coeffs = (1,) + coeffs[1:]
        op = rng.choice(["=", "<=", ">=", "<", ">"])
        rows.append((coeffs, op, rng.randint(-10, 30)))
    return rows


def _may_hold(low: int, high: int, op: str, rhs: int) -> bool:
    if op == "=":
        return low <= rhs <= high
    if op == "<=":
        return low <= rhs
    if op == "<":
        return low < rhs
    if op == ">=":
        return high >= rhs
    return high > rhs


def brute_force(rows: Sequence[Row], nvars: int, fixed: Optional[Dict[int, int]] = None) -> Optional[Tuple[int, ...]]:
    """First point of the box satisfying every row, by exhaustive enumeration with interval pruning"""
    fixed = fixed or {}
    lo, hi = BOX
    values: List[int] = []
    # (depth, partial row sums) already shown to have no completion
    dead = set()

    def extremes(coeffs, partial, depth) -> Tuple[int, int]:
        low = high = partial
        for i in range(depth, nvars):
            c = coeffs[i]
            if i in fixed:
                low += c * fixed[i]
                high += c * fixed[i]
            else:
                low += min(c * lo, c * hi)
                high += max(c * lo, c * hi)
        return low, high

    def search(depth: int, partials: Tuple[int, ...]) -> Optional[Tuple[int, ...]]:
        if (depth, partials) in dead:
            return None
        for (coeffs, op, rhs), partial in zip(rows, partials):
            if not _may_hold(*extremes(coeffs, partial, depth), op, rhs):
                dead.add((depth, partials))
                return None
        if depth == nvars:
            return tuple(values)
        domain = [fixed[depth]] if depth in fixed else range(lo, hi + 1)
        for v in domain:
            values.append(v)
            step = tuple(p + row[0][depth] * v for p, row in zip(partials, rows))
            found = search(depth + 1, step)
            values.pop()
            if found is not None:
                return found
        dead.add((depth, partials))
        return None

    return search(0, tuple(0 for _ in rows))


def brute_force_max(rows: Sequence[Row], nvars: int, index: int) -> Optional[int]:
    for v in range(BOX[1], BOX[0] - 1, -1):
        if brute_force(rows, nvars, {index: v}) is not None:
            return v
    return None


def rows_to_script(rows: Sequence[Row], nvars: int) -> SolverScript:
    variables = [node_variable("n", f"x{i}") for i in range(nvars)]
    assertions = []
    for i, v in enumerate(variables):
        assertions.append((f"lo{i}", Comparison(">=", LinearExpr.of(v), LinearExpr.const(BOX[0])).to_smtlib()))
        assertions.append((f"hi{i}", Comparison("<=", LinearExpr.of(v), LinearExpr.const(BOX[1])).to_smtlib()))
    for k, (coeffs, op, rhs) in enumerate(rows):
        lhs = LinearExpr.const(0)
        for c, v in zip(coeffs, variables):
            if c:
                lhs = lhs + LinearExpr.of(v, c)
        assertions.append((f"row{k}", Comparison(op, lhs, LinearExpr.const(rhs)).to_smtlib()))
    return SolverScript(
        declarations=tuple((v.name, Sort.INT) for v in variables),
        assertions=tuple(assertions),
    )


# ─── Synthetic templates ───────────────────────────────────────────

_EMITTERS = ("AWS::Lambda::Function", "AWS::SNS::Topic", "AWS::StepFunctions::StateMachine", "AWS::S3::Bucket")
_SINKS = ("AWS::DynamoDB::Table", "AWS::SQS::Queue", "AWS::Lambda::Function", "AWS::Kinesis::Stream")
_LAMBDA_TARGETS = ("AWS::DynamoDB::Table", "AWS::S3::Bucket", "AWS::SNS::Topic", "AWS::SQS::Queue")


def _reference(source_type: str, properties: Dict, key: str, dest: str):
    if source_type == "AWS::Lambda::Function":
        properties.setdefault("Environment", {"Variables": {}})["Variables"][key] = {"Ref": dest}
    elif source_type == "AWS::SNS::Topic":
        properties.setdefault("Subscription", []).append(
            {"Endpoint": {"Fn::GetAtt": [dest, "Arn"]}, "Protocol": "lambda"})
    elif source_type == "AWS::StepFunctions::StateMachine":
        properties.setdefault("DefinitionSubstitutions", {})[key] = {"Ref": dest}
    else:
        properties.setdefault("NotificationConfiguration", {"QueueConfigurations": []})[
            "QueueConfigurations"].append({"Event": "s3:ObjectCreated:*", "Queue": {"Fn::GetAtt": [dest, "Arn"]}})


def synthetic_template(rng: random.Random, resources: int = 60, mean_in_degree: float = 0.9) -> str:
    """CloudFormation JSON with the given resource count and roughly the given mean in-degree"""
    emitters = max(1, resources // 2)
    body: Dict[str, Dict] = {}
    for i in range(resources):
        type_name = rng.choice(_EMITTERS) if i < emitters else rng.choice(_SINKS)
        body[f"Res{i:03d}"] = {"Type": type_name, "Properties": {}}
    ids = sorted(body)

    wanted = round(mean_in_degree * resources)
    edges = set()
    attempts = 0
    while len(edges) < wanted and attempts < wanted * 20:
        attempts += 1
        source = ids[rng.randrange(emitters)]
        dest = rng.choice(ids)
        if source == dest or (source, dest) in edges:
            continue
        if body[source]["Type"] == "AWS::Lambda::Function" and body[dest]["Type"] not in _LAMBDA_TARGETS:
            continue
        edges.add((source, dest))
        _reference(body[source]["Type"], body[source]["Properties"], f"T{len(edges)}", dest)

    body["ExecRole"] = {"Type": "AWS::IAM::Role", "Properties": {"Path": "/"}}
    return json.dumps({"Resources": body}, indent=1, sort_keys=True)

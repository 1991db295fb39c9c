import unittest
from collections import Counter

from core.catalog import load_catalog
from core.constraints import (
    Constraint, build_constraint_system, parse_user_constraints, validate_scoping,
)
from core.errors import SmtSyntaxError, UnknownSymbol
from core.formula import (
    Comparison, ConstraintCategory, LinearExpr, Sort, Visibility, edge_variable, node_variable,
)
from core.graph import build_graph
from core.smt import emit_smtlib
from core.template import load_template, parse_template
from tests.helpers import fixture, read_fixture


def system_for(name):
    catalog = load_catalog()
    graph = build_graph(load_template(fixture(name)), catalog)
    variables, constraints = build_constraint_system(graph, catalog)
    return graph, variables, constraints


class TestMotivatingConstraints(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.graph, cls.variables, cls.constraints = system_for("motivating.yaml")

    def rendered(self, category, anchor=None):
        return [c.render() for c in self.constraints.by_category(category)
                if anchor is None or c.anchor == anchor]

    def test_variable_counts(self):
        self.assertEqual(len(self.variables.node_variables), 16)
        self.assertEqual(len(self.variables.edge_variables), 7)
        self.assertEqual(len(self.variables.nv_pub("A")), 6)
        self.assertEqual([v.name for v in self.variables.nv_priv("B")], ["B.monthly_gb_seconds"])
        self.assertEqual(self.variables.lookup("|B.monthly_gb_seconds|").sort, Sort.REAL)
        self.assertEqual(
            [v.name for v in self.variables.ev_in("E")],
            ["B->E.monthly_dynamodb_r", "B->E.monthly_dynamodb_w",
             "D->E.monthly_dynamodb_r", "D->E.monthly_dynamodb_w"],
        )
        self.assertEqual([v.name for v in self.variables.ev_out("A")], ["A->B.monthly_requests", "A->C.monthly_requests"])

    def test_category_counts(self):
        self.assertEqual(
            self.constraints.counts(),
            {"basic": 23, "incoming": 5, "intrinsic": 5, "outgoing": 3, "user": 0},
        )
        self.assertEqual(len(self.constraints), 36)

    def test_one_basic_constraint_per_variable(self):
        tally = Counter()
        for c in self.constraints.by_category(ConstraintCategory.BASIC):
            (var,) = c.free_vars
            tally[var.name] += 1
        self.assertEqual(set(tally), set(self.variables.names))
        self.assertEqual(set(tally.values()), {1})

    def test_incoming(self):
        self.assertIn(
            "E.monthly_dynamodb_w = B->E.monthly_dynamodb_w + D->E.monthly_dynamodb_w",
            self.rendered(ConstraintCategory.INCOMING, "E"),
        )
        self.assertEqual(self.rendered(ConstraintCategory.INCOMING, "C"), ["C.monthly_requests = A->C.monthly_requests"])
        self.assertEqual(self.rendered(ConstraintCategory.INCOMING, "A"), [])

    def test_outgoing_follows_routes(self):
        self.assertEqual(
            self.rendered(ConstraintCategory.OUTGOING, "A"),
            ["A->B.monthly_requests = A.monthly_GETs", "A->C.monthly_requests = A.monthly_POSTs"],
        )
        self.assertEqual(self.rendered(ConstraintCategory.OUTGOING, "C"), ["C->D.monthly_requests <= C.monthly_requests"])

    def test_intrinsic_uses_configuration(self):
        intrinsic = self.constraints.by_category(ConstraintCategory.INTRINSIC)
        (b,) = [c for c in intrinsic if c.anchor == "B"]
        self.assertEqual(b.render(), "1024 * B.monthly_gb_seconds <= 2560 * B.monthly_requests")
        self.assertIn("(to_real |B.monthly_requests|)", b.to_smtlib())
        (d,) = [c for c in intrinsic if c.anchor == "D"]
        self.assertEqual(d.render(), "1024 * D.monthly_gb_seconds <= 384 * D.monthly_requests")

    def test_every_constraint_is_scoped(self):
        for c in self.constraints:
            self.assertEqual(validate_scoping(c, self.graph, self.variables), [], c.name)

    def test_names_are_unique_and_ordered(self):
        names = [c.name for c in self.constraints]
        self.assertEqual(len(names), len(set(names)))
        self.assertEqual(names[0], "basic0")
        self.assertEqual(names[23], "intrinsic0")

    def test_smtlib_is_deterministic(self):
        first = emit_smtlib(self.constraints, self.variables)
        _, variables, constraints = system_for("motivating.yaml")
        self.assertEqual(first, emit_smtlib(constraints, variables))
        self.assertIn("(declare-const |A.monthly_GETs| Int)", first)
        self.assertIn("(declare-const |B.monthly_gb_seconds| Real)", first)
        self.assertIn("(assert (! (>= |A.monthly_requests| 0) :named basic0))", first)
        self.assertTrue(first.rstrip().endswith("(check-sat)"))


class TestCaseStudyConstraints(unittest.TestCase):
    def test_all_generated_categories_present(self):
        _, variables, constraints = system_for("url_shortener.yaml")
        counts = constraints.counts()
        for category in ("basic", "incoming", "intrinsic", "outgoing"):
            self.assertGreater(counts[category], 0, category)
        self.assertEqual(len(variables), 13)
        (route,) = [c.render() for c in constraints.by_category(ConstraintCategory.OUTGOING)]
        self.assertEqual(
            route,
            "apigateway->lambda_function.monthly_requests = "
            "apigateway.monthly_DELETEs + apigateway.monthly_GETs + apigateway.monthly_PATCHs",
        )


class TestScoping(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.graph, cls.variables, _ = system_for("motivating.yaml")

    def test_intrinsic_reaching_another_node(self):
        bad = Constraint(
            Comparison("<=", LinearExpr.of(node_variable("B", "monthly_requests")),
                       LinearExpr.of(node_variable("D", "monthly_requests"))),
            ConstraintCategory.INTRINSIC, "B", name="intrinsic99",
        )
        problems = validate_scoping(bad, self.graph, self.variables)
        self.assertEqual(len(problems), 1)
        self.assertEqual(problems[0].offending, ("D.monthly_requests",))

    def test_outgoing_on_foreign_edge(self):
        bad = Constraint(
            Comparison("<=", LinearExpr.of(edge_variable("D", "E", "monthly_dynamodb_w")),
                       LinearExpr.of(node_variable("B", "monthly_requests"))),
            ConstraintCategory.OUTGOING, "B",
        )
        self.assertTrue(validate_scoping(bad, self.graph, self.variables))

    def test_incoming_with_private_variable(self):
        bad = Constraint(
            Comparison("=", LinearExpr.of(node_variable("B", "monthly_gb_seconds", Sort.REAL, Visibility.PRIVATE)),
                       LinearExpr.of(edge_variable("A", "B", "monthly_requests"))),
            ConstraintCategory.INCOMING, "B",
        )
        self.assertTrue(validate_scoping(bad, self.graph, self.variables))

    def test_undeclared_and_basic_arity(self):
        ghost = Constraint(
            Comparison(">=", LinearExpr.of(node_variable("Ghost", "m")), LinearExpr.const(0)),
            ConstraintCategory.BASIC, "Ghost",
        )
        self.assertEqual(validate_scoping(ghost, self.graph, self.variables)[0].message, "mentions undeclared variables")
        pair = Constraint(
            Comparison(">=", LinearExpr.of(node_variable("B", "monthly_requests")),
                       LinearExpr.of(node_variable("D", "monthly_requests"))),
            ConstraintCategory.BASIC, "B",
        )
        self.assertTrue(validate_scoping(pair, self.graph, self.variables))


class TestUserConstraints(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        _, cls.variables, _ = system_for("motivating.yaml")

    def test_fixture_file(self):
        parsed = parse_user_constraints(read_fixture("motivating_app.smt2"), self.variables, "app.smt2")
        self.assertEqual(len(parsed), 3)
        self.assertTrue(all(c.category == ConstraintCategory.USER for c in parsed))
        self.assertEqual(parsed[0].origin, "writes_per_order")
        self.assertEqual(parsed[1].origin, "app.smt2")
        self.assertEqual(parsed[0].to_smtlib(), "(<= |E.monthly_dynamodb_w| (* 3 |D.monthly_requests|))")
        self.assertEqual({v.name for v in parsed[0].free_vars}, {"E.monthly_dynamodb_w", "D.monthly_requests"})
        self.assertIn("D.monthly_requests", parsed[0].render())

    def test_let_and_builtins(self):
        text = "(assert (let ((x |A.monthly_GETs|)) (and (>= x 1) (not (= x 7)))))"
        (c,) = parse_user_constraints(text, self.variables)
        self.assertEqual({v.name for v in c.free_vars}, {"A.monthly_GETs"})

    def test_unknown_symbol_suggests(self):
        with self.assertRaises(UnknownSymbol) as ctx:
            parse_user_constraints("(assert (>= |E.monthly_dynamodb_x| 0))", self.variables)
        self.assertEqual(ctx.exception.symbol, "E.monthly_dynamodb_x")
        self.assertTrue(ctx.exception.suggestion.startswith("E.monthly_dynamodb_"))

    def test_syntax_errors(self):
        for text in (
            "(assert (>= |A.monthly_GETs| 0)",
            "(declare-const x Int)",
            "(assert (>= |A.monthly_GETs| 0) (>= |A.monthly_POSTs| 0))",
        ):
            with self.subTest(text=text):
                with self.assertRaises(SmtSyntaxError):
                    parse_user_constraints(text, self.variables)

    def test_ignored_commands_and_comments(self):
        text = "; note\n(set-info :status sat)\n(check-sat)\n(get-model)\n(exit)\n"
        self.assertEqual(parse_user_constraints(text, self.variables), [])


class TestConfigurationRules(unittest.TestCase):
    def build(self, text):
        catalog = load_catalog()
        graph = build_graph(parse_template(text), catalog)
        return build_constraint_system(graph, catalog)

    def test_dynamodb_stream_and_kinesis(self):
        _, constraints = self.build(
            "Resources:\n"
            "  T:\n"
            "    Type: AWS::DynamoDB::Table\n"
            "    Properties: {StreamSpecification: {StreamViewType: NEW_IMAGE}}\n"
            "  Fn:\n"
            "    Type: AWS::Lambda::Function\n"
            "  Map:\n"
            "    Type: AWS::Lambda::EventSourceMapping\n"
            "    Properties: {EventSourceArn: !GetAtt T.StreamArn, FunctionName: !Ref Fn}\n"
            "  K:\n"
            "    Type: AWS::Kinesis::Stream\n"
            "    Properties: {ShardCount: 4}\n"
        )
        rendered = [c.render() for c in constraints]
        self.assertIn("T->Fn.monthly_requests <= T.monthly_dynamodb_w", rendered)
        self.assertIn("K.monthly_shard_hours = 2920", rendered)

    def test_standard_queue_delivers_at_least_once(self):
        _, constraints = self.build(
            "Resources:\n"
            "  Q: {Type: AWS::SQS::Queue}\n"
            "  Fn: {Type: AWS::Lambda::Function}\n"
            "  Map:\n"
            "    Type: AWS::Lambda::EventSourceMapping\n"
            "    Properties: {EventSourceArn: !GetAtt Q.Arn, FunctionName: !Ref Fn}\n"
        )
        self.assertIn("Q->Fn.monthly_requests >= Q.monthly_requests", [c.render() for c in constraints])


if __name__ == "__main__":
    unittest.main()

import tempfile
import unittest
from fractions import Fraction
from pathlib import Path

import yaml

from core.analysis import (
    AnalysisOptions, BoundsReport, EstimateSet, IacAnalyzer, Verdict, load_estimates, resolve_target,
)
from core.errors import EstimateError, UnknownEstimateKey, UnknownTargetKey
from core.smt import BoundKind, BoundValue
from tests.helpers import fixture, read_fixture, solver_or_skip


def motivating(backend=None, **options):
    analyzer = IacAnalyzer.from_path(
        fixture("motivating.yaml"), backend=backend,
        options=AnalysisOptions.from_config(**options),
    )
    analyzer.add_user_constraint_file(fixture("motivating_app.smt2"))
    return analyzer


def url_shortener(backend=None):
    analyzer = IacAnalyzer.from_path(fixture("url_shortener.yaml"), backend=backend)
    analyzer.add_user_constraint_file(fixture("url_shortener_app.smt2"))
    return analyzer


class TestEstimates(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.analyzer = motivating()

    def test_load(self):
        estimates = self.analyzer.load_estimates(read_fixture("motivating_w_over.yaml"))
        self.assertEqual(len(estimates), 2)
        self.assertEqual(estimates.entries[("E", "monthly_dynamodb_w")], 3000001)
        self.assertEqual(
            estimates.assertions(),
            [("estimate0", "(= |A.monthly_POSTs| 1000000)"), ("estimate1", "(= |E.monthly_dynamodb_w| 3000001)")],
        )
        self.assertEqual(estimates.describe("estimate1")["formula"], "E.monthly_dynamodb_w = 3000001")
        self.assertEqual(estimates.to_dict(), {"A": {"monthly_POSTs": 1000000}, "E": {"monthly_dynamodb_w": 3000001}})

    def test_number_forms(self):
        estimates = self.analyzer.load_estimates("A:\n  monthly_GETs: '3e8'\n  monthly_POSTs: 1_000\nB:\n  monthly_requests: 2.0\n")
        self.assertEqual(estimates.entries[("A", "monthly_GETs")], 300000000)
        self.assertEqual(estimates.entries[("A", "monthly_POSTs")], 1000)
        self.assertEqual(estimates.entries[("B", "monthly_requests")], 2)

    def test_nulls_and_empty_input(self):
        self.assertEqual(len(self.analyzer.load_estimates("")), 0)
        self.assertEqual(len(self.analyzer.load_estimates("A:\n  monthly_GETs: null\nE:\n")), 0)

    def test_unknown_keys(self):
        with self.assertRaises(UnknownEstimateKey) as ctx:
            self.analyzer.load_estimates("Z:\n  monthly_requests: 1\n")
        self.assertIsNone(ctx.exception.metric)
        self.assertIn("A", ctx.exception.valid_metrics)
        self.assertNotIn("ApiRole", ctx.exception.valid_metrics)

        with self.assertRaises(UnknownEstimateKey) as ctx:
            self.analyzer.load_estimates("E:\n  monthly_dynamodb_x: 1\n")
        self.assertEqual(ctx.exception.valid_metrics, ["monthly_dynamodb_r", "monthly_dynamodb_w"])

    def test_private_metrics_cannot_be_estimated(self):
        with self.assertRaises(UnknownEstimateKey):
            self.analyzer.load_estimates("B:\n  monthly_gb_seconds: 10\n")

    def test_bad_values(self):
        for text in (
            "A:\n  monthly_GETs: -1\n",
            "A:\n  monthly_GETs: 1.5\n",
            "A:\n  monthly_GETs: true\n",
            "A:\n  monthly_GETs: lots\n",
            "A:\n  monthly_GETs: .inf\n",
            "A: 5\n",
            "- A\n",
            "A: [unclosed\n",
        ):
            with self.subTest(text=text):
                with self.assertRaises(EstimateError):
                    self.analyzer.load_estimates(text)

    def test_template_lists_public_metrics(self):
        text = self.analyzer.estimates_template()
        self.assertTrue(text.startswith("# iac-analysis usage estimates"))
        data = yaml.safe_load(text)
        self.assertEqual(list(data), ["A", "B", "C", "CtoD", "D", "E"])
        self.assertIsNone(data["A"]["monthly_POSTs"])
        self.assertNotIn("monthly_gb_seconds", data["B"])
        # a filled-in template loads back
        data["A"]["monthly_POSTs"] = 5
        self.assertEqual(len(load_estimates(yaml.safe_dump(data), self.analyzer.variables)), 1)

    def test_targets(self):
        self.assertEqual(resolve_target("E.monthly_dynamodb_w", self.analyzer.variables), ("E", "monthly_dynamodb_w"))
        self.assertEqual(resolve_target(("B", "monthly_gb_seconds"), self.analyzer.variables),
                         ("B", "monthly_gb_seconds"))
        with self.assertRaises(UnknownTargetKey) as ctx:
            resolve_target("E.monthly_nothing", self.analyzer.variables)
        self.assertIn("E.monthly_dynamodb_r", ctx.exception.valid)
        with self.assertRaises(UnknownTargetKey):
            resolve_target("nodot", self.analyzer.variables)
        with self.assertRaises(UnknownTargetKey):
            self.analyzer.all_bounds(["A.monthly_GETs", "Q.monthly_requests"])

    def test_stats(self):
        stats = self.analyzer.stats()
        self.assertEqual(stats["variable_count"], 23)
        self.assertEqual(stats["constraint_counts"]["user"], 3)
        self.assertEqual(stats["constraint_count"], 39)


class TestMotivatingWorkflows(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.analyzer = motivating(solver_or_skip())

    def test_write_bounds(self):
        report = self.analyzer.bounds("E.monthly_dynamodb_w")
        self.assertIsInstance(report, BoundsReport)
        self.assertEqual(report.lower, BoundValue.finite(0))
        self.assertEqual(report.upper, BoundValue.finite(3000000))
        self.assertEqual(report.render(), "E.monthly_dynamodb_w: [0, 3000000]")

    def test_read_upper_bound(self):
        report = self.analyzer.bounds(("E", "monthly_dynamodb_r"))
        self.assertEqual(report.upper.value, 2000000)

    def test_sequential_bounds_agree(self):
        analyzer = motivating(self.analyzer.backend, parallel_bounds=False)
        self.assertEqual(analyzer.bounds("E.monthly_dynamodb_w").upper, BoundValue.finite(3000000))

    def test_bounds_respect_estimates(self):
        estimates = self.analyzer.load_estimates("A:\n  monthly_POSTs: 100\n")
        report = self.analyzer.bounds("E.monthly_dynamodb_w", estimates)
        self.assertEqual(report.upper.value, 300)
        self.assertIn("A.monthly_POSTs = 100", report.assumptions)

    def test_writes_over_the_limit_are_invalid(self):
        estimates = self.analyzer.load_estimates_file(fixture("motivating_w_over.yaml"))
        report = self.analyzer.check(estimates)
        self.assertEqual(report.verdict, Verdict.INVALID)
        self.assertEqual(report.exit_code, 1)
        names = {c["name"] for c in report.conflicting_constraints}
        self.assertIn("estimate1", names)
        self.assertTrue(report.render().startswith("Verdict: Invalid"))
        self.assertEqual(report.to_dict()["verdict"], "Invalid")

    def test_writes_under_the_limit_are_valid(self):
        estimates = self.analyzer.load_estimates_file(fixture("motivating_w_under.yaml"))
        report = self.analyzer.check(estimates)
        self.assertEqual(report.verdict, Verdict.VALID)
        self.assertEqual(report.exit_code, 0)
        self.assertEqual(report.witness["E.monthly_dynamodb_w"], 2999999)
        self.assertIn("Witness assignment:", report.render())

    def test_infeasible_estimates_give_infeasible_bounds(self):
        estimates = self.analyzer.load_estimates_file(fixture("motivating_w_over.yaml"))
        report = self.analyzer.bounds("E.monthly_dynamodb_r", estimates)
        self.assertEqual(report.upper.kind, BoundKind.INFEASIBLE)

    def test_all_bounds_over_chosen_targets(self):
        reports = self.analyzer.all_bounds(["A.monthly_GETs", "B.monthly_gb_seconds"])
        self.assertEqual([r.name for r in reports], ["A.monthly_GETs", "B.monthly_gb_seconds"])
        self.assertEqual(reports[0].upper.value, 1000000)
        self.assertEqual(reports[1].upper.value, Fraction(2560 * 1000000, 1024))

    def test_dump_smt(self):
        with tempfile.TemporaryDirectory() as td:
            path = Path(td) / "check.smt2"
            analyzer = motivating(self.analyzer.backend, dump_smt=str(path))
            analyzer.check(analyzer.load_estimates("A:\n  monthly_POSTs: 1\n"))
            text = path.read_text()
        self.assertIn("(assert (! (= |A.monthly_POSTs| 1) :named estimate0))", text)
        self.assertIn("(assert (! (<= |E.monthly_dynamodb_w| (* 3 |D.monthly_requests|)) :named user0))", text)


class TestUrlShortener(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.analyzer = url_shortener(solver_or_skip())

    def test_counts(self):
        stats = self.analyzer.stats()
        self.assertEqual(stats["variable_count"], 13)
        self.assertEqual(stats["constraint_count"], 21)

    def test_underestimated_reads_are_invalid(self):
        report = self.analyzer.check(self.analyzer.load_estimates_file(fixture("url_shortener_underestimated.yaml")))
        self.assertEqual(report.verdict, Verdict.INVALID)
        categories = {c["category"] for c in report.conflicting_constraints}
        self.assertTrue(categories & {"estimate", "user"})
        # estimates and user constraints are listed first
        self.assertIn(report.conflicting_constraints[0]["category"], ("estimate", "user"))

    def test_corrected_reads_are_valid(self):
        report = self.analyzer.check(self.analyzer.load_estimates_file(fixture("url_shortener_corrected.yaml")))
        self.assertEqual(report.verdict, Verdict.VALID)
        self.assertEqual(report.witness["dynamodb_table.monthly_dynamodb_r"], 300000000)
        self.assertEqual(report.witness["dynamodb_table.monthly_dynamodb_w"], 200000000)

    def test_no_estimates_is_valid(self):
        self.assertEqual(self.analyzer.check(EstimateSet()).verdict, Verdict.VALID)


if __name__ == "__main__":
    unittest.main()

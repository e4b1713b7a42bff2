# ============================================================================
# FILE: workflows/experiment.py
# ============================================================================
"""Experiment orchestration: one method per subcommand, artifacts written per run."""
from __future__ import annotations

import logging
import math
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

import numpy as np

from config.constants import EXIT_CERTIFICATE_FAILED, EXIT_OK
from config.settings import settings
from models.errors import InvalidParameterError, NoSignChangeError
from models.schemas import ExperimentConfig
from models.state import RunReport
from tools.boxcount import box_count_table, covering_cost_exponent, fit_box_dimension, scale_matched_window
from tools.cantor import (
    CantorSettings,
    CantorTree,
    EpsilonSchedule,
    audit_tree,
    build_cantor,
    certify_holder,
)
from tools.formula import ShrinkProfile, f_scan, isotropic_case, lebesgue_case, s_by_grid, s_value
from tools.geometry import measure_admissible_constant
from tools.measure import (
    MeasureKind,
    dimension,
    local_dimension_fit,
    quasi_bernoulli_constant,
    stationary_distribution,
)
from tools.sequence import SequenceKind, coverage_diagnostics, generate_balls, shrink_sequence
from utils.export import rectangles_frame, tree_records, write_csv, write_json, write_jsonl, write_plot
from utils.structured_data import build_manifest

logger = logging.getLogger(__name__)

COMMANDS = ("formula", "boxcount", "cantor", "certify", "diagnose", "sweep")


class ExperimentWorkflow:
    """Runs one subcommand against a validated config and writes its artifacts."""

    def __init__(self, config: ExperimentConfig, out_dir: Path, progress: Optional[bool] = None):
        self.config = config
        self.out_dir = Path(out_dir)
        self.progress = settings.PROGRESS if progress is None else progress
        self.mu = config.measure
        self.profile: ShrinkProfile = config.shrink_profile
        self.alpha = dimension(self.mu)
        self.s, self.k = s_value(self.alpha, self.profile)
        self.threads = config.threads or 1
        self.cell_budget = config.cell_budget or settings.CELL_BUDGET

    def execute(self, command: str) -> RunReport:
        handlers: Dict[str, Callable[[], RunReport]] = {
            "formula": self.cmd_formula,
            "boxcount": self.cmd_boxcount,
            "cantor": self.cmd_cantor,
            "certify": self.cmd_certify,
            "diagnose": self.cmd_diagnose,
            "sweep": self.cmd_sweep,
        }
        if command not in handlers:
            raise InvalidParameterError(f"unknown command {command!r}; expected one of {COMMANDS}")
        logger.info("running %s: alpha=%.6f s=%.6f (k=%d)", command, self.alpha, self.s, self.k)
        return handlers[command]()

    # ------------------------------------------------------------------ helpers

    def _rng(self) -> np.random.Generator:
        return np.random.default_rng(self.config.seed)

    def _base_report(self, command: str) -> RunReport:
        return RunReport(
            command=command,
            seed=self.config.seed,
            alpha=self.alpha,
            s_value=self.s,
            argmin_k=self.k,
            rows=[],
            summary={},
            measured={},
            passed=True,
            exit_code=EXIT_OK,
            artifacts={},
        )

    def _finish(
        self,
        report: RunReport,
        plot: Optional[Dict[str, Any]] = None,
        tree: Optional[CantorTree] = None,
    ) -> RunReport:
        artifacts = report["artifacts"]
        artifacts["results"] = str(write_csv(report["rows"], self.out_dir / "results.csv"))
        if plot is not None:
            artifacts["plot"] = str(write_plot(self.out_dir / "plot.svg", **plot))
        if tree is not None:
            artifacts["tree"] = str(write_jsonl(tree_records(tree), self.out_dir / "tree.jsonl"))
        report["exit_code"] = EXIT_OK if report["passed"] else EXIT_CERTIFICATE_FAILED
        summary = {"s_value": self.s, "argmin_k": self.k, "alpha": self.alpha, "passed": report["passed"]}
        summary.update(report["summary"])
        manifest = build_manifest(
            command=report["command"],
            config=self.config,
            measured=report["measured"],
            summary=summary,
            artifacts={key: Path(value).name for key, value in artifacts.items()},
        )
        artifacts["manifest"] = str(write_json(manifest, self.out_dir / "manifest.json"))
        return report

    def _rectangles(self, rng: np.random.Generator):
        spec = self.config.sequence
        count = len(spec.radii) if spec.kind is SequenceKind.EXPLICIT else spec.count
        if count == 0:
            raise InvalidParameterError("the ball sequence is empty")
        balls = generate_balls(spec, self.mu, count, rng)
        if not balls:
            raise InvalidParameterError("the ball sequence is empty")
        return shrink_sequence(balls, self.profile, spec.rotation_policy, rng, spec.angles)

    def _cantor_settings(self) -> CantorSettings:
        c = self.config.cantor
        return CantorSettings(
            candidates_per_cube=c.candidates_per_cube,
            mass_floor=c.mass_floor,
            probe_span=c.probe_span,
            resolution=c.resolution,
            rho_samples=c.rho_samples,
            e_set_constant=c.e_set_constant,
            enforce_size_conditions=c.enforce_size_conditions,
            max_candidates=max(c.max_candidates, c.candidates_per_cube),
            eager_cubes=c.eager_cubes,
            probe_paths=c.probe_paths,
            max_expansions=c.max_expansions,
            strict_bounds=c.strict_bounds,
            threads=self.threads,
            progress=self.progress,
        )

    def _build_tree(self, rng: np.random.Generator) -> CantorTree:
        c = self.config.cantor
        return build_cantor(
            self.mu,
            self.config.sequence,
            self.profile,
            EpsilonSchedule(c.eps0),
            c.depth,
            rng,
            self._cantor_settings(),
        )

    @staticmethod
    def _tree_measured(tree: CantorTree) -> Dict[str, Any]:
        records = [record for _, record in tree.records()]
        floors = [record.retained_fraction for record in records]
        return {
            "rho": {str(q): rho for q, rho in sorted(tree.rhos.items())},
            "rho_accepted_fraction": {str(q): f for q, f in sorted(tree.rho_fractions.items())},
            "mass_floor": tree.settings.mass_floor,
            "min_retained_fraction": min(floors) if floors else None,
            "e_set_constant": tree.e_set_constant,
            "expanded_cubes": len(records),
        }

    @staticmethod
    def _generation_rows(tree: CantorTree) -> List[Dict[str, Any]]:
        rows = []
        for q in range(1, tree.depth + 1):
            nodes = tree.generation(q)
            radii = [n.rectangle.base_radius for n in nodes]
            expanded = sum(len(n.cubes) for n in tree.generation(q - 1))
            rows.append(
                {
                    "generation": q,
                    "host_cubes": tree.host_cubes(q),
                    "expanded_cubes": expanded,
                    "rectangles": len(nodes),
                    "eta_total": math.fsum(n.eta_mass for n in nodes),
                    "rho": tree.rhos[q],
                    "epsilon": tree.schedule.epsilon(q),
                    "r_min": min(radii) if radii else None,
                    "r_max": max(radii) if radii else None,
                }
            )
        return rows

    # ----------------------------------------------------------------- commands

    def cmd_formula(self) -> RunReport:
        report = self._base_report("formula")
        scan = f_scan(self.alpha, self.profile, self.config.formula_points)
        report["rows"] = [{"v": v, "f": f} for v, f in scan]
        report["summary"] = {
            "s_by_grid": s_by_grid(self.alpha, self.profile, 1e-4),
            "lebesgue_case": lebesgue_case(self.profile),
        }
        tau = self.profile.exponents
        if all(t == tau[0] for t in tau):
            report["summary"]["isotropic_case"] = isotropic_case(self.alpha, tau[0], self.profile.d)
        print(f"s = {self.s:.12g} (argmin k = {self.k}, dim mu = {self.alpha:.12g})")
        for v, f in scan[:: max(1, len(scan) // 10)]:
            print(f"  v = {v:10.6f}  f(v) = {f:.12g}")
        plot = dict(
            x=[v for v, _ in scan],
            y=[f for _, f in scan],
            title="f(v) over [1, tau_d]",
            xlabel="v",
            ylabel="f(v)",
            log_y=False,
        )
        return self._finish(report, plot)

    def cmd_boxcount(self) -> RunReport:
        report = self._base_report("boxcount")
        rng = self._rng()
        rects = self._rectangles(rng)
        a, b = self.config.boxcount.levels
        octaves = self.config.boxcount.octaves
        table = box_count_table(rects, self.profile, range(a, b + 1), octaves, self.threads, self.cell_budget)
        slope, stderr = fit_box_dimension(table, self.profile.d)
        for p, n in table:
            lo, hi = scale_matched_window(self.profile, p, octaves)
            report["rows"].append({"level": p, "count": n, "window_lo": lo, "window_hi": hi})
        try:
            critical = covering_cost_exponent(
                rects, None, 0.0, float(self.profile.d * self.profile.largest), self.config.boxcount.threshold
            )
        except NoSignChangeError as exc:
            logger.warning("covering-cost exponent not bracketed: %s", exc)
            critical = None
        report["summary"] = {"fitted_slope": slope, "slope_stderr": stderr, "covering_cost_exponent": critical}
        write_csv(rectangles_frame(rects), self.out_dir / "rectangles.csv")
        report["artifacts"]["rectangles"] = str(self.out_dir / "rectangles.csv")
        plot = dict(
            x=[p for p, _ in table],
            y=[n for _, n in table],
            title="box counts of the truncated limsup",
            xlabel="level p",
            ylabel="N_p",
            reference_slope=self.s,
        )
        return self._finish(report, plot)

    def cmd_cantor(self) -> RunReport:
        report = self._base_report("cantor")
        tree = self._build_tree(self._rng())
        audit = audit_tree(tree)
        report["rows"] = self._generation_rows(tree)
        report["measured"] = self._tree_measured(tree)
        report["summary"] = {"audit": audit.as_dict()}
        report["passed"] = audit.passed
        plot = dict(
            x=[row["generation"] for row in report["rows"]],
            y=[max(row["rectangles"], 1) for row in report["rows"]],
            title="rectangles per generation",
            xlabel="generation",
            ylabel="rectangles",
        )
        return self._finish(report, plot, tree)

    def cmd_certify(self) -> RunReport:
        report = self._base_report("certify")
        rng = self._rng()
        tree = self._build_tree(rng)
        c = self.config.cantor
        certificate = certify_holder(tree, self.s, EpsilonSchedule(c.eps0), c.certify_samples, rng, c.slack)
        report["rows"] = certificate.rows
        report["measured"] = self._tree_measured(tree)
        report["summary"] = {
            "claimed_lower_bound": certificate.claimed_lower_bound,
            "normalizer": certificate.normalizer,
            "audit": certificate.audit.as_dict(),
        }
        report["passed"] = certificate.passed
        if not certificate.passed:
            logger.error("certificate failed; see results.csv for the offending octaves")
        plot = dict(
            x=[row["octave"] for row in certificate.rows],
            y=[row["min_exponent"] for row in certificate.rows],
            title="minimum log eta(C) / log r per octave",
            xlabel="octave",
            ylabel="exponent",
            log_y=False,
        )
        return self._finish(report, plot, tree)

    def cmd_diagnose(self) -> RunReport:
        report = self._base_report("diagnose")
        rng = self._rng()
        spec = self.config.sequence
        diag = self.config.diagnose
        count = len(spec.radii) if spec.kind is SequenceKind.EXPLICIT else spec.count
        if count == 0:
            raise InvalidParameterError("the ball sequence is empty")
        balls = generate_balls(spec, self.mu, count, rng)
        coverage = coverage_diagnostics(self.mu, balls, diag.level, self.cell_budget, diag.ladder)
        report["rows"] = coverage.as_rows()
        measured: Dict[str, Any] = {
            "local_dimension_fit": local_dimension_fit(
                self.mu, rng, diag.local_dimension_samples, diag.local_dimension_depth
            ),
            "quasi_bernoulli_constant": quasi_bernoulli_constant(self.mu),
            "admissible_constant": list(measure_admissible_constant(self.mu.d, diag.admissible_samples, rng)),
            "mass_upper_sum": coverage.mass_upper_sum,
        }
        if self.mu.kind is MeasureKind.MARKOV:
            measured["stationary_distribution"] = stationary_distribution(self.mu).tolist()
        report["measured"] = measured
        plot = dict(
            x=coverage.tail_starts,
            y=coverage.covered_mass,
            title=f"mu-mass covered by tails at level {diag.level}",
            xlabel="tail start N",
            ylabel="covered mass",
            log_x=True,
            log_y=False,
        )
        return self._finish(report, plot)

    def cmd_sweep(self) -> RunReport:
        report = self._base_report("sweep")
        tau = self.profile.exponents
        start = tau[-2] if len(tau) > 1 else 1.0
        stop = max(start, self.config.sweep.tau_max)
        rows = []
        for last in np.linspace(start, stop, self.config.sweep.points).tolist():
            swept = ShrinkProfile(tau[:-1] + (last,))
            s, k = s_value(self.alpha, swept)
            rows.append(
                {
                    "tau_d": last,
                    "s": s,
                    "argmin_k": k,
                    "lebesgue_case": lebesgue_case(swept),
                    "isotropic_case": isotropic_case(self.alpha, last, swept.d),
                }
            )
        report["rows"] = rows
        plot = dict(
            x=[row["tau_d"] for row in rows],
            y=[row["s"] for row in rows],
            title="s(mu, tau) against the last exponent",
            xlabel="tau_d",
            ylabel="s",
            log_y=False,
        )
        return self._finish(report, plot)

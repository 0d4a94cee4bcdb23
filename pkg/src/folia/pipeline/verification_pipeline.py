#!/usr/bin/env python3
"""
Verification pipeline for folia jobs

One pipeline run per CLI invocation:
1. Builds the list of independent checks the command asks for
2. Runs them concurrently in worker threads, bounded by a semaphore
3. Assembles verdicts, notes and exports in input order
4. Returns the report; exit codes follow from the verdict outcomes

Failures of a single check that are not usage errors are recorded as
Inconclusive so one bad entry never hides the others.
"""

import asyncio
import logging
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from folia.components.algebroid import (
    classify_point,
    isotropy_bookkeeping,
    kernel_module,
    leaf_splitting,
    validate_algebroid,
)
from folia.components.bisubm import (
    BiSubmersion,
    bisection_carry,
    build_path_holonomy,
    verify_foliation_bisubmersion,
)
from folia.components.charts import fiber_data, involutivity_check
from folia.components.flows import FlowSpec, accel_velocity_check, convergence_ratio, flow_sum_compose, flow_trace, middle_term
from folia.components.triples import check_psi_diagram, pair_psi, verify_algebraic_bisubmersion
from folia.components.weinstein import (
    ZBisubmersion,
    build_weinstein_bisubmersion,
    diagram_check_weinstein,
    psi_representative,
)
from folia.config.configuration import PARALLEL_CHECKS
from folia.constants import ACCEL_RESIDUAL_TOL, APATH_RESIDUAL_TOL, RK4_ORDER_RATIO_MIN, Outcome, Verdict
from folia.utils.errors import (
    APathError,
    BisectionInvalidError,
    ChartMismatchError,
    ConfigError,
    DimensionMismatchError,
    ExprParseError,
    FoliaError,
    NotSubmersionError,
    UnknownIdentifierError,
)
from folia.utils.job_config import JobConfig
from folia.utils.report import CheckRecord, DataBlock, Report, apath_block, config_hash, merge_notes, trace_block

logger = logging.getLogger(__name__)

COMMANDS = (
    "check-involutivity",
    "check-bisubmersion",
    "path-holonomy",
    "algebroid-report",
    "weinstein",
    "flows-verify",
)

# Input problems abort the job instead of becoming an Inconclusive record
USAGE_ERRORS = (ConfigError, DimensionMismatchError, ChartMismatchError, UnknownIdentifierError, ExprParseError)

# Representatives exported with --csv / --plot-data
EXPORTED_REPRESENTATIVES = 3

Point = Tuple[Fraction, ...]


@dataclass
class PipelineOptions:
    """Command-line selections on top of the job options"""
    point: Optional[Point] = None
    module: Optional[str] = None
    algebroid: Optional[str] = None
    exports: bool = False
    timing: bool = False

    def to_dict(self) -> Dict[str, Any]:
        result: Dict[str, Any] = {}
        if self.point is not None:
            result["point"] = [str(c) for c in self.point]
        if self.module is not None:
            result["module"] = self.module
        if self.algebroid is not None:
            result["algebroid"] = self.algebroid
        return result


@dataclass
class CheckOutput:
    """What one check contributes to the report"""
    records: List[CheckRecord] = field(default_factory=list)
    blocks: List[DataBlock] = field(default_factory=list)
    notes: List[str] = field(default_factory=list)
    elapsed: float = 0.0


@dataclass
class CheckTask:
    name: str
    kind: str
    run: Callable[[], CheckOutput]


def _record(name: str, kind: str, verdict: Verdict, details: Any = None) -> CheckRecord:
    if details is None:
        details = {}
    elif hasattr(details, "to_dict"):
        details = details.to_dict()
    return CheckRecord(name, kind, verdict, details)


class VerificationPipeline:
    """Runs the checks of one command over a resolved job"""

    def __init__(self, job: JobConfig, command: str, options: Optional[PipelineOptions] = None):
        if command not in COMMANDS:
            raise ConfigError(f"Unknown command '{command}'")
        self.job = job
        self.command = command
        self.options = options or PipelineOptions()
        self.parallel_checks = PARALLEL_CHECKS

        # Statistics tracking
        self.stats = {
            'checks_planned': 0,
            'records': 0,
            'passed': 0,
            'refuted': 0,
            'inconclusive': 0,
            'errors': [],
            'processing_time_seconds': 0.0,
        }

    # --- planning ----------------------------------------------------------------

    def plan(self) -> List[CheckTask]:
        planners = {
            "check-involutivity": self._plan_involutivity,
            "check-bisubmersion": self._plan_bisubmersions,
            "path-holonomy": self._plan_path_holonomy,
            "algebroid-report": self._plan_algebroids,
            "weinstein": self._plan_weinstein,
            "flows-verify": self._plan_flows,
        }
        tasks = planners[self.command]()
        if not tasks:
            raise ConfigError(f"The job defines nothing for {self.command}")
        return tasks

    def _selected(self, entries: Dict[str, Any], selection: Optional[str], section: str) -> Dict[str, Any]:
        if selection is None:
            return entries
        if selection not in entries:
            raise ConfigError(f"Unresolved reference '{selection}' into {section}", f"/{section}")
        return {selection: entries[selection]}

    def _points(self, configured: Sequence[Point]) -> List[Point]:
        points = list(configured)
        if self.options.point is not None and self.options.point not in points:
            points.append(self.options.point)
        return points

    def _plan_involutivity(self) -> List[CheckTask]:
        tasks = []
        for name, mod in self._selected(self.job.modules, self.options.module, "modules").items():
            tasks.append(CheckTask(name, "involutivity", lambda mod=mod, name=name: self._involutivity(name, mod)))
            for point in self._points(self.job.module_points.get(name, [])):
                tasks.append(CheckTask(name, "fiber_data", lambda mod=mod, name=name, point=point: self._fiber(name, mod, point)))
        return tasks

    def _plan_bisubmersions(self) -> List[CheckTask]:
        return [
            CheckTask(name, "bisubmersion", lambda name=name: self._bisubmersion(name))
            for name in self.job.bisubmersions
        ]

    def _plan_path_holonomy(self) -> List[CheckTask]:
        tasks = []
        for name, entry in self.job.holonomies.items():
            if self.options.module is not None and entry.module is not self.job.modules.get(self.options.module):
                continue
            tasks.append(CheckTask(name, "path_holonomy", lambda name=name: self._path_holonomy(name)))
        if self.options.module is not None and not tasks:
            raise ConfigError(f"No path_holonomy entry uses module '{self.options.module}'", "/path_holonomy")
        return tasks

    def _plan_algebroids(self) -> List[CheckTask]:
        return [
            CheckTask(name, "algebroid", lambda name=name: self._algebroid(name))
            for name in self._selected(self.job.algebroids, self.options.algebroid, "algebroids")
        ]

    def _plan_weinstein(self) -> List[CheckTask]:
        tasks = []
        for name, entry in self._selected(self.job.algebroids, self.options.algebroid, "algebroids").items():
            point = self.options.point if self.options.point is not None else entry.weinstein_point
            if point is None:
                logger.warning(f"⚠️ Algebroid {name} has no weinstein_point; skipped")
                continue
            tasks.append(CheckTask(name, "weinstein", lambda name=name, point=point: self._weinstein(name, point)))
        return tasks

    def _plan_flows(self) -> List[CheckTask]:
        flows = self.job.flows
        if flows is None:
            raise ConfigError("The job has no flows section", "/flows")
        tasks = []
        for i, item in enumerate(flows.compositions):
            tasks.append(CheckTask(f"compositions/{i}", "flow_sum", lambda item=item: self._composition(item, flow_sum_compose)))
        for i, item in enumerate(flows.middle_terms):
            tasks.append(CheckTask(f"middle_terms/{i}", "middle_term", lambda item=item: self._composition(item, middle_term)))
        for i, item in enumerate(flows.accelerations):
            tasks.append(CheckTask(f"accelerations/{i}", "acceleration", lambda i=i, item=item: self._acceleration(f"accelerations/{i}", item)))
        for i, item in enumerate(flows.convergence):
            tasks.append(CheckTask(f"convergence/{i}", "rk4_order", lambda item=item: self._convergence(item)))
        for i, item in enumerate(flows.traces):
            tasks.append(CheckTask(f"traces/{i}", "trace", lambda i=i, item=item: self._trace(i, item)))
        return tasks

    # --- charts --------------------------------------------------------------------

    def _involutivity(self, name, mod) -> CheckOutput:
        result = involutivity_check(mod)
        return CheckOutput([_record(name, "involutivity", result.verdict, result)])

    def _fiber(self, name, mod, point) -> CheckOutput:
        report = fiber_data(mod, point)
        return CheckOutput([_record(name, "fiber_data", Verdict.PASS, report)])

    # --- bi-submersions ----------------------------------------------------------------

    def _bisubmersion(self, name: str) -> CheckOutput:
        entry = self.job.bisubmersions[name]
        opts = self.job.options
        output = CheckOutput()
        try:
            B = entry.build(opts)
        except NotSubmersionError as e:
            output.records.append(_record(name, "submersion", Verdict.FAIL, {"message": str(e)}))
            return output
        output.records.append(_record(name, "submersion", Verdict.PASS, {"samples": opts.samples}))
        self._verify(B, output)
        if entry.groupoid is not None:
            psi = entry.psi if entry.psi is not None else pair_psi(B)
            report = check_psi_diagram(B, psi, entry.groupoid, samples=opts.samples, seed=opts.seed, tol=opts.tolerance)
            output.records.append(_record(name, "psi_diagram", report.verdict, report))
            output.notes.extend(report.notes)
        for label in entry.bisections:
            output.records.append(self._bisection(B, entry, label))
        return output

    def _verify(self, B: BiSubmersion, output: CheckOutput) -> None:
        opts = self.job.options
        foliation = verify_foliation_bisubmersion(B, opts.samples, opts.tolerance)
        output.records.append(_record(B.name, "foliation", foliation.verdict, foliation))
        output.notes.extend(foliation.notes)
        certificate = verify_algebraic_bisubmersion(B, samples=opts.samples, tol=opts.tolerance, seed=opts.seed)
        output.records.append(_record(B.name, "algebraic", certificate.verdict, certificate))
        output.notes.extend(certificate.notes)

    def _bisection(self, B: BiSubmersion, entry, label: str) -> CheckRecord:
        opts = self.job.options
        try:
            beta = entry.build_bisection(B, label)
            carried = bisection_carry(B, beta, opts.samples, opts.tolerance)
        except BisectionInvalidError as e:
            return _record(f"{B.name}/{label}", "bisection", Verdict.FAIL, {"message": str(e)})
        verdict = Verdict.PASS
        if carried.span_residual is not None and carried.span_residual > opts.tolerance:
            verdict = Verdict.FAIL
        return _record(f"{B.name}/{label}", "bisection", verdict, carried)

    def _path_holonomy(self, name: str) -> CheckOutput:
        entry = self.job.holonomies[name]
        opts = self.job.options
        point = self.options.point if self.options.point is not None else entry.point
        B = build_path_holonomy(
            entry.module,
            point,
            minimal=entry.minimal,
            group_model=entry.group_model,
            name=name,
            samples=opts.samples,
            seed=opts.seed,
            radius=entry.radius,
        )
        output = CheckOutput([_record(name, "construction", Verdict.PASS, B)])
        self._verify(B, output)
        return output

    # --- algebroids ----------------------------------------------------------------

    def _algebroid(self, name: str) -> CheckOutput:
        entry = self.job.algebroids[name]
        A = entry.algebroid
        output = CheckOutput()
        validation = validate_algebroid(A)
        output.records.append(_record(name, "validation", validation.verdict, validation))
        if validation.verdict != Verdict.VALID:
            output.notes.append(f"{name}: kernel and splittings skipped for an invalid algebroid")
            return output
        points = self._points(entry.points)
        kernel = kernel_module(A, entry.kernel_degree_bound, points)
        output.records.append(_record(name, "kernel_module", Verdict.PASS, kernel))
        for point in points:
            label = f"{name}@{','.join(str(c) for c in point)}"
            point_class = classify_point(A, point, kernel)
            output.records.append(_record(label, "point_class", point_class.verdict, point_class))
            if point_class.dimensions.note:
                output.notes.append(f"{label}: {point_class.dimensions.note}")
            bookkeeping = isotropy_bookkeeping(A, point, kernel)
            output.records.append(_record(label, "isotropy_sequence", Verdict.PASS if bookkeeping["exact"] else Verdict.FAIL, bookkeeping))
            splitting = leaf_splitting(A, point, entry.inner_product, kernel)
            output.records.append(_record(label, "splitting", Verdict.PASS, splitting))
            output.notes.extend(f"{label}: {note}" for note in splitting.notes)
        return output

    def _weinstein(self, name: str, point: Point) -> CheckOutput:
        entry = self.job.algebroids[name]
        A = entry.algebroid
        opts = self.job.options
        kernel = kernel_module(A, entry.kernel_degree_bound)
        Z = build_weinstein_bisubmersion(A, point, entry.inner_product, kernel, samples=opts.samples, seed=opts.seed)
        output = CheckOutput([_record(name, "construction", Verdict.PASS, Z)])
        output.records.append(_record(
            name,
            "target_ignores_group",
            Verdict.FAIL if Z.t_depends_on_group else Verdict.PASS,
            {"t_depends_on_group": Z.t_depends_on_group},
        ))
        self._verify(Z.bisubmersion, output)
        output.records.append(self._psi_commutation(name, Z, output))
        diagram = diagram_check_weinstein(Z, opts.samples, opts.seed, opts.tolerance, opts.grid)
        output.records.append(_record(name, "weinstein_diagram", diagram.verdict, diagram))
        output.notes.extend(diagram.notes)
        output.notes.append("openness of ψ is not certified; only rank checks of the composite maps run")
        return output

    def _psi_commutation(self, name: str, Z: ZBisubmersion, output: CheckOutput) -> CheckRecord:
        opts = self.job.options
        B = Z.bisubmersion
        z = B.sample_points(opts.samples, opts.seed)
        try:
            reps = psi_representative(Z, z, opts.grid)
        except APathError as e:
            return _record(name, "psi_commutation", Verdict.COMMUTATION_FAILURE, {"message": str(e)})
        y, _, _ = Z.split(z)
        source_gap = float(max(np.max(np.abs(rep.source - base)) for rep, base in zip(reps, y)))
        target_gap = float(max(rep.target_gap for rep in reps))
        residual = float(max(rep.residual for rep in reps))
        verdict = Verdict.COMMUTES if max(source_gap, target_gap) <= APATH_RESIDUAL_TOL else Verdict.COMMUTATION_FAILURE
        if self.options.exports:
            chart = Z.algebroid.chart
            for i, rep in enumerate(reps[:EXPORTED_REPRESENTATIVES]):
                output.blocks.append(apath_block(f"{name}/psi/{i}", chart.variables, Z.algebroid.frame, rep.path))
        return _record(name, "psi_commutation", verdict, {
            "samples": len(reps),
            "source_gap": source_gap,
            "target_gap": target_gap,
            "anchor_residual": residual,
        })

    # --- flows ----------------------------------------------------------------------

    def _composition(self, item: Dict[str, Any], formula) -> CheckOutput:
        result = formula(item["X"], item["Y"], item["point"], item["t"], self.job.flows.step, self.job.options.tolerance)
        kind = "flow_sum" if formula is flow_sum_compose else "middle_term"
        label = f"{item['X'].to_source()} + {item['Y'].to_source()}"
        return CheckOutput([_record(label, kind, result.verdict, result)])

    def _acceleration(self, label: str, item: Dict[str, Any]) -> CheckOutput:
        report = accel_velocity_check(item["field"], item["point"])
        verdict = Verdict.WITHIN_TOLERANCE if report.residual <= ACCEL_RESIDUAL_TOL else Verdict.OUT_OF_TOLERANCE
        return CheckOutput([_record(label, "acceleration", verdict, report)])

    def _convergence(self, item: Dict[str, Any]) -> CheckOutput:
        ratio = convergence_ratio(item["X"], item["point"], item["t"], item["exact"], item["step"])
        verdict = Verdict.WITHIN_TOLERANCE if ratio >= RK4_ORDER_RATIO_MIN else Verdict.OUT_OF_TOLERANCE
        details = {"ratio": ratio, "minimum": RK4_ORDER_RATIO_MIN, "step": item["step"]}
        return CheckOutput([_record(item["X"].to_source(), "rk4_order", verdict, details)])

    def _trace(self, index: int, item: Dict[str, Any]) -> CheckOutput:
        chart = self.job.flows.chart
        spec = FlowSpec(step=self.job.flows.step, t1=item["t"])
        times, points = flow_trace(item["X"], item["point"], spec)
        output = CheckOutput([_record(item["X"].to_source(), "trace", Verdict.PASS, {
            "steps": int(len(times) - 1),
            "end": points[-1].tolist(),
        })])
        if self.options.exports:
            output.blocks.append(trace_block(f"traces/{index}", chart.variables, times, points))
        return output

    # --- running ----------------------------------------------------------------

    def _run_task(self, task: CheckTask) -> CheckOutput:
        started = time.perf_counter()
        try:
            output = task.run()
        except USAGE_ERRORS:
            raise
        except FoliaError as e:
            message = f"❌ {task.kind} check of {task.name} failed: {type(e).__name__}: {e}"
            logger.warning(message)
            self.stats['errors'].append(message)
            details = {"error": type(e).__name__, "message": str(e)}
            output = CheckOutput([_record(task.name, task.kind, Verdict.INCONCLUSIVE, details)])
        output.elapsed = time.perf_counter() - started
        return output

    async def run_checks(self, tasks: List[CheckTask]) -> List[CheckOutput]:
        """Run the checks concurrently; results come back in input order"""
        logger.info(f"⚡ Running {len(tasks)} checks with up to {self.parallel_checks} in parallel")
        semaphore = asyncio.Semaphore(self.parallel_checks)

        async def run_check_with_semaphore(task: CheckTask) -> CheckOutput:
            async with semaphore:
                return await asyncio.to_thread(self._run_task, task)

        return await asyncio.gather(*(run_check_with_semaphore(task) for task in tasks))

    async def run(self) -> Tuple[Report, List[DataBlock]]:
        started = time.perf_counter()
        logger.info(f"🚀 Starting {self.command} on {self.job.path}")
        tasks = self.plan()
        self.stats['checks_planned'] = len(tasks)
        outputs = await self.run_checks(tasks)

        options = {**self.job.options.to_dict(), **self.options.to_dict()}
        report = Report(
            command=self.command,
            config_path=str(self.job.path),
            config_hash=config_hash(self.job.source, options),
            options=options,
        )
        blocks: List[DataBlock] = []
        for output in outputs:
            for record in output.records:
                report.add(record)
            blocks.extend(output.blocks)
        report.notes = merge_notes(
            [f"unknown config key skipped: {pointer}" for pointer in self.job.skipped],
            *(output.notes for output in outputs),
        )
        if self.options.timing:
            report.timing = {f"{task.kind}:{task.name}": output.elapsed for task, output in zip(tasks, outputs)}

        self.stats['records'] = len(report.checks)
        for record in report.checks:
            if record.outcome == Outcome.PASS:
                self.stats['passed'] += 1
            elif record.outcome == Outcome.REFUTED:
                self.stats['refuted'] += 1
                logger.info(f"❌ {record.kind} {record.name}: {record.verdict.value}")
            else:
                self.stats['inconclusive'] += 1
                logger.info(f"⚠️ {record.kind} {record.name}: {record.verdict.value}")
        self.stats['processing_time_seconds'] = time.perf_counter() - started

        logger.info(f"✅ {self.command} completed:")
        logger.info(f"   📊 Checks run: {self.stats['checks_planned']}")
        logger.info(f"   ✅ Passed: {self.stats['passed']}")
        logger.info(f"   ❌ Refuted: {self.stats['refuted']}")
        logger.info(f"   ⚠️ Inconclusive: {self.stats['inconclusive']}")
        logger.info(f"   ⏱️ Processing time: {self.stats['processing_time_seconds']:.2f} seconds")
        return report, blocks


def run_pipeline(job: JobConfig, command: str, options: Optional[PipelineOptions] = None) -> Tuple[Report, List[DataBlock]]:
    """Synchronous entry point used by the CLI and the tests"""
    return asyncio.run(VerificationPipeline(job, command, options).run())

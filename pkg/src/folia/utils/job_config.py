#!/usr/bin/env python3
"""
Job configuration for folia
Reads a JSON (or YAML) job file, validates it against the bundled schema and
resolves every cross-reference into charts, fields, modules, maps, groupoids
and algebroids.
"""

import logging
from dataclasses import dataclass, field, replace
from fractions import Fraction
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import yaml

from folia.components.algebroid import Algebroid
from folia.components.bisubm import BiSubmersion, Bisection, constant_bisection, make_bisubmersion
from folia.components.charts import Chart, SmoothMap, VectorField, VfModule
from folia.components.expr import parse_expr, parse_rational
from folia.components.flows import TimeDependentField
from folia.components.groups import (
    AbelianGroupModel,
    BCHGroupModel,
    GroupBundle,
    Groupoid,
    GroupModel,
    MatrixGroupModel,
    PairGroupoid,
    TranslationGroupoid,
)
from folia.config.configuration import APATH_GRID, BALL_RADIUS, DEGREE_BOUND, FLOW_STEP, SAMPLES, SEED, TOLERANCE
from folia.utils.errors import ConfigError, FoliaError

logger = logging.getLogger(__name__)

SCHEMA_FILE = Path(__file__).resolve().parent.parent / "config" / "job_schema.yaml"

Point = Tuple[Fraction, ...]


@lru_cache(maxsize=1)
def load_schema() -> Dict[str, Any]:
    """Load the job schema bundled with the package"""
    with open(SCHEMA_FILE, "r") as f:
        return yaml.safe_load(f)


@dataclass(frozen=True)
class JobOptions:
    """Global options; CLI flags override the file, the file overrides the environment"""
    name: str = "job"
    degree_bound: int = DEGREE_BOUND
    tolerance: float = TOLERANCE
    samples: int = SAMPLES
    seed: int = SEED
    grid: int = APATH_GRID

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "degree_bound": self.degree_bound,
            "tolerance": self.tolerance,
            "samples": self.samples,
            "seed": self.seed,
            "grid": self.grid,
        }


@dataclass
class BisubmersionJob:
    """A configured bi-submersion; the submersion checks run when it is built"""
    name: str
    chart: Chart
    s: SmoothMap
    t: SmoothMap
    kernel_s: Optional[Tuple[VectorField, ...]] = None
    kernel_t: Optional[Tuple[VectorField, ...]] = None
    base: Optional[Point] = None
    ball_radius: float = BALL_RADIUS
    source_module: Optional[VfModule] = None
    target_module: Optional[VfModule] = None
    groupoid: Optional[Groupoid] = None
    psi: Optional[SmoothMap] = None
    bisections: Dict[str, Dict[str, Any]] = field(default_factory=dict)

    def build(self, options: JobOptions) -> BiSubmersion:
        extra: Dict[str, Any] = {"ball_radius": self.ball_radius}
        if self.base is not None:
            extra["base"] = tuple(float(c) for c in self.base)
        if self.source_module is not None:
            extra["source_module"] = self.source_module
        if self.target_module is not None:
            extra["target_module"] = self.target_module
        return make_bisubmersion(
            self.name,
            self.chart,
            self.s,
            self.t,
            kernel_s=self.kernel_s,
            kernel_t=self.kernel_t,
            degree_bound=options.degree_bound,
            seed=options.seed,
            samples=options.samples,
            **extra,
        )

    def build_bisection(self, B: BiSubmersion, name: str) -> Bisection:
        spec = self.bisections[name]
        if "map" in spec:
            return Bisection(name, spec["map"])
        return constant_bisection(B, spec.get("values", ()), name)


@dataclass
class HolonomyJob:
    name: str
    module: VfModule
    point: Point
    minimal: bool = False
    group_model: Optional[GroupModel] = None
    radius: float = BALL_RADIUS


@dataclass
class AlgebroidJob:
    algebroid: Algebroid
    inner_product: Optional[List[List[float]]] = None
    points: List[Point] = field(default_factory=list)
    kernel_degree_bound: Optional[int] = None
    weinstein_point: Optional[Point] = None


@dataclass
class FlowJob:
    """Flow identities to check on one chart"""
    chart: Chart
    step: float = FLOW_STEP
    compositions: List[Dict[str, Any]] = field(default_factory=list)
    middle_terms: List[Dict[str, Any]] = field(default_factory=list)
    accelerations: List[Dict[str, Any]] = field(default_factory=list)
    convergence: List[Dict[str, Any]] = field(default_factory=list)
    traces: List[Dict[str, Any]] = field(default_factory=list)


@dataclass
class JobConfig:
    """A resolved job file"""
    path: Path
    source: bytes
    options: JobOptions
    charts: Dict[str, Chart] = field(default_factory=dict)
    fields: Dict[str, VectorField] = field(default_factory=dict)
    modules: Dict[str, VfModule] = field(default_factory=dict)
    module_points: Dict[str, List[Point]] = field(default_factory=dict)
    maps: Dict[str, SmoothMap] = field(default_factory=dict)
    groupoids: Dict[str, Groupoid] = field(default_factory=dict)
    bisubmersions: Dict[str, BisubmersionJob] = field(default_factory=dict)
    holonomies: Dict[str, HolonomyJob] = field(default_factory=dict)
    algebroids: Dict[str, AlgebroidJob] = field(default_factory=dict)
    points: Dict[str, Point] = field(default_factory=dict)
    flows: Optional[FlowJob] = None
    skipped: List[str] = field(default_factory=list)


# --- reading and validation -------------------------------------------------------

def read_job_document(path: Path) -> Tuple[bytes, Dict[str, Any]]:
    """Raw bytes and parsed document; syntax errors carry line and column"""
    if not path.exists():
        raise ConfigError(f"Config file not found: {path}")
    source = path.read_bytes()
    try:
        document = yaml.safe_load(source.decode("utf-8"))
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        problem = getattr(e, "problem", None) or str(e)
        if mark is not None:
            raise ConfigError(f"Cannot parse {path.name}: {problem}", line=mark.line + 1, column=mark.column + 1)
        raise ConfigError(f"Cannot parse {path.name}: {problem}")
    except UnicodeDecodeError as e:
        raise ConfigError(f"{path.name} is not UTF-8: {e}")
    if not isinstance(document, dict):
        raise ConfigError("The job document must be an object", "/")
    return source, document


def _is_number(value: Any) -> bool:
    if isinstance(value, bool):
        return False
    if isinstance(value, (int, float)):
        return True
    if isinstance(value, str):
        try:
            parse_rational(value)
            return True
        except ValueError:
            return False
    return False


_TYPE_CHECKS = {
    "string": lambda v: isinstance(v, str),
    "integer": lambda v: isinstance(v, int) and not isinstance(v, bool),
    "number": _is_number,
    "list": lambda v: isinstance(v, list),
    "mapping": lambda v: isinstance(v, dict),
    "boolean": lambda v: isinstance(v, bool),
    "point": lambda v: isinstance(v, (list, str)),
}


def _check_value(rule: Dict[str, Any], value: Any, pointer: str, document: Dict[str, Any]) -> None:
    kind = rule["type"]
    if not _TYPE_CHECKS[kind](value):
        raise ConfigError(f"Expected a {kind}", pointer)
    if kind in ("integer", "number"):
        number = parse_rational(value)
        if "minimum" in rule and number < rule["minimum"]:
            raise ConfigError(f"Must be at least {rule['minimum']}", pointer)
        if rule.get("positive") and number <= 0:
            raise ConfigError("Must be positive", pointer)
    if "choices" in rule and value not in rule["choices"]:
        raise ConfigError(f"Must be one of {', '.join(rule['choices'])}", pointer)
    if "ref" in rule and value not in (document.get(rule["ref"]) or {}):
        raise ConfigError(f"Unresolved reference '{value}' into {rule['ref']}", pointer)
    if kind == "point" and isinstance(value, str) and value not in (document.get("points") or {}):
        raise ConfigError(f"Unresolved reference '{value}' into points", pointer)


def _check_entry(kind: str, entry: Any, pointer: str, document: Dict[str, Any], skipped: List[str]) -> Dict[str, Any]:
    rules = load_schema()["entries"][kind]
    if not isinstance(entry, dict):
        raise ConfigError("Expected an object", pointer)
    checked = {}
    for key, value in entry.items():
        if key not in rules:
            logger.warning(f"⚠️ Unknown key {pointer}/{key} skipped")
            skipped.append(f"{pointer}/{key}")
            continue
        _check_value(rules[key], value, f"{pointer}/{key}", document)
        checked[key] = value
    for key, rule in rules.items():
        if rule.get("required") and key not in entry:
            raise ConfigError(f"Missing required key '{key}'", pointer)
    return checked


def validate_document(document: Dict[str, Any]) -> Tuple[Dict[str, Any], List[str]]:
    """Document reduced to the known keys, plus the pointers of skipped keys"""
    schema = load_schema()
    skipped: List[str] = []
    clean: Dict[str, Any] = {}
    for key, value in document.items():
        pointer = f"/{key}"
        if key in schema["options"]:
            _check_value(schema["options"][key], value, pointer, document)
            clean[key] = value
        elif key in schema["sections"]:
            if not isinstance(value, dict):
                raise ConfigError("Expected an object of named entries", pointer)
            kind = schema["sections"][key]
            if kind == "coordinates":
                for name, coordinates in value.items():
                    if not isinstance(coordinates, list):
                        raise ConfigError("Expected a coordinate list", f"{pointer}/{name}")
                clean[key] = dict(value)
            else:
                clean[key] = {
                    name: _check_entry(kind, entry, f"{pointer}/{name}", document, skipped)
                    for name, entry in value.items()
                }
        elif key in schema["singletons"]:
            clean[key] = _check_entry(schema["singletons"][key], value, pointer, document, skipped)
        else:
            logger.warning(f"⚠️ Unknown key {pointer} skipped")
            skipped.append(pointer)
    return clean, skipped


# --- resolution -------------------------------------------------------------------

class _Resolver:
    """Builds folia objects from a validated document"""

    def __init__(self, document: Dict[str, Any], options: JobOptions, job: JobConfig):
        self.document = document
        self.options = options
        self.job = job

    def number(self, value: Any, pointer: str) -> float:
        try:
            return float(parse_rational(value))
        except ValueError as e:
            raise ConfigError(str(e), pointer)

    def point(self, value: Any, dimension: Optional[int], pointer: str) -> Point:
        if isinstance(value, str):
            if value not in self.job.points:
                raise ConfigError(f"Unresolved reference '{value}' into points", pointer)
            point = self.job.points[value]
        else:
            try:
                point = tuple(parse_rational(c) for c in value)
            except ValueError as e:
                raise ConfigError(str(e), pointer)
        if dimension is not None and len(point) != dimension:
            raise ConfigError(f"Expected {dimension} coordinates, got {len(point)}", pointer)
        return point

    def vector_field(self, value: Any, chart: Chart, pointer: str) -> VectorField:
        if isinstance(value, str):
            if value not in self.job.fields:
                raise ConfigError(f"Unresolved reference '{value}' into fields", pointer)
            X = self.job.fields[value]
            if X.chart != chart:
                raise ConfigError(f"Field '{value}' lives on '{X.chart.name}', expected '{chart.name}'", pointer)
            return X
        if not isinstance(value, list):
            raise ConfigError("Expected a field name or a component list", pointer)
        return self.guarded(lambda: VectorField.from_strings(chart, [str(c) for c in value]), pointer)

    def fields(self, values: Sequence[Any], chart: Chart, pointer: str) -> Tuple[VectorField, ...]:
        return tuple(self.vector_field(v, chart, f"{pointer}/{i}") for i, v in enumerate(values))

    @staticmethod
    def guarded(build, pointer: str):
        try:
            return build()
        except ConfigError:
            raise
        except (FoliaError, ValueError) as e:
            raise ConfigError(str(e), pointer)

    def group_model(self, spec: Dict[str, Any], pointer: str) -> GroupModel:
        spec = _check_entry("group", spec, pointer, self.document, self.job.skipped)
        kind = spec["kind"]
        radius = self.number(spec["radius"], f"{pointer}/radius") if "radius" in spec else None
        if kind == "abelian":
            if "dimension" not in spec:
                raise ConfigError("Abelian group models need a dimension", pointer)
            return AbelianGroupModel(spec["dimension"], radius if radius is not None else float("inf"))
        if kind == "bch":
            if "structure" not in spec:
                raise ConfigError("BCH group models need structure constants", pointer)
            constants = [[[self.number(v, pointer) for v in cell] for cell in row] for row in spec["structure"]]
            return self.guarded(lambda: BCHGroupModel(np.array(constants), radius or 0.5), pointer)
        if "basis" not in spec:
            raise ConfigError("Matrix group models need basis matrices", pointer)
        basis = [[[self.number(v, pointer) for v in row] for row in matrix] for matrix in spec["basis"]]
        return self.guarded(lambda: MatrixGroupModel(np.array(basis), radius or 1.0), pointer)

    def groupoid(self, spec: Dict[str, Any], pointer: str) -> Groupoid:
        kind, base_dim = spec["kind"], spec["base_dim"]
        if kind == "pair":
            return PairGroupoid(base_dim)
        if kind == "translation":
            return TranslationGroupoid(base_dim)
        if "group" not in spec:
            raise ConfigError("Group bundles need a group model", pointer)
        return GroupBundle(base_dim, self.group_model(spec["group"], f"{pointer}/group"))

    def resolve(self) -> JobConfig:
        doc, job = self.document, self.job
        for name, spec in (doc.get("charts") or {}).items():
            pointer = f"/charts/{name}"
            box = spec.get("box")
            job.charts[name] = self.guarded(
                lambda: Chart(name, tuple(str(v) for v in spec["variables"]), tuple(tuple(b) for b in box) if box else None),
                pointer,
            )
        for name, coordinates in (doc.get("points") or {}).items():
            job.points[name] = self.point(coordinates, None, f"/points/{name}")
        for name, spec in (doc.get("fields") or {}).items():
            chart = job.charts[spec["chart"]]
            job.fields[name] = self.vector_field(spec["components"], chart, f"/fields/{name}/components")
        for name, spec in (doc.get("modules") or {}).items():
            pointer = f"/modules/{name}"
            chart = job.charts[spec["chart"]]
            generators = self.fields(spec["generators"], chart, f"{pointer}/generators")
            job.modules[name] = self.guarded(lambda: VfModule(chart, generators, self.options.degree_bound), pointer)
            job.module_points[name] = [
                self.point(p, chart.dimension, f"{pointer}/points/{i}") for i, p in enumerate(spec.get("points", []))
            ]
        for name, spec in (doc.get("maps") or {}).items():
            source, target = job.charts[spec["source"]], job.charts[spec["target"]]
            job.maps[name] = self.guarded(
                lambda: SmoothMap.from_strings(name, source, target, [str(c) for c in spec["components"]]),
                f"/maps/{name}",
            )
        for name, spec in (doc.get("groupoids") or {}).items():
            job.groupoids[name] = self.groupoid(spec, f"/groupoids/{name}")
        for name, spec in (doc.get("bisubmersions") or {}).items():
            job.bisubmersions[name] = self.bisubmersion(name, spec, f"/bisubmersions/{name}")
        for name, spec in (doc.get("path_holonomy") or {}).items():
            pointer = f"/path_holonomy/{name}"
            module = job.modules[spec["module"]]
            job.holonomies[name] = HolonomyJob(
                name,
                module,
                self.point(spec["point"], module.chart.dimension, f"{pointer}/point"),
                bool(spec.get("minimal", False)),
                self.group_model(spec["group"], f"{pointer}/group") if "group" in spec else None,
                self.number(spec["radius"], f"{pointer}/radius") if "radius" in spec else BALL_RADIUS,
            )
        for name, spec in (doc.get("algebroids") or {}).items():
            job.algebroids[name] = self.algebroid(name, spec, f"/algebroids/{name}")
        if "flows" in doc:
            job.flows = self.flows(doc["flows"], "/flows")
        return job

    def bisubmersion(self, name: str, spec: Dict[str, Any], pointer: str) -> BisubmersionJob:
        job = self.job
        chart = job.charts[spec["chart"]]
        entry = BisubmersionJob(name, chart, job.maps[spec["s"]], job.maps[spec["t"]])
        for side in ("kernel_s", "kernel_t"):
            if side in spec:
                setattr(entry, side, self.fields(spec[side], chart, f"{pointer}/{side}"))
        if "base" in spec:
            entry.base = self.point(spec["base"], chart.dimension, f"{pointer}/base")
        if "ball_radius" in spec:
            entry.ball_radius = self.number(spec["ball_radius"], f"{pointer}/ball_radius")
        for side in ("source_module", "target_module"):
            if side in spec:
                setattr(entry, side, job.modules[spec[side]])
        if "groupoid" in spec:
            entry.groupoid = job.groupoids[spec["groupoid"]]
        if "psi" in spec:
            entry.psi = job.maps[spec["psi"]]
            if entry.psi.source != chart:
                raise ConfigError(f"ψ map '{spec['psi']}' is not defined on '{chart.name}'", f"{pointer}/psi")
        for label, bisection in (spec.get("bisections") or {}).items():
            checked = _check_entry("bisection", bisection, f"{pointer}/bisections/{label}", self.document, job.skipped)
            if "map" in checked:
                checked = {"map": job.maps[checked["map"]]}
            else:
                checked = {"values": [parse_rational(v) for v in checked.get("values", [])]}
            entry.bisections[label] = checked
        return entry

    def algebroid(self, name: str, spec: Dict[str, Any], pointer: str) -> AlgebroidJob:
        chart = self.job.charts[spec["chart"]]
        brackets = {}
        for pair, coefficients in (spec.get("brackets") or {}).items():
            labels = tuple(part.strip() for part in pair.split(","))
            if len(labels) != 2 or any(label not in spec["frame"] for label in labels):
                raise ConfigError(f"Bracket key '{pair}' must name two frame elements", f"{pointer}/brackets")
            if not isinstance(coefficients, dict) or any(e not in spec["frame"] for e in coefficients):
                raise ConfigError("Bracket coefficients must map frame elements to expressions", f"{pointer}/brackets/{pair}")
            brackets[labels] = {e: str(c) for e, c in coefficients.items()}
        A = self.guarded(
            lambda: Algebroid.from_strings(
                name,
                chart,
                [str(e) for e in spec["frame"]],
                [[str(c) for c in column] for column in spec["anchor"]],
                brackets,
                self.options.degree_bound,
            ),
            pointer,
        )
        entry = AlgebroidJob(A)
        if "inner_product" in spec:
            entry.inner_product = [[self.number(v, f"{pointer}/inner_product") for v in row] for row in spec["inner_product"]]
        entry.points = [self.point(p, chart.dimension, f"{pointer}/points/{i}") for i, p in enumerate(spec.get("points", []))]
        entry.kernel_degree_bound = spec.get("kernel_degree_bound")
        if "weinstein_point" in spec:
            entry.weinstein_point = self.point(spec["weinstein_point"], chart.dimension, f"{pointer}/weinstein_point")
        return entry

    def flows(self, spec: Dict[str, Any], pointer: str) -> FlowJob:
        chart = self.job.charts[spec["chart"]]
        entry = FlowJob(chart, self.number(spec["step"], f"{pointer}/step") if "step" in spec else FLOW_STEP)

        def pair(item: Dict[str, Any], at: str) -> Dict[str, Any]:
            for key in ("X", "Y", "point", "t"):
                if key not in item:
                    raise ConfigError(f"Missing required key '{key}'", at)
            return {
                "X": self.vector_field(item["X"], chart, f"{at}/X"),
                "Y": self.vector_field(item["Y"], chart, f"{at}/Y"),
                "point": self.point(item["point"], chart.dimension, f"{at}/point"),
                "t": self.number(item["t"], f"{at}/t"),
            }

        entry.compositions = [pair(item, f"{pointer}/compositions/{i}") for i, item in enumerate(spec.get("compositions", []))]
        entry.middle_terms = [pair(item, f"{pointer}/middle_terms/{i}") for i, item in enumerate(spec.get("middle_terms", []))]
        for i, item in enumerate(spec.get("accelerations", [])):
            at = f"{pointer}/accelerations/{i}"
            terms = []
            for j, term in enumerate(item.get("terms", [])):
                coefficient = self.guarded(lambda: parse_expr(str(term["coefficient"]), ("t",)), f"{at}/terms/{j}")
                terms.append((coefficient, self.vector_field(term["field"], chart, f"{at}/terms/{j}/field")))
            field_ = self.guarded(lambda: TimeDependentField(chart, tuple(terms)), at)
            entry.accelerations.append({"field": field_, "point": self.point(item["point"], chart.dimension, f"{at}/point")})
        for i, item in enumerate(spec.get("convergence", [])):
            at = f"{pointer}/convergence/{i}"
            exact = self.guarded(lambda: [float(parse_expr(str(c), ())) for c in item["exact"]], f"{at}/exact")
            entry.convergence.append({
                "X": self.vector_field(item["X"], chart, f"{at}/X"),
                "point": self.point(item["point"], chart.dimension, f"{at}/point"),
                "t": self.number(item["t"], f"{at}/t"),
                "exact": np.array(exact),
                "step": self.number(item.get("step", "1/10"), f"{at}/step"),
            })
        for i, item in enumerate(spec.get("traces", [])):
            at = f"{pointer}/traces/{i}"
            entry.traces.append({
                "X": self.vector_field(item["X"], chart, f"{at}/X"),
                "point": self.point(item["point"], chart.dimension, f"{at}/point"),
                "t": self.number(item.get("t", 1), f"{at}/t"),
            })
        return entry


def load_job_config(path, overrides: Optional[Dict[str, Any]] = None) -> JobConfig:
    """Read, validate and resolve a job file; overrides win over the file values"""
    path = Path(path)
    source, document = read_job_document(path)
    document, skipped = validate_document(document)
    options = JobOptions(
        name=str(document.get("name", path.stem)),
        degree_bound=int(document.get("degree_bound", DEGREE_BOUND)),
        tolerance=float(parse_rational(document.get("tolerance", TOLERANCE))),
        samples=int(document.get("samples", SAMPLES)),
        seed=int(document.get("seed", SEED)),
        grid=int(document.get("grid", APATH_GRID)),
    )
    overrides = {key: value for key, value in (overrides or {}).items() if value is not None}
    if overrides:
        options = replace(options, **overrides)
    job = JobConfig(path, source, options, skipped=skipped)
    _Resolver(document, options, job).resolve()
    logger.info(
        f"📄 Loaded job '{options.name}' from {path}: {len(job.bisubmersions)} bi-submersions, "
        f"{len(job.modules)} modules, {len(job.algebroids)} algebroids"
    )
    return job

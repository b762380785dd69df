"""Bundled reproduction scenarios and the loader for user-written ones.

A scenario is a pretty-printed JSON object (see README.md, "Scenario files").
Each kind has a pydantic model describing the file as written: interval
endpoints, constructions and distance values in the file's `units`, while
probabilities, confidences and the margin threshold are always fractions.
Loading validates against that model and converts the result to a `Scenario`
in fractions; `serialize_scenario` converts back, so a loaded file serializes to
the same JSON value.
"""

from __future__ import annotations

import glob
import json
import logging
import math
import os
from dataclasses import dataclass, field
from typing import Annotated, Any, Literal

import yaml
from pydantic import AfterValidator, BaseModel, ConfigDict, Field, PositiveFloat, ValidationError, field_validator, model_validator

from utils import settings
from utils.copulas import CopulaFamily
from utils.errors import DomainError, ScenarioError
from utils.marginal_fit import Interval, constructed_leader, overlapping_runner_up

logger = logging.getLogger(__name__)

TIERS = ("smoke", "golden")
UNITS = ("percent", "fraction")

Bounds = tuple[float, float]


# --- file schema ------------------------------------------------------------------------


def _open_unit(x: float) -> float:
    if not 0.0 < x < 1.0:
        raise ValueError(f"expected a value in (0, 1), got {x}")
    return x


def _closed_unit(x: float) -> float:
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"expected a value in [0, 1], got {x}")
    return x


def _not_blank(s: str) -> str:
    if not s.strip():
        raise ValueError("expected a non-empty string")
    return s


OpenUnit = Annotated[float, AfterValidator(_open_unit)]
ClosedUnit = Annotated[float, AfterValidator(_closed_unit)]
Text = Annotated[str, AfterValidator(_not_blank)]
Tolerance = Annotated[float, Field(ge=0.0)]


class _FileModel(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True, allow_inf_nan=False)


class BoundsFile(_FileModel):
    low: float
    high: float

    @model_validator(mode="after")
    def _ordered(self):
        if not self.low < self.high:
            raise ValueError(f"low must be < high, got [{self.low}, {self.high}]")
        return self


class ConstructionFile(_FileModel):
    upper: float
    epsilon: PositiveFloat
    overlap: float


class VariantFile(_FileModel):
    label: Text
    overlap: float | None = None
    runner_up_interval: BoundsFile | None = None

    @model_validator(mode="after")
    def _one_runner_up(self):
        if (self.overlap is None) == (self.runner_up_interval is None):
            raise ValueError("give exactly one of 'overlap' or 'runner_up_interval'")
        return self


class MethodFile(_FileModel):
    name: Text
    leader_interval: BoundsFile
    runner_up_interval: BoundsFile


class ExpectedFile(_FileModel):
    provenance: str
    rho: float | None = None
    confidence: float | None = None
    variant: Text | None = None
    gamma: float | None = None
    delta: float | None = None
    win_probability: ClosedUnit | None = None
    win_at_least: ClosedUnit | None = None
    margin_probability: ClosedUnit | None = None
    tolerance: Tolerance | None = None
    margin_tolerance: Tolerance | None = None
    method: Text | None = None
    metric: Text | None = None
    value: float | None = None
    row: Text | None = None
    column: Text | None = None

    @field_validator("provenance")
    @classmethod
    def _tagged(cls, v: str) -> str:
        if v.split(":", 1)[0].strip() not in ("published", "derived"):
            raise ValueError("provenance must start with 'published:' or 'derived:'")
        return v


class _ScenarioFile(_FileModel):
    id: Text
    description: Text
    kind: str
    units: Literal["percent", "fraction"] = "fraction"
    margin_threshold: PositiveFloat | None = None
    annotations: dict[str, Any] | None = None
    expected: list[ExpectedFile]


class _SimulatedFile(_ScenarioFile):
    n: dict[str, Annotated[int, Field(ge=1)]]

    @field_validator("n")
    @classmethod
    def _both_tiers(cls, v: dict) -> dict:
        if set(v) != set(TIERS):
            raise ValueError(f"n must map exactly the tiers {', '.join(TIERS)} to sample counts")
        return v


class WinProbFile(_SimulatedFile):
    kind: Literal["winprob"]
    confidence: OpenUnit | None = None
    confidence_grid: Annotated[list[OpenUnit], Field(min_length=1)] | None = None
    leader_interval: BoundsFile | None = None
    runner_up_interval: BoundsFile | None = None
    construction: ConstructionFile | None = None
    variants: Annotated[list[VariantFile], Field(min_length=1)] | None = None
    copula_family: str
    rho_grid: Annotated[list[float], Field(min_length=1)]

    @field_validator("copula_family")
    @classmethod
    def _known_family(cls, v: str) -> str:
        CopulaFamily.parse(v)
        return v

    @field_validator("rho_grid")
    @classmethod
    def _rho_range(cls, v: list[float]) -> list[float]:
        for r in v:
            if abs(r) > 1.0:
                raise ValueError(f"Spearman rho must lie in [-1, 1], got {r}")
        return v

    @model_validator(mode="after")
    def _intervals_given(self):
        explicit = self.leader_interval is not None or self.runner_up_interval is not None
        if self.construction is None and (self.leader_interval is None or self.runner_up_interval is None):
            raise ValueError("a winprob scenario needs leader_interval and runner_up_interval, or a construction")
        if self.construction is not None and explicit:
            raise ValueError("give either explicit intervals or a construction, not both")
        if self.confidence is None and not self.confidence_grid:
            raise ValueError("a winprob scenario needs confidence or confidence_grid")
        variants = self.variants or []
        if any(v.overlap is not None for v in variants) and self.construction is None:
            raise ValueError("overlap variants need a construction")
        labels = [v.label for v in variants]
        if len(labels) != len(set(labels)):
            raise ValueError("variant labels must be unique")
        return self


class CountermonotoneFile(_SimulatedFile):
    kind: Literal["countermonotone"]
    gamma_grid: Annotated[list[OpenUnit], Field(min_length=1)]
    beta_shape: PositiveFloat | None = None


class GDeltaFile(CountermonotoneFile):
    kind: Literal["g_delta"]
    delta_grid: Annotated[list[OpenUnit], Field(min_length=1)]


class DiagnosticsFile(_ScenarioFile):
    kind: Literal["diagnostics"]
    methods: Annotated[list[MethodFile], Field(min_length=1)]


_FILE_MODELS: dict[str, type[_ScenarioFile]] = {
    "winprob": WinProbFile,
    "countermonotone": CountermonotoneFile,
    "g_delta": GDeltaFile,
    "diagnostics": DiagnosticsFile,
}
KINDS = tuple(_FILE_MODELS)


# --- error positions ------------------------------------------------------------------


def _field_name(loc: tuple) -> str:
    out = ""
    for part in loc:
        out += f"[{part}]" if isinstance(part, int) else (f".{part}" if out else part)
    return out


def _line_of(text: str, loc: tuple) -> int | None:
    """Source line of the key or list item at `loc`, read from the YAML node marks
    of the document (JSON parses as YAML)."""
    if not loc:
        return None
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError:
        return None
    line = None
    for part in loc:
        if isinstance(node, yaml.MappingNode) and isinstance(part, str):
            match = next(((k, v) for k, v in node.value if k.value == part), None)
            if match is None:
                break
            line, node = match[0].start_mark.line + 1, match[1]
        elif isinstance(node, yaml.SequenceNode) and isinstance(part, int) and part < len(node.value):
            node = node.value[part]
            line = node.start_mark.line + 1
        else:
            break
    return line


def _error(text: str, path: str | None, message: str, loc: tuple = ()) -> ScenarioError:
    return ScenarioError(message, path=path, line=_line_of(text, loc), field=_field_name(loc) or None)


def _first_error(exc: ValidationError) -> tuple[str, tuple]:
    err = exc.errors()[0]
    message = err["msg"]
    if message.startswith("Value error, "):
        message = message[len("Value error, "):]
    return message, tuple(err["loc"])


# --- scenario model ---------------------------------------------------------------------


@dataclass(frozen=True)
class Construction:
    """Leader [upper - 2 epsilon, upper]; runner-up of the same width whose upper
    end sits `overlap` above the leader's lower end."""

    upper: float
    epsilon: float
    overlap: float

    def leader(self, confidence: float) -> Interval:
        return constructed_leader(self.upper, self.epsilon, confidence)

    def runner_up(self, confidence: float, overlap: float | None = None) -> Interval:
        return overlapping_runner_up(self.leader(confidence), self.overlap if overlap is None else overlap, self.epsilon)


@dataclass(frozen=True)
class Variant:
    label: str
    overlap: float | None = None
    runner_up: Bounds | None = None


@dataclass(frozen=True)
class Method:
    name: str
    leader: Bounds
    runner_up: Bounds


@dataclass(frozen=True)
class ExpectedRecord:
    provenance: str
    values: dict = field(default_factory=dict)

    def get(self, key: str, default=None):
        return self.values.get(key, default)

    def matches(self, **point) -> bool:
        """True when every coordinate the record pins down equals the point's."""
        for key, value in point.items():
            mine = self.values.get(key)
            if mine is None:
                continue
            if isinstance(mine, float) or isinstance(value, float):
                if value is None or not math.isclose(mine, value, rel_tol=0.0, abs_tol=1e-12):
                    return False
            elif mine != value:
                return False
        return True

    def as_dict(self) -> dict:
        return {"provenance": self.provenance, **self.values}


@dataclass(frozen=True)
class Scenario:
    id: str
    description: str
    kind: str
    units: str = "fraction"
    confidence: float | None = None
    confidence_grid: tuple[float, ...] | None = None
    leader: Bounds | None = None
    runner_up: Bounds | None = None
    construction: Construction | None = None
    variants: tuple[Variant, ...] = ()
    copula_family: CopulaFamily | None = None
    rho_grid: tuple[float, ...] = ()
    n: dict = field(default_factory=dict)
    margin_threshold: float | None = None
    gamma_grid: tuple[float, ...] = ()
    delta_grid: tuple[float, ...] = ()
    beta_shape: float | None = None
    methods: tuple[Method, ...] = ()
    annotations: dict | None = None
    expected: tuple[ExpectedRecord, ...] = ()
    path: str | None = field(default=None, compare=False)

    @property
    def scale(self) -> float:
        return 100.0 if self.units == "percent" else 1.0

    def confidences(self) -> tuple[float, ...]:
        if self.confidence_grid:
            return self.confidence_grid
        return (self.confidence,) if self.confidence is not None else ()

    def samples_for(self, tier: str) -> int:
        if tier not in TIERS:
            raise ScenarioError(f"unknown tier {tier!r}; expected one of {', '.join(TIERS)}")
        return int(self.n[tier])

    def leader_interval(self, confidence: float) -> Interval:
        if self.construction is not None:
            return self.construction.leader(confidence)
        return Interval(*self.leader, confidence)

    def runner_up_interval(self, confidence: float, variant: Variant | None = None) -> Interval:
        if variant is not None and variant.runner_up is not None:
            return Interval(*variant.runner_up, confidence)
        if self.construction is not None:
            return self.construction.runner_up(confidence, variant.overlap if variant is not None else None)
        return Interval(*self.runner_up, confidence)

    def variant_list(self) -> tuple[Variant | None, ...]:
        return self.variants or (None,)

    def expected_for(self, **point) -> list[ExpectedRecord]:
        return [rec for rec in self.expected if rec.matches(**point)]


@dataclass(frozen=True)
class CatalogEntry:
    id: str
    description: str
    kind: str
    path: str


# --- parsing ------------------------------------------------------------------------------


class _Converter:
    """Turns a validated file model into a Scenario in fractions, reporting
    interval-domain errors at the field they came from."""

    def __init__(self, text: str, path: str | None, scale: float):
        self.text = text
        self.path = path
        self.scale = scale

    def bounds(self, b: BoundsFile, *loc) -> Bounds:
        low, high = b.low / self.scale, b.high / self.scale
        try:
            Interval(low, high, 0.5)
        except DomainError as exc:
            raise _error(self.text, self.path, str(exc), loc) from None
        return low, high

    def construction(self, c: ConstructionFile) -> Construction:
        out = Construction(upper=c.upper / self.scale, epsilon=c.epsilon / self.scale, overlap=c.overlap / self.scale)
        try:
            out.runner_up(0.5)
        except DomainError as exc:
            raise _error(self.text, self.path, str(exc), ("construction",)) from None
        return out

    def variants(self, items: list[VariantFile]) -> tuple[Variant, ...]:
        return tuple(
            Variant(
                v.label,
                None if v.overlap is None else v.overlap / self.scale,
                None if v.runner_up_interval is None else self.bounds(v.runner_up_interval, "variants", i, "runner_up_interval"),
            )
            for i, v in enumerate(items)
        )

    def methods(self, items: list[MethodFile]) -> tuple[Method, ...]:
        return tuple(
            Method(
                m.name,
                self.bounds(m.leader_interval, "methods", i, "leader_interval"),
                self.bounds(m.runner_up_interval, "methods", i, "runner_up_interval"),
            )
            for i, m in enumerate(items)
        )


def _expected_record(rec: ExpectedFile) -> ExpectedRecord:
    return ExpectedRecord(rec.provenance, rec.model_dump(exclude_unset=True, exclude={"provenance"}))


def parse_scenario(text: str, path: str | None = None) -> Scenario:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"invalid JSON: {exc.msg}", path=path, line=exc.lineno) from None
    if not isinstance(raw, dict):
        raise ScenarioError("a scenario file holds one JSON object", path=path, line=1)
    if "kind" not in raw:
        raise ScenarioError("missing required field 'kind'", path=path, field="kind")
    model = _FILE_MODELS.get(raw["kind"]) if isinstance(raw["kind"], str) else None
    if model is None:
        raise _error(text, path, f"unknown kind {raw['kind']!r}; expected one of {', '.join(KINDS)}", ("kind",))
    try:
        doc = model.model_validate_json(text, strict=True)
    except ValidationError as exc:
        message, loc = _first_error(exc)
        raise _error(text, path, message, loc) from None

    conv = _Converter(text, path, 100.0 if doc.units == "percent" else 1.0)
    fields: dict[str, Any] = {
        "id": doc.id,
        "description": doc.description,
        "kind": doc.kind,
        "units": doc.units,
        "margin_threshold": doc.margin_threshold,
        "annotations": doc.annotations,
        "expected": tuple(_expected_record(rec) for rec in doc.expected),
        "path": path,
    }
    if isinstance(doc, _SimulatedFile):
        fields["n"] = dict(doc.n)
    if isinstance(doc, WinProbFile):
        fields.update(
            confidence=doc.confidence,
            confidence_grid=tuple(doc.confidence_grid) if doc.confidence_grid else None,
            copula_family=CopulaFamily.parse(doc.copula_family),
            rho_grid=tuple(doc.rho_grid),
        )
        if doc.leader_interval is not None:
            fields["leader"] = conv.bounds(doc.leader_interval, "leader_interval")
            fields["runner_up"] = conv.bounds(doc.runner_up_interval, "runner_up_interval")
        if doc.construction is not None:
            fields["construction"] = conv.construction(doc.construction)
        if doc.variants:
            fields["variants"] = conv.variants(doc.variants)
    if isinstance(doc, CountermonotoneFile):
        fields["gamma_grid"] = tuple(doc.gamma_grid)
        fields["beta_shape"] = doc.beta_shape
    if isinstance(doc, GDeltaFile):
        fields["delta_grid"] = tuple(doc.delta_grid)
    if isinstance(doc, DiagnosticsFile):
        fields["methods"] = conv.methods(doc.methods)

    scenario = Scenario(**fields)
    logger.debug("loaded scenario %s (%s) from %s", scenario.id, scenario.kind, path)
    return scenario


def load_scenario(path: str) -> Scenario:
    try:
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario file: {exc.strerror}", path=path) from None
    return parse_scenario(text, path)


# --- serializing ----------------------------------------------------------------------


def _out(x: float, scale: float) -> float:
    return round(x * scale, 10) if scale != 1.0 else x


def _bounds_out(b: Bounds, scale: float) -> dict:
    return {"low": _out(b[0], scale), "high": _out(b[1], scale)}


def scenario_to_dict(s: Scenario) -> dict:
    k = s.scale
    out: dict[str, Any] = {"id": s.id, "description": s.description, "kind": s.kind, "units": s.units}
    if s.confidence is not None:
        out["confidence"] = s.confidence
    if s.confidence_grid:
        out["confidence_grid"] = list(s.confidence_grid)
    if s.leader is not None:
        out["leader_interval"] = _bounds_out(s.leader, k)
    if s.runner_up is not None:
        out["runner_up_interval"] = _bounds_out(s.runner_up, k)
    if s.construction is not None:
        c = s.construction
        out["construction"] = {"upper": _out(c.upper, k), "epsilon": _out(c.epsilon, k), "overlap": _out(c.overlap, k)}
    if s.variants:
        items = []
        for v in s.variants:
            item: dict[str, Any] = {"label": v.label}
            if v.overlap is not None:
                item["overlap"] = _out(v.overlap, k)
            if v.runner_up is not None:
                item["runner_up_interval"] = _bounds_out(v.runner_up, k)
            items.append(item)
        out["variants"] = items
    if s.copula_family is not None:
        out["copula_family"] = s.copula_family.value
    if s.rho_grid:
        out["rho_grid"] = list(s.rho_grid)
    if s.n:
        out["n"] = dict(s.n)
    if s.margin_threshold is not None:
        out["margin_threshold"] = s.margin_threshold
    if s.gamma_grid:
        out["gamma_grid"] = list(s.gamma_grid)
    if s.delta_grid:
        out["delta_grid"] = list(s.delta_grid)
    if s.beta_shape is not None:
        out["beta_shape"] = s.beta_shape
    if s.methods:
        out["methods"] = [
            {"name": m.name, "leader_interval": _bounds_out(m.leader, k), "runner_up_interval": _bounds_out(m.runner_up, k)}
            for m in s.methods
        ]
    if s.annotations is not None:
        out["annotations"] = s.annotations
    out["expected"] = [rec.as_dict() for rec in s.expected]
    return out


def serialize_scenario(s: Scenario) -> str:
    return json.dumps(scenario_to_dict(s), indent=2, ensure_ascii=False) + "\n"


# --- catalog -------------------------------------------------------------------------------


def list_scenarios(directory: str | None = None) -> list[CatalogEntry]:
    directory = directory or settings.scenario_dir()
    entries = []
    for path in sorted(glob.glob(os.path.join(directory, "*.json"))):
        s = load_scenario(path)
        entries.append(CatalogEntry(s.id, s.description, s.kind, path))
    ids = [e.id for e in entries]
    if len(ids) != len(set(ids)):
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        raise ScenarioError(f"duplicate scenario id(s) in catalog: {', '.join(dupes)}", path=directory)
    return sorted(entries, key=lambda e: e.id)


def find_scenario(scenario_id: str, directory: str | None = None) -> Scenario:
    """Bundled scenario by id, or a user file when scenario_id is a path."""
    if scenario_id.endswith(".json") and os.path.isfile(scenario_id):
        return load_scenario(scenario_id)
    catalog = list_scenarios(directory)
    for entry in catalog:
        if entry.id == scenario_id:
            return load_scenario(entry.path)
    available = ", ".join(e.id for e in catalog)
    raise ScenarioError(f"unknown scenario {scenario_id!r}; available: {available}")

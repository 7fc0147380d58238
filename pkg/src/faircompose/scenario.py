"""Validated scenario files for the command line runner."""

from __future__ import annotations

from pathlib import Path
from typing import Annotated, Literal

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, model_validator

SCHEMA_VERSION = 1


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class GaussianQualification(_Model):
    """Independent normal draws per universe, clamped to [0, 1]."""

    kind: Literal["gaussian"] = "gaussian"
    mean: float = 0.5
    sd: float = Field(0.25, gt=0)


class ExplicitQualification(_Model):
    kind: Literal["explicit"]
    values: list[Annotated[float, Field(ge=0, le=1)]]


class ExplicitClassifierSpec(_Model):
    kind: Literal["explicit"]
    probs: list[Annotated[float, Field(ge=0, le=1)]]


class OptimizeClassifierSpec(_Model):
    """Fair LP classifier maximizing ``sum(qualification * p)`` under ``cap``."""

    kind: Literal["optimize"] = "optimize"
    cap: float = Field(gt=0)


class TaskSpec(_Model):
    name: str
    qualification: Annotated[GaussianQualification | ExplicitQualification, Field(discriminator="kind")] = (
        GaussianQualification()
    )
    metric: Literal["abs_diff"] | list[list[float]] = "abs_diff"
    classifier: Annotated[ExplicitClassifierSpec | OptimizeClassifierSpec, Field(discriminator="kind")]


class PopulationSpec(_Model):
    size: int = Field(ge=1)
    columns: dict[str, list[str | int | float | bool]] = Field(default_factory=dict)


class TieBreakSpec(_Model):
    """``strict`` ranks task names; ``value`` gives Pr[first task] when both fire.

    ``rho_from`` names a task whose qualification is used as the per-element
    value instead of a constant ``rho``.
    """

    kind: Literal["strict", "uniform", "value"]
    order: list[str] | None = None
    rho: float | None = Field(None, ge=0, le=1)
    rho_from: str | None = None

    @model_validator(mode="after")
    def _check(self):
        if self.kind == "strict" and not self.order:
            raise ValueError("strict tie-break needs an order")
        if self.kind == "value" and (self.rho is None) == (self.rho_from is None):
            raise ValueError("value tie-break needs exactly one of rho or rho_from")
        return self


class _CompositionBase(_Model):
    label: str | None = None
    universes: int | None = Field(None, ge=1)


class FunctionalComposition(_CompositionBase):
    type: Literal["functional"]
    op: Literal["or", "and", "xor", "threshold"]
    tasks: list[str] = Field(min_length=1)
    k: int | None = None
    audit_task: str | None = None

    @model_validator(mode="after")
    def _check(self):
        if self.op == "threshold" and not (self.k and 1 <= self.k <= len(self.tasks)):
            raise ValueError("threshold needs 1 <= k <= number of classifiers")
        return self


class CompetitiveComposition(_CompositionBase):
    type: Literal["competitive"]
    tie_break: TieBreakSpec


class RandomizeComposition(_CompositionBase):
    type: Literal["randomize_then_classify"]
    x: list[Annotated[float, Field(ge=0)]]
    boost: float = Field(0.0, ge=0, le=1)

    @model_validator(mode="after")
    def _check(self):
        if abs(sum(self.x) - 1.0) > 1e-12:
            raise ValueError("task distribution must sum to 1")
        return self


class CohortComposition(_CompositionBase):
    type: Literal["cohort"]
    mechanism: Literal["ptc", "ws"]
    task: str
    n: int = Field(ge=1)
    trials: int = Field(100_000, ge=1)


class ConstrainedComposition(_CompositionBase):
    """Quota feasibility for a cohort with share ``p`` from group ``group``."""

    type: Literal["constrained"]
    task: str
    n: int = Field(ge=1)
    p: float | None = Field(None, ge=0, le=1)
    group: str
    parts: list[tuple[float, float]] | None = None
    fail_if_infeasible: bool = False


Composition = Annotated[
    FunctionalComposition
    | CompetitiveComposition
    | RandomizeComposition
    | CohortComposition
    | ConstrainedComposition,
    Field(discriminator="type"),
]


class GroupSpec(_Model):
    task: str
    attribute: str
    stratum: str
    indicators: list[str] = Field(default_factory=list)


class Scenario(_Model):
    schema_version: Literal[1]
    name: str = "scenario"
    seed: int
    universes: int = Field(1, ge=1)
    epsilon: float = Field(1e-9, ge=0)
    workers: int = Field(1, ge=1)
    plots: bool = True
    population: PopulationSpec
    tasks: list[TaskSpec] = Field(min_length=1)
    compositions: list[Composition] = Field(default_factory=list)
    groups: list[GroupSpec] = Field(default_factory=list)

    @model_validator(mode="after")
    def _cross_check(self):
        n = self.population.size
        names = [t.name for t in self.tasks]
        if len(set(names)) != len(names):
            raise ValueError("task names must be unique")
        known = set(names)

        def need(name: str | None, where: str) -> None:
            if name is not None and name not in known:
                raise ValueError(f"{where} refers to unknown task {name!r}")

        for t in self.tasks:
            if isinstance(t.qualification, ExplicitQualification) and len(t.qualification.values) != n:
                raise ValueError(f"task {t.name!r}: qualification length differs from population size")
            if isinstance(t.classifier, ExplicitClassifierSpec) and len(t.classifier.probs) != n:
                raise ValueError(f"task {t.name!r}: classifier length differs from population size")
            if isinstance(t.metric, list):
                arr = np.asarray(t.metric, dtype=float)
                if arr.shape != (n, n):
                    raise ValueError(f"task {t.name!r}: metric must be {n}x{n}")
        for col, values in self.population.columns.items():
            if len(values) != n:
                raise ValueError(f"column {col!r} has {len(values)} entries, expected {n}")
        labels = set()
        for c in self.compositions:
            label = composition_label(c)
            if label in labels:
                raise ValueError(f"duplicate composition label {label!r}")
            labels.add(label)
            if isinstance(c, FunctionalComposition):
                for t in c.tasks:
                    need(t, "functional composition")
                need(c.audit_task, "functional composition")
            elif isinstance(c, CompetitiveComposition):
                tb = c.tie_break
                if tb.kind == "value" and len(names) != 2:
                    raise ValueError("value tie-break needs exactly two tasks")
                if tb.order is not None and sorted(tb.order) != sorted(names):
                    raise ValueError("strict order must list every task once")
                need(tb.rho_from, "tie-break")
            elif isinstance(c, RandomizeComposition):
                if len(c.x) != len(names):
                    raise ValueError("task distribution needs one entry per task")
            elif isinstance(c, CohortComposition):
                need(c.task, "cohort composition")
                if c.n > n:
                    raise ValueError("cohort size exceeds population")
            elif isinstance(c, ConstrainedComposition):
                need(c.task, "constrained composition")
                if c.group not in self.population.columns:
                    raise ValueError(f"constrained composition: unknown column {c.group!r}")
        for g in self.groups:
            need(g.task, "group spec")
            for col in [g.attribute, g.stratum, *g.indicators]:
                if col not in self.population.columns:
                    raise ValueError(f"group spec refers to unknown column {col!r}")
        return self

    @property
    def task_names(self) -> list[str]:
        return [t.name for t in self.tasks]

    def task_index(self, name: str) -> int:
        return self.task_names.index(name)

    def universe_count(self) -> int:
        """Universes to generate: enough for the largest per-composition count."""
        counts = [c.universes for c in self.compositions if c.universes]
        return max([self.universes, *counts])


def composition_label(c: Composition) -> str:
    if c.label:
        return c.label
    if isinstance(c, FunctionalComposition):
        extra = f"{c.k}-of-" if c.op == "threshold" else ""
        return f"{c.op}({extra}{','.join(c.tasks)})"
    if isinstance(c, CompetitiveComposition):
        tb = c.tie_break
        if tb.kind == "strict":
            return "competitive strict " + ">".join(tb.order)
        if tb.kind == "uniform":
            return "competitive uniform"
        return f"competitive value={tb.rho if tb.rho is not None else 'q_' + tb.rho_from}"
    if isinstance(c, RandomizeComposition):
        x = ",".join(f"{v:g}" for v in c.x)
        return f"randomize_then_classify x=({x})" + (f" boost={c.boost:g}" if c.boost else "")
    if isinstance(c, CohortComposition):
        return f"cohort {c.mechanism} n={c.n} {c.task}"
    return f"constrained n={c.n} p={c.p} {c.task}"


def load_scenario(path: str | Path) -> Scenario:
    """Parse and validate a YAML (or JSON) scenario file."""
    with open(path, encoding="utf-8") as fh:
        data = yaml.safe_load(fh)
    if not isinstance(data, dict):
        raise ValueError("scenario file must contain a mapping")
    return Scenario.model_validate(data)

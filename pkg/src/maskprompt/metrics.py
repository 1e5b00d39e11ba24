"""Dice computation and cross-domain aggregation.

Scores are fractions internally; rendered tables show percentages. A report
summarizes one source-domain configuration: per-target-domain means plus
their unweighted mean over all targets other than the source ("to rest").
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatchError, EmptyInputError, ValidationError
from .masks import as_mask


def dice(pred, gt) -> float:
    """Dice overlap 2|P∩G| / (|P|+|G|); two empty masks score 1.0."""
    p = as_mask(pred)
    g = as_mask(gt)
    if p.shape != g.shape:
        raise DimensionMismatchError(f"mask shapes differ: {p.shape} vs {g.shape}")
    total = int(np.count_nonzero(p)) + int(np.count_nonzero(g))
    if total == 0:
        return 1.0
    overlap = int(np.count_nonzero(p & g))
    return 2.0 * overlap / total


@dataclass(frozen=True)
class CaseScore:
    case_id: str
    source_domain: str
    target_domain: str
    dice: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.dice <= 1.0:
            raise ValidationError(f"dice must lie in [0, 1], got {self.dice}")


@dataclass
class DiceReport:
    source_domain: str
    scores: list[CaseScore]
    per_domain_mean: dict[str, float]
    source_to_rest: float


def aggregate(scores) -> DiceReport:
    """Reduce per-case scores to per-domain means and the source-to-rest mean.

    The source-to-rest value is the unweighted mean over per-domain means for
    every target domain other than the source, so domains with few cases count
    as much as populous ones.
    """
    scores = list(scores)
    if not scores:
        raise EmptyInputError("no case scores to aggregate")
    sources = {s.source_domain for s in scores}
    if len(sources) != 1:
        raise ValidationError(f"scores span multiple source domains: {sorted(sources)}")
    source = scores[0].source_domain

    by_domain: dict[str, list[float]] = {}
    for score in scores:
        by_domain.setdefault(score.target_domain, []).append(score.dice)
    per_domain_mean = {d: float(np.mean(v)) for d, v in sorted(by_domain.items())}

    rest = [m for d, m in per_domain_mean.items() if d != source]
    if not rest:
        raise EmptyInputError("no target domain differs from the source")
    return DiceReport(
        source_domain=source,
        scores=scores,
        per_domain_mean=per_domain_mean,
        source_to_rest=float(np.mean(rest)),
    )


@dataclass
class SweepTable:
    """Source-to-rest grid over confidence thresholds: one row per theta2,
    one column per source configuration, plus per-row averages."""

    thetas: list[float]
    sources: list[str]
    cells: list[list[float]] = field(default_factory=list)
    row_averages: list[float] = field(default_factory=list)


def sweep_report(reports_by_theta) -> SweepTable:
    """Tabulate source-to-rest means for each (theta2, source) pair.

    ``reports_by_theta`` maps theta2 to either one DiceReport or a sequence of
    reports, one per source configuration. Every theta must cover the same
    set of sources.
    """
    if not reports_by_theta:
        raise EmptyInputError("no reports to tabulate")
    normalized: dict[float, list[DiceReport]] = {}
    for theta, reports in reports_by_theta.items():
        if isinstance(reports, DiceReport):
            reports = [reports]
        reports = list(reports)
        if not reports:
            raise EmptyInputError(f"no reports for theta2={theta}")
        normalized[float(theta)] = sorted(reports, key=lambda r: r.source_domain)

    thetas = sorted(normalized)
    sources = [r.source_domain for r in normalized[thetas[0]]]
    if len(set(sources)) != len(sources):
        raise ValidationError(f"duplicate source configurations: {sources}")
    cells: list[list[float]] = []
    for theta in thetas:
        row_sources = [r.source_domain for r in normalized[theta]]
        if row_sources != sources:
            raise ValidationError(
                f"theta2={theta} covers sources {row_sources}, expected {sources}"
            )
        cells.append([r.source_to_rest for r in normalized[theta]])
    row_averages = [float(np.mean(row)) for row in cells]
    return SweepTable(thetas=thetas, sources=sources, cells=cells, row_averages=row_averages)

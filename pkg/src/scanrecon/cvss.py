"""CVSS v3 base-metric parsing and scoring.

Only the Base group is handled. Scores follow the v3.1 equations, including
the integer-arithmetic ``roundup`` so results do not depend on float noise.
v3.0 vectors are accepted and scored with the same equations.
"""
from __future__ import annotations

import enum
import itertools
import math
import warnings
from dataclasses import dataclass
from typing import Iterator

from .model import Severity


class AttackVector(enum.Enum):
    NETWORK = "N"
    ADJACENT_NETWORK = "A"
    LOCAL = "L"
    PHYSICAL = "P"


class AttackComplexity(enum.Enum):
    LOW = "L"
    HIGH = "H"


class PrivilegesRequired(enum.Enum):
    NONE = "N"
    LOW = "L"
    HIGH = "H"


class UserInteraction(enum.Enum):
    NONE = "N"
    REQUIRED = "R"


class Scope(enum.Enum):
    UNCHANGED = "U"
    CHANGED = "C"


class Impact(enum.Enum):
    NONE = "N"
    LOW = "L"
    HIGH = "H"


# metric abbreviation -> (CvssVector field, enum type)
BASE_METRICS = {
    "AV": ("attack_vector", AttackVector),
    "AC": ("attack_complexity", AttackComplexity),
    "PR": ("privileges_required", PrivilegesRequired),
    "UI": ("user_interaction", UserInteraction),
    "S": ("scope", Scope),
    "C": ("confidentiality_impact", Impact),
    "I": ("integrity_impact", Impact),
    "A": ("availability_impact", Impact),
}

_AV_WEIGHT = {"N": 0.85, "A": 0.62, "L": 0.55, "P": 0.2}
_AC_WEIGHT = {"L": 0.77, "H": 0.44}
_PR_WEIGHT = {
    Scope.UNCHANGED: {"N": 0.85, "L": 0.62, "H": 0.27},
    Scope.CHANGED: {"N": 0.85, "L": 0.68, "H": 0.5},
}
_UI_WEIGHT = {"N": 0.85, "R": 0.62}
_CIA_WEIGHT = {"H": 0.56, "L": 0.22, "N": 0.0}

# temporal/environmental metrics; recognised so they can be skipped quietly-ish
_NON_BASE = {
    "E", "RL", "RC", "CR", "IR", "AR",
    "MAV", "MAC", "MPR", "MUI", "MS", "MC", "MI", "MA",
}


class CvssError(ValueError):
    pass


@dataclass(frozen=True)
class CvssVector:
    attack_vector: AttackVector
    attack_complexity: AttackComplexity
    privileges_required: PrivilegesRequired
    user_interaction: UserInteraction
    scope: Scope
    confidentiality_impact: Impact
    integrity_impact: Impact
    availability_impact: Impact

    def render(self, version: str = "3.1") -> str:
        """Canonical vector string, metrics in the standard CVSS order."""
        parts = [f"CVSS:{version}"]
        for abbr, (name, _) in BASE_METRICS.items():
            parts.append(f"{abbr}:{getattr(self, name).value}")
        return "/".join(parts)

    def __str__(self) -> str:
        return self.render()


@dataclass(frozen=True)
class ScoredVector:
    vector: CvssVector
    exploitability_score: float
    impact_score: float
    base_score: float

    @property
    def severity(self) -> Severity:
        return severity_band(self.base_score)


def parse_vector(text: str) -> CvssVector:
    """Decode ``CVSS:3.x/AV:../..`` into a :class:`CvssVector`.

    Segment order does not matter. Temporal and environmental segments are
    dropped with a warning.
    """
    text = text.strip()
    segments = text.split("/")
    head = segments[0]
    if head not in ("CVSS:3.1", "CVSS:3.0"):
        raise CvssError(f"unsupported CVSS prefix {head!r} in {text!r}")
    seen: dict[str, str] = {}
    ignored = []
    for seg in segments[1:]:
        key, sep, value = seg.partition(":")
        if not sep or not value:
            raise CvssError(f"malformed segment {seg!r} in {text!r}")
        if key in BASE_METRICS:
            if key in seen:
                raise CvssError(f"metric {key} given twice in {text!r}")
            seen[key] = value
        elif key in _NON_BASE:
            ignored.append(key)
        else:
            raise CvssError(f"unknown metric {key!r} in {text!r}")
    if ignored:
        warnings.warn(
            f"ignoring non-base metrics {','.join(ignored)} in {text!r}", stacklevel=2
        )
    kwargs = {}
    for key, (name, kind) in BASE_METRICS.items():
        if key not in seen:
            raise CvssError(f"missing base metric {key} in {text!r}")
        try:
            kwargs[name] = kind(seen[key])
        except ValueError:
            raise CvssError(f"unknown value {seen[key]!r} for metric {key}") from None
    return CvssVector(**kwargs)


def roundup(value: float) -> float:
    """Smallest one-decimal number >= value, computed on scaled integers."""
    int_input = round(value * 100000)
    if int_input % 10000 == 0:
        return int_input / 100000.0
    return (math.floor(int_input / 10000) + 1) / 10.0


def _round1(value: float) -> float:
    # half-up to one decimal, as the published calculators display sub-scores
    return math.floor(value * 10 + 0.5) / 10


def exploitability_subscore(v: CvssVector) -> float:
    return (
        8.22
        * _AV_WEIGHT[v.attack_vector.value]
        * _AC_WEIGHT[v.attack_complexity.value]
        * _PR_WEIGHT[v.scope][v.privileges_required.value]
        * _UI_WEIGHT[v.user_interaction.value]
    )


def impact_subscore(v: CvssVector) -> float:
    iss = 1 - (
        (1 - _CIA_WEIGHT[v.confidentiality_impact.value])
        * (1 - _CIA_WEIGHT[v.integrity_impact.value])
        * (1 - _CIA_WEIGHT[v.availability_impact.value])
    )
    if v.scope is Scope.UNCHANGED:
        return 6.42 * iss
    return 7.52 * (iss - 0.029) - 3.25 * (iss - 0.02) ** 15


def base_score(v: CvssVector) -> ScoredVector:
    impact = impact_subscore(v)
    exploit = exploitability_subscore(v)
    if impact <= 0:
        score = 0.0
    elif v.scope is Scope.UNCHANGED:
        score = roundup(min(impact + exploit, 10))
    else:
        score = roundup(min(1.08 * (impact + exploit), 10))
    return ScoredVector(
        vector=v,
        exploitability_score=_round1(exploit),
        impact_score=max(0.0, _round1(impact)),
        base_score=score,
    )


def severity_band(score: float) -> Severity:
    """Qualitative rating for a base score in [0.0, 10.0]."""
    if not 0.0 <= score <= 10.0 or math.isnan(score):
        raise CvssError(f"score {score} outside [0.0, 10.0]")
    if score == 0.0:
        return Severity.NONE
    if score < 4.0:
        return Severity.LOW
    if score < 7.0:
        return Severity.MEDIUM
    if score < 9.0:
        return Severity.HIGH
    return Severity.CRITICAL


def all_vectors() -> Iterator[CvssVector]:
    """Every one of the 2592 base vectors, in a fixed order."""
    kinds = [kind for _, kind in BASE_METRICS.values()]
    for combo in itertools.product(*kinds):
        yield CvssVector(*combo)

"""Between-arm response-rate comparison with two-proportion z-tests.

Overall response compares the fraction of displays with any token
selected; per-token rows compare each token's selection rate. The
default denominator is every display in the arm; a responders-only
denominator is available since per-token "response rate" admits both
readings.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .dataset import Dataset
from .errors import ParameterError, SchemaError

DENOMINATORS = ("displays", "responders")


@dataclass(frozen=True)
class ArmCounts:
    successes: int
    trials: int


@dataclass(frozen=True)
class ProportionComparison:
    """Pooled two-proportion z-test between control and treatment counts.

    relative_delta is (p_t - p_c) / p_c, or None when the control
    proportion is zero (undefined); the p-value is still computed.
    """

    control: ArmCounts
    treatment: ArmCounts
    relative_delta: Optional[float]
    z: float
    p_value: float

    @property
    def direction(self) -> str:
        p_c = self.control.successes / self.control.trials
        p_t = self.treatment.successes / self.treatment.trials
        if p_t > p_c:
            return "up"
        if p_t < p_c:
            return "down"
        return "flat"

    def to_json(self) -> dict:
        return {
            "control": {"successes": self.control.successes, "trials": self.control.trials},
            "treatment": {"successes": self.treatment.successes, "trials": self.treatment.trials},
            "relative_delta": self.relative_delta,
            "z": self.z,
            "p_value": self.p_value,
        }


def compare_proportions(c_succ: int, c_n: int, t_succ: int, t_n: int) -> ProportionComparison:
    """Two-sided pooled z-test of treatment vs control proportions."""
    if c_n < 1 or t_n < 1:
        raise ParameterError("trial counts must be >= 1")
    if not (0 <= c_succ <= c_n and 0 <= t_succ <= t_n):
        raise ParameterError("successes must be between 0 and trials")
    p_c = c_succ / c_n
    p_t = t_succ / t_n
    pooled = (c_succ + t_succ) / (c_n + t_n)
    var = pooled * (1.0 - pooled) * (1.0 / c_n + 1.0 / t_n)
    if var > 0.0:
        z = (p_t - p_c) / math.sqrt(var)
    else:
        z = 0.0
    p_value = math.erfc(abs(z) / math.sqrt(2.0))
    delta = (p_t - p_c) / p_c if p_c > 0 else None
    return ProportionComparison(
        control=ArmCounts(c_succ, c_n),
        treatment=ArmCounts(t_succ, t_n),
        relative_delta=delta,
        z=z,
        p_value=p_value,
    )


@dataclass(frozen=True)
class TokenComparison:
    token_id: int
    label: str
    comparison: ProportionComparison


@dataclass(frozen=True)
class AbTestReport:
    overall: ProportionComparison
    per_token: tuple[TokenComparison, ...]
    significance_level: float
    denominator: str

    def significant_tokens(self) -> list[TokenComparison]:
        return [t for t in self.per_token if t.comparison.p_value < self.significance_level]

    def to_json(self) -> dict:
        return {
            "overall": self.overall.to_json(),
            "per_token": [
                {
                    "token_id": t.token_id,
                    "label": t.label,
                    **t.comparison.to_json(),
                }
                for t in self.per_token
            ],
            "significance_level": self.significance_level,
            "denominator": self.denominator,
        }

    def to_json_text(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n"

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        buf.write("label,relative_delta,p_value,direction\n")
        for t in self.per_token:
            cmp = t.comparison
            delta = "" if cmp.relative_delta is None else repr(cmp.relative_delta)
            label = t.label.replace('"', '""')
            buf.write(f'"{label}",{delta},{cmp.p_value!r},{cmp.direction}\n')
        return buf.getvalue()


def run_abtest(
    control: Dataset,
    treatment: Dataset,
    denominator: str = "displays",
    significance_level: float = 0.01,
) -> AbTestReport:
    """Overall and per-token response-rate comparison between two arms."""
    if control.catalog != treatment.catalog:
        raise SchemaError("control and treatment datasets use different catalogs")
    if denominator not in DENOMINATORS:
        raise ParameterError(f"denominator must be one of {DENOMINATORS}")
    if not 0.0 < significance_level < 1.0:
        raise ParameterError("significance_level must be in (0, 1)")

    c_resp = int(control.responded.sum())
    t_resp = int(treatment.responded.sum())
    overall = compare_proportions(c_resp, len(control), t_resp, len(treatment))

    c_n = len(control) if denominator == "displays" else c_resp
    t_n = len(treatment) if denominator == "displays" else t_resp
    c_sel = np.asarray(control.selections.sum(axis=0), dtype=np.int64)
    t_sel = np.asarray(treatment.selections.sum(axis=0), dtype=np.int64)

    rows = []
    for token in control.catalog:
        rows.append(
            TokenComparison(
                token.id,
                token.label,
                compare_proportions(int(c_sel[token.id]), c_n, int(t_sel[token.id]), t_n),
            )
        )
    return AbTestReport(
        overall=overall,
        per_token=tuple(rows),
        significance_level=significance_level,
        denominator=denominator,
    )

"""Ingestion of cumulative censored reports and companion series.

Cumulative counts are reported when 0 or strictly greater than 9; counts in
1..9 arrive censored, and an absent row means the report for that week is
missing entirely. Differencing recovers weekly deaths where both endpoints
are observed; a single contiguous censored block yields interval bounds on
the sum of the non-retrievable weeks.
"""

from __future__ import annotations

import csv
import datetime
import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, ValidationError
from .likelihoods import CensoredSumBound, CensorScenario


class Mark(enum.Enum):
    CENSORED = "censored"
    MISSING = "missing"


CENSORED = Mark.CENSORED
MISSING = Mark.MISSING

Entry = "int | Mark"


@dataclass(frozen=True)
class CumulativeReport:
    """One (state, band) series of cumulative counts over week indices 1..W."""

    state: str
    band: str
    values: tuple

    def __post_init__(self) -> None:
        if len(self.values) < 2:
            raise ValidationError("need at least two weekly reports")


@dataclass(frozen=True)
class CensoredSeries:
    """Weekly deaths partitioned into retrievable / non-retrievable / missing."""

    band: str
    retrievable: tuple  # ((week, count), ...) over 1-based weekly indices
    bound: CensoredSumBound | None
    nonretrievable_weeks: tuple
    missing_weeks: frozenset
    warnings: tuple = ()

    @property
    def retrievable_weeks(self) -> frozenset:
        return frozenset(w for w, _ in self.retrievable)


@dataclass(frozen=True)
class VaccinationSeries:
    state: str
    age_class: str  # "18-64" or "65+"
    rates: np.ndarray  # weekly, in [0, 1], non-decreasing

    def __post_init__(self) -> None:
        rates = np.asarray(self.rates, dtype=float)
        if np.any((rates < 0) | (rates > 1)):
            raise DataError("vaccination rates must lie in [0, 1]")
        if np.any(np.diff(rates) < 0):
            raise DataError("vaccination rates must be non-decreasing")
        object.__setattr__(self, "rates", rates)


def _merge_missing_into_censored(values: list) -> tuple[list, list[str]]:
    """Missing reports adjacent to or inside the censored range join it."""
    warnings = []
    cens = [i for i, v in enumerate(values) if v is CENSORED]
    if not cens:
        return values, warnings
    lo, hi = min(cens), max(cens)
    out = list(values)
    for i, v in enumerate(values):
        if v is MISSING and (lo - 1 <= i <= hi + 1):
            out[i] = CENSORED
            warnings.append(
                f"missing report in week {i + 1} merged into the censored block"
            )
    return out, warnings


def classify_series(values, band: str = "") -> CensoredSeries:
    """Difference a cumulative series and classify its censoring scenario.

    ``values`` holds per-week entries: an int, CENSORED, or MISSING, for
    weeks 1..W. Weekly deaths are indexed 1..W-1.
    """
    values = list(values)
    W = len(values)
    if W < 2:
        raise ValidationError("need at least two weeks of cumulative reports")
    values, warnings = _merge_missing_into_censored(values)

    observed = {i + 1: v for i, v in enumerate(values) if isinstance(v, int)}
    bad = [w for w in observed if w + 1 in observed and observed[w + 1] < observed[w]]
    if bad:
        raise DataError(f"decreasing observed cumulative counts after weeks {bad}")

    cens = sorted(i + 1 for i, v in enumerate(values) if v is CENSORED)
    if cens and cens != list(range(cens[0], cens[-1] + 1)):
        raise DataError("more than one censored block in the series")
    for w, v in observed.items():
        if v != 0 and v <= 9:
            raise DataError(f"observed cumulative count {v} in week {w} should be censored")
        if cens and w < cens[0] and v != 0:
            raise DataError(f"observed count {v} before the censored block must be 0")
        if cens and w > cens[-1] and v < 10:
            raise DataError(f"observed count {v} after the censored block must exceed 9")

    missing = frozenset(i + 1 for i, v in enumerate(values) if v is MISSING)
    # weekly deaths adjacent to a missing report cannot be differenced
    missing_weekly = frozenset(
        w for m in missing for w in (m - 1, m) if 1 <= w <= W - 1
    )

    bound = None
    wnr: tuple = ()
    if cens:
        first_c, last_c = cens[0], cens[-1]
        week1_c = first_c == 1
        weekW_c = last_c == W
        if not weekW_c:
            fnc = last_c + 1
            D_fnc = observed.get(fnc)
            if D_fnc is None:
                raise DataError("first week after the censored block is not observed")
        if not week1_c and not weekW_c:
            wnr = tuple(range(first_c - 1, last_c + 1))
            bound = CensoredSumBound(CensorScenario.EXACT_SUM, D_fnc, D_fnc)
        elif week1_c and not weekW_c:
            wnr = tuple(range(first_c, last_c + 1))
            bound = CensoredSumBound(
                CensorScenario.INTERVAL_WITH_OBSERVED_END, D_fnc - 9, D_fnc - 1
            )
        elif not week1_c and weekW_c:
            wnr = tuple(range(first_c - 1, W))
            bound = CensoredSumBound(CensorScenario.TRAILING_CENSORED, 1, 9)
        else:
            wnr = tuple(range(1, W))
            bound = CensoredSumBound(CensorScenario.ALL_CENSORED, 0, 8)

    wnr_set = set(wnr)
    retrievable = []
    for w in range(1, W):
        if w in wnr_set or w in missing_weekly:
            continue
        if w in observed and w + 1 in observed:
            retrievable.append((w, observed[w + 1] - observed[w]))
    return CensoredSeries(
        band=band,
        retrievable=tuple(retrievable),
        bound=bound,
        nonretrievable_weeks=wnr,
        missing_weeks=missing_weekly,
        warnings=tuple(warnings),
    )


def difference_weekly(report: CumulativeReport) -> CensoredSeries:
    """Weekly deaths with censoring classification for one report series."""
    return classify_series(report.values, band=report.band)


def estimate_eta(totals) -> float:
    """No-intercept OLS slope of weekly totals on absolute first differences."""
    totals = np.asarray(totals, dtype=float)
    if totals.size < 2:
        raise ValidationError("need at least two weeks of totals")
    x = np.abs(np.diff(totals))
    y = totals[1:]
    denom = float(np.sum(x * x))
    if denom == 0.0:
        raise ValidationError("all first differences are zero; eta is undefined")
    return float(np.sum(x * y) / denom)


def align_calibration(jhu: dict, model_week_dates) -> "np.ndarray":
    """Reindex all-age weekly deaths onto the model week dates.

    ``jhu`` maps week-start dates to death counts. Every model week must be
    present; gaps are a data error.
    """
    missing = [d for d in model_week_dates if d not in jhu]
    if missing:
        raise DataError(f"calibration series has no entry for weeks {missing}")
    return np.asarray([jhu[d] for d in model_week_dates], dtype=np.int64)


def central_moving_average(series, window: int = 4) -> np.ndarray:
    """Centered moving average; edge windows truncate to available weeks."""
    series = np.asarray(series, dtype=float)
    n = series.size
    half_lo, half_hi = window // 2, window - window // 2 - 1
    out = np.empty(n)
    for i in range(n):
        lo = max(0, i - half_lo)
        hi = min(n, i + half_hi + 1)
        out[i] = series[lo:hi].mean()
    return out


def resurgence_start(deaths, search_from: int) -> int | None:
    """First week from ``search_from`` with an increasing 4-week central MA.

    Weeks are 1-based; returns None when no such week exists.
    """
    deaths = np.asarray(deaths, dtype=float)
    if deaths.size - search_from < 4:
        raise ValidationError("need at least 5 weeks after the search start")
    ma = central_moving_average(deaths, 4)
    for w in range(search_from, deaths.size + 1):
        if w >= 2 and ma[w - 1] > ma[w - 2]:
            return w
    return None


# ----------------------------------------------------------------- CSV loaders

CDC_COLUMNS = ["state", "week_start_date", "age_band", "cum_deaths"]
JHU_COLUMNS = ["state", "week_start_date", "deaths"]
VACC_COLUMNS = ["state", "week_start_date", "age_class", "rate"]


def _read_rows(path, expected_columns) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != expected_columns:
            raise DataError(
                f"{path}: expected columns {expected_columns}, got {reader.fieldnames}"
            )
        return list(reader)


def _parse_date(text: str, path) -> datetime.date:
    try:
        return datetime.date.fromisoformat(text)
    except ValueError as exc:
        raise DataError(f"{path}: bad date {text!r}") from exc


def load_cdc_csv(path) -> dict:
    """Parse cumulative reports into {(state, band): CumulativeReport}.

    An empty cum_deaths field means censored; an absent (state, week, band)
    row means the report is missing for that week.
    """
    rows = _read_rows(path, CDC_COLUMNS)
    seen = sorted({_parse_date(r["week_start_date"], path) for r in rows})
    if not seen:
        raise DataError(f"{path}: no data rows")
    # the week grid is the full weekly cadence from first to last report, so
    # wholly absent weeks are marked missing too
    span_weeks = (seen[-1] - seen[0]).days // 7
    dates = [seen[0] + datetime.timedelta(weeks=i) for i in range(span_weeks + 1)]
    date_idx = {d: i for i, d in enumerate(dates)}
    off_grid = [d for d in seen if d not in date_idx]
    if off_grid:
        raise DataError(f"{path}: dates off the weekly cadence: {off_grid}")
    table: dict = {}
    for r in rows:
        key = (r["state"], r["age_band"])
        series = table.setdefault(key, [MISSING] * len(dates))
        raw = r["cum_deaths"].strip()
        if raw == "":
            value: object = CENSORED
        else:
            value = int(raw)
            if value < 0:
                raise DataError(f"{path}: negative cumulative count {value}")
        series[date_idx[_parse_date(r["week_start_date"], path)]] = value
    return {
        key: CumulativeReport(state=key[0], band=key[1], values=tuple(vals))
        for key, vals in table.items()
    }, dates


def load_jhu_csv(path) -> dict:
    """Parse all-age weekly deaths into {state: {date: deaths}}."""
    rows = _read_rows(path, JHU_COLUMNS)
    out: dict = {}
    for r in rows:
        deaths = int(r["deaths"])
        if deaths < 0:
            raise DataError(f"{path}: negative deaths {deaths}")
        out.setdefault(r["state"], {})[_parse_date(r["week_start_date"], path)] = deaths
    return out


def load_vaccination_csv(path) -> dict:
    """Parse vaccination rates into {(state, age_class): VaccinationSeries}."""
    rows = _read_rows(path, VACC_COLUMNS)
    series: dict = {}
    for r in rows:
        key = (r["state"], r["age_class"])
        series.setdefault(key, []).append(
            (_parse_date(r["week_start_date"], path), float(r["rate"]))
        )
    out = {}
    for key, pairs in series.items():
        pairs.sort()
        out[key] = VaccinationSeries(
            state=key[0], age_class=key[1], rates=np.array([v for _, v in pairs])
        )
    return out

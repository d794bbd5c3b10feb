"""Weighted rank aggregation into intermediate and final leaderboard scores.

Conventions
-----------
* Ranks are fractional: exact ties share the mean of the ranks they span.
* Skewness is ranked by ``|skew|`` ascending for DSC and for the scaled
  Jacobian, and by signed skew ascending for HD.
* ``p_var`` is ranked descending (1 is ideal), ``|p_inter|`` ascending.
* Non-ranked (NR) teams get no intermediate ranks and are listed last.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.stats import rankdata

from .errors import DomainError, EmptyField, IncompleteRecord

HIGHER_BETTER = "higher_better"
LOWER_BETTER = "lower_better"

METRIC_WEIGHTS = (0.6, 0.25, 0.15)
JACOBIAN_WEIGHTS = (0.3, 0.25, 0.15, 0.3)


def robust_stats(values):
    """Median, unbiased variance and bias-corrected sample skewness (G1).

    Variance is 0 for a single value; skewness is 0 below three values or when
    all values coincide.
    """
    x = np.asarray(values, dtype=np.float64).ravel()
    n = x.size
    if n == 0:
        raise DomainError("statistics of an empty vector")
    median = float(np.median(x))
    if n == 1:
        return median, 0.0, 0.0
    dev = x - x.mean()
    variance = float(np.sum(dev**2) / (n - 1))
    if n < 3:
        return median, variance, 0.0
    m2 = np.mean(dev**2)
    if m2 == 0.0:
        return median, variance, 0.0
    m3 = np.mean(dev**3)
    g1 = m3 / m2**1.5
    skew = float(g1 * math.sqrt(n * (n - 1)) / (n - 2))
    return median, variance, skew


def rank_values(values, direction):
    """Rank 1 for the best value; ties receive average ranks."""
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise DomainError("cannot rank an empty vector")
    if direction == HIGHER_BETTER:
        v = -v
    elif direction != LOWER_BETTER:
        raise DomainError(f"unknown direction {direction!r}")
    return rankdata(v, method="average")


def p_metric(ranks_m, ranks_var, ranks_skew):
    """0.6 r_median + 0.25 r_variance + 0.15 r_skewness (elementwise)."""
    w_m, w_v, w_s = METRIC_WEIGHTS
    out = (w_m * np.asarray(ranks_m, dtype=np.float64)
           + w_v * np.asarray(ranks_var, dtype=np.float64)
           + w_s * np.asarray(ranks_skew, dtype=np.float64))
    return float(out) if out.ndim == 0 else out


def p_jacobian(ranks_m, ranks_var, ranks_skew, ranks_invalid):
    """0.3 r_median + 0.25 r_variance + 0.15 r_skewness + 0.3 r_invalid."""
    w = JACOBIAN_WEIGHTS
    parts = (ranks_m, ranks_var, ranks_skew, ranks_invalid)
    out = sum(wi * np.asarray(r, dtype=np.float64) for wi, r in zip(w, parts))
    return float(out) if out.ndim == 0 else out


def _skew_key(skews, rule):
    s = np.asarray(skews, dtype=np.float64)
    return np.abs(s) if rule == "abs" else s


def metric_scores(value_sets, median_direction, skew_rule="abs"):
    """Weighted-rank score for each team's distribution of one metric.

    ``value_sets`` is a list of per-team value vectors. Returns the score
    vector; lower is better.
    """
    stats = np.array([robust_stats(v) for v in value_sets])
    r_m = rank_values(stats[:, 0], median_direction)
    r_v = rank_values(stats[:, 1], LOWER_BETTER)
    r_s = rank_values(_skew_key(stats[:, 2], skew_rule), LOWER_BETTER)
    return p_metric(r_m, r_v, r_s)


@dataclass
class TeamRecord:
    team_id: str
    dsc_values: list = field(default_factory=list)
    hd_values: list = field(default_factory=list)
    p_var: float = math.nan
    p_inter: float = math.nan
    mean_runtime_s: float = math.inf
    nr_flag: bool = False

    def __post_init__(self):
        if not self.nr_flag:
            if len(self.dsc_values) < 1 or len(self.dsc_values) != len(self.hd_values):
                raise DomainError(f"team {self.team_id}: DSC/HD vectors must be non-empty and aligned")
        if not self.mean_runtime_s > 0:
            raise DomainError(f"team {self.team_id}: mean_runtime_s must be > 0")


@dataclass
class TeamStanding:
    """One leaderboard line. Ranks are ``None`` for NR teams."""

    team_id: str
    p_dsc: float = math.nan
    r_dsc: float | None = None
    p_hd: float = math.nan
    r_hd: float | None = None
    p_var: float = math.nan
    r_var: float | None = None
    p_inter: float = math.nan
    r_inter: float | None = None
    mean_runtime_s: float = math.inf
    nr_flag: bool = False
    p_fin: float = math.nan
    r_fin: int | None = None


def intermediate_ranks(records, dsc_skew_rule="abs", hd_skew_rule="signed"):
    """Compute p_DSC, p_HD over every team with data and rank all four
    scores over the non-NR teams."""
    if not records:
        raise EmptyField("no teams to rank")
    standings = [TeamStanding(r.team_id, p_var=r.p_var, p_inter=r.p_inter,
                              mean_runtime_s=r.mean_runtime_s, nr_flag=r.nr_flag)
                 for r in records]
    have = [i for i, r in enumerate(records) if len(r.dsc_values) > 0]
    if have:
        p_dsc = np.atleast_1d(metric_scores([records[i].dsc_values for i in have],
                                            HIGHER_BETTER, dsc_skew_rule))
        p_hd = np.atleast_1d(metric_scores([records[i].hd_values for i in have],
                                           LOWER_BETTER, hd_skew_rule))
        for k, i in enumerate(have):
            standings[i].p_dsc = float(p_dsc[k])
            standings[i].p_hd = float(p_hd[k])
    ranked = [s for s in standings if not s.nr_flag]
    if ranked:
        cols = {
            "r_dsc": rank_values([s.p_dsc for s in ranked], LOWER_BETTER),
            "r_hd": rank_values([s.p_hd for s in ranked], LOWER_BETTER),
            "r_var": rank_values([s.p_var for s in ranked], HIGHER_BETTER),
            "r_inter": rank_values([abs(s.p_inter) for s in ranked], LOWER_BETTER),
        }
        for k, s in enumerate(ranked):
            for name, col in cols.items():
                setattr(s, name, float(col[k]))
    return standings


def final_score(r_dsc, r_hd, r_var, r_inter):
    return (r_dsc + r_hd) / 6.0 + (r_var + r_inter) / 3.0


@dataclass
class Leaderboard:
    rows: list

    COLUMNS = ("team", "p_dsc", "r_dsc", "p_hd", "r_hd", "p_var", "r_var",
               "p_inter", "r_inter", "p_fin", "r_fin")

    @property
    def order(self):
        return [r.team_id for r in self.rows]

    def __getitem__(self, team_id):
        for r in self.rows:
            if r.team_id == team_id:
                return r
        raise KeyError(team_id)

    def table(self):
        """Rows as lists matching :attr:`COLUMNS`; NR ranks print as "NR"."""
        def rk(v):
            return "NR" if v is None else _fmt(v)
        out = []
        for r in self.rows:
            out.append([r.team_id, _fmt(r.p_dsc), rk(r.r_dsc), _fmt(r.p_hd), rk(r.r_hd),
                        _fmt(r.p_var), rk(r.r_var), _fmt(r.p_inter), rk(r.r_inter),
                        _fmt(r.p_fin), str(r.r_fin)])
        return out


def _fmt(v):
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    return repr(float(v))


def final_ranking(standings):
    """Order teams by the final weighted-rank score.

    Exact score ties go to the lower mean runtime (then team id, for a total
    order). NR teams follow all ranked teams.
    """
    if not standings:
        raise EmptyField("no teams to rank")
    ranked, unranked = [], []
    for s in standings:
        if s.nr_flag:
            unranked.append(replace(s, p_fin=math.nan))
            continue
        parts = (s.r_dsc, s.r_hd, s.r_var, s.r_inter)
        if any(p is None or math.isnan(p) for p in parts):
            raise IncompleteRecord(f"team {s.team_id} lacks an intermediate rank")
        ranked.append(replace(s, p_fin=final_score(*parts)))
    ranked.sort(key=lambda s: (s.p_fin, s.mean_runtime_s, s.team_id))
    unranked.sort(key=lambda s: s.team_id)
    rows = ranked + unranked
    for pos, s in enumerate(rows, start=1):
        s.r_fin = pos
    return Leaderboard(rows)


def build_leaderboard(records, **kw):
    return final_ranking(intermediate_ranks(records, **kw))


@dataclass
class JacobianStanding:
    team_id: str
    m_j: float
    var_j: float
    skew_j: float
    n_invalid: float
    p_j: float = math.nan
    r_j: int | None = None
    nr_flag: bool = False


def jacobian_ranking(standings, skew_rule="abs"):
    """Rank mesh-quality summaries by the weighted p_J score (lower better).

    Each standing carries per-team aggregates of the scaled-Jacobian median,
    variance, skewness and mean invalid-element count.
    """
    if not standings:
        raise EmptyField("no teams to rank")
    ok = [s for s in standings if not s.nr_flag]
    bad = sorted((s for s in standings if s.nr_flag), key=lambda s: s.team_id)
    if ok:
        p = np.atleast_1d(p_jacobian(
            rank_values([s.m_j for s in ok], HIGHER_BETTER),
            rank_values([s.var_j for s in ok], LOWER_BETTER),
            rank_values(_skew_key([s.skew_j for s in ok], skew_rule), LOWER_BETTER),
            rank_values([s.n_invalid for s in ok], LOWER_BETTER),
        ))
        for s, v in zip(ok, p):
            s.p_j = float(v)
        ok.sort(key=lambda s: (s.p_j, s.team_id))
    rows = ok + bad
    for pos, s in enumerate(rows, start=1):
        s.r_j = pos
    return rows

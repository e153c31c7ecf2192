"""Significance analysis for MUSHRA ratings.

Absolute scores are compared with paired two-sided t-tests; rank orders
(per-screen, 1 = best, average ties) with Wilcoxon signed-rank tests.  The
signed-rank null is enumerated exactly up to 20 nonzero differences and
approximated normally (tie + continuity corrections) beyond.  All pairwise
p-values within one analysis family get Holm-Bonferroni step-down control.
"""

from __future__ import annotations

import csv
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from scipy import stats as sps

EXACT_LIMIT = 20    # largest n for exact signed-rank enumeration


class StatsError(RuntimeError):
    pass


@dataclass(frozen=True)
class MushraRating:
    listener_id: str
    utterance_id: str
    domain: str
    system_id: str
    score: int

    def __post_init__(self):
        s = self.score
        if not isinstance(s, (int, np.integer)) or isinstance(s, bool):
            raise StatsError(f"score must be an integer, got {s!r}")
        if not 0 <= s <= 100:
            raise StatsError(f"score {s} outside [0, 100]")


def screen_ranks(scores: dict, systems=None) -> dict:
    """Rank one screen's systems: 1 = best score, ties share the average rank."""
    if systems is not None:
        missing = [s for s in systems if s not in scores]
        if missing:
            raise StatsError(f"screen missing scores for {missing}")
        scores = {s: scores[s] for s in systems}
    if len(scores) < 2:
        raise StatsError("need at least 2 systems on a screen")
    names = list(scores)
    vals = np.asarray([scores[s] for s in names], dtype=float)
    ranks = sps.rankdata(-vals, method="average")
    return dict(zip(names, ranks))


def paired_t_test(a, b):
    """(t, two-sided p) for paired samples; t on the differences a - b."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim != 1 or a.shape != b.shape:
        raise StatsError(f"paired samples must be equal-length 1-D, "
                         f"got {a.shape} and {b.shape}")
    n = len(a)
    if n < 2:
        raise StatsError(f"need at least 2 pairs, got {n}")
    d = a - b
    mean = d.mean()
    sd = d.std(ddof=1)
    if sd == 0.0:
        if mean == 0.0:
            return 0.0, 1.0
        # zero-variance, nonzero mean: the statistic diverges
        return math.copysign(math.inf, mean), 0.0
    t = mean / (sd / math.sqrt(n))
    p = 2.0 * sps.t.sf(abs(t), n - 1)
    return float(t), float(p)


def _exact_two_sided_p(ranks, w_pos):
    # null distribution of the positive-rank sum over all 2^n sign patterns,
    # tabulated on doubled ranks so tied (half-integer) ranks stay integral
    doubled = np.rint(2.0 * np.asarray(ranks)).astype(np.int64)
    total = int(doubled.sum())
    counts = np.zeros(total + 1)
    counts[0] = 1.0
    for r in doubled:
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[: total + 1 - r]
        counts += shifted
    w2 = int(round(2.0 * w_pos))
    hi = max(w2, total - w2)
    tail = counts[hi:].sum()
    return min(1.0, 2.0 * tail / counts.sum())


def wilcoxon_signed_rank(a, b):
    """(W, two-sided p); W is the positive-rank sum of the differences.

    Zero differences are dropped.  n <= 20 uses the exact sign-pattern null;
    larger n a normal approximation with tie and continuity corrections.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim != 1 or a.shape != b.shape:
        raise StatsError(f"paired samples must be equal-length 1-D, "
                         f"got {a.shape} and {b.shape}")
    d = a - b
    d = d[d != 0.0]
    n = len(d)
    if n == 0:
        raise StatsError("all paired differences are zero")
    ranks = sps.rankdata(np.abs(d), method="average")
    w_pos = float(ranks[d > 0].sum())
    if n <= EXACT_LIMIT:
        p = _exact_two_sided_p(ranks, w_pos)
    else:
        mean = n * (n + 1) / 4.0
        var = n * (n + 1) * (2 * n + 1) / 24.0
        var -= sum(t ** 3 - t for t in Counter(ranks.tolist()).values()) / 48.0
        delta = max(0.0, abs(w_pos - mean) - 0.5)   # continuity correction
        z = delta / math.sqrt(var)
        p = min(1.0, 2.0 * sps.norm.sf(z))
    return w_pos, float(p)


def holm_bonferroni(pvals, alpha=0.01):
    """Step-down adjusted p-values and the reject set at level alpha."""
    p = np.asarray(pvals, dtype=float)
    if p.ndim != 1 or len(p) == 0:
        raise StatsError("need a non-empty 1-D vector of p-values")
    if not np.all(np.isfinite(p)) or np.any(p < 0.0) or np.any(p > 1.0):
        raise StatsError("p-values must lie in [0, 1]")
    if not 0.0 < alpha < 1.0:
        raise StatsError(f"alpha must be in (0, 1), got {alpha}")
    m = len(p)
    order = np.argsort(p, kind="stable")
    adjusted = np.empty(m)
    running = 0.0
    for i, j in enumerate(order):
        running = max(running, min(1.0, (m - i) * p[j]))
        adjusted[j] = running
    return adjusted, adjusted <= alpha


# ---------------------------------------------------------------------------
# summary tables


@dataclass
class SystemSummary:
    system: str
    mean_score: float
    median_score: float
    mean_rank: float
    median_rank: float


@dataclass
class PairResult:
    system_a: str
    system_b: str
    n: int
    t: float
    t_p: float
    t_p_adj: float = math.nan
    t_significant: bool = False
    w: float = math.nan
    w_p: float = math.nan
    w_p_adj: float = math.nan
    w_significant: bool = False


@dataclass
class AnalysisReport:
    grouping: str               # "overall" or a domain name
    alpha: float
    n_screens: int
    n_excluded: int
    summaries: list = field(default_factory=list)
    pairs: list = field(default_factory=list)


def _collect_screens(ratings, systems):
    by_screen = defaultdict(dict)
    domain_of = {}
    for r in ratings:
        key = (r.listener_id, r.utterance_id)
        if r.system_id in by_screen[key]:
            raise StatsError(f"duplicate rating: listener {r.listener_id}, "
                             f"utterance {r.utterance_id}, system {r.system_id}")
        by_screen[key][r.system_id] = r.score
        if domain_of.setdefault(key[1], r.domain) != r.domain:
            raise StatsError(f"utterance {r.utterance_id} appears under two domains")
    complete, dropped = {}, []
    want = set(systems)
    for key, scores in by_screen.items():
        if set(scores) == want:
            complete[key] = scores
        else:
            dropped.append(key)
    return complete, dropped, domain_of


def _analyze_group(name, keys, screens, systems, alpha, n_excluded):
    keys = sorted(keys)
    scores = np.array([[screens[k][s] for s in systems] for k in keys],
                      dtype=float)
    ranks = np.array([[screen_ranks(screens[k], systems)[s] for s in systems]
                      for k in keys])
    summaries = [
        SystemSummary(system=s,
                      mean_score=float(scores[:, i].mean()),
                      median_score=float(np.median(scores[:, i])),
                      mean_rank=float(ranks[:, i].mean()),
                      median_rank=float(np.median(ranks[:, i])))
        for i, s in enumerate(systems)
    ]
    summaries.sort(key=lambda s: (-s.mean_score, s.system))

    pairs = []
    for i, j in combinations(range(len(systems)), 2):
        t, t_p = paired_t_test(scores[:, i], scores[:, j])
        try:
            w, w_p = wilcoxon_signed_rank(ranks[:, i], ranks[:, j])
        except StatsError:      # identical rank columns: no evidence either way
            w, w_p = 0.0, 1.0
        pairs.append(PairResult(system_a=systems[i], system_b=systems[j],
                                n=len(keys), t=t, t_p=t_p, w=w, w_p=w_p))
    t_adj, t_rej = holm_bonferroni([p.t_p for p in pairs], alpha)
    w_adj, w_rej = holm_bonferroni([p.w_p for p in pairs], alpha)
    for k, pair in enumerate(pairs):
        pair.t_p_adj, pair.t_significant = float(t_adj[k]), bool(t_rej[k])
        pair.w_p_adj, pair.w_significant = float(w_adj[k]), bool(w_rej[k])
    return AnalysisReport(grouping=name, alpha=alpha, n_screens=len(keys),
                          n_excluded=n_excluded, summaries=summaries,
                          pairs=pairs)


def summarize(ratings, grouping="overall", alpha=0.01) -> list:
    """Analysis reports: one overall, or one per domain.

    Screens missing any system's score are excluded (counted per report).
    Score tests are paired t-tests, rank tests Wilcoxon signed-rank, each
    family Holm-corrected separately.
    """
    if grouping not in ("overall", "per-domain"):
        raise StatsError(f"grouping must be 'overall' or 'per-domain', "
                         f"got {grouping!r}")
    ratings = list(ratings)
    if not ratings:
        raise StatsError("no ratings to analyze")
    systems = sorted({r.system_id for r in ratings})
    if len(systems) < 2:
        raise StatsError("need ratings for at least 2 systems")
    complete, dropped, domain_of = _collect_screens(ratings, systems)
    if not complete:
        raise StatsError("no complete screens to analyze")
    if grouping == "overall":
        return [_analyze_group("overall", list(complete), complete, systems,
                               alpha, len(dropped))]
    per = defaultdict(list)
    for key in complete:
        per[domain_of[key[1]]].append(key)
    lost = Counter(domain_of[key[1]] for key in dropped)
    return [
        _analyze_group(d, keys, complete, systems, alpha, lost.get(d, 0))
        for d, keys in sorted(per.items())
    ]


# ---------------------------------------------------------------------------
# report rendering and CSV plumbing


def format_report(report: AnalysisReport) -> str:
    lines = [
        f"== {report.grouping} ==  "
        f"{report.n_screens} screens ({report.n_excluded} incomplete excluded), "
        f"alpha = {report.alpha:g}",
        "",
        f"{'system':<14}{'mean':>8}{'median':>8}{'mean rank':>11}{'median rank':>13}",
    ]
    for s in report.summaries:
        lines.append(f"{s.system:<14}{s.mean_score:>8.2f}{s.median_score:>8.1f}"
                     f"{s.mean_rank:>11.2f}{s.median_rank:>13.1f}")
    lines.append("")
    lines.append(f"{'pair':<26}{'t':>9}{'p':>11}{'p(holm)':>11}{'sig':>5}"
                 f"{'W':>9}{'p':>11}{'p(holm)':>11}{'sig':>5}")
    for p in report.pairs:
        pair = f"{p.system_a} vs {p.system_b}"
        lines.append(
            f"{pair:<26}{p.t:>9.3f}{p.t_p:>11.4g}{p.t_p_adj:>11.4g}"
            f"{'*' if p.t_significant else '':>5}"
            f"{p.w:>9.1f}{p.w_p:>11.4g}{p.w_p_adj:>11.4g}"
            f"{'*' if p.w_significant else '':>5}")
    return "\n".join(lines) + "\n"


PAIRS_CSV_COLUMNS = ["family", "system_a", "system_b", "n", "t", "t_p",
                     "t_p_holm", "t_significant", "w", "w_p", "w_p_holm",
                     "w_significant"]


def write_pairs_csv(path, reports) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(PAIRS_CSV_COLUMNS)
        for rep in reports:
            for p in rep.pairs:
                writer.writerow([rep.grouping, p.system_a, p.system_b, p.n,
                                 f"{p.t:.6g}", f"{p.t_p:.6g}",
                                 f"{p.t_p_adj:.6g}", int(p.t_significant),
                                 f"{p.w:.6g}", f"{p.w_p:.6g}",
                                 f"{p.w_p_adj:.6g}", int(p.w_significant)])


RATINGS_CSV_COLUMNS = ["listener_id", "utterance_id", "domain", "system",
                       "score", "timestamp"]


def write_ratings_csv(path, ratings, timestamps=None) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(RATINGS_CSV_COLUMNS)
        for i, r in enumerate(ratings):
            ts = "" if timestamps is None else timestamps[i]
            writer.writerow([r.listener_id, r.utterance_id, r.domain,
                             r.system_id, r.score, ts])


def read_ratings_csv(path) -> list:
    ratings = []
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        needed = {"listener_id", "utterance_id", "domain", "system", "score"}
        if reader.fieldnames is None or not needed.issubset(reader.fieldnames):
            raise StatsError(f"{path}: ratings CSV must have columns {sorted(needed)}")
        for lineno, row in enumerate(reader, 2):
            try:
                score = int(row["score"])
            except ValueError as e:
                raise StatsError(f"{path}:{lineno}: bad score {row['score']!r}") from e
            ratings.append(MushraRating(
                listener_id=row["listener_id"], utterance_id=row["utterance_id"],
                domain=row["domain"], system_id=row["system"], score=score))
    return ratings

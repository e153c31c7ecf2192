"""MUSHRA evaluation workbench: balanced designs, significance tests, error flags."""

from ssws.mushra.design import (
    Assignment,
    DesignError,
    Screen,
    TestPlan,
    build_assignment,
    domain_quota,
    load_plan,
    read_assignment,
    validate_assignment,
    write_assignment,
)
from ssws.mushra.errors import (
    CATEGORIES,
    SEVERITIES,
    ErrorFlag,
    FlagError,
    aggregate_by_domain,
    aggregate_by_system,
    read_flags_csv,
    write_flags_csv,
)
from ssws.mushra.stats import (
    AnalysisReport,
    MushraRating,
    PairResult,
    StatsError,
    SystemSummary,
    format_report,
    holm_bonferroni,
    paired_t_test,
    read_ratings_csv,
    screen_ranks,
    summarize,
    wilcoxon_signed_rank,
    write_pairs_csv,
    write_ratings_csv,
)

__all__ = [
    "Assignment", "DesignError", "Screen", "TestPlan", "build_assignment",
    "domain_quota", "load_plan", "read_assignment", "validate_assignment",
    "write_assignment",
    "CATEGORIES", "SEVERITIES", "ErrorFlag", "FlagError",
    "aggregate_by_domain", "aggregate_by_system", "read_flags_csv",
    "write_flags_csv",
    "AnalysisReport", "MushraRating", "PairResult", "StatsError",
    "SystemSummary", "format_report", "holm_bonferroni", "paired_t_test",
    "read_ratings_csv", "screen_ranks", "summarize", "wilcoxon_signed_rank",
    "write_pairs_csv", "write_ratings_csv",
]

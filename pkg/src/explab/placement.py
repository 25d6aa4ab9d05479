"""Row-level cost model: per-row reach and engagement share, and selection
of an exploration slot that is cheap to give up but still widely seen."""

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .behavior import KIND_IMPRESSION, SessionLog
from .errors import NoSafePlacementError


@dataclass(frozen=True)
class RowStats:
    row_index: int
    reach: float             # fraction of sessions in which the row rendered
    engagement_share: float  # fraction of total log engagement


@dataclass(frozen=True)
class PlacementConstraints:
    min_reach: float = 0.10
    max_engagement_share: float = 0.015
    target_engagement_share: float = 0.01

    def __post_init__(self):
        if not 0.0 < self.min_reach < 1.0:
            raise ValueError("min_reach must be in (0,1)")
        if not (0.0 < self.target_engagement_share
                <= self.max_engagement_share < 1.0):
            raise ValueError("need 0 < target <= max_engagement_share < 1")


class RowStatsTable:
    """Ordered per-row stats; `degenerate` is set when the log carried zero
    engagement (all shares reported as 0)."""

    def __init__(self, rows: list[RowStats], degenerate: bool = False):
        self.rows = rows
        self.degenerate = degenerate

    def __iter__(self):
        return iter(self.rows)

    def __len__(self) -> int:
        return len(self.rows)

    def __getitem__(self, i: int) -> RowStats:
        return self.rows[i]

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("row_index,reach,engagement_share\n")
            for r in self.rows:
                fh.write(f"{r.row_index},{r.reach!r},{r.engagement_share!r}\n")


def compute_row_stats(log: SessionLog,
                      exclude_rows: tuple[int, ...] = ()) -> RowStatsTable:
    """Reach and engagement share per row index.

    A row counts as visible in a session iff it produced at least one
    impression there. `exclude_rows` drops special containers from the
    analysis (their events are ignored entirely).
    """
    if len(log) == 0:
        raise ValueError("cannot compute row stats over an empty log")
    keep = np.ones(len(log), dtype=bool)
    for r in exclude_rows:
        keep &= log.row_index != r
    rows = log.row_index[keep].astype(np.int64)
    if rows.size == 0:
        raise ValueError("all events excluded")
    n_rows = int(rows.max()) + 1

    imp = keep & (log.kind == KIND_IMPRESSION)
    pair = (log.session_id[imp] * n_rows
            + log.row_index[imp].astype(np.int64))
    sessions_per_row = np.bincount(np.unique(pair) % n_rows,
                                   minlength=n_rows)
    reach = sessions_per_row / log.n_sessions

    w = keep & log.watch_mask
    eng = np.bincount(log.row_index[w].astype(np.int64),
                      weights=log.engagement[w], minlength=n_rows)
    total = float(eng.sum())
    degenerate = total <= 0.0
    share = np.zeros(n_rows) if degenerate else eng / total

    stats = [RowStats(row_index=k, reach=float(reach[k]),
                      engagement_share=float(share[k]))
             for k in range(n_rows)]
    return RowStatsTable(stats, degenerate=degenerate)


def select_placement(stats, constraints: PlacementConstraints) -> int:
    """Pick the feasible row whose engagement share is closest to target.

    Feasible = reach >= min_reach and share <= max_engagement_share. Ties go
    to the deepest row. Permutation-invariant in the stats order.
    """
    rows = list(stats)
    if not rows:
        raise ValueError("stats must be non-empty")
    feasible = [r for r in rows
                if r.reach >= constraints.min_reach
                and r.engagement_share <= constraints.max_engagement_share]
    if not feasible:
        dump = "\n".join(
            f"  row {r.row_index}: reach={r.reach:.4f} "
            f"share={r.engagement_share:.4f}"
            for r in sorted(rows, key=lambda r: r.row_index))
        raise NoSafePlacementError(
            f"no row satisfies reach >= {constraints.min_reach} and "
            f"share <= {constraints.max_engagement_share}",
            feasible_dump=dump)
    target = constraints.target_engagement_share
    best = min(feasible,
               key=lambda r: (abs(r.engagement_share - target), -r.row_index))
    return best.row_index

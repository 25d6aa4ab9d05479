"""Popularity-concentration diagnostics: normalized top-N distributions by
exposure source, and the Gini coefficient."""

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .behavior import SOURCE_EXPLORATION, SessionLog

SOURCE_FILTERS = ("exploration", "overall")


@dataclass(frozen=True)
class PopularityDistribution:
    """(title, share) entries sorted by share descending, normalized to 1."""

    entries: tuple          # ((title_id, share), ...)
    source: str
    top_n: int

    def shares(self) -> np.ndarray:
        return np.array([s for _, s in self.entries])

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("rank,title_id,share\n")
            for rank, (tid, share) in enumerate(self.entries, start=1):
                fh.write(f"{rank},{tid},{share!r}\n")


def popularity_distribution(log: SessionLog, source_filter: str,
                            top_n: int = 500,
                            weight: str = "engagement") -> PopularityDistribution:
    """Top-N title popularity under a source filter, normalized to sum 1.

    Popularity is engagement-weighted by default; weight="count" uses raw
    watch counts instead. Truncation to top_n happens before normalization.
    """
    if source_filter not in SOURCE_FILTERS:
        raise ValueError(f"source_filter must be one of {SOURCE_FILTERS}")
    if top_n < 1:
        raise ValueError("top_n must be >= 1")
    if weight not in ("engagement", "count"):
        raise ValueError("weight must be 'engagement' or 'count'")
    mask = log.watch_mask
    if source_filter == "exploration":
        mask = mask & (log.source == SOURCE_EXPLORATION)
    if not mask.any():
        raise ValueError(f"no watch events match filter {source_filter!r}")
    titles = log.title_id[mask].astype(np.int64)
    weights = log.engagement[mask] if weight == "engagement" else None
    totals = np.bincount(titles, weights=weights).astype(np.float64)
    nonzero = np.flatnonzero(totals > 0)
    # sort by popularity desc, ties by id asc
    order = nonzero[np.lexsort((nonzero, -totals[nonzero]))][:top_n]
    kept = totals[order]
    shares = kept / kept.sum()
    entries = tuple((int(t), float(s)) for t, s in zip(order, shares))
    return PopularityDistribution(entries=entries, source=source_filter,
                                  top_n=top_n)


def gini(shares) -> float:
    """Gini coefficient of a nonnegative vector.

    Sort-based O(n log n) form of the mean-absolute-difference definition
    sum_ij |x_i - x_j| / (2 n sum_x). 0 for uniform input, (n-1)/n for a
    single atom.
    """
    x = np.asarray(shares, dtype=np.float64)
    if x.ndim != 1 or x.size == 0:
        raise ValueError("shares must be a non-empty 1-d vector")
    if np.any(x < 0):
        raise ValueError("shares must be nonnegative")
    total = x.sum()
    if total <= 0:
        raise ValueError("shares must not be all zero")
    n = x.size
    xs = np.sort(x)
    ranks = np.arange(1, n + 1, dtype=np.float64)
    return float((2.0 * np.dot(ranks, xs)) / (n * total) - (n + 1.0) / n)

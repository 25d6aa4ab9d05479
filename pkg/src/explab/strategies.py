"""Homepage composition policies.

Three families: pure-exploit control pages, a dedicated uniformly-sampled
exploration row injected at a chosen slot, and uniform insertion of
exploration titles into an existing personalized row.
"""

from dataclasses import dataclass

import numpy as np

from .behavior import (PageArrays, SessionLog, SOURCE_EXPLORATION,
                       UserProfile)
from .catalog import Catalog, QualifiedPool
from .errors import PoolExhaustedError
from .kernels import sample_without_replacement, stream_key, uniform_field

STREAM_COMPOSE = 0x31
STREAM_SCORER = 0x32

ROW_PERSONALIZED = "personalized"
ROW_EXPLORATION = "exploration"
ROW_MIXED = "mixed"


@dataclass(frozen=True)
class Row:
    kind: str
    title_ids: np.ndarray
    exploration_positions: frozenset = frozenset()

    def __post_init__(self):
        ids = np.asarray(self.title_ids, dtype=np.int64)
        object.__setattr__(self, "title_ids", ids)
        if len(np.unique(ids)) != len(ids):
            raise ValueError("duplicate title within a row")
        if self.exploration_positions and self.kind != ROW_MIXED:
            raise ValueError("exploration_positions only valid for mixed rows")
        for p in self.exploration_positions:
            if not 0 <= p < len(ids):
                raise ValueError(f"exploration position {p} out of range")

    def __len__(self) -> int:
        return len(self.title_ids)


@dataclass(frozen=True)
class Homepage:
    rows: tuple

    def __post_init__(self):
        object.__setattr__(self, "rows", tuple(self.rows))
        if not self.rows:
            raise ValueError("homepage must have at least one row")

    @property
    def n_rows(self) -> int:
        return len(self.rows)


@dataclass(frozen=True)
class InsertionPlan:
    """How many exploration slots a mixed row gets, and where."""

    n_insert: int
    positions: frozenset
    source_row_share: float
    target_impact: float

    def __post_init__(self):
        if len(self.positions) != self.n_insert:
            raise ValueError("positions must have exactly n_insert entries")


class UniformScorer:
    """Degenerate estimator: all scores equal, pages fall back to id order."""

    user_dependent = False

    def __init__(self, n_titles: int):
        self._scores = np.zeros(n_titles)

    def scores(self, user_id: int) -> np.ndarray:
        return self._scores


class SeededScorer:
    """Per-user pseudo-random scores; spreads exposure during warmup."""

    user_dependent = True

    def __init__(self, seed: int, n_titles: int):
        self._seed = seed
        self._counters = np.arange(n_titles, dtype=np.uint64)

    def scores(self, user_id: int) -> np.ndarray:
        return uniform_field(stream_key(self._seed, STREAM_SCORER, user_id),
                             self._counters)


class PopularityScorer:
    """Engagement-weighted popularity from a prior homepage log.

    Deliberately biased: what was watched, not what would be liked.
    """

    user_dependent = False

    def __init__(self, scores: np.ndarray):
        self._scores = np.asarray(scores, dtype=np.float64)

    @classmethod
    def fit(cls, log: SessionLog, n_titles: int) -> "PopularityScorer":
        w = log.watch_mask
        totals = np.bincount(log.title_id[w], weights=log.engagement[w],
                             minlength=n_titles)
        return cls(totals)

    def scores(self, user_id: int) -> np.ndarray:
        return self._scores


def _ranked_ids(scores: np.ndarray) -> np.ndarray:
    # score descending, ties broken by ascending id
    return np.lexsort((np.arange(len(scores)), -scores)).astype(np.int64)


def compose_control(user: UserProfile, catalog: Catalog, estimator,
                    n_rows: int, row_len: int, rng=None) -> Homepage:
    """Pure-exploit page: estimator ranking chopped into personalized rows."""
    need = n_rows * row_len
    if need > len(catalog):
        raise ValueError(
            f"catalog too small: need {need} titles, have {len(catalog)}")
    order = _ranked_ids(estimator.scores(user.id))[:need]
    rows = [Row(kind=ROW_PERSONALIZED,
                title_ids=order[k * row_len:(k + 1) * row_len])
            for k in range(n_rows)]
    return Homepage(rows=rows)


def sample_exploration_row(pool: QualifiedPool, m: int, rng) -> np.ndarray:
    if m > len(pool):
        raise PoolExhaustedError(
            f"cannot sample {m} titles from pool of {len(pool)}")
    return rng.choice(pool.title_ids, size=m, replace=False)


def inject_dedicated_row(page: Homepage, pool: QualifiedPool, slot: int,
                         m: int, rng) -> Homepage:
    """Insert a uniformly sampled exploration row at `slot`.

    No re-ranking or personalization touches the sample; existing rows keep
    their contents and order, shifting down by one.
    """
    if not 0 <= slot <= page.n_rows:
        raise ValueError(f"slot {slot} out of range for {page.n_rows} rows")
    ids = sample_exploration_row(pool, m, rng)
    row = Row(kind=ROW_EXPLORATION, title_ids=ids)
    rows = page.rows[:slot] + (row,) + page.rows[slot:]
    return Homepage(rows=rows)


def compute_insertion_count(row_share: float, target_impact: float,
                            row_length: int) -> int:
    """Slots to convert so the row's exploration impact hits the target.

    fraction = target_impact / row_share, n = round-half-up(fraction * length)
    with a floor of 1 so the treatment is never vacuous.
    """
    if row_length < 1:
        raise ValueError("row_length must be >= 1")
    if not 0.0 < target_impact <= row_share <= 1.0:
        raise ValueError(
            f"need 0 < target_impact <= row_share <= 1, got "
            f"target_impact={target_impact}, row_share={row_share}")
    fraction = target_impact / row_share
    return max(1, int(np.floor(fraction * row_length + 0.5)))


def _sample_distinct(pool: QualifiedPool, exclude: set, n: int, rng,
                     max_attempts: int) -> list[int]:
    picked: list[int] = []
    taken = set(exclude)
    for _ in range(n):
        for attempt in range(max_attempts):
            cand = int(pool.title_ids[rng.integers(len(pool))])
            if cand not in taken:
                picked.append(cand)
                taken.add(cand)
                break
        else:
            raise PoolExhaustedError(
                f"could not draw a fresh title after {max_attempts} attempts")
    return picked


def insert_into_row(row: Row, pool: QualifiedPool, n: int, rng,
                    max_attempts: int = 100) -> Row:
    """Splice n pool titles into uniformly chosen positions of the row.

    Row grows by n; surviving original titles keep their relative order. The
    inserted indices are recorded so the simulator can tag their exposure
    source.
    """
    if n == 0:
        return row
    if n > len(pool):
        raise PoolExhaustedError(
            f"cannot insert {n} titles from pool of {len(pool)}")
    new_titles = _sample_distinct(pool, set(row.title_ids.tolist()), n, rng,
                                  max_attempts)
    final_len = len(row) + n
    positions = np.sort(rng.choice(final_len, size=n, replace=False))
    merged = np.empty(final_len, dtype=np.int64)
    merged[positions] = new_titles
    keep = np.ones(final_len, dtype=bool)
    keep[positions] = False
    merged[keep] = row.title_ids
    return Row(kind=ROW_MIXED, title_ids=merged,
               exploration_positions=frozenset(int(p) for p in positions))


def _page_template(order: np.ndarray, n_rows: int, row_len: int) -> PageArrays:
    lens = np.full(n_rows, row_len, dtype=np.int64)
    row_start = np.concatenate(([0], np.cumsum(lens)))
    n_slots = int(row_start[-1])
    return PageArrays(
        row_start=row_start,
        slot_row=np.repeat(np.arange(n_rows, dtype=np.int32), row_len),
        slot_pos=np.tile(np.arange(row_len, dtype=np.int32), n_rows),
        slot_title=order[:n_slots].astype(np.int32),
        slot_source=np.zeros(n_slots, dtype=np.int8),
        row_is_mixed=np.zeros(n_rows, dtype=bool),
    )


class ControlPolicy:
    """Exploit-only homepage per user; pages are static across sessions."""

    def __init__(self, catalog: Catalog, estimator, n_rows: int,
                 row_len: int):
        self.catalog = catalog
        self.estimator = estimator
        self.n_rows = n_rows
        self.row_len = row_len
        self._shared: PageArrays | None = None
        self._per_user: dict[int, PageArrays] = {}
        if not estimator.user_dependent:
            order = _ranked_ids(estimator.scores(0))
            self._shared = _page_template(order, n_rows, row_len)

    def compose_arrays(self, uid: int, session_index: int) -> PageArrays:
        if self._shared is not None:
            return self._shared
        pa = self._per_user.get(uid)
        if pa is None:
            order = _ranked_ids(self.estimator.scores(uid))
            pa = _page_template(order, self.n_rows, self.row_len)
            self._per_user[uid] = pa
        return pa

    def __call__(self, user: UserProfile, session_index: int) -> Homepage:
        pa = self.compose_arrays(user.id, session_index)
        rows = [Row(kind=ROW_PERSONALIZED,
                    title_ids=pa.slot_title[pa.row_start[k]:pa.row_start[k + 1]]
                    .astype(np.int64))
                for k in range(pa.n_rows)]
        return Homepage(rows=rows)


class DedicatedRowPolicy:
    """Control page plus an exploration row at a fixed slot, resampled
    uniformly from the pool every session."""

    def __init__(self, base: ControlPolicy, pool: QualifiedPool, slot: int,
                 m: int, seed: int):
        if not 0 <= slot <= base.n_rows:
            raise ValueError(f"slot {slot} out of range")
        if m > len(pool):
            raise PoolExhaustedError(
                f"cannot sample {m} titles from pool of {len(pool)}")
        self.base = base
        self.pool = pool
        self.slot = slot
        self.m = m
        self.seed = seed
        self._templates: dict[int, PageArrays] = {}

    def _sample(self, uid: int, session_index: int) -> np.ndarray:
        key = stream_key(self.seed, STREAM_COMPOSE, uid, session_index)
        idx = sample_without_replacement(len(self.pool), self.m, key)
        return self.pool.title_ids[idx]

    def _template_for(self, base_pa: PageArrays) -> PageArrays:
        token = id(base_pa)
        tmpl = self._templates.get(token)
        if tmpl is None:
            lens = np.diff(base_pa.row_start).tolist()
            lens.insert(self.slot, self.m)
            lens = np.asarray(lens, dtype=np.int64)
            row_start = np.concatenate(([0], np.cumsum(lens)))
            n_rows = len(lens)
            slot_row = np.repeat(np.arange(n_rows, dtype=np.int32), lens)
            slot_pos = (np.arange(int(row_start[-1]), dtype=np.int32)
                        - row_start[slot_row].astype(np.int32))
            gap_lo = int(row_start[self.slot])
            gap_hi = gap_lo + self.m
            slot_title = np.empty(int(row_start[-1]), dtype=np.int32)
            slot_title[:gap_lo] = base_pa.slot_title[:gap_lo]
            slot_title[gap_hi:] = base_pa.slot_title[gap_lo:]
            source = np.zeros(int(row_start[-1]), dtype=np.int8)
            source[gap_lo:gap_hi] = SOURCE_EXPLORATION
            tmpl = PageArrays(row_start=row_start, slot_row=slot_row,
                              slot_pos=slot_pos, slot_title=slot_title,
                              slot_source=source,
                              row_is_mixed=np.zeros(n_rows, dtype=bool))
            self._templates[token] = tmpl
        return tmpl

    def compose_arrays(self, uid: int, session_index: int) -> PageArrays:
        base_pa = self.base.compose_arrays(uid, session_index)
        tmpl = self._template_for(base_pa)
        titles = tmpl.slot_title.copy()
        gap_lo = int(tmpl.row_start[self.slot])
        titles[gap_lo:gap_lo + self.m] = self._sample(uid, session_index)
        return PageArrays(row_start=tmpl.row_start, slot_row=tmpl.slot_row,
                          slot_pos=tmpl.slot_pos, slot_title=titles,
                          slot_source=tmpl.slot_source,
                          row_is_mixed=tmpl.row_is_mixed)

    def __call__(self, user: UserProfile, session_index: int) -> Homepage:
        page = self.base(user, session_index)
        row = Row(kind=ROW_EXPLORATION,
                  title_ids=self._sample(user.id, session_index))
        rows = page.rows[:self.slot] + (row,) + page.rows[self.slot:]
        return Homepage(rows=rows)


class InsertionPolicy:
    """Control page with exploration titles spliced into the top row."""

    def __init__(self, base: ControlPolicy, pool: QualifiedPool,
                 n_insert: int, seed: int, target_row: int = 0):
        self.base = base
        self.pool = pool
        self.n_insert = n_insert
        self.seed = seed
        self.target_row = target_row

    def _mixed_row(self, base_pa: PageArrays, uid: int,
                   session_index: int) -> Row:
        key = stream_key(self.seed, STREAM_COMPOSE, uid, session_index)
        k = self.target_row
        lo, hi = int(base_pa.row_start[k]), int(base_pa.row_start[k + 1])
        original = base_pa.slot_title[lo:hi].astype(np.int64)
        n = self.n_insert
        # rejection-sample fresh titles off the counter stream
        taken = set(original.tolist())
        title_key = stream_key(key, 1)
        picked: list[int] = []
        ctr = 0
        while len(picked) < n:
            if ctr >= 100 * n:
                raise PoolExhaustedError(
                    "could not draw fresh titles for insertion")
            u = uniform_field(title_key, np.array([ctr], dtype=np.uint64))[0]
            ctr += 1
            cand = int(self.pool.title_ids[int(u * len(self.pool))])
            if cand not in taken:
                picked.append(cand)
                taken.add(cand)
        final_len = len(original) + n
        positions = np.sort(sample_without_replacement(
            final_len, n, stream_key(key, 2)))
        merged = np.empty(final_len, dtype=np.int64)
        merged[positions] = picked
        keep = np.ones(final_len, dtype=bool)
        keep[positions] = False
        merged[keep] = original
        return Row(kind=ROW_MIXED, title_ids=merged,
                   exploration_positions=frozenset(int(p) for p in positions))

    def compose_arrays(self, uid: int, session_index: int) -> PageArrays:
        base_pa = self.base.compose_arrays(uid, session_index)
        mixed = self._mixed_row(base_pa, uid, session_index)
        k = self.target_row
        lens = np.diff(base_pa.row_start)
        lens[k] += self.n_insert
        row_start = np.concatenate(([0], np.cumsum(lens)))
        n_rows = base_pa.n_rows
        slot_row = np.repeat(np.arange(n_rows, dtype=np.int32), lens)
        slot_pos = (np.arange(int(row_start[-1]), dtype=np.int32)
                    - row_start[slot_row].astype(np.int32))
        lo, hi = int(base_pa.row_start[k]), int(base_pa.row_start[k + 1])
        slot_title = np.concatenate([
            base_pa.slot_title[:lo],
            mixed.title_ids.astype(np.int32),
            base_pa.slot_title[hi:]])
        source = np.zeros(int(row_start[-1]), dtype=np.int8)
        new_lo = int(row_start[k])
        for p in mixed.exploration_positions:
            source[new_lo + p] = SOURCE_EXPLORATION
        mixed_rows = np.zeros(n_rows, dtype=bool)
        mixed_rows[k] = True
        return PageArrays(row_start=row_start, slot_row=slot_row,
                          slot_pos=slot_pos, slot_title=slot_title,
                          slot_source=source, row_is_mixed=mixed_rows)

    def __call__(self, user: UserProfile, session_index: int) -> Homepage:
        base_pa = self.base.compose_arrays(user.id, session_index)
        mixed = self._mixed_row(base_pa, user.id, session_index)
        rows = []
        for k in range(base_pa.n_rows):
            if k == self.target_row:
                rows.append(mixed)
            else:
                lo, hi = int(base_pa.row_start[k]), int(base_pa.row_start[k + 1])
                rows.append(Row(kind=ROW_PERSONALIZED,
                                title_ids=base_pa.slot_title[lo:hi]
                                .astype(np.int64)))
        return Homepage(rows=rows)

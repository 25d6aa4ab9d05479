"""Co-occurrence candidate generation from randomized-exposure engagement.

Offline: build a thresholded directional table A -> (B, score) where B was
watched from the exploration container by users holding A anywhere in their
history. Online: per-antecedent top-K lookup merged by score sum.
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from .behavior import (BehaviorParams, KIND_IMPRESSION, PageArrays,
                       SOURCE_EXPLORATION, SOURCE_HOME, SessionLog,
                       UserPopulation, UserProfile, engagement_per_user,
                       simulate_population)
from .catalog import Catalog
from .experiment import ExperimentReport, assign_arms, compare_arms
from .kernels import stream_key
from .strategies import (ControlPolicy, Homepage, Row, ROW_PERSONALIZED,
                         _page_template)

NORMALIZATIONS = ("none", "per_antecedent")
CONSEQUENT_SOURCES = ("exploration", "home")

_TAG_EVAL_SIM = 0x51


@dataclass(frozen=True)
class UserHistory:
    """Recently watched titles, most recent first, deduplicated."""

    user_id: int
    watched_title_ids: tuple
    cap: int

    def __post_init__(self):
        if len(self.watched_title_ids) > self.cap:
            raise ValueError("history exceeds its cap")
        if len(set(self.watched_title_ids)) != len(self.watched_title_ids):
            raise ValueError("history contains duplicates")


def build_histories(log: SessionLog, cap: int = 50) -> dict[int, UserHistory]:
    """Per-user watch history from a log, all exposure sources included."""
    if cap < 1:
        raise ValueError("cap must be >= 1")
    w = log.watch_mask
    order = np.lexsort((log.timestamp[w], log.session_id[w]))
    uids = log.user_id[w][order]
    tids = log.title_id[w][order]
    raw: dict[int, list[int]] = {}
    for u, t in zip(uids.tolist(), tids.tolist()):
        raw.setdefault(u, []).append(t)
    out = {}
    for u, watched in raw.items():
        recent_first: list[int] = []
        for t in reversed(watched):
            if t not in recent_first:
                recent_first.append(t)
                if len(recent_first) == cap:
                    break
        out[u] = UserHistory(user_id=u, watched_title_ids=tuple(recent_first),
                             cap=cap)
    return out


@dataclass(frozen=True)
class CoOccurrenceTable:
    """antecedent -> ((consequent, score, support), ...) sorted by score
    descending then consequent id."""

    entries: dict
    threshold: int
    normalization: str

    def get(self, antecedent: int) -> tuple:
        return self.entries.get(antecedent, ())

    def antecedents(self) -> list[int]:
        return sorted(self.entries)

    @property
    def n_pairs(self) -> int:
        return sum(len(v) for v in self.entries.values())

    def to_tsv(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("antecedent_id\tconsequent_id\tscore\tsupport\n")
            for a in sorted(self.entries):
                for cid, score, support in self.entries[a]:
                    fh.write(f"{a}\t{cid}\t{score:.6f}\t{support}\n")

    @classmethod
    def from_tsv(cls, path: str | Path, threshold: int = 1,
                 normalization: str = "none") -> "CoOccurrenceTable":
        entries: dict[int, list] = {}
        with open(path, "r", encoding="utf-8") as fh:
            header = fh.readline().rstrip("\n").split("\t")
            if header != ["antecedent_id", "consequent_id", "score", "support"]:
                raise ValueError(f"unexpected TSV header: {header}")
            for line in fh:
                a, c, score, support = line.rstrip("\n").split("\t")
                entries.setdefault(int(a), []).append(
                    (int(c), float(score), int(support)))
        return cls(entries={a: tuple(v) for a, v in entries.items()},
                   threshold=threshold, normalization=normalization)


def build_cooccurrence(log: SessionLog, histories: dict[int, UserHistory],
                       threshold: int = 3,
                       normalization: str = "per_antecedent",
                       consequent_source: str = "exploration",
                       ) -> CoOccurrenceTable:
    """Aggregate engagement on consequents watched from the given source by
    users holding the antecedent in their history.

    support(A,B) counts distinct such users; raw(A,B) sums their engagement
    on B from that source. normalization="per_antecedent" divides raw by the
    number of source-exposed users holding A, turning mass into expected
    per-user engagement. Pairs with support below `threshold` are dropped.
    Histories may include all sources; only the consequent watch is
    source-restricted.
    """
    if threshold < 1:
        raise ValueError("threshold must be >= 1")
    if normalization not in NORMALIZATIONS:
        raise ValueError(f"normalization must be one of {NORMALIZATIONS}")
    if consequent_source not in CONSEQUENT_SOURCES:
        raise ValueError(
            f"consequent_source must be one of {CONSEQUENT_SOURCES}")
    src_code = (SOURCE_EXPLORATION if consequent_source == "exploration"
                else SOURCE_HOME)
    empty = CoOccurrenceTable(entries={}, threshold=threshold,
                              normalization=normalization)
    w = log.watch_mask & (log.source == src_code)
    if not w.any() or not histories:
        return empty

    # flatten histories into uid-indexed CSR arrays (uids are dense)
    max_uid = max(int(log.user_id.max()), max(histories)) + 1
    hist_len = np.zeros(max_uid, dtype=np.int64)
    for u, h in histories.items():
        hist_len[u] = len(h.watched_title_ids)
    hist_off = np.concatenate(([0], np.cumsum(hist_len)))
    hist_flat = np.zeros(int(hist_off[-1]), dtype=np.int64)
    for u, h in histories.items():
        hist_flat[hist_off[u]:hist_off[u] + hist_len[u]] = \
            h.watched_title_ids

    # per-(user, consequent) engagement from the source
    m = int(log.title_id.max()) + 1
    key = log.user_id[w].astype(np.int64) * m + log.title_id[w]
    uk, inv = np.unique(key, return_inverse=True)
    pair_eng = np.bincount(inv, weights=log.engagement[w])
    pu = uk // m
    pb = uk % m

    # expand each (user, B) against that user's antecedents
    reps = hist_len[pu]
    total = int(reps.sum())
    if total == 0:
        return empty
    starts = np.concatenate(([0], np.cumsum(reps)))[:-1]
    idx = np.repeat(hist_off[pu], reps) + (np.arange(total)
                                           - np.repeat(starts, reps))
    a_arr = hist_flat[idx]
    b_arr = np.repeat(pb, reps)
    e_arr = np.repeat(pair_eng, reps)
    keep = a_arr != b_arr
    pair_key = a_arr[keep] * m + b_arr[keep]
    upairs, pinv = np.unique(pair_key, return_inverse=True)
    support = np.bincount(pinv)
    raw = np.bincount(pinv, weights=e_arr[keep])

    retained = support >= threshold
    if not retained.any():
        return empty
    ants = (upairs[retained] // m).astype(np.int64)
    cons = (upairs[retained] % m).astype(np.int64)
    sup = support[retained]
    score = raw[retained]
    if normalization == "per_antecedent":
        exposed_mask = (log.kind == KIND_IMPRESSION) & (log.source == src_code)
        exposed = np.unique(log.user_id[exposed_mask]).astype(np.int64)
        exposed = exposed[hist_len[exposed] > 0]
        reps_e = hist_len[exposed]
        total_e = int(reps_e.sum())
        starts_e = np.concatenate(([0], np.cumsum(reps_e)))[:-1]
        idx_e = np.repeat(hist_off[exposed], reps_e) + (np.arange(total_e)
                          - np.repeat(starts_e, reps_e))
        n_holding = np.bincount(hist_flat[idx_e], minlength=m)
        score = score / n_holding[ants]

    entries: dict[int, tuple] = {}
    order = np.lexsort((cons, -score, ants))
    ants, cons, sup, score = ants[order], cons[order], sup[order], score[order]
    bounds = np.concatenate((
        [0], np.flatnonzero(np.diff(ants)) + 1, [len(ants)]))
    for i in range(len(bounds) - 1):
        lo, hi = bounds[i], bounds[i + 1]
        entries[int(ants[lo])] = tuple(
            (int(cons[j]), float(score[j]), int(sup[j]))
            for j in range(lo, hi))
    return CoOccurrenceTable(entries=entries, threshold=threshold,
                             normalization=normalization)


@dataclass(frozen=True)
class CandidateSet:
    """Merged retrieval output: (title, aggregated score) sorted by score
    descending then id; excludes titles already in the query history."""

    items: tuple       # ((title_id, score), ...)
    provenance: dict   # title_id -> tuple of contributing antecedents

    def __len__(self) -> int:
        return len(self.items)

    def title_ids(self) -> list[int]:
        return [t for t, _ in self.items]


def retrieve(history: UserHistory, table: CoOccurrenceTable,
             k: int = 10) -> CandidateSet:
    """Merge the top-k consequents of every antecedent in the history."""
    if k < 1:
        raise ValueError("k must be >= 1")
    held = set(history.watched_title_ids)
    scores: dict[int, float] = {}
    provenance: dict[int, list[int]] = {}
    for a in history.watched_title_ids:
        for cid, score, _support in table.get(a)[:k]:
            if cid in held:
                continue
            scores[cid] = scores.get(cid, 0.0) + score
            provenance.setdefault(cid, []).append(a)
    items = tuple(sorted(scores.items(), key=lambda t: (-t[1], t[0])))
    return CandidateSet(items=items,
                        provenance={c: tuple(v) for c, v in provenance.items()})


class RecallerPolicy:
    """Exploit page re-ranked with recaller candidates blended in.

    Candidate titles get a rank-normalized bonus on top of the estimator's
    popularity percentile, so strong candidates surface in the top rows while
    the rest of the page stays put. Requires a user-independent estimator.
    """

    def __init__(self, catalog: Catalog, estimator,
                 retrieved: dict[int, CandidateSet], n_rows: int,
                 row_len: int, recall_weight: float = 1.0,
                 max_candidates: int = 40):
        if estimator.user_dependent:
            raise ValueError("RecallerPolicy needs a user-independent "
                             "estimator")
        if n_rows * row_len > len(catalog):
            raise ValueError("catalog too small for the page")
        self.catalog = catalog
        self.retrieved = retrieved
        self.n_rows = n_rows
        self.row_len = row_len
        self.recall_weight = recall_weight
        self.max_candidates = max_candidates
        scores = estimator.scores(0)
        self._pop_pct = rankdata(scores, method="average") / len(scores)
        self._base_order = np.lexsort(
            (np.arange(len(scores)), -self._pop_pct)).astype(np.int64)
        self._pages: dict[int, PageArrays] = {}

    def _order_for(self, uid: int) -> np.ndarray:
        cands = self.retrieved.get(uid)
        if cands is None or len(cands) == 0:
            return self._base_order
        final = self._pop_pct.copy()
        take = cands.items[:self.max_candidates]
        n_take = len(take)
        for rank, (tid, _score) in enumerate(take):
            final[tid] += self.recall_weight * (1.0 - rank / n_take)
        return np.lexsort((np.arange(len(final)), -final)).astype(np.int64)

    def compose_arrays(self, uid: int, session_index: int) -> PageArrays:
        pa = self._pages.get(uid)
        if pa is None:
            pa = _page_template(self._order_for(uid), self.n_rows,
                                self.row_len)
            self._pages[uid] = pa
        return pa

    def __call__(self, user: UserProfile, session_index: int) -> Homepage:
        pa = self.compose_arrays(user.id, session_index)
        rows = [Row(kind=ROW_PERSONALIZED,
                    title_ids=pa.slot_title[pa.row_start[k]:pa.row_start[k + 1]]
                    .astype(np.int64))
                for k in range(pa.n_rows)]
        return Homepage(rows=rows)


def evaluate_recaller(seed: int, users: UserPopulation, catalog: Catalog,
                      estimator, histories: dict[int, UserHistory],
                      tables, *, n_rows: int, row_len: int,
                      params: BehaviorParams, k: int = 10,
                      recall_weight: float = 1.0, max_candidates: int = 40,
                      n_sessions_per_user: int = 2, salt: str = "recaller",
                      alpha: float = 0.05, min_lift: float = 0.0,
                      workers: int = 1) -> ExperimentReport:
    """Serving-time A/B: exploit-only control vs recaller-augmented pages.

    `tables` is either one CoOccurrenceTable or a mapping arm_name -> table;
    every treatment arm shares the same control split, so their lifts are
    directly comparable. Tables must come from a prior exploration-enabled
    run (two-phase pipeline: collect, build, evaluate).
    """
    if isinstance(tables, CoOccurrenceTable):
        tables = {"recaller": tables}
    arm_names = ["control"] + list(tables)
    weights = [1.0 / len(arm_names)] * len(arm_names)
    assignment = assign_arms(np.arange(len(users)), f"{salt}:{seed}",
                             weights)
    sim_seed = stream_key(seed, _TAG_EVAL_SIM)
    totals = {}
    for idx, name in enumerate(arm_names):
        uids = np.flatnonzero(assignment == idx)
        if name == "control":
            policy = ControlPolicy(catalog, estimator, n_rows, row_len)
        else:
            retrieved = {}
            for uid in uids.tolist():
                hist = histories.get(uid)
                if hist is not None:
                    retrieved[uid] = retrieve(hist, tables[name], k)
            policy = RecallerPolicy(catalog, estimator, retrieved, n_rows,
                                    row_len, recall_weight=recall_weight,
                                    max_candidates=max_candidates)
        log = simulate_population(users, policy, params,
                                  n_sessions_per_user, sim_seed, catalog,
                                  user_ids=uids, workers=workers)
        totals[name] = engagement_per_user(log, len(users))[uids]
    return compare_arms("control", totals, seed, min_lift=min_lift,
                        alpha=alpha)

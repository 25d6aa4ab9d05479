"""Synthetic user-behavior oracle.

Sessions follow a geometric scroll model (continue to the next row with
probability `scroll_persistence`), multiplicative in-row attention decay, and
click/watch propensities driven by the hidden user-title affinity. The oracle
is the only component allowed to read latent vectors.

Randomness is counter-based per (seed, user, session): results never depend
on execution order or worker count.
"""

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit

from .catalog import Catalog
from .kernels import (KIND_IMPRESSION, KIND_WATCH, backend, stream_key,
                      simulate_session_kernel)

STREAM_USERS = 0x21
STREAM_SESSION = 0x22

SOURCE_HOME = 0
SOURCE_EXPLORATION = 1
SOURCE_NAMES = ("home", "exploration_container")
KIND_NAMES = ("impression", "click", "watch")
_SOURCE_CODES = {name: code for code, name in enumerate(SOURCE_NAMES)}
_KIND_CODES = {name: code for code, name in enumerate(KIND_NAMES)}


@dataclass(frozen=True)
class UserProfile:
    id: int
    latent: np.ndarray
    scroll_persistence: float


@dataclass(frozen=True)
class UserPopulation:
    """Column store of synthetic users sharing one catalog's factor_dim."""

    latents: np.ndarray           # (n_users, factor_dim)
    scroll_persistence: np.ndarray
    taste_mean: np.ndarray        # population-level preference direction

    def __len__(self) -> int:
        return self.latents.shape[0]

    def user(self, user_id: int) -> UserProfile:
        return UserProfile(
            id=int(user_id),
            latent=self.latents[user_id],
            scroll_persistence=float(self.scroll_persistence[user_id]),
        )


@dataclass(frozen=True)
class BehaviorParams:
    """Knobs of the behavior oracle.

    `mixed_row_click_penalty` models disrupted expectations when exploration
    items are spliced into a personalized row; it multiplies click propensity
    for every slot of a mixed row. `novelty_boost` multiplies click propensity
    for titles the user has never been shown.
    """

    base_continuation: float = 0.1 ** (1.0 / 12.0)  # row-13 reach = 10%
    position_bias_decay: float = 0.6
    click_scale: float = 0.25
    watch_scale: float = 1.0
    engagement_noise_sigma: float = 0.3
    novelty_boost: float = 0.3
    mixed_row_click_penalty: float = 0.9

    def __post_init__(self):
        if not 0.0 < self.base_continuation < 1.0:
            raise ValueError("base_continuation must be in (0,1)")
        if not 0.0 < self.position_bias_decay <= 1.0:
            raise ValueError("position_bias_decay must be in (0,1]")
        if self.click_scale <= 0 or self.watch_scale <= 0:
            raise ValueError("click_scale and watch_scale must be > 0")
        if self.engagement_noise_sigma < 0:
            raise ValueError("engagement_noise_sigma must be >= 0")
        if self.novelty_boost < 0:
            raise ValueError("novelty_boost must be >= 0")
        if not 0.0 < self.mixed_row_click_penalty <= 1.0:
            raise ValueError("mixed_row_click_penalty must be in (0,1]")


@dataclass(frozen=True)
class InteractionEvent:
    session_id: int
    user_id: int
    title_id: int
    row_index: int
    position: int
    source: str   # "home" | "exploration_container"
    kind: str     # "impression" | "click" | "watch"
    engagement: float
    timestamp: int


@dataclass
class SessionLog:
    """Column-oriented event log, canonically ordered by (session, timestamp)."""

    session_id: np.ndarray
    user_id: np.ndarray
    title_id: np.ndarray
    row_index: np.ndarray
    position: np.ndarray
    source: np.ndarray
    kind: np.ndarray
    engagement: np.ndarray
    timestamp: np.ndarray
    n_sessions: int
    _deepest: np.ndarray = field(default=None, repr=False)

    def __len__(self) -> int:
        return len(self.session_id)

    def event(self, i: int) -> InteractionEvent:
        return InteractionEvent(
            session_id=int(self.session_id[i]),
            user_id=int(self.user_id[i]),
            title_id=int(self.title_id[i]),
            row_index=int(self.row_index[i]),
            position=int(self.position[i]),
            source=SOURCE_NAMES[self.source[i]],
            kind=KIND_NAMES[self.kind[i]],
            engagement=float(self.engagement[i]),
            timestamp=int(self.timestamp[i]),
        )

    def __iter__(self):
        return (self.event(i) for i in range(len(self)))

    @property
    def watch_mask(self) -> np.ndarray:
        return self.kind == KIND_WATCH

    def deepest_row_per_session(self) -> np.ndarray:
        """Deepest row index rendered, indexed by session id (-1 if no
        events; session ids may be sparse)."""
        if self._deepest is None:
            size = int(self.session_id.max()) + 1 if len(self) else 0
            out = np.full(size, -1, dtype=np.int32)
            np.maximum.at(out, self.session_id, self.row_index.astype(np.int32))
            self._deepest = out
        return self._deepest

    def canonical_sorted(self) -> "SessionLog":
        order = np.lexsort((self.timestamp, self.session_id))
        return SessionLog(
            session_id=self.session_id[order], user_id=self.user_id[order],
            title_id=self.title_id[order], row_index=self.row_index[order],
            position=self.position[order], source=self.source[order],
            kind=self.kind[order], engagement=self.engagement[order],
            timestamp=self.timestamp[order], n_sessions=self.n_sessions,
        )

    def to_jsonl(self, path: str | Path) -> None:
        cols = (self.session_id.tolist(), self.user_id.tolist(),
                self.title_id.tolist(), self.row_index.tolist(),
                self.position.tolist(), self.source.tolist(),
                self.kind.tolist(), self.engagement.tolist(),
                self.timestamp.tolist())
        with open(path, "w", encoding="utf-8") as fh:
            fh.write('{"n_sessions":%d}\n' % self.n_sessions)
            for sid, uid, tid, row, pos, src, kind, eng, ts in zip(*cols):
                fh.write(
                    '{"session_id":%d,"user_id":%d,"title_id":%d,'
                    '"row_index":%d,"position":%d,"source":"%s",'
                    '"kind":"%s","engagement":%r,"timestamp":%d}\n'
                    % (sid, uid, tid, row, pos, SOURCE_NAMES[src],
                       KIND_NAMES[kind], eng, ts))

    @classmethod
    def from_jsonl(cls, path: str | Path) -> "SessionLog":
        sids, uids, tids, rows, poss, srcs, kinds, engs, tss = \
            [], [], [], [], [], [], [], [], []
        with open(path, "r", encoding="utf-8") as fh:
            header = json.loads(fh.readline())
            n_sessions = int(header["n_sessions"])
            for line in fh:
                rec = json.loads(line)
                sids.append(rec["session_id"])
                uids.append(rec["user_id"])
                tids.append(rec["title_id"])
                rows.append(rec["row_index"])
                poss.append(rec["position"])
                srcs.append(_SOURCE_CODES[rec["source"]])
                kinds.append(_KIND_CODES[rec["kind"]])
                engs.append(rec["engagement"])
                tss.append(rec["timestamp"])
        return cls(
            session_id=np.asarray(sids, dtype=np.int64),
            user_id=np.asarray(uids, dtype=np.int32),
            title_id=np.asarray(tids, dtype=np.int32),
            row_index=np.asarray(rows, dtype=np.int16),
            position=np.asarray(poss, dtype=np.int16),
            source=np.asarray(srcs, dtype=np.int8),
            kind=np.asarray(kinds, dtype=np.int8),
            engagement=np.asarray(engs, dtype=np.float64),
            timestamp=np.asarray(tss, dtype=np.int32),
            n_sessions=n_sessions,
        )


@dataclass(frozen=True)
class PageArrays:
    """Flattened homepage, ready for the session kernel.

    Geometry arrays (row_start/slot_row/slot_pos) may be shared between pages
    of identical shape; instances are treated as immutable.
    """

    row_start: np.ndarray     # int64, len n_rows+1
    slot_row: np.ndarray      # int32, row index per slot
    slot_pos: np.ndarray      # int32, in-row position per slot
    slot_title: np.ndarray    # int32
    slot_source: np.ndarray   # int8, SOURCE_* per slot
    row_is_mixed: np.ndarray  # bool per row
    max_row_len: int = 0      # derived when left at 0
    has_mixed: bool = False

    def __post_init__(self):
        if self.max_row_len == 0:
            object.__setattr__(self, "max_row_len",
                               int(np.max(np.diff(self.row_start))))
        object.__setattr__(self, "has_mixed", bool(self.row_is_mixed.any()))

    @property
    def n_rows(self) -> int:
        return len(self.row_start) - 1

    @classmethod
    def from_homepage(cls, page) -> "PageArrays":
        """Build from a strategies.Homepage (duck-typed: rows with .kind,
        .title_ids, .exploration_positions)."""
        lens = [len(r.title_ids) for r in page.rows]
        row_start = np.concatenate(([0], np.cumsum(lens))).astype(np.int64)
        slot_title = np.concatenate(
            [np.asarray(r.title_ids, dtype=np.int32) for r in page.rows])
        slot_row = np.repeat(np.arange(len(lens), dtype=np.int32), lens)
        slot_pos = (np.arange(len(slot_title), dtype=np.int32)
                    - row_start[slot_row].astype(np.int32))
        source = np.zeros(len(slot_title), dtype=np.int8)
        mixed = np.zeros(len(lens), dtype=bool)
        for k, row in enumerate(page.rows):
            if row.kind == "exploration":
                source[row_start[k]:row_start[k + 1]] = SOURCE_EXPLORATION
            elif row.kind == "mixed":
                mixed[k] = True
                for p in row.exploration_positions:
                    source[row_start[k] + p] = SOURCE_EXPLORATION
        return cls(row_start=row_start, slot_row=slot_row, slot_pos=slot_pos,
                   slot_title=slot_title, slot_source=source,
                   row_is_mixed=mixed)


def calibrate_persistence(target_row: int, target_reach: float) -> float:
    """Scroll persistence p with p**(target_row - 1) == target_reach.

    target_row is 1-indexed (row 1 always reached).
    """
    if target_row < 2:
        raise ValueError(f"target_row must be >= 2, got {target_row}")
    if not 0.0 < target_reach < 1.0:
        raise ValueError(f"target_reach must be in (0,1), got {target_reach}")
    return target_reach ** (1.0 / (target_row - 1))


def generate_users(seed: int, n_users: int, factor_dim: int,
                   taste_strength: float = 1.5,
                   persistence: float | None = None) -> UserPopulation:
    """Users = shared taste mean + standard normal idiosyncrasy.

    The taste mean gives titles genuinely different population-level appeal,
    which is what popularity-driven rankers latch onto.
    """
    if n_users < 1:
        raise ValueError(f"n_users must be >= 1, got {n_users}")
    if persistence is None:
        persistence = BehaviorParams().base_continuation
    if not 0.0 < persistence < 1.0:
        raise ValueError("persistence must be in (0,1)")
    rng = np.random.default_rng(stream_key(seed, STREAM_USERS))
    direction = rng.standard_normal(factor_dim)
    direction /= np.linalg.norm(direction)
    taste_mean = taste_strength * direction
    latents = taste_mean + rng.standard_normal((n_users, factor_dim))
    return UserPopulation(
        latents=latents,
        scroll_persistence=np.full(n_users, persistence),
        taste_mean=taste_mean,
    )


def _decay_powers(decay: float, lmax: int, cache: dict) -> np.ndarray:
    arr = cache.get((decay, lmax))
    if arr is None:
        arr = decay ** np.arange(lmax, dtype=np.float64)
        cache[(decay, lmax)] = arr
    return arr


class _TitlePropensities:
    """Per-user click/watch propensity over the whole catalog."""

    __slots__ = ("click", "watch_mean")

    def __init__(self, user_latent, catalog: Catalog, params: BehaviorParams):
        aff = catalog.latents @ user_latent
        self.click = params.click_scale * expit(aff)
        self.watch_mean = params.watch_scale * np.logaddexp(0.0, aff)


def _run_session(key, pa: PageArrays, prop: _TitlePropensities,
                 params: BehaviorParams, persistence, seen, decay_pow):
    """One kernel invocation plus slot->event column expansion."""
    slot_click = prop.click[pa.slot_title]
    if params.novelty_boost > 0.0:
        novel = ~seen[pa.slot_title]
        slot_click = slot_click * (1.0 + params.novelty_boost * novel)
    if pa.has_mixed:
        mult = np.where(pa.row_is_mixed, params.mixed_row_click_penalty, 1.0)
        slot_click = slot_click * mult[pa.slot_row]
    np.minimum(slot_click, 1.0, out=slot_click)
    slot_watch = prop.watch_mean[pa.slot_title]

    kind, slot, engagement = simulate_session_kernel(
        np.uint64(key), pa.row_start, slot_click, slot_watch,
        persistence, decay_pow, params.engagement_noise_sigma)

    titles = pa.slot_title[slot]
    seen[titles[kind == KIND_IMPRESSION]] = True
    return kind, titles, pa.slot_row[slot], pa.slot_pos[slot], \
        pa.slot_source[slot], engagement


def simulate_session(user: UserProfile, homepage, catalog: Catalog,
                     params: BehaviorParams, rng_key: int,
                     seen: np.ndarray | None = None,
                     session_id: int = 0) -> list[InteractionEvent]:
    """Simulate one session and materialize event objects.

    `rng_key` is the 64-bit counter-stream key for this session (derive with
    session_key()). `seen` marks titles already shown to this user; it is
    updated in place when given.
    """
    if len(homepage.rows) == 0:
        raise ValueError("homepage must be non-empty")
    pa = PageArrays.from_homepage(homepage)
    prop = _TitlePropensities(user.latent, catalog, params)
    if seen is None:
        seen = np.zeros(len(catalog), dtype=bool)
    decay_pow = params.position_bias_decay ** np.arange(
        pa.max_row_len, dtype=np.float64)
    kind, titles, rows, poss, srcs, eng = _run_session(
        rng_key, pa, prop, params, user.scroll_persistence, seen, decay_pow)
    return [
        InteractionEvent(
            session_id=session_id, user_id=user.id, title_id=int(titles[i]),
            row_index=int(rows[i]), position=int(poss[i]),
            source=SOURCE_NAMES[srcs[i]], kind=KIND_NAMES[kind[i]],
            engagement=float(eng[i]), timestamp=i)
        for i in range(len(kind))
    ]


def session_key(seed: int, user_id: int, session_index: int) -> int:
    """Counter-stream key for one (run, user, session) triple."""
    return stream_key(seed, STREAM_SESSION, user_id, session_index)


def _simulate_user_span(uid_span, users, policy, catalog, params,
                        n_sessions, seed):
    """Simulate the given user ids; returns per-column array lists."""
    out = [[] for _ in range(9)]
    n_titles = len(catalog)
    decay_cache = {}
    compose_arrays = getattr(policy, "compose_arrays", None)
    for uid in np.asarray(uid_span).tolist():
        prop = _TitlePropensities(users.latents[uid], catalog, params)
        persistence = float(users.scroll_persistence[uid])
        seen = np.zeros(n_titles, dtype=bool)
        for s in range(n_sessions):
            if compose_arrays is not None:
                pa = compose_arrays(uid, s)
            else:
                pa = PageArrays.from_homepage(policy(users.user(uid), s))
            decay_pow = _decay_powers(params.position_bias_decay,
                                      pa.max_row_len, decay_cache)
            key = session_key(seed, uid, s)
            kind, titles, rows, poss, srcs, eng = _run_session(
                key, pa, prop, params, persistence, seen, decay_pow)
            m = len(kind)
            sid = uid * n_sessions + s
            out[0].append(np.full(m, sid, dtype=np.int64))
            out[1].append(np.full(m, uid, dtype=np.int32))
            out[2].append(titles.astype(np.int32, copy=False))
            out[3].append(rows.astype(np.int16))
            out[4].append(poss.astype(np.int16))
            out[5].append(srcs)
            out[6].append(kind)
            out[7].append(eng)
            out[8].append(np.arange(m, dtype=np.int32))
    return out


def simulate_population(users: UserPopulation, homepage_policy,
                        params: BehaviorParams, n_sessions_per_user: int,
                        seed: int, catalog: Catalog,
                        user_ids: np.ndarray | None = None,
                        workers: int = 1) -> SessionLog:
    """Simulate every (user, session) pair under a homepage policy.

    `homepage_policy` is a callable (UserProfile, session_index) -> Homepage;
    policies from the strategies module additionally expose a fast
    compose_arrays path. `user_ids` restricts simulation to a subset while
    keeping each user's global random stream (session ids stay globally
    unique). Output is a pure function of (seed, users, policy, params)
    regardless of `workers`.
    """
    if n_sessions_per_user < 0:
        raise ValueError("n_sessions_per_user must be >= 0")
    if user_ids is None:
        uid_list = np.arange(len(users), dtype=np.int64)
    else:
        uid_list = np.asarray(user_ids, dtype=np.int64)
    n_sessions = len(uid_list) * n_sessions_per_user
    if n_sessions == 0:
        empty = dict(
            session_id=np.empty(0, np.int64), user_id=np.empty(0, np.int32),
            title_id=np.empty(0, np.int32), row_index=np.empty(0, np.int16),
            position=np.empty(0, np.int16), source=np.empty(0, np.int8),
            kind=np.empty(0, np.int8), engagement=np.empty(0, np.float64),
            timestamp=np.empty(0, np.int32))
        return SessionLog(n_sessions=0, **empty)

    workers = max(1, int(workers))
    if workers == 1:
        blocks = [_simulate_user_span(uid_list, users, homepage_policy,
                                      catalog, params, n_sessions_per_user,
                                      seed)]
    else:
        spans = [s for s in np.array_split(uid_list, workers) if len(s)]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_simulate_user_span, span, users,
                                   homepage_policy, catalog, params,
                                   n_sessions_per_user, seed)
                       for span in spans]
            blocks = [f.result() for f in futures]

    cols = [np.concatenate([arr for block in blocks for arr in block[i]])
            if any(block[i] for block in blocks) else None
            for i in range(9)]
    if cols[0] is None:
        cols = [np.empty(0, dt) for dt in (np.int64, np.int32, np.int32,
                                           np.int16, np.int16, np.int8,
                                           np.int8, np.float64, np.int32)]
    return SessionLog(
        session_id=cols[0], user_id=cols[1], title_id=cols[2],
        row_index=cols[3], position=cols[4], source=cols[5], kind=cols[6],
        engagement=cols[7], timestamp=cols[8], n_sessions=n_sessions,
    )


def engagement_per_user(log: SessionLog, n_users: int) -> np.ndarray:
    """Total watch engagement per user id (users without watches get 0)."""
    w = log.watch_mask
    return np.bincount(log.user_id[w], weights=log.engagement[w],
                       minlength=n_users)


def active_backend() -> str:
    """Kernel backend in use (numba or numpy)."""
    return backend()

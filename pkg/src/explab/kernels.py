"""Hot inner loops for session simulation, in two interchangeable backends.

The scroll/attention/click loop dominates runtime at population scale, so it
is compiled with numba when available. A vectorized pure-numpy path covers
environments without numba and doubles as a correctness cross-check. Select
with EXPLAB_BACKEND=numba|numpy (default: numba when importable).

Every random decision reads a counter-based stream: uniform(key, counter)
where the counter is a pure function of (row, position, draw type). Draws are
therefore independent of evaluation order, and both backends produce bitwise
identical event streams for the same session key.
"""

import math
import os

import numpy as np

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_INV53 = 1.0 / 9007199254740992.0  # 2**-53

# Events emitted by the kernels, in funnel order.
KIND_IMPRESSION = 0
KIND_CLICK = 1
KIND_WATCH = 2


def mix64(x: int) -> int:
    """SplitMix64 finalizer over python ints (masked to 64 bits)."""
    x &= _MASK64
    x = ((x ^ (x >> 30)) * _MIX1) & _MASK64
    x = ((x ^ (x >> 27)) * _MIX2) & _MASK64
    return x ^ (x >> 31)


def stream_key(seed: int, *path: int) -> int:
    """Derive an independent 64-bit stream key from a seed and an index path.

    Chained finalizer so that (seed, a, b) and (seed, b, a) land in
    unrelated streams.
    """
    key = mix64(int(seed) + _GOLDEN)
    for part in path:
        key = mix64(key ^ ((int(part) + _GOLDEN) & _MASK64))
    return key


def uniform_field(key: int, counters: np.ndarray) -> np.ndarray:
    """Vectorized counter->U(0,1) map. Open interval on both ends."""
    z = np.uint64(key) + counters.astype(np.uint64, copy=False) * np.uint64(_GOLDEN)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
    z = z ^ (z >> np.uint64(31))
    return ((z >> np.uint64(11)) + 0.5) * _INV53


def sample_without_replacement(n: int, m: int, key: int) -> np.ndarray:
    """m distinct indices uniform over range(n), via partial Fisher-Yates
    driven by the counter stream `key`. Cheap (no generator state)."""
    if not 0 <= m <= n:
        raise ValueError(f"need 0 <= m <= n, got m={m}, n={n}")
    u = uniform_field(key, np.arange(m, dtype=np.uint64))
    pool = np.arange(n, dtype=np.int64)
    for i in range(m):
        j = i + int(u[i] * (n - i))
        pool[i], pool[j] = pool[j], pool[i]
    return pool[:m]


# Acklam's rational approximation to the standard normal inverse CDF.
# Relative error < 1.2e-9 over (0,1); plenty for simulation noise.
_PPF_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
          1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_PPF_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
          6.680131188771972e+01, -1.328068155288572e+01)
_PPF_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
          -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_PPF_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
          3.754408661907416e+00)
_PPF_SPLIT = 0.02425


def norm_ppf(u: np.ndarray) -> np.ndarray:
    """Standard normal inverse CDF, vectorized (Acklam's approximation)."""
    u = np.asarray(u, dtype=np.float64)
    out = np.empty_like(u)
    a, b, c, d = _PPF_A, _PPF_B, _PPF_C, _PPF_D

    lo = u < _PPF_SPLIT
    hi = u > 1.0 - _PPF_SPLIT
    mid = ~(lo | hi)

    if np.any(mid):
        q = u[mid] - 0.5
        r = q * q
        num = ((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]
        den = ((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0
        out[mid] = num * q / den
    if np.any(lo):
        q = np.sqrt(-2.0 * np.log(u[lo]))
        num = ((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]
        den = (((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0
        out[lo] = num / den
    if np.any(hi):
        q = np.sqrt(-2.0 * np.log(1.0 - u[hi]))
        num = ((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]
        den = (((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0
        out[hi] = -num / den
    return out


def _session_numpy(key, row_start, slot_click, slot_watch_mean,
                   persistence, decay_pow, sigma):
    """Vectorized one-session simulation. See _session_numba for semantics."""
    n_rows = row_start.shape[0] - 1
    lmax = decay_pow.shape[0]
    stride = 3 * lmax + 1
    n_slots = int(row_start[-1])

    row_of_slot = np.repeat(np.arange(n_rows), np.diff(row_start))
    pos_of_slot = np.arange(n_slots) - row_start[row_of_slot]

    # Continuation draws gate which rows are viewed; row 0 is always viewed.
    if n_rows > 1:
        cont_ctr = np.arange(n_rows - 1, dtype=np.uint64) * np.uint64(stride) \
            + np.uint64(3 * lmax)
        cont_ok = uniform_field(key, cont_ctr) < persistence
        viewed_rows = np.concatenate(([True], np.cumprod(cont_ok).astype(bool)))
    else:
        viewed_rows = np.array([True])

    base = row_of_slot.astype(np.uint64) * np.uint64(stride)
    pos_u = pos_of_slot.astype(np.uint64)
    attended = viewed_rows[row_of_slot] \
        & (uniform_field(key, base + pos_u) < decay_pow[pos_of_slot])
    clicked = attended \
        & (uniform_field(key, base + np.uint64(lmax) + pos_u) < slot_click)

    z = norm_ppf(uniform_field(key, base + np.uint64(2 * lmax) + pos_u))
    engagement_all = slot_watch_mean * np.exp(sigma * z - 0.5 * sigma * sigma)

    # Lay out events in scan order: per slot, impression then click then watch.
    counts = attended.astype(np.int64) + 2 * clicked.astype(np.int64)
    offsets = np.concatenate(([0], np.cumsum(counts)))
    m = int(offsets[-1])
    kind = np.empty(m, dtype=np.int8)
    slot = np.empty(m, dtype=np.int32)
    engagement = np.zeros(m, dtype=np.float64)

    att_idx = np.where(attended)[0]
    imp_at = offsets[:-1][attended]
    kind[imp_at] = KIND_IMPRESSION
    slot[imp_at] = att_idx

    clk_idx = np.where(clicked)[0]
    clk_at = offsets[:-1][clicked] + 1
    kind[clk_at] = KIND_CLICK
    slot[clk_at] = clk_idx
    kind[clk_at + 1] = KIND_WATCH
    slot[clk_at + 1] = clk_idx
    engagement[clk_at + 1] = engagement_all[clicked]
    return kind, slot, engagement


def _session_python(key, row_start, slot_click, slot_watch_mean,
                    persistence, decay_pow, sigma):
    """Scalar reference loop; numba compiles this into the fast backend."""
    n_rows = row_start.shape[0] - 1
    lmax = decay_pow.shape[0]
    stride = np.uint64(3 * lmax + 1)
    n_slots = row_start[n_rows]
    kind = np.empty(3 * n_slots, dtype=np.int8)
    slot = np.empty(3 * n_slots, dtype=np.int32)
    engagement = np.zeros(3 * n_slots, dtype=np.float64)
    ukey = np.uint64(key)
    gold = np.uint64(_GOLDEN)
    m1 = np.uint64(_MIX1)
    m2 = np.uint64(_MIX2)
    half_var = 0.5 * sigma * sigma
    m = 0
    for k in range(n_rows):
        base = np.uint64(k) * stride
        for s in range(row_start[k], row_start[k + 1]):
            pos = s - row_start[k]
            z = ukey + (base + np.uint64(pos)) * gold
            z = (z ^ (z >> np.uint64(30))) * m1
            z = (z ^ (z >> np.uint64(27))) * m2
            z = z ^ (z >> np.uint64(31))
            u_att = ((z >> np.uint64(11)) + 0.5) * _INV53
            if u_att >= decay_pow[pos]:
                continue
            kind[m] = KIND_IMPRESSION
            slot[m] = s
            m += 1
            z = ukey + (base + np.uint64(lmax + pos)) * gold
            z = (z ^ (z >> np.uint64(30))) * m1
            z = (z ^ (z >> np.uint64(27))) * m2
            z = z ^ (z >> np.uint64(31))
            u_clk = ((z >> np.uint64(11)) + 0.5) * _INV53
            if u_clk >= slot_click[s]:
                continue
            kind[m] = KIND_CLICK
            slot[m] = s
            m += 1
            z = ukey + (base + np.uint64(2 * lmax + pos)) * gold
            z = (z ^ (z >> np.uint64(30))) * m1
            z = (z ^ (z >> np.uint64(27))) * m2
            z = z ^ (z >> np.uint64(31))
            u_n = ((z >> np.uint64(11)) + 0.5) * _INV53
            gauss = _ppf_scalar(u_n)
            kind[m] = KIND_WATCH
            slot[m] = s
            engagement[m] = slot_watch_mean[s] * math.exp(sigma * gauss - half_var)
            m += 1
        if k + 1 < n_rows:
            z = ukey + (base + np.uint64(3 * lmax)) * gold
            z = (z ^ (z >> np.uint64(30))) * m1
            z = (z ^ (z >> np.uint64(27))) * m2
            z = z ^ (z >> np.uint64(31))
            if ((z >> np.uint64(11)) + 0.5) * _INV53 >= persistence:
                break
    return kind[:m], slot[:m], engagement[:m]


def _ppf_scalar_py(u: float) -> float:
    a, b, c, d = _PPF_A, _PPF_B, _PPF_C, _PPF_D
    if u < _PPF_SPLIT:
        q = math.sqrt(-2.0 * math.log(u))
        num = ((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]
        den = (((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0
        return num / den
    if u > 1.0 - _PPF_SPLIT:
        q = math.sqrt(-2.0 * math.log(1.0 - u))
        num = ((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]
        den = (((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0
        return -num / den
    q = u - 0.5
    r = q * q
    num = ((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]
    den = ((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0
    return num * q / den


def _build_numba_backend():
    from numba import njit

    global _ppf_scalar
    ppf = njit(cache=True, nogil=True)(_ppf_scalar_py)
    _ppf_scalar = ppf
    kernel = njit(cache=True, nogil=True)(_session_python)
    return kernel


_ppf_scalar = _ppf_scalar_py

_env = os.environ.get("EXPLAB_BACKEND", "").strip().lower()
if _env not in ("", "numba", "numpy"):
    raise RuntimeError(f"EXPLAB_BACKEND must be 'numba' or 'numpy', got {_env!r}")

if _env == "numpy":
    BACKEND = "numpy"
    simulate_session_kernel = _session_numpy
else:
    try:
        simulate_session_kernel = _build_numba_backend()
        BACKEND = "numba"
    except ImportError:
        if _env == "numba":
            raise
        BACKEND = "numpy"
        simulate_session_kernel = _session_numpy


def backend() -> str:
    """Name of the active kernel backend."""
    return BACKEND

"""Synthetic title catalog and the qualified exploration pool.

Latent factor vectors are simulation ground truth only: the behavior oracle
reads them, recommendation-side code must not (estimators are fit from logs).
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmptyPoolError
from .kernels import stream_key

STREAM_CATALOG = 0x11


@dataclass(frozen=True)
class Title:
    """One catalog item. `latent` is the hidden preference factor."""

    id: int
    quality_score: float
    policy_ok: bool
    latent: np.ndarray

    def __eq__(self, other) -> bool:
        if not isinstance(other, Title):
            return NotImplemented
        return (self.id == other.id
                and self.quality_score == other.quality_score
                and self.policy_ok == other.policy_ok
                and np.array_equal(self.latent, other.latent))


@dataclass(frozen=True)
class Catalog:
    """Column-oriented title collection; ids are dense [0, n)."""

    quality_score: np.ndarray
    policy_ok: np.ndarray
    latents: np.ndarray  # shape (n_titles, factor_dim)

    def __post_init__(self):
        n = len(self.quality_score)
        if n == 0:
            raise ValueError("catalog must be non-empty")
        if self.latents.shape[0] != n or len(self.policy_ok) != n:
            raise ValueError("catalog column lengths disagree")

    def __len__(self) -> int:
        return len(self.quality_score)

    @property
    def factor_dim(self) -> int:
        return self.latents.shape[1]

    def title(self, title_id: int) -> Title:
        return Title(
            id=int(title_id),
            quality_score=float(self.quality_score[title_id]),
            policy_ok=bool(self.policy_ok[title_id]),
            latent=self.latents[title_id],
        )

    def to_jsonl(self, path: str | Path) -> None:
        """One title per line; fixed field order for byte-stable goldens."""
        with open(path, "w", encoding="utf-8") as fh:
            for i in range(len(self)):
                latent = ", ".join(repr(float(v)) for v in self.latents[i])
                fh.write(
                    '{"id": %d, "quality_score": %r, "policy_ok": %s, "latent": [%s]}\n'
                    % (i, float(self.quality_score[i]),
                       "true" if self.policy_ok[i] else "false", latent)
                )

    @classmethod
    def from_jsonl(cls, path: str | Path) -> "Catalog":
        quality, ok, latents = [], [], []
        with open(path, "r", encoding="utf-8") as fh:
            for expected_id, line in enumerate(fh):
                rec = json.loads(line)
                if rec["id"] != expected_id:
                    raise ValueError(f"non-dense title ids: got {rec['id']} "
                                     f"at line {expected_id}")
                quality.append(rec["quality_score"])
                ok.append(rec["policy_ok"])
                latents.append(rec["latent"])
        return cls(
            quality_score=np.asarray(quality, dtype=np.float64),
            policy_ok=np.asarray(ok, dtype=bool),
            latents=np.asarray(latents, dtype=np.float64),
        )


@dataclass(frozen=True)
class QualifiedPool:
    """Titles eligible for randomized exposure."""

    title_ids: np.ndarray  # sorted, unique
    source_catalog_size: int
    _members: frozenset = field(repr=False, default=None)

    def __post_init__(self):
        object.__setattr__(self, "_members", frozenset(self.title_ids.tolist()))

    def __len__(self) -> int:
        return len(self.title_ids)

    def __contains__(self, title_id: int) -> bool:
        return int(title_id) in self._members


def generate_catalog(seed: int, n_titles: int, factor_dim: int,
                     policy_ok_prob: float = 0.98) -> Catalog:
    """Deterministic synthetic catalog.

    Latents are standard normal per dimension, quality uniform in [0,1],
    policy_ok Bernoulli(policy_ok_prob).
    """
    if n_titles < 1:
        raise ValueError(f"n_titles must be >= 1, got {n_titles}")
    if factor_dim < 1:
        raise ValueError(f"factor_dim must be >= 1, got {factor_dim}")
    if not 0.0 <= policy_ok_prob <= 1.0:
        raise ValueError(f"policy_ok_prob must be in [0,1], got {policy_ok_prob}")
    rng = np.random.default_rng(stream_key(seed, STREAM_CATALOG))
    return Catalog(
        quality_score=rng.uniform(0.0, 1.0, size=n_titles),
        policy_ok=rng.uniform(0.0, 1.0, size=n_titles) < policy_ok_prob,
        latents=rng.standard_normal(size=(n_titles, factor_dim)),
    )


def qualify_pool(catalog: Catalog, min_quality: float = 0.3) -> QualifiedPool:
    """Light qualification: quality floor plus the policy flag.

    Membership never reads latent vectors, so no preference signal leaks
    into eligibility.
    """
    if not 0.0 <= min_quality <= 1.0:
        raise ValueError(f"min_quality must be in [0,1], got {min_quality}")
    mask = (catalog.quality_score >= min_quality) & catalog.policy_ok
    ids = np.flatnonzero(mask).astype(np.int64)
    if len(ids) == 0:
        raise EmptyPoolError(
            f"no title passes qualification (min_quality={min_quality})")
    return QualifiedPool(title_ids=ids, source_catalog_size=len(catalog))

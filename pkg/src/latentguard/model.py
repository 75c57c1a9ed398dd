"""Latent factor model: vector layout, user/ad vector construction, scoring.

The model scores a (user, ad) pair as ``bias + <nu_u, nu_a>`` where the
user vector is an entrywise product of per-feature expansions and the ad
vector is a plain sum of its feature vectors.  Every function here is a
small, readable numpy implementation; the training engine has a compiled
fast path that must agree with these (see tests).

Vector layout, fixed and deterministic:

* the combined length-``N`` vector holds all pair blocks ``(i, j)`` with
  ``i < j`` in lexicographic order, ``pair_dim`` entries each, followed by
  the per-feature single blocks ``0 .. K-1``, ``single_dim`` entries each;
* a user feature's own length-``d`` vector holds its ``K-1`` pair
  sub-blocks ordered by the partner feature's index ascending, followed by
  its single block.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Sequence, Tuple

import numpy as np

from .errors import InvalidInputError, NumericError


@dataclass(frozen=True)
class FeatureConfig:
    """Dimensions of the latent vector layout.

    ``n_user_features`` user feature types interact pairwise; each pair
    gets ``pair_dim`` entries and each feature alone gets ``single_dim``
    entries.  The combined length ``full_dim`` and the per-feature length
    ``feature_dim`` are always derived, never stored.
    """

    n_user_features: int
    pair_dim: int
    single_dim: int
    ad_feature_types: Tuple[str, ...] = ("creative", "campaign", "advertiser")

    def __post_init__(self) -> None:
        if self.n_user_features < 2:
            raise InvalidInputError("need at least two user feature types")
        if self.pair_dim < 0 or self.single_dim < 0:
            raise InvalidInputError("pair_dim and single_dim must be nonnegative")
        if self.pair_dim + self.single_dim < 1:
            raise InvalidInputError("pair_dim + single_dim must be at least 1")
        if not self.ad_feature_types:
            raise InvalidInputError("need at least one ad feature type")

    @property
    def n_pairs(self) -> int:
        k = self.n_user_features
        return (k * (k - 1)) // 2

    @property
    def full_dim(self) -> int:
        """Length N of combined user vectors and of ad feature vectors."""
        return self.n_pairs * self.pair_dim + self.n_user_features * self.single_dim

    @property
    def feature_dim(self) -> int:
        """Length d of a single user feature value's vector."""
        return (self.n_user_features - 1) * self.pair_dim + self.single_dim


@dataclass(frozen=True, order=True)
class FeatureValueId:
    """Identity of one feature value; the key of its latent vector.

    ``user_index`` is the user feature type index in ``[0, K)`` for user
    feature values and ``-1`` for ad feature values.  Ordering is total
    (field-lexicographic), which makes iteration deterministic.
    """

    feature_type: str
    value: str
    user_index: int = -1

    @property
    def is_user(self) -> bool:
        return self.user_index >= 0


def user_value_id(k: int, value: str) -> FeatureValueId:
    return FeatureValueId(feature_type=f"u{k}", value=str(value), user_index=k)


def ad_value_id(feature_type: str, value: str) -> FeatureValueId:
    return FeatureValueId(feature_type=feature_type, value=str(value))


@dataclass
class LatentVector:
    values: np.ndarray
    update_count: int = 0
    last_seen: float = 0.0

    def copy(self) -> "LatentVector":
        return LatentVector(self.values.copy(), self.update_count, self.last_seen)


@dataclass
class ModelParams:
    """The trainable state: a bias plus one latent vector per feature value."""

    config: FeatureConfig
    bias: float = 0.0
    vectors: Dict[FeatureValueId, LatentVector] = field(default_factory=dict)

    def expected_len(self, vid: FeatureValueId) -> int:
        return self.config.feature_dim if vid.is_user else self.config.full_dim

    def copy(self) -> "ModelParams":
        return ModelParams(
            config=self.config,
            bias=self.bias,
            vectors={vid: vec.copy() for vid, vec in self.vectors.items()},
        )

    def __len__(self) -> int:
        return len(self.vectors)


def pair_block_index(i: int, j: int, n_features: int) -> int:
    """Index of pair ``(i, j)``, ``i < j``, in the lexicographic enumeration."""
    if not 0 <= i < j < n_features:
        raise InvalidInputError(f"bad pair ({i}, {j}) for {n_features} features")
    return i * n_features - (i * (i + 1)) // 2 + (j - i - 1)


def user_slot_positions(k: int, cfg: FeatureConfig) -> np.ndarray:
    """Positions in the combined vector owned by user feature ``k``.

    Entry ``m`` of the result is where coordinate ``m`` of feature ``k``'s
    own vector lands after expansion.
    """
    if not 0 <= k < cfg.n_user_features:
        raise InvalidInputError(f"feature index {k} out of range")
    positions: List[int] = []
    for j in range(cfg.n_user_features):
        if j == k:
            continue
        base = pair_block_index(min(j, k), max(j, k), cfg.n_user_features) * cfg.pair_dim
        positions.extend(range(base, base + cfg.pair_dim))
    base = cfg.n_pairs * cfg.pair_dim + k * cfg.single_dim
    positions.extend(range(base, base + cfg.single_dim))
    return np.asarray(positions, dtype=np.int64)


def expand_user_feature(vec: np.ndarray, k: int, cfg: FeatureConfig) -> np.ndarray:
    """Place feature ``k``'s vector into the combined layout, padding with 1s."""
    vec = np.asarray(vec, dtype=np.float64)
    if vec.shape != (cfg.feature_dim,):
        raise InvalidInputError(
            f"feature vector has length {vec.shape}, expected ({cfg.feature_dim},)"
        )
    out = np.ones(cfg.full_dim)
    out[user_slot_positions(k, cfg)] = vec
    return out


def build_user_vector(
    feature_vecs: Sequence[Tuple[int, np.ndarray]], cfg: FeatureConfig
) -> np.ndarray:
    """Entrywise product of the expanded per-feature vectors."""
    ks = sorted(k for k, _ in feature_vecs)
    if ks != list(range(cfg.n_user_features)):
        raise InvalidInputError(
            f"need exactly one vector per feature type 0..{cfg.n_user_features - 1}, got {ks}"
        )
    out = np.ones(cfg.full_dim)
    for k, vec in feature_vecs:
        out *= expand_user_feature(vec, k, cfg)
    return out


def build_ad_vector(ad_vecs: Sequence[np.ndarray]) -> np.ndarray:
    """Componentwise sum of the ad's feature vectors."""
    if len(ad_vecs) == 0:
        raise InvalidInputError("ad vector list is empty")
    first = np.asarray(ad_vecs[0], dtype=np.float64)
    out = first.copy()
    for vec in ad_vecs[1:]:
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != first.shape:
            raise InvalidInputError("ad feature vectors have mismatched lengths")
        out += vec
    return out


def logit(nu_u: np.ndarray, nu_a: np.ndarray, bias: float) -> float:
    """Affinity score ``bias + <nu_u, nu_a>``."""
    nu_u = np.asarray(nu_u, dtype=np.float64)
    nu_a = np.asarray(nu_a, dtype=np.float64)
    if nu_u.shape != nu_a.shape:
        raise InvalidInputError("user and ad vectors have mismatched lengths")
    return float(bias + np.dot(nu_u, nu_a))


def pctr(logit_val: float) -> float:
    """Sigmoid of the score; strictly inside (0, 1) for finite input."""
    if not math.isfinite(logit_val):
        raise NumericError(f"non-finite logit {logit_val!r}")
    if logit_val >= 0.0:
        return 1.0 / (1.0 + math.exp(-logit_val))
    e = math.exp(logit_val)
    return e / (1.0 + e)


def msqr(x: np.ndarray) -> float:
    """Mean squared element, ``||x||_2^2 / len(x)``."""
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        raise InvalidInputError("msqr of an empty vector")
    return float(np.dot(x, x) / x.size)


def inf_norm(x: np.ndarray) -> float:
    """Largest absolute component."""
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        raise InvalidInputError("inf_norm of an empty vector")
    return float(np.max(np.abs(x)))

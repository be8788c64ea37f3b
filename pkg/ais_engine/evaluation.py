"""
Hold-out evaluation of recommender neighbourhoods.

Hides part of each sampled user's votes, builds a neighbourhood from the
remaining data and scores the predictions for the hidden votes. The immune
network (plain and idiotypic) is compared against a k-nearest-neighbour
neighbourhood, the usual collaborative-filtering baseline.
"""
import logging
from dataclasses import asdict, dataclass
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from sklearn.metrics import mean_absolute_error

from ais_engine.affinity import pearson
from ais_engine.config import DynamicsConfig, PearsonConfig
from ais_engine.encoding import UserProfile
from ais_engine.errors import InputError, NoDataError, ParameterError
from ais_engine.immune_network import NetworkState, build_state, predict, run_recommender
from ais_engine.ingest import RatingsTable

logger = logging.getLogger(__name__)


class EvaluationMethod(str, Enum):
    AIS = "ais"
    AIS_IDIOTYPIC = "ais_idiotypic"
    KNN = "knn"


@dataclass(frozen=True)
class EvaluationReport:
    method: str
    users: int
    predictions: int
    coverage: float
    mae: Optional[float]

    def to_dict(self) -> Dict:
        return asdict(self)


def knn_neighbourhood(
    antigen: UserProfile,
    candidates: Sequence[UserProfile],
    k: int,
    pearson_cfg: PearsonConfig = PearsonConfig(),
) -> NetworkState:
    """The k candidates most correlated with the antigen (ties by user id), at concentration 1."""
    if k < 1:
        raise ParameterError(f"k must be >= 1, got {k}")
    scored = [
        (pearson(c, antigen, pearson_cfg), c)
        for c in candidates
        if c.user_id != antigen.user_id
    ]
    scored.sort(key=lambda pair: (-pair[0], pair[1].user_id))
    chosen = [c for _, c in scored[:k]]
    return build_state(antigen, chosen, [1.0] * len(chosen), pearson_cfg)


def holdout_split(
    profile: UserProfile, fraction: float, rng: np.random.Generator
) -> Tuple[UserProfile, Dict[str, int]]:
    """
    Hide max(1, round(fraction * votes)) of a user's votes, keeping at least one visible.

    Returns:
        (visible profile, hidden item -> score)
    """
    if not 0.0 < fraction < 1.0:
        raise ParameterError(f"holdout fraction must lie in (0, 1), got {fraction}")
    items = sorted(profile.votes)
    if len(items) < 2:
        raise InputError(f"User {profile.user_id} needs at least 2 votes for a hold-out split")
    count = min(len(items) - 1, max(1, int(round(fraction * len(items)))))
    hidden_items = sorted(rng.choice(items, size=count, replace=False).tolist())
    hidden = {item: profile.votes[item] for item in hidden_items}
    return profile.without(hidden_items), hidden


def _neighbourhood(
    method: EvaluationMethod,
    antigen: UserProfile,
    candidates: List[UserProfile],
    dynamics: DynamicsConfig,
    pearson_cfg: PearsonConfig,
    k: int,
) -> NetworkState:
    if method is EvaluationMethod.KNN:
        return knn_neighbourhood(antigen, candidates, k, pearson_cfg)
    cfg = dynamics.model_copy(
        update={"idiotypic_enabled": method is EvaluationMethod.AIS_IDIOTYPIC}
    )
    return run_recommender(antigen, candidates, cfg, pearson_cfg)


def evaluate_recommender(
    table: RatingsTable,
    method: EvaluationMethod,
    dynamics: DynamicsConfig = DynamicsConfig(),
    pearson_cfg: PearsonConfig = PearsonConfig(),
    n_users: int = 20,
    holdout_fraction: float = 0.2,
    seed: int = 0,
    k: Optional[int] = None,
) -> EvaluationReport:
    """
    Mean absolute error and coverage of one neighbourhood method.

    Users, hidden votes and candidate order are drawn from ``seed`` before any
    method-specific work, so every method sees the same hold-out. Hidden
    items no neighbour voted on count against coverage. ``k`` defaults to the
    pool size.
    """
    method = EvaluationMethod(method)
    if n_users < 1:
        raise ParameterError(f"n_users must be >= 1, got {n_users}")
    k = k or dynamics.pool_size
    profiles = table.profiles
    eligible = [u for u, p in profiles.items() if len(p.votes) >= 2]
    if not eligible:
        raise InputError("No user has enough votes for evaluation")

    rng = np.random.default_rng(seed)
    picks = sorted(rng.choice(len(eligible), size=min(n_users, len(eligible)), replace=False))

    actual: List[float] = []
    predicted: List[float] = []
    hidden_total = 0
    for index in picks:
        user_id = eligible[index]
        visible, hidden = holdout_split(profiles[user_id], holdout_fraction, rng)
        others = [p for u, p in profiles.items() if u != user_id]
        candidates = [others[i] for i in rng.permutation(len(others))]
        hidden_total += len(hidden)
        if not candidates:
            continue
        state = _neighbourhood(method, visible, candidates, dynamics, pearson_cfg, k)
        for item_id, score in hidden.items():
            try:
                predicted.append(predict(state, item_id))
            except NoDataError:
                continue
            actual.append(score)

    mae = float(mean_absolute_error(actual, predicted)) if predicted else None
    report = EvaluationReport(
        method=method.value,
        users=len(picks),
        predictions=len(predicted),
        coverage=len(predicted) / hidden_total if hidden_total else 0.0,
        mae=mae,
    )
    logger.info("Evaluation %s: %s", method.value, report)
    return report

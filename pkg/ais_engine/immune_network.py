"""
Immune-network recommender.

The target user is the antigen and candidate neighbours are antibodies whose
concentrations grow when they correlate with the antigen and shrink by decay,
death and (optionally) idiotypic suppression by similar antibodies. The
stabilized pool is the neighbourhood used for weighted-average prediction.
"""
import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ais_engine.affinity import pearson
from ais_engine.config import DynamicsConfig, PearsonConfig
from ais_engine.encoding import MAX_SCORE, MIN_SCORE, UserProfile
from ais_engine.errors import InputError, NoDataError, ParameterError

logger = logging.getLogger(__name__)


class StopReason(str, Enum):
    STABILIZED = "stabilized"
    NO_NEIGHBORHOOD = "no_neighborhood"
    ITERATION_CAP = "iteration_cap"


def _frozen(values) -> np.ndarray:
    array = np.array(values, dtype=float)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class NetworkState:
    """
    Live antibody pool around one antigen.

    ``affinity_to_antigen[i]`` is antibody i's signed correlation with the
    antigen; ``affinity_matrix`` holds antibody-antibody correlations with a
    unit diagonal. ``admitted`` counts candidates taken from the input order.
    """

    antigen: UserProfile
    profiles: Tuple[UserProfile, ...] = ()
    concentrations: np.ndarray = field(default_factory=lambda: _frozen([]))
    affinity_to_antigen: np.ndarray = field(default_factory=lambda: _frozen([]))
    affinity_matrix: np.ndarray = field(default_factory=lambda: _frozen(np.zeros((0, 0))))
    iteration: int = 0
    stable_run: int = 0
    admitted: int = 0
    stop_reason: Optional[StopReason] = None

    def __len__(self) -> int:
        return len(self.profiles)

    @property
    def user_ids(self) -> List[str]:
        return [p.user_id for p in self.profiles]


def build_state(
    antigen: UserProfile,
    profiles: Sequence[UserProfile],
    concentrations: Sequence[float],
    pearson_cfg: PearsonConfig = PearsonConfig(),
) -> NetworkState:
    """Network state for the given antibodies with freshly computed affinity caches."""
    if len(profiles) != len(concentrations):
        raise InputError("profiles and concentrations differ in length")
    for profile in profiles:
        if profile.user_id == antigen.user_id:
            raise InputError(f"Antigen user {antigen.user_id} cannot be its own antibody")
    n = len(profiles)
    matrix = np.eye(n)
    for i in range(n):
        for j in range(i + 1, n):
            matrix[i, j] = matrix[j, i] = pearson(profiles[i], profiles[j], pearson_cfg)
    return NetworkState(
        antigen=antigen,
        profiles=tuple(profiles),
        concentrations=_frozen(concentrations),
        affinity_to_antigen=_frozen([pearson(p, antigen, pearson_cfg) for p in profiles]),
        affinity_matrix=_frozen(matrix),
    )


def admit(
    state: NetworkState,
    profile: UserProfile,
    concentration: float,
    pearson_cfg: PearsonConfig,
) -> NetworkState:
    """Add one antibody, extending the affinity caches. Resets the stable run."""
    if profile.user_id == state.antigen.user_id:
        raise InputError(f"Antigen user {profile.user_id} cannot be its own antibody")
    row = [pearson(profile, other, pearson_cfg) for other in state.profiles]
    n = len(state)
    matrix = np.eye(n + 1)
    matrix[:n, :n] = state.affinity_matrix
    matrix[n, :n] = matrix[:n, n] = row
    return replace(
        state,
        profiles=state.profiles + (profile,),
        concentrations=_frozen(np.append(state.concentrations, concentration)),
        affinity_to_antigen=_frozen(
            np.append(state.affinity_to_antigen, pearson(profile, state.antigen, pearson_cfg))
        ),
        affinity_matrix=_frozen(matrix),
        stable_run=0,
        admitted=state.admitted + 1,
    )


def decay(state: NetworkState, amount: float) -> NetworkState:
    """Reduce every concentration by a fixed amount (not below zero)."""
    return replace(state, concentrations=_frozen(np.maximum(state.concentrations - amount, 0.0)))


def _settle(state: NetworkState, proposed: np.ndarray, cfg: DynamicsConfig) -> NetworkState:
    x = np.clip(proposed, 0.0, cfg.saturation_cap)
    keep = x >= cfg.removal_floor
    removed = int(np.count_nonzero(~keep))
    if removed:
        index = np.flatnonzero(keep)
        for i in np.flatnonzero(~keep):
            logger.debug("Antibody %s dropped out at %.4f", state.profiles[i].user_id, x[i])
        state = replace(
            state,
            profiles=tuple(state.profiles[i] for i in index),
            affinity_to_antigen=_frozen(state.affinity_to_antigen[index]),
            affinity_matrix=_frozen(state.affinity_matrix[np.ix_(index, index)]),
        )
        x = x[index]
    return replace(
        state,
        concentrations=_frozen(x),
        iteration=state.iteration + 1,
        stable_run=0 if removed else state.stable_run + 1,
    )


def _stimulus(state: NetworkState, cfg: DynamicsConfig) -> np.ndarray:
    m = state.affinity_to_antigen
    return np.abs(m) if cfg.stimulate_on_magnitude else m


def step_plain(state: NetworkState, cfg: DynamicsConfig) -> NetworkState:
    """
    One Euler step of stimulation minus death:

        x_i += dt * (k2 * m_i * x_i * y - k3 * x_i)

    k2 is the stimulation constant in this form. The result is clipped to
    [0, saturation_cap] and antibodies below the removal floor leave.
    """
    if cfg.idiotypic_enabled:
        raise ParameterError("step_plain requires idiotypic_enabled = false")
    x = state.concentrations
    m = _stimulus(state, cfg)
    y = cfg.antigen_concentration
    dx = cfg.k2 * m * x * y - cfg.k3 * x
    return _settle(state, x + cfg.dt * dx, cfg)


def step_idiotypic(state: NetworkState, cfg: DynamicsConfig) -> NetworkState:
    """
    One Euler step with idiotypic suppression:

        x_i += dt * (k1 * m_i * x_i * y - (k2 / n) * x_i * max(0, sum_j m_ij x_j) - k3 * x_i)

    The sum includes j = i with m_ii = 1. With k2 = 0 this is step_plain
    with k1 as the stimulation constant.
    """
    if not cfg.idiotypic_enabled:
        raise ParameterError("step_idiotypic requires idiotypic_enabled = true")
    n = len(state)
    if n == 0:
        return _settle(state, state.concentrations, cfg)
    x = state.concentrations
    m = _stimulus(state, cfg)
    y = cfg.antigen_concentration
    interaction = np.maximum(state.affinity_matrix @ x, 0.0)
    dx = cfg.k1 * m * x * y - (cfg.k2 / n) * x * interaction - cfg.k3 * x
    return _settle(state, x + cfg.dt * dx, cfg)


def step(state: NetworkState, cfg: DynamicsConfig) -> NetworkState:
    return step_idiotypic(state, cfg) if cfg.idiotypic_enabled else step_plain(state, cfg)


def run_recommender(
    antigen: UserProfile,
    candidates: Sequence[UserProfile],
    cfg: DynamicsConfig,
    pearson_cfg: PearsonConfig = PearsonConfig(),
) -> NetworkState:
    """
    Grow and stabilise the antibody pool for one target user.

    Candidates are admitted in order at the initial concentration until the
    pool is full. The pool then iterates (fixed decay, then one dynamics
    step) and each drop-out frees a slot for the next candidate. The run
    stops once the pool size has not changed for ``stabilization_window``
    iterations, when the pool is empty with no candidates left, or at the
    iteration cap.

    Raises:
        InputError: no candidates, or a candidate is the antigen user.
    """
    if not candidates:
        raise InputError("No candidate neighbours supplied")
    for candidate in candidates:
        if candidate.user_id == antigen.user_id:
            raise InputError(f"Candidates must exclude the antigen user {antigen.user_id}")

    state = NetworkState(antigen=antigen)
    while True:
        if len(state) < cfg.pool_size and state.admitted < len(candidates):
            state = admit(state, candidates[state.admitted], cfg.initial_concentration, pearson_cfg)
            continue
        if len(state) == 0:
            reason = StopReason.NO_NEIGHBORHOOD
            break
        if state.stable_run >= cfg.stabilization_window:
            reason = StopReason.STABILIZED
            break
        if state.iteration >= cfg.max_iterations:
            reason = StopReason.ITERATION_CAP
            logger.warning("Recommender hit the iteration cap of %d", cfg.max_iterations)
            break
        state = step(decay(state, cfg.decay_amount), cfg)

    logger.info(
        "Recommender for %s stopped (%s) after %d iterations with %d antibodies, %d of %d candidates admitted",
        antigen.user_id, reason.value, state.iteration, len(state), state.admitted, len(candidates),
    )
    return replace(state, stop_reason=reason)


@dataclass(frozen=True)
class Neighbor:
    user_id: str
    concentration: float
    correlation: float


@dataclass(frozen=True)
class Recommendation:
    item_id: str
    predicted_score: float
    supporting_neighbors: Tuple[Neighbor, ...]


def _voters(state: NetworkState, item_id: str) -> List[int]:
    return [i for i, p in enumerate(state.profiles) if item_id in p.votes]


def predict(state: NetworkState, item_id: str) -> float:
    """
    Concentration-weighted prediction of the antigen's score for one item.

    Each voting antibody v contributes weight w_v = x_v * r_v (signed) to
    mean(antigen) + sum(w_v * (v_item - mean(v))) / sum(|w_v|), clamped to [0, 5].

    Raises:
        NoDataError: no antibody voted on the item.
    """
    voters = _voters(state, item_id)
    if not voters:
        raise NoDataError(f"No antibody voted on item {item_id}")
    weights = [state.concentrations[i] * state.affinity_to_antigen[i] for i in voters]
    total = math.fsum(abs(w) for w in weights)
    base = state.antigen.mean
    if total == 0.0:
        return float(min(MAX_SCORE, max(MIN_SCORE, base)))
    spread = math.fsum(
        w * (state.profiles[i].votes[item_id] - state.profiles[i].mean)
        for w, i in zip(weights, voters)
    )
    return float(min(MAX_SCORE, max(MIN_SCORE, base + spread / total)))


def recommend(state: NetworkState, top_n: int) -> List[Recommendation]:
    """Top-n unvoted items by predicted score, ties by ascending item id."""
    if top_n < 1:
        raise ParameterError(f"top_n must be >= 1, got {top_n}")
    items = set()
    for profile in state.profiles:
        items.update(profile.votes)
    items -= set(state.antigen.votes)

    ranked = []
    for item_id in items:
        neighbors = tuple(
            Neighbor(
                user_id=state.profiles[i].user_id,
                concentration=float(state.concentrations[i]),
                correlation=float(state.affinity_to_antigen[i]),
            )
            for i in _voters(state, item_id)
        )
        ranked.append(Recommendation(item_id, predict(state, item_id), neighbors))
    ranked.sort(key=lambda r: (-r.predicted_score, r.item_id))
    return ranked[:top_n]


def mean_pairwise_affinity(state: NetworkState) -> float:
    """Mean |m_ij| over distinct antibody pairs; 0 for fewer than two antibodies."""
    n = len(state)
    if n < 2:
        return 0.0
    upper = np.triu_indices(n, k=1)
    return float(np.mean(np.abs(state.affinity_matrix[upper])))


def state_to_dict(state: NetworkState) -> Dict[str, Any]:
    return {
        "antigen_id": state.antigen.user_id,
        "antibodies": [
            {
                "user_id": p.user_id,
                "concentration": float(x),
                "correlation": float(r),
            }
            for p, x, r in zip(state.profiles, state.concentrations, state.affinity_to_antigen)
        ],
        "iterations": state.iteration,
        "stop_reason": state.stop_reason.value if state.stop_reason else None,
    }

from dataclasses import dataclass, replace

import numpy as np

from .utils import STREAM_ARRIVAL, stream_rng


@dataclass(frozen=True)
class QueueState:
    """
    Backlogs Q_i(t) of the traditional UEs (bits), their mean arrivals lambda_i (bits/slot), and
    the realized rates R_k(t-1) of every UE from the previous slot (bits/slot).
    """

    backlog: np.ndarray
    mean_arrival: np.ndarray
    prev_rates: np.ndarray
    slot: int = 0

    def __post_init__(self):
        if np.any(self.backlog < 0):
            raise ValueError("Queue backlogs must be non-negative")
        if np.any(self.mean_arrival < 0):
            raise ValueError("Mean arrivals must be non-negative")
        if np.any(self.prev_rates < 0):
            raise ValueError("Previous-slot rates must be non-negative")
        if len(self.backlog) != len(self.mean_arrival) or len(self.prev_rates) < len(self.backlog):
            raise ValueError("Inconsistent queue state dimensions")

    @classmethod
    def empty(cls, mean_arrival, num_ues: int) -> "QueueState":
        """Zero backlogs and zero previous rates at slot 0."""
        lam = np.asarray(mean_arrival, dtype=float)
        return cls(backlog=np.zeros(len(lam)), mean_arrival=lam, prev_rates=np.zeros(num_ues))


def draw_arrivals(state: QueueState, seed: int) -> np.ndarray:
    """Poisson arrivals A_i(t) with mean lambda_i bits; deterministic per (seed, slot)."""
    rng = stream_rng(seed, STREAM_ARRIVAL, state.slot)
    return rng.poisson(state.mean_arrival).astype(float)


def advance_queue(state: QueueState, served, arrivals) -> QueueState:
    """
    Q_i(t+1) = max(Q_i(t) - R_i(t), 0) + A_i(t).  `served` holds the slot's realized rates of all
    UEs (traditional first); they become `prev_rates` for the next slot.
    """
    served = np.asarray(served, dtype=float)
    arrivals = np.asarray(arrivals, dtype=float)
    if np.any(served < 0) or np.any(arrivals < 0):
        raise ValueError("Served bits and arrivals must be non-negative")
    if len(served) != len(state.prev_rates) or len(arrivals) != len(state.backlog):
        raise ValueError("Served/arrival vectors do not match the queue state")
    num_tue = len(state.backlog)
    backlog = np.maximum(state.backlog - served[:num_tue], 0.0) + arrivals
    return replace(state, backlog=backlog, prev_rates=served.copy(), slot=state.slot + 1)


def lyapunov(state: QueueState) -> float:
    """L(Q) = 1/2 sum_i Q_i^2."""
    return 0.5 * float(np.sum(state.backlog**2))


def drift_plus_penalty(
    state_before: QueueState, state_after: QueueState, power: float, V: float
) -> float:
    """Realized one-slot drift L(after) - L(before) plus V times the slot's power."""
    if V < 0:
        raise ValueError(f"Invalid tradeoff weight V={V}: must be non-negative")
    return lyapunov(state_after) - lyapunov(state_before) + V * power


def mean_rate_stability_metric(history, T: int) -> np.ndarray:
    """
    E{|Q_i(T)|} / T per traditional UE.  `history` holds backlogs indexed by slot, shaped
    (slots, K0) for one run or (runs, slots, K0) for several; it must cover slot T.
    """
    if T < 1:
        raise ValueError(f"Invalid horizon T={T}: must be at least 1")
    h = np.asarray(history, dtype=float)
    if h.ndim == 2:
        h = h[np.newaxis]
    if h.shape[1] <= T:
        raise ValueError(f"History covers {h.shape[1]} slots, slot {T} is needed")
    return np.mean(np.abs(h[:, T, :]), axis=0) / T

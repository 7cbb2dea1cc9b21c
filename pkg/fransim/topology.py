"""
Network layout and per-slot channel realizations.

Serving nodes are numbered m = 0 (C-RAN: every RRH, cooperating through the BBU pool), m = 1..M0
(F-APs), and m = M0+1..M0+K1 (F-UE relays).  UEs are numbered k = 0..K0-1 (traditional UEs) then
K0..K0+K1-1 (F-UEs), so F-UE k relays as node M0 + 1 + (k - K0).
"""

from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, List, Mapping, Optional, Tuple

import numpy as np

from . import config_base
from .errors import NumericFailure
from .utils import STREAM_CHANNEL, STREAM_TOPOLOGY, db_to_linear, dbm_to_watts, stream_rng


@dataclass(frozen=True)
class TopologyConfig:
    area_side: float = config_base.AREA_SIDE
    num_rrh: int = config_base.NUM_RRH
    num_fap: int = config_base.NUM_FAP
    fap_antennas: int = config_base.FAP_ANTENNAS
    num_tue: int = config_base.NUM_TUE
    num_fue: int = config_base.NUM_FUE
    num_subchannels: int = config_base.NUM_SUBCHANNELS
    neighbor_radius: float = config_base.NEIGHBOR_RADIUS

    def __post_init__(self):
        if not self.area_side > 0:
            raise ValueError(f"Invalid area side {self.area_side}: must be positive")
        for name in ("num_rrh", "num_fap", "fap_antennas", "num_tue", "num_subchannels"):
            if getattr(self, name) < 1:
                raise ValueError(f"Invalid {name} {getattr(self, name)}: must be at least 1")
        if self.num_fue < 0:
            raise ValueError(f"Invalid num_fue {self.num_fue}: must not be negative")
        if not self.fap_antennas < self.num_rrh:
            raise ValueError(
                f"F-AP antennas ({self.fap_antennas}) must be fewer than RRHs ({self.num_rrh})"
            )
        if self.neighbor_radius < 0:
            raise ValueError(f"Invalid neighbor radius {self.neighbor_radius}")


@dataclass(frozen=True)
class ChannelLaw:
    shadow_std_db: float = config_base.SHADOW_STD_DB
    fading_variance: float = config_base.FADING_VARIANCE
    antenna_gain_db: float = config_base.ANTENNA_GAIN_DB
    noise_density_dbm_hz: float = config_base.NOISE_DENSITY_DBM_HZ
    min_distance_m: float = config_base.MIN_DISTANCE_M

    def __post_init__(self):
        if self.shadow_std_db < 0:
            raise ValueError(f"Invalid shadowing deviation {self.shadow_std_db} dB")
        if not 0 <= self.fading_variance <= 1:
            raise ValueError(f"Invalid fading variance {self.fading_variance}: must be in [0, 1]")
        if not self.min_distance_m > 0:
            raise ValueError(f"Invalid minimum distance {self.min_distance_m} m")

    def noise_power(self, bandwidth: float) -> float:
        """Noise power in watts over `bandwidth` Hz (density times bandwidth)."""
        return float(dbm_to_watts(self.noise_density_dbm_hz)) * bandwidth


@dataclass(frozen=True)
class NetworkTopology:
    area_side: float
    rrh_positions: np.ndarray
    fap_positions: np.ndarray
    fap_antennas: int
    tue_positions: np.ndarray
    fue_positions: np.ndarray
    neighbor_radius: float
    num_subchannels: int

    @property
    def num_rrh(self) -> int:
        return len(self.rrh_positions)

    @property
    def num_fap(self) -> int:
        return len(self.fap_positions)

    @property
    def num_tue(self) -> int:
        return len(self.tue_positions)

    @property
    def num_fue(self) -> int:
        return len(self.fue_positions)

    @property
    def num_ues(self) -> int:
        return self.num_tue + self.num_fue

    @property
    def num_nodes(self) -> int:
        return 1 + self.num_fap + self.num_fue

    @cached_property
    def ue_positions(self) -> np.ndarray:
        return np.vstack([self.tue_positions, self.fue_positions])

    def is_fue(self, k: int) -> bool:
        return k >= self.num_tue

    def relay_node(self, k: int) -> Optional[int]:
        """The node index under which F-UE `k` relays, or None for a traditional UE."""
        return 1 + self.num_fap + (k - self.num_tue) if self.is_fue(k) else None

    def node_dim(self, m: int) -> int:
        if m == 0:
            return self.num_rrh
        if m <= self.num_fap:
            return self.fap_antennas
        return 1

    def distances(self, k: int, m: int) -> np.ndarray:
        """Distances in metres from UE `k` to every receive point of node `m`."""
        ue = self.ue_positions[k]
        if m == 0:
            points = self.rrh_positions
        elif m <= self.num_fap:
            points = self.fap_positions[m - 1 : m]
        else:
            points = self.fue_positions[m - 1 - self.num_fap : m - self.num_fap]
        return np.linalg.norm(points - ue, axis=1)

    def node_distance(self, k: int, m: int) -> float:
        """Distance to node `m`; for C-RAN this is the distance to the nearest RRH."""
        return float(self.distances(k, m).min())

    def neighbors(self, k: int) -> List[int]:
        """
        Serving nodes in UE `k`'s distributed scope: C-RAN always, plus every F-AP and every other
        F-UE within the neighbor radius.
        """
        nodes = [0]
        for m in range(1, self.num_nodes):
            if m == self.relay_node(k):
                continue
            if self.node_distance(k, m) <= self.neighbor_radius:
                nodes.append(m)
        return nodes


def generate_topology(config: TopologyConfig, seed: int) -> NetworkTopology:
    """Places every node uniformly at random in the square; deterministic for a fixed seed."""
    rng = stream_rng(seed, STREAM_TOPOLOGY)
    side = config.area_side

    def place(count):
        return rng.uniform(0.0, side, size=(count, 2))

    return NetworkTopology(
        area_side=side,
        rrh_positions=place(config.num_rrh),
        fap_positions=place(config.num_fap),
        fap_antennas=config.fap_antennas,
        tue_positions=place(config.num_tue),
        fue_positions=place(config.num_fue),
        neighbor_radius=config.neighbor_radius,
        num_subchannels=config.num_subchannels,
    )


def pathloss_db(distance_km):
    """Pathloss 127 + 25 log10(d) in dB for distance `d` in km."""
    d = np.asarray(distance_km, dtype=float)
    if np.any(d <= 0):
        raise ValueError(f"Invalid distance {distance_km} km: must be positive")
    loss = 127.0 + 25.0 * np.log10(d)
    return float(loss) if loss.ndim == 0 else loss


@dataclass(frozen=True)
class ChannelRealization:
    """
    h[m] has shape (K, N, dim(m)): the channel vector from every UE to node m on every subchannel.
    v maps (k, m, n) to the MMSE detection vector, populated by `with_receivers`.
    """

    h: Tuple[np.ndarray, ...]
    noise_power: float
    v: Mapping[Tuple[int, int, int], np.ndarray] = field(default_factory=dict)

    @property
    def num_ues(self) -> int:
        return self.h[0].shape[0]

    @property
    def num_subchannels(self) -> int:
        return self.h[0].shape[1]

    @property
    def num_nodes(self) -> int:
        return len(self.h)

    def link(self, k: int, m: int, n: int) -> np.ndarray:
        return self.h[m][k, n]

    @cached_property
    def gains(self) -> np.ndarray:
        """||h_{k,m,n}||^2 with shape (K, nodes, N)."""
        return np.stack([np.sum(np.abs(hm) ** 2, axis=2) for hm in self.h], axis=1)

    def with_receivers(self, assignment, powers) -> "ChannelRealization":
        """A copy carrying the MMSE vector of every assigned link under `powers`."""
        v = {}
        for k, link in enumerate(assignment.links):
            if link is not None:
                m, n = link
                v[(k, m, n)] = mmse_receiver(self, assignment, powers, k, m, n)
        return ChannelRealization(h=self.h, noise_power=self.noise_power, v=v)


def _fading(rng, shape, variance):
    scattered = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)
    return np.sqrt(1.0 - variance) + np.sqrt(variance) * scattered


def draw_channels(
    topology: NetworkTopology,
    slot: int,
    seed: int,
    law: ChannelLaw = ChannelLaw(),
    bandwidth: float = config_base.SUBCHANNEL_BANDWIDTH,
) -> ChannelRealization:
    """
    Draws h = sqrt(antenna gain x pathloss x shadowing) x fast fading for every (UE, node,
    subchannel).  Shadowing is drawn once per (UE, receive antenna site) per slot; fast fading is
    independent per subchannel and antenna.  Noise is integrated over one subchannel of `bandwidth`
    Hz.  Deterministic per (seed, slot).
    """
    rng = stream_rng(seed, STREAM_CHANNEL, slot)
    K, N = topology.num_ues, topology.num_subchannels
    h = []
    for m in range(topology.num_nodes):
        dim = topology.node_dim(m)
        hm = np.zeros((K, N, dim), dtype=complex)
        for k in range(K):
            if m == topology.relay_node(k):
                # An F-UE does not receive its own transmissions
                continue
            d = np.maximum(topology.distances(k, m), law.min_distance_m) / 1000.0
            shadow = rng.normal(0.0, law.shadow_std_db, size=d.shape) if law.shadow_std_db else 0.0
            amplitude = np.sqrt(db_to_linear(law.antenna_gain_db - pathloss_db(d) + shadow))
            if m > 0:
                # co-located antennas: one distance, one shadowing draw
                amplitude = np.full(dim, amplitude[0])
            hm[k] = amplitude[np.newaxis, :] * _fading(rng, (N, dim), law.fading_variance)
        h.append(hm)
    return ChannelRealization(h=tuple(h), noise_power=law.noise_power(bandwidth))


def receive_covariance(channels: ChannelRealization, powers, m: int, n: int) -> np.ndarray:
    """sum_k' P_{k',n} h_{k',m,n} h_{k',m,n}^H + sigma^2 I at node m on subchannel n."""
    hmn = channels.h[m][:, n, :]
    p = powers.p[:, n]
    cov = (hmn.T * p) @ hmn.conj()
    cov += channels.noise_power * np.eye(hmn.shape[1])
    return cov


def mmse_receiver(channels: ChannelRealization, assignment, powers, k: int, m: int, n: int):
    """
    The MMSE detection vector (sum_k' P_{k',n} h h^H + sigma^2 I)^-1 h_{k,m,n}, where the sum runs
    over every UE transmitting on subchannel n.  Raises ValueError if UE k is not assigned (m, n).
    """
    if assignment.links[k] != (m, n):
        raise ValueError(f"UE {k} is not assigned to node {m} on subchannel {n}")
    try:
        return np.linalg.solve(receive_covariance(channels, powers, m, n), channels.link(k, m, n))
    except np.linalg.LinAlgError as e:
        raise NumericFailure(f"Singular receive covariance at node {m}, subchannel {n}: {e}")


def receiver_sinr(channels: ChannelRealization, powers, v: np.ndarray, k: int, m: int, n: int):
    """SINR of UE k at node m on subchannel n through receiver `v`."""
    proj = np.abs(channels.h[m][:, n, :] @ v.conj()) ** 2
    p = powers.p[:, n]
    signal = p[k] * proj[k]
    interference = float(p @ proj) - signal
    return signal / (interference + channels.noise_power * float(np.vdot(v, v).real))

"""Physically parameterized multi-sub-path uplink channel synthesis.

A channel between one single-antenna user and a dual-polarized uniform
planar array is a sum of L sub-path responses.  Per sub-path the response
separates across array columns, array rows, subcarriers and polarizations,
so the full channel tensor of shape ``(n_col, n_row, K, n_pol)`` is a
rank-L CP model whose first three factor matrices are Vandermonde:

* column steering, generator ``exp(2j pi f_c d_col sin(aoa) / c)``
* row steering, generator ``exp(2j pi f_c d_row cos(zoa) / c)``
* delay response, generator ``exp(-2j pi tau)`` per subcarrier step

Delays are stored normalized: ``tau = tau_seconds * delta_f`` is the phase
advance per subcarrier in cycles, so one full cycle aliases.  The mode
order is fixed repo-wide as (column, row, subcarrier, polarization).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from importlib import resources

import numpy as np

from .tensor_core import FactorSet, cp_reconstruct

SPEED_OF_LIGHT = 3.0e8


@dataclass
class ArrayConfig:
    """Geometry and numerology of the receive array and OFDM grid."""

    n_col: int = 16
    n_row: int = 4
    n_pol: int = 2
    d_col: float = 0.03          # meters
    d_row: float = 0.09          # meters
    f_c: float = 4.9e9           # Hz
    c: float = SPEED_OF_LIGHT    # m/s
    delta_f: float = 30e3        # Hz
    n_subcarriers: int = 384

    def __post_init__(self):
        if min(self.n_col, self.n_row, self.n_pol, self.n_subcarriers) < 1:
            raise ValueError("antenna/polarization/subcarrier counts must be >= 1")
        if min(self.d_col, self.d_row, self.f_c, self.c, self.delta_f) <= 0:
            raise ValueError("spacings and frequencies must be positive")

    @property
    def dims(self) -> tuple:
        return (self.n_col, self.n_row, self.n_subcarriers, self.n_pol)


@dataclass
class SubPath:
    """One propagation ray: per-polarization gains, delay and arrival angles.

    ``delay`` is normalized to [0, 1) cycles per subcarrier step; angles
    are in degrees.
    """

    gains: np.ndarray
    delay: float
    aoa_deg: float
    zoa_deg: float

    def __post_init__(self):
        self.gains = np.asarray(self.gains, dtype=complex).ravel()
        if not (0.0 <= self.delay < 1.0):
            raise ValueError(f"normalized delay must lie in [0, 1), got {self.delay}")
        if not (np.isfinite(self.aoa_deg) and np.isfinite(self.zoa_deg)):
            raise ValueError("angles must be finite")


@dataclass
class UserChannel:
    """The L sub-paths of one user's uplink channel."""

    paths: list
    owner: int = 0

    def __post_init__(self):
        if len(self.paths) < 1:
            raise ValueError("a channel needs at least one sub-path")
        npol = {len(p.gains) for p in self.paths}
        if len(npol) != 1:
            raise ValueError("sub-paths disagree on polarization count")

    @property
    def n_paths(self) -> int:
        return len(self.paths)


def delay_to_seconds(delay: float, cfg: ArrayConfig) -> float:
    """Convert a normalized delay (cycles per subcarrier) to seconds."""
    return delay / cfg.delta_f


def seconds_to_delay(tau_seconds: float, cfg: ArrayConfig) -> float:
    """Convert a physical delay in seconds to normalized cycles per subcarrier."""
    return tau_seconds * cfg.delta_f


def steering_col(aoa_deg, cfg: ArrayConfig) -> np.ndarray:
    """Column steering factor, shape ``(n_col, L)``.

    Entry ``(n, l)`` is ``exp(2j pi f_c (n-1) d_col sin(aoa_l) / c)``;
    every column is Vandermonde with a unit-modulus generator and first
    entry 1.
    """
    aoa = np.deg2rad(np.atleast_1d(np.asarray(aoa_deg, dtype=float)))
    gen = np.exp(2j * np.pi * cfg.f_c * cfg.d_col * np.sin(aoa) / cfg.c)
    return gen[None, :] ** np.arange(cfg.n_col)[:, None]


def steering_row(zoa_deg, cfg: ArrayConfig) -> np.ndarray:
    """Row steering factor, shape ``(n_row, L)``; uses ``cos(zoa)`` and ``d_row``."""
    zoa = np.deg2rad(np.atleast_1d(np.asarray(zoa_deg, dtype=float)))
    gen = np.exp(2j * np.pi * cfg.f_c * cfg.d_row * np.cos(zoa) / cfg.c)
    return gen[None, :] ** np.arange(cfg.n_row)[:, None]


def delay_factor(delays, indices) -> np.ndarray:
    """Delay factor on a set of 1-based subcarrier indices, shape ``(|indices|, L)``.

    Entry ``(k', l)`` is ``exp(-2j pi tau_l (indices[k'] - 1))``.  With
    ``indices = 1..K`` this is the full delay matrix D; with a comb it is
    the row selection ``D[comb, :]``.
    """
    delays = np.atleast_1d(np.asarray(delays, dtype=float))
    idx = np.atleast_1d(np.asarray(indices, dtype=int))
    if idx.size and idx.min() < 1:
        raise ValueError("subcarrier indices are 1-based")
    if np.any(np.diff(idx) <= 0):
        raise ValueError("subcarrier indices must be strictly increasing")
    return np.exp(-2j * np.pi * delays[None, :] * (idx[:, None] - 1))


def gain_factor(paths) -> np.ndarray:
    """Polarization gain factor, shape ``(n_pol, L)``: entry ``(p, l)`` is gain of ray l."""
    npol = {len(p.gains) for p in paths}
    if len(npol) != 1:
        raise ValueError("sub-paths disagree on polarization count")
    return np.stack([p.gains for p in paths], axis=1)


def channel_factors(chan: UserChannel, cfg: ArrayConfig) -> FactorSet:
    """The four CP factor matrices of a user channel on the full subcarrier grid."""
    aoa = [p.aoa_deg for p in chan.paths]
    zoa = [p.zoa_deg for p in chan.paths]
    tau = [p.delay for p in chan.paths]
    full_grid = np.arange(1, cfg.n_subcarriers + 1)
    return FactorSet(
        steering_col(aoa, cfg),
        steering_row(zoa, cfg),
        delay_factor(tau, full_grid),
        gain_factor(chan.paths),
    )


def synthesize_channel(chan: UserChannel, cfg: ArrayConfig) -> np.ndarray:
    """Full channel tensor of shape ``(n_col, n_row, K, n_pol)``.

    Equals the CP reconstruction of :func:`channel_factors`, i.e. the
    direct sum over sub-path responses.
    """
    return cp_reconstruct(channel_factors(chan, cfg))


@dataclass
class PathProfile:
    """Cluster-level statistical description used by :func:`generate_paths`.

    ``clusters`` is a list of dicts with keys ``power_db``, ``delay``
    (relative excess delay in [0, 1], scaled by ``delay_spread``),
    ``aoa_deg`` and ``zoa_deg``.  Rays inside a cluster share the cluster
    delay and fan out in angle around the cluster means.
    """

    clusters: list = field(default_factory=list)
    rays_per_cluster: int = 20
    angle_spread_deg: float = 4.0
    delay_spread: float = 0.0075

    def __post_init__(self):
        if not self.clusters:
            raise ValueError("profile needs at least one cluster")
        if self.rays_per_cluster < 1:
            raise ValueError("rays_per_cluster must be >= 1")

    @classmethod
    def from_dict(cls, d: dict) -> "PathProfile":
        return cls(
            clusters=list(d["clusters"]),
            rays_per_cluster=int(d.get("rays_per_cluster", 20)),
            angle_spread_deg=float(d.get("angle_spread_deg", 4.0)),
            delay_spread=float(d.get("delay_spread", 0.0075)),
        )

    def to_dict(self) -> dict:
        return {
            "clusters": self.clusters,
            "rays_per_cluster": self.rays_per_cluster,
            "angle_spread_deg": self.angle_spread_deg,
            "delay_spread": self.delay_spread,
        }


def load_profile(path) -> PathProfile:
    """Load a :class:`PathProfile` from a JSON file."""
    with open(path, "r", encoding="utf-8") as fh:
        return PathProfile.from_dict(json.load(fh))


def default_profile() -> PathProfile:
    """The bundled CDL-flavoured default profile (18 clusters, 20 rays each)."""
    text = resources.files("chanest.data").joinpath("cdl_like_default.json").read_text()
    return PathProfile.from_dict(json.loads(text))


def generate_paths(
    profile: PathProfile,
    n_paths: int,
    seed,
    delay_window: float = 1.0,
    n_pol: int = 2,
) -> UserChannel:
    """Draw a deterministic L-path channel from a cluster profile.

    Rays are assigned to clusters round-robin.  Each ray inherits the
    cluster delay and gets its own angle offsets: a centered intra-cluster
    grid (scaled by ``angle_spread_deg``; half that for zenith) plus a
    small random jitter, with the zenith grid permuted against the azimuth
    grid so the two angle sequences decorrelate.  Cluster powers are split
    evenly over their rays and normalized so the total gain power over all
    rays and polarizations is exactly 1.  Delays are clipped into
    ``[0, delay_window)``; with comb stride s only ``delay_window <= 1/s``
    keeps delays unambiguous downstream.

    The same seed always produces the same channel.
    """
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    if not (0.0 < delay_window <= 1.0):
        raise ValueError("delay_window must lie in (0, 1]")
    rng = np.random.default_rng(seed)
    n_clusters = len(profile.clusters)
    counts = np.bincount(np.arange(n_paths) % n_clusters, minlength=n_clusters)

    paths = []
    powers = []
    for ci, cluster in enumerate(profile.clusters):
        n_rays = int(counts[ci])
        if n_rays == 0:
            continue
        spread = profile.angle_spread_deg
        grid = (np.arange(n_rays) - (n_rays - 1) / 2) / max(n_rays, 1)
        aoa = cluster["aoa_deg"] + spread * grid + rng.normal(0.0, 0.02 * spread, n_rays)
        zoa = (
            cluster["zoa_deg"]
            + 0.5 * spread * rng.permutation(grid)
            + rng.normal(0.0, 0.01 * spread, n_rays)
        )
        delay = float(cluster["delay"]) * profile.delay_spread
        delay = min(max(delay, 0.0), np.nextafter(delay_window, 0.0))
        p_lin = 10.0 ** (float(cluster["power_db"]) / 10.0) / n_rays
        for ri in range(n_rays):
            phases = rng.uniform(-np.pi, np.pi, n_pol)
            paths.append(SubPath(np.exp(1j * phases), delay, float(aoa[ri]), float(zoa[ri])))
            powers.append(p_lin)

    powers = np.asarray(powers)
    scale = np.sqrt(powers / powers.sum() / n_pol)
    for p, s in zip(paths, scale):
        p.gains = p.gains * s
    return UserChannel(paths)


def perturb_for_interference(
    chan: UserChannel,
    seed,
    phase_scale: float,
    angle_jitter_deg: float = 2.0,
    delay_jitter: float = 0.002,
) -> UserChannel:
    """Copy a channel with random per-path phase biases plus small jitter.

    Per path, both polarization gains are rotated by a common random phase
    uniform on ``[-pi*phase_scale, pi*phase_scale]`` (so gain magnitudes,
    and total power, are preserved exactly).  Angles and delays receive
    small uniform jitter scaled by ``phase_scale``; delays are clamped to
    stay in [0, 1).
    """
    rng = np.random.default_rng(seed)
    new_paths = []
    for p in chan.paths:
        psi = rng.uniform(-np.pi * phase_scale, np.pi * phase_scale)
        d_aoa = rng.uniform(-1.0, 1.0) * angle_jitter_deg * phase_scale
        d_zoa = rng.uniform(-1.0, 1.0) * angle_jitter_deg * phase_scale
        d_tau = rng.uniform(-1.0, 1.0) * delay_jitter * phase_scale
        delay = min(max(p.delay + d_tau, 0.0), np.nextafter(1.0, 0.0))
        new_paths.append(
            SubPath(p.gains * np.exp(1j * psi), delay, p.aoa_deg + d_aoa, p.zoa_deg + d_zoa)
        )
    return replace(chan, paths=new_paths)

"""Uplink pilot transmission and the least-squares/interpolation baseline.

Pilots live on a time-frequency grid of ``T_p`` OFDM symbols by ``K``
subcarriers.  User ``u`` (0-based) owns the comb with offset
``(u mod stride) + 1``, i.e. the 1-based subcarriers
``{offset, offset+stride, ...}``, and transmits unit-modulus QPSK pilot
symbols on the symbols assigned to its time group ``u // stride``
(silent on the rest).  Distinct users therefore occupy disjoint
time-frequency pilot resources, which is what makes the per-user
least-squares estimate interference-free from in-cell users; capacity is
``stride * t_p`` users.

Received grids are stored as one complex array of shape
``(t_p, n_col, n_row, K, n_pol)``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .tensor_core import as_tensor4


@dataclass
class PilotGrid:
    """Per-user comb index sets and pilot symbols.

    ``combs[u]`` holds 1-based subcarrier indices (strictly increasing,
    arithmetic with stride ``stride``); ``symbols[u]`` has shape
    ``(len(combs[u]), t_p)`` and is unit-modulus on the user's active
    symbols and exactly zero elsewhere.
    """

    combs: list
    symbols: list
    stride: int
    t_p: int
    n_subcarriers: int

    @property
    def n_users(self) -> int:
        return len(self.combs)

    def active_symbols(self, u: int) -> np.ndarray:
        """Indices t (0-based) on which user u actually transmits."""
        return np.nonzero(np.abs(self.symbols[u][0, :]) > 0)[0]


@dataclass
class ReceivedGrid:
    """Received pilot-slot data plus the noise/interference bookkeeping."""

    y: np.ndarray                  # (t_p, n_col, n_row, K, n_pol)
    noise_var: float
    interference: dict

    @property
    def t_p(self) -> int:
        return self.y.shape[0]


_QPSK = np.exp(1j * (np.pi / 4 + np.pi / 2 * np.arange(4)))


def make_comb_pilots(n_users: int, n_subcarriers: int, stride: int, t_p: int, seed) -> PilotGrid:
    """Build disjoint time-frequency comb pilots for ``n_users`` users.

    Comb offsets cycle through the stride residues; when there are more
    users than residues, users wrap into additional time groups (group g
    transmits on symbols ``t = g, g + n_groups, ...``), so up to
    ``stride * t_p`` users fit.  Pilot symbols are QPSK values drawn from
    the seeded generator.
    """
    if n_users < 1 or stride < 1 or t_p < 1:
        raise ValueError("n_users, stride and t_p must be >= 1")
    if n_users > stride * t_p:
        raise ValueError(
            f"{n_users} users exceed the {stride * t_p} disjoint combs available "
            f"(stride {stride} x {t_p} pilot symbols)"
        )
    rng = np.random.default_rng(seed)
    n_groups = -(-n_users // stride)   # ceil
    combs, symbols = [], []
    for u in range(n_users):
        offset = u % stride + 1
        comb = np.arange(offset, n_subcarriers + 1, stride)
        if comb.size == 0:
            raise ValueError(f"comb offset {offset} exceeds K={n_subcarriers}")
        group = u // stride
        active = np.arange(group, t_p, n_groups)
        sym = np.zeros((comb.size, t_p), dtype=complex)
        sym[:, active] = _QPSK[rng.integers(0, 4, (comb.size, active.size))]
        combs.append(comb)
        symbols.append(sym)
    return PilotGrid(combs, symbols, stride, t_p, n_subcarriers)


def synthesize_received(
    channels,
    pilots: PilotGrid,
    snr_db,
    interference=(),
    isr_db: float = 0.0,
    seed=0,
) -> ReceivedGrid:
    """Superpose pilot signals, adjacent-cell interference and AWGN.

    ``channels[u]`` is user u's full channel tensor ``(n_col, n_row, K,
    n_pol)``; its comb columns are scaled by the user's pilot symbols.
    ``interference`` is a list of channel tensors carrying independent
    unit-modulus symbols on every subcarrier, scaled so total interference
    power over the grid is ``10**(isr_db/10)`` times the total signal
    power.  Noise is circularly symmetric complex Gaussian with per-entry
    variance ``signal_power / 10**(snr_db/10)``; pass ``None`` or ``inf``
    for a noiseless grid.  For a fixed seed the noise direction is fixed,
    so sweeping ``snr_db`` rescales one common realization.
    """
    if len(channels) == 0:
        raise ValueError("need at least one user channel")
    if len(channels) > pilots.n_users:
        raise ValueError(f"{len(channels)} channels but only {pilots.n_users} pilot users")
    dims = as_tensor4(channels[0]).shape
    rng = np.random.default_rng(seed)

    sig = np.zeros((pilots.t_p,) + dims, dtype=complex)
    for u, h in enumerate(channels):
        h = as_tensor4(h)
        if h.shape != dims:
            raise ValueError(f"channel {u} has shape {h.shape}, expected {dims}")
        comb = pilots.combs[u]
        if comb[-1] > dims[2]:
            raise ValueError("comb index exceeds channel subcarrier count")
        sym = pilots.symbols[u]                          # (m, t_p)
        h_on_comb = h[:, :, comb - 1, :]
        for t in range(pilots.t_p):
            sig[t][:, :, comb - 1, :] += h_on_comb * sym[None, None, :, t, None]
    sig_pow = float(np.mean(np.abs(sig) ** 2))
    ref_pow = sig_pow if sig_pow > 0 else 1.0

    # interference symbols are drawn before the noise so a fixed seed pins both
    intf = np.zeros_like(sig)
    if len(interference):
        for h in interference:
            h = as_tensor4(h)
            sym = np.exp(2j * np.pi * rng.uniform(size=(pilots.t_p, dims[2])))
            intf += h[None, :, :, :, :] * sym[:, None, None, :, None]
        raw = float(np.mean(np.abs(intf) ** 2))
        if raw > 0:
            intf *= np.sqrt(10.0 ** (isr_db / 10.0) * ref_pow / raw)

    if snr_db is None or np.isinf(snr_db):
        noise_var = 0.0
        noise = 0.0
    else:
        noise_var = ref_pow / 10.0 ** (snr_db / 10.0)
        noise = np.sqrt(noise_var / 2.0) * (
            rng.standard_normal(sig.shape) + 1j * rng.standard_normal(sig.shape)
        )

    descriptor = {
        "n_interferers": len(interference),
        "isr_db": isr_db if len(interference) else None,
        "signal_power": sig_pow,
    }
    return ReceivedGrid(sig + intf + noise, noise_var, descriptor)


def ls_comb_estimate(grid: ReceivedGrid, pilots: PilotGrid, u: int) -> np.ndarray:
    """Per-entry least-squares channel estimate on user u's comb.

    For each antenna/polarization element and comb subcarrier the estimate
    is ``sum_t y(t) conj(s(t)) / sum_t |s(t)|^2``, averaging over the
    user's pilot symbols.  Returns a tensor of shape
    ``(n_col, n_row, len(comb), n_pol)``.
    """
    if not (0 <= u < pilots.n_users):
        raise ValueError(f"unknown user {u}")
    comb = pilots.combs[u]
    sym = pilots.symbols[u]                              # (m, t_p)
    energy = np.sum(np.abs(sym) ** 2, axis=1)            # (m,)
    if np.any(energy <= 0):
        raise ValueError(f"user {u} has zero pilot energy on part of its comb")
    yc = grid.y[:, :, :, comb - 1, :]                    # (t_p, n_col, n_row, m, n_pol)
    num = np.einsum("tijkp,kt->ijkp", yc, np.conj(sym), optimize=True)
    return num / energy[None, None, :, None]


def linear_interpolate(h_comb: np.ndarray, comb, n_subcarriers: int) -> np.ndarray:
    """Linearly interpolate a comb estimate onto the full subcarrier grid.

    Real and imaginary parts are interpolated independently along the
    subcarrier mode; subcarriers outside the comb span hold the nearest
    comb value.

    Parameters
    ----------
    h_comb : ndarray, shape (n_col, n_row, len(comb), n_pol)
    comb : 1-based, strictly increasing subcarrier indices
    n_subcarriers : full grid size K
    """
    h_comb = as_tensor4(h_comb)
    comb = np.asarray(comb, dtype=int)
    if np.any(np.diff(comb) <= 0):
        raise ValueError("comb must be strictly increasing")
    if comb.size != h_comb.shape[2]:
        raise ValueError("comb length does not match the subcarrier mode")
    if comb.size < 2:
        raise ValueError("need at least 2 comb points to interpolate")

    k = np.arange(1, n_subcarriers + 1)
    hi = np.clip(np.searchsorted(comb, k, side="left"), 1, comb.size - 1)
    lo = hi - 1
    w = (k - comb[lo]) / (comb[hi] - comb[lo])
    w = np.clip(w, 0.0, 1.0)[None, None, :, None]        # flat hold outside the span
    return (1.0 - w) * h_comb[:, :, lo, :] + w * h_comb[:, :, hi, :]


_MAGIC = b"RXG1"


def dump_received_grid(grid: ReceivedGrid, path) -> None:
    """Write a grid as a little-endian binary dump.

    Format: 4-byte magic ``RXG1``; five int64 fields ``t_p, I1..I4``; then
    for each symbol the tensor entries in the canonical linear layout
    (first mode fastest) as interleaved real/imag float64 pairs.
    """
    t_p = grid.t_p
    dims = grid.y.shape[1:]
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<5q", t_p, *dims))
        for t in range(t_p):
            flat = np.ravel(grid.y[t], order="F")
            inter = np.empty(2 * flat.size, dtype="<f8")
            inter[0::2] = flat.real
            inter[1::2] = flat.imag
            fh.write(inter.tobytes())


def load_received_grid(path) -> np.ndarray:
    """Read back a binary dump written by :func:`dump_received_grid`."""
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise ValueError("not a received-grid dump")
        t_p, *dims = struct.unpack("<5q", fh.read(40))
        n = int(np.prod(dims))
        out = np.empty((t_p,) + tuple(dims), dtype=complex)
        for t in range(t_p):
            inter = np.frombuffer(fh.read(16 * n), dtype="<f8")
            out[t] = np.reshape(inter[0::2] + 1j * inter[1::2], dims, order="F")
    return out

"""One-pass Vandermonde-structured decomposition of fourth-order tensors.

Given a 4-way tensor whose first three factor matrices are Vandermonde
with unit-modulus generators (the comb-domain channel tensor is exactly
this), the decomposition is recovered non-iteratively:

1. spatial smoothing lifts the tensor into a structured matrix whose two
   factors are Khatri-Rao products of windowed Vandermonde blocks
   (:func:`hankelize`);
2. the left singular subspace of that matrix inherits the block-shift
   invariance of the first mode, so an eigendecomposition of the shift
   relation yields the first generator set (:func:`shift_evd_z1`);
3. each eigenvector isolates one rank-1 term, from which the second and
   third generator sets follow by windowed least-squares shift ratios
   (:func:`recover_kr23`, :func:`extract_z2`, :func:`recover_a3_z3`);
4. the unconstrained fourth factor has a closed-form least-squares
   solution (:func:`solve_fourth_factor`).

Uniqueness of this decomposition is checked by :func:`check_exact_uniqueness`
(deterministic rank conditions) or :func:`generic_bound` (the rank capacity
for generic parameters, maximized over admissible smoothing windows).

:func:`estimate_channel` chains the steps into the channel-estimation
pipeline: comb tensor in, full-band channel tensor plus a diagnostic
report out.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor_core import (
    FactorSet,
    as_tensor4,
    cp_reconstruct,
    frobenius_norm,
    khatri_rao,
    mode_n_unfold,
)

PINV_RCOND = 1e-12


class EstimationError(RuntimeError):
    """Raised when a decomposition stage is too ill-conditioned to trust."""


@dataclass
class SmoothingParams:
    """Spatial-smoothing window sizes, one (K, L) pair per Vandermonde mode.

    Bound to tensor dims (I1, I2, I3, ...) via K_i + L_i = I_i + 1; the
    first mode additionally needs K1 >= 2 so the shift has at least one row.
    """

    k1: int
    l1: int
    k2: int
    l2: int
    k3: int
    l3: int

    def __post_init__(self):
        if min(self.k1, self.l1, self.k2, self.l2, self.k3, self.l3) < 1:
            raise ValueError("smoothing parameters must be positive")
        if self.k1 < 2:
            raise ValueError("k1 must be >= 2 (the mode-1 shift needs k1-1 rows)")

    def validate_dims(self, dims) -> None:
        pairs = ((self.k1, self.l1, dims[0]), (self.k2, self.l2, dims[1]),
                 (self.k3, self.l3, dims[2]))
        for i, (k, l, d) in enumerate(pairs, start=1):
            if k + l != d + 1:
                raise ValueError(f"mode {i}: K{i}+L{i} = {k + l} != I{i}+1 = {d + 1}")

    @property
    def window_rows(self) -> int:
        return self.k1 * self.k2 * self.k3

    def capacity(self, i4: int) -> int:
        """Largest rank this smoothing can identify for generic parameters."""
        return min((self.k1 - 1) * self.k2 * self.k3, self.l1 * self.l2 * self.l3 * i4)

    def as_tuple(self) -> tuple:
        return (self.k1, self.l1, self.k2, self.l2, self.k3, self.l3)


@dataclass
class GeneratorEstimate:
    """Recovered unit-modulus generators plus the shift eigenvector matrix."""

    z1: np.ndarray
    eigvec: np.ndarray
    rank: int
    z2: np.ndarray = None
    z3: np.ndarray = None


@dataclass
class EstimationReport:
    """Diagnostics from one :func:`estimate_channel` run."""

    rank: int
    smoothing: SmoothingParams
    singular_values: np.ndarray
    delays: np.ndarray
    z1_phase: np.ndarray
    z2_phase: np.ndarray
    z3_phase: np.ndarray
    residual: float                 # ||X - reconstruction||_F / ||X||_F on the comb tensor
    flags: list = field(default_factory=list)
    aoa_deg: np.ndarray = None
    zoa_deg: np.ndarray = None


@dataclass
class VsdOptions:
    """Tuning knobs for :func:`estimate_channel` (JSON-loadable).

    rank_rule
        "relative-threshold" keeps singular values above ``eps_rel`` times
        the largest; an integer forces that rank.
    rank_cap
        optional hard ceiling on the detected rank (the smoothing capacity
        and matrix dimensions always cap it regardless).
    smoothing
        optional explicit :class:`SmoothingParams` (or its 6-tuple)
        overriding the bound-maximizing default.
    subspace
        "svd" computes the exact singular subspace; "gram" uses an
        eigendecomposition of the Gram matrix, faster but with squared
        conditioning, adequate for noisy data.
    """

    rank_rule: object = "relative-threshold"
    eps_rel: float = 1e-2
    smoothing: object = None
    subspace: str = "svd"
    rank_cap: int = None
    cond_limit: float = 1e12
    pinv_rcond: float = PINV_RCOND

    def __post_init__(self):
        if isinstance(self.smoothing, (tuple, list)):
            self.smoothing = SmoothingParams(*self.smoothing)
        if self.subspace not in ("svd", "gram"):
            raise ValueError(f"unknown subspace method {self.subspace!r}")
        if not (isinstance(self.rank_rule, (int, np.integer))
                or self.rank_rule == "relative-threshold"):
            raise ValueError(f"unknown rank rule {self.rank_rule!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "VsdOptions":
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "VsdOptions":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        d = {
            "rank_rule": int(self.rank_rule) if not isinstance(self.rank_rule, str) else self.rank_rule,
            "eps_rel": self.eps_rel,
            "subspace": self.subspace,
            "cond_limit": self.cond_limit,
            "pinv_rcond": self.pinv_rcond,
        }
        if self.smoothing is not None:
            d["smoothing"] = list(self.smoothing.as_tuple())
        if self.rank_cap is not None:
            d["rank_cap"] = int(self.rank_cap)
        return d


def vandermonde(generators, n_rows: int) -> np.ndarray:
    """Stack generator powers 0..n_rows-1 into Vandermonde columns (first entry 1)."""
    z = np.atleast_1d(np.asarray(generators, dtype=complex))
    return z[None, :] ** np.arange(n_rows)[:, None]


def generic_bound(i1: int, i2: int, i3: int, i4: int):
    """Rank capacity for generic parameters, maximized over smoothing choices.

    Enumerates every admissible (K1,L1,K2,L2,K3,L3) with K_i+L_i = I_i+1
    and K1 >= 2, and returns the maximum of
    ``min((K1-1) K2 K3, L1 L2 L3 I4)`` together with one maximizer.  Ties
    prefer the most balanced K1, then K2, then K3 (and smaller K on equal
    balance, for determinism).  Dims with I1 < 2 admit no shift, bound 0.

    Returns
    -------
    (int, SmoothingParams or None)
    """
    if min(i1, i2, i3, i4) < 1:
        raise ValueError("dimensions must be >= 1")
    if i1 < 2:
        return 0, None
    k1 = np.arange(2, i1 + 1)[:, None, None]
    k2 = np.arange(1, i2 + 1)[None, :, None]
    k3 = np.arange(1, i3 + 1)[None, None, :]
    value = np.minimum(
        (k1 - 1) * k2 * k3,
        (i1 + 1 - k1) * (i2 + 1 - k2) * (i3 + 1 - k3) * i4,
    )
    best = int(value.max())
    cand = np.argwhere(value == best)
    ks = cand + np.array([2, 1, 1])                       # back to K values
    balance = np.abs(2 * ks - np.array([i1 + 1, i2 + 1, i3 + 1]))
    order = np.lexsort((ks[:, 2], ks[:, 1], ks[:, 0],
                        balance[:, 2], balance[:, 1], balance[:, 0]))
    b1, b2, b3 = (int(v) for v in ks[order[0]])
    return best, SmoothingParams(b1, i1 + 1 - b1, b2, i2 + 1 - b2, b3, i3 + 1 - b3)


def check_exact_uniqueness(
    factors: FactorSet,
    sp: SmoothingParams,
    distinct_tol: float = 1e-8,
    rank_rtol: float = None,
):
    """Deterministic uniqueness test for a given factor set and smoothing.

    Requires (a) pairwise-distinct mode-1 generators, (b) the windowed
    Khatri-Rao product ``A1[:K1-1] (x) A2[:K2] (x) A3[:K3]`` to have full
    column rank, and (c) the complementary product including the fourth
    factor to have full column rank.  The first factor must be Vandermonde
    (checked numerically); ranks use an SVD cutoff of ``rank_rtol`` times
    the top singular value (default: ``max(matrix dims) * machine eps``).

    Returns
    -------
    (bool, dict)
        Verdict plus diagnostics (which condition failed, ranks, min gap).
    """
    sp.validate_dims(factors.dims)
    a1, a2, a3, a4 = factors.factors()
    r = factors.rank

    ratios = a1[1:, :] / a1[:-1, :] if a1.shape[0] > 1 else np.ones((1, r))
    if a1.shape[0] > 2:
        spread = np.max(np.abs(ratios - ratios[0, :]), axis=0)
        scale = np.maximum(np.abs(ratios[0, :]), 1e-300)
        if np.any(spread / scale > 1e-6):
            raise ValueError("first factor columns are not Vandermonde")
    z1 = ratios[0, :]

    diag = {"rank": r}
    gap = np.abs(z1[:, None] - z1[None, :]) + np.eye(r)
    diag["min_generator_gap"] = float(gap.min())
    if diag["min_generator_gap"] <= distinct_tol:
        diag["failed"] = "distinctness"
        return False, diag

    def numerical_rank(m):
        s = np.linalg.svd(m, compute_uv=False)
        tol = (rank_rtol if rank_rtol is not None else max(m.shape) * np.finfo(float).eps)
        return int(np.sum(s > tol * s[0])) if s[0] > 0 else 0

    shift_block = khatri_rao(khatri_rao(a1[: sp.k1 - 1, :], a2[: sp.k2, :]), a3[: sp.k3, :])
    diag["shift_block_rank"] = numerical_rank(shift_block)
    if diag["shift_block_rank"] != r:
        diag["failed"] = "shift-block rank"
        return False, diag

    co_block = khatri_rao(
        khatri_rao(khatri_rao(a1[: sp.l1, :], a2[: sp.l2, :]), a3[: sp.l3, :]), a4
    )
    diag["co_block_rank"] = numerical_rank(co_block)
    if diag["co_block_rank"] != r:
        diag["failed"] = "co-block rank"
        return False, diag
    diag["failed"] = None
    return True, diag


def hankelize(x: np.ndarray, sp: SmoothingParams) -> np.ndarray:
    """Spatially smooth a 4-way tensor into a (K1 K2 K3) x (L1 L2 L3 I4) matrix.

    Entry (row, col) with row = (k1-1) K2 K3 + (k2-1) K3 + k3 and
    col = (l1-1) L2 L3 I4 + (l2-1) L3 I4 + (l3-1) I4 + i4 (all 1-based)
    equals ``x[k1+l1-1, k2+l2-1, k3+l3-1, i4]``.  When x is an exact CP
    tensor with unit-first-entry Vandermonde factors in modes 1..3, this
    matrix factors as the outer product of the two windowed Khatri-Rao
    blocks.
    """
    x = as_tensor4(x)
    sp.validate_dims(x.shape)
    windows = sliding_window_view(x, (sp.k1, sp.k2, sp.k3), axis=(0, 1, 2))
    # windows: (L1, L2, L3, I4, K1, K2, K3) -> rows (k1,k2,k3), cols (l1,l2,l3,i4)
    return np.ascontiguousarray(windows.transpose(4, 5, 6, 0, 1, 2, 3)).reshape(
        sp.window_rows, sp.l1 * sp.l2 * sp.l3 * x.shape[3]
    )


def signal_subspace(
    xhank: np.ndarray,
    rank_rule="relative-threshold",
    eps_rel: float = 1e-2,
    rank_cap: int = None,
    method: str = "svd",
):
    """Left singular subspace of the smoothed matrix plus a rank decision.

    The default rule counts singular values above ``eps_rel`` times the
    largest; passing an integer forces that rank.  The rank is always
    clipped to the matrix dimensions and, when given, to ``rank_cap``
    (callers pass the smoothing capacity).

    Returns
    -------
    (u_signal, singular_values, rank)
    """
    xhank = np.asarray(xhank, dtype=complex)
    nrm = np.linalg.norm(xhank)
    if not np.isfinite(nrm) or nrm == 0.0:
        raise ValueError("smoothed matrix is zero (or not finite)")
    if method == "svd":
        u, s, _ = np.linalg.svd(xhank, full_matrices=False)
    elif method == "gram":
        gram = xhank @ xhank.conj().T
        w, v = np.linalg.eigh(gram)
        u, s = v[:, ::-1], np.sqrt(np.maximum(w[::-1], 0.0))
    else:
        raise ValueError(f"unknown subspace method {method!r}")

    limit = min(xhank.shape)
    if rank_cap is not None:
        limit = min(limit, int(rank_cap))
    if isinstance(rank_rule, (int, np.integer)):
        rank = min(int(rank_rule), limit)
    else:
        if rank_rule != "relative-threshold":
            raise ValueError(f"unknown rank rule {rank_rule!r}")
        rank = min(int(np.sum(s > eps_rel * s[0])), limit)
    return u[:, :rank], s, rank


def shift_evd_z1(u_signal: np.ndarray, sp: SmoothingParams, rank: int,
                 cond_limit: float = 1e12) -> GeneratorEstimate:
    """First generator set from the block-shift eigendecomposition.

    Deleting the last (respectively first) K2*K3 rows of the signal
    subspace gives two blocks related by the diagonal of mode-1
    generators; the eigenvalues of ``pinv(U1) U2`` are those generators up
    to magnitude, and are projected onto the unit circle.  Eigenpairs are
    sorted by ascending phase for a deterministic column order.
    """
    if u_signal.shape != (sp.window_rows, rank):
        raise ValueError(
            f"subspace shape {u_signal.shape} does not match smoothing "
            f"({sp.window_rows} rows) and rank {rank}"
        )
    blk = sp.k2 * sp.k3
    u1 = u_signal[: (sp.k1 - 1) * blk, :]
    u2 = u_signal[blk : sp.k1 * blk, :]
    shift = np.linalg.lstsq(u1, u2, rcond=PINV_RCOND)[0]
    eigvals, eigvecs = np.linalg.eig(shift)
    order = np.argsort(np.angle(eigvals))
    eigvals, eigvecs = eigvals[order], eigvecs[:, order]
    cond = np.linalg.cond(eigvecs)
    if not np.isfinite(cond) or cond > cond_limit:
        raise EstimationError(
            f"shift eigenvector matrix is ill-conditioned (cond {cond:.2e})"
        )
    mags = np.abs(eigvals)
    if np.any(mags == 0):
        raise EstimationError("zero eigenvalue in the shift decomposition")
    return GeneratorEstimate(z1=eigvals / mags, eigvec=eigvecs, rank=rank)


def recover_kr23(u_signal: np.ndarray, m_matrix: np.ndarray, a1_hat: np.ndarray,
                 sp: SmoothingParams, r: int) -> np.ndarray:
    """Column r of the mode-2/mode-3 windowed Khatri-Rao product, up to scale.

    Contracts the rebuilt mode-1 window against the r-th eigenvector image
    of the signal subspace; the per-column complex scale cancels in the
    shift ratios downstream.
    """
    rank = m_matrix.shape[1]
    if not (0 <= r < rank):
        raise ValueError(f"path index {r} out of range for rank {rank}")
    w = (u_signal @ m_matrix[:, r]).reshape(sp.k1, sp.k2 * sp.k3)
    return np.conj(a1_hat[: sp.k1, r]) @ w


def ls_shift_ratio(v: np.ndarray) -> complex:
    """Least-squares ratio between a vector and its one-step shift."""
    v = np.asarray(v, dtype=complex).ravel()
    top = v[:-1]
    energy = np.real(np.conj(top) @ top)
    if energy <= 1e-300:
        raise EstimationError("shift ratio undefined: leading block is numerically zero")
    return complex((np.conj(top) @ v[1:]) / energy)


def extract_z2(v: np.ndarray, sp: SmoothingParams) -> complex:
    """Second-mode generator from the block shift of a kron(a2, a3) column.

    The top block is rows 1..(K2-1)K3, the shifted block rows
    K3+1..K2K3; their least-squares ratio is the generator, projected onto
    the unit circle.  Invariant to the overall scale of ``v``.
    """
    if sp.k2 < 2:
        raise ValueError("k2 must be >= 2 to observe the second generator")
    v = np.asarray(v, dtype=complex).ravel()
    if v.size != sp.k2 * sp.k3:
        raise ValueError(f"expected length {sp.k2 * sp.k3}, got {v.size}")
    top = v[: (sp.k2 - 1) * sp.k3]
    bot = v[sp.k3 :]
    energy = np.real(np.conj(top) @ top)
    if energy <= 1e-300:
        raise EstimationError("mode-2 shift undefined: top block is numerically zero")
    g = (np.conj(top) @ bot) / energy
    if g == 0:
        raise EstimationError("mode-2 shift ratio is zero")
    return complex(g / abs(g))


def recover_a3_z3(u_signal: np.ndarray, m_matrix: np.ndarray, a1_hat: np.ndarray,
                  a2_hat: np.ndarray, sp: SmoothingParams, r: int):
    """Third-mode window column and its generator for path r.

    Contracts the rebuilt mode-2 window out of :func:`recover_kr23`'s
    output, then extracts the generator as the least-squares ratio of the
    one-step shift, projected onto the unit circle.  With K3 = 1 the
    generator is unobservable and reported as 1 with a warning.
    """
    v = recover_kr23(u_signal, m_matrix, a1_hat, sp, r)
    a3 = np.conj(a2_hat[: sp.k2, r]) @ v.reshape(sp.k2, sp.k3)
    if sp.k3 < 2:
        warnings.warn("k3 = 1 leaves the third generator unobservable; using 1")
        return a3, 1.0 + 0.0j
    g = ls_shift_ratio(a3)
    if g == 0:
        raise EstimationError("mode-3 shift ratio is zero")
    return a3, complex(g / abs(g))


def solve_fourth_factor(x: np.ndarray, a1: np.ndarray, a2: np.ndarray,
                        a3: np.ndarray, rcond: float = PINV_RCOND) -> np.ndarray:
    """Closed-form least-squares solution for the unconstrained fourth factor.

    Minimizes ``||X_(4) - A4 (A3 (x) A2 (x) A1)^T||_F`` over A4; for
    complex data the normal equations read
    ``A4 = X_(4) conj(B) pinv(conj(G))`` with B the Khatri-Rao product and
    G the Hadamard product of the three Gram matrices.  A rank-deficient
    Gram product is flagged with a warning (the pseudoinverse is still
    returned).
    """
    x = as_tensor4(x)
    if (a1.shape[0], a2.shape[0], a3.shape[0]) != x.shape[:3]:
        raise ValueError("factor row counts do not match tensor dims")
    b = khatri_rao(khatri_rao(a3, a2), a1)
    gram = (a3.conj().T @ a3) * (a2.conj().T @ a2) * (a1.conj().T @ a1)
    s = np.linalg.svd(gram, compute_uv=False)
    if s[0] > 0 and s[-1] <= rcond * s[0] * 10:
        warnings.warn("Gram product is numerically rank deficient; using pseudoinverse")
    return mode_n_unfold(x, 4) @ np.conj(b) @ np.linalg.pinv(np.conj(gram), rcond=rcond)


def recover_delays(z3_comb, stride: int) -> np.ndarray:
    """Normalized delays from comb-domain delay generators.

    A comb generator is ``exp(-2j pi tau s)`` for stride s; the principal
    branch gives ``tau = frac(-arg(g) / 2 pi) / s``, valid for
    ``tau < 1/s`` (the aliasing guard on comb sampling).
    """
    if stride < 1:
        raise ValueError("stride must be >= 1")
    z = np.atleast_1d(np.asarray(z3_comb, dtype=complex))
    return ((-np.angle(z) / (2.0 * np.pi)) % 1.0) / stride


def _steering_angles(z_phase, spacing, cfg):
    """Invert unit-modulus steering phases to a sin/cos argument, clipped to +-1."""
    arg = z_phase * cfg.c / (2.0 * np.pi * cfg.f_c * spacing)
    clipped = bool(np.any(np.abs(arg) > 1.0))
    return np.clip(arg, -1.0, 1.0), clipped


def estimate_channel(
    h_comb: np.ndarray,
    comb,
    n_subcarriers: int,
    cfg=None,
    options: VsdOptions = None,
):
    """Full-band channel estimate from a comb-domain channel tensor.

    Pipeline: pick the bound-maximizing smoothing (or the override),
    smooth, take the signal subspace, recover the three generator sets,
    rebuild the three Vandermonde factors with unit first entries, solve
    the fourth factor in closed form, convert comb delay generators to
    normalized delays, and evaluate the model on the full 1..K grid.  The
    comb need not start at subcarrier 1: the delay-dependent phase between
    subcarrier 1 and the first comb index is moved from the fourth factor
    into the gains so the full-grid rebuild stays consistent.

    Parameters
    ----------
    h_comb : ndarray, shape (n_col, n_row, len(comb), n_pol)
    comb : 1-based arithmetic progression of subcarrier indices
    n_subcarriers : full grid size K
    cfg : ArrayConfig, optional
        Only used to convert recovered generators to physical angles in
        the report.
    options : VsdOptions, optional

    Returns
    -------
    (h_full, report) : (ndarray of shape (n_col, n_row, K, n_pol), EstimationReport)
    """
    opts = options or VsdOptions()
    x = as_tensor4(h_comb)
    comb = np.asarray(comb, dtype=int)
    if comb.size != x.shape[2]:
        raise ValueError("comb length does not match the subcarrier mode")
    if comb.size < 2:
        raise ValueError("need at least two comb subcarriers")
    strides = np.diff(comb)
    if np.any(strides != strides[0]) or strides[0] < 1:
        raise ValueError("comb must be an arithmetic progression")
    stride = int(strides[0])
    if comb[0] < 1 or comb[-1] > n_subcarriers:
        raise ValueError("comb indices out of the 1..K range")

    dims = x.shape
    full_dims = (dims[0], dims[1], n_subcarriers, dims[3])
    if opts.smoothing is not None:
        sp = opts.smoothing
        sp.validate_dims(dims)
    else:
        bound, sp = generic_bound(*dims)
        if sp is None:
            raise ValueError(f"dims {dims} admit no smoothing (I1 < 2)")

    flags = []
    if frobenius_norm(x) == 0.0:
        report = EstimationReport(
            rank=0, smoothing=sp, singular_values=np.zeros(0),
            delays=np.zeros(0), z1_phase=np.zeros(0), z2_phase=np.zeros(0),
            z3_phase=np.zeros(0), residual=0.0, flags=["zero input"],
        )
        return np.zeros(full_dims, dtype=complex), report

    xh = hankelize(x, sp)
    cap = sp.capacity(dims[3])
    if opts.rank_cap is not None:
        cap = min(cap, int(opts.rank_cap))
    u_sig, svals, rank = signal_subspace(
        xh, rank_rule=opts.rank_rule, eps_rel=opts.eps_rel,
        rank_cap=cap, method=opts.subspace,
    )
    if rank == 0:
        report = EstimationReport(
            rank=0, smoothing=sp, singular_values=svals,
            delays=np.zeros(0), z1_phase=np.zeros(0), z2_phase=np.zeros(0),
            z3_phase=np.zeros(0), residual=1.0, flags=["rank 0 detected"],
        )
        return np.zeros(full_dims, dtype=complex), report

    gen = shift_evd_z1(u_sig, sp, rank, cond_limit=opts.cond_limit)
    a1_hat = vandermonde(gen.z1, dims[0])

    z2 = np.empty(rank, dtype=complex)
    z3 = np.empty(rank, dtype=complex)
    if sp.k2 < 2:
        flags.append("k2 = 1: second generators unobservable, set to 1")
    if sp.k3 < 2:
        flags.append("k3 = 1: third generators unobservable, set to 1")
    a2_cols = np.empty((dims[1], rank), dtype=complex)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for r in range(rank):
            if sp.k2 < 2:
                z2[r] = 1.0
            else:
                v = recover_kr23(u_sig, gen.eigvec, a1_hat, sp, r)
                z2[r] = extract_z2(v, sp)
            a2_cols[:, r] = vandermonde([z2[r]], dims[1])[:, 0]
            _, z3[r] = recover_a3_z3(u_sig, gen.eigvec, a1_hat, a2_cols, sp, r)
    gen.z2, gen.z3 = z2, z3

    a2_hat = a2_cols
    a3_comb = vandermonde(z3, dims[2])
    a4_hat = solve_fourth_factor(x, a1_hat, a2_hat, a3_comb, rcond=opts.pinv_rcond)

    recon = cp_reconstruct(FactorSet(a1_hat, a2_hat, a3_comb, a4_hat))
    residual = frobenius_norm(recon - x) / frobenius_norm(x)

    delays = recover_delays(z3, stride)
    grid = np.arange(1, n_subcarriers + 1)
    d_full = np.exp(-2j * np.pi * delays[None, :] * (grid[:, None] - 1))
    # the comb factor has unit first entry at subcarrier comb[0]; fold that
    # offset phase into the gains so d_full can use the 1..K origin
    gains = a4_hat * np.exp(2j * np.pi * delays * (comb[0] - 1))[None, :]
    h_full = cp_reconstruct(FactorSet(a1_hat, a2_hat, d_full, gains))

    aoa = zoa = None
    if cfg is not None:
        sin_arg, clipped_a = _steering_angles(np.angle(gen.z1), cfg.d_col, cfg)
        cos_arg, clipped_z = _steering_angles(np.angle(z2), cfg.d_row, cfg)
        aoa = np.rad2deg(np.arcsin(sin_arg))
        zoa = np.rad2deg(np.arccos(cos_arg))
        if clipped_a or clipped_z:
            flags.append("steering phase outside the unambiguous range; angles clipped")

    report = EstimationReport(
        rank=rank, smoothing=sp, singular_values=svals, delays=delays,
        z1_phase=np.angle(gen.z1), z2_phase=np.angle(z2), z3_phase=np.angle(z3),
        residual=residual, flags=flags, aoa_deg=aoa, zoa_deg=zoa,
    )
    return h_full, report

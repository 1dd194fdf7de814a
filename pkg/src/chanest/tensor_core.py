"""Dense complex tensor algebra for fourth-order arrays.

Tensors are plain ``numpy`` arrays of shape ``(I1, I2, I3, I4)`` with
complex entries.  Every routine in this package assumes one fixed linear
layout: the multi-index ``(i1, i2, i3, i4)`` (1-based) lives at linear
offset ``(i1-1) + (i2-1)*I1 + (i3-1)*I1*I2 + (i4-1)*I1*I2*I3``, i.e. the
first mode varies fastest (column-major).  ``to_linear``/``from_linear``
convert between the two views, and all unfoldings below are consistent
with this layout.

Mode indices are 1-based throughout, matching the usual tensor-algebra
notation ``X_(n)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def as_tensor4(x) -> np.ndarray:
    """Validate and return a 4-way complex tensor.

    Parameters
    ----------
    x : array_like
        Anything convertible to a complex ndarray with exactly four axes,
        each of length >= 1.
    """
    t = np.asarray(x, dtype=complex)
    if t.ndim != 4:
        raise ValueError(f"expected a 4-way tensor, got ndim={t.ndim}")
    if min(t.shape) < 1:
        raise ValueError(f"every dimension must be >= 1, got {t.shape}")
    return t


def to_linear(x: np.ndarray) -> np.ndarray:
    """Flatten a tensor into its canonical linear layout (first mode fastest)."""
    return np.ravel(x, order="F")


def from_linear(data, dims) -> np.ndarray:
    """Rebuild a tensor of shape ``dims`` from its canonical linear layout."""
    data = np.asarray(data, dtype=complex)
    if data.size != int(np.prod(dims)):
        raise ValueError(f"data length {data.size} does not match dims {tuple(dims)}")
    return np.reshape(data, dims, order="F")


@dataclass
class FactorSet:
    """The four factor matrices of a rank-R CP model.

    ``a1 .. a4`` have shapes ``(I1, R) .. (I4, R)``; all must share the
    same column count R >= 1.
    """

    a1: np.ndarray
    a2: np.ndarray
    a3: np.ndarray
    a4: np.ndarray

    def __post_init__(self):
        mats = []
        for name in ("a1", "a2", "a3", "a4"):
            m = np.asarray(getattr(self, name), dtype=complex)
            if m.ndim != 2:
                raise ValueError(f"{name} must be a matrix, got ndim={m.ndim}")
            mats.append(m)
            setattr(self, name, m)
        cols = {m.shape[1] for m in mats}
        if len(cols) != 1:
            raise ValueError(f"factor matrices disagree on rank: {sorted(cols)}")
        if mats[0].shape[1] < 1:
            raise ValueError("rank must be >= 1")

    @property
    def rank(self) -> int:
        return self.a1.shape[1]

    @property
    def dims(self) -> tuple:
        return (self.a1.shape[0], self.a2.shape[0], self.a3.shape[0], self.a4.shape[0])

    def factors(self) -> list:
        return [self.a1, self.a2, self.a3, self.a4]


def mode_n_unfold(x: np.ndarray, n: int) -> np.ndarray:
    """Mode-n unfolding ``X_(n)`` of a 4-way tensor.

    Row ``i_n`` collects the entries with the remaining indices combined
    in ascending mode order, lowest remaining mode varying fastest.  For
    ``n = 4`` this gives ``X_(4)[i4, i1 + (i2-1) I1 + (i3-1) I1 I2]``,
    which matches the column ordering of ``khatri_rao(A3, A2, A1)``.

    Parameters
    ----------
    x : ndarray
        Tensor of shape ``(I1, I2, I3, I4)``.
    n : int
        Mode index in {1, 2, 3, 4}.

    Returns
    -------
    ndarray of shape (I_n, prod of the other dims)
    """
    x = as_tensor4(x)
    if n not in (1, 2, 3, 4):
        raise ValueError(f"mode index must be in 1..4, got {n}")
    return np.moveaxis(x, n - 1, 0).reshape(x.shape[n - 1], -1, order="F")


def mode_n_fold(mat: np.ndarray, n: int, dims) -> np.ndarray:
    """Inverse of :func:`mode_n_unfold` for the documented index map."""
    if n not in (1, 2, 3, 4):
        raise ValueError(f"mode index must be in 1..4, got {n}")
    dims = tuple(int(d) for d in dims)
    rest = dims[: n - 1] + dims[n:]
    t = np.reshape(np.asarray(mat, dtype=complex), (dims[n - 1],) + rest, order="F")
    return np.moveaxis(t, 0, n - 1)


def khatri_rao(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Column-wise Kronecker (Khatri-Rao) product.

    Column ``r`` of the result is ``kron(a[:, r], b[:, r])`` with the
    ``a`` index varying slowest.

    Parameters
    ----------
    a : ndarray of shape (m, R)
    b : ndarray of shape (n, R)

    Returns
    -------
    ndarray of shape (m*n, R)
    """
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError("khatri_rao expects matrices")
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"column counts differ: {a.shape[1]} vs {b.shape[1]}")
    return (a[:, None, :] * b[None, :, :]).reshape(a.shape[0] * b.shape[0], a.shape[1])


def kronecker(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product: block ``[i, j]`` of the result is ``a[i, j] * b``."""
    return np.kron(np.asarray(a, dtype=complex), np.asarray(b, dtype=complex))


def hadamard(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Entrywise product of two equal-shape matrices."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a * b


def cp_reconstruct(factors: FactorSet, dims=None) -> np.ndarray:
    """Evaluate the CP model ``X[i1,i2,i3,i4] = sum_r prod_n A_n[i_n, r]``.

    Equivalently, the mode-4 unfolding of the result equals
    ``a4 @ khatri_rao(khatri_rao(a3, a2), a1).T``.

    Parameters
    ----------
    factors : FactorSet
    dims : tuple, optional
        Expected output shape; raises if the factor row counts disagree.
    """
    if dims is not None and tuple(dims) != factors.dims:
        raise ValueError(f"factor dims {factors.dims} do not match requested {tuple(dims)}")
    return np.einsum(
        "ir,jr,kr,lr->ijkl",
        factors.a1, factors.a2, factors.a3, factors.a4,
        optimize=True,
    )


def frobenius_norm(x: np.ndarray) -> float:
    """Frobenius norm of a complex array."""
    return float(np.linalg.norm(np.asarray(x).ravel()))


def relative_error(x: np.ndarray, xhat: np.ndarray) -> float:
    """Squared relative Frobenius error ``||x - xhat||_F^2 / ||x||_F^2``.

    The reference tensor ``x`` must be nonzero.
    """
    x = as_tensor4(x)
    xhat = as_tensor4(xhat)
    if x.shape != xhat.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {xhat.shape}")
    denom = frobenius_norm(x) ** 2
    if denom == 0.0:
        raise ValueError("reference tensor has zero norm")
    return frobenius_norm(x - xhat) ** 2 / denom

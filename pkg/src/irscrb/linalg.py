"""Dense complex-matrix kernel shared by the whole package.

Everything operates on plain numpy arrays: complex 2-D arrays for general
matrices, Hermitian matrices validated on entry where the algebra requires
it.  Sizes stay small (tens of rows), so unblocked LAPACK via numpy is
plenty.
"""

from __future__ import annotations

import numpy as np

HERM_RTOL = 1e-12
PSD_EIG_RTOL = 1e-10
FIM_RCOND_MIN = 1e-14


class InvariantViolation(ValueError):
    """Input breaks a structural precondition (not Hermitian, indefinite, ...)."""


class SingularFimError(ValueError):
    """Fisher information matrix is singular: parameters unobservable."""


def check_hermitian(a: np.ndarray, rtol: float = HERM_RTOL) -> np.ndarray:
    """Validate A = A^H within `rtol` * max|A| and return A unchanged."""
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvariantViolation(f"expected square matrix, got shape {a.shape}")
    scale = max(np.max(np.abs(a)), 1.0) if a.size else 1.0
    dev = np.max(np.abs(a - a.conj().T)) if a.size else 0.0
    if dev > rtol * scale:
        raise InvariantViolation(
            f"matrix is not Hermitian: max |A - A^H| = {dev:.3e} (scale {scale:.3e})"
        )
    return a


def herm_real_embed(h: np.ndarray) -> np.ndarray:
    """Embed a Hermitian N x N matrix as the real symmetric 2N x 2N matrix
    [[Re H, -Im H], [Im H, Re H]].

    The embedding doubles every eigenvalue's multiplicity, so PSD-ness is
    preserved in both directions and trace doubles.  This is how Hermitian
    variables are hosted inside the real-cone SDP solver.
    """
    h = check_hermitian(h)
    x, y = h.real, h.imag
    return np.block([[x, -y], [y, x]])


def herm_from_embed(s: np.ndarray) -> np.ndarray:
    """Inverse of :func:`herm_real_embed` with structure averaging.

    For a 2N x 2N real symmetric `s` (possibly lacking the exact block
    structure, e.g. a raw solver iterate), returns the Hermitian matrix whose
    embedding is the structured part of `s`.
    """
    s = np.asarray(s, dtype=float)
    n2 = s.shape[0]
    if n2 % 2:
        raise InvariantViolation("embedded matrix must have even dimension")
    n = n2 // 2
    x = 0.5 * (s[:n, :n] + s[n:, n:])
    y = 0.5 * (s[n:, :n] - s[:n, n:])
    h = 0.5 * (x + x.T) + 0.5j * (y - y.T)
    return h


def psd_sqrt(h: np.ndarray, rtol: float = PSD_EIG_RTOL) -> np.ndarray:
    """Hermitian square root S of a PSD matrix, S @ S^H == H.

    Eigenvalues in [-rtol * lambda_max, 0] are clamped to zero (SDP solutions
    are PSD only to solver tolerance); anything more negative is rejected.
    """
    h = check_hermitian(h)
    w, v = np.linalg.eigh(h)
    lo = w[0] if w.size else 0.0
    hi = max(w[-1], 0.0) if w.size else 0.0
    if lo < -rtol * max(hi, 1e-300):
        raise InvariantViolation(
            f"matrix is significantly indefinite: min eig {lo:.3e}, max eig {hi:.3e}"
        )
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ v.conj().T


def trace_prod(a: np.ndarray, b: np.ndarray) -> complex:
    """tr(A @ B) as sum_ij A_ij B_ji, without forming the product."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0] or a.shape[0] != b.shape[1]:
        raise ValueError(f"incompatible shapes for trace product: {a.shape} x {b.shape}")
    return complex(np.sum(a * b.T))


def inv4(f: np.ndarray) -> np.ndarray:
    """Inverse of a real symmetric (Fisher-type) matrix, symmetrized.

    Raises :class:`SingularFimError` when the reciprocal condition number
    drops below 1e-14, which signals unobservable parameters.
    """
    f = np.asarray(f, dtype=float)
    if f.ndim != 2 or f.shape[0] != f.shape[1]:
        raise InvariantViolation(f"expected square matrix, got shape {f.shape}")
    if np.max(np.abs(f - f.T)) > HERM_RTOL * max(np.max(np.abs(f)), 1.0):
        raise InvariantViolation("matrix is not symmetric")
    w = np.linalg.eigvalsh(f)
    amax = np.max(np.abs(w))
    amin = np.min(np.abs(w))
    if amax == 0.0 or amin / amax < FIM_RCOND_MIN:
        raise SingularFimError(
            f"singular FIM (rcond ~ {0.0 if amax == 0.0 else amin / amax:.3e})"
        )
    inv = np.linalg.inv(f)
    return 0.5 * (inv + inv.T)


def is_psd(h: np.ndarray, rtol: float = PSD_EIG_RTOL) -> bool:
    """True when the Hermitian matrix has no eigenvalue below -rtol * lambda_max."""
    w = np.linalg.eigvalsh(check_hermitian(h))
    hi = max(w[-1], 0.0) if w.size else 0.0
    return bool(w.size == 0 or w[0] >= -rtol * max(hi, 1e-300))

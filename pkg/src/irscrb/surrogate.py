"""Convexification layer for the reflective-beamforming subproblem.

Everything here works on the lifted reflection matrix Theta (Hermitian PSD,
equal to psi psi^H at rank one).  The FIM entries are quadratic in Theta for
sensing at the BS and affine for sensing at the surfaces (up to the squared
trace in the covariance terms); this module exposes

* the exact trace forms ``q_value`` and their matrix gradients ``q_grad``,
* tangent affine surrogates of the full FIM (``fim_affine`` /
  ``fim_linearized``), with the noise covariance frozen at the anchor point
  and refreshed between SCA iterations,
* exact and linearized per-surface transmit power in Theta form.

Pairing convention: a gradient or coefficient matrix M represents the
functional pair(M, Theta) = sum_ij M_ij Theta_ij = tr(M Theta^T); it is
real-valued on Hermitian Theta iff M is Hermitian.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fim import IrsSensingLink, SensingCase, noise_cov_bs, noise_cov_irs
from .steering import steering_bundle

KINDS = ("tt", "pp", "tp", "tb", "pb", "bb")


def herm(x: np.ndarray) -> np.ndarray:
    return 0.5 * (x + x.conj().T)


def tr_t(m: np.ndarray, x: np.ndarray) -> complex:
    """tr(M X^T) = sum_ij M_ij X_ij."""
    return complex(np.sum(m * x))


def tr_p(m: np.ndarray, x: np.ndarray) -> complex:
    """tr(M X)."""
    return complex(np.sum(m * x.T))


def as_theta(theta_or_psi: np.ndarray) -> np.ndarray:
    """Accept either a reflection vector psi or an already lifted matrix."""
    arr = np.asarray(theta_or_psi)
    if arr.ndim == 1:
        return np.outer(arr, arr.conj())
    return arr


@dataclass(frozen=True)
class SurrogateContext:
    """Constants of one SCA iteration for one surface.

    r1 = A G r_s G^H A^H and r2 = A^H G^* Rw^-1 G^T A (BS case) carry the
    transmit side; the sensor-side constants of the surface case are scalar
    quadratic forms in the sensor steering vector and its derivatives, all
    evaluated with the noise covariance frozen at the anchor.
    """

    case: SensingCase
    link: IrsSensingLink
    r_s: np.ndarray
    anchor: np.ndarray
    a: np.ndarray
    zeta_t: np.ndarray
    zeta_p: np.ndarray
    r1: np.ndarray
    r2: np.ndarray | None
    # surface-sensing constants (None for the BS case)
    sens: dict | None
    cov: dict | None

    @property
    def scale2(self) -> float:
        return 2.0 * self.link.t_l


def make_context(
    case: SensingCase, r_s: np.ndarray, anchor: np.ndarray, link: IrsSensingLink
) -> SurrogateContext:
    """Precompute the frozen quantities for a given anchor Theta."""
    anchor = as_theta(anchor)
    rb = steering_bundle(link.reflect_geom, link.doa)
    a = rb.a
    ag = a[:, None] * link.g
    r1 = herm(ag @ r_s @ ag.conj().T)

    if case is SensingCase.AT_BS:
        rw = noise_cov_bs(np.sqrt(np.abs(np.diag(anchor).real)), link.g, link.sigma_r2, link.sigma_b2)
        rinv = np.linalg.inv(rw)
        agc = ag.conj()
        r2 = herm(agc @ rinv @ agc.conj().T)
        return SurrogateContext(
            case=case, link=link, r_s=r_s, anchor=anchor, a=a,
            zeta_t=rb.zeta_theta, zeta_p=rb.zeta_phi, r1=r1, r2=r2, sens=None, cov=None,
        )

    sb = steering_bundle(link.sensor_geom, link.doa)
    ab, dbt, dbp = sb.a, sb.da_theta, sb.da_phi
    rw = noise_cov_irs(anchor, link.beta, ab, link.sigma_r2, link.sigma_s2)
    rinv = np.linalg.inv(rw)
    dvecs = {"t": dbt, "p": dbp, "0": ab}
    # sens[x + y] = (d_x)^H Rw^-1 d_y with d_0 the steering vector itself
    sens = {x + y: complex(dvecs[x].conj() @ rinv @ dvecs[y]) for x in "tp0" for y in "tp0"}
    d = np.outer(ab, ab.conj())
    b_t = np.outer(dbt, ab.conj()) + np.outer(ab, dbt.conj())
    b_p = np.outer(dbp, ab.conj()) + np.outer(ab, dbp.conj())
    mats = {"t": b_t, "p": b_p, "d": d}
    cov = {
        xy: float(np.trace(rinv @ mats[xy[0]] @ rinv @ mats[xy[1]]).real)
        for xy in ("tt", "pp", "tp", "td", "pd", "dd")
    }
    return SurrogateContext(
        case=case, link=link, r_s=r_s, anchor=anchor, a=a,
        zeta_t=rb.zeta_theta, zeta_p=rb.zeta_phi, r1=r1, r2=None, sens=sens, cov=cov,
    )


def _bs_terms(kind: str, ctx: SurrogateContext) -> list[tuple[np.ndarray, np.ndarray]]:
    """Factor pairs (P_k, S_k) with q(Theta) = sum_k tr(P_k Theta^T) tr(S_k Theta).

    diag(z) M and M diag(z)^H are written via row / column broadcasting; the
    first angle of `kind` sits on the conjugated side of the quadratic form.
    """
    r1, r2 = ctx.r1, ctx.r2
    z = {"t": ctx.zeta_t, "p": ctx.zeta_p}
    if kind in ("tt", "pp", "tp"):
        zx, zy = z[kind[0]], z[kind[1]]
        return [
            (r1, zx.conj()[:, None] * r2 * zy[None, :]),        # Z_x^H R2 Z_y
            (zy[:, None] * r1, zx.conj()[:, None] * r2),        # Z_y R1 ; Z_x^H R2
            (r1 * zx.conj()[None, :], r2 * zy[None, :]),        # R1 Z_x^H ; R2 Z_y
            (zy[:, None] * r1 * zx.conj()[None, :], r2),        # Z_y R1 Z_x^H ; R2
        ]
    if kind in ("tb", "pb"):
        zx = z[kind[0]]
        return [(r1, zx.conj()[:, None] * r2), (r1 * zx.conj()[None, :], r2)]
    if kind == "bb":
        return [(r1, r2)]
    raise ValueError(f"unknown entry kind {kind!r}")


def _irs_coeff(kind: str, ctx: SurrogateContext) -> np.ndarray:
    """Constant gradient matrix of the affine surface-case trace term."""
    r1 = ctx.r1
    s = ctx.sens
    z = {"t": ctx.zeta_t, "p": ctx.zeta_p}
    if kind in ("tt", "pp", "tp"):
        zx, zy = z[kind[0]], z[kind[1]]
        return (
            s[kind] * r1
            + s[kind[0] + "0"] * (zy[:, None] * r1)
            + s["0" + kind[1]] * (r1 * zx.conj()[None, :])
            + s["00"] * (zy[:, None] * r1 * zx.conj()[None, :])
        )
    if kind in ("tb", "pb"):
        zx = z[kind[0]]
        return s[kind[0] + "0"] * r1 + s["00"] * (r1 * zx.conj()[None, :])
    if kind == "bb":
        return s["00"] * r1
    raise ValueError(f"unknown entry kind {kind!r}")


def q_value(kind: str, theta: np.ndarray, ctx: SurrogateContext) -> complex:
    """Exact trace term of the (kind) FIM entry at a lifted point Theta.

    At rank one Theta = psi psi^H this reproduces the trace expression built
    from psi directly (with the noise covariance taken from the anchor).
    """
    theta = as_theta(theta)
    if ctx.case is SensingCase.AT_BS:
        return sum(tr_t(p, theta) * tr_p(s, theta) for p, s in _bs_terms(kind, ctx))
    return tr_t(_irs_coeff(kind, ctx), theta)


def q_grad(kind: str, theta: np.ndarray, ctx: SurrogateContext) -> np.ndarray:
    """Gradient matrix G of q: dq = pair(G, dTheta) to first order."""
    theta = as_theta(theta)
    if ctx.case is SensingCase.AT_BS:
        g = np.zeros_like(ctx.r1)
        for p, s in _bs_terms(kind, ctx):
            g = g + tr_p(s, theta) * p + tr_t(p, theta) * s.T
        return g
    return _irs_coeff(kind, ctx)


_ENTRY_FOR = {(0, 0): "tt", (1, 1): "pp", (0, 1): "tp", (0, 2): "tb", (0, 3): "tb",
              (1, 2): "pb", (1, 3): "pb", (2, 2): "bb", (3, 3): "bb"}


def fim_affine(ctx: SurrogateContext) -> tuple[np.ndarray, dict]:
    """Tangent affine model of the FIM: entry (p, q) = F0[p, q] + pair(M[(p, q)], Theta).

    Coefficient matrices are Hermitian, so the model is real on Hermitian
    Theta and feeds the real-embedded SDP directly.  Exact at the anchor by
    construction.
    """
    link = ctx.link
    s2 = ctx.scale2
    beta = link.beta
    bconj = np.conj(beta)
    anchor = ctx.anchor
    f0 = np.zeros((4, 4))
    coeff: dict = {}

    def put(p, q, const, mat):
        f0[p, q] = f0[q, p] = const
        coeff[(p, q)] = herm(mat)

    # scalar multipliers turning a q-term into a FIM entry contribution
    mult = {(0, 2): bconj, (1, 2): bconj, (0, 3): 1j * bconj, (1, 3): 1j * bconj}

    for (p, q), kind in _ENTRY_FOR.items():
        w = mult.get((p, q), 1.0 if kind in ("tb", "pb", "bb") else abs(beta) ** 2)
        if ctx.case is SensingCase.AT_BS:
            g = q_grad(kind, anchor, ctx)
            q0 = q_value(kind, anchor, ctx)
            const = s2 * (w * (q0 - tr_t(g, anchor))).real
            put(p, q, const, s2 * herm(w * g))
        else:
            g = _irs_coeff(kind, ctx)
            put(p, q, 0.0, s2 * herm(w * g))
    coeff[(2, 3)] = np.zeros_like(ctx.r1)

    if ctx.case is SensingCase.AT_IRS:
        # covariance-derivative terms: coefficient times tr(Theta)^2, relaxed
        # to the tangent 2 tr(anchor) tr(Theta) - tr(anchor)^2
        t0 = float(np.trace(anchor).real)
        t_l = link.t_l
        sr4 = link.sigma_r2**2
        b2 = abs(beta) ** 2
        bvec = np.array([beta.real, beta.imag])
        eye = np.eye(ctx.r1.shape[0])
        cw = {
            (0, 0): t_l * sr4 * b2**2 * ctx.cov["tt"],
            (1, 1): t_l * sr4 * b2**2 * ctx.cov["pp"],
            (0, 1): t_l * sr4 * b2**2 * ctx.cov["tp"],
            (0, 2): 2 * t_l * sr4 * b2 * ctx.cov["td"] * bvec[0],
            (0, 3): 2 * t_l * sr4 * b2 * ctx.cov["td"] * bvec[1],
            (1, 2): 2 * t_l * sr4 * b2 * ctx.cov["pd"] * bvec[0],
            (1, 3): 2 * t_l * sr4 * b2 * ctx.cov["pd"] * bvec[1],
            (2, 2): 4 * t_l * sr4 * ctx.cov["dd"] * bvec[0] * bvec[0],
            (2, 3): 4 * t_l * sr4 * ctx.cov["dd"] * bvec[0] * bvec[1],
            (3, 3): 4 * t_l * sr4 * ctx.cov["dd"] * bvec[1] * bvec[1],
        }
        for (p, q), c in cw.items():
            if c == 0.0:
                continue
            f0[p, q] = f0[q, p] = f0[p, q] - c * t0**2
            coeff[(p, q)] = coeff[(p, q)] + c * 2.0 * t0 * eye
    return f0, coeff


def fim_linearized(theta: np.ndarray, ctx: SurrogateContext) -> np.ndarray:
    """Evaluate the affine FIM surrogate at Theta (4 x 4, symmetric)."""
    theta = as_theta(theta)
    f0, coeff = fim_affine(ctx)
    f = f0.copy()
    for (p, q), m in coeff.items():
        v = tr_t(m, theta).real
        f[p, q] += v
        if p != q:
            f[q, p] += v
    return f


def fim_lifted(case: SensingCase, theta: np.ndarray, r_s: np.ndarray, link: IrsSensingLink) -> np.ndarray:
    """Exact FIM at a lifted point: the surrogate anchored at Theta itself.

    At rank one Theta = psi psi^H this agrees with the closed forms on psi.
    """
    theta = as_theta(theta)
    return fim_linearized(theta, make_context(case, r_s, theta, link))


# --- per-surface transmit power ---------------------------------------------


def _amp_weights(a: np.ndarray) -> np.ndarray:
    return np.abs(a) ** 2


def power_bs_exact(
    theta: np.ndarray, r_s: np.ndarray, g: np.ndarray, a: np.ndarray,
    beta: complex, sigma_r2: float,
) -> float:
    """Exact radiated power of a doubly reflecting surface (watts).

    Sum of the echo retransmission, the reamplified echo of the surface's own
    noise, the first-pass forward power, and the amplifier noise power of
    both passes.
    """
    theta = as_theta(theta)
    ag = a[:, None] * g
    r1 = herm(ag @ r_s @ ag.conj().T)
    w = _amp_weights(a)
    t_amp = float(np.sum(w * np.diag(theta).real))
    grg = g @ r_s @ g.conj().T
    b2 = abs(beta) ** 2
    return float(
        b2 * t_amp * tr_t(r1, theta).real
        + sigma_r2 * b2 * t_amp**2
        + np.sum(np.diag(grg).real * np.diag(theta).real)
        + 2.0 * sigma_r2 * np.trace(theta).real
    )


def power_bs_affine(ctx: SurrogateContext) -> tuple[float, np.ndarray]:
    """Tangent affine model of the BS-case power: value = const + pair(M, Theta).

    The two quadratic terms are replaced by first-order expansions around the
    anchor; the forward-power and amplifier-noise terms are affine already
    and enter exactly.
    """
    link, anchor = ctx.link, ctx.anchor
    w = _amp_weights(ctx.a)
    wmat = np.diag(w)
    b2 = abs(link.beta) ** 2
    t_amp0 = float(np.sum(w * np.diag(anchor).real))
    r1t0 = tr_t(ctx.r1, anchor).real
    grad_c1 = r1t0 * wmat + t_amp0 * ctx.r1
    grad_c2 = 2.0 * t_amp0 * wmat
    grg_diag = np.diag(link.g @ ctx.r_s @ link.g.conj().T).real
    m = (
        b2 * grad_c1
        + link.sigma_r2 * b2 * grad_c2
        + np.diag(grg_diag)
        + 2.0 * link.sigma_r2 * np.eye(len(w))
    )
    const = b2 * (t_amp0 * r1t0 - tr_t(grad_c1, anchor).real) + link.sigma_r2 * b2 * (
        t_amp0**2 - tr_t(grad_c2, anchor).real
    )
    return const, herm(m)


def power_bs_linearized(theta: np.ndarray, ctx: SurrogateContext) -> float:
    const, m = power_bs_affine(ctx)
    return float(const + tr_t(m, as_theta(theta)).real)


def power_irs_exact(theta: np.ndarray, r_s: np.ndarray, g: np.ndarray, sigma_r2: float) -> float:
    """Exact radiated power of a singly reflecting surface; affine in Theta."""
    theta = as_theta(theta)
    grg_diag = np.diag(g @ r_s @ g.conj().T).real
    return float(np.sum(grg_diag * np.diag(theta).real) + sigma_r2 * np.trace(theta).real)


def power_irs_affine(r_s: np.ndarray, g: np.ndarray, sigma_r2: float, n: int) -> tuple[float, np.ndarray]:
    grg_diag = np.diag(g @ r_s @ g.conj().T).real
    return 0.0, np.diag(grg_diag) + sigma_r2 * np.eye(n)


def power_exact(
    case: SensingCase, theta: np.ndarray, r_s: np.ndarray, link: IrsSensingLink
) -> float:
    """Case-dispatching exact per-surface power at a lifted (or rank-one) point."""
    if case is SensingCase.AT_BS:
        a = steering_bundle(link.reflect_geom, link.doa).a
        return power_bs_exact(theta, r_s, link.g, a, link.beta, link.sigma_r2)
    return power_irs_exact(theta, r_s, link.g, link.sigma_r2)

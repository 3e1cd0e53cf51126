"""Fisher information matrices and Cramer-Rao bounds for both sensing
configurations, plus a finite-difference oracle that evaluates the
definitional Gaussian FIM directly from the mean map and noise covariance.

The estimated parameter vector per surface is xi = [theta, phi, Re beta,
Im beta].  Echoes are collected over t_c / L symbols per surface (time
division across the L surfaces), so every information matrix scales
linearly with the dwell time.

Conventions used throughout:

* ``psi`` is the length-N vector of complex reflection coefficients, with
  ``Psi = diag(psi)``.
* Sensing at the BS observes ``G^T Psi E Psi G s + noise`` with per-symbol
  noise covariance ``sigma_r^2 G^T Psi Psi^H G^* + sigma_b^2 I`` (the
  twice-reflected surface noise is kept, the thrice-reflected term is
  dropped as negligible).
* Sensing at the surfaces observes ``E_s Psi G s + E_s Psi z + noise`` with
  ``E_s = beta a_sensor a_reflect^T``; here the reflected amplifier noise
  carries target information, so the covariance also depends on xi.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .linalg import SingularFimError, inv4
from .scenario import ChannelSet, ScenarioConfig
from .steering import ArrayGeometry, Doa, SteeringBundle, steering_bundle, steering_upa


class SensingCase(enum.Enum):
    AT_BS = "bs"
    AT_IRS = "irs"


@dataclass(frozen=True)
class IrsSensingLink:
    """Everything the information matrices need about one surface."""

    g: np.ndarray
    reflect_geom: ArrayGeometry
    sensor_geom: ArrayGeometry
    doa: Doa
    beta: complex
    sigma_r2: float
    sigma_b2: float
    sigma_s2: float
    t_c: int
    n_irs: int

    @property
    def t_l(self) -> float:
        return self.t_c / self.n_irs


def links_from(config: ScenarioConfig, channels: ChannelSet) -> list[IrsSensingLink]:
    return [
        IrsSensingLink(
            g=channels.g[l],
            reflect_geom=config.reflect_geom,
            sensor_geom=config.sensor_geom,
            doa=Doa(channels.truth[l][0], channels.truth[l][1]),
            beta=channels.truth[l][2],
            sigma_r2=config.sigma_r2,
            sigma_b2=config.sigma_b2,
            sigma_s2=config.sigma_s2,
            t_c=config.t_c,
            n_irs=config.n_irs,
        )
        for l in range(config.n_irs)
    ]


def noise_cov_bs(psi: np.ndarray, g: np.ndarray, sigma_r2: float, sigma_b2: float) -> np.ndarray:
    """Per-symbol noise covariance at the BS receiver (M x M, Hermitian PSD).

    The amplifier noise reflected once off the surface adds
    sigma_r^2 G^T diag(|psi|^2) G^* on top of the receiver floor.
    """
    m = g.shape[1]
    gt = g.T * (np.abs(psi) ** 2)
    r = sigma_r2 * (gt @ g.conj()) + sigma_b2 * np.eye(m)
    return 0.5 * (r + r.conj().T)


def noise_cov_irs(
    theta_mat: np.ndarray, beta: complex, a_sensor: np.ndarray, sigma_r2: float, sigma_s2: float
) -> np.ndarray:
    """Per-symbol noise covariance at the surface sensors (rank-one plus floor).

    For the lifted reflection matrix only its trace enters:
    sigma_r^2 |beta|^2 tr(Theta) a_s a_s^H + sigma_s^2 I.
    """
    t = float(np.trace(theta_mat).real) if theta_mat.ndim == 2 else float(theta_mat)
    nbar = a_sensor.shape[0]
    r = sigma_r2 * abs(beta) ** 2 * t * np.outer(a_sensor, a_sensor.conj()) + sigma_s2 * np.eye(nbar)
    return 0.5 * (r + r.conj().T)


def _sandwich(g: np.ndarray, psi: np.ndarray, core: np.ndarray) -> np.ndarray:
    """G^T Psi core Psi G without forming the diagonal matrices."""
    return (g.T * psi) @ core @ (psi[:, None] * g)


def _quad(x: np.ndarray, rinv_y: np.ndarray, r_s: np.ndarray) -> complex:
    """tr(X^H Rw^-1 Y R_s) given the pre-applied Rw^-1 Y."""
    return complex(np.trace(x.conj().T @ rinv_y @ r_s))


def _assemble(f_tt, f_pp, f_tp, row_t, row_p, bb_block) -> np.ndarray:
    f = np.zeros((4, 4))
    f[0, 0] = f_tt
    f[1, 1] = f_pp
    f[0, 1] = f[1, 0] = f_tp
    f[0, 2:] = row_t
    f[2:, 0] = row_t
    f[1, 2:] = row_p
    f[2:, 1] = row_p
    f[2:, 2:] = bb_block
    return 0.5 * (f + f.T)


def _bs_parts(psi: np.ndarray, link: IrsSensingLink):
    """Echo-derivative matrices and inverse noise covariance, BS case."""
    bundle = steering_bundle(link.reflect_geom, link.doa)
    a, dat, dap = bundle.a, bundle.da_theta, bundle.da_phi
    c_t = _sandwich(link.g, psi, np.outer(dat, a) + np.outer(a, dat))
    c_p = _sandwich(link.g, psi, np.outer(dap, a) + np.outer(a, dap))
    h = _sandwich(link.g, psi, np.outer(a, a))
    rw = noise_cov_bs(psi, link.g, link.sigma_r2, link.sigma_b2)
    return c_t, c_p, h, np.linalg.inv(rw)


def _irs_parts(psi: np.ndarray, link: IrsSensingLink):
    """Echo-derivative matrices, inverse noise covariance and the constant
    covariance-information block for sensing at the surface."""
    rb = steering_bundle(link.reflect_geom, link.doa)
    sb = steering_bundle(link.sensor_geom, link.doa)
    a, dat, dap = rb.a, rb.da_theta, rb.da_phi
    ab, dbt, dbp = sb.a, sb.da_theta, sb.da_phi

    psig = psi[:, None] * link.g
    c_t = np.outer(dbt, a) @ psig + np.outer(ab, dat) @ psig
    c_p = np.outer(dbp, a) @ psig + np.outer(ab, dap) @ psig
    h = np.outer(ab, a) @ psig
    trace_theta = float(np.sum(np.abs(psi) ** 2))
    rw = noise_cov_irs(np.array(trace_theta), link.beta, ab, link.sigma_r2, link.sigma_s2)
    rinv = np.linalg.inv(rw)

    b_t = np.outer(dbt, ab.conj()) + np.outer(ab, dbt.conj())
    b_p = np.outer(dbp, ab.conj()) + np.outer(ab, dbp.conj())
    d = np.outer(ab, ab.conj())

    def cov_term(x, y):
        return float(np.trace(rinv @ x @ rinv @ y).real)

    t_l = link.t_l
    beta = link.beta
    b2 = abs(beta) ** 2
    sr4t2 = link.sigma_r2**2 * trace_theta**2
    bvec = np.array([beta.real, beta.imag])

    f_cov = np.zeros((4, 4))
    f_cov[0, 0] = t_l * sr4t2 * b2**2 * cov_term(b_t, b_t)
    f_cov[1, 1] = t_l * sr4t2 * b2**2 * cov_term(b_p, b_p)
    f_cov[0, 1] = f_cov[1, 0] = t_l * sr4t2 * b2**2 * cov_term(b_t, b_p)
    f_cov[0, 2:] = f_cov[2:, 0] = 2.0 * t_l * sr4t2 * b2 * cov_term(b_t, d) * bvec
    f_cov[1, 2:] = f_cov[2:, 1] = 2.0 * t_l * sr4t2 * b2 * cov_term(b_p, d) * bvec
    f_cov[2:, 2:] = 4.0 * t_l * sr4t2 * cov_term(d, d) * np.outer(bvec, bvec)
    return c_t, c_p, h, rinv, f_cov


def _mean_fim(r_s, c_t, c_p, h, rinv, beta, scale) -> np.ndarray:
    """Mean-term information: 2 t_l Re tr(dM_p^H Rw^-1 dM_q r_s) assembled."""
    b2 = abs(beta) ** 2
    rinv_ct, rinv_cp, rinv_h = rinv @ c_t, rinv @ c_p, rinv @ h
    f_tt = scale * b2 * _quad(c_t, rinv_ct, r_s).real
    f_pp = scale * b2 * _quad(c_p, rinv_cp, r_s).real
    f_tp = scale * b2 * _quad(c_t, rinv_cp, r_s).real
    q_tb = _quad(c_t, rinv_h, r_s)
    q_pb = _quad(c_p, rinv_h, r_s)
    bconj = np.conj(beta)
    row_t = scale * np.array([(bconj * q_tb).real, (1j * bconj * q_tb).real])
    row_p = scale * np.array([(bconj * q_pb).real, (1j * bconj * q_pb).real])
    f_bb = scale * _quad(h, rinv_h, r_s).real * np.eye(2)
    return _assemble(f_tt, f_pp, f_tp, row_t, row_p, f_bb)


def fim_bs(r_s: np.ndarray, psi: np.ndarray, link: IrsSensingLink) -> np.ndarray:
    """Closed-form 4x4 FIM for sensing at the BS.

    The noise covariance does not depend on xi here, so only the mean terms
    contribute.  Every entry is linear in r_s and in the dwell time.
    """
    c_t, c_p, h, rinv = _bs_parts(psi, link)
    return _mean_fim(r_s, c_t, c_p, h, rinv, link.beta, 2.0 * link.t_l)


def fim_irs(r_s: np.ndarray, psi: np.ndarray, link: IrsSensingLink) -> np.ndarray:
    """Closed-form 4x4 FIM for sensing at the surface's own sensors.

    On top of the mean terms, the reflected amplifier noise carries target
    information, adding covariance-derivative terms weighted by
    sigma_r^4 tr(Theta)^2.
    """
    c_t, c_p, h, rinv, f_cov = _irs_parts(psi, link)
    return f_cov + _mean_fim(r_s, c_t, c_p, h, rinv, link.beta, 2.0 * link.t_l)


def _herm(x: np.ndarray) -> np.ndarray:
    return 0.5 * (x + x.conj().T)


def fim_rs_affine(case: SensingCase, psi: np.ndarray, link: IrsSensingLink):
    """FIM as an affine map of the transmit covariance.

    Returns (f0, k) with F[p, q] = f0[p, q] + tr(k[(p, q)] @ r_s) and every
    k coefficient Hermitian, so the entries are real-linear in a Hermitian
    r_s; this is what the transmit-design SDP consumes.
    """
    if case is SensingCase.AT_BS:
        c_t, c_p, h, rinv = _bs_parts(psi, link)
        f0 = np.zeros((4, 4))
    else:
        c_t, c_p, h, rinv, f0 = _irs_parts(psi, link)
    s2 = 2.0 * link.t_l
    b2 = abs(link.beta) ** 2
    bconj = np.conj(link.beta)
    rinv_ct, rinv_cp, rinv_h = rinv @ c_t, rinv @ c_p, rinv @ h
    k = {
        (0, 0): s2 * b2 * _herm(c_t.conj().T @ rinv_ct),
        (1, 1): s2 * b2 * _herm(c_p.conj().T @ rinv_cp),
        (0, 1): s2 * b2 * _herm(c_t.conj().T @ rinv_cp),
        (0, 2): s2 * _herm(bconj * (c_t.conj().T @ rinv_h)),
        (0, 3): s2 * _herm(1j * bconj * (c_t.conj().T @ rinv_h)),
        (1, 2): s2 * _herm(bconj * (c_p.conj().T @ rinv_h)),
        (1, 3): s2 * _herm(1j * bconj * (c_p.conj().T @ rinv_h)),
        (2, 2): s2 * _herm(h.conj().T @ rinv_h),
        (3, 3): s2 * _herm(h.conj().T @ rinv_h),
        (2, 3): np.zeros((link.g.shape[1], link.g.shape[1]), dtype=complex),
    }
    return f0, k


def fim(case: SensingCase, r_s: np.ndarray, psi: np.ndarray, link: IrsSensingLink) -> np.ndarray:
    return (fim_bs if case is SensingCase.AT_BS else fim_irs)(r_s, psi, link)


def _mean_map(case: SensingCase, psi: np.ndarray, link: IrsSensingLink, xi: np.ndarray) -> np.ndarray:
    """Matrix mapping each transmit symbol to the noiseless echo, at parameters xi."""
    doa = Doa(xi[0], xi[1])
    beta = complex(xi[2], xi[3])
    a = steering_upa(link.reflect_geom, doa)
    if case is SensingCase.AT_BS:
        return _sandwich(link.g, psi, beta * np.outer(a, a))
    ab = steering_upa(link.sensor_geom, doa)
    return beta * np.outer(ab, a) @ (psi[:, None] * link.g)


def _noise_cov(case: SensingCase, psi: np.ndarray, link: IrsSensingLink, xi: np.ndarray) -> np.ndarray:
    if case is SensingCase.AT_BS:
        return noise_cov_bs(psi, link.g, link.sigma_r2, link.sigma_b2)
    beta = complex(xi[2], xi[3])
    ab = steering_upa(link.sensor_geom, Doa(xi[0], xi[1]))
    tr_theta = float(np.sum(np.abs(psi) ** 2))
    return noise_cov_irs(np.array(tr_theta), beta, ab, link.sigma_r2, link.sigma_s2)


def fim_numeric_oracle(
    case: SensingCase,
    r_s: np.ndarray,
    psi: np.ndarray,
    link: IrsSensingLink,
    step: float = 1e-5,
) -> np.ndarray:
    """Definitional Gaussian FIM via central differences.

    Differentiates the per-symbol mean map M(xi) and noise covariance R(xi)
    numerically and evaluates, per parameter pair,

        t_l * tr(R^-1 dR_p R^-1 dR_q) + 2 t_l Re tr(dM_p^H R^-1 dM_q R_s),

    which is the exact FIM of the stacked Gaussian observation once the
    symbol outer products are collapsed into the sample covariance r_s.
    This path shares no derivative algebra with the closed forms.
    """
    if not 1e-7 <= step <= 1e-4:
        raise ValueError("step must lie in [1e-7, 1e-4]")
    xi0 = np.array([link.doa.theta, link.doa.phi, link.beta.real, link.beta.imag])
    rw = _noise_cov(case, psi, link, xi0)
    rinv = np.linalg.inv(rw)

    dm = []
    dr = []
    for p in range(4):
        h = step * max(1.0, abs(xi0[p]))
        up, dn = xi0.copy(), xi0.copy()
        up[p] += h
        dn[p] -= h
        dm.append((_mean_map(case, psi, link, up) - _mean_map(case, psi, link, dn)) / (2 * h))
        dr.append((_noise_cov(case, psi, link, up) - _noise_cov(case, psi, link, dn)) / (2 * h))

    t_l = link.t_l
    f = np.zeros((4, 4))
    for p in range(4):
        for q in range(p, 4):
            cov = float(np.trace(rinv @ dr[p] @ rinv @ dr[q]).real)
            mean = float(np.trace(dm[p].conj().T @ rinv @ dm[q] @ r_s).real)
            f[p, q] = f[q, p] = t_l * cov + 2.0 * t_l * mean
    return f


def crb(f: np.ndarray) -> float:
    """Trace of the inverse FIM; raises :class:`SingularFimError` when the
    parameters are unobservable."""
    value = float(np.trace(inv4(f)))
    if value <= 0.0:
        raise SingularFimError("nonpositive bound: FIM is not positive definite")
    return value


def crb_for(case: SensingCase, r_s: np.ndarray, psi: np.ndarray, link: IrsSensingLink) -> float:
    return crb(fim(case, r_s, psi, link))

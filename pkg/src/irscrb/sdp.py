"""Builders translating the two beamforming subproblems into conic standard
form for :mod:`irscrb.conic`, plus the Hermitian-variable bookkeeping.

A Hermitian N x N variable H is hosted as the real symmetric 2N x 2N PSD
block [[Re H, -Im H], [Im H, Re H]].  Structure constraints are not added:
every data matrix touching such a block is itself an embedded Hermitian
form, which makes the relaxation exact, and extraction structure-averages
the solver block (``herm_from_embed``).  The factor-2 trace bookkeeping is
confined to :func:`herm_pair_coeff`.

Both builders scale the estimated-parameter axes by d = (1, 1, delta,
delta), with delta^2 ~ F_bb / F_angles at a reference point, purely as an
internal conditioning transform: the bound constraints are mapped back with
the matching d^-2 weights, so the optimized objective is the original sum
of inverse-information diagonal entries.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .conic import ConicProgram, ConicSolution, svec, svec_dim, smat
from .fim import IrsSensingLink, SensingCase, fim_rs_affine
from .linalg import herm_from_embed
from .steering import steering_bundle
from .surrogate import (
    SurrogateContext,
    as_theta,
    fim_affine,
    fim_linearized,
    power_bs_affine,
    power_irs_affine,
)

_UPPER_POS_CACHE: dict = {}


def _upper_pos(k: int, i: int, j: int) -> int:
    """Position of entry (i, j), i <= j, inside the row-major svec layout."""
    if k not in _UPPER_POS_CACHE:
        pos = {}
        idx = 0
        for r in range(k):
            for c in range(r, k):
                pos[(r, c)] = idx
                idx += 1
        _UPPER_POS_CACHE[k] = pos
    return _UPPER_POS_CACHE[k][(min(i, j), max(i, j))]


def sym_pick(k: int, i: int, j: int) -> np.ndarray:
    """svec coefficient row reading entry (i, j) of a symmetric k x k block."""
    v = np.zeros(svec_dim(k))
    v[_upper_pos(k, i, j)] = 1.0 if i == j else 1.0 / np.sqrt(2.0)
    return v


def herm_pair_coeff(m: np.ndarray) -> np.ndarray:
    """svec row v with v . svec(S) = sum_ij m_ij Theta_ij for S = embed(Theta).

    `m` must be Hermitian; the functional is then real on the embedded block
    and agrees with the structure-averaged extraction for any symmetric S.
    """
    x, y = m.real, m.imag
    # pair(m, Theta) = tr(conj(m) Theta) = tr(embed(conj(m)) S) / 2
    emb = np.block([[x, y], [-y, x]])
    return svec(0.5 * (emb + emb.T)) * 0.5


class ProgramBuilder:
    """Accumulates named cone blocks, equality rows and objective terms."""

    def __init__(self):
        self._blocks: list[tuple[str, str, int]] = []
        self._offsets: dict[str, slice] = {}
        self._dim = 0
        self._rows: list[tuple[dict, float]] = []
        self._obj: dict[str, np.ndarray] = {}

    def block(self, name: str, kind: str, size: int) -> str:
        dim = svec_dim(size) if kind == "psd" else size
        self._blocks.append((name, kind, size))
        self._offsets[name] = slice(self._dim, self._dim + dim)
        self._dim += dim
        return name

    def row(self, entries: dict, rhs: float):
        self._rows.append((entries, float(rhs)))

    def objective(self, name: str, coeff: np.ndarray):
        sl = self._offsets[name]
        acc = self._obj.setdefault(name, np.zeros(sl.stop - sl.start))
        acc += coeff

    def build(self) -> tuple[ConicProgram, dict]:
        n, m = self._dim, len(self._rows)
        a = np.zeros((m, n))
        b = np.zeros(m)
        for i, (entries, rhs) in enumerate(self._rows):
            for name, coeff in entries.items():
                a[i, self._offsets[name]] = coeff
            b[i] = rhs
        c = np.zeros(n)
        for name, coeff in self._obj.items():
            c[self._offsets[name]] = coeff
        cones = tuple((kind, size) for _, kind, size in self._blocks)
        return ConicProgram(c=c, a=a, b=b, cones=cones), dict(self._offsets)


def _embedded_psd(sol_x: np.ndarray, sl: slice, order: int) -> np.ndarray:
    return herm_from_embed(smat(sol_x[sl], order))


def _psd_clip(h: np.ndarray) -> np.ndarray:
    """Clamp the tiny negative eigenvalues a finite-tolerance solve leaves."""
    w, v = np.linalg.eigh(0.5 * (h + h.conj().T))
    return (v * np.clip(w, 0.0, None)) @ v.conj().T


def _condition_scale(f_ref: np.ndarray) -> tuple[float, float]:
    """(delta, gauge): axis rescale making the beta rows commensurate with
    the angle rows, and a scalar gauge bringing the rescaled matrix to O(1)."""
    angle = max(abs(f_ref[0, 0]), abs(f_ref[1, 1]))
    bb = max(abs(f_ref[2, 2]), abs(f_ref[3, 3]))
    delta = float(np.sqrt(bb / angle)) if angle > 0.0 and bb > 0.0 else 1.0
    d = np.array([1.0, 1.0, delta, delta])
    scaled = f_ref / np.outer(d, d)
    gauge = float(np.trace(np.abs(scaled)) / 4.0)
    return delta, (gauge if gauge > 0.0 else 1.0)


@dataclass(frozen=True)
class BuiltSdp:
    """A conic program plus the recipe for reading its solution back.

    The solver-side objective is `objective_scale` times smaller than the
    physical one (internal normalization); `extract` already undoes every
    internal transform for the variables it returns.
    """

    program: ConicProgram
    layout: dict
    extract: Callable[[ConicSolution], object]
    objective_scale: float = 1.0

    def objective_value(self, sol: ConicSolution) -> float:
        return sol.objective * self.objective_scale


def build_transmit_sdp(
    case: SensingCase,
    psis: list[np.ndarray],
    links: list[IrsSensingLink],
    p_t: float,
    p_s: float,
    r_s_ref: list[np.ndarray] | None = None,
    include_irs_power: bool = True,
) -> BuiltSdp:
    """Transmit-covariance design at fixed reflection coefficients.

    min kappa over Hermitian PSD covariances, with the worst-surface bound
    tr(F_l^-1) <= kappa imposed through the lifted blocks
    [[F_l, I], [I, U_l]] >= 0 and a weighted trace of U_l, plus the BS sum
    power and the per-surface radiated power (which is affine in the
    covariances once the reflection coefficients are fixed).

    `extract` returns the list of PSD-clipped covariance matrices.
    """
    n_irs = len(links)
    m_bs = links[0].g.shape[1]
    pb = ProgramBuilder()
    for l in range(n_irs):
        pb.block(f"rs{l}", "psd", 2 * m_bs)
        pb.block(f"lift{l}", "psd", 8)
    pb.block("kap", "nonneg", 1)
    pb.block("sl_bs", "nonneg", 1)
    for l in range(n_irs):
        if include_irs_power:
            pb.block(f"sl_irs{l}", "nonneg", 1)
        pb.block(f"sl_tr{l}", "nonneg", 1)

    affine = []
    crb_refs = []
    for l, (psi, link) in enumerate(zip(psis, links)):
        f0, k = fim_rs_affine(case, psi, link)
        ref = r_s_ref[l] if r_s_ref is not None else (p_t / m_bs) * np.eye(m_bs)
        f_ref = f0.copy()
        for (p, q), km in k.items():
            v = float(np.trace(km @ ref).real)
            f_ref[p, q] += v
            if p != q:
                f_ref[q, p] += v
        affine.append((f0, k, f_ref))
        try:
            crb_refs.append(abs(float(np.trace(np.linalg.inv(f_ref)))))
        except np.linalg.LinAlgError:
            pass
    # keep the bound variable near unity: the solver's homogenizing variable
    # tracks 1 / |x*|, so a 1e4-sized objective variable costs it accuracy
    obj_scale = max(crb_refs) if crb_refs else 1.0
    obj_scale = obj_scale if np.isfinite(obj_scale) and obj_scale > 0 else 1.0

    for l, (psi, link) in enumerate(zip(psis, links)):
        f0, k, f_ref = affine[l]
        delta, gauge = _condition_scale(f_ref)
        d = np.array([1.0, 1.0, delta, delta])

        for p in range(4):
            for q in range(p, 4):
                scale = 1.0 / (d[p] * d[q] * gauge)
                pb.row(
                    {f"lift{l}": sym_pick(8, p, q), f"rs{l}": -herm_rs_coeff(k[(p, q)]) * scale},
                    f0[p, q] * scale,
                )
        for p in range(4):
            for q in range(4):
                pb.row({f"lift{l}": sym_pick(8, p, 4 + q)}, 1.0 if p == q else 0.0)
        # the lift hosts F/gauge, so U covers gauge * F^-1: weigh its trace
        # back and express the bound in units of the reference bound
        trace_w = np.zeros(svec_dim(8))
        for i in range(4):
            trace_w += sym_pick(8, 4 + i, 4 + i) / (d[i] ** 2 * gauge * obj_scale)
        pb.row({f"lift{l}": trace_w, "kap": np.array([-1.0]), f"sl_tr{l}": np.array([1.0])}, 0.0)

        if include_irs_power:
            k_pow, const = _power_rs_affine(case, psi, link)
            pb.row({f"rs{l}": herm_rs_coeff(k_pow), f"sl_irs{l}": np.array([1.0])}, p_s - const)

    bs_row = {f"rs{l}": svec(np.eye(2 * m_bs)) / (2.0 * n_irs) for l in range(n_irs)}
    bs_row["sl_bs"] = np.array([1.0])
    pb.row(bs_row, p_t)
    pb.objective("kap", np.array([1.0]))

    prog, layout = pb.build()

    def extract(sol: ConicSolution) -> list[np.ndarray]:
        return [
            _psd_clip(_embedded_psd(sol.x, layout[f"rs{l}"], 2 * m_bs)) for l in range(n_irs)
        ]

    return BuiltSdp(program=prog, layout=layout, extract=extract, objective_scale=obj_scale)


def herm_rs_coeff(k: np.ndarray) -> np.ndarray:
    """svec row reading tr(k @ R) off an embedded Hermitian variable R."""
    # tr(k R) = pair(k^T, R); k Hermitian makes the value real
    return herm_pair_coeff(k.T)


def _power_rs_affine(case: SensingCase, psi: np.ndarray, link: IrsSensingLink):
    """Per-surface radiated power as (Hermitian coeff, constant) in r_s."""
    theta = as_theta(psi)
    g = link.g
    diag_theta = np.diag(theta).real
    k3 = g.conj().T @ (diag_theta[:, None] * g)
    if case is SensingCase.AT_IRS:
        return 0.5 * (k3 + k3.conj().T), link.sigma_r2 * float(np.trace(theta).real)
    a = steering_bundle(link.reflect_geom, link.doa).a
    w = np.abs(a) ** 2
    t_amp = float(np.sum(w * diag_theta))
    ag = a[:, None] * g
    k1 = ag.conj().T @ theta.T @ ag
    b2 = abs(link.beta) ** 2
    k_pow = b2 * t_amp * k1 + k3
    const = link.sigma_r2 * b2 * t_amp**2 + 2.0 * link.sigma_r2 * float(np.trace(theta).real)
    return 0.5 * (k_pow + k_pow.conj().T), const


def build_reflective_sdp(
    case: SensingCase,
    ctx: SurrogateContext,
    p_s: float,
    a_max: float,
    passive: bool = False,
) -> BuiltSdp:
    """One SCA iteration of the reflective design for a single surface.

    Minimizes the sum of the four lifted diagonal bounds kappa_i over the
    PSD-relaxed reflection matrix Theta, subject to the tangent affine FIM
    blocks [[F_hat, e_i], [e_i^T, kappa_i]] >= 0, the per-element amplitude
    cap on diag(Theta) (equality 1 in passive mode), and the per-surface
    power model linearized at the anchor (dropped in passive mode).

    `extract` returns (Theta, objective) with Theta PSD-clipped.
    """
    n = ctx.r1.shape[0]
    f0, coeff = fim_affine(ctx)
    f_ref = fim_linearized(ctx.anchor, ctx)
    delta, gauge = _condition_scale(f_ref)
    d = np.array([1.0, 1.0, delta, delta])

    pb = ProgramBuilder()
    pb.block("th", "psd", 2 * n)
    for i in range(4):
        pb.block(f"blk{i}", "psd", 5)
    if not passive:
        pb.block("sl_amp", "nonneg", n)
        pb.block("sl_pw", "nonneg", 1)

    for i in range(4):
        for p in range(4):
            for q in range(p, 4):
                scale = 1.0 / (d[p] * d[q] * gauge)
                pb.row(
                    {f"blk{i}": sym_pick(5, p, q), "th": -herm_pair_coeff(coeff[(p, q)]) * scale},
                    f0[p, q] * scale,
                )
            pb.row({f"blk{i}": sym_pick(5, p, 4)}, 1.0 if p == i else 0.0)
        # block i hosts F/gauge, so its corner bounds gauge * [F^-1]_ii
        pb.objective(f"blk{i}", sym_pick(5, 4, 4) / (d[i] ** 2 * gauge))

    for j in range(n):
        pick = 0.5 * (sym_pick(2 * n, j, j) + sym_pick(2 * n, n + j, n + j))
        if passive:
            pb.row({"th": pick}, 1.0)
        else:
            amp = np.zeros(n)
            amp[j] = 1.0
            pb.row({"th": pick, "sl_amp": amp}, a_max**2)

    if not passive:
        if case is SensingCase.AT_BS:
            const, m_pow = power_bs_affine(ctx)
        else:
            const, m_pow = power_irs_affine(ctx.r_s, ctx.link.g, ctx.link.sigma_r2, n)
        pb.row({"th": herm_pair_coeff(m_pow), "sl_pw": np.array([1.0])}, p_s - const)

    prog, layout = pb.build()

    def extract(sol: ConicSolution) -> tuple[np.ndarray, float]:
        theta = _psd_clip(_embedded_psd(sol.x, layout["th"], 2 * n))
        return theta, sol.objective

    return BuiltSdp(program=prog, layout=layout, extract=extract)

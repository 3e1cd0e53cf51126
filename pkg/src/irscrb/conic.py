"""Small dense conic-program solver.

Standard form handled here:

    minimize    c . x
    subject to  A x = b,   x in K,

with K an ordered product of Free(n), NonNeg(n) and Psd(k) blocks.  Psd
blocks are stored in scaled-vector form (svec): the upper triangle row by
row with off-diagonal entries multiplied by sqrt(2), so that inner products
of svec vectors equal matrix trace inner products.

The algorithm is primal-dual path following on the homogeneous self-dual
embedding, with Nesterov-Todd scaling and a Mehrotra predictor-corrector
step.  All linear algebra is dense; intended problem sizes are a few
hundred variables and equalities, for which one factorized Schur system per
iteration is cheap.

Free variables carry no complementarity; they ride along in the bordered
Schur solve next to the equality multipliers.  Infeasibility and
unboundedness are reported through the standard self-dual certificates
(b.y > 0 with A^T y + s ~ 0, resp. c.x < 0 with A x ~ 0).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

_SQRT2 = np.sqrt(2.0)


class Status(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    MAX_ITER = "max_iter"
    NUMERICAL_FAILURE = "numerical_failure"


def svec_dim(k: int) -> int:
    return k * (k + 1) // 2


_SVEC_IDX: dict = {}


def _svec_idx(k: int):
    """Cached (row, col, weight) index arrays of the row-major upper triangle."""
    if k not in _SVEC_IDX:
        iu = np.triu_indices(k)
        w = np.full(len(iu[0]), _SQRT2)
        w[iu[0] == iu[1]] = 1.0
        _SVEC_IDX[k] = (iu[0], iu[1], w)
    return _SVEC_IDX[k]


def svec(s: np.ndarray) -> np.ndarray:
    """Scaled upper-triangle vectorization; svec(A) . svec(B) = tr(AB)."""
    r, c, w = _svec_idx(s.shape[0])
    return np.asarray(s, dtype=float)[r, c] * w


def smat(v: np.ndarray, k: int) -> np.ndarray:
    """Inverse of :func:`svec`."""
    r, c, w = _svec_idx(k)
    s = np.zeros((k, k))
    s[r, c] = np.asarray(v, dtype=float) / w
    s = s + s.T
    s[np.arange(k), np.arange(k)] *= 0.5
    return s


def _smat_batch(v: np.ndarray, k: int) -> np.ndarray:
    """Rows of `v` unpacked into a stack of symmetric matrices."""
    r, c, w = _svec_idx(k)
    s = np.zeros((v.shape[0], k, k))
    s[:, r, c] = v / w
    s = s + np.swapaxes(s, 1, 2)
    s[:, np.arange(k), np.arange(k)] *= 0.5
    return s


def _svec_batch(s: np.ndarray) -> np.ndarray:
    """Stack of symmetric matrices packed into svec rows."""
    r, c, w = _svec_idx(s.shape[1])
    return s[:, r, c] * w


@dataclass(frozen=True)
class ConeBlock:
    kind: str  # "free" | "nonneg" | "psd"
    size: int  # vector length, or matrix order for psd
    offset: int

    @property
    def dim(self) -> int:
        return svec_dim(self.size) if self.kind == "psd" else self.size

    @property
    def sl(self) -> slice:
        return slice(self.offset, self.offset + self.dim)


@dataclass(frozen=True)
class ConicProgram:
    """min c.x s.t. A x = b, x in the ordered cone product `cones`."""

    c: np.ndarray
    a: np.ndarray
    b: np.ndarray
    cones: tuple

    def __post_init__(self):
        object.__setattr__(self, "c", np.asarray(self.c, dtype=float))
        object.__setattr__(self, "a", np.atleast_2d(np.asarray(self.a, dtype=float)))
        object.__setattr__(self, "b", np.asarray(self.b, dtype=float))
        n = self.dim
        if self.c.shape != (n,):
            raise ValueError(f"c has shape {self.c.shape}, cones cover {n} variables")
        if self.a.shape[1] != n or self.a.shape[0] != self.b.shape[0]:
            raise ValueError(f"A is {self.a.shape}, expected ({len(self.b)}, {n})")

    @property
    def blocks(self) -> list[ConeBlock]:
        out = []
        off = 0
        for kind, size in self.cones:
            if kind not in ("free", "nonneg", "psd") or size < 1:
                raise ValueError(f"bad cone ({kind}, {size})")
            blk = ConeBlock(kind, size, off)
            out.append(blk)
            off += blk.dim
        return out

    @property
    def dim(self) -> int:
        return sum(b.dim for b in self.blocks)


@dataclass
class ConicSolution:
    """Result of :func:`solve`.

    On OPTIMAL, (x, y, s) is the de-homogenized primal-dual pair and the
    residual fields certify the tolerance.  On INFEASIBLE / UNBOUNDED the
    raw self-dual ray is returned instead and `objective` is NaN.
    """

    status: Status
    x: np.ndarray
    y: np.ndarray
    s: np.ndarray
    objective: float
    primal_res: float
    dual_res: float
    gap: float
    iterations: int

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL


def dump_program(prog: ConicProgram) -> str:
    """Plain-text dump for cross-checking against external solvers.

    Sections: CONES (kind and size per line), C and B (one full-precision
    value per line), then A as zero-indexed `row col value` triplets.
    """
    lines = ["IRSCRB-CONIC 1", f"VARS {prog.dim} ROWS {len(prog.b)}", "CONES"]
    lines.extend(f"{kind} {size}" for kind, size in prog.cones)
    lines.append("C")
    lines.extend(repr(float(v)) for v in prog.c)
    lines.append("B")
    lines.extend(repr(float(v)) for v in prog.b)
    lines.append("A")
    rows, cols = np.nonzero(prog.a)
    lines.extend(f"{i} {j} {prog.a[i, j]!r}" for i, j in zip(rows, cols))
    return "\n".join(lines) + "\n"


class _NTScaling:
    """Nesterov-Todd scaling state for the non-free blocks of one iterate."""

    def __init__(self, cone_blocks, x, s):
        self.nonneg = {}
        self.psd = {}
        for blk in cone_blocks:
            if blk.kind == "nonneg":
                xv, sv = x[blk.sl], s[blk.sl]
                self.nonneg[blk.offset] = (np.sqrt(sv / xv), np.sqrt(xv * sv))
            else:
                xm = smat(x[blk.sl], blk.size)
                sm = smat(s[blk.sl], blk.size)
                lx = np.linalg.cholesky(xm)
                ls = np.linalg.cholesky(sm)
                u, sig, vt = np.linalg.svd(ls.T @ lx)
                r = lx @ vt.T / np.sqrt(sig)
                rinv = (u / np.sqrt(sig)).T @ ls.T
                self.psd[blk.offset] = (r, rinv, r @ r.T, sig)

    def ghat(self, blk, v):
        """Apply G^-2 (primal NT metric): nonneg x/s weight, psd W . W."""
        if blk.kind == "nonneg":
            g, _ = self.nonneg[blk.offset]
            return v / g**2
        _, _, w, _ = self.psd[blk.offset]
        return svec(w @ smat(v, blk.size) @ w)

    def ghat_batch(self, blk, vm):
        """Apply G^-2 to every row of `vm` at once."""
        if blk.kind == "nonneg":
            g, _ = self.nonneg[blk.offset]
            return vm / g**2
        _, _, w, _ = self.psd[blk.offset]
        stack = _smat_batch(vm, blk.size)
        return _svec_batch(np.matmul(w, np.matmul(stack, w)))

    def g_of_scaled(self, blk, u):
        """Map a scaled-space correction u back to the dual side (G u)."""
        if blk.kind == "nonneg":
            g, _ = self.nonneg[blk.offset]
            return g * u
        _, rinv, _, _ = self.psd[blk.offset]
        return svec(rinv.T @ u @ rinv)

    def solve_lambda(self, blk, rhs):
        """Invert the Jordan product against the scaled point lambda."""
        if blk.kind == "nonneg":
            _, lam = self.nonneg[blk.offset]
            return rhs / lam
        sig = self.psd[blk.offset][3]
        return 2.0 * rhs / np.add.outer(sig, sig)

    def neg_lam_sq(self, blk):
        if blk.kind == "nonneg":
            return -self.nonneg[blk.offset][1] ** 2
        return -np.diag(self.psd[blk.offset][3] ** 2)

    def mehrotra_rhs(self, blk, mu_target, dx_a, ds_a):
        """sigma mu e - lambda^2 - (G dx_a) o (G^-T ds_a), in scaled space."""
        if blk.kind == "nonneg":
            g, lam = self.nonneg[blk.offset]
            return mu_target - lam**2 - (g * dx_a) * (ds_a / g)
        r, rinv, _, sig = self.psd[blk.offset]
        hx = rinv @ smat(dx_a, blk.size) @ rinv.T
        hs = r.T @ smat(ds_a, blk.size) @ r
        return mu_target * np.eye(blk.size) - np.diag(sig**2) - 0.5 * (hx @ hs + hs @ hx)


def _max_step(cone_blocks, v, dv) -> float:
    """Largest alpha keeping v + alpha dv inside the cone."""
    alpha = np.inf
    for blk in cone_blocks:
        if blk.kind == "nonneg":
            d = dv[blk.sl]
            neg = d < 0
            if np.any(neg):
                alpha = min(alpha, float(np.min(-v[blk.sl][neg] / d[neg])))
        else:
            vm = smat(v[blk.sl], blk.size)
            dm = smat(dv[blk.sl], blk.size)
            try:
                lv = np.linalg.cholesky(vm)
            except np.linalg.LinAlgError:
                return 0.0
            h = np.linalg.solve(lv, np.linalg.solve(lv, dm).T)
            wmin = float(np.linalg.eigvalsh(0.5 * (h + h.T))[0])
            if wmin < 0:
                alpha = min(alpha, -1.0 / wmin)
    return alpha


def solve(
    prog: ConicProgram, tol: float = 1e-7, max_iter: int = 100, verbose: bool = False
) -> ConicSolution:
    """Solve the conic program to relative tolerance `tol`.

    Deterministic: no randomness anywhere, so identical inputs give
    identical iterates and output.  `verbose` prints one diagnostic line per
    iteration.
    """
    blocks = prog.blocks
    cone_blocks = [b for b in blocks if b.kind != "free"]
    free_parts = [np.arange(b.offset, b.offset + b.dim) for b in blocks if b.kind == "free"]
    free_idx = np.concatenate(free_parts) if free_parts else np.array([], dtype=int)
    cone_parts = [np.arange(b.offset, b.offset + b.dim) for b in cone_blocks]
    cone_idx = np.concatenate(cone_parts) if cone_parts else np.array([], dtype=int)
    nu = sum(b.size for b in cone_blocks)
    m, n = prog.a.shape
    nf = len(free_idx)

    # row equilibration and scalar normalization of b, c
    row_scale = np.maximum(np.max(np.abs(prog.a), axis=1, initial=0.0), np.abs(prog.b))
    row_scale[row_scale < 1e-12] = 1.0
    a = prog.a / row_scale[:, None]
    b = prog.b / row_scale
    rho_b = max(1.0, float(np.max(np.abs(b)))) if m else 1.0
    rho_c = max(1.0, float(np.max(np.abs(prog.c))))
    b = b / rho_b
    c = prog.c / rho_c

    x = np.zeros(n)
    s = np.zeros(n)
    for blk in cone_blocks:
        unit = 1.0 if blk.kind == "nonneg" else svec(np.eye(blk.size))
        x[blk.sl] = unit
        s[blk.sl] = unit
    y = np.zeros(m)
    tau, kappa = 1.0, 1.0
    best = {"metric": np.inf, "point": None}

    def make_solution(status: Status, iters: int) -> ConicSolution:
        nonlocal x, y, s, tau, kappa
        if status in (Status.MAX_ITER, Status.NUMERICAL_FAILURE) and best["point"] is not None:
            x, y, s, tau, kappa = best["point"]
        if status in (Status.OPTIMAL, Status.MAX_ITER, Status.NUMERICAL_FAILURE):
            xs = x / tau * rho_b
            ys = y / tau * rho_c / row_scale
            ss = s / tau * rho_c
            obj = float(prog.c @ xs)
            pres = float(np.linalg.norm(prog.a @ xs - prog.b)) / (1 + float(np.linalg.norm(prog.b)))
            dres = float(np.linalg.norm(prog.a.T @ ys + ss - prog.c)) / (
                1 + float(np.linalg.norm(prog.c))
            )
            dobj = float(prog.b @ ys)
            gap = abs(obj - dobj) / (1 + abs(obj) + abs(dobj))
            return ConicSolution(status, xs, ys, ss, obj, pres, dres, gap, iters)
        # infeasibility / unboundedness: return the raw self-dual ray
        rp = a @ x - b * tau
        rd = -a.T @ y - s + c * tau
        return ConicSolution(
            status, x.copy(), y / row_scale, s.copy(), float("nan"),
            float(np.linalg.norm(rp)), float(np.linalg.norm(rd)), float("nan"), iters,
        )

    norm_b0 = 1 + float(np.linalg.norm(prog.b))
    norm_c0 = 1 + float(np.linalg.norm(prog.c))

    for it in range(1, max_iter + 1):
        rp = a @ x - b * tau
        rd = -a.T @ y - s + c * tau
        rg = float(b @ y - c @ x) - kappa
        mu = (float(x[cone_idx] @ s[cone_idx]) + tau * kappa) / (nu + 1)

        # convergence is judged on the original (unscaled) data, the same
        # quantities reported in the solution
        xs = x / tau * rho_b
        ys = y / tau * rho_c / row_scale
        ss = s / tau * rho_c
        pres = float(np.linalg.norm(prog.a @ xs - prog.b)) / norm_b0
        dres = float(np.linalg.norm(prog.a.T @ ys + ss - prog.c)) / norm_c0
        pobj, dobj = float(prog.c @ xs), float(prog.b @ ys)
        gap = abs(pobj - dobj) / (1 + abs(pobj) + abs(dobj))
        metric = max(pres, dres, gap)
        if metric < best["metric"]:
            best["metric"] = metric
            best["point"] = (x.copy(), y.copy(), s.copy(), tau, kappa)
            best["iter"] = it
        elif it - best.get("iter", 0) > 8:
            # no progress for a while: numerically stuck short of tol
            return make_solution(Status.MAX_ITER, it - 1)
        if verbose:
            print(
                f"iter {it - 1:3d}  pres {pres:9.2e}  dres {dres:9.2e}  gap {gap:9.2e}"
                f"  mu {mu:9.2e}  tau {tau:9.2e}  kappa {kappa:9.2e}"
            )
        if pres <= tol and dres <= tol and gap <= tol:
            return make_solution(Status.OPTIMAL, it - 1)
        by, cx = float(b @ y), float(c @ x)
        if by > tol and float(np.linalg.norm(a.T @ y + s)) <= tol * by:
            return make_solution(Status.INFEASIBLE, it - 1)
        if cx < -tol and float(np.linalg.norm(a @ x)) <= tol * (-cx):
            return make_solution(Status.UNBOUNDED, it - 1)

        try:
            nt = _NTScaling(cone_blocks, x, s)
        except np.linalg.LinAlgError:
            return make_solution(Status.NUMERICAL_FAILURE, it - 1)

        # bordered Schur system over (y, x_free, tau)
        ghat_c = np.zeros(n)
        ghat_at = np.zeros((n, m))
        for blk in cone_blocks:
            ghat_c[blk.sl] = nt.ghat(blk, c[blk.sl])
            ghat_at[blk.sl, :] = nt.ghat_batch(blk, a[:, blk.sl]).T
        k_schur = a[:, cone_idx] @ ghat_at[cone_idx, :] if len(cone_idx) else np.zeros((m, m))
        a_gc = a[:, cone_idx] @ ghat_c[cone_idx] if len(cone_idx) else np.zeros(m)
        c_gc = float(c[cone_idx] @ ghat_c[cone_idx]) if len(cone_idx) else 0.0

        big = np.zeros((m + nf + 1, m + nf + 1))
        big[:m, :m] = k_schur
        big[:m, m : m + nf] = a[:, free_idx]
        big[:m, -1] = -(b + a_gc)
        big[m : m + nf, :m] = -a[:, free_idx].T
        big[m : m + nf, -1] = c[free_idx]
        big[-1, :m] = b - a_gc
        big[-1, m : m + nf] = -c[free_idx]
        big[-1, -1] = c_gc + kappa / tau
        try:
            big_inv = np.linalg.inv(big)
        except np.linalg.LinAlgError:
            big[np.diag_indices_from(big)] += 1e-11
            try:
                big_inv = np.linalg.inv(big)
            except np.linalg.LinAlgError:
                return make_solution(Status.NUMERICAL_FAILURE, it - 1)

        def raw_solve(d_p, d_d, d_g, d_tk, comp):
            scaled_u = {}
            gu = np.zeros(n)
            for blk in cone_blocks:
                u = nt.solve_lambda(blk, comp[blk.offset])
                scaled_u[blk.offset] = u
                gu[blk.sl] = nt.g_of_scaled(blk, u)
            w = np.zeros(n)
            for blk in cone_blocks:
                w[blk.sl] = nt.ghat(blk, d_d[blk.sl] + gu[blk.sl])
            rhs = np.concatenate(
                [
                    d_p - (a[:, cone_idx] @ w[cone_idx] if len(cone_idx) else 0.0),
                    d_d[free_idx],
                    [d_g + (float(c[cone_idx] @ w[cone_idx]) if len(cone_idx) else 0.0) + d_tk / tau],
                ]
            )
            sol = big_inv @ rhs
            dy = sol[:m]
            dtau = float(sol[-1])
            dx = np.zeros(n)
            dx[free_idx] = sol[m : m + nf]
            aty = a.T @ dy
            for blk in cone_blocks:
                dx[blk.sl] = nt.ghat(blk, aty[blk.sl]) - ghat_c[blk.sl] * dtau + w[blk.sl]
            # ds from the linearized complementarity rather than the dual
            # equation: the pair (dx, ds) then stays centrality-consistent
            # even when the Schur solve carries error, which keeps the step
            # to the cone boundary from collapsing
            ds = np.zeros(n)
            for blk in cone_blocks:
                if blk.kind == "nonneg":
                    g, _ = nt.nonneg[blk.offset]
                    ds[blk.sl] = g * scaled_u[blk.offset] - g**2 * dx[blk.sl]
                else:
                    _, rinv, _, _ = nt.psd[blk.offset]
                    hx = rinv @ smat(dx[blk.sl], blk.size) @ rinv.T
                    hs = scaled_u[blk.offset] - 0.5 * (hx + hx.T)
                    ds[blk.sl] = svec(rinv.T @ hs @ rinv)
            dkappa = (d_tk - kappa * dtau) / tau
            return dx, dy, ds, dtau, dkappa

        def newton_residual(d, d_p, d_d, d_g, d_tk, comp):
            """Residuals of the full Newton system at direction d."""
            dx, dy, ds, dtau, dkappa = d
            e_p = d_p - (a @ dx - b * dtau)
            e_d = d_d - (-a.T @ dy - ds + c * dtau)
            e_g = d_g - (float(b @ dy - c @ dx) - dkappa)
            e_tk = d_tk - (kappa * dtau + tau * dkappa)
            e_comp = {}
            for blk in cone_blocks:
                if blk.kind == "nonneg":
                    g, lam = nt.nonneg[blk.offset]
                    e_comp[blk.offset] = comp[blk.offset] - lam * (
                        g * dx[blk.sl] + ds[blk.sl] / g
                    )
                else:
                    r, rinv, _, sig = nt.psd[blk.offset]
                    hx = rinv @ smat(dx[blk.sl], blk.size) @ rinv.T
                    hs = r.T @ smat(ds[blk.sl], blk.size) @ r
                    hsum = 0.5 * (hx + hx.T + hs + hs.T)
                    lam_op = 0.5 * (np.diag(sig) @ hsum + hsum @ np.diag(sig))
                    e_comp[blk.offset] = comp[blk.offset] - lam_op
            return e_p, e_d, e_g, e_tk, e_comp

        def _err_size(e):
            return max(
                float(np.max(np.abs(e[0]), initial=0.0)),
                float(np.max(np.abs(e[1]), initial=0.0)),
                abs(e[2]),
                abs(e[3]),
                max((float(np.max(np.abs(v))) for v in e[4].values()), default=0.0),
            )

        def kkt(d_p, d_d, d_g, d_tk, comp):
            # full-system iterative refinement: near convergence the Schur
            # factorization alone cannot deliver directions accurate in the
            # residual equations, so correct against the unreduced system
            d = raw_solve(d_p, d_d, d_g, d_tk, comp)
            err_prev = np.inf
            for _ in range(4):
                e = newton_residual(d, d_p, d_d, d_g, d_tk, comp)
                err = _err_size(e)
                if not np.isfinite(err) or err >= 0.5 * err_prev:
                    break
                err_prev = err
                corr = raw_solve(*e)
                d = tuple(u + v for u, v in zip(d[:3], corr[:3])) + (
                    d[3] + corr[3],
                    d[4] + corr[4],
                )
            return d

        # predictor (affine scaling direction)
        comp = {blk.offset: nt.neg_lam_sq(blk) for blk in cone_blocks}
        dxa, dya, dsa, dtaua, dkappaa = kkt(-rp, -rd, -rg, -tau * kappa, comp)
        alpha_a = min(
            1.0,
            _max_step(cone_blocks, x, dxa),
            _max_step(cone_blocks, s, dsa),
            -tau / dtaua if dtaua < 0 else np.inf,
            -kappa / dkappaa if dkappaa < 0 else np.inf,
        )
        mu_a = (
            float((x + alpha_a * dxa)[cone_idx] @ (s + alpha_a * dsa)[cone_idx])
            + (tau + alpha_a * dtaua) * (kappa + alpha_a * dkappaa)
        ) / (nu + 1)
        sigma = min(1.0, max(0.0, mu_a / mu)) ** 3

        # corrector (combined direction)
        comp = {
            blk.offset: nt.mehrotra_rhs(blk, sigma * mu, dxa[blk.sl], dsa[blk.sl])
            for blk in cone_blocks
        }
        eta = 1.0 - sigma
        dx, dy, ds, dtau, dkappa = kkt(
            -eta * rp, -eta * rd, -eta * rg, sigma * mu - tau * kappa - dtaua * dkappaa, comp
        )
        alpha = min(
            _max_step(cone_blocks, x, dx),
            _max_step(cone_blocks, s, ds),
            -tau / dtau if dtau < 0 else np.inf,
            -kappa / dkappa if dkappa < 0 else np.inf,
        )
        alpha = min(1.0, 0.99 * alpha)
        if not np.isfinite(alpha) or alpha <= 1e-13:
            # combined step collapsed; retry with a pure centering direction
            comp = {
                blk.offset: nt.neg_lam_sq(blk)
                + (mu * np.eye(blk.size) if blk.kind == "psd" else mu)
                for blk in cone_blocks
            }
            dx, dy, ds, dtau, dkappa = kkt(
                np.zeros(m), np.zeros(n), 0.0, mu - tau * kappa, comp
            )
            alpha = min(
                _max_step(cone_blocks, x, dx),
                _max_step(cone_blocks, s, ds),
                -tau / dtau if dtau < 0 else np.inf,
                -kappa / dkappa if dkappa < 0 else np.inf,
            )
            alpha = min(1.0, 0.99 * alpha)
            if not np.isfinite(alpha) or alpha <= 1e-13:
                return make_solution(Status.NUMERICAL_FAILURE, it)

        x += alpha * dx
        y += alpha * dy
        s += alpha * ds
        tau += alpha * dtau
        kappa += alpha * dkappa

    return make_solution(Status.MAX_ITER, max_iter)

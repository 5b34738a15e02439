"""Dense primal-dual interior-point solver for linear semidefinite programs.

Standard form handled here:

    minimize    sum_j <C_j, X_j> + c_n' w + c_f' u
    subject to  sum_j <A_ij, X_j> + g_i' w + f_i' u  (= | >=)  b_i,  i = 1..m
                X_j PSD blocks,  w >= 0 scalars,  u free scalars.

GEQ rows receive internal nonnegative slacks so the core only ever sees
equalities over cone variables. The search direction is the HKM direction
with a Mehrotra predictor-corrector step; the Schur complement is formed
densely and factored by Cholesky with a diagonal-perturbation fallback.
Everything is deterministic: identical input produces an identical iterate
sequence.

Statuses: OPTIMAL / INFEASIBLE / UNBOUNDED / MAX_ITER. Infeasibility is
reported together with a Farkas-type certificate: a unit-norm dual ray
``y`` with ``A*(y)`` inside the dual cone (up to tolerance) and
``pairing = -b'y <= -1e-6``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
MAX_ITER = "max_iter"

EQ = "eq"
GEQ = "geq"

_BIG_STEP = 1e16


@dataclass
class SdpRow:
    """One linear row: coefficients per PSD block / nonneg var / free var."""

    blocks: dict[int, np.ndarray] = field(default_factory=dict)
    nonneg: dict[int, float] = field(default_factory=dict)
    free: dict[int, float] = field(default_factory=dict)
    rhs: float = 0.0
    sense: str = EQ


@dataclass
class SdpInstance:
    """Multi-block linear SDP in the standard form documented above."""

    block_dims: list[int]
    n_free: int = 0
    n_nonneg: int = 0
    obj_blocks: list[np.ndarray] | None = None
    obj_nonneg: np.ndarray | None = None
    obj_free: np.ndarray | None = None
    rows: list[SdpRow] = field(default_factory=list)
    name: str = ""

    def validate(self):
        if not self.block_dims and self.n_nonneg == 0 and self.n_free == 0:
            raise ValueError("instance has no variables")
        for d in self.block_dims:
            if d < 1:
                raise ValueError(f"block dimension must be >= 1, got {d}")
        if self.obj_blocks is not None:
            if len(self.obj_blocks) != len(self.block_dims):
                raise ValueError("objective block count mismatch")
            for j, (c, d) in enumerate(zip(self.obj_blocks, self.block_dims)):
                if c.shape != (d, d):
                    raise ValueError(f"objective block {j} has shape {c.shape}, expected ({d},{d})")
        for i, row in enumerate(self.rows):
            if row.sense not in (EQ, GEQ):
                raise ValueError(f"row {i} has unknown sense {row.sense!r}")
            for j, coef in row.blocks.items():
                if j < 0 or j >= len(self.block_dims):
                    raise ValueError(f"row {i} references unknown block {j}")
                d = self.block_dims[j]
                if coef.shape != (d, d):
                    raise ValueError(f"row {i} block {j} coefficient has shape {coef.shape}")
            for k in row.nonneg:
                if k < 0 or k >= self.n_nonneg:
                    raise ValueError(f"row {i} references unknown nonneg var {k}")
            for k in row.free:
                if k < 0 or k >= self.n_free:
                    raise ValueError(f"row {i} references unknown free var {k}")

    def dump(self) -> str:
        """Reproduction dump: one line per row with sparse coefficient triplets.

        Format (documented in the README): a header line
        ``SDPDUMP blocks=<d1,...> nonneg=<L> free=<F>``, one ``OBJ`` line, then
        per row ``ROW <EQ|GEQ> <rhs> <triplets...>`` where a triplet is
        ``b<j>:<r>,<c>=<v>`` (upper triangle of block j), ``n<k>=<v>`` or
        ``f<k>=<v>``. Floats use repr-exact %.17g.
        """
        def _triplets(blocks, nonneg, free):
            toks = []
            for j in sorted(blocks):
                coef = blocks[j]
                d = coef.shape[0]
                for r in range(d):
                    for c in range(r, d):
                        v = coef[r, c]
                        if v != 0.0:
                            toks.append(f"b{j}:{r},{c}={v:.17g}")
            for k in sorted(nonneg):
                if nonneg[k] != 0.0:
                    toks.append(f"n{k}={nonneg[k]:.17g}")
            for k in sorted(free):
                if free[k] != 0.0:
                    toks.append(f"f{k}={free[k]:.17g}")
            return toks

        dims = ",".join(str(d) for d in self.block_dims)
        lines = [f"SDPDUMP blocks={dims} nonneg={self.n_nonneg} free={self.n_free}"]
        obj_blocks = {j: c for j, c in enumerate(self.obj_blocks or []) if np.any(c)}
        obj_nn = {k: v for k, v in enumerate(self.obj_nonneg if self.obj_nonneg is not None else []) if v != 0.0}
        obj_f = {k: v for k, v in enumerate(self.obj_free if self.obj_free is not None else []) if v != 0.0}
        lines.append("OBJ " + " ".join(_triplets(obj_blocks, obj_nn, obj_f)))
        for row in self.rows:
            toks = _triplets(row.blocks, row.nonneg, row.free)
            lines.append(f"ROW {row.sense.upper()} {row.rhs:.17g} " + " ".join(toks))
        return "\n".join(lines) + "\n"


@dataclass
class SdpSolution:
    status: str
    blocks: list[np.ndarray]
    nonneg: np.ndarray
    free: np.ndarray
    dual: np.ndarray
    kkt: tuple[float, float, float]  # (|primal residual|, normalized dual residual, relative gap)
    pobj: float
    dobj: float
    iterations: int
    certificate: dict | None = None


@dataclass
class SolveOptions:
    max_iters: int = 200
    feas_tol: float = 1e-9
    gap_tol: float = 1e-9
    contract_feas: float = 1e-8
    contract_gap: float = 1e-8
    step_frac: float = 0.98
    trace: bool = False


class _Compiled:
    """Instance flattened to dense tensors for the interior-point core."""

    def __init__(self, inst: SdpInstance):
        inst.validate()
        self.dims = list(inst.block_dims)
        self.nblk = len(self.dims)
        self.m = len(inst.rows)
        geq_rows = [i for i, r in enumerate(inst.rows) if r.sense == GEQ]
        self.n_user_nonneg = inst.n_nonneg
        self.L = inst.n_nonneg + len(geq_rows)
        self.F = inst.n_free

        self.A = [np.zeros((self.m, d, d)) for d in self.dims]
        self.G = np.zeros((self.m, self.L)) if self.L else np.zeros((self.m, 0))
        self.Fm = np.zeros((self.m, self.F)) if self.F else np.zeros((self.m, 0))
        self.b = np.zeros(self.m)
        slack_of = {i: inst.n_nonneg + k for k, i in enumerate(geq_rows)}
        for i, row in enumerate(inst.rows):
            self.b[i] = row.rhs
            for j, coef in row.blocks.items():
                self.A[j][i] = 0.5 * (coef + coef.T)
            for k, v in row.nonneg.items():
                self.G[i, k] = v
            for k, v in row.free.items():
                self.Fm[i, k] = v
            if row.sense == GEQ:
                self.G[i, slack_of[i]] = -1.0

        self.C = [np.zeros((d, d)) for d in self.dims]
        if inst.obj_blocks is not None:
            for j, c in enumerate(inst.obj_blocks):
                self.C[j] = 0.5 * (c + c.T)
        self.c_lp = np.zeros(self.L)
        if inst.obj_nonneg is not None:
            self.c_lp[:inst.n_nonneg] = inst.obj_nonneg
        self.c_f = np.zeros(self.F)
        if inst.obj_free is not None:
            self.c_f[:] = inst.obj_free

        self.Aflat = [a.reshape(self.m, -1) for a in self.A]
        self.cone_dim = sum(self.dims) + self.L
        if self.cone_dim == 0:
            raise ValueError("interior-point core needs at least one PSD block, "
                             "nonneg variable or GEQ row")
        self.row_scale = 1.0
        if self.m:
            norms = np.zeros(self.m)
            for j in range(self.nblk):
                norms += np.sum(self.A[j] ** 2, axis=(1, 2))
            norms += np.sum(self.G ** 2, axis=1) + np.sum(self.Fm ** 2, axis=1)
            self.row_scale = max(1.0, float(np.sqrt(np.max(norms))))
        self.obj_scale = max(
            [1.0]
            + [float(np.max(np.abs(c))) for c in self.C if c.size]
            + ([float(np.max(np.abs(self.c_lp)))] if self.L else [])
            + ([float(np.max(np.abs(self.c_f)))] if self.F else [])
        )

    # --- operator applications -------------------------------------------
    def apply(self, X, w, u):
        """A(X) + G w + F u."""
        out = np.zeros(self.m)
        for j in range(self.nblk):
            out += self.Aflat[j] @ X[j].reshape(-1)
        if self.L:
            out += self.G @ w
        if self.F:
            out += self.Fm @ u
        return out

    def adjoint_block(self, j, y):
        return np.einsum("i,ikl->kl", y, self.A[j], optimize=True)

    def pobj(self, X, w, u):
        val = sum(float(np.sum(self.C[j] * X[j])) for j in range(self.nblk))
        if self.L:
            val += float(self.c_lp @ w)
        if self.F:
            val += float(self.c_f @ u)
        return val


def _chol_with_perturbation(M):
    """Cholesky factor of M, adding scaled diagonal perturbations on failure."""
    n = M.shape[0]
    scale = max(1.0, float(np.trace(M)) / max(1, n))
    pert = 0.0
    for _ in range(16):
        try:
            return np.linalg.cholesky(M + pert * np.eye(n)), pert
        except np.linalg.LinAlgError:
            pert = 1e-14 * scale if pert == 0.0 else pert * 100.0
    raise np.linalg.LinAlgError("Schur complement not factorizable")


class _NumericalBreakdown(Exception):
    pass


def _chol_psd_iterate(X):
    """Cholesky of an iterate that should be PD, regularizing if it barely is not."""
    scale = max(1.0, float(np.trace(X)) / X.shape[0])
    pert = 0.0
    for _ in range(8):
        try:
            return np.linalg.cholesky(X + pert * np.eye(X.shape[0]))
        except np.linalg.LinAlgError:
            pert = 1e-14 * scale if pert == 0.0 else pert * 100.0
    raise _NumericalBreakdown("iterate lost positive definiteness")


def _max_step_psd(X, dX):
    """Largest a >= 0 with X + a dX still PSD (X assumed PD)."""
    Lx = _chol_psd_iterate(X)
    W = sla.solve_triangular(Lx, dX, lower=True)
    W = sla.solve_triangular(Lx, W.T, lower=True)
    lam_min = float(np.linalg.eigvalsh(0.5 * (W + W.T))[0])
    if lam_min >= -1e-16:
        return _BIG_STEP
    return 1.0 / (-lam_min)


def _max_step_lp(x, dx):
    neg = dx < 0
    if not np.any(neg):
        return _BIG_STEP
    return float(np.min(-x[neg] / dx[neg]))


def solve(inst: SdpInstance, options: SolveOptions | None = None) -> SdpSolution:
    """Solve a standard-form instance with the HKM predictor-corrector method."""
    opts = options or SolveOptions()
    c = _Compiled(inst)
    m, nblk, L, F = c.m, c.nblk, c.L, c.F

    bnorm = float(np.linalg.norm(c.b)) if m else 0.0
    binf = float(np.max(np.abs(c.b))) if m else 0.0
    tau_p = max(1.0, binf / c.row_scale) * max(1.0, np.sqrt(max(c.dims, default=1)))
    tau_d = max(1.0, c.obj_scale, c.row_scale / max(1.0, np.sqrt(max(c.dims, default=1))))

    X = [tau_p * np.eye(d) for d in c.dims]
    S = [tau_d * np.eye(d) for d in c.dims]
    w = tau_p * np.ones(L)
    z = tau_d * np.ones(L)
    u = np.zeros(F)
    y = np.zeros(m)

    best = None
    best_merit = np.inf
    status = MAX_ITER
    certificate = None
    it = 0

    for it in range(1, opts.max_iters + 1):
        # --- residuals and convergence measures ---------------------------
        rp = c.b - c.apply(X, w, u)
        Rd = [c.C[j] - c.adjoint_block(j, y) - S[j] for j in range(nblk)]
        rd_lp = c.c_lp - (c.G.T @ y if L else np.zeros(0)) - z
        rf = c.c_f - (c.Fm.T @ y if F else np.zeros(0))
        comp = sum(float(np.sum(X[j] * S[j])) for j in range(nblk)) + float(w @ z)
        mu = comp / c.cone_dim

        pobj = c.pobj(X, w, u)
        dobj = float(c.b @ y)
        relp = float(np.linalg.norm(rp)) / (1.0 + bnorm)
        dual_norm = np.sqrt(
            sum(float(np.sum(r * r)) for r in Rd)
            + float(rd_lp @ rd_lp) + float(rf @ rf)
        )
        reld = dual_norm / (1.0 + c.obj_scale)
        relgap = abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj))
        merit = max(relp, reld, relgap)
        if merit < best_merit:
            best_merit = merit
            best = ([x.copy() for x in X], w.copy(), u.copy(), y.copy(),
                    (float(np.linalg.norm(rp)), reld, relgap), pobj, dobj)
        elif best_merit < 1e-5 and merit > 10.0 * best_merit:
            # conditioning has started to corrupt the iterate; nothing more
            # can be gained at this precision
            break

        if opts.trace:
            print(f"  it={it:3d} relp={relp:9.2e} reld={reld:9.2e} "
                  f"gap={relgap:9.2e} mu={mu:9.2e}")

        if relp <= opts.feas_tol and reld <= opts.feas_tol and relgap <= opts.gap_tol:
            status = OPTIMAL
            break

        # --- primal infeasibility: dual improving ray ---------------------
        if m and dobj > 0:
            ynorm = float(np.linalg.norm(y))
            if ynorm > 0:
                yr = y / ynorm
                pairing = -float(c.b @ yr)
                viol = 0.0
                for j in range(nblk):
                    Aj = c.adjoint_block(j, yr)
                    viol = max(viol, float(np.linalg.eigvalsh(Aj)[-1]))
                if L:
                    viol = max(viol, float(np.max(c.G.T @ yr, initial=-np.inf)))
                if F:
                    viol = max(viol, float(np.max(np.abs(c.Fm.T @ yr), initial=0.0)))
                if pairing <= -1e-6 and viol <= 1e-7 * c.row_scale:
                    status = INFEASIBLE
                    certificate = {"ray": yr.copy(), "pairing": pairing, "cone_violation": viol}
                    break

        # --- dual infeasibility: primal improving ray ----------------------
        if pobj < 0:
            xnorm = np.sqrt(sum(float(np.sum(x * x)) for x in X) + float(w @ w) + float(u @ u))
            if xnorm > 0:
                scale = 1.0 / xnorm
                ray_res = float(np.linalg.norm(c.apply(X, w, u))) * scale
                ray_obj = pobj * scale
                if ray_obj <= -1e-6 and ray_res <= 1e-7 * c.row_scale:
                    status = UNBOUNDED
                    certificate = {
                        "ray_blocks": [scale * x for x in X],
                        "objective": ray_obj,
                        "row_residual": ray_res,
                    }
                    break

        # --- Schur complement (shared by predictor and corrector) ----------
        try:
            Sinv = []
            for j in range(nblk):
                d = c.dims[j]
                Ls = _chol_psd_iterate(S[j])
                Li = sla.solve_triangular(Ls, np.eye(d), lower=True)
                Sinv.append(Li.T @ Li)
        except _NumericalBreakdown:
            break

        M = np.zeros((m, m))
        for j in range(nblk):
            T = np.matmul(np.matmul(X[j], c.A[j]), Sinv[j])
            M += c.Aflat[j] @ T.reshape(m, -1).T
        if L:
            M += (c.G * (w / z)) @ c.G.T
        M = 0.5 * (M + M.T)
        try:
            Lm, _ = _chol_with_perturbation(M)
        except np.linalg.LinAlgError:
            break

        def schur_solve(rhs_mat):
            t = sla.solve_triangular(Lm, rhs_mat, lower=True)
            out = sla.solve_triangular(Lm.T, t, lower=False)
            # one step of iterative refinement against the unfactored matrix;
            # recovers direction accuracy once the system gets ill-conditioned
            res = rhs_mat - M @ out
            t = sla.solve_triangular(Lm, res, lower=True)
            return out + sla.solve_triangular(Lm.T, t, lower=False)

        MiF = schur_solve(c.Fm) if F else None
        free_schur = (c.Fm.T @ MiF) if F else None

        def newton(Rc, rc):
            """HKM direction for complementarity targets (Rc per block, rc for LP)."""
            h = rp.copy()
            for j in range(nblk):
                Nj = (Rc[j] - X[j] @ Rd[j]) @ Sinv[j]
                h -= c.Aflat[j] @ Nj.reshape(-1)
            if L:
                h -= c.G @ ((rc - w * rd_lp) / z)
            if F:
                Mih = schur_solve(h)
                rhs_u = c.Fm.T @ Mih - rf
                try:
                    du = np.linalg.solve(free_schur, rhs_u)
                except np.linalg.LinAlgError:
                    du = np.linalg.lstsq(free_schur, rhs_u, rcond=None)[0]
                dy = Mih - MiF @ du
            else:
                du = np.zeros(0)
                dy = schur_solve(h) if m else np.zeros(0)
            dS = [Rd[j] - c.adjoint_block(j, dy) for j in range(nblk)]
            dX = []
            for j in range(nblk):
                DXj = (Rc[j] - X[j] @ dS[j]) @ Sinv[j]
                dX.append(0.5 * (DXj + DXj.T))
            dz = rd_lp - (c.G.T @ dy if L else np.zeros(0))
            dw = (rc - w * dz) / z if L else np.zeros(0)
            return dX, dw, du, dy, dS, dz

        try:
            # predictor (affine scaling)
            Rc_aff = [-X[j] @ S[j] for j in range(nblk)]
            rc_aff = -w * z
            dXa, dwa, dua, dya, dSa, dza = newton(Rc_aff, rc_aff)

            ap = min(min((_max_step_psd(X[j], dXa[j]) for j in range(nblk)), default=_BIG_STEP),
                     _max_step_lp(w, dwa))
            ad = min(min((_max_step_psd(S[j], dSa[j]) for j in range(nblk)), default=_BIG_STEP),
                     _max_step_lp(z, dza))
            ap = min(1.0, opts.step_frac * ap)
            ad = min(1.0, opts.step_frac * ad)

            comp_aff = sum(float(np.sum((X[j] + ap * dXa[j]) * (S[j] + ad * dSa[j])))
                           for j in range(nblk))
            comp_aff += float((w + ap * dwa) @ (z + ad * dza))
            mu_aff = max(comp_aff / c.cone_dim, 0.0)
            sigma = min(1.0, (mu_aff / mu) ** 3) if mu > 0 else 0.0

            # corrector
            Rc = [sigma * mu * np.eye(c.dims[j]) - X[j] @ S[j] - dXa[j] @ dSa[j]
                  for j in range(nblk)]
            rc = sigma * mu - w * z - dwa * dza
            dX, dw, du, dy, dS, dz = newton(Rc, rc)

            ap = min(min((_max_step_psd(X[j], dX[j]) for j in range(nblk)), default=_BIG_STEP),
                     _max_step_lp(w, dw))
            ad = min(min((_max_step_psd(S[j], dS[j]) for j in range(nblk)), default=_BIG_STEP),
                     _max_step_lp(z, dz))
            ap = min(1.0, opts.step_frac * ap)
            ad = min(1.0, opts.step_frac * ad)
        except (_NumericalBreakdown, np.linalg.LinAlgError):
            break

        if opts.trace:
            print(f"        ap={ap:9.2e} ad={ad:9.2e} sigma={sigma:9.2e}")
        if max(ap, ad) < 1e-10:
            break  # no usable step left; report the best iterate

        for j in range(nblk):
            X[j] = 0.5 * ((X[j] + ap * dX[j]) + (X[j] + ap * dX[j]).T)
            S[j] = 0.5 * ((S[j] + ad * dS[j]) + (S[j] + ad * dS[j]).T)
        w = w + ap * dw
        z = z + ad * dz
        u = u + ap * du
        y = y + ad * dy

    Xb, wb, ub, yb, kkt, pobj, dobj = best if best is not None else (
        X, w, u, y, (np.inf, np.inf, np.inf), np.nan, np.nan)

    if status == MAX_ITER:
        # accept the contract tolerance even when the tighter target was missed
        relp_best = kkt[0] / (1.0 + bnorm)
        if relp_best <= opts.contract_feas and kkt[1] <= opts.contract_feas \
                and kkt[2] <= opts.contract_gap:
            status = OPTIMAL

    if status in (INFEASIBLE, UNBOUNDED):
        Xb, wb, ub, yb = X, w, u, y
        kkt = (float(np.linalg.norm(c.b - c.apply(Xb, wb, ub))), np.inf, np.inf)
        pobj, dobj = c.pobj(Xb, wb, ub), float(c.b @ yb)

    return SdpSolution(
        status=status,
        blocks=[x.copy() for x in Xb],
        nonneg=wb[:c.n_user_nonneg].copy(),
        free=ub.copy(),
        dual=yb.copy(),
        kkt=kkt,
        pobj=pobj,
        dobj=dobj,
        iterations=it,
        certificate=certificate,
    )


# ---------------------------------------------------------------------------
# Phase 1: feasible starting points for linear matrix equation systems
# ---------------------------------------------------------------------------

@dataclass
class FeasiblePoint:
    x0: np.ndarray | None
    residual: float
    feasible: bool
    objective: float


@dataclass
class GeneralFeasiblePoint:
    x0: np.ndarray | None
    f0: np.ndarray | None
    g0: np.ndarray | None
    residual: float
    feasible: bool
    objective: float


# Above this many rows the norm-ball encoding of the residual (an arrow PSD
# block needing O(m^2) linking rows) is replaced by a slack-pair L1 objective.
ARROW_ROW_LIMIT = 32


def _arrow_rows(inst: SdpInstance, arrow_block: int, m_res: int):
    """Pin the arrow block [[t, r'],[r, t I]] entries: equal diagonal, zero tail."""
    dim = m_res + 1
    for i in range(1, dim):
        e = np.zeros((dim, dim))
        e[i, i] = 1.0
        e[0, 0] = -1.0
        inst.rows.append(SdpRow(blocks={arrow_block: e}, rhs=0.0, sense=EQ))
    for i in range(1, dim):
        for j in range(i + 1, dim):
            e = np.zeros((dim, dim))
            e[i, j] = e[j, i] = 0.5
            inst.rows.append(SdpRow(blocks={arrow_block: e}, rhs=0.0, sense=EQ))


def _row_residuals(coefs, rhs, senses, x):
    vals = np.einsum("ikl,kl->i", coefs, x, optimize=True)
    res = np.zeros(len(rhs))
    for i, sense in enumerate(senses):
        if sense == "eq":
            res[i] = vals[i] - rhs[i]
        elif sense == "geq":
            res[i] = min(0.0, vals[i] - rhs[i])
        elif sense == "leq":
            res[i] = max(0.0, vals[i] - rhs[i])
        else:
            raise ValueError(f"unknown sense {sense!r}")
    return res


def _build_phase1(dim_blocks, coefs_per_block, rhs, senses, trace_reg):
    """Shared phase-1 model: soften all rows, minimize the residual bound.

    ``coefs_per_block`` maps block index -> (m, d, d) coefficient stack.
    Inequality rows get their own sign slack; the signed equation residuals
    are bounded either by an arrow block (small row counts) or by an L1
    slack-pair objective.
    """
    m = len(rhs)
    ineq = [i for i, s in enumerate(senses) if s in ("geq", "leq")]
    ineq_slot = {i: k for k, i in enumerate(ineq)}
    use_arrow = m <= ARROW_ROW_LIMIT

    inst = SdpInstance(block_dims=list(dim_blocks), name="phase1")
    obj_blocks = [trace_reg * np.eye(d) for d in dim_blocks]
    if use_arrow:
        arrow = len(inst.block_dims)
        inst.block_dims.append(m + 1)
        c_arrow = np.zeros((m + 1, m + 1))
        c_arrow[0, 0] = 1.0
        obj_blocks.append(c_arrow)
        inst.n_nonneg = len(ineq)
        inst.obj_nonneg = np.zeros(len(ineq))
    else:
        arrow = None
        inst.n_nonneg = len(ineq) + 2 * m
        inst.obj_nonneg = np.concatenate([np.zeros(len(ineq)), np.ones(2 * m)])
    inst.obj_blocks = obj_blocks

    for i in range(m):
        row = SdpRow(rhs=float(rhs[i]), sense=EQ)
        for j, stack in coefs_per_block.items():
            row.blocks[j] = stack[i]
        if senses[i] == "geq":
            row.nonneg[ineq_slot[i]] = -1.0
        elif senses[i] == "leq":
            row.nonneg[ineq_slot[i]] = 1.0
        if use_arrow:
            e = np.zeros((m + 1, m + 1))
            e[0, i + 1] = e[i + 1, 0] = -0.5
            row.blocks[arrow] = e
        else:
            row.nonneg[len(ineq) + i] = -1.0
            row.nonneg[len(ineq) + m + i] = 1.0
        inst.rows.append(row)
    if use_arrow:
        _arrow_rows(inst, arrow, m)
    return inst


def phase1_feasible(coefs, rhs, senses=None, *, trace_reg: float = 1e-9,
                    feas_tol: float = 1e-8) -> FeasiblePoint:
    """PSD feasible point for rows <A_i, X> (=|>=|<=) b_i.

    Minimizes a bound on the signed equation residual (norm-ball encoding for
    small row counts, slack-pair L1 otherwise) plus a small trace term that
    keeps the optimal face bounded. Declares the system infeasible when the
    residual cannot be driven to zero.
    """
    coefs = np.asarray(coefs, dtype=float)
    m, n = coefs.shape[0], coefs.shape[1]
    rhs = np.asarray(rhs, dtype=float)
    senses = list(senses) if senses is not None else ["eq"] * m
    bscale = 1.0 + float(np.linalg.norm(rhs))

    for reg in (trace_reg, 0.0):
        inst = _build_phase1([n], {0: coefs}, rhs, senses, reg)
        sol = solve(inst)
        if sol.status not in (OPTIMAL, MAX_ITER):
            break
        x0 = 0.5 * (sol.blocks[0] + sol.blocks[0].T)
        residual = float(np.linalg.norm(_row_residuals(coefs, rhs, senses, x0)))
        if residual <= feas_tol * bscale:
            return FeasiblePoint(x0=x0, residual=residual, feasible=True, objective=sol.pobj)
    if sol.status in (OPTIMAL, MAX_ITER):
        return FeasiblePoint(x0=x0, residual=residual, feasible=False, objective=sol.pobj)
    return FeasiblePoint(x0=None, residual=np.inf, feasible=False, objective=np.inf)


def phase1_general(coefs, rhs, senses=None, *, trace_reg: float = 1e-9,
                   feas_tol: float = 1e-8) -> GeneralFeasiblePoint:
    """Starting point (X0, F0, G0) with [[F0, X0],[X0', G0]] PSD and rows on X0.

    ``coefs`` is (m, N, M); the rows act on the off-diagonal block of one
    embedded PSD variable of dimension N + M.
    """
    coefs = np.asarray(coefs, dtype=float)
    m, n, mm = coefs.shape
    rhs = np.asarray(rhs, dtype=float)
    senses = list(senses) if senses is not None else ["eq"] * m
    bscale = 1.0 + float(np.linalg.norm(rhs))

    dim = n + mm
    embedded = np.zeros((m, dim, dim))
    for i in range(m):
        embedded[i, :n, n:] = 0.5 * coefs[i]
        embedded[i, n:, :n] = 0.5 * coefs[i].T

    for reg in (trace_reg, 0.0):
        inst = _build_phase1([dim], {0: embedded}, rhs, senses, reg)
        sol = solve(inst)
        if sol.status not in (OPTIMAL, MAX_ITER):
            break
        v = 0.5 * (sol.blocks[0] + sol.blocks[0].T)
        x0 = v[:n, n:].copy()
        vals = np.einsum("ikl,kl->i", coefs, x0, optimize=True)
        res = np.zeros(m)
        for i, s in enumerate(senses):
            if s == "eq":
                res[i] = vals[i] - rhs[i]
            elif s == "geq":
                res[i] = min(0.0, vals[i] - rhs[i])
            else:
                res[i] = max(0.0, vals[i] - rhs[i])
        residual = float(np.linalg.norm(res))
        if residual <= feas_tol * bscale:
            return GeneralFeasiblePoint(x0=x0, f0=v[:n, :n].copy(), g0=v[n:, n:].copy(),
                                        residual=residual, feasible=True, objective=sol.pobj)
    if sol.status in (OPTIMAL, MAX_ITER):
        return GeneralFeasiblePoint(x0=x0, f0=v[:n, :n].copy(), g0=v[n:, n:].copy(),
                                    residual=residual, feasible=False, objective=sol.pobj)
    return GeneralFeasiblePoint(x0=None, f0=None, g0=None, residual=np.inf,
                                feasible=False, objective=np.inf)


# ---------------------------------------------------------------------------
# Coupled super-block problems (PSD pair blocks tied to one embedding block)
# ---------------------------------------------------------------------------

@dataclass
class CoupledResult:
    solution: SdpSolution
    v: np.ndarray
    x: np.ndarray
    tops: list[np.ndarray]
    bots: list[np.ndarray]


def embed_off_coef(coef, dim_top: int, dim_bot: int) -> np.ndarray:
    """Symmetric (T+B)-dim coefficient whose pairing with V picks <coef, V_off>."""
    coef = np.asarray(coef, dtype=float)
    out = np.zeros((dim_top + dim_bot, dim_top + dim_bot))
    out[:dim_top, dim_top:] = 0.5 * coef
    out[dim_top:, :dim_top] = 0.5 * coef.T
    return out


def _sym_basis_rows(dim):
    """Upper-triangle index pairs enumerating a symmetric matrix's entries."""
    return [(i, j) for i in range(dim) for j in range(i, dim)]


def solve_block_general(dim_top: int, dim_bot: int, *, n_pairs: int = 0,
                        obj_v: np.ndarray | None = None,
                        obj_tops=None, obj_bots=None,
                        off_rows=(), v_rows=(),
                        options: SolveOptions | None = None) -> CoupledResult:
    """Solve a problem over one coupled super block [[T, X],[X', B]] PSD.

    With ``n_pairs`` > 0, additional PSD pair blocks T_k (dim_top) and B_k
    (dim_bot) are created and tied to the super block by equality rows
    T = sum_k T_k and B = sum_k B_k, so every entry of the coupled constraint
    stays affine in the variables. ``off_rows`` are (coef, rhs, sense) rows on
    the off-diagonal block X; ``v_rows`` act on the full super block. Senses
    may be eq/geq/leq.
    """
    dim = dim_top + dim_bot
    inst = SdpInstance(block_dims=[dim], name="coupled")
    # with a single pair the diagonal blocks of the embedding are the pair
    # blocks themselves, so no extra variables or linking rows are needed
    fold_single = n_pairs == 1
    n_linked = 0 if fold_single else n_pairs
    top_idx = []
    bot_idx = []
    for k in range(n_linked):
        top_idx.append(len(inst.block_dims))
        inst.block_dims.append(dim_top)
    for k in range(n_linked):
        bot_idx.append(len(inst.block_dims))
        inst.block_dims.append(dim_bot)

    obj_blocks = [np.zeros((d, d)) for d in inst.block_dims]
    if obj_v is not None:
        obj_blocks[0] = np.asarray(obj_v, dtype=float)
    if fold_single:
        if obj_tops is not None:
            obj_blocks[0][:dim_top, :dim_top] += np.asarray(obj_tops[0], dtype=float)
        if obj_bots is not None:
            obj_blocks[0][dim_top:, dim_top:] += np.asarray(obj_bots[0], dtype=float)
    for k in range(n_linked):
        if obj_tops is not None:
            obj_blocks[top_idx[k]] = np.asarray(obj_tops[k], dtype=float)
        if obj_bots is not None:
            obj_blocks[bot_idx[k]] = np.asarray(obj_bots[k], dtype=float)
    inst.obj_blocks = obj_blocks

    def _add_row(blocks, rhs, sense):
        if sense == "leq":
            blocks = {j: -coef for j, coef in blocks.items()}
            rhs, sense = -rhs, GEQ
        inst.rows.append(SdpRow(blocks=blocks, rhs=float(rhs), sense=sense))

    if n_linked:
        for (i, j) in _sym_basis_rows(dim_top):
            ev = np.zeros((dim, dim))
            ev[i, j] = ev[j, i] = 0.5 if i != j else 1.0
            blocks = {0: ev}
            for k in range(n_linked):
                ek = np.zeros((dim_top, dim_top))
                ek[i, j] = ek[j, i] = -0.5 if i != j else -1.0
                blocks[top_idx[k]] = ek
            _add_row(blocks, 0.0, EQ)
        for (i, j) in _sym_basis_rows(dim_bot):
            ev = np.zeros((dim, dim))
            ev[dim_top + i, dim_top + j] = ev[dim_top + j, dim_top + i] = 0.5 if i != j else 1.0
            blocks = {0: ev}
            for k in range(n_linked):
                ek = np.zeros((dim_bot, dim_bot))
                ek[i, j] = ek[j, i] = -0.5 if i != j else -1.0
                blocks[bot_idx[k]] = ek
            _add_row(blocks, 0.0, EQ)

    for coef, rhs, sense in off_rows:
        _add_row({0: embed_off_coef(coef, dim_top, dim_bot)}, rhs, sense)
    for coef, rhs, sense in v_rows:
        _add_row({0: np.asarray(coef, dtype=float)}, rhs, sense)

    sol = solve(inst, options)
    v = 0.5 * (sol.blocks[0] + sol.blocks[0].T) if sol.blocks else np.zeros((dim, dim))
    if fold_single:
        tops = [v[:dim_top, :dim_top].copy()]
        bots = [v[dim_top:, dim_top:].copy()]
    else:
        tops = [sol.blocks[top_idx[k]] for k in range(n_linked)]
        bots = [sol.blocks[bot_idx[k]] for k in range(n_linked)]
    return CoupledResult(
        solution=sol,
        v=v,
        x=v[:dim_top, dim_top:].copy(),
        tops=tops,
        bots=bots,
    )

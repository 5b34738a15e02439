"""Rank-seeking heuristics over the SDP core.

Four algorithm variants share one pattern: split the unknown into r PSD
blocks, measure how far the tuple is from "each block rank one and mutually
orthogonal" with the rank-split defect, and drive that defect down with
linear SDP subproblems.

* gradient variants take a damped step along the best feasible descent
  direction of the defect (an inner SDP maximizes the linear pairing with
  the defect gradient subject to staying inside the cone);
* bilinear variants fix the gradient at the current point, minimize the
  bilinear pairing over the whole feasible cone, and re-split the solution
  through an eigendecomposition before the next sweep.

Rectangular problems run the same machinery over the semidefinite embedding
[[F, X], [X', G]], certifying the singular values of X.

The step rule of the gradient variants is the quotient
    t = min(1, <direction, gradient> / current defect),
optionally replaced by the exact quadratic minimizer; a halving backtrack
guards monotonicity because the quotient rule is not an exact line search.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import sdp
from .functionals import split_defect_gradient_blocks, split_defect_value
from .linalg import as_sym, numerical_rank, svd, sym_eig
from .problems import EQ, GEQ, LEQ, LmeProblem

STOP_DEFECT_FLOOR = 1e-14       # defect below this counts as a certified zero
CERT_RESIDUAL_TOL = 1e-6        # certificate residual tolerance, times (1 + |b|)

# Step subproblems only need tight feasibility plus a usable direction, so
# their optimality contract tolerates a looser duality gap than direct solves.
_INNER_OPTS = sdp.SolveOptions(contract_feas=1e-7, contract_gap=1e-5)

# The defect gradient of a rank-1 block is exactly singular along the block
# direction, so step subproblems have a zero-cost face (for the embedded
# rectangular variants an unbounded one) and their optimal value is driven
# to zero as the outer loop converges, which starves the interior-point
# method of relative scale. A small trace term bounds the face, keeps the
# subproblem value on the gradient's own scale, and biases ties toward low
# trace; the step ratio still uses the raw gradients.
INNER_TRACE_REG = 1e-3


def _ridged(grads) -> list[np.ndarray]:
    scale = max([1.0] + [float(np.max(np.abs(g))) for g in grads])
    ridge = INNER_TRACE_REG * scale
    return [g + ridge * np.eye(g.shape[0]) for g in grads]

STATUS_OK = "ok"
STATUS_PHASE1_INFEASIBLE = "phase1_infeasible"
STATUS_SDP_FAILURE = "sdp_failure"


class PolishNotApplicable(ValueError):
    """Solution is too far from the requested rank for the polishing step."""


@dataclass
class HeuristicConfig:
    max_iters: int = 100
    rank_tol: float = 1e-8
    warm_start: bool = False
    seed: int = 0
    line_search: str = "paper"    # "paper" | "exact"

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.rank_tol <= 0:
            raise ValueError("rank_tol must be positive")
        if self.line_search not in ("paper", "exact"):
            raise ValueError(f"unknown line search {self.line_search!r}")


@dataclass
class TrajectoryPoint:
    iteration: int
    value: float                 # rank-split defect at this iterate
    step: float | None           # step length (None for bilinear sweeps)
    residual: float
    min_eig: float


def format_trajectory(points) -> str:
    """Fixed-width text table of an iteration trajectory."""
    lines = [f"{'iter':>5s} {'defect':>18s} {'step':>10s} {'residual':>12s} {'min_eig':>12s}"]
    for p in points:
        step = f"{p.step:10.4e}" if p.step is not None else " " * 10
        lines.append(f"{p.iteration:5d} {p.value:18.10e} {step} "
                     f"{p.residual:12.4e} {p.min_eig:12.4e}")
    return "\n".join(lines)


@dataclass
class RankCertificate:
    spectrum: np.ndarray
    achieved_rank: int
    tol: float
    residual: float
    target_rank: int
    success: bool
    note: str = ""


def certify(spectrum, target_rank: int, residual: float, rhs_scale: float,
            tol: float = 1e-8, note: str = "") -> RankCertificate:
    spectrum = np.asarray(spectrum, dtype=float)
    achieved = numerical_rank(spectrum, tol)
    success = achieved <= target_rank and residual <= CERT_RESIDUAL_TOL * rhs_scale
    return RankCertificate(spectrum=spectrum, achieved_rank=achieved, tol=tol,
                           residual=residual, target_rank=target_rank,
                           success=success, note=note)


@dataclass
class PsdHeuristicState:
    blocks: list[np.ndarray]
    iterations: int
    value: float

    @property
    def aggregate(self) -> np.ndarray:
        agg = np.zeros_like(self.blocks[0])
        for b in self.blocks:
            agg += b
        return agg


@dataclass
class GeneralHeuristicState:
    x: np.ndarray
    f_blocks: list[np.ndarray]
    g_blocks: list[np.ndarray]
    iterations: int
    value: float

    @property
    def superblock(self) -> np.ndarray:
        n, m = self.x.shape
        f = np.zeros((n, n))
        for b in self.f_blocks:
            f += b
        g = np.zeros((m, m))
        for b in self.g_blocks:
            g += b
        return np.block([[f, self.x], [self.x.T, g]])


@dataclass
class HeuristicRun:
    method: str
    target_rank: int
    status: str
    state: PsdHeuristicState | GeneralHeuristicState | None
    certificate: RankCertificate
    trajectory: list[TrajectoryPoint] = field(default_factory=list)
    config: HeuristicConfig | None = None


def _failed_certificate(prob: LmeProblem, note: str) -> RankCertificate:
    return RankCertificate(spectrum=np.array([]), achieved_rank=-1, tol=1e-8,
                           residual=np.inf, target_rank=prob.target_rank,
                           success=False, note=note)


def _stop_threshold(cfg: HeuristicConfig) -> float:
    return max(cfg.rank_tol ** 2, STOP_DEFECT_FLOOR)


# ---------------------------------------------------------------------------
# PSD problems
# ---------------------------------------------------------------------------

def _psd_inner_instance(prob: LmeProblem, grad_blocks) -> sdp.SdpInstance:
    """min sum_k <G_k, W_k> s.t. W_k PSD and the aggregate satisfies the rows.

    This is the step subproblem of both PSD heuristics in the substituted
    variables W_k = X_k - D_k: the pairing objective over the search
    direction becomes linear in W, the per-block cone constraints become
    W_k PSD, and the homogeneous row condition on the direction becomes the
    original rows on the aggregate of W (inequality rows keep their sense,
    which preserves feasibility of every damped step).
    """
    r = len(grad_blocks)
    inst = sdp.SdpInstance(block_dims=[prob.n] * r,
                           obj_blocks=[g.copy() for g in grad_blocks],
                           name="rank_step")
    for row in prob.rows:
        coef, rhs, sense = row.coef, row.rhs, row.sense
        if sense == LEQ:
            coef, rhs, sense = -coef, -rhs, GEQ
        inst.rows.append(sdp.SdpRow(blocks={k: coef for k in range(r)},
                                    rhs=rhs, sense=sense))
    return inst


def _psd_start(prob: LmeProblem, x0) -> tuple[np.ndarray | None, str]:
    if x0 is not None:
        return as_sym(x0), STATUS_OK
    fp = sdp.phase1_feasible(prob.coefs_tensor(), prob.rhs_vector(), prob.senses())
    if not fp.feasible:
        return None, STATUS_PHASE1_INFEASIBLE
    return fp.x0, STATUS_OK


def _min_block_eig(blocks) -> float:
    return min(float(np.linalg.eigvalsh(b)[0]) for b in blocks)


def _paper_step(num: float, den: float) -> float:
    if den <= STOP_DEFECT_FLOOR:
        return 0.0
    return min(1.0, max(0.0, num / den))


def _exact_step(num: float, quad: float, val0: float, val1: float) -> float:
    # minimizer of val0 - 2 t num + t^2 quad over [0, 1]
    if quad > STOP_DEFECT_FLOOR:
        return min(1.0, max(0.0, num / quad))
    return 1.0 if val1 <= val0 else 0.0


def _backtrack(blocks, w_blocks, t: float, val: float):
    """Halve the step until the defect stops increasing (at most 30 halvings)."""
    for _ in range(31):
        cand = [(1.0 - t) * b + t * w for b, w in zip(blocks, w_blocks)]
        cand_val = split_defect_value(cand)
        if cand_val <= val + 1e-9 or t == 0.0:
            return cand, cand_val, t
        t *= 0.5
    return blocks, val, 0.0


def gradient_psd(prob: LmeProblem, rank: int, cfg: HeuristicConfig | None = None,
                 x0=None) -> HeuristicRun:
    """Damped feasible descent on the rank-split defect for PSD problems."""
    if prob.kind != "psd":
        raise ValueError("gradient_psd needs a PSD problem")
    cfg = cfg or HeuristicConfig()
    start, status = _psd_start(prob, x0)
    if status != STATUS_OK:
        return HeuristicRun(method="gradient", target_rank=rank, status=status,
                            state=None, certificate=_failed_certificate(prob, status),
                            config=cfg)

    blocks = [start / rank for _ in range(rank)]
    stop = _stop_threshold(cfg)
    traj: list[TrajectoryPoint] = []
    status = STATUS_OK
    val = split_defect_value(blocks)
    agg = sum(blocks)
    traj.append(TrajectoryPoint(0, val, None, prob.residual(agg), _min_block_eig(blocks)))
    iterations = 0

    for it in range(1, cfg.max_iters + 1):
        if val <= stop:
            break
        grads = split_defect_gradient_blocks(blocks)
        sol = sdp.solve(_psd_inner_instance(prob, _ridged(grads)), _INNER_OPTS)
        if sol.status != sdp.OPTIMAL:
            status = STATUS_SDP_FAILURE
            break
        w_blocks = [0.5 * (b + b.T) for b in sol.blocks]
        deltas = [b - w for b, w in zip(blocks, w_blocks)]
        num = sum(float(np.sum(d * g)) for d, g in zip(deltas, grads))
        if cfg.line_search == "paper":
            t = _paper_step(num, val)
        else:
            quad = split_defect_value(deltas)
            t = _exact_step(num, quad, val, split_defect_value(w_blocks))
        blocks, val, t = _backtrack(blocks, w_blocks, t, val)
        iterations = it
        agg = sum(blocks)
        traj.append(TrajectoryPoint(it, val, t, prob.residual(agg), _min_block_eig(blocks)))
        if t == 0.0 and num <= STOP_DEFECT_FLOOR:
            break  # no feasible ascent direction left

    state = PsdHeuristicState(blocks=blocks, iterations=iterations, value=val)
    agg = state.aggregate
    cert = certify(sym_eig(agg).values, rank, prob.residual(agg), prob.rhs_scale(),
                   tol=cfg.rank_tol, note=status if status != STATUS_OK else "")
    if status != STATUS_OK:
        cert = replace(cert, success=False)
    return HeuristicRun(method="gradient", target_rank=rank, status=status,
                        state=state, certificate=cert, trajectory=traj, config=cfg)


def _rank_one_split(x: np.ndarray, rank: int) -> list[np.ndarray]:
    """Top-r eigencomponents of a PSD matrix as rank-1 PSD blocks.

    When the matrix carries more than r components the tail is truncated;
    the truncation error is exactly the tail eigenvalue energy.
    """
    dec = sym_eig(x)
    out = []
    for k in range(rank):
        lam = max(float(dec.values[k]), 0.0) if k < len(dec.values) else 0.0
        u = dec.vectors[:, k]
        out.append(lam * np.outer(u, u))
    return out


def bilinear_psd(prob: LmeProblem, rank: int, cfg: HeuristicConfig | None = None,
                 x0=None) -> HeuristicRun:
    """Alternating bilinear sweeps with eigen re-splitting for PSD problems."""
    if prob.kind != "psd":
        raise ValueError("bilinear_psd needs a PSD problem")
    cfg = cfg or HeuristicConfig()
    start, status = _psd_start(prob, x0)
    if status != STATUS_OK:
        return HeuristicRun(method="bilinear", target_rank=rank, status=status,
                            state=None, certificate=_failed_certificate(prob, status),
                            config=cfg)

    blocks = _rank_one_split(start, rank)
    stop = _stop_threshold(cfg)
    traj: list[TrajectoryPoint] = []
    status = STATUS_OK
    val = split_defect_value(blocks)
    agg = sum(blocks)
    traj.append(TrajectoryPoint(0, val, None, prob.residual(agg), _min_block_eig(blocks)))
    iterations = 0

    for it in range(1, cfg.max_iters + 1):
        if val <= stop and prob.residual(agg) <= CERT_RESIDUAL_TOL * prob.rhs_scale():
            break
        grads = split_defect_gradient_blocks(blocks)
        sol = sdp.solve(_psd_inner_instance(prob, _ridged(grads)), _INNER_OPTS)
        if sol.status != sdp.OPTIMAL:
            status = STATUS_SDP_FAILURE
            break
        yj = np.zeros((prob.n, prob.n))
        for b in sol.blocks:
            yj += 0.5 * (b + b.T)
        blocks = _rank_one_split(yj, rank)
        val = split_defect_value(blocks)
        iterations = it
        agg = sum(blocks)
        traj.append(TrajectoryPoint(it, val, None, prob.residual(agg),
                                    _min_block_eig(blocks)))

    state = PsdHeuristicState(blocks=blocks, iterations=iterations, value=val)
    agg = state.aggregate
    cert = certify(sym_eig(agg).values, rank, prob.residual(agg), prob.rhs_scale(),
                   tol=cfg.rank_tol, note=status if status != STATUS_OK else "")
    if status != STATUS_OK:
        cert = replace(cert, success=False)
    return HeuristicRun(method="bilinear", target_rank=rank, status=status,
                        state=state, certificate=cert, trajectory=traj, config=cfg)


# ---------------------------------------------------------------------------
# Rectangular problems over the semidefinite embedding
# ---------------------------------------------------------------------------

def _general_start(prob: LmeProblem, start):
    if start is not None:
        x0, f0, g0 = start
        return np.asarray(x0, dtype=float), as_sym(f0), as_sym(g0), STATUS_OK
    fp = sdp.phase1_general(prob.coefs_tensor(), prob.rhs_vector(), prob.senses())
    if not fp.feasible:
        return None, None, None, STATUS_PHASE1_INFEASIBLE
    return fp.x0, fp.f0, fp.g0, STATUS_OK


def _general_inner(prob: LmeProblem, rank: int, gf, gg) -> sdp.CoupledResult:
    off_rows = [(row.coef, row.rhs, row.sense) for row in prob.rows]
    return sdp.solve_block_general(prob.n, prob.m_cols, n_pairs=rank,
                                   obj_tops=_ridged(gf), obj_bots=_ridged(gg),
                                   off_rows=off_rows, options=_INNER_OPTS)


def _superblock_min_eig(x, f_blocks, g_blocks) -> float:
    f = sum(f_blocks)
    g = sum(g_blocks)
    z = np.block([[f, x], [x.T, g]])
    return float(np.linalg.eigvalsh(0.5 * (z + z.T))[0])


def gradient_general(prob: LmeProblem, rank: int, cfg: HeuristicConfig | None = None,
                     start=None) -> HeuristicRun:
    """Damped descent for rectangular problems over the embedding blocks."""
    if prob.kind != "rect":
        raise ValueError("gradient_general needs a rectangular problem")
    cfg = cfg or HeuristicConfig()
    x, f0, g0, status = _general_start(prob, start)
    if status != STATUS_OK:
        return HeuristicRun(method="gradient", target_rank=rank, status=status,
                            state=None, certificate=_failed_certificate(prob, status),
                            config=cfg)

    f_blocks = [f0 / rank for _ in range(rank)]
    g_blocks = [g0 / rank for _ in range(rank)]
    stop = _stop_threshold(cfg)
    traj: list[TrajectoryPoint] = []
    status = STATUS_OK
    val = split_defect_value(f_blocks) + split_defect_value(g_blocks)
    traj.append(TrajectoryPoint(0, val, None, prob.residual(x),
                                _superblock_min_eig(x, f_blocks, g_blocks)))
    iterations = 0

    for it in range(1, cfg.max_iters + 1):
        if val <= stop:
            break
        gf = split_defect_gradient_blocks(f_blocks)
        gg = split_defect_gradient_blocks(g_blocks)
        res = _general_inner(prob, rank, gf, gg)
        if res.solution.status != sdp.OPTIMAL:
            status = STATUS_SDP_FAILURE
            break
        wf = [0.5 * (b + b.T) for b in res.tops]
        wg = [0.5 * (b + b.T) for b in res.bots]
        den_f = split_defect_value(f_blocks)
        den_g = split_defect_value(g_blocks)
        num_f = sum(float(np.sum((b - w) * g)) for b, w, g in zip(f_blocks, wf, gf))
        num_g = sum(float(np.sum((b - w) * g)) for b, w, g in zip(g_blocks, wg, gg))
        if cfg.line_search == "paper":
            t = min(_paper_step(num_f, den_f) if den_f > STOP_DEFECT_FLOOR else 1.0,
                    _paper_step(num_g, den_g) if den_g > STOP_DEFECT_FLOOR else 1.0)
        else:
            quad = split_defect_value([b - w for b, w in zip(f_blocks, wf)]) \
                + split_defect_value([b - w for b, w in zip(g_blocks, wg)])
            val1 = split_defect_value(wf) + split_defect_value(wg)
            t = _exact_step(num_f + num_g, quad, val, val1)
        # halving backtrack on the combined defect
        best = None
        tt = t
        for _ in range(31):
            cf = [(1.0 - tt) * b + tt * w for b, w in zip(f_blocks, wf)]
            cg = [(1.0 - tt) * b + tt * w for b, w in zip(g_blocks, wg)]
            cval = split_defect_value(cf) + split_defect_value(cg)
            if cval <= val + 1e-9 or tt == 0.0:
                best = (cf, cg, cval, tt)
                break
            tt *= 0.5
        if best is None:
            best = (f_blocks, g_blocks, val, 0.0)
        f_blocks, g_blocks, val, t = best
        x = (1.0 - t) * x + t * res.x
        iterations = it
        traj.append(TrajectoryPoint(it, val, t, prob.residual(x),
                                    _superblock_min_eig(x, f_blocks, g_blocks)))
        if t == 0.0 and num_f + num_g <= STOP_DEFECT_FLOOR:
            break

    state = GeneralHeuristicState(x=x, f_blocks=f_blocks, g_blocks=g_blocks,
                                  iterations=iterations, value=val)
    cert = certify(svd(x).s, rank, prob.residual(x), prob.rhs_scale(),
                   tol=cfg.rank_tol, note=status if status != STATUS_OK else "")
    if status != STATUS_OK:
        cert = replace(cert, success=False)
    return HeuristicRun(method="gradient", target_rank=rank, status=status,
                        state=state, certificate=cert, trajectory=traj, config=cfg)


def _split_superblock(v: np.ndarray, n: int, m: int, rank: int):
    """Re-split the embedding into per-column rank-1 F and G pieces."""
    dec = sym_eig(v)
    f_blocks, g_blocks = [], []
    for k in range(rank):
        lam = max(float(dec.values[k]), 0.0) if k < len(dec.values) else 0.0
        top = dec.vectors[:n, k]
        bot = dec.vectors[n:, k]
        f_blocks.append(lam * np.outer(top, top))
        g_blocks.append(lam * np.outer(bot, bot))
    return f_blocks, g_blocks


def bilinear_general(prob: LmeProblem, rank: int, cfg: HeuristicConfig | None = None,
                     start=None) -> HeuristicRun:
    """Alternating bilinear sweeps for rectangular problems."""
    if prob.kind != "rect":
        raise ValueError("bilinear_general needs a rectangular problem")
    cfg = cfg or HeuristicConfig()
    x, f0, g0, status = _general_start(prob, start)
    if status != STATUS_OK:
        return HeuristicRun(method="bilinear", target_rank=rank, status=status,
                            state=None, certificate=_failed_certificate(prob, status),
                            config=cfg)

    sb = np.block([[f0, x], [x.T, g0]])
    f_blocks, g_blocks = _split_superblock(0.5 * (sb + sb.T), prob.n, prob.m_cols, rank)
    stop = _stop_threshold(cfg)
    traj: list[TrajectoryPoint] = []
    status = STATUS_OK
    val = split_defect_value(f_blocks) + split_defect_value(g_blocks)
    traj.append(TrajectoryPoint(0, val, None, prob.residual(x),
                                _superblock_min_eig(x, f_blocks, g_blocks)))
    iterations = 0

    for it in range(1, cfg.max_iters + 1):
        # the re-split blocks have zero defect by construction, so the early
        # exit must also check the quantity actually being certified
        if val <= stop and prob.residual(x) <= CERT_RESIDUAL_TOL * prob.rhs_scale() \
                and numerical_rank(svd(x).s, cfg.rank_tol) <= rank:
            break
        gf = split_defect_gradient_blocks(f_blocks)
        gg = split_defect_gradient_blocks(g_blocks)
        res = _general_inner(prob, rank, gf, gg)
        if res.solution.status != sdp.OPTIMAL:
            status = STATUS_SDP_FAILURE
            break
        x = res.x
        f_blocks, g_blocks = _split_superblock(res.v, prob.n, prob.m_cols, rank)
        val = split_defect_value(f_blocks) + split_defect_value(g_blocks)
        iterations = it
        traj.append(TrajectoryPoint(it, val, None, prob.residual(x),
                                    _superblock_min_eig(x, f_blocks, g_blocks)))

    state = GeneralHeuristicState(x=x, f_blocks=f_blocks, g_blocks=g_blocks,
                                  iterations=iterations, value=val)
    cert = certify(svd(x).s, rank, prob.residual(x), prob.rhs_scale(),
                   tol=cfg.rank_tol, note=status if status != STATUS_OK else "")
    if status != STATUS_OK:
        cert = replace(cert, success=False)
    return HeuristicRun(method="bilinear", target_rank=rank, status=status,
                        state=state, certificate=cert, trajectory=traj, config=cfg)


# ---------------------------------------------------------------------------
# Polishing
# ---------------------------------------------------------------------------

def _sym_pair_basis(rank: int):
    return [(i, j) for i in range(rank) for j in range(i, rank)]


def polish(prob: LmeProblem, x, rank: int, gate_tol: float = 1e-6):
    """Exact-rank refit in the leading eigenspace of a near-rank-r solution.

    Writes the candidate as X+ = U_r M U_r' with M PSD of size r and
    minimizes the equality-row residual over M (inequality rows are kept as
    hard constraints). The Euclidean objective is reduced by a QR
    factorization to a residual of dimension at most r(r+1)/2, which is then
    bounded by an arrow block. Returns (X+, residual).
    """
    if prob.kind != "psd":
        raise ValueError("polish needs a PSD problem")
    x = as_sym(x)
    dec = sym_eig(x)
    if numerical_rank(dec.values, gate_tol) > rank:
        raise PolishNotApplicable(
            f"numerical rank {numerical_rank(dec.values, gate_tol)} exceeds {rank} "
            f"at gate tolerance {gate_tol:g}")
    u = dec.vectors[:, :rank]

    pairs = _sym_pair_basis(rank)
    k = len(pairs)
    eq_rows = [r for r in prob.rows if r.sense == EQ]
    ineq_rows = [r for r in prob.rows if r.sense != EQ]

    def reduced_coef(row):
        t = u.T @ row.coef @ u
        out = np.zeros(k)
        for idx, (i, j) in enumerate(pairs):
            out[idx] = t[i, i] if i == j else np.sqrt(2.0) * t[i, j]
        return out

    def m_block_coef(vec_k):
        c = np.zeros((rank, rank))
        for idx, (i, j) in enumerate(pairs):
            if i == j:
                c[i, i] = vec_k[idx]
            else:
                c[i, j] = c[j, i] = vec_k[idx] / np.sqrt(2.0)
        return c

    inst = sdp.SdpInstance(block_dims=[rank], name="polish")
    obj_blocks = [np.zeros((rank, rank))]
    if eq_rows:
        a_bar = np.stack([reduced_coef(r) for r in eq_rows])
        b_eq = np.array([r.rhs for r in eq_rows])
        q, rmat = np.linalg.qr(a_bar)
        res_dim = rmat.shape[0]
        qb = q.T @ b_eq
        const = float(b_eq @ b_eq - qb @ qb)
        arrow = len(inst.block_dims)
        inst.block_dims.append(res_dim + 1)
        c_arrow = np.zeros((res_dim + 1, res_dim + 1))
        c_arrow[0, 0] = 1.0
        obj_blocks.append(c_arrow)
        for l in range(res_dim):
            e = np.zeros((res_dim + 1, res_dim + 1))
            e[0, l + 1] = e[l + 1, 0] = -0.5
            inst.rows.append(sdp.SdpRow(
                blocks={0: m_block_coef(rmat[l]), arrow: e},
                rhs=float(qb[l]), sense=sdp.EQ))
        sdp._arrow_rows(inst, arrow, res_dim)
    else:
        const = 0.0
    inst.obj_blocks = obj_blocks
    for row in ineq_rows:
        coef = u.T @ row.coef @ u
        rhs, sense = row.rhs, row.sense
        if sense == LEQ:
            coef, rhs, sense = -coef, -rhs, GEQ
        inst.rows.append(sdp.SdpRow(blocks={0: coef}, rhs=rhs, sense=sense))

    sol = sdp.solve(inst)
    if sol.status not in (sdp.OPTIMAL, sdp.MAX_ITER):
        raise PolishNotApplicable(f"polish subproblem ended with status {sol.status}")
    m_opt = 0.5 * (sol.blocks[0] + sol.blocks[0].T)
    # clip negligible negative curvature so the refit is PSD to working precision
    w, v = np.linalg.eigh(m_opt)
    m_opt = (v * np.maximum(w, 0.0)) @ v.T
    x_plus = u @ m_opt @ u.T
    del const
    return 0.5 * (x_plus + x_plus.T), prob.residual(x_plus)


def polish_rect(prob: LmeProblem, x, rank: int, gate_tol: float = 1e-6):
    """Least-squares refit X+ = U_r N V_r' in the leading singular subspaces.

    Rectangular analogue of ``polish``: N is an unconstrained r x r matrix,
    so the refit is a plain linear least-squares over the equality rows.
    Inequality rows are not supported here.
    """
    if prob.kind != "rect":
        raise ValueError("polish_rect needs a rectangular problem")
    if any(r.sense != EQ for r in prob.rows):
        raise PolishNotApplicable("rectangular polish supports equality rows only")
    x = np.asarray(x, dtype=float)
    dec = svd(x)
    if numerical_rank(dec.s, gate_tol) > rank:
        raise PolishNotApplicable(
            f"numerical rank {numerical_rank(dec.s, gate_tol)} exceeds {rank}")
    u = dec.u[:, :rank]
    v = dec.v[:, :rank]
    a_bar = np.stack([(u.T @ r.coef @ v).reshape(-1) for r in prob.rows])
    b_eq = prob.rhs_vector()
    sol, *_ = np.linalg.lstsq(a_bar, b_eq, rcond=None)
    x_plus = u @ sol.reshape(rank, rank) @ v.T
    return x_plus, prob.residual(x_plus)


# ---------------------------------------------------------------------------
# Rank sweep with optional warm starting
# ---------------------------------------------------------------------------

def rank_cascade(prob: LmeProblem, cfg: HeuristicConfig | None = None,
                 method: str = "bilinear") -> dict[int, HeuristicRun]:
    """Run the chosen heuristic for every rank from full down to one.

    With ``cfg.warm_start`` the rank-r search starts from the rank-(r+1)
    solution whenever that run produced a state; otherwise each rank starts
    from its own feasibility phase. Per-rank failures are recorded and the
    sweep continues.
    """
    cfg = cfg or HeuristicConfig()
    if method not in ("gradient", "bilinear"):
        raise ValueError(f"unknown method {method!r}")
    runs: dict[int, HeuristicRun] = {}
    if prob.kind == "psd":
        top = prob.n
        runner = gradient_psd if method == "gradient" else bilinear_psd
        prev = None
        for rank in range(top, 0, -1):
            start = prev if cfg.warm_start else None
            run = runner(prob, rank, cfg, x0=start)
            runs[rank] = run
            prev = run.state.aggregate if run.state is not None else None
    else:
        top = min(prob.n, prob.m_cols)
        runner = gradient_general if method == "gradient" else bilinear_general
        prev = None
        for rank in range(top, 0, -1):
            start = prev if cfg.warm_start else None
            run = runner(prob, rank, cfg, start=start)
            runs[rank] = run
            if run.state is not None:
                st = run.state
                prev = (st.x, sum(st.f_blocks), sum(st.g_blocks))
            else:
                prev = None
    return runs

"""Linear-matrix-equation problem container and application encoders.

Every application reduces to: find a matrix satisfying affine rows, PSD
(after lifting) and of a prescribed rank. 0/1 programs lift a vector x to
[1; x][1; x]' with the binary structure written as diag(X) = X(:,1);
complex-valued problems (unit-modulus equations, Fourier phase retrieval)
are lifted over the complex field and then realified, doubling dimension
and target rank.

Decoders never trust the relaxation: every decoded object is re-verified
against its own domain constraints (exact subset totals, magnitude and
amplitude residuals, complementarity gaps).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linalg import sym_eig

EQ = "eq"
GEQ = "geq"
LEQ = "leq"


class DecodeError(ValueError):
    """Solution matrix does not carry the structure the decoder needs."""


@dataclass
class LmeRow:
    coef: np.ndarray
    rhs: float
    sense: str = EQ


@dataclass
class LmeProblem:
    """Affine rows over a PSD (square, symmetric) or rectangular unknown."""

    kind: str                     # "psd" | "rect"
    n: int
    m_cols: int
    rows: list[LmeRow]
    target_rank: int
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("psd", "rect"):
            raise ValueError(f"unknown problem kind {self.kind!r}")
        if self.kind == "psd" and self.n != self.m_cols:
            raise ValueError("psd problems must be square")
        for row in self.rows:
            coef = np.asarray(row.coef, dtype=float)
            if coef.shape != (self.n, self.m_cols):
                raise ValueError(f"row coefficient shape {coef.shape} does not match "
                                 f"({self.n},{self.m_cols})")
            if row.sense not in (EQ, GEQ, LEQ):
                raise ValueError(f"unknown sense {row.sense!r}")
            row.coef = 0.5 * (coef + coef.T) if self.kind == "psd" else coef

    @property
    def m_rows(self) -> int:
        return len(self.rows)

    def coefs_tensor(self) -> np.ndarray:
        return np.stack([r.coef for r in self.rows]) if self.rows else \
            np.zeros((0, self.n, self.m_cols))

    def rhs_vector(self) -> np.ndarray:
        return np.array([r.rhs for r in self.rows])

    def senses(self) -> list[str]:
        return [r.sense for r in self.rows]

    def operator_matrix(self) -> np.ndarray:
        """Stacked row operator: row i is vec(coef_i)' (column-major)."""
        return np.stack([r.coef.reshape(-1, order="F") for r in self.rows]) if self.rows \
            else np.zeros((0, self.n * self.m_cols))

    def row_values(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.array([float(np.sum(r.coef * x)) for r in self.rows])

    def violations(self, x) -> np.ndarray:
        """Signed constraint violations (zero when satisfied)."""
        vals = self.row_values(x)
        out = np.zeros(len(self.rows))
        for i, r in enumerate(self.rows):
            d = vals[i] - r.rhs
            if r.sense == EQ:
                out[i] = d
            elif r.sense == GEQ:
                out[i] = min(0.0, d)
            else:
                out[i] = max(0.0, d)
        return out

    def residual(self, x) -> float:
        return float(np.linalg.norm(self.violations(x)))

    def rhs_scale(self) -> float:
        return 1.0 + float(np.linalg.norm(self.rhs_vector()))


# ---------------------------------------------------------------------------
# 0/1 lifted structure
# ---------------------------------------------------------------------------

def _lift_corner_row(dim: int) -> LmeRow:
    e = np.zeros((dim, dim))
    e[0, 0] = 1.0
    return LmeRow(coef=e, rhs=1.0)


def _binary_structure_rows(n: int) -> list[LmeRow]:
    """diag(X) = X(:,1) over the lifted (n+1)-dim matrix, one row per variable."""
    dim = n + 1
    rows = []
    for i in range(1, dim):
        c = np.zeros((dim, dim))
        c[i, i] = 1.0
        c[i, 0] = c[0, i] = -0.5
        rows.append(LmeRow(coef=c, rhs=0.0))
    return rows


def _first_column_row(dim: int, weights, rhs: float, sense: str) -> LmeRow:
    """sum_i weights[i] * X[1+i, 0]  (sense)  rhs."""
    c = np.zeros((dim, dim))
    for i, wv in enumerate(weights):
        c[1 + i, 0] = c[0, 1 + i] = 0.5 * wv
    return LmeRow(coef=c, rhs=float(rhs), sense=sense)


def encode_binary_feasibility(c_mat, b) -> LmeProblem:
    """Lift {x in {0,1}^N : C x = b} to a rank-1 PSD feasibility problem."""
    c_mat = np.atleast_2d(np.asarray(c_mat, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    m, n = c_mat.shape
    dim = n + 1
    rows = [_lift_corner_row(dim)]
    rows += _binary_structure_rows(n)
    for j in range(m):
        rows.append(_first_column_row(dim, c_mat[j], b[j], EQ))
    return LmeProblem(kind="psd", n=dim, m_cols=dim, rows=rows, target_rank=1,
                      meta={"app": "binary_feasibility", "n_vars": n})


def decode_binary(x_mat, threshold: float = 0.5) -> np.ndarray:
    x_mat = np.asarray(x_mat, dtype=float)
    return (x_mat[1:, 0] > threshold).astype(int)


# ---------------------------------------------------------------------------
# Knapsack decision / subset sum
# ---------------------------------------------------------------------------

@dataclass
class KnapsackInstance:
    values: np.ndarray
    weights: np.ndarray
    value_min: float
    weight_max: float

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float)
        if self.values.shape != self.weights.shape:
            raise ValueError("values and weights must have equal length")
        if not (np.all(np.isfinite(self.values)) and np.all(np.isfinite(self.weights))):
            raise ValueError("non-finite knapsack data")


@dataclass
class SubsetResult:
    selected: np.ndarray          # 0/1 indicator
    total_value: float
    total_weight: float
    ok: bool


def encode_knapsack(inst: KnapsackInstance) -> LmeProblem:
    n = len(inst.values)
    dim = n + 1
    rows = [_lift_corner_row(dim)]
    rows += _binary_structure_rows(n)
    rows.append(_first_column_row(dim, inst.values, inst.value_min, GEQ))
    rows.append(_first_column_row(dim, inst.weights, inst.weight_max, LEQ))
    return LmeProblem(kind="psd", n=dim, m_cols=dim, rows=rows, target_rank=1,
                      meta={"app": "knapsack", "n_vars": n})


def decode_knapsack(inst: KnapsackInstance, x_mat) -> SubsetResult:
    sel = decode_binary(x_mat)
    tv = float(inst.values @ sel)
    tw = float(inst.weights @ sel)
    ok = tv >= inst.value_min and tw <= inst.weight_max
    return SubsetResult(selected=sel, total_value=tv, total_weight=tw, ok=ok)


@dataclass
class SubsetSumInstance:
    values: np.ndarray
    target: float

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)


def encode_subset_sum(inst: SubsetSumInstance) -> LmeProblem:
    n = len(inst.values)
    dim = n + 1
    rows = [_lift_corner_row(dim)]
    rows += _binary_structure_rows(n)
    rows.append(_first_column_row(dim, inst.values, inst.target, EQ))
    return LmeProblem(kind="psd", n=dim, m_cols=dim, rows=rows, target_rank=1,
                      meta={"app": "subset_sum", "n_vars": n})


def decode_subset_sum(inst: SubsetSumInstance, x_mat) -> SubsetResult:
    sel = decode_binary(x_mat)
    total = float(inst.values @ sel)
    return SubsetResult(selected=sel, total_value=total, total_weight=total,
                        ok=(total == inst.target))


# ---------------------------------------------------------------------------
# Realification of complex lifted problems
# ---------------------------------------------------------------------------

def realify(h) -> np.ndarray:
    """Embed a Hermitian matrix as [[Re H, -Im H], [Im H, Re H]].

    The embedding preserves PSD-ness and doubles rank; eigenvalues occur in
    equal pairs. Non-Hermitian input is rejected.
    """
    h = np.asarray(h, dtype=complex)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ValueError("realify needs a square matrix")
    if np.linalg.norm(h - h.conj().T) > 1e-10 * max(1.0, np.linalg.norm(h)):
        raise ValueError("realify needs a Hermitian matrix")
    re, im = h.real, h.imag
    return np.block([[re, -im], [im, re]])


def complex_row_realified(coef, rhs, sense: str = EQ) -> list[tuple[np.ndarray, float, str]]:
    """Real rows equivalent to the complex row tr(coef X) (sense) rhs.

    Uses tr(T(C) T(X)) = 2 Re tr(C X): the real part becomes one row with
    coefficient T(C) (symmetrized) and right side 2 Re rhs; a second row with
    coefficient T(-iC) carries the imaginary part when it is nontrivial.
    Inequality senses require a Hermitian coefficient (real row value).
    """
    coef = np.asarray(coef, dtype=complex)
    n = coef.shape[0]
    hermitian = np.linalg.norm(coef - coef.conj().T) <= 1e-12 * max(1.0, np.linalg.norm(coef))
    if sense != EQ and not hermitian:
        raise ValueError("inequality rows need Hermitian coefficients")
    out = []

    def _embed(cmat):
        re, im = cmat.real, cmat.imag
        t = np.block([[re, -im], [im, re]])
        return 0.5 * (t + t.T)

    out.append((_embed(coef), 2.0 * float(np.real(rhs)), sense))
    imag_coef = -1j * coef
    t2 = _embed(imag_coef)
    if np.any(np.abs(t2) > 1e-14) or abs(np.imag(rhs)) > 1e-14:
        out.append((t2, 2.0 * float(np.imag(rhs)), sense))
    return out


def realification_structure_rows(n_c: int) -> list[LmeRow]:
    """Rows forcing a symmetric 2n x 2n matrix into the realified form.

    Equal diagonal blocks and a skew off-diagonal block: Y[i,j] = Y[n+i,n+j],
    Y[i,n+i] = 0 and Y[i,n+j] = -Y[j,n+i].
    """
    dim = 2 * n_c
    rows = []
    for i in range(n_c):
        for j in range(i, n_c):
            c = np.zeros((dim, dim))
            if i == j:
                c[i, i] = 1.0
                c[n_c + i, n_c + i] = -1.0
            else:
                c[i, j] = c[j, i] = 0.5
                c[n_c + i, n_c + j] = c[n_c + j, n_c + i] = -0.5
            rows.append(LmeRow(coef=c, rhs=0.0))
    for i in range(n_c):
        c = np.zeros((dim, dim))
        c[i, n_c + i] = c[n_c + i, i] = 0.5
        rows.append(LmeRow(coef=c, rhs=0.0))
    for i in range(n_c):
        for j in range(i + 1, n_c):
            c = np.zeros((dim, dim))
            c[i, n_c + j] = c[n_c + j, i] = 0.5
            c[j, n_c + i] = c[n_c + i, j] = 0.5
            rows.append(LmeRow(coef=c, rhs=0.0))
    return rows


def _complex_from_realified(y) -> np.ndarray:
    """Recover the Hermitian matrix represented by a realified symmetric Y."""
    y = np.asarray(y, dtype=float)
    n2 = y.shape[0]
    if n2 % 2:
        raise DecodeError("realified matrix must have even dimension")
    n = n2 // 2
    p = 0.5 * (y[:n, :n] + y[n:, n:])
    k = 0.5 * (y[n:, :n] - y[:n, n:])
    p = 0.5 * (p + p.T)
    k = 0.5 * (k - k.T)
    return p + 1j * k


def _decode_lifted_complex(y, pairing_tol: float = 1e-6) -> np.ndarray:
    """Top complex direction of a realified, approximately rank-2 matrix.

    Checks the pairing structure of the top-2 eigenspace: the two leading
    eigenvalues must agree and the space must be closed under the complex
    rotation J = [[0, -I], [I, 0]].
    """
    dec = sym_eig(y)
    vals, vecs = dec.values, dec.vectors
    n2 = y.shape[0]
    n = n2 // 2
    lam1 = vals[0]
    if lam1 <= 0:
        raise DecodeError("solution matrix has no positive spectrum to decode")
    pair_gap = abs(vals[0] - vals[1]) / max(1.0, lam1)
    jmat = np.zeros((n2, n2))
    jmat[:n, n:] = -np.eye(n)
    jmat[n:, :n] = np.eye(n)
    wtop = vecs[:, :2]
    rot = jmat @ vecs[:, 0]
    closure = float(np.linalg.norm(rot - wtop @ (wtop.T @ rot)))
    pairing_residual = max(pair_gap, closure)
    if pairing_residual > pairing_tol:
        raise DecodeError(f"top-2 eigenspace lacks realification pairing "
                          f"(residual {pairing_residual:.3e})")
    w = vecs[:, 0]
    z = w[:n] + 1j * w[n:]
    return z * np.sqrt(lam1)


# ---------------------------------------------------------------------------
# Unit-modulus nonlinear equations
# ---------------------------------------------------------------------------

@dataclass
class UnitModulusInstance:
    a: np.ndarray                 # m x N, real or complex
    b: np.ndarray                 # m, real or complex

    def __post_init__(self):
        self.a = np.atleast_2d(np.asarray(self.a))
        self.b = np.atleast_1d(np.asarray(self.b))
        if self.a.shape[0] != self.b.shape[0]:
            raise ValueError("row count mismatch between A and b")
        if not (np.all(np.isfinite(self.a.real)) and np.all(np.isfinite(self.b.real))):
            raise ValueError("non-finite data")

    @property
    def n(self) -> int:
        return self.a.shape[1]

    def equation_residual(self, theta) -> float:
        x = np.exp(1j * np.asarray(theta, dtype=float))
        return float(np.linalg.norm(self.a @ x - self.b))


@dataclass
class UnitModulusResult:
    theta: np.ndarray
    equation_residual: float
    modulus_residual: float
    ok: bool


def encode_unit_modulus(inst: UnitModulusInstance) -> LmeProblem:
    """Lift A e^{i theta} = b over [1; x][1; x]^H and realify (target rank 2)."""
    n = inst.n
    n_c = n + 1
    dim = 2 * n_c
    complex_b = bool(np.iscomplexobj(inst.b))
    rows: list[LmeRow] = []
    for i in range(n_c):
        e = np.zeros((n_c, n_c), dtype=complex)
        e[i, i] = 1.0
        for coef, rhs, sense in complex_row_realified(e, 1.0):
            rows.append(LmeRow(coef=coef, rhs=rhs, sense=sense))
    for j in range(inst.a.shape[0]):
        c = np.zeros((n_c, n_c), dtype=complex)
        c[0, 1:] = inst.a[j]
        for coef, rhs, sense in complex_row_realified(c, complex(inst.b[j])):
            rows.append(LmeRow(coef=coef, rhs=rhs, sense=sense))
    rows += realification_structure_rows(n_c)
    return LmeProblem(kind="psd", n=dim, m_cols=dim, rows=rows, target_rank=2,
                      meta={"app": "unit_modulus", "n_vars": n, "complex_b": complex_b})


def decode_unit_modulus(inst: UnitModulusInstance, y, tol: float = 1e-6) -> UnitModulusResult:
    xi = _decode_lifted_complex(np.asarray(y, dtype=float))
    if abs(xi[0]) < 1e-6:
        raise DecodeError("lifted vector has vanishing homogenization entry")
    x = xi[1:] / xi[0]
    theta = np.angle(x)
    modulus_residual = float(np.max(np.abs(np.abs(x) - 1.0))) if len(x) else 0.0
    eq_res = inst.equation_residual(theta)
    ok = eq_res <= tol * (1.0 + float(np.linalg.norm(inst.b))) and modulus_residual <= tol
    return UnitModulusResult(theta=theta, equation_residual=eq_res,
                             modulus_residual=modulus_residual, ok=ok)


# ---------------------------------------------------------------------------
# Fourier phase retrieval with amplitude constraints
# ---------------------------------------------------------------------------

def dft_matrix(n: int) -> np.ndarray:
    """Unnormalized DFT matrix with entries exp(-2 pi i k l / n)."""
    k = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(k, k) / n)


@dataclass
class PhaseRetrievalInstance:
    power_spectrum: np.ndarray    # |D x|^2, length N
    amp_bound: float              # bound on |x_i|^2

    def __post_init__(self):
        self.power_spectrum = np.asarray(self.power_spectrum, dtype=float)
        if np.any(self.power_spectrum < 0):
            raise ValueError("magnitude-squared spectrum must be nonnegative")
        if self.amp_bound < 0:
            raise ValueError("amplitude bound must be nonnegative")

    @property
    def n(self) -> int:
        return len(self.power_spectrum)


@dataclass
class PhaseRetrievalResult:
    signal: np.ndarray
    spectrum_residual: float
    amplitude_excess: float
    ok: bool


def encode_phase_retrieval(inst: PhaseRetrievalInstance) -> LmeProblem:
    n = inst.n
    n_c = n + 1
    dim = 2 * n_c
    d = dft_matrix(n)
    rows: list[LmeRow] = []
    e = np.zeros((n_c, n_c), dtype=complex)
    e[0, 0] = 1.0
    for coef, rhs, sense in complex_row_realified(e, 1.0):
        rows.append(LmeRow(coef=coef, rhs=rhs, sense=sense))
    for k in range(n):
        h = d[k].conj()
        c = np.zeros((n_c, n_c), dtype=complex)
        c[1:, 1:] = np.outer(h, h.conj())
        for coef, rhs, sense in complex_row_realified(c, float(inst.power_spectrum[k])):
            rows.append(LmeRow(coef=coef, rhs=rhs, sense=sense))
    for i in range(n):
        c = np.zeros((n_c, n_c), dtype=complex)
        c[1 + i, 1 + i] = 1.0
        for coef, rhs, sense in complex_row_realified(c, float(inst.amp_bound), sense=LEQ):
            rows.append(LmeRow(coef=coef, rhs=rhs, sense=sense))
    rows += realification_structure_rows(n_c)
    return LmeProblem(kind="psd", n=dim, m_cols=dim, rows=rows, target_rank=2,
                      meta={"app": "phase_retrieval", "n_vars": n})


def decode_phase_retrieval(inst: PhaseRetrievalInstance, y,
                           tol: float = 1e-6) -> PhaseRetrievalResult:
    xi = _decode_lifted_complex(np.asarray(y, dtype=float))
    if abs(xi[0]) < 1e-6:
        raise DecodeError("lifted vector has vanishing homogenization entry")
    x = xi[1:] / xi[0]
    nz = np.nonzero(np.abs(x) > 1e-6)[0]
    if len(nz):
        x = x * np.exp(-1j * np.angle(x[nz[0]]))
    d = dft_matrix(inst.n)
    spec = np.abs(d @ x) ** 2
    spec_res = float(np.max(np.abs(spec - inst.power_spectrum))) if inst.n else 0.0
    amp_excess = float(np.max(np.abs(x) ** 2 - inst.amp_bound, initial=0.0))
    ok = spec_res <= tol * (1.0 + float(np.max(inst.power_spectrum, initial=0.0))) \
        and amp_excess <= 1e-8 + tol
    return PhaseRetrievalResult(signal=x, spectrum_residual=spec_res,
                                amplitude_excess=amp_excess, ok=ok)


# ---------------------------------------------------------------------------
# Linear complementarity (general symmetric case)
# ---------------------------------------------------------------------------

@dataclass
class LcpInstance:
    m_matrix: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        self.m_matrix = np.asarray(self.m_matrix, dtype=float)
        self.q = np.asarray(self.q, dtype=float)
        n = len(self.q)
        if self.m_matrix.shape != (n, n):
            raise ValueError("M must be square and match q")
        if np.linalg.norm(self.m_matrix - self.m_matrix.T) > 1e-12 * max(1.0, np.linalg.norm(self.m_matrix)):
            raise ValueError("M must be symmetric")


@dataclass
class LcpResult:
    w: np.ndarray
    z: np.ndarray
    complementarity_gap: float
    equation_residual: float
    nonneg_violation: float
    ok: bool


def encode_lcp(inst: LcpInstance) -> LmeProblem:
    """Lift w = Mz + q, w'z = 0, w,z >= 0 over [1; w; z][1; w; z]'."""
    n = len(inst.q)
    dim = 2 * n + 1
    rows = [_lift_corner_row(dim)]
    comp = np.zeros((dim, dim))
    for i in range(n):
        comp[1 + i, n + 1 + i] = comp[n + 1 + i, 1 + i] = 0.5
    rows.append(LmeRow(coef=comp, rhs=0.0))
    for i in range(n):
        c = np.zeros((dim, dim))
        c[1 + i, 0] = c[0, 1 + i] = 0.5
        for j in range(n):
            c[n + 1 + j, 0] -= 0.5 * inst.m_matrix[i, j]
            c[0, n + 1 + j] -= 0.5 * inst.m_matrix[i, j]
        rows.append(LmeRow(coef=c, rhs=float(inst.q[i])))
    for i in range(1, dim):
        c = np.zeros((dim, dim))
        c[i, 0] = c[0, i] = 0.5
        rows.append(LmeRow(coef=c, rhs=0.0, sense=GEQ))
    return LmeProblem(kind="psd", n=dim, m_cols=dim, rows=rows, target_rank=1,
                      meta={"app": "lcp", "n_vars": n})


def decode_lcp(inst: LcpInstance, x_mat, tol: float = 1e-6) -> LcpResult:
    x_mat = np.asarray(x_mat, dtype=float)
    n = len(inst.q)
    w = x_mat[1:n + 1, 0].copy()
    z = x_mat[n + 1:, 0].copy()
    gap = abs(float(w @ z))
    eq_res = float(np.linalg.norm(w - inst.m_matrix @ z - inst.q))
    nn = -float(min(np.min(w, initial=0.0), np.min(z, initial=0.0)))
    scale = 1.0 + float(np.linalg.norm(inst.q))
    ok = gap <= tol * scale and eq_res <= tol * scale and nn <= tol
    return LcpResult(w=w, z=z, complementarity_gap=gap, equation_residual=eq_res,
                     nonneg_violation=max(0.0, nn), ok=ok)

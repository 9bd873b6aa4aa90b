"""Convex reformulation of one bias-free two-layer ReLU grade, at toy scale.

For data X (n x p), target e and a linear operator A (n x n), the nonconvex
problem

    min_{w_j, alpha_j} || e - A sum_j (X w_j)_+ alpha_j ||^2

has the same optimum as the cone-constrained least squares

    min || e - A sum_i D_i X (v_i - u_i) ||^2   s.t.  (2 D_i - I) X v_i >= 0,  (2 D_i - I) X u_i >= 0

over all achievable ReLU sign patterns D_i.  This module enumerates the
patterns, solves the convex program, rebuilds network weights from its
solution and compares against multi-start Adam on the nonconvex form.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import null_space
from scipy.optimize import linprog

from .grid import GridSpec, build_grid
from .helmholtz import operator_matrix

MARGIN = 1e-9
MAX_N, MAX_P = 12, 4


@dataclass(frozen=True, eq=False)
class TrainingSlice:
    X: np.ndarray
    e: np.ndarray
    A: np.ndarray

    def __post_init__(self):
        n = self.X.shape[0]
        if self.e.shape != (n,) or self.A.shape != (n, n):
            raise ValueError(f"inconsistent shapes X {self.X.shape}, e {self.e.shape}, A {self.A.shape}")
        if not (np.all(np.isfinite(self.X)) and np.all(np.isfinite(self.e)) and np.all(np.isfinite(self.A))):
            raise ValueError("non-finite entries in training slice")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def digest(self) -> str:
        h = hashlib.sha256()
        for arr in (self.X, self.e, self.A):
            h.update(np.ascontiguousarray(arr, dtype=np.float64).tobytes())
        return h.hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class PatternSet:
    patterns: np.ndarray  # (P, n) 0/1
    witnesses: np.ndarray  # (P, p)

    def __len__(self) -> int:
        return self.patterns.shape[0]


@dataclass(eq=False)
class ConvexSolution:
    v: np.ndarray  # (P, p)
    u: np.ndarray  # (P, p)
    objective: float
    feasibility: float
    stationarity: float
    converged: bool
    message: str = ""


@dataclass(eq=False)
class TwoLayerRelu:
    W: np.ndarray  # (m_l, p), rows are neuron directions
    alpha: np.ndarray  # (m_l,)

    def __call__(self, X: np.ndarray) -> np.ndarray:
        return np.maximum(X @ self.W.T, 0.0) @ self.alpha


@dataclass
class DualityReport:
    instance: str
    p_nc: float
    p_c: float
    m_star: int
    m_l: int
    gap: float
    reconstruction_ok: bool
    width_ok: bool
    reconstructed_objective: float | None
    pattern_count: int
    pattern_norms: list[tuple[float, float]] = field(default_factory=list)
    solver_message: str = ""

    def as_dict(self) -> dict:
        return dict(self.__dict__)


class WidthError(ValueError):
    pass


class FeasibilityError(RuntimeError):
    pass


def pattern_bound(n: int, p: int) -> int:
    """Region count of n generic hyperplanes through the origin in R^p."""
    return 2 * sum(math.comb(n - 1, j) for j in range(p))


def sign_pattern(X: np.ndarray, w: np.ndarray) -> np.ndarray:
    return (X @ w >= 0).astype(np.int8)


def _lp_witness(X: np.ndarray, D: np.ndarray, closed_on: bool) -> np.ndarray | None:
    """Max-margin witness for pattern D; None if the margin stays below MARGIN.

    ``closed_on`` keeps the D = 1 rows at >= 0 and puts the margin on the D = 0
    side only.
    """
    n, p = X.shape
    s = 2.0 * D - 1.0
    # variables (w, t); maximize t
    rows = -(s[:, None] * X)
    coef_t = np.ones(n)
    if closed_on:
        coef_t = np.where(D == 1, 0.0, 1.0)
    A_ub = np.hstack([rows, coef_t[:, None]])
    res = linprog(np.r_[np.zeros(p), -1.0], A_ub=A_ub, b_ub=np.zeros(n),
                  bounds=[(-1.0, 1.0)] * p + [(None, 1.0)], method="highs")
    if res.status != 0 or -res.fun < MARGIN:
        return None
    w = res.x[:p]
    if not np.array_equal(sign_pattern(X, w), D):
        return None
    return w


def enumerate_patterns(X: np.ndarray) -> PatternSet:
    """All sign patterns 1[X w >= 0] with a witness each (exhaustive 2^n scan).

    w = 0 supplies the all-ones pattern, so the count can exceed the open-region
    bound by one.
    """
    X = np.asarray(X, dtype=np.float64)
    n, p = X.shape
    if n > MAX_N or p > MAX_P:
        raise ValueError(f"pattern scan limited to n <= {MAX_N}, p <= {MAX_P}; got n={n}, p={p}")
    pats, wits = [], []
    for code in range(2**n):
        D = np.array([(code >> (n - 1 - i)) & 1 for i in range(n)], dtype=np.int8)
        w = _lp_witness(X, D, closed_on=False)
        if w is None and D.all():
            w = np.zeros(p)
        if w is None:
            w = _lp_witness(X, D, closed_on=True)
        if w is not None:
            pats.append(D)
            wits.append(w)
    return PatternSet(np.array(pats, dtype=np.int8).reshape(-1, n), np.array(wits).reshape(-1, p))


# convex program ---------------------------------------------------------------

def _blocks(slc: TrainingSlice, ps: PatternSet):
    """Design B (z -> A sum D_i X (v_i - u_i)) and constraint matrix G (G z >= 0)."""
    P, p = len(ps), slc.p
    DX = [ps.patterns[i][:, None] * slc.X for i in range(P)]
    B = slc.A @ np.hstack(DX + [-m for m in DX])
    G = np.zeros((2 * P * slc.n, 2 * P * p))
    for i in range(2 * P):
        D = ps.patterns[i % P]
        G[i * slc.n:(i + 1) * slc.n, i * p:(i + 1) * p] = (2.0 * D - 1.0)[:, None] * slc.X
    return B, G


def _penalty_newton(B, G, e, z, mu, iters=100):
    """Minimize ||e - Bz||^2 + mu ||(Gz)_-||^2; the objective is piecewise quadratic, Newton is exact per piece."""
    def value(z):
        r = e - B @ z
        viol = np.minimum(G @ z, 0.0)
        return r @ r + mu * viol @ viol

    BtB, Bte = B.T @ B, B.T @ e
    f = value(z)
    for _ in range(iters):
        act = (G @ z) < 0
        Ga = G[act]
        grad = 2.0 * (BtB @ z - Bte) + 2.0 * mu * Ga.T @ (Ga @ z)
        if np.linalg.norm(grad) <= 1e-13 * (1.0 + np.linalg.norm(Bte)) * max(1.0, mu):
            break
        H = 2.0 * (BtB + mu * Ga.T @ Ga)
        step = -np.linalg.lstsq(H, grad, rcond=None)[0]
        t = 1.0
        while t > 1e-12:
            cand = z + t * step
            fc = value(cand)
            if fc <= f + 1e-4 * t * (grad @ step):
                break
            t *= 0.5
        if t <= 1e-12:
            break
        z, f = cand, fc
    return z


def _active_set_polish(B, G, e, z, max_iter=200):
    """Primal-dual active-set cleanup: exact equality-constrained LS on a working set, repaired until KKT holds."""
    scale = 1.0 + np.abs(G).max() * (1.0 + np.abs(z).max())
    work = set(np.flatnonzero(G @ z <= 1e-7 * scale).tolist())
    best = None
    for _ in range(max_iter):
        idx = np.array(sorted(work), dtype=int)
        if idx.size:
            N = null_space(G[idx])
        else:
            N = np.eye(G.shape[1])
        if N.shape[1] == 0:
            zc = np.zeros(G.shape[1])
        else:
            zc = N @ np.linalg.lstsq(B @ N, e, rcond=None)[0]
        grad = 2.0 * B.T @ (B @ zc - e)
        lam = np.linalg.lstsq(G[idx].T, grad, rcond=None)[0] if idx.size else np.zeros(0)
        slack = G @ zc
        viol = max(0.0, -slack.min()) if slack.size else 0.0
        stat = np.linalg.norm(grad - (G[idx].T @ lam if idx.size else 0.0))
        best = (zc, viol, stat, lam, idx)
        if viol > 1e-10 * scale:
            work.add(int(np.argmin(slack)))
            continue
        if lam.size and lam.min() < -1e-9 * (1.0 + np.abs(lam).max()):
            work.discard(int(idx[np.argmin(lam)]))
            continue
        return zc, viol, stat, True
    zc, viol, stat, _, _ = best
    return zc, viol, stat, False


def solve_convex_program(slc: TrainingSlice, ps: PatternSet, mu_max: float = 1e8) -> ConvexSolution:
    """Penalty homotopy (mu = 1, 10, ..., mu_max) followed by an exact active-set cleanup."""
    P, p = len(ps), slc.p
    if not np.any(slc.e):
        return ConvexSolution(np.zeros((P, p)), np.zeros((P, p)), 0.0, 0.0, 0.0, True, "zero target")
    B, G = _blocks(slc, ps)
    z = np.zeros(B.shape[1])
    mu = 1.0
    while mu <= mu_max:
        z = _penalty_newton(B, G, slc.e, z, mu)
        mu *= 10.0
    z, viol, stat, ok = _active_set_polish(B, G, slc.e, z)
    # objective at a clean zero is always available; never report worse than it
    r = slc.e - B @ z
    obj = float(r @ r)
    ok = ok and viol <= 1e-8 and stat <= 1e-7 * max(1.0, np.linalg.norm(B.T @ slc.e))
    msg = "converged" if ok else f"cleanup incomplete: violation {viol:.2e}, stationarity {stat:.2e}"
    sol = ConvexSolution(z[: P * p].reshape(P, p), z[P * p:].reshape(P, p), obj, viol, stat, ok, msg)
    if not ok:
        raise FeasibilityError(msg)
    return sol


def convex_objective(slc: TrainingSlice, ps: PatternSet, v: np.ndarray, u: np.ndarray) -> float:
    y = sum(ps.patterns[i] * (slc.X @ (v[i] - u[i])) for i in range(len(ps)))
    r = slc.e - slc.A @ y
    return float(r @ r)


# reconstruction and nonconvex baseline ---------------------------------------------

def _nonzero(vec: np.ndarray, tol: float = 1e-12) -> bool:
    return float(np.linalg.norm(vec)) > tol


def m_star(sol: ConvexSolution) -> int:
    return int(sum(_nonzero(v) for v in sol.v) + sum(_nonzero(u) for u in sol.u))


def reconstruct_weights(sol: ConvexSolution, m_l: int) -> TwoLayerRelu:
    need = m_star(sol)
    if m_l < need:
        raise WidthError(f"width {m_l} below m_star = {need}")
    p = sol.v.shape[1]
    W, alpha = np.zeros((m_l, p)), np.zeros(m_l)
    j = 0
    for vec, sign in [(v, 1.0) for v in sol.v] + [(u, -1.0) for u in sol.u]:
        if _nonzero(vec):
            norm = np.linalg.norm(vec)
            W[j], alpha[j] = vec / norm, sign * norm
            j += 1
    return TwoLayerRelu(W, alpha)


def nonconvex_objective(slc: TrainingSlice, net: TwoLayerRelu) -> float:
    r = slc.e - slc.A @ net(slc.X)
    return float(r @ r)


def solve_nonconvex_multistart(slc: TrainingSlice, m_l: int, restarts: int = 20, epochs: int = 3000,
                               lr: tuple[float, float] = (1e-2, 1e-4), seed=0,
                               extra_starts: list[TwoLayerRelu] | None = None) -> tuple[float, TwoLayerRelu]:
    """Best objective seen over batched Adam runs (Xavier starts, the zero network and ``extra_starts``)."""
    if m_l < 1:
        raise ValueError("width must be positive")
    rng = np.random.default_rng(seed)
    X, e, A = slc.X, slc.e, slc.A
    n, p = X.shape
    bound = np.sqrt(6.0 / (p + m_l))
    W = rng.uniform(-bound, bound, size=(restarts, m_l, p))
    a = rng.uniform(-np.sqrt(6.0 / (m_l + 1)), np.sqrt(6.0 / (m_l + 1)), size=(restarts, m_l))
    for net in [TwoLayerRelu(np.zeros((m_l, p)), np.zeros(m_l))] + list(extra_starts or []):
        W = np.concatenate([W, net.W[None]], axis=0)
        a = np.concatenate([a, net.alpha[None]], axis=0)
    R = W.shape[0]
    params = [W, a]
    m1 = [np.zeros_like(q) for q in params]
    m2 = [np.zeros_like(q) for q in params]
    gamma = math.log(lr[0] / lr[1]) / max(epochs, 1)
    best_val, best = math.inf, None

    def evaluate(W, a):
        Z = np.einsum("np,rmp->rnm", X, W)
        H = np.maximum(Z, 0.0)
        y = np.einsum("rnm,rm->rn", H, a)
        r = e[None, :] - y @ A.T
        return Z, H, r, np.einsum("rn,rn->r", r, r)

    for k in range(epochs + 1):
        Z, H, r, vals = evaluate(W, a)
        vals = np.where(np.isfinite(vals), vals, np.inf)
        i = int(np.argmin(vals))
        if vals[i] < best_val:
            best_val, best = float(vals[i]), TwoLayerRelu(W[i].copy(), a[i].copy())
        if k == epochs:
            break
        dy = -2.0 * r @ A
        ga = np.einsum("rnm,rn->rm", H, dy)
        dZ = dy[:, :, None] * a[:, None, :] * (Z > 0)
        gW = np.einsum("rnm,np->rmp", dZ, X)
        step = lr[0] * math.exp(-gamma * k)
        for q, g, s1, s2 in zip(params, (gW, ga), m1, m2):
            g = np.nan_to_num(g, nan=0.0, posinf=0.0, neginf=0.0)
            s1 *= 0.9
            s1 += 0.1 * g
            s2 *= 0.999
            s2 += 0.001 * g * g
            q -= step * (s1 / (1 - 0.9 ** (k + 1))) / (np.sqrt(s2 / (1 - 0.999 ** (k + 1))) + 1e-8)
    return best_val, best


def certify(slc: TrainingSlice, m_l: int | None = None, restarts: int = 20, epochs: int = 3000,
            seed=0) -> DualityReport:
    ps = enumerate_patterns(slc.X)
    sol = solve_convex_program(slc, ps)
    ms = m_star(sol)
    width = max(ms, 1) if m_l is None else m_l
    extra, rec_obj, width_ok = [], None, True
    try:
        net = reconstruct_weights(sol, width)
        rec_obj = nonconvex_objective(slc, net)
        extra.append(net)
    except WidthError:
        width_ok = False
    p_nc, _ = solve_nonconvex_multistart(slc, max(width, 1), restarts, epochs, seed=seed, extra_starts=extra)
    if p_nc < sol.objective - 1e-8:
        raise AssertionError(f"nonconvex value {p_nc} below convex optimum {sol.objective}")
    rec_ok = rec_obj is not None and abs(rec_obj - sol.objective) <= 1e-8
    return DualityReport(slc.digest(), p_nc, sol.objective, ms, width, p_nc - sol.objective, rec_ok, width_ok,
                         rec_obj, len(ps), [(float(np.linalg.norm(v)), float(np.linalg.norm(u)))
                                            for v, u in zip(sol.v, sol.u)], sol.message)


def random_instance(n: int, p: int, seed=0, kappa_range=(0.5, 3.0)) -> TrainingSlice:
    """Gaussian data and target; A is the 1D interior operator on m = n nodes of (0, 1)."""
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, p))
    e = rng.standard_normal(n)
    kappa = rng.uniform(*kappa_range)
    grid = build_grid(GridSpec(0.0, 1.0, n, 1))
    A = operator_matrix(grid, np.full(n, kappa**2)).toarray()
    return TrainingSlice(X, e, A)

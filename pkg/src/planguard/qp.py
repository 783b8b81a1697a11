"""Small dense quadratic programs for control filtering.

Problem form (identity Hessian, the projection of a nominal control onto a
polytope):

    u* = argmin_u  1/2 ||u - u_nom||^2
    s.t.           a_i . u + b_i >= 0   for every constraint row i
                   lower <= u <= upper  (optional, per component)

Solved with a primal active-set method. Feasibility (and emptiness of the
polytope) is decided by a phase-1 pass: a cheap sequential-projection search
first, then an exact max-margin linear program when that fails. The identity
Hessian makes every equality-constrained subproblem a plain least-squares
projection, so iterations are a few small dense solves. A single row without
box bounds is the textbook halfspace projection and is answered in closed
form; both paths satisfy the same KKT conditions and share the oracle tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.optimize import linprog

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"

_FEAS_TOL = 1e-9        # how negative a residual may be and still count feasible
_TIE_TOL = 1e-12
_SMALL_N = 4            # scalar fast path bounds: ndarray overhead dominates
_SMALL_M = 16           # below these sizes, so small problems run list-based


class QpIterationError(RuntimeError):
    """Iteration cap exceeded: indicates a solver bug, not a hard problem."""


class ConstraintRow(NamedTuple):
    """Affine inequality a . u + b >= 0."""

    a: np.ndarray
    b: float
    name: str = ""

    def residual(self, u: np.ndarray) -> float:
        return float(np.dot(self.a, u) + self.b)


@dataclass
class QpProblem:
    u_nom: np.ndarray
    rows: list[ConstraintRow] = field(default_factory=list)
    lower: np.ndarray | None = None       # per-component, -inf allowed
    upper: np.ndarray | None = None


@dataclass
class QpSolution:
    status: str
    u: np.ndarray | None
    active: tuple[int, ...] = ()          # indices into problem.rows, tight at u*
    row_duals: np.ndarray | None = None
    box_dual_lower: np.ndarray | None = None
    box_dual_upper: np.ndarray | None = None
    iterations: int = 0
    modified: bool = True                 # False when u* is exactly u_nom


def solve_qp(problem: QpProblem, max_iter: int = 100, start: np.ndarray | None = None) -> QpSolution:
    """Solve the projection QP; see module docstring for the problem form."""
    u_nom = np.asarray(problem.u_nom, dtype=np.float64)
    if u_nom.ndim != 1:
        u_nom = u_nom.reshape(-1)
    n = u_nom.shape[0]
    m_orig = len(problem.rows)
    has_box = problem.lower is not None or problem.upper is not None
    if has_box:
        lo = np.full(n, -np.inf) if problem.lower is None else np.asarray(problem.lower, dtype=np.float64)
        hi = np.full(n, np.inf) if problem.upper is None else np.asarray(problem.upper, dtype=np.float64)
        if lo.shape != (n,) or hi.shape != (n,):
            raise ValueError("box bounds must match the control dimension")
        if 0 < m_orig <= _SMALL_M and n <= _SMALL_N:
            fast = _solve_small_box(problem.rows, u_nom, lo, hi, m_orig)
            if fast is not None:
                return fast
        if np.any(lo > hi):
            return QpSolution(INFEASIBLE, None)
    else:
        lo = hi = None
    # a non-finite entry makes the sum non-finite (inf - inf is nan)
    if not math.isfinite(float(u_nom.sum())):
        raise ValueError("u_nom must be finite")

    # normalize rows to unit gradients; constant rows resolve immediately
    if m_orig:
        if m_orig == 1:
            a = np.asarray(problem.rows[0].a, dtype=np.float64)
            if a.shape != (n,):
                raise ValueError(f"rows must have dimension ({n},)")
            A0 = a.reshape(1, n)
            b0 = np.array([problem.rows[0].b], dtype=np.float64)
        else:
            A0 = np.empty((m_orig, n))
            b0 = np.empty(m_orig)
            for i, r in enumerate(problem.rows):
                a = np.asarray(r.a, dtype=np.float64)
                if a.shape != (n,):
                    raise ValueError(f"rows must have dimension ({n},)")
                A0[i] = a
                b0[i] = r.b
        norms = np.sqrt(np.einsum("ij,ij->i", A0, A0))
        zero = norms < 1e-14
        if zero.any():
            if np.any(b0[zero] < -_FEAS_TOL):
                return QpSolution(INFEASIBLE, None)
            keep = ~zero
            row_index = np.flatnonzero(keep)
            A0, b0, norms = A0[keep], b0[keep], norms[keep]
        else:
            row_index = np.arange(m_orig)
        A0 = A0 / norms[:, None]
        b0 = b0 / norms
    else:
        A0 = np.empty((0, n))
        b0 = np.empty(0)
        norms = np.empty(0)
        row_index = np.arange(0)
    n_rows = len(b0)

    empty_duals = (np.zeros(m_orig), np.zeros(n), np.zeros(n))

    if n_rows == 0 and not has_box:
        return QpSolution(OPTIMAL, u_nom.copy(), (), *empty_duals, modified=False)

    if not has_box:
        res_nom = A0 @ u_nom + b0
        i_min = int(np.argmin(res_nom))
        if res_nom[i_min] >= -_FEAS_TOL:
            active = tuple(int(row_index[k]) for k in np.flatnonzero(res_nom <= 1e-9))
            return QpSolution(OPTIMAL, u_nom.copy(), active, *empty_duals, modified=False)
        # projecting onto the most-violated halfspace alone is the projection
        # onto a superset of the feasible set; if that candidate satisfies
        # every other row it is therefore the full optimum
        r_min = res_nom[i_min]
        u_c = u_nom - r_min * A0[i_min]
        res_c = A0 @ u_c + b0
        if res_c.min() >= -_FEAS_TOL:
            row_duals = np.zeros(m_orig)
            row_duals[row_index[i_min]] = -r_min / norms[i_min]
            active = tuple(int(row_index[k]) for k in np.flatnonzero(res_c <= 1e-9))
            return QpSolution(OPTIMAL, u_c, active, row_duals, np.zeros(n), np.zeros(n), 1)
        if n_rows == 1:
            raise QpIterationError("single halfspace projection failed its own row")
        u0 = u_nom.copy()
    else:
        u0 = np.minimum(np.maximum(u_nom, lo), hi)
        res0 = A0 @ u0 + b0 if n_rows else np.empty(0)
        if n_rows == 0 or res0.min() >= -_FEAS_TOL:
            # the feasible set lies inside the box, so the box projection
            # of the nominal is the full projection when the rows pass
            row_duals, bd_lo, bd_hi = empty_duals
            d = u0 - u_nom
            bd_lo[:] = np.maximum(d, 0.0)
            bd_hi[:] = np.maximum(-d, 0.0)
            active = tuple(int(row_index[k]) for k in np.flatnonzero(res0 <= 1e-9)) if n_rows else ()
            return QpSolution(OPTIMAL, u0, active, row_duals, bd_lo, bd_hi, modified=bool(d.any()))
        # when every row pins a single axis (unit rows are then +-e_j)
        # the whole problem separates per component
        col = np.abs(A0).argmax(axis=1)
        signs = A0[np.arange(n_rows), col]
        if float(np.abs(signs).min()) == 1.0:
            return _separable_box(
                u_nom.tolist(), b0.tolist(), col.tolist(), signs.tolist(),
                lo.tolist(), hi.tolist(), row_index.tolist(), norms.tolist(), m_orig,
            )
        # exact projection onto (most violated row) ∩ box; projecting onto
        # a superset of the feasible set, so when the candidate satisfies
        # every remaining row it is the global optimum
        i0 = int(np.argmin(res0))
        step = _row_box_projection(
            u_nom.tolist(), A0[i0].tolist(), float(b0[i0]), lo.tolist(), hi.tolist()
        )
        if step is None:
            # the most violated row alone cannot be met inside the box
            return QpSolution(INFEASIBLE, None)
        u_c = np.array(step[0])
        lam = step[1]
        res_c = A0 @ u_c + b0
        if res_c.min() >= -_FEAS_TOL:
            row_duals = np.zeros(m_orig)
            row_duals[row_index[i0]] = lam / norms[i0]
            delta = u_c - u_nom - lam * A0[i0]
            bd_lo = np.maximum(delta, 0.0)
            bd_hi = np.maximum(-delta, 0.0)
            active = tuple(int(row_index[k]) for k in np.flatnonzero(res_c <= 1e-9))
            return QpSolution(OPTIMAL, u_c, active, row_duals, bd_lo, bd_hi, 1)

    # append finite box faces as ordinary rows: e_j u - lo >= 0, hi - e_j u >= 0
    box_index: list[tuple[int, int]] = []
    if has_box:
        eye = np.eye(n)
        extra_a, extra_b = [], []
        for j in range(n):
            if np.isfinite(lo[j]):
                extra_a.append(eye[j])
                extra_b.append(-lo[j])
                box_index.append((j, +1))
        for j in range(n):
            if np.isfinite(hi[j]):
                extra_a.append(-eye[j])
                extra_b.append(hi[j])
                box_index.append((j, -1))
        if extra_a:
            A = np.vstack([A0, extra_a])
            b = np.concatenate([b0, extra_b])
        else:
            A, b = A0, b0
    else:
        A, b = A0, b0
    m = len(b)

    def finish(u: np.ndarray, duals_norm: np.ndarray, iters: int) -> QpSolution:
        res = A @ u + b
        if res.min() < -1e-8:
            raise QpIterationError(f"solver returned an infeasible point (residual {res.min():.2e})")
        row_duals = np.zeros(m_orig)
        row_duals[row_index] = duals_norm[:n_rows] / norms
        bd_lo, bd_hi = np.zeros(n), np.zeros(n)
        for k, (j, sign) in enumerate(box_index):
            lam = duals_norm[n_rows + k]
            if sign > 0:
                bd_lo[j] = lam
            else:
                bd_hi[j] = lam
        active = tuple(int(row_index[k]) for k in range(n_rows) if res[k] <= 1e-9)
        return QpSolution(
            OPTIMAL, u, active, row_duals, bd_lo, bd_hi, iters,
            modified=not np.array_equal(u, u_nom),
        )

    u_start = _feasible_point(A, b, lo, hi, u0, start)
    if u_start is None:
        return QpSolution(INFEASIBLE, None)

    return _active_set(A, b, u_nom, u_start, max_iter, finish)


def _solve_small_box(rows, u_nom, lo, hi, m_orig):
    """Scalar solve for small boxed problems; None defers to the array path.

    Covers the overwhelmingly common outcomes of a per-tick filter call --
    nominal already feasible after the box clip, all rows axis-aligned, or
    a single binding row -- without ndarray temporaries, whose construction
    overhead dominates solve time at this size. Falls back (returns None)
    exactly when the general active-set iteration is required.
    """
    n = u_nom.shape[0]
    nom = u_nom.tolist()
    for v in nom:
        if not math.isfinite(v):
            raise ValueError("u_nom must be finite")
    lo_l = lo.tolist()
    hi_l = hi.tolist()
    for j in range(n):
        if lo_l[j] > hi_l[j]:
            return QpSolution(INFEASIBLE, None)
    # normalize to unit gradients; constant rows resolve immediately
    As: list[list[float]] = []
    bs: list[float] = []
    norms_l: list[float] = []
    ridx: list[int] = []
    cols: list[int] = []
    all_axis = True
    for i in range(m_orig):
        row = rows[i]
        a = row.a
        al = a.tolist() if isinstance(a, np.ndarray) else [float(v) for v in a]
        if len(al) != n:
            raise ValueError(f"rows must have dimension ({n},)")
        nz = 0
        col = -1
        s = 0.0
        for j in range(n):
            v = al[j]
            if v != 0.0:
                s += v * v
                nz += 1
                col = j
        if s < 1e-28:
            if row.b < -_FEAS_TOL:
                return QpSolution(INFEASIBLE, None)
            continue
        if nz == 1:
            v = al[col]
            norm = -v if v < 0.0 else v
            unit = [0.0] * n
            unit[col] = 1.0 if v > 0.0 else -1.0
            As.append(unit)
        else:
            norm = math.sqrt(s)
            As.append([v / norm for v in al])
            all_axis = False
        bs.append(float(row.b) / norm)
        norms_l.append(norm)
        ridx.append(i)
        cols.append(col)
    n_rows = len(bs)

    u0 = [min(max(nom[j], lo_l[j]), hi_l[j]) for j in range(n)]
    res0: list[float] = []
    rmin = math.inf
    imin = -1
    for k in range(n_rows):
        ak = As[k]
        s = bs[k]
        for j in range(n):
            s += ak[j] * u0[j]
        res0.append(s)
        if s < rmin:
            rmin = s
            imin = k
    if n_rows == 0 or rmin >= -_FEAS_TOL:
        # feasible set lies inside the box: the box clip is the projection
        row_duals = np.zeros(m_orig)
        bd_lo = np.zeros(n)
        bd_hi = np.zeros(n)
        modified = False
        for j in range(n):
            d = u0[j] - nom[j]
            if d > 0.0:
                bd_lo[j] = d
                modified = True
            elif d < 0.0:
                bd_hi[j] = -d
                modified = True
        active = tuple(ridx[k] for k in range(n_rows) if res0[k] <= 1e-9)
        return QpSolution(OPTIMAL, np.array(u0), active, row_duals, bd_lo, bd_hi, modified=modified)
    if all_axis:
        signs = [As[k][cols[k]] for k in range(n_rows)]
        return _separable_box(nom, bs, cols, signs, lo_l, hi_l, ridx, norms_l, m_orig)
    # exact projection onto (most violated row) ∩ box; a superset of the
    # feasible set, so a candidate passing every other row is the optimum
    step = _row_box_projection(nom, As[imin], bs[imin], lo_l, hi_l)
    if step is None:
        return QpSolution(INFEASIBLE, None)
    u_c, lam = step
    act: list[int] = []
    for k in range(n_rows):
        ak = As[k]
        s = bs[k]
        for j in range(n):
            s += ak[j] * u_c[j]
        if s < -_FEAS_TOL:
            return None
        if s <= 1e-9:
            act.append(ridx[k])
    row_duals = np.zeros(m_orig)
    row_duals[ridx[imin]] = lam / norms_l[imin]
    bd_lo = np.zeros(n)
    bd_hi = np.zeros(n)
    ai = As[imin]
    for j in range(n):
        d = u_c[j] - nom[j] - lam * ai[j]
        if d > 0.0:
            bd_lo[j] = d
        elif d < 0.0:
            bd_hi[j] = -d
    return QpSolution(OPTIMAL, np.array(u_c), tuple(act), row_duals, bd_lo, bd_hi, 1)


def _separable_box(nom, bs, cols, signs, lo_l, hi_l, ridx, norms_l, m_orig):
    """Exact solve when every (unit) row constrains exactly one component.

    Each row is +-e_j . u + b >= 0, i.e. a one-sided cut on u_j; folding
    the cuts into the box leaves an interval per component, and the
    projection clips each component independently. List-based inputs.
    """
    n = len(nom)
    L = list(lo_l)
    U = list(hi_l)
    l_src = [-1] * n       # row that set the binding lower cut, -1 = box
    u_src = [-1] * n
    n_rows = len(bs)
    for i in range(n_rows):
        j = cols[i]
        if signs[i] > 0.0:
            cut = -bs[i]
            if cut > L[j]:
                L[j] = cut
                l_src[j] = i
        else:
            cut = bs[i]
            if cut < U[j]:
                U[j] = cut
                u_src[j] = i
    row_duals = np.zeros(m_orig)
    bd_lo = np.zeros(n)
    bd_hi = np.zeros(n)
    u = list(nom)
    active: list[int] = []
    for j in range(n):
        if L[j] > U[j]:
            if L[j] - U[j] > 2.0 * _FEAS_TOL:
                return QpSolution(INFEASIBLE, None)
            L[j] = U[j] = 0.5 * (L[j] + U[j])
        x = nom[j]
        if x < L[j]:
            x = L[j]
            src = l_src[j]
            if src < 0:
                bd_lo[j] = x - nom[j]
            else:
                row_duals[ridx[src]] = (x - nom[j]) / norms_l[src]
                active.append(ridx[src])
        elif x > U[j]:
            x = U[j]
            src = u_src[j]
            if src < 0:
                bd_hi[j] = nom[j] - x
            else:
                row_duals[ridx[src]] = (nom[j] - x) / norms_l[src]
                active.append(ridx[src])
        u[j] = x
    # rows tight at u* even with zero multiplier count as active
    for i in range(n_rows):
        if abs(signs[i] * u[cols[i]] + bs[i]) <= 1e-9:
            k = ridx[i]
            if k not in active:
                active.append(k)
    return QpSolution(
        OPTIMAL, np.array(u), tuple(sorted(active)), row_duals, bd_lo, bd_hi, 1,
        modified=u != nom,
    )


def _row_box_projection(un, al, rb, lo_l, hi_l):
    """Exact projection onto {u : a . u + rb >= 0} ∩ box (a unit norm).

    List-based inputs. The projection is u(lam) = clip(un + lam * a) for
    the smallest lam >= 0 with g(lam) = a . u(lam) + rb = 0; g is monotone
    piecewise linear with kinks where components saturate or release, so
    the root sits on a segment between consecutive kinks.  Returns the
    pair (u list, lam), or None when even the box corner cannot satisfy
    the row.
    """
    n = len(un)
    kinks: list[float] = []
    for j in range(n):
        aj = al[j]
        if aj == 0.0:
            continue
        b1, b2 = lo_l[j], hi_l[j]
        if b1 > -math.inf:
            lam = (b1 - un[j]) / aj
            if lam > 0.0:
                kinks.append(lam)
        if b2 < math.inf:
            lam = (b2 - un[j]) / aj
            if lam > 0.0:
                kinks.append(lam)
    kinks.sort()

    def g_at(lam: float) -> float:
        g = rb
        for j in range(n):
            aj = al[j]
            if aj == 0.0:
                continue
            x = un[j] + lam * aj
            if x < lo_l[j]:
                x = lo_l[j]
            elif x > hi_l[j]:
                x = hi_l[j]
            g += aj * x
        return g

    g_prev = g_at(0.0)
    lam_prev = 0.0
    lam_root = None
    for lam in kinks:
        if lam == lam_prev:
            continue
        g = g_at(lam)
        if g >= 0.0:
            if g - g_prev <= 0.0:
                lam_root = lam
            else:
                lam_root = lam_prev - g_prev * (lam - lam_prev) / (g - g_prev)
            break
        g_prev, lam_prev = g, lam
    if lam_root is None:
        # beyond the last kink only components with no finite bound in
        # their direction of motion still move
        slope = 0.0
        for j in range(n):
            aj = al[j]
            if (aj > 0.0 and hi_l[j] == math.inf) or (aj < 0.0 and lo_l[j] == -math.inf):
                slope += aj * aj
        if slope <= 1e-18:
            return None
        lam_root = lam_prev - g_prev / slope
    u = [min(max(un[j] + lam_root * al[j], lo_l[j]), hi_l[j]) for j in range(n)]
    return u, lam_root


def _feasible_point(A, b, lo, hi, u0, hint):
    """Find any point of the polytope, or None when it is empty.

    Tries the caller's hint, then sequential projection from the clipped
    nominal, then an exact max-margin LP that also certifies emptiness.
    """
    boxed = lo is not None

    def clip(u):
        return np.minimum(np.maximum(u, lo), hi) if boxed else u

    if hint is not None:
        h = clip(np.asarray(hint, dtype=np.float64).reshape(u0.shape))
        if np.all(np.isfinite(h)) and (A @ h + b).min() >= -_FEAS_TOL:
            return h
    u = u0
    for _ in range(40):
        r = A @ u + b
        i = int(np.argmin(r))
        if r[i] >= -_FEAS_TOL:
            return u
        u = clip(u - r[i] * A[i])  # rows are unit norm: lands on the violated boundary
    # exact decision: maximize the worst margin t subject to A u + b >= t
    n = u0.shape[0]
    c = np.zeros(n + 1)
    c[-1] = -1.0
    A_ub = np.hstack([-A, np.ones((len(b), 1))])
    if boxed:
        bounds = [
            (None if not np.isfinite(lo[j]) else lo[j], None if not np.isfinite(hi[j]) else hi[j])
            for j in range(n)
        ]
    else:
        bounds = [(None, None)] * n
    bounds.append((None, 1.0))
    res = linprog(c, A_ub=A_ub, b_ub=b, bounds=bounds, method="highs")
    if not res.success or res.x[-1] < -_FEAS_TOL:
        return None
    return clip(res.x[:n])


def _solve_gram(G, rhs):
    k = G.shape[0]
    if k == 1:
        g = G[0, 0]
        if abs(g) < 1e-14:
            return None
        return rhs / g
    if k == 2:
        det = G[0, 0] * G[1, 1] - G[0, 1] * G[1, 0]
        if abs(det) < 1e-14:
            return None
        return np.array(
            [
                (G[1, 1] * rhs[0] - G[0, 1] * rhs[1]) / det,
                (G[0, 0] * rhs[1] - G[1, 0] * rhs[0]) / det,
            ]
        )
    if k == 3:
        # G is a gram matrix, hence symmetric: adjugate solve
        a, b2, c = G[0, 0], G[0, 1], G[0, 2]
        d, e = G[1, 1], G[1, 2]
        f = G[2, 2]
        c00 = d * f - e * e
        c01 = c * e - b2 * f
        c02 = b2 * e - c * d
        det = a * c00 + b2 * c01 + c * c02
        if abs(det) < 1e-14:
            return None
        c11 = a * f - c * c
        c12 = b2 * c - a * e
        c22 = a * d - b2 * b2
        r0, r1, r2 = rhs
        return np.array(
            [
                (c00 * r0 + c01 * r1 + c02 * r2) / det,
                (c01 * r0 + c11 * r1 + c12 * r2) / det,
                (c02 * r0 + c12 * r1 + c22 * r2) / det,
            ]
        )
    try:
        return np.linalg.solve(G, rhs)
    except np.linalg.LinAlgError:
        return None


def _active_set(A, b, u_nom, u_start, max_iter, finish):
    m, n = A.shape
    u = u_start.copy()
    r = A @ u + b  # maintained incrementally across steps
    working = [int(i) for i in np.flatnonzero(r <= 1e-10)]
    duals = np.zeros(m)
    for it in range(1, max_iter + 1):
        if working:
            Aw = A[working]
            G = Aw @ Aw.T
            rhs = -b[working] - Aw @ u_nom
            mu = _solve_gram(G, rhs)
            if mu is None:  # degenerate working set: minimum-norm multipliers
                mu = np.linalg.lstsq(G, rhs, rcond=None)[0]
            u_eq = u_nom + Aw.T @ mu
        else:
            mu = np.zeros(0)
            u_eq = u_nom.copy()
        p = u_eq - u
        moved = float(np.dot(p, p)) > 1e-22
        if moved:
            # longest feasible step toward the equality optimum
            Ap = A @ p
            alpha = 1.0
            blocker = -1
            for i in range(m):
                if Ap[i] >= -_TIE_TOL or i in working:
                    continue
                step = max(r[i], 0.0) / (-Ap[i])
                if step < alpha - _TIE_TOL:
                    alpha = step
                    blocker = i
            u = u + alpha * p
            r = r + alpha * Ap
            if blocker >= 0:
                working.append(blocker)
                continue
        # reached the equality optimum for this working set: check duals
        if mu.size == 0 or mu.min() >= -1e-10:
            duals[:] = 0.0
            duals[working] = mu
            return finish(u, duals, it)
        working.pop(int(np.argmin(mu)))
    raise QpIterationError(f"active-set iteration cap ({max_iter}) exceeded")

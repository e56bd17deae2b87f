"""Compiled lasso kernels.

Problem solved (on centered, optionally standardized columns)::

    min_b  1/(2T) * ||yc - Xs b||^2 + lam * ||b||_1

Two solvers share the same problem:

* ``SOLVER_CD``: cyclic coordinate descent, stopping when the largest
  coefficient change in a sweep drops below ``tol``.
* ``SOLVER_ACTIVE_SET``: feature-sign active-set search (exact solves on
  the current support with a sign-aware line search). It stops when the
  KKT conditions hold. If the support's Gram matrix becomes numerically
  singular (more active columns than the window can identify) it hands the
  current iterate to coordinate descent.

The active-set solver reads Gram entries from a lazily filled cache and
keeps a Cholesky factor of the support's Gram block. Adding a column
extends the factor in place; removing one rebuilds it. ``rolling`` keeps
running cross-product sums over the window so each step's Gram matrix
costs O(p^2) rather than O(T p^2), and warm-starts from the previous
step's coefficients.

Columns are stored transposed (``XsT[j]`` is column ``j``) so coordinate
updates read contiguous memory. Constant columns are marked unusable and
their coefficient is pinned at zero.
"""

from __future__ import annotations

import numpy as np
from numba import njit

SOLVER_ACTIVE_SET = 0
SOLVER_CD = 1

_PIVOT_FLOOR = 1e-12
_KKT_RTOL = 1e-9


@njit(cache=True)
def standardize(X, scale):
    T, p = X.shape
    XsT = np.zeros((p, T))
    mu = np.zeros(p)
    sd = np.zeros(p)
    usable = np.zeros(p, dtype=np.bool_)
    for j in range(p):
        first = X[0, j]
        constant = True
        m = 0.0
        for i in range(T):
            v = X[i, j]
            m += v
            if v != first:
                constant = False
        m /= T
        mu[j] = m
        if constant:
            continue
        usable[j] = True
        if scale:
            ss = 0.0
            for i in range(T):
                d = X[i, j] - m
                ss += d * d
            s = np.sqrt(ss / T)
            sd[j] = s
            for i in range(T):
                XsT[j, i] = (X[i, j] - m) / s
        else:
            sd[j] = 1.0
            for i in range(T):
                XsT[j, i] = X[i, j] - m
    return XsT, mu, sd, usable


@njit(cache=True)
def _residual(XsT, yc, beta):
    r = yc.copy()
    p, T = XsT.shape
    for j in range(p):
        bj = beta[j]
        if bj != 0.0:
            for i in range(T):
                r[i] -= XsT[j, i] * bj
    return r


@njit(cache=True)
def objective(XsT, yc, beta, lam):
    r = _residual(XsT, yc, beta)
    T = yc.shape[0]
    return 0.5 * np.dot(r, r) / T + lam * np.sum(np.abs(beta))


@njit(cache=True)
def critical_lambda(XsT, yc, usable):
    p, T = XsT.shape
    best = 0.0
    for j in range(p):
        if usable[j]:
            g = abs(np.dot(XsT[j], yc)) / T
            if g > best:
                best = g
    return best


@njit(cache=True)
def cd_solve(XsT, yc, usable, lam, beta, tol, max_iter):
    p, T = XsT.shape
    colsq = np.zeros(p)
    for j in range(p):
        if usable[j]:
            colsq[j] = np.dot(XsT[j], XsT[j]) / T
    r = _residual(XsT, yc, beta)
    for sweep in range(1, max_iter + 1):
        dmax = 0.0
        for j in range(p):
            if not usable[j]:
                continue
            xj = XsT[j]
            g = 0.0
            for i in range(T):
                g += xj[i] * r[i]
            g = g / T + colsq[j] * beta[j]
            shrunk = abs(g) - lam
            nb = np.sign(g) * shrunk / colsq[j] if shrunk > 0.0 else 0.0
            d = nb - beta[j]
            if d != 0.0:
                for i in range(T):
                    r[i] -= xj[i] * d
                beta[j] = nb
                if abs(d) > dmax:
                    dmax = abs(d)
        if dmax < tol:
            return beta, sweep, True
    return beta, max_iter, False


@njit(cache=True)
def _chol_extend(L, k, gram, sup, j):
    """Append column ``j`` to the Cholesky factor of ``gram[sup[:k], sup[:k]]``.

    Returns False when the new pivot is not clearly positive.
    """
    for q in range(k):
        s = gram[j, sup[q]]
        for r in range(q):
            s -= L[k, r] * L[q, r]
        L[k, q] = s / L[q, q]
    s = gram[j, j]
    for r in range(k):
        s -= L[k, r] * L[k, r]
    dmax = gram[j, j]
    for q in range(k):
        if gram[sup[q], sup[q]] > dmax:
            dmax = gram[sup[q], sup[q]]
    if s <= _PIVOT_FLOOR * max(dmax, 1e-300):
        return False
    L[k, k] = np.sqrt(s)
    return True


@njit(cache=True)
def _chol_solve(L, k, rhs):
    z = np.zeros(k)
    for i in range(k):
        s = rhs[i]
        for q in range(i):
            s -= L[i, q] * z[q]
        z[i] = s / L[i, i]
    x = np.zeros(k)
    for i in range(k - 1, -1, -1):
        s = z[i]
        for q in range(i + 1, k):
            s -= L[q, i] * x[q]
        x[i] = s / L[i, i]
    return x


@njit(cache=True)
def _gram_column(XsT, j, gram, have):
    if not have[j]:
        p, T = XsT.shape
        xj = XsT[j]
        for q in range(p):
            gram[j, q] = np.dot(XsT[q], xj) / T
            gram[q, j] = gram[j, q]
        have[j] = True


@njit(cache=True)
def _support_objective(gram, idx, bA, coef, lam):
    # objective minus the constant 1/(2T)*||yc||^2
    k = coef.shape[0]
    f = 0.0
    for a in range(k):
        ca = coef[a]
        if ca != 0.0:
            s = 0.0
            for q in range(k):
                s += gram[idx[a], idx[q]] * coef[q]
            f += 0.5 * ca * s - bA[a] * ca + lam * abs(ca)
    return f


@njit(cache=True)
def new_state(p):
    """Gram cache plus a Cholesky factor of the current support.

    ``gram[j]`` holds column ``j`` of ``XsT XsT^T / T`` once ``have[j]`` is
    set. ``L[:k, :k]`` factors the Gram block of ``sup[:k]`` with
    ``k = nsup[0]``. Both stay valid while the columns do not change (a
    lambda path); callers reset ``have`` and ``nsup`` otherwise.
    """
    gram = np.zeros((p, p))
    have = np.zeros(p, dtype=np.bool_)
    L = np.zeros((p, p))
    sup = np.zeros(p, dtype=np.int64)
    nsup = np.zeros(1, dtype=np.int64)
    return gram, have, L, sup, nsup


@njit(cache=True)
def feature_sign(XsT, yc, usable, lam, beta, max_steps, gram, have, L, sup, nsup):
    """Returns (beta, steps, status); status 0 = KKT satisfied, 1 = step cap, 2 = singular support."""
    p, T = XsT.shape
    b = np.zeros(p)
    for j in range(p):
        if usable[j]:
            b[j] = np.dot(XsT[j], yc) / T
    scale = lam
    for j in range(p):
        if abs(b[j]) > scale:
            scale = abs(b[j])
    kkt_tol = _KKT_RTOL * max(scale, 1e-300)
    for j in range(p):
        if beta[j] != 0.0:
            _gram_column(XsT, j, gram, have)
    in_sup = np.zeros(p, dtype=np.bool_)
    for q in range(nsup[0]):
        in_sup[sup[q]] = True
    just_solved = False
    for steps in range(1, max_steps + 1):
        c = b.copy()
        for a in range(p):
            ba = beta[a]
            if ba != 0.0:
                ga = gram[a]
                for j in range(p):
                    c[j] -= ga[j] * ba
        theta = np.sign(beta)
        nonzero_ok = just_solved
        if not nonzero_ok:
            nonzero_ok = True
            for j in range(p):
                if beta[j] != 0.0 and abs(c[j] - lam * theta[j]) > kkt_tol:
                    nonzero_ok = False
                    break
        if nonzero_ok:
            best = -1
            worst = lam + kkt_tol
            for j in range(p):
                if usable[j] and beta[j] == 0.0 and abs(c[j]) > worst:
                    worst = abs(c[j])
                    best = j
            if best < 0:
                return beta, steps, 0
            theta[best] = np.sign(c[best])
            _gram_column(XsT, best, gram, have)
        # new support: surviving members of the factored support in their
        # order, then additions; the factor is extended when nothing left
        k_old = nsup[0]
        k = 0
        kept = 0
        idx = np.empty(p, dtype=np.int64)
        for q in range(k_old):
            if theta[sup[q]] != 0.0:
                idx[k] = sup[q]
                k += 1
        kept = k
        for j in range(p):
            if theta[j] != 0.0 and not in_sup[j]:
                idx[k] = j
                k += 1
        start = k_old if kept == k_old else 0
        for q in range(k_old):
            in_sup[sup[q]] = False
        nsup[0] = 0
        for q in range(k):
            sup[q] = idx[q]
            in_sup[idx[q]] = True
        for q in range(start, k):
            if not _chol_extend(L, q, gram, sup, sup[q]):
                for r in range(k):
                    in_sup[sup[r]] = False
                return beta, steps, 2
        nsup[0] = k
        bA = np.empty(k)
        rhs = np.empty(k)
        for a in range(k):
            bA[a] = b[sup[a]]
            rhs[a] = bA[a] - lam * theta[sup[a]]
        new = _chol_solve(L, k, rhs)
        consistent = True
        for a in range(k):
            if np.sign(new[a]) != theta[sup[a]]:
                consistent = False
                break
        if consistent:
            for a in range(k):
                beta[sup[a]] = new[a]
            just_solved = True
            continue
        # sign-aware line search from the current point towards the new solve
        old = np.empty(k)
        for a in range(k):
            old[a] = beta[sup[a]]
        best_coef = new.copy()
        best_f = _support_objective(gram, sup, bA, new, lam)
        for a in range(k):
            if old[a] != 0.0 and np.sign(new[a]) != np.sign(old[a]):
                t = old[a] / (old[a] - new[a])
                point = old + t * (new - old)
                point[a] = 0.0
                f = _support_objective(gram, sup, bA, point, lam)
                if f < best_f:
                    best_f = f
                    best_coef = point
        for a in range(k):
            beta[sup[a]] = best_coef[a]
        just_solved = False
    return beta, max_steps, 1


@njit(cache=True)
def solve(XsT, yc, usable, lam, beta, solver, tol, max_iter, gram, have, L, sup, nsup):
    """Dispatch to a solver; returns (beta, iterations, converged)."""
    for j in range(beta.shape[0]):
        if not usable[j]:
            beta[j] = 0.0
    if solver == SOLVER_CD:
        return cd_solve(XsT, yc, usable, lam, beta, tol, max_iter)
    p = XsT.shape[0]
    steps_cap = max(50, 4 * p)
    beta, steps, status = feature_sign(XsT, yc, usable, lam, beta, steps_cap, gram, have, L, sup, nsup)
    if status == 0:
        return beta, steps, True
    nsup[0] = 0
    beta, sweeps, converged = cd_solve(XsT, yc, usable, lam, beta, tol, max_iter)
    return beta, steps + sweeps, converged


@njit(cache=True)
def _original_scale(beta, mu, sd, usable, ymean):
    p = beta.shape[0]
    coef = np.zeros(p)
    intercept = ymean
    for j in range(p):
        if usable[j] and beta[j] != 0.0:
            coef[j] = beta[j] / sd[j]
            intercept -= coef[j] * mu[j]
    return intercept, coef


@njit(cache=True)
def fit(X, y, lam, beta_init, scale, solver, tol, max_iter):
    """Single fit. ``beta_init`` is on the internal (standardized) scale."""
    XsT, mu, sd, usable = standardize(X, scale)
    ymean = np.mean(y)
    yc = y - ymean
    beta = beta_init.copy()
    gram, have, L, sup, nsup = new_state(X.shape[1])
    beta, n_iter, converged = solve(XsT, yc, usable, lam, beta, solver, tol, max_iter, gram, have, L, sup, nsup)
    intercept, coef = _original_scale(beta, mu, sd, usable, ymean)
    return intercept, coef, beta, n_iter, converged


@njit(cache=True)
def path(X, y, grid, scale, solver, tol, max_iter):
    """Warm-started fits over a descending lambda grid."""
    XsT, mu, sd, usable = standardize(X, scale)
    ymean = np.mean(y)
    yc = y - ymean
    L = grid.shape[0]
    p = X.shape[1]
    coefs = np.zeros((L, p))
    intercepts = np.zeros(L)
    converged = np.ones(L, dtype=np.bool_)
    beta = np.zeros(p)
    gram, have, Lf, sup, nsup = new_state(p)
    for k in range(L):
        beta, n_iter, ok = solve(XsT, yc, usable, grid[k], beta, solver, tol, max_iter, gram, have, Lf, sup, nsup)
        intercept, coef = _original_scale(beta, mu, sd, usable, ymean)
        coefs[k] = coef
        intercepts[k] = intercept
        converged[k] = ok
    return intercepts, coefs, converged


@njit(cache=True)
def _window_gram(S, m, T, sd, usable, gram):
    """Gram matrix of the standardized window from its running sums.

    ``S`` and ``m`` hold the cross-products and sums of the window rows
    after subtracting a fixed reference row, which keeps the cancellation
    in ``S/T - mean mean^T`` small.
    """
    p = S.shape[0]
    for j in range(p):
        mj = m[j] / T
        for q in range(j, p):
            if usable[j] and usable[q]:
                v = (S[j, q] / T - mj * (m[q] / T)) / (sd[j] * sd[q])
            else:
                v = 0.0
            gram[j, q] = v
            gram[q, j] = v


@njit(cache=True)
def _accumulate(S, m, row, ref, sign):
    p = S.shape[0]
    d = row - ref
    for j in range(p):
        dj = sign * d[j]
        m[j] += dj
        for q in range(p):
            S[j, q] += dj * d[q]


@njit(cache=True)
def rolling(F, y, first_row, lams, window, min_window, scale, solver, tol, max_iter):
    """One-step-ahead estimates for rows ``first_row .. first_row+len(lams)-1``.

    Step ``s`` fits on the ``window`` rows strictly before its target row
    (at least ``min_window`` when history is short) and evaluates the fit on
    the target row's features. The solver is warm-started from the previous
    step's solution. The window's Gram matrix is updated from running sums
    as rows enter and leave, so each step costs O(p^2) before solving.
    """
    n_steps = lams.shape[0]
    p = F.shape[1]
    estimates = np.zeros(n_steps)
    converged = np.ones(n_steps, dtype=np.bool_)
    beta = np.zeros(p)
    gram, have, L, sup, nsup = new_state(p)
    ref = F[max(first_row - window, 0)].copy()
    S = np.zeros((p, p))
    m = np.zeros(p)
    cur_lo = 0
    cur_hi = 0
    for s in range(n_steps):
        row = first_row + s
        lo = row - window
        if lo < 0:
            lo = 0
        if row - lo < min_window:
            estimates[s] = np.nan
            converged[s] = False
            continue
        if lo >= cur_hi or cur_lo == cur_hi:
            S[:, :] = 0.0
            m[:] = 0.0
            cur_lo = lo
            cur_hi = lo
        while cur_lo < lo:
            _accumulate(S, m, F[cur_lo], ref, -1.0)
            cur_lo += 1
        while cur_hi < row:
            _accumulate(S, m, F[cur_hi], ref, 1.0)
            cur_hi += 1
        X = F[lo:row]
        yy = y[lo:row]
        XsT, mu, sd, usable = standardize(X, scale)
        T = row - lo
        _window_gram(S, m, T, sd, usable, gram)
        have[:] = True
        nsup[0] = 0
        ymean = np.mean(yy)
        yc = yy - ymean
        beta, n_iter, ok = solve(XsT, yc, usable, lams[s], beta, solver, tol, max_iter, gram, have, L, sup, nsup)
        intercept, coef = _original_scale(beta, mu, sd, usable, ymean)
        est = intercept
        for j in range(p):
            if coef[j] != 0.0:
                est += coef[j] * F[row, j]
        estimates[s] = est
        converged[s] = ok
    return estimates, converged

"""Projected-Newton solver for box-constrained quadratic programs.

Minimizes 0.5 x'Hx + g'x subject to lower <= x <= upper for symmetric
positive semidefinite H. Clamped coordinates are detected from the gradient
sign, a Newton step is taken on the free subspace and a projected Armijo
line search guards progress. Used as the dual solver inside the SQP loop.
"""

from __future__ import annotations

import numpy as np


def box_qp(
    H: np.ndarray,
    g: np.ndarray,
    lower: np.ndarray,
    upper: np.ndarray,
    x0: np.ndarray | None = None,
    max_iter: int = 120,
    min_grad: float = 1e-10,
    min_rel_improve: float = 1e-14,
    armijo: float = 0.1,
    step_dec: float = 0.5,
    min_step: float = 1e-20,
):
    """Returns (x, n_iter). H must be PSD; a ridge is added on factor failure."""
    n = len(g)
    lower = np.broadcast_to(lower, (n,)).astype(float)
    upper = np.broadcast_to(upper, (n,)).astype(float)
    x = np.clip(x0 if x0 is not None else np.zeros(n), lower, upper)

    value = x @ g + 0.5 * x @ (H @ x)
    old_clamped = None
    Hff_chol = None
    free = np.ones(n, dtype=bool)

    for it in range(1, max_iter + 1):
        grad = g + H @ x
        clamped = ((x <= lower) & (grad > 0)) | ((x >= upper) & (grad < 0))
        free = ~clamped
        if not np.any(free):
            return x, it
        if np.linalg.norm(grad[free]) < min_grad:
            return x, it

        if old_clamped is None or np.any(old_clamped != clamped):
            Hff = H[np.ix_(free, free)]
            ridge = 0.0
            base = max(np.trace(Hff) / max(len(Hff), 1), 1e-30)
            for _ in range(12):
                try:
                    Hff_chol = np.linalg.cholesky(Hff + ridge * np.eye(len(Hff)))
                    break
                except np.linalg.LinAlgError:
                    ridge = max(ridge * 10.0, 1e-12 * base)
            else:
                raise np.linalg.LinAlgError("box_qp: Hessian block not factorizable")
            old_clamped = clamped

        # Newton target for the free block with clamped coordinates held fixed
        rhs = g[free] + H[np.ix_(free, ~free)] @ x[~free] if np.any(~free) else g[free]
        y = np.linalg.solve(Hff_chol, rhs)
        x_free_target = -np.linalg.solve(Hff_chol.T, y)
        search = np.zeros(n)
        search[free] = x_free_target - x[free]

        sdotg = search @ grad
        if sdotg >= 0:
            return x, it

        step = 1.0
        while step >= min_step:
            xc = np.clip(x + step * search, lower, upper)
            vc = xc @ g + 0.5 * xc @ (H @ xc)
            if (vc - value) <= armijo * step * sdotg:
                break
            step *= step_dec
        else:
            return x, it

        improve = value - vc
        x, value = xc, vc
        if improve < min_rel_improve * max(abs(value), 1.0):
            return x, it
    return x, max_iter

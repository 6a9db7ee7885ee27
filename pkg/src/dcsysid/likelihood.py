"""Marginal-likelihood machinery for DC-kernel FIR identification.

The objective (negative log marginal likelihood up to constants) is

    l(c, lam, rho) = log det(Phi^T K Phi + sigma^2 I_N)
                     + Y^T (Phi^T K Phi + sigma^2 I_N)^-1 Y,

minimized over the kernel hyperparameters with sigma^2 held fixed.  A
hyperparameter search evaluates l thousands of times, so everything here
is built around a one-off compression of the data followed by cheap
per-evaluation work:

* ``preprocess``        one thin QR of the N x (n+1) block [Phi^T  Y]
                        with the positive-diagonal convention; all later
                        evaluations touch only its (n+1) x (n+1) R factor.
* ``nll_naive``         the O(N^3) dense definition above; reference
                        oracle only.
* ``nll_algorithm_a``   whitens with a *numerical* Cholesky factor of the
                        dense kernel, then multiplies into the compressed
                        data and does one thin QR of a (2n+1) x (n+1)
                        stack.  This is the conventional pipeline the
                        stable evaluator is measured against.
* ``nll_algorithm_b``   same pipeline, but the factor U W^(1/2) is written
                        down in closed form instead of factorizing.
* ``nll_algorithm_c``   the stable evaluator: stacks the closed-form
                        bidiagonal factor D of the *inverse* kernel under
                        the compressed data,

                            QR of [ r_d1        r_d2 ]
                                  [ sigma D^T   0    ]   ->  R1, R2, r

                        and reads the objective off the triangle:

                            r^2/sigma^2 + (N - n) log sigma^2
                            + n log c + (n(n+1)/2) log lam
                            + (n-1) log(1 - rho^2) + 2 log det R1.

                        Only 2n - 1 scalars are created per evaluation
                        before the QR, and the kernel itself is never
                        formed or factorized numerically.

``map_estimate`` back-substitutes R1 g = R2 from the same stack; the
useful identities R1^T R1 = sigma^2 K^-1 + Phi Phi^T, R1^T R2 = Phi Y and
R2^T R2 + r^2 = Y^T Y hold and are exploited by ``nll_gradient_hessian``.

Every evaluator returns an :class:`ObjectiveEvaluation` carrying, besides
the value and QR pieces, an *analytic* flop tally (the closed per-step
counts, not instruction counting) and the measured wall time.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import kernel as _kernel
from .kernel import DcHyperparams, _coerce
from .regression import RegressionData

__all__ = [
    "NumericalError",
    "RankDeficiencyError",
    "PreprocessedData",
    "ObjectiveEvaluation",
    "preprocess",
    "preprocess_matrices",
    "nll_naive",
    "nll_algorithm_a",
    "nll_algorithm_b",
    "nll_algorithm_c",
    "map_estimate",
    "nll_gradient_hessian",
    "preprocessing_flops",
    "algorithm_a_flops",
    "algorithm_b_flops",
    "algorithm_c_flops",
]


class NumericalError(RuntimeError):
    """Factorization or triangular solve failed (singular/indefinite matrix)."""


class RankDeficiencyError(ValueError):
    """Data matrix is numerically rank deficient; ``column`` is the offender."""

    def __init__(self, message: str, column: int | None = None):
        super().__init__(message)
        self.column = column


@dataclass(eq=False)
class PreprocessedData:
    """Compressed data: thin-QR triangle of [Phi^T Y], plus sizes.

    r_d1 is the (n+1) x n leading block, r_d2 the trailing (n+1)-column.
    """

    n: int
    n_samples: int
    r_d1: np.ndarray
    r_d2: np.ndarray
    y_norm2: float


@dataclass(eq=False)
class ObjectiveEvaluation:
    """One objective evaluation: value, QR pieces, analytic flops, wall time."""

    algorithm: str
    value: float
    r1: np.ndarray
    r2: np.ndarray
    r_scalar: float
    flops: dict
    wall_time: float
    gradient: np.ndarray | None = field(default=None)
    hessian: np.ndarray | None = field(default=None)


def _qr_r(a: np.ndarray) -> np.ndarray:
    """Thin-QR R factor with the positive-diagonal convention."""
    r = np.linalg.qr(a, mode="r")
    s = np.sign(np.diagonal(r)).copy()
    s[s == 0] = 1.0
    return s[:, None] * r


def _check_sigma2(sigma2: float) -> float:
    if not sigma2 > 0:
        raise ValueError(f"sigma2 must be > 0, got {sigma2}")
    return float(sigma2)


def preprocess_matrices(
    phi_t: np.ndarray, y: np.ndarray, n_samples: int | None = None
) -> PreprocessedData:
    """Thin QR of [Phi^T Y]; see :func:`preprocess`.

    ``n_samples`` overrides the recorded sample count.  Pass it when the
    inputs are themselves a compressed triangle [r_d1 r_d2] rather than
    raw data: the objective's (N - n) log sigma^2 term needs the original
    N, and with it the evaluators return identical values on the
    compressed representation.
    """
    phi_t = np.asarray(phi_t, dtype=float)
    y = np.asarray(y, dtype=float)
    big_n, n = phi_t.shape
    if y.shape != (big_n,):
        raise ValueError(f"y must have shape ({big_n},), got {y.shape}")
    if big_n < n + 1:
        raise RankDeficiencyError(
            f"preprocessing needs N >= n + 1 rows, got N={big_n}, n={n}"
        )
    if n_samples is None:
        n_samples = big_n
    elif n_samples < big_n:
        raise ValueError(f"n_samples override {n_samples} is below the row count {big_n}")
    r = _qr_r(np.column_stack([phi_t, y]))
    # Phi^T must have full column rank for a unique estimate; the trailing
    # (Y) column may legitimately be dependent (noise-free data), so only
    # the first n diagonal entries are checked.
    diag = np.abs(np.diagonal(r)[:n])
    tol = max(big_n, n + 1) * np.finfo(float).eps * (diag.max() if n else 0.0)
    bad = np.flatnonzero(diag <= tol)
    if bad.size:
        raise RankDeficiencyError(
            f"regressor column {bad[0]} is numerically dependent on the others; "
            "use more samples or a richer input",
            column=int(bad[0]),
        )
    return PreprocessedData(
        n=n, n_samples=int(n_samples), r_d1=r[:, :n], r_d2=r[:, n], y_norm2=float(y @ y)
    )


def preprocess(data: RegressionData) -> PreprocessedData:
    """Compress a dataset once; all objective evaluations reuse the result.

    Computes the thin QR [Phi^T Y] = Q_d [r_d1 r_d2] (positive diagonal)
    and discards Q_d: the products Phi Phi^T = r_d1^T r_d1,
    Phi Y = r_d1^T r_d2 and ||Y||^2 = ||r_d2||^2 are all the evaluators
    need, independent of N.
    """
    return preprocess_matrices(data.phi_t, data.y)


# --- analytic flop tallies (closed per-step counts) ---------------------------


def preprocessing_flops(n: int, n_samples: int) -> float:
    """Thin QR of the N x (n+1) data block."""
    return 2.0 * (n + 1) ** 2 * (n_samples - (n + 1) / 3.0)


def _stack_qr_flops(n: int) -> float:
    # straightforward thin QR of the (2n+1) x (n+1) evaluation stack
    return 2.0 * (n + 1) ** 2 * (2 * n + 1 - (n + 1) / 3.0)


def algorithm_a_flops(n: int) -> dict:
    stages = {
        "cholesky": n**3 / 3.0 + n**2 / 2.0 + n / 6.0,
        "matmul": float(n**2 * (n + 1)),
        "qr": _stack_qr_flops(n),
        "objective": float(2 * n + 6),
    }
    stages["total"] = sum(stages.values())
    return stages


def algorithm_b_flops(n: int) -> dict:
    stages = {
        "matmul": float(n**2 * (n + 1)),
        "qr": _stack_qr_flops(n),
        "objective": float(2 * n + 6),
    }
    stages["total"] = sum(stages.values())
    return stages


def algorithm_c_flops(n: int) -> dict:
    stages = {
        "qr": _stack_qr_flops(n),
        "objective": float(n + 20),
    }
    stages["total"] = sum(stages.values())
    return stages


# --- evaluators ---------------------------------------------------------------


def nll_naive(hyper, sigma2: float, data: RegressionData) -> float:
    """The defining dense formula; O(N^3) reference oracle.

    Unlike the fast evaluators this accepts the full hyperparameter box
    (the kernel is only built, never inverted), so c = 0 is legal.
    """
    h = _coerce(hyper)
    sigma2 = _check_sigma2(sigma2)
    k = _kernel.build_dc_kernel(h, data.n)
    s = data.phi_t @ k @ data.phi_t.T
    s[np.diag_indices_from(s)] += sigma2
    try:
        low = np.linalg.cholesky(s)
    except np.linalg.LinAlgError as exc:  # cannot happen for sigma2 > 0
        raise NumericalError("system matrix is not positive definite") from exc
    half = scipy.linalg.solve_triangular(low, data.y, lower=True)
    return 2.0 * float(np.sum(np.log(np.diagonal(low)))) + float(half @ half)


def _whitened_value(
    factor: np.ndarray, sigma2: float, pre: PreprocessedData
) -> tuple[float, np.ndarray, np.ndarray, float]:
    """Shared tail of algorithms A and B.

    Substituting g = F z (F F^T = K) turns the objective into a ridge
    problem in z; its compressed stack is [r_d1 F, r_d2; sqrt(sigma2) I, 0]
    and the kernel determinant is absorbed into the triangle.
    """
    n = pre.n
    sroot = np.sqrt(sigma2)
    stack = np.zeros((2 * n + 1, n + 1))
    stack[: n + 1, :n] = pre.r_d1 @ factor
    stack[: n + 1, n] = pre.r_d2
    idx = np.arange(n)
    stack[n + 1 + idx, idx] = sroot
    r = _qr_r(stack)
    diag = np.diagonal(r)[:n]
    if np.any(diag <= 0):
        raise NumericalError("stacked QR produced a singular triangle")
    value = (
        r[n, n] ** 2 / sigma2
        + (pre.n_samples - n) * np.log(sigma2)
        + 2.0 * float(np.sum(np.log(diag)))
    )
    return float(value), r[:n, :n], r[:n, n], float(r[n, n])


def nll_algorithm_a(hyper, sigma2: float, pre: PreprocessedData) -> ObjectiveEvaluation:
    """Conventional evaluator: numerical Cholesky of the dense kernel.

    Steps: (1) build K and factorize it numerically (no closed forms);
    (2) multiply the factor into the compressed data; (3) thin QR of the
    (2n+1) x (n+1) stack; (4) evaluate.  The factorization is the
    vulnerable step: K's condition number grows like lam^-n / (1 - rho^2).
    """
    t0 = time.perf_counter()
    h = _coerce(hyper).require_strict()
    sigma2 = _check_sigma2(sigma2)
    k = _kernel.build_dc_kernel(h, pre.n)
    try:
        factor = np.linalg.cholesky(k)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(
            "numerical Cholesky of the kernel matrix failed "
            f"(ill-conditioned at c={h.c}, lam={h.lam}, rho={h.rho}, n={pre.n})"
        ) from exc
    value, r1, r2, r_scalar = _whitened_value(factor, sigma2, pre)
    return ObjectiveEvaluation(
        algorithm="a",
        value=value,
        r1=r1,
        r2=r2,
        r_scalar=r_scalar,
        flops=algorithm_a_flops(pre.n),
        wall_time=time.perf_counter() - t0,
    )


def nll_algorithm_b(hyper, sigma2: float, pre: PreprocessedData) -> ObjectiveEvaluation:
    """Algorithm A with the factorization step replaced by the closed form U W^(1/2)."""
    t0 = time.perf_counter()
    h = _coerce(hyper).require_strict()
    sigma2 = _check_sigma2(sigma2)
    factor = _kernel.dc_cholesky_factor(h, pre.n)
    value, r1, r2, r_scalar = _whitened_value(factor, sigma2, pre)
    return ObjectiveEvaluation(
        algorithm="b",
        value=value,
        r1=r1,
        r2=r2,
        r_scalar=r_scalar,
        flops=algorithm_b_flops(pre.n),
        wall_time=time.perf_counter() - t0,
    )


def _stacked_qr_c(
    h: DcHyperparams, sigma2: float, pre: PreprocessedData
) -> tuple[np.ndarray, np.ndarray, float]:
    n = pre.n
    d_main, d_sub = _kernel.dc_inverse_cholesky_factors(h, n)
    sroot = np.sqrt(sigma2)
    stack = np.zeros((2 * n + 1, n + 1))
    stack[: n + 1, :n] = pre.r_d1
    stack[: n + 1, n] = pre.r_d2
    idx = np.arange(n)
    stack[n + 1 + idx, idx] = sroot * d_main
    if n > 1:
        # D^T is upper bidiagonal: row j also carries D[j+1, j]
        stack[n + 1 + idx[:-1], idx[:-1] + 1] = sroot * d_sub
    r = _qr_r(stack)
    if np.any(np.diagonal(r)[:n] <= 0):
        raise NumericalError("stacked QR produced a singular triangle")
    return r[:n, :n], r[:n, n], float(r[n, n])


def nll_algorithm_c(hyper, sigma2: float, pre: PreprocessedData) -> ObjectiveEvaluation:
    """Stable evaluator built on the closed-form factor of the inverse kernel.

    Steps: (1) write down the bidiagonal D with K^-1 = D D^T (2n - 1
    scalars); (2) thin QR of [r_d1 r_d2; sigma D^T 0]; (3) assemble the
    value from r, the triangle's log-diagonal and the closed-form kernel
    log-determinant.  No dense kernel, no numerical factorization.
    """
    t0 = time.perf_counter()
    h = _coerce(hyper).require_strict()
    sigma2 = _check_sigma2(sigma2)
    n = pre.n
    r1, r2, r_scalar = _stacked_qr_c(h, sigma2, pre)
    value = (
        r_scalar**2 / sigma2
        + (pre.n_samples - n) * np.log(sigma2)
        + n * np.log(h.c)
        + (n * (n + 1) / 2.0) * np.log(h.lam)
        + (n - 1) * np.log1p(-h.rho**2)
        + 2.0 * float(np.sum(np.log(np.diagonal(r1))))
    )
    return ObjectiveEvaluation(
        algorithm="c",
        value=float(value),
        r1=r1,
        r2=r2,
        r_scalar=r_scalar,
        flops=algorithm_c_flops(n),
        wall_time=time.perf_counter() - t0,
    )


def map_estimate(hyper, sigma2: float, pre: PreprocessedData) -> np.ndarray:
    """MAP impulse-response estimate by back substitution of R1 g = R2."""
    h = _coerce(hyper).require_strict()
    sigma2 = _check_sigma2(sigma2)
    r1, r2, _ = _stacked_qr_c(h, sigma2, pre)
    try:
        return scipy.linalg.solve_triangular(r1, r2)
    except scipy.linalg.LinAlgError as exc:
        raise NumericalError("triangular solve for the MAP estimate failed") from exc


def nll_gradient_hessian(
    hyper, sigma2: float, pre: PreprocessedData
) -> tuple[np.ndarray, np.ndarray]:
    """Analytic gradient and Hessian of the objective in (c, lam, rho).

    Uses the trace form

        dl/deta_i       = tr((X1 - X2) dK_i)
        d2l/deta_i eta_j = tr((X1 - X2) d2K_ij)
                           + tr((X1 dK_i X2 - (X1 - X2) dK_i X1) dK_j)

    with X1 = K^-1 - sigma^2 K^-1 (R1^T R1)^-1 K^-1 and
    X2 = K^-1 R1^-1 R2 (K^-1 R1^-1 R2)^T, all assembled from the closed
    tridiagonal inverse and triangular solves against R1 -- the dense
    kernel is never factorized.
    """
    h = _coerce(hyper).require_strict()
    sigma2 = _check_sigma2(sigma2)
    n = pre.n
    r1, r2, _ = _stacked_qr_c(h, sigma2, pre)
    kinv = _kernel.dc_inverse(h, n).to_dense()

    def m_solve(b):
        # (R1^T R1)^-1 b via two triangular solves
        z = scipy.linalg.solve_triangular(r1, b, trans="T")
        return scipy.linalg.solve_triangular(r1, z)

    x1 = kinv - sigma2 * kinv @ m_solve(kinv)
    ghat = scipy.linalg.solve_triangular(r1, r2)
    uvec = kinv @ ghat
    x2 = np.outer(uvec, uvec)
    g_mat = x1 - x2

    dks = np.stack(_kernel.dc_kernel_gradient(h, n))
    d2ks = _kernel.dc_kernel_hessian(h, n)
    grad = np.array([np.sum(g_mat * dks[i]) for i in range(3)])
    hess = np.empty((3, 3))
    for i in range(3):
        term = x1 @ dks[i] @ x2 - g_mat @ dks[i] @ x1
        for j in range(3):
            hess[i, j] = np.sum(g_mat * d2ks[i, j]) + np.sum(term * dks[j])
    return grad, hess

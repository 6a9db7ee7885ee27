"""Maximum-entropy completion of partially specified banded covariances.

A *partial band matrix* records only the diagonals 0..m of a symmetric
n x n covariance; everything beyond offset m is unspecified (reading it
is an error, not a zero).  Among all positive-definite completions, the
one maximizing the Gaussian differential entropy

    H(Sigma) = 1/2 log det Sigma + (n/2) (1 + log 2 pi)

exists iff every contiguous (m+1) x (m+1) principal block of the band is
positive definite, and it is the unique completion whose *inverse* is
m-banded.  ``central_extension`` computes it by filling offsets
m+1, m+2, ... in order: each missing entry (s, t) is the one-step
extension of the (t - s + 1)-sized principal submatrix enclosing it,
which at that point is fully known up to its own last corner.  Within an
offset the entries are independent, so traversal order there does not
matter (asserted by the test suite).

The completion also has an explicit factored inverse C^-1 = L V L^T with
L unit lower-triangular and m-banded and V positive diagonal, assembled
from small band blocks; it certifies both positive definiteness and
log det C = -sum(log V) without forming C^-1.

All indices in the API are native 0-based; feasibility failures are
reported as the 0-based start index of the first failing block.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

__all__ = [
    "OutOfBandError",
    "InfeasibleBandError",
    "BandFormatError",
    "PartialBandMatrix",
    "CentralExtension",
    "check_feasibility",
    "one_step_extension",
    "central_extension",
    "gaussian_entropy",
    "read_band_text",
    "read_band_file",
]

# a feasibility block counts as positive definite iff every Cholesky pivot
# exceeds this multiple of the block's largest diagonal entry
PIVOT_FLOOR_SCALE = 1e-12


class OutOfBandError(IndexError):
    """Read of an entry the band does not specify."""


class InfeasibleBandError(ValueError):
    """No positive-definite completion exists (or feasibility was lost numerically).

    ``block`` is the 0-based start index of the offending contiguous
    principal block, when known.
    """

    def __init__(self, message: str, block: int | None = None):
        super().__init__(message)
        self.block = block


class BandFormatError(ValueError):
    """Malformed band text; ``line`` is the 1-based offending line number."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message)
        self.line = line


@dataclass(eq=False)
class PartialBandMatrix:
    """Symmetric n x n matrix specified only on diagonals 0..m.

    ``diagonals[d]`` holds the entries (i, i + d) for i = 0..n-1-d, so
    ``diagonals[0]`` is the main diagonal.  Entries with |i - j| > m are
    unspecified: :meth:`get` raises :class:`OutOfBandError` for them.
    """

    n: int
    m: int
    diagonals: list = field(default_factory=list)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")
        if not 0 <= self.m <= self.n - 1:
            raise ValueError(f"m must lie in [0, n-1], got m={self.m}, n={self.n}")
        if len(self.diagonals) != self.m + 1:
            raise ValueError(
                f"expected {self.m + 1} diagonals for m={self.m}, got {len(self.diagonals)}"
            )
        diags = []
        for d, diag in enumerate(self.diagonals):
            arr = np.asarray(diag, dtype=float)
            if arr.shape != (self.n - d,):
                raise ValueError(
                    f"diagonal {d} must have length {self.n - d}, got shape {arr.shape}"
                )
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"diagonal {d} contains non-finite values")
            diags.append(arr)
        self.diagonals = diags

    @classmethod
    def from_dense(cls, a, m: int) -> "PartialBandMatrix":
        """Keep the band of a dense symmetric matrix, forgetting the rest."""
        a = np.asarray(a, dtype=float)
        n = a.shape[0]
        if a.shape != (n, n):
            raise ValueError(f"expected a square matrix, got shape {a.shape}")
        if not np.allclose(a, a.T, rtol=1e-12, atol=0):
            raise ValueError("matrix is not symmetric")
        return cls(n, m, [np.diagonal(a, d).copy() for d in range(m + 1)])

    def get(self, i: int, j: int) -> float:
        d = abs(i - j)
        if not (0 <= i < self.n and 0 <= j < self.n):
            raise OutOfBandError(f"index ({i}, {j}) outside a {self.n} x {self.n} matrix")
        if d > self.m:
            raise OutOfBandError(
                f"entry ({i}, {j}) lies outside the band (|i-j| = {d} > m = {self.m})"
            )
        return float(self.diagonals[d][min(i, j)])

    def principal_block(self, start: int, size: int | None = None) -> np.ndarray:
        """Dense contiguous principal block rows/cols start..start+size-1.

        Every entry must lie inside the band, so size <= m + 1.
        """
        size = self.m + 1 if size is None else size
        if size > self.m + 1:
            raise OutOfBandError(f"block size {size} exceeds bandwidth m+1 = {self.m + 1}")
        if not 0 <= start <= self.n - size:
            raise OutOfBandError(f"block start {start} out of range for size {size}")
        block = np.empty((size, size))
        for d in range(size):
            seg = self.diagonals[d][start : start + size - d]
            idx = np.arange(size - d)
            block[idx, idx + d] = seg
            block[idx + d, idx] = seg
        return block

    def _scaffold(self) -> np.ndarray:
        # dense matrix holding the band, zeros elsewhere -- internal staging
        # area for the completion; callers must not interpret the zeros
        a = np.zeros((self.n, self.n))
        for d, diag in enumerate(self.diagonals):
            idx = np.arange(self.n - d)
            a[idx, idx + d] = diag
            a[idx + d, idx] = diag
        return a


@dataclass(eq=False)
class CentralExtension:
    """Maximum-entropy completion and its factored inverse.

    completed : (n, n) SPD, agrees with the input band bit-exactly
    l_factor  : (n, n) unit lower-triangular, m-banded
    v_diag    : (n,) positive;  inv(l_factor @ diag(v_diag) @ l_factor.T)
                equals ``completed``
    entropy   : Gaussian differential entropy of N(0, completed)
    """

    n: int
    m: int
    completed: np.ndarray
    l_factor: np.ndarray
    v_diag: np.ndarray
    entropy: float


def _pd_pivots_ok(block: np.ndarray) -> bool:
    # unblocked Cholesky with an explicit pivot floor relative to the
    # largest diagonal entry; `not pivot > floor` also rejects nan
    k = block.shape[0]
    floor = PIVOT_FLOOR_SCALE * float(np.max(np.diagonal(block)))
    low = np.zeros_like(block)
    for j in range(k):
        pivot = block[j, j] - low[j, :j] @ low[j, :j]
        if not pivot > floor:
            return False
        low[j, j] = np.sqrt(pivot)
        if j + 1 < k:
            low[j + 1 :, j] = (block[j + 1 :, j] - low[j + 1 :, :j] @ low[j, :j]) / low[j, j]
    return True


def check_feasibility(p: PartialBandMatrix) -> tuple[bool, int | None]:
    """Does a positive-definite completion exist?

    True iff all n - m contiguous (m+1) x (m+1) principal blocks of the
    band are positive definite (to the :data:`PIVOT_FLOOR_SCALE`
    tolerance).  Returns ``(feasible, first_failing_block_start)``.
    """
    for start in range(p.n - p.m):
        if not _pd_pivots_ok(p.principal_block(start)):
            return False, start
    return True, None


def _one_step_core(sub: np.ndarray, label: str) -> float:
    """Missing corner of a k x k matrix known except at (0, k-1)/(k-1, 0).

    The leading (k-1) block solve L y = e1 determines the corner of the
    entropy-maximal (inverse-banded) extension:

        x = -(sub[k-1, 1:k-1] @ y[1:]) / y[0].
    """
    k = sub.shape[0]
    try:
        cho = scipy.linalg.cho_factor(sub[: k - 1, : k - 1], lower=True)
    except np.linalg.LinAlgError as exc:
        raise InfeasibleBandError(f"leading block not positive definite {label}") from exc
    e1 = np.zeros(k - 1)
    e1[0] = 1.0
    y = scipy.linalg.cho_solve(cho, e1)
    if y[0] == 0.0:
        raise InfeasibleBandError(f"degenerate leading block {label}")
    return float(-(sub[k - 1, 1 : k - 1] @ y[1:]) / y[0])


def one_step_extension(p: PartialBandMatrix) -> float:
    """The single unspecified corner entry of an (n-2)-band partial matrix.

    Requires m = n - 2, so exactly the (1, n) / (n, 1) pair (1-based) is
    missing.  Returns the corner value of the maximum-entropy completion.
    For the DC kernel band at n = 3 this reproduces the closed form
    x = lam^2 rho^2.
    """
    if p.n < 2:
        raise ValueError("one-step extension needs n >= 2")
    if p.m != p.n - 2:
        raise ValueError(f"one-step extension needs m = n - 2, got m={p.m}, n={p.n}")
    feasible, bad = check_feasibility(p)
    if not feasible:
        raise InfeasibleBandError(f"band infeasible at block {bad}", block=bad)
    sub = p._scaffold()  # only (0, n-1) is unspecified; the core never reads it
    return _one_step_core(sub, "(full matrix)")


def central_extension(
    p: PartialBandMatrix, _reverse_within_offset: bool = False
) -> CentralExtension:
    """Maximum-entropy completion of a feasible partial band matrix.

    Fills offsets m+1..n-1 in order; entry (s, s+d) is the one-step
    extension of the enclosing principal submatrix, whose own band
    (offsets < d) is complete by that point.  ``_reverse_within_offset``
    flips the traversal inside each offset and exists only so the test
    suite can assert order independence.

    Raises
    ------
    InfeasibleBandError
        If the band fails :func:`check_feasibility`, or positive
        definiteness is lost numerically during the recursion.
    """
    feasible, bad = check_feasibility(p)
    if not feasible:
        raise InfeasibleBandError(f"band infeasible at block {bad}", block=bad)
    n, m = p.n, p.m
    completed = p._scaffold()
    for d in range(m + 1, n):
        starts = range(n - d)
        if _reverse_within_offset:
            starts = reversed(starts)
        for s in starts:
            t = s + d
            x = _one_step_core(completed[s : t + 1, s : t + 1], f"completing entry ({s}, {t})")
            completed[s, t] = x
            completed[t, s] = x

    # factored inverse from band blocks alone: column j of L is
    # -inv(Sigma[j+1:b+1, j+1:b+1]) @ Sigma[j+1:b+1, j], and V[j] is the
    # (0, 0) entry of inv(Sigma[j:b+1, j:b+1]), with b = min(j + m, n - 1)
    l_factor = np.eye(n)
    v_diag = np.empty(n)
    for j in range(n):
        b = min(j + m, n - 1)
        blk = completed[j : b + 1, j : b + 1]
        try:
            cho = scipy.linalg.cho_factor(blk, lower=True)
        except np.linalg.LinAlgError as exc:
            raise InfeasibleBandError(
                f"band block at column {j} not positive definite", block=j
            ) from exc
        e1 = np.zeros(b + 1 - j)
        e1[0] = 1.0
        v_diag[j] = scipy.linalg.cho_solve(cho, e1)[0]
        if j + 1 <= b:
            sub_blk = completed[j + 1 : b + 1, j + 1 : b + 1]
            col = completed[j + 1 : b + 1, j]
            try:
                cho2 = scipy.linalg.cho_factor(sub_blk, lower=True)
            except np.linalg.LinAlgError as exc:
                raise InfeasibleBandError(
                    f"band block at column {j + 1} not positive definite", block=j + 1
                ) from exc
            l_factor[j + 1 : b + 1, j] = -scipy.linalg.cho_solve(cho2, col)

    # det(completed) = prod(1 / v_diag) since L is unit triangular
    entropy = -0.5 * float(np.sum(np.log(v_diag))) + 0.5 * n * (1.0 + np.log(2.0 * np.pi))
    return CentralExtension(
        n=n, m=m, completed=completed, l_factor=l_factor, v_diag=v_diag, entropy=entropy
    )


def gaussian_entropy(sigma: np.ndarray) -> float:
    """Differential entropy of N(0, sigma): 1/2 log det sigma + n/2 (1 + log 2 pi)."""
    sigma = np.asarray(sigma, dtype=float)
    n = sigma.shape[0]
    if sigma.shape != (n, n):
        raise ValueError(f"expected a square matrix, got shape {sigma.shape}")
    try:
        low = np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError as exc:
        raise ValueError("covariance is not positive definite") from exc
    return float(np.sum(np.log(np.diagonal(low)))) + 0.5 * n * (1.0 + np.log(2.0 * np.pi))


def read_band_text(text: str) -> PartialBandMatrix:
    """Parse the band file format.

    First non-blank line: ``n m``.  Then one line per specified diagonal,
    offset 0 first, with n - d space-separated values on line d.  Blank
    lines are ignored.
    """
    lines = [(k + 1, line.strip()) for k, line in enumerate(text.splitlines())]
    lines = [(num, line) for num, line in lines if line]
    if not lines:
        raise BandFormatError("empty band file", line=1)
    num, header = lines[0]
    parts = header.split()
    if len(parts) != 2:
        raise BandFormatError(
            f"line {num}: header must be 'n m', got {header!r}", line=num
        )
    try:
        n, m = int(parts[0]), int(parts[1])
    except ValueError as exc:
        raise BandFormatError(
            f"line {num}: header must contain two integers, got {header!r}", line=num
        ) from exc
    if n < 1 or not 0 <= m <= n - 1:
        raise BandFormatError(
            f"line {num}: need n >= 1 and 0 <= m <= n-1, got n={n}, m={m}", line=num
        )
    body = lines[1:]
    if len(body) != m + 1:
        raise BandFormatError(
            f"expected {m + 1} diagonal lines after the header, found {len(body)}",
            line=body[-1][0] if body else num,
        )
    diagonals = []
    for d, (num, line) in enumerate(body):
        fields = line.split()
        if len(fields) != n - d:
            raise BandFormatError(
                f"line {num}: diagonal {d} needs {n - d} values, got {len(fields)}",
                line=num,
            )
        try:
            diagonals.append(np.array([float(f) for f in fields]))
        except ValueError as exc:
            raise BandFormatError(
                f"line {num}: non-numeric value in diagonal {d}: {exc}", line=num
            ) from exc
    return PartialBandMatrix(n, m, diagonals)


def read_band_file(path) -> PartialBandMatrix:
    """Read :func:`read_band_text` format from a file path."""
    with open(path, "r", encoding="utf-8") as fh:
        return read_band_text(fh.read())

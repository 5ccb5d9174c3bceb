"""Sparse matrix core: CSR storage, observed-entry mean centering, truncated SVD.

The factorization routines are self-contained. Small problems go through
one-sided Jacobi rotations on the densified matrix; larger ones through
power iteration with Gram-Schmidt deflation on the sparse operator, so the
matrix is never densified past ``DENSE_CUTOFF``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

DENSE_CUTOFF = 512
MAX_SWEEPS = 1000
SIGMA_CHANGE_TOL = 1e-10


class RankError(ValueError):
    """Requested rank is outside [1, min(m, n)]."""


class ConvergenceError(RuntimeError):
    """Iteration budget exhausted; carries the achieved residual."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (achieved residual {residual:.3e})")
        self.residual = residual


@dataclass(frozen=True)
class SparseMatrix:
    """CSR matrix over float64 entries.

    ``offsets`` has length ``n_rows + 1``; row i occupies the slice
    ``offsets[i]:offsets[i+1]`` of ``cols``/``vals``. Column indices are
    strictly increasing within a row. Freshly built matrices carry no
    explicit zeros; matrices produced by :func:`mean_center_rows` may,
    because a stored zero still marks an observed entry.
    """

    n_rows: int
    n_cols: int
    offsets: np.ndarray
    cols: np.ndarray
    vals: np.ndarray

    @staticmethod
    def from_entries(
        n_rows: int,
        n_cols: int,
        entries: Iterable[tuple[int, int, float]],
        drop_zeros: bool = True,
    ) -> "SparseMatrix":
        """Build from (row, col, value) triplets; duplicates are summed."""
        acc: dict[tuple[int, int], float] = {}
        for i, j, v in entries:
            if not (0 <= i < n_rows and 0 <= j < n_cols):
                raise IndexError(f"entry ({i}, {j}) outside {n_rows}x{n_cols}")
            acc[(i, j)] = acc.get((i, j), 0.0) + float(v)
        if drop_zeros:
            acc = {ij: v for ij, v in acc.items() if v != 0.0}
        keys = sorted(acc)
        offsets = np.zeros(n_rows + 1, dtype=np.int64)
        cols = np.empty(len(keys), dtype=np.int64)
        vals = np.empty(len(keys), dtype=np.float64)
        for e, (i, j) in enumerate(keys):
            offsets[i + 1] += 1
            cols[e] = j
            vals[e] = acc[(i, j)]
        np.cumsum(offsets, out=offsets)
        m = SparseMatrix(n_rows, n_cols, offsets, cols, vals)
        m.validate(allow_zeros=not drop_zeros)
        return m

    @staticmethod
    def from_dense(dense: np.ndarray) -> "SparseMatrix":
        dense = np.asarray(dense, dtype=np.float64)
        rows, cols = np.nonzero(dense)
        return SparseMatrix.from_entries(
            dense.shape[0],
            dense.shape[1],
            zip(rows.tolist(), cols.tolist(), dense[rows, cols].tolist()),
        )

    @property
    def nnz(self) -> int:
        return int(self.offsets[-1])

    def validate(self, allow_zeros: bool = False) -> None:
        if len(self.offsets) != self.n_rows + 1 or self.offsets[0] != 0:
            raise ValueError("malformed offsets")
        if np.any(np.diff(self.offsets) < 0):
            raise ValueError("offsets must be non-decreasing")
        if not np.all(np.isfinite(self.vals)):
            raise ValueError("non-finite value stored")
        if not allow_zeros and np.any(self.vals == 0.0):
            raise ValueError("explicit zero stored")
        for i in range(self.n_rows):
            c = self.cols[self.offsets[i] : self.offsets[i + 1]]
            if c.size and (np.any(np.diff(c) <= 0) or c[0] < 0 or c[-1] >= self.n_cols):
                raise ValueError(f"row {i}: column indices not strictly increasing in range")

    def row(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        s, e = self.offsets[i], self.offsets[i + 1]
        return self.cols[s:e], self.vals[s:e]

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.n_rows, self.n_cols))
        row_ids = np.repeat(np.arange(self.n_rows), np.diff(self.offsets))
        out[row_ids, self.cols] = self.vals
        return out

    def matvec(self, x: np.ndarray) -> np.ndarray:
        """M @ x without densifying."""
        row_ids = np.repeat(np.arange(self.n_rows), np.diff(self.offsets))
        return np.bincount(row_ids, weights=self.vals * x[self.cols], minlength=self.n_rows)

    def rmatvec(self, y: np.ndarray) -> np.ndarray:
        """M.T @ y without densifying."""
        row_ids = np.repeat(np.arange(self.n_rows), np.diff(self.offsets))
        return np.bincount(self.cols, weights=self.vals * y[row_ids], minlength=self.n_cols)


@dataclass(frozen=True)
class SvdFactors:
    """Rank-k factors U (m x k), sigma (descending), Vt (k x n), plus row means."""

    U: np.ndarray
    sigma: np.ndarray
    Vt: np.ndarray
    row_means: np.ndarray

    @property
    def k(self) -> int:
        return int(self.sigma.shape[0])

    def with_row_means(self, row_means: np.ndarray) -> "SvdFactors":
        return replace(self, row_means=np.asarray(row_means, dtype=np.float64))


def mean_center_rows(m: SparseMatrix) -> tuple[SparseMatrix, np.ndarray]:
    """Subtract each row's observed mean from its stored entries.

    Rows without entries get mean 0. The returned matrix keeps the original
    sparsity structure, so an entry centered to exactly zero stays stored:
    adding the means back reproduces the observed entries bit for bit.
    """
    counts = np.diff(m.offsets)
    row_ids = np.repeat(np.arange(m.n_rows), counts)
    sums = np.bincount(row_ids, weights=m.vals, minlength=m.n_rows)
    means = np.divide(sums, counts, out=np.zeros(m.n_rows), where=counts > 0)
    centered = SparseMatrix(
        m.n_rows, m.n_cols, m.offsets.copy(), m.cols.copy(), m.vals - means[row_ids]
    )
    return centered, means


def predict_entry(f: SvdFactors, i: int, j: int) -> float:
    """row_means[i] + sum_c U[i,c] * sigma[c] * Vt[c,j]."""
    if not (0 <= i < f.U.shape[0] and 0 <= j < f.Vt.shape[1]):
        raise IndexError(f"entry ({i}, {j}) outside factor dimensions")
    return float(f.row_means[i] + (f.U[i] * f.sigma) @ f.Vt[:, j])


def reconstruct(f: SvdFactors, include_means: bool = False) -> np.ndarray:
    """Dense U @ diag(sigma) @ Vt, optionally with row means added back."""
    out = (f.U * f.sigma) @ f.Vt
    if include_means:
        out = out + f.row_means[:, None]
    return out


def truncated_svd(m: SparseMatrix, k: int, dense_cutoff: int = DENSE_CUTOFF) -> SvdFactors:
    """Top-k singular triplets of ``m`` (missing entries read as zero).

    Deterministic; ``row_means`` comes back all-zero (callers that centered
    first attach the real means). Raises :class:`RankError` for k outside
    [1, min(m, n)] and :class:`ConvergenceError` if the iteration budget
    runs out.
    """
    small = min(m.n_rows, m.n_cols)
    if not 1 <= k <= small:
        raise RankError(f"rank {k} outside [1, {small}] for {m.n_rows}x{m.n_cols} matrix")
    if small <= dense_cutoff:
        U, sigma, Vt = _jacobi_svd(m.to_dense(), k)
    else:
        U, sigma, Vt = _power_svd(m, k)
    U, Vt = _fix_signs(U, Vt)
    return SvdFactors(U, sigma, Vt, np.zeros(m.n_rows))


def _fix_signs(U: np.ndarray, Vt: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # Largest-magnitude component of each U column made non-negative, so
    # repeated factorizations agree to the sign.
    for c in range(U.shape[1]):
        lead = int(np.argmax(np.abs(U[:, c])))
        if U[lead, c] < 0:
            U[:, c] = -U[:, c]
            Vt[c, :] = -Vt[c, :]
    return U, Vt


def _complete_orthonormal(basis: np.ndarray, degenerate: Sequence[int]) -> None:
    # Fill columns listed in `degenerate` with unit vectors orthogonal to the
    # rest, walking the canonical basis; keeps the factor orthonormal when
    # the matrix rank falls short of k.
    dim = basis.shape[0]
    for c in degenerate:
        for cand in range(dim):
            v = np.zeros(dim)
            v[cand] = 1.0
            v -= basis @ (basis.T @ v)
            norm = np.linalg.norm(v)
            if norm > 0.5:
                basis[:, c] = v / norm
                break
        else:  # pragma: no cover - only if dim < number of degenerate columns
            raise ConvergenceError("cannot complete orthonormal basis", residual=math.inf)


def _round_robin_rounds(n: int) -> list[tuple[np.ndarray, np.ndarray]]:
    # Tournament pairing: every round pairs each column exactly once, so a
    # whole round of rotations is independent and vectorizes.
    slots = list(range(n)) + ([-1] if n % 2 else [])
    total = len(slots)
    rounds = []
    for _ in range(total - 1):
        ps, qs = [], []
        for i in range(total // 2):
            a, b = slots[i], slots[total - 1 - i]
            if a != -1 and b != -1:
                ps.append(min(a, b))
                qs.append(max(a, b))
        rounds.append((np.array(ps, dtype=np.intp), np.array(qs, dtype=np.intp)))
        slots = [slots[0], slots[-1]] + slots[1:-1]
    return rounds


def _jacobi_svd(dense: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # One-sided Jacobi: rotate column pairs of the working matrix until all
    # pairs are numerically orthogonal; column norms are the singular values.
    # Pairs are visited in round-robin rounds of disjoint pairs so each round
    # rotates in one vectorized step.
    transposed = dense.shape[1] > dense.shape[0]
    A = np.array(dense.T if transposed else dense, dtype=np.float64, order="F")
    n = A.shape[1]
    V = np.eye(n)
    prev_sigma = np.sqrt(np.sort(np.einsum("ij,ij->j", A, A))[::-1])
    rounds = _round_robin_rounds(n)

    skip_tol, clean_tol = 1e-13, 1e-11
    converged = False
    residual = math.inf
    for _ in range(MAX_SWEEPS):
        max_rel = 0.0
        for ps, qs in rounds:
            P = A[:, ps]
            Q = A[:, qs]
            alpha = np.einsum("ij,ij->j", P, P)
            beta = np.einsum("ij,ij->j", Q, Q)
            gamma = np.einsum("ij,ij->j", P, Q)
            denom = np.sqrt(alpha * beta)
            live = denom > 0.0
            rel = np.zeros_like(gamma)
            np.divide(np.abs(gamma), denom, out=rel, where=live)
            if rel.size:
                max_rel = max(max_rel, float(rel.max()))
            need = rel > skip_tol
            if not np.any(need):
                continue
            g = gamma[need]
            zeta = (beta[need] - alpha[need]) / (2.0 * g)
            t = np.copysign(1.0, zeta) / (np.abs(zeta) + np.sqrt(1.0 + zeta * zeta))
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = c * t
            pi = ps[need]
            qi = qs[need]
            P = A[:, pi]
            Q = A[:, qi]
            A[:, pi] = c * P - s * Q
            A[:, qi] = s * P + c * Q
            Pv = V[:, pi]
            Qv = V[:, qi]
            V[:, pi] = c * Pv - s * Qv
            V[:, qi] = s * Pv + c * Qv
        residual = max_rel
        sigma_now = np.sqrt(np.sort(np.einsum("ij,ij->j", A, A))[::-1])
        scale = float(sigma_now[0]) if sigma_now.size and sigma_now[0] > 0 else 1.0
        sigma_shift = float(np.max(np.abs(sigma_now - prev_sigma))) / scale
        prev_sigma = sigma_now
        if max_rel <= clean_tol or (sigma_shift < SIGMA_CHANGE_TOL and max_rel <= 1e-9):
            converged = True
            break
    if not converged:
        raise ConvergenceError("Jacobi sweeps exhausted", residual=residual)

    norms = np.sqrt(np.einsum("ij,ij->j", A, A))
    order = np.argsort(-norms, kind="stable")[:k]
    sigma = norms[order]
    tiny = (norms[order[0]] if norms[order[0]] > 0 else 1.0) * 1e-300
    safe = np.where(sigma > tiny, sigma, 1.0)
    cols_U = A[:, order] / safe
    cols_V = V[:, order]
    degenerate = [c for c in range(k) if sigma[c] <= tiny]
    if degenerate:
        sigma = sigma.copy()
        sigma[degenerate] = 0.0
        cols_U[:, degenerate] = 0.0
        _complete_orthonormal(cols_U, degenerate)
    if transposed:
        return cols_V, sigma, cols_U.T
    return cols_U, sigma, cols_V.T


def _power_svd(m: SparseMatrix, k: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # Deflated power iteration on the Gram operator of the smaller side.
    # Right vectors when n <= m, left vectors otherwise; previously found
    # directions are projected out every step.
    use_right = m.n_cols <= m.n_rows
    dim = m.n_cols if use_right else m.n_rows
    if use_right:
        gram = lambda v: m.rmatvec(m.matvec(v))
        other = lambda v: m.matvec(v)
    else:
        gram = lambda v: m.matvec(m.rmatvec(v))
        other = lambda v: m.rmatvec(v)

    rng = np.random.default_rng(0x51D5)
    basis = np.zeros((dim, k))
    mates = np.zeros((m.n_rows if use_right else m.n_cols, k))
    sigma = np.zeros(k)
    for j in range(k):
        v = rng.standard_normal(dim)
        if j:
            v -= basis[:, :j] @ (basis[:, :j].T @ v)
        norm = np.linalg.norm(v)
        v = v / norm if norm > 0 else np.eye(dim)[j % dim]
        est = 0.0
        ok = False
        for _ in range(MAX_SWEEPS):
            w = gram(v)
            if j:
                w -= basis[:, :j] @ (basis[:, :j].T @ w)
            lam = float(v @ w)
            norm = np.linalg.norm(w)
            if norm == 0.0:
                est = 0.0
                ok = True
                break
            v = w / norm
            new_est = math.sqrt(max(lam, 0.0))
            if abs(new_est - est) <= SIGMA_CHANGE_TOL * max(new_est, 1e-30):
                est = new_est
                ok = True
                break
            est = new_est
        if not ok:
            raise ConvergenceError(f"power iteration stalled on triplet {j}", residual=est)
        basis[:, j] = v
        mate = other(v)
        s = np.linalg.norm(mate)
        sigma[j] = s
        if s > 0:
            mate = mate / s
            if j:
                mate -= mates[:, :j] @ (mates[:, :j].T @ mate)
                mn = np.linalg.norm(mate)
                if mn > 0:
                    mate = mate / mn
            mates[:, j] = mate
    zero = [j for j in range(k) if sigma[j] == 0.0]
    if zero:
        _complete_orthonormal(basis, zero)
        _complete_orthonormal(mates, zero)

    order = np.argsort(-sigma, kind="stable")
    sigma = sigma[order]
    basis = basis[:, order]
    mates = mates[:, order]
    U, Vt = (mates, basis.T) if use_right else (basis, mates.T)
    for name, resid in (("U", _ortho_residual(U)), ("V", _ortho_residual(Vt.T))):
        if resid > 1e-8:
            raise ConvergenceError(f"power iteration left {name} non-orthonormal", resid)
    return U, sigma, Vt


def _ortho_residual(columns: np.ndarray) -> float:
    g = columns.T @ columns
    return float(np.max(np.abs(g - np.eye(g.shape[0]))))

"""Dense numerics: seeded generators, Jacobi SVD and finite-difference oracles."""
from __future__ import annotations

import numpy as np

RNG_ALGORITHM = "numpy.Philox4x64"


class DimensionError(ValueError):
    pass


class NumericError(ArithmeticError):
    pass


def make_rng(seed) -> np.random.Generator:
    """Counter-based Philox generator; `seed` may be an int or a SeedSequence."""
    return np.random.Generator(np.random.Philox(seed))


def substreams(seed: int, n: int) -> list[np.random.Generator]:
    """`n` independent generators derived from `seed`, stable in their index."""
    return [make_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def _round_robin(n: int) -> list[tuple[np.ndarray, np.ndarray]]:
    # circle-method pairing: n-1 rounds, each a set of n/2 disjoint pairs
    players = list(range(n))
    rounds = []
    for _ in range(n - 1):
        half = n // 2
        p = np.array([min(players[i], players[n - 1 - i]) for i in range(half)])
        q = np.array([max(players[i], players[n - 1 - i]) for i in range(half)])
        rounds.append((p, q))
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


def batched_svd_values(stack: np.ndarray, tol: float = 1e-12, max_sweeps: int = 60) -> np.ndarray:
    """Singular values of each matrix in a (B, m, n) stack, descending per row.

    One-sided (Hestenes) Jacobi: columns are orthogonalised by plane rotations
    applied in parallel round-robin order, across the whole batch at once. The
    singular values are the final column norms.
    """
    a = np.array(stack, dtype=np.float64)
    if a.ndim != 3 or a.shape[1] == 0 or a.shape[2] == 0:
        raise DimensionError(f"expected a nonempty (B, m, n) stack, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NumericError("non-finite matrix entry")
    if a.shape[1] < a.shape[2]:
        a = np.swapaxes(a, 1, 2).copy()
    k = a.shape[2]
    if a.shape[1] > 2 * k:
        # triangular factor has the same singular values and far fewer rows
        a = np.linalg.qr(a, mode="r")
    if k % 2:
        a = np.concatenate([a, np.zeros(a.shape[:2] + (1,))], axis=2)
    rounds = _round_robin(a.shape[2]) if a.shape[2] > 1 else []
    for _ in range(max_sweeps):
        off = 0.0
        for p, q in rounds:
            ap, aq = a[:, :, p], a[:, :, q]
            alpha = np.einsum("bij,bij->bj", ap, ap)
            beta = np.einsum("bij,bij->bj", aq, aq)
            gamma = np.einsum("bij,bij->bj", ap, aq)
            scale = np.sqrt(alpha * beta)
            active = scale > 0
            rel = np.where(active, np.abs(gamma) / np.where(active, scale, 1.0), 0.0)
            off = max(off, float(rel.max(initial=0.0)))
            rotate = rel > tol
            if not rotate.any():
                continue
            g = np.where(rotate, gamma, 1.0)
            zeta = (beta - alpha) / (2.0 * g)
            t = np.sign(zeta) / (np.abs(zeta) + np.hypot(1.0, zeta))
            t = np.where(zeta == 0, 1.0, t)
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = c * t
            c = np.where(rotate, c, 1.0)[:, None, :]
            s = np.where(rotate, s, 0.0)[:, None, :]
            a[:, :, p] = c * ap - s * aq
            a[:, :, q] = s * ap + c * aq
        if off <= tol:
            break
    values = np.sqrt(np.einsum("bij,bij->bj", a, a))[:, :k]
    return -np.sort(-values, axis=1)


def svd_values(m) -> np.ndarray:
    """Descending singular values of a single matrix, length min(rows, cols)."""
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.size == 0:
        raise DimensionError(f"expected a nonempty matrix, got shape {m.shape}")
    return batched_svd_values(m[None])[0]


def symmetric_eigh(a) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (descending) and matching eigenvector columns of a symmetric matrix."""
    vals, vecs = np.linalg.eigh(np.asarray(a, dtype=np.float64))
    order = np.argsort(vals)[::-1]
    return vals[order], vecs[:, order]


def _checked(f, x) -> float:
    v = float(f(x))
    if not np.isfinite(v):
        raise NumericError(f"non-finite function value {v}")
    return v


def finite_diff_gradient(f, x, eps: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of scalar `f` at vector `x`."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    x = np.array(x, dtype=np.float64).ravel()
    grad = np.empty_like(x)
    for i in range(x.size):
        orig = x[i]
        x[i] = orig + eps
        up = _checked(f, x)
        x[i] = orig - eps
        down = _checked(f, x)
        x[i] = orig
        grad[i] = (up - down) / (2.0 * eps)
    return grad


def finite_diff_hessian_trace(f, x, eps: float = 1e-4) -> float:
    """Sum of central second differences along each coordinate axis."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    x = np.array(x, dtype=np.float64).ravel()
    center = _checked(f, x)
    total = 0.0
    for i in range(x.size):
        orig = x[i]
        x[i] = orig + eps
        up = _checked(f, x)
        x[i] = orig - eps
        down = _checked(f, x)
        x[i] = orig
        total += (up - 2.0 * center + down) / (eps * eps)
    return total

"""Linear operators with adjoints and operator-norm certificates.

Every operator carries ``norm_bound``, an upper bound on its operator norm.
The solver requires ``norm_bound < 1``; :func:`renormalize` rescales a problem
into that regime without moving its minimizers.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .model import Problem

__all__ = [
    "LinearOp",
    "matrix_op",
    "diag_op",
    "identity_op",
    "conv1d_op",
    "haar_analysis",
    "haar_synthesis",
    "sum_space_op",
    "multiframe_op",
    "renormalize",
    "RENORM_TARGET",
]

RENORM_TARGET = 0.999
_POWER_ITERS = 50
_POWER_INFLATE = 1.01
_DENSE_CONV_MAX = 1024


class LinearOp:
    """A linear map ``R**domain_dim -> R**codomain_dim`` and its adjoint.

    Parameters
    ----------
    domain_dim, codomain_dim : int
    forward, adjoint : callable
        Vector -> vector maps.  They are trusted to be mutually adjoint.
    norm_bound : float
        Upper bound on the operator norm.
    diagonal : ndarray, optional
        Diagonal entries, set only by constructors that know the operator is
        diagonal (used by the separable oracle).
    name : str
    """

    def __init__(
        self,
        domain_dim: int,
        codomain_dim: int,
        forward: Callable[[np.ndarray], np.ndarray],
        adjoint: Callable[[np.ndarray], np.ndarray],
        norm_bound: float,
        diagonal=None,
        name: str = "op",
    ):
        if domain_dim < 1 or codomain_dim < 1:
            raise ValueError("operator dimensions must be positive")
        norm_bound = float(norm_bound)
        if not np.isfinite(norm_bound) or norm_bound < 0:
            raise ValueError(f"norm bound must be finite and nonnegative, got {norm_bound}")
        self.domain_dim = int(domain_dim)
        self.codomain_dim = int(codomain_dim)
        self._forward = forward
        self._adjoint = adjoint
        self.norm_bound = norm_bound
        self.diagonal = None if diagonal is None else np.array(diagonal, dtype=float)
        self.name = name

    def __repr__(self):
        return (
            f"LinearOp({self.name!r}, {self.domain_dim} -> {self.codomain_dim}, "
            f"norm_bound={self.norm_bound:.6g})"
        )

    def forward(self, f) -> np.ndarray:
        f = np.asarray(f, dtype=float)
        if f.shape != (self.domain_dim,):
            raise ValueError(f"{self.name}: expected input of length {self.domain_dim}, got {f.shape}")
        return self._forward(f)

    def adjoint(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if y.shape != (self.codomain_dim,):
            raise ValueError(f"{self.name}: expected adjoint input of length {self.codomain_dim}, got {y.shape}")
        return self._adjoint(y)

    __call__ = forward

    @property
    def T(self) -> "LinearOp":
        """The adjoint as an operator in its own right."""
        diag = self.diagonal
        return LinearOp(
            self.codomain_dim, self.domain_dim, self._adjoint, self._forward,
            self.norm_bound, diagonal=diag, name=f"{self.name}*",
        )

    def to_dense(self) -> np.ndarray:
        eye = np.eye(self.domain_dim)
        return np.column_stack([self._forward(e) for e in eye])

    def scaled(self, factor: float) -> "LinearOp":
        factor = float(factor)
        fwd, adj = self._forward, self._adjoint
        diag = None if self.diagonal is None else self.diagonal * factor
        return LinearOp(
            self.domain_dim, self.codomain_dim,
            lambda f: factor * fwd(f), lambda y: factor * adj(y),
            abs(factor) * self.norm_bound, diagonal=diag, name=f"{factor:g}*{self.name}",
        )


def _power_norm(A: np.ndarray) -> float:
    """Power iteration estimate of the largest singular value of ``A``."""
    v = np.random.default_rng(0).standard_normal(A.shape[1])
    v /= np.linalg.norm(v)
    for _ in range(_POWER_ITERS):
        w = A.T @ (A @ v)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v = w / nw
    return float(np.linalg.norm(A @ v))


def matrix_op(entries, name: str = "matrix") -> LinearOp:
    """Dense matrix operator; norm bound from 50 power iterations inflated by 1%."""
    A = np.array(entries, dtype=float)
    if A.ndim != 2 or A.size == 0:
        raise ValueError("matrix_op needs a non-empty 2-D matrix")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix entries must be finite")
    A.setflags(write=False)
    diag = None
    if A.shape[0] == A.shape[1] and np.count_nonzero(A - np.diag(np.diag(A))) == 0:
        diag = np.diag(A).copy()
    op = LinearOp(
        A.shape[1], A.shape[0], lambda f: A @ f, lambda y: A.T @ y,
        _POWER_INFLATE * _power_norm(A), diagonal=diag, name=name,
    )
    op.matrix = A
    return op


def diag_op(d, name: str = "diag") -> LinearOp:
    """Diagonal operator with the exact bound ``max|d|``."""
    d = np.array(d, dtype=float).reshape(-1)
    if d.size == 0 or not np.all(np.isfinite(d)):
        raise ValueError("diagonal must be non-empty and finite")
    d.setflags(write=False)
    return LinearOp(d.size, d.size, lambda f: d * f, lambda y: d * y,
                    float(np.max(np.abs(d))), diagonal=d, name=name)


def identity_op(n: int) -> LinearOp:
    return LinearOp(n, n, lambda f: f.copy(), lambda y: y.copy(), 1.0,
                    diagonal=np.ones(n), name="identity")


def conv1d_op(kernel, n: int) -> LinearOp:
    """Circular convolution ``(K f)[i] = sum_j kernel[j] * f[(i - j) % n]``.

    Kernel index 0 aligns with output index 0 (no centering).  The adjoint is
    the correlation with the same kernel, and the norm bound is the largest
    modulus of the kernel's symbol on the ``n``-th roots of unity.
    """
    k = np.array(kernel, dtype=float).reshape(-1)
    if k.size == 0 or k.size > n:
        raise ValueError(f"kernel length {k.size} must be between 1 and n={n}")
    if not np.all(np.isfinite(k)):
        raise ValueError("kernel entries must be finite")
    if n <= _DENSE_CONV_MAX:
        padded = np.zeros(n)
        padded[:k.size] = k
        idx = (np.arange(n)[:, None] - np.arange(n)[None, :]) % n
        C = padded[idx]
        C.setflags(write=False)

        def fwd(f):
            return C @ f

        def adj(y):
            return C.T @ y
    else:
        taps = [(j, c) for j, c in enumerate(k) if c != 0.0]

        def fwd(f):
            out = np.zeros(n)
            for j, c in taps:
                out += c * np.roll(f, j)
            return out

        def adj(y):
            out = np.zeros(n)
            for j, c in taps:
                out += c * np.roll(y, -j)
            return out

    # symbol evaluated directly at exp(-2 pi i m / n), m = 0..n-1
    m = np.arange(n)[:, None]
    symbol = np.exp(-2j * np.pi * m * np.arange(k.size)[None, :] / n) @ k
    bound = float(np.max(np.abs(symbol)))
    return LinearOp(n, n, fwd, adj, bound, name=f"conv1d[{k.size}]")


def _check_pow2(n: int) -> int:
    n = int(n)
    if n < 1 or n & (n - 1):
        raise ValueError(f"Haar transform length must be a power of two, got {n}")
    return n


_SQRT_HALF = np.sqrt(0.5)


def _haar_fwd(x):
    a = x.astype(float, copy=True)
    details = []
    while a.size > 1:
        even, odd = a[0::2], a[1::2]
        details.append((even - odd) * _SQRT_HALF)
        a = (even + odd) * _SQRT_HALF
    return np.concatenate([a] + details[::-1])


def _haar_inv(c):
    a = c[:1].astype(float, copy=True)
    pos = 1
    while pos < c.size:
        d = c[pos:2 * pos]
        out = np.empty(2 * pos)
        out[0::2] = (a + d) * _SQRT_HALF
        out[1::2] = (a - d) * _SQRT_HALF
        a = out
        pos *= 2
    return a


def haar_analysis(n: int) -> LinearOp:
    """Full-depth orthonormal Haar transform (signal -> coefficients).

    Coefficient order is ``[coarsest average, coarsest detail, ..., finest
    details]``.  The adjoint is the inverse transform.
    """
    n = _check_pow2(n)
    return LinearOp(n, n, _haar_fwd, _haar_inv, 1.0, name="haar")


def haar_synthesis(n: int) -> LinearOp:
    """Inverse orthonormal Haar transform (coefficients -> signal)."""
    return haar_analysis(n).T


def sum_space_op(K: LinearOp) -> LinearOp:
    """``L(u, v) = K(u + v)`` on stacked ``(u, v)``; ``L* y = (K* y, K* y)``."""
    n = K.domain_dim

    def fwd(w):
        return K.forward(w[:n] + w[n:])

    def adj(y):
        z = K.adjoint(y)
        return np.concatenate([z, z])

    return LinearOp(2 * n, K.codomain_dim, fwd, adj, np.sqrt(2.0) * K.norm_bound,
                    name=f"sum[{K.name}]")


def multiframe_op(A: LinearOp, synthesis_ops: Sequence[LinearOp]) -> LinearOp:
    """``K(v_1, ..., v_n) = sum_i A(F_i* v_i)`` on concatenated coefficient blocks.

    ``synthesis_ops`` are the frame synthesis maps ``F_i*``; the adjoint
    returns ``(F_1 A* g, ..., F_n A* g)``.  The norm bound is
    ``||A|| * sqrt(sum_i ||F_i||**2)``.
    """
    synthesis_ops = list(synthesis_ops)
    if not synthesis_ops:
        raise ValueError("multiframe_op needs at least one frame")
    for F in synthesis_ops:
        if F.codomain_dim != A.domain_dim:
            raise ValueError(
                f"frame {F.name} maps into dimension {F.codomain_dim}, "
                f"but A expects {A.domain_dim}"
            )
    sizes = [F.domain_dim for F in synthesis_ops]
    splits = np.cumsum(sizes)[:-1]

    def fwd(v):
        x = np.zeros(A.domain_dim)
        for F, block in zip(synthesis_ops, np.split(v, splits)):
            x += F.forward(block)
        return A.forward(x)

    def adj(g):
        z = A.adjoint(g)
        return np.concatenate([F.adjoint(z) for F in synthesis_ops])

    bound = A.norm_bound * np.sqrt(sum(F.norm_bound ** 2 for F in synthesis_ops))
    op = LinearOp(sum(sizes), A.codomain_dim, fwd, adj, bound,
                  name=f"multiframe[{A.name};{len(sizes)}]")
    op.block_sizes = tuple(sizes)
    op.frames = tuple(synthesis_ops)
    return op


def renormalize(prob: Problem) -> tuple[Problem, float]:
    """Rescale ``prob`` so its operator bound is below one.

    With ``s = norm_bound / 0.999`` the operator and data are divided by ``s``
    and the weights by ``s**2``; the new objective is the old one divided by
    ``s**2``, so minimizers are unchanged.  Returns ``(problem, s)``, with
    ``s == 1`` and the input problem when no rescaling is needed.
    """
    nb = prob.operator.norm_bound
    if not np.isfinite(nb):
        raise ValueError("operator has no finite norm certificate")
    if nb < 1.0:
        return prob, 1.0
    s = nb / RENORM_TARGET
    op = prob.operator.scaled(1.0 / s)
    # certificate of the scaled operator, computed directly to avoid rounding above target
    op.norm_bound = RENORM_TARGET
    scaled = Problem(op, prob.data / s, prob.penalty.scaled(1.0 / s ** 2))
    return scaled, s

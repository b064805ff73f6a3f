"""Tensor-train data structures and format-level algorithms.

A tensor Y of order m is kept as a chain of third-order cores G_k of shape
(r_{k-1}, n_k, r_k) with boundary ranks r_0 = r_m = 1, so that

    Y[i_1, ..., i_m] = G_1[:, i_1, :] @ G_2[:, i_2, :] @ ... @ G_m[:, i_m, :].

Vectors of length n_1*...*n_m are identified with such tensors through
C-order (last mode fastest) linearization; equivalently, a rank-one train
with mode vectors x_1, ..., x_m densifies to kron(x_1, kron(x_2, ...)).
Operators on the same product space carry fourth-order cores
(r_{k-1}, n_k, n_k, r_k) indexed by a (row, column) pair per mode.

The module also provides block trains (b columns sharing all cores except
one), frame matrices assembled from the non-block cores, the environment
contractions needed to project operators onto a frame without ever
materializing it, SVD-based rounding, and the block-core shift that moves
the distinguished core one mode over while keeping the frame orthonormal.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DENSE_CAP = 10_000_000
SV_FLOOR = 1e-14


class CapExceededError(RuntimeError):
    """Raised when an operation would materialize more data than allowed."""


class RankCapError(RuntimeError):
    """Raised when a construction would exceed a hard rank cap."""


def _as_tuple(xs) -> tuple[int, ...]:
    return tuple(int(x) for x in xs)


# ---------------------------------------------------------------------------
# containers


@dataclass
class TTVector:
    """Vector on a mode product space, stored as a chain of 3D cores."""

    cores: list[np.ndarray]

    def __post_init__(self):
        if not self.cores:
            raise ValueError("empty core list")
        for k, g in enumerate(self.cores):
            if g.ndim != 3:
                raise ValueError(f"core {k} must be 3D, got shape {g.shape}")
        if self.cores[0].shape[0] != 1 or self.cores[-1].shape[2] != 1:
            raise ValueError("boundary ranks must both be 1")
        for k in range(len(self.cores) - 1):
            if self.cores[k].shape[2] != self.cores[k + 1].shape[0]:
                raise ValueError(f"rank mismatch between cores {k} and {k + 1}")

    @property
    def order(self) -> int:
        return len(self.cores)

    @property
    def mode_sizes(self) -> tuple[int, ...]:
        return _as_tuple(g.shape[1] for g in self.cores)

    @property
    def ranks(self) -> tuple[int, ...]:
        return (1,) + _as_tuple(g.shape[2] for g in self.cores)

    def copy(self) -> "TTVector":
        return TTVector([g.copy() for g in self.cores])

    def __repr__(self) -> str:
        return f"TTVector(mode_sizes={self.mode_sizes}, ranks={self.ranks})"


@dataclass
class TTOperator:
    """Operator on a mode product space, stored as a chain of 4D cores."""

    cores: list[np.ndarray]

    def __post_init__(self):
        if not self.cores:
            raise ValueError("empty core list")
        for k, g in enumerate(self.cores):
            if g.ndim != 4:
                raise ValueError(f"core {k} must be 4D, got shape {g.shape}")
            if g.shape[1] != g.shape[2]:
                raise ValueError(f"core {k} must act on square modes")
        if self.cores[0].shape[0] != 1 or self.cores[-1].shape[3] != 1:
            raise ValueError("boundary ranks must both be 1")
        for k in range(len(self.cores) - 1):
            if self.cores[k].shape[3] != self.cores[k + 1].shape[0]:
                raise ValueError(f"rank mismatch between cores {k} and {k + 1}")

    @property
    def order(self) -> int:
        return len(self.cores)

    @property
    def mode_sizes(self) -> tuple[int, ...]:
        return _as_tuple(g.shape[1] for g in self.cores)

    @property
    def ranks(self) -> tuple[int, ...]:
        return (1,) + _as_tuple(g.shape[3] for g in self.cores)

    def copy(self) -> "TTOperator":
        return TTOperator([g.copy() for g in self.cores])

    def __repr__(self) -> str:
        return f"TTOperator(mode_sizes={self.mode_sizes}, ranks={self.ranks})"


@dataclass
class BlockTT:
    """b column vectors sharing all cores except the 4D core at block_index.

    The block core has shape (r_{k-1}, n_k, b, r_k); column i_b evaluated at a
    multi-index threads the slice ``core[:, i_k, i_b, :]`` into the chain.
    Cores left of the block are kept left-orthonormal and cores right of it
    right-orthonormal whenever the structure serves as a frame.
    """

    cores: list[np.ndarray]
    block_index: int

    def __post_init__(self):
        m = len(self.cores)
        if not 0 <= self.block_index < m:
            raise ValueError("block index out of range")
        for k, g in enumerate(self.cores):
            want = 4 if k == self.block_index else 3
            if g.ndim != want:
                raise ValueError(f"core {k} must be {want}D, got shape {g.shape}")
        ranks = [g.shape[0] for g in self.cores] + [self.cores[-1].shape[-1]]
        if ranks[0] != 1 or ranks[-1] != 1:
            raise ValueError("boundary ranks must both be 1")
        for k in range(m - 1):
            if self.cores[k].shape[-1] != self.cores[k + 1].shape[0]:
                raise ValueError(f"rank mismatch between cores {k} and {k + 1}")

    @property
    def order(self) -> int:
        return len(self.cores)

    @property
    def block_size(self) -> int:
        return self.cores[self.block_index].shape[2]

    @property
    def mode_sizes(self) -> tuple[int, ...]:
        return _as_tuple(g.shape[1] for g in self.cores)

    @property
    def ranks(self) -> tuple[int, ...]:
        return (1,) + _as_tuple(g.shape[-1] for g in self.cores)

    def column(self, i_b: int) -> TTVector:
        """Extract column i_b as a plain train (cores are copied)."""
        cores = [g.copy() for g in self.cores]
        cores[self.block_index] = np.ascontiguousarray(
            self.cores[self.block_index][:, :, i_b, :]
        )
        return TTVector(cores)


@dataclass
class FrameContext:
    """All cores of a train except the one at ``index``.

    Represents the frame matrix X^{<k} (x) I_{n_k} (x) (X^{>k})^T implicitly;
    its action and projections are evaluated core by core through environment
    contractions, never by materializing the frame.
    """

    cores: list[np.ndarray]
    index: int

    @property
    def order(self) -> int:
        return len(self.cores)

    @property
    def local_dim(self) -> int:
        rl = 1 if self.index == 0 else self.cores[self.index - 1].shape[-1]
        rr = 1 if self.index == self.order - 1 else self.cores[self.index + 1].shape[0]
        n = self.cores[self.index].shape[1]
        return rl * n * rr

    @classmethod
    def from_block(cls, x: BlockTT) -> "FrameContext":
        return cls(x.cores, x.block_index)


# ---------------------------------------------------------------------------
# evaluation / densification


def evaluate(v: TTVector, multi_index) -> float | complex:
    """Entry of the represented tensor at a 0-based multi-index."""
    idx = _as_tuple(multi_index)
    if len(idx) != v.order:
        raise IndexError(f"expected {v.order} indices, got {len(idx)}")
    for k, (i, n) in enumerate(zip(idx, v.mode_sizes)):
        if not 0 <= i < n:
            raise IndexError(f"index {i} out of range for mode {k} of size {n}")
    acc = v.cores[0][:, idx[0], :]
    for k in range(1, v.order):
        acc = acc @ v.cores[k][:, idx[k], :]
    return acc[0, 0]


def evaluate_operator(a: TTOperator, row_index, col_index) -> float:
    """Entry of the represented operator at a (row, column) multi-index pair."""
    ridx = _as_tuple(row_index)
    cidx = _as_tuple(col_index)
    if len(ridx) != a.order or len(cidx) != a.order:
        raise IndexError("index length must equal the operator order")
    for k, (i, j, n) in enumerate(zip(ridx, cidx, a.mode_sizes)):
        if not (0 <= i < n and 0 <= j < n):
            raise IndexError(f"index out of range for mode {k} of size {n}")
    acc = a.cores[0][:, ridx[0], cidx[0], :]
    for k in range(1, a.order):
        acc = acc @ a.cores[k][:, ridx[k], cidx[k], :]
    return acc[0, 0]


def densify(v: TTVector, cap: int = DENSE_CAP) -> np.ndarray:
    """Dense vector of length prod(mode_sizes), C-order linearization.

    Entry at linear index ravel_multi_index((i_1,...,i_m)) equals
    ``evaluate(v, (i_1,...,i_m))``; for rank-one trains this is the
    Kronecker chain kron(x_1, ..., x_m).
    """
    total = int(np.prod(v.mode_sizes, dtype=np.int64))
    if total > cap:
        raise CapExceededError(f"dense size {total} exceeds cap {cap}")
    acc = v.cores[0].reshape(v.mode_sizes[0], -1)
    for k in range(1, v.order):
        g = v.cores[k]
        acc = acc @ g.reshape(g.shape[0], -1)
        acc = acc.reshape(-1, g.shape[2])
    return acc.reshape(-1)


def densify_operator(a: TTOperator, cap: int = DENSE_CAP) -> np.ndarray:
    """Dense matrix of the operator; rows/columns use the same C-order map."""
    n_total = int(np.prod(a.mode_sizes, dtype=np.int64))
    if n_total * n_total > cap:
        raise CapExceededError(f"dense size {n_total}^2 exceeds cap {cap}")
    acc = a.cores[0][0]  # (n, n, r)
    rows = cols = a.mode_sizes[0]
    for k in range(1, a.order):
        g = a.cores[k]
        acc = np.einsum("IJa,aijb->IiJjb", acc, g, optimize=True)
        rows *= g.shape[1]
        cols *= g.shape[2]
        acc = acc.reshape(rows, cols, g.shape[3])
    return acc[:, :, 0]


def identity_operator(mode_sizes) -> TTOperator:
    cores = [np.eye(n).reshape(1, n, n, 1) for n in mode_sizes]
    return TTOperator(cores)


def random_tt(rng: np.random.Generator, mode_sizes, ranks) -> TTVector:
    """Random Gaussian train with the given interior ranks (clipped to feasible)."""
    sizes = _as_tuple(mode_sizes)
    full = list(feasible_ranks(sizes, ranks))
    cores = [
        rng.standard_normal((full[k], sizes[k], full[k + 1]))
        for k in range(len(sizes))
    ]
    return TTVector(cores)


def feasible_ranks(mode_sizes, ranks) -> tuple[int, ...]:
    """Clip a requested rank profile to what the unfoldings can support."""
    sizes = _as_tuple(mode_sizes)
    m = len(sizes)
    req = list(_as_tuple(ranks))
    if len(req) == m - 1:
        req = [1] + req + [1]
    if len(req) != m + 1:
        raise ValueError("rank profile must have m+1 (or m-1 interior) entries")
    out = [1] * (m + 1)
    left = 1
    for k in range(1, m):
        left = min(left * sizes[k - 1], 2**62)
        right = int(np.prod(sizes[k:], dtype=np.int64))
        out[k] = max(1, min(req[k], left, right))
    return tuple(out)


# ---------------------------------------------------------------------------
# products


def tt_matvec(a: TTOperator, v: TTVector) -> TTVector:
    """Apply the operator; output ranks are the elementwise rank products."""
    if a.mode_sizes != v.mode_sizes:
        raise ValueError(
            f"mode mismatch: operator {a.mode_sizes} vs vector {v.mode_sizes}"
        )
    cores = []
    for ga, gv in zip(a.cores, v.cores):
        ra0, n, _, ra1 = ga.shape
        rv0, _, rv1 = gv.shape
        h = np.einsum("aijb,pjq->apibq", ga, gv, optimize=True)
        cores.append(h.reshape(ra0 * rv0, n, ra1 * rv1))
    return TTVector(cores)


def tt_inner(y: TTVector, x: TTVector) -> float | complex:
    """Inner product <y, x> (conjugate-linear in y)."""
    if y.mode_sizes != x.mode_sizes:
        raise ValueError("mode mismatch")
    acc = np.einsum("aib,aic->bc", np.conj(y.cores[0]), x.cores[0])
    for gy, gx in zip(y.cores[1:], x.cores[1:]):
        acc = np.einsum("bc,bid,cie->de", acc, np.conj(gy), gx, optimize=True)
    return acc[0, 0]


def tt_bilinear(y: TTVector, a: TTOperator, x: TTVector) -> float | complex:
    """Sesquilinear form y^H A x evaluated by core contraction."""
    if not (y.mode_sizes == a.mode_sizes == x.mode_sizes):
        raise ValueError("mode mismatch")
    env = np.ones((1, 1, 1))
    for gy, ga, gx in zip(y.cores, a.cores, x.cores):
        env = env_left_step(env, gy, ga, gx)
    return env[0, 0, 0]


def rank_one_bilinear(y_vectors, a: TTOperator, x_vectors) -> float | complex:
    """y^H A x for rank-one tuples given by their per-mode vectors."""
    acc = np.ones((1, 1))
    for yk, gk, xk in zip(y_vectors, a.cores, x_vectors):
        acc = acc @ np.einsum("i,aijb,j->ab", np.conj(yk), gk, xk, optimize=True)
    return acc[0, 0]


def tt_op_add(a: TTOperator, b: TTOperator) -> TTOperator:
    """Sum of two operators; interior ranks add."""
    if a.mode_sizes != b.mode_sizes:
        raise ValueError("mode mismatch")
    m = a.order
    cores = []
    for k in range(m):
        ga, gb = a.cores[k], b.cores[k]
        if m == 1:
            cores.append(ga + gb)
            continue
        ra0, n, _, ra1 = ga.shape
        rb0, _, _, rb1 = gb.shape
        if k == 0:
            h = np.concatenate([ga, gb], axis=3)
        elif k == m - 1:
            h = np.concatenate([ga, gb], axis=0)
        else:
            h = np.zeros((ra0 + rb0, n, n, ra1 + rb1), dtype=np.result_type(ga, gb))
            h[:ra0, :, :, :ra1] = ga
            h[ra0:, :, :, ra1:] = gb
        cores.append(h)
    return TTOperator(cores)


def tt_op_scale(a: TTOperator, alpha: float) -> TTOperator:
    cores = [g.copy() for g in a.cores]
    cores[0] = cores[0] * alpha
    return TTOperator(cores)


def tt_op_outer(u: TTVector, v: TTVector) -> TTOperator:
    """Rank-product operator u v^T from two trains (no conjugation)."""
    if u.mode_sizes != v.mode_sizes:
        raise ValueError("mode mismatch")
    cores = []
    for gu, gv in zip(u.cores, v.cores):
        a0, n, a1 = gu.shape
        c0, _, c1 = gv.shape
        h = np.einsum("aib,cjd->acijbd", gu, gv, optimize=True)
        cores.append(h.reshape(a0 * c0, n, n, a1 * c1))
    return TTOperator(cores)


# ---------------------------------------------------------------------------
# orthonormalization


def _positive_qr(mat: np.ndarray):
    """Economy QR with nonnegative R diagonal, making the factors unique."""
    q, r = np.linalg.qr(mat)
    d = np.sign(np.real(np.diagonal(r))).astype(mat.dtype)
    d[d == 0] = 1.0
    return q * d[np.newaxis, :], r * np.conj(d)[:, np.newaxis]


def left_orthonormalize_core(t, k: int) -> np.ndarray:
    """Replace core k by its left-orthonormal factor and return the transfer.

    The returned matrix R (shape new_rank x r_k) must be absorbed into core
    k+1 by the caller (``absorb_transfer_right``) to keep the represented
    tensor unchanged. For block trains, k must not be the block index.
    """
    cores = t.cores
    if isinstance(t, BlockTT) and k == t.block_index:
        raise ValueError("cannot orthonormalize the block core")
    g = cores[k]
    if g.ndim != 3:
        raise ValueError("core must be 3D")
    r0, n, r1 = g.shape
    q, r = _positive_qr(g.reshape(r0 * n, r1))
    cores[k] = q.reshape(r0, n, q.shape[1])
    return r


def right_orthonormalize_core(t, k: int) -> np.ndarray:
    """Mirror of ``left_orthonormalize_core``; transfer goes to core k-1."""
    cores = t.cores
    if isinstance(t, BlockTT) and k == t.block_index:
        raise ValueError("cannot orthonormalize the block core")
    g = cores[k]
    if g.ndim != 3:
        raise ValueError("core must be 3D")
    r0, n, r1 = g.shape
    q, r = _positive_qr(g.reshape(r0, n * r1).T)
    cores[k] = q.T.reshape(q.shape[1], n, r1)
    return r.T


def absorb_transfer_right(t, k: int, transfer: np.ndarray) -> None:
    """Multiply transfer into core k+1 from the left (3D or 4D block core)."""
    g = t.cores[k + 1]
    if g.ndim == 3:
        t.cores[k + 1] = np.einsum("xa,aib->xib", transfer, g)
    else:
        t.cores[k + 1] = np.einsum("xa,aibc->xibc", transfer, g)


def absorb_transfer_left(t, k: int, transfer: np.ndarray) -> None:
    """Multiply transfer into core k-1 from the right."""
    g = t.cores[k - 1]
    if g.ndim == 3:
        t.cores[k - 1] = np.einsum("aib,bx->aix", g, transfer)
    else:
        t.cores[k - 1] = np.einsum("aibc,cx->aibx", g, transfer)


def is_left_orthonormal(core: np.ndarray, tol: float = 1e-12) -> bool:
    r0, n, r1 = core.shape
    m = core.reshape(r0 * n, r1)
    return bool(np.max(np.abs(np.conj(m.T) @ m - np.eye(r1))) <= tol)


def is_right_orthonormal(core: np.ndarray, tol: float = 1e-12) -> bool:
    r0, n, r1 = core.shape
    m = core.reshape(r0, n * r1)
    return bool(np.max(np.abs(m @ np.conj(m.T) - np.eye(r0))) <= tol)


# ---------------------------------------------------------------------------
# rounding


def _truncation_rank(s: np.ndarray, budget: float, max_rank, floor: float) -> int:
    """Smallest kept rank honoring the tail-energy budget, floor and cap."""
    if s.size == 0:
        return 1
    tail = np.sqrt(np.maximum(0.0, np.cumsum(s[::-1] ** 2)))[::-1]
    r_energy = s.size
    if budget > 0:
        ok = np.nonzero(tail <= budget)[0]
        r_energy = int(ok[0]) if ok.size else s.size
    r_floor = int(np.count_nonzero(s > floor * s[0])) if s[0] > 0 else 1
    r = min(r_energy, r_floor)
    if max_rank is not None:
        r = min(r, int(max_rank))
    return max(1, r)


def tt_round(
    v: TTVector,
    tol: float,
    max_rank: int | None = None,
    sv_floor: float = SV_FLOOR,
) -> TTVector:
    """SVD rounding to a relative Frobenius tolerance.

    The budget is split as tol/sqrt(m-1) per truncation, which bounds the
    accumulated error by tol * ||v||. With tol = 0 only singular values at
    the relative floor are dropped, recovering the minimal exact ranks.
    """
    if tol < 0:
        raise ValueError("tolerance must be nonnegative")
    out = v.copy()
    m = out.order
    if m == 1:
        return out
    for k in range(m - 1, 0, -1):
        transfer = right_orthonormalize_core(out, k)
        absorb_transfer_left(out, k, transfer)
    norm = float(np.linalg.norm(out.cores[0]))
    budget = tol * norm / np.sqrt(m - 1)
    for k in range(m - 1):
        g = out.cores[k]
        r0, n, r1 = g.shape
        u, s, vh = np.linalg.svd(g.reshape(r0 * n, r1), full_matrices=False)
        r = _truncation_rank(s, budget, max_rank, sv_floor)
        out.cores[k] = u[:, :r].reshape(r0, n, r)
        carry = s[:r, np.newaxis] * vh[:r]
        absorb_transfer_right(out, k, carry)
    return out


def tt_round_operator(
    a: TTOperator,
    tol: float,
    max_rank: int | None = None,
    sv_floor: float = SV_FLOOR,
) -> TTOperator:
    """Rounding for operators: each core is rounded with its modes fused."""
    fused = TTVector(
        [g.reshape(g.shape[0], g.shape[1] * g.shape[2], g.shape[3]) for g in a.cores]
    )
    rounded = tt_round(fused, tol, max_rank=max_rank, sv_floor=sv_floor)
    sizes = a.mode_sizes
    cores = [
        g.reshape(g.shape[0], sizes[k], sizes[k], g.shape[2])
        for k, g in enumerate(rounded.cores)
    ]
    return TTOperator(cores)


# ---------------------------------------------------------------------------
# environments and frame products
#
# A left environment L[x, a, y] contracts bra cores (conjugated), operator
# cores and ket cores over all modes strictly left of a position; a right
# environment R[u, c, v] does the same to the right. The projected operator
# at the open position is then L * A_k * R.


def env_left_step(env, bra, op, ket):
    return np.einsum(
        "xiu,xay,aijc,yjv->ucv", np.conj(bra), env, op, ket, optimize=True
    )


def env_right_step(env, bra, op, ket):
    return np.einsum(
        "xiu,aijc,yjv,ucv->xay", np.conj(bra), op, ket, env, optimize=True
    )


def left_environments(frame: FrameContext, a: TTOperator) -> list[np.ndarray]:
    """L[p] for p = 0..index; L[p] contracts cores 0..p-1."""
    envs = [np.ones((1, 1, 1))]
    for p in range(frame.index):
        g = frame.cores[p]
        envs.append(env_left_step(envs[-1], g, a.cores[p], g))
    return envs


class FrameEnvCache:
    """Left/right environments of a sweep frame against one operator.

    ``left[p]`` contracts cores 0..p-1 and ``right[p]`` cores p+1..m-1;
    entries are valid for p <= block_index resp. p >= block_index and are
    refreshed one contraction at a time as the block moves, so a whole sweep
    costs O(m) environment updates instead of O(m^2).
    """

    def __init__(self, op: TTOperator, cores: list[np.ndarray], block_index: int):
        m = len(cores)
        self.op = op
        self.left: list[np.ndarray | None] = [None] * m
        self.right: list[np.ndarray | None] = [None] * m
        self.left[0] = np.ones((1, 1, 1))
        self.right[m - 1] = np.ones((1, 1, 1))
        for p in range(m - 1, block_index, -1):
            self.right[p - 1] = env_right_step(
                self.right[p], cores[p], op.cores[p], cores[p]
            )
        for p in range(block_index):
            self.left[p + 1] = env_left_step(
                self.left[p], cores[p], op.cores[p], cores[p]
            )

    def refresh_after_shift(self, cores: list[np.ndarray], old_index: int, new_index: int):
        if new_index == old_index + 1:
            g = cores[old_index]
            self.left[new_index] = env_left_step(
                self.left[old_index], g, self.op.cores[old_index], g
            )
        elif new_index == old_index - 1:
            g = cores[old_index]
            self.right[new_index] = env_right_step(
                self.right[old_index], g, self.op.cores[old_index], g
            )
        else:
            raise ValueError("block moves one mode at a time")


def right_environments(frame: FrameContext, a: TTOperator) -> list[np.ndarray]:
    """R[p] for p = index..m-1 (indexed from frame.index); R[p] contracts cores p+1..m-1."""
    m = frame.order
    envs = [np.ones((1, 1, 1))]
    for p in range(m - 1, frame.index, -1):
        g = frame.cores[p]
        envs.append(env_right_step(envs[-1], g, a.cores[p], g))
    envs.reverse()
    return envs


def _frame_envs(frame: FrameContext, a: TTOperator, envs=None):
    if envs is not None:
        return envs
    left = left_environments(frame, a)[-1]
    right = right_environments(frame, a)[0]
    return left, right


def env_apply(left, op_core, right, y: np.ndarray) -> np.ndarray:
    """(L * A_k * R) y with y given as the (r_l, n, r_r) coefficient tensor."""
    return np.einsum("xay,aijc,ucv,yjv->xiu", left, op_core, right, y, optimize=True)


def frame_apply(frame: FrameContext, a: TTOperator, y: np.ndarray, envs=None) -> np.ndarray:
    """Projected matrix-vector product X_frame^H A X_frame y.

    ``y`` may be a vector of length local_dim or a matrix with such columns;
    the frame itself is never materialized.
    """
    if a.mode_sizes != _as_tuple(g.shape[1] for g in frame.cores):
        raise ValueError("mode mismatch between frame and operator")
    left, right = _frame_envs(frame, a, envs)
    rl, n, rr = left.shape[2], frame.cores[frame.index].shape[1], right.shape[2]
    dim = rl * n * rr
    y = np.asarray(y)
    batched = y.ndim == 2
    if y.shape[0] != dim:
        raise ValueError(f"expected leading dimension {dim}, got {y.shape[0]}")
    cols = y.shape[1] if batched else 1
    yt = y.reshape(rl, n, rr, cols)
    z = np.einsum(
        "xay,aijc,ucv,yjvB->xiuB", left, a.cores[frame.index], right, yt, optimize=True
    )
    z = z.reshape(dim, cols)
    return z if batched else z[:, 0]


def frame_project(
    frame: FrameContext, a: TTOperator, envs=None, dim_cap: int = 10_000
) -> np.ndarray:
    """Explicit projected matrix X_frame^H A X_frame."""
    if a.mode_sizes != _as_tuple(g.shape[1] for g in frame.cores):
        raise ValueError("mode mismatch between frame and operator")
    dim = frame.local_dim
    if dim > dim_cap:
        raise CapExceededError(f"projected dimension {dim} exceeds cap {dim_cap}")
    left, right = _frame_envs(frame, a, envs)
    mat = np.einsum(
        "xay,aijc,ucv->xiuyjv", left, a.cores[frame.index], right, optimize=True
    )
    return mat.reshape(dim, dim)


def densify_frame(frame: FrameContext, cap: int = DENSE_CAP) -> np.ndarray:
    """Dense frame matrix (testing aid; guarded by the dense cap)."""
    sizes = [g.shape[1] for g in frame.cores]
    total = int(np.prod(sizes, dtype=np.int64))
    if total * frame.local_dim > cap:
        raise CapExceededError("dense frame would exceed cap")
    k = frame.index
    left = np.ones((1, 1))
    for p in range(k):
        g = frame.cores[p]
        left = np.einsum("Ia,aib->Iib", left, g).reshape(-1, g.shape[2])
    right = np.ones((1, 1))
    for p in range(frame.order - 1, k, -1):
        g = frame.cores[p]
        right = np.einsum("aib,bJ->aiJ", g, right).reshape(g.shape[0], -1)
    n_k = sizes[k]
    # rows (I, i, J), cols (x, i, u): identity stitched along the open mode
    nl, rl = left.shape
    rr, nr = right.shape
    mat = np.zeros((nl, n_k, nr, rl, n_k, rr), dtype=np.result_type(left, right))
    for i in range(n_k):
        mat[:, i, :, :, i, :] = np.einsum("Ix,uJ->IJxu", left, right)
    return mat.reshape(nl * n_k * nr, rl * n_k * rr)


# ---------------------------------------------------------------------------
# block-core shifting


def _orthonormal_extension(basis: np.ndarray, count: int, rng: np.random.Generator):
    """Random columns orthonormal to ``basis`` and to each other."""
    rows = basis.shape[0]
    count = min(count, rows - basis.shape[1])
    if count <= 0:
        return np.zeros((rows, 0))
    extra = rng.standard_normal((rows, count))
    extra -= basis @ (basis.T @ extra)
    q, _ = _positive_qr(extra)
    return q[:, :count]


def shift_block_core(
    x: BlockTT,
    direction: int,
    target_rank: int,
    enrichment: int = 0,
    rng: np.random.Generator | None = None,
    sv_floor: float = SV_FLOOR,
) -> BlockTT:
    """Move the block core one mode over, truncating by SVD.

    The block core is unfolded with the walked-over mode attached to its
    bond, SVD-truncated to min(target_rank, numerical rank), and the column
    factor is pushed into the neighbor, which becomes the new block core.
    ``enrichment`` random orthonormal columns are appended to the retained
    singular vectors with zero coefficient rows, so the represented columns
    are unchanged while the frame gains room; the new frame stays orthonormal
    by construction.
    """
    if direction not in (+1, -1):
        raise ValueError("direction must be +1 or -1")
    k = x.block_index
    m = x.order
    if (direction == +1 and k == m - 1) or (direction == -1 and k == 0):
        raise ValueError("cannot shift the block core past the boundary")
    if enrichment and rng is None:
        raise ValueError("enrichment requires a random generator")
    g = x.cores[k]
    r0, n, b, r1 = g.shape
    if direction == +1:
        mat = g.transpose(0, 1, 2, 3).reshape(r0 * n, b * r1)
        u, s, vh = np.linalg.svd(mat, full_matrices=False)
        rho = _truncation_rank(s, 0.0, target_rank, sv_floor)
        u = u[:, :rho]
        coef = s[:rho, np.newaxis] * vh[:rho]  # (rho, b*r1)
        if enrichment:
            extra = _orthonormal_extension(u, enrichment, rng)
            u = np.concatenate([u, extra], axis=1)
            coef = np.concatenate(
                [coef, np.zeros((extra.shape[1], b * r1))], axis=0
            )
        rho_t = u.shape[1]
        x.cores[k] = u.reshape(r0, n, rho_t)
        coef = coef.reshape(rho_t, b, r1)
        nxt = x.cores[k + 1]  # (r1, n', r2)
        x.cores[k + 1] = np.einsum("sbc,cjt->sjbt", coef, nxt, optimize=True)
        x.block_index = k + 1
    else:
        mat = g.transpose(0, 2, 1, 3).reshape(r0 * b, n * r1)
        u, s, vh = np.linalg.svd(mat, full_matrices=False)
        rho = _truncation_rank(s, 0.0, target_rank, sv_floor)
        core = vh[:rho]  # (rho, n*r1), orthonormal rows
        coef = u[:, :rho] * s[np.newaxis, :rho]  # (r0*b, rho)
        if enrichment:
            extra = _orthonormal_extension(core.T, enrichment, rng)
            core = np.concatenate([core, extra.T], axis=0)
            coef = np.concatenate(
                [coef, np.zeros((r0 * b, extra.shape[1]))], axis=1
            )
        rho_t = core.shape[0]
        x.cores[k] = core.reshape(rho_t, n, r1)
        coef = coef.reshape(r0, b, rho_t)
        prv = x.cores[k - 1]  # (r2, n', r0)
        x.cores[k - 1] = np.einsum("cja,abs->cjbs", prv, coef, optimize=True)
        x.block_index = k - 1
    return x


def block_columns_dense(x: BlockTT, cap: int = DENSE_CAP) -> np.ndarray:
    """Densify all block columns into a matrix (testing aid)."""
    total = int(np.prod(x.mode_sizes, dtype=np.int64))
    if total * x.block_size > cap:
        raise CapExceededError("dense block would exceed cap")
    return np.stack([densify(x.column(i)) for i in range(x.block_size)], axis=1)


# ---------------------------------------------------------------------------
# serialization
#
# JSON: {"kind": "tt-vector"|"tt-operator", "order": m,
#        "mode_sizes": [...], "ranks": [...], "cores": [flat row-major lists]}
# Binary: magic b"TTV1"/b"TTO1", then little-endian uint64 fields
#        m, mode_sizes[m], ranks[m+1], then each core as float64 row-major.


_MAGIC = {"tt-vector": b"TTV1", "tt-operator": b"TTO1"}


def _core_shapes(kind, sizes, ranks):
    if kind == "tt-vector":
        return [(ranks[k], sizes[k], ranks[k + 1]) for k in range(len(sizes))]
    return [(ranks[k], sizes[k], sizes[k], ranks[k + 1]) for k in range(len(sizes))]


def tt_to_json(t: TTVector | TTOperator) -> dict:
    kind = "tt-vector" if isinstance(t, TTVector) else "tt-operator"
    return {
        "kind": kind,
        "order": t.order,
        "mode_sizes": list(t.mode_sizes),
        "ranks": list(t.ranks),
        "cores": [np.asarray(g, dtype=np.float64).reshape(-1).tolist() for g in t.cores],
    }


def tt_from_json(doc: dict) -> TTVector | TTOperator:
    kind = doc["kind"]
    if kind not in _MAGIC:
        raise ValueError(f"unknown kind {kind!r}")
    sizes = _as_tuple(doc["mode_sizes"])
    ranks = _as_tuple(doc["ranks"])
    shapes = _core_shapes(kind, sizes, ranks)
    cores = [
        np.asarray(flat, dtype=np.float64).reshape(shape)
        for flat, shape in zip(doc["cores"], shapes)
    ]
    return TTVector(cores) if kind == "tt-vector" else TTOperator(cores)


def tt_to_bytes(t: TTVector | TTOperator) -> bytes:
    kind = "tt-vector" if isinstance(t, TTVector) else "tt-operator"
    head = [np.uint64(t.order).tobytes()]
    head.append(np.asarray(t.mode_sizes, dtype="<u8").tobytes())
    head.append(np.asarray(t.ranks, dtype="<u8").tobytes())
    body = [np.ascontiguousarray(g, dtype="<f8").tobytes() for g in t.cores]
    return _MAGIC[kind] + b"".join(head) + b"".join(body)


def tt_from_bytes(buf: bytes) -> TTVector | TTOperator:
    magic, buf = buf[:4], buf[4:]
    kinds = {v: k for k, v in _MAGIC.items()}
    if magic not in kinds:
        raise ValueError("bad magic")
    kind = kinds[magic]
    m = int(np.frombuffer(buf[:8], dtype="<u8")[0])
    off = 8
    sizes = _as_tuple(np.frombuffer(buf[off : off + 8 * m], dtype="<u8"))
    off += 8 * m
    ranks = _as_tuple(np.frombuffer(buf[off : off + 8 * (m + 1)], dtype="<u8"))
    off += 8 * (m + 1)
    cores = []
    for shape in _core_shapes(kind, sizes, ranks):
        count = int(np.prod(shape))
        cores.append(
            np.frombuffer(buf[off : off + 8 * count], dtype="<f8").reshape(shape).copy()
        )
        off += 8 * count
    if off != len(buf):
        raise ValueError("trailing bytes in serialized train")
    return TTVector(cores) if kind == "tt-vector" else TTOperator(cores)

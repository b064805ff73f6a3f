"""Alternating sweep solver for the smallest-|lambda_m| eigenvalue tuples.

The operator-determinant pencil of the problem is kept in train form; a
block iterate with one distinguished core sweeps left-to-right and back,
solving the projected dense pencil at each mode, picking block_size Ritz
pairs by a residual/angle heuristic, and transporting single-pair frames
across the modes to estimate residuals cheaply and to assemble candidate
eigenvector tuples. Converged tuples are polished by Rayleigh quotient
iteration, screened against the already-found list, and kept only while
among the closest to the target.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, asdict

import numpy as np

from .dense_kernels import generalized_eig, principal_cosine, select_ritz
from .delta_builder import apply_shift, build_delta0, build_delta_i
from .mep_problem import (
    EigenTuple,
    MEProblem,
    SingularRayleighError,
    duplicate_check,
    left_eigenvector_tuple,
    tensor_rayleigh_quotient,
    trqi_refine,
)
from .tt_core import (
    BlockTT,
    FrameContext,
    FrameEnvCache,
    TTOperator,
    env_apply,
    env_left_step,
    env_right_step,
    frame_apply,
    frame_project,
    shift_block_core,
)


@dataclass
class SolverConfig:
    """Sweep parameters; defaults follow the reference experiment setup."""

    block_size: int = 5
    kick: int = 1
    max_rank: int | None = None  # None -> block_size + 1
    sweeps: int = 20
    eps: float = 1e-6
    eps1: float = 1e-8
    xi: float = 1e-4
    cos_threshold: float = 0.99
    keep_found: int | None = None  # None -> 4 * block_size
    delta_round_tol: float | None = 1e-13  # None skips operator rounding
    seed: int = 0
    ritz_rule: str = "positive-real-part"
    no_progress_window: int = 5
    sv_floor: float = 1e-14
    projected_dim_cap: int = 10_000
    trqi_max_iter: int = 10
    trqi_tol: float = 1e-10
    explicit_operand: str = "delta0"  # which projection is formed explicitly

    def __post_init__(self):
        if self.block_size < 1:
            raise ValueError("block size must be positive")
        if self.resolved_max_rank < self.block_size:
            raise ValueError("max rank must be at least the block size")
        if not 0 < self.cos_threshold <= 1:
            raise ValueError("cosine threshold must lie in (0, 1]")
        if self.explicit_operand not in ("delta0", "deltam"):
            raise ValueError("explicit operand must be 'delta0' or 'deltam'")
        for name in ("eps", "eps1", "xi"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    @property
    def resolved_max_rank(self) -> int:
        return self.block_size + 1 if self.max_rank is None else self.max_rank

    @property
    def resolved_keep(self) -> int:
        return 4 * self.block_size if self.keep_found is None else self.keep_found


@dataclass
class StepRecord:
    sweep: int
    mode: int  # 1-based
    direction: int
    projected_size: int
    n_candidates: int
    n_selected: int
    n_converged_new: int
    wall_ms: float
    phase_ms: dict[str, float] = field(default_factory=dict)
    ranks: tuple[int, ...] = ()


@dataclass
class SweepState:
    x: BlockTT
    env_m: FrameEnvCache
    env_0: FrameEnvCache
    rng: np.random.Generator
    found: list[EigenTuple] = field(default_factory=list)
    estimates: dict[int, list[np.ndarray]] = field(default_factory=dict)
    sweep: int = 0
    direction: int = +1
    new_found_this_sweep: int = 0


@dataclass
class _Candidate:
    mu: complex
    coeff: np.ndarray  # (r_left, n_k, r_right), unit norm
    middle: np.ndarray  # unit factor at the current mode
    est_residual: float
    transported_middle: np.ndarray | None
    converged: bool
    admitted: bool


@dataclass
class _WalkResult:
    first_hop: float
    transported_middle: np.ndarray | None
    converged: bool
    admitted: bool
    tuple: EigenTuple | None


# ---------------------------------------------------------------------------
# rank-one factorization of a coefficient tensor


def rank_one_factor(tensor: np.ndarray, refine_passes: int = 5):
    """Best-effort rank-one split T ~ a (x) mid (x) c of a 3-way tensor.

    Two nested rank-1 SVD truncations seed an alternating refinement (at
    most ``refine_passes`` rounds, monotone in Frobenius error). The middle
    factor is returned with unit norm; ``a`` carries the scale.
    """
    t = np.asarray(tensor)
    if t.ndim != 3:
        raise ValueError("expected a 3-way tensor")
    rl, n, rr = t.shape
    if np.linalg.norm(t) == 0:
        raise ValueError("zero tensor has no rank-one factor")
    u, s, vh = np.linalg.svd(t.reshape(rl, n * rr), full_matrices=False)
    a = u[:, 0]
    rest = (s[0] * vh[0]).reshape(n, rr)
    u2, s2, vh2 = np.linalg.svd(rest, full_matrices=False)
    mid = u2[:, 0]
    c = vh2[0]
    scale = s2[0]

    def err(scale_, a_, mid_, c_):
        approx = scale_ * np.einsum("a,i,b->aib", a_, mid_, c_)
        return np.linalg.norm(t - approx)

    best = (scale, a, mid, c)
    best_err = err(*[best[0], best[1], best[2], best[3]])
    for _ in range(refine_passes):
        a_new = np.einsum("aib,i,b->a", t, np.conj(mid), np.conj(c), optimize=True)
        na = np.linalg.norm(a_new)
        if na == 0:
            break
        a = a_new / na
        m_new = np.einsum("aib,a,b->i", t, np.conj(a), np.conj(c), optimize=True)
        nm = np.linalg.norm(m_new)
        if nm == 0:
            break
        mid = m_new / nm
        c_new = np.einsum("aib,a,i->b", t, np.conj(a), np.conj(mid), optimize=True)
        nc = np.linalg.norm(c_new)
        if nc == 0:
            break
        c = c_new / nc
        scale = complex(np.einsum("aib,a,i,b->", t, np.conj(a), np.conj(mid), np.conj(c), optimize=True))
        e = err(scale, a, mid, c)
        if e < best_err - 1e-15:
            best, best_err = (scale, a, mid, c), e
        else:
            break
    scale, a, mid, c = best
    return a * scale, mid, c


def _numerical_rank(s: np.ndarray, floor: float) -> int:
    if s.size == 0 or s[0] == 0:
        return 1
    return max(1, int(np.count_nonzero(s > floor * s[0])))


def _split_forward(v: np.ndarray, floor: float):
    a, n, c = v.shape
    u, s, vh = np.linalg.svd(v.reshape(a * n, c), full_matrices=False)
    rho = _numerical_rank(s, floor)
    carry = s[:rho, np.newaxis] * vh[:rho]
    return u[:, :rho].reshape(a, n, rho), carry


def _split_backward(v: np.ndarray, floor: float):
    a, n, c = v.shape
    u, s, vh = np.linalg.svd(v.reshape(a, n * c), full_matrices=False)
    rho = _numerical_rank(s, floor)
    carry = u[:, :rho] * s[np.newaxis, :rho]
    return vh[:rho].reshape(rho, n, c), carry


class _ChainWalker:
    """Single-pair frame transported mode to mode from a Ritz pair.

    Starting from the block mode, repeated SVD splits move the pair's
    coefficient tensor into the neighboring mode while the traversed cores
    join the frame, which stays orthonormal, so the projected residual at
    every visited mode underestimates the true full-space residual.
    """

    def __init__(self, cores, env_m: FrameEnvCache, env_0: FrameEnvCache, k: int, coeff, sv_floor: float):
        self.cores = cores
        self.env_m = env_m
        self.env_0 = env_0
        self.pos = k
        self.v = coeff
        self.sv_floor = sv_floor
        self.lm = env_m.left[k]
        self.l0 = env_0.left[k]
        self.rm = env_m.right[k]
        self.r0 = env_0.right[k]

    def hop(self, direction: int, mu: complex) -> float:
        """Move one mode over; returns the projected residual norm there."""
        nxt = self.pos + direction
        if not 0 <= nxt < len(self.cores):
            raise IndexError("walked past the boundary")
        op_m = self.env_m.op
        op_0 = self.env_0.op
        if direction == +1:
            chain_core, carry = _split_forward(self.v, self.sv_floor)
            self.lm = env_left_step(self.lm, chain_core, op_m.cores[self.pos], chain_core)
            self.l0 = env_left_step(self.l0, chain_core, op_0.cores[self.pos], chain_core)
            self.v = np.einsum("sc,cjt->sjt", carry, self.cores[nxt])
            self.rm = self.env_m.right[nxt]
            self.r0 = self.env_0.right[nxt]
        else:
            chain_core, carry = _split_backward(self.v, self.sv_floor)
            self.rm = env_right_step(self.rm, chain_core, op_m.cores[self.pos], chain_core)
            self.r0 = env_right_step(self.r0, chain_core, op_0.cores[self.pos], chain_core)
            self.v = np.einsum("xja,as->xjs", self.cores[nxt], carry)
            self.lm = self.env_m.left[nxt]
            self.l0 = self.env_0.left[nxt]
        nv = np.linalg.norm(self.v)
        if nv == 0:
            raise ValueError("transported coefficient vanished")
        self.v = self.v / nv
        self.pos = nxt
        zm = env_apply(self.lm, op_m.cores[nxt], self.rm, self.v)
        z0 = env_apply(self.l0, op_0.cores[nxt], self.r0, self.v)
        return float(np.linalg.norm(zm - mu * z0))


def estimate_residual(
    state: SweepState, mu: complex, coeff: np.ndarray, direction: int
) -> float:
    """Projected residual of a Ritz pair in its own one-step-ahead frame.

    The pair's coefficient vector is normalized, transported one mode in
    ``direction`` through an exact (numerical-rank) SVD split, and the
    residual of the pencil projected on that single-pair frame is returned.
    It never exceeds the pair's full-space residual norm.
    """
    k = state.x.block_index
    coeff = np.asarray(coeff)
    nv = np.linalg.norm(coeff)
    if nv == 0:
        raise ValueError("degenerate candidate vector")
    walker = _ChainWalker(
        state.x.cores, state.env_m, state.env_0, k, coeff / nv, 1e-14
    )
    return walker.hop(direction, mu)


def check_convergence(
    state: SweepState,
    mu: complex,
    coeff: np.ndarray,
    direction: int,
    delta_0: TTOperator,
    prob: MEProblem,
    config: SolverConfig,
) -> _WalkResult:
    """Walk single-pair frames over all modes and admit the tuple if sound.

    Hops proceed in ``direction`` until the boundary, then restart from the
    block mode in the reverse direction. Any projected residual at or above
    eps1 aborts the walk. With estimates for every mode collected, the
    tuple (one factor per mode) is refined by Rayleigh quotient iteration,
    tested against the full residual tolerance eps, screened for duplicates
    at xi, and inserted into the found list only while among the
    ``keep_found`` closest to the target.
    """
    cores = state.x.cores
    m = len(cores)
    k = state.x.block_index
    coeff = np.asarray(coeff)
    coeff = coeff / np.linalg.norm(coeff)
    estimates: dict[int, np.ndarray] = {k: rank_one_factor(coeff)[1]}
    first_hop = np.inf
    transported_middle = None
    aborted = False
    for phase_dir in (direction, -direction):
        walker = _ChainWalker(cores, state.env_m, state.env_0, k, coeff, config.sv_floor)
        while 0 <= walker.pos + phase_dir < m:
            res = walker.hop(phase_dir, mu)
            if transported_middle is None:
                first_hop = res
                transported_middle = rank_one_factor(walker.v)[1]
            if res >= config.eps1:
                aborted = True
                break
            estimates[walker.pos] = rank_one_factor(walker.v)[1]
        if aborted:
            break
    if aborted or len(estimates) < m:
        return _WalkResult(first_hop, transported_middle, False, False, None)
    vectors = [estimates[p] for p in range(m)]
    try:
        lam = tensor_rayleigh_quotient(prob, vectors)
    except SingularRayleighError:
        return _WalkResult(first_hop, transported_middle, False, False, None)
    cand = EigenTuple.build(prob, lam, vectors)
    cand = trqi_refine(prob, cand, config.trqi_max_iter, config.trqi_tol)
    if not np.isfinite(cand.residual_norm) or cand.residual_norm >= config.eps:
        return _WalkResult(first_hop, transported_middle, False, False, cand)
    accept, _ratio = duplicate_check(cand.vectors, state.found, delta_0, config.xi)
    if not accept:
        return _WalkResult(first_hop, transported_middle, True, False, cand)
    keep = config.resolved_keep
    key = abs(cand.lam[-1])
    if len(state.found) >= keep and key >= max(abs(t.lam[-1]) for t in state.found):
        return _WalkResult(first_hop, transported_middle, True, False, cand)
    cand.left_vectors = left_eigenvector_tuple(
        prob, cand, max_iter=config.trqi_max_iter, tol=config.trqi_tol
    )
    state.found.append(cand)
    state.found.sort(key=lambda t: (abs(t.lam[-1]), t.lam[-1].real, t.lam[-1].imag))
    del state.found[keep:]
    state.new_found_this_sweep += 1
    return _WalkResult(first_hop, transported_middle, True, True, cand)


# ---------------------------------------------------------------------------
# selection


def _is_effectively_real(vec: np.ndarray) -> bool:
    if not np.iscomplexobj(vec):
        return True
    scale = np.max(np.abs(vec))
    return scale == 0 or np.max(np.abs(vec.imag)) <= 1e-13 * scale


def select_eigenpairs(
    candidates: list[_Candidate],
    previous_estimates: list[np.ndarray],
    b: int,
    cos_threshold: float,
    rng: np.random.Generator,
    dim: int,
):
    """Pick block columns from the processed Ritz candidates.

    Converged candidates are never re-selected. Candidates whose current
    rank-one middle factor matches a previous-step estimate (cosine above
    the threshold) come first, ordered by estimated residual; the remainder
    fill up by estimated residual, and random columns complete the block. A
    complex pair occupies two columns (real and imaginary part); its
    conjugate twin is consumed with it.
    """
    usable = [c for c in candidates if not c.converged]
    matched_flags = {
        id(c): any(
            principal_cosine(c.middle, e) > cos_threshold for e in previous_estimates
        )
        for c in usable
    }
    matched = sorted(
        (c for c in usable if matched_flags[id(c)]), key=lambda c: c.est_residual
    )
    unmatched = sorted(
        (c for c in usable if not matched_flags[id(c)]), key=lambda c: c.est_residual
    )
    priority = matched + unmatched

    columns: list[np.ndarray] = []
    selected: list[_Candidate] = []
    consumed: set[int] = set()
    for c in priority:
        if len(columns) >= b or id(c) in consumed:
            continue
        vec = c.coeff.reshape(-1)
        if _is_effectively_real(vec):
            columns.append(np.real(vec).copy())
            selected.append(c)
        else:
            if len(columns) + 2 > b:
                continue
            columns.append(np.real(vec).copy())
            columns.append(np.imag(vec).copy())
            selected.append(c)
            for other in priority:
                if other is not c and abs(other.mu - np.conj(c.mu)) <= 1e-12 * (
                    1 + abs(c.mu)
                ):
                    consumed.add(id(other))
        consumed.add(id(c))
    while len(columns) < b:
        vec = rng.standard_normal(dim)
        columns.append(vec / np.linalg.norm(vec))
    return np.stack(columns[:b], axis=1), selected


# ---------------------------------------------------------------------------
# sweep driver


def init_iterate(sizes, config: SolverConfig, rng: np.random.Generator) -> BlockTT:
    """Random block train with orthonormal frame at mode 0."""
    sizes = tuple(int(n) for n in sizes)
    m = len(sizes)
    b = config.block_size
    r = config.resolved_max_rank
    ranks = [1] * (m + 1)
    for k in range(1, m):
        prefix = b * int(np.prod(sizes[:k], dtype=np.int64))
        suffix = int(np.prod(sizes[k:], dtype=np.int64))
        ranks[k] = max(1, min(r, prefix, suffix))
    cores: list[np.ndarray] = [rng.standard_normal((1, sizes[0], b, ranks[1]))]
    for k in range(1, m):
        gauss = rng.standard_normal((sizes[k] * ranks[k + 1], ranks[k]))
        q, _ = np.linalg.qr(gauss)
        cores.append(q.T.reshape(ranks[k], sizes[k], ranks[k + 1]))
    return BlockTT(cores, 0)


def make_state(
    prob: MEProblem,
    delta_m: TTOperator,
    delta_0: TTOperator,
    config: SolverConfig,
) -> SweepState:
    rng = np.random.default_rng(config.seed)
    x = init_iterate(prob.sizes, config, rng)
    env_m = FrameEnvCache(delta_m, x.cores, x.block_index)
    env_0 = FrameEnvCache(delta_0, x.cores, x.block_index)
    return SweepState(x=x, env_m=env_m, env_0=env_0, rng=rng)


def sweep_step(
    state: SweepState,
    delta_m: TTOperator,
    delta_0: TTOperator,
    prob: MEProblem,
    config: SolverConfig,
    direction: int,
) -> StepRecord:
    """One mode update: project, solve, select, write block, shift."""
    x = state.x
    k = x.block_index
    b = config.block_size
    frame = FrameContext.from_block(x)
    dim = frame.local_dim
    t_start = time.perf_counter()

    envs_m = (state.env_m.left[k], state.env_m.right[k])
    envs_0 = (state.env_0.left[k], state.env_0.right[k])
    t0 = time.perf_counter()
    if config.explicit_operand == "delta0":
        p_explicit = frame_project(
            frame, delta_0, envs=envs_0, dim_cap=config.projected_dim_cap
        )
    else:
        p_explicit = frame_project(
            frame, delta_m, envs=envs_m, dim_cap=config.projected_dim_cap
        )
    t_proj = time.perf_counter() - t0

    t0 = time.perf_counter()
    eye = np.eye(dim)
    if config.explicit_operand == "delta0":
        p0 = p_explicit
        pm = frame_apply(frame, delta_m, eye, envs=envs_m)
    else:
        pm = p_explicit
        p0 = frame_apply(frame, delta_0, eye, envs=envs_0)
    q = len(state.found)
    geig = generalized_eig(pm, p0)
    indices, _ = select_ritz(geig, 2 * b + q, config.ritz_rule)
    t_eig = time.perf_counter() - t0

    t0 = time.perf_counter()
    rl = x.cores[k].shape[0]
    n_k = x.cores[k].shape[1]
    rr = x.cores[k].shape[3]
    new_before = state.new_found_this_sweep
    candidates = []
    for i in indices:
        mu = geig.eigenvalues[i]
        vec = geig.right[:, i]
        vec = vec / np.linalg.norm(vec)
        coeff = vec.reshape(rl, n_k, rr)
        walk = check_convergence(state, mu, coeff, direction, delta_0, prob, config)
        candidates.append(
            _Candidate(
                mu=mu,
                coeff=coeff,
                middle=rank_one_factor(coeff)[1],
                est_residual=walk.first_hop,
                transported_middle=walk.transported_middle,
                converged=walk.converged,
                admitted=walk.admitted,
            )
        )
    previous = state.estimates.get(k, [])
    columns, selected = select_eigenpairs(
        candidates, previous, b, config.cos_threshold, state.rng, dim
    )
    t_sel = time.perf_counter() - t0

    t0 = time.perf_counter()
    x.cores[k] = np.ascontiguousarray(
        columns.reshape(rl, n_k, rr, b).transpose(0, 1, 3, 2)
    )
    shift_block_core(
        x,
        direction,
        config.resolved_max_rank,
        enrichment=config.kick,
        rng=state.rng,
        sv_floor=config.sv_floor,
    )
    state.env_m.refresh_after_shift(x.cores, k, x.block_index)
    state.env_0.refresh_after_shift(x.cores, k, x.block_index)
    state.estimates[k + direction] = [
        c.transported_middle for c in selected if c.transported_middle is not None
    ]
    t_upd = time.perf_counter() - t0

    return StepRecord(
        sweep=state.sweep,
        mode=k + 1,
        direction=direction,
        projected_size=dim,
        n_candidates=len(indices),
        n_selected=len(selected),
        n_converged_new=state.new_found_this_sweep - new_before,
        wall_ms=1e3 * (time.perf_counter() - t_start),
        phase_ms={
            "projection": 1e3 * t_proj,
            "eigensolve": 1e3 * t_eig,
            "select_converge": 1e3 * t_sel,
            "mode_update": 1e3 * t_upd,
        },
        ranks=x.ranks,
    )


def solve(
    prob: MEProblem,
    target: float = 0.0,
    config: SolverConfig | None = None,
):
    """Find eigenvalue tuples with lambda_m closest to the target.

    The problem is shifted so the target sits at zero, swept until the
    sweep cap or until ``no_progress_window`` sweeps pass without a new
    tuple, and the found lambda_m values are shifted back. Returns
    (tuples sorted by |lambda_m - target|, report dict).
    """
    config = config or SolverConfig()
    work = apply_shift(prob, -target) if target != 0.0 else prob
    delta_m = build_delta_i(work, work.m, round_tol=config.delta_round_tol)
    delta_0 = build_delta0(work, round_tol=config.delta_round_tol)
    state = make_state(work, delta_m, delta_0, config)
    m = work.m
    records: list[StepRecord] = []
    last_progress_sweep = 0
    sweeps_run = 0
    for sweep in range(1, config.sweeps + 1):
        state.sweep = sweep
        state.new_found_this_sweep = 0
        for direction, modes in ((+1, range(m - 1)), (-1, range(m - 1, 0, -1))):
            state.direction = direction
            state.estimates.clear()  # estimates are one step ahead only
            for mode in modes:
                assert state.x.block_index == mode
                records.append(
                    sweep_step(state, delta_m, delta_0, work, config, direction)
                )
        sweeps_run = sweep
        if state.new_found_this_sweep > 0:
            last_progress_sweep = sweep
        if sweep - last_progress_sweep >= config.no_progress_window:
            break
    shift = np.zeros(m, dtype=complex)
    shift[m - 1] = target
    final = []
    for t in state.found:
        final.append(
            EigenTuple(
                lam=t.lam + shift,
                vectors=t.vectors,
                residual_norm=t.residual_norm,
                left_vectors=t.left_vectors,
                flags=t.flags,
            )
        )
    final.sort(key=lambda t: (abs(t.lam[-1] - target), t.lam[-1].real, t.lam[-1].imag))
    report = {
        "target": target,
        "config": _config_dict(config),
        "sweeps_run": sweeps_run,
        "delta_ranks": {"delta_m": list(delta_m.ranks), "delta_0": list(delta_0.ranks)},
        "steps": [
            {
                "sweep": r.sweep,
                "mode": r.mode,
                "direction": r.direction,
                "projected_size": r.projected_size,
                "n_candidates": r.n_candidates,
                "n_selected": r.n_selected,
                "n_converged_new": r.n_converged_new,
                "wall_ms": r.wall_ms,
                "phase_ms": r.phase_ms,
                "ranks": list(r.ranks),
            }
            for r in records
        ],
        "tuples": [
            {
                "lambda": [[float(v.real), float(v.imag)] for v in t.lam],
                "residual": t.residual_norm,
                "vectors_ref": i,
            }
            for i, t in enumerate(final)
        ],
    }
    return final, report


def _config_dict(config: SolverConfig) -> dict:
    doc = asdict(config)
    doc["max_rank"] = config.resolved_max_rank
    doc["keep_found"] = config.resolved_keep
    return doc

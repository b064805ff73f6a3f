"""Multiparameter eigenvalue problem container and exact-answer machinery.

An m-parameter problem couples m square pencils: equation i reads
A_i x_i = sum_j lambda_j B_ij x_i. This module holds the matrices, residual
checks, a seeded random generator whose eigenvalue tuples are known exactly
(each tuple solves a small m x m linear system built from the generator's
diagonal spectra), tensor Rayleigh quotient refinement, left-tuple
computation, and the duplicate test used to reject re-found eigenvalues.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .tt_core import CapExceededError, TTOperator, rank_one_bilinear

ORACLE_CAP = 10_000_000
GENERATOR_STYLES = ("cheb-powers",)


class SingularRayleighError(RuntimeError):
    """The m x m Rayleigh system is numerically singular."""


@dataclass
class MEProblem:
    """Matrices of an m-parameter problem: a[i] = A_i, b[i][j] = B_ij."""

    a: list[np.ndarray]
    b: list[list[np.ndarray]]

    def __post_init__(self):
        m = len(self.a)
        if len(self.b) != m or any(len(row) != m for row in self.b):
            raise ValueError("B must be an m x m grid of matrices")
        for i in range(m):
            n = self.a[i].shape[0]
            if self.a[i].shape != (n, n):
                raise ValueError(f"A_{i + 1} is not square")
            for j in range(m):
                if self.b[i][j].shape != (n, n):
                    raise ValueError(f"B_{i + 1}{j + 1} does not match A_{i + 1}")

    @property
    def m(self) -> int:
        return len(self.a)

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(mat.shape[0] for mat in self.a)


@dataclass
class EigenTuple:
    """Eigenvalue tuple with unit-norm eigenvector tuple and residual."""

    lam: np.ndarray  # complex, shape (m,)
    vectors: list[np.ndarray]  # x_i, unit norm
    residual_norm: float
    left_vectors: list[np.ndarray] | None = None
    flags: tuple[str, ...] = ()

    @classmethod
    def build(cls, prob: MEProblem, lam, vectors, left_vectors=None, flags=()):
        lam = np.asarray(lam, dtype=complex).reshape(-1)
        vecs = []
        for v in vectors:
            v = np.asarray(v, dtype=complex).reshape(-1)
            nv = np.linalg.norm(v)
            if nv == 0:
                raise ValueError("zero eigenvector component")
            vecs.append(v / nv)
        _, norm = residual_tuple(prob, lam, vecs)
        return cls(lam, vecs, norm, left_vectors, tuple(flags))


@dataclass
class GeneratedProblem:
    """Problem with known diagonalization A_i = U_i diag(a_i) Z_i."""

    problem: MEProblem
    u_factors: list[np.ndarray]
    z_factors: list[np.ndarray]
    spectrum_a: list[np.ndarray]
    spectrum_b: list[list[np.ndarray]]
    seed: int
    style: str = "cheb-powers"

    @property
    def m(self) -> int:
        return self.problem.m

    @property
    def n(self) -> int:
        return self.problem.sizes[0]

    def reconstruction_error(self) -> float:
        """Largest relative deviation of U diag(.) Z from the stored matrices."""
        worst = 0.0
        for i in range(self.m):
            ref = self.u_factors[i] @ np.diag(self.spectrum_a[i]) @ self.z_factors[i]
            scale = max(np.linalg.norm(ref), 1e-300)
            worst = max(worst, np.linalg.norm(ref - self.problem.a[i]) / scale)
            for j in range(self.m):
                ref = (
                    self.u_factors[i]
                    @ np.diag(self.spectrum_b[i][j])
                    @ self.z_factors[i]
                )
                scale = max(np.linalg.norm(ref), 1e-300)
                worst = max(
                    worst, np.linalg.norm(ref - self.problem.b[i][j]) / scale
                )
        return worst


def residual_tuple(prob: MEProblem, lam, vectors):
    """Stacked residual (A_i - sum_j lam_j B_ij) x_i and its max norm."""
    lam = np.asarray(lam, dtype=complex).reshape(-1)
    if lam.size != prob.m or len(vectors) != prob.m:
        raise ValueError("tuple size does not match the problem")
    parts = []
    for i in range(prob.m):
        x = np.asarray(vectors[i]).reshape(-1)
        if x.size != prob.sizes[i]:
            raise ValueError(f"vector {i + 1} has wrong length")
        mat = prob.a[i].astype(complex).copy()
        for j in range(prob.m):
            mat -= lam[j] * prob.b[i][j]
        parts.append(mat @ x)
    stacked = np.concatenate(parts)
    return stacked, float(np.max(np.abs(stacked))) if stacked.size else 0.0


def chebyshev_lobatto(n: int) -> np.ndarray:
    """n Chebyshev-Gauss-Lobatto points cos(pi*k/(n-1)), from 1 down to -1."""
    if n < 2:
        raise ValueError("need at least two points")
    return np.cos(np.pi * np.arange(n) / (n - 1))


def generate_random_mep(
    m: int, n: int, seed: int, style: str = "cheb-powers"
) -> GeneratedProblem:
    """Seeded random problem with exactly solvable spectrum.

    Per equation i the factors are U_i, Z_i = I + 0.3*uniform(n, n). The A
    spectra are -5*normal(n). The B spectra are elementwise powers of a base
    vector: Chebyshev-Lobatto points mapped affinely onto the i-th of m
    adjacent subintervals of linspace(-1.9, 2, 2m+1), with power j-1 for
    B_ij (so B_i1 always has an all-ones spectrum). Deterministic in seed.
    """
    if m < 2 or n < 2:
        raise ValueError("need m >= 2 and n >= 2")
    if style not in GENERATOR_STYLES:
        raise ValueError(f"unknown generator style {style!r}")
    rng = np.random.default_rng(seed)
    u_factors = []
    z_factors = []
    for _ in range(m):
        u_factors.append(np.eye(n) + 0.3 * rng.random((n, n)))
        z_factors.append(np.eye(n) + 0.3 * rng.random((n, n)))
    a_spec = -5.0 * rng.standard_normal((n, m))
    nodes = chebyshev_lobatto(n)
    limits = np.linspace(-1.9, 2.0, 2 * m + 1)[: 2 * m]
    spectrum_a = [a_spec[:, i].copy() for i in range(m)]
    spectrum_b = []
    a_mats = []
    b_mats = []
    for i in range(m):
        lo, hi = limits[2 * i], limits[2 * i + 1]
        base = nodes / 2.0 * (hi - lo) + (lo + hi) / 2.0
        row_spec = [base ** j for j in range(m)]
        spectrum_b.append(row_spec)
        a_mats.append(u_factors[i] @ np.diag(spectrum_a[i]) @ z_factors[i])
        b_mats.append(
            [u_factors[i] @ np.diag(s) @ z_factors[i] for s in row_spec]
        )
    prob = MEProblem(a=a_mats, b=b_mats)
    return GeneratedProblem(
        problem=prob,
        u_factors=u_factors,
        z_factors=z_factors,
        spectrum_a=spectrum_a,
        spectrum_b=spectrum_b,
        seed=seed,
        style=style,
    )


def oracle_eigenvalues(
    g: GeneratedProblem,
    how_many: int,
    target: complex = 0.0,
    cap: int = ORACLE_CAP,
    chunk: int = 200_000,
):
    """Exact tuples closest to the target in lambda_m, by full enumeration.

    Every multi-index (i_1, ..., i_m) yields one m x m linear system whose
    row i is [b_i1(i_i), ..., b_im(i_i)] with right-hand side a_i(i_i); the
    solution is the eigenvalue tuple, and the eigenvectors are the matching
    columns of Z_i^{-1}. Returns (tuples, skipped_singular_count).
    """
    m, n = g.m, g.n
    total = n**m
    if total > cap:
        raise CapExceededError(f"{total} systems exceed the cap of {cap}")
    if how_many <= 0:
        return [], 0
    a_spec = np.stack(g.spectrum_a)  # (m, n)
    b_spec = np.stack([np.stack(row) for row in g.spectrum_b])  # (m, m, n)
    rows = np.arange(m)
    skipped = 0
    kept: list[tuple[float, int, np.ndarray]] = []
    for start in range(0, total, chunk):
        stop = min(start + chunk, total)
        flat = np.arange(start, stop)
        idx = np.stack(np.unravel_index(flat, (n,) * m), axis=1)  # (T, m)
        mats = b_spec[rows[np.newaxis, :, np.newaxis], rows[np.newaxis, np.newaxis, :], idx[:, :, np.newaxis]]
        rhs = a_spec[rows[np.newaxis, :], idx]
        try:
            lam = np.linalg.solve(mats, rhs[..., np.newaxis])[..., 0]
            ok = np.all(np.isfinite(lam), axis=1)
        except np.linalg.LinAlgError:
            lam = np.full(rhs.shape, np.nan)
            ok = np.zeros(stop - start, dtype=bool)
            for t in range(stop - start):
                try:
                    lam[t] = np.linalg.solve(mats[t], rhs[t])
                    ok[t] = bool(np.all(np.isfinite(lam[t])))
                except np.linalg.LinAlgError:
                    pass
        skipped += int(np.count_nonzero(~ok))
        keys = np.abs(lam[:, m - 1] - target)
        good = np.nonzero(ok)[0]
        if good.size > how_many:
            part = good[np.argpartition(keys[good], how_many - 1)[:how_many]]
        else:
            part = good
        kept.extend((float(keys[t]), int(flat[t]), lam[t].copy()) for t in part)
    kept.sort(key=lambda item: (item[0], item[1]))
    kept = kept[:how_many]
    z_inv = [np.linalg.inv(z) for z in g.z_factors]
    tuples = []
    for _, flat_index, lam_row in kept:
        multi = np.unravel_index(flat_index, (n,) * m)
        vectors = [z_inv[i][:, multi[i]] for i in range(m)]
        tuples.append(EigenTuple.build(g.problem, lam_row, vectors))
    return tuples, skipped


def tensor_rayleigh_quotient(prob: MEProblem, vectors) -> np.ndarray:
    """Solve the m x m system x_i^H B_ij x_i * lam = x_i^H A_i x_i."""
    m = prob.m
    mat = np.empty((m, m), dtype=complex)
    rhs = np.empty(m, dtype=complex)
    for i in range(m):
        x = np.asarray(vectors[i]).reshape(-1)
        if np.linalg.norm(x) == 0:
            raise ValueError("zero vector in Rayleigh quotient")
        xh = np.conj(x)
        for j in range(m):
            mat[i, j] = xh @ (prob.b[i][j] @ x)
        rhs[i] = xh @ (prob.a[i] @ x)
    try:
        lam = np.linalg.solve(mat, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularRayleighError(
            f"Rayleigh system singular (cond ~ {np.linalg.cond(mat):.2e})"
        ) from exc
    if not np.all(np.isfinite(lam)):
        raise SingularRayleighError(
            f"Rayleigh system produced non-finite values (cond ~ {np.linalg.cond(mat):.2e})"
        )
    return lam


def trqi_refine(
    prob: MEProblem, t: EigenTuple, max_iter: int = 10, tol: float = 1e-10
) -> EigenTuple:
    """Tensor Rayleigh quotient iteration with inverse-iteration updates.

    Alternates (i) the Rayleigh solve for the full tuple and (ii) per
    equation a Newton-style update x_i <- normalize(solve(A_i - sum_j lam_j
    B_ij, B_im x_i)), falling back to a 1e-12-scaled diagonal shift when the
    solve is exactly singular. The returned tuple never has a larger
    residual than the input; on solve failure the input is returned flagged.
    """
    best = t
    vectors = [v.copy() for v in t.vectors]
    m = prob.m
    for _ in range(max_iter):
        if best.residual_norm < tol:
            break
        try:
            lam = tensor_rayleigh_quotient(prob, vectors)
        except SingularRayleighError:
            return EigenTuple(
                best.lam, best.vectors, best.residual_norm, best.left_vectors,
                best.flags + ("refine-solve-failed",),
            )
        new_vectors = []
        failed = False
        for i in range(m):
            mat = prob.a[i].astype(complex).copy()
            for j in range(m):
                mat -= lam[j] * prob.b[i][j]
            rhs = prob.b[i][m - 1] @ vectors[i]
            try:
                upd = np.linalg.solve(mat, rhs)
            except np.linalg.LinAlgError:
                delta = 1e-12 * np.linalg.norm(prob.a[i])
                try:
                    upd = np.linalg.solve(mat + delta * np.eye(mat.shape[0]), rhs)
                except np.linalg.LinAlgError:
                    failed = True
                    break
            nv = np.linalg.norm(upd)
            if nv == 0 or not np.all(np.isfinite(upd)):
                failed = True
                break
            new_vectors.append(upd / nv)
        if failed:
            return EigenTuple(
                best.lam, best.vectors, best.residual_norm, best.left_vectors,
                best.flags + ("refine-solve-failed",),
            )
        vectors = new_vectors
        cand = EigenTuple.build(prob, lam, vectors, flags=best.flags)
        if cand.residual_norm < best.residual_norm:
            best = cand
    return best


def left_eigenvector_tuple(prob: MEProblem, t: EigenTuple, **refine_kw):
    """Left tuple y_i, computed as a right tuple of the transposed problem.

    The transposed problem is seeded with the conjugated tuple, so that for
    real matrices the result satisfies y^H Delta_j x = lam_j y^H Delta_0 x
    for the original tuple, which is the orientation the duplicate test
    needs.
    """
    tprob = MEProblem(
        a=[mat.T.copy() for mat in prob.a],
        b=[[mat.T.copy() for mat in row] for row in prob.b],
    )
    seed = EigenTuple.build(
        tprob, np.conj(t.lam), [np.conj(v) for v in t.vectors]
    )
    refined = trqi_refine(tprob, seed, **refine_kw)
    return [v.copy() for v in refined.vectors]


def duplicate_check(
    candidate_vectors,
    found: list[EigenTuple],
    delta0: TTOperator,
    xi: float = 1e-4,
):
    """Accept a candidate tuple iff it is far from every found eigenvector.

    Ratio |y_p^H D0 x_hat| / |y_p^H D0 x_p| is evaluated purely from the
    rank-one tuples and the train form of D0. Returns (accept, worst_ratio);
    vanishing denominators reject with an infinite ratio.
    """
    cand = [np.asarray(v).reshape(-1) for v in candidate_vectors]
    cand = [v / np.linalg.norm(v) for v in cand]
    worst = 0.0
    for prev in found:
        if prev.left_vectors is None:
            raise ValueError("found tuple lacks left vectors")
        y = [v / np.linalg.norm(v) for v in prev.left_vectors]
        x_prev = [v / np.linalg.norm(v) for v in prev.vectors]
        num = abs(rank_one_bilinear(y, delta0, cand))
        den = abs(rank_one_bilinear(y, delta0, x_prev))
        if den < 1e-14 * max(1.0, num):
            return False, float("inf")
        worst = max(worst, num / den)
    return worst < xi, worst


# ---------------------------------------------------------------------------
# problem files
#
# JSON: {"m", "sizes", "A": [matrix as list of rows ...],
#        "B": [[matrix ...] ...], "generator": {"seed", "style", "a", "b"}}
# The generator block is optional; when present, the problem is regenerated
# from the seed on load and checked against the stored matrices so exact
# oracle enumeration stays available.


def problem_to_json(prob: MEProblem | GeneratedProblem) -> dict:
    g = prob if isinstance(prob, GeneratedProblem) else None
    p = g.problem if g is not None else prob
    doc = {
        "m": p.m,
        "sizes": list(p.sizes),
        "A": [mat.tolist() for mat in p.a],
        "B": [[mat.tolist() for mat in row] for row in p.b],
    }
    if g is not None:
        doc["generator"] = {
            "seed": g.seed,
            "style": g.style,
            "a": [s.tolist() for s in g.spectrum_a],
            "b": [[s.tolist() for s in row] for row in g.spectrum_b],
        }
    return doc


def problem_from_json(doc: dict) -> MEProblem | GeneratedProblem:
    m = int(doc["m"])
    sizes = [int(s) for s in doc["sizes"]]
    a = [np.asarray(mat, dtype=float) for mat in doc["A"]]
    b = [[np.asarray(mat, dtype=float) for mat in row] for row in doc["B"]]
    prob = MEProblem(a=a, b=b)
    if prob.m != m or list(prob.sizes) != sizes:
        raise ValueError("header does not match the stored matrices")
    gen = doc.get("generator")
    if gen is None:
        return prob
    # the seed pins the factors; the stored spectra are authoritative (they
    # may have been shifted since generation)
    regen = generate_random_mep(m, sizes[0], int(gen["seed"]), gen.get("style", "cheb-powers"))
    g = GeneratedProblem(
        problem=prob,
        u_factors=regen.u_factors,
        z_factors=regen.z_factors,
        spectrum_a=[np.asarray(s, dtype=float) for s in gen["a"]],
        spectrum_b=[[np.asarray(s, dtype=float) for s in row] for row in gen["b"]],
        seed=int(gen["seed"]),
        style=gen.get("style", "cheb-powers"),
    )
    if g.reconstruction_error() > 1e-11:
        raise ValueError("generator metadata does not reproduce the stored matrices")
    return g


def save_problem(path, prob: MEProblem | GeneratedProblem) -> None:
    Path(path).write_text(json.dumps(problem_to_json(prob)) + "\n")


def load_problem(path) -> MEProblem | GeneratedProblem:
    return problem_from_json(json.loads(Path(path).read_text()))

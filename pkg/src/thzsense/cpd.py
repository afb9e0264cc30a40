"""Canonical polyadic decomposition of complex 3-way tensors by ALS.

Unfoldings follow the convention ``X_(1) = A (C kr B)^T``,
``X_(2) = B (C kr A)^T``, ``X_(3) = C (B kr A)^T`` where ``kr`` is the
Khatri-Rao product with ``(C kr B)[k*T + t, p] = C[k, p] B[t, p]``.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

log = logging.getLogger(__name__)

_UNFOLD_AXES = {1: (0, 2, 1), 2: (1, 2, 0), 3: (2, 1, 0)}


def mode_unfold(tensor: np.ndarray, mode: int) -> np.ndarray:
    """Mode-``mode`` (1, 2 or 3) matricization of a 3-way tensor."""
    if mode not in _UNFOLD_AXES:
        raise ValueError("mode must be 1, 2 or 3")
    X = np.asarray(tensor)
    axes = _UNFOLD_AXES[mode]
    return X.transpose(axes).reshape(X.shape[mode - 1], -1)


def mode_refold(matrix: np.ndarray, mode: int, shape: tuple[int, int, int]) -> np.ndarray:
    """Inverse of :func:`mode_unfold` for a tensor of the given ``shape``."""
    if mode not in _UNFOLD_AXES:
        raise ValueError("mode must be 1, 2 or 3")
    axes = _UNFOLD_AXES[mode]
    permuted = tuple(shape[a] for a in axes)
    return np.asarray(matrix).reshape(permuted).transpose(np.argsort(axes))


def khatri_rao(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Column-wise Kronecker product; row ``i*J + j`` holds ``A[i, p] * B[j, p]``."""
    A = np.asarray(A)
    B = np.asarray(B)
    if A.ndim != 2 or B.ndim != 2 or A.shape[1] != B.shape[1]:
        raise ValueError(f"khatri_rao needs matrices with equal column counts, got {A.shape} and {B.shape}")
    return np.einsum("ip,jp->ijp", A, B).reshape(A.shape[0] * B.shape[0], A.shape[1])


def reconstruct(A: np.ndarray, B: np.ndarray, C: np.ndarray) -> np.ndarray:
    return np.einsum("jp,tp,kp->jtk", A, B, C)


def relative_error(tensor: np.ndarray, A, B, C) -> float:
    norm = np.linalg.norm(tensor)
    if norm == 0:
        return 0.0 if np.linalg.norm(reconstruct(A, B, C)) == 0 else 1.0
    return float(np.linalg.norm(tensor - reconstruct(A, B, C)) / norm)


@dataclass
class FactorTriple:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    fit: float = 0.0
    iterations: int = 0
    loaded_solves: int = 0
    history: list = field(default_factory=list)

    @property
    def rank(self) -> int:
        return self.A.shape[1]

    def full(self) -> np.ndarray:
        return reconstruct(self.A, self.B, self.C)

    def permuted(self, order, scales=None) -> "FactorTriple":
        """Reorder columns and optionally rescale each mode (``scales`` is 3 x P)."""
        A, B, C = self.A[:, order], self.B[:, order], self.C[:, order]
        if scales is not None:
            s = np.asarray(scales)
            A, B, C = A * s[0], B * s[1], C * s[2]
        return FactorTriple(A, B, C, self.fit, self.iterations, self.loaded_solves, list(self.history))

    def to_dict(self) -> dict:
        def enc(M):
            return {"re": np.real(M).tolist(), "im": np.imag(M).tolist()}

        return {
            "A": enc(self.A),
            "B": enc(self.B),
            "C": enc(self.C),
            "fit": self.fit,
            "iterations": self.iterations,
            "loaded_solves": self.loaded_solves,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "FactorTriple":
        def dec(x):
            return np.array(x["re"], dtype=float) + 1j * np.array(x["im"], dtype=float)

        return cls(dec(d["A"]), dec(d["B"]), dec(d["C"]), d.get("fit", 0.0), d.get("iterations", 0), d.get("loaded_solves", 0))


def _solve_factor(unfolded: np.ndarray, Z: np.ndarray, gram: np.ndarray) -> tuple[np.ndarray, bool]:
    """Least squares for F in ``unfolded ~ F Z^T`` via the Hermitian normal equations.

    ``gram`` is ``Z^H Z`` (Hermitian), so ``F^T = gram^{-1} (unfolded conj(Z))^T``.
    Falls back to diagonal loading when the Gram matrix is numerically singular.
    """
    rhs = (unfolded @ Z.conj()).T
    loaded = False
    try:
        if np.linalg.cond(gram) > 1e12:
            raise np.linalg.LinAlgError("ill-conditioned gram")
        F_T = scipy.linalg.cho_solve(scipy.linalg.cho_factor(gram), rhs)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
        lam = 1e-10 * float(np.real(np.trace(gram))) or 1e-300
        F_T = np.linalg.solve(gram + lam * np.eye(gram.shape[0]), rhs)
        loaded = True
    return F_T.T, loaded


def _balance(A, B, C):
    na, nb, nc = (np.linalg.norm(M, axis=0) for M in (A, B, C))
    ok = (na > 0) & (nb > 0) & (nc > 0)
    g = np.where(ok, np.cbrt(na * nb * nc), 1.0)
    sa = np.where(ok, g / np.where(ok, na, 1), 1.0)
    sb = np.where(ok, g / np.where(ok, nb, 1), 1.0)
    sc = np.where(ok, g / np.where(ok, nc, 1), 1.0)
    return A * sa, B * sb, C * sc


def _leading_vectors(unfolded: np.ndarray, rank: int, rng) -> np.ndarray:
    # leading left singular vectors through the smaller Gram matrix
    rows, cols = unfolded.shape
    if rows <= cols:
        w, V = np.linalg.eigh(unfolded @ unfolded.conj().T)
        U = V[:, ::-1][:, :rank]
    else:
        w, V = np.linalg.eigh(unfolded.conj().T @ unfolded)
        U = unfolded @ V[:, ::-1][:, :rank]
        U = U / np.maximum(np.linalg.norm(U, axis=0), 1e-300)
    if U.shape[1] < rank:
        extra = rng.standard_normal((U.shape[0], rank - U.shape[1])) + 0j
        U = np.column_stack([U, extra])
    return U.astype(complex)


def _als_run(X, P, B, C, tol, max_iter, track_half_steps):
    X1, X2, X3 = (mode_unfold(X, m) for m in (1, 2, 3))
    history = []
    loaded = 0
    A = np.zeros((X.shape[0], P), dtype=complex)
    fit = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        A, l1 = _solve_factor(X1, khatri_rao(C, B), (C.conj().T @ C) * (B.conj().T @ B))
        if track_half_steps:
            history.append(("A", relative_error(X, A, B, C)))
        B, l2 = _solve_factor(X2, khatri_rao(C, A), (C.conj().T @ C) * (A.conj().T @ A))
        if track_half_steps:
            history.append(("B", relative_error(X, A, B, C)))
        C, l3 = _solve_factor(X3, khatri_rao(B, A), (B.conj().T @ B) * (A.conj().T @ A))
        loaded += l1 + l2 + l3
        A, B, C = _balance(A, B, C)
        new_fit = relative_error(X, A, B, C)
        history.append(("C", new_fit))
        converged = abs(fit - new_fit) < tol * min(fit, 1.0) or new_fit < 1e-14
        fit = new_fit
        if converged:
            break
    return A, B, C, float(fit), it, loaded, history


def cpd_als(tensor: np.ndarray, rank: int, init: str | FactorTriple = "random", tol: float = 1e-8,
            max_iter: int = 500, restarts: int = 3, seed=None, track_half_steps: bool = False) -> FactorTriple:
    """Rank-``rank`` CP model of ``tensor`` by alternating least squares.

    Each sweep solves for A, then B, then C with the other two fixed. The run
    stops once the relative reconstruction error changes by less than ``tol``
    times its previous value, or after ``max_iter`` sweeps.

    ``init`` is ``"random"``, ``"nvecs"`` (leading singular vectors of the
    mode-2 and mode-3 unfoldings, a single run) or a :class:`FactorTriple`.
    With random initialization the best of ``restarts`` runs (lowest final
    error) is returned; a run that already reproduces the tensor to 1e-12
    ends the restarts early.

    ``history`` holds ``(factor, relative_error)`` after each update when
    ``track_half_steps`` is set, else after each sweep.
    """
    X = np.asarray(tensor, dtype=complex)
    if X.ndim != 3 or min(X.shape) < 1:
        raise ValueError("cpd_als expects a non-empty 3-way tensor")
    if rank < 1:
        raise ValueError("rank must be >= 1")
    rng = np.random.default_rng(seed)
    best = None
    n_runs = 1 if isinstance(init, FactorTriple) or init == "nvecs" else max(1, restarts)
    for run in range(n_runs):
        if isinstance(init, FactorTriple):
            if init.rank != rank:
                raise ValueError("initial factors have the wrong rank")
            B0, C0 = init.B.astype(complex), init.C.astype(complex)
        elif init == "nvecs":
            B0 = _leading_vectors(mode_unfold(X, 2), rank, rng)
            C0 = _leading_vectors(mode_unfold(X, 3), rank, rng)
        elif init == "random":
            B0 = rng.standard_normal((X.shape[1], rank)) + 1j * rng.standard_normal((X.shape[1], rank))
            C0 = rng.standard_normal((X.shape[2], rank)) + 1j * rng.standard_normal((X.shape[2], rank))
        else:
            raise ValueError(f"unknown init {init!r}")
        A, B, C, fit, it, loaded, hist = _als_run(X, rank, B0, C0, tol, max_iter, track_half_steps)
        log.debug("ALS run %d: fit=%.3e after %d sweeps (%d loaded solves)", run, fit, it, loaded)
        if best is None or fit < best.fit:
            best = FactorTriple(A, B, C, fit, it, loaded, hist)
        if best.fit < 1e-12:
            break
    return best


def estimate_rank(tensor: np.ndarray, max_rank: int, threshold: float = 1e-2, **kw) -> int:
    """Smallest rank whose ALS relative error falls below ``threshold``."""
    for P in range(1, max_rank + 1):
        if cpd_als(tensor, P, **kw).fit < threshold:
            return P
    return max_rank


@dataclass
class AmbiguityNote:
    """Column correspondence between an estimate and the truth.

    ``permutation[p]`` is the estimated column matched to true column ``p``;
    ``scales[m, p]`` is the complex factor with ``est = true * scale`` in
    mode ``m``.
    """

    permutation: np.ndarray
    scales: np.ndarray
    congruence: np.ndarray
    ambiguous: bool = False

    @property
    def scale_product(self) -> np.ndarray:
        return np.prod(self.scales, axis=0)


def _unit(M):
    n = np.linalg.norm(M, axis=0)
    return M / np.where(n > 0, n, 1)


def congruence_matrix(estimate: FactorTriple, truth: FactorTriple) -> np.ndarray:
    """``[i, j]`` = product over modes of |cos| between true col i and estimated col j."""
    out = np.ones((truth.rank, estimate.rank))
    for E, T in ((estimate.A, truth.A), (estimate.B, truth.B), (estimate.C, truth.C)):
        out *= np.abs(_unit(T).conj().T @ _unit(E))
    return out


def match_columns(estimate: FactorTriple, truth: FactorTriple, tie_tol: float = 1e-6) -> AmbiguityNote:
    """Greedy assignment of estimated to true columns by congruence."""
    if estimate.rank != truth.rank:
        raise ValueError("estimate and truth must have the same rank")
    P = truth.rank
    cong = congruence_matrix(estimate, truth)
    perm = -np.ones(P, dtype=int)
    best = np.zeros(P)
    ambiguous = False
    work = cong.copy()
    for _ in range(P):
        flat = np.argsort(-work, axis=None, kind="stable")
        i, j = np.unravel_index(flat[0], work.shape)
        if len(flat) > 1 and np.isfinite(work.flat[flat[1]]) and work.flat[flat[0]] - work.flat[flat[1]] < tie_tol:
            i2, j2 = np.unravel_index(flat[1], work.shape)
            if i2 == i or j2 == j:
                ambiguous = True
        perm[i] = j
        best[i] = cong[i, j]
        work[i, :] = -np.inf
        work[:, j] = -np.inf
    scales = np.ones((3, P), dtype=complex)
    for m, (E, T) in enumerate(((estimate.A, truth.A), (estimate.B, truth.B), (estimate.C, truth.C))):
        for p in range(P):
            t = T[:, p]
            denom = np.vdot(t, t)
            scales[m, p] = np.vdot(t, E[:, perm[p]]) / denom if denom != 0 else 0
    if ambiguous:
        log.warning("column matching is ambiguous (congruence tie within %g)", tie_tol)
    return AmbiguityNote(perm, scales, best, ambiguous)


def kruskal_uniqueness_check(J: int, T: int, K: int, P: int) -> bool:
    """Generic Kruskal condition ``k_A + k_B + k_C >= 2P + 2``.

    Rank one is always essentially unique, so P = 1 passes for any dims.
    """
    if min(J, T, K, P) < 1:
        raise ValueError("dimensions and rank must be positive")
    if P == 1:
        return True
    return min(J, P) + min(T, P) + min(K, P) >= 2 * P + 2

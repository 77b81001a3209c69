"""State-space realizations, storage matrices and the symmetric form.

A realization ``(A, B, C, D)`` describes

.. math::

    \\dot x = A x + B u, \\qquad y = C x + D u,

with transfer matrix ``G(s) = C (sI - A)^{-1} B + D``.  For relaxation
systems there is a unique positive definite ``Q`` with ``QA = A^T Q`` and
``QB = C^T``; it is recovered here from the controllability and
observability Krylov blocks.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .config import DEFAULT_TOL
from .errors import NotMinimal, NotRelaxation, SingularShift, SingularTransform

__all__ = ["StateSpace", "StorageMatrix", "transfer_eval", "minimality",
           "compute_Q", "similarity", "symmetric_form", "load_model",
           "dump_model", "model_from_dict", "model_to_dict", "sym", "psd_sqrt"]


def _as_matrix(M, rows, cols, name):
    M = np.array(M, dtype=float)
    if M.size == 0:
        M = np.zeros((rows, cols))
    M = np.atleast_2d(M)
    if M.shape != (rows, cols):
        raise ValueError(f"{name} has shape {M.shape}, expected {(rows, cols)}")
    if not np.all(np.isfinite(M)):
        raise ValueError(f"{name} has non-finite entries")
    M.setflags(write=False)
    return M


@dataclass(frozen=True, eq=False)
class StateSpace:
    """Immutable continuous-time realization ``(A, B, C, D)``.

    Dimensions are inferred from ``B`` and ``C`` so that ``n = 0``
    (static gain) models are representable: pass ``A=[]`` together with
    ``B`` of shape ``(0, m)`` and ``C`` of shape ``(p, 0)``, or just ``D``.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    n: int = field(init=False)
    m: int = field(init=False)
    p: int = field(init=False)

    def __post_init__(self):
        D = np.atleast_2d(np.array(self.D, dtype=float))
        A = np.array(self.A, dtype=float)
        n = 0 if A.size == 0 else np.atleast_2d(A).shape[0]
        p, m = D.shape
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "A", _as_matrix(A, n, n, "A"))
        object.__setattr__(self, "B", _as_matrix(self.B, n, m, "B"))
        object.__setattr__(self, "C", _as_matrix(self.C, p, n, "C"))
        object.__setattr__(self, "D", _as_matrix(D, p, m, "D"))

    @classmethod
    def static(cls, D):
        D = np.atleast_2d(np.array(D, dtype=float))
        p, m = D.shape
        return cls(np.zeros((0, 0)), np.zeros((0, m)), np.zeros((p, 0)), D)

    def __repr__(self):
        return f"StateSpace(n={self.n}, m={self.m}, p={self.p})"

    def dcgain(self):
        return transfer_eval(self, 0.0).real


@dataclass(frozen=True, eq=False)
class StorageMatrix:
    """Energy metric ``V(x) = x^T Q x / 2``.

    ``asym_residual`` is the relative asymmetry ``||Q - Q^T|| / ||Q||`` of
    the raw matrix before it was symmetrized.
    """

    Q: np.ndarray
    asym_residual: float = 0.0

    def energy(self, x):
        x = np.asarray(x, dtype=float)
        return 0.5 * float(x @ self.Q @ x)

    def min_eig(self):
        if self.Q.size == 0:
            return np.inf
        return float(np.linalg.eigvalsh(self.Q)[0])


def sym(M):
    M = np.asarray(M)
    return 0.5 * (M + M.conj().T)


def psd_sqrt(M):
    """Symmetric square root of a symmetric positive semi-definite matrix."""
    w, V = np.linalg.eigh(sym(M))
    w = np.clip(w, 0.0, None)
    return (V * np.sqrt(w)) @ V.T


def transfer_eval(ss, s, tol=DEFAULT_TOL):
    """Evaluate ``G(s) = C (sI - A)^{-1} B + D`` at one complex point.

    The resolvent is applied through a linear solve; ``SingularShift`` is
    raised when ``sI - A`` has reciprocal condition number below
    ``tol.tau_singular``.
    """
    s = complex(s)
    if ss.n == 0:
        return ss.D.astype(complex)
    M = s * np.eye(ss.n) - ss.A
    if 1.0 / np.linalg.cond(M) < tol.tau_singular:
        raise SingularShift(f"s={s} is (numerically) an eigenvalue of A")
    X = np.linalg.solve(M, ss.B.astype(complex))
    return ss.C @ X + ss.D


def _krylov(A, B, n):
    # columns [B, A B, ..., A^{n-1} B] with A scaled to unit norm; the
    # per-block scaling leaves ranks and the Q solution unchanged
    rho = np.linalg.norm(A, 2)
    As = A / rho if rho > 0 else A
    blocks = [B]
    for _ in range(n - 1):
        blocks.append(As @ blocks[-1])
    return np.hstack(blocks), rho


def minimality(ss, tol=None):
    """Controllability/observability ranks from the Krylov block matrices.

    Parameters
    ----------
    ss : StateSpace
    tol : float, optional
        Rank threshold relative to the largest singular value.  Defaults to
        ``max(shape) * eps`` of the block matrix.

    Returns
    -------
    dict
        ``controllable``, ``observable``, ``ctrb_rank``, ``obsv_rank``.
    """
    n = ss.n
    if n == 0:
        return {"controllable": True, "observable": True,
                "ctrb_rank": 0, "obsv_rank": 0}
    ranks = []
    for A, B in ((ss.A, ss.B), (ss.A.T, ss.C.T)):
        K, _ = _krylov(A, B, n)
        sv = np.linalg.svd(K, compute_uv=False)
        cut = (tol if tol is not None else max(K.shape) * np.finfo(float).eps)
        ranks.append(int(np.sum(sv > cut * sv[0])) if sv.size and sv[0] > 0 else 0)
    return {"controllable": ranks[0] == n, "observable": ranks[1] == n,
            "ctrb_rank": ranks[0], "obsv_rank": ranks[1]}


_POLISH_MAX_N = 40


def _polish(Q, ss):
    """One least-squares correction of ``Q`` on ``QA = A^T Q``, ``QB = C^T``.

    Krylov blocks lose accuracy like a Vandermonde matrix as n grows; the
    direct equations do not.  Only applied when ``Q`` already nearly
    satisfies them, so the correction cannot move a genuine failure.
    """
    A, B, C = ss.A, ss.B, ss.C
    r1 = Q @ A - A.T @ Q
    r2 = Q @ B - C.T
    scale = np.linalg.norm(Q) * max(np.linalg.norm(A), np.linalg.norm(B))
    if scale == 0 or max(np.linalg.norm(r1), np.linalg.norm(r2)) > 1e-4 * scale:
        return Q
    n = ss.n
    I = np.eye(n)
    L = np.vstack([np.kron(A.T, I) - np.kron(I, A.T), np.kron(B.T, I)])
    rhs = -np.concatenate([r1.ravel(order="F"), r2.ravel(order="F")])
    dq = np.linalg.lstsq(L, rhs, rcond=None)[0]
    return Q + dq.reshape(n, n, order="F")


def compute_Q(ss, tol=DEFAULT_TOL):
    """Storage matrix of a minimal square realization.

    ``Q = [C^T, A^T C^T, ..., (A^T)^{n-1} C^T] [B, AB, ..., A^{n-1} B]^+``,
    with the pseudo-inverse taken through an SVD.  The result is
    symmetrized and the raw asymmetry is kept on the returned object.
    """
    if ss.m != ss.p:
        raise ValueError("storage matrices are defined for square systems only")
    n = ss.n
    if n == 0:
        return StorageMatrix(np.zeros((0, 0)))
    info = minimality(ss, tol.tau_rank)
    if not (info["controllable"] and info["observable"]):
        raise NotMinimal(f"ctrb_rank={info['ctrb_rank']}, obsv_rank={info['obsv_rank']}, n={n}")
    Kc, rho = _krylov(ss.A, ss.B, n)
    Ko, _ = _krylov(ss.A.T, ss.C.T, n)
    U, sv, Vt = np.linalg.svd(Kc, full_matrices=False)
    keep = sv > tol.rank_cutoff(Kc.shape) * sv[0]
    Kc_pinv = (Vt[keep].T / sv[keep]) @ U[:, keep].T
    Q = Ko @ Kc_pinv
    Q = Q + (Ko - Q @ Kc) @ Kc_pinv
    if n <= _POLISH_MAX_N:
        Q = _polish(Q, ss)
    nrm = np.linalg.norm(Q)
    asym = float(np.linalg.norm(Q - Q.T) / nrm) if nrm > 0 else 0.0
    return StorageMatrix(sym(Q), asym)


def similarity(ss, S, tol=DEFAULT_TOL):
    """Change of state coordinates ``x -> S x``."""
    S = np.atleast_2d(np.asarray(S, dtype=float))
    if S.shape != (ss.n, ss.n):
        raise ValueError(f"S has shape {S.shape}, expected {(ss.n, ss.n)}")
    if ss.n == 0:
        return ss
    if 1.0 / np.linalg.cond(S) < tol.tau_singular:
        raise SingularTransform("transform is numerically singular")
    Sinv = np.linalg.inv(S)
    return StateSpace(S @ ss.A @ Sinv, S @ ss.B, ss.C @ Sinv, ss.D)


def symmetric_form(ss, tol=DEFAULT_TOL):
    """Map a relaxation realization into the form ``(A_s, B_s, B_s^T, D)``.

    Uses ``S = sqrt(Q)`` (eigendecomposition square root), so that
    ``Q = S^T S``.

    Returns
    -------
    dict
        ``ss_sym`` (StateSpace with symmetric ``A``) and ``S``.
    """
    if ss.n == 0:
        return {"ss_sym": ss, "S": np.zeros((0, 0))}
    storage = compute_Q(ss, tol)
    w, V = np.linalg.eigh(storage.Q)
    if w[0] < tol.tau_psd:
        raise NotRelaxation(f"Q is not positive definite (min eig {w[0]:.3e})")
    S = (V * np.sqrt(w)) @ V.T
    out = similarity(ss, S, tol)
    A, B, C = out.A, out.B, out.C
    if np.linalg.norm(A - A.T) > tol.tau_sym * max(np.linalg.norm(A), 1e-300):
        raise NotRelaxation("transformed A is not symmetric")
    if np.linalg.norm(C - B.T) > tol.tau_sym * max(np.linalg.norm(B), 1e-300):
        raise NotRelaxation("transformed C differs from B^T")
    As = sym(A)
    if np.linalg.eigvalsh(As)[-1] > tol.tau_psd:
        raise NotRelaxation("transformed A is not negative semi-definite")
    return {"ss_sym": StateSpace(As, B, C, out.D), "S": S}


def model_to_dict(ss, Q=None):
    d = {k: getattr(ss, k).tolist() for k in "ABCD"}
    if Q is not None:
        d["Q"] = np.asarray(Q.Q if isinstance(Q, StorageMatrix) else Q).tolist()
    return d


def model_from_dict(d):
    """Build a StateSpace (and optional storage) from a model-file object."""
    missing = [k for k in "ABCD" if k not in d]
    if missing:
        raise ValueError(f"model is missing keys {missing}")
    B = np.array(d["B"], dtype=float)
    C = np.array(d["C"], dtype=float)
    D = np.array(d["D"], dtype=float)
    A = np.array(d["A"], dtype=float)
    n = 0 if A.size == 0 else np.atleast_2d(A).shape[0]
    D = np.atleast_2d(D)
    p, m = D.shape
    ss = StateSpace(A, B.reshape(n, m) if B.size == n * m else B,
                    C.reshape(p, n) if C.size == p * n else C, D)
    Q = None
    if d.get("Q") is not None:
        Q = StorageMatrix(np.atleast_2d(np.array(d["Q"], dtype=float)).reshape(n, n))
    return ss, Q


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))


def dump_model(ss, Q=None):
    return json.dumps(model_to_dict(ss, Q), indent=2)

"""Certificates for relaxation-system structure.

``check_relaxation`` is the authoritative test: it recovers the storage
matrix and checks ``D >= 0``, ``Q > 0``, ``QA = A^T Q <= 0`` and
``QB = C^T``.  ``monotonicity_probe`` samples the impulse response on a
finite grid and can only refute (or corroborate) complete monotonicity.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .config import DEFAULT_TOL
from .errors import NotMinimal
from .realization import StorageMatrix, compute_Q, minimality, sym

__all__ = ["RelaxationCertificate", "MonotonicityReport", "check_relaxation",
           "monotonicity_probe", "default_time_grid"]


def _min_eig(M):
    return float(np.linalg.eigvalsh(sym(M))[0]) if M.size else np.inf


def _max_eig(M):
    return float(np.linalg.eigvalsh(sym(M))[-1]) if M.size else -np.inf


def _rel(num, den):
    num = float(np.linalg.norm(num))
    den = float(np.linalg.norm(den))
    if den == 0.0:
        return 0.0 if num == 0.0 else np.inf
    return num / den


@dataclass(frozen=True, eq=False)
class RelaxationCertificate:
    Q: StorageMatrix
    residual_sym: float
    residual_adj: float
    eig_QA_max: float
    eig_D_min: float
    eig_Q_min: float
    asym_D: float
    verdict: str
    reason: str | None
    tol: object

    @property
    def ok(self):
        return self.verdict == "Relaxation"

    def to_dict(self):
        def f(x):
            return None if not np.isfinite(x) else float(x)
        return {
            "verdict": self.verdict if self.ok else f"NotRelaxation({self.reason})",
            "relaxation": self.ok,
            "reason": self.reason,
            "Q": self.Q.Q.tolist(),
            "Q_asymmetry": f(self.Q.asym_residual),
            "residual_sym": f(self.residual_sym),
            "residual_adj": f(self.residual_adj),
            "eig_QA_max": f(self.eig_QA_max),
            "eig_D_min": f(self.eig_D_min),
            "eig_Q_min": f(self.eig_Q_min),
            "D_asymmetry": f(self.asym_D),
            "tolerances": self.tol.to_dict(),
        }


def check_relaxation(ss, tol=DEFAULT_TOL, Q=None):
    """Certify (or refute) that ``ss`` realizes a relaxation system.

    Parameters
    ----------
    ss : StateSpace
        Square realization.  Must be minimal unless ``Q`` is supplied.
    tol : ToleranceConfig
    Q : StorageMatrix or array_like, optional
        Candidate storage.  When given, the conditions are checked against
        it directly and minimality is not required (useful for physical
        models whose state may be redundant).

    Returns
    -------
    RelaxationCertificate
        ``reason`` names the first violated condition, in the order
        D symmetric PSD, Q symmetric, Q positive definite, QA = A^T Q,
        QA <= 0, QB = C^T.
    """
    if ss.m != ss.p:
        raise ValueError("relaxation systems are square (m == p)")
    if Q is None:
        info = minimality(ss, tol.tau_rank)
        if not (info["controllable"] and info["observable"]):
            raise NotMinimal(f"realization is not minimal: {info}")
        storage = compute_Q(ss, tol)
    elif isinstance(Q, StorageMatrix):
        storage = Q
    else:
        Qm = np.atleast_2d(np.asarray(Q, dtype=float)).reshape(ss.n, ss.n)
        nrm = np.linalg.norm(Qm)
        storage = StorageMatrix(sym(Qm), float(np.linalg.norm(Qm - Qm.T) / nrm) if nrm else 0.0)

    A, B, C, D = ss.A, ss.B, ss.C, ss.D
    Qm = storage.Q
    QA = Qm @ A
    residual_sym = _rel(QA - A.T @ Qm, QA) if ss.n else 0.0
    residual_adj = _rel(Qm @ B - C.T, C.T) if ss.n else 0.0
    eig_QA_max = _max_eig(QA) if ss.n else -np.inf
    eig_Q_min = _min_eig(Qm) if ss.n else np.inf
    eig_D_min = _min_eig(D)
    asym_D = _rel(D - D.T, D)

    checks = [
        (asym_D <= tol.tau_sym, "D not symmetric"),
        (eig_D_min >= -tol.tau_psd, "D indefinite"),
        (storage.asym_residual <= tol.tau_sym, "Q not symmetric"),
        (eig_Q_min >= tol.tau_psd, "Q not positive definite"),
        (residual_sym <= tol.tau_sym, "QA != A^T Q"),
        (eig_QA_max <= tol.tau_psd, "QA not negative semi-definite"),
        (residual_adj <= tol.tau_sym, "QB != C^T"),
    ]
    reason = next((msg for passed, msg in checks if not passed), None)
    return RelaxationCertificate(
        Q=storage, residual_sym=residual_sym, residual_adj=residual_adj,
        eig_QA_max=eig_QA_max, eig_D_min=eig_D_min, eig_Q_min=eig_Q_min,
        asym_D=asym_D, verdict="Relaxation" if reason is None else "NotRelaxation",
        reason=reason, tol=tol)


@dataclass(frozen=True, eq=False)
class MonotonicityReport:
    t_grid: np.ndarray
    orders: list
    min_eig: np.ndarray        # shape (len(t_grid), len(orders))
    scale: np.ndarray          # per-order magnitude ||C A^k B||
    passed: bool

    def first_failure(self, tau_psd=DEFAULT_TOL.tau_psd):
        bad = ~(self.min_eig >= -tau_psd * self.scale[None, :])
        if not bad.any():
            return None
        i, k = np.argwhere(bad)[0]
        return float(self.t_grid[i]), int(self.orders[k])

    def to_dict(self):
        return {"pass": self.passed, "t_grid": self.t_grid.tolist(),
                "orders": list(self.orders),
                "min_eig": np.where(np.isfinite(self.min_eig), self.min_eig, np.nan).tolist(),
                "first_failure": self.first_failure()}


def default_time_grid(ss, points=30):
    """Log-spaced grid over [1e-3, 1e3] slowest time constants."""
    tau = 1.0
    if ss.n:
        mags = np.abs(np.linalg.eigvals(ss.A))
        mags = mags[mags > 1e-12 * max(mags.max(), 1.0)]
        if mags.size:
            tau = 1.0 / mags.min()
    return np.logspace(-3, 3, points) * tau


def monotonicity_probe(ss, n_max=4, t_grid=None, tol=DEFAULT_TOL):
    """Sample ``(-1)^k d^k/dt^k C e^{At} B`` for ``k <= n_max`` on ``t_grid``.

    Each sample is symmetrized and its smallest eigenvalue recorded; the
    probe passes when every entry is at least ``-tau_psd * ||C A^k B||``.
    """
    if n_max < 0:
        raise ValueError("n_max must be non-negative")
    if ss.m != ss.p:
        raise ValueError("complete monotonicity is defined for square systems")
    t_grid = default_time_grid(ss) if t_grid is None else np.asarray(t_grid, dtype=float)
    if np.any(t_grid <= 0):
        raise ValueError("probe times must be positive")
    orders = list(range(n_max + 1))
    out = np.empty((t_grid.size, len(orders)))
    A, B, C = ss.A, ss.B, ss.C
    scale = np.empty(len(orders))
    Y = B
    for k in orders:
        scale[k] = np.linalg.norm(C @ Y)
        Y = A @ Y
    with np.errstate(all="ignore"):
        for i, t in enumerate(t_grid):
            if ss.n == 0:
                out[i] = 0.0
                continue
            Y = scipy.linalg.expm(A * t) @ B
            for k in orders:
                W = (-1) ** k * (C @ Y)
                out[i, k] = _min_eig(W) if np.all(np.isfinite(W)) else np.nan
                Y = A @ Y
    passed = bool(np.all(out >= -tol.tau_psd * scale[None, :]))
    return MonotonicityReport(t_grid, orders, out, scale, passed)

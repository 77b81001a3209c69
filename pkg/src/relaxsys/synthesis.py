"""Closed-form static controllers for relaxation plants.

Both controllers are constant symmetric gains acting as ``u = -K y``:

* ``synth_p1``: ``K = (D - C A^{-1} B) / alpha = G(0) / alpha``, the
  minimiser of the worst-case output-plus-effort energy;
* ``synth_p2``: ``K = I / alpha``, the minimiser when the effort is
  measured as the energy the controller supplies to the plant.

``lemma_lb`` is the least-squares identity behind both gains and doubles as
an independent oracle in the tests.
"""

import json
from dataclasses import dataclass

import numpy as np

from .config import DEFAULT_TOL
from .errors import NotCertified, SingularA, SingularG1
from .realization import sym

__all__ = ["StaticController", "synth_p1", "synth_p2", "lemma_lb",
           "verify_static_optimality", "random_psd", "load_controller"]

PROBLEMS = ("P1", "P2")


def _problem(problem):
    key = str(problem).upper()
    if key in ("1", "2"):
        key = "P" + key
    if key not in PROBLEMS:
        raise ValueError(f"unknown problem {problem!r}; expected P1 or P2")
    return key


@dataclass(frozen=True, eq=False)
class StaticController:
    K: np.ndarray
    alpha: float
    problem: str

    def __post_init__(self):
        K = np.atleast_2d(np.array(self.K, dtype=float))
        if K.shape[0] != K.shape[1]:
            raise ValueError("static gain must be square")
        K.setflags(write=False)
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "problem", _problem(self.problem))

    def to_dict(self):
        return {"K": self.K.tolist(), "alpha": float(self.alpha), "problem": self.problem}

    @classmethod
    def from_dict(cls, d):
        return cls(d["K"], float(d["alpha"]), d["problem"])


def load_controller(path):
    with open(path, encoding="utf-8") as fh:
        return StaticController.from_dict(json.load(fh))


def _require(alpha, cert, force=False):
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    if not force and (cert is None or not cert.ok):
        why = "missing" if cert is None else cert.reason
        raise NotCertified(f"relaxation certificate {why}")


def synth_p1(ss, alpha, cert, tol=DEFAULT_TOL, force=False):
    """Optimal static gain for the output-plus-effort problem.

    Raises ``SingularA`` when ``A`` has an eigenvalue within
    ``tau_singular * max(1, ||A||)`` of the origin or is not Hurwitz; lossless
    modes make ``G(0)`` unbounded and no regularisation is attempted.
    ``force=True`` skips the certificate requirement (the formula is then
    evaluated but carries no optimality guarantee).
    """
    _require(alpha, cert, force)
    if ss.n:
        lam = np.linalg.eigvals(ss.A)
        if np.min(np.abs(lam)) <= tol.tau_singular * max(1.0, np.linalg.norm(ss.A, 2)):
            raise SingularA("A is singular; G(0) is unbounded")
        if np.max(lam.real) >= 0:
            raise SingularA("A is not Hurwitz")
        G0 = ss.D - ss.C @ np.linalg.solve(ss.A, ss.B)
    else:
        G0 = ss.D
    return StaticController(sym(G0) / alpha, alpha, "P1")


def synth_p2(ss, alpha, cert, tol=DEFAULT_TOL, force=False):
    _require(alpha, cert, force)
    return StaticController(np.eye(ss.m) / alpha, alpha, "P2")


def lemma_lb(G1, G2, G3, v, tol=DEFAULT_TOL):
    """Minimiser of ``||z||`` over ``K`` for the constrained map

    ``z = [I; -G1^{-1} K] (I - G2 K)^{-1} G3 v``.

    The minimiser is ``K* = -G1 G1^* G2^*`` and the optimal ``z`` coincides
    with the minimum-norm solution of ``[I, G2 G1] z = G3 v``.

    Returns
    -------
    dict
        ``K_star``, ``z_star`` (closed form), ``z_constraint`` (the map above
        evaluated at ``K*``), ``z_minnorm`` (SVD pseudo-inverse), and the
        relative discrepancies between them.
    """
    G1 = np.atleast_2d(np.asarray(G1, dtype=complex))
    G2 = np.atleast_2d(np.asarray(G2, dtype=complex))
    G3 = np.atleast_2d(np.asarray(G3, dtype=complex))
    v = np.asarray(v, dtype=complex).reshape(-1)
    n = G1.shape[0]
    if 1.0 / np.linalg.cond(G1) < tol.tau_singular:
        raise SingularG1("G1 is numerically singular")
    I = np.eye(n)
    G1h, G2h = G1.conj().T, G2.conj().T
    K_star = -G1 @ G1h @ G2h
    g = G3 @ v
    z_star = np.concatenate([I, G1h @ G2h]) @ np.linalg.solve(I + G2 @ G1 @ G1h @ G2h, g)

    top = np.linalg.solve(I - G2 @ K_star, g)
    z_constraint = np.concatenate([top, -np.linalg.solve(G1, K_star @ top)])
    z_minnorm = np.linalg.pinv(np.hstack([I, G2 @ G1])) @ g

    scale = max(np.linalg.norm(z_star), np.finfo(float).tiny)
    return {
        "K_star": K_star,
        "z_star": z_star,
        "z_constraint": z_constraint,
        "z_minnorm": z_minnorm,
        "constraint_residual": float(np.linalg.norm(z_constraint - z_star) / scale),
        "norm_gap": float(abs(np.linalg.norm(z_star) - np.linalg.norm(z_minnorm)) / scale),
    }


def random_psd(rng, m, radius):
    """Random symmetric PSD matrix with spectral norm at most ``radius``."""
    if radius == 0:
        return np.zeros((m, m))
    rank = rng.integers(1, m + 1)
    M = rng.normal(size=(m, rank))
    P = M @ M.T
    return radius * rng.uniform() * P / np.linalg.norm(P, 2)


def verify_static_optimality(ss, alpha, controller, problem=None, n_trials=100,
                             radius=1.0, seed=0, Q=None, tol=DEFAULT_TOL):
    """Compare the worst-case cost at ``controller`` with PSD perturbations.

    Perturbations that destabilise the loop are skipped and counted.  The
    report's ``fraction`` is the share of evaluated perturbations whose
    cost is not below the candidate's (slack ``1e-7``); it must be 1.0.
    """
    from .analysis import close_loop, is_stable, worst_case_cost
    from .realization import compute_Q

    problem = _problem(problem or controller.problem)
    if Q is None:
        Q = compute_Q(ss, tol)
    rng = np.random.default_rng(seed)
    K0 = controller.K
    if not is_stable(close_loop(ss, K0, tol)):
        raise ValueError("candidate controller does not stabilise the plant")
    c0 = worst_case_cost(ss, K0, alpha, Q, problem, tol)
    worse, skipped, best_other = 0, 0, np.inf
    for _ in range(n_trials):
        Kp = K0 + random_psd(rng, ss.m, radius)
        if not is_stable(close_loop(ss, Kp, tol)):
            skipped += 1
            continue
        c = worst_case_cost(ss, Kp, alpha, Q, problem, tol)
        best_other = min(best_other, c)
        worse += c0 <= c + 1e-7
    evaluated = n_trials - skipped
    fraction = 1.0 if evaluated == 0 else worse / evaluated
    return {
        "problem": problem, "alpha": float(alpha), "trials": n_trials,
        "evaluated": evaluated, "skipped_unstable": skipped,
        "cost_star": float(c0),
        "min_perturbed_cost": None if not np.isfinite(best_other) else float(best_other),
        "fraction": float(fraction), "pass": fraction == 1.0,
    }

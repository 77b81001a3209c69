"""Closed loops, simulation, cost functionals and the worst-case identity.

Feedback is ``u = -K y`` around the plant

    x' = A x + B u + w,   x(0) = 0,
    y  = C x + D u,

so the disturbance enters every state directly.  The effort term of both
costs is weighted by ``alpha`` (see ``effort_weight``): with that weighting
``G(0)/alpha`` and ``I/alpha`` are exactly the minimisers, whereas a weight
of ``alpha**2`` would move the minimiser to ``G(0)/alpha**2``.
"""

import csv
import io
from dataclasses import dataclass

import numpy as np

from .config import DEFAULT_TOL
from .errors import AlgebraicLoop, DivergentTrace, SingularA, UnstableSystem
from .realization import StateSpace, psd_sqrt, sym, transfer_eval

__all__ = ["ClosedLoop", "SimTrace", "CostReport", "Step", "ScaledBox", "Samples",
           "parse_disturbance", "effort_weight", "close_loop", "is_stable",
           "default_dt", "default_horizon", "simulate", "costs", "step_limit_costs", "step_cost_limit",
           "worst_case_cost", "hinf_norm", "worst_case_identity",
           "p2_energy_bound_check"]


def effort_weight(alpha):
    """Weight multiplying ``u^T u`` (problem 1) and ``u^T ybar`` (problem 2)."""
    return float(alpha)


def _gain(K):
    return np.atleast_2d(np.asarray(getattr(K, "K", K), dtype=float))


def _Qmat(Q):
    return np.atleast_2d(np.asarray(getattr(Q, "Q", Q), dtype=float))


@dataclass(frozen=True, eq=False)
class ClosedLoop:
    """Plant in feedback with a static gain.

    ``ss_cl`` maps the disturbance ``w`` (n channels) to the stacked
    signal ``[y; u]``.
    """

    ss_cl: StateSpace
    K: np.ndarray
    base: StateSpace
    controller: object = None

    @property
    def y_map(self):
        return self.ss_cl.C[: self.base.p]

    @property
    def u_map(self):
        return self.ss_cl.C[self.base.p:]


def close_loop(ss, K, tol=DEFAULT_TOL):
    Km = _gain(K)
    if Km.shape != (ss.m, ss.p):
        raise ValueError(f"gain has shape {Km.shape}, expected {(ss.m, ss.p)}")
    M = np.eye(ss.p) + ss.D @ Km
    if 1.0 / np.linalg.cond(M) < tol.tau_singular:
        raise AlgebraicLoop("I + D K is singular")
    Y = np.linalg.solve(M, ss.C)
    U = -Km @ Y
    A_cl = ss.A + ss.B @ U
    n = ss.n
    ss_cl = StateSpace(A_cl, np.eye(n), np.vstack([Y, U]), np.zeros((ss.p + ss.m, n)))
    return ClosedLoop(ss_cl, Km, ss, K if hasattr(K, "K") else None)


def is_stable(cl):
    A = cl.ss_cl.A if isinstance(cl, ClosedLoop) else cl.A
    return A.size == 0 or bool(np.max(np.linalg.eigvals(A).real) < 0)


def default_dt(cl):
    A = cl.ss_cl.A
    if A.size == 0:
        return 0.01
    fastest = np.max(np.abs(np.linalg.eigvals(A)))
    return min(0.01, 0.1 / fastest) if fastest > 0 else 0.01


def default_horizon(cl, constants=50.0):
    """``constants`` slowest time constants of the closed loop and the plant.

    The plant's own modes matter because ``ybar`` is the open-loop response
    to the recorded control.
    """
    lam = np.concatenate([np.linalg.eigvals(cl.ss_cl.A), np.linalg.eigvals(cl.base.A)]) \
        if cl.base.n else np.zeros(0)
    rates = np.abs(lam.real)
    rates = rates[rates > 0]
    return float(constants / rates.min()) if rates.size else 1.0


# -- disturbances -----------------------------------------------------------

@dataclass(frozen=True)
class Step:
    """``w(t) = v`` for ``t >= 0``."""
    v: tuple

    def __call__(self, t):
        return np.broadcast_to(np.asarray(self.v, dtype=float), (np.size(t), len(self.v)))


@dataclass(frozen=True)
class ScaledBox:
    """``w(t) = v / sqrt(T)`` on ``[0, T]``, zero afterwards.

    The amplitude makes ``int w^T Q w dt = v^T Q v``.
    """
    v: tuple
    T: float

    def __call__(self, t):
        t = np.atleast_1d(t)
        on = (t <= self.T * (1 + 1e-12)).astype(float)[:, None]
        return on * np.asarray(self.v, dtype=float)[None, :] / np.sqrt(self.T)


@dataclass(frozen=True, eq=False)
class Samples:
    """Piecewise-linear interpolation of sampled values; held outside the range."""
    t: np.ndarray
    values: np.ndarray

    def __call__(self, t):
        t = np.atleast_1d(t)
        vals = np.atleast_2d(np.asarray(self.values, dtype=float))
        return np.column_stack([np.interp(t, self.t, vals[:, j]) for j in range(vals.shape[1])])


def parse_disturbance(text, n):
    """Parse ``step:v1,v2,..``, ``box:T:v1,..`` or ``zero``."""
    kind, _, rest = text.partition(":")
    kind = kind.strip().lower()
    if kind == "zero":
        return Step((0.0,) * n)
    if kind == "box":
        T, _, rest = rest.partition(":")
        T = float(T)
        if not T > 0:
            raise ValueError("box duration must be positive")
    elif kind != "step":
        raise ValueError(f"unknown disturbance kind {kind!r}")
    vals = tuple(float(x) for x in rest.split(",")) if rest.strip() else ()
    if len(vals) == 1 and n > 1:
        vals = vals * n
    if len(vals) != n:
        raise ValueError(f"disturbance needs {n} components, got {len(vals)}")
    return Step(vals) if kind == "step" else ScaledBox(vals, T)


# -- simulation ---------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SimTrace:
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    u: np.ndarray
    w: np.ndarray
    ybar: np.ndarray
    dt: float
    horizon: float

    def to_csv(self, fh=None):
        """Write ``t,x1..xn,y1..yp,u1..um,w1..wn,ybar1..ybarp`` rows."""
        header = ["t"]
        for name, arr in (("x", self.x), ("y", self.y), ("u", self.u),
                          ("w", self.w), ("ybar", self.ybar)):
            header += [f"{name}{i + 1}" for i in range(arr.shape[1])]
        data = np.column_stack([self.t, self.x, self.y, self.u, self.w, self.ybar])
        out = fh if fh is not None else io.StringIO()
        out.write(",".join(header) + "\n")
        np.savetxt(out, data, fmt="%.17g", delimiter=",")
        return None if fh is not None else out.getvalue()

    @classmethod
    def from_csv(cls, fh):
        if isinstance(fh, str):
            fh = io.StringIO(fh)
        header = next(csv.reader([fh.readline()]))
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
        cols = {}
        for j, name in enumerate(header[1:], start=1):
            key = name.rstrip("0123456789")
            cols.setdefault(key, []).append(j)
        get = lambda k: data[:, cols.get(k, [])]
        t = data[:, 0]
        dt = float(t[1] - t[0]) if t.size > 1 else 0.0
        return cls(t, get("x"), get("y"), get("u"), get("w"), get("ybar"), dt, float(t[-1]))


def _rk4_matrices(M, h):
    # one RK4 step of x' = M x + w as x+ = Phi x + G0 w(t) + Gm w(t+h/2) + G1 w(t+h)
    n = M.shape[0]
    I, Z = np.eye(n), np.zeros((n, n))

    def step(x, w0, wm, w1):
        k1 = M @ x + w0
        k2 = M @ (x + 0.5 * h * k1) + wm
        k3 = M @ (x + 0.5 * h * k2) + wm
        k4 = M @ (x + h * k3) + w1
        return x + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)

    return step(I, Z, Z, Z), step(Z, I, Z, Z), step(Z, Z, I, Z), step(Z, Z, Z, I)


def simulate(cl, w, horizon, dt=None):
    """Fixed-step classical RK4 integration of the closed loop from rest.

    ``ybar`` is produced by a second copy of the plant driven only by the
    recorded control ``u`` (``ybar = G u``), integrated alongside.
    """
    base = cl.base
    n = base.n
    if dt is None:
        dt = default_dt(cl)
    if not dt > 0:
        raise ValueError("dt must be positive")
    if not horizon >= dt:
        raise ValueError("horizon must be at least dt")
    N = int(np.ceil(horizon / dt - 1e-9))
    h = horizon / N
    t = np.linspace(0.0, horizon, N + 1)

    Y, U = cl.y_map, cl.u_map
    Maug = np.block([[cl.ss_cl.A, np.zeros((n, n))], [base.B @ U, base.A]])
    Phi, G0, Gm, G1 = _rk4_matrices(Maug, h)
    W = np.asarray(w(t), dtype=float).reshape(N + 1, n)
    Wm = np.asarray(w(t[:-1] + 0.5 * h), dtype=float).reshape(N, n)
    drive = W[:-1] @ G0[:, :n].T + Wm @ Gm[:, :n].T + W[1:] @ G1[:, :n].T

    X = np.zeros((N + 1, 2 * n))
    xk = X[0]
    PhiT = Phi.T
    for k in range(N):
        xk = xk @ PhiT + drive[k]
        X[k + 1] = xk
    x, xbar = X[:, :n], X[:, n:]
    u = x @ U.T
    y = x @ Y.T
    ybar = xbar @ base.C.T + u @ base.D.T
    return SimTrace(t, x, y, u, W, ybar, h, float(horizon))


@dataclass(frozen=True)
class CostReport:
    cost_p1: float
    cost_p2: float
    truncation_bound: float

    def to_dict(self):
        tb = self.truncation_bound
        return {"cost_p1": self.cost_p1, "cost_p2": self.cost_p2,
                "truncation_bound": tb if np.isfinite(tb) else None}


def _integrands(trace, alpha):
    rho = effort_weight(alpha)
    yy = np.einsum("ij,ij->i", trace.y, trace.y)
    f1 = yy + rho * np.einsum("ij,ij->i", trace.u, trace.u)
    f2 = yy + rho * np.einsum("ij,ij->i", trace.u, trace.ybar)
    return f1, f2


def _check_divergence(trace):
    xn = np.linalg.norm(trace.x, axis=1)
    k0 = int(0.8 * (xn.size - 1))
    tail = xn[k0:]
    if tail.size < 3:
        return
    d = np.diff(tail)
    # growth that is not slowing down: exponential or polynomial blow-up
    if np.all(d > 0) and d[-1] >= d[0]:
        raise DivergentTrace("state norm grows without settling over the final 20% of the horizon")


def _tail_bound(trace, f1):
    xn = np.linalg.norm(trace.x, axis=1)
    k0 = int(0.9 * (xn.size - 1))
    seg_t, seg_x = trace.t[k0:], xn[k0:]
    if seg_t.size < 2 or np.any(seg_x <= 0):
        return 0.0 if np.all(xn == 0) else np.inf
    slope = np.polyfit(seg_t, np.log(seg_x), 1)[0]
    # a settled nonzero state (step input) has an unbounded tail
    if slope >= 0 or seg_x[-1] > seg_x[0] * (1 - 1e-6):
        return np.inf
    # integrand ~ |x|^2 decays at twice the fitted rate
    return float(abs(f1[-1]) / (-2.0 * slope))


def costs(trace, alpha):
    """Trapezoidal integrals of both cost integrands over the trace."""
    _check_divergence(trace)
    f1, f2 = _integrands(trace, alpha)
    return CostReport(float(np.trapezoid(f1, trace.t)), float(np.trapezoid(f2, trace.t)),
                      _tail_bound(trace, f1))


def step_limit_costs(trace, alpha):
    """Estimate the long-box limit of both costs from a unit-step trace.

    A step ``v`` observed over ``[0, H]`` is the box disturbance ``v/sqrt(H)``
    scaled up by ``sqrt(H)``, so the box cost is the time average of the
    integrand.  The average carries a ``1/H`` start-up bias which is removed
    by Richardson extrapolation between ``H/2`` and ``H``.
    """
    f1, f2 = _integrands(trace, alpha)
    N = trace.t.size - 1
    half = N // 2
    out = {}
    for key, f in (("P1", f1), ("P2", f2)):
        full = np.trapezoid(f, trace.t) / trace.t[-1]
        part = np.trapezoid(f[: half + 1], trace.t[: half + 1]) / trace.t[half]
        r = trace.t[-1] / trace.t[half]
        out[key] = {"average": float(full),
                    "extrapolated": float((r * full - part) / (r - 1.0))}
    return out


# -- steady-state costs -------------------------------------------------------

def _dc_map(ss, K, tol):
    """``Z = [I; -K] (I + G(0) K)^{-1} C (-A)^{-1}`` and ``G(0)``."""
    Km = _gain(K)
    if ss.n and np.min(np.abs(np.linalg.eigvals(ss.A))) <= tol.tau_singular * max(1.0, np.linalg.norm(ss.A, 2)):
        raise SingularA("A is singular")
    G0 = ss.D - ss.C @ np.linalg.solve(ss.A, ss.B) if ss.n else ss.D
    P = -ss.C @ np.linalg.inv(ss.A) if ss.n else np.zeros((ss.p, 0))
    top = np.linalg.solve(np.eye(ss.p) + G0 @ Km, P)
    return np.vstack([top, -Km @ top]), G0


def _weight(ss, G0, alpha, problem):
    rho = effort_weight(alpha)
    W = np.zeros((ss.p + ss.m, ss.p + ss.m))
    W[: ss.p, : ss.p] = np.eye(ss.p)
    W[ss.p:, ss.p:] = rho * (np.eye(ss.m) if problem == "P1" else sym(G0))
    return W


def step_cost_limit(ss, K, alpha, v, problem="P1", tol=DEFAULT_TOL):
    """Limit cost ``z^T W z`` for the long box disturbance in direction ``v``.

    ``v`` has one entry per state (the disturbance enters the state
    equation).  ``W = diag(I, alpha I)`` for problem 1 and
    ``diag(I, alpha G(0))`` for problem 2.
    """
    from .synthesis import _problem
    problem = _problem(problem)
    Z, G0 = _dc_map(ss, K, tol)
    z = Z @ np.asarray(v, dtype=float).reshape(ss.n)
    return float(z @ _weight(ss, G0, alpha, problem) @ z)


def worst_case_cost(ss, K, alpha, Q, problem="P1", tol=DEFAULT_TOL):
    """Largest ``step_cost_limit`` over directions with ``v^T Q v = 1``."""
    from .synthesis import _problem
    problem = _problem(problem)
    Z, G0 = _dc_map(ss, K, tol)
    if ss.n == 0:
        return 0.0
    Sinv = np.linalg.inv(psd_sqrt(_Qmat(Q)))
    M = Sinv @ Z.T @ _weight(ss, G0, alpha, problem) @ Z @ Sinv
    return float(np.linalg.eigvalsh(sym(M))[-1])


# -- H-infinity norm ----------------------------------------------------------

def _has_imag_eig(ss, gamma, thresh):
    A, B, C, D = ss.A, ss.B, ss.C, ss.D
    R = gamma ** 2 * np.eye(ss.m) - D.T @ D
    Ri = np.linalg.inv(R)
    Ah = A + B @ Ri @ D.T @ C
    H = np.block([[Ah, B @ Ri @ B.T],
                  [-C.T @ (np.eye(ss.p) + D @ Ri @ D.T) @ C, -Ah.T]])
    lam = np.linalg.eigvals(H)
    return bool(np.any(np.abs(lam.real) <= thresh * np.linalg.norm(H)))


def _sweep(ss, points):
    lam = np.abs(np.linalg.eigvals(ss.A))
    lo = max(lam.min(), 1e-6) * 1e-2
    hi = max(lam.max(), 1e-6) * 1e2
    w = np.concatenate([[0.0], np.logspace(np.log10(lo), np.log10(hi), points)])
    sv = [np.linalg.svd(transfer_eval(ss, 1j * x), compute_uv=False)[0] for x in w]
    return w, np.array(sv)


def hinf_norm(ss, tol_rel=1e-8, points=200, imag_thresh=1e-7, return_sweep=False):
    """H-infinity norm of a stable realization by Hamiltonian bisection.

    A frequency sweep (``points`` log-spaced frequencies plus 0 and the
    feedthrough) provides a certified lower bound; bisection then shrinks
    ``[lower, upper]`` until its relative width is below ``tol_rel``.
    """
    if ss.n and np.max(np.linalg.eigvals(ss.A).real) >= 0:
        raise UnstableSystem("A is not Hurwitz")
    dnorm = np.linalg.norm(ss.D, 2) if ss.D.size else 0.0
    if ss.n == 0 or not np.any(ss.C) or not np.any(ss.B):
        return (dnorm, None) if return_sweep else dnorm
    w, sv = _sweep(ss, points)
    lo = max(sv.max(), dnorm)
    if lo == 0.0:
        return (0.0, (w, sv)) if return_sweep else 0.0
    hi = 2.0 * lo
    while _has_imag_eig(ss, hi, imag_thresh):
        lo, hi = hi, 2.0 * hi
    while (hi - lo) > tol_rel * lo:
        mid = 0.5 * (lo + hi)
        if _has_imag_eig(ss, mid, imag_thresh):
            lo = mid
        else:
            hi = mid
    val = 0.5 * (lo + hi)
    return (val, (w, sv)) if return_sweep else val


def worst_case_identity(ss, K, alpha, Q, tol_gap=1e-6, tol_rel=1e-8):
    """Check that the weighted closed-loop map peaks at zero frequency.

    Forms ``V(s) = [I; -sqrt(alpha) K] (I + G K)^{-1} C (sI - A)^{-1} Q^{-1/2}``
    as one realization, compares its H-infinity norm with ``||V(0)||_2`` and
    checks positivity of ``X = -A_s + B_s K (I + D K)^{-1} B_s^T`` in the
    symmetric coordinates ``sqrt(Q) x``.  When ``G(0)`` is symmetric PSD the
    problem-2 bound map (effort row ``sqrt(alpha) G(0)^{1/2} K``) is checked
    as well.
    """
    Km = _gain(K)
    cl = close_loop(ss, Km)
    if not is_stable(cl):
        raise UnstableSystem("closed loop is not stable")
    Qm = _Qmat(Q)
    S = psd_sqrt(Qm)
    Sinv = np.linalg.inv(S)
    Minv = np.linalg.inv(np.eye(ss.p) + ss.D @ Km)
    rho = effort_weight(alpha)
    A_cl = cl.ss_cl.A

    def gap_for(effort_row):
        Cv = np.vstack([np.eye(ss.p), -np.sqrt(rho) * effort_row]) @ Minv @ ss.C
        V = StateSpace(A_cl, Sinv, Cv, np.zeros((Cv.shape[0], ss.n)))
        hn = hinf_norm(V, tol_rel=tol_rel)
        v0 = np.linalg.norm(Cv @ np.linalg.solve(-A_cl, Sinv), 2)
        return float(hn), float(v0), float(abs(hn - v0) / max(v0, np.finfo(float).tiny))

    hn, v0, gap = gap_for(Km)
    Abar = S @ ss.A @ Sinv
    Bbar = S @ ss.B
    X = -Abar + Bbar @ Km @ Minv @ Bbar.T
    x_min = float(np.linalg.eigvalsh(sym(X))[0]) if ss.n else np.inf
    x_asym = float(np.linalg.norm(X - X.T) / max(np.linalg.norm(X), np.finfo(float).tiny))

    report = {"hinf_norm": hn, "dc_norm": v0, "gap": gap,
              "x_min_eig": x_min, "x_asymmetry": x_asym,
              "gap_p2": None, "pass": bool(gap <= tol_gap and x_min > 0)}
    G0 = ss.D - ss.C @ np.linalg.solve(ss.A, ss.B) if ss.n else ss.D
    if ss.p == ss.m and np.allclose(G0, G0.T, atol=1e-9 * max(1.0, np.linalg.norm(G0))) \
            and np.linalg.eigvalsh(sym(G0))[0] >= -1e-12:
        _, _, gap2 = gap_for(psd_sqrt(G0) @ Km)
        report["gap_p2"] = gap2
    return report


def p2_energy_bound_check(ss, K, alpha, w, horizon, dt=None):
    """Simulated check of ``int u^T ybar dt <= int u^T G(0) u dt``."""
    cl = close_loop(ss, K)
    if not is_stable(cl):
        raise UnstableSystem("closed loop is not stable")
    trace = simulate(cl, w, horizon, dt)
    _check_divergence(trace)
    G0 = ss.D - ss.C @ np.linalg.solve(ss.A, ss.B) if ss.n else ss.D
    lhs = float(np.trapezoid(np.einsum("ij,ij->i", trace.u, trace.ybar), trace.t))
    rhs = float(np.trapezoid(np.einsum("ij,jk,ik->i", trace.u, G0, trace.u), trace.t))
    scale = max(abs(lhs), abs(rhs))
    return {"supplied_energy": lhs, "dc_bound": rhs, "margin": rhs - lhs,
            "pass": bool(lhs <= rhs + 1e-6 * scale)}

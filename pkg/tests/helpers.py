"""Shared generators and oracles for the test suite."""

import numpy as np

from relaxsys.netlab import Edge, Netlist, Port
from relaxsys.realization import StateSpace

TWO_BRANCH_TEMPLATE = """\
# two RL branches across one port
R R3 T M {R3!r}
L L2 M Bt {L2!r}
R R1 T P {R1!r}
R R2 P N {R2!r}
L L1 N Bt {L1!r}
PORT P T Bt
ROT T R3 R1 PORT:P
ROT Bt L1 L2 PORT:P
ROT M R3 L2
ROT P R1 R2
ROT N R2 L1
"""


def two_branch_text(R1=1.0, R2=2.0, R3=3.0, L1=1.5, L2=2.0):
    return TWO_BRANCH_TEMPLATE.format(R1=float(R1), R2=float(R2), R3=float(R3), L1=float(L1), L2=float(L2))


def two_branch_admittance(s, R1=1.0, R2=2.0, R3=3.0, L1=1.5, L2=2.0):
    return 1.0 / (L1 * s + R1 + R2) + 1.0 / (L2 * s + R3)


def rc_circuit(R, C):
    """Parallel RC driven by a current, charge as state: q' = -q/(RC) + i, v = q/C."""
    return StateSpace([[-1.0 / (R * C)]], [[1.0]], [[1.0 / C]], [[0.0]])


def random_orthogonal(rng, n):
    q, r = np.linalg.qr(rng.normal(size=(n, n)))
    return q * np.sign(np.diag(r))


def random_relaxation(rng, n, m, transform=True, d_rank=None, spread=(0.3, 5.0)):
    """Minimal relaxation system; returns ``(ss, Q)`` with the true storage."""
    lam = np.sort(rng.uniform(*spread, size=n))
    # keep eigenvalues distinct so a single input can excite every mode
    lam = lam + 0.05 * np.arange(n)
    U = random_orthogonal(rng, n)
    A_s = -(U * lam) @ U.T
    B_s = rng.normal(size=(n, m))
    r = m if d_rank is None else d_rank
    M = rng.normal(size=(m, r))
    D = 0.5 * M @ M.T
    if not transform:
        return StateSpace(A_s, B_s, B_s.T, D), np.eye(n)
    T = random_orthogonal(rng, n) @ np.diag(rng.uniform(0.5, 2.0, size=n))
    Tinv = np.linalg.inv(T)
    ss = StateSpace(Tinv @ A_s @ T, Tinv @ B_s, B_s.T @ T, D)
    return ss, T.T @ T


def random_psd_gain(rng, m, scale=2.0):
    M = rng.normal(size=(m, m))
    return scale * M @ M.T / m


def oscillator(rng=None, zeta=0.05, omega=1.0):
    """Lightly damped second-order SISO system, not a relaxation system."""
    return StateSpace([[0.0, 1.0], [-omega ** 2, -2 * zeta * omega]], [[0.0], [1.0]],
                      [[omega ** 2, 0.0]], [[0.0]])


def non_monotone_systems():
    """Stable minimal systems whose impulse response is not completely monotone."""
    out = []
    # oscillatory responses
    for zeta, omega in ((0.05, 1.0), (0.3, 2.0), (0.7, 0.5)):
        out.append(oscillator(zeta=zeta, omega=omega))
    # negative impulse response
    out.append(StateSpace([[-1.0]], [[1.0]], [[-1.0]], [[0.0]]))
    out.append(StateSpace([[-1.0, 0.0], [0.0, -3.0]], [[1.0], [1.0]], [[-1.0, -2.0]], [[0.5]]))
    # rise-then-decay, 2 e^{-t} - e^{-3t} and e^{-t} - e^{-2t}
    out.append(StateSpace([[-1.0, 0.0], [0.0, -3.0]], [[1.0], [1.0]], [[2.0, -1.0]], [[0.0]]))
    out.append(StateSpace([[-1.0, 0.0], [0.0, -2.0]], [[1.0], [1.0]], [[1.0, -1.0]], [[0.0]]))
    # non-symmetric MIMO response
    out.append(StateSpace([[-1.0, 0.0], [0.0, -2.0]], np.eye(2), [[1.0, 0.6], [-0.6, 1.0]], np.zeros((2, 2))))
    # indefinite residue in a MIMO pole
    out.append(StateSpace([[-1.0, 0.0], [0.0, -2.0]], np.eye(2), np.diag([1.0, -1.0]), np.eye(2)))
    # damped rotation with three states
    out.append(StateSpace([[-0.2, 2.0, 0.0], [-2.0, -0.2, 0.0], [0.0, 0.0, -1.0]],
                          [[1.0], [0.0], [1.0]], [[1.0, 0.0, 1.0]], [[0.0]]))
    return out


# -- series-parallel RL networks ---------------------------------------------

class _SP:
    def __init__(self, rng, max_edges, p_inductor=0.4):
        self.rng = rng
        self.edges = []
        self.rot = {}
        self.nodes = 0
        self.max_edges = max_edges
        self.p_inductor = p_inductor

    def node(self):
        self.nodes += 1
        return f"n{self.nodes}"

    def build(self, s, t, budget):
        """Returns ``(s_list, t_list, Z)`` with ``Z`` a callable impedance."""
        if budget == 1 or self.rng.uniform() < 0.25:
            name = f"E{len(self.edges) + 1}"
            if self.rng.uniform() < self.p_inductor:
                val = float(self.rng.uniform(0.2, 3.0))
                kind, Z = "L", (lambda s_, v=val: v * s_)
            else:
                val = float(self.rng.uniform(0.2, 5.0))
                kind, Z = "R", (lambda s_, v=val: v + 0 * s_)
            name = ("R" if kind == "R" else "L") + name[1:]
            self.edges.append(Edge(name, kind, s, t, val))
            return [name], [name], Z
        k = int(self.rng.integers(1, budget))
        if self.rng.uniform() < 0.5:
            xs, xt, Zx = self.build(s, t, k)
            ys, yt, Zy = self.build(s, t, budget - k)
            return ys + xs, xt + yt, (lambda s_: Zx(s_) * Zy(s_) / (Zx(s_) + Zy(s_)))
        m = self.node()
        xs, xt, Zx = self.build(s, m, k)
        ys, yt, Zy = self.build(m, t, budget - k)
        self.rot[m] = ys + xt
        return xs, yt, (lambda s_: Zx(s_) + Zy(s_))


def random_sp_network(rng, max_edges=12, p_inductor=0.4):
    """Random series-parallel RL one-port with a planar rotation system.

    Returns ``(netlist, Z)`` where ``Z(s)`` is the port impedance from
    recursive series/parallel lumping.
    """
    sp = _SP(rng, max_edges, p_inductor)
    budget = int(rng.integers(1, max_edges + 1))
    s_list, t_list, Z = sp.build("s", "t", budget)
    port = Port("P", "s", "t")
    rot = {"s": tuple([port.token] + s_list), "t": tuple(t_list + [port.token])}
    rot.update({k: tuple(v) for k, v in sp.rot.items()})
    nodes = ["s", "t"] + [f"n{i}" for i in range(1, sp.nodes + 1)]
    return Netlist(tuple(nodes), tuple(sp.edges), port, rot), Z


def lumped_dc_impedance(net):
    """DC port impedance by series/parallel reduction with inductors shorted.

    Independent of the nodal model: collapses inductors, then repeatedly
    merges parallel resistors and eliminates degree-2 internal nodes.
    Returns None if the reduction does not finish (not series-parallel).
    """
    parent = {v: v for v in net.nodes}

    def find(v):
        while parent[v] != v:
            v = parent[v]
        return v

    for e in net.inductors:
        parent[find(e.a)] = find(e.b)
    s, t = find(net.port.plus), find(net.port.minus)
    if s == t:
        return 0.0
    edges = [[find(e.a), find(e.b), e.value] for e in net.resistors if find(e.a) != find(e.b)]
    changed = True
    while changed:
        changed = False
        merged = {}
        for a, b, r in edges:
            key = (min(a, b), max(a, b))
            merged[key] = r if key not in merged else merged[key] * r / (merged[key] + r)
        changed |= len(merged) != len(edges)
        edges = [[a, b, r] for (a, b), r in merged.items()]
        deg = {}
        for a, b, _ in edges:
            deg.setdefault(a, []).append((a, b))
            deg.setdefault(b, []).append((a, b))
        for v, inc in deg.items():
            if v in (s, t):
                continue
            if len(inc) == 1:
                edges = [e for e in edges if v not in e[:2]]
                changed = True
                break
            if len(inc) == 2:
                e1, e2 = [e for e in edges if v in e[:2]]
                o1 = e1[0] if e1[1] == v else e1[1]
                o2 = e2[0] if e2[1] == v else e2[1]
                edges = [e for e in edges if v not in e[:2]] + [[o1, o2, e1[2] + e2[2]]]
                changed = True
                break
    if len(edges) == 1 and {edges[0][0], edges[0][1]} == {s, t}:
        return edges[0][2]
    return None

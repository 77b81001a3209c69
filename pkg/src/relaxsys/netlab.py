"""RL one-port networks: netlist I/O, nodal models, dual controllers and the
least-squares circuit.

Netlist grammar (one item per line, ``#`` starts a comment)::

    R <name> <nodeA> <nodeB> <ohms>
    L <name> <nodeA> <nodeB> <henries>
    PORT <name> <node+> <node->
    ROT <node> <edge> <edge> ...      # counterclockwise incident edges

In ``ROT`` lines the port is written ``PORT:<name>``; a self-loop is listed
twice.  The port is driven by its voltage ``v`` and observed through the
current ``i`` flowing into ``node+``, so the model is the port admittance
and its DC value ``G(0)`` is a conductance.
"""

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .config import DEFAULT_TOL
from .errors import NotPlanar, NotResistivelyGrounded, ParseError, ValidationError
from .realization import StateSpace, StorageMatrix

__all__ = ["Edge", "Port", "Netlist", "NetworkModel", "LsqCircuit", "parse_netlist",
           "format_netlist", "build_model", "port_admittance", "port_resistance",
           "contract_inductors", "trace_faces", "dual_controller", "lsq_solve"]

KINDS = ("R", "L")


@dataclass(frozen=True)
class Edge:
    name: str
    kind: str
    a: str
    b: str
    value: float


@dataclass(frozen=True)
class Port:
    name: str
    plus: str
    minus: str

    @property
    def token(self):
        return f"PORT:{self.name}"


@dataclass(frozen=True, eq=False)
class Netlist:
    nodes: tuple
    edges: tuple
    port: Port
    rotation: dict | None = None
    comments: tuple = field(default=())

    def edge(self, name):
        return next(e for e in self.edges if e.name == name)

    @property
    def inductors(self):
        return tuple(e for e in self.edges if e.kind == "L")

    @property
    def resistors(self):
        return tuple(e for e in self.edges if e.kind == "R")

    def digest(self):
        return hashlib.sha256(format_netlist(self, comments=False).encode()).hexdigest()[:16]


def _incident(edges, port):
    inc = {}
    for e in edges:
        inc.setdefault(e.a, []).append(e.name)
        inc.setdefault(e.b, []).append(e.name)
    inc.setdefault(port.plus, []).append(port.token)
    inc.setdefault(port.minus, []).append(port.token)
    return inc


def _connected(nodes, pairs):
    parent = {v: v for v in nodes}

    def find(v):
        while parent[v] != v:
            parent[v] = parent[parent[v]]
            v = parent[v]
        return v

    for a, b in pairs:
        parent[find(a)] = find(b)
    return len({find(v) for v in nodes}) <= 1


def parse_netlist(text):
    """Parse and validate netlist text.

    Raises
    ------
    ParseError
        Malformed line, unknown keyword, duplicate name or non-positive
        value (carries the 1-based line number).
    ValidationError
        Missing port, dangling port nodes, disconnected graph or an
        inconsistent rotation system.
    """
    edges, names, nodes = [], set(), []
    port, rot, rot_lines, comments = None, {}, {}, []

    def note(node):
        if node not in nodes:
            nodes.append(node)

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line, _, comment = raw.partition("#")
        if not line.strip() and comment.strip() and not edges and port is None:
            comments.append(comment.strip())
        tok = line.split()
        if not tok:
            continue
        key = tok[0].upper()
        if key in KINDS:
            if len(tok) != 5:
                raise ParseError(lineno, f"expected '{key} <name> <nodeA> <nodeB> <value>'")
            _, name, a, b, val = tok
            try:
                value = float(val)
            except ValueError:
                raise ParseError(lineno, f"value {val!r} is not a number") from None
            if not np.isfinite(value) or value <= 0:
                raise ParseError(lineno, f"value of {name} must be positive, got {val}")
            if name in names:
                raise ParseError(lineno, f"duplicate element name {name!r}")
            names.add(name)
            edges.append(Edge(name, key, a, b, value))
            note(a)
            note(b)
        elif key == "PORT":
            if len(tok) != 4:
                raise ParseError(lineno, "expected 'PORT <name> <node+> <node->'")
            if port is not None:
                raise ParseError(lineno, "only one port is supported")
            if tok[2] == tok[3]:
                raise ParseError(lineno, "port terminals must differ")
            port = Port(tok[1], tok[2], tok[3])
        elif key == "ROT":
            if len(tok) < 2:
                raise ParseError(lineno, "expected 'ROT <node> <edge> ...'")
            if tok[1] in rot:
                raise ParseError(lineno, f"duplicate rotation for node {tok[1]!r}")
            rot[tok[1]] = tuple(tok[2:])
            rot_lines[tok[1]] = lineno
        else:
            raise ParseError(lineno, f"unknown keyword {tok[0]!r}")

    if port is None:
        raise ValidationError("netlist has no PORT")
    if port.token[5:] in names:
        raise ValidationError(f"port name {port.name!r} clashes with an element name")
    if not edges:
        raise ValidationError("netlist has no elements, so there is no path between the port terminals")
    for node in (port.plus, port.minus):
        if node not in nodes:
            raise ValidationError(f"port node {node!r} is not connected to any element")
    if not _connected(nodes, [(e.a, e.b) for e in edges] + [(port.plus, port.minus)]):
        raise ValidationError("network graph is not connected")

    rotation = None
    if rot:
        inc = _incident(edges, port)
        for node, order in rot.items():
            if node not in inc:
                raise ParseError(rot_lines[node], f"rotation given for unknown node {node!r}")
            if sorted(order) != sorted(inc[node]):
                raise ParseError(rot_lines[node],
                                 f"rotation at {node!r} must list each incident edge exactly once "
                                 f"(expected {sorted(inc[node])})")
        missing = [v for v in nodes if v not in rot]
        if missing:
            raise ValidationError(f"rotation system missing for nodes {missing}")
        rotation = dict(rot)
    return Netlist(tuple(nodes), tuple(edges), port, rotation, tuple(comments))


def format_netlist(net, comments=True):
    lines = [f"# {c}" for c in net.comments] if comments else []
    for e in net.edges:
        lines.append(f"{e.kind} {e.name} {e.a} {e.b} {e.value!r}")
    lines.append(f"PORT {net.port.name} {net.port.plus} {net.port.minus}")
    if net.rotation:
        for node in net.nodes:
            lines.append(" ".join(["ROT", node, *net.rotation[node]]))
    return "\n".join(lines) + "\n"


# -- nodal model --------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class NetworkModel:
    """Port-admittance model with inductor fluxes as states.

    Input is the port voltage, output the port current; ``Q = diag(1/L)``.
    """
    ss: StateSpace
    Q: StorageMatrix
    edge_index: tuple
    netlist: Netlist


def build_model(net, tol=DEFAULT_TOL):
    """Eliminate node voltages to obtain ``(A, B, C, D)`` in flux coordinates.

    With ``port-`` grounded and ``port+`` held at ``v``, the internal node
    voltages solve ``G_int e = -(b_R v + A_L L^{-1} lam)``; fluxes obey
    ``lam' = A_L^T e + a_L v`` and the port current is read off KCL at
    ``port+``.  ``D`` is the admittance of the purely resistive paths.
    """
    port = net.port
    internal = [v for v in net.nodes if v not in (port.plus, port.minus)]
    idx = {v: i for i, v in enumerate(internal)}
    k = len(internal)

    def incidence(edges):
        Ai = np.zeros((k, len(edges)))
        ap = np.zeros(len(edges))
        for j, e in enumerate(edges):
            for node, sgn in ((e.a, 1.0), (e.b, -1.0)):
                if node in idx:
                    Ai[idx[node], j] += sgn
                elif node == port.plus:
                    ap[j] += sgn
        return Ai, ap

    res, ind = net.resistors, net.inductors
    for e in ind:
        if e.a == e.b:
            raise ValidationError(f"inductor {e.name} forms a self-loop")
    A_R, a_R = incidence(res)
    A_L, a_L = incidence(ind)
    g = np.array([1.0 / e.value for e in res])
    L = np.array([e.value for e in ind])

    G_int = (A_R * g) @ A_R.T
    if k and (np.min(np.abs(np.linalg.eigvalsh(G_int))) <= tol.tau_singular * max(1.0, np.abs(G_int).max())):
        raise NotResistivelyGrounded("some internal node has no resistive path to a port terminal")
    b_R = (A_R * g) @ a_R
    g_pp = float(a_R @ (g * a_R))

    def solve(rhs):
        return np.linalg.solve(G_int, rhs) if k else np.zeros((0,) + np.shape(rhs)[1:])

    Gi_AL = solve(A_L)
    Gi_bR = solve(b_R)
    Linv = 1.0 / L
    N = A_L.T @ Gi_AL
    A = -N * Linv[None, :]
    B = (a_L - A_L.T @ Gi_bR).reshape(-1, 1)
    C = B.T * Linv[None, :]
    D = np.array([[g_pp - b_R @ Gi_bR]])
    ss = StateSpace(A, B, C, D)
    return NetworkModel(ss, StorageMatrix(np.diag(Linv)), tuple(e.name for e in ind), net)


def port_admittance(net, tol=DEFAULT_TOL):
    """DC port admittance ``G(0)`` by nodal analysis with inductors shorted.

    Works directly on the resistive graph, so lossless inductor loops (which
    make the flux model's ``A`` singular) are handled.  Returns ``inf`` when
    inductors short the port.
    """
    parent = {v: v for v in net.nodes}

    def find(v):
        while parent[v] != v:
            v = parent[v]
        return v

    for e in net.inductors:
        parent[find(e.a)] = find(e.b)
    plus, minus = find(net.port.plus), find(net.port.minus)
    if plus == minus:
        return np.inf
    # restrict to the resistive component containing port+
    adj = {}
    for e in net.resistors:
        a, b = find(e.a), find(e.b)
        if a != b:
            adj.setdefault(a, []).append(b)
            adj.setdefault(b, []).append(a)
    seen, stack = {plus}, [plus]
    while stack:
        for w in adj.get(stack.pop(), []):
            if w not in seen:
                seen.add(w)
                stack.append(w)
    if minus not in seen:
        return 0.0
    others = sorted(seen - {plus, minus})
    idx = {v: i for i, v in enumerate(others)}
    k = len(others)
    G = np.zeros((k, k))
    rhs = np.zeros(k)
    i_plus = 0.0
    for e in net.resistors:
        a, b = find(e.a), find(e.b)
        if a == b or a not in seen:
            continue
        g = 1.0 / e.value
        for x, y in ((a, b), (b, a)):
            if x in idx:
                G[idx[x], idx[x]] += g
                if y in idx:
                    G[idx[x], idx[y]] -= g
                elif y == plus:
                    rhs[idx[x]] += g
        if plus in (a, b):
            i_plus += g
    e_int = np.linalg.solve(G, rhs) if k else rhs
    # current leaving port+ with port+ at 1 V and port- at 0 V
    current = i_plus
    for e in net.resistors:
        a, b = find(e.a), find(e.b)
        if a == b or plus not in (a, b):
            continue
        other = b if a == plus else a
        if other in idx:
            current -= e_int[idx[other]] / e.value
    return float(current)


def port_resistance(net, tol=DEFAULT_TOL):
    return 1.0 / port_admittance(net, tol)


# -- planar duality -----------------------------------------------------------

def _darts_from_rotation(net):
    # rotation entries become (edge, end): end 0 sits at edge.a, end 1 at edge.b;
    # for a self-loop the first occurrence is taken as end 0
    ends = {e.name: (e.a, e.b) for e in net.edges}
    ends[net.port.token] = (net.port.plus, net.port.minus)
    rot = {}
    for node, order in net.rotation.items():
        seen = {}
        darts = []
        for name in order:
            a, b = ends[name]
            if a == b:
                end = seen.get(name, -1) + 1
                seen[name] = end
            else:
                end = 0 if node == a else 1
            darts.append((name, end))
        rot[node] = darts
    return rot, ends


def contract_inductors(net):
    """Contract every inductor in the embedding.

    Returns the rotation system of the contracted graph (keyed by a
    representative node) and a map from each original node to its
    representative.  Inductors that have become self-loops are removed
    instead of contracted.
    """
    if net.rotation is None:
        raise ValidationError("dual construction needs a rotation system (ROT lines)")
    rot, ends = _darts_from_rotation(net)
    parent = {v: v for v in net.nodes}

    def find(v):
        while parent[v] != v:
            v = parent[v]
        return v

    for e in net.inductors:
        u, v = find(e.a), find(e.b)
        if u == v:
            rot[u] = [d for d in rot[u] if d[0] != e.name]
            continue
        iu = rot[u].index((e.name, 0))
        iv = rot[v].index((e.name, 1))
        seq_u = rot[u][iu + 1:] + rot[u][:iu]
        seq_v = rot[v][iv + 1:] + rot[v][:iv]
        parent[v] = u
        rot[u] = seq_u + seq_v
        del rot[v]
    return rot, {v: find(v) for v in net.nodes}


def trace_faces(rot):
    """Faces of a rotation system as lists of darts ``(edge, end)``."""
    pos = {}
    for node, darts in rot.items():
        for i, d in enumerate(darts):
            pos[d] = (node, i)
    face_of, faces = {}, []
    for start in pos:
        if start in face_of:
            continue
        walk, d = [], start
        while d not in face_of:
            face_of[d] = len(faces)
            walk.append(d)
            node, i = pos[(d[0], 1 - d[1])]
            ring = rot[node]
            d = ring[(i + 1) % len(ring)]
        if d != start:
            raise NotPlanar("face tracing did not close; rotation system is inconsistent")
        faces.append(walk)
    return faces, face_of


def dual_controller(net, alpha, tol=DEFAULT_TOL):
    """Resistive controller netlist from the planar dual of the DC network.

    Inductors are contracted, the port is kept as an edge and the dual graph
    is traced from the rotation system.  A resistor ``R`` becomes a dual
    resistor ``1/(alpha R)`` and the dual of the port edge is the new port,
    so the emitted one-port has resistance ``G(0)/alpha``, the problem-1
    gain.  Connected across the plant port (``i + I_c = 0``, ``v = V_c``)
    it enforces ``v = -(G(0)/alpha) i``.
    """
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    rot, rep = contract_inductors(net)
    token = net.port.token
    if rep[net.port.plus] == rep[net.port.minus]:
        raise ValidationError("port terminals are shorted by inductors; G(0) is unbounded")
    faces, face_of = trace_faces(rot)
    V = len(rot)
    E = len(net.resistors) + 1
    F = len(faces)
    if V - E + F != 2:
        raise NotPlanar(f"Euler check failed: V - E + F = {V - E + F} (V={V}, E={E}, F={F})")

    fname = [f"f{i}" for i in range(F)]
    edges = tuple(Edge(e.name, "R", fname[face_of[(e.name, 0)]], fname[face_of[(e.name, 1)]],
                       1.0 / (alpha * e.value)) for e in net.resistors)
    port = Port(net.port.name, fname[face_of[(token, 0)]], fname[face_of[(token, 1)]])
    rotation = {fname[i]: tuple(d[0] if d[0] != token else token for d in walk)
                for i, walk in enumerate(faces)}
    comments = (f"dual controller for source network {net.digest()}",
                f"alpha = {alpha!r}; each resistor R maps to 1/(alpha*R)",
                "port resistance R_c = G(0)/alpha; connect across the plant port (v = -R_c i)")
    return Netlist(tuple(fname), edges, port, rotation, comments)


# -- least squares by circuit -------------------------------------------------

@dataclass(frozen=True, eq=False)
class LsqCircuit:
    """Transformer coupling ``A_mat``, resistance ``alpha``, source currents ``b``."""
    A_mat: np.ndarray
    alpha: float
    b: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.array(self.A_mat, dtype=float))
        b = np.array(self.b, dtype=float).reshape(-1)
        if b.size != A.shape[0]:
            raise ValueError(f"b has {b.size} entries, A has {A.shape[0]} rows")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        object.__setattr__(self, "A_mat", A)
        object.__setattr__(self, "b", b)

    def plant(self):
        """``q' = A I1 + w``, ``V1 = A^T q`` with storage ``Q = I``."""
        A = self.A_mat
        n, m = A.shape
        return StateSpace(np.zeros((n, n)), A, A.T, np.zeros((m, m)))

    def slowest_rate(self):
        lam = np.linalg.eigvalsh(self.A_mat @ self.A_mat.T) / self.alpha
        pos = lam[lam > max(lam.max(), 0) * max(self.A_mat.shape) * np.finfo(float).eps * 10]
        return float(pos.min()) if pos.size else 0.0


def lsq_solve(circuit, horizon=None, dt=None, tol=DEFAULT_TOL):
    """Integrate the least-squares circuit under a step of source current ``b``.

    The circuit is the lossless plant closed by the resistive law
    ``I1 = -V1/alpha``.  The returned ``x_hat`` is the controller current
    ``I1`` at the horizon, which settles at ``-pinv(A) b``, the minimum-norm
    minimiser of ``||A x + b||``; ``V1`` settles at ``alpha pinv(A) b``.
    """
    from .analysis import Step, close_loop, simulate
    from .relaxation import check_relaxation
    from .synthesis import synth_p2

    plant = circuit.plant()
    rate = circuit.slowest_rate()
    if rate == 0.0:
        raise ValueError("A is zero; nothing to solve")
    needed = 20.0 / rate
    if horizon is None:
        horizon = needed
    elif horizon < needed * (1 - 1e-12):
        raise ValueError(f"horizon {horizon} is shorter than 20 slowest time constants ({needed:.6g})")
    cert = check_relaxation(plant, tol, Q=np.eye(plant.n))
    ctrl = synth_p2(plant, circuit.alpha, cert)
    cl = close_loop(plant, ctrl)
    trace = simulate(cl, Step(tuple(circuit.b)), horizon, dt)
    x_hat = trace.u[-1].copy()
    v1 = trace.y[-1].copy()
    pinv_sol = -np.linalg.pinv(circuit.A_mat) @ circuit.b
    return {
        "x_hat": x_hat,
        "V1": v1,
        "trace": trace,
        "residual": float(np.linalg.norm(circuit.A_mat @ x_hat + circuit.b)),
        "distance_to_pinv": float(np.linalg.norm(x_hat - pinv_sol)),
        "horizon": float(horizon),
    }

"""Gibbs measures on finite pieces of the colored half-quadrant graph.

Vertices are ``(i, j)`` with row ``i >= 1`` (row 1 on top) and column
``j >= 1``.  Directed edges ``v1 -> v2`` carry a color; the weight of an edge
is ``W_color(u_{v1} - u_{v2})`` with

    blue   exp(theta x - e^x)          black  exp(-e^x)
    gray   exp(alpha x - e^x)          yellow exp((theta + alpha) x - e^x)

Edges (for every row i >= 1, p >= 1):

    blue    (i, 2p+1) -> (i, 2p),  (i, 2p+1) -> (i, 2p+2)
    black   (i+1, 2p) -> (i, 2p+1);  (i+1, 2p) -> (i, 2p-1) for p >= 2
    left    (i, 1) -> (i, 2)     blue if i is odd, yellow if i is even
            (i+1, 2) -> (i, 1)   gray if i is odd, black if i is even

Every full conditional is a log-GIG density ``A t - e^{t+p} - e^{q-t}``,
sampled by numeric inversion of its CDF (see ``_draw``).  Sampled values are
snapped to a dyadic lattice of mesh 2**-36, so that translating all boundary
values by a dyadic constant translates every sampled value exactly.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .distributions import ParameterError, PolymerParams, f_theta_variate
from .rng import RngStream, new_state, uniform

BLUE, BLACK, GRAY, YELLOW = "Blue", "Black", "Gray", "Yellow"
COLORS = (BLUE, BLACK, GRAY, YELLOW)
LATTICE = 2.0 ** 36
DROP = 40.0
DROP_WIDE = 60.0
NCELL = 512
END_CELL_TOL = 1e-6
NEWTON_STEPS = 60

Vertex = tuple


def color_coefficient(color: str, params: PolymerParams) -> float:
    return {
        BLUE: params.theta,
        BLACK: 0.0,
        GRAY: params.alpha,
        YELLOW: params.theta + params.alpha,
    }[color]


def log_edge_weight(color: str, x, params: PolymerParams):
    return color_coefficient(color, params) * x - np.exp(x)


def incident_edges(v: Vertex):
    """All edges of the infinite graph touching ``v``, as (tail, head, color)."""
    i, j = v
    out = []
    # v as tail
    if j == 1:
        out.append(((i, 1), (i, 2), BLUE if i % 2 == 1 else YELLOW))
    elif j % 2 == 1:
        out.append(((i, j), (i, j - 1), BLUE))
        out.append(((i, j), (i, j + 1), BLUE))
    else:
        if i >= 2:
            out.append(((i, j), (i - 1, j + 1), BLACK))
            if j >= 4:
                out.append(((i, j), (i - 1, j - 1), BLACK))
            else:
                out.append(((i, 2), (i - 1, 1), GRAY if (i - 1) % 2 == 1 else BLACK))
    # v as head
    if j % 2 == 0:
        out.append(((i, j + 1), (i, j), BLUE))
        if j >= 4:
            out.append(((i, j - 1), (i, j), BLUE))
        else:
            out.append(((i, 1), (i, 2), BLUE if i % 2 == 1 else YELLOW))
    else:
        if j >= 3:
            out.append(((i + 1, j - 1), (i, j), BLACK))
            out.append(((i + 1, j + 1), (i, j), BLACK))
        else:
            out.append(((i + 1, 2), (i, 1), GRAY if i % 2 == 1 else BLACK))
    return out


def boundary_of(interior) -> set:
    """Vertices outside ``interior`` joined to it by an edge."""
    interior = set(interior)
    out = set()
    for v in interior:
        for a, b, _ in incident_edges(v):
            for w in (a, b):
                if w not in interior:
                    out.add(w)
    return out


def snap(x):
    return np.rint(np.asarray(x, dtype=float) * LATTICE) / LATTICE


class DomainError(ValueError):
    pass


@dataclass
class GibbsDomain:
    """Interior vertices, boundary values (finite or -inf) and colored edges."""

    params: PolymerParams
    interior: list
    boundary: dict
    edges: list
    kind: str = "Rect"
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.interior = sorted(tuple(v) for v in self.interior)
        self.boundary = {tuple(k): float(v) for k, v in self.boundary.items()}
        self._validate()
        self._compile()

    @classmethod
    def from_vertices(cls, params: PolymerParams, interior, boundary: dict, kind: str = "Rect",
                      meta: dict | None = None) -> "GibbsDomain":
        """Build the domain induced by the graph on ``interior``; ``boundary``
        must assign a value to exactly the boundary vertex set."""
        interior = sorted({tuple(v) for v in interior})
        if not interior:
            raise DomainError("empty interior")
        for v in interior:
            if len(v) != 2 or v[0] < 1 or v[1] < 1:
                raise DomainError(f"malformed vertex {v}")
        need = boundary_of(interior)
        have = {tuple(k) for k in boundary}
        missing = need - have
        extra = have - need
        if missing:
            raise DomainError(f"missing boundary values for {sorted(missing)}")
        if extra:
            raise DomainError(f"boundary values given for non-boundary vertices {sorted(extra)}")
        iset = set(interior)
        edges = []
        seen = set()
        for v in interior:
            for a, b, c in incident_edges(v):
                if (a, b) in seen:
                    continue
                seen.add((a, b))
                if a not in iset and b not in iset:
                    continue
                if a not in iset and boundary[a] == -np.inf:
                    if c != BLACK:
                        raise DomainError(f"-inf boundary at {a} on a {c} edge")
                    continue
                edges.append((a, b, c))
        return cls(params, interior, dict(boundary), edges, kind, meta or {})

    def _validate(self) -> None:
        iset = set(self.interior)
        for v, x in self.boundary.items():
            if v in iset:
                raise DomainError(f"{v} is both interior and boundary")
            if np.isnan(x) or x == np.inf:
                raise DomainError(f"illegal boundary value {x} at {v}")
        for a, b, c in self.edges:
            if c not in COLORS:
                raise DomainError(f"unknown color {c}")
            if a not in iset and b not in iset:
                raise DomainError("edge with both endpoints on the boundary")
            for w in (a, b):
                if w not in iset and w not in self.boundary:
                    raise DomainError(f"edge endpoint {w} has no value")
            if b not in iset and self.boundary[b] == -np.inf:
                raise DomainError(f"-inf boundary at the head of an edge ({b})")
            if a not in iset and self.boundary[a] == -np.inf:
                raise DomainError(f"-inf boundary on a kept edge ({a})")

    def _compile(self) -> None:
        """CSR arrays for the kernels; interior first (sweep order), then the
        finite boundary vertices."""
        self.index = {v: k for k, v in enumerate(self.interior)}
        fin = sorted(v for v, x in self.boundary.items() if np.isfinite(x))
        for v in fin:
            self.index[v] = len(self.index)
        self.n_int = len(self.interior)
        self.bnd_vertices = fin
        inc = [[] for _ in range(self.n_int)]
        for a, b, c in self.edges:
            coef = color_coefficient(c, self.params)
            if a in self.index and self.index[a] < self.n_int:
                inc[self.index[a]].append((self.index[b], coef, 1))
            if b in self.index and self.index[b] < self.n_int:
                inc[self.index[b]].append((self.index[a], coef, -1))
        ptr = np.zeros(self.n_int + 1, dtype=np.int64)
        nbr, co, role = [], [], []
        for k, lst in enumerate(inc):
            if not lst:
                raise DomainError(f"interior vertex {self.interior[k]} has no edges")
            ptr[k + 1] = ptr[k] + len(lst)
            for w, cf, rl in lst:
                nbr.append(w)
                co.append(cf)
                role.append(rl)
        self.ptr = ptr
        self.nbr = np.array(nbr, dtype=np.int64)
        self.coef = np.array(co, dtype=float)
        self.role = np.array(role, dtype=np.int64)

    def boundary_array(self, boundary: dict | None = None) -> np.ndarray:
        b = self.boundary if boundary is None else {tuple(k): float(v) for k, v in boundary.items()}
        return snap(np.array([b[v] for v in self.bnd_vertices], dtype=float))

    def with_boundary(self, boundary: dict) -> "GibbsDomain":
        new = dict(self.boundary)
        for k, v in boundary.items():
            k = tuple(k)
            if k not in new:
                raise DomainError(f"{k} is not a boundary vertex")
            new[k] = float(v)
        return GibbsDomain(self.params, self.interior, new, self.edges, self.kind, dict(self.meta))

    def color_counts(self) -> dict:
        out = {c: 0 for c in COLORS}
        for _, _, c in self.edges:
            out[c] += 1
        return out

    def to_dict(self) -> dict:
        def val(x):
            return "-inf" if x == -np.inf else x

        return {
            "kind": self.kind,
            "meta": self.meta,
            "theta": self.params.theta,
            "alpha": self.params.alpha,
            "interior": [list(v) for v in self.interior],
            "boundary": [[v[0], v[1], val(x)] for v, x in sorted(self.boundary.items())],
            "edges": [[list(a), list(b), c] for a, b, c in sorted(self.edges)],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "GibbsDomain":
        params = PolymerParams(d["theta"], d["alpha"])
        bnd = {(i, j): (-np.inf if x == "-inf" else float(x)) for i, j, x in d["boundary"]}
        edges = [(tuple(a), tuple(b), c) for a, b, c in d["edges"]]
        return cls(params, [tuple(v) for v in d["interior"]], bnd, edges, d.get("kind", "Rect"),
                   d.get("meta", {}))


def _rows(i: int, T: int) -> list:
    """Row i of a two-row strip of width T: odd rows stop at 2T-2, even at 2T-1."""
    last = 2 * T - 2 if i % 2 == 1 else 2 * T - 1
    return [(i, j) for j in range(1, last + 1)]


def phi_domain(params: PolymerParams, T: int, a: float, b: float, c=None) -> GibbsDomain:
    """Rows 1-2 of width T with right boundary (a, b) and bottom row c
    (``c=None`` gives the interacting random walk: bottom row at -inf)."""
    if T < 1:
        raise DomainError("T must be at least 1")
    c = np.full(T, -np.inf) if c is None else np.asarray(c, dtype=float)
    if c.shape != (T,):
        raise DomainError("bottom row must have T entries")
    interior = _rows(1, T) + _rows(2, T)
    bnd = {(1, 2 * T - 1): a, (2, 2 * T): b}
    bnd.update({(3, 2 * j): c[j - 1] for j in range(1, T + 1)})
    kind = "IRW" if np.all(c == -np.inf) else "Phi"
    return GibbsDomain.from_vertices(params, interior, _restrict(interior, bnd), kind, {"T": T})


def _restrict(interior, bnd: dict) -> dict:
    need = boundary_of(interior)
    return {k: v for k, v in bnd.items() if k in need}


def upsilon_domain(params: PolymerParams, T: int, m: int, a: float, b: float, c) -> GibbsDomain:
    """Rows 2m-1, 2m with right boundary (a, b), top values c_j at
    (2m-2, 2j-1) and -inf below."""
    if m < 2:
        raise DomainError("m must be at least 2 (m = 1 is the Phi domain)")
    c = np.asarray(c, dtype=float)
    if c.shape != (T,) or not np.all(np.isfinite(c)):
        raise DomainError("top row must have T finite entries")
    interior = _rows(2 * m - 1, T) + _rows(2 * m, T)
    bnd = {(2 * m - 1, 2 * T - 1): a, (2 * m, 2 * T): b}
    bnd.update({(2 * m - 2, 2 * j - 1): c[j - 1] for j in range(1, T + 1)})
    bnd.update({(2 * m + 1, 2 * j): -np.inf for j in range(1, T + 1)})
    return GibbsDomain.from_vertices(params, interior, _restrict(interior, bnd), "Upsilon",
                                     {"T": T, "m": m})


def mirw_domain(params: PolymerParams, m: int, T: int, y_odd, y_even, y_top) -> GibbsDomain:
    """2m rows of width T; right boundary ``y_odd[k]`` at (2k+1, 2T-1),
    ``y_even[k]`` at (2k+2, 2T) and ``y_top[k]`` at (2k+3, 2T); -inf below."""
    y_odd, y_even, y_top = (np.asarray(x, dtype=float) for x in (y_odd, y_even, y_top))
    if y_odd.shape != (m,) or y_even.shape != (m,) or y_top.shape != (m - 1,):
        raise DomainError("boundary arrays must have lengths m, m, m-1")
    interior = []
    for i in range(1, 2 * m + 1):
        interior += _rows(i, T)
    bnd = {}
    for k in range(1, m + 1):
        bnd[(2 * k - 1, 2 * T - 1)] = y_odd[k - 1]
        bnd[(2 * k, 2 * T)] = y_even[k - 1]
        if k >= 2:
            bnd[(2 * k - 1, 2 * T)] = y_top[k - 2]
    bnd.update({(2 * m + 1, 2 * j): -np.inf for j in range(1, T + 1)})
    return GibbsDomain.from_vertices(params, interior, _restrict(interior, bnd), "MIrw",
                                     {"T": T, "m": m})


def build_standard_domain(kind: str, params: PolymerParams, boundary, **size) -> GibbsDomain:
    """``kind`` in {"Rect", "Phi", "IRW", "Upsilon", "MIrw"}.

    Rect: ``size['interior']`` lists vertices and ``boundary`` is a dict.
    Phi/IRW: T; boundary = (a, b[, c]).  Upsilon: T, m; boundary = (a, b, c).
    MIrw: m, T; boundary = (y_odd, y_even, y_top).
    """
    if kind == "Rect":
        return GibbsDomain.from_vertices(params, size["interior"], boundary)
    if kind == "IRW":
        a, b = boundary[:2]
        return phi_domain(params, size["T"], a, b, None)
    if kind == "Phi":
        a, b, c = boundary
        return phi_domain(params, size["T"], a, b, c)
    if kind == "Upsilon":
        a, b, c = boundary
        return upsilon_domain(params, size["T"], size["m"], a, b, c)
    if kind == "MIrw":
        return mirw_domain(params, size["m"], size["T"], *boundary)
    raise DomainError(f"unknown domain kind {kind}")


# --------------------------------------------------------------------------
# full conditionals


def conditional_logdensity(domain: GibbsDomain, state, vertex: Vertex, u: float) -> float:
    """Sum of incident log edge weights at ``vertex`` with value ``u``."""
    vertex = tuple(vertex)
    vals = state if isinstance(state, dict) else domain.state_dict(state)
    tot = 0.0
    for a, b, c in domain.edges:
        if vertex not in (a, b):
            continue
        ua = u if a == vertex else vals.get(a, domain.boundary.get(a))
        ub = u if b == vertex else vals.get(b, domain.boundary.get(b))
        tot += float(log_edge_weight(c, ua - ub, domain.params))
    return tot


def _state_dict(self, values) -> dict:
    return {v: float(values[k]) for k, v in enumerate(self.interior)}


GibbsDomain.state_dict = _state_dict


@njit(cache=True)
def _logd(s, A, lp, lm):
    return A * s - np.exp(s + lp) - np.exp(lm - s)


@njit(cache=True)
def _dlogd(s, A, lp, lm):
    return A - np.exp(s + lp) + np.exp(lm - s)


@njit(cache=True)
def _mode(A, lp, lm):
    if lp == -np.inf or lm == -np.inf:
        return 0.0
    x = 0.5 * A * np.exp(-lp)
    if abs(x) < 1e15:
        return np.arcsinh(x)
    return np.sign(A) * (np.log(abs(A)) - lp)


@njit(cache=True)
def _drop_point(sm, fm, A, lp, lm, D, direction, w):
    s = sm + direction * np.sqrt(2.0 * D) * w
    for _ in range(200):
        g = _logd(s, A, lp, lm) - fm + D
        dg = _dlogd(s, A, lp, lm)
        if dg == 0.0:
            s = s + direction * w
            continue
        step = g / dg
        snew = s - step
        if (snew - sm) * direction <= 0.0:
            snew = 0.5 * (s + sm)
        if abs(snew - s) <= 1e-12 * (1.0 + abs(s)):
            return snew
        s = snew
    return s


_GL_X = np.array([-math.sqrt(0.6), 0.0, math.sqrt(0.6)])
_GL_W = np.array([5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0])


@njit(cache=True)
def _gl(a, b, A, lp, lm, fm):
    """Gauss-Legendre (3 points) integral of exp(logd - fm) over [a, b]."""
    c = 0.5 * (a + b)
    r = 0.5 * (b - a)
    tot = 0.0
    for k in range(3):
        tot += _GL_W[k] * np.exp(_logd(c + r * _GL_X[k], A, lp, lm) - fm)
    return tot * r


@njit(cache=True)
def _cells(lo, hi, A, lp, lm, fm, cum):
    h = (hi - lo) / NCELL
    cum[0] = 0.0
    for k in range(NCELL):
        a = lo + k * h
        cum[k + 1] = cum[k] + _gl(a, a + h, A, lp, lm, fm)
    return h


@njit(cache=True)
def draw_loggig(A, lp, lm, U, cum):
    """Inverse-CDF draw from density ∝ exp(A s - e^{s+lp} - e^{lm-s}).

    Returns (s, status): status 0 ok, 1 not normalizable, 2 end-cell mass
    above tolerance even after widening.
    """
    if lp == -np.inf and lm == -np.inf:
        return 0.0, 1
    if lm == -np.inf and not A > 0.0:
        return 0.0, 1
    if lp == -np.inf and not A < 0.0:
        return 0.0, 1
    sm = _mode(A, lp, lm)
    fm = _logd(sm, A, lp, lm)
    c2 = np.exp(sm + lp) + np.exp(lm - sm)
    w = 1.0 / np.sqrt(c2)
    status = 0
    D = DROP
    for attempt in range(2):
        lo = _drop_point(sm, fm, A, lp, lm, D, -1.0, w)
        hi = _drop_point(sm, fm, A, lp, lm, D, 1.0, w)
        h = _cells(lo, hi, A, lp, lm, fm, cum)
        Z = cum[NCELL]
        if (cum[1] - cum[0]) <= END_CELL_TOL * Z and (cum[NCELL] - cum[NCELL - 1]) <= END_CELL_TOL * Z:
            break
        if attempt == 0:
            D = DROP_WIDE
        else:
            status = 2
    target = U * Z
    k = np.searchsorted(cum, target, side="right") - 1
    if k < 0:
        k = 0
    if k > NCELL - 1:
        k = NCELL - 1
    a = lo + k * h
    b = a + h
    rem = target - cum[k]
    mass = cum[k + 1] - cum[k]
    # safeguarded Newton on the exact within-cell CDF, started from the
    # log-linear interpolant through the cell's end densities
    fa = _logd(a, A, lp, lm) - fm
    fb = _logd(b, A, lp, lm) - fm
    g = (fb - fa) / h
    rho = rem / mass if mass > 0 else 0.5
    if abs(g * h) < 1e-8:
        x = a + h * rho
    else:
        x = a + np.log1p(rho * np.expm1(g * h)) / g
    if not (a <= x <= b):
        x = a + h * rho
    bl = a
    br = b
    for _ in range(NEWTON_STEPS):
        F = _gl(a, x, A, lp, lm, fm) - rem
        if F > 0:
            br = x
        else:
            bl = x
        dens = np.exp(_logd(x, A, lp, lm) - fm)
        xn = x - F / dens if dens > 0 else 0.5 * (bl + br)
        if not (bl <= xn <= br):
            xn = 0.5 * (bl + br)
        if abs(xn - x) <= 1e-15 * (abs(x) + h):
            x = xn
            break
        x = xn
    return x, status


@njit(cache=True)
def _conditional_params(vals, v, ptr, nbr, coef, role):
    """(c_ref, A, s0, lp, lm) so that u = c_ref + s0 + s, s ~ exp(A s - e^{s+lp} - e^{lm-s})."""
    start = ptr[v]
    end = ptr[v + 1]
    cref = vals[nbr[start]]
    A = 0.0
    mp = -np.inf
    mq = -np.inf
    for e in range(start, end):
        d = vals[nbr[e]] - cref
        if role[e] == 1:
            A += coef[e]
            if -d > mp:
                mp = -d
        else:
            A -= coef[e]
            if d > mq:
                mq = d
    sp = 0.0
    sq = 0.0
    for e in range(start, end):
        d = vals[nbr[e]] - cref
        if role[e] == 1:
            sp += np.exp(-d - mp)
        else:
            sq += np.exp(d - mq)
    p = mp + np.log(sp) if mp > -np.inf else -np.inf
    q = mq + np.log(sq) if mq > -np.inf else -np.inf
    if p > -np.inf and q > -np.inf:
        s0 = 0.5 * (q - p)
        lk = 0.5 * (p + q)
        return cref, A, s0, lk, lk
    if q == -np.inf:
        # A t - e^{t+p}: centre at the mode t = log A - p when A > 0
        s0 = (np.log(A) - p) if A > 0 else -p
        return cref, A, s0, (np.log(A) if A > 0 else 0.0), -np.inf
    s0 = (q - np.log(-A)) if A < 0 else q
    return cref, A, s0, -np.inf, (np.log(-A) if A < 0 else 0.0)


@njit(cache=True)
def update_vertex(vals, v, ptr, nbr, coef, role, U, cum):
    cref, A, s0, lp, lm = _conditional_params(vals, v, ptr, nbr, coef, role)
    s, status = draw_loggig(A, lp, lm, U, cum)
    t = np.rint((s0 + s) * LATTICE) / LATTICE
    return cref + t, status


@njit(cache=True)
def _sweep(vals, n_int, ptr, nbr, coef, role, state, cum):
    bad = 0
    for v in range(n_int):
        U = uniform(state)
        x, st = update_vertex(vals, v, ptr, nbr, coef, role, U, cum)
        vals[v] = x
        if st != 0:
            bad += 1
    return bad


@njit(cache=True)
def _run_chains(init, n_int, ptr, nbr, coef, role, seed, base, burn, thin, nsamp):
    C = init.shape[0]
    out = np.empty((C, nsamp, n_int))
    cum = np.empty(NCELL + 1)
    bad = 0
    for c in range(C):
        state = new_state(seed, base + np.uint64(c))
        vals = init[c].copy()
        for _ in range(burn):
            bad += _sweep(vals, n_int, ptr, nbr, coef, role, state, cum)
        for k in range(nsamp):
            for _ in range(thin):
                bad += _sweep(vals, n_int, ptr, nbr, coef, role, state, cum)
            for v in range(n_int):
                out[c, k, v] = vals[v]
    return out, bad


@njit(cache=True)
def _run_coupled(lo, hi, n_int, ptr, nbr, coef, role, state, sweeps):
    cum = np.empty(NCELL + 1)
    viol = 0
    worst = 0.0
    first = -1
    for sw in range(sweeps):
        for v in range(n_int):
            U = uniform(state)
            x, _ = update_vertex(lo, v, ptr, nbr, coef, role, U, cum)
            y, _ = update_vertex(hi, v, ptr, nbr, coef, role, U, cum)
            lo[v] = x
            hi[v] = y
            if x > y:
                viol += 1
                if x - y > worst:
                    worst = x - y
                if first < 0:
                    first = sw
    return viol, worst, first


# --------------------------------------------------------------------------
# states and runners


@dataclass
class GibbsState:
    values: np.ndarray
    sweep_count: int = 0

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(self.values)):
            raise ValueError("interior values must be finite")


class CouplingViolation(AssertionError):
    pass


def initial_values(domain: GibbsDomain) -> np.ndarray:
    """Start every interior vertex at the mean of the finite boundary values."""
    b = domain.boundary_array()
    start = float(np.mean(b)) if b.size else 0.0
    return snap(np.full(domain.n_int, start))


def _full(domain: GibbsDomain, interior_vals, boundary=None) -> np.ndarray:
    return np.concatenate([snap(interior_vals), domain.boundary_array(boundary)])


def heat_bath_sweep(domain: GibbsDomain, state: GibbsState, rng: RngStream) -> GibbsState:
    vals = _full(domain, state.values)
    cum = np.empty(NCELL + 1)
    bad = _sweep(vals, domain.n_int, domain.ptr, domain.nbr, domain.coef, domain.role, rng.state, cum)
    if bad:
        raise AssertionError(f"{bad} full conditionals failed the normalization check")
    return GibbsState(vals[: domain.n_int].copy(), state.sweep_count + 1)


def run_sweeps(domain: GibbsDomain, state: GibbsState, sweeps: int, rng: RngStream) -> GibbsState:
    for _ in range(sweeps):
        state = heat_bath_sweep(domain, state, rng)
    return state


def run_coupled_mcmc(domain: GibbsDomain, boundary_low: dict, boundary_high: dict, sweeps: int,
                     rng: RngStream, init_low=None, init_high=None, check: bool = True):
    """Two chains driven by the same uniforms; returns (state_low, state_high, report)."""
    blo = domain.boundary_array(boundary_low)
    bhi = domain.boundary_array(boundary_high)
    if np.any(blo > bhi):
        raise ValueError("boundary_low must be below boundary_high vertexwise")
    il = initial_values(domain) if init_low is None else init_low
    ih = il if init_high is None else init_high
    lo = np.concatenate([snap(il), blo])
    hi = np.concatenate([snap(ih), bhi])
    if np.any(lo[: domain.n_int] > hi[: domain.n_int]):
        raise ValueError("initial states must be ordered")
    viol, worst, first = _run_coupled(lo, hi, domain.n_int, domain.ptr, domain.nbr, domain.coef,
                                      domain.role, rng.state, int(sweeps))
    report = {"violations": int(viol), "worst": float(worst), "first_sweep": int(first)}
    if check and viol:
        raise CouplingViolation(f"order violated {viol} times (first at sweep {first}, worst {worst:.3g})")
    return (GibbsState(lo[: domain.n_int].copy(), sweeps), GibbsState(hi[: domain.n_int].copy(), sweeps),
            report)


@dataclass
class MCMCSamples:
    domain: GibbsDomain
    values: np.ndarray  # (chains, draws, n_int)
    burn: int
    thin: int
    rhat: dict
    failures: int = 0

    def flat(self) -> np.ndarray:
        return self.values.reshape(-1, self.values.shape[-1])

    def column(self, vertex: Vertex) -> np.ndarray:
        return self.values[:, :, self.domain.index[tuple(vertex)]].ravel()

    def chains_of(self, vertex: Vertex) -> np.ndarray:
        return self.values[:, :, self.domain.index[tuple(vertex)]]

    @property
    def converged(self) -> bool:
        return all(r < 1.05 for r in self.rhat.values() if np.isfinite(r))


def run_mcmc(domain: GibbsDomain, burn: int, thin: int, draws: int, chains: int, rng: RngStream,
             monitor=(), init=None) -> MCMCSamples:
    """``chains`` independent chains (stream ``rng.stream_id + c``), each
    recording ``ceil(draws / chains)`` states every ``thin`` sweeps after
    ``burn`` sweeps."""
    from .stats import split_rhat

    per = -(-draws // chains)
    start = initial_values(domain) if init is None else snap(init)
    full = np.tile(np.concatenate([start, domain.boundary_array()]), (chains, 1))
    out, bad = _run_chains(full, domain.n_int, domain.ptr, domain.nbr, domain.coef, domain.role,
                           np.uint64(rng.seed), np.uint64(rng.stream_id), int(burn), int(thin), int(per))
    rhat = {}
    for v in monitor:
        if tuple(v) in domain.index and domain.index[tuple(v)] < domain.n_int:
            rhat[str(tuple(v))] = split_rhat(out[:, :, domain.index[tuple(v)]])
    return MCMCSamples(domain, out, burn, thin, rhat, int(bad))


def irw_observables(T: int) -> list:
    """Convergence monitors L1(1), L2(2), L1(T); only L2(1) exists at T = 1."""
    if T == 1:
        return [(2, 1)]
    return sorted({(1, 1), (2, 2), (1, T)})


def irw_sample(T: int, a: float, b: float, params: PolymerParams, sweeps: int | None = None,
               thin: int | None = None, reps: int = 1000, rng: RngStream | None = None,
               chains: int = 16, strict: bool = False) -> MCMCSamples:
    """Heat-bath samples from the interacting random walk on Phi(T) with
    right boundary (a, b); ``sweeps`` is the burn-in (default 200 T)."""
    burn = 200 * T if sweeps is None else int(sweeps)
    thin = T if thin is None else int(thin)
    if burn < 200 * T and sweeps is not None and strict:
        raise ParameterError("burn-in below 200 T")
    if thin < T:
        raise ParameterError("thin must be at least T")
    domain = phi_domain(params, T, a, b, None)
    rng = rng or RngStream(0)
    chains = max(1, min(chains, reps))
    s = run_mcmc(domain, burn, thin, reps, chains, rng, monitor=irw_observables(T))
    if strict and not s.converged:
        raise RuntimeError(f"split R-hat above 1.05: {s.rhat}")
    return s


# --------------------------------------------------------------------------
# weighted paired random walks


@njit(cache=True)
def _wprw(T, theta, alpha, x, y, seed, base, R):
    s1 = np.empty((R, T))
    s2 = np.empty((R, T))
    logw = np.empty(R)
    for i in range(R):
        state = new_state(seed, base + np.uint64(i))
        s1[i, T - 1] = x
        for k in range(T - 2, -1, -1):
            s1[i, k] = s1[i, k + 1] - f_theta_variate(state, theta)
        s2[i, T - 1] = y
        for k in range(T - 2, -1, -1):
            s2[i, k] = s2[i, k + 1] - f_theta_variate(state, theta)
        d = s2[i, 0] - s1[i, 0]
        lw = alpha * d - np.exp(d)
        tot = 0.0
        for k in range(T - 1):
            tot += np.exp(s2[i, k] - s1[i, k + 1])
            if k > 0:
                tot += np.exp(s2[i, k] - s1[i, k])
        logw[i] = lw - tot
    return s1, s2, logw


@dataclass
class WPRWSample:
    s1: np.ndarray
    s2: np.ndarray
    log_weights: np.ndarray

    @property
    def weights(self) -> np.ndarray:
        lw = self.log_weights
        return np.exp(lw - lw.max())

    @property
    def ess(self) -> float:
        w = self.weights
        return float(w.sum() ** 2 / np.dot(w, w))


def wprw_importance_sample(T: int, x: float, y: float, params: PolymerParams, reps: int,
                           rng: RngStream) -> WPRWSample:
    """Paired walks pinned at (x, y) at time T, built backwards with f_theta
    steps; log-weight ``log g_alpha(w2(1) - w1(1)) + log W_T`` (up to a
    constant)."""
    import warnings

    if reps < 1000:
        raise ParameterError("reps must be at least 1000")
    params.require_unbound()
    s1, s2, logw = _wprw(int(T), params.theta, params.alpha, float(x), float(y),
                         np.uint64(rng.seed), np.uint64(rng.stream_id), int(reps))
    out = WPRWSample(s1, s2, logw)
    if out.ess < 50:
        warnings.warn(f"WPRW effective sample size {out.ess:.1f} below 50", RuntimeWarning)
    return out


def phi_bottom_energy(L2: np.ndarray, c) -> np.ndarray:
    """``H(c)`` for IRW samples: ``L2`` holds row-2 values at columns 1..2T-1
    (shape (..., 2T-1)), ``c`` the T bottom values."""
    c = np.asarray(c, dtype=float)
    T = c.size
    L2 = np.asarray(L2)
    H = np.zeros(L2.shape[:-1])
    for j in range(1, T):
        H = H + np.exp(c[j - 1] - L2[..., 2 * j - 2]) + np.exp(c[j - 1] - L2[..., 2 * j])
    H = H + np.exp(c[T - 1] - L2[..., 2 * T - 2])
    return H

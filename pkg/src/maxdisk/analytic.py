"""Closed-form holomorphic expressions, contour integrals along polylines,
sampled sup-norm checks and the exp-polynomial Runge approximant.

An ``AnalyticFn`` is an immutable DAG.  Shared subtrees (the Gauss map ``g``
appears in every component of a basis change, for instance) are evaluated
once per call thanks to a memo keyed on node identity.
"""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .exceptions import DegreeCapExceeded, EmptyInput, InputRejected, NearPole, PoleOnPath, ToleranceNotMet

POLE_TOL = 1e-12
QUAD_TOL = 1e-11

_ids = itertools.count()


def _c(x) -> complex:
    return complex(x)


class AnalyticFn:
    """Node of a holomorphic expression tree.

    kinds: const, z, add, mul, div, pow, exp, poly.  ``poles`` are the known
    singularities (evaluation refuses to come within POLE_TOL of them),
    ``zeros`` known zeros, used to infer poles of quotients.
    """

    __slots__ = ("kind", "args", "data", "poles", "zeros", "_order", "_uid")

    def __init__(self, kind, args=(), data=None, poles=(), zeros=()):
        self.kind = kind
        self.args = tuple(args)
        self.data = data
        self.poles = tuple(dict.fromkeys(complex(p) for p in poles))
        self.zeros = tuple(dict.fromkeys(complex(p) for p in zeros))
        self._order = None
        self._uid = next(_ids)

    def __setattr__(self, name, value):
        if name in ("_order",) or not hasattr(self, "_uid"):
            object.__setattr__(self, name, value)
        else:
            raise AttributeError("AnalyticFn is immutable")

    # -- arithmetic -------------------------------------------------------
    def __add__(self, other):
        other = as_fn(other)
        if self.kind == "const" and other.kind == "const":
            return const(self.data + other.data)
        zeros = ()
        a1, a2 = _affine(self), _affine(other)
        if a1 is not None and a2 is not None and a1[0] + a2[0] != 0:
            zeros = (-(a1[1] + a2[1]) / (a1[0] + a2[0]),)
        return AnalyticFn("add", (self, other), poles=self.poles + other.poles, zeros=zeros)

    __radd__ = __add__

    def __neg__(self):
        return const(-1.0) * self

    def __sub__(self, other):
        return self + (-as_fn(other))

    def __rsub__(self, other):
        return as_fn(other) + (-self)

    def __mul__(self, other):
        other = as_fn(other)
        if self.kind == "const" and other.kind == "const":
            return const(self.data * other.data)
        return AnalyticFn("mul", (self, other), poles=self.poles + other.poles,
                          zeros=self.zeros + other.zeros)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return quotient(self, other)

    def __rtruediv__(self, other):
        return quotient(as_fn(other), self)

    def __pow__(self, n):
        if not isinstance(n, (int, np.integer)):
            raise InputRejected("only integer powers are supported")
        n = int(n)
        poles = self.poles + (self.zeros if n < 0 else ())
        zeros = self.zeros if n > 0 else self.poles
        return AnalyticFn("pow", (self,), data=n, poles=poles, zeros=zeros)

    def __call__(self, z):
        return evaluate(self, z)

    def __repr__(self):
        return f"AnalyticFn({self.kind}, nodes={len(self.topo_order())})"

    # -- traversal --------------------------------------------------------
    def topo_order(self) -> list["AnalyticFn"]:
        """Children before parents, each node once (iterative, no recursion limit)."""
        if self._order is not None:
            return self._order
        order, seen, stack = [], set(), [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if node._uid in seen:
                continue
            seen.add(node._uid)
            stack.append((node, True))
            for a in reversed(node.args):
                if a._uid not in seen:
                    stack.append((a, False))
        self._order = order
        return order

    def is_constant(self) -> bool:
        return all(n.kind != "z" for n in self.topo_order())

    # -- serialization ----------------------------------------------------
    def to_dict(self) -> dict:
        nodes, index = [], {}
        for n in self.topo_order():
            index[n._uid] = len(nodes)
            rec = {"kind": n.kind, "args": [index[a._uid] for a in n.args]}
            if n.kind == "const":
                rec["value"] = [n.data.real, n.data.imag]
            elif n.kind == "pow":
                rec["n"] = n.data
            elif n.kind == "poly":
                rec.update(_poly_to_json(n.data))
            if n.poles:
                rec["poles"] = [[p.real, p.imag] for p in n.poles]
            if n.zeros:
                rec["zeros"] = [[p.real, p.imag] for p in n.zeros]
            nodes.append(rec)
        return {"nodes": nodes}

    @classmethod
    def from_dict(cls, d: dict) -> "AnalyticFn":
        built = []
        for rec in d["nodes"]:
            args = [built[i] for i in rec["args"]]
            kind = rec["kind"]
            if kind == "const":
                data = complex(*rec["value"])
            elif kind == "pow":
                data = int(rec["n"])
            elif kind == "poly":
                data = _poly_from_json(rec)
            else:
                data = None
            poles = [complex(*p) for p in rec.get("poles", [])]
            zeros = [complex(*p) for p in rec.get("zeros", [])]
            built.append(cls(kind, args, data, poles, zeros))
        return built[-1]


@dataclass(frozen=True)
class PolyData:
    """Polynomial in w = (z - center)/scale.  With ``hess`` set the basis is the
    Arnoldi (Vandermonde-with-Arnoldi) basis generated on the fitting points."""

    coeffs: np.ndarray
    center: complex = 0j
    scale: float = 1.0
    hess: np.ndarray | None = None


def _poly_to_json(p: PolyData) -> dict:
    out = {
        "coeffs": [[c.real, c.imag] for c in p.coeffs],
        "center": [p.center.real, p.center.imag],
        "scale": p.scale,
    }
    if p.hess is not None:
        out["hess_re"] = p.hess.real.tolist()
        out["hess_im"] = p.hess.imag.tolist()
    return out


def _poly_from_json(rec: dict) -> PolyData:
    coeffs = np.array([complex(*c) for c in rec["coeffs"]], dtype=complex)
    hess = None
    if "hess_re" in rec:
        hess = np.array(rec["hess_re"], dtype=float) + 1j * np.array(rec["hess_im"], dtype=float)
    return PolyData(coeffs, complex(*rec["center"]), float(rec["scale"]), hess)


def _arnoldi_basis(w: np.ndarray, hess: np.ndarray) -> np.ndarray:
    """Evaluate the Arnoldi basis encoded by ``hess`` at points w."""
    deg = hess.shape[1]
    W = np.empty((w.size, deg + 1), dtype=complex)
    W[:, 0] = 1.0
    for k in range(1, deg + 1):
        v = w * W[:, k - 1]
        v = v - W[:, :k] @ hess[:k, k - 1]
        W[:, k] = v / hess[k, k - 1]
    return W


def _poly_eval(p: PolyData, z: np.ndarray) -> np.ndarray:
    w = (z - p.center) / p.scale
    if p.hess is not None:
        return _arnoldi_basis(w.ravel(), p.hess) @ p.coeffs if w.size else np.zeros(0, complex)
    out = np.zeros_like(w, dtype=complex)
    for c in p.coeffs[::-1]:
        out = out * w + c
    return out


# -- constructors --------------------------------------------------------------

def _affine(fn: AnalyticFn):
    """(a, b) if fn is a*z + b built from z, constants, + and *; else None."""
    k = fn.kind
    if k == "const":
        return 0j, fn.data
    if k == "z":
        return 1 + 0j, 0j
    if k in ("add", "mul") and len(fn.topo_order()) <= 8:
        l, r = _affine(fn.args[0]), _affine(fn.args[1])
        if l is None or r is None:
            return None
        if k == "add":
            return l[0] + r[0], l[1] + r[1]
        if l[0] == 0 or r[0] == 0:
            return l[0] * r[1] + r[0] * l[1], l[1] * r[1]
    return None


def const(c) -> AnalyticFn:
    return AnalyticFn("const", data=_c(c))


_IDENTITY = AnalyticFn("z", zeros=(0j,))


def identity() -> AnalyticFn:
    return _IDENTITY


def as_fn(x) -> AnalyticFn:
    return x if isinstance(x, AnalyticFn) else const(x)


def quotient(num, den, poles=()) -> AnalyticFn:
    num, den = as_fn(num), as_fn(den)
    if den.kind == "const":
        if den.data == 0:
            raise InputRejected("division by the zero constant")
        if num.kind == "const":
            return const(num.data / den.data)
    return AnalyticFn("div", (num, den), poles=tuple(poles) + num.poles + den.zeros,
                      zeros=num.zeros + den.poles)


def linear(a, b) -> AnalyticFn:
    """a*z + b, with its zero recorded."""
    a, b = _c(a), _c(b)
    z = identity()
    node = AnalyticFn("add", (const(a) * z, const(b)), zeros=((-b / a),) if a != 0 else ())
    return node


def fn_exp(m) -> AnalyticFn:
    m = as_fn(m)
    return AnalyticFn("exp", (m,), poles=m.poles)


def polynomial(coeffs, center=0j, scale=1.0, hess=None) -> AnalyticFn:
    """Sum_k coeffs[k] * ((z - center)/scale)^k, or an Arnoldi-basis expansion if ``hess`` is given."""
    c = np.atleast_1d(np.asarray(coeffs, dtype=complex)).copy()
    c.setflags(write=False)
    if hess is not None:
        hess = np.asarray(hess, dtype=complex).copy()
        hess.setflags(write=False)
        if hess.shape != (len(c), len(c) - 1):
            raise InputRejected("Hessenberg shape must be (deg+1, deg)")
    return AnalyticFn("poly", data=PolyData(c, _c(center), float(scale), hess))


def simple_pole_factor(k: float, theta: complex, p: complex) -> AnalyticFn:
    """h(z) = k*theta/(z - p) + 1, pole p, zero p - k*theta."""
    k, theta, p = float(k), _c(theta), _c(p)
    core = quotient(const(k * theta), linear(1.0, -p))
    return AnalyticFn("add", (core, const(1.0)), poles=(p,), zeros=(p - k * theta,))


# -- evaluation ----------------------------------------------------------------

def _check_poles(fn: AnalyticFn, z: np.ndarray, tol: float = POLE_TOL):
    poles = set()
    for n in fn.topo_order():
        poles.update(n.poles)
    for p in poles:
        d = np.abs(z - p)
        if d.size and float(d.min()) <= tol:
            raise NearPole(f"evaluation within {tol:g} of pole {p}")


def evaluate(fn: AnalyticFn, z, check_poles: bool = True):
    """Evaluate the tree at scalar or array z (complex)."""
    za = np.asarray(z, dtype=complex)
    scalar = za.ndim == 0
    flat = za.reshape(-1)
    if check_poles:
        _check_poles(fn, flat)
    memo: dict[int, np.ndarray] = {}
    with np.errstate(all="ignore"):
        for n in fn.topo_order():
            k = n.kind
            if k == "const":
                v = np.full(flat.shape, n.data, dtype=complex)
            elif k == "z":
                v = flat
            elif k == "add":
                v = memo[n.args[0]._uid] + memo[n.args[1]._uid]
            elif k == "mul":
                v = memo[n.args[0]._uid] * memo[n.args[1]._uid]
            elif k == "div":
                v = memo[n.args[0]._uid] / memo[n.args[1]._uid]
            elif k == "pow":
                v = memo[n.args[0]._uid] ** n.data
            elif k == "exp":
                v = np.exp(memo[n.args[0]._uid])
            elif k == "poly":
                v = _poly_eval(n.data, flat)
            else:
                raise InputRejected(f"unknown node kind {k}")
            memo[n._uid] = v
    out = memo[fn._uid].reshape(za.shape)
    return complex(out) if scalar else out


def evaluate_many(fns: Sequence[AnalyticFn], z, check_poles: bool = True) -> np.ndarray:
    """Stack of evaluations, shape (len(fns), *z.shape)."""
    return np.stack([evaluate(f, z, check_poles) for f in fns])


# -- polylines -----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Polyline:
    vertices: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=complex).reshape(-1).copy()
        if v.size < 2:
            raise EmptyInput("a polyline needs at least two vertices")
        if np.any(np.diff(v) == 0):
            raise InputRejected("consecutive polyline vertices must be distinct")
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)

    @classmethod
    def through(cls, points) -> "Polyline":
        """Build from points, dropping consecutive repeats."""
        v = np.asarray(points, dtype=complex).reshape(-1)
        keep = np.concatenate([[True], np.diff(v) != 0])
        return cls(v[keep])

    @property
    def start(self) -> complex:
        return complex(self.vertices[0])

    @property
    def end(self) -> complex:
        return complex(self.vertices[-1])

    @property
    def length(self) -> float:
        return float(np.abs(np.diff(self.vertices)).sum())

    def segments(self):
        v = self.vertices
        return zip(v[:-1], v[1:])

    def reversed(self) -> "Polyline":
        return Polyline(self.vertices[::-1])

    def concat(self, other: "Polyline") -> "Polyline":
        return Polyline.through(np.concatenate([self.vertices, other.vertices]))

    def sample(self, spacing: float) -> np.ndarray:
        """Points along the polyline no more than ``spacing`` apart, vertices included."""
        out = [self.vertices[:1]]
        for a, b in self.segments():
            m = max(1, int(math.ceil(abs(b - a) / spacing)))
            out.append(a + (b - a) * np.arange(1, m + 1) / m)
        return np.concatenate(out)

    def distance_to(self, p: complex) -> float:
        best = math.inf
        for a, b in self.segments():
            best = min(best, _seg_dist(complex(a), complex(b), complex(p)))
        return best


def _seg_dist(a: complex, b: complex, p: complex) -> float:
    d = b - a
    t = ((p - a) * d.conjugate()).real / (abs(d) ** 2)
    t = min(1.0, max(0.0, t))
    return abs(p - (a + t * d))


# -- quadrature ----------------------------------------------------------------

# Kronrod 15-point nodes/weights on [-1, 1] (positive half, last node 0) and the
# embedded 7-point Gauss weights for nodes xgk[1], xgk[3], xgk[5], xgk[7].
_XGK = np.array([
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.0,
])
_WGK = np.array([
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327,
])
_NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])  # 15 nodes, ascending
_WK = np.concatenate([_WGK[:-1], _WGK[::-1]])
_WG15 = np.zeros(15)
_WG15[[1, 3, 5]] = _WG[:3]
_WG15[[9, 11, 13]] = _WG[2::-1]
_WG15[7] = _WG[3]


def gk15_rule():
    """(nodes, kronrod weights, gauss weights on the same 15 nodes)."""
    return _NODES.copy(), _WK.copy(), _WG15.copy()


def _as_vector_callable(fn) -> Callable[[np.ndarray], np.ndarray]:
    if isinstance(fn, AnalyticFn):
        return lambda z: evaluate(fn, z, check_poles=False)[None, :]
    if isinstance(fn, (tuple, list)) and fn and all(isinstance(f, AnalyticFn) for f in fn):
        return lambda z: evaluate_many(fn, z, check_poles=False)
    return lambda z: np.atleast_2d(np.asarray(fn(z), dtype=complex))


def _collect_poles(fn) -> list[complex]:
    fns = [fn] if isinstance(fn, AnalyticFn) else [f for f in fn if isinstance(f, AnalyticFn)] \
        if isinstance(fn, (tuple, list)) else []
    poles = []
    for f in fns:
        for n in f.topo_order():
            poles.extend(n.poles)
    return list(dict.fromkeys(poles))


def _segment_integral(F, a: complex, b: complex, tol: float, max_intervals: int):
    d = b - a

    def rule(lo, hi):
        half = 0.5 * (hi - lo)
        t = lo + half * (_NODES + 1.0)
        vals = F(a + d * t) * d  # (m, 15)
        k = half * (vals @ _WK)
        g = half * (vals @ _WG15)
        err = float(np.max(np.abs(k - g)))
        resabs = float(np.max(np.abs(half * (np.abs(vals) @ _WK))))
        return k, err, resabs

    k, err, ra = rule(0.0, 1.0)
    heap = [(-err, 0.0, 1.0, k, ra)]
    total, total_err, total_abs = k, err, ra
    n = 1
    while True:
        floor = max(tol, 50.0 * np.finfo(float).eps * total_abs)
        if total_err <= floor:
            return total, total_err
        if n >= max_intervals:
            raise ToleranceNotMet(f"error estimate {total_err:.3g} > {floor:.3g} after {n} intervals")
        e, lo, hi, kv, rab = heapq.heappop(heap)
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            raise ToleranceNotMet("interval width underflow")
        k1, e1, r1 = rule(lo, mid)
        k2, e2, r2 = rule(mid, hi)
        total = total - kv + k1 + k2
        total_err = total_err + e + e1 + e2
        total_abs = total_abs - rab + r1 + r2
        heapq.heappush(heap, (-e1, lo, mid, k1, r1))
        heapq.heappush(heap, (-e2, mid, hi, k2, r2))
        n += 1


def integrate(fn, path: Polyline, tol: float = QUAD_TOL, poles=(), max_intervals: int = 4000):
    """Contour integral of fn(w) dw along ``path``.

    ``fn`` is an AnalyticFn, a sequence of them (vector result) or a callable
    mapping a complex array to values of shape (n,) or (m, n).  Adaptive
    Gauss-Kronrod (G7/K15) per segment; the absolute tolerance is shared
    between segments in proportion to their length.
    """
    if not isinstance(path, Polyline):
        path = Polyline.through(path)
    all_poles = list(poles) + _collect_poles(fn)
    for p in all_poles:
        if path.distance_to(p) <= 10 * tol:
            raise PoleOnPath(f"path passes within {10 * tol:g} of pole {p}")
    F = _as_vector_callable(fn)
    L = path.length
    total = None
    for a, b in path.segments():
        part = tol * abs(b - a) / L
        val, _ = _segment_integral(F, complex(a), complex(b), part, max_intervals)
        total = val if total is None else total + val
    if isinstance(fn, AnalyticFn) or (callable(fn) and not isinstance(fn, (tuple, list)) and total.size == 1):
        return complex(total[0])
    return total


def segment(a, b) -> Polyline:
    return Polyline(np.array([a, b], dtype=complex))


# -- sup-norm certification ----------------------------------------------------

@dataclass(frozen=True)
class SupNormCertificate:
    max: float
    argmax: complex
    bound: float
    passed: bool
    n_samples: int
    resolution: float | None = None

    @property
    def margin(self) -> float:
        return self.bound - self.max


def sup_norm_certify(fn, samples, bound: float, resolution: float | None = None) -> SupNormCertificate:
    """Pass iff max |fn| over the samples is strictly below ``bound``."""
    z = np.asarray(samples, dtype=complex).reshape(-1)
    if z.size == 0:
        raise EmptyInput("no samples")
    vals = np.abs(evaluate(fn, z) if isinstance(fn, AnalyticFn) else np.asarray(fn(z)))
    i = int(np.argmax(vals))
    m = float(vals[i])
    return SupNormCertificate(m, complex(z[i]), float(bound), bool(m < bound), int(z.size), resolution)


# -- Runge approximation -------------------------------------------------------

@dataclass(frozen=True)
class RungeReport:
    degree: int
    err_hi: float
    err_lo: float
    min_abs: float
    nu: float
    tau: float
    passed: bool
    scheme: str = "exp(polynomial), weighted least squares in an Arnoldi basis"
    history: tuple = field(default_factory=tuple)


def _arnoldi_fit(w: np.ndarray, target: np.ndarray, weight: np.ndarray, deg: int, lawson: int = 8):
    M = w.size
    Q = np.empty((M, deg + 1), dtype=complex)
    H = np.zeros((deg + 1, deg), dtype=complex)
    Q[:, 0] = 1.0
    for k in range(1, deg + 1):
        v = w * Q[:, k - 1]
        for j in range(k):
            H[j, k - 1] = np.vdot(Q[:, j], v) / M
            v = v - H[j, k - 1] * Q[:, j]
        H[k, k - 1] = np.linalg.norm(v) / math.sqrt(M)
        Q[:, k] = v / H[k, k - 1]
    lw = np.ones(M)
    best = None
    for _ in range(max(1, lawson)):
        sw = np.sqrt(lw) * weight
        c, *_ = np.linalg.lstsq(Q * sw[:, None], target * sw, rcond=None)
        r = np.abs(Q @ c - target) * weight
        if best is None or r.max() < best[0]:
            best = (r.max(), c)
        lw = lw * r
        s = lw.sum()
        if s == 0:
            break
        lw = lw / s
    return best[1], H


def runge_approximant(K_hi, K_lo, tau: float, nu: float, degree_cap: int = 64,
                      return_report: bool = False):
    """Zero-free l = exp(m), m polynomial, with |l - tau| < nu on K_hi and
    |l - 1| < nu on K_lo at every sample."""
    hi = np.asarray(K_hi, dtype=complex).reshape(-1)
    lo = np.asarray(K_lo, dtype=complex).reshape(-1)
    if hi.size == 0 or lo.size == 0:
        raise EmptyInput("both compacts need samples")
    if not (tau > 0 and nu > 0):
        raise InputRejected("tau and nu must be positive")

    def check(l):
        eh = float(np.max(np.abs(evaluate(l, hi) - tau)))
        el = float(np.max(np.abs(evaluate(l, lo) - 1.0)))
        mn = float(min(np.min(np.abs(evaluate(l, hi))), np.min(np.abs(evaluate(l, lo)))))
        return eh, el, mn

    history = []
    zero = fn_exp(polynomial([0.0]))
    if abs(tau - 1.0) < nu:
        eh, el, mn = check(zero)
        rep = RungeReport(0, eh, el, mn, nu, tau, True, history=((0, eh, el),))
        return (zero, rep) if return_report else zero

    pts = np.concatenate([hi, lo])
    center = complex(pts.mean())
    scale = float(np.max(np.abs(pts - center))) or 1.0
    w = (pts - center) / scale
    target = np.concatenate([np.full(hi.size, math.log(tau)), np.zeros(lo.size)]).astype(complex)
    # residual in log space scaled by what each side tolerates
    weight = np.concatenate([np.full(hi.size, tau / nu), np.full(lo.size, 1.0 / nu)])
    for deg in range(1, degree_cap + 1):
        c, H = _arnoldi_fit(w, target, weight, deg)
        l = fn_exp(polynomial(c, center, scale, H))
        eh, el, mn = check(l)
        history.append((deg, eh, el))
        if eh < nu and el < nu and mn > 0:
            rep = RungeReport(deg, eh, el, mn, nu, tau, True, history=tuple(history))
            return (l, rep) if return_report else l
    raise DegreeCapExceeded(f"no degree <= {degree_cap} met nu={nu:g} (last errors {eh:.3g}, {el:.3g})")


def integrate_segments(fn, a, b, tol: float = QUAD_TOL, max_intervals: int = 4000) -> np.ndarray:
    """Integrals of fn over many straight segments a[k] -> b[k] at once.

    One vectorized K15 pass; segments whose Kronrod-Gauss difference exceeds
    the tolerance share are redone adaptively.  Returns shape (m, len(a)).
    """
    a = np.asarray(a, dtype=complex).reshape(-1)
    b = np.asarray(b, dtype=complex).reshape(-1)
    F = _as_vector_callable(fn)
    if a.size == 0:
        return np.zeros((F(np.zeros(1, complex)).shape[0], 0), dtype=complex)
    d = b - a
    t = 0.5 * (_NODES + 1.0)
    z = a[:, None] + d[:, None] * t[None, :]
    vals = F(z.ravel())
    m = vals.shape[0]
    vals = vals.reshape(m, a.size, 15) * d[None, :, None]
    k = 0.5 * (vals @ _WK)
    g = 0.5 * (vals @ _WG15)
    err = np.max(np.abs(k - g), axis=0)
    resabs = np.max(0.5 * (np.abs(vals) @ _WK), axis=0)
    floor = np.maximum(tol, 50.0 * np.finfo(float).eps * resabs)
    redo = np.nonzero(~(err <= floor))[0]
    for j in redo:
        if d[j] == 0:
            k[:, j] = 0
            continue
        val, _ = _segment_integral(F, complex(a[j]), complex(b[j]), tol, max_intervals)
        k[:, j] = val
    k[:, d == 0] = 0
    return k

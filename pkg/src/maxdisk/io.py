"""Run configuration, certificate bundles and mesh export.

Certificates are JSON with the run-dependent metadata (timestamps, timings)
kept under ``meta`` so that ``body`` is byte-identical across reruns of the
same configuration.  Meshes are Wavefront OBJ (vertex/face records only) with
a tab-separated sidecar of per-vertex scalars; floats are written with repr
so a read-back is bit-exact.
"""

from __future__ import annotations

import datetime as _dt
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Optional

import numpy as np
import shapely
from pydantic import BaseModel, ConfigDict, Field, ValidationError
from shapely import wkt

from .certificates import Check, CertificateLog
from .domain import PlanarDomain
from .exceptions import ConfigInvalid, IOFailure
from .shells import r_star
from .weierstrass import ImmersionField, WeierstrassData, metric_factor

FORMAT = "maxdisk-certificate"
MIN_MESH_RES = 8


# -- configuration -----------------------------------------------------------------------

class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    mode: Literal["lemma", "theorem", "verify", "export"] = "theorem"
    # recursion
    s1: float = Field(1.2, gt=1.0)
    stages: int = Field(3, ge=1, le=12)
    D_radius: float = Field(4.0, gt=0)
    m_cap: int = Field(20, ge=1)
    # step
    eps0: float = Field(0.1, gt=0)
    max_retries: int = Field(12, ge=0)
    degree_cap: int = Field(64, ge=1)
    spacing: Optional[float] = Field(None, gt=0)
    # desk step instance
    r1: float = 0.75
    r2: float = 2.2
    b1: float = Field(0.05, gt=0)
    b2: float = Field(1 / 9, gt=0)
    P_half: float = Field(0.4, gt=0)
    O_half: float = Field(0.7, gt=0)
    # output
    mesh_res: Optional[int] = Field(None, ge=MIN_MESH_RES)
    out: str = "maxdisk-out"


def load_config(path=None, **overrides) -> RunConfig:
    """Read a JSON config (or defaults) and apply non-None overrides."""
    data = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text())
        except OSError as err:
            raise ConfigInvalid(f"cannot read config {path}: {err}") from err
        except json.JSONDecodeError as err:
            raise ConfigInvalid(f"config {path} is not valid JSON: {err}") from err
        if not isinstance(data, dict):
            raise ConfigInvalid("config must be a JSON object")
    data.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return RunConfig(**data)
    except ValidationError as err:
        lines = [f"{'.'.join(str(p) for p in e['loc'])}: {e['msg']}" for e in err.errors()]
        raise ConfigInvalid("invalid config\n  " + "\n  ".join(lines)) from err


# -- certificate bundles -------------------------------------------------------------------

def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, complex to [re, im], non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (complex, np.complexfloating)):
        return [_clean(float(obj.real)), _clean(float(obj.imag))]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def bundle(kind: str, body: dict, meta: dict | None = None) -> dict:
    m = {"created": _dt.datetime.now(_dt.timezone.utc).isoformat()}
    m.update(meta or {})
    return {"format": FORMAT, "version": 1, "kind": kind, "body": _clean(body), "meta": _clean(m)}


def dumps_body(doc: dict) -> str:
    return json.dumps(doc["body"], sort_keys=True, indent=1)


def write_bundle(doc: dict, path) -> Path:
    p = Path(path)
    try:
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")
    except OSError as err:
        raise IOFailure(f"cannot write {p}: {err}") from err
    return p


def read_bundle(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as err:
        raise IOFailure(f"cannot read {path}: {err}") from err
    except json.JSONDecodeError as err:
        raise ConfigInvalid(f"{path} is not valid JSON: {err}") from err
    if not isinstance(doc, dict) or doc.get("format") != FORMAT or "body" not in doc:
        raise ConfigInvalid(f"{path} is not a certificate bundle")
    return doc


def domain_record(dom) -> str:
    geom = dom.polygon if isinstance(dom, PlanarDomain) else dom
    return wkt.dumps(geom, rounding_precision=-1)


def domain_from_record(text: str) -> PlanarDomain:
    return PlanarDomain(wkt.loads(text))


def lemma_body(inp, result=None, failure=None) -> dict:
    """Body for a step run; ``failure`` is a RetriesExhausted (or None)."""
    body = {"input": {"r1": inp.r1, "r2": inp.r2, "b1": inp.b1, "b2": inp.b2,
                      "P": domain_record(inp.P), "O": domain_record(inp.O), "X": inp.X.data.to_dict()}}
    if result is not None:
        body.update({"eps0": result.eps0, "checks": result.certificate.to_list(),
                     "Q": domain_record(result.Q), "omega": domain_record(result.omega),
                     "Y": result.Y.data.to_dict(), "history": result.history, "failure": None,
                     "passed": result.certificate.passed})
    else:
        body.update({"checks": [], "history": list(getattr(failure, "history", [])),
                     "failure": {"error": type(failure).__name__, "detail": str(failure)}, "passed": False})
    return body


def theorem_body(run) -> dict:
    stages = []
    for st in run.stages:
        stages.append({"n": st.n, "t_n": st.t, "m0": st.m0, "P": domain_record(st.P), "U": domain_record(st.U),
                       "data": st.psi.data.to_dict(), "checks": st.checks.to_list(), "passed": st.passed,
                       "eps0": None if st.lemma is None else st.lemma.eps0})
    fail = None
    if run.failure is not None:
        f = run.failure
        fail = {"n": f.n, "error": f.error, "detail": f.detail, "history": f.history}
    p = run.params
    return {"params": {"s1": p.s1, "N": p.N, "eps0": p.eps0, "D_radius": p.D_radius, "m_cap": p.m_cap,
                       "max_retries": p.max_retries, "spacing": p.spacing, "degree_cap": p.degree_cap},
            "stages": stages, "failure": fail,
            "report": None if run.report is None else run.report.to_list(), "passed": run.passed}


@dataclass
class Verification:
    ok: bool
    failing: list = field(default_factory=list)
    inconsistent: list = field(default_factory=list)
    notes: list = field(default_factory=list)


def _check_list(items, where: str, out: Verification) -> bool:
    good = True
    for d in items or []:
        try:
            c = Check.from_dict(d)
        except (TypeError, ValueError, KeyError) as err:
            out.inconsistent.append(f"{where}: unreadable record ({err})")
            good = False
            continue
        if not c.consistent():
            out.inconsistent.append(f"{where}:{c.name} stored pass={c.passed} but margin {c.margin:.3g}")
            good = False
        elif not c.passed:
            out.failing.append(f"{where}:{c.name} margin {c.margin:.3g} ({c.constant})")
            good = False
    return good


def verify_bundle(doc: dict) -> Verification:
    """Recompute every pass flag from its margin and the overall flag from the parts."""
    body = doc["body"]
    out = Verification(True)
    if doc.get("kind") == "theorem":
        good = True
        for st in body.get("stages", []):
            ok = _check_list(st.get("checks"), f"stage{st.get('n')}", out)
            if bool(st.get("passed")) != ok:
                out.inconsistent.append(f"stage{st.get('n')}: stored pass={st.get('passed')} disagrees")
            good &= ok
        if body.get("report") is not None:
            good &= _check_list(body["report"], "report", out)
        if body.get("failure"):
            f = body["failure"]
            out.failing.append(f"stage{f['n']}: {f['error']}: {f['detail']}")
            good = False
        N = body.get("params", {}).get("N")
        if N is not None and len(body.get("stages", [])) != N:
            out.notes.append(f"{len(body.get('stages', []))} of {N} stages present")
            good = False
    else:
        good = _check_list(body.get("checks"), "step", out)
        if body.get("failure"):
            f = body["failure"]
            out.failing.append(f"step: {f['error']}: {f['detail']}")
            good = False
        if not body.get("checks"):
            good = False
    if bool(body.get("passed")) != good:
        out.inconsistent.append(f"overall: stored pass={body.get('passed')} but recomputed {good}")
    out.ok = good and not out.inconsistent
    return out


# -- meshes ----------------------------------------------------------------------------------

@dataclass(eq=False)
class SurfaceMesh:
    vertices: np.ndarray   # (N, 3) points of L^3
    uv: np.ndarray         # (N,) parameter points
    faces: np.ndarray      # (M, 3) zero-based
    scalars: dict          # name -> (N,) array

    def __post_init__(self):
        n = len(self.vertices)
        if self.faces.size and (self.faces.min() < 0 or self.faces.max() >= n):
            raise IOFailure("face index out of range")


def _tri_area(v, f):
    a, b, c = v[f[:, 0]], v[f[:, 1]], v[f[:, 2]]
    return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)


def export_mesh(field_: ImmersionField, dom: PlanarDomain, res: int, spacing: float | None = None) -> SurfaceMesh:
    """Triangulated (res+1)^2 grid over the bounding box of ``dom``, keeping
    vertices in the closed domain and triangles whose corners are all kept."""
    if res < MIN_MESH_RES:
        raise ConfigInvalid(f"mesh resolution must be >= {MIN_MESH_RES}, got {res}")
    x0, y0, x1, y1 = dom.bounds
    xs, ys = np.linspace(x0, x1, res + 1), np.linspace(y0, y1, res + 1)
    X, Y = np.meshgrid(xs, ys)
    z = (X + 1j * Y).ravel()
    keep = dom.contains(z, closed=True)
    idx = np.full(z.size, -1)
    idx[keep] = np.arange(int(keep.sum()))
    faces = []
    for j in range(res):
        for i in range(res):
            a, b = j * (res + 1) + i, j * (res + 1) + i + 1
            c, d = a + res + 1, b + res + 1
            for tri in ((a, b, d), (a, d, c)):
                if all(keep[t] for t in tri):
                    faces.append([idx[t] for t in tri])
    uv = z[keep]
    h = spacing or dom.diameter / 60
    verts = np.asarray(field_.immerse_cloud(uv, dom, h), dtype=float)
    F = np.asarray(faces, dtype=int).reshape(-1, 3)
    if F.size:
        F = F[_tri_area(verts, F) > 1e-14]
    g, _ = field_.data.gf_values(uv)
    sc = {"r_star": r_star(verts), "abs_g": np.abs(g), "metric_factor": metric_factor(field_.data, uv)}
    return SurfaceMesh(verts, uv, F, sc)


def write_mesh(mesh: SurfaceMesh, path) -> tuple[Path, Path]:
    p = Path(path)
    side = p.with_suffix(".tsv")
    lines = [f"v {repr(float(x))} {repr(float(y))} {repr(float(w))}" for x, y, w in mesh.vertices]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.faces]
    names = list(mesh.scalars)
    rows = ["\t".join(["u", "v"] + names)]
    for k in range(len(mesh.vertices)):
        rows.append("\t".join([repr(float(mesh.uv[k].real)), repr(float(mesh.uv[k].imag))]
                              + [repr(float(mesh.scalars[n][k])) for n in names]))
    try:
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text("\n".join(lines) + "\n")
        side.write_text("\n".join(rows) + "\n")
    except OSError as err:
        raise IOFailure(f"cannot write mesh {p}: {err}") from err
    return p, side


def read_mesh(path) -> SurfaceMesh:
    p = Path(path)
    verts, faces = [], []
    try:
        text = p.read_text()
    except OSError as err:
        raise IOFailure(f"cannot read mesh {p}: {err}") from err
    for line in text.splitlines():
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "v":
            verts.append([float(t) for t in parts[1:4]])
        elif parts[0] == "f":
            faces.append([int(t.split("/")[0]) - 1 for t in parts[1:4]])
    V = np.asarray(verts, dtype=float).reshape(-1, 3)
    uv = np.zeros(len(V), dtype=complex)
    sc = {}
    side = p.with_suffix(".tsv")
    if side.exists():
        rows = [r.split("\t") for r in side.read_text().splitlines() if r]
        head, data = rows[0], np.asarray([[float(t) for t in r] for r in rows[1:]]).reshape(-1, len(rows[0]))
        uv = data[:, 0] + 1j * data[:, 1]
        sc = {name: data[:, k] for k, name in enumerate(head) if k >= 2}
    return SurfaceMesh(V, uv, np.asarray(faces, dtype=int).reshape(-1, 3), sc)

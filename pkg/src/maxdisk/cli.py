"""Command line entry point.

    maxdisk lemma-run   [--config PATH] [--out DIR] [--eps0 X] [--mesh-res N]
    maxdisk theorem-run [--config PATH] [--out DIR] [--stages N] [--seed-s1 X] [--eps0 X] [--mesh-res N]
    maxdisk verify CERT
    maxdisk export-mesh [--config PATH] [--out DIR] [--mesh-res N] [--from CERT]

Exit status: 0 when every certificate passes, 1 when a property fails (the
failing property is printed), 2 for a malformed config or certificate.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

from shapely.geometry import box

from .domain import PlanarDomain
from .exceptions import CertFailed, ConfigInvalid, IOFailure, MaxDiskError, PreconditionError, RetriesExhausted
from .io import (bundle, domain_from_record, export_mesh, lemma_body, load_config, read_bundle, theorem_body,
                 verify_bundle, write_bundle, write_mesh)
from .lemma import LemmaInput, run_lemma
from .theorem import RecursionParams, run_theorem, seed_data, seed_surface
from .weierstrass import ImmersionField, WeierstrassData

log = logging.getLogger("maxdisk")


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", type=Path, help="JSON run configuration")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--mesh-res", type=int, dest="mesh_res", help="also write meshes at this grid resolution")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="maxdisk", description="Certified desk-scale maximal disk construction")
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("lemma-run", help="run the boundary-pushing step on the desk instance")
    _common(p)
    p.add_argument("--eps0", type=float)
    p = sub.add_parser("theorem-run", help="run the recursion")
    _common(p)
    p.add_argument("--eps0", type=float)
    p.add_argument("--stages", type=int)
    p.add_argument("--seed-s1", type=float, dest="s1")
    p = sub.add_parser("verify", help="re-check a certificate bundle")
    p.add_argument("certificate", type=Path)
    p.add_argument("-v", "--verbose", action="store_true")
    p = sub.add_parser("export-mesh", help="write a mesh of the seed surface or of a certified immersion")
    _common(p)
    p.add_argument("--from", type=Path, dest="source", help="certificate bundle whose final immersion is meshed")
    p.add_argument("--seed-s1", type=float, dest="s1")
    return ap


def _report_failure(prefix: str, err: Exception):
    print(f"{prefix}: FAILED {type(err).__name__}: {err}", file=sys.stderr)


def cmd_lemma(args, cfg) -> int:
    out = Path(cfg.out)
    X = ImmersionField(seed_data())
    inp = LemmaInput(X, box(-cfg.P_half, -cfg.P_half, cfg.P_half, cfg.P_half), PlanarDomain.square(cfg.O_half),
                     cfg.r1, cfg.r2, cfg.b1, cfg.b2)
    t = time.time()
    try:
        res = run_lemma(inp, eps0=cfg.eps0, max_retries=cfg.max_retries, spacing=cfg.spacing,
                        degree_cap=cfg.degree_cap)
    except RetriesExhausted as err:
        write_bundle(bundle("lemma", lemma_body(inp, failure=err), {"elapsed_s": time.time() - t}),
                     out / "lemma_certificate.json")
        _report_failure("lemma-run", err)
        return 1
    doc = bundle("lemma", lemma_body(inp, res), {"elapsed_s": time.time() - t})
    path = write_bundle(doc, out / "lemma_certificate.json")
    if cfg.mesh_res:
        write_mesh(export_mesh(res.Y, res.omega, cfg.mesh_res, cfg.spacing), out / "lemma_Y.obj")
    bad = res.certificate.failures()
    for c in bad:
        print(f"lemma-run: FAILED {c.name} margin {c.margin:.3g} ({c.constant})", file=sys.stderr)
    print(f"lemma-run: certificate written to {path}")
    return 0 if not bad else 1


def cmd_theorem(args, cfg) -> int:
    out = Path(cfg.out)
    params = RecursionParams(s1=cfg.s1, N=cfg.stages, eps0=cfg.eps0, D_radius=cfg.D_radius, m_cap=cfg.m_cap,
                             max_retries=cfg.max_retries, spacing=cfg.spacing, degree_cap=cfg.degree_cap)
    t = time.time()
    run = run_theorem(params)
    doc = bundle("theorem", theorem_body(run), {"elapsed_s": time.time() - t})
    path = write_bundle(doc, out / "theorem_certificate.json")
    if cfg.mesh_res:
        for st in run.stages:
            write_mesh(export_mesh(st.psi, st.U, cfg.mesh_res, cfg.spacing), out / f"psi_{st.n}.obj")
    print(f"theorem-run: {len(run.stages)} of {params.N} stages, bundle written to {path}")
    v = verify_bundle(doc)
    for line in v.failing + v.notes:
        print(f"theorem-run: FAILED {line}", file=sys.stderr)
    return 0 if v.ok else 1


def cmd_verify(args) -> int:
    doc = read_bundle(args.certificate)
    v = verify_bundle(doc)
    for line in v.inconsistent:
        print(f"verify: TAMPERED {line}", file=sys.stderr)
    for line in v.failing + v.notes:
        print(f"verify: FAILED {line}", file=sys.stderr)
    print(f"verify: {'PASS' if v.ok else 'FAIL'} {args.certificate}")
    return 0 if v.ok else 1


def cmd_export(args, cfg) -> int:
    out = Path(cfg.out)
    res = cfg.mesh_res or 32
    if args.source is not None:
        body = read_bundle(args.source)["body"]
        if "stages" in body:
            if not body["stages"]:
                raise ConfigInvalid("bundle has no stages")
            last = body["stages"][-1]
            data, dom = last["data"], last["U"]
        elif body.get("Y"):
            data, dom = body["Y"], body["omega"]
        else:
            raise ConfigInvalid("bundle holds no certified immersion")
        field_ = ImmersionField(WeierstrassData.from_dict(data))
        mesh = export_mesh(field_, domain_from_record(dom), res, cfg.spacing)
    else:
        st = seed_surface(cfg.s1)
        mesh = export_mesh(st.psi, st.U, res, cfg.spacing)
    obj, tsv = write_mesh(mesh, out / "surface.obj")
    print(f"export-mesh: {len(mesh.vertices)} vertices, {len(mesh.faces)} triangles -> {obj}, {tsv}")
    return 0


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "verify":
            return cmd_verify(args)
        over = {k: getattr(args, k, None) for k in ("out", "mesh_res", "eps0", "stages", "s1")}
        if over["out"] is not None:
            over["out"] = str(over["out"])
        mode = {"lemma-run": "lemma", "theorem-run": "theorem", "export-mesh": "export"}[args.command]
        cfg = load_config(args.config, mode=mode, **over)
        if args.command == "lemma-run":
            return cmd_lemma(args, cfg)
        if args.command == "theorem-run":
            return cmd_theorem(args, cfg)
        return cmd_export(args, cfg)
    except ConfigInvalid as err:
        print(f"{args.command}: {err}", file=sys.stderr)
        return 2
    except PreconditionError as err:
        print(f"{args.command}: rejected input: {type(err).__name__}: {err}", file=sys.stderr)
        return 2
    except CertFailed as err:
        print(f"{args.command}: FAILED {err.prop}: {err}", file=sys.stderr)
        return 1
    except IOFailure as err:
        print(f"{args.command}: {err}", file=sys.stderr)
        return 1
    except MaxDiskError as err:
        _report_failure(args.command, err)
        return 1


if __name__ == "__main__":
    sys.exit(main())

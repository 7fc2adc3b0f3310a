import json

import numpy as np
import pytest
from sklearn.base import clone

from maxdisk import LemmaEstimator, TheoremEstimator
from maxdisk.certificates import CertificateLog, Check
from maxdisk.cli import main
from maxdisk.domain import PlanarDomain
from maxdisk.exceptions import ConfigInvalid, InputRejected
from maxdisk.io import (RunConfig, domain_from_record, domain_record, export_mesh, load_config, read_bundle, read_mesh,
                        verify_bundle, write_mesh)
from maxdisk.shells import r_star
from maxdisk.theorem import seed_data, seed_surface
from maxdisk.weierstrass import ImmersionField


def test_config_defaults_and_overrides(tmp_path):
    cfg = load_config()
    assert isinstance(cfg, RunConfig) and cfg.s1 == 1.2 and cfg.stages == 3
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"s1": 1.5, "stages": 2}))
    cfg = load_config(p, stages=None, eps0=0.2)
    assert (cfg.s1, cfg.stages, cfg.eps0) == (1.5, 2, 0.2)


@pytest.mark.parametrize("bad", [{"s1": 0.9}, {"stages": 0}, {"mesh_res": 3}, {"unknown": 1}, {"eps0": -1}])
def test_config_rejections(tmp_path, bad):
    p = tmp_path / "c.json"
    p.write_text(json.dumps(bad))
    with pytest.raises(ConfigInvalid):
        load_config(p)


def test_config_unreadable(tmp_path):
    p = tmp_path / "c.json"
    p.write_text("{not json")
    with pytest.raises(ConfigInvalid):
        load_config(p)
    with pytest.raises(ConfigInvalid):
        load_config(tmp_path / "missing.json")


def test_domain_record_roundtrip():
    dom = PlanarDomain.square(0.3)
    back = domain_from_record(domain_record(dom))
    assert back.polygon.equals_exact(dom.polygon, 0.0)


def test_theorem_run_single_stage_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["theorem-run", "--stages", "1", "--out", str(a)]) == 0
    assert main(["theorem-run", "--stages", "1", "--out", str(b)]) == 0
    da = read_bundle(a / "theorem_certificate.json")
    db = read_bundle(b / "theorem_certificate.json")
    assert json.dumps(da["body"], sort_keys=True) == json.dumps(db["body"], sort_keys=True)
    assert verify_bundle(da).ok
    assert main(["verify", str(a / "theorem_certificate.json")]) == 0


def test_verify_detects_tampering(tmp_path):
    out = tmp_path / "run"
    assert main(["theorem-run", "--stages", "1", "--out", str(out)]) == 0
    path = out / "theorem_certificate.json"
    doc = json.loads(path.read_text())
    chk = next(c for c in doc["body"]["stages"][0]["checks"] if c["name"] == "D1")
    chk["margin"] = -chk["margin"]
    path.write_text(json.dumps(doc))
    v = verify_bundle(read_bundle(path))
    assert not v.ok and any("D1" in s for s in v.inconsistent)
    assert main(["verify", str(path)]) == 1


def test_verify_counts_missing_stages_and_failures():
    body = {"params": {"N": 3}, "stages": [], "report": None, "failure": {"n": 2, "error": "X", "detail": "d"},
            "passed": False}
    v = verify_bundle({"kind": "theorem", "body": body})
    assert not v.ok and v.failing and v.notes and not v.inconsistent


def test_cli_exit_codes(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"s1": "x"}))
    assert main(["theorem-run", "--config", str(bad), "--out", str(tmp_path)]) == 2
    assert main(["export-mesh", "--mesh-res", "2", "--out", str(tmp_path)]) == 2
    assert main(["verify", str(bad)]) == 2
    assert main(["verify", str(tmp_path / "nope.json")]) == 1
    assert main(["no-such-command"]) == 2


def test_export_mesh_counts_and_roundtrip(tmp_path):
    field_ = ImmersionField(seed_data())
    mesh = export_mesh(field_, PlanarDomain.square(0.5), 8)
    assert len(mesh.vertices) == 81 and len(mesh.faces) == 128
    np.testing.assert_allclose(mesh.scalars["r_star"], r_star(mesh.vertices), rtol=0, atol=0)
    obj, tsv = write_mesh(mesh, tmp_path / "m.obj")
    back = read_mesh(obj)
    assert np.array_equal(back.vertices, mesh.vertices) and np.array_equal(back.faces, mesh.faces)
    assert np.array_equal(back.uv, mesh.uv)
    for k, v in mesh.scalars.items():
        assert np.array_equal(back.scalars[k], v)
    with pytest.raises(ConfigInvalid):
        export_mesh(field_, PlanarDomain.square(0.5), 4)


def test_seed_mesh_in_shell_band(tmp_path):
    st = seed_surface(1.2)
    mesh = export_mesh(st.psi, PlanarDomain(st.P), 16)
    # every vertex over the closed square lies below the upper shell s1
    assert mesh.scalars["r_star"].max() < 1.2
    assert main(["export-mesh", "--mesh-res", "8", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "surface.obj").exists() and (tmp_path / "surface.tsv").exists()


def test_certificate_check_roundtrip():
    c = Check("x", "tag", "< 1", 0.25, 0.01, detail="d")
    assert Check.from_dict(c.to_dict()) == c
    log = CertificateLog([c])
    assert log.passed and not log.failures()


def test_estimators_sklearn_contract():
    est = LemmaEstimator(eps0=0.3)
    assert est.get_params()["eps0"] == 0.3
    c = clone(est)
    assert c.get_params() == est.get_params() and c is not est
    th = TheoremEstimator(n_stages=1)
    assert clone(th).get_params()["n_stages"] == 1
    with pytest.raises(TypeError):
        LemmaEstimator().fit(ImmersionField(seed_data()))
    with pytest.raises(InputRejected):
        LemmaEstimator().fit("not a field", None, None)


def test_theorem_estimator_single_stage():
    est = TheoremEstimator(n_stages=1).fit()
    z = np.array([[0.0, 0.0], [0.2, 0.1]])
    y = est.transform(z)
    assert y.shape == (2, 3) and np.allclose(y[0], 0, atol=1e-12)
    rs = est.predict([0.3 + 0.3j])
    assert rs.shape == (1,)
    assert est.failure_ is None and est.report_ is None

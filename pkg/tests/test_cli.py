import json

import pytest

from cmc_index_lab import cli


def run(argv, capsys):
    code = cli.main(argv)
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def meshes(tmp_path_factory):
    d = tmp_path_factory.mktemp("meshes")
    paths = {}
    specs = {
        "clifford": ["--space", "s3", "--family", "clifford", "--res", "64"],
        "slice": ["--space", "rect_t2xr", "--family", "slice_torus", "--res", "32"],
        "bad": ["--space", "s3", "--family", "clifford", "--res", "64", "--potential-shift", "0.5"],
        "cap": ["--space", "ball", "--family", "cap", "--H", "1.0", "--res", "32"],
    }
    for name, args in specs.items():
        paths[name] = str(d / f"{name}.imesh")
        assert cli.main(["mesh", *args, "-o", paths[name]]) == 0
    return paths


def test_verify_clifford_passes(meshes, capsys):
    code, out, _ = run(["verify", meshes["clifford"], "--eta", "-1", "--eta", "0"], capsys)
    payload = json.loads(out)
    assert code == 0 and payload["verdict"] == "pass"
    assert payload["spectrum"]["index"] == 4
    assert payload["geometry"]["genus"] == 1
    assert {"provenance", "geometry", "spectrum", "checks", "thresholds", "verdict"} <= set(payload)


def test_verify_slice_torus_not_applicable(meshes, capsys):
    code, out, _ = run(["verify", meshes["slice"]], capsys)
    payload = json.loads(out)
    assert code == 0
    verdicts = {c["name"]: c["verdict"] for c in payload["checks"]}
    assert verdicts["pencil"] == "not-applicable"
    assert payload["spectrum"]["index"] == 0


def test_tampered_potential_fails(meshes, capsys):
    code, out, _ = run(["verify", meshes["bad"], "--checks", "prop32"], capsys)
    assert code == 2 and json.loads(out)["verdict"] == "fail"


def test_na_only_exit_code(meshes, capsys):
    code, out, _ = run(["verify", meshes["slice"], "--checks", "pencil"], capsys)
    assert code == 3 and json.loads(out)["verdict"] == "not-applicable"


def test_verify_output_is_deterministic(meshes, capsys, tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert cli.main(["verify", meshes["cap"], "-o", str(a)]) == 0
    assert cli.main(["verify", meshes["cap"], "-o", str(b)]) == 0
    ja, jb = json.loads(a.read_text()), json.loads(b.read_text())
    ja["provenance"]["run_config"].pop("output")
    jb["provenance"]["run_config"].pop("output")
    assert ja == jb
    assert "timestamp" not in a.read_text()


def test_spectrum_command(meshes, capsys):
    code, out, _ = run(["spectrum", meshes["cap"], "-k", "4"], capsys)
    assert code == 0 and len(json.loads(out)["spectrum"]["eigenvalues"]) == 4


@pytest.mark.parametrize(
    "argv,threshold,applies",
    [
        (["--space", "t3", "--H", "2"], 3.0, True),
        (["--space", "berger", "--kappa", "8", "--tau", "1"], None, "for every H"),
        (["--space", "pinched", "--C", "0.6"], None, "for every H"),
    ],
)
def test_threshold_command(capsys, argv, threshold, applies):
    code, out, _ = run(["threshold", *argv], capsys)
    th = json.loads(out)["thresholds"]
    assert code == 0
    if threshold is not None:
        assert th["residual"] == threshold
    assert th["witness"]["applies"] == applies


def test_threshold_below_is_not_applicable(capsys):
    code, out, _ = run(["threshold", "--space", "rect_t2xr", "--beta", "1", "--H", "8"], capsys)
    assert code == 3


@pytest.mark.parametrize(
    "argv",
    [
        ["verify", "/nonexistent/file.imesh"],
        ["mesh", "--space", "berger", "--family", "sphere", "--kappa", "8", "--tau", "1"],
        ["mesh", "--space", "r3", "--family", "clifford"],
        ["verify"],
        ["frobnicate"],
    ],
)
def test_input_errors_exit_4(capsys, argv):
    code, _, err = run(argv, capsys)
    assert code == 4
    assert "error" in json.loads(err.strip().splitlines()[-1])

import json

import pytest

from estimator.cli import EXIT_OK, EXIT_STAGE, EXIT_VALIDATION, main
from estimator.integrals import write_fcidump

from conftest import hubbard_dimer, random_hamiltonian


@pytest.fixture
def fcidump(tmp_path):
    path = tmp_path / "h.fcidump"
    path.write_text(write_fcidump(random_hamiltonian(3, seed=4, n_alpha=2, n_beta=1)))
    return path


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_full_chain(tmp_path, fcidump, capsys):
    ham = tmp_path / "h.bin"
    assert run(["ingest", fcidump, "-o", ham], capsys)[0] == EXIT_OK
    code, out, _ = run(["factorize", "--method", "thc", "--rank", 6, "--in", ham, "-o", tmp_path / "f",
                        "--sweeps", 20, "--max-iter", 20], capsys)
    assert code == EXIT_OK and json.loads(out)["rank"] == 6
    lam = tmp_path / "lam.json"
    assert run(["lambda", "--ham", ham, "--factors", tmp_path / "f", "--json", lam], capsys)[0] == EXIT_OK
    cost = tmp_path / "cost.json"
    assert run(["cost", "--lambda", lam, "--json", cost], capsys)[0] == EXIT_OK
    c = json.loads(cost.read_text())
    assert c["toffoli_count"] == c["iterations"] * c["step_cost"]
    code, out, _ = run(["compile", "--cost", cost, "--p", "1e-4", "--factories", 2], capsys)
    assert code == EXIT_OK and json.loads(out)["n_factories"] == 2


def test_global_flags_before_verb(tmp_path, fcidump, capsys):
    out = tmp_path / "res.json"
    code, _, _ = run(["--json", out, "ingest", fcidump, "-o", tmp_path / "h.bin"], capsys)
    assert code == EXIT_OK and json.loads(out.read_text())["n_orbitals"] == 3


def test_fci_with_hex_determinant(tmp_path, capsys):
    path = tmp_path / "d.fcidump"
    path.write_text(write_fcidump(hubbard_dimer(u=0.0)))
    code, out, _ = run(["fci", "--ham", path, "--det", "0x1,0x2"], capsys)
    res = json.loads(out)
    assert code == EXIT_OK
    assert res["energy"] == pytest.approx(-2.0)
    assert res["determinant_weight"] == pytest.approx(0.25)
    assert run(["fci", "--ham", path, "--det", "0x3,0x1"], capsys)[0] == EXIT_VALIDATION
    assert run(["fci", "--ham", path, "--det", "g,0x1"], capsys)[0] == EXIT_VALIDATION


def test_classical_verb(tmp_path, capsys):
    base = tmp_path / "g.json"
    base.write_text(json.dumps({"k": 43, "bond_dimension": 1500, "cpu_hours": 1800,
                                "memory_gb": 48, "disk_gb": 235}))
    pts = tmp_path / "pts.json"
    pts.write_text(json.dumps({"points": [{"discarded_weight": w, "energy": -1 + w} for w in (1e-5, 2e-5)]}))
    code, out, _ = run(["classical", "--baseline", base, "--target-k", 58, "--target-m", 3000,
                        "--extrapolate", pts], capsys)
    res = json.loads(out)
    assert code == EXIT_OK
    assert res["scaled"]["cpu_hours"] == pytest.approx(36564, rel=0.05)
    assert res["extrapolation"]["energy"] == pytest.approx(-1.0)
    assert run(["classical"], capsys)[0] == EXIT_VALIDATION


def test_crossover_verb(tmp_path, capsys):
    qpu = tmp_path / "q.json"
    qpu.write_text(json.dumps({"reports": [{"n_orbitals": n, "method": "thc", "runtime_hours": 10.0 * n,
                                            "n_factories": 2} for n in (50, 100, 200)]}))
    dmrg = tmp_path / "d.json"
    dmrg.write_text(json.dumps({"points": [{"k": n, "bond_dimension": 1000, "cpu_hours": 1e-3 * n**3,
                                            "memory_gb": 1, "disk_gb": 1} for n in (50, 100, 200)]}))
    code, out, _ = run(["crossover", "--qpu", qpu, "--dmrg", dmrg, "--csv", tmp_path / "x.csv"], capsys)
    assert code == EXIT_OK and json.loads(out)["crossover"]["1000"] == 200
    assert (tmp_path / "x.csv").read_text().startswith("n_orbitals,method,qpu_hours,dmrg_hours_m1000")


def test_report_verb(tmp_path, fcidump, capsys):
    cfg = tmp_path / "run.toml"
    cfg.write_text(f'systems = ["{fcidump}"]\nmethods = ["sf", "df"]\n')
    code, out, _ = run(["report", "--config", cfg, "--out", tmp_path / "o", "--workers", 2], capsys)
    assert code == EXIT_OK
    summary = json.loads(out)
    assert summary["cells"] == 2 and summary["failed"] == 0
    assert (tmp_path / "o" / "bundle.json").exists()


def test_report_empty_methods_is_validation_error(tmp_path, capsys):
    cfg = tmp_path / "run.toml"
    cfg.write_text('systems = ["x"]\nmethods = []\n')
    assert run(["report", "--config", cfg], capsys)[0] == EXIT_VALIDATION
    assert run(["report"], capsys)[0] == EXIT_VALIDATION


def test_report_all_cells_failing_is_stage_failure(tmp_path, capsys):
    cfg = tmp_path / "run.toml"
    cfg.write_text(f'systems = ["{tmp_path / "nope"}"]\nmethods = ["sf"]\n')
    assert run(["report", "--config", cfg], capsys)[0] == EXIT_STAGE


@pytest.mark.parametrize(
    "argv",
    [["bogus"], [], ["ingest", "/nonexistent/file"], ["cost", "--lambda", "/nonexistent.json"],
     ["--workers", "0", "ingest", "x"]],
)
def test_validation_exit_codes(argv, capsys):
    assert run(argv, capsys)[0] == EXIT_VALIDATION


def test_stage_and_validation_in_compile(tmp_path, capsys):
    cost = tmp_path / "c.json"
    cost.write_text(json.dumps({"logical_qubits": 10**7, "toffoli_count": 1e25}))
    assert run(["compile", "--cost", cost, "--p", "9e-3"], capsys)[0] == EXIT_STAGE
    assert run(["compile", "--cost", cost, "--p", "0.02"], capsys)[0] == EXIT_VALIDATION


def test_ingest_rejects_asymmetric(tmp_path, capsys):
    path = tmp_path / "bad.fcidump"
    path.write_text(" &FCI NORB=1,NELEC=2,MS2=0,\n &END\n0.5 1 1 2 1\n")
    assert run(["ingest", path], capsys)[0] == EXIT_VALIDATION


def test_help_exits_zero(capsys):
    assert run(["--help"], capsys)[0] == EXIT_OK

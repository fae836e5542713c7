import json

import pytest

from estimator.classical_cost import DMRGCostPoint
from estimator.integrals import save_hamiltonian, write_fcidump
from estimator.pipeline import (
    ConfigError,
    CrossoverTable,
    RunConfig,
    crossover_table,
    emit_plot_data,
    load_config,
    read_crossover_csv,
    run_pipeline,
)

from conftest import random_hamiltonian


@pytest.fixture
def system(tmp_path):
    path = tmp_path / "h.bin"
    save_hamiltonian(random_hamiltonian(3, seed=2, n_alpha=1, n_beta=1), path)
    return str(path)


def small_config(system, out, **kw):
    base = dict(systems=(system,), methods=("sf", "df", "thc"), ranks={"thc": (6,)},
                thc_sweeps=20, thc_max_iter=30, out=None if out is None else str(out))
    return RunConfig(**(base | kw))


def test_pipeline_sections_and_files(system, tmp_path):
    bundle = run_pipeline(small_config(system, tmp_path / "o"))
    assert [c["method"] for c in bundle["cells"]] == ["sf", "df", "thc"]
    for cell in bundle["cells"]:
        assert cell["status"] == "ok"
        for key in ("hamiltonian", "factorization", "lambda", "logical_cost", "surface_plan"):
            assert key in cell
        assert (tmp_path / "o" / cell["factorization"]["archive"] / "manifest.json").exists()
    assert (tmp_path / "o" / "provenance.json").exists()
    assert len(bundle["config_hash"]) == 64


def test_pipeline_byte_identical_across_workers(system, tmp_path):
    run_pipeline(small_config(system, tmp_path / "a", workers=1))
    run_pipeline(small_config(system, tmp_path / "b", workers=3))
    assert (tmp_path / "a" / "bundle.json").read_bytes() == (tmp_path / "b" / "bundle.json").read_bytes()
    for cell in ("s0_sf_auto", "s0_thc_6"):
        a = (tmp_path / "a" / "cells" / cell / "report.json").read_bytes()
        assert a == (tmp_path / "b" / "cells" / cell / "report.json").read_bytes()


def test_failed_cell_recorded_not_fatal(system, tmp_path):
    cfg = small_config(system, None, systems=(system, str(tmp_path / "missing.fcidump")), methods=("sf",))
    bundle = run_pipeline(cfg)
    statuses = [c["status"] for c in bundle["cells"]]
    assert statuses == ["ok", "failed"]
    assert "error" in bundle["cells"][1]


def test_fcidump_input_accepted(tmp_path):
    path = tmp_path / "h.fcidump"
    path.write_text(write_fcidump(random_hamiltonian(2, seed=1, n_alpha=1, n_beta=1)))
    bundle = run_pipeline(RunConfig(systems=(str(path),), methods=("sf",)))
    assert bundle["cells"][0]["status"] == "ok"


@pytest.mark.parametrize(
    "kw",
    [dict(methods=()), dict(methods=("cc",)), dict(systems=()), dict(ranks={"thc": (5, 3)}),
     dict(eps_pea=0.0), dict(p_gate=0.02), dict(workers=0)],
)
def test_config_validation(kw):
    with pytest.raises(ConfigError):
        RunConfig(**({"systems": ("x",)} | kw))


def test_config_hash_ignores_output_location():
    a = RunConfig(systems=("x",), out="a", workers=1)
    b = RunConfig(systems=("x",), out="b", workers=4)
    assert a.config_hash() == b.config_hash()
    assert a.config_hash() != RunConfig(systems=("x",), seed=1).config_hash()


def test_load_config_toml(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text('systems = ["h.bin"]\nmethods = ["thc", "df"]\nseed = 3\n[ranks]\nthc = [10, 20]\n')
    cfg = load_config(path, seed=7)
    assert cfg.methods == ("thc", "df") and cfg.ranks == {"thc": (10, 20)} and cfg.seed == 7
    path.write_text("systems = [\n")
    with pytest.raises(ConfigError):
        load_config(path)
    path.write_text('systems = ["a"]\nbogus = 1\n')
    with pytest.raises(ConfigError):
        load_config(path)


# -- crossover ---------------------------------------------------------------


def cubic_dmrg(ns, m, c=1e-3):
    return [DMRGCostPoint(n, m, c * n**3, 1.0, 1.0) for n in ns]


def test_crossover_matches_analytic_intersection():
    # QPU 10 N hours vs DMRG 1e-3 N^3: equal at N = 100
    ns = list(range(80, 121))
    qpu = [(n, "thc", 10.0 * n, 2) for n in ns]
    table = crossover_table(qpu, cubic_dmrg(ns, 1000), factories=2)
    assert table.crossover[1000] == 101
    qpu_shifted = [(n, "thc", 10.0 * n - 0.5, 2) for n in ns]
    assert crossover_table(qpu_shifted, cubic_dmrg(ns, 1000)).crossover[1000] == 100


def test_crossover_rescales_factories_and_threads():
    qpu = [(50, "thc", 100.0, 4)]
    table = crossover_table(qpu, [DMRGCostPoint(50, 500, 400.0, 1.0, 1.0)], factories=2, threads=4)
    row = table.rows[0]
    assert row.qpu_hours == 200.0 and row.dmrg_hours[500] == 100.0
    assert table.crossover[500] is None


def test_crossover_inner_join_warns():
    qpu = [(n, "thc", 1.0, 2) for n in (10, 20, 30)]
    with pytest.warns(RuntimeWarning, match="inner join"):
        table = crossover_table(qpu, cubic_dmrg([20, 30, 40], 100))
    assert [r.n_orbitals for r in table.rows] == [20, 30]


def test_crossover_needs_inputs():
    with pytest.raises(ValueError):
        crossover_table([], cubic_dmrg([10], 10))


def test_csv_round_trip(tmp_path):
    ns = [40, 60, 80]
    dmrg = cubic_dmrg(ns, 1000) + cubic_dmrg(ns, 3000, c=2e-2)
    qpu = [{"n_orbitals": n, "method": "thc", "runtime_hours": 0.37 * n, "n_factories": 2} for n in ns]
    table = crossover_table(qpu, dmrg)
    text = emit_plot_data(table, "csv", tmp_path / "x.csv")
    assert text.splitlines()[0] == ("n_orbitals,method,qpu_hours,dmrg_hours_m1000,dmrg_hours_m3000,"
                                    "qpu_faster_m1000,qpu_faster_m3000")
    assert read_crossover_csv(open(tmp_path / "x.csv", newline="").read()) == table
    meta = json.loads(emit_plot_data(table, "json"))
    assert meta["axes"]["y"]["unit"] == "hours"
    assert isinstance(table, CrossoverTable)


def test_scaling_series_json_has_slope():
    series = {"thc": [(n, 5.0 * n**2.1) for n in (10, 20, 40)], "sf": [(n, n**3.0) for n in (10, 20)]}
    data = json.loads(emit_plot_data(series, "json"))
    assert data["series"]["thc"]["fit"]["slope"] == pytest.approx(2.1)
    assert data["series"]["sf"]["fit"]["slope"] == pytest.approx(3.0)
    assert emit_plot_data(series, "csv").startswith("method,n_orbitals,toffoli_count,fit_slope")


def test_emit_rejects_unknown_inputs():
    with pytest.raises(ValueError):
        emit_plot_data({}, "xml")
    with pytest.raises(TypeError):
        emit_plot_data(42, "csv")


@pytest.mark.filterwarnings("ignore:singular Gram matrix")  # M=10 exceeds the 3 pair functions
def test_two_orbital_thc_rerun_byte_identical(tmp_path):
    path = tmp_path / "h2.bin"
    save_hamiltonian(random_hamiltonian(2, seed=0, n_alpha=1, n_beta=1), path)
    cfg = dict(systems=(str(path),), methods=("thc",), ranks={"thc": (10,)}, thc_sweeps=30, thc_max_iter=50)
    first = run_pipeline(RunConfig(**cfg, out=str(tmp_path / "r1")))
    run_pipeline(RunConfig(**cfg, out=str(tmp_path / "r2")))
    cell = first["cells"][0]
    assert cell["status"] == "ok" and cell["rank"] == 10
    assert {"hamiltonian", "factorization", "lambda", "logical_cost", "surface_plan"} <= cell.keys()
    assert (tmp_path / "r1" / "bundle.json").read_bytes() == (tmp_path / "r2" / "bundle.json").read_bytes()
    assert json.loads((tmp_path / "r1" / "bundle.json").read_text())["config"]["methods"] == ["thc"]

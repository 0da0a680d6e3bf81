import json

import numpy as np
import pytest

from svikit.cli import int_list, main
from svikit.core import ConfigError
from svikit.harness import (
    CSV_HEADER,
    ExperimentSpec,
    ProblemSelector,
    Report,
    ReportError,
    emit_report,
    loglog_slope,
    run_asymptotics,
    run_diagnose,
    run_gamma_sweep,
    run_rate_vs_bound,
    run_scheme_comparison,
)
from svikit.solvers import SolverConfig, optimal_gamma0_strong, run
from svikit.diagnostics import natural_residual
from svikit.problems import gen_rate_cournot


def small_rate(**kw):
    base = dict(kind="rate", selector=ProblemSelector("rate-cournot", [5]), iterations=200,
                paths=3, checkpoints=[1, 100, 200])
    base.update(kw)
    return ExperimentSpec(**base)


def test_asymptotics_first_checkpoint():
    p = gen_rate_cournot(5)
    spec = ExperimentSpec("asymptotics", ProblemSelector("rate-cournot", [5]), iterations=10,
                          checkpoints=[1, 10], master_seed=3)
    rep = run_asymptotics(spec)
    tr = run(p, SolverConfig("ESA", optimal_gamma0_strong(0.02), 1, master_seed=3))
    assert rep.rows[0][3] == 1
    assert rep.rows[0][4] == pytest.approx(natural_residual(p, tr.final), rel=1e-14)


def test_asymptotics_noiseless_rate():
    spec = ExperimentSpec("asymptotics", ProblemSelector("rate-cournot", [5]), iterations=10_000,
                          checkpoints=[10_000], noise=False)
    assert run_asymptotics(spec).rows[-1][4] <= 1e-3


def test_asymptotics_error_rows():
    spec = ExperimentSpec("asymptotics", ProblemSelector("watson", [11]), iterations=5)
    rep = run_asymptotics(spec)
    assert rep.errors == 1 and rep.rows[0][-1].startswith("error")


def test_comparison_euclid_matches_esa():
    spec = ExperimentSpec("compare", ProblemSelector("frac-quad", [10]), schemes=("ESA", "MPSA-euclid"),
                          iterations=300, checkpoints=[1, 100, 300])
    rep = run_scheme_comparison(spec)
    esa = [r[4] for r in rep.rows if r[2] == "ESA"]
    mp = [r[4] for r in rep.rows if r[2] == "MPSA-euclid"]
    np.testing.assert_allclose(esa, mp, atol=1e-9)


def test_comparison_reports_entropy():
    spec = ExperimentSpec("compare", ProblemSelector("rate-cournot", [5]),
                          schemes=("ESA", "MPSA-entropy", "MPSA-powersum"), iterations=50, checkpoints=[50])
    rep = run_scheme_comparison(spec)
    assert [r[2] for r in rep.rows] == ["ESA", "MPSA-entropy", "MPSA-powersum"]
    assert all(r[-1] == "ok" for r in rep.rows)


def test_rate_report_fields():
    rep = run_rate_vs_bound(small_rate())
    M = rep.rows[0][rep.columns.index("M")]
    for row in rep.rows:
        k = row[1]
        assert row[3] == M / k
        assert row[2] >= 0
    assert rep.rows[0][3] == M


def test_rate_paths_serial_equals_parallel():
    a = run_rate_vs_bound(small_rate())
    b = run_rate_vs_bound(small_rate(workers=2))
    assert a.rows == b.rows


def test_rate_needs_rate_family():
    with pytest.raises(ConfigError):
        run_rate_vs_bound(small_rate(selector=ProblemSelector("watson", [1])))


def test_sweep_passthrough():
    spec = ExperimentSpec("sweep", ProblemSelector("rate-cournot", [5]), iterations=100, paths=2,
                          checkpoints=[100], multipliers=(0.1, 1, 10))
    rep = run_gamma_sweep(spec)
    row = [r for r in rep.rows if r[1] == 1.0][0]
    assert row[2] == optimal_gamma0_strong(0.02)
    assert sum(r[-1] for r in rep.rows) == 1


def test_diagnose_rows():
    spec = ExperimentSpec("diagnose", ProblemSelector("rate-cournot", [5]), pairs=200)
    rep = run_diagnose(spec)
    assert rep.rows[0][2:5] == ["pseudomonotone", 200, 0]
    assert 0.02 <= rep.rows[1][5] <= 0.12


def test_loglog_slope():
    ks = [1, 100, 1000, 10000]
    assert loglog_slope(ks, [3.0 / k for k in ks]) == pytest.approx(-1.0)
    assert loglog_slope([1, 10], [1, 1]) is None


def test_spec_validation():
    with pytest.raises(ConfigError):
        ExperimentSpec(kind="nope")
    with pytest.raises(ConfigError):
        ExperimentSpec(schemes=("RK4",))
    with pytest.raises(ConfigError):
        ExperimentSpec(paths=0)
    with pytest.raises(ConfigError):
        ExperimentSpec(iterations=10, checkpoints=[20])
    with pytest.raises(ConfigError):
        ExperimentSpec(gamma0_rule="explicit")


def test_emit_empty(tmp_path):
    out = tmp_path / "r.csv"
    with pytest.raises(ReportError):
        emit_report(Report("rate", ["n"]), "csv", str(out))
    assert not out.exists()


def test_emit_json_round_trip(tmp_path):
    rep = run_rate_vs_bound(small_rate())
    out = tmp_path / "r.json"
    emit_report(rep, "json", str(out))
    assert Report.from_json(out.read_text()) == rep


def test_emit_csv_format(tmp_path):
    rep = Report("rate", ["n", "K", "psi_e"], [[5, 100, 1.0 / 3], [5, 1000, 12345.678901]])
    text = emit_report(rep, "csv")
    lines = text.splitlines()
    assert lines[0] == CSV_HEADER
    assert lines[1] == "n,K,psi_e"
    assert lines[2] == "5,100,3.33333e-01"
    assert lines[3] == "5,1000,1.23457e+04"


def test_emit_plot_data():
    rep = Report("rate", ["n", "K", "psi_e"], [[5, 1, 2.0], [5, 10, 0.2], [6, 1, 3.0]])
    text = emit_report(rep, "plot-data")
    assert "# series n=5 value=psi_e\n1 2.00000e+00\n10 2.00000e-01\n" in text
    assert "# series n=6" in text


def test_emit_unwritable(tmp_path):
    rep = Report("rate", ["n"], [[1]])
    with pytest.raises(OSError):
        emit_report(rep, "csv", str(tmp_path / "missing" / "r.csv"))


def test_csv_deterministic(tmp_path):
    spec = ExperimentSpec("asymptotics", ProblemSelector("frac-quad", [10]), iterations=100,
                          checkpoints=[1, 100], master_seed=9)
    a, b = run_asymptotics(spec), run_asymptotics(spec)
    strip = lambda r: [row[:5] for row in r.rows]
    assert strip(a) == strip(b)
    ia = a.columns.index("seconds")
    for r in (a, b):
        for row in r.rows:
            row[ia] = None
    assert emit_report(a, "csv") == emit_report(b, "csv")


# -------------------------------------------------------------------- CLI


def test_int_list():
    assert int_list("5..7") == [5, 6, 7]
    assert int_list("1,3,10..11") == [1, 3, 10, 11]


def test_cli_rate(tmp_path, capsys):
    out = tmp_path / "rate.json"
    code = main(["rate", "--n", "5", "--iters", "100", "--paths", "2", "--checkpoints", "1,100",
                 "--out", str(out), "--format", "json"])
    assert code == 0
    data = json.loads(out.read_text())
    assert data["kind"] == "rate" and len(data["rows"]) == 2


def test_cli_stdout(capsys):
    assert main(["asymptotics", "--family", "watson", "--n", "1", "--iters", "20", "--checkpoints", "1,20"]) == 0
    assert capsys.readouterr().out.startswith(CSV_HEADER)


def test_cli_config_error(capsys):
    assert main(["rate", "--family", "watson", "--iters", "10"]) == 2


def test_cli_instance_error(capsys):
    assert main(["asymptotics", "--family", "watson", "--n", "11", "--iters", "5"]) == 1


def test_cli_bad_flag():
    with pytest.raises(SystemExit) as info:
        main(["rate", "--scheme", "nope"])
    assert info.value.code == 2

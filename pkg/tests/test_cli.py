"""Command-line interface: file layout, manifest contract, cell formats, exit codes."""

import csv
import subprocess

import pytest

from caprisk.cli import main
from caprisk.portfolio import run_monte_carlo
from caprisk.scenarios import DEFAULT_SEED, parse_scenario

SCENARIO_TEXT = """\
schema_version = 1

[study]
label = cli-demo
replications = 60
seed = 321

[cohort]
label = users
n = 400
premium = 50.0
frequency = poisson rate=5.0
severity = gamma shape=2.0 scale=3.0
regime = hardcap cap=60.0
"""


def read_rows(path):
    with open(path, newline="") as handle:
        return list(csv.reader(handle))


def read_manifest(path):
    entries = {}
    files = []
    for line in path.read_text().splitlines():
        key, _, value = line.partition(" = ")
        if key == "file":
            files.append(value)
        else:
            entries[key] = value
    return entries, files


@pytest.fixture(scope="module")
def reserve_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("reserve")
    assert main(["reserve-comparison", "--reps", "40", "--out", str(out)]) == 0
    return out / "reserve-comparison"


class TestReserveComparison:
    def test_files_exist(self, reserve_dir):
        assert (reserve_dir / "tab_reserve_comparison.csv").is_file()
        assert (reserve_dir / "manifest").is_file()

    def test_table_layout_and_naive_row(self, reserve_dir):
        rows = read_rows(reserve_dir / "tab_reserve_comparison.csv")
        assert rows[0] == [
            "model",
            "expected_loss",
            "var_99",
            "tvar_99",
            "loss_ratio",
            "margin_over_tvar",
        ]
        assert [r[0] for r in rows[1:]] == ["naive", "poisson-gamma", "nb-lognormal"]
        assert rows[1][1:] == ["300000.0", "300000.0", "300000.0", "0.6", "200000.0"]
        for row in rows[2:]:
            for cell in row[1:]:
                float(cell)

    def test_manifest_contract(self, reserve_dir):
        entries, files = read_manifest(reserve_dir / "manifest")
        assert entries["study_label"] == "reserve-comparison"
        assert entries["seed"] == str(DEFAULT_SEED)
        assert entries["replications"] == "40"
        assert entries["version"]
        assert "T" in entries["started"] and entries["started"].endswith("Z")
        assert entries["finished"] >= entries["started"]
        assert files == ["tab_reserve_comparison.csv"]

    def test_repeat_and_threads_byte_identical(self, reserve_dir, tmp_path):
        for threads in ("1", "4"):
            out = tmp_path / f"t{threads}"
            assert (
                main(
                    [
                        "reserve-comparison",
                        "--reps",
                        "40",
                        "--threads",
                        threads,
                        "--out",
                        str(out),
                    ]
                )
                == 0
            )
        baseline = (reserve_dir / "tab_reserve_comparison.csv").read_bytes()
        for threads in ("1", "4"):
            again = (tmp_path / f"t{threads}" / "reserve-comparison" / "tab_reserve_comparison.csv").read_bytes()
            assert again == baseline

    def test_seed_changes_simulated_rows(self, reserve_dir, tmp_path):
        assert main(["reserve-comparison", "--reps", "40", "--seed", "9", "--out", str(tmp_path)]) == 0
        other = read_rows(tmp_path / "reserve-comparison" / "tab_reserve_comparison.csv")
        base = read_rows(reserve_dir / "tab_reserve_comparison.csv")
        assert other[1] == base[1]
        assert other[2] != base[2]


class TestPolicyAlternatives:
    def test_p3_has_no_premium_columns(self, tmp_path):
        assert main(["policy-alternatives", "--reps", "30", "--out", str(tmp_path)]) == 0
        rows = read_rows(tmp_path / "policy-alternatives" / "tab_policy_alternatives.csv")
        assert rows[0] == ["policy", "expected_loss", "tvar_99", "loss_ratio", "cap_hit", "margin"]
        assert [r[0] for r in rows[1:]] == ["P0", "P1", "P2", "P3"]
        p3 = rows[4]
        assert p3[3] == "n/a" and p3[5] == "n/a"
        float(p3[1]), float(p3[2]), float(p3[4])
        for row in rows[1:4]:
            for cell in row[1:]:
                float(cell)


class TestVercel:
    def test_rows_and_net_identity(self, tmp_path):
        assert main(["vercel", "--reps", "20", "--out", str(tmp_path)]) == 0
        rows = read_rows(tmp_path / "vercel" / "tab_vercel.csv")
        assert rows[0] == [
            "cohort",
            "kappa",
            "e_s_agg",
            "e_cost",
            "premium",
            "e_overage_rev",
            "e_net_loss",
        ]
        assert [r[0] for r in rows[1:]] == ["light"] * 3 + ["heavy"] * 3
        assert [r[1] for r in rows[1:]] == ["0.25", "0.5", "1.0"] * 2
        for row in rows[1:]:
            cost, premium, overage, net = (float(row[i]) for i in (3, 4, 5, 6))
            assert net == cost - premium - overage
            assert float(row[2]) > 0


class TestMixedPopulation:
    def test_h_row_uses_na_cells(self, tmp_path):
        assert main(["mixed-population", "--reps", "30", "--out", str(tmp_path)]) == 0
        rows = read_rows(tmp_path / "mixed-population" / "tab_mixed_population.csv")
        assert rows[0] == [
            "scenario",
            "pi_power",
            "e_l",
            "var_99",
            "tvar_99",
            "cap_hit_power",
            "cap_hit_light",
        ]
        assert [r[0] for r in rows[1:]] == ["H", "M1", "M2", "M3"]
        h_row = rows[1]
        assert h_row[1] == "n/a" and h_row[5] == "n/a" and h_row[6] == "n/a"
        assert [rows[i][1] for i in (2, 3, 4)] == ["0.1", "0.2", "0.05"]
        for row in rows[2:]:
            for cell in row[1:]:
                float(cell)


class TestCensoringBias:
    def test_report_and_table(self, tmp_path, capsys):
        assert main(["censoring-bias", "--out", str(tmp_path)]) == 0
        out = capsys.readouterr().out
        assert "censoring bias study" in out
        assert out.count("tobit bias") == 3
        rows = read_rows(tmp_path / "censoring-bias" / "tab_censoring_bias.csv")
        assert rows[0][0] == "fraction"
        assert [r[0] for r in rows[1:]] == ["0.05", "0.2", "0.4"]
        for row in rows[1:]:
            assert int(row[2]) > 0
            assert float(row[3]) < 0 and float(row[4]) < 0


class TestSizeSweep:
    def test_points_and_slope_in_manifest(self, tmp_path):
        assert main(["size-sweep", "--reps", "60", "--out", str(tmp_path)]) == 0
        study = tmp_path / "size-sweep"
        rows = read_rows(study / "fig_reserve_by_portfolio_size.csv")
        assert rows[0] == ["n", "per_user_tail_capital"]
        sizes = [int(r[0]) for r in rows[1:]]
        assert sizes == [500, 1000, 2000, 5000, 10000, 20000, 50000, 100000]
        capitals = [float(r[1]) for r in rows[1:]]
        assert all(c > 0 for c in capitals)
        assert capitals[-1] < capitals[0]
        entries, files = read_manifest(study / "manifest")
        assert files == ["fig_reserve_by_portfolio_size.csv"]
        assert -1.0 < float(entries["slope"]) < 0.0


class TestAggregateDistribution:
    def test_binning_contract(self, tmp_path):
        assert main(["aggregate-distribution", "--reps", "40", "--out", str(tmp_path)]) == 0
        rows = read_rows(
            tmp_path / "aggregate-distribution" / "fig_aggregate_cost_distribution.csv"
        )
        assert rows[0] == ["model", "bin_left", "bin_right", "density"]
        assert len(rows) == 401
        assert [r[0] for r in rows[1:201]] == ["poisson-gamma"] * 200
        assert [r[0] for r in rows[201:]] == ["nb-lognormal"] * 200
        widths = [float(r[2]) - float(r[1]) for r in rows[1:201]]
        assert max(widths) - min(widths) <= 1e-9 * max(widths)
        for block in (rows[1:201], rows[201:]):
            mass = sum((float(r[2]) - float(r[1])) * float(r[3]) for r in block)
            assert mass == pytest.approx(1.0, rel=1e-9)
        # Both models share one pooled grid.
        assert rows[1][1] == rows[201][1]
        assert rows[200][2] == rows[400][2]


class TestChurnTrajectory:
    def test_defaults_and_manifest_extras(self, tmp_path):
        rc = main(
            [
                "churn-trajectory",
                "--reps",
                "20",
                "--periods",
                "5",
                "--out",
                str(tmp_path),
            ]
        )
        assert rc == 0
        study = tmp_path / "churn-stress-p0"
        rows = read_rows(study / "churn_trajectory.csv")
        assert rows[0] == [
            "period",
            "n_active",
            "premium_income",
            "expected_loss",
            "loss_ratio",
            "mean_hit_count",
        ]
        assert len(rows) == 6
        entries, files = read_manifest(study / "manifest")
        assert files == ["churn_trajectory.csv"]
        assert entries["h0"] == "0.02"
        assert entries["beta1"] == "1.0"
        assert entries["beta2"] == "0.2"
        assert entries["periods"] == "5"
        assert entries["replications"] == "20"

    def test_incompatible_scenario_fails_as_study_error(self, tmp_path, capsys):
        rc = main(
            [
                "churn-trajectory",
                "--scenario",
                "stress-p2",
                "--reps",
                "10",
                "--out",
                str(tmp_path),
            ]
        )
        assert rc == 1
        err = capsys.readouterr().err
        assert "failed at stage" in err and "churn-stress-p2" in err


class TestRunCommand:
    def test_summary_matches_engine(self, tmp_path):
        scenario_path = tmp_path / "demo.scenario"
        scenario_path.write_text(SCENARIO_TEXT)
        assert main(["run", str(scenario_path), "--out", str(tmp_path)]) == 0
        rows = read_rows(tmp_path / "cli-demo" / "summary.csv")
        assert rows[0] == [
            "scope",
            "label",
            "n",
            "premium_income",
            "expected_loss",
            "loss_ratio",
            "var_99",
            "var_999",
            "tvar_99",
            "tvar_999",
            "reserve",
            "margin_over_tvar",
            "cap_hit",
            "mean_overage_revenue",
            "mean_net_loss",
        ]
        assert len(rows) == 3
        scenario, levels = parse_scenario(SCENARIO_TEXT)
        summary = run_monte_carlo(scenario, levels=levels)
        portfolio = rows[1]
        assert portfolio[0] == "portfolio" and portfolio[1] == "cli-demo"
        assert int(portfolio[2]) == 400
        assert float(portfolio[4]) == summary.expected_loss
        assert float(portfolio[6]) == summary.var_by_level[0.99]
        assert float(portfolio[9]) == summary.tvar_by_level[0.999]
        cohort = rows[2]
        assert cohort[0] == "cohort" and cohort[1] == "users"
        assert float(cohort[4]) == summary.cohorts[0].expected_loss

    def test_custom_levels_rename_columns(self, tmp_path):
        text = SCENARIO_TEXT.replace("seed = 321", "seed = 321\nlevels = 0.95")
        path = tmp_path / "levels.scenario"
        path.write_text(text)
        assert main(["run", str(path), "--out", str(tmp_path)]) == 0
        header = read_rows(tmp_path / "cli-demo" / "summary.csv")[0]
        assert "var_95" in header and "tvar_95" in header
        assert "var_99" not in header

    def test_overrides_recorded_and_deterministic(self, tmp_path):
        path = tmp_path / "demo.scenario"
        path.write_text(SCENARIO_TEXT)
        args = [
            "run",
            str(path),
            "--seed-override",
            "777",
            "--reps-override",
            "30",
        ]
        assert main(args + ["--out", str(tmp_path / "a")]) == 0
        assert main(args + ["--out", str(tmp_path / "b")]) == 0
        assert main(["run", str(path), "--out", str(tmp_path / "c")]) == 0
        first = (tmp_path / "a" / "cli-demo" / "summary.csv").read_bytes()
        second = (tmp_path / "b" / "cli-demo" / "summary.csv").read_bytes()
        plain = (tmp_path / "c" / "cli-demo" / "summary.csv").read_bytes()
        assert first == second
        assert first != plain
        entries, _ = read_manifest(tmp_path / "a" / "cli-demo" / "manifest")
        assert entries["seed"] == "777"
        assert entries["replications"] == "30"


class TestFailureModes:
    def test_missing_scenario_file(self, tmp_path, capsys):
        rc = main(["run", str(tmp_path / "absent.scenario"), "--out", str(tmp_path)])
        assert rc == 2
        assert "cannot read scenario file" in capsys.readouterr().err

    def test_malformed_scenario_file(self, tmp_path, capsys):
        path = tmp_path / "bad.scenario"
        path.write_text("schema_version = 1\n[study]\nflavor = 1\n")
        rc = main(["run", str(path), "--out", str(tmp_path)])
        assert rc == 2
        assert "line 3" in capsys.readouterr().err

    def test_unwritable_output_root(self, tmp_path, capsys):
        blocker = tmp_path / "blocker"
        blocker.write_text("occupied")
        rc = main(["reserve-comparison", "--reps", "5", "--out", str(blocker / "nested")])
        assert rc == 2
        assert "cannot create output directory" in capsys.readouterr().err

    def test_unknown_command_exits_two(self):
        with pytest.raises(SystemExit) as info:
            main(["no-such-command"])
        assert info.value.code == 2

    def test_unknown_flag_exits_two(self):
        with pytest.raises(SystemExit) as info:
            main(["vercel", "--bogus"])
        assert info.value.code == 2


def test_console_script_reports_version():
    proc = subprocess.run(["caprisk", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert proc.stdout.startswith("caprisk ")

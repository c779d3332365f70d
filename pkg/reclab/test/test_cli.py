import orjson
import pytest

from reclab.db.artifact_repo import load_manifest, read_csv, read_json
from reclab.main import EXIT_BUDGET, EXIT_INVALID, EXIT_OK, dispatch

POISSON_ARGS = ["poisson-check", "--n", "4", "--trials", "600", "--seed", "3"]


@pytest.fixture(autouse=True)
def _no_seed_from_env(monkeypatch):
    monkeypatch.delenv("RECLAB_SEED", raising=False)


def _outputs(out, command):
    return (out / f"{command}.csv").read_bytes(), (out / f"{command}.json").read_bytes()


# ---------------------------------------------------------------------------
# poisson-check
# ---------------------------------------------------------------------------
def test_poisson_check_writes_table_summary_and_manifest(tmp_path):
    out = tmp_path / "run"
    assert dispatch(POISSON_ARGS + ["--out", str(out)]) == EXIT_OK

    rows = read_csv(out / "poisson-check.csv")
    assert list(rows[0]) == ["k", "emp", "exact", "poisson", "z"]
    assert [int(r["k"]) for r in rows] == list(range(len(rows)))

    summary = read_json(out / "poisson-check.json")
    assert summary["command"] == "poisson-check"
    assert summary["parameters"]["seed"] == 3
    assert "workers" not in summary["parameters"]
    assert summary["rows"][0]["m"] == 16

    manifest = load_manifest(out)
    assert manifest.seed == 3
    assert manifest.argv[0] == "poisson-check"


def test_grids_prepend_n(tmp_path):
    out = tmp_path / "grid"
    assert dispatch(["poisson-check", "--n", "3,4", "--trials", "300", "--out", str(out)]) == EXIT_OK
    rows = read_csv(out / "poisson-check.csv")
    assert list(rows[0])[0] == "n"
    assert {r["n"] for r in rows} == {"3", "4"}


def test_worker_count_leaves_outputs_byte_identical(tmp_path):
    one, two = tmp_path / "one", tmp_path / "two"
    assert dispatch(POISSON_ARGS + ["--workers", "1", "--out", str(one)]) == EXIT_OK
    assert dispatch(POISSON_ARGS + ["--workers", "2", "--out", str(two)]) == EXIT_OK
    assert _outputs(one, "poisson-check") == _outputs(two, "poisson-check")


def test_replay_reproduces_the_run(tmp_path):
    first, again = tmp_path / "first", tmp_path / "again"
    assert dispatch(["poisson-check", "--n", "4", "--trials", "400", "--out", str(first)]) == EXIT_OK
    # the default seed was pinned into the manifest
    assert load_manifest(first).argv[-2:] == ["--seed", "0"]
    assert dispatch(["replay", str(first / "manifest.json"), "--out", str(again)]) == EXIT_OK
    assert _outputs(first, "poisson-check") == _outputs(again, "poisson-check")


def test_non_positive_t_is_rejected(tmp_path, capsys):
    status = dispatch(["poisson-check", "--t", "0", "--out", str(tmp_path)])
    assert status == EXIT_INVALID
    assert "error: t must be positive" in capsys.readouterr().err


def test_unknown_flag_and_system(tmp_path, capsys):
    assert dispatch(["poisson-check", "--bogus", "1"]) == EXIT_INVALID
    assert dispatch(["poisson-check", "--system", "nope", "--out", str(tmp_path)]) == EXIT_INVALID
    assert "unknown system 'nope'" in capsys.readouterr().err


def test_exceeded_budget_has_its_own_exit_code(tmp_path, monkeypatch, capsys):
    from reclab.core.config import config

    monkeypatch.setattr(config, "DP_BUDGET", 10)
    assert dispatch(POISSON_ARGS + ["--out", str(tmp_path)]) == EXIT_BUDGET
    assert "budget is 10" in capsys.readouterr().err


def test_oversized_ball_orbits_exit_with_the_budget_code(tmp_path, capsys):
    args = ["poisson-check", "--system", "doubling", "--target", "ball", "--center", "0.37"]
    args += ["--eps", "0.1", "--n", "22", "--trials", "256", "--out", str(tmp_path)]
    assert dispatch(args) == EXIT_BUDGET
    assert "budget is" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# Value resolution
# ---------------------------------------------------------------------------
def test_flags_override_the_config_file(tmp_path):
    cfg = tmp_path / "run.yaml"
    cfg.write_text("seed: 5\ntrials: 300\nn: [4]\n", encoding="utf-8")
    out = tmp_path / "out"
    assert dispatch(["poisson-check", "--config", str(cfg), "--trials", "200", "--out", str(out)]) == EXIT_OK
    parameters = read_json(out / "poisson-check.json")["parameters"]
    assert parameters["seed"] == 5
    assert parameters["trials"] == 200
    assert parameters["n"] == "4"


def test_unknown_config_keys_are_rejected(tmp_path, capsys):
    cfg = tmp_path / "run.yaml"
    cfg.write_text("colour: blue\n", encoding="utf-8")
    assert dispatch(["mixing", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_INVALID
    assert "colour" in capsys.readouterr().err


def test_seed_from_the_environment_is_pinned(tmp_path, monkeypatch):
    monkeypatch.setenv("RECLAB_SEED", "9")
    out = tmp_path / "gap"
    assert dispatch(["approx-gap", "--N", "8", "--out", str(out)]) == EXIT_OK
    assert read_json(out / "approx-gap.json")["parameters"]["seed"] == 9
    assert load_manifest(out).argv[-2:] == ["--seed", "9"]


# ---------------------------------------------------------------------------
# Other commands
# ---------------------------------------------------------------------------
def test_golden_mean_mixing_table(tmp_path):
    assert dispatch(["mixing", "--k", "0..1", "--out", str(tmp_path)]) == EXIT_OK
    rows = {(int(r["k"]), r["kind"]): r for r in read_csv(tmp_path / "mixing.csv")}
    assert float(rows[0, "alpha"]["upper"]) == pytest.approx(1 / 9)
    assert float(rows[1, "alpha"]["upper"]) == pytest.approx(1 / 18)
    assert float(rows[0, "phi"]["upper"]) == pytest.approx(1 / 3)
    assert rows[0, "alpha"]["exact"] == "true"


def test_approximation_gap_table(tmp_path):
    args = ["approx-gap", "--center", "0.37", "--eps", "0.1", "--n", "6", "--N", "12,16", "--out", str(tmp_path)]
    assert dispatch(args) == EXIT_OK
    rows = read_csv(tmp_path / "approx-gap.csv")
    assert list(rows[0]) == ["n", "N", "mu_ball", "mu_inner", "mu_boundary", "theta_hat", "hit_gap_bound"]
    assert float(rows[0]["mu_ball"]) == pytest.approx(1 / 160)
    assert float(rows[0]["theta_hat"]) == pytest.approx(0.078125)
    assert float(rows[1]["theta_hat"]) < float(rows[0]["theta_hat"])
    psi = read_json(tmp_path / "approx-gap.json")["psi"]
    assert psi["12"] == pytest.approx(2 * 2.0**-12 / 0.1)


def test_cluster_count_table(tmp_path):
    args = ["cluster-count", "--center", "0.37", "--n", "10,12", "--beta", "0.1", "--out", str(tmp_path)]
    assert dispatch(args) == EXIT_OK
    rows = read_csv(tmp_path / "cluster-count.csv")
    assert [int(r["n"]) for r in rows] == [10, 12]
    assert all(1 <= int(r["intersecting"]) <= 2 for r in rows)
    assert [int(r["cluster_size"]) for r in rows] == [1, 13]
    assert [float(r["lambda_bound"]) for r in rows] == [21.0, 25.0]


def test_period_scan_table(tmp_path):
    args = ["period-scan", "--n", "4,8", "--centers", "5", "--out", str(tmp_path)]
    assert dispatch(args) == EXIT_OK
    rows = read_csv(tmp_path / "period-scan.csv")
    assert len(rows) == 10
    assert all(int(r["tau"]) >= 1 for r in rows)
    medians = read_json(tmp_path / "period-scan.json")["median_tau_over_n"]
    assert set(medians) == {"4", "8"}


def test_stein_bound_shrinks_with_the_word_length(tmp_path):
    assert dispatch(["stein-bound", "--n", "4,6,8", "--out", str(tmp_path)]) == EXIT_OK
    rows = read_csv(tmp_path / "stein-bound.csv")
    bounds = [float(r["bound"]) for r in rows]
    assert [r["word"] for r in rows] == ["0001", "000001", "00000001"]
    assert bounds == sorted(bounds, reverse=True)
    assert all(float(r["tv_exact_poisson"]) <= float(r["bound"]) for r in rows)


def test_stein_bound_from_short_to_long_words(tmp_path):
    assert dispatch(["stein-bound", "--n", "4,12", "--out", str(tmp_path)]) == EXIT_OK
    short, long = read_csv(tmp_path / "stein-bound.csv")
    assert float(short["tv_exact_poisson"]) < 0.1
    assert float(long["tv_exact_poisson"]) < float(short["tv_exact_poisson"])
    assert float(long["bound"]) < float(short["bound"])


def test_entropy_table(tmp_path):
    args = ["entropy", "--n", "8,16", "--centers", "3", "--cap", "4096", "--out", str(tmp_path)]
    assert dispatch(args) == EXIT_OK
    summary = read_json(tmp_path / "entropy.json")
    assert summary["entropy"] == pytest.approx(0.6931471805599453)
    assert len(summary["rows"]) == 6


def test_schema_of_a_summary(capsys):
    assert dispatch(["schema", "mixing"]) == EXIT_OK
    schema = orjson.loads(capsys.readouterr().out)
    assert "rows" in schema["properties"]
    assert dispatch(["schema", "nope"]) == EXIT_INVALID

"""Command line plumbing: parsing, file layout, exit codes."""

import json
import logging

import numpy as np
import pytest

from rwsre import cli, env as envm, experiments as xp
from rwsre.errors import SpecValidationError

SPEC_A = xp.canonical_regime_a_spec().to_json()
SPEC_DUAL = xp.duality_test_spec().to_json()


def _parse(*argv):
    return cli.parse_args(list(argv))


# ====================================================================
# argument parsing
# ====================================================================


def test_usage_errors_exit_with_code_2():
    for argv in (
        ["walk"],                                   # missing --spec
        ["walk", "--spec", SPEC_A, "--workers", "0"],
        ["potential", "--spec", SPEC_A, "--replicas", "0"],
        ["experiment"],                             # neither --config nor --id
        ["stats", "--input", "x.csv", "--estimator", "nope"],
        ["experiment", "--id", "not-an-experiment"],
    ):
        with pytest.raises(SystemExit) as err:
            _parse(*argv)
        assert err.value.code == 2


def test_format_defaults_depend_on_subcommand():
    assert _parse("walk", "--spec", SPEC_A).format == "json"
    assert _parse("potential", "--spec", SPEC_A).format == "csv"
    assert _parse("potential", "--spec", SPEC_A,
                  "--format", "json").format == "json"


def test_explicit_seed_is_kept_and_missing_seed_is_drawn(caplog):
    assert _parse("walk", "--spec", SPEC_A, "--seed", "42").seed == 42
    with caplog.at_level(logging.INFO, logger="rwsre.cli"):
        cfg = _parse("walk", "--spec", SPEC_A)
    assert 0 <= cfg.seed < 2 ** 32
    assert any("--seed" in rec.getMessage() for rec in caplog.records)


def test_subcommand_options_are_collected():
    cfg = _parse("bpsre", "--spec", SPEC_A, "--epochs", "7",
                 "--record", "full")
    assert cfg.options["epochs"] == 7
    assert cfg.options["record"] == "full"
    assert cfg.subcommand == "bpsre"


def test_load_spec_inline_file_and_missing(tmp_path):
    assert cli._load_spec(SPEC_A).to_json() == SPEC_A
    path = tmp_path / "spec.json"
    path.write_text(SPEC_A)
    assert cli._load_spec(str(path)).to_json() == SPEC_A
    with pytest.raises(SpecValidationError, match="not found"):
        cli._load_spec(str(tmp_path / "gone.json"))


# ====================================================================
# sample csv reading
# ====================================================================


def test_read_samples_long_format(tmp_path):
    p = tmp_path / "s.csv"
    p.write_text("# columns: sample,index,value\n"
                 "a,0,1.5\na,1,2.5\nb,0,7.0\n")
    sets = cli._read_samples_csv(str(p))
    assert np.array_equal(sets["a"], [1.5, 2.5])
    assert np.array_equal(sets["b"], [7.0])


def test_read_samples_bare_and_tabular(tmp_path):
    p = tmp_path / "bare.csv"
    p.write_text("1.0\n2.0\n\n3.0\n")
    assert np.array_equal(cli._read_samples_csv(str(p))["values"],
                          [1.0, 2.0, 3.0])
    p2 = tmp_path / "tab.csv"
    p2.write_text("# columns: x,ecdf\n0.5,0.25\n1.5,1.0\n")
    assert np.array_equal(cli._read_samples_csv(str(p2))["values"],
                          [0.5, 1.5])


def test_read_samples_rejects_mixed_and_garbage(tmp_path):
    p = tmp_path / "mix.csv"
    p.write_text("a,0,1.5\n2.0\n")
    with pytest.raises(SpecValidationError, match="mixes"):
        cli._read_samples_csv(str(p))
    p2 = tmp_path / "bad.csv"
    p2.write_text("what even is this\n")
    with pytest.raises(SpecValidationError, match="unrecognized"):
        cli._read_samples_csv(str(p2))
    with pytest.raises(SpecValidationError, match="not found"):
        cli._read_samples_csv(str(tmp_path / "none.csv"))


def test_pick_sample_disambiguation():
    sets = {"a": np.ones(2), "b": np.zeros(2)}
    assert np.array_equal(cli._pick_sample(sets, "b", "f"), np.zeros(2))
    with pytest.raises(SpecValidationError, match="available: a, b"):
        cli._pick_sample(sets, "c", "f")
    with pytest.raises(SpecValidationError, match="pick one"):
        cli._pick_sample(sets, None, "f")
    assert np.array_equal(cli._pick_sample({"only": np.ones(3)}, None, "f"),
                          np.ones(3))


def test_parse_law():
    geo = cli._parse_law("geometric:0.25")
    assert geo(0) == 0.25 and geo(-1) == 0.0
    geo1 = cli._parse_law("geometric1:0.25")
    assert geo1(1) == 0.25 and geo1(0) == 0.0
    poi = cli._parse_law("poisson:2.0")
    assert poi(0) == pytest.approx(np.exp(-2.0))
    assert poi(-3) == 0.0
    for bad in ("poisson", "poisson:-1", "geometric:1.5", "smooth:1", None):
        with pytest.raises(SpecValidationError):
            cli._parse_law(bad)


# ====================================================================
# end-to-end subcommand runs
# ====================================================================


def test_walk_run_writes_reproducible_json(tmp_path):
    d1, d2 = tmp_path / "one", tmp_path / "two"
    for d in (d1, d2):
        rc = cli.main(["walk", "--spec", SPEC_DUAL, "--seed", "7",
                       "--target-blocks", "3", "--out", str(d)])
        assert rc == 0
    doc = json.loads((d1 / "walk-7.json").read_text())
    assert doc["target_blocks"] == 3
    assert doc["duration"] >= doc["target"]
    assert (d1 / "walk-7.json").read_bytes() == \
        (d2 / "walk-7.json").read_bytes()


def test_bpsre_trace_and_epoch_runs(tmp_path):
    rc = cli.main(["bpsre", "--spec", SPEC_A, "--seed", "11",
                   "--target-blocks", "4", "--record", "full",
                   "--out", str(tmp_path)])
    assert rc == 0
    doc = json.loads((tmp_path / "bpsre-11.json").read_text())
    assert len(doc["marked_values"]) == 4

    rc = cli.main(["bpsre", "--spec", SPEC_A, "--seed", "12",
                   "--epochs", "5", "--out", str(tmp_path)])
    assert rc == 0
    doc = json.loads((tmp_path / "bpsre-epochs-12.json").read_text())
    assert doc["epochs"] == 5
    assert len(doc["samples"]["epoch_max"]) == 5  # json embeds the samples


def test_potential_run_writes_csv(tmp_path):
    rc = cli.main(["potential", "--spec", SPEC_A, "--seed", "9",
                   "--replicas", "40", "--out", str(tmp_path)])
    assert rc == 0
    doc = json.loads((tmp_path / "potential-rbar-9.json").read_text())
    assert doc["samples"] == {"file": "potential-rbar-9-samples.csv"}
    lines = (tmp_path / "potential-rbar-9-samples.csv").read_text().splitlines()
    assert lines[0] == "# columns: sample,index,value"
    assert sum(l.startswith("series_sum,") for l in lines) == 40


def test_potential_minf_run(tmp_path):
    rc = cli.main(["potential", "--spec", SPEC_A, "--seed", "3",
                   "--replicas", "30", "--kind", "minf",
                   "--bessel-steps", "64", "--out", str(tmp_path)])
    assert rc == 0
    sets = cli._read_samples_csv(str(tmp_path / "potential-minf-3-samples.csv"))
    assert set(sets) == {"coupled_limit", "path_max", "path_end", "weight_max"}
    assert np.all(sets["path_max"] >= sets["path_end"])


def test_stats_hill_and_ks2_over_csv(tmp_path):
    cli.main(["potential", "--spec", SPEC_A, "--seed", "9",
              "--replicas", "200", "--out", str(tmp_path)])
    src = str(tmp_path / "potential-rbar-9-samples.csv")
    rc = cli.main(["stats", "--input", src, "--estimator", "hill",
                   "--k-top", "40", "--seed", "1", "--out", str(tmp_path)])
    assert rc == 0
    doc = json.loads((tmp_path / "stats-hill-1.json").read_text())
    assert doc["k_top"] == 40 and doc["index"] > 0

    rc = cli.main(["stats", "--input", src, "--input-b", src,
                   "--estimator", "ks2", "--sample", "series_sum",
                   "--sample-b", "series_sum", "--seed", "2",
                   "--out", str(tmp_path)])
    assert rc == 0
    doc = json.loads((tmp_path / "stats-ks2-2.json").read_text())
    assert doc["distance"] == 0.0 and doc["p_value"] == pytest.approx(1.0)

    # comparing a set against itself in one file needs both names spelled out
    rc = cli.main(["stats", "--input", src, "--estimator", "ks2",
                   "--seed", "3", "--out", str(tmp_path)])
    assert rc == 3


def test_stats_ecdf_emits_plot_table(tmp_path):
    p = tmp_path / "vals.csv"
    p.write_text("\n".join(str(0.5 + i) for i in range(30)) + "\n")
    rc = cli.main(["stats", "--input", str(p), "--estimator", "ecdf",
                   "--seed", "5", "--out", str(tmp_path)])
    assert rc == 0
    lines = (tmp_path / "stats-ecdf-5-samples.csv").read_text().splitlines()
    assert lines[0] == "# columns: x,ecdf,frechet_fit"
    assert len(lines) == 31
    doc = json.loads((tmp_path / "stats-ecdf-5.json").read_text())
    assert doc["frechet_overlay"]["shape"] > 0


def test_experiment_by_id(tmp_path):
    rc = cli.main(["experiment", "--id", "duality", "--seed", "77",
                   "--replicas", "120", "--n", "2", "--out", str(tmp_path)])
    assert rc == 0
    doc = json.loads((tmp_path / "duality-77.json").read_text())
    assert doc["parameters"]["n_blocks"] == 2
    assert (tmp_path / "duality-77-samples.csv").exists()
    assert (tmp_path / "duality-77-timing.json").exists()


def test_experiment_campaign_config(tmp_path):
    cfg = tmp_path / "campaign.json"
    cfg.write_text(json.dumps({"experiments": [
        {"id": "duality", "label": "quick", "n_blocks": 2,
         "mc": {"replicas": 100, "base_seed": 5}},
    ]}))
    rc = cli.main(["experiment", "--config", str(cfg),
                   "--out", str(tmp_path / "out")])
    assert rc == 0
    assert (tmp_path / "out" / "quick-5.json").exists()


def test_regime_report(tmp_path):
    rc = cli.main(["regime", "--spec", SPEC_A, "--seed", "4",
                   "--out", str(tmp_path)])
    assert rc == 0
    doc = json.loads((tmp_path / "regime-4.json").read_text())
    assert doc["regime"] == "A"
    assert doc["alpha_hat"] == pytest.approx(1.0, abs=1e-6)


def test_runtime_errors_exit_with_code_3(tmp_path):
    rc = cli.main(["walk", "--spec", str(tmp_path / "missing.json"),
                   "--seed", "1", "--out", str(tmp_path)])
    assert rc == 3
    rc = cli.main(["stats", "--input", str(tmp_path / "none.csv"),
                   "--estimator", "hill", "--seed", "1",
                   "--out", str(tmp_path)])
    assert rc == 3

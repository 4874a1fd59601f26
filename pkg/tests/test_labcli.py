import json
import math
import os
import subprocess
import sys

import numpy as np
import pytest

from fluctlab import bounds
from fluctlab.errors import ConfigError, InputError
from fluctlab.haar import derive_seed
from fluctlab.labcli import (
    EXPERIMENT_IDS,
    ExperimentConfig,
    ResultTable,
    main,
    read_result_table,
    run_experiment,
    validate_config,
    write_result_table,
)

MINIMAL = {
    "experiment_id": "rqc_relax",
    "n": 4,
    "depth": 3,
    "trials": 50,
    "master_seed": 7,
}


def run_cli(args, cwd):
    return subprocess.run(
        [sys.executable, "-m", "fluctlab.labcli", *args],
        capture_output=True,
        text=True,
        cwd=cwd,
    )


def body_lines(path, drop=("# wall_time_s", "# config=")):
    with open(path, encoding="utf-8") as fh:
        return [l for l in fh.read().splitlines() if not l.startswith(drop)]


class TestValidation:
    def test_minimal_config_normalized(self):
        cfg = validate_config(dict(MINIMAL))
        assert cfg.experiment_id == "rqc_relax"
        assert cfg.params["q"] == 2  # default filled
        assert cfg.params["ensemble"] == "haar"
        assert cfg.out_path == "rqc_relax.csv"
        echo = cfg.canonical()
        assert echo["n"] == 4 and echo["record_every"] == 1

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown key"):
            validate_config(dict(MINIMAL, bogus=1))

    def test_unknown_experiment(self):
        with pytest.raises(ConfigError, match="experiment_id"):
            validate_config({"experiment_id": "nope"})

    def test_u1_parity_and_q_errors_all_reported(self):
        raw = dict(
            MINIMAL,
            ensemble="u1_conserving",
            q=3,
            initial_state="zeros",
            n=5,
        )
        with pytest.raises(ConfigError) as err:
            validate_config(raw)
        text = "; ".join(err.value.errors)
        assert "u1_conserving requires q = 2" in text
        assert "half-filling" in text
        assert "even" in text

    def test_resource_guard(self):
        with pytest.raises(ConfigError, match="exceeds guard"):
            validate_config(dict(MINIMAL, n=26))

    def test_tail_times_must_be_recorded(self):
        raw = dict(MINIMAL, experiment_id="rqc_tails", depth=6, record_every=2)
        raw["tail_times"] = [1, 2]
        with pytest.raises(ConfigError, match="not among recorded"):
            validate_config(raw)

    def test_type_errors_carry_field_path(self):
        with pytest.raises(ConfigError, match="depth: expected int"):
            validate_config(dict(MINIMAL, depth="deep"))

    def test_config_hash_ignores_workers_and_out_path(self):
        a = validate_config(dict(MINIMAL, workers=1))
        b = validate_config(dict(MINIMAL, workers=8, out_path="elsewhere.csv"))
        assert a.config_hash() == b.config_hash()
        c = validate_config(dict(MINIMAL, master_seed=8))
        assert a.config_hash() != c.config_hash()


class TestPersistence:
    def test_atomic_write_failure_leaves_nothing(self, tmp_path):
        table = ResultTable(
            experiment_id="rqc_relax",
            columns=["a", "b"],
            rows=[(1.0, "oops,comma")],
            metadata={},
        )
        target = tmp_path / "t.csv"
        with pytest.raises(InputError):
            write_result_table(table, str(target), 0.0)
        assert list(tmp_path.iterdir()) == []

    def test_row_width_checked(self, tmp_path):
        table = ResultTable("rqc_relax", ["a", "b"], [(1.0,)], {})
        with pytest.raises(InputError):
            write_result_table(table, str(tmp_path / "t.csv"), 0.0)

    def test_roundtrip(self, tmp_path):
        table = ResultTable(
            "rqc_relax",
            ["x", "label"],
            [(1.5, "yes"), (2.5, "no")],
            {"config": {"n": 4}, "config_hash": "abc"},
        )
        path = tmp_path / "t.csv"
        write_result_table(table, str(path), 1.0)
        meta, cols, rows = read_result_table(str(path))
        assert cols == ["x", "label"]
        assert rows[0]["x"] == 1.5 and rows[1]["label"] == "no"
        assert meta["config_hash"] == "abc"


class TestExperiments:
    def test_rqc_relax_matches_walk_oracle(self, tmp_path):
        cfg = validate_config(
            dict(MINIMAL, trials=4000, out_path=str(tmp_path / "r.csv"), chunk_size=512)
        )
        table = run_experiment(cfg)
        rows = {r[0]: r for r in table.rows}
        for t in (1.0, 2.0, 3.0):
            exact = bounds.brickwork_mean_purity_exact(4, 2, 0, 1, int(t))
            mean_purity = rows[t][5]
            sem = rows[t][3]  # entropy sem, same scale ballpark; use loose check
            assert abs(mean_purity - exact) < 0.02
        assert os.path.exists(cfg.out_path)

    def test_rqc_tails_depth_zero_trivial(self, tmp_path):
        raw = {
            "experiment_id": "rqc_tails",
            "n": 4,
            "depth": 0,
            "trials": 1,
            "tail_times": [0],
            "delta_s_grid": [0.0, 10.0],
            "out_path": str(tmp_path / "t.csv"),
        }
        table = run_experiment(validate_config(raw))
        assert len(table.rows) == 2
        # initial product state: entropy 0, so the fluctuation is s_max >= 0
        assert table.rows[0][2] == 1.0  # prob at grid 0
        assert table.rows[1][2] == 0.0  # prob at grid 10

    def test_rerun_identical(self, tmp_path):
        raw = dict(
            MINIMAL,
            experiment_id="rqc_tails",
            depth=3,
            trials=300,
            tail_times=[1, 3],
            delta_s_grid=[0.0, 0.2, 0.4],
        )
        a = validate_config(dict(raw, out_path=str(tmp_path / "a.csv")))
        b = validate_config(dict(raw, out_path=str(tmp_path / "b.csv")))
        run_experiment(a)
        run_experiment(b)
        assert body_lines(a.out_path) == body_lines(b.out_path)

    def test_worker_counts_agree(self, tmp_path):
        raw = dict(
            MINIMAL,
            experiment_id="rqc_tails",
            depth=3,
            trials=257,
            chunk_size=64,
            tail_times=[1, 3],
            delta_s_grid=[0.0, 0.2, 0.4],
        )
        a = validate_config(dict(raw, workers=1, out_path=str(tmp_path / "w1.csv")))
        b = validate_config(dict(raw, workers=4, out_path=str(tmp_path / "w4.csv")))
        run_experiment(a)
        run_experiment(b)
        assert body_lines(a.out_path) == body_lines(b.out_path)

    def test_ccrqc_summary_has_sector_weight(self, tmp_path):
        raw = {
            "experiment_id": "ccrqc_homog",
            "n_values": [4],
            "depth": 10,
            "trials": 64,
            "out_path": str(tmp_path / "cc.csv"),
        }
        table = run_experiment(validate_config(raw))
        assert table.metadata["summary"]["4"]["max_out_of_sector_weight"] == 0.0
        oos_col = table.columns.index("oos_weight_max")
        assert all(r[oos_col] == 0.0 for r in table.rows)

    def test_ham_relax_summary_bound(self, tmp_path):
        raw = {
            "experiment_id": "ham_relax",
            "n_values": [8],
            "num_times": 40,
            "avg_samples": 200,
            "out_path": str(tmp_path / "h.csv"),
        }
        table = run_experiment(validate_config(raw))
        s = table.metadata["summary"]["8"]
        assert s["favg"] <= s["favg_bound"]
        assert s["d_eff"] > 1.0

    def test_bounds_sweep_fig2_shape_and_flags(self, tmp_path):
        raw = {
            "experiment_id": "bounds_sweep",
            "n": 8,
            "t_grid": [1, 2, 4, 8, 16, 32, 64, 100, 128, 140, 200, 400],
            "empirical_trials": 2000,
            "chunk_size": 512,
            "out_path": str(tmp_path / "b.csv"),
        }
        table = run_experiment(validate_config(raw))
        cols = {c: i for i, c in enumerate(table.columns)}
        late = [r for r in table.rows if r[cols["bound_id"]] == "late_entropy"]
        vals = [r[cols["raw_value"]] for r in late]
        ts = [r[cols["t"]] for r in late]
        plateau_start = 0.5 * 2**8
        before = [v for t, v in zip(ts, vals) if t <= plateau_start]
        after = [v for t, v in zip(ts, vals) if t > plateau_start]
        assert all(a > b for a, b in zip(before, before[1:]))
        assert len(set(after)) == 1
        walks = [r for r in table.rows if r[cols["bound_id"]] == "purity_walk"]
        assert walks and all(r[cols["within_3sigma"]] is True for r in walks)

    def test_ham_ttf_runs(self, tmp_path):
        raw = {
            "experiment_id": "ham_ttf",
            "n_values": [8],
            "num_states": 3,
            "num_times": 200,
            "delta_s_grid": [0.02, 0.05],
            "out_path": str(tmp_path / "ttf.csv"),
        }
        table = run_experiment(validate_config(raw))
        cols = {c: i for i, c in enumerate(table.columns)}
        assert all(r[cols["n_reached"]] <= r[cols["n_states"]] for r in table.rows)
        # small thresholds are reached essentially immediately after burn-in
        assert table.rows[0][cols["n_reached"]] == 3


class TestSeedDerivation:
    def test_no_stream_collisions_over_1e6_trials(self):
        seeds = np.fromiter(
            (derive_seed(3, "rqc_tails", i) for i in range(1_000_000)),
            dtype=np.uint64,
            count=1_000_000,
        )
        assert np.unique(seeds).shape[0] == 1_000_000


class TestCli:
    def test_validate_subcommand(self, tmp_path):
        cfg_path = tmp_path / "c.json"
        cfg_path.write_text(json.dumps(MINIMAL))
        r = run_cli(["validate", str(cfg_path)], cwd=tmp_path)
        assert r.returncode == 0
        echo = json.loads(r.stdout)
        assert echo["experiment_id"] == "rqc_relax"

    def test_config_error_exit_code(self, tmp_path):
        cfg_path = tmp_path / "c.json"
        cfg_path.write_text(json.dumps(dict(MINIMAL, n=5)))
        r = run_cli(["run", str(cfg_path)], cwd=tmp_path)
        assert r.returncode == 2
        assert "config error" in r.stderr

    def test_missing_file_exit_code(self, tmp_path):
        r = run_cli(["run", str(tmp_path / "absent.json")], cwd=tmp_path)
        assert r.returncode == 2

    def test_run_and_overrides(self, tmp_path):
        cfg_path = tmp_path / "c.json"
        cfg_path.write_text(json.dumps(dict(MINIMAL, out_path="x.csv")))
        r = run_cli(
            ["run", str(cfg_path), "--trials", "20", "--seed", "9", "--out-dir", "sub"],
            cwd=tmp_path,
        )
        assert r.returncode == 0, r.stderr
        meta, _, rows = read_result_table(str(tmp_path / "sub" / "x.csv"))
        cfg_echo = json.loads(meta["config"])
        assert cfg_echo["trials"] == 20 and cfg_echo["master_seed"] == 9

    def test_sweep_bounds_requires_matching_id(self, tmp_path):
        cfg_path = tmp_path / "c.json"
        cfg_path.write_text(json.dumps(MINIMAL))
        r = run_cli(["sweep-bounds", str(cfg_path)], cwd=tmp_path)
        assert r.returncode == 2

    def test_resource_and_numerical_exit_codes(self, monkeypatch, tmp_path):
        from fluctlab import labcli
        from fluctlab.errors import NumericalValidityError, ResourceLimitError

        cfg_path = tmp_path / "c.json"
        cfg_path.write_text(json.dumps(MINIMAL))

        def boom_resource(cfg):
            raise ResourceLimitError("too big")

        def boom_numeric(cfg):
            raise NumericalValidityError("bad eigenvalue")

        monkeypatch.setitem(labcli.RUNNERS, "rqc_relax", boom_resource)
        assert main(["run", str(cfg_path)]) == 3
        monkeypatch.setitem(labcli.RUNNERS, "rqc_relax", boom_numeric)
        assert main(["run", str(cfg_path)]) == 4

    def test_committed_configs_validate(self):
        root = os.path.join(os.path.dirname(__file__), "..", "configs")
        seen = set()
        for name in sorted(os.listdir(root)):
            with open(os.path.join(root, name)) as fh:
                cfg = validate_config(json.load(fh))
            seen.add(cfg.experiment_id)
        assert seen == set(EXPERIMENT_IDS)

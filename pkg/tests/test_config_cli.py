"""Config file grammar, overrides, and the command-line interface."""

import subprocess
import sys

import pytest

from demopt import cli
from demopt.config import (
    RunConfig,
    apply_override,
    load_config,
    parse_config,
    validate_config,
)
from demopt.errors import ConfigError, TransportTimeoutError

QUADRATIC_CONFIG = """\
# smoke config: deterministic bowl, one worker
[model]
kind = "quadratic"
dim = 64

[data]
kind = none  # the bowl carries its own objective

[optimizer]
kind = demo
lr = 0.02
s = 64
k = 8

[run]
workers = 1
steps = 10
batch_size = 1
seed = 0
"""


@pytest.fixture
def config_file(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text(QUADRATIC_CONFIG)
    return p


class TestGrammar:
    def test_full_parse(self):
        cfg = parse_config(QUADRATIC_CONFIG)
        assert cfg.model.kind == "quadratic"
        assert cfg.model.dim == 64
        assert cfg.data.kind == "none"
        assert cfg.optimizer.lr == 0.02
        assert cfg.run.steps == 10

    def test_defaults_when_sections_omitted(self):
        cfg = parse_config("[run]\nsteps = 5\n")
        assert cfg.model.kind == "mlp"
        assert cfg.optimizer.kind == "demo"
        assert cfg.run.steps == 5
        assert cfg.run.workers == 4

    def test_quoted_and_bare_strings(self):
        a = parse_config('[model]\nactivation = "relu"\n')
        b = parse_config("[model]\nactivation = relu\n")
        assert a.model.activation == b.model.activation == "relu"

    def test_booleans(self):
        cfg = parse_config("[optimizer]\nsignum = false\n[model]\nbias = true\n")
        assert cfg.optimizer.signum is False
        assert cfg.model.bias is True

    def test_trailing_comment_stripped(self):
        cfg = parse_config("[run]\nsteps = 7  # short run\n")
        assert cfg.run.steps == 7

    def test_unknown_section_with_line(self):
        with pytest.raises(ConfigError) as exc:
            parse_config("[model]\nkind = mlp\n[extras]\n")
        assert exc.value.line == 3

    def test_unknown_key_with_line(self):
        with pytest.raises(ConfigError) as exc:
            parse_config("[model]\nkind = mlp\nwidth = 3\n")
        assert exc.value.line == 3
        assert "width" in str(exc.value)

    def test_type_mismatch_with_line(self):
        with pytest.raises(ConfigError) as exc:
            parse_config("[run]\nsteps = 2.5\n")
        assert exc.value.line == 2
        with pytest.raises(ConfigError):
            parse_config("[model]\nbias = 1\n")
        with pytest.raises(ConfigError):
            parse_config("[run]\nsteps = many\n")

    def test_int_promotes_to_float(self):
        cfg = parse_config("[optimizer]\nlr = 1\n")
        assert cfg.optimizer.lr == 1.0
        assert isinstance(cfg.optimizer.lr, float)

    def test_key_outside_section(self):
        with pytest.raises(ConfigError) as exc:
            parse_config("steps = 3\n")
        assert exc.value.line == 1

    def test_malformed_lines(self):
        with pytest.raises(ConfigError):
            parse_config("[run\n")
        with pytest.raises(ConfigError):
            parse_config("[run]\njust words\n")
        with pytest.raises(ConfigError):
            parse_config('[model]\nkind = "unterminated\n')
        with pytest.raises(ConfigError):
            parse_config("[run]\nsteps =\n")

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(str(tmp_path / "absent.cfg"))


class TestOverrides:
    def test_override_applies(self):
        cfg = parse_config(QUADRATIC_CONFIG)
        apply_override(cfg, "optimizer.k=4")
        apply_override(cfg, "run.steps=3")
        assert cfg.optimizer.k == 4
        assert cfg.run.steps == 3

    def test_override_errors(self):
        cfg = parse_config(QUADRATIC_CONFIG)
        with pytest.raises(ConfigError):
            apply_override(cfg, "optimizer.k")
        with pytest.raises(ConfigError):
            apply_override(cfg, "nowhere.k=1")
        with pytest.raises(ConfigError):
            apply_override(cfg, "optimizer.unknown=1")
        with pytest.raises(ConfigError):
            apply_override(cfg, "run.steps=soon")


class TestResolvedMomentum:
    def test_per_kind_defaults(self):
        cfg = RunConfig()
        for kind, expected in (("demo", 0.999), ("sgd", 0.9),
                               ("signum", 0.9), ("adamw", 0.0)):
            cfg.optimizer.kind = kind
            cfg.optimizer.momentum = None
            assert cfg.optimizer.resolved_momentum() == expected

    def test_explicit_value_wins(self):
        cfg = RunConfig()
        cfg.optimizer.momentum = 0.5
        assert cfg.optimizer.resolved_momentum() == 0.5


class TestValidation:
    def test_default_config_valid(self):
        validate_config(RunConfig())

    @pytest.mark.parametrize("mutate", [
        lambda c: setattr(c.optimizer, "momentum", 1.0),
        lambda c: setattr(c.optimizer, "momentum", -0.1),
        lambda c: setattr(c.data, "holdout_fraction", 1.0),
        lambda c: setattr(c.run, "workers", 0),
        lambda c: setattr(c.run, "steps", -1),
        lambda c: setattr(c.transport, "kind", "udp"),
        lambda c: setattr(c.transport, "timeout_s", 0.0),
        lambda c: setattr(c.model, "dtype", "float16"),
        lambda c: setattr(c.optimizer, "merge_rule", "median"),
        lambda c: setattr(c.data, "num_samples", 2),
    ])
    def test_rejections(self, mutate):
        cfg = RunConfig()
        mutate(cfg)
        with pytest.raises(ConfigError):
            validate_config(cfg)

    def test_demo_requires_positive_momentum(self):
        cfg = RunConfig()
        cfg.optimizer.momentum = 0.0
        with pytest.raises(ConfigError):
            validate_config(cfg)
        cfg.optimizer.kind = "sgd"
        validate_config(cfg)  # zero momentum is fine for the baselines

    def test_copy_is_deep_for_sections(self):
        cfg = RunConfig()
        dup = cfg.copy()
        dup.optimizer.k = 99
        assert cfg.optimizer.k == 8


class TestCliTrain:
    def test_train_writes_metrics_and_ledgers(self, config_file, tmp_path,
                                              capsys):
        out = tmp_path / "out"
        code = cli.main(["train", str(config_file), "--out", str(out)])
        assert code == 0
        lines = (out / "metrics.csv").read_text().splitlines()
        assert len(lines) == 12  # header + step 0 + 10 steps
        assert (out / "ledger_rank0.csv").exists()
        assert "final_train_loss=" in capsys.readouterr().out

    def test_set_override_changes_run(self, config_file, tmp_path):
        out = tmp_path / "out"
        code = cli.main(["train", str(config_file), "--set", "run.steps=3",
                         "--out", str(out)])
        assert code == 0
        assert len((out / "metrics.csv").read_text().splitlines()) == 5

    def test_malformed_config_exits_one_with_line(self, tmp_path, capsys):
        bad = tmp_path / "bad.cfg"
        bad.write_text("[model]\nkind = quadratic\nwheels = 4\n")
        code = cli.main(["train", str(bad)])
        assert code == 1
        err = capsys.readouterr().err
        assert "config error" in err
        assert "line 3" in err

    def test_bad_override_exits_one(self, config_file, capsys):
        code = cli.main(["train", str(config_file), "--set", "optimizer.k=lots"])
        assert code == 1
        assert "config error" in capsys.readouterr().err

    def test_invalid_k_exits_one(self, config_file, capsys):
        code = cli.main(["train", str(config_file), "--set", "optimizer.k=65"])
        assert code == 1
        assert "chunk volume" in capsys.readouterr().err

    def test_transport_error_exits_two(self, config_file, monkeypatch, capsys):
        def boom(cfg):
            raise TransportTimeoutError("no peers")

        monkeypatch.setattr(cli, "run_experiment", boom)
        code = cli.main(["train", str(config_file)])
        assert code == 2
        assert "transport error" in capsys.readouterr().err

    def test_out_dir_env_default(self, config_file, tmp_path, monkeypatch):
        target = tmp_path / "envout"
        monkeypatch.setenv("DEMO_OUT_DIR", str(target))
        code = cli.main(["train", str(config_file), "--set", "run.steps=1"])
        assert code == 0
        assert (target / "metrics.csv").exists()


class TestCliSweep:
    def test_sweep_six_points(self, config_file, tmp_path):
        out = tmp_path / "sweep"
        code = cli.main(["sweep", str(config_file),
                         "--set", "run.steps=1",
                         "--grid", "optimizer.k=1,2,4,8,16,32",
                         "--out", str(out)])
        assert code == 0
        lines = (out / "sweep.csv").read_text().splitlines()
        assert len(lines) == 7
        assert lines[0].startswith("optimizer.k,")
        for i in range(6):
            assert (out / f"run_{i:03d}.csv").exists()

    def test_bad_grid_exits_one(self, config_file, capsys):
        code = cli.main(["sweep", str(config_file), "--grid", "optimizer.k"])
        assert code == 1
        assert "config error" in capsys.readouterr().err


class TestCliBench:
    def test_bench_prints_fractions(self, capsys):
        code = cli.main(["bench-compaction", "--trials", "10", "--length",
                         "16", "--chunk", "16", "--k", "2"])
        assert code == 0
        out = capsys.readouterr().out
        assert "DCT energy fraction" in out
        assert "identity energy fraction" in out

    def test_bench_bad_arguments_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            cli.main(["bench-compaction", "--k", "99", "--chunk", "16"])
        assert exc.value.code == 2


class TestCliPlotReport:
    def _metrics_csv(self, tmp_path, config_file):
        out = tmp_path / "train"
        assert cli.main(["train", str(config_file), "--out", str(out)]) == 0
        return out / "metrics.csv"

    def test_plot_writes_svg(self, config_file, tmp_path):
        csv_path = self._metrics_csv(tmp_path, config_file)
        svg = tmp_path / "loss.svg"
        code = cli.main(["plot", str(csv_path), "--out-file", str(svg)])
        assert code == 0
        assert svg.read_text().lstrip().startswith("<?xml")

    def test_plot_without_loss_rows_usage_error(self, tmp_path):
        empty = tmp_path / "empty.csv"
        empty.write_text("step,train_loss\n")
        with pytest.raises(SystemExit) as exc:
            cli.main(["plot", str(empty)])
        assert exc.value.code == 2

    def test_plot_requires_csv_argument(self):
        with pytest.raises(SystemExit) as exc:
            cli.main(["plot"])
        assert exc.value.code == 2

    def test_report_summarizes(self, config_file, tmp_path, capsys):
        csv_path = self._metrics_csv(tmp_path, config_file)
        code = cli.main(["report", str(csv_path)])
        assert code == 0
        out = capsys.readouterr().out
        assert "rows=11 steps=10" in out
        assert "final_train_loss=" in out
        assert "payload_bytes_per_step=" in out

    def test_report_missing_file_usage_error(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            cli.main(["report", str(tmp_path / "nope.csv")])
        assert exc.value.code == 2


class TestEntryPoint:
    def test_module_invocation(self, config_file, tmp_path):
        out = tmp_path / "out"
        proc = subprocess.run(
            [sys.executable, "-m", "demopt.cli", "train", str(config_file),
             "--set", "run.steps=2", "--out", str(out)],
            capture_output=True, text=True, timeout=120,
        )
        assert proc.returncode == 0, proc.stderr
        assert (out / "metrics.csv").exists()

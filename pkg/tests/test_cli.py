import json

import pytest

from fedsim.cli import main, parse_config, read_config_file
from fedsim.errors import ConfigurationError

BASE_CONFIG = """\
# tiny desk-scale run
topology = cl
rounds = 2
lr = 0.05
seed = 3

data.classes = 3
data.per_class = 4
image_size = 8
augment = off
"""


@pytest.fixture
def config_file(tmp_path):
    p = tmp_path / "run.conf"
    p.write_text(BASE_CONFIG)
    return p


class TestConfigFile:
    def test_parses_values_and_comments(self, config_file):
        cfg = parse_config(config_file)
        assert cfg.topology == "cl"
        assert cfg.rounds == 2
        assert cfg.lr == 0.05
        assert cfg.seed == 3
        assert cfg.data.classes == 3
        assert cfg.data.per_class == 4
        assert cfg.data.image_size == 8
        assert cfg.data.augment is False

    def test_defaults_fill_missing_keys(self, tmp_path):
        p = tmp_path / "min.conf"
        p.write_text("topology = fl\n")
        cfg = parse_config(p)
        assert cfg.clients == 1
        assert cfg.rounds == 75
        assert cfg.batch_size == 8
        assert cfg.data.kind == "synthetic"

    def test_unknown_key_rejected_with_line(self, tmp_path):
        p = tmp_path / "bad.conf"
        p.write_text("topology = cl\nlearning_rate = 0.1\n")
        with pytest.raises(ConfigurationError, match="2: unknown key"):
            read_config_file(p)

    def test_duplicate_key_rejected(self, tmp_path):
        p = tmp_path / "dup.conf"
        p.write_text("topology = cl\nlr = 0.1\nlr = 0.2\n")
        with pytest.raises(ConfigurationError, match="duplicate"):
            read_config_file(p)

    def test_type_errors_rejected(self, tmp_path):
        p = tmp_path / "types.conf"
        p.write_text("topology = cl\nlr = fast\n")
        with pytest.raises(ConfigurationError, match="expected a number"):
            read_config_file(p)
        p.write_text("topology = cl\naugment = yes\n")
        with pytest.raises(ConfigurationError, match="on\\|off"):
            read_config_file(p)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigurationError, match="does not exist"):
            read_config_file(tmp_path / "nope.conf")

    def test_missing_topology(self, tmp_path):
        p = tmp_path / "no_topo.conf"
        p.write_text("lr = 0.1\n")
        with pytest.raises(ConfigurationError, match="topology"):
            parse_config(p)


class TestTrainCommand:
    def test_writes_all_artifacts(self, config_file, tmp_path, capsys):
        out = tmp_path / "out"
        code = main(["train", "--config", str(config_file), "--out", str(out)])
        assert code == 0
        assert (out / "metrics.csv").is_file()
        assert (out / "checkpoint.favg").is_file()
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["config"]["topology"] == "cl"
        assert manifest["config"]["data"]["per_class"] == 4
        assert 0.0 <= manifest["final_accuracy"] <= 1.0
        assert manifest["stop_reason"] == "cap"
        assert len(manifest["data_fingerprint"]) == 64
        lines = (out / "metrics.csv").read_text().splitlines()
        assert len(lines) == 3  # header + 2 rounds
        assert "final accuracy" in capsys.readouterr().out

    def test_cli_overrides_beat_config_file(self, config_file, tmp_path):
        out = tmp_path / "out"
        code = main([
            "train", "--config", str(config_file),
            "--topology", "fl", "--clients", "2", "--lr", "0.01", "--seed", "9",
            "--out", str(out),
        ])
        assert code == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["config"]["topology"] == "fl"
        assert manifest["config"]["clients"] == 2
        assert manifest["config"]["lr"] == 0.01
        assert manifest["config"]["seed"] == 9

    def test_repeat_runs_byte_identical(self, config_file, tmp_path):
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        assert main(["train", "--config", str(config_file), "--out", str(out_a)]) == 0
        assert main(["train", "--config", str(config_file), "--out", str(out_b)]) == 0
        assert (out_a / "metrics.csv").read_bytes() == (out_b / "metrics.csv").read_bytes()
        assert (out_a / "checkpoint.favg").read_bytes() == (out_b / "checkpoint.favg").read_bytes()


class TestInspectCommand:
    def test_iid_partition_listing(self, config_file, capsys):
        code = main([
            "inspect-partitions", "--config", str(config_file),
            "--topology", "fl", "--clients", "3",
        ])
        assert code == 0
        lines = capsys.readouterr().out.splitlines()
        assert len(lines) == 3
        assert lines[0].startswith("client 0: n=")
        assert all("sources[" in line for line in lines)

    def test_source_exclusive_listing_shows_single_tags(self, config_file, capsys):
        code = main([
            "inspect-partitions", "--config", str(config_file),
            "--topology", "mefl", "--clients", "2",
        ])
        assert code == 0
        lines = capsys.readouterr().out.splitlines()
        assert len(lines) == 2
        for line in lines:
            inside = line.split("sources[")[1].rstrip("]")
            assert len(inside.split(",")) == 1  # exactly one source tag per client


class TestCheckpointCommand:
    def test_info_and_reexport(self, config_file, tmp_path, capsys):
        out = tmp_path / "out"
        main(["train", "--config", str(config_file), "--out", str(out)])
        capsys.readouterr()  # drop the train output
        ckpt = out / "checkpoint.favg"
        code = main(["checkpoint", str(ckpt)])
        assert code == 0
        note = capsys.readouterr().out
        assert note.startswith("checkpoint: round 2")
        copy = tmp_path / "copy.favg"
        assert main(["checkpoint", str(ckpt), "--out", str(copy)]) == 0
        assert copy.read_bytes() == ckpt.read_bytes()


class TestExitCodes:
    def test_config_problems_exit_2(self, tmp_path, capsys):
        assert main(["train", "--config", str(tmp_path / "missing.conf")]) == 2
        p = tmp_path / "bad.conf"
        p.write_text("topology = ring\n")
        assert main(["train", "--config", str(p)]) == 2
        assert "config error" in capsys.readouterr().err

    def test_data_problems_exit_3(self, tmp_path, capsys):
        p = tmp_path / "folder.conf"
        p.write_text(
            "topology = cl\ndata.kind = folder\ndata.path = /nonexistent/images\n"
            "rounds = 1\nimage_size = 8\n"
        )
        assert main(["train", "--config", str(p), "--out", str(tmp_path / "out")]) == 3
        assert "data error" in capsys.readouterr().err

    def test_corrupt_message_file_exits_3(self, tmp_path):
        bad = tmp_path / "junk.favg"
        bad.write_bytes(b"not a parameter message")
        assert main(["checkpoint", str(bad)]) == 3

    @pytest.mark.filterwarnings("ignore:overflow")
    def test_numeric_blowup_exits_4(self, tmp_path, capsys):
        p = tmp_path / "explode.conf"
        p.write_text(BASE_CONFIG.replace("lr = 0.05", "lr = 1e25"))
        assert main(["train", "--config", str(p), "--out", str(tmp_path / "out")]) == 4
        assert "numeric fault" in capsys.readouterr().err

    def test_help_exits_zero(self):
        with pytest.raises(SystemExit) as exc:
            main(["--help"])
        assert exc.value.code == 0

import numpy as np
import pytest

from prefcf.cli import dispatch
from prefcf.config import RunConfig, parse_config
from prefcf.data import load_dataset, write_canonical
from prefcf.errors import ConfigError
from prefcf.persist import load_model

from conftest import make_random_table


@pytest.fixture
def dataset(tmp_path):
    """Synthetic canonical TSV with 30 users x 8 ratings on 12 items."""
    table = make_random_table(0, n_users=30, n_items=12, per_user=8)
    path = tmp_path / "data.tsv"
    write_canonical(table, path)
    return path


FAST = ["--anneal", "false", "--max-iters", "10",
        "--k-x", "2", "--k-p", "2", "--k-r", "2", "--k-pref", "2",
        "--k-classes", "2", "--k-y", "2"]


class TestConvert:
    def test_movielens_sample_preserves_line_count(self, tmp_path):
        rng = np.random.default_rng(1)
        src = tmp_path / "u.data"
        rows = [(u, i, int(rng.integers(1, 6)), 880000000 + u)
                for u, i in [(196, 242), (186, 302), (22, 377), (244, 51), (166, 346),
                             (298, 474), (115, 265), (253, 465), (305, 451), (6, 86)]]
        src.write_text("".join(f"{u}\t{i}\t{r}\t{t}\n" for u, i, r, t in rows))
        out = tmp_path / "out.tsv"
        assert dispatch(["convert", "--format", "movielens-100k",
                         "--input", str(src), "--output", str(out)]) == 0
        assert len(load_dataset(out)) == 10

    def test_missing_input_fails_cleanly(self, tmp_path, capsys):
        code = dispatch(["convert", "--format", "canonical-tsv",
                         "--input", str(tmp_path / "nope.tsv"),
                         "--output", str(tmp_path / "out.tsv")])
        assert code == 1
        assert "error:" in capsys.readouterr().err


class TestTrain:
    def test_default_class_counts_persisted(self, tmp_path, dataset):
        out = tmp_path / "dm.model"
        code = dispatch(["train", "--model", "dm", "--data", str(dataset),
                         "--output", str(out), "--max-iters", "5", "--anneal", "false"])
        assert code == 0
        text = out.read_text()
        assert "item_classes 5" in text
        assert "pref_classes 3" in text
        assert "rating_classes 10" in text

    @pytest.mark.parametrize("model", ["baseline", "mp", "am", "bc"])
    def test_other_kinds_round_trip(self, tmp_path, dataset, model):
        out = tmp_path / f"{model}.model"
        code = dispatch(["train", "--model", model, "--data", str(dataset),
                         "--output", str(out)] + FAST)
        assert code == 0
        load_model(out)


class TestPredict:
    def test_one_line_per_item(self, tmp_path, dataset, capsys):
        model = tmp_path / "dm.model"
        assert dispatch(["train", "--model", "dm", "--data", str(dataset),
                         "--output", str(model)] + FAST) == 0
        obs = tmp_path / "obs.tsv"
        obs.write_text("0\t4\n3\t2\n")
        assert dispatch(["predict", "--model", str(model), "--observed", str(obs),
                         "--items", "1,2,7"]) == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert len(lines) == 3
        for line, item in zip(lines, (1, 2, 7)):
            name, value = line.split("\t")
            assert int(name) == item
            assert 1.0 <= float(value) <= 5.0

    def test_ordering_model_needs_scale(self, tmp_path, dataset, capsys):
        model = tmp_path / "mp.model"
        assert dispatch(["train", "--model", "mp", "--data", str(dataset),
                         "--output", str(model)] + FAST) == 0
        obs = tmp_path / "obs.tsv"
        obs.write_text("0\t4\n3\t2\n5\t5\n")
        assert dispatch(["predict", "--model", str(model), "--observed", str(obs),
                         "--items", "1"]) == 1
        assert "--scale" in capsys.readouterr().err
        assert dispatch(["predict", "--model", str(model), "--observed", str(obs),
                         "--items", "1,2", "--scale", "5"]) == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert len(lines) == 2
        for line in lines:
            assert 1 <= int(line.split("\t")[1]) <= 5


class TestEvaluate:
    def test_full_grid_has_24_rows(self, tmp_path, dataset):
        out = tmp_path / "report.tsv"
        code = dispatch(["evaluate", "--data", str(dataset),
                         "--models", "dm,baseline,mp,am,bc,pd,pcc,vs",
                         "--train-users", "15", "--given", "3,4,5",
                         "--seed", "42", "--output", str(out)] + FAST)
        assert code == 0
        lines = out.read_text().splitlines()
        assert len(lines) == 25  # header + 8 models x 1 train size x 3 given
        assert lines[0].split("\t") == ["model", "train_users", "given", "mae",
                                        "n_pred", "n_abstain", "seconds"]

    def test_byte_identical_across_runs(self, tmp_path, dataset):
        outs = []
        for name in ("a.tsv", "b.tsv"):
            out = tmp_path / name
            assert dispatch(["evaluate", "--data", str(dataset),
                             "--models", "dm,pcc", "--train-users", "15",
                             "--given", "3", "--seed", "7",
                             "--output", str(out)] + FAST) == 0
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]

    def test_unknown_model_kind_exits_one(self, dataset, capsys):
        assert dispatch(["evaluate", "--data", str(dataset),
                         "--models", "svd", "--train-users", "5",
                         "--given", "3"]) == 1
        assert "svd" in capsys.readouterr().err


class TestSynth:
    def test_writes_requested_volume(self, tmp_path):
        out = tmp_path / "synth.tsv"
        assert dispatch(["synth", "--output", str(out), "--users", "10",
                         "--items", "8", "--scale", "5", "--ratings-per-user", "4",
                         "--seed", "3"] + FAST) == 0
        table = load_dataset(out)
        assert (table.num_users, table.num_items, len(table)) == (10, 8, 40)

    def test_same_seed_same_file(self, tmp_path):
        blobs = []
        for name in ("a.tsv", "b.tsv"):
            out = tmp_path / name
            dispatch(["synth", "--output", str(out), "--users", "6", "--items", "9",
                      "--ratings-per-user", "3", "--seed", "11"] + FAST)
            blobs.append(out.read_bytes())
        assert blobs[0] == blobs[1]


class TestExitCodes:
    def test_unknown_subcommand_is_usage_error(self):
        assert dispatch(["frobnicate"]) == 2

    def test_unknown_flag_is_usage_error(self):
        assert dispatch(["synth", "--output", "x", "--bogus", "1"]) == 2

    def test_no_command_is_usage_error(self):
        assert dispatch([]) == 2


class TestParseConfig:
    def test_empty_config_gives_defaults(self, tmp_path):
        path = tmp_path / "empty.cfg"
        path.write_text("# nothing here\n")
        assert parse_config(path) == RunConfig()

    def test_defaults_match_documented_values(self):
        cfg = RunConfig()
        assert (cfg.k_x, cfg.k_p, cfg.k_r) == (5, 3, 10)
        assert cfg.k_pref is None  # resolved to the rating scale at train time
        assert cfg.k_classes == 10
        assert (cfg.k_y, cfg.sigma, cfg.alpha) == (3, 1.0, 1.0)

    def test_file_values_applied(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("k_x=4\nsigma=2.5\nmode=argmax\nanneal=false\n")
        cfg = parse_config(path)
        assert (cfg.k_x, cfg.sigma, cfg.mode, cfg.anneal) == (4, 2.5, "argmax", False)

    def test_flag_overrides_file(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("k_x=4\n")
        assert parse_config(path, {"k_x": "7"}).k_x == 7

    def test_zero_sigma_rejected(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("sigma=0\n")
        with pytest.raises(ConfigError, match="sigma"):
            parse_config(path)

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("learning_rate=0.1\n")
        with pytest.raises(ConfigError, match="learning_rate"):
            parse_config(path)

    def test_type_mismatch_names_key(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("max_iters=soon\n")
        with pytest.raises(ConfigError, match="max_iters"):
            parse_config(path)

import pytest

from turbstab.config import SCHEMA, ConfigError, RunConfig, manifest_text


def test_defaults_cover_schema():
    cfg = RunConfig()
    assert set(cfg.values) == set(SCHEMA)
    cfg.stabilizer_config().validate()
    cfg.sim_config().validate()


def test_parse_comments_and_blanks():
    cfg = RunConfig()
    cfg.update_from_text("# header\n\nframes = 7   # inline\nregularizer=nltv\nnltv.h=0.2\ndelta=auto\n")
    assert cfg["frames"] == 7
    assert cfg.regularizer_spec().kind == "nltv"
    assert cfg.regularizer_spec().nltv.h == 0.2
    assert cfg.stabilizer_config().delta is None


@pytest.mark.parametrize("text,line", [("frames=3\nbogus=1\n", 2), ("\n\nframes\n", 3),
                                       ("seed=-4\n", 1), ("lambda=nan\n", 1), ("monotone=maybe\n", 1),
                                       ("regularizer=wavelet\n", 1)])
def test_rejects_bad_lines_with_line_number(text, line):
    with pytest.raises(ConfigError, match=f"cfg.txt:{line}:"):
        RunConfig().update_from_text(text, "cfg.txt")


def test_precedence_flags_over_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("frames=4\nlambda=3\n")
    cfg = RunConfig()
    cfg.update_from_file(path)
    cfg.update_from_pairs(["lambda=9"])
    assert cfg["frames"] == 4 and cfg["lambda"] == 9.0
    with pytest.raises(ConfigError):
        cfg.update_from_pairs(["lambda"])


def test_curvelet_parses_but_fails_at_use():
    cfg = RunConfig()
    cfg.set("regularizer", "curvelet")
    with pytest.raises(NotImplementedError, match="TightFrame"):
        cfg.stabilizer_config().validate()


def test_manifest_round_trips_and_omits_threads():
    cfg = RunConfig()
    cfg.update_from_pairs(["seed=42", "threads=8", "tv.rho=2.5"])
    text = manifest_text("simulate", cfg, ["a.pgm"], "0.1.0")
    assert "seed=42" in text and "threads" not in text
    again = RunConfig()
    again.update_from_text("\n".join(l for l in text.splitlines() if "=" in l and not l.startswith(("command", "input"))))
    assert {k: v for k, v in again.values.items() if k != "threads"} == \
           {k: v for k, v in cfg.values.items() if k != "threads"}

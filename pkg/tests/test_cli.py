import subprocess
import sys

import pytest

from growbench.cli import SENTINEL, main
from growbench.config import DEFAULTS_TEXT, parse_config_text
from growbench.errors import ConfigError

TINY = """\
[task]
teacher = 6:4:3
n_samples = 60
[student]
hidden = 2
steps = 30
[growth]
method = {method}
start = 10
every = 10
count = 2
opt_steps = 10
firefly_steps = 5
compare_methods = GradMax, Random
[run]
repetitions = 2
[verify]
methods = GradMax, Random
repetitions = 2
horizon = 5
[alignment]
batch_sizes = 5, 60
repetitions = 3
[correlate]
iterations = 0, 5
directions = 3
horizon = 4
"""


def write(tmp_path, text, name="run.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_print_defaults_round_trips(capsys):
    assert main(["--print-defaults"]) == 0
    out = capsys.readouterr().out
    assert out == DEFAULTS_TEXT
    spec = parse_config_text(out)
    assert spec.teacher == (20, 10, 10) and spec.run.steps == 1500
    assert spec.plan_for("GradMax").steps == [200, 400, 600, 800, 1000]


def test_minimal_config_fills_defaults():
    spec = parse_config_text("[growth]\nmethod = Random\n")
    assert spec.method == "Random" and spec.run.lr == 0.1 and spec.growth["k"] == 1
    assert spec.plan_for("FireflyOpt").events[0].epsilon == 1e-4


@pytest.mark.parametrize("text, fragment", [
    ("[student]\nsteps = 900\n", ":2: every growth step must be < student.steps"),
    ("[growth]\n\nbogus = 1\n", ":3: unknown key 'bogus'"),
    ("[nope]\n", ":1: unknown section"),
    ("[growth]\nfirefly_epsilon = 0\n", "FireflyOpt requires epsilon > 0"),
    ("[student]\nlr = abc\n", ":2: invalid value"),
    ("[growth]\nmethod = Magic\n", "unknown method"),
])
def test_invalid_configs_name_the_line(text, fragment):
    with pytest.raises(ConfigError) as exc:
        parse_config_text(text, "x.cfg")
    assert fragment in str(exc.value)


def test_cli_config_error_exit_code(tmp_path, capsys):
    assert main(["train", write(tmp_path, "[student]\nsteps = 100\n"), "--out", str(tmp_path)]) == 2
    assert "run.cfg:2" in capsys.readouterr().err
    assert main(["train", str(tmp_path / "missing.cfg")]) == 2


def test_train_is_byte_deterministic(tmp_path):
    cfg = write(tmp_path, TINY.format(method="GradMax"))
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert main(["train", cfg, "--out", str(out), "--seed", "3"]) == 0
        d = out / "GradMax" / "seed3"
        outs.append(((d / "metrics.csv").read_bytes(), (d / "events.csv").read_bytes()))
        assert sorted(p.name for p in (d / "checkpoints").iterdir()) == [
            "step_000010.json", "step_000020.json", "step_000030.json"]
        assert not (out / SENTINEL).exists()
    assert outs[0] == outs[1]


def test_verify_without_checkpoints_fails(tmp_path, capsys):
    cfg = write(tmp_path, TINY.format(method="GradMax"))
    assert main(["verify", cfg, "--out", str(tmp_path / "o")]) == 1
    assert "missing Random-run checkpoints" in capsys.readouterr().err
    assert (tmp_path / "o" / SENTINEL).exists()


def test_full_command_chain(tmp_path):
    cfg = write(tmp_path, TINY.format(method="Random"))
    out = tmp_path / "o"
    for cmd in ("compare", "verify", "alignment", "correlate"):
        assert main([cmd, cfg, "--out", str(out)]) == 0, cmd
        assert (out / f"{cmd}_summary.txt").read_text()
    summary = (out / "compare_summary.txt").read_text()
    for label in ("GradMax", "Random", "BaselineSmall", "BaselineBig"):
        assert label in summary
    assert (out / "Random" / "seed1" / "metrics.csv").exists()
    for f in ("verify/study_a.csv", "verify/study_b.csv", "verify/study_c.csv",
              "alignment/alignment.csv", "correlate/correlation.csv", "correlate/singular_values.csv"):
        assert (out / f).stat().st_size > 0
    assert not (out / SENTINEL).exists()


def test_console_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "growbench.cli", "--print-defaults"],
                       capture_output=True, text=True, check=True)
    assert r.stdout.startswith("# Every key is optional")

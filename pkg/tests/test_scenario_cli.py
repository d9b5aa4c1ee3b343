import json
import os
import subprocess
import sys

import pytest

from resalloc.cli import main
from resalloc.scenario import dump_scenario, load_scenario, parse_scenario
from resalloc.simulator import ConfigError, ScenarioConfig
from resalloc.trace import TraceFormatError, load, loads

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
TINY = os.path.join(ROOT, "scenarios", "tiny.yaml")


def test_parse_tiny_scenario():
    cfg = load_scenario(TINY)
    assert cfg.process_count == 2 and cfg.K == 1 and cfg.seed == 7
    assert cfg.offers[0][0].level(0) == 1


@pytest.mark.parametrize("text,field,line", [
    ("scenario_version: 1\nprocess_count: 2\nF: 0\n", "F", 3),
    ("scenario_version: 1\nname: x\nbogus: 3\n", "bogus", 3),
    ("scenario_version: 1\narrival_prob: 2.0\n", "arrival_prob", 2),
    ("scenario_version: 1\n\nlowering: often\n", "lowering", 3),
    ("scenario_version: 2\n", "scenario_version", 1),
    ("name: x\n", "scenario_version", 1),
    ("scenario_version: 1\noffers: {0: [{0: 5}]}\n", "offers", 2),
])
def test_scenario_errors_name_field_and_line(text, field, line):
    with pytest.raises(ConfigError) as info:
        parse_scenario(text)
    assert info.value.field == field and info.value.line == line
    assert f"line {line}" in str(info.value)


def test_scenario_syntax_error_has_line():
    with pytest.raises(ConfigError) as info:
        parse_scenario("scenario_version: 1\nK: [1, 2\n")
    assert info.value.line is not None


def test_scenario_dump_round_trip():
    cfg = ScenarioConfig(process_count=3, K=2, resource_count=2, abort_prob={25: 0.1},
                         offers={0: [{0: 2}], 1: [{1: 1}], 2: [{0: 1, 1: 1}]})
    assert parse_scenario(dump_scenario(cfg)) == cfg


def test_simulate_then_check_trace(tmp_path, capsys):
    out = tmp_path / "t.jsonl"
    assert main(["simulate", TINY, "--seed", "7", "-o", str(out)]) == 0
    assert out.exists()
    assert main(["check-trace", str(out)]) == 0
    assert main(["stats", str(out)]) == 0
    assert main(["starve", str(out), "--budget", "500"]) == 0
    assert main(["theorem2", str(out), "--index", "200"]) == 0
    capsys.readouterr()
    assert main(["--json", "stats", str(out)]) == 0
    data = json.loads(capsys.readouterr().out)
    assert data["passages"] > 0 and data["mismatches"] == []


def test_check_trace_rejects_spliced_jump(tmp_path, capsys):
    out = tmp_path / "t.jsonl"
    main(["simulate", TINY, "--steps", "500", "-o", str(out)])
    lines = out.read_text().splitlines()
    for k, line in enumerate(lines[1:-1], 1):
        rec = json.loads(line)
        if rec["step"][0] == "Forward" and rec["step"][2] == 23:
            rec["ctl"][0] = 26
            lines[k] = json.dumps(rec)
            break
    out.write_text("\n".join(lines) + "\n")
    capsys.readouterr()
    assert main(["check-trace", str(out)]) == 1
    assert "unless" in capsys.readouterr().err


def test_check_trace_rejects_forged_step(tmp_path, capsys):
    out = tmp_path / "t.jsonl"
    main(["simulate", TINY, "--steps", "300", "-o", str(out)])
    lines = out.read_text().splitlines()
    rec = json.loads(lines[5])
    rec["step"] = ["Forward", 0, 27, -1, "", None]
    lines[5] = json.dumps(rec)
    out.write_text("\n".join(lines) + "\n")
    assert main(["check-trace", str(out)]) == 1


def test_usage_errors(tmp_path):
    assert main(["bogus"]) == 2
    assert main(["simulate", TINY, "--frobnicate"]) == 2
    assert main([]) == 2
    bad = tmp_path / "bad.yaml"
    bad.write_text("scenario_version: 1\nK: 0\n")
    assert main(["simulate", str(bad)]) == 2
    assert main(["check-trace", str(tmp_path / "missing.jsonl")]) == 2


def test_explore_exit_codes(tmp_path):
    assert main(["explore", TINY]) == 0
    assert main(["explore", TINY, "--states", "50"]) == 3
    mut = tmp_path / "mut.yaml"
    mut.write_text(open(TINY).read() + "variant: {skip_prio_guard: true}\n")
    assert main(["explore", str(mut), "--stop"]) == 1


def test_newer_trace_version_refused(tmp_path):
    out = tmp_path / "t.jsonl"
    main(["simulate", TINY, "--steps", "50", "-o", str(out)])
    lines = out.read_text().splitlines()
    head = json.loads(lines[0])
    head["version"] = 99
    lines[0] = json.dumps(head)
    with pytest.raises(TraceFormatError):
        loads("\n".join(lines))
    out.write_text("\n".join(lines) + "\n")
    assert main(["check-trace", str(out)]) == 2


def test_trace_file_round_trip(tmp_path):
    out = tmp_path / "t.jsonl"
    main(["simulate", TINY, "--steps", "400", "-o", str(out)])
    tr = load(str(out))
    assert len(tr) == 400 and tr.status == "completed"
    assert tr.dumps() == out.read_text()


def test_output_independent_of_hash_seed(tmp_path):
    digests = set()
    for seed in ("0", "1", "12345"):
        out = tmp_path / f"t{seed}.jsonl"
        env = dict(os.environ, PYTHONHASHSEED=seed)
        subprocess.run([sys.executable, "-m", "resalloc", "simulate", TINY, "--steps", "2000",
                        "-o", str(out)], check=True, env=env, capture_output=True)
        digests.add(out.read_bytes())
    assert len(digests) == 1

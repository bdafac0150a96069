import json
import shutil
import subprocess
import sys

import pytest

from bagutil import make_bag
from p2pforge.cli import main
from p2pforge.evidence import iter_records, read_layout
from p2pforge.signature import SCHEMA_KEY, serialize, standard_signature


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def good(tmp_path):
    path = tmp_path / "good.json"
    path.write_bytes(serialize(standard_signature()))
    return path


@pytest.fixture
def dup(tmp_path):
    doc = json.loads(serialize(standard_signature()))
    doc[SCHEMA_KEY]["commands"][1]["opcode"] = 1
    path = tmp_path / "dup.json"
    path.write_text(json.dumps(doc))
    return path


def test_sig_validate(good, dup, capsys):
    code, out, _ = run(["sig", "validate", good], capsys)
    assert code == 0 and "valid" in out
    code, out, err = run(["sig", "validate", dup], capsys)
    assert code == 1 and "DuplicateOpcode" in out + err


def test_sig_digest_stable(good, capsys):
    _, a, _ = run(["sig", "digest", good], capsys)
    _, b, _ = run(["sig", "digest", good], capsys)
    assert a == b
    assert len(a.strip()) == 128 and int(a.strip(), 16) >= 0


def test_sig_import_export_list(tmp_path, good, capsys):
    reg = tmp_path / "reg"
    code, _, _ = run(["sig", "import", good, "--registry", reg], capsys)
    assert code == 0
    code, out, _ = run(["sig", "list", "--registry", reg], capsys)
    assert "simnet" in out
    bundle = tmp_path / "b.bundle"
    code, _, _ = run(["sig", "export", "-o", bundle, "--registry", reg], capsys)
    assert code == 0
    code, _, _ = run(["sig", "import", bundle, "--registry", tmp_path / "reg2"], capsys)
    assert code == 0
    code, _, _ = run(["sig", "import", bundle, "--registry", tmp_path / "reg2"], capsys)
    assert code == 1  # duplicates reported


def _inv(tmp_path, **over):
    cfg = {"kind": "enumerate", "transport": "sim", "seed": 5,
           "sim": {"node_count": 60}, "params": {"n_clients": 2}}
    cfg.update(over)
    path = tmp_path / "inv.json"
    path.write_text(json.dumps(cfg))
    return path


def test_investigate_enumerate(tmp_path, capsys):
    out_dir = tmp_path / "out"
    code, out, _ = run(["investigate", _inv(tmp_path), "--output-dir", out_dir], capsys)
    assert code == 0
    report = json.loads((out_dir / "report.json").read_text())["p2pforge_report_v1"]
    assert report["findings"]["footprint"] == 60
    assert "footprint: 60" in (out_dir / "summary.txt").read_text()


def test_investigate_deterministic(tmp_path, capsys):
    cfg = _inv(tmp_path, bag="ev.bag")
    run(["investigate", cfg, "--output-dir", tmp_path / "a"], capsys)
    run(["investigate", cfg, "--output-dir", tmp_path / "b"], capsys)
    assert (tmp_path / "a" / "report.json").read_bytes() == (tmp_path / "b" / "report.json").read_bytes()


def test_takeover_loopback_refused(tmp_path, capsys):
    cfg = _inv(tmp_path, kind="takeover", transport="loopback", params={})
    code, _, err = run(["investigate", cfg, "--output-dir", tmp_path], capsys)
    assert code == 2 and "takeover" in err


@pytest.mark.parametrize("over,field", [
    ({"kind": "nope"}, "kind"),
    ({"params": {"n_clients": 0}}, "params.n_clients"),
    ({"sim": {"node_count": 0}}, "node_count"),
    ({"bogus": 1}, "bogus"),
    ({"kind": "collect", "params": {}}, "bag"),
])
def test_config_errors(tmp_path, capsys, over, field):
    code, _, err = run(["investigate", _inv(tmp_path, **over)], capsys)
    assert code == 2 and field in err


@pytest.mark.parametrize("kind,params", [
    ("anatomy", {"duration": 300, "command_count": 30}),
    ("collect", {"duration": 50}),
    ("takeover", {}),
])
def test_investigate_other_kinds(tmp_path, capsys, kind, params):
    cfg = _inv(tmp_path, kind=kind, params=params, bag="ev.bag")
    code, out, err = run(["investigate", cfg, "--output-dir", tmp_path / "o"], capsys)
    assert code == 0, err
    findings = json.loads((tmp_path / "o" / "report.json").read_text())["p2pforge_report_v1"]["findings"]
    assert findings["bag"]["verified"] is True


def test_bag_commands(tmp_path, good, capsys):
    bag = tmp_path / "s.bag"
    make_bag(bag, 20_000, chunk_size=4096)
    code, out, _ = run(["bag", "verify", bag], capsys)
    assert code == 0 and "PASS" in out
    code, out, _ = run(["bag", "replay", bag, "--sig", good], capsys)
    assert code == 0
    records = sum(1 for _ in iter_records(bag))
    assert len(out.strip().splitlines()) == records
    code, out, _ = run(["bag", "transfer", bag, tmp_path / "copy.bag", "--fault", "first"], capsys)
    assert code == 0
    assert (tmp_path / "copy.bag").read_bytes() == bag.read_bytes()
    tampered = tmp_path / "t.bag"
    shutil.copy(bag, tampered)
    data = bytearray(tampered.read_bytes())
    data[read_layout(tampered).index[1].offset + 3] ^= 0xFF
    tampered.write_bytes(data)
    code, out, _ = run(["bag", "verify", tampered], capsys)
    assert code == 1 and "chunk 1: FAIL" in out


def test_sim_run_writes_events(tmp_path, capsys):
    cfg = tmp_path / "sim.json"
    cfg.write_text(json.dumps({"seed": 1, "node_count": 20}))
    code, out, _ = run(["sim", "run", cfg, "--until", 100, "--output-dir", tmp_path], capsys)
    assert code == 0
    assert (tmp_path / "events.tsv").read_text().startswith("0\tspawn")


def test_console_script_entry():
    res = subprocess.run([sys.executable, "-m", "p2pforge", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "investigate" in res.stdout

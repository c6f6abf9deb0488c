import json

import numpy as np
import pytest

from stegosense.cli import main
from stegosense.costs import CostMap
from stegosense.embedding import ChangeProbabilities, pattern_from_bytes
from stegosense.image_io import load_pgm, save_pgm, synth_cover
from stegosense.oracles import load_oracle


def kv(line):
    return dict(item.split("=", 1) for item in line.split())


@pytest.fixture
def cover(tmp_path):
    p = tmp_path / "cover.pgm"
    save_pgm(p, synth_cover("textured(13)", 32, 32, 3))
    return p


def test_cost_on_saturated_cover(tmp_path, capsys):
    p = tmp_path / "white.pgm"
    save_pgm(p, synth_cover("flat(255)", 16, 16, 0))
    assert main(["cost", str(p), "-o", str(tmp_path / "w.cost"), "-k", "3"]) == 0
    out = kv(capsys.readouterr().out.strip())
    assert out["wet"] == "256" and out["pixels"] == "256"


def test_cost_is_deterministic_across_threads(tmp_path, cover, capsys):
    outs = []
    for i, threads in enumerate(["1", "1", "3", "auto"]):
        dst = tmp_path / f"c{i}.cost"
        assert main(["cost", str(cover), "-o", str(dst), "--threads", threads]) == 0
        outs.append(dst.read_bytes())
    assert all(o == outs[0] for o in outs)
    rho = CostMap.from_bytes(outs[0])
    assert rho.shape == (32, 32)
    line = kv(capsys.readouterr().out.splitlines()[0])
    assert {"min", "max", "mean", "wet"} <= set(line)


def test_missing_weights_is_a_config_error(tmp_path, cover, capsys):
    missing = tmp_path / "absent.txt"
    code = main(["cost", str(cover), "-o", str(tmp_path / "x.cost"), "--oracle", "linear", "--weights", str(missing)])
    assert code == 2
    assert str(missing) in capsys.readouterr().err


def test_missing_input_is_io_error(tmp_path):
    assert main(["cost", str(tmp_path / "none.pgm"), "-o", str(tmp_path / "x")]) == 3


def test_bad_pgm_is_parse_error(tmp_path):
    p = tmp_path / "bad.pgm"
    p.write_bytes(b"P6\n5 5\n255\n" + bytes(75))
    assert main(["cost", str(p), "-o", str(tmp_path / "x")]) == 2


def test_embed_zero_payload(tmp_path, cover, capsys):
    stego = tmp_path / "s.pgm"
    meta = tmp_path / "m.json"
    assert main(["embed", str(cover), "-o", str(stego), "--alpha", "0", "--meta", str(meta), "--method", "hill"]) == 0
    assert np.array_equal(load_pgm(stego), load_pgm(cover))
    m = json.loads(meta.read_text())
    assert m["change_count"] == 0 and kv(capsys.readouterr().out)["changes"] == "0"


def test_embed_is_reproducible(tmp_path, cover):
    runs = []
    for i in range(2):
        d = tmp_path / str(i)
        d.mkdir()
        args = ["embed", str(cover), "-o", str(d / "s.pgm"), "--alpha", "0.4", "--seed", "9",
                "--pattern", str(d / "s.patt"), "--probs", str(d / "s.prob"), "--meta", str(d / "m.json"),
                "--threads", str(1 + 2 * i)]
        assert main(args) == 0
        runs.append([(d / n).read_bytes() for n in ("s.pgm", "s.patt", "s.prob", "m.json")])
    assert runs[0] == runs[1]
    meta = json.loads(runs[0][3])
    assert {"lambda", "entropy_bits", "expected_distortion", "change_count", "seed"} <= set(meta)
    assert meta["cost"]["k"] == 13 and meta["cost"]["oracle"] == "filter"
    s = pattern_from_bytes(runs[0][1])
    assert np.count_nonzero(s) == meta["change_count"] > 0
    assert ChangeProbabilities.from_bytes(runs[0][2]).rule == "capped"


def test_embed_from_cost_file(tmp_path, cover):
    cost = tmp_path / "c.cost"
    assert main(["cost", str(cover), "-o", str(cost), "--method", "hill"]) == 0
    assert main(["embed", str(cover), "--cost", str(cost), "-o", str(tmp_path / "s.pgm"), "--alpha", "0.2",
                 "--rule", "gibbs"]) == 0


def test_embed_infeasible_payload(tmp_path, cover, capsys):
    assert main(["embed", str(cover), "-o", str(tmp_path / "s.pgm"), "--alpha", "1.7"]) == 4
    assert "max_payload=" in capsys.readouterr().err


def write_config(tmp_path, **over):
    cfg = {
        "covers": {"synthetic": {"count": 40, "size": 24, "seed": 1}},
        "oracle": {"kind": "filter"},
        "methods": ["proposed"],
        "filter_sizes": [1, 3, 7, 13, 21],
        "payloads": [0.4],
        "detector": {"epochs": 10},
    }
    cfg.update(over)
    p = tmp_path / "sweep.json"
    p.write_text(json.dumps(cfg))
    return p


def test_sweep_filter_sizes_table(tmp_path, capsys):
    cfg = write_config(tmp_path)
    assert main(["sweep", str(cfg), "-o", str(tmp_path / "r1.json")]) == 0
    rows = [l for l in capsys.readouterr().out.splitlines() if l.startswith("proposed")]
    assert [int(r.split()[1]) for r in rows] == [1, 3, 7, 13, 21]
    assert main(["sweep", str(cfg), "-o", str(tmp_path / "r2.json"), "--threads", "2"]) == 0
    assert (tmp_path / "r1.json").read_bytes() == (tmp_path / "r2.json").read_bytes()


def test_sweep_empty_payloads_is_config_error(tmp_path):
    assert main(["sweep", str(write_config(tmp_path, payloads=[])), "-o", str(tmp_path / "r.json")]) == 2


def test_sweep_missing_config_is_io_error(tmp_path):
    assert main(["sweep", str(tmp_path / "nope.json"), "-o", str(tmp_path / "r.json")]) == 3


def make_pairs(tmp_path, n=6, alpha=0.4):
    cdir, sdir = tmp_path / "covers", tmp_path / "stegos"
    assert main(["synth", "-o", str(cdir), "--count", str(n), "--size", "24"]) == 0
    sdir.mkdir()
    for p in sorted(cdir.glob("*.pgm")):
        assert main(["embed", str(p), "-o", str(sdir / p.name), "--alpha", str(alpha), "--method", "hill",
                     "--rule", "gibbs"]) == 0
    return cdir, sdir


def test_train_oracle_zero_epochs(tmp_path, capsys):
    cdir, sdir = make_pairs(tmp_path)
    out = tmp_path / "w.txt"
    assert main(["train-oracle", "--covers", str(cdir), "--stegos", str(sdir), "-o", str(out), "--epochs", "0"]) == 0
    oracle = load_oracle(out)
    assert not oracle.weights.any() and oracle.bias == 0.0
    assert "accuracy=0.5" in capsys.readouterr().out


def test_train_oracle_on_hill_stegos_is_deterministic(tmp_path, capsys):
    cdir, sdir = make_pairs(tmp_path)
    capsys.readouterr()
    outs = []
    for name in ("a.txt", "b.txt"):
        assert main(["train-oracle", "--covers", str(cdir), "--stegos", str(sdir), "-o", str(tmp_path / name),
                     "--seed", "4"]) == 0
        outs.append((tmp_path / name).read_bytes())
    assert outs[0] == outs[1]
    lines = capsys.readouterr().out.splitlines()
    assert 0.0 <= float(kv(lines[0])["accuracy"]) <= 1.0
    # the trained weights drive a cost map through the CLI
    cover = next(cdir.glob("*.pgm"))
    assert main(["cost", str(cover), "-o", str(tmp_path / "c.cost"), "--oracle", "linear",
                 "--weights", str(tmp_path / "a.txt")]) == 0


def test_train_oracle_mismatched_dirs(tmp_path):
    cdir, sdir = make_pairs(tmp_path, n=3)
    next(sdir.glob("*.pgm")).unlink()
    assert main(["train-oracle", "--covers", str(cdir), "--stegos", str(sdir), "-o", str(tmp_path / "w")]) == 2


def test_argparse_errors_exit_2(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["cost", "x.pgm", "-o", "y", "-k", "4"])
    assert exc.value.code == 2

import csv
import json

import numpy as np
import pytest

from bandalloc.cli import main
from conftest import CONFIGS


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_region_two_band(tmp_path, capsys):
    out = tmp_path / "env.csv"
    code = main(["region", str(CONFIGS / "two_band.json"), "--target", "s2", "--sweep", "s1", "--grid", "21", "--out", str(out)])
    assert code == 0
    rows = read_csv(out)
    assert len(rows) == 21
    assert float(rows[0]["lambda_target_max"]) == pytest.approx(0.7875)
    assert float(rows[-1]["lambda_sweep"]) == pytest.approx(0.7)
    man = json.loads((tmp_path / "env.csv.manifest.json").read_text())
    assert man["command"] == "region"
    assert len(man["config_digest"]) == 64
    assert "closed-form agreement" in capsys.readouterr().out


def test_region_swapped_roles_still_agree(tmp_path):
    out = tmp_path / "env.csv"
    assert main(["region", str(CONFIGS / "two_band.json"), "--target", "1", "--sweep", "2", "--grid", "11", "--out", str(out)]) == 0
    assert float(read_csv(out)[0]["lambda_target_max"]) == pytest.approx(0.7)


def test_region_requires_fixed_rates(tmp_path):
    code = main(["region", str(CONFIGS / "four_band.json"), "--target", "s2", "--sweep", "s1", "--out", str(tmp_path / "x.csv")])
    assert code == 2


def test_region_four_band_slice(tmp_path):
    out = tmp_path / "slice.csv"
    args = ["region", str(CONFIGS / "four_band.json"), "--target", "s2", "--sweep", "s1",
            "--fixed", "s3=0.1,s4=0.1", "--grid", "11", "--out", str(out)]
    assert main(args) == 0
    vals = [float(r["lambda_target_max"]) for r in read_csv(out)]
    assert all(b <= a + 1e-9 for a, b in zip(vals, vals[1:]))


def test_decompose_two_band(tmp_path):
    out = tmp_path / "sched.json"
    assert main(["decompose", str(CONFIGS / "two_band.json"), "--rates", "s1=0.5", "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["target"] == "s2"
    assert doc["rates"]["s2"] == pytest.approx(0.4315476, abs=1e-7)
    assert doc["reconstruction_error"] <= 1e-9
    assert sum(t["q"] for t in doc["schedule"]) == pytest.approx(1.0)
    assert doc["manifest"]["command"] == "decompose"


def test_decompose_infeasible(tmp_path):
    code = main(["decompose", str(CONFIGS / "two_band.json"), "--rates", "s1=0.71", "--out", str(tmp_path / "x.json")])
    assert code == 3
    code = main(["decompose", str(CONFIGS / "two_band.json"), "--rates", "s1=0.5,s2=0.5", "--out", str(tmp_path / "x.json")])
    assert code == 3


def test_decompose_bad_config(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"bands": [{"pi": 0.5}], "sus": [{"lambda": 2.0, "pout_bar": [0.5, 0.1]}]}))
    assert main(["decompose", str(bad), "--out", str(tmp_path / "x.json")]) == 2
    (tmp_path / "notjson.json").write_text("{")
    assert main(["decompose", str(tmp_path / "notjson.json"), "--out", str(tmp_path / "x.json")]) == 2
    assert main(["decompose", str(CONFIGS / "two_band.json"), "--rates", "s9=0.1", "--out", str(tmp_path / "x.json")]) == 2


def test_three_by_three_direction(tmp_path):
    # band 3 is SU 2's best band, so its share there must grow with SU 2's demand
    shares = []
    for lam in (0.1, 0.3, 0.35, 0.4):
        out = tmp_path / f"d{lam}.json"
        code = main(["decompose", str(CONFIGS / "three_band.json"), "--rates", f"s1=0.1,s2={lam}", "--out", str(out)])
        assert code == 0
        shares.append(json.loads(out.read_text())["omega"][2][1])
    assert all(b >= a - 1e-12 for a, b in zip(shares, shares[1:]))
    assert shares[-1] > shares[0] + 0.1


def test_simulate_schedule_round_trip(tmp_path):
    sched = tmp_path / "sched.json"
    assert main(["decompose", str(CONFIGS / "two_band.json"), "--rates", "s1=0.4", "--out", str(sched)]) == 0
    out = tmp_path / "sim"
    code = main(["simulate", str(CONFIGS / "two_band.json"), "--schedule", str(sched), "--rates", "s1=0.3,s2=0.3",
                 "--horizon", "20000", "--seeds", "0,1,2", "--out", str(out)])
    assert code == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["merged_verdicts"]["s1"] == "stable"
    assert summary["manifest"]["seeds"] == [0, 1, 2]
    assert summary["manifest"]["rng_algorithm"] == "numpy.random.PCG64"
    rows = read_csv(out / "trace_seed1.csv")
    assert rows[0].keys() == {"slot", "queue_id", "kind", "length"}


def test_simulate_variants(tmp_path):
    cfg = str(CONFIGS / "two_band.json")
    assert main(["simulate", cfg, "--variant", "fixed", "--map", "2,1", "--scale", "0.5",
                 "--horizon", "2000", "--out", str(tmp_path / "f")]) == 0
    assert main(["simulate", cfg, "--variant", "Shat", "--gamma", "[[0.5,0.5],[0.5,0.5]]",
                 "--horizon", "2000", "--out", str(tmp_path / "g")]) == 0
    doc = json.loads((tmp_path / "g" / "summary_seed0.json").read_text())
    assert doc["collisions"] >= 0 and doc["variant"] == "Shat"
    assert main(["simulate", cfg, "--variant", "Shat", "--out", str(tmp_path / "h")]) == 2
    assert main(["simulate", cfg, "--variant", "fixed", "--map", "1,1", "--out", str(tmp_path / "h")]) == 2


def test_simulate_default_schedule_parallel(tmp_path):
    out = tmp_path / "sim"
    code = main(["simulate", str(CONFIGS / "two_band.json"), "--scale", "0.5", "--horizon", "10000",
                 "--seeds", "3,4", "--jobs", "2", "--out", str(out)])
    assert code == 0
    assert (out / "summary_seed4.json").exists()


def test_compare(tmp_path):
    out = tmp_path / "cmp.csv"
    code = main(["compare", str(CONFIGS / "two_band.json"), "--queries", str(CONFIGS / "two_band_queries.json"),
                 "--restarts", "8", "--out", str(out)])
    assert code == 0
    rows = read_csv(out)
    assert len(rows) == 5
    r = rows[2]
    assert float(r["lambda_fixed"]) <= float(r["lambda_Shat_lower_bound"]) <= float(r["lambda_S"])
    assert (tmp_path / "cmp.csv.manifest.json").exists()


def test_compare_single_su(tmp_path):
    cfg = tmp_path / "one.json"
    cfg.write_text(json.dumps({"bands": [{"pi": 0.5}, {"pi": 0.8}], "sus": [{"lambda": 0.1, "pout_bar": [0.9, 0.5]}]}))
    out = tmp_path / "cmp.csv"
    assert main(["compare", str(cfg), "--queries", '[{"target": "s1"}]', "--restarts", "2", "--out", str(out)]) == 0
    r = read_csv(out)[0]
    assert float(r["lambda_S"]) == float(r["lambda_fixed"]) == pytest.approx(0.45)
    assert float(r["lambda_Shat_lower_bound"]) == pytest.approx(0.45)


def test_physical_config_region(tmp_path):
    out = tmp_path / "p.csv"
    assert main(["region", str(CONFIGS / "physical_2x2.json"), "--target", "2", "--sweep", "1",
                 "--grid", "5", "--out", str(out)]) == 0
    assert np.isfinite(float(read_csv(out)[0]["lambda_target_max"]))


def test_version(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0


def test_numerical_disagreement_exit_code(tmp_path, monkeypatch):
    import bandalloc.cli as cli
    from bandalloc.region import ClosedForm2x2

    monkeypatch.setattr(cli, "closed_form_2x2", lambda P, lam: ClosedForm2x2(0.0, 99.0, True))
    code = main(["region", str(CONFIGS / "two_band.json"), "--target", "s2", "--sweep", "s1", "--grid", "3",
                 "--out", str(tmp_path / "x.csv")])
    assert code == 4

import csv
import json

import pytest

from twinalign.cli import main
from twinalign.provenance import hash_file


def write_config(path, **overrides):
    cfg = {
        "name": "run",
        "dataset": "iris",
        "seed": 0,
        "aligner": {"method": "MASH"},
        "train": {"epochs": 20},
        "eval": {"methods": ["MASH"], "lambdas": [0, 10], "seeds": [0], "n_perm": 19},
    }
    cfg.update(overrides)
    path.write_text(json.dumps(cfg))
    return path


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.setenv("TWINALIGN_OUTPUT_ROOT", str(tmp_path / "out"))
    return tmp_path


def out_dir(workdir, name="run"):
    return workdir / "out" / "out" / name


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def test_pipeline(workdir):
    cfg = write_config(workdir / "c.json")
    for cmd in (["split"], ["align"], ["train"], ["extend", "--domain", "Y"], ["crossmap", "--from", "X"]):
        assert main([cmd[0], "--config", str(cfg), *cmd[1:]]) == 0
    out = out_dir(workdir)
    emb = read_csv(out / "embedding.csv")
    assert len(emb) == 300 and list(emb[0]) == ["domain", "row_index", "e_1", "e_2"]
    mapped = read_csv(out / "crossmap_XtoY.csv")
    pair = json.loads((out / "split" / "pair.json").read_text())
    assert len(mapped[0]) - 1 == len(pair["y_features"])  # d_y columns after row_index
    assert len(mapped) == len(pair["partition"]["x_test"])
    extended = read_csv(out / "extend_Y.csv")
    assert list(extended[0]) == ["row_index", "e_1", "e_2"]
    chain = json.loads((out / "crossmap_XtoY.json").read_text())["chain"]
    assert [c["stage"] for c in chain] == ["dataset", "split", "anchors", "embedding", "model", "crossmap"]


def test_history_rows_and_loss_identity(workdir):
    cfg = write_config(workdir / "c.json", train={"epochs": 15, "lam": 3.0})
    assert main(["align", "--config", str(cfg)]) == 0
    assert main(["train", "--config", str(cfg)]) == 0
    rows = read_csv(out_dir(workdir) / "history.csv")
    assert len(rows) == 15
    for r in rows:
        v = {k: float(x) for k, x in r.items()}
        recon = v["recon_x"] + v["recon_y"]
        align = v["align_x"] + v["align_y"]
        anchor = v["anchor_x"] + v["anchor_y"]
        assert v["total"] == pytest.approx(recon + 3.0 * align + anchor, abs=1e-9)


def test_outputs_idempotent(workdir):
    cfg = write_config(workdir / "c.json")
    out = out_dir(workdir)
    digests = []
    for _ in range(2):
        for cmd in (["align"], ["train"], ["crossmap", "--from", "Y"]):
            assert main([cmd[0], "--config", str(cfg), *cmd[1:]]) == 0
        digests.append([hash_file(out / f) for f in ("embedding.csv", "embedding.json", "model.json",
                                                     "history.csv", "crossmap_YtoX.csv", "crossmap_YtoX.json")])
    assert digests[0] == digests[1]


def test_eval_rows_summary_and_plot(workdir):
    cfg = write_config(workdir / "c.json")
    assert main(["eval", "lambda-sweep", "--config", str(cfg)]) == 0
    out = out_dir(workdir) / "eval"
    rows = read_csv(out / "lambda-sweep.csv")
    assert [(r["method"], float(r["lam"]), int(r["seed"])) for r in rows] == [("MASH", 0.0, 0), ("MASH", 10.0, 0)]
    first = json.loads((out / "lambda-sweep_summary.json").read_text())
    assert main(["eval", "lambda-sweep", "--config", str(cfg)]) == 0  # resumes, nothing new
    assert len(read_csv(out / "lambda-sweep.csv")) == 2
    assert json.loads((out / "lambda-sweep_summary.json").read_text())["report_hash"] == first["report_hash"]
    assert main(["eval", "lambda-sweep", "--config", str(cfg), "--fresh"]) == 0
    assert json.loads((out / "lambda-sweep_summary.json").read_text())["report_hash"] == first["report_hash"]
    assert main(["plot", "--report", str(out / "lambda-sweep.csv")]) == 0
    svg = (out / "lambda-sweep.svg").read_bytes()
    assert svg.startswith(b"<?xml")
    plot_rows = read_csv(out / "lambda-sweep_plot.csv")
    assert [float(r["lam"]) for r in plot_rows] == [0.0, 10.0]
    assert main(["plot", "--report", str(out / "lambda-sweep.csv")]) == 0
    assert (out / "lambda-sweep.svg").read_bytes() == svg


def test_eval_embedding_fit_table(workdir):
    cfg = write_config(workdir / "c.json", eval={"methods": ["MASH", "SPUD"], "seeds": [0], "n_perm": 19})
    assert main(["eval", "embedding-fit", "--config", str(cfg)]) == 0
    summary = json.loads((out_dir(workdir) / "eval" / "embedding-fit_summary.json").read_text())
    assert [set(t) for t in summary["table"]] == [{"method", "mean_r", "sd_r", "n"}] * 2


@pytest.mark.parametrize("harness", ["baseline", "mapping"])
def test_eval_other_harnesses(workdir, harness):
    cfg = write_config(workdir / "c.json", split={"strategy": "skewed"})
    assert main(["eval", harness, "--config", str(cfg)]) == 0
    rows = read_csv(out_dir(workdir) / "eval" / f"{harness}.csv")
    assert rows and all(r["status"] == "ok" for r in rows)
    assert main(["plot", "--report", str(out_dir(workdir) / "eval" / f"{harness}.csv")]) == 0


def test_output_root_override(tmp_path, monkeypatch):
    monkeypatch.setenv("TWINALIGN_OUTPUT_ROOT", str(tmp_path / "elsewhere"))
    cfg = write_config(tmp_path / "c.json", output_dir="custom")
    assert main(["split", "--config", str(cfg)]) == 0
    assert (tmp_path / "elsewhere" / "custom" / "split" / "pair.json").exists()


# --- exit codes --------------------------------------------------------------

def test_malformed_json(workdir, caplog):
    bad = workdir / "bad.json"
    bad.write_text('{"dataset": "iris",')
    assert main(["align", "--config", str(bad)]) == 2
    assert "malformed JSON" in caplog.text


@pytest.mark.parametrize("patch, key", [
    ({"aligner": {"method": "MASH", "kk": 3}}, "aligner"),
    ({"train": {"epochs": -1}}, "train.epochs"),
    ({"split": {"strategy": "diagonal"}}, "split.strategy"),
    ({"surprise": 1}, "<root>"),
])
def test_config_errors_name_key(workdir, caplog, patch, key):
    cfg = write_config(workdir / "c.json", **patch)
    assert main(["align", "--config", str(cfg)]) == 2
    assert f"'{key}'" in caplog.text


def test_missing_config(workdir):
    assert main(["align", "--config", str(workdir / "nope.json")]) == 2


def test_data_errors(workdir):
    cfg = write_config(workdir / "c.json", dataset=str(workdir / "missing.csv"))
    assert main(["align", "--config", str(cfg)]) == 3
    cfg = write_config(workdir / "c.json")
    assert main(["align", "--config", str(cfg)]) == 0
    assert main(["train", "--config", str(cfg)]) == 0
    bad = workdir / "pts.csv"
    bad.write_text("a,b,c,d,e\n1,2,3,4,5\n")
    assert main(["crossmap", "--config", str(cfg), "--from", "X", "--input", str(bad)]) == 3


def test_user_points(workdir):
    cfg = write_config(workdir / "c.json")
    assert main(["align", "--config", str(cfg)]) == 0
    assert main(["train", "--config", str(cfg)]) == 0
    pts = workdir / "pts.csv"
    pts.write_text("a,b\n0.1,0.2\n-1,1\n")
    out = workdir / "mapped.csv"
    assert main(["extend", "--config", str(cfg), "--domain", "X", "--input", str(pts), "--output", str(out)]) == 0
    rows = read_csv(out)
    assert len(rows) == 2 and [int(r["row_index"]) for r in rows] == [0, 1]


def test_numerical_failure_names_stage(workdir, caplog):
    cfg = write_config(workdir / "c.json", aligner={"method": "DTA", "sinkhorn_tol": 1e-15, "sinkhorn_max_iter": 3})
    assert main(["align", "--config", str(cfg)]) == 4
    assert "align (DTA)" in caplog.text


def test_tampered_embedding_exit_5(workdir):
    cfg = write_config(workdir / "c.json")
    assert main(["align", "--config", str(cfg)]) == 0
    path = out_dir(workdir) / "embedding.csv"
    lines = path.read_text().splitlines()
    cells = lines[1].split(",")
    cells[2] = repr(float(cells[2]) + 1.0)
    lines[1] = ",".join(cells)
    path.write_text("\n".join(lines) + "\n")
    assert main(["train", "--config", str(cfg)]) == 5


def test_foreign_embedding_exit_5(workdir):
    a = write_config(workdir / "a.json", seed=0)
    b = write_config(workdir / "b.json", seed=1)
    assert main(["align", "--config", str(a)]) == 0
    emb = out_dir(workdir) / "embedding.csv"
    assert main(["train", "--config", str(b), "--embedding", str(emb)]) == 5


def test_foreign_model_exit_5(workdir):
    a = write_config(workdir / "a.json", seed=0)
    assert main(["align", "--config", str(a)]) == 0
    assert main(["train", "--config", str(a)]) == 0
    b = write_config(workdir / "b.json", seed=1, output_dir="other")
    model = out_dir(workdir) / "model.json"
    assert main(["extend", "--config", str(b), "--model", str(model)]) == 5


def test_bad_jobs(workdir):
    cfg = write_config(workdir / "c.json")
    assert main(["eval", "mapping", "--config", str(cfg), "--jobs", "0"]) == 2


def test_help_lists_commands(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--help"])
    assert exc.value.code == 0
    text = capsys.readouterr().out
    for cmd in ("align", "train", "extend", "crossmap", "eval", "plot", "split"):
        assert cmd in text


def test_module_entry_point():
    import subprocess
    import sys

    res = subprocess.run([sys.executable, "-m", "twinalign", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and "twinalign" in res.stdout

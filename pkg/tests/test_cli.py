import json
from configparser import ConfigParser

import numpy as np
import pytest

from uapkit import cli
from uapkit.data import load_feature_spec
from uapkit.problem_space import DeterministicMask, Toolkit, Transformation, save_toolkit


def ini(dirpath, name, sections):
    cp = ConfigParser()
    cp.read_dict({s: {k: str(v) for k, v in kv.items()} for s, kv in sections.items()})
    p = dirpath / name
    with open(p, "w", encoding="utf-8") as f:
        cp.write(f)
    return str(p)


def manifest(out_dir):
    with open(out_dir / "manifest.json", "r", encoding="utf-8") as f:
        return json.load(f)


def report(out_dir):
    with open(out_dir / "report.json", "r", encoding="utf-8") as f:
        return json.load(f)


SYNTHETIC = {"kind": "synthetic", "n_features": 20, "n_benign": 500,
             "n_malware": 500, "n_goodware_indicative": 4, "seed": 7}


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """synth-data + train, shared by the downstream command tests."""
    root = tmp_path_factory.mktemp("cliws")
    data_out = root / "data"
    cfg = ini(root, "synth.ini", {"run": {"out": data_out}, "dataset": SYNTHETIC})
    assert cli.main(["synth-data", "--config", cfg]) == 0
    spec = load_feature_spec(data_out / "dataset.spec")
    masks = [frozenset({i}) for i in range(4)] + \
            [frozenset({4 + 2 * k, 5 + 2 * k}) for k in range(6)]
    tk = Toolkit(spec, tuple(Transformation(t, f"t{t}", DeterministicMask(m))
                             for t, m in enumerate(masks)))
    tk_path = root / "gadgets.toolkit"
    save_toolkit(tk, tk_path)

    files = {"kind": "files", "data": data_out / "dataset.txt",
             "spec": data_out / "dataset.spec"}
    train_out = root / "train"
    train_cfg = ini(root, "train.ini", {
        "run": {"out": train_out, "seed": 7},
        "dataset": files,
        "model": {"family": "logistic_regression", "epochs": 5},
    })
    assert cli.main(["train", "--config", train_cfg]) == 0
    return {"root": root, "data_out": data_out, "train_out": train_out,
            "train_cfg": train_cfg, "toolkit": str(tk_path), "files": files}


# ---------------------------------------------------------------------------
# basics


def test_synth_data_outputs_and_manifest(workspace):
    out = workspace["data_out"]
    assert (out / "dataset.txt").is_file() and (out / "dataset.spec").is_file()
    m = manifest(out)
    assert set(m) == {"command", "config", "seed", "outputs", "extra"}
    assert m["command"] == "synth-data"
    assert m["outputs"] == sorted(["dataset.txt", "dataset.spec"])
    assert m["extra"]["n_examples"] == 1000
    assert m["extra"]["n_malware"] == 500


def test_train_report_and_model(workspace):
    out = workspace["train_out"]
    assert (out / "model.model").is_file()
    rep = report(out)
    assert 0.5 <= rep["auc_roc"] <= 1.0
    assert "0.01" in rep["tpr_at_fpr"]
    assert manifest(out)["extra"]["n_train"] == 600


def test_train_twice_identical_bytes(workspace, tmp_path):
    ws = workspace
    blob = (ws["train_out"] / "model.model").read_bytes()
    out2 = tmp_path / "again"
    assert cli.main(["train", "--config", ws["train_cfg"], "--out", str(out2)]) == 0
    assert (out2 / "model.model").read_bytes() == blob


def test_seed_and_set_overrides(workspace, tmp_path):
    ws = workspace
    out = tmp_path / "o"
    rc = cli.main(["train", "--config", ws["train_cfg"], "--out", str(out),
                   "--seed", "5", "--set", "model.epochs=2"])
    assert rc == 0
    m = manifest(out)
    assert m["seed"] == 5
    assert m["config"]["run"]["seed"] == "5"
    assert m["config"]["model"]["epochs"] == "2"


# ---------------------------------------------------------------------------
# attacks


def test_attack_fs_uap_and_evaluate_round_trip(workspace, tmp_path):
    ws = workspace
    atk_out = tmp_path / "atk"
    atk_cfg = ini(tmp_path, "atk.ini", {
        "run": {"out": atk_out, "seed": 7},
        "dataset": ws["files"],
        "model": {"path": ws["train_out"] / "model.model"},
        "attack": {"kind": "feature_uap", "l0_max": 4},
    })
    assert cli.main(["attack-fs", "--config", atk_cfg]) == 0
    assert (atk_out / "uap.txt").read_text(encoding="utf-8").startswith("uap v1:")
    atk_uer = report(atk_out)["uer"]
    assert 0.0 <= atk_uer <= 1.0

    ev_out = tmp_path / "ev"
    ev_cfg = ini(tmp_path, "ev.ini", {
        "run": {"out": ev_out, "seed": 7},
        "dataset": ws["files"],
        "model": {"path": ws["train_out"] / "model.model"},
        "evaluate": {"perturbation": atk_out / "uap.txt"},
    })
    assert cli.main(["evaluate", "--config", ev_cfg]) == 0
    rep = report(ev_out)
    assert rep["uer"] == atk_uer  # same TP set, same perturbation
    assert "auc_roc" in rep


def test_attack_fs_input_specific(workspace, tmp_path):
    ws = workspace
    out = tmp_path / "spc"
    cfg = ini(tmp_path, "spc.ini", {
        "run": {"out": out, "seed": 7},
        "dataset": ws["files"],
        "model": {"path": ws["train_out"] / "model.model"},
        "attack": {"kind": "feature_input_specific", "l0_max": 4},
    })
    assert cli.main(["attack-fs", "--config", cfg]) == 0
    assert 0.0 <= report(out)["uer"] <= 1.0


def test_attack_ps_search_rounds_and_chain(workspace, tmp_path):
    ws = workspace
    out = tmp_path / "ps"
    cfg = ini(tmp_path, "ps.ini", {
        "run": {"out": out, "seed": 7},
        "dataset": ws["files"],
        "model": {"path": ws["train_out"] / "model.model"},
        "attack": {"kind": "greedy_uer", "toolkit": ws["toolkit"],
                   "max_chain_len": 10},
    })
    assert cli.main(["attack-ps", "--config", cfg]) == 0
    m = manifest(out)
    # 100 exploration malware x 10 chain slots x 10 transformations
    assert m["extra"]["search_rounds"] == 10_000
    assert (out / "chain.txt").read_text(encoding="utf-8").startswith("chain v1:")
    rep = report(out)
    assert set(rep["uer_by_length"]) == {"1", "4", "10"}
    vals = [rep["uer_by_length"][k] for k in ("1", "4", "10")]
    assert all(0.0 <= v <= 1.0 for v in vals)
    assert vals[0] <= vals[1] <= vals[2]  # masks only: longer prefixes dominate

    ev_out = tmp_path / "evc"
    ev_cfg = ini(tmp_path, "evc.ini", {
        "run": {"out": ev_out, "seed": 7},
        "dataset": ws["files"],
        "model": {"path": ws["train_out"] / "model.model"},
        "evaluate": {"perturbation": out / "chain.txt", "toolkit": ws["toolkit"]},
    })
    assert cli.main(["evaluate", "--config", ev_cfg]) == 0
    rep2 = report(ev_out)
    assert rep2["uer_by_length"] == rep["uer_by_length"]


def test_attack_ps_random_chains_outputs(workspace, tmp_path):
    ws = workspace
    out = tmp_path / "rnd"
    cfg = ini(tmp_path, "rnd.ini", {
        "run": {"out": out, "seed": 7},
        "dataset": ws["files"],
        "model": {"path": ws["train_out"] / "model.model"},
        "attack": {"kind": "random_chains", "toolkit": ws["toolkit"],
                   "n_chains": 20, "max_chain_len": 5},
    })
    assert cli.main(["attack-ps", "--config", cfg]) == 0
    lines = (out / "uer_matrix.csv").read_text(encoding="utf-8").splitlines()
    assert lines[0] == "chain,len1,len2,len3,len4,len5"
    assert len(lines) == 21
    med = json.loads((out / "median_per_length.json").read_text(encoding="utf-8"))
    assert list(med) == ["1", "2", "3", "4", "5"]


# ---------------------------------------------------------------------------
# defense and transfer


def test_defend_gbdt_stat_model(workspace, tmp_path):
    ws = workspace
    out = tmp_path / "def"
    cfg = ini(tmp_path, "def.ini", {
        "run": {"out": out, "seed": 7},
        "dataset": ws["files"],
        "model": {"family": "gbdt", "n_trees": 5},
        "defense": {"kind": "gbdt_stat_model", "toolkit": ws["toolkit"],
                    "n_traces": 10, "max_chain_len": 4},
    })
    assert cli.main(["defend", "--config", cfg]) == 0
    assert (out / "model.model").is_file()
    stats_text = (out / "perturbation_stats.txt").read_text(encoding="utf-8")
    assert stats_text.startswith("uapkit-statmodel v1")
    m = manifest(out)
    assert isinstance(m["extra"]["chain"], list)
    assert "auc_roc" in report(out)


def test_transfer_matrix(workspace, tmp_path):
    ws = workspace
    out2 = tmp_path / "svm"
    cfg2 = ini(tmp_path, "svm.ini", {
        "run": {"out": out2, "seed": 7},
        "dataset": ws["files"],
        "model": {"family": "linear_svm", "epochs": 5},
    })
    assert cli.main(["train", "--config", cfg2]) == 0
    out = tmp_path / "tr"
    cfg = ini(tmp_path, "tr.ini", {
        "run": {"out": out, "seed": 7},
        "dataset": ws["files"],
        "transfer": {"models": f"{ws['train_out'] / 'model.model'}, "
                               f"{out2 / 'model.model'}",
                     "l0_max": 4},
    })
    assert cli.main(["transfer", "--config", cfg]) == 0
    lines = (out / "transfer_matrix.csv").read_text(encoding="utf-8").splitlines()
    assert lines[0] == "source\\target,model,model_2"  # stem collision resolved
    assert len(lines) == 3
    body = np.array([[float(v) for v in ln.split(",")[1:]] for ln in lines[1:]])
    assert body.shape == (2, 2) and np.all((0.0 <= body) & (body <= 1.0))


# ---------------------------------------------------------------------------
# report


def test_report_aggregates_runs(tmp_path):
    rows = {
        "a": {"name": "undefended", "auc_roc": 0.99, "tpr_at_fpr": {"0.01": 0.9},
              "uer_by_length": {"1": 0.5, "4": 0.8, "10": 1.0}},
        "b": {"name": "defended", "auc_roc": 0.97, "tpr_at_fpr": {"0.01": 0.88}},
    }
    for d, rep in rows.items():
        (tmp_path / d).mkdir()
        (tmp_path / d / "report.json").write_text(json.dumps(rep), encoding="utf-8")
    out = tmp_path / "sum"
    cfg = ini(tmp_path, "rep.ini", {
        "run": {"out": out},
        "report": {"runs": f"{tmp_path / 'a'}, {tmp_path / 'b'}"},
    })
    assert cli.main(["report", "--config", cfg]) == 0
    lines = (out / "summary.csv").read_text(encoding="utf-8").splitlines()
    assert lines[0] == "name,auc_roc,tpr_at_fpr,uer_1,uer_4,uer_10"
    assert lines[1].split(",") == ["undefended", "0.99", "0.9", "0.5", "0.8", "1.0"]
    assert lines[2].split(",")[0] == "defended"
    bundle = json.loads((out / "summary.json").read_text(encoding="utf-8"))
    assert set(bundle) == {str(tmp_path / "a"), str(tmp_path / "b")}


# ---------------------------------------------------------------------------
# failure modes


def test_missing_config_file_exits_2(capsys):
    assert cli.main(["train", "--config", "/nonexistent.ini"]) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "config" and "not found" in err["detail"]


def test_missing_required_key_exits_2_without_outputs(tmp_path, capsys):
    out = tmp_path / "o"
    cfg = ini(tmp_path, "bad.ini", {"run": {"out": out}, "dataset": SYNTHETIC})
    assert cli.main(["train", "--config", cfg]) == 2  # model.family missing
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "config" and "model.family" in err["detail"]
    assert not (out / "model.model").exists()
    assert not (out / "manifest.json").exists()  # failed runs leave no manifest


def test_bad_set_syntax_exits_2(tmp_path, capsys):
    cfg = ini(tmp_path, "c.ini", {"run": {"out": tmp_path / "o"}})
    assert cli.main(["train", "--config", cfg, "--set", "epochs=3"]) == 2
    err = json.loads(capsys.readouterr().err)
    assert "section.key=value" in err["detail"]


def test_runtime_error_exits_1(tmp_path, capsys):
    out = tmp_path / "o"
    cfg = ini(tmp_path, "single.ini", {
        "run": {"out": out},
        "dataset": {"kind": "synthetic", "n_features": 10, "n_benign": 40,
                    "n_malware": 0, "n_goodware_indicative": 2},
        "model": {"family": "logistic_regression"},
    })
    assert cli.main(["train", "--config", cfg]) == 1
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "ValueError"


def test_unknown_attack_kind_exits_2(workspace, tmp_path, capsys):
    ws = workspace
    cfg = ini(tmp_path, "k.ini", {
        "run": {"out": tmp_path / "o"},
        "dataset": ws["files"],
        "model": {"path": ws["train_out"] / "model.model"},
        "attack": {"kind": "warp_drive"},
    })
    assert cli.main(["attack-fs", "--config", cfg]) == 2
    assert "warp_drive" in json.loads(capsys.readouterr().err)["detail"]

import csv
import json

import pytest

from mmcl.cli import comparison_rows, main
from mmcl.experiment import OUTPUT_DIR_ENV, REPORT_METRICS, ConfigError, parse_config

SMALL = {
    "dataset": {"num_classes": 6, "samples_per_class_train": 8, "samples_per_class_test": 5,
                "dim_audio": 6, "dim_visual": 6, "latent_dim": 3, "num_supercategories": 2},
    "scenario": {"kind": "SEQ", "num_tasks": 3, "classes_per_task": 2},
    "train": {"method": "SAMM", "epochs_per_task": 2, "batch_size": 8, "buffer_capacity": 12},
}


def write_config(tmp_path, name="cfg.json", **over):
    raw = json.loads(json.dumps(SMALL))
    for key, value in over.items():
        if isinstance(value, dict):
            raw.setdefault(key, {}).update(value)
        else:
            raw[key] = value
    path = tmp_path / name
    path.write_text(json.dumps(raw))
    return path


def run(tmp_path, out, **over):
    cfg = write_config(tmp_path, **over)
    assert main(["run", str(cfg), "--output-dir", str(out)]) == 0
    return json.loads((out / "results.json").read_text())


def test_results_have_mean_and_std(tmp_path):
    res = run(tmp_path, tmp_path / "r", seeds=[1, 2, 3])
    assert res["seeds"] == [1, 2, 3] and res["headline_mode"] == "DYNAMIC"
    for mode in ("AUDIO", "VISUAL", "MULTI", "DYNAMIC"):
        for metric in REPORT_METRICS:
            entry = res["modes"][mode][metric]
            assert set(entry) == {"mean", "std", "values"} and len(entry["values"]) == 3
    out = tmp_path / "r"
    for seed in (1, 2, 3):
        assert (out / f"matrix_{seed}.csv").exists() and (out / f"run_{seed}.log").exists()
        assert (out / f"matrix_{seed}_AUDIO.csv").exists()
    resolved = json.loads((out / "config.resolved.json").read_text())
    assert resolved["seeds"] == [1, 2, 3] and resolved["train"]["learning_rate"] == 0.1


def test_rerun_is_byte_identical(tmp_path):
    run(tmp_path, tmp_path / "a", seeds=[0, 1])
    run(tmp_path, tmp_path / "b", seeds=[0, 1])
    assert (tmp_path / "a/results.json").read_bytes() == (tmp_path / "b/results.json").read_bytes()
    assert (tmp_path / "a/matrix_1.csv").read_bytes() == (tmp_path / "b/matrix_1.csv").read_bytes()


def test_resolved_config_reruns_identically(tmp_path):
    run(tmp_path, tmp_path / "a", seeds=[2])
    resolved = tmp_path / "a/config.resolved.json"
    assert main(["run", str(resolved), "--output-dir", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a/results.json").read_bytes() == (tmp_path / "b/results.json").read_bytes()


def test_audio_only_reports_audio_only(tmp_path):
    res = run(tmp_path, tmp_path / "r", train={"method": "ER", "modality_mode": "AUDIO_ONLY"})
    assert list(res["modes"]) == ["AUDIO"]
    assert res["headline_mode"] == "AUDIO"


def test_log_lines_are_records(tmp_path):
    run(tmp_path, tmp_path / "r")
    lines = [json.loads(x) for x in (tmp_path / "r/run_0.log").read_text().splitlines()]
    steps = [x for x in lines if "step" in x]
    assert steps and {"task", "total", "sup_task", "cr_buf", "fa_task"} <= set(steps[-1])
    assert lines[0]["event"] == "start" and lines[-1]["event"] == "end"


def test_seed_flag_appends_and_set_overrides(tmp_path):
    cfg = write_config(tmp_path, seeds=[0])
    out = tmp_path / "r"
    assert main(["run", str(cfg), "--output-dir", str(out), "--seed", "5",
                 "--set", "train.epochs_per_task=1", "--set", "name=\"custom\""]) == 0
    res = json.loads((out / "results.json").read_text())
    assert res["seeds"] == [0, 5] and res["label"] == "custom"
    resolved = json.loads((out / "config.resolved.json").read_text())
    assert resolved["train"]["epochs_per_task"] == 1


def test_env_var_sets_output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv(OUTPUT_DIR_ENV, str(tmp_path / "env"))
    assert main(["run", str(write_config(tmp_path))]) == 0
    assert (tmp_path / "env/results.json").exists()


def test_config_errors_exit_one(tmp_path, capsys):
    cfg = write_config(tmp_path, train={"epochs": 3})
    assert main(["run", str(cfg)]) == 1
    assert "train: unknown field(s) epochs" in capsys.readouterr().err
    assert main(["run", str(tmp_path / "missing.json")]) == 1
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["run", str(bad)]) == 1
    assert main(["run", str(write_config(tmp_path, seeds=[]))]) == 1
    assert main(["run", str(write_config(tmp_path, inference_modes=["DYNAMIC"],
                                         train={"method": "ER"}))]) == 1


def test_runtime_error_exits_two(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["run", str(write_config(tmp_path)), "--output-dir", str(blocker / "sub")]) == 2


def test_manifest_dataset_config(tmp_path):
    from mmcl.datagen import SyntheticDatasetSpec, generate_synthetic, write_feature_file, write_manifest

    d = generate_synthetic(SyntheticDatasetSpec(num_classes=4, samples_per_class_train=4,
                                                samples_per_class_test=2, dim_audio=3,
                                                dim_visual=3, latent_dim=2, num_supercategories=2))
    for split in ("train", "test"):
        ds = getattr(d, split)
        recs = []
        for i in range(len(ds)):
            write_feature_file(tmp_path / f"{split}{i}a.bin", ds.audio[i])
            write_feature_file(tmp_path / f"{split}{i}v.bin", ds.visual[i])
            recs.append({"audio_path": f"{split}{i}a.bin", "visual_path": f"{split}{i}v.bin",
                         "label": int(ds.labels[i]), "superlabel": int(ds.superlabels[i])})
        write_manifest(tmp_path / f"{split}.jsonl", recs)
    raw = {"dataset": {"manifest": {"train": str(tmp_path / "train.jsonl"),
                                    "test": str(tmp_path / "test.jsonl"), "num_classes": 4,
                                    "num_supercategories": 2}},
           "scenario": {"kind": "SEQ", "num_tasks": 2, "classes_per_task": 2},
           "train": {"method": "ER", "epochs_per_task": 1, "buffer_capacity": 4}}
    (tmp_path / "m.json").write_text(json.dumps(raw))
    assert main(["run", str(tmp_path / "m.json"), "--output-dir", str(tmp_path / "r")]) == 0


def test_parse_config_seed_following():
    cfg = parse_config({"dataset": {"seed": 9}, "seeds": [1, 2]})
    assert cfg.fixed_dataset_seed and not cfg.fixed_scenario_seed
    with pytest.raises(ConfigError):
        parse_config({"bogus": 1})
    with pytest.raises(ConfigError, match="train.weights"):
        parse_config({"train": {"weights": {"lam": -1}}})


# compare


@pytest.fixture(scope="module")
def er_and_samm(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("cmp")
    er = run(tmp, tmp / "er", train={"method": "ER"}, seeds=[0, 1])
    samm = run(tmp, tmp / "samm", seeds=[0, 1])
    return tmp, er, samm


def test_compare_single_and_identical(er_and_samm, capsys):
    tmp, _, _ = er_and_samm
    assert main(["compare", str(tmp / "er/results.json")]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 3
    header, rows = comparison_rows([json.loads((tmp / "er/results.json").read_text())] * 2)
    assert rows[0] == rows[1] and rows[1][-1] == 0.0


def test_compare_order_and_delta(er_and_samm, tmp_path, capsys):
    tmp, er, samm = er_and_samm
    out_csv = tmp_path / "t.csv"
    assert main(["compare", str(tmp / "er/results.json"), str(tmp / "samm/results.json"),
                 "--csv", str(out_csv)]) == 0
    text = capsys.readouterr().out
    assert text.index("ER-MULTIMODAL") < text.index("SAMM-MULTIMODAL")
    rows = list(csv.DictReader(out_csv.open()))
    assert [r["label"] for r in rows] == ["ER-MULTIMODAL-M12", "SAMM-MULTIMODAL-M12"]
    er_acc = er["modes"]["MULTI"]["final_mean_accuracy"]["mean"]
    samm_acc = samm["modes"]["DYNAMIC"]["final_mean_accuracy"]["mean"]
    assert float(rows[1]["delta_vs_first"]) == samm_acc - er_acc
    assert rows[0]["DYNAMIC_mean"] == ""


def test_compare_rejects_schema_mismatch(er_and_samm, tmp_path):
    tmp, er, _ = er_and_samm
    other = dict(er, schema_version=999)
    (tmp_path / "old.json").write_text(json.dumps(other))
    assert main(["compare", str(tmp / "er/results.json"), str(tmp_path / "old.json")]) == 1


def test_plot_writes_images(er_and_samm, tmp_path):
    tmp, _, _ = er_and_samm
    assert main(["plot", str(tmp / "samm"), "--out", str(tmp_path)]) == 0
    assert (tmp_path / "accuracy_curves.png").stat().st_size > 0
    assert (tmp_path / "matrix_0_DYNAMIC.png").exists()
    assert main(["plot", str(tmp_path / "nothing")]) == 2

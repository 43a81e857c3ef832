import json

import pytest

from mtl_relu_lab.cli import main
from mtl_relu_lab.dataset import (
    TaskGenSpec,
    augment_with_random_tasks,
    make_univariate_demo,
    save_csv,
)
from mtl_relu_lab.experiments import (
    ExperimentConfig,
    default_config,
    parallel_map,
    run_uniqueness_mc,
)
from mtl_relu_lab.network import save_net
from mtl_relu_lab.training import TrainConfig, adam_train, init_net


def tiny_train() -> dict:
    return TrainConfig(
        lam=1e-4, width=8, learning_rate=1e-2, max_iters=2000, plateau_tol=0.0, seed=0
    ).to_dict()


@pytest.fixture()
def demo_csv(tmp_path):
    path = tmp_path / "demo.csv"
    save_csv(make_univariate_demo(), path)
    return path


class TestBasicCommands:
    def test_ctd_and_cost(self, tmp_path, demo_csv, capsys):
        out = tmp_path / "ctd"
        assert main(["ctd", "--data", str(demo_csv), "--out", str(out)]) == 0
        assert (out / "ctd.json").exists()
        lines = (out / "ctd_samples.csv").read_text().splitlines()
        assert lines[0] == "x,f1"
        assert len(lines) == 1001
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["command"] == "ctd"
        assert "args_sha256" in manifest
        assert main(["cost", "--data", str(demo_csv)]) == 0
        assert "cost" in capsys.readouterr().out

    def test_check_uniqueness(self, tmp_path, demo_csv, capsys):
        out = tmp_path / "uni"
        assert main(["check-uniqueness", "--data", str(demo_csv), "--out", str(out)]) == 0
        payload = json.loads((out / "uniqueness.json").read_text())
        assert payload["verdict"] == "non-unique"  # concave single-task profile

    def test_train_command(self, tmp_path, demo_csv):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps({"dataset": str(demo_csv), "train": tiny_train()}))
        out = tmp_path / "run"
        assert main(["train", "--config", str(cfg_path), "--out", str(out)]) == 0
        for name in ("net.json", "report.json", "trace.csv"):
            assert (out / name).exists()

    def test_kernel_fit_sobolev(self, tmp_path, demo_csv):
        out = tmp_path / "kfit"
        assert main(["kernel-fit", "--data", str(demo_csv), "--out", str(out)]) == 0
        assert (out / "kernel_model.json").exists()
        assert (out / "kernel_samples.csv").exists()

    def test_kernel_fit_neuron_and_compare_jh(self, tmp_path):
        data = augment_with_random_tasks(make_univariate_demo(), TaskGenSpec("gaussian", 3, seed=4))
        data_path = tmp_path / "multi.csv"
        save_csv(data, data_path)
        cfg = TrainConfig(lam=1e-3, width=12, learning_rate=1e-2, max_iters=3000,
                          plateau_tol=0.0, seed=0, skip_connection=False)
        net, _ = adam_train(init_net(data, cfg), data, cfg)
        net_path = tmp_path / "net.json"
        save_net(net, net_path)

        out = tmp_path / "kn"
        code = main([
            "kernel-fit", "--data", str(data_path), "--kernel", "neuron",
            "--net", str(net_path), "--task", "0", "--lam", "0.01", "--out", str(out),
        ])
        assert code == 0
        assert (out / "kernel_model.json").exists()

        out2 = tmp_path / "jh"
        code = main([
            "compare-jh", "--net", str(net_path), "--data", str(data_path),
            "--task", "0", "--lam", "0.002", "--out", str(out2),
        ])
        assert code == 0
        payload = json.loads((out2 / "compare_jh.json").read_text())
        assert payload["j_at_star"] >= 0.0
        assert (out2 / "gamma_values.csv").exists()

    def test_error_exit_code(self, tmp_path):
        assert main(["ctd", "--data", str(tmp_path / "missing.csv"), "--out", str(tmp_path)]) == 1


class TestExperimentPlumbing:
    def test_uniq_mc_small(self, tmp_path):
        config = default_config("uniqueness_montecarlo", output_dir=str(tmp_path / "mc"))
        config.tolerances.update({"n_datasets": 200, "n_aligned": 20})
        summary = run_uniqueness_mc(config)
        assert summary["non_unique_random"] == 0
        assert summary["non_unique_aligned"] == 20
        manifest = json.loads((tmp_path / "mc" / "manifest.json").read_text())
        assert manifest["experiment"] == "uniqueness_montecarlo"
        assert "config_sha256" in manifest

    def test_uniq_mc_cli_exit_zero(self, tmp_path):
        cfg = default_config("uniqueness_montecarlo", output_dir=str(tmp_path / "mc"))
        cfg.tolerances.update({"n_datasets": 100, "n_aligned": 10})
        cfg_path = tmp_path / "mc.json"
        cfg_path.write_text(json.dumps(cfg.to_dict()))
        assert main(["uniq-mc", "--config", str(cfg_path)]) == 0

    def test_fig4_smoke_artifact_count(self, tmp_path):
        config = default_config("fig4_univariate", output_dir=str(tmp_path / "fig4"))
        config.train = TrainConfig.from_dict({**config.train.to_dict(), "max_iters": 1500,
                                              "learning_rate": 1e-2, "width": 8})
        from mtl_relu_lab.experiments import run_fig4

        run_fig4(config)
        out = tmp_path / "fig4"
        nets = sorted(out.glob("*_net.json"))
        assert len(nets) == 6
        assert (out / "ctd_reference.json").exists()
        assert (out / "manifest.json").exists()

    def test_fig4_rerun_byte_identical(self, tmp_path):
        from mtl_relu_lab.experiments import run_fig4

        outs = []
        for name in ("a", "b"):
            config = default_config("fig4_univariate", output_dir=str(tmp_path / name))
            config.train = TrainConfig.from_dict({**config.train.to_dict(), "max_iters": 800,
                                                  "learning_rate": 1e-2, "width": 6})
            run_fig4(config)
            outs.append(tmp_path / name)
        for f in ("ctd_samples.csv", "single_seed0_samples.csv", "multi_seed2_samples.csv"):
            assert (outs[0] / f).read_bytes() == (outs[1] / f).read_bytes()

    def test_t_sweep_smoke(self, tmp_path):
        from mtl_relu_lab.experiments import run_t_sweep

        config = default_config("t_sweep", output_dir=str(tmp_path / "sweep"))
        config.seeds = [0, 1]
        config.train = TrainConfig.from_dict({**config.train.to_dict(), "max_iters": 4000,
                                              "learning_rate": 3e-3, "width": 24})
        config.tolerances["t_values"] = [2, 4]
        summary = run_t_sweep(config)
        assert set(summary["medians"]) == {"2", "4"}
        out = tmp_path / "sweep"
        assert (out / "records.json").exists()
        assert (out / "gamma_medians.csv").exists()
        assert len(sorted(out.glob("net_T*_seed*.json"))) == 4

    def test_inputs_never_mutated(self, tmp_path, demo_csv):
        before = demo_csv.read_bytes()
        out = tmp_path / "ctd2"
        main(["ctd", "--data", str(demo_csv), "--out", str(out)])
        assert demo_csv.read_bytes() == before

    def test_parallel_map_order_and_env(self, monkeypatch):
        monkeypatch.setenv("MTL_RELU_THREADS", "4")
        results = parallel_map(lambda v: v * v, range(10))
        assert results == [v * v for v in range(10)]
        monkeypatch.setenv("MTL_RELU_THREADS", "not-a-number")
        assert parallel_map(lambda v: v + 1, [1, 2]) == [2, 3]

    def test_config_round_trip(self):
        config = default_config("t_sweep")
        back = ExperimentConfig.from_dict(json.loads(json.dumps(config.to_dict())))
        assert back.experiment == config.experiment
        assert back.train == config.train
        assert back.seeds == config.seeds

    def test_unknown_experiment_rejected(self):
        with pytest.raises(ValueError):
            ExperimentConfig("nonsense")

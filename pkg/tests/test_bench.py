import csv

import numpy as np
import pytest

from uwdloc.bench import cli
from uwdloc.bench.config import ConfigError, ExperimentConfig, config_from_dict, load_config
from uwdloc.bench.dataset import HEADER, read_dataset, record_size, write_dataset
from uwdloc.bench.runner import cmd_estimate, cmd_generate, cmd_sweep, cmd_train, make_record, run_sweep
from uwdloc.geometry import default_scene
from uwdloc.nn import load_checkpoint
from uwdloc.nn.train import predict_xyz
from uwdloc.propagation import SignalRecord, channel_spectrum, idft, sample_attenuations, three_ray_delays, Truth
from uwdloc.sos import build_sos

FAST = {"search": {"n_points": 11, "levels": 1}}


def fast_cfg(**kw):
    return config_from_dict({**FAST, **kw})


def test_config_defaults_and_validation(tmp_path):
    cfg = ExperimentConfig()
    assert cfg.snr_db == (-10.0, 0.0, 10.0, 20.0, 30.0) and cfg.trials == 100
    with pytest.raises(ConfigError):
        config_from_dict({"trials": 0})
    with pytest.raises(ConfigError):
        config_from_dict({"snr_db": []})
    with pytest.raises(ConfigError):
        config_from_dict({"prior_box": [[-1, 1], [-1, 1], [5, 60]]})
    with pytest.raises(ConfigError):
        config_from_dict({"bogus": 1})
    with pytest.raises(ConfigError):
        config_from_dict({"search": {"nope": 3}})
    p = tmp_path / "c.yaml"
    p.write_text("trials: 7\nsnr_db: [0, 10]\nscene:\n  environment: {h: 60}\nestimators: sbl\n")
    cfg = load_config(p)
    assert cfg.trials == 7 and cfg.snr_db == (0.0, 10.0) and cfg.scene.env.h == 60
    assert cfg.estimators == ("sbl",)


def test_generate_layout_and_labels(tmp_path):
    cfg = fast_cfg(records_per_snr=1, snr_db=[10])
    cmd_generate(cfg, tmp_path / "a.bin")
    assert (tmp_path / "a.bin").stat().st_size == HEADER.size + record_size(4, 100, 3)
    cfg = fast_cfg(records_per_snr=1, snr_db=[10], include_truth=False)
    cmd_generate(cfg, tmp_path / "b.bin")
    assert (tmp_path / "b.bin").stat().st_size == HEADER.size + record_size(4, 100)
    cfg = fast_cfg(records_per_snr=50, snr_db=[0, 20], dynamic=True)
    cmd_generate(cfg, tmp_path / "c.bin")
    recs, hdr = read_dataset(tmp_path / "c.bin")
    assert hdr["dynamic"] and hdr["count"] == 100 and hdr["R"] == 3
    box = np.array(cfg.prior_box)
    labels = np.array([r.label for r in recs])
    assert np.all((labels >= box[:, 0]) & (labels <= box[:, 1]))


def test_generate_is_byte_identical(tmp_path):
    cfg = fast_cfg(records_per_snr=3, snr_db=[0, 30], seed=123)
    cmd_generate(cfg, tmp_path / "a.bin")
    cmd_generate(cfg, tmp_path / "b.bin")
    assert (tmp_path / "a.bin").read_bytes() == (tmp_path / "b.bin").read_bytes()
    cmd_generate(cfg.with_overrides(seed=124), tmp_path / "c.bin")
    assert (tmp_path / "a.bin").read_bytes() != (tmp_path / "c.bin").read_bytes()


def test_dataset_round_trip_is_exact(tmp_path):
    cfg = fast_cfg()
    recs = [make_record(cfg, s, t) for s in range(2) for t in range(3)]
    write_dataset(tmp_path / "d.bin", recs)
    back, _ = read_dataset(tmp_path / "d.bin")
    for a, b in zip(recs, back):
        assert a.x.tobytes() == b.x.tobytes()
        assert a.label.tobytes() == b.label.tobytes()
        assert a.truth.B.tobytes() == b.truth.B.tobytes()
        assert a.snr_db == b.snr_db


def test_dataset_rejects_truncation(tmp_path):
    cfg = fast_cfg()
    write_dataset(tmp_path / "d.bin", [make_record(cfg, 0, 0)])
    raw = (tmp_path / "d.bin").read_bytes()
    (tmp_path / "t.bin").write_bytes(raw[:-8])
    with pytest.raises(ValueError):
        read_dataset(tmp_path / "t.bin")
    (tmp_path / "m.bin").write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(ValueError):
        read_dataset(tmp_path / "m.bin")


def grid_record(cfg, rng):
    axes = cfg.volume().coarse_axes()
    p = np.array([axes[0][3], axes[1][7], axes[2][4]])
    scene = cfg.scene
    B = sample_attenuations(3, 4, rng)
    tau = three_ray_delays(p, scene.array, scene.env)
    s = rng.normal(size=scene.env.N) + 1j * rng.normal(size=scene.env.N)
    x = idft(s * channel_spectrum(tau, B, scene.env))
    return SignalRecord(x=x, label=p, snr_db=np.inf, truth=Truth(B=B, tau=None, sbar=None, noise_var=0.0))


def test_estimate_zero_noise_oracle_exact(tmp_path):
    cfg = fast_cfg()
    rec = grid_record(cfg, np.random.default_rng(0))
    write_dataset(tmp_path / "z.bin", [rec])
    back, _ = read_dataset(tmp_path / "z.bin")
    est = cmd_estimate(back[0], "oracle-mfp", cfg)
    np.testing.assert_array_equal(est.position, rec.label)
    again = cmd_estimate(back[0], "oracle-mfp", cfg)
    assert again.position.tobytes() == est.position.tobytes() and again.objective == est.objective


def test_estimate_errors_and_exit_codes(tmp_path, capsys):
    cfg = fast_cfg(include_truth=False, records_per_snr=1, snr_db=[10])
    cmd_generate(cfg, tmp_path / "nt.bin")
    assert cli.main(["estimate", "--data", str(tmp_path / "nt.bin"), "--estimators", "oracle-mfp"]) == 3
    assert cli.main(["estimate", "--data", str(tmp_path / "nt.bin"), "--estimators", "cnn"]) == 3
    assert cli.main(["estimate", "--data", str(tmp_path / "nt.bin"), "--estimators", "cnn",
                     "--checkpoint", str(tmp_path / "missing.ckpt")]) == 3
    assert cli.main(["estimate", "--data", str(tmp_path / "nt.bin"), "--index", "5"]) == 3
    with pytest.raises(SystemExit) as e:
        cli.main(["estimate", "--data", str(tmp_path / "nt.bin"), "--estimators", "magic"])
    assert e.value.code == 2
    with pytest.raises(SystemExit) as e:
        cli.main(["generate"])
    assert e.value.code == 2
    with pytest.raises(SystemExit) as e:
        cli.main(["sweep", "--out", str(tmp_path), "--trials", "0"])
    assert e.value.code == 2
    assert cli.main(["estimate", "--data", str(tmp_path / "nt.bin"), "--estimators", "gcc-phat"]) == 0
    assert "gcc-phat," in capsys.readouterr().out


def test_single_trial_rmse_is_error():
    cfg = fast_cfg(trials=1, snr_db=[20], estimators=["gcc-phat"])
    res = run_sweep(cfg)
    rec = make_record(cfg, 0, 0)
    est = cmd_estimate(rec, "gcc-phat", cfg)
    assert res.rows[0]["rmse_m"] == pytest.approx(np.linalg.norm(est.position - rec.label), abs=1e-12)
    assert res.rows[0]["trials"] == 1


def _read(path):
    with open(path) as f:
        return list(csv.DictReader(f))


def test_sweep_outputs_and_recomputation(tmp_path):
    cfg = fast_cfg(trials=3, snr_db=[0, 30], estimators=["oracle-mfp", "gcc-phat"])
    res = cmd_sweep(cfg, tmp_path)
    rows = _read(tmp_path / "sweep.csv")
    assert list(rows[0]) == ["estimator", "snr_db", "rmse_m", "trials", "mean_runtime_s"]
    assert len(rows) == 4
    trials = _read(tmp_path / "trials.csv")
    for row in rows:
        err = np.array([float(t["error_m"]) for t in trials
                        if t["estimator"] == row["estimator"] and t["snr_db"] == row["snr_db"]])
        assert len(err) == int(row["trials"]) == 3
        assert float(row["rmse_m"]) == pytest.approx(np.sqrt(np.mean(err ** 2)), abs=1e-12)
        assert float(row["rmse_m"]) >= 0
    assert (tmp_path / "rmse.svg").read_text().lstrip().startswith("<?xml")
    assert len(res.trials) == 12


def _strip_runtime(path):
    return [{k: v for k, v in r.items() if k != "mean_runtime_s"} for r in _read(path)]


def test_parallel_sweep_matches_serial(tmp_path):
    cfg = fast_cfg(trials=4, snr_db=[10, 30], estimators=["gcc-phat", "oracle-mfp"])
    cmd_sweep(cfg, tmp_path / "serial")
    cmd_sweep(cfg.with_overrides(workers=2), tmp_path / "par")
    assert (tmp_path / "serial/trials.csv").read_bytes() == (tmp_path / "par/trials.csv").read_bytes()
    assert _strip_runtime(tmp_path / "serial/sweep.csv") == _strip_runtime(tmp_path / "par/sweep.csv")
    assert (tmp_path / "serial/rmse.svg").read_bytes() != b""


def test_trial_subset_reproducible_in_isolation():
    cfg = fast_cfg(trials=5, snr_db=[0, 10])
    a = make_record(cfg, 1, 3)
    b = make_record(cfg.with_overrides(trials=50), 1, 3)
    assert a.x.tobytes() == b.x.tobytes()


def test_sweep_from_dataset(tmp_path):
    cfg = fast_cfg(records_per_snr=2, snr_db=[30], estimators=["gcc-phat"])
    cmd_generate(cfg, tmp_path / "d.bin")
    res = cmd_sweep(cfg.with_overrides(plot=False), tmp_path / "out", data=tmp_path / "d.bin")
    assert res.rows[0]["trials"] == 2
    assert not (tmp_path / "out/rmse.svg").exists()


def test_noise_file_sweep(tmp_path):
    from uwdloc.propagation import write_noise_file

    rng = np.random.default_rng(0)
    write_noise_file(tmp_path / "n.bin", rng.normal(size=4000) + 1j * rng.normal(size=4000))
    cfg = fast_cfg(trials=2, snr_db=[10, 20], estimators=["gcc-phat"], noise_file=str(tmp_path / "n.bin"),
                   plot=False)
    assert run_sweep(cfg).rows[0]["trials"] == 2
    with pytest.raises(ValueError, match="exhausted"):
        run_sweep(cfg.with_overrides(trials=10))


TRAIN_CFG = """
seed: 5
snr_db: [20]
records_per_snr: 96
network: {dense: [16], channels: [4, 8, 8]}
training: {epochs: 4, joint_epochs: 3, batch: 16}
"""


def test_train_cli_round_trip(tmp_path):
    (tmp_path / "c.yaml").write_text(TRAIN_CFG)
    assert cli.main(["generate", "--config", str(tmp_path / "c.yaml"), "--out", str(tmp_path / "d.bin")]) == 0
    assert cli.main(["train", "--config", str(tmp_path / "c.yaml"), "--data", str(tmp_path / "d.bin"),
                     "--out", str(tmp_path / "m")]) == 0
    for name in ("phase1_range", "phase1_azimuth", "phase1_inclination", "phase2"):
        trace = _read(tmp_path / "m" / f"{name}_loss.csv")
        losses = np.array([float(t["loss"]) for t in trace])
        epochs = 3 if name == "phase2" else 4
        per = len(losses) // epochs
        assert losses[-per:].mean() < losses[:per].mean(), name
    joint = load_checkpoint(tmp_path / "m" / "joint.ckpt")
    cfg = load_config(tmp_path / "c.yaml")
    held = [make_record(cfg.with_overrides(seed=999), 0, t) for t in range(3)]
    out = predict_xyz(joint, np.array([build_sos(r) for r in held]))
    assert out.shape == (3, 3) and np.all(np.isfinite(out))
    write_dataset(tmp_path / "h.bin", held)
    assert cli.main(["estimate", "--data", str(tmp_path / "h.bin"), "--estimators", "cnn",
                     "--checkpoint", str(tmp_path / "m" / "joint.ckpt")]) == 0

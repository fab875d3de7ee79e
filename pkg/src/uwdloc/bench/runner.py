"""Dataset generation, single-record estimation, Monte-Carlo sweeps and training."""

from __future__ import annotations

import csv
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from ..estimators import gcc_phat_localize, oracle_mfp, sbl_localize
from ..geometry import cart_to_sph
from ..nn import load_checkpoint, progressive_train, with_normalization
from ..nn.checkpoint import save_checkpoint
from ..nn.model import COORDS
from ..nn.train import predict_xyz, write_trace
from ..propagation import NoiseFile, draw_source, sample_attenuations, synthesize
from ..sos import build_sos
from .config import ExperimentConfig
from .dataset import read_dataset, write_dataset

log = logging.getLogger(__name__)

N_RAYS = 3
SWEEP_COLUMNS = ["estimator", "snr_db", "rmse_m", "trials", "mean_runtime_s"]
TRIAL_COLUMNS = ["estimator", "snr_db", "trial", "error_m", "x_hat", "y_hat", "z_hat"]


def trial_rng(seed, snr_index, trial):
    """Generator for one Monte-Carlo trial, independent of every other trial."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(snr_index), int(trial)]))


def make_record(cfg: ExperimentConfig, snr_index, trial, noise=None, trials_per_snr=None):
    rng = trial_rng(cfg.seed, snr_index, trial)
    p = draw_source(cfg.prior_box, rng)
    B = sample_attenuations(N_RAYS, len(cfg.scene.array), rng)
    if noise is not None:
        per = trials_per_snr or cfg.trials
        noise = noise.view((snr_index * per + trial) * len(cfg.scene.array) * cfg.scene.env.N)
    return synthesize(p, cfg.scene, B, cfg.snr_db[snr_index], rng, dynamic=cfg.dynamic,
                      noise=noise, rel_std=cfg.rel_std)


def cmd_generate(cfg: ExperimentConfig, out):
    noise = NoiseFile(cfg.noise_file) if cfg.noise_file else None
    J = cfg.records_per_snr
    records = [make_record(cfg, s, j, noise, J) for s in range(len(cfg.snr_db)) for j in range(J)]
    write_dataset(out, records, dynamic=cfg.dynamic, include_truth=cfg.include_truth)
    return len(records)


@dataclass
class Estimate:
    position: np.ndarray
    objective: float
    runtime_s: float


@lru_cache(maxsize=4)
def _model(path):
    return load_checkpoint(path)


def cmd_estimate(rec, name, cfg: ExperimentConfig):
    """Run one estimator on one record.  Raises on missing truth or checkpoint."""
    t0 = time.perf_counter()
    if name == "oracle-mfp":
        res = oracle_mfp(rec, cfg.scene, cfg.volume())
        pos, obj = res.x, res.fun
    elif name == "sbl":
        res = sbl_localize(rec, cfg.scene, cfg.volume(), R=N_RAYS)
        pos, obj = res.x, res.fun
    elif name == "gcc-phat":
        res = gcc_phat_localize(rec, cfg.scene, cfg.volume())
        pos, obj = res.x, res.fun
    elif name == "cnn":
        if not cfg.checkpoint:
            raise FileNotFoundError("the cnn estimator needs --checkpoint")
        model = _model(str(cfg.checkpoint))
        pos = predict_xyz(model, build_sos(rec))[0]
        obj = float("nan")
    else:
        raise ValueError(f"unknown estimator {name!r}")
    return Estimate(np.asarray(pos, dtype=float), float(obj), time.perf_counter() - t0)


def _run_job(args):
    cfg, snr_index, trial, record = args
    if record is None:
        noise = NoiseFile(cfg.noise_file) if cfg.noise_file else None
        record = make_record(cfg, snr_index, trial, noise)
    out = []
    for name in cfg.estimators:
        est = cmd_estimate(record, name, cfg)
        out.append((name, float(np.linalg.norm(est.position - record.label)), est.position, est.runtime_s))
    return snr_index, trial, out


@dataclass
class SweepResult:
    rows: list  # dicts keyed by SWEEP_COLUMNS
    trials: list  # dicts keyed by TRIAL_COLUMNS plus runtime_s


def run_sweep(cfg: ExperimentConfig, records=None):
    """RMSE per (estimator, SNR).  ``records`` optionally maps SNR index to a list
    of records from a dataset; otherwise trials are generated on the fly."""
    if records is None:
        jobs = [(cfg, s, t, None) for s in range(len(cfg.snr_db)) for t in range(cfg.trials)]
    else:
        jobs = [(cfg, s, t, r) for s, recs in sorted(records.items()) for t, r in enumerate(recs)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            results = list(pool.map(_run_job, jobs, chunksize=max(1, len(jobs) // (4 * cfg.workers))))
    else:
        results = []
        for i, job in enumerate(jobs):
            results.append(_run_job(job))
            log.debug("trial %d/%d done", i + 1, len(jobs))
    results.sort(key=lambda r: (r[0], r[1]))
    trials = []
    for s, t, out in results:
        for name, err, pos, rt in out:
            trials.append({"estimator": name, "snr_db": cfg.snr_db[s], "trial": t, "error_m": err,
                           "x_hat": pos[0], "y_hat": pos[1], "z_hat": pos[2], "runtime_s": rt})
    rows = []
    for name in cfg.estimators:
        for s, snr in enumerate(cfg.snr_db):
            sel = [r for r in trials if r["estimator"] == name and r["snr_db"] == snr]
            if not sel:
                continue
            err = np.array([r["error_m"] for r in sel])
            rows.append({"estimator": name, "snr_db": snr, "rmse_m": float(np.sqrt(np.mean(err ** 2))),
                         "trials": len(sel),
                         "mean_runtime_s": float(np.mean([r["runtime_s"] for r in sel]))})
    return SweepResult(rows, trials)


def _fmt(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def write_csv(path, rows, columns):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in columns])


def records_by_snr(cfg: ExperimentConfig, path):
    records, _ = read_dataset(path)
    groups = {}
    for r in records:
        if r.snr_db not in cfg.snr_db:
            continue
        groups.setdefault(cfg.snr_db.index(r.snr_db), []).append(r)
    if not groups:
        raise ValueError(f"{path}: no records at the configured SNR levels {list(cfg.snr_db)}")
    return groups


def cmd_sweep(cfg: ExperimentConfig, out_dir, data=None):
    """Write ``sweep.csv``, ``trials.csv`` and optionally ``rmse.svg`` into ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    records = records_by_snr(cfg, data) if data else None
    res = run_sweep(cfg, records)
    write_csv(out_dir / "sweep.csv", res.rows, SWEEP_COLUMNS)
    write_csv(out_dir / "trials.csv", res.trials, TRIAL_COLUMNS)
    if cfg.plot:
        from .plotting import plot_rmse

        plot_rmse(res.rows, out_dir / "rmse.svg", title="dynamic model" if cfg.dynamic else "static model")
    return res


def cmd_train(cfg: ExperimentConfig, data, out_dir):
    """Progressive training on a dataset file; writes checkpoints and loss traces."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    records, hdr = read_dataset(data)
    if not records:
        raise ValueError(f"{data}: empty dataset")
    sos = np.array([build_sos(r) for r in records])
    labels = np.array([r.label for r in records])
    net = cfg.network_config(input_shape=list(sos.shape[1:3]))
    net = with_normalization(net, sos, cart_to_sph(labels))
    joint, branches, traces = progressive_train(sos, labels, net, cfg.train_options(), seed=cfg.seed)
    paths = {}
    for b in branches:
        name = f"phase1_{COORDS[b.coord]}"
        paths[name] = out_dir / f"{name}.ckpt"
        save_checkpoint(paths[name], b)
        write_trace(out_dir / f"{name}_loss.csv", traces[f"phase1_{b.coord}"])
    paths["joint"] = out_dir / "joint.ckpt"
    save_checkpoint(paths["joint"], joint)
    write_trace(out_dir / "phase2_loss.csv", traces["phase2"])
    return paths, traces

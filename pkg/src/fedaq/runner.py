"""Turn an ExperimentConfig into runs, metric tables and comparisons."""

from __future__ import annotations

import csv
import dataclasses
import io
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import stats

from .allocation import (
    EnergyParams,
    Lossless,
    RangeTrace,
    alpha_joint,
    alpha_uplink_only,
    beta_downlink_only,
)
from .config import ExperimentConfig, dump_config
from .datasets import Dataset, idx_load, synth_generate
from .energy import energy_to_reach, first_crossing
from .engine import FLConfig, RoundRecord, RunResult, TrainSettings, run_federated
from .models import ModelSpec
from .rng import hash64

METRICS_COLUMNS = (
    "m", "train_loss", "test_acc", "test_loss", "R_up_mean", "R_dn",
    "bits_up_mean", "bits_dn", "energy_up_cum", "energy_dn_cum",
)
COMPARISON_COLUMNS = (
    "name", "policy", "final_test_acc", "final_train_loss", "total_energy_pj",
    "threshold", "rounds_to_threshold", "energy_to_threshold_pj", "saving_pct",
)


def _num(x) -> str:
    # shortest round-trip repr; locale independent
    return repr(float(x))


def load_datasets(cfg: ExperimentConfig) -> tuple[Dataset, Dataset]:
    d = cfg.data
    if d.source == "idx":
        return (idx_load(d.train_images, d.train_labels, "train"),
                idx_load(d.test_images, d.test_labels, "test"))
    train = synth_generate(d.train_samples, d.features, d.classes, d.spread,
                           hash64(d.seed, "train"), "synthetic-train")
    test = synth_generate(d.test_samples, d.features, d.classes, d.spread,
                          hash64(d.seed, "test"), "synthetic-test")
    return train, test


def model_spec(cfg: ExperimentConfig, train: Dataset) -> ModelSpec:
    hidden = cfg.model.hidden if cfg.model.kind == "mlp" else 0
    return ModelSpec(cfg.model.kind, train.num_features, cfg.data.classes, hidden)


def fl_config(cfg: ExperimentConfig, policy=None, datasets=None) -> FLConfig:
    train, test = datasets if datasets is not None else load_datasets(cfg)
    e = cfg.experiment
    settings = TrainSettings(
        tau=e.local_steps, eta=e.learning_rate, batch_size=e.batch_size,
        momentum=e.momentum, run_seed=e.seed,
    )
    return FLConfig(
        model=model_spec(cfg, train), train=train, test=test, n=e.clients, K=e.rounds,
        settings=settings, policy=policy if policy is not None else cfg.build_policy(),
        e1=cfg.energy.e1, e2=cfg.energy.e2,
    )


def trace_of(history: list[RoundRecord]) -> RangeTrace:
    return RangeTrace.from_observed(
        [r.uplink_ranges for r in history], [r.downlink_range for r in history]
    )


def oracle_constant(cfg: ExperimentConfig, datasets=None) -> float:
    """Pilot run with lossless links, then the budget-matching alpha (or beta)."""
    datasets = datasets if datasets is not None else load_datasets(cfg)
    pilot = run_federated(fl_config(cfg, Lossless(), datasets))
    trace = trace_of(pilot.history)
    e = cfg.experiment
    ep = EnergyParams(cfg.energy.e1, cfg.energy.e2, cfg.energy.budget,
                      len(pilot.final_model), e.clients, e.rounds)
    if cfg.policy.kind == "uplink":
        return alpha_uplink_only(trace, ep)
    if cfg.policy.kind == "downlink":
        return beta_downlink_only(trace, ep)
    return alpha_joint(trace, ep)


@dataclass
class Experiment:
    config: ExperimentConfig
    result: RunResult
    policy_desc: dict

    @property
    def history(self):
        return self.result.history


def run_experiment(cfg: ExperimentConfig) -> Experiment:
    datasets = load_datasets(cfg)
    alpha = None
    if cfg.policy.alpha_mode == "oracle" and cfg.experiment.rounds > 0:
        alpha = oracle_constant(cfg, datasets)
    policy = cfg.build_policy(alpha)
    result = run_federated(fl_config(cfg, policy, datasets))
    return Experiment(cfg, result, policy.describe())


def metrics_csv(history: list[RoundRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(METRICS_COLUMNS)
    up_cum = dn_cum = 0.0
    for r in history:
        up_cum += r.energy_up
        dn_cum += r.energy_down
        w.writerow([
            r.round, _num(r.train_loss), _num(r.test_accuracy), _num(r.test_loss),
            _num(np.mean(r.uplink_ranges)), _num(r.downlink_range),
            _num(np.mean(r.uplink_bits)), r.downlink_bits, _num(up_cum), _num(dn_cum),
        ])
    return buf.getvalue()


def ranges_csv(history: list[RoundRecord]) -> str:
    n = len(history[0].uplink_ranges) if history else 0
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["m", "R_dn", "R_up_mean"] + [f"R_up_{i}" for i in range(n)])
    for r in history:
        w.writerow([r.round, _num(r.downlink_range), _num(np.mean(r.uplink_ranges))]
                   + [_num(x) for x in r.uplink_ranges])
    return buf.getvalue()


def summary(exp: Experiment) -> dict:
    h = exp.history
    totals = exp.result.ledger.total()
    last = h[-1] if h else None
    return {
        "name": exp.config.experiment.name,
        "policy": exp.policy_desc,
        "rounds": len(h),
        "final_test_accuracy": last.test_accuracy if last else None,
        "final_test_loss": last.test_loss if last else None,
        "final_train_loss": last.train_loss if last else None,
        "best_test_accuracy": max((r.test_accuracy for r in h), default=None),
        "energy_uplink_pj": totals.uplink,
        "energy_downlink_pj": totals.downlink,
        "energy_total_pj": totals.total,
        "clamp_events": sum(r.clamp_events for r in h),
        "model_dimension": len(exp.result.final_model),
    }


def write_run_outputs(exp: Experiment, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "metrics.csv").write_text(metrics_csv(exp.history))
    (out_dir / "ledger.csv").write_text(exp.result.ledger.to_csv())
    (out_dir / "config.ini").write_text(dump_config(exp.config))
    (out_dir / "summary.json").write_text(json.dumps(summary(exp), indent=2, sort_keys=True) + "\n")


@dataclass(frozen=True)
class Trend:
    slope: float
    spearman: float


def trend(series, start: int = 0) -> Trend:
    """Least-squares slope against round index and Spearman rank correlation."""
    y = np.asarray(series, dtype=np.float64)[start:]
    x = np.arange(start, start + y.size, dtype=np.float64)
    if y.size < 2 or np.ptp(y) == 0:
        return Trend(0.0, 0.0)
    slope = float(np.polyfit(x, y, 1)[0])
    rho = float(stats.spearmanr(x, y).statistic)
    return Trend(slope, rho)


def range_trends(history: list[RoundRecord], start: int = 0) -> tuple[Trend, Trend]:
    up = [np.mean(r.uplink_ranges) for r in history]
    dn = [r.downlink_range for r in history]
    return trend(up, start), trend(dn, start)


def lossless_variant(cfg: ExperimentConfig) -> ExperimentConfig:
    policy = dataclasses.replace(cfg.policy, kind="lossless", alpha_mode="fixed")
    return dataclasses.replace(cfg, policy=policy)


@dataclass(frozen=True)
class ComparisonRow:
    name: str
    policy: str
    final_test_acc: float
    final_train_loss: float
    total_energy: float
    threshold: float
    rounds_to_threshold: int | None
    energy_to_threshold: float | None
    saving_pct: float | None


def saving_pct(base: float | None, new: float | None) -> float | None:
    """Energy saving of ``new`` relative to ``base``, in percent."""
    if base is None or new is None or base == 0:
        return None
    return (base - new) / base * 100.0


def compare(experiments: list[Experiment], threshold_acc: float | None = None,
            threshold_loss: float | None = None) -> list[ComparisonRow]:
    """Energy needed by each run to reach a common metric threshold.

    The first experiment is the baseline for saving percentages.  With no
    threshold given, the accuracy threshold is the best accuracy reached by
    the weakest run.
    """
    if threshold_loss is not None:
        series = [[r.train_loss for r in e.history] for e in experiments]
        threshold, higher = threshold_loss, False
    else:
        series = [[r.test_accuracy for r in e.history] for e in experiments]
        if threshold_acc is None:
            threshold_acc = min(max(s, default=0.0) for s in series)
        threshold, higher = threshold_acc, True
    energies = [energy_to_reach(e.result.ledger, s, threshold, higher)
                for e, s in zip(experiments, series)]
    rows = []
    for e, s, energy in zip(experiments, series, energies):
        h = e.history
        rows.append(ComparisonRow(
            name=e.config.experiment.name,
            policy=e.policy_desc["kind"],
            final_test_acc=h[-1].test_accuracy if h else float("nan"),
            final_train_loss=h[-1].train_loss if h else float("nan"),
            total_energy=e.result.ledger.total().total,
            threshold=threshold,
            rounds_to_threshold=(None if (m := first_crossing(s, threshold, higher)) is None else m + 1),
            energy_to_threshold=energy,
            saving_pct=saving_pct(energies[0], energy),
        ))
    return rows


def comparison_csv(rows: list[ComparisonRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COMPARISON_COLUMNS)
    for r in rows:
        w.writerow([
            r.name, r.policy, _num(r.final_test_acc), _num(r.final_train_loss),
            _num(r.total_energy), _num(r.threshold),
            "not reached" if r.rounds_to_threshold is None else r.rounds_to_threshold,
            "not reached" if r.energy_to_threshold is None else _num(r.energy_to_threshold),
            "" if r.saving_pct is None else _num(r.saving_pct),
        ])
    return buf.getvalue()


def comparison_table(rows: list[ComparisonRow]) -> str:
    head = f"{'name':<20} {'policy':<9} {'final acc':>9} {'rounds':>7} {'energy to thr (pJ)':>19} {'saving':>8}"
    lines = [head, "-" * len(head)]
    for r in rows:
        rounds = "-" if r.rounds_to_threshold is None else str(r.rounds_to_threshold)
        energy = "not reached" if r.energy_to_threshold is None else f"{r.energy_to_threshold:.6g}"
        save = "n/a" if r.saving_pct is None else f"{r.saving_pct:.1f}%"
        lines.append(f"{r.name:<20} {r.policy:<9} {r.final_test_acc:>9.4f} {rounds:>7} {energy:>19} {save:>8}")
    if rows:
        lines.append(f"threshold: {rows[0].threshold:.6g}; saving relative to {rows[0].name}")
    return "\n".join(lines)

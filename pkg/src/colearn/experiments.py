"""The co-learning protocol: train unimodal and multimodal arms, evaluate
everything on unimodal test data, sweep dropout levels, and report.

Per seed, the unimodal arm trains with every non-language modality
deterministically zeroed (masking probability 1), and each multimodal arm
trains with dropout probability ``level`` on audio and visual, language
never dropped. All arms share the per-seed model initialization, and every
arm is evaluated on the language-only test split.
"""

from __future__ import annotations

import json
import logging
import multiprocessing
from dataclasses import dataclass, field, replace

import numpy as np

from .data import CLASSIFICATION, DatasetSplit, stack_batch
from .dropout import DropoutPolicy, mask_for_unimodal_eval
from .metrics import CoLearningOutcome, MetricSet, classify_outcome, compute_metrics, prediction_collapse_index
from .models import BiEflstmClassifier, MfnRegressor, set_parameters
from .training import TrainConfig, seed_streams, train

logger = logging.getLogger(__name__)

DEFAULT_LEVELS = (0.0, 0.2, 0.4, 0.6, 0.8, 0.9)
DEFAULT_SEEDS = (0, 1, 2, 3, 4)

UNIMODAL_ARM = "unimodal"


@dataclass
class SeedResult:
    seed: int
    metrics: MetricSet
    best_epoch: int
    stopped_epoch: int | None

    @property
    def collapse_index(self) -> float:
        return prediction_collapse_index(self.metrics.confusion)


@dataclass
class ExperimentReport:
    model_kind: str
    task: str
    seeds: list[int]
    levels: list[float]
    unimodal: list[SeedResult]
    multimodal: dict[float, list[SeedResult]] = field(default_factory=dict)
    outcomes: dict[float, CoLearningOutcome] = field(default_factory=dict)
    degradation_above_080: bool | None = None

    def arm_results(self, arm) -> list[SeedResult]:
        return self.unimodal if arm == UNIMODAL_ARM else self.multimodal[arm]

    def mean_metrics(self, arm) -> MetricSet:
        results = self.arm_results(arm)
        maes = [r.metrics.mae for r in results]
        return MetricSet(
            accuracy=float(np.mean([r.metrics.accuracy for r in results])),
            f1=float(np.mean([r.metrics.f1 for r in results])),
            mae=None if maes[0] is None else float(np.mean(maes)),
            confusion=np.sum([r.metrics.confusion for r in results], axis=0),
        )

    def mean_collapse(self, arm) -> float:
        return float(np.mean([r.collapse_index for r in self.arm_results(arm)]))


def _build_model(model_kind: str, split: DatasetSplit, config: TrainConfig, seed: int):
    init_rng, _, _ = seed_streams(seed)
    if model_kind == BiEflstmClassifier.kind:
        return BiEflstmClassifier(split.dims, config.hidden_size, split.task.num_classes, init_rng)
    if model_kind == MfnRegressor.kind:
        return MfnRegressor(split.dims, hidden_dim=config.hidden_size, rng=init_rng)
    raise ValueError(f"unknown model kind {model_kind!r}")


def evaluate_unimodal(model, samples, task, kept: str = "language") -> MetricSet:
    """Metrics on a sample list with every modality but ``kept`` zeroed."""
    if not samples:
        raise ValueError("cannot evaluate on an empty sample list")
    batch = mask_for_unimodal_eval(stack_batch(samples), kept)
    predictions = model.predict(batch)
    targets = batch.targets if task.kind != CLASSIFICATION else batch.targets.astype(np.int64)
    return compute_metrics(predictions, targets, task)


def train_arm(model_kind: str, split: DatasetSplit, config: TrainConfig, policy: DropoutPolicy, seed: int) -> SeedResult:
    """Train one arm for one seed and evaluate it on the unimodal test set."""
    arm_config = replace(config, dropout_policy=policy, seed=seed)
    model = _build_model(model_kind, split, arm_config, seed)
    best_params, history = train(model, split, arm_config)
    set_parameters(model, best_params)
    metrics = evaluate_unimodal(model, split.test, split.task, arm_config.validation_modality)
    result = SeedResult(
        seed=seed,
        metrics=metrics,
        best_epoch=history.best_epoch or 0,
        stopped_epoch=history.early_stop_epoch,
    )
    logger.info(
        "seed %d p=(%g,%g,%g): best epoch %s, stopped %s, accuracy %.3f",
        seed,
        policy.p_language,
        policy.p_audio,
        policy.p_visual,
        history.best_epoch,
        history.early_stop_epoch,
        metrics.accuracy,
    )
    return result


def unimodal_policy() -> DropoutPolicy:
    """Training-time policy that zeroes audio and visual with certainty."""
    return DropoutPolicy(p_audio=1.0, p_language=0.0, p_visual=1.0)


def sweep_policy(level: float) -> DropoutPolicy:
    """Dropout applied jointly to audio and visual; language never dropped."""
    return DropoutPolicy(p_audio=level, p_language=0.0, p_visual=level)


# Worker context for parallel seed runs: each forked worker reuses one
# (model_kind, split, config) tuple instead of repickling it per job.
_job_context = None


def _init_job_context(context) -> None:
    global _job_context
    _job_context = context


def _arm_job(job):
    arm_key, policy, seed = job
    model_kind, split, config = _job_context
    return arm_key, seed, train_arm(model_kind, split, config, policy, seed)


def run_protocol(
    split: DatasetSplit,
    model_kind: str,
    config: TrainConfig,
    levels=DEFAULT_LEVELS,
    seeds=DEFAULT_SEEDS,
    workers: int | None = None,
) -> ExperimentReport:
    """Full protocol: unimodal arm plus one multimodal arm per dropout level,
    averaged over seeds, with a co-learning label per level.

    ``workers`` > 1 trains arms in parallel processes; every arm depends
    only on its own (policy, seed), so results are identical to a serial
    run regardless of scheduling.
    """
    levels = [float(l) for l in levels]
    seeds = [int(s) for s in seeds]
    if any(not 0.0 <= l <= 1.0 for l in levels):
        raise ValueError(f"dropout levels must lie in [0, 1]: {levels}")
    expected_task = BiEflstmClassifier.task_kind if model_kind == BiEflstmClassifier.kind else MfnRegressor.task_kind
    if split.task.kind != expected_task:
        raise ValueError(f"model {model_kind!r} needs a {expected_task} dataset, got {split.task.kind}")

    jobs = [(UNIMODAL_ARM, unimodal_policy(), s) for s in seeds]
    for level in levels:
        jobs.extend((level, sweep_policy(level), s) for s in seeds)

    if workers is not None and workers > 1:
        context = (model_kind, split, config)
        with multiprocessing.get_context("fork").Pool(
            workers, initializer=_init_job_context, initargs=(context,)
        ) as pool:
            finished = pool.map(_arm_job, jobs)
    else:
        _init_job_context((model_kind, split, config))
        finished = [_arm_job(job) for job in jobs]

    by_arm: dict = {UNIMODAL_ARM: {}}
    for level in levels:
        by_arm[level] = {}
    for arm_key, seed, result in finished:
        by_arm[arm_key][seed] = result

    report = ExperimentReport(
        model_kind=model_kind,
        task=split.task.kind,
        seeds=seeds,
        levels=levels,
        unimodal=[by_arm[UNIMODAL_ARM][s] for s in seeds],
    )
    for level in levels:
        report.multimodal[level] = [by_arm[level][s] for s in seeds]

    uni_mean = report.mean_metrics(UNIMODAL_ARM)
    for level in levels:
        report.outcomes[level] = classify_outcome(report.mean_metrics(level), uni_mean)

    if 0.8 in report.multimodal and 0.9 in report.multimodal:
        if split.task.kind == CLASSIFICATION:
            report.degradation_above_080 = (
                report.mean_metrics(0.9).accuracy < report.mean_metrics(0.8).accuracy
            )
        else:
            report.degradation_above_080 = report.mean_metrics(0.9).mae > report.mean_metrics(0.8).mae
    return report


def dropout_sweep(
    split: DatasetSplit,
    model_kind: str,
    config: TrainConfig,
    levels=DEFAULT_LEVELS,
    seeds=DEFAULT_SEEDS,
    workers: int | None = None,
) -> ExperimentReport:
    """The dropout-level sweep; level 0.0 doubles as the no-dropout baseline."""
    return run_protocol(split, model_kind, config, levels, seeds, workers=workers)


# ---------------------------------------------------------------------------
# serialization (deterministic: no timestamps, sorted keys)


def _metrics_to_dict(m: MetricSet) -> dict:
    return {
        "accuracy": float(m.accuracy),
        "f1": float(m.f1),
        "mae": None if m.mae is None else float(m.mae),
        "confusion": None if m.confusion is None else [[int(v) for v in row] for row in m.confusion],
    }


def _metrics_from_dict(d: dict) -> MetricSet:
    return MetricSet(
        accuracy=d["accuracy"],
        f1=d["f1"],
        mae=d["mae"],
        confusion=None if d["confusion"] is None else np.array(d["confusion"], dtype=np.int64),
    )


def _seed_result_to_dict(r: SeedResult) -> dict:
    return {
        "seed": r.seed,
        "metrics": _metrics_to_dict(r.metrics),
        "best_epoch": r.best_epoch,
        "stopped_epoch": r.stopped_epoch,
        "collapse_index": float(r.collapse_index),
    }


def _seed_result_from_dict(d: dict) -> SeedResult:
    return SeedResult(
        seed=d["seed"],
        metrics=_metrics_from_dict(d["metrics"]),
        best_epoch=d["best_epoch"],
        stopped_epoch=d["stopped_epoch"],
    )


def _mean_block(report: ExperimentReport, arm) -> dict:
    mean = report.mean_metrics(arm)
    return {
        "accuracy": float(mean.accuracy),
        "f1": float(mean.f1),
        "mae": None if mean.mae is None else float(mean.mae),
        "collapse_index": float(report.mean_collapse(arm)),
    }


def report_to_dict(report: ExperimentReport) -> dict:
    return {
        "model_kind": report.model_kind,
        "task": report.task,
        "seeds": report.seeds,
        "levels": [float(l) for l in report.levels],
        "unimodal": [_seed_result_to_dict(r) for r in report.unimodal],
        "multimodal": {repr(float(l)): [_seed_result_to_dict(r) for r in rs] for l, rs in report.multimodal.items()},
        "averages": {
            UNIMODAL_ARM: _mean_block(report, UNIMODAL_ARM),
            **{repr(float(l)): _mean_block(report, l) for l in report.levels},
        },
        "outcomes": {
            repr(float(l)): {"label": o.label, "margin": float(o.margin), "tie_tolerance": float(o.tie_tolerance)}
            for l, o in report.outcomes.items()
        },
        "degradation_above_080": report.degradation_above_080,
    }


def report_from_dict(d: dict) -> ExperimentReport:
    return ExperimentReport(
        model_kind=d["model_kind"],
        task=d["task"],
        seeds=list(d["seeds"]),
        levels=[float(l) for l in d["levels"]],
        unimodal=[_seed_result_from_dict(r) for r in d["unimodal"]],
        multimodal={float(l): [_seed_result_from_dict(r) for r in rs] for l, rs in d["multimodal"].items()},
        outcomes={
            float(l): CoLearningOutcome(o["label"], o["margin"], o["tie_tolerance"])
            for l, o in d["outcomes"].items()
        },
        degradation_above_080=d["degradation_above_080"],
    )


def save_report(report: ExperimentReport, path) -> None:
    blob = json.dumps(report_to_dict(report), sort_keys=True, indent=2)
    with open(path, "w") as f:
        f.write(blob)
        f.write("\n")


def load_report(path) -> ExperimentReport:
    with open(path) as f:
        return report_from_dict(json.load(f))


# ---------------------------------------------------------------------------
# rendering


def _arm_rows(report: ExperimentReport):
    yield UNIMODAL_ARM, "", report.unimodal
    for level in report.levels:
        yield f"multimodal@{level:g}", level, report.multimodal[level]


def render_table(report: ExperimentReport) -> str:
    """Plain-text summary, one row per arm with seed-averaged metrics."""
    regression = report.task != CLASSIFICATION
    header = ["arm", "accuracy", "macro_f1"] + (["mae"] if regression else []) + ["collapse", "outcome"]
    rows = [header]
    for name, level, _results in _arm_rows(report):
        mean = report.mean_metrics(UNIMODAL_ARM if name == UNIMODAL_ARM else level)
        outcome = report.outcomes.get(level) if name != UNIMODAL_ARM else None
        row = [name, f"{mean.accuracy * 100:.2f}%", f"{mean.f1:.4f}"]
        if regression:
            row.append(f"{mean.mae:.4f}")
        row.append(f"{report.mean_collapse(UNIMODAL_ARM if name == UNIMODAL_ARM else level):.3f}")
        row.append("-" if outcome is None else f"{outcome.label} ({outcome.margin:+.2f})")
        rows.append(row)

    widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip() for row in rows]
    lines.insert(1, "  ".join("-" * w for w in widths))
    if report.degradation_above_080 is not None:
        direction = "below" if report.degradation_above_080 else "not below"
        lines.append("")
        lines.append(f"level 0.9 mean performance is {direction} level 0.8 (degradation above 0.8: "
                     f"{report.degradation_above_080})")
    return "\n".join(lines) + "\n"


def render_csv(report: ExperimentReport) -> str:
    """Plot-ready rows: per-seed values plus a mean row per arm."""
    lines = ["level,arm,seed,accuracy,macro_f1,mae,collapse_index"]
    for name, level, results in _arm_rows(report):
        level_str = "" if name == UNIMODAL_ARM else repr(float(level))
        for r in results:
            mae = "" if r.metrics.mae is None else repr(float(r.metrics.mae))
            lines.append(
                f"{level_str},{name},{r.seed},{r.metrics.accuracy!r},{r.metrics.f1!r},{mae},{r.collapse_index!r}"
            )
        mean = report.mean_metrics(UNIMODAL_ARM if name == UNIMODAL_ARM else level)
        mae = "" if mean.mae is None else repr(float(mean.mae))
        collapse = report.mean_collapse(UNIMODAL_ARM if name == UNIMODAL_ARM else level)
        lines.append(f"{level_str},{name},mean,{mean.accuracy!r},{mean.f1!r},{mae},{collapse!r}")
    return "\n".join(lines) + "\n"

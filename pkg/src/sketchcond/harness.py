"""Paired benchmark harness: run several conditioner arms on one dataset.

Every arm trains with the same seed, so all arms consume the identical
example sequence and convergence comparisons are paired. Per arm the
harness records the preprocessing cost, the per-iteration cost, the final
loss and (when a target is set) the first checkpoint at which the
monitored loss crossed the target. Results go to one trace CSV per arm, a
summary JSON and, by default, rendered convergence figures.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

from .conditioner import (Conditioner, build_exact_lowrank, build_full, build_identity)
from .data import Dataset
from .errors import ConfigError, DivergenceError
from .linalg import second_moment
from .optimizer import TrainConfig, TrainTrace, train, write_trace_csv
from .sketch import SketchConfig, sketched_preprocessing

CONDITIONER_KINDS = ("identity", "full", "exact_lowrank", "sketched")


@dataclass(frozen=True)
class ArmSpec:
    name: str
    kind: str
    k: int = 0
    r: int | None = None
    seed: int = 0
    distribution: str = "gaussian"
    eps_floor: float | None = None

    def __post_init__(self):
        if self.kind not in CONDITIONER_KINDS:
            raise ConfigError(f"unknown conditioner kind {self.kind!r}")
        if self.kind in ("exact_lowrank", "sketched") and self.k < 1:
            raise ConfigError(f"arm {self.name!r} needs a rank k >= 1")

    @staticmethod
    def from_dict(d: dict) -> "ArmSpec":
        cond = d.get("conditioner", {})
        return ArmSpec(
            name=d["name"], kind=cond.get("kind", "identity"),
            k=int(cond.get("k", 0)),
            r=int(cond["r"]) if "r" in cond else None,
            seed=int(cond.get("seed", 0)),
            distribution=cond.get("distribution", "gaussian"),
            eps_floor=cond.get("eps_floor"),
        )


def build_arm_conditioner(spec: ArmSpec, data: Dataset) -> Conditioner:
    if spec.kind == "identity":
        return build_identity(data.n)
    if spec.kind == "sketched":
        cfg = SketchConfig(k=spec.k, r=spec.r, seed=spec.seed,
                           distribution=spec.distribution)
        cond, _ = sketched_preprocessing(data.x, cfg)
        return cond
    c = second_moment(data.x)
    if spec.kind == "full":
        return build_full(c, spec.eps_floor)
    return build_exact_lowrank(c, spec.k)


@dataclass
class ArmResult:
    name: str
    final_loss: float | None
    final_eval_loss: float | None
    iterations_to_target: int | None
    preprocessing_ms: float
    per_iter_ms: float
    diverged: bool
    index_hash: int
    trace: TrainTrace


@dataclass
class ComparisonReport:
    arms: list[ArmResult] = field(default_factory=list)
    target_loss: float | None = None

    def summary_dict(self) -> dict:
        return {
            "target_loss": self.target_loss,
            "arms": [
                {
                    "arm": a.name,
                    "final_loss": a.final_loss,
                    "final_eval_loss": a.final_eval_loss,
                    "iterations_to_target": a.iterations_to_target,
                    "preprocessing_ms": a.preprocessing_ms,
                    "per_iter_ms": a.per_iter_ms,
                    "diverged": a.diverged,
                    "index_hash": format(a.index_hash, "016x"),
                }
                for a in self.arms
            ],
        }


def _iterations_to_target(trace: TrainTrace, target: float, use_eval: bool) -> int | None:
    for c in trace.checkpoints:
        value = c.eval_loss if use_eval else c.train_loss
        if value is not None and value <= target:
            return c.iteration
    return None


def compare(data: Dataset, arms: list[ArmSpec], cfg: TrainConfig,
            target_loss: float | None = None,
            eval_data: Dataset | None = None,
            outdir=None, plot: bool = True) -> ComparisonReport:
    """Train every arm on the same example sequence and summarize.

    A diverging arm is recorded with its partial trace, not fatal. When
    ``outdir`` is set the harness writes ``<arm>_trace.csv`` files, a
    ``summary.json`` and (unless ``plot`` is false) convergence figures.
    """
    if len(arms) < 2:
        raise ConfigError("need at least 2 arms to compare")
    names = [a.name for a in arms]
    if len(set(names)) != len(names):
        raise ConfigError(f"duplicate arm names: {names}")

    report = ComparisonReport(target_loss=target_loss)
    use_eval = eval_data is not None
    for spec in arms:
        t0 = time.perf_counter()
        cond = build_arm_conditioner(spec, data)
        pre_ms = (time.perf_counter() - t0) * 1e3

        t0 = time.perf_counter()
        diverged = False
        try:
            state, trace = train(data, cond, cfg, eval_data=eval_data)
            index_hash = state.index_hash
        except DivergenceError as err:
            trace = err.trace if err.trace is not None else TrainTrace(diverged=True)
            diverged = True
            index_hash = err.state.index_hash if err.state is not None else 0
        train_ms = (time.perf_counter() - t0) * 1e3

        last = trace.checkpoints[-1] if trace.checkpoints else None
        report.arms.append(ArmResult(
            name=spec.name,
            final_loss=last.train_loss if last else None,
            final_eval_loss=last.eval_loss if last else None,
            iterations_to_target=(_iterations_to_target(trace, target_loss, use_eval)
                                  if target_loss is not None else None),
            preprocessing_ms=pre_ms,
            per_iter_ms=train_ms / cfg.iterations,
            diverged=diverged,
            index_hash=index_hash,
            trace=trace,
        ))

    hashes = {a.index_hash for a in report.arms if not a.diverged}
    if len(hashes) > 1:
        raise ConfigError(f"arms consumed different example sequences: {hashes}")

    if outdir is not None:
        out = Path(outdir)
        out.mkdir(parents=True, exist_ok=True)
        for a in report.arms:
            write_trace_csv(a.trace, out / f"{a.name}_trace.csv")
        with open(out / "summary.json", "w", encoding="ascii") as fh:
            json.dump(report.summary_dict(), fh, indent=2)
            fh.write("\n")
        if plot:
            from .figures import render_comparison

            render_comparison({a.name: a.trace for a in report.arms}, out)
    return report

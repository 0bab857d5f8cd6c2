"""Experiment orchestration: per-prompt optimization runs from a shared
starting embedding, baseline records, budget handling, trace/report/similarity
persistence, and the aggregation that turns raw records into comparison rows.
"""
from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from . import __version__
from .adam import Adam, AdamParams
from .core import DomainError, EmbeddingVector, FitnessConfig, ValidationError
from .objectives import BackendObjective, SyntheticObjective
from .sepcma import SepCmaEs
from .trace import BestSeen, RealClock, RunTrace, TraceEntry, VirtualClock


@dataclass(frozen=True)
class BudgetPolicy:
    """How much work an optimizer may spend on one prompt."""

    mode: str  # "generations" | "evaluations" | "wall-seconds"
    amount: float

    def __post_init__(self):
        if self.mode not in ("generations", "evaluations", "wall-seconds"):
            raise ValidationError(f"unknown budget mode {self.mode!r}")
        if self.amount < 0:
            raise ValidationError("budget amount must be >= 0")


@dataclass(frozen=True)
class OptimizerSettings:
    """One optimizer entry in an experiment."""

    kind: str  # "sep-cmaes" | "adam"
    budget: BudgetPolicy
    lam: int = 20
    sigma0: float = 0.5
    adam: AdamParams = field(default_factory=AdamParams)
    fd_step: float = 1e-3
    label: str = ""

    def __post_init__(self):
        if self.kind not in ("sep-cmaes", "adam"):
            raise ValidationError(f"unknown optimizer kind {self.kind!r}")
        if not self.label:
            object.__setattr__(self, "label", self.kind)


@dataclass(frozen=True)
class EvalRecord:
    """Best-of-run (or baseline) scores for one prompt under one optimizer."""

    prompt_id: str
    optimizer_id: str
    fitness: float
    aesthetic: float
    clip: float
    evaluations: int = 0


@dataclass
class AggregateRow:
    """One comparison row: per-metric means, spreads, changes vs baseline."""

    optimizer_id: str
    a: float
    b: float
    aesthetic_mean: float
    aesthetic_std: float
    aesthetic_pct: float
    clip_mean: float
    clip_std: float
    clip_pct: float
    fitness_mean: float
    fitness_std: float
    fitness_pct: float
    wins: int


@dataclass(frozen=True)
class SimilarityRecord:
    prompt_id: str
    optimizer_id: str
    cosine_distance: float
    ssim: float


@dataclass
class ExperimentResult:
    run_dir: Path
    baselines: dict[str, EvalRecord]
    bests: dict[tuple[str, str], EvalRecord]
    traces: dict[tuple[str, str], RunTrace]
    similarities: list[SimilarityRecord]
    report_rows: list[AggregateRow]
    failed: dict[str, str]

    @property
    def ok(self) -> bool:
        return not self.failed


# ---------------------------------------------------------------------------
# Prompt sources: how a prompt becomes (starting vector, objective, images).

class BackendPromptSource:
    """Prompts resolved through a generate-and-score backend."""

    has_images = True

    def __init__(self, backend, fitness_cfg: FitnessConfig, generation_seed: int = 0,
                 inference_steps: int = 1, guidance_scale: float = 0.0,
                 width: int = 512, height: int = 512):
        self.backend = backend
        self.fitness_cfg = fitness_cfg
        self.generation_seed = generation_seed
        self.inference_steps = inference_steps
        self.guidance_scale = guidance_scale
        self.width = width
        self.height = height

    def clone(self) -> "BackendPromptSource":
        cloned = self.backend.clone() if hasattr(self.backend, "clone") else self.backend
        return BackendPromptSource(cloned, self.fitness_cfg, self.generation_seed,
                                   self.inference_steps, self.guidance_scale,
                                   self.width, self.height)

    def start_vector(self, prompt: str) -> EmbeddingVector:
        return self.backend.encode_prompt(prompt)

    def objective(self, prompt: str) -> BackendObjective:
        return BackendObjective(self.backend, prompt, self.fitness_cfg,
                                seed=self.generation_seed,
                                inference_steps=self.inference_steps,
                                guidance_scale=self.guidance_scale,
                                width=self.width, height=self.height)

    def render(self, prompt: str, z: EmbeddingVector):
        from .backend import GenerationRequest
        from .similarity import decode_png

        req = GenerationRequest(prompt=prompt, embedding=z, seed=self.generation_seed,
                                inference_steps=self.inference_steps,
                                guidance_scale=self.guidance_scale,
                                width=self.width, height=self.height, return_image=True)
        resp = self.backend.generate_and_score(req)
        if resp.image_png is None:
            raise ValidationError("backend did not return an image")
        return decode_png(resp.image_png)


class SyntheticPromptSource:
    """Prompts resolved to deterministic synthetic objectives (no images).

    Target and start vectors derive from the prompt text exactly like the
    mock backend, so the landscape is the same; the difference is that the
    objective exposes analytic gradients and skips the wire plumbing.
    """

    has_images = False

    def __init__(self, dim: int, fitness_cfg: FitnessConfig):
        if dim < 1:
            raise ValidationError("dimension must be >= 1")
        self.dim = dim
        self.fitness_cfg = fitness_cfg

    def clone(self) -> "SyntheticPromptSource":
        return self

    def start_vector(self, prompt: str) -> EmbeddingVector:
        from .backend import mock_encoding

        return EmbeddingVector(data=mock_encoding(prompt, self.dim), shape=(self.dim,))

    def objective(self, prompt: str) -> SyntheticObjective:
        from .backend import mock_target

        target = EmbeddingVector(data=mock_target(prompt, self.dim), shape=(self.dim,))
        return SyntheticObjective(target, self.fitness_cfg)

    def render(self, prompt: str, z: EmbeddingVector):
        raise ValidationError("synthetic objectives produce no images")


# ---------------------------------------------------------------------------
# Pure helpers (independently testable).

def percent_change(baseline: float, value: float) -> float:
    """100 * (value - baseline) / baseline."""
    if baseline == 0:
        raise DomainError("percent change undefined for zero baseline")
    return 100.0 * (value - baseline) / baseline


def clip_trace_to_budget(trace: RunTrace, budget_seconds: float) -> RunTrace:
    """Retain the prefix of entries whose wall time fits the budget.

    Best-so-far columns stay valid under prefix truncation because they are
    cumulative; an empty result means the comparison falls back to the
    baseline record.
    """
    if budget_seconds < 0:
        raise ValidationError("budget must be >= 0")
    kept = [e for e in trace.entries if e.wall_s <= budget_seconds]
    return RunTrace(prompt_id=trace.prompt_id, optimizer_id=trace.optimizer_id,
                    entries=kept)


def count_wins(per_prompt: Mapping[str, Mapping[str, float]]
               ) -> tuple[dict[str, int], list[str]]:
    """Strictly-greatest fitness per prompt scores a win; exact ties score
    nobody and are returned separately."""
    optimizers: set[str] = set()
    for values in per_prompt.values():
        optimizers.update(values)
    wins = {opt: 0 for opt in sorted(optimizers)}
    ties: list[str] = []
    for prompt_id in sorted(per_prompt):
        values = per_prompt[prompt_id]
        if not values:
            continue
        top = max(values.values())
        leaders = [opt for opt, v in values.items() if v == top]
        if len(leaders) == 1:
            wins[leaders[0]] += 1
        else:
            ties.append(prompt_id)
    return wins, ties


def _mean_std(values: list[float]) -> tuple[float, float]:
    n = len(values)
    mean = sum(values) / n
    if n < 2:
        return mean, 0.0  # sample std needs n-1; degenerate n is 0 by convention
    var = sum((v - mean) ** 2 for v in values) / (n - 1)
    return mean, math.sqrt(var)


def aggregate(baselines: Mapping[str, EvalRecord],
              bests: Mapping[tuple[str, str], EvalRecord],
              cfg: FitnessConfig) -> list[AggregateRow]:
    """Cross-prompt means/stds plus percent change vs the baseline means."""
    prompt_ids = sorted(baselines)
    if not prompt_ids:
        raise ValidationError("need at least one prompt record")
    optimizer_ids = sorted({opt for (_, opt) in bests})

    def stats(records: list[EvalRecord]):
        return {
            "aesthetic": _mean_std([r.aesthetic for r in records]),
            "clip": _mean_std([r.clip for r in records]),
            "fitness": _mean_std([r.fitness for r in records]),
        }

    base_stats = stats([baselines[p] for p in prompt_ids])
    per_prompt = {p: {opt: bests[(p, opt)].fitness for opt in optimizer_ids
                      if (p, opt) in bests}
                  for p in prompt_ids}
    wins, _ = count_wins(per_prompt)

    rows = [AggregateRow(
        optimizer_id="baseline", a=cfg.a, b=cfg.b,
        aesthetic_mean=base_stats["aesthetic"][0], aesthetic_std=base_stats["aesthetic"][1],
        aesthetic_pct=0.0,
        clip_mean=base_stats["clip"][0], clip_std=base_stats["clip"][1], clip_pct=0.0,
        fitness_mean=base_stats["fitness"][0], fitness_std=base_stats["fitness"][1],
        fitness_pct=0.0, wins=0)]
    for opt in optimizer_ids:
        records = [bests[(p, opt)] for p in prompt_ids if (p, opt) in bests]
        if not records:
            continue
        st = stats(records)
        rows.append(AggregateRow(
            optimizer_id=opt, a=cfg.a, b=cfg.b,
            aesthetic_mean=st["aesthetic"][0], aesthetic_std=st["aesthetic"][1],
            aesthetic_pct=percent_change(base_stats["aesthetic"][0], st["aesthetic"][0]),
            clip_mean=st["clip"][0], clip_std=st["clip"][1],
            clip_pct=percent_change(base_stats["clip"][0], st["clip"][0]),
            fitness_mean=st["fitness"][0], fitness_std=st["fitness"][1],
            fitness_pct=percent_change(base_stats["fitness"][0], st["fitness"][0]),
            wins=wins.get(opt, 0)))
    return rows


def mean_fitness_curves(traces: Mapping[tuple[str, str], RunTrace]
                        ) -> dict[str, list[tuple[int, float, int]]]:
    """Per-optimizer mean best-so-far fitness at each iteration index,
    averaged over the prompts whose trace reaches that iteration."""
    by_opt: dict[str, list[RunTrace]] = {}
    for (_, opt), trace in sorted(traces.items()):
        by_opt.setdefault(opt, []).append(trace)
    curves: dict[str, list[tuple[int, float, int]]] = {}
    for opt, runs in sorted(by_opt.items()):
        longest = max((len(t.entries) for t in runs), default=0)
        series = []
        for i in range(longest):
            vals = [t.entries[i].best_fitness for t in runs if len(t.entries) > i]
            series.append((i + 1, sum(vals) / len(vals), len(vals)))
        curves[opt] = series
    return curves


# ---------------------------------------------------------------------------
# Budget resolution and the per-prompt optimizer runner.

def _evals_per_iteration(settings: OptimizerSettings, objective, dim: int) -> int:
    if settings.kind == "sep-cmaes":
        return settings.lam
    analytic = getattr(objective, "gradient_capability", "") == "analytic"
    return 1 if analytic else 2 * dim + 1


def resolve_iterations(settings: OptimizerSettings, objective, dim: int
                       ) -> tuple[int, float | None]:
    """Budget policy -> (iteration count, optional wall cutoff)."""
    budget = settings.budget
    if budget.mode == "generations":
        return int(budget.amount), None
    if budget.mode == "evaluations":
        return int(budget.amount) // _evals_per_iteration(settings, objective, dim), None
    # wall-seconds: iterate until the clock runs out
    return 10**9, float(budget.amount)


def run_one(settings: OptimizerSettings, objective, z0: EmbeddingVector,
            seed_sequence, prompt_id: str, clock) -> tuple[RunTrace, BestSeen]:
    """Run one optimizer on one prompt from the shared starting embedding.

    A zero-iteration budget yields an empty trace and the baseline itself
    as the best candidate.
    """
    iterations, max_wall = resolve_iterations(settings, objective, z0.dim)
    if iterations < 1:
        scores, fv = objective.evaluate(z0)
        best = BestSeen(vector=z0, fitness=fv, scores=scores, evaluations=0)
        return RunTrace(prompt_id=prompt_id, optimizer_id=settings.label), best
    if settings.kind == "sep-cmaes":
        opt = SepCmaEs(z0, settings.sigma0, settings.lam, seed=seed_sequence)
        return opt.run(objective, iterations, clock=clock, max_wall_s=max_wall,
                       prompt_id=prompt_id, optimizer_id=settings.label)
    opt = Adam(z0, settings.adam)
    return opt.run(objective, iterations, fd_step=settings.fd_step, clock=clock,
                   max_wall_s=max_wall, prompt_id=prompt_id, optimizer_id=settings.label)


# ---------------------------------------------------------------------------
# The experiment driver.

def run_experiment(prompts: list[str], source, optimizers: list[OptimizerSettings],
                   seed: int = 0, out_dir: Path | str | None = None,
                   clock_mode: str = "virtual", compute_similarity: bool = True,
                   parallel_prompts: int = 1) -> ExperimentResult:
    """Run every optimizer on every prompt from the same initial embedding.

    Per prompt: encode, record the unoptimized baseline evaluation, run each
    optimizer, optionally render baseline/best images for similarity. A
    failing prompt is recorded and skipped; the experiment continues.
    """
    if not prompts:
        raise ValidationError("need at least one prompt")
    if clock_mode not in ("virtual", "real"):
        raise ValidationError(f"unknown clock mode {clock_mode!r}")
    labels = [o.label for o in optimizers]
    if len(set(labels)) != len(labels):
        raise ValidationError("optimizer labels must be unique")

    prompt_ids = [f"p{i + 1:02d}" for i in range(len(prompts))]
    baselines: dict[str, EvalRecord] = {}
    bests: dict[tuple[str, str], EvalRecord] = {}
    best_vectors: dict[tuple[str, str], EmbeddingVector] = {}
    traces: dict[tuple[str, str], RunTrace] = {}
    similarities: list[SimilarityRecord] = []
    failed: dict[str, str] = {}

    def work(i: int):
        prompt_id, prompt = prompt_ids[i], prompts[i]
        src = source.clone() if parallel_prompts > 1 else source
        z0 = src.start_vector(prompt)
        objective = src.objective(prompt)
        scores, fv = objective.evaluate(z0)
        baseline = EvalRecord(prompt_id=prompt_id, optimizer_id="baseline",
                              fitness=fv.value, aesthetic=scores.aesthetic,
                              clip=scores.clip)
        out = {"baseline": baseline, "baseline_vec": z0, "runs": {}}
        for k, settings in enumerate(optimizers):
            clock = VirtualClock() if clock_mode == "virtual" else RealClock()
            seed_seq = np.random.SeedSequence([seed, i, k])
            trace, best = run_one(settings, objective, z0, seed_seq, prompt_id, clock)
            out["runs"][settings.label] = (trace, best)
        if compute_similarity and src.has_images:
            from .similarity import cosine_distance, ssim

            base_img = src.render(prompt, z0)
            sims = {}
            for label, (_, best) in out["runs"].items():
                img = src.render(prompt, best.vector)
                sims[label] = (cosine_distance(base_img, img), ssim(base_img, img))
            out["similarity"] = sims
        return out

    def record(i: int, out: dict):
        prompt_id = prompt_ids[i]
        baselines[prompt_id] = out["baseline"]
        for label, (trace, best) in out["runs"].items():
            traces[(prompt_id, label)] = trace
            bests[(prompt_id, label)] = EvalRecord(
                prompt_id=prompt_id, optimizer_id=label,
                fitness=best.fitness.value, aesthetic=best.scores.aesthetic,
                clip=best.scores.clip, evaluations=best.evaluations)
            best_vectors[(prompt_id, label)] = best.vector
        for label, (cd, sv) in out.get("similarity", {}).items():
            similarities.append(SimilarityRecord(
                prompt_id=prompt_id, optimizer_id=label,
                cosine_distance=cd, ssim=sv))

    if parallel_prompts > 1:
        with ThreadPoolExecutor(max_workers=parallel_prompts) as pool:
            futures = {i: pool.submit(work, i) for i in range(len(prompts))}
        for i in sorted(futures):  # deterministic assembly order
            try:
                record(i, futures[i].result())
            except Exception as exc:
                failed[prompt_ids[i]] = str(exc)
    else:
        for i in range(len(prompts)):
            try:
                record(i, work(i))
            except Exception as exc:
                failed[prompt_ids[i]] = str(exc)

    if not baselines:
        raise ValidationError(f"every prompt failed: {failed}")

    rows = aggregate(baselines, bests, source.fitness_cfg)
    result = ExperimentResult(
        run_dir=Path(out_dir) if out_dir is not None else Path("."),
        baselines=baselines, bests=bests, traces=traces,
        similarities=sorted(similarities, key=lambda s: (s.prompt_id, s.optimizer_id)),
        report_rows=rows, failed=failed)
    if out_dir is not None:
        persist_run(result, prompts, prompt_ids, optimizers, source, seed, clock_mode,
                    best_vectors)
    return result


# ---------------------------------------------------------------------------
# Persistence. Floats are written with repr (shortest round-trip) so identical
# runs produce byte-identical files.

def _r(x: float) -> str:
    return repr(float(x))


def write_trace_csv(path: Path, trace: RunTrace) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "evals", "wall_s", "best_fitness",
                    "best_aesthetic", "best_clip"])
        for e in trace.entries:
            w.writerow([e.iteration, e.evaluations, _r(e.wall_s), _r(e.best_fitness),
                        _r(e.best_aesthetic), _r(e.best_clip)])


def read_trace_csv(path: Path, prompt_id: str, optimizer_id: str) -> RunTrace:
    trace = RunTrace(prompt_id=prompt_id, optimizer_id=optimizer_id)
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            trace.entries.append(TraceEntry(
                iteration=int(row["iteration"]), evaluations=int(row["evals"]),
                wall_s=float(row["wall_s"]), best_fitness=float(row["best_fitness"]),
                best_aesthetic=float(row["best_aesthetic"]),
                best_clip=float(row["best_clip"])))
    return trace


REPORT_COLUMNS = ["optimizer", "a", "b",
                  "aesthetic_mean", "aesthetic_std", "aesthetic_pct_change",
                  "clip_mean", "clip_std", "clip_pct_change",
                  "fitness_mean", "fitness_std", "fitness_pct_change", "wins"]


def write_report_csv(path: Path, rows: list[AggregateRow]) -> None:
    # Presentation rounding: aesthetic and percentages to 2 decimals,
    # clip and fitness to 4.
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for r in rows:
            w.writerow([r.optimizer_id, _r(r.a), _r(r.b),
                        f"{r.aesthetic_mean:.2f}", f"{r.aesthetic_std:.2f}",
                        f"{r.aesthetic_pct:.2f}",
                        f"{r.clip_mean:.4f}", f"{r.clip_std:.4f}", f"{r.clip_pct:.2f}",
                        f"{r.fitness_mean:.4f}", f"{r.fitness_std:.4f}",
                        f"{r.fitness_pct:.2f}", r.wins])


def write_similarity_csv(path: Path, records: list[SimilarityRecord]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["prompt", "optimizer", "cosine_distance", "ssim"])
        for s in records:
            w.writerow([s.prompt_id, s.optimizer_id, _r(s.cosine_distance), _r(s.ssim)])


def write_mean_curves_csv(path: Path, curves: dict[str, list[tuple[int, float, int]]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["optimizer", "iteration", "mean_best_fitness", "n_prompts"])
        for opt in sorted(curves):
            for iteration, mean_fit, n in curves[opt]:
                w.writerow([opt, iteration, _r(mean_fit), n])


def persist_run(result: ExperimentResult, prompts: list[str], prompt_ids: list[str],
                optimizers: list[OptimizerSettings], source, seed: int,
                clock_mode: str, best_vectors: Mapping[tuple[str, str], EmbeddingVector]
                ) -> None:
    run_dir = result.run_dir
    run_dir.mkdir(parents=True, exist_ok=True)
    traces_dir = run_dir / "traces"
    traces_dir.mkdir(exist_ok=True)
    for (prompt_id, label), trace in sorted(result.traces.items()):
        write_trace_csv(traces_dir / f"{prompt_id}__{label}.csv", trace)
    write_report_csv(run_dir / "report.csv", result.report_rows)
    write_mean_curves_csv(run_dir / "mean_curves.csv",
                          mean_fitness_curves(result.traces))
    if result.similarities:
        write_similarity_csv(run_dir / "similarity.csv", result.similarities)

    candidates: dict = {}
    for prompt_id in sorted(result.baselines):
        rec = result.baselines[prompt_id]
        candidates.setdefault(prompt_id, {})["baseline"] = {
            "fitness": rec.fitness, "aesthetic": rec.aesthetic, "clip": rec.clip,
            "evaluations": rec.evaluations}
    for (prompt_id, label) in sorted(result.bests):
        rec = result.bests[(prompt_id, label)]
        vec = best_vectors[(prompt_id, label)]
        candidates.setdefault(prompt_id, {})[label] = {
            "fitness": rec.fitness, "aesthetic": rec.aesthetic, "clip": rec.clip,
            "evaluations": rec.evaluations,
            "embedding": vec.tolist(), "shape": list(vec.shape)}
    with open(run_dir / "candidates.json", "w") as fh:
        json.dump(candidates, fh, indent=2, sort_keys=True)
        fh.write("\n")

    cfg = source.fitness_cfg
    manifest = {
        "engine_version": __version__,
        "seed": seed,
        "clock": clock_mode,
        "fitness": {"a": cfg.a, "b": cfg.b,
                    "aesthetic_divisor": cfg.aesthetic_divisor,
                    "clip_divisor": cfg.clip_divisor},
        "source": describe_source(source),
        "optimizers": [{
            "kind": o.kind, "label": o.label,
            "budget_mode": o.budget.mode, "budget_amount": o.budget.amount,
            "lambda": o.lam, "sigma0": o.sigma0,
            "adam": {"alpha": o.adam.alpha, "beta1": o.adam.beta1,
                     "beta2": o.adam.beta2, "epsilon": o.adam.epsilon,
                     "weight_decay": o.adam.weight_decay,
                     "decoupled_decay": o.adam.decoupled_decay},
            "fd_step": o.fd_step,
        } for o in optimizers],
        "prompts": {pid: prompt for pid, prompt in zip(prompt_ids, prompts)},
        "failed": result.failed,
    }
    with open(run_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def describe_source(source) -> dict:
    if isinstance(source, SyntheticPromptSource):
        return {"kind": "synthetic", "dim": source.dim}
    backend = getattr(source, "backend", None)
    desc = {"kind": "backend", "backend": getattr(backend, "name", "unknown")}
    if hasattr(backend, "shape"):
        desc["embedding_shape"] = list(backend.shape)
    if hasattr(backend, "base_url"):
        desc["endpoint"] = backend.base_url
    desc["generation"] = {"seed": source.generation_seed,
                          "steps": source.inference_steps,
                          "guidance": source.guidance_scale,
                          "width": source.width, "height": source.height}
    return desc


def load_prompts(path: Path | str) -> list[str]:
    """UTF-8 prompt list, one per line; '#' lines are comments."""
    prompts = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line and not line.startswith("#"):
                prompts.append(line)
    if not prompts:
        raise ValidationError(f"no prompts found in {path}")
    return prompts


# ---------------------------------------------------------------------------
# Loading persisted runs back for report regeneration and comparisons.

@dataclass
class RunData:
    run_dir: Path
    manifest: dict
    fitness_cfg: FitnessConfig
    baselines: dict[str, EvalRecord]
    bests: dict[tuple[str, str], EvalRecord]
    traces: dict[tuple[str, str], RunTrace]

    @property
    def labels(self) -> list[str]:
        return sorted({opt for (_, opt) in self.bests})


def load_run(run_dir: Path) -> RunData:
    """Rehydrate a run directory; needs no network access."""
    run_dir = Path(run_dir)
    manifest_path = run_dir / "manifest.json"
    if not manifest_path.exists():
        raise ValidationError(f"{run_dir} is not a run directory (no manifest.json)")
    manifest = json.loads(manifest_path.read_text())
    fit = manifest["fitness"]
    fitness_cfg = FitnessConfig(a=fit["a"], b=fit["b"],
                                aesthetic_divisor=fit["aesthetic_divisor"],
                                clip_divisor=fit["clip_divisor"])
    candidates = json.loads((run_dir / "candidates.json").read_text())
    baselines: dict[str, EvalRecord] = {}
    bests: dict[tuple[str, str], EvalRecord] = {}
    for prompt_id, entries in candidates.items():
        for label, rec in entries.items():
            record = EvalRecord(prompt_id=prompt_id, optimizer_id=label,
                                fitness=rec["fitness"], aesthetic=rec["aesthetic"],
                                clip=rec["clip"],
                                evaluations=rec.get("evaluations", 0))
            if label == "baseline":
                baselines[prompt_id] = record
            else:
                bests[(prompt_id, label)] = record
    traces: dict[tuple[str, str], RunTrace] = {}
    for path in sorted((run_dir / "traces").glob("*.csv")):
        prompt_id, _, label = path.stem.partition("__")
        traces[(prompt_id, label)] = read_trace_csv(path, prompt_id, label)
    return RunData(run_dir=run_dir, manifest=manifest, fitness_cfg=fitness_cfg,
                   baselines=baselines, bests=bests, traces=traces)


def _best_from_trace(trace: RunTrace, baseline: EvalRecord, label: str) -> EvalRecord:
    """Best-of-run record from a (possibly clipped) trace; empty traces fall
    back to the unoptimized baseline evaluation."""
    if not trace.entries:
        return EvalRecord(prompt_id=baseline.prompt_id, optimizer_id=label,
                          fitness=baseline.fitness, aesthetic=baseline.aesthetic,
                          clip=baseline.clip)
    last = trace.entries[-1]
    return EvalRecord(prompt_id=trace.prompt_id, optimizer_id=label,
                      fitness=last.best_fitness, aesthetic=last.best_aesthetic,
                      clip=last.best_clip, evaluations=last.evaluations)


def mean_end_wall(traces: list[RunTrace]) -> float:
    finals = [t.entries[-1].wall_s for t in traces if t.entries]
    if not finals:
        raise ValidationError("no non-empty traces to take a mean wall time from")
    return sum(finals) / len(finals)


def compare_runs(run_dirs: list[Path], match_time_of: str | None = None,
                 budget_seconds: float | None = None
                 ) -> tuple[list[AggregateRow], dict[str, Path]]:
    """Merge runs sharing prompts and fitness config into one comparison.

    ``match_time_of`` clips every other optimizer's traces to that label's
    mean end wall time (the cost-fair protocol); ``budget_seconds`` clips
    everything to a fixed wall budget.
    """
    runs = [load_run(d) for d in run_dirs]
    first = runs[0]
    for other in runs[1:]:
        if other.manifest["prompts"] != first.manifest["prompts"]:
            raise ValidationError("runs do not share a prompt list")
        if other.manifest["fitness"] != first.manifest["fitness"]:
            raise ValidationError("runs do not share a fitness config")

    # Merge traces, qualifying labels that appear in more than one run.
    label_map: dict[str, Path] = {}
    merged: dict[tuple[str, str], RunTrace] = {}
    all_labels = [label for run in runs for label in run.labels]
    for idx, run in enumerate(runs, 1):
        for (prompt_id, label), trace in run.traces.items():
            name = label if all_labels.count(label) == 1 else f"{label}#run{idx}"
            label_map[name] = run.run_dir
            merged[(prompt_id, name)] = RunTrace(prompt_id=prompt_id,
                                                 optimizer_id=name,
                                                 entries=list(trace.entries))

    if budget_seconds is not None:
        merged = {k: clip_trace_to_budget(t, budget_seconds) for k, t in merged.items()}
    if match_time_of is not None:
        labels = {opt for (_, opt) in merged}
        if match_time_of not in labels:
            raise ValidationError(f"label {match_time_of!r} not found among {sorted(labels)}")
        ref = [t for (_, opt), t in merged.items() if opt == match_time_of]
        budget = mean_end_wall(ref)
        merged = {k: (t if k[1] == match_time_of else clip_trace_to_budget(t, budget))
                  for k, t in merged.items()}

    bests = {(prompt_id, label): _best_from_trace(trace, first.baselines[prompt_id], label)
             for (prompt_id, label), trace in merged.items()
             if prompt_id in first.baselines}  # prompts that failed are skipped
    return aggregate(first.baselines, bests, first.fitness_cfg), label_map

"""Operator entry point: encode a prompt, run the optimization protocol,
compare runs, regenerate reports, and serve the in-process mock backend.

Exit codes: 0 success, 1 partial prompt failures, 2 config error,
3 backend unreachable.
"""
from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .adam import AdamParams
from .backend import (BackendServer, HttpBackendClient, MockBackend,
                      TransportError, resolve_backend)
from .core import FitnessConfig, ValidationError
from .harness import (BackendPromptSource, BudgetPolicy, OptimizerSettings,
                      aggregate, clip_trace_to_budget, load_prompts,
                      mean_fitness_curves, run_experiment, write_mean_curves_csv,
                      write_report_csv)

ENV_BACKEND = "EMBEDOPT_BACKEND"

PRESETS = {
    "aesthetic": (1.0, 0.0),
    "balanced": (0.5, 0.5),
    "alignment": (0.0, 1.0),
}

# field -> (parser, default); config-file keys mirror the flag names.
CONFIG_FIELDS = {
    "backend": (str, "mock"),
    "mock_shape": (str, "4x64"),
    "preset": (str, ""),
    "weight_a": (float, 0.5),
    "weight_b": (float, 0.5),
    "aesthetic_divisor": (float, 10.0),
    "clip_divisor": (float, 0.5),
    "optimizer": (str, "both"),
    "generations": (int, 100),
    "lam": (int, 20),
    "sigma": (float, 0.5),
    "adam_lr": (float, 5e-3),
    "adam_beta1": (float, 0.85),
    "adam_beta2": (float, 0.98),
    "adam_epsilon": (float, 1e-8),
    "adam_weight_decay": (float, 1e-5),
    "adam_coupled_decay": (bool, False),
    "fd_step": (float, 1e-3),
    "adam_budget_mode": (str, "evaluations"),
    "adam_budget": (float, 0.0),  # 0 -> match sep-CMA-ES evaluation count
    "seed": (int, 0),
    "gen_seed": (int, 0),
    "steps": (int, 1),
    "guidance": (float, 0.0),
    "width": (int, 512),
    "height": (int, 512),
    "prompt_file": (str, "prompts/parti36.txt"),
    "out": (str, "run"),
    "clock": (str, "auto"),
    "similarity": (bool, True),
    "parallel_prompts": (int, 1),
}

# flag spellings that differ from the field name ("lambda" is reserved)
_FLAG_NAMES = {"lam": "lambda"}
_KEY_ALIASES = {"lambda": "lam"}

_BOOL_STRINGS = {"true": True, "1": True, "yes": True,
                 "false": False, "0": False, "no": False}


def read_config_file(path: str) -> dict:
    """Flat key=value document mirroring flag names; '#' starts a comment."""
    values: dict = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValidationError(f"{path}:{lineno}: expected key=value")
            key, _, raw = line.partition("=")
            key = key.strip().replace("-", "_")
            key = _KEY_ALIASES.get(key, key)
            raw = raw.strip()
            if key not in CONFIG_FIELDS:
                raise ValidationError(f"{path}:{lineno}: unknown key {key!r}")
            parser, _ = CONFIG_FIELDS[key]
            if parser is bool:
                if raw.lower() not in _BOOL_STRINGS:
                    raise ValidationError(f"{path}:{lineno}: bad boolean {raw!r}")
                values[key] = _BOOL_STRINGS[raw.lower()]
            else:
                try:
                    values[key] = parser(raw)
                except ValueError as exc:
                    raise ValidationError(f"{path}:{lineno}: {exc}") from None
    return values


def resolve_config(flags: dict, file_values: dict) -> dict:
    """Precedence per field: command-line flag > config file > default.

    The backend endpoint additionally honors the EMBEDOPT_BACKEND environment
    variable between flag and file.
    """
    cfg = {}
    for key, (_, default) in CONFIG_FIELDS.items():
        if flags.get(key) is not None:
            cfg[key] = flags[key]
        elif key == "backend" and os.environ.get(ENV_BACKEND):
            cfg[key] = os.environ[ENV_BACKEND]
        elif key in file_values:
            cfg[key] = file_values[key]
        else:
            cfg[key] = default
    # Named presets fill the weights unless either weight was given explicitly.
    if cfg["preset"]:
        if cfg["preset"] not in PRESETS:
            raise ValidationError(f"unknown preset {cfg['preset']!r}; "
                                  f"choose from {sorted(PRESETS)}")
        if flags.get("weight_a") is None and "weight_a" not in file_values:
            cfg["weight_a"] = PRESETS[cfg["preset"]][0]
        if flags.get("weight_b") is None and "weight_b" not in file_values:
            cfg["weight_b"] = PRESETS[cfg["preset"]][1]
    return cfg


def _parse_shape(text: str) -> tuple[int, ...]:
    try:
        shape = tuple(int(p) for p in text.lower().split("x"))
    except ValueError:
        raise ValidationError(f"bad shape {text!r}; expected like 4x64") from None
    if not shape or any(s < 1 for s in shape):
        raise ValidationError(f"bad shape {text!r}; entries must be positive")
    return shape


def _fitness_config(cfg: dict) -> FitnessConfig:
    return FitnessConfig(a=cfg["weight_a"], b=cfg["weight_b"],
                         aesthetic_divisor=cfg["aesthetic_divisor"],
                         clip_divisor=cfg["clip_divisor"])


def _optimizer_settings(cfg: dict) -> list[OptimizerSettings]:
    if cfg["generations"] < 1:
        raise ValidationError("generations must be >= 1")
    if cfg["lam"] < 2:
        raise ValidationError("population size must be >= 2")
    if cfg["sigma"] <= 0:
        raise ValidationError("sigma must be positive")
    which = cfg["optimizer"]
    if which not in ("sep-cmaes", "adam", "both"):
        raise ValidationError(f"unknown optimizer {which!r}")
    settings = []
    if which in ("sep-cmaes", "both"):
        settings.append(OptimizerSettings(
            kind="sep-cmaes",
            budget=BudgetPolicy("generations", cfg["generations"]),
            lam=cfg["lam"], sigma0=cfg["sigma"]))
    if which in ("adam", "both"):
        amount = cfg["adam_budget"]
        if amount <= 0:
            if cfg["adam_budget_mode"] != "evaluations":
                raise ValidationError("adam_budget must be set explicitly for "
                                      f"mode {cfg['adam_budget_mode']!r}")
            amount = cfg["generations"] * cfg["lam"]  # equal-evaluation protocol
        settings.append(OptimizerSettings(
            kind="adam",
            budget=BudgetPolicy(cfg["adam_budget_mode"], amount),
            adam=AdamParams(alpha=cfg["adam_lr"], beta1=cfg["adam_beta1"],
                            beta2=cfg["adam_beta2"], epsilon=cfg["adam_epsilon"],
                            weight_decay=cfg["adam_weight_decay"],
                            decoupled_decay=not cfg["adam_coupled_decay"]),
            fd_step=cfg["fd_step"]))
    return settings


def _connect(cfg: dict):
    backend = resolve_backend(cfg["backend"], mock_shape=_parse_shape(cfg["mock_shape"]))
    health = backend.health()  # raises TransportError when unreachable
    if health.get("status") not in ("ok", "degraded"):
        raise TransportError(f"backend unhealthy: {health}")
    return backend


def cmd_encode(cfg: dict, prompt: str, out: str | None) -> int:
    backend = _connect(cfg)
    vec = backend.encode_prompt(prompt)
    print(f"prompt: {prompt}")
    print(f"shape: {list(vec.shape)} (d={vec.dim})")
    print(f"l2 norm: {float((vec.data ** 2).sum()) ** 0.5:.6f}")
    if out:
        import json

        with open(out, "w") as fh:
            json.dump({"prompt": prompt, "embedding": vec.tolist(),
                       "shape": list(vec.shape)}, fh)
            fh.write("\n")
        print(f"wrote {out}")
    return 0


def cmd_optimize(cfg: dict) -> int:
    optimizers = _optimizer_settings(cfg)
    fitness_cfg = _fitness_config(cfg)
    prompts = load_prompts(cfg["prompt_file"])
    backend = _connect(cfg)
    clock = cfg["clock"]
    if clock == "auto":
        clock = "virtual" if isinstance(backend, MockBackend) else "real"
    source = BackendPromptSource(backend, fitness_cfg, generation_seed=cfg["gen_seed"],
                                 inference_steps=cfg["steps"],
                                 guidance_scale=cfg["guidance"],
                                 width=cfg["width"], height=cfg["height"])
    result = run_experiment(prompts, source, optimizers, seed=cfg["seed"],
                            out_dir=cfg["out"], clock_mode=clock,
                            compute_similarity=cfg["similarity"],
                            parallel_prompts=cfg["parallel_prompts"])
    for row in result.report_rows:
        print(f"{row.optimizer_id:12s} fitness {row.fitness_mean:.4f} "
              f"(+{row.fitness_pct:.2f}%) wins {row.wins}")
    if result.failed:
        for pid, err in sorted(result.failed.items()):
            print(f"FAILED {pid}: {err}", file=sys.stderr)
        return 1
    print(f"run written to {result.run_dir}")
    return 0


def cmd_report(run_dir: str, out_dir: str | None) -> int:
    from .harness import load_run

    run = load_run(Path(run_dir))
    target = Path(out_dir) if out_dir else Path(run_dir)
    target.mkdir(parents=True, exist_ok=True)
    rows = aggregate(run.baselines, run.bests, run.fitness_cfg)
    write_report_csv(target / "report.csv", rows)
    write_mean_curves_csv(target / "mean_curves.csv", mean_fitness_curves(run.traces))
    for row in rows:
        print(f"{row.optimizer_id:12s} fitness {row.fitness_mean:.4f} "
              f"(+{row.fitness_pct:.2f}%) wins {row.wins}")
    return 0


def cmd_compare(run_dirs: list[str], out: str | None, match_time_of: str | None,
                budget_seconds: float | None) -> int:
    from .harness import compare_runs

    rows, label_map = compare_runs([Path(d) for d in run_dirs],
                                   match_time_of=match_time_of,
                                   budget_seconds=budget_seconds)
    for row in rows:
        print(f"{row.optimizer_id:24s} fitness {row.fitness_mean:.4f} "
              f"(+{row.fitness_pct:.2f}%) wins {row.wins}")
    if out:
        write_report_csv(Path(out), rows)
        print(f"comparison written to {out}")
    return 0


def cmd_serve(cfg: dict, host: str, port: int) -> int:
    backend = MockBackend(shape=_parse_shape(cfg["mock_shape"]))
    server = BackendServer(backend, host=host, port=port)
    print(f"mock backend serving on {server.url} "
          f"(embedding shape {list(backend.shape)})")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="embedopt",
        description="Optimize prompt embeddings against aesthetic/alignment fitness.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config_flags(p: argparse.ArgumentParser, fields) -> None:
        p.add_argument("--config", default=None, help="key=value config file")
        for key in fields:
            parser_fn, default = CONFIG_FIELDS[key]
            flag = "--" + _FLAG_NAMES.get(key, key.replace("_", "-"))
            if parser_fn is bool:
                p.add_argument(flag, dest=key, default=None,
                               action=argparse.BooleanOptionalAction)
            else:
                p.add_argument(flag, dest=key, type=parser_fn, default=None,
                               help=f"default: {default}")

    p_enc = sub.add_parser("encode", help="encode a prompt via the backend")
    add_config_flags(p_enc, ["backend", "mock_shape"])
    p_enc.add_argument("--prompt", required=True)
    p_enc.add_argument("--out", dest="encode_out", default=None,
                       help="write embedding JSON here")

    p_opt = sub.add_parser("optimize", help="run the optimization protocol")
    add_config_flags(p_opt, [k for k in CONFIG_FIELDS])

    p_rep = sub.add_parser("report", help="regenerate reports from a run directory")
    p_rep.add_argument("run_dir")
    p_rep.add_argument("--out-dir", default=None)

    p_cmp = sub.add_parser("compare", help="compare two or more run directories")
    p_cmp.add_argument("run_dirs", nargs="+")
    p_cmp.add_argument("--out", default=None, help="write comparison CSV here")
    p_cmp.add_argument("--match-time-of", default=None,
                       help="clip other optimizers to this label's mean wall time")
    p_cmp.add_argument("--budget-seconds", type=float, default=None,
                       help="clip every trace to this wall budget")

    p_srv = sub.add_parser("serve", help="serve the in-process mock over HTTP")
    add_config_flags(p_srv, ["mock_shape"])
    p_srv.add_argument("--host", default="127.0.0.1")
    p_srv.add_argument("--port", type=int, default=8099)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        flags = vars(args)
        file_values = read_config_file(args.config) if getattr(args, "config", None) else {}
        cfg = resolve_config(flags, file_values)
        if args.command == "encode":
            return cmd_encode(cfg, args.prompt, args.encode_out)
        if args.command == "optimize":
            return cmd_optimize(cfg)
        if args.command == "report":
            return cmd_report(args.run_dir, args.out_dir)
        if args.command == "compare":
            return cmd_compare(args.run_dirs, args.out, args.match_time_of,
                               args.budget_seconds)
        if args.command == "serve":
            return cmd_serve(cfg, args.host, args.port)
        parser.error(f"unknown command {args.command}")
    except ValidationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except TransportError as exc:
        print(f"backend unreachable: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

"""Command-line front end.

    clusca run     --config exp.toml
    clusca compare --config exp.toml --policies full,fora,clusca(gamma=0.01)
    clusca sweep   --config exp.toml --axis gamma --values 0,0.001,0.005,0.05

Each command writes its delimited outputs (and figures, unless --no-figures)
under the config's output_dir; the CLUSCA_OUTPUT_ROOT environment variable
overrides that directory. Exit codes: 0 success, 2 configuration problem,
3 numerical failure during a run.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from .config import OUTPUT_ROOT_ENV, POLICY_ALIASES, ExperimentConfig, load_config
from .errors import ConfigError, NumericsError
from .metrics import relative_error
from .model import init_model
from .report import (
    COMPARE_FIELDS,
    SWEEP_FIELDS,
    format_table,
    write_compare_csv,
    write_report,
    write_sweep_csv,
)
from .sampler import RunReport, sample

SWEEP_AXES = {
    "gamma": ("gamma", float),
    "n": ("interval", int),
    "interval": ("interval", int),
    "k": ("clusters", int),
    "clusters": ("clusters", int),
    "o": ("order", int),
    "order": ("order", int),
}

_OVERRIDE_KEYS = {
    "n": ("interval", int),
    "interval": ("interval", int),
    "k": ("clusters", int),
    "clusters": ("clusters", int),
    "gamma": ("gamma", float),
    "o": ("order", int),
    "order": ("order", int),
    "rearrange_last": ("rearrange_last", lambda v: v.lower() == "true"),
}


def parse_policy_spec(spec: str):
    """'clusca(gamma=0.01,k=8)' -> (policy name, label, field overrides)."""
    spec = spec.strip()
    name, overrides = spec, {}
    if "(" in spec:
        if not spec.endswith(")"):
            raise ConfigError(f"unbalanced parentheses in policy spec {spec!r}", field="policies")
        name, _, args = spec[:-1].partition("(")
        for item in filter(None, (s.strip() for s in args.split(","))):
            key, eq, value = item.partition("=")
            key = key.strip().lower()
            if not eq or key not in _OVERRIDE_KEYS:
                raise ConfigError(
                    f"bad policy override {item!r} in {spec!r} "
                    f"(known keys: {sorted(_OVERRIDE_KEYS)})",
                    field="policies",
                )
            field, caster = _OVERRIDE_KEYS[key]
            try:
                overrides[field] = caster(value.strip())
            except ValueError:
                raise ConfigError(f"bad value in policy override {item!r}", field="policies") from None
    name = name.strip().lower()
    if name not in POLICY_ALIASES:
        raise ConfigError(
            f"unknown policy {name!r}, expected one of {sorted(set(POLICY_ALIASES))}",
            field="policies",
        )
    label = spec.replace(" ", "")
    return POLICY_ALIASES[name], label, overrides


def _run_one(config: ExperimentConfig, model, cache_cfg, run_id: str) -> RunReport:
    return sample(
        model,
        config.schedule.build(),
        cache_cfg,
        config.seeds,
        class_id=config.class_id,
        trajectory=config.trajectory,
        run_id=run_id,
        divergence_factor=config.divergence_factor,
        config_echo=config.echo(),
    )


def cmd_run(config: ExperimentConfig, figures: bool = True) -> int:
    outdir = config.output_root()
    model = init_model(config.model)
    report = _run_one(config, model, config.cache, config.run_id)
    paths = write_report(report, outdir)
    if figures:
        from .figures import render_run_figures

        render_run_figures(report, outdir)
    print(f"run {report.run_id}: policy={report.policy} steps={report.steps}")
    print(f"  model flops {report.flops['model']}  speedup {report.speedup:.4g}")
    print(f"  report {paths['report']}")
    return 0


def cmd_compare(config: ExperimentConfig, policy_specs, figures: bool = True) -> int:
    if not policy_specs:
        raise ConfigError("compare needs at least one policy", field="policies")
    outdir = config.output_root()
    model = init_model(config.model)
    oracle_cfg = replace(config.cache, policy="full")
    oracle = _run_one(config, model, oracle_cfg, f"{config.run_id}.oracle")
    write_report(oracle, outdir)
    rows = []
    for spec in policy_specs:
        policy, label, overrides = parse_policy_spec(spec)
        cache_cfg = replace(config.cache, policy=policy, **overrides)
        member_cfg = replace(config, cache=cache_cfg)
        member_cfg.validate()
        report = _run_one(config, model, cache_cfg, f"{config.run_id}.{label}")
        report.error_vs_oracle = relative_error(report.final_latent, oracle.final_latent)
        write_report(report, outdir)
        rows.append(
            {
                "policy": label,
                "flops": report.flops["total"],
                "speedup": report.speedup,
                "rel_error": report.error_vs_oracle,
            }
        )
    path = write_compare_csv(rows, outdir)
    if figures:
        from .figures import render_compare_figure

        render_compare_figure(rows, outdir)
    print(format_table(COMPARE_FIELDS, rows))
    print(f"compare table {path}")
    return 0


def cmd_sweep(config: ExperimentConfig, axis: str, values, figures: bool = True) -> int:
    key = axis.strip().lower()
    if key not in SWEEP_AXES:
        raise ConfigError(
            f"unknown sweep axis {axis!r}, expected one of {sorted(set(SWEEP_AXES))}",
            field="axis",
        )
    field, caster = SWEEP_AXES[key]
    if not values:
        raise ConfigError("sweep needs at least one value", field="values")
    try:
        parsed = [caster(v) for v in values]
    except ValueError as exc:
        raise ConfigError(f"bad sweep value: {exc}", field="values") from None
    outdir = config.output_root()
    model = init_model(config.model)
    oracle_cfg = replace(config.cache, policy="full")
    oracle = _run_one(config, model, oracle_cfg, f"{config.run_id}.oracle")
    rows = []
    for value in parsed:
        cache_cfg = replace(config.cache, **{field: value})
        member_cfg = replace(config, cache=cache_cfg)
        member_cfg.validate()
        report = _run_one(config, model, cache_cfg, f"{config.run_id}.{field}{value}")
        err = relative_error(report.final_latent, oracle.final_latent)
        rows.append(
            {
                "value": value,
                "flops": report.flops["total"],
                "speedup": report.speedup,
                "rel_error": err,
            }
        )
    path = write_sweep_csv(field, rows, outdir)
    if figures:
        from .figures import render_sweep_figure

        render_sweep_figure(field, rows, outdir)
    print(format_table(SWEEP_FIELDS, rows))
    print(f"sweep table {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="clusca",
        description="Cluster-driven feature caching on a deterministic toy "
        "diffusion transformer.",
        epilog=f"Set {OUTPUT_ROOT_ENV} to redirect all outputs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="TOML experiment config")
        p.add_argument(
            "--no-figures", action="store_true", help="skip PNG rendering, keep CSV/JSON"
        )

    p_run = sub.add_parser("run", help="execute one policy run")
    common(p_run)

    p_cmp = sub.add_parser("compare", help="run policies against the full oracle")
    common(p_cmp)
    p_cmp.add_argument(
        "--policies",
        required=True,
        help="comma-separated specs, e.g. full,fora,clusca(gamma=0.01,k=8)",
    )

    p_swp = sub.add_parser("sweep", help="vary one policy knob across values")
    common(p_swp)
    p_swp.add_argument("--axis", required=True, help="gamma | N | K | O")
    p_swp.add_argument("--values", required=True, help="comma-separated values")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config)
        figures = not args.no_figures
        if args.command == "run":
            return cmd_run(config, figures=figures)
        if args.command == "compare":
            # Parenthesized specs may contain commas; split at depth zero only.
            specs = _rejoin_parenthesized(args.policies)
            return cmd_compare(config, specs, figures=figures)
        specs = [v for v in (s.strip() for s in args.values.split(",")) if v]
        return cmd_sweep(config, args.axis, specs, figures=figures)
    except ConfigError as exc:
        field = f" [{exc.field}]" if exc.field else ""
        print(f"config error{field}: {exc}", file=sys.stderr)
        return 2
    except NumericsError as exc:
        step = f" at step {exc.step}" if exc.step is not None else ""
        print(f"numerical failure{step}: {exc}", file=sys.stderr)
        return 3


def _rejoin_parenthesized(raw: str):
    """Split a comma list while keeping name(...) argument lists intact."""
    specs, depth, cur = [], 0, []
    for ch in raw:
        if ch == "," and depth == 0:
            if "".join(cur).strip():
                specs.append("".join(cur).strip())
            cur = []
            continue
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth = max(depth - 1, 0)
        cur.append(ch)
    if "".join(cur).strip():
        specs.append("".join(cur).strip())
    return specs


if __name__ == "__main__":
    raise SystemExit(main())

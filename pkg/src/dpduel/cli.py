"""Command-line entry point.

Subcommands: ``run`` (experiment from a config file), ``design`` (print a
near-optimal design for an arm file), ``net`` (build and print a covering
net), ``audit`` (one-outcome sensitivity audit), ``verify`` (closed-form
constant cross-check).  Exit codes: 0 success, 2 configuration error,
3 runtime failure.
"""

from __future__ import annotations

import argparse
import sys

from .harness import (
    ConfigError,
    audit_sensitivity,
    build_config,
    load_instance,
    parse_config_file,
    run_experiment,
    verify_formulas,
)
from .optimal_design import build_eps_net, design_for_phase


def _build_parser():
    parser = argparse.ArgumentParser(prog="dpduel")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run an experiment from a config file")
    run_p.add_argument("--config", required=True, help="key=value config file")
    run_p.add_argument("--seed", type=int, help="override base_seed")
    run_p.add_argument("--replicates", type=int, help="override replicate count")
    run_p.add_argument("--out", help="override output directory")
    run_p.add_argument("--epsilon", type=float, help="override privacy budget")
    run_p.add_argument("--horizon", type=int, help="override round count")
    run_p.add_argument("--budget-scale", type=float, help="override linear budget scale")
    run_p.add_argument("--privacy-width-scale", type=float,
                       help="override finite confidence privacy-term scale")

    design_p = sub.add_parser("design", help="print a design for an arm file")
    design_p.add_argument("--instance", required=True)
    design_p.add_argument("--tolerance", type=float, default=0.05)

    net_p = sub.add_parser("net", help="build and print a covering net")
    net_p.add_argument("--instance", required=True)
    net_p.add_argument("--radius", type=float, required=True)

    audit_p = sub.add_parser("audit", help="one-outcome sensitivity audit")
    audit_p.add_argument("--config", required=True)
    audit_p.add_argument("--flip-round", type=int, required=True)
    audit_p.add_argument("--seed", type=int, default=0)

    sub.add_parser("verify", help="cross-check closed-form constants")
    return parser


def _overrides(args):
    return {
        "base_seed": args.seed,
        "replicates": args.replicates,
        "output_dir": args.out,
        "epsilon": args.epsilon,
        "horizon": args.horizon,
        "budget_scale": getattr(args, "budget_scale", None),
        "privacy_width_scale": getattr(args, "privacy_width_scale", None),
    }


def _cmd_run(args):
    config = build_config(parse_config_file(args.config), _overrides(args))
    if args.seed is not None or args.replicates is not None:
        # explicit seed list in the file would mask the overrides
        mapping = parse_config_file(args.config)
        mapping.pop("seeds", None)
        config = build_config(mapping, _overrides(args))
    records = run_experiment(config)
    failures = [r for r in records if r.error]
    print(f"completed {len(records)} replicate(s), {len(failures)} failure(s); "
          f"summary in {config.output_dir}/summary.json")
    for r in failures:
        print(f"  seed {r.seed}: {r.error}", file=sys.stderr)
    return 3 if failures else 0


def _require_arms(instance_spec):
    instance = load_instance(instance_spec)
    if instance.arms is None:
        raise ConfigError(f"instance {instance_spec!r} does not list vector arms")
    return instance


def _cmd_design(args):
    instance = _require_arms(args.instance)
    design = design_for_phase(instance.arms, args.tolerance)
    print(f"g-value: {design.g_value!r} (effective dimension {design.effective_dim})")
    print("core set (arm_i, arm_j) -> weight:")
    for (i, j), w in zip(design.pairs, design.weights):
        print(f"  ({i}, {j}) -> {w!r}")
    return 0


def _cmd_net(args):
    instance = _require_arms(args.instance)
    net = build_eps_net(instance.arms, args.radius,
                        source_description=args.instance)
    print(f"net size {len(net)} at radius {net.radius!r}")
    for idx, point in zip(net.indices, net.points):
        print(f"  arm {idx}: " + ",".join(repr(float(v)) for v in point))
    return 0


def _cmd_audit(args):
    config = build_config(parse_config_file(args.config))
    if config.algorithm != "finite":
        raise ConfigError("the sensitivity audit applies to the finite algorithm")
    if not 1 <= args.flip_round <= config.horizon:
        raise ConfigError(f"--flip-round must lie in [1, {config.horizon}]")
    report = audit_sensitivity(
        config.instance, config.horizon, config.epsilon, config.conf_delta,
        args.flip_round, seed=args.seed,
        privacy_width_scale=config.privacy_width_scale,
    )
    print(f"flip round: {report.flip_round} (run length {report.rounds})")
    print(f"max counter-estimate divergence: {report.max_counter_divergence!r}")
    if report.selection_divergence_round is None:
        print("arm selections: identical in both runs")
    else:
        print(f"arm selections diverge at round {report.selection_divergence_round} "
              "(post-processing of the private scores)")
    return 0


def _cmd_verify(_args):
    report = verify_formulas()
    for line in report.lines():
        print(line)
    if report.all_ok:
        print("all formula cross-checks passed")
        return 0
    print("formula cross-check FAILED", file=sys.stderr)
    return 3


def main(argv=None):
    args = _build_parser().parse_args(argv)
    handlers = {
        "run": _cmd_run,
        "design": _cmd_design,
        "net": _cmd_net,
        "audit": _cmd_audit,
        "verify": _cmd_verify,
    }
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

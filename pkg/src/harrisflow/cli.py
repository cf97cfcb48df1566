"""Command line front end.

Subcommands:
  simulate       one flow run, trajectories and merge events to CSV/JSON
  converge       strong-rate study (coupled pathwise sup errors)
  wasserstein    coupled pushforward W_2 study
  weak           two-sample KS study of terminal marginals
  sharpness      zero-drift block-maximum ratio study
  dual           two-parameter run plus backward-bundle export
  coalesce-prob  pair non-coalescence frequency per starting gap
  cluster-count  mean surviving clusters per start-grid size

Study commands accept either --config (TOML or JSON mirroring
ExperimentConfig) or inline --phi/--drift/... flags; --seed overrides the
config seed either way.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys

import numpy as np

from .covariance import CovarianceSpec
from .drift import DriftSpec
from .dual import TrajectoryBundle, mapping_I, wedge_check
from .experiments import (ExperimentConfig, run_cluster_flatness,
                          run_coalesce_prob, run_sharpness, run_strong_rate,
                          run_wasserstein_rate, run_weak_convergence)
from .flow_sim import SimConfig, simulate
from .report import emit_report
from .splitting import make_partition, split_two_param
from .streams import derive

__all__ = ["main", "parse_phi", "parse_drift"]


def parse_phi(text: str) -> CovarianceSpec:
    """Covariance from a compact string: kind, optionally kind:args.

    Examples: gaussian | exponential_alpha:1.5 | indicator | cosine_series:40
    """
    kind, _, rest = text.partition(":")
    if kind == "gaussian":
        return CovarianceSpec(kind="gaussian")
    if kind == "exponential_alpha":
        alpha = float(rest) if rest else 1.0
        return CovarianceSpec(kind="exponential_alpha", alpha=alpha)
    if kind == "indicator":
        return CovarianceSpec(kind="indicator", c_phi=1.0)
    if kind == "cosine_series":
        from .covariance import cosine_series_spec
        return cosine_series_spec(n_terms=int(rest)) if rest else cosine_series_spec()
    raise argparse.ArgumentTypeError(f"cannot parse covariance {text!r}")


def parse_drift(text: str) -> DriftSpec:
    """Drift from a compact string.

    Examples: zero | affine:0,-1 | sin | beta_modulus:0.5,1.0 | osl:neg_signed_sqrt
    """
    kind, _, rest = text.partition(":")
    if kind == "zero":
        return DriftSpec(kind="zero")
    if kind == "affine":
        c0, c1 = (float(v) for v in rest.split(","))
        return DriftSpec(kind="affine", c0=c0, c1=c1)
    if kind == "beta_modulus":
        parts = [float(v) for v in rest.split(",")] if rest else [0.5]
        beta = parts[0]
        c_rho = parts[1] if len(parts) > 1 else 1.0
        return DriftSpec(kind="beta_modulus", beta=beta, c_rho=c_rho)
    if kind == "osl":
        return DriftSpec(kind="one_sided_lipschitz", tag=rest)
    if not rest:
        return DriftSpec(kind="lipschitz_custom", tag=kind)
    raise argparse.ArgumentTypeError(f"cannot parse drift {text!r}")


def _floats(text: str) -> tuple:
    return tuple(float(v) for v in text.split(",") if v != "")


def _ints(text: str) -> tuple:
    return tuple(int(v) for v in text.split(",") if v != "")


def _study_config(args, default_reps: int = 200) -> ExperimentConfig:
    if args.config:
        cfg = ExperimentConfig.from_file(args.config)
        if args.seed is not None:
            cfg = dataclasses.replace(cfg, seed=args.seed)
        return cfg
    if args.phi is None:
        raise SystemExit("either --config or --phi is required")
    return ExperimentConfig(
        phi=parse_phi(args.phi),
        drift=parse_drift(args.drift),
        particles=_floats(args.particles),
        T=args.t,
        partitions=_ints(args.partitions),
        dt_fine=args.dt_fine,
        reps=args.reps if args.reps is not None else default_reps,
        seed=args.seed if args.seed is not None else 0,
    )


def _emit(rep, args, default_out: str, delta_name: str = "delta_n") -> str:
    out = args.out or default_out
    emit_report(rep, args.format, out, delta_name=delta_name)
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="harrisflow",
        description="Coalescing correlated particle flows: simulation and rate studies.")
    sub = p.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="TOML or JSON experiment config")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--out", default=None)
    common.add_argument("--format", choices=("csv", "json"), default="csv")

    study = argparse.ArgumentParser(add_help=False, parents=[common])
    study.add_argument("--phi", default=None, help="gaussian | exponential_alpha:A | indicator | cosine_series[:N]")
    study.add_argument("--drift", default="zero", help="zero | affine:c0,c1 | sin | beta_modulus:B[,C]")
    study.add_argument("--particles", default="0", help="comma-separated start positions")
    study.add_argument("--partitions", default="8,16,32,64,128,256,512,1024")
    study.add_argument("--t", type=float, default=1.0)
    study.add_argument("--dt-fine", type=float, default=2.0 ** -14)
    study.add_argument("--reps", type=int, default=None)

    q = sub.add_parser("simulate", parents=[common], help="single flow run to CSV")
    q.add_argument("--phi", required=True)
    q.add_argument("--drift", default="zero")
    q.add_argument("--particles", default="0")
    q.add_argument("--t", type=float, default=1.0)
    q.add_argument("--dt-fine", type=float, default=2.0 ** -10)
    q.add_argument("--stride", type=int, default=1)

    sub.add_parser("converge", parents=[study], help="strong-rate study")
    sub.add_parser("wasserstein", parents=[study], help="pushforward W_2 study")

    q = sub.add_parser("weak", parents=[study], help="terminal-marginal KS study")
    q.add_argument("--trials", type=int, default=20)

    sub.add_parser("sharpness", parents=[study], help="zero-drift block-maximum ratios")

    q = sub.add_parser("dual", parents=[common], help="two-parameter run and backward bundle")
    q.add_argument("--phi", required=True)
    q.add_argument("--drift", default="zero")
    q.add_argument("--starts", default="0:0,0:1",
                   help="comma-separated s:x launch pairs")
    q.add_argument("--t", type=float, default=1.0)
    q.add_argument("--n-blocks", type=int, default=8)
    q.add_argument("--dt-fine", type=float, default=2.0 ** -10)

    q = sub.add_parser("coalesce-prob", parents=[common],
                       help="pair non-coalescence frequency per gap")
    q.add_argument("--phi", required=True)
    q.add_argument("--drift", default="zero")
    q.add_argument("--gaps", default="0.01,0.02,0.04,0.08")
    q.add_argument("--t", type=float, default=1.0)
    q.add_argument("--reps", type=int, default=10000)
    q.add_argument("--dt", type=float, default=2.5e-4)

    q = sub.add_parser("cluster-count", parents=[common],
                       help="mean surviving clusters per grid size")
    q.add_argument("--phi", required=True)
    q.add_argument("--drift", default="zero")
    q.add_argument("--n-grids", default="16,64,256")
    q.add_argument("--interval", default="0,1")
    q.add_argument("--t", type=float, default=1.0)
    q.add_argument("--reps", type=int, default=200)
    q.add_argument("--dt", type=float, default=2.5e-4)
    return p


def _cmd_simulate(args) -> int:
    seed = args.seed if args.seed is not None else 0
    cfg = SimConfig(dt_fine=args.dt_fine, record_stride=args.stride)
    rec = simulate(parse_phi(args.phi), parse_drift(args.drift),
                   np.array(_floats(args.particles)), args.t, cfg, derive(seed))
    out = args.out or "simulate.csv"
    rec.to_csv(out)
    final = rec.values[-1]
    print(f"wrote {out} ({rec.times.size} rows, {len(rec.merge_events)} merges, "
          f"final clusters {np.unique(final).size})")
    return 0


def _cmd_dual(args) -> int:
    seed = args.seed if args.seed is not None else 0
    starts = []
    for pair in args.starts.split(","):
        s, _, x = pair.partition(":")
        starts.append((float(s), float(x)))
    part = make_partition(args.t, args.n_blocks)
    tp = split_two_param(parse_phi(args.phi), parse_drift(args.drift), starts,
                         part, SimConfig(dt_fine=args.dt_fine), derive(seed, 8))
    bundle = TrajectoryBundle.from_two_param(tp, shared_seed=seed)
    back = mapping_I(bundle)
    violations = wedge_check(bundle, back)
    prefix = args.out or "dual"
    bundle.export_csv(f"{prefix}_forward.csv", reversed_clock=False)
    back.export_csv(f"{prefix}_backward.csv", reversed_clock=True)
    covered = float(np.mean(back.covered))
    print(f"wrote {prefix}_forward.csv and {prefix}_backward.csv; "
          f"coverage {covered:.3f}, wedge violations {len(violations)}")
    return 0 if not violations else 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cmd = args.command
    if cmd == "simulate":
        return _cmd_simulate(args)
    if cmd == "dual":
        return _cmd_dual(args)

    if cmd == "converge":
        rep = run_strong_rate(_study_config(args))
        print(f"wrote {_emit(rep, args, 'strong_rate.' + args.format)}")
        return 0
    if cmd == "wasserstein":
        rep = run_wasserstein_rate(_study_config(args))
        print(f"wrote {_emit(rep, args, 'wasserstein.' + args.format)}")
        return 0
    if cmd == "weak":
        rep = run_weak_convergence(_study_config(args, default_reps=2048),
                                   trials=args.trials)
        print(f"wrote {_emit(rep, args, 'weak.' + args.format)}")
        return 0
    if cmd == "sharpness":
        rep = run_sharpness(_study_config(args, default_reps=500))
        print(f"wrote {_emit(rep, args, 'sharpness.' + args.format)}")
        return 0

    seed = args.seed if args.seed is not None else 0
    if cmd == "coalesce-prob":
        cfg = ExperimentConfig(phi=parse_phi(args.phi), drift=parse_drift(args.drift),
                               T=args.t, partitions=(1,), dt_fine=args.t,
                               reps=args.reps, seed=seed)
        rep = run_coalesce_prob(cfg, _floats(args.gaps), dt=args.dt)
        print(f"wrote {_emit(rep, args, 'coalesce_prob.' + args.format, delta_name='gap')}")
        return 0
    if cmd == "cluster-count":
        cfg = ExperimentConfig(phi=parse_phi(args.phi), drift=parse_drift(args.drift),
                               T=args.t, partitions=(1,), dt_fine=args.t,
                               reps=args.reps, seed=seed)
        lo, hi = _floats(args.interval)
        rep = run_cluster_flatness(cfg, _ints(args.n_grids), (lo, hi), dt=args.dt)
        print(f"wrote {_emit(rep, args, 'cluster_count.' + args.format)}")
        return 0
    raise SystemExit(f"unknown command {cmd!r}")


if __name__ == "__main__":
    sys.exit(main())

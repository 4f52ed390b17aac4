"""Command-line entry point: one subcommand per experiment or theory harness.

Exit codes: 0 success, 1 config error, 2 verification failure (an inequality
harness reported violations), 3 I/O error. Output dir resolution order:
--out flag, SSAMLAB_OUT env var, then the config's output_dir.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass, replace

from . import experiments as ex
from .configio import ConfigError, load_config
from .runio import write_run
from .svgplot import PlotSpec, emit_plot
from .theory import (ConvexSpec, convergence_bound, excess_risk_bound,
                     lr_bound, stability_bound, verify_inequalities)

__all__ = ["main", "dispatch"]

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_VERIFY = 2
EXIT_IO = 3


@dataclass
class VerifyTheoryConfig:
    instances: int = 100
    trials: int = 100
    d: int = 10
    delta: float = 0.01
    radius: float = 1.0
    rho_frac: float = 0.5
    eta_frac: float = 1.0
    master_seed: int = 1
    output_dir: str = "out/verify_theory"


@dataclass
class BoundsConfig:
    mu: float = 0.1
    lipschitz_smooth: float = 1.0
    region_radius: float = 1.0
    n: int = 1000
    rho: float = 0.02
    eta: float = 0.0  # 0 means eta_frac * admissible budget
    eta_frac: float = 0.9
    steps: int = 10000
    gamma_max: float = 0.9
    initial_gap: float = 1.0
    kinds: str = "all"
    master_seed: int = 1
    output_dir: str = "out/bounds"


def _run_verify_theory(cfg: VerifyTheoryConfig, parallelism: int = 1):
    reports = verify_inequalities(instances=cfg.instances, trials=cfg.trials,
                                  d=cfg.d, delta=cfg.delta, radius=cfg.radius,
                                  seed=cfg.master_seed, rho_frac=cfg.rho_frac,
                                  eta_frac=cfg.eta_frac)
    rows = [r.csv_row() for r in reports]
    table = ex.Table("theory_checks", list(reports[0].CSV_COLUMNS), rows)
    failed = any(r.violations > 0 for r in reports)
    return {"theory_checks": table}, (EXIT_VERIFY if failed else EXIT_OK)


def _run_bounds(cfg: BoundsConfig, parallelism: int = 1):
    spec = ConvexSpec(mu=cfg.mu, lipschitz_smooth=cfg.lipschitz_smooth,
                      lipschitz_loss=cfg.lipschitz_smooth * cfg.region_radius,
                      region_radius=cfg.region_radius)
    eta = cfg.eta if cfg.eta > 0 else cfg.eta_frac * lr_bound(spec, cfg.rho, 1.0)
    kinds = ("sgd", "sam", "ssam") if cfg.kinds == "all" else \
        tuple(k.strip() for k in cfg.kinds.split(","))
    rows = []
    for kind in kinds:
        gm = cfg.gamma_max if kind == "ssam" else None
        stab = stability_bound(spec, cfg.n, cfg.rho, eta, cfg.steps, kind, gm)
        if kind == "sgd":
            conv, exc = None, None
        else:
            conv = convergence_bound(spec, cfg.rho, eta, cfg.steps, kind, gm,
                                     cfg.initial_gap)
            exc = excess_risk_bound(spec, cfg.n, cfg.rho, eta, kind, gm)
        rows.append([kind, eta, stab, conv, exc])
    table = ex.Table("bounds", ["kind", "eta", "stability_bound",
                                "convergence_bound", "excess_risk_bound"], rows)
    return {"bounds": table}, EXIT_OK


def _experiment(runner):
    def run(cfg, parallelism=1):
        return runner(cfg, parallelism=parallelism), EXIT_OK
    return run


# subcommand -> (config class, runner, default plot specs per table)
SUBCOMMANDS = {
    "escape": (ex.EscapeConfig, _experiment(ex.run_escape), {
        "escape_curves": PlotSpec(x="step", y="loss", series=("optimizer", "rho"),
                                  logy=True, title="saddle escape"),
    }),
    "success-rate": (ex.SuccessRateConfig, _experiment(ex.run_success_rate), {
        "success_rate": PlotSpec(x="eta", y="success_rate",
                                 series=("optimizer", "rho"), logx=True,
                                 title="success rate"),
    }),
    "convergence": (ex.ConvergenceConfig, _experiment(ex.run_convergence), {
        "convergence_curves": PlotSpec(x="step", y="loss",
                                       series=("optimizer", "rho"), logy=True,
                                       title="noisy-ball convergence"),
    }),
    "stability": (ex.StabilityConfig, _experiment(ex.run_stability), {
        "stability": PlotSpec(x="epoch", y="param_distance",
                              series=("optimizer", "seed"),
                              title="twin parameter distance"),
    }),
    "renorm-track": (ex.RenormTrackConfig, _experiment(ex.run_renorm_tracking), {
        "renorm_epoch_mean": PlotSpec(x="epoch", y="gamma_mean", series=("rho",),
                                      title="renormalization factor"),
    }),
    "sharpness": (ex.SharpnessConfig, _experiment(ex.run_sharpness), {
        "sharpness": PlotSpec(x="eig_rank", y="eigenvalue",
                              series=("optimizer", "seed"),
                              title="top Hessian eigenvalues"),
    }),
    "lr-sweep": (ex.LrSweepConfig, _experiment(ex.run_lr_sweep), {
        "lr_sweep": PlotSpec(x="eta", y="final_train_loss", series=("optimizer",),
                             logx=True, title="learning-rate sweep"),
    }),
    "verify-theory": (VerifyTheoryConfig, _run_verify_theory, {}),
    "bounds": (BoundsConfig, _run_bounds, {}),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ssamlab",
        description="Sharpness-aware optimizer laboratory: experiments, "
                    "bound tables, and inequality verification.")
    sub = parser.add_subparsers(dest="cmd", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name, help=f"run the {name} task")
        p.add_argument("--config", required=True, help="path to the INI config file")
        p.add_argument("--out", default=None, help="output directory override")
        p.add_argument("--seed", type=int, default=None, help="master seed override")
        p.add_argument("--parallel", type=int, default=1,
                       help="worker threads for independent grid cells")
        p.add_argument("--plot", action="store_true", help="also emit SVG plots")
    return parser


def dispatch(args) -> int:
    cfg_cls, runner, plot_specs = SUBCOMMANDS[args.cmd]
    try:
        cfg = load_config(args.config, args.cmd, cfg_cls)
        if args.seed is not None:
            cfg = replace(cfg, master_seed=args.seed)
        out_dir = args.out or os.environ.get("SSAMLAB_OUT") or cfg.output_dir
        tables, code = runner(cfg, parallelism=max(1, args.parallel))
        svg = {}
        if args.plot:
            for tname, pspec in plot_specs.items():
                if tname in tables and tables[tname].rows:
                    svg[f"{tname}.svg"] = emit_plot(tables[tname], pspec)
        write_run(out_dir, args.cmd.replace("-", "_"), cfg, tables,
                  extra_meta={"effective_master_seed": cfg.master_seed,
                              "parallelism": max(1, args.parallel)},
                  svg_files=svg)
        return code
    except (ConfigError, ValueError) as exc:
        print(f"ssamlab: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"ssamlab: i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return dispatch(args)


if __name__ == "__main__":
    sys.exit(main())

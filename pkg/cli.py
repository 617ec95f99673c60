# cli.py
"""
Interface en ligne de commande : generate, simulate, analyze, experiment.

Codes de sortie : 0 succès, 1 échec du domaine, 2 erreur d'usage ou de fichier.
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

from pydantic import ValidationError

from analysis import analyze, write_analysis_csv
from config import settings
from energy_model import load_harvest_trace, scale_profile, task_thresholds
from exceptions import EXIT_OK, ConfigurationError, IpdSimError
from experiments import load_experiment_spec, run_and_write
from logging_config import setup_logging
from schemas import CapacitorConfig, GenConfig, HarvestMode, HarvestProfile, PolicyKind, SimConfig
from sim_kernel import run as run_simulation
from sim_kernel import write_metrics_csv, write_trace_csv
from utils import write_csv
from workload import generate_tasksets, load_taskset, read_yaml, save_taskset

logger = logging.getLogger(__name__)


# ============================================================================
# FICHIERS DE CONFIGURATION
# ============================================================================

def harvest_from_dict(document: Dict[str, Any], base_dir: Path) -> HarvestProfile:
    """harvest: {mode: ideal} | {mode: constant, rate_w} | {mode: trace, trace_file, scale}"""
    mode = HarvestMode(document.get("mode", HarvestMode.constant.value))
    if mode == HarvestMode.ideal:
        return HarvestProfile.ideal(document.get("rate_w", 1.0))
    if mode == HarvestMode.constant:
        if "rate_w" not in document:
            raise ConfigurationError("constant harvest needs rate_w")
        return HarvestProfile.constant(document["rate_w"])
    if "segments" in document:
        profile = HarvestProfile(mode=HarvestMode.trace, segments=document["segments"])
    else:
        trace_file = Path(document["trace_file"])
        profile = load_harvest_trace(trace_file if trace_file.is_absolute() else base_dir / trace_file)
    return scale_profile(profile, document.get("scale", 1.0))


def sim_config_from_dict(document: Dict[str, Any], base_dir: Path = Path(".")) -> SimConfig:
    """Les clés absentes prennent les valeurs de Settings"""
    try:
        values = {
            "tick_s": settings.tick_s,
            "checkpoint_store_cost_s": settings.checkpoint_store_cost_s,
            "checkpoint_restore_cost_s": settings.checkpoint_restore_cost_s,
            "scheduler_cost_s": settings.scheduler_cost_s,
            "estimator_window_s": settings.estimator_window_s,
            **document,
        }
        values["harvest"] = harvest_from_dict(document.get("harvest", {"mode": "ideal"}), base_dir)
        return SimConfig.model_validate(values)
    except (ValidationError, ValueError, KeyError) as exc:
        raise ConfigurationError(f"Invalid simulation config: {exc}") from exc


def load_sim_config(path: Path) -> SimConfig:
    return sim_config_from_dict(read_yaml(path), path.parent)


def load_gen_config(path: Optional[Path], overrides: Dict[str, Any]) -> GenConfig:
    document = read_yaml(path) if path is not None else {}
    try:
        return GenConfig.model_validate({**document, **overrides})
    except ValidationError as exc:
        raise ConfigurationError(f"Invalid generator config: {exc}") from exc


def _out_dir(args: argparse.Namespace) -> Path:
    out = Path(args.out) if args.out else settings.output_dir
    out.mkdir(parents=True, exist_ok=True)
    return out


# ============================================================================
# COMMANDES
# ============================================================================

def cmd_generate(args: argparse.Namespace) -> int:
    overrides: Dict[str, Any] = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.n_tasks is not None:
        overrides["n_tasks_range"] = (args.n_tasks, args.n_tasks)
    if args.utilization is not None:
        overrides["utilization_range"] = (args.utilization, args.utilization)
    if args.low_demand_ratio is not None:
        overrides["low_demand_ratio"] = args.low_demand_ratio
    cfg = load_gen_config(Path(args.config) if args.config else None, overrides)

    out = _out_dir(args)
    for taskset in generate_tasksets(cfg, args.count):
        path = save_taskset(taskset, out / f"{taskset.name}.yaml")
        print(path)
    logger.info(f"Generated {args.count} taskset(s) in {out} (seed {cfg.seed})")
    return EXIT_OK


# Sans --config : récolte idéale, 100 mF, 480 s
DEFAULT_SIM_CONFIG: Dict[str, Any] = {
    "horizon_s": 480.0,
    "capacitor": {"capacitance_f": 0.1},
    "harvest": {"mode": "ideal"},
}


def cmd_simulate(args: argparse.Namespace) -> int:
    taskset = load_taskset(args.taskset)
    cfg = load_sim_config(Path(args.config)) if args.config else sim_config_from_dict(DEFAULT_SIM_CONFIG)
    update: Dict[str, Any] = {}
    if args.policy:
        update["policy"] = PolicyKind(args.policy)
    if args.horizon is not None:
        update["horizon"] = args.horizon
    if update:
        cfg = SimConfig.model_validate({**cfg.model_dump(), **update})

    result = run_simulation(taskset, cfg)
    out = _out_dir(args)
    write_trace_csv(result.trace, out / "trace.csv")
    metrics_path = write_metrics_csv(result.metrics, out / "metrics.csv")
    print(metrics_path)
    return EXIT_OK


def cmd_analyze(args: argparse.Namespace) -> int:
    taskset = load_taskset(args.taskset)
    report = analyze(taskset, args.rate)
    out = _out_dir(args)
    write_analysis_csv(report, out / "analysis.csv")

    if args.thresholds:
        capacitor = CapacitorConfig(capacitance=args.capacitance)
        rows = [[t.task, t.chain, f"{t.charging_demand_s:.3f}", f"{t.threshold_v:.4f}",
                 str(t.servable).lower()]
                for t in task_thresholds(taskset, args.rate, capacitor)]
        write_csv(out / "thresholds.csv", ["task", "chain", "Q_s", "threshold_v", "servable"], rows)

    print(f"utilization {round(report.utilization, 3):g}, schedulable {str(report.schedulable).lower()}")
    if args.raw_utilization:
        # Mesure seulement : le verdict ci-dessus reste celui de l'analyse bornée
        print(f"raw utilization {round(report.raw_utilization, 3):g} (metric, not a schedulability verdict)")
    return EXIT_OK


def cmd_experiment(args: argparse.Namespace) -> int:
    spec = load_experiment_spec(args.spec)
    update: Dict[str, Any] = {}
    if args.seed is not None:
        update["seed"] = args.seed
    if args.repetitions is not None:
        update["repetitions"] = args.repetitions
    if args.workers is not None:
        update["workers"] = args.workers
    if update:
        spec = spec.model_copy(update=update)
    print(run_and_write(spec, args.out))
    return EXIT_OK


# ============================================================================
# PARSEUR
# ============================================================================

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ipdsim",
        description="Ordonnancement temps réel de dispositifs alimentés par intermittence",
    )
    parser.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING...")
    parser.add_argument("--no-log-file", action="store_true", help="Journaliser sur la console uniquement")
    commands = parser.add_subparsers(dest="command", required=True)

    generate = commands.add_parser("generate", help="Générer des jeux de tâches aléatoires")
    generate.add_argument("--config", help="Configuration YAML du générateur")
    generate.add_argument("--count", type=int, default=1)
    generate.add_argument("--seed", type=int, default=None)
    generate.add_argument("--n-tasks", type=int, default=None)
    generate.add_argument("--utilization", type=float, default=None)
    generate.add_argument("--low-demand-ratio", type=float, default=None)
    generate.add_argument("--out", default=None, help="Répertoire de sortie")
    generate.set_defaults(handler=cmd_generate)

    simulate = commands.add_parser("simulate", help="Simuler un jeu de tâches")
    simulate.add_argument("taskset")
    simulate.add_argument("--config", help="Configuration YAML de simulation")
    simulate.add_argument("--policy", choices=[p.value for p in PolicyKind], default=None)
    simulate.add_argument("--horizon", type=float, default=None, help="Horizon (s)")
    simulate.add_argument("--out", default=None)
    simulate.set_defaults(handler=cmd_simulate)

    analyze_cmd = commands.add_parser("analyze", help="Analyse d'ordonnançabilité")
    analyze_cmd.add_argument("taskset")
    analyze_cmd.add_argument("--rate", type=float, required=True, help="Taux de récolte W_s (W)")
    analyze_cmd.add_argument("--raw-utilization", action="store_true",
                             help="Afficher aussi l'utilisation avec les demandes de recharge brutes")
    analyze_cmd.add_argument("--thresholds", action="store_true",
                             help="Écrire aussi les tensions seuil des tâches atomiques")
    analyze_cmd.add_argument("--capacitance", type=float, default=0.1, help="Capacité (F) pour --thresholds")
    analyze_cmd.add_argument("--out", default=None)
    analyze_cmd.set_defaults(handler=cmd_analyze)

    experiment = commands.add_parser("experiment", help="Lancer un préréglage d'expérience")
    experiment.add_argument("spec")
    experiment.add_argument("--seed", type=int, default=None)
    experiment.add_argument("--repetitions", type=int, default=None)
    experiment.add_argument("--workers", type=int, default=None)
    experiment.add_argument("--out", default=None)
    experiment.set_defaults(handler=cmd_experiment)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level, to_file=not args.no_log_file)
    try:
        return args.handler(args)
    except IpdSimError as exc:
        print(f"error: {exc.message}", file=sys.stderr)
        logger.error(exc.message)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())

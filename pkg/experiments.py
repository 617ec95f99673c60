# experiments.py
"""
Préréglages d'expériences : comparaison des politiques selon le mode de
récolte, balayage de capacité, taux d'ordonnançabilité analytique en fonction
de la proportion de tâches peu gourmandes ou de l'utilisation.
"""
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Callable, Dict, List, NamedTuple, Optional, Tuple, Union

from pydantic import ValidationError

from analysis import is_schedulable
from config import settings
from exceptions import ConfigurationError, IpdSimError
from schemas import (CapacitorConfig, ExperimentKind, ExperimentSpec, GenConfig, HarvestProfile, PolicyKind,
                     RunRecord, SimConfig, Taskset)
from sim_kernel import run as run_simulation
from utils import write_csv
from workload import force_atomic, generate_tasksets, load_taskset, read_yaml

logger = logging.getLogger(__name__)

MIXED_PREEMPTION = "mixed_preemption"
ALL_ATOMIC = "all_atomic"

RUN_HEADER = ["experiment", "harvest_rate_w", "capacitance_f", "low_demand_ratio", "utilization",
              "policy", "seed", "chain", "priority", "success_ratio", "schedulability_ratio",
              "error"]


# ============================================================================
# CHARGEMENT
# ============================================================================

def load_experiment_spec(path: Union[str, Path]) -> ExperimentSpec:
    document = read_yaml(path)
    try:
        spec = ExperimentSpec.model_validate(document)
    except ValidationError as exc:
        raise ConfigurationError(f"Invalid experiment spec '{path}': {exc}") from exc
    update: Dict[str, Any] = {}
    if not spec.name:
        update["name"] = Path(path).stem
    if spec.taskset_file is not None and not spec.taskset_file.is_absolute():
        # Chemin relatif au fichier de l'expérience
        update["taskset_file"] = Path(path).parent / spec.taskset_file
    return spec.model_copy(update=update) if update else spec


def _experiment_name(spec: ExperimentSpec) -> str:
    return spec.name or spec.kind.value


def _repetitions(spec: ExperimentSpec) -> int:
    return spec.repetitions or settings.experiment_repetitions


def _workers(spec: ExperimentSpec) -> int:
    return spec.workers or settings.experiment_workers


def sim_config_for(spec: ExperimentSpec, rate_w: Optional[float], capacitance_f: float,
                   policy: PolicyKind) -> SimConfig:
    """Configuration de simulation d'un point de grille ; rate_w=None => mode idéal"""
    harvest = HarvestProfile.ideal() if rate_w is None else HarvestProfile.constant(rate_w)
    return SimConfig(
        tick=settings.tick_s,
        horizon=spec.horizon_s,
        capacitor=CapacitorConfig(capacitance=capacitance_f),
        harvest=harvest,
        policy=policy,
        checkpoint_store_cost=settings.checkpoint_store_cost_s,
        checkpoint_restore_cost=settings.checkpoint_restore_cost_s,
        scheduler_cost=settings.scheduler_cost_s,
        estimator_window=settings.estimator_window_s,
    )


# ============================================================================
# POINTS DE GRILLE

def simulation_point(spec: ExperimentSpec, taskset: Taskset, point: Dict[str, Any],
                     policy: PolicyKind) -> List[RunRecord]:
    """Une simulation : un RunRecord par chaîne (taux de succès)"""
    experiment = _experiment_name(spec)
    started = time.perf_counter()
    try:
        cfg = sim_config_for(spec, point["harvest_rate_w"], point["capacitance_f"], policy)
        result = run_simulation(taskset, cfg)
    except IpdSimError as exc:
        logger.warning(f"{experiment} {point} {policy.value} failed: {exc.message}")
        return [RunRecord(experiment=experiment, grid_point=point, policy=policy.value,
                          seed=spec.seed, error=exc.message,
                          duration_s=time.perf_counter() - started)]
    duration = time.perf_counter() - started
    logger.debug(f"{experiment} {point} {policy.value}: {duration:.3f}s")
    return [
        RunRecord(experiment=experiment, grid_point=point, policy=policy.value, seed=spec.seed,
                  chain=metrics.chain, priority=metrics.priority,
                  success_ratio=metrics.success_ratio, duration_s=duration)
        for metrics in result.metrics.chains
    ]


class SchedulabilityCount(NamedTuple):
    """Jeux ordonnançables sur une tranche de répétitions d'un point de grille"""
    mixed: int
    atomic: int
    count: int
    duration_s: float
    error: Optional[str] = None


def _generator_for(spec: ExperimentSpec, point: Dict[str, Any]) -> GenConfig:
    update: Dict[str, Any] = {"seed": spec.seed}
    if point.get("low_demand_ratio") is not None:
        update["low_demand_ratio"] = point["low_demand_ratio"]
    if point.get("utilization") is not None:
        update["utilization_range"] = (point["utilization"], point["utilization"])
    return GenConfig.model_validate({**spec.generator.model_dump(), **update})


def schedulability_count(spec: ExperimentSpec, point: Dict[str, Any], start: int,
                         stop: int) -> SchedulabilityCount:
    """Analyse des répétitions [start, stop) ; la graine de chaque jeu ne dépend que de son indice"""
    started = time.perf_counter()
    try:
        mixed = atomic = 0
        for taskset in generate_tasksets(_generator_for(spec, point), stop - start, start=start):
            mixed += is_schedulable(taskset, spec.harvest_rate_w, clamp=spec.clamp_charging)
            atomic += is_schedulable(force_atomic(taskset), spec.harvest_rate_w, clamp=spec.clamp_charging)
    except (IpdSimError, ValidationError) as exc:
        message = exc.message if isinstance(exc, IpdSimError) else str(exc)
        return SchedulabilityCount(0, 0, 0, time.perf_counter() - started, message)
    return SchedulabilityCount(mixed, atomic, stop - start, time.perf_counter() - started)


def schedulability_records(spec: ExperimentSpec, point: Dict[str, Any],
                           parts: List[SchedulabilityCount]) -> List[RunRecord]:
    """Taux d'ordonnançabilité analytique, préemption mixte et tout-atomique, sur les mêmes jeux"""
    experiment = _experiment_name(spec)
    duration = sum(part.duration_s for part in parts)
    error = next((part.error for part in parts if part.error), None)
    if error is not None:
        logger.warning(f"{experiment} {point} failed: {error}")
        return [RunRecord(experiment=experiment, grid_point=point, policy=label, seed=spec.seed,
                          error=error, duration_s=duration)
                for label in (MIXED_PREEMPTION, ALL_ATOMIC)]
    count = sum(part.count for part in parts)
    mixed = sum(part.mixed for part in parts)
    atomic = sum(part.atomic for part in parts)
    logger.debug(f"{experiment} {point}: {count} tasksets in {duration:.3f}s")
    return [
        RunRecord(experiment=experiment, grid_point=point, policy=MIXED_PREEMPTION, seed=spec.seed,
                  schedulability_ratio=mixed / count, duration_s=duration),
        RunRecord(experiment=experiment, grid_point=point, policy=ALL_ATOMIC, seed=spec.seed,
                  schedulability_ratio=atomic / count, duration_s=duration),
    ]


def slices(total: int, parts: int) -> List[Tuple[int, int]]:
    """Découpe [0, total) en au plus parts tranches contiguës"""
    parts = max(min(parts, total), 1)
    bounds = [total * i // parts for i in range(parts + 1)]
    return [(lo, hi) for lo, hi in zip(bounds, bounds[1:]) if hi > lo]


def grid(spec: ExperimentSpec) -> List[Dict[str, Any]]:
    """Points de grille dans l'ordre canonique de sortie"""
    if spec.kind == ExperimentKind.policy_compare:
        capacitance = spec.capacitances_f[0]
        return [{"harvest_rate_w": rate, "capacitance_f": capacitance} for rate in spec.harvest_rates_w]
    if spec.kind == ExperimentKind.capacitor_sweep:
        rates = [rate for rate in spec.harvest_rates_w if rate is not None] or [None]
        return [{"harvest_rate_w": rate, "capacitance_f": capacitance}
                for rate in rates for capacitance in spec.capacitances_f]
    if spec.kind == ExperimentKind.sched_vs_demand_ratio:
        return [{"low_demand_ratio": ratio} for ratio in spec.low_demand_ratios]
    return [{"utilization": utilization} for utilization in spec.utilizations]


def _simulation_job(args: Tuple[ExperimentSpec, Taskset, Dict[str, Any], PolicyKind]) -> List[RunRecord]:
    return simulation_point(*args)


def _count_job(args: Tuple[ExperimentSpec, Dict[str, Any], int, int]) -> SchedulabilityCount:
    return schedulability_count(*args)


def _map(function: Callable[[Any], Any], jobs: List[Any], workers: int) -> List[Any]:
    if workers > 1 and len(jobs) > 1:
        # map() conserve l'ordre de soumission
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(function, jobs))
    return [function(job) for job in jobs]


def run_experiment(spec: ExperimentSpec) -> List[RunRecord]:
    """Exécute toute la grille ; les échecs sont enregistrés par point sans arrêter la campagne"""
    workers = _workers(spec)
    points = grid(spec)
    if spec.kind in (ExperimentKind.policy_compare, ExperimentKind.capacitor_sweep):
        if spec.taskset_file is None:
            raise ConfigurationError(f"{spec.kind.value} needs taskset_file")
        taskset = load_taskset(spec.taskset_file)
        jobs = [(spec, taskset, point, policy) for point in points for policy in spec.policies]
        logger.info(f"Experiment {_experiment_name(spec)}: {len(jobs)} simulations on {workers} worker(s)")
        batches = _map(_simulation_job, jobs, workers)
        return [record for batch in batches for record in batch]

    # Les répétitions d'un même point sont réparties entre les workers
    chunks = slices(_repetitions(spec), workers)
    jobs = [(spec, point, lo, hi) for point in points for lo, hi in chunks]
    logger.info(f"Experiment {_experiment_name(spec)}: {len(points)} grid points x {len(chunks)} "
                f"slice(s) on {workers} worker(s)")
    counts = _map(_count_job, jobs, workers)
    records: List[RunRecord] = []
    for index, point in enumerate(points):
        parts = counts[index * len(chunks):(index + 1) * len(chunks)]
        records.extend(schedulability_records(spec, point, parts))
    return records


# ============================================================================
# SORTIE CSV
# ============================================================================

def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.4f}"
    return str(value)


def record_row(record: RunRecord) -> List[str]:
    point = record.grid_point
    rate = "ideal" if "harvest_rate_w" in point and point["harvest_rate_w"] is None \
        else _cell(point.get("harvest_rate_w"))
    return [
        record.experiment, rate, _cell(point.get("capacitance_f")),
        _cell(point.get("low_demand_ratio")), _cell(point.get("utilization")),
        record.policy, str(record.seed), _cell(record.chain), _cell(record.priority),
        _cell(record.success_ratio), _cell(record.schedulability_ratio), _cell(record.error),
    ]


def write_records_csv(records: List[RunRecord], path: Union[str, Path]) -> Path:
    return write_csv(path, RUN_HEADER, (record_row(record) for record in records))


def run_and_write(spec: ExperimentSpec, out_dir: Optional[Union[str, Path]] = None) -> Path:
    records = run_experiment(spec)
    out = Path(out_dir or spec.output_dir or settings.output_dir)
    path = write_records_csv(records, out / f"{_experiment_name(spec)}.csv")
    failed = sum(1 for record in records if record.error)
    logger.info(f"Wrote {len(records)} records to {path} ({failed} failed)")
    return path


# workload.py
import logging
import math
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
import yaml
from pydantic import ValidationError

from energy_model import charging_demand
from exceptions import InvalidTasksetError, TasksetFileError
from schemas import ChainSpec, GenConfig, TaskSpec, Taskset
from utils import derive_seed
from validators import TasksetValidator

logger = logging.getLogger(__name__)


# ============================================================================
# VALIDATION ET PRIORITÉS
# ============================================================================

def validate(taskset: Taskset) -> List[str]:
    """Liste des violations du modèle de tâches (vide si valide)"""
    return TasksetValidator.validate(taskset)


def ensure_valid(taskset: Taskset) -> Taskset:
    violations = validate(taskset)
    if violations:
        raise InvalidTasksetError(violations)
    return taskset


def rm_priorities(taskset: Taskset) -> Taskset:
    """Rate monotonic : période plus courte => priorité plus haute ; à égalité, id le plus petit"""
    ordered = sorted(taskset.chains, key=lambda chain: (chain.period, chain.id))
    n = len(ordered)
    priorities = {chain.id: n - rank for rank, chain in enumerate(ordered)}
    chains = [chain.model_copy(update={"priority": priorities[chain.id]}) for chain in taskset.chains]
    return taskset.model_copy(update={"chains": chains})


def force_atomic(taskset: Taskset) -> Taskset:
    """Même jeu de tâches avec toutes les tâches atomiques (modèle tout-atomique)"""
    chains = []
    for chain in taskset.chains:
        tasks = [task.model_copy(update={"atomic": True}) for task in chain.tasks]
        chains.append(chain.model_copy(update={"tasks": tasks}))
    return taskset.model_copy(update={"chains": chains})


def chain_aggregates(chain: ChainSpec, w_s: float, clamp: bool = True) -> Tuple[float, float]:
    """
    (C_i, Q_i) d'une chaîne. Par défaut chaque Q_i^j négatif est ramené à 0 ;
    clamp=False conserve les valeurs brutes (métrique d'utilisation).
    """
    c_total = sum(task.wcet for task in chain.tasks)
    demands = [charging_demand(task.wcet, task.power_draw, w_s) for task in chain.tasks]
    if clamp:
        demands = [max(q, 0.0) for q in demands]
    return c_total, sum(demands)


# ============================================================================
# GÉNÉRATION ALÉATOIRE
# ============================================================================

def uunifast(n: int, total_u: float, rng: np.random.Generator) -> List[float]:
    """Répartit total_u sur n tâches selon la récurrence UUniFast"""
    if n < 1:
        raise ValueError("n must be >= 1")
    if total_u <= 0:
        raise ValueError("total utilization must be > 0")
    utilizations = []
    remaining = total_u
    for i in range(1, n):
        next_remaining = remaining * rng.random() ** (1.0 / (n - i))
        utilizations.append(remaining - next_remaining)
        remaining = next_remaining
    utilizations.append(remaining)
    return utilizations


def execution_time(period: float, utilization: float) -> float:
    """C = max(round(10·T·U)/10, 0.1) ; round() de Python arrondit au pair"""
    return max(round(10 * period * utilization) / 10, 0.1)


def low_demand_count(n: int, ratio: float, rng: Optional[np.random.Generator] = None) -> int:
    """
    Nombre de tâches peu gourmandes. Sans rng, arrondi au plus proche ; avec
    rng, la partie fractionnaire de ratio·n est tirée au sort pour que la
    proportion moyenne vaille exactement ratio.
    """
    exact = ratio * n
    if rng is None:
        return int(math.floor(exact + 0.5))
    base = int(math.floor(exact))
    return base + int(rng.random() < exact - base)


def _draw(rng: np.random.Generator, bounds: Tuple[float, float], integer: bool) -> float:
    low, high = bounds
    if integer:
        return float(rng.integers(int(low), int(high) + 1))
    if low == high:
        return float(low)
    return float(rng.uniform(low, high))


def generate_taskset(cfg: GenConfig, rng: Optional[np.random.Generator] = None,
                     name: str = "generated") -> Taskset:
    """Jeu de n chaînes mono-tâche, échéances implicites, priorités RM"""
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)

    n = int(rng.integers(cfg.n_tasks_range[0], cfg.n_tasks_range[1] + 1))
    u_low, u_high = cfg.utilization_range
    total_u = u_low if u_low == u_high else float(rng.uniform(u_low, u_high))
    utilizations = uunifast(n, total_u, rng)
    periods = rng.integers(cfg.period_range_s[0], cfg.period_range_s[1] + 1, size=n)

    low_demand = set(int(i) for i in rng.permutation(n)[:low_demand_count(n, cfg.low_demand_ratio, rng)])
    atomic_draws = rng.random(n)

    chains = []
    for i in range(n):
        period = float(periods[i])
        bounds = cfg.low_demand_range_w if i in low_demand else cfg.high_demand_range_w
        task = TaskSpec(
            id=f"t{i}",
            wcet=execution_time(period, utilizations[i]),
            power_draw=_draw(rng, bounds, cfg.integer_power),
            atomic=bool(atomic_draws[i] < cfg.atomic_probability),
        )
        chains.append(ChainSpec(id=i, name=f"t{i}", tasks=[task], period=period,
                                deadline=period, priority=0))

    taskset = rm_priorities(Taskset(name=name, chains=chains))
    logger.debug(f"Generated {name}: n={n}, U={total_u:.3f}")
    return taskset


def generate_tasksets(cfg: GenConfig, count: int, start: int = 0) -> List[Taskset]:
    """count jeux reproductibles à partir de l'indice start, graine de chacun = seed XOR index"""
    return [
        generate_taskset(cfg, np.random.default_rng(derive_seed(cfg.seed, index)),
                         name=f"taskset_{index:04d}")
        for index in range(start, start + count)
    ]


def utilization(taskset: Taskset) -> float:
    """Σ C_i / T_i sans demande de recharge"""
    return sum(chain.wcet / chain.period for chain in taskset.chains)


# ============================================================================
# FICHIERS YAML
# ============================================================================

def read_yaml(path: Union[str, Path]) -> Dict[str, Any]:
    path = Path(path)
    if not path.exists():
        raise TasksetFileError(str(path), "file not found")
    try:
        with path.open() as handle:
            document = yaml.safe_load(handle)
    except yaml.YAMLError as exc:
        raise TasksetFileError(str(path), f"invalid YAML: {exc}") from exc
    if document is None:
        return {}
    if not isinstance(document, dict):
        raise TasksetFileError(str(path), "top-level document must be a mapping")
    return document


def taskset_to_dict(taskset: Taskset) -> Dict[str, Any]:
    return {
        "name": taskset.name,
        "chains": [
            {
                "id": chain.id,
                "name": chain.name,
                "period_s": chain.period,
                "deadline_s": chain.deadline,
                "priority": chain.priority,
                "release_offset_s": chain.release_offset,
                "tasks": [
                    {"id": task.id, "wcet_s": task.wcet, "power_w": task.power_draw,
                     "atomic": task.atomic}
                    for task in chain.tasks
                ],
            }
            for chain in taskset.chains
        ],
    }


def taskset_from_dict(document: Dict[str, Any], source: str = "<memory>") -> Taskset:
    try:
        return Taskset.model_validate(document)
    except ValidationError as exc:
        raise TasksetFileError(source, f"schema error: {exc}") from exc


def load_taskset(path: Union[str, Path]) -> Taskset:
    taskset = taskset_from_dict(read_yaml(path), str(path))
    logger.debug(f"Loaded taskset {taskset.name} ({len(taskset.chains)} chains) from {path}")
    return taskset


def save_taskset(taskset: Taskset, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as handle:
        yaml.safe_dump(taskset_to_dict(taskset), handle, sort_keys=False)
    return path

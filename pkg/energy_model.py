# energy_model.py
"""
Arithmétique du condensateur et de la récupération d'énergie.

L'énergie stockée (joules) est l'état de référence ; la tension en est
toujours dérivée par V = sqrt(2E/C).
"""
import logging
import math
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Deque, Iterable, List, Optional, Tuple, Union

from exceptions import ChargingStarvedError, EnergyDomainError, NeverReachesError, TasksetFileError
from schemas import (CapacitorConfig, HarvestMode, HarvestProfile, HarvestSegment, TaskSpec,
                     TaskThreshold, Taskset)
from utils import read_csv

logger = logging.getLogger(__name__)

# Tolérance sur les comparaisons de tension en bord d'intervalle
_V_TOL = 1e-9


# ============================================================================
# ÉNERGIE <-> TENSION
# ============================================================================

def max_energy(config: CapacitorConfig) -> float:
    return 0.5 * config.capacitance * config.v_max ** 2


def energy_of_voltage(config: CapacitorConfig, v: float) -> float:
    """E = ½·C·V²"""
    if v < 0 or v > config.v_max * (1 + _V_TOL):
        raise EnergyDomainError(v, config.v_max)
    return 0.5 * config.capacitance * v * v


def voltage_of_energy(config: CapacitorConfig, energy: float) -> float:
    return math.sqrt(2.0 * max(energy, 0.0) / config.capacitance)


@dataclass(frozen=True)
class CapacitorState:
    config: CapacitorConfig
    energy: float

    @property
    def voltage(self) -> float:
        return voltage_of_energy(self.config, self.energy)

    @classmethod
    def at_voltage(cls, config: CapacitorConfig, v: float) -> "CapacitorState":
        return cls(config=config, energy=energy_of_voltage(config, v))


def integrate(state: CapacitorState, net_power: float, dt: float) -> CapacitorState:
    """Applique ΔE = P·dt, borné à [0, ½·C·v_max²] (saturation du récupérateur)"""
    if dt < 0:
        raise ValueError("dt must be >= 0")
    energy = state.energy + net_power * dt
    energy = min(max(energy, 0.0), max_energy(state.config))
    return CapacitorState(config=state.config, energy=energy)


# ============================================================================
# DEMANDE DE RECHARGE ET SEUILS
# ============================================================================

def charging_demand(c_exec: float, w_task: float, w_s: float) -> float:
    """
    Q = (W − W_s)·C / W_s : temps de recharge supplémentaire pour compenser
    la consommation d'une exécution. Négatif quand la récolte dépasse la
    consommation ; l'appelant décide du bornage.
    """
    if w_s <= 0:
        raise ChargingStarvedError()
    return (w_task - w_s) * c_exec / w_s


def required_voltage(q: float, w_s: float, config: CapacitorConfig) -> float:
    """Tension seuil sans plafond : peut dépasser v_max (tâche jamais servable)"""
    if q <= 0:
        return config.v_min
    if w_s <= 0:
        raise ChargingStarvedError("threshold voltage")
    return math.sqrt((2.0 * q * w_s + config.capacitance * config.v_min ** 2) / config.capacitance)


def threshold_voltage(q: float, w_s: float, config: CapacitorConfig) -> float:
    """Tension minimale avant de lancer une tâche atomique de demande q (bornée à v_max)"""
    return min(required_voltage(q, w_s, config), config.v_max)


def harvesting_time(state: CapacitorState, v_target: float, w_s: float) -> float:
    """Temps de récolte pour amener le condensateur de sa tension courante à v_target"""
    config = state.config
    if v_target > config.v_max * (1 + _V_TOL):
        raise EnergyDomainError(v_target, config.v_max)
    v_current = state.voltage
    if v_target <= v_current:
        return 0.0
    if w_s <= 0:
        raise NeverReachesError(v_current, v_target)
    return max(0.0, config.capacitance * (v_target ** 2 - v_current ** 2) / (2.0 * w_s))


def min_capacitor(tasks: Iterable[TaskSpec], config: CapacitorConfig) -> float:
    """Plus petite capacité permettant d'exécuter chaque tâche atomique d'une traite depuis v_max"""
    window = 0.5 * (config.v_max ** 2 - config.v_min ** 2)
    demands = [task.wcet * task.power_draw for task in tasks if task.atomic]
    if not demands:
        return 0.0
    return max(demands) / window


def min_capacitor_best_effort(tasks: Iterable[TaskSpec], config: CapacitorConfig,
                              w_s: float = 0.0) -> float:
    """Capacité permettant à toute tâche de finir dans un seul cycle v_on -> v_off"""
    window = 0.5 * (config.v_on ** 2 - config.v_off ** 2)
    demands = [max(task.power_draw - w_s, 0.0) * task.wcet for task in tasks]
    if not demands:
        return 0.0
    return max(demands) / window


def task_thresholds(taskset: Taskset, w_s: float, config: CapacitorConfig) -> List[TaskThreshold]:
    """Tension seuil de chaque tâche atomique ; servable=False si elle dépasse v_max"""
    rows = []
    for chain in taskset.chains:
        for task in chain.tasks:
            if not task.atomic:
                continue
            q = charging_demand(task.wcet, task.power_draw, w_s)
            uncapped = required_voltage(q, w_s, config)
            servable = uncapped <= config.v_max * (1 + _V_TOL)
            if not servable:
                logger.warning(f"Task {task.id} needs {uncapped:.3f} V, above v_max {config.v_max} V")
            rows.append(TaskThreshold(
                task=task.id,
                chain=chain.name,
                charging_demand_s=q,
                threshold_v=min(uncapped, config.v_max),
                servable=servable,
            ))
    return rows


# ============================================================================
# ESTIMATION DU TAUX DE RECHARGE
# ============================================================================

class ChargeEstimator:
    """Moyenne glissante des taux de récolte observés sur une fenêtre (30 min par défaut)"""

    def __init__(self, window: float = 1800.0, prior: float = 0.0):
        if window <= 0:
            raise ValueError("estimator window must be > 0")
        self.window = window
        self.prior = prior
        self.samples: Deque[Tuple[float, float]] = deque()
        self._total = 0.0

    def observe(self, now: float, rate: float) -> None:
        # Un seul échantillon par instant
        if self.samples and self.samples[-1][0] >= now:
            return
        self.samples.append((now, rate))
        self._total += rate
        self._evict(now)

    def _evict(self, now: float) -> None:
        while self.samples and self.samples[0][0] < now - self.window:
            self._total -= self.samples.popleft()[1]

    def estimate(self, now: float) -> float:
        self._evict(now)
        if not self.samples:
            return self.prior
        return self._total / len(self.samples)


def estimate_rate(estimator: ChargeEstimator, now: float) -> float:
    return estimator.estimate(now)


# ============================================================================
# PROFILS DE RÉCOLTE
# ============================================================================

def load_harvest_trace(path: Union[str, Path]) -> HarvestProfile:
    """Lit un profil de récolte CSV (colonnes time_s,rate_w)"""
    path = Path(path)
    if not path.exists():
        raise TasksetFileError(str(path), "file not found")
    try:
        rows = read_csv(path)
        segments = [HarvestSegment(start=float(row["time_s"]), rate=float(row["rate_w"]))
                    for row in rows]
        return HarvestProfile(mode=HarvestMode.trace, segments=segments)
    except (KeyError, ValueError) as exc:
        raise TasksetFileError(str(path), f"invalid harvest trace: {exc}") from exc


def scale_profile(profile: HarvestProfile, factor: float) -> HarvestProfile:
    if factor < 0:
        raise ValueError("scale factor must be >= 0")
    segments = [HarvestSegment(start=s.start, rate=s.rate * factor) for s in profile.segments]
    return HarvestProfile(mode=profile.mode, segments=segments)


def default_checkpoint_power(tasks: Iterable[TaskSpec], override: Optional[float] = None) -> float:
    """Consommation pendant un checkpoint : la plus forte consommation de tâche par défaut"""
    if override is not None:
        return override
    return max((task.power_draw for task in tasks), default=0.0)


def time_to_harvest(profile: HarvestProfile, start: float, amount: float, draw: float = 0.0) -> float:
    """Durée pour accumuler amount joules à partir de start ; math.inf si jamais atteint"""
    if amount <= 0:
        return 0.0
    remaining = amount
    boundaries = [s.start for s in profile.segments[1:]] + [math.inf]
    for segment, next_start in zip(profile.segments, boundaries):
        if next_start <= start:
            continue
        lo = max(start, segment.start)
        net = segment.rate - draw
        if net > 0:
            span = next_start - lo
            if net * span >= remaining:
                return lo + remaining / net - start
            remaining -= net * span
    return math.inf

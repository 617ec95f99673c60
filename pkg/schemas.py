# schemas.py
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from utils import lcm, ms_to_s, to_ms

# ============================================================================
# ÉNUMÉRATIONS
# ============================================================================


class PolicyKind(str, Enum):
    cartos = "cartos"
    best_effort_jit = "best_effort_jit"
    atomic_restart = "atomic_restart"
    atomic_charge_aware = "atomic_charge_aware"
    event_first = "event_first"


class HarvestMode(str, Enum):
    ideal = "ideal"
    constant = "constant"
    trace = "trace"


class ExperimentKind(str, Enum):
    policy_compare = "policy_compare"
    capacitor_sweep = "capacitor_sweep"
    sched_vs_demand_ratio = "sched_vs_demand_ratio"
    sched_vs_utilization = "sched_vs_utilization"


# ============================================================================
# MODÈLE ÉNERGÉTIQUE
# ============================================================================

class CapacitorConfig(BaseModel):
    model_config = ConfigDict(populate_by_name=True, frozen=True)

    capacitance: float = Field(..., gt=0, alias="capacitance_f", description="Capacité (F)")
    v_min: float = Field(3.0, ge=0, alias="v_min_v", description="Seuil basse tension (JIT)")
    v_off: float = Field(2.9, ge=0, alias="v_off_v", description="Seuil de coupure")
    v_on: float = Field(4.04, gt=0, alias="v_on_v", description="Seuil de mise sous tension")
    v_max: float = Field(5.8, gt=0, alias="v_max_v", description="Tension maximale du récupérateur")

    @model_validator(mode="after")
    def check_threshold_order(self) -> "CapacitorConfig":
        if not (self.v_off <= self.v_min < self.v_on <= self.v_max):
            raise ValueError(
                "thresholds must satisfy v_off <= v_min < v_on <= v_max "
                f"(got {self.v_off}, {self.v_min}, {self.v_on}, {self.v_max})"
            )
        return self


class HarvestSegment(BaseModel):
    model_config = ConfigDict(populate_by_name=True, frozen=True)

    start: float = Field(..., ge=0, alias="start_s")
    rate: float = Field(..., ge=0, alias="rate_w")


class HarvestProfile(BaseModel):
    model_config = ConfigDict(populate_by_name=True, frozen=True)

    mode: HarvestMode = HarvestMode.constant
    segments: List[HarvestSegment] = Field(..., min_length=1)

    @field_validator("segments")
    @classmethod
    def check_segments(cls, segments: List[HarvestSegment]) -> List[HarvestSegment]:
        if segments[0].start != 0:
            raise ValueError("first harvest segment must start at t=0")
        for previous, current in zip(segments, segments[1:]):
            if current.start <= previous.start:
                raise ValueError("harvest segment start times must be strictly increasing")
        return segments

    @classmethod
    def constant(cls, rate_w: float) -> "HarvestProfile":
        return cls(mode=HarvestMode.constant, segments=[HarvestSegment(start=0.0, rate=rate_w)])

    @classmethod
    def ideal(cls, rate_w: float = 1.0) -> "HarvestProfile":
        """Tension maintenue à v_max ; rate_w ne sert qu'à l'estimateur"""
        return cls(mode=HarvestMode.ideal, segments=[HarvestSegment(start=0.0, rate=rate_w)])

    @property
    def is_ideal(self) -> bool:
        return self.mode == HarvestMode.ideal

    def rate_at(self, time_s: float) -> float:
        rate = self.segments[0].rate
        for segment in self.segments:
            if segment.start > time_s:
                break
            rate = segment.rate
        return rate


# ============================================================================
# TÂCHES ET CHAÎNES
# ============================================================================

class TaskSpec(BaseModel):
    model_config = ConfigDict(populate_by_name=True, frozen=True)

    id: str = Field(..., description="Nom de la tâche")
    chain_id: int = Field(0, description="Chaîne d'appartenance (renseigné par la chaîne)")
    index_in_chain: int = Field(0, ge=0, description="Position j dans la chaîne")
    wcet: float = Field(..., gt=0, alias="wcet_s", description="C_i^j (s)")
    power_draw: float = Field(..., ge=0, alias="power_w", description="W_i^j (W)")
    atomic: bool = Field(False, description="Tâche périphérique non préemptible")


class ChainSpec(BaseModel):
    model_config = ConfigDict(populate_by_name=True, frozen=True)

    id: int
    name: str = ""
    tasks: List[TaskSpec] = Field(..., min_length=1)
    period: float = Field(..., gt=0, alias="period_s")
    deadline: Optional[float] = Field(None, gt=0, alias="deadline_s")
    priority: int = 0
    release_offset: float = Field(0.0, ge=0, alias="release_offset_s")

    @model_validator(mode="before")
    @classmethod
    def link_tasks(cls, data: Any) -> Any:
        if not isinstance(data, dict):
            return data
        data = dict(data)
        chain_id = data.get("id")
        tasks = []
        for index, task in enumerate(data.get("tasks") or []):
            if isinstance(task, TaskSpec):
                task = task.model_copy(update={"chain_id": chain_id, "index_in_chain": index})
            elif isinstance(task, dict):
                task = {**task, "chain_id": chain_id, "index_in_chain": index}
            tasks.append(task)
        data["tasks"] = tasks
        if not data.get("name"):
            data["name"] = f"chain{chain_id}"
            if len(tasks) == 1:
                only = tasks[0]
                data["name"] = only.id if isinstance(only, TaskSpec) else only.get("id", data["name"])
        if data.get("deadline") is None and data.get("deadline_s") is None:
            data["deadline"] = data.get("period", data.get("period_s"))
        return data

    @property
    def wcet(self) -> float:
        """C_i : somme des C_i^j"""
        return sum(task.wcet for task in self.tasks)

    @property
    def last_task(self) -> TaskSpec:
        return self.tasks[-1]


class Taskset(BaseModel):
    model_config = ConfigDict(populate_by_name=True, frozen=True)

    name: str = "taskset"
    chains: List[ChainSpec] = Field(default_factory=list)

    @property
    def hyperperiod_ms(self) -> int:
        return lcm(to_ms(chain.period) for chain in self.chains) if self.chains else 0

    @property
    def hyperperiod(self) -> float:
        return ms_to_s(self.hyperperiod_ms)

    def chain(self, chain_id: int) -> ChainSpec:
        for chain in self.chains:
            if chain.id == chain_id:
                return chain
        raise KeyError(chain_id)

    def by_priority(self) -> List[ChainSpec]:
        """Chaînes triées par priorité décroissante"""
        return sorted(self.chains, key=lambda chain: (-chain.priority, chain.id))

    @property
    def tasks(self) -> List[TaskSpec]:
        return [task for chain in self.chains for task in chain.tasks]


class GenConfig(BaseModel):
    model_config = ConfigDict(populate_by_name=True, frozen=True)

    n_tasks_range: Tuple[int, int] = (5, 5)
    utilization_range: Tuple[float, float] = (0.1, 0.9)
    period_range_s: Tuple[int, int] = (1, 60)
    low_demand_range_w: Tuple[float, float] = (1.0, 3.0)
    high_demand_range_w: Tuple[float, float] = (8.0, 10.0)
    low_demand_ratio: float = Field(0.5, ge=0, le=1)
    atomic_probability: float = Field(0.5, ge=0, le=1)
    integer_power: bool = False
    seed: int = 0

    @model_validator(mode="after")
    def check_ranges(self) -> "GenConfig":
        for name in ("n_tasks_range", "utilization_range", "period_range_s",
                     "low_demand_range_w", "high_demand_range_w"):
            low, high = getattr(self, name)
            if low > high:
                raise ValueError(f"{name} is empty ({low} > {high})")
        if self.n_tasks_range[0] < 1:
            raise ValueError("n_tasks_range must start at 1 or more")
        if self.utilization_range[0] <= 0:
            raise ValueError("total utilization must be > 0")
        if self.period_range_s[0] < 1:
            raise ValueError("periods are whole seconds >= 1")
        return self


# ============================================================================
# SIMULATION
# ============================================================================

class SimConfig(BaseModel):
    model_config = ConfigDict(populate_by_name=True, frozen=True)

    tick: float = Field(0.001, gt=0, alias="tick_s")
    horizon: float = Field(..., ge=0, alias="horizon_s")
    capacitor: CapacitorConfig
    harvest: HarvestProfile
    policy: PolicyKind = PolicyKind.cartos
    checkpoint_store_cost: float = Field(0.00257, ge=0, alias="checkpoint_store_cost_s")
    checkpoint_restore_cost: float = Field(0.00013, ge=0, alias="checkpoint_restore_cost_s")
    checkpoint_power: Optional[float] = Field(None, ge=0, alias="checkpoint_power_w")
    scheduler_cost: float = Field(0.0, ge=0, alias="scheduler_cost_s")
    initial_voltage: Optional[float] = Field(None, ge=0, alias="initial_voltage_v")
    estimator_window: float = Field(1800.0, gt=0, alias="estimator_window_s")
    estimator_prior: Optional[float] = Field(None, ge=0, alias="estimator_prior_w")

    @model_validator(mode="after")
    def check_horizon(self) -> "SimConfig":
        ticks = self.horizon / self.tick
        if abs(ticks - round(ticks)) > 1e-6:
            raise ValueError("horizon_s must be a multiple of tick_s")
        if self.initial_voltage is not None and self.initial_voltage > self.capacitor.v_max:
            raise ValueError("initial_voltage_v above v_max_v")
        return self


class ChainMetrics(BaseModel):
    chain: str
    priority: int
    released: int = 0
    completed_by_deadline: int = 0
    completed_late: int = 0
    aborted: int = 0
    max_observed_exec_s: float = 0.0
    max_response_s: float = 0.0

    @property
    def success_ratio(self) -> Optional[float]:
        """None tant qu'aucune instance n'a été libérée"""
        return self.completed_by_deadline / self.released if self.released else None

    @property
    def missed(self) -> int:
        return self.released - self.completed_by_deadline


class SimMetrics(BaseModel):
    policy: PolicyKind
    chains: List[ChainMetrics] = Field(default_factory=list)
    power_cycles: int = 0
    checkpoint_time_total: float = 0.0
    scheduler_time_total: float = 0.0
    total_uptime: float = 0.0
    unservable_tasks: List[str] = Field(default_factory=list)
    admission_violations: int = 0

    def by_chain(self) -> Dict[str, ChainMetrics]:
        return {metrics.chain: metrics for metrics in self.chains}

    @property
    def success_ratio(self) -> Optional[float]:
        released = sum(m.released for m in self.chains)
        done = sum(m.completed_by_deadline for m in self.chains)
        return done / released if released else None


# ============================================================================
# ANALYSE
# ============================================================================

class AnalyzedChain(BaseModel):
    chain_id: int
    chain: str
    blocking: float = Field(..., description="B_i (s)")
    active_period: float = Field(..., description="L_i (s)")
    jobs: int = Field(..., description="K_i")
    wcrt: float = Field(..., description="R_i (s)")
    deadline: float
    schedulable: bool
    converged: bool


class AnalysisReport(BaseModel):
    harvest_rate: float
    schedulable: bool
    utilization: float = Field(..., description="Σ (C_i + Q_i) / T_i avec la convention de l'analyse")
    raw_utilization: float = Field(..., description="Même somme avec Q_i brut (mesure, pas un verdict)")
    chains: List[AnalyzedChain] = Field(default_factory=list)


# ============================================================================
# EXPÉRIENCES
# ============================================================================

class ExperimentSpec(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    kind: ExperimentKind
    name: str = ""
    policies: List[PolicyKind] = Field(default_factory=lambda: list(PolicyKind))
    taskset_file: Optional[Path] = None
    harvest_rates_w: List[Optional[float]] = Field(default_factory=lambda: [None, 0.015, 0.008])
    capacitances_f: List[float] = Field(default_factory=lambda: [0.1])
    horizon_s: float = 480.0
    generator: GenConfig = Field(default_factory=GenConfig)
    low_demand_ratios: List[float] = Field(default_factory=lambda: [i / 10 for i in range(11)])
    utilizations: List[float] = Field(default_factory=lambda: [i / 10 for i in range(1, 10)])
    harvest_rate_w: float = 3.0
    clamp_charging: bool = True
    repetitions: Optional[int] = None
    seed: int = 0
    workers: Optional[int] = None
    output_dir: Optional[Path] = None

    @model_validator(mode="after")
    def check_grid(self) -> "ExperimentSpec":
        if self.repetitions is not None and self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if not self.policies:
            raise ValueError("at least one policy is required")
        grid = {
            ExperimentKind.policy_compare: self.harvest_rates_w,
            ExperimentKind.capacitor_sweep: self.capacitances_f,
            ExperimentKind.sched_vs_demand_ratio: self.low_demand_ratios,
            ExperimentKind.sched_vs_utilization: self.utilizations,
        }[self.kind]
        if not grid:
            raise ValueError(f"{self.kind.value} needs at least one grid point")
        return self


class RunRecord(BaseModel):
    experiment: str
    grid_point: Dict[str, Any]
    policy: str
    seed: int
    chain: Optional[str] = None
    priority: Optional[int] = None
    success_ratio: Optional[float] = None
    schedulability_ratio: Optional[float] = None
    error: Optional[str] = None
    duration_s: float = 0.0


# ============================================================================
# MODÈLES DE REQUÊTE / RÉPONSE HTTP
# ============================================================================

class AnalysisRequest(BaseModel):
    taskset: Taskset
    harvest_rate_w: float = Field(..., gt=0)
    clamp: bool = True


class SimulationRequest(BaseModel):
    taskset: Taskset
    config: SimConfig
    include_trace: bool = False


class TraceEventOut(BaseModel):
    time_s: float
    event: str
    chain: str
    task: str
    voltage_v: float
    detail: str = ""


class SimulationResponse(BaseModel):
    metrics: SimMetrics
    success_ratios: Dict[str, Optional[float]]
    trace: Optional[List[TraceEventOut]] = None


class MinCapacitorRequest(BaseModel):
    taskset: Taskset
    capacitor: Optional[CapacitorConfig] = None
    harvest_rate_w: Optional[float] = Field(None, gt=0)


class MinCapacitorResponse(BaseModel):
    min_capacitance_f: float
    best_effort_capacitance_f: Optional[float] = None


class ThresholdRequest(BaseModel):
    taskset: Taskset
    capacitor: CapacitorConfig
    harvest_rate_w: float = Field(..., gt=0)


class TaskThreshold(BaseModel):
    task: str
    chain: str
    charging_demand_s: float
    threshold_v: float
    servable: bool


class ValidationResponse(BaseModel):
    valid: bool
    violations: List[str]

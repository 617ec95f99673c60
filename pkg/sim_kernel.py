# sim_kernel.py
"""
Simulateur déterministe d'un dispositif alimenté par intermittence.

L'horloge est en microsecondes entières. Le tick d'ordonnancement (1 ms par
défaut) fixe les instants de détection des seuils v_min / v_off ; entre deux
points de décision (libération, fin de tâche, franchissement de seuil,
changement de segment de récolte, réveil, horizon) le moteur avance d'un seul
pas, ce qui équivaut à parcourir les ticks un par un.
"""
import bisect
import logging
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Dict, List, NamedTuple, Optional, Tuple, Union

from energy_model import (CapacitorState, ChargeEstimator, charging_demand, default_checkpoint_power,
                          energy_of_voltage, estimate_rate, harvesting_time, integrate, max_energy,
                          required_voltage, threshold_voltage, time_to_harvest, voltage_of_energy)
from exceptions import ChargingStarvedError, InvalidTasksetError
from schemas import ChainMetrics, ChainSpec, PolicyKind, SimConfig, SimMetrics, TaskSpec, Taskset
from utils import US_PER_S, ceil_to_grid, format_seconds, to_us, us_to_s, write_csv
from validators import SimConfigValidator, TasksetValidator

logger = logging.getLogger(__name__)

_E_TOL = 1e-12


# ============================================================================
# TYPES DU NOYAU
# ============================================================================

class EventKind(str, Enum):
    release = "Release"
    dispatch = "Dispatch"
    preempt = "Preempt"
    complete = "Complete"
    deadline_miss = "DeadlineMiss"
    checkpoint = "Checkpoint"
    restore = "Restore"
    enter_standby = "EnterStandby"
    wake = "Wake"
    power_off = "PowerOff"
    power_on = "PowerOn"
    charge_wait = "ChargeWait"
    abort = "Abort"


class Phase(str, Enum):
    power_off = "PowerOff"
    operation = "Operation"
    standby = "Standby"


class JobState(str, Enum):
    waiting = "Waiting"
    ready = "Ready"
    running = "Running"
    charging_wait = "ChargingWait"
    done = "Done"
    missed = "Missed"
    aborted = "Aborted"


class TraceEvent(NamedTuple):
    time_us: int
    kind: EventKind
    chain: str
    task: str
    voltage: float
    detail: str = ""

    @property
    def time_s(self) -> float:
        return us_to_s(self.time_us)


@dataclass(frozen=True)
class PolicySpec:
    """Paramétrage d'une politique ; les cinq politiques partagent le même moteur"""
    kind: PolicyKind
    all_atomic: bool        # toutes les tâches traitées comme atomiques
    atomic_band: bool       # les tâches atomiques dominent les non atomiques
    charge_check: bool      # admission des tâches atomiques par tension seuil
    checkpointing: bool     # checkpoint JIT des tâches non atomiques
    standby_on_low: bool    # veille calculée à v_min, sinon extinction jusqu'à v_on
    wake_cut: bool          # réveil anticipé à la libération d'une chaîne plus prioritaire
    preempt_atomic: bool    # tâches atomiques préemptibles (best effort)


POLICIES: Dict[PolicyKind, PolicySpec] = {
    PolicyKind.cartos: PolicySpec(PolicyKind.cartos, all_atomic=False, atomic_band=False,
                                  charge_check=True, checkpointing=True, standby_on_low=True,
                                  wake_cut=True, preempt_atomic=False),
    PolicyKind.best_effort_jit: PolicySpec(PolicyKind.best_effort_jit, all_atomic=False,
                                           atomic_band=False, charge_check=False, checkpointing=True,
                                           standby_on_low=False, wake_cut=False, preempt_atomic=True),
    PolicyKind.atomic_restart: PolicySpec(PolicyKind.atomic_restart, all_atomic=True, atomic_band=False,
                                          charge_check=False, checkpointing=False, standby_on_low=False,
                                          wake_cut=False, preempt_atomic=False),
    PolicyKind.atomic_charge_aware: PolicySpec(PolicyKind.atomic_charge_aware, all_atomic=True,
                                               atomic_band=False, charge_check=True, checkpointing=False,
                                               standby_on_low=False, wake_cut=False,
                                               preempt_atomic=False),
    PolicyKind.event_first: PolicySpec(PolicyKind.event_first, all_atomic=False, atomic_band=True,
                                       charge_check=True, checkpointing=True, standby_on_low=True,
                                       wake_cut=True, preempt_atomic=False),
}


@dataclass(eq=False)
class Job:
    chain: "ChainRuntime"
    task: TaskSpec
    release_us: int
    deadline_us: int
    wcet_us: int
    atomic: bool
    executed_us: int = 0
    state: JobState = JobState.ready

    @property
    def remaining_us(self) -> int:
        return self.wcet_us - self.executed_us

    @property
    def key(self) -> Tuple[int, int, int]:
        return (self.chain.spec.id, self.release_us, self.task.index_in_chain)


@dataclass(eq=False)
class ChainRuntime:
    spec: ChainSpec
    metrics: ChainMetrics
    period_us: int
    deadline_us: int
    next_release_us: int
    job: Optional[Job] = None
    instance_release_us: int = 0
    instance_deadline_us: int = 0
    instance_counted: bool = False
    instance_missed: bool = False
    instance_work_us: int = 0
    deferred_release_us: Optional[int] = None


@dataclass
class CheckpointImage:
    """Progression sauvegardée des tâches non atomiques"""
    progress: Dict[Tuple[int, int, int], int]


@dataclass
class SimResult:
    trace: List[TraceEvent]
    metrics: SimMetrics
    initial_energy: float = 0.0
    final_energy: float = 0.0
    harvested: float = 0.0
    consumed: float = 0.0
    clamp_loss: float = 0.0

    def success_ratios(self) -> Dict[str, Optional[float]]:
        return {m.chain: m.success_ratio for m in self.metrics.chains}


# ============================================================================
# MOTEUR
# ============================================================================

class SimulationEngine:
    def __init__(self, taskset: Taskset, cfg: SimConfig, estimator: Optional[ChargeEstimator] = None):
        violations = TasksetValidator.validate(taskset) if taskset.chains else []
        violations += SimConfigValidator.validate_tick_alignment(cfg, taskset)
        if violations:
            raise InvalidTasksetError(violations)

        self.taskset = taskset
        self.cfg = cfg
        self.policy = POLICIES[cfg.policy]
        self.cap = cfg.capacitor
        self.ideal = cfg.harvest.is_ideal

        self.tick_us = to_us(cfg.tick)
        self.horizon_us = to_us(cfg.horizon)
        self.store_us = to_us(cfg.checkpoint_store_cost)
        self.restore_us = to_us(cfg.checkpoint_restore_cost)
        self.ckpt_power = default_checkpoint_power(taskset.tasks, cfg.checkpoint_power)

        self.e_max = max_energy(self.cap)
        self.e_vmin = energy_of_voltage(self.cap, self.cap.v_min)
        self.e_voff = energy_of_voltage(self.cap, self.cap.v_off)
        self.e_von = energy_of_voltage(self.cap, self.cap.v_on)
        if self.ideal:
            self.energy = self.e_max
        else:
            v0 = cfg.initial_voltage if cfg.initial_voltage is not None else self.cap.v_on
            self.energy = energy_of_voltage(self.cap, v0)
        self.initial_energy = self.energy

        prior = cfg.estimator_prior if cfg.estimator_prior is not None else cfg.harvest.rate_at(0.0)
        self.estimator = estimator or ChargeEstimator(window=cfg.estimator_window, prior=prior)
        self.segment_starts_us = [to_us(s.start) for s in cfg.harvest.segments]

        self.chains: List[ChainRuntime] = [
            ChainRuntime(
                spec=chain,
                metrics=ChainMetrics(chain=chain.name, priority=chain.priority),
                period_us=to_us(chain.period),
                deadline_us=to_us(chain.deadline),
                next_release_us=to_us(chain.release_offset),
            )
            for chain in taskset.by_priority()
        ]

        self.phase = Phase.operation
        self.clock = 0
        self.wake_at: Optional[int] = None
        self.running: Optional[Job] = None
        self.committed = False
        self.checkpoint: Optional[CheckpointImage] = None
        self.pending_restore = False
        self.standby_job: Optional[Job] = None

        self.trace: List[TraceEvent] = []
        self.power_cycles = 0
        self.checkpoint_us = 0
        self.scheduler_time = 0.0
        self.uptime_us = 0
        self.admission_violations = 0
        self.unservable: List[str] = []
        self.harvested = 0.0
        self.consumed = 0.0
        self.clamp_loss = 0.0

    # ------------------------------------------------------------------
    # Outils
    # ------------------------------------------------------------------

    @property
    def voltage(self) -> float:
        return voltage_of_energy(self.cap, self.energy)

    def _state(self) -> CapacitorState:
        return CapacitorState(config=self.cap, energy=self.energy)

    def _rate(self) -> float:
        index = bisect.bisect_right(self.segment_starts_us, self.clock) - 1
        return self.cfg.harvest.segments[max(index, 0)].rate

    def _w_est(self) -> float:
        now = us_to_s(self.clock)
        self.estimator.observe(now, self._rate())
        return estimate_rate(self.estimator, now)

    def _emit(self, kind: EventKind, job: Optional[Job] = None, detail: str = "",
              chain: Optional[ChainRuntime] = None, time_us: Optional[int] = None) -> None:
        owner = job.chain if job is not None else chain
        self.trace.append(TraceEvent(
            time_us=self.clock if time_us is None else time_us,
            kind=kind,
            chain=owner.spec.name if owner is not None else "",
            task=job.task.id if job is not None else "",
            voltage=self.voltage,
            detail=detail,
        ))

    def _is_atomic(self, task: TaskSpec) -> bool:
        return self.policy.all_atomic or task.atomic

    def _rank(self, priority: int, atomic: bool) -> Tuple[int, int]:
        return (1 if self.policy.atomic_band and atomic else 0, priority)

    def _job_rank(self, job: Job) -> Tuple[int, int]:
        return self._rank(job.chain.spec.priority, job.atomic)

    def _advance_energy(self, dt_us: int, draw: float) -> None:
        if dt_us <= 0:
            return
        if self.ideal:
            self.energy = self.e_max
            return
        dt = us_to_s(dt_us)
        rate = self._rate()
        raw = self.energy + (rate - draw) * dt
        self.energy = integrate(self._state(), rate - draw, dt).energy
        self.harvested += rate * dt
        self.consumed += draw * dt
        self.clamp_loss += raw - self.energy

    def _spend(self, dt_us: int, draw: float) -> None:
        """Temps d'exécution hors tâche (checkpoint, restauration)"""
        self._advance_energy(dt_us, draw)
        self.clock += dt_us
        self.uptime_us += dt_us

    def _grid_after(self, dt_s: float) -> int:
        """Premier instant du tick strictement postérieur à l'horloge, au plus tôt clock+dt"""
        if math.isinf(dt_s):
            return self.horizon_us
        target = self.clock + max(int(math.ceil(dt_s * US_PER_S - 1e-6)), 1)
        return ceil_to_grid(target, self.tick_us)

    def _next_release(self, outranking: Optional[Job] = None) -> int:
        """Prochaine libération (éventuellement limitée aux chaînes qui dominent outranking)"""
        best = self.horizon_us
        for chain in self.chains:
            if chain.next_release_us <= self.clock:
                continue
            if outranking is not None:
                first = chain.spec.tasks[0]
                if self._rank(chain.spec.priority, self._is_atomic(first)) <= self._job_rank(outranking):
                    continue
            best = min(best, chain.next_release_us)
        return best

    # ------------------------------------------------------------------
    # Libérations et instances de chaîne
    # ------------------------------------------------------------------

    def _new_job(self, chain: ChainRuntime, index: int) -> Job:
        task = chain.spec.tasks[index]
        return Job(chain=chain, task=task, release_us=chain.instance_release_us,
                   deadline_us=chain.instance_deadline_us, wcet_us=to_us(task.wcet),
                   atomic=self._is_atomic(task))

    def chain_release(self, chain: ChainRuntime, release_us: int, deferred: bool = False) -> None:
        """Libère une instance de chaîne ; l'instance précédente non terminée est abandonnée"""
        if not deferred:
            chain.next_release_us += chain.period_us
            if chain.job is not None and chain.job is self.running and self.committed:
                # Tâche non préemptible en cours : la libération attend sa fin
                chain.deferred_release_us = release_us
                self._emit(EventKind.release, chain=chain, time_us=release_us, detail="deferred")
                return
            if chain.job is not None:
                self._close_instance(chain, completed=False, reason="overrun")
            self._emit(EventKind.release, chain=chain, time_us=release_us)
        else:
            chain.deferred_release_us = None

        chain.instance_release_us = release_us
        chain.instance_deadline_us = release_us + chain.deadline_us
        chain.instance_counted = chain.instance_deadline_us <= self.horizon_us
        chain.instance_missed = False
        chain.instance_work_us = 0
        if chain.instance_counted:
            chain.metrics.released += 1
        chain.job = self._new_job(chain, 0)

    def _close_instance(self, chain: ChainRuntime, completed: bool, reason: str = "") -> None:
        job = chain.job
        if job is not None and job is self.running:
            self.running = None
            self.committed = False
        metrics = chain.metrics
        if completed:
            if chain.instance_counted:
                if self.clock <= chain.instance_deadline_us:
                    metrics.completed_by_deadline += 1
                else:
                    metrics.completed_late += 1
                metrics.max_response_s = max(metrics.max_response_s,
                                              us_to_s(self.clock - chain.instance_release_us))
                metrics.max_observed_exec_s = max(metrics.max_observed_exec_s,
                                                  us_to_s(chain.instance_work_us))
        else:
            if job is not None:
                job.state = JobState.aborted
                self._emit(EventKind.abort, job, detail=reason)
            if chain.instance_counted:
                metrics.aborted += 1
        chain.job = None
        if chain.deferred_release_us is not None:
            self.chain_release(chain, chain.deferred_release_us, deferred=True)

    def _complete(self, job: Job) -> None:
        chain = job.chain
        job.state = JobState.done
        self.running = None
        self.committed = False
        last = job.task.index_in_chain == len(chain.spec.tasks) - 1
        detail = "chain complete" if last else ""
        if job.atomic and self.policy.charge_check and not self.ideal and self.energy < self.e_voff:
            self.admission_violations += 1
            detail = (detail + ";admission violated").lstrip(";")
            logger.warning(f"Atomic task {job.task.id} finished below v_off at t={us_to_s(self.clock):.3f}s")
        self._emit(EventKind.complete, job, detail=detail)
        if last:
            self._close_instance(chain, completed=True)
        elif chain.deferred_release_us is not None:
            self._close_instance(chain, completed=False, reason="overrun")
        else:
            # Précédence : la tâche suivante de la chaîne devient prête
            chain.job = self._new_job(chain, job.task.index_in_chain + 1)

    # ------------------------------------------------------------------
    # Checkpoint, veille, extinction
    # ------------------------------------------------------------------

    def _store_checkpoint(self) -> bool:
        draw = self.ckpt_power
        net = (0.0 if self.ideal else self._rate()) - draw
        store_s = us_to_s(self.store_us)
        if not self.ideal and net < 0 and self.energy + net * store_s < self.e_voff:
            # Coupure avant la fin de la sauvegarde
            fail_s = max(self.energy - self.e_voff, 0.0) / -net
            self._spend(min(int(math.ceil(fail_s * US_PER_S)), self.store_us), draw)
            self._power_off("checkpoint failed")
            return False
        self._spend(self.store_us, draw)
        self.checkpoint_us += self.store_us
        self.checkpoint = CheckpointImage(
            progress={chain.job.key: chain.job.executed_us
                      for chain in self.chains if chain.job is not None and not chain.job.atomic},
        )
        self._emit(EventKind.checkpoint, self.running)
        return True

    def _restore(self) -> None:
        self._spend(self.restore_us, self.ckpt_power)
        self.checkpoint_us += self.restore_us
        self._emit(EventKind.restore, detail="restored")

    def _revert_to_checkpoint(self) -> None:
        """Perte de l'état volatil : seule la progression sauvegardée subsiste"""
        saved = self.checkpoint.progress if self.checkpoint is not None else {}
        for chain in self.chains:
            job = chain.job
            if job is None:
                continue
            job.executed_us = 0 if job.atomic else saved.get(job.key, 0)
            job.state = JobState.ready

    def _suspend_running(self, emit_preempt: bool) -> None:
        if self.running is not None:
            if emit_preempt:
                self._emit(EventKind.preempt, self.running)
            self.running.state = JobState.ready
        self.running = None
        self.committed = False

    def _enter_standby(self, wake_at: int, job: Optional[Job], dt: float, restore: bool) -> None:
        self._suspend_running(emit_preempt=False)
        wake_at = max(wake_at, self.clock + 1)
        self.phase = Phase.standby
        self.wake_at = wake_at
        self.pending_restore = restore
        self.standby_job = job
        self.power_cycles += 1
        self._emit(EventKind.enter_standby, job,
                   detail=f"wake_at={us_to_s(wake_at):.6f};dt={dt:.6f}")
        logger.debug(f"Standby at {us_to_s(self.clock):.3f}s until {us_to_s(wake_at):.3f}s")

    def _power_off(self, reason: str) -> None:
        self._suspend_running(emit_preempt=False)
        self._revert_to_checkpoint()
        self.phase = Phase.power_off
        self.power_cycles += 1
        needed = self.e_von - self.energy
        delay = time_to_harvest(self.cfg.harvest, us_to_s(self.clock), needed) if needed > 0 else 0.0
        self.wake_at = max(self._grid_after(delay), self.clock + 1)
        self.pending_restore = self.policy.checkpointing and self.checkpoint is not None
        self._emit(EventKind.power_off, detail=reason)

    def _wake(self) -> None:
        was_off = self.phase == Phase.power_off
        self.phase = Phase.operation
        self.wake_at = None
        self.standby_job = None
        self._emit(EventKind.power_on if was_off else EventKind.wake)
        if self.pending_restore:
            self.pending_restore = False
            self._restore()

    def _charge_delay(self, job: Job, w_s: float) -> float:
        """Veille nécessaire pour finir job depuis l'état courant ; infinie sans récolte"""
        if w_s <= 0:
            return math.inf
        return jit_wake_delay(self._state(), us_to_s(job.remaining_us), job.task.power_draw, w_s,
                              self._restore_energy(w_s))

    def _wake_time(self, dt: float, job: Job) -> int:
        # Sans récolte, réévaluation au prochain changement de segment
        wake = self._next_segment() if math.isinf(dt) else self._grid_after(dt)
        if self.policy.wake_cut:
            wake = min(wake, self._next_release(outranking=job))
        return min(wake, self.horizon_us) if self.horizon_us > self.clock else wake

    def _restore_energy(self, w_s: float) -> float:
        if not self.policy.checkpointing:
            return 0.0
        return max(self.ckpt_power - w_s, 0.0) * us_to_s(self.restore_us)

    # ------------------------------------------------------------------
    # Décisions
    # ------------------------------------------------------------------

    def _low_voltage(self, job: Job, threshold: float) -> bool:
        if self.ideal or self.energy > threshold + _E_TOL:
            return False
        return self._rate() - job.task.power_draw < 0

    def _starving(self, job: Job) -> bool:
        """Tâche atomique dont la tension seuil dépasse v_max : jamais admise"""
        if self.ideal or not (job.atomic and self.policy.charge_check):
            return False
        w_s = self._w_est()
        if w_s <= 0:
            return False
        q = charging_demand(us_to_s(job.wcet_us), job.task.power_draw, w_s)
        uncapped = required_voltage(q, w_s, self.cap)
        if uncapped <= self.cap.v_max * (1 + 1e-9):
            return False
        if job.task.id not in self.unservable:
            self.unservable.append(job.task.id)
            logger.warning(f"Unservable task {job.task.id}: needs {uncapped:.3f} V > v_max")
        return True

    def _admissible(self, job: Job) -> bool:
        if self.ideal:
            return True
        w_s = self._w_est()
        if w_s <= 0:
            return False
        q = charging_demand(us_to_s(job.remaining_us), job.task.power_draw, w_s)
        return self.voltage >= threshold_voltage(q, w_s, self.cap) - 1e-9

    def _dispatch(self, job: Job, commit: bool) -> None:
        if self.running is job:
            return
        self._suspend_running(emit_preempt=True)
        self.running = job
        self.committed = commit
        job.state = JobState.running
        self._emit(EventKind.dispatch, job)
        if self.cfg.scheduler_cost > 0:
            self.scheduler_time += self.cfg.scheduler_cost
            if not self.ideal:
                spent = job.task.power_draw * self.cfg.scheduler_cost
                self.consumed += spent
                self.energy = max(self.energy - spent, 0.0)

    def _charge_wait(self, job: Job) -> None:
        """Tension insuffisante pour une tâche atomique : veille proactive"""
        self._emit(EventKind.charge_wait, job)
        job.state = JobState.charging_wait
        if self.running is not None and self.running is not job:
            self._suspend_running(emit_preempt=True)
        if self.policy.checkpointing and not self._store_checkpoint():
            return
        w_s = self._w_est()
        dt = self._charge_delay(job, w_s)
        self._enter_standby(self._wake_time(dt, job), job, dt, restore=self.policy.checkpointing)

    def _idle(self) -> None:
        self._suspend_running(emit_preempt=False)
        if self.ideal or not self.policy.standby_on_low or self.energy > self.e_vmin + _E_TOL:
            return
        wake = self._next_release()
        if wake > self.clock:
            self._enter_standby(wake, None, us_to_s(wake - self.clock), restore=False)

    def jit_service(self, job: Optional[Job]) -> None:
        """Réaction au seuil basse tension pour une tâche non atomique"""
        if job is None:
            self._idle()
            return
        assert not job.atomic or self.policy.preempt_atomic, "atomic job reached the JIT service"
        if not self.policy.standby_on_low:
            self._power_failure(checkpoint=True)
            return
        if self.running is not None and self.running is not job:
            self._suspend_running(emit_preempt=True)
        if not self._store_checkpoint():
            return
        w_s = self._w_est()
        dt = self._charge_delay(job, w_s)
        self._enter_standby(self._wake_time(dt, job), job, dt, restore=True)

    def _power_failure(self, checkpoint: bool) -> None:
        """Extinction des politiques best effort : sauvegarde éventuelle puis attente de v_on"""
        if self.running is not None and self.running.atomic:
            self.running.executed_us = 0
        if checkpoint and self.policy.checkpointing and not self._store_checkpoint():
            return
        self._power_off("low voltage")

    def _admission_violated(self, job: Job) -> None:
        self.admission_violations += 1
        logger.warning(f"Admission violated for {job.task.id} at t={us_to_s(self.clock):.3f}s")
        self._close_instance(job.chain, completed=False, reason="admission violated")
        self._power_off("energy depleted")

    def cartos_step(self, job: Optional[Job]) -> None:
        """Décision CARTOS (et EventFirst, qui ne diffère que par l'ordre des tâches)"""
        if job is None:
            self._idle()
            return
        if job.atomic:
            if self._admissible(job):
                self._dispatch(job, commit=True)
            else:
                self._charge_wait(job)
            return
        if self._low_voltage(job, self.e_vmin):
            self.jit_service(job)
        else:
            self._dispatch(job, commit=False)

    def baseline_step(self, job: Optional[Job]) -> None:
        kind = self.policy.kind
        if job is None:
            self._idle()
            return
        if kind == PolicyKind.best_effort_jit:
            if self._low_voltage(job, self.e_vmin):
                self._power_failure(checkpoint=True)
            else:
                self._dispatch(job, commit=False)
        elif kind == PolicyKind.atomic_restart:
            if self._low_voltage(job, self.e_voff):
                self._power_failure(checkpoint=False)
            else:
                self._dispatch(job, commit=True)
        elif kind == PolicyKind.atomic_charge_aware:
            if self._admissible(job):
                self._dispatch(job, commit=True)
            else:
                self._charge_wait(job)
        else:
            raise ValueError(f"{kind} is not a baseline policy")

    def _decide(self) -> None:
        if self.running is not None and self.committed:
            return
        candidates = sorted((chain.job for chain in self.chains if chain.job is not None),
                            key=self._job_rank, reverse=True)
        chosen = next((job for job in candidates if not self._starving(job)), None)
        if self.policy.kind in (PolicyKind.cartos, PolicyKind.event_first):
            self.cartos_step(chosen)
        else:
            self.baseline_step(chosen)

    # ------------------------------------------------------------------
    # Boucle principale
    # ------------------------------------------------------------------

    def _crossing(self) -> Optional[Tuple[int, str]]:
        """Instant de détection du prochain franchissement de seuil par la tâche en cours"""
        job = self.running
        if job is None or self.ideal or self.phase != Phase.operation:
            return None
        net = self._rate() - job.task.power_draw
        if job.atomic and self.policy.charge_check:
            threshold, on_tick, action = 0.0, False, "depleted"
        elif self.policy.kind == PolicyKind.atomic_restart:
            threshold, on_tick, action = self.e_voff, True, "v_off"
        else:
            threshold, on_tick, action = self.e_vmin, True, "v_min"
        if net >= 0:
            return None
        if self.energy <= threshold + _E_TOL:
            return self.clock, action
        t_cross = self.clock + max(int(math.ceil((self.energy - threshold) / -net * US_PER_S)), 1)
        if on_tick:
            t_cross = ceil_to_grid(t_cross, self.tick_us)
        return t_cross, action

    def _next_deadline(self) -> int:
        best = self.horizon_us
        for chain in self.chains:
            if chain.job is not None and not chain.instance_missed and chain.instance_deadline_us > self.clock:
                best = min(best, chain.instance_deadline_us)
        return best

    def _next_segment(self) -> int:
        index = bisect.bisect_right(self.segment_starts_us, self.clock)
        return self.segment_starts_us[index] if index < len(self.segment_starts_us) else self.horizon_us

    def _advance(self) -> None:
        pending_release = min((c.next_release_us for c in self.chains), default=self.horizon_us)
        t_next = min(self.horizon_us, self._next_deadline(), self._next_segment(),
                     max(pending_release, self.clock))
        if self.phase != Phase.operation and self.wake_at is not None:
            t_next = min(t_next, self.wake_at)
        crossing = self._crossing()
        job = self.running if self.phase == Phase.operation else None
        if job is not None:
            t_next = min(t_next, self.clock + job.remaining_us)
        if crossing is not None:
            t_next = min(t_next, crossing[0])
        t_next = max(t_next, self.clock)

        dt = t_next - self.clock
        self._advance_energy(dt, job.task.power_draw if job is not None else 0.0)
        if self.phase == Phase.operation:
            self.uptime_us += dt
        if job is not None:
            job.executed_us += dt
            job.chain.instance_work_us += dt
        self.clock = t_next

        if job is not None and job.remaining_us <= 0:
            self._complete(job)
        elif crossing is not None and crossing[0] == t_next and job is not None:
            action = crossing[1]
            if action == "depleted":
                self._admission_violated(job)
            elif action == "v_off":
                self._power_failure(checkpoint=False)
            elif self.policy.standby_on_low:
                self.jit_service(job)
            else:
                self._power_failure(checkpoint=True)

    def _interrupts_standby(self, chain: ChainRuntime) -> bool:
        """Libération tardive (après un checkpoint) d'une chaîne qui domine la tâche en attente"""
        if self.phase != Phase.standby or not self.policy.wake_cut or self.standby_job is None:
            return False
        first = chain.spec.tasks[0]
        return self._rank(chain.spec.priority, self._is_atomic(first)) > self._job_rank(self.standby_job)

    def _process_instant(self, at_horizon: bool) -> None:
        if self.phase != Phase.operation and self.wake_at is not None and self.wake_at <= self.clock:
            self._wake()
        # Échéances puis libérations, dans l'ordre chronologique
        pending = []
        for chain in self.chains:
            if chain.job is not None and not chain.instance_missed \
                    and chain.instance_deadline_us <= min(self.clock, self.horizon_us):
                pending.append((chain.instance_deadline_us, 0, chain))
            if not at_horizon and chain.next_release_us <= self.clock and chain.next_release_us < self.horizon_us:
                pending.append((chain.next_release_us, 1, chain))
        pending.sort(key=lambda item: (item[0], item[1], -item[2].spec.priority))
        for time_us, kind, chain in pending:
            if kind == 0:
                if chain.job is not None and not chain.instance_missed:
                    chain.instance_missed = True
                    self._emit(EventKind.deadline_miss, chain.job, time_us=time_us)
            else:
                while chain.next_release_us <= self.clock and chain.next_release_us < self.horizon_us:
                    self.chain_release(chain, chain.next_release_us)
                if self._interrupts_standby(chain):
                    self._wake()
        if not at_horizon and self.phase == Phase.operation:
            self._decide()

    def run(self) -> SimResult:
        logger.info(f"Simulation {self.policy.kind.value}: {len(self.chains)} chains, "
                    f"horizon {self.cfg.horizon}s, harvest {self.cfg.harvest.mode.value}")
        guard = 0
        while True:
            self._process_instant(at_horizon=self.clock >= self.horizon_us)
            if self.clock >= self.horizon_us:
                break
            before = (self.clock, self.phase, self.running)
            self._advance()
            guard = guard + 1 if (self.clock, self.phase, self.running) == before else 0
            if guard > 1000:
                raise RuntimeError(f"simulation stalled at t={us_to_s(self.clock)}s")

        self.trace.sort(key=lambda event: event.time_us)
        metrics = SimMetrics(
            policy=self.policy.kind,
            chains=[chain.metrics for chain in self.chains],
            power_cycles=self.power_cycles,
            checkpoint_time_total=us_to_s(self.checkpoint_us),
            scheduler_time_total=self.scheduler_time,
            total_uptime=us_to_s(self.uptime_us),
            unservable_tasks=list(self.unservable),
            admission_violations=self.admission_violations,
        )
        logger.info(f"Simulation done: {len(self.trace)} events, {self.power_cycles} power cycles, "
                    f"success {_ratio(metrics.success_ratio, '.3f') or 'n/a (no releases)'}")
        return SimResult(trace=self.trace, metrics=metrics, initial_energy=self.initial_energy,
                         final_energy=self.energy, harvested=self.harvested, consumed=self.consumed,
                         clamp_loss=self.clamp_loss)


def run(taskset: Taskset, cfg: SimConfig, estimator: Optional[ChargeEstimator] = None) -> SimResult:
    return SimulationEngine(taskset, cfg, estimator).run()


def jit_wake_delay(state: CapacitorState, remaining: float, w_task: float, w_s: float,
                   restore_energy: float = 0.0) -> float:
    """Durée de veille pour terminer remaining secondes d'une tâche non atomique depuis state"""
    if w_s <= 0:
        raise ChargingStarvedError("standby wake delay")
    extra = max(w_task - w_s, 0.0) * remaining + restore_energy
    v_target = threshold_voltage(extra / w_s, w_s, state.config)
    return harvesting_time(state, v_target, w_s)


# ============================================================================
# SORTIES CSV
# ============================================================================

def _ratio(value: Optional[float], spec: str = ".4f") -> str:
    """Taux de succès ; cellule vide si aucune instance libérée"""
    return "" if value is None else format(value, spec)


TRACE_HEADER = ["time_s", "event", "chain", "task", "voltage_v", "detail"]
METRICS_HEADER = ["chain", "priority", "released", "completed_by_deadline", "completed_late", "aborted",
                  "success_ratio", "max_observed_exec_s", "max_response_s",
                  "power_cycles", "checkpoint_time_s", "scheduler_time_s", "total_uptime_s"]


def write_trace_csv(trace: List[TraceEvent], path: Union[str, Path]) -> Path:
    rows = ([format_seconds(e.time_s), e.kind.value, e.chain, e.task, f"{e.voltage:.4f}", e.detail]
            for e in trace)
    return write_csv(path, TRACE_HEADER, rows)


def write_metrics_csv(metrics: SimMetrics, path: Union[str, Path]) -> Path:
    rows = [
        [m.chain, m.priority, m.released, m.completed_by_deadline, m.completed_late, m.aborted,
         _ratio(m.success_ratio), f"{m.max_observed_exec_s:.3f}", f"{m.max_response_s:.3f}",
         "", "", "", ""]
        for m in metrics.chains
    ]
    released = sum(m.released for m in metrics.chains)
    rows.append([
        "summary", "", released, sum(m.completed_by_deadline for m in metrics.chains),
        sum(m.completed_late for m in metrics.chains), sum(m.aborted for m in metrics.chains),
        _ratio(metrics.success_ratio), "", "",
        metrics.power_cycles, f"{metrics.checkpoint_time_total:.6f}",
        f"{metrics.scheduler_time_total:.6f}", f"{metrics.total_uptime:.3f}",
    ])
    return write_csv(path, METRICS_HEADER, rows)

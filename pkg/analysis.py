# analysis.py
"""
Analyse du pire temps de réponse de chaînes à préemption mixte avec demande
de recharge.

Tous les calculs se font en millisecondes entières : C et Q sont arrondis au
ms supérieur, ce qui rend les plafonds / planchers des points fixes exacts.
"""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, List, Optional, Tuple, Union

from config import settings
from energy_model import charging_demand
from schemas import AnalysisReport, AnalyzedChain, ChainSpec, Taskset
from utils import ceil_ms, ms_to_s, to_ms, write_csv
from workload import chain_aggregates, force_atomic

logger = logging.getLogger(__name__)


# ============================================================================
# CONTEXTE
# ============================================================================

@dataclass(frozen=True)
class ChainTerms:
    """Grandeurs d'une chaîne quantifiées en ms"""
    spec: ChainSpec
    c: int              # C_i
    q: int              # Q_i
    t: int              # T_i
    d: int              # D_i
    prefix: int         # Σ_{p<m} C_i^p
    last: int           # C_i^{m_i}
    last_atomic: bool
    atomic_max: int     # plus grande tâche atomique de la chaîne (0 si aucune)

    @property
    def priority(self) -> int:
        return self.spec.priority


@dataclass(frozen=True)
class AnalysisContext:
    taskset: Taskset
    w_s: float
    clamp: bool
    chains: Tuple[ChainTerms, ...]
    hyperperiod: int
    max_iterations: int

    def terms(self, chain_id: int) -> ChainTerms:
        for terms in self.chains:
            if terms.spec.id == chain_id:
                return terms
        raise KeyError(chain_id)

    def higher(self, chain: ChainTerms) -> List[ChainTerms]:
        return [other for other in self.chains if other.priority > chain.priority]

    def lower(self, chain: ChainTerms) -> List[ChainTerms]:
        return [other for other in self.chains if other.priority < chain.priority]


def _chain_terms(chain: ChainSpec, w_s: float, clamp: bool) -> ChainTerms:
    demands = [ceil_ms(charging_demand(task.wcet, task.power_draw, w_s)) for task in chain.tasks]
    if clamp:
        demands = [max(q, 0) for q in demands]
    wcets = [ceil_ms(task.wcet) for task in chain.tasks]
    return ChainTerms(
        spec=chain,
        c=sum(wcets),
        q=sum(demands),
        t=to_ms(chain.period),
        d=to_ms(chain.deadline),
        prefix=sum(wcets[:-1]),
        last=wcets[-1],
        last_atomic=chain.tasks[-1].atomic,
        atomic_max=max((c for c, task in zip(wcets, chain.tasks) if task.atomic), default=0),
    )


def build_context(taskset: Taskset, w_s: float, clamp: bool = True,
                  max_iterations: Optional[int] = None) -> AnalysisContext:
    """Contexte d'analyse ; clamp=True ramène chaque Q_i^j négatif à 0"""
    return AnalysisContext(
        taskset=taskset,
        w_s=w_s,
        clamp=clamp,
        chains=tuple(_chain_terms(chain, w_s, clamp) for chain in taskset.chains),
        hyperperiod=taskset.hyperperiod_ms,
        max_iterations=max_iterations or settings.analysis_max_iterations,
    )


def _ceil_div(a: int, b: int) -> int:
    return -(-a // b)


def _fixed_point(step: Callable[[int], int], seed: int, bound: int, max_iterations: int) -> Tuple[int, bool]:
    """Itère x = step(x) ; échec si l'itéré atteint bound ou si le plafond d'itérations est dépassé"""
    x = seed
    for _ in range(max_iterations):
        nxt = step(x)
        if nxt == x:
            return x, True
        if nxt >= bound:
            return nxt, False
        x = nxt
    logger.warning(f"Fixed point not reached after {max_iterations} iterations")
    return x, False


# ============================================================================
# OPÉRATIONS
# ============================================================================

def _blocking_ms(ctx: AnalysisContext, chain: ChainTerms) -> int:
    return max((other.atomic_max for other in ctx.lower(chain)), default=0)


def blocking(ctx: AnalysisContext, chain_id: int) -> float:
    """B_i : plus longue tâche atomique d'une chaîne moins prioritaire"""
    return ms_to_s(_blocking_ms(ctx, ctx.terms(chain_id)))


def _active_period_ms(ctx: AnalysisContext, chain: ChainTerms) -> Tuple[int, bool]:
    b = _blocking_ms(ctx, chain)
    level = [other for other in ctx.chains if other.priority >= chain.priority]

    def step(length: int) -> int:
        return b + sum(_ceil_div(length, h.t) * (h.c + h.q) for h in level)

    return _fixed_point(step, b + chain.c, ctx.hyperperiod, ctx.max_iterations)


def active_period(ctx: AnalysisContext, chain_id: int) -> Tuple[float, bool]:
    """(L_i, convergé) : période active de niveau i"""
    length, converged = _active_period_ms(ctx, ctx.terms(chain_id))
    return ms_to_s(length), converged


def _start_ms(ctx: AnalysisContext, chain: ChainTerms, k: int) -> Tuple[int, bool]:
    b = _blocking_ms(ctx, chain)
    hp = ctx.higher(chain)
    base = b + (k - 1) * chain.c + chain.prefix

    def step(start: int) -> int:
        released = [(start // h.t + 1, h) for h in hp]
        # Le surplus de récolte ne fait jamais démarrer plus tôt
        nu = max(k * chain.q + sum(n * h.q for n, h in released), 0)
        return base + sum(n * h.c for n, h in released) + nu

    seed = (k - 1) * chain.t + b + chain.prefix
    return _fixed_point(step, seed, ctx.hyperperiod + k * chain.t, ctx.max_iterations)


def start_time(ctx: AnalysisContext, chain_id: int, k: int) -> Tuple[float, bool]:
    """(S_{i,k}, convergé) : dernier instant de démarrage de la dernière tâche du k-ième job"""
    start, converged = _start_ms(ctx, ctx.terms(chain_id), k)
    return ms_to_s(start), converged


def _finish_ms(ctx: AnalysisContext, chain: ChainTerms, start: int, k: int) -> Tuple[int, bool]:
    if chain.last_atomic:
        return start + chain.last, True
    hp = ctx.higher(chain)

    def step(finish: int) -> int:
        return start + chain.last + sum(
            (_ceil_div(finish, h.t) - (start // h.t + 1)) * (h.c + h.q) for h in hp
        )

    return _fixed_point(step, start + chain.last, ctx.hyperperiod + k * chain.t, ctx.max_iterations)


def finish_time(ctx: AnalysisContext, chain_id: int, k: int,
                start: Optional[float] = None) -> Tuple[float, bool]:
    """(F_{i,k}, convergé) ; start remplace S_{i,k} s'il est fourni"""
    chain = ctx.terms(chain_id)
    converged = True
    if start is None:
        start_ms, converged = _start_ms(ctx, chain, k)
    else:
        start_ms = to_ms(start)
    finish, finished = _finish_ms(ctx, chain, start_ms, k)
    return ms_to_s(finish), converged and finished


def wcrt(ctx: AnalysisContext, chain_id: int) -> AnalyzedChain:
    """R_i = max_k (F_{i,k} − (k−1)·T_i)"""
    chain = ctx.terms(chain_id)
    b = _blocking_ms(ctx, chain)
    length, converged = _active_period_ms(ctx, chain)
    jobs = max(_ceil_div(length, chain.t), 1)
    response = length
    if converged:
        response = 0
        for k in range(1, jobs + 1):
            start, ok_start = _start_ms(ctx, chain, k)
            finish, ok_finish = _finish_ms(ctx, chain, start, k) if ok_start else (start, False)
            if not (ok_start and ok_finish):
                converged = False
                response = max(response, finish - (k - 1) * chain.t)
                break
            response = max(response, finish - (k - 1) * chain.t)
    if not converged:
        logger.warning(f"Chain {chain.spec.name}: no fixed point within the hyperperiod")
    return AnalyzedChain(
        chain_id=chain.spec.id,
        chain=chain.spec.name,
        blocking=ms_to_s(b),
        active_period=ms_to_s(length),
        jobs=jobs,
        wcrt=ms_to_s(response),
        deadline=ms_to_s(chain.d),
        schedulable=converged and response <= chain.d,
        converged=converged,
    )


def charging_utilization(taskset: Taskset, w_s: float, clamp: bool = False) -> float:
    """Σ (C_i + Q_i) / T_i ; Q_i brut par défaut, borné à 0 par tâche si clamp"""
    total = 0.0
    for chain in taskset.chains:
        c_total, q_total = chain_aggregates(chain, w_s, clamp=clamp)
        total += (c_total + q_total) / chain.period
    return total


def taskset_schedulable(ctx: AnalysisContext) -> AnalysisReport:
    chains = [wcrt(ctx, terms.spec.id) for terms in sorted(ctx.chains, key=lambda t: -t.priority)]
    return AnalysisReport(
        harvest_rate=ctx.w_s,
        schedulable=all(chain.schedulable for chain in chains),
        utilization=charging_utilization(ctx.taskset, ctx.w_s, clamp=ctx.clamp),
        raw_utilization=charging_utilization(ctx.taskset, ctx.w_s, clamp=False),
        chains=chains,
    )


def analyze(taskset: Taskset, w_s: float, clamp: bool = True) -> AnalysisReport:
    report = taskset_schedulable(build_context(taskset, w_s, clamp=clamp))
    logger.debug(f"Analysis of {taskset.name} at {w_s} W: schedulable={report.schedulable}")
    return report


def analyze_all_atomic(taskset: Taskset, w_s: float, clamp: bool = True) -> AnalysisReport:
    """Même analyse, toutes les tâches forcées atomiques"""
    return analyze(force_atomic(taskset), w_s, clamp=clamp)


def _chain_schedulable(ctx: AnalysisContext, chain: ChainTerms) -> bool:
    length, converged = _active_period_ms(ctx, chain)
    if not converged:
        return False
    for k in range(1, max(_ceil_div(length, chain.t), 1) + 1):
        start, ok = _start_ms(ctx, chain, k)
        if not ok:
            return False
        finish, ok = _finish_ms(ctx, chain, start, k)
        if not ok or finish - (k - 1) * chain.t > chain.d:
            return False
    return True


def is_schedulable(taskset: Taskset, w_s: float, clamp: bool = True) -> bool:
    """Même verdict que analyze(), arrêt à la première chaîne en échec (balayages)"""
    ctx = build_context(taskset, w_s, clamp=clamp)
    if sum((t.c + t.q) / t.t for t in ctx.chains) > 1.0 + 1e-9:
        return False
    return all(_chain_schedulable(ctx, terms) for terms in sorted(ctx.chains, key=lambda t: -t.priority))


# ============================================================================
# RAPPORT CSV
# ============================================================================

ANALYSIS_HEADER = ["chain", "B_s", "L_s", "K", "R_s", "D_s", "schedulable", "converged"]


def write_analysis_csv(report: AnalysisReport, path: Union[str, Path]) -> Path:
    rows = [
        [c.chain, f"{c.blocking:.3f}", f"{c.active_period:.3f}", c.jobs, f"{c.wcrt:.3f}",
         f"{c.deadline:.3f}", str(c.schedulable).lower(), str(c.converged).lower()]
        for c in report.chains
    ]
    return write_csv(path, ANALYSIS_HEADER, rows)

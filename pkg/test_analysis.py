# test_analysis.py
from typing import List, NamedTuple

import pytest

from analysis import (active_period, analyze, analyze_all_atomic, blocking, build_context,
                      charging_utilization, finish_time, is_schedulable, start_time, wcrt,
                      write_analysis_csv)
from conftest import single_chain
from schemas import GenConfig, Taskset
from utils import read_csv
from workload import generate_tasksets

# Avec W_s = 1 W, une tâche de consommation W = 1 + Q/C a une demande de recharge Q
W_S = 1.0


def chain(chain_id: int, wcet: float, period: float, demand: float = 0.0, atomic: bool = False,
          priority: int = 1):
    return single_chain(chain_id, wcet, period, power=W_S * (1 + demand / wcet), atomic=atomic,
                        priority=priority)


# ============================================================================
# ORACLE PAR SIMULATION MILLISECONDE
# ============================================================================

class OracleChain(NamedTuple):
    c: int
    q: int
    t: int
    atomic: bool
    priority: int


def brute_force_response(chains: List[OracleChain], target: int, blocking_ms: int) -> int:
    """
    Instant critique simulé ms par ms : une tâche atomique moins prioritaire
    occupe le processeur pendant blocking_ms, toutes les chaînes sont libérées
    à 0. La recharge d'un job (q) s'exécute avant son calcul (c). Retourne le
    temps de réponse du premier job de la chaîne target.
    """
    remaining = [[0, 0] for _ in chains]   # [recharge, exécution]
    released_at = [0] * len(chains)
    running = None
    blocked = blocking_ms
    t = 0
    while True:
        for index, oracle in enumerate(chains):
            if t % oracle.t == 0:
                remaining[index] = [oracle.q, oracle.c]
                released_at[index] = t
        if blocked > 0:
            blocked -= 1
        else:
            if running is None or remaining[running][1] == 0 or not chains[running].atomic \
                    or remaining[running][1] == chains[running].c:
                ready = [i for i, work in enumerate(remaining) if work[0] > 0 or work[1] > 0]
                running = max(ready, key=lambda i: chains[i].priority) if ready else None
            if running is not None:
                work = remaining[running]
                if work[0] > 0:
                    work[0] -= 1
                else:
                    work[1] -= 1
                if work == [0, 0] and running == target:
                    return t + 1 - released_at[target]
                if work == [0, 0]:
                    running = None
        t += 1


def analysed_response(taskset: Taskset, chain_id: int) -> float:
    return wcrt(build_context(taskset, W_S, clamp=True), chain_id).wcrt


# ============================================================================
# EXEMPLES CALCULÉS À LA MAIN
# ============================================================================

def test_single_chain_with_charging():
    """C=1, Q=2, T=10 : L=3, S=2, R=3"""
    taskset = Taskset(chains=[chain(1, 1.0, 10.0, demand=2.0)])
    ctx = build_context(taskset, W_S)
    assert active_period(ctx, 1) == (pytest.approx(3.0), True)
    assert start_time(ctx, 1, 1) == (pytest.approx(2.0), True)
    result = wcrt(ctx, 1)
    assert result.wcrt == pytest.approx(3.0)
    assert result.schedulable


def test_blocking_by_lower_atomic_task():
    """H{C=1, Q=0, T=10} bloquée par une tâche atomique de 5 s : B=5, L=6, S=5, F=6, R=6"""
    taskset = Taskset(chains=[chain(1, 1.0, 10.0, priority=2),
                              chain(2, 5.0, 20.0, atomic=True, priority=1)])
    ctx = build_context(taskset, W_S)
    assert blocking(ctx, 1) == pytest.approx(5.0)
    assert active_period(ctx, 1) == (pytest.approx(6.0), True)
    assert start_time(ctx, 1, 1) == (pytest.approx(5.0), True)
    assert finish_time(ctx, 1, 1) == (pytest.approx(6.0), True)
    assert wcrt(ctx, 1).wcrt == pytest.approx(6.0)


def test_divergence_past_hyperperiod():
    """C=6, Q=6, T=10 : la période active dépasse l'hyperpériode"""
    taskset = Taskset(chains=[chain(1, 6.0, 10.0, demand=6.0)])
    ctx = build_context(taskset, W_S)
    assert active_period(ctx, 1)[1] is False
    result = wcrt(ctx, 1)
    assert result.converged is False
    assert result.schedulable is False


def test_atomic_finish_time():
    """Tâche atomique : F = S + C"""
    taskset = Taskset(chains=[chain(1, 1.0, 10.0, atomic=True)])
    assert finish_time(build_context(taskset, W_S), 1, 1, start=2.0) == (pytest.approx(3.0), True)


def test_non_atomic_finish_time_without_new_release():
    """Aucune libération plus prioritaire dans ]S, F] : F = S + C"""
    taskset = Taskset(chains=[chain(1, 1.0, 10.0, priority=1), chain(2, 1.0, 2.0, priority=2)])
    assert finish_time(build_context(taskset, W_S), 1, 1, start=0.0) == (pytest.approx(1.0), True)


def test_preemption_point_changes_response():
    """Même chaîne en version préemptible (R=5) et atomique (R=4)"""
    for atomic, expected in ((False, 5.0), (True, 4.0)):
        taskset = Taskset(chains=[chain(1, 1.0, 3.0, priority=2),
                                  chain(2, 3.0, 10.0, atomic=atomic, priority=1)])
        assert analysed_response(taskset, 2) == pytest.approx(expected)


# ============================================================================
# ÉQUIVALENCE AVEC L'ORACLE
# ============================================================================

ORACLE_CASES = [
    # (chaînes en secondes (C, T, Q, atomique, π), cible)
    ([(1.0, 10.0, 2.0, False, 1)], 1),
    ([(1.0, 10.0, 0.0, False, 2), (5.0, 20.0, 0.0, True, 1)], 1),
    ([(1.0, 4.0, 1.0, False, 2), (2.0, 10.0, 0.0, False, 1)], 2),
    ([(1.0, 3.0, 0.0, False, 2), (2.0, 10.0, 0.0, True, 1)], 2),
    ([(1.0, 3.0, 0.0, False, 2), (3.0, 10.0, 0.0, False, 1)], 2),
    ([(1.0, 3.0, 0.0, False, 2), (3.0, 10.0, 0.0, True, 1)], 2),
]


@pytest.mark.parametrize("rows,target", ORACLE_CASES)
def test_analysis_matches_brute_force(rows, target):
    chains = [chain(index + 1, c, t, demand=q, atomic=atomic, priority=priority)
              for index, (c, t, q, atomic, priority) in enumerate(rows)]
    taskset = Taskset(chains=chains)
    ctx = build_context(taskset, W_S)
    target_priority = taskset.chain(target).priority
    oracle = [OracleChain(int(c * 1000), int(q * 1000), int(t * 1000), atomic, priority)
              for c, t, q, atomic, priority in rows if priority >= target_priority]
    oracle_target = [o.priority for o in oracle].index(target_priority)
    blocked = int(blocking(ctx, target) * 1000)
    expected = brute_force_response(oracle, oracle_target, blocked) / 1000
    assert wcrt(ctx, target).wcrt == pytest.approx(expected)


# ============================================================================
# JEU DE RÉFÉRENCE
# ============================================================================

def test_benchmark_blocking(reference):
    ctx = build_context(reference, 0.015)
    assert blocking(ctx, 1) == pytest.approx(3.997)
    assert blocking(ctx, 7) == 0.0


def test_benchmark_utilization(reference):
    """Utilisation avec recharge : Q brut, sans bornage"""
    assert charging_utilization(reference, 0.015) == pytest.approx(0.979, abs=0.01)
    assert charging_utilization(reference, 0.008) == pytest.approx(1.836, abs=0.02)


def test_benchmark_raw_demand_variant_at_15mw(reference):
    """Variante à Q brut (optimiste) : le surplus des tâches peu gourmandes compense les autres"""
    report = analyze(reference, 0.015, clamp=False)
    assert report.schedulable
    chains = {c.chain: c for c in report.chains}
    assert chains["CRC"].wcrt == pytest.approx(4.073)
    assert chains["Camera"].wcrt == pytest.approx(48.499)
    assert all(c.converged and c.wcrt <= c.deadline for c in report.chains)


def test_benchmark_clamped_demand_is_pessimistic(reference):
    """Avec Q borné à 0 par tâche, l'utilisation dépasse 1 à 15 mW"""
    assert charging_utilization(reference, 0.015, clamp=True) == pytest.approx(1.1675, abs=1e-3)
    report = analyze(reference, 0.015)
    assert report.schedulable is False
    assert report.utilization == pytest.approx(1.1675, abs=1e-3)
    assert report.raw_utilization == pytest.approx(0.979, abs=0.01)


def test_benchmark_unschedulable_at_8mw(reference):
    assert analyze(reference, 0.008, clamp=False).schedulable is False
    assert analyze(reference, 0.008, clamp=True).schedulable is False


def test_empty_taskset():
    report = analyze(Taskset(chains=[]), 0.015)
    assert report.schedulable
    assert report.utilization == 0.0


def test_all_atomic_baseline_uses_blocking(reference):
    """Toutes atomiques : Basic Math (12.87 s) bloque CRC"""
    report = analyze_all_atomic(reference, 0.1)
    crc = next(c for c in report.chains if c.chain == "CRC")
    assert crc.blocking == pytest.approx(12.87)
    assert crc.schedulable is False


def test_write_analysis_csv(tmp_path, reference):
    path = write_analysis_csv(analyze(reference, 0.015, clamp=False), tmp_path / "analysis.csv")
    rows = read_csv(path)
    assert [row["chain"] for row in rows] == ["CRC", "Sensor", "SHA", "FFT", "StringSearch",
                                              "Camera", "BasicMath"]
    assert rows[0]["R_s"] == "4.073"
    assert rows[0]["schedulable"] == "true"


@pytest.mark.slow
def test_fast_verdict_matches_full_report():
    cfg = GenConfig(n_tasks_range=(3, 6), seed=11)
    for taskset in generate_tasksets(cfg, 30):
        report = analyze(taskset, 3.0)
        assert is_schedulable(taskset, 3.0) == report.schedulable
        for analysed in report.chains:
            if analysed.schedulable:
                assert analysed.converged
                assert analysed.wcrt >= taskset.chain(analysed.chain_id).wcet - 1e-9

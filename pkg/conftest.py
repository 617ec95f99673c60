# conftest.py
from pathlib import Path

import pytest

from schemas import CapacitorConfig, ChainSpec, HarvestProfile, SimConfig, TaskSpec, Taskset
from workload import load_taskset

ROOT = Path(__file__).parent


@pytest.fixture
def reference() -> Taskset:
    """Jeu de tâches de référence (sept chaînes mono-tâche)"""
    return load_taskset(ROOT / "data" / "benchmark.yaml")


@pytest.fixture
def capacitor() -> CapacitorConfig:
    return CapacitorConfig(capacitance=0.1)


@pytest.fixture
def small_capacitor() -> CapacitorConfig:
    return CapacitorConfig(capacitance=0.03)


def single_chain(chain_id: int, wcet: float, period: float, power: float = 0.01,
                 atomic: bool = False, priority: int = 1, name: str = "") -> ChainSpec:
    name = name or f"c{chain_id}"
    task = TaskSpec(id=name, wcet=wcet, power_draw=power, atomic=atomic)
    return ChainSpec(id=chain_id, name=name, tasks=[task], period=period, priority=priority)


def sim_config(horizon: float, harvest: HarvestProfile = None, capacitance: float = 0.1,
               **overrides) -> SimConfig:
    return SimConfig(
        horizon=horizon,
        capacitor=CapacitorConfig(capacitance=capacitance),
        harvest=harvest or HarvestProfile.ideal(),
        **overrides,
    )

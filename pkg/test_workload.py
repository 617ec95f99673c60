# test_workload.py
import numpy as np
import pytest
from pydantic import ValidationError

from conftest import single_chain
from exceptions import InvalidTasksetError, TasksetFileError
from schemas import ChainSpec, GenConfig, TaskSpec, Taskset
from workload import (chain_aggregates, ensure_valid, execution_time, force_atomic, generate_taskset,
                      generate_tasksets, load_taskset, low_demand_count, rm_priorities, save_taskset,
                      taskset_to_dict, utilization, uunifast, validate)


def test_benchmark_is_valid(reference):
    """Le jeu de référence respecte le modèle de tâches"""
    assert validate(reference) == []
    assert reference.hyperperiod == pytest.approx(120.0)


def test_deadline_beyond_period_is_rejected():
    chain = ChainSpec(id=1, name="late", tasks=[TaskSpec(id="a", wcet=1.0, power_draw=0.01)],
                      period=10.0, deadline=12.0, priority=1)
    violations = validate(Taskset(chains=[chain]))
    assert violations == ["chain late: deadline 12.0 exceeds period 10.0"]
    with pytest.raises(InvalidTasksetError):
        ensure_valid(Taskset(chains=[chain]))


def test_shared_priority_is_rejected():
    taskset = Taskset(chains=[single_chain(1, 1.0, 10.0, priority=3), single_chain(2, 1.0, 20.0, priority=3)])
    assert any("share priority" in violation for violation in validate(taskset))


def test_chain_links_its_tasks():
    chain = ChainSpec(id=4, tasks=[TaskSpec(id="a", wcet=1.0, power_draw=0.01),
                                   TaskSpec(id="b", wcet=2.0, power_draw=0.01)], period=10.0)
    assert [(task.chain_id, task.index_in_chain) for task in chain.tasks] == [(4, 0), (4, 1)]
    assert chain.deadline == 10.0
    assert chain.wcet == pytest.approx(3.0)
    assert chain.name == "chain4"


def test_rm_priorities(reference):
    """Période la plus courte => priorité la plus haute"""
    flat = Taskset(chains=[chain.model_copy(update={"priority": 0}) for chain in reference.chains])
    ranked = rm_priorities(flat)
    assert [chain.priority for chain in ranked.chains] == [7, 6, 5, 4, 3, 2, 1]


def test_rm_priorities_is_idempotent(reference):
    once = rm_priorities(reference)
    assert rm_priorities(once) == once
    assert [chain.priority for chain in once.chains] == [chain.priority for chain in reference.chains]


def test_rm_priorities_ties_broken_by_id():
    ranked = rm_priorities(Taskset(chains=[single_chain(2, 1.0, 10.0), single_chain(1, 1.0, 10.0)]))
    assert ranked.chain(1).priority > ranked.chain(2).priority


def test_chain_aggregates(reference):
    camera = next(chain for chain in reference.chains if chain.name == "Camera")
    basic_math = next(chain for chain in reference.chains if chain.name == "BasicMath")
    c_total, q_total = chain_aggregates(camera, 0.015)
    assert c_total == pytest.approx(3.997)
    assert q_total == pytest.approx(21.019, abs=1e-3)
    assert chain_aggregates(basic_math, 0.015) == pytest.approx((12.87, 0.0))
    assert chain_aggregates(basic_math, 0.015, clamp=False)[1] == pytest.approx(-4.642, abs=1e-3)


def test_force_atomic(reference):
    assert all(task.atomic for task in force_atomic(reference).tasks)
    assert not all(task.atomic for task in reference.tasks)


def test_uunifast_sums_to_total():
    rng = np.random.default_rng(3)
    shares = uunifast(5, 0.7, rng)
    assert len(shares) == 5
    assert sum(shares) == pytest.approx(0.7)
    assert all(share >= 0 for share in shares)


def test_uunifast_fixed_seed():
    """(n=3, U=0.6) : mêmes parts que la récurrence appliquée aux tirages de la même graine"""
    shares = uunifast(3, 0.6, np.random.default_rng(2024))
    draws = np.random.default_rng(2024)
    s1 = 0.6 * draws.random() ** (1 / 2)
    s2 = s1 * draws.random()
    assert shares == pytest.approx([0.6 - s1, s1 - s2, s2])
    assert uunifast(3, 0.6, np.random.default_rng(2024)) == shares


def test_execution_time_rounding():
    assert execution_time(10, 0.123) == pytest.approx(1.2)
    assert execution_time(1, 0.001) == pytest.approx(0.1)


def test_low_demand_count():
    assert low_demand_count(5, 0.5) == 3
    assert low_demand_count(5, 0.0) == 0
    assert low_demand_count(5, 1.0) == 5


def test_low_demand_count_keeps_fractional_ratio():
    """Avec n=5, les proportions 0.1 et 0.2 donnent des moyennes distinctes"""
    rng = np.random.default_rng(0)
    for ratio in (0.1, 0.2, 0.5):
        counts = [low_demand_count(5, ratio, rng) for _ in range(4000)]
        assert set(counts) <= {int(ratio * 5), int(ratio * 5) + 1}
        assert np.mean(counts) == pytest.approx(ratio * 5, abs=0.06)
    assert low_demand_count(5, 1.0, rng) == 5
    assert low_demand_count(5, 0.0, rng) == 0


def test_generate_slices_match_full_run():
    cfg = GenConfig(n_tasks_range=(3, 8), seed=4)
    full = generate_tasksets(cfg, 6)
    assert generate_tasksets(cfg, 2, start=0) + generate_tasksets(cfg, 4, start=2) == full


def test_generate_is_deterministic():
    cfg = GenConfig(n_tasks_range=(5, 5), utilization_range=(0.5, 0.5), seed=1)
    first = [taskset_to_dict(taskset) for taskset in generate_tasksets(cfg, 3)]
    second = [taskset_to_dict(taskset) for taskset in generate_tasksets(cfg, 3)]
    assert first == second
    assert len({str(taskset) for taskset in first}) == 3


def test_generated_taskset_shape():
    cfg = GenConfig(n_tasks_range=(5, 5), utilization_range=(0.5, 0.5), seed=7)
    taskset = generate_taskset(cfg)
    assert len(taskset.chains) == 5
    assert validate(taskset) == []
    assert all(chain.deadline == chain.period for chain in taskset.chains)
    assert all(float(chain.period).is_integer() and 1 <= chain.period <= 60 for chain in taskset.chains)
    assert utilization(taskset) > 0


def test_all_low_demand():
    cfg = GenConfig(n_tasks_range=(5, 5), utilization_range=(0.5, 0.5), low_demand_ratio=1.0, seed=2)
    for taskset in generate_tasksets(cfg, 5):
        assert all(1.0 <= task.power_draw <= 3.0 for task in taskset.tasks)


def test_zero_utilization_is_rejected():
    with pytest.raises(ValidationError):
        GenConfig(utilization_range=(0.0, 0.0))


def test_save_and_load(tmp_path, reference):
    path = save_taskset(reference, tmp_path / "benchmark.yaml")
    assert load_taskset(path) == reference


def test_load_missing_file(tmp_path):
    with pytest.raises(TasksetFileError):
        load_taskset(tmp_path / "absent.yaml")


def test_load_invalid_schema(tmp_path):
    path = tmp_path / "broken.yaml"
    path.write_text("chains:\n  - id: 1\n    period_s: 5\n")
    with pytest.raises(TasksetFileError):
        load_taskset(path)

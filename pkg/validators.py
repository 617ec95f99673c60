# validators.py
from typing import List

from schemas import ChainSpec, SimConfig, Taskset


class ChainValidator:
    @staticmethod
    def validate_tasks(chain: ChainSpec) -> List[str]:
        violations = []
        for index, task in enumerate(chain.tasks):
            if task.wcet <= 0:
                violations.append(f"chain {chain.name}: task {task.id} has wcet <= 0")
            if task.power_draw < 0:
                violations.append(f"chain {chain.name}: task {task.id} has negative power draw")
            if task.chain_id != chain.id or task.index_in_chain != index:
                violations.append(f"chain {chain.name}: task {task.id} is not linked to its chain")
        return violations

    @staticmethod
    def validate_timing(chain: ChainSpec) -> List[str]:
        violations = []
        if chain.period <= 0:
            violations.append(f"chain {chain.name}: period must be > 0")
        # Échéances contraintes
        if chain.deadline is None or chain.deadline <= 0:
            violations.append(f"chain {chain.name}: deadline must be > 0")
        elif chain.deadline > chain.period:
            violations.append(
                f"chain {chain.name}: deadline {chain.deadline} exceeds period {chain.period}"
            )
        if chain.release_offset < 0:
            violations.append(f"chain {chain.name}: negative release offset")
        return violations


class TasksetValidator:
    @staticmethod
    def validate_priorities(taskset: Taskset) -> List[str]:
        seen = {}
        violations = []
        for chain in taskset.chains:
            if chain.priority in seen:
                violations.append(
                    f"chains {seen[chain.priority]} and {chain.name} share priority {chain.priority}"
                )
            else:
                seen[chain.priority] = chain.name
        return violations

    @staticmethod
    def validate_identifiers(taskset: Taskset) -> List[str]:
        violations = []
        chain_ids = [chain.id for chain in taskset.chains]
        if len(set(chain_ids)) != len(chain_ids):
            violations.append("chain ids must be unique")
        task_ids = [task.id for task in taskset.tasks]
        if len(set(task_ids)) != len(task_ids):
            violations.append("task ids must be unique")
        return violations

    @classmethod
    def validate(cls, taskset: Taskset) -> List[str]:
        """Retourne la liste des violations (vide si le jeu de tâches est valide)"""
        violations = []
        if not taskset.chains:
            violations.append("taskset has no chain")
        violations.extend(cls.validate_identifiers(taskset))
        violations.extend(cls.validate_priorities(taskset))
        for chain in taskset.chains:
            violations.extend(ChainValidator.validate_tasks(chain))
            violations.extend(ChainValidator.validate_timing(chain))
        return violations


class SimConfigValidator:
    @staticmethod
    def validate_tick_alignment(config: SimConfig, taskset: Taskset) -> List[str]:
        """Les périodes, échéances et décalages doivent tomber sur la grille du tick"""
        violations = []
        for chain in taskset.chains:
            for label, value in (("period", chain.period), ("deadline", chain.deadline),
                                 ("release offset", chain.release_offset)):
                ticks = value / config.tick
                if abs(ticks - round(ticks)) > 1e-6:
                    violations.append(f"chain {chain.name}: {label} {value} not aligned on tick")
        return violations

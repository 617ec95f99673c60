# config.py
from pathlib import Path
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    # Metadata du projet
    project_name: str = "IPD Scheduler"
    version: str = "1.0.0"
    description: str = (
        "Simulation et analyse d'ordonnancement temps réel pour dispositifs "
        "sans batterie alimentés par récupération d'énergie"
    )

    # Configuration du noyau de simulation
    tick_s: float = 0.001
    checkpoint_store_cost_s: float = 0.00257  # 1.11 ms TCB + 1.46 ms données
    checkpoint_restore_cost_s: float = 0.00013
    scheduler_cost_s: float = 0.0

    # Estimation du taux de recharge
    estimator_window_s: float = 1800.0

    # Analyse
    analysis_max_iterations: int = 1_000_000

    # Expériences
    experiment_repetitions: int = 1000
    experiment_workers: int = 1
    output_dir: Path = Path("results")

    # Logging
    log_level: str = "INFO"
    log_dir: Path = Path("logs")
    log_file: str = "ipdsim.log"

    model_config = SettingsConfigDict(env_file=".env", env_prefix="IPDSIM_")


settings = Settings()

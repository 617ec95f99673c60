# logging_config.py
import logging
from logging.handlers import RotatingFileHandler
from pathlib import Path
from typing import Optional, Union

from config import settings

FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


def setup_logging(level: Optional[str] = None,
                  log_dir: Optional[Union[str, Path]] = None,
                  to_file: bool = True) -> logging.Logger:
    """Configure le système de logging"""
    level_name = (level or settings.log_level).upper()
    log_level = getattr(logging, level_name, logging.INFO)

    logger = logging.getLogger()
    logger.setLevel(log_level)

    # Évite de dupliquer les handlers quand setup_logging est rappelé
    for handler in list(logger.handlers):
        if getattr(handler, "_ipdsim", False):
            logger.removeHandler(handler)
            handler.close()

    formatter = logging.Formatter(FORMAT)

    handlers = []
    if to_file:
        directory = Path(log_dir) if log_dir is not None else settings.log_dir
        directory.mkdir(parents=True, exist_ok=True)
        file_handler = RotatingFileHandler(
            directory / settings.log_file,
            maxBytes=10*1024*1024,  # 10MB
            backupCount=5
        )
        handlers.append(file_handler)

    # Handler pour la console (stderr, stdout reste réservé aux résultats)
    handlers.append(logging.StreamHandler())

    for handler in handlers:
        handler.setFormatter(formatter)
        handler.setLevel(log_level)
        handler._ipdsim = True
        logger.addHandler(handler)

    return logger

# utils.py
import csv
import math
from functools import reduce
from pathlib import Path
from typing import Any, Dict, Iterable, List, Sequence, Union

US_PER_S = 1_000_000
MS_PER_S = 1_000

# Tolérance des conversions flottant -> entier (3.997 * 1000 = 3996.9999...)
_EPS = 1e-6


def to_us(seconds: float) -> int:
    """Convertit des secondes en microsecondes entières (arrondi au plus proche)"""
    return int(round(seconds * US_PER_S))


def to_ms(seconds: float) -> int:
    """Convertit des secondes en millisecondes entières (arrondi au plus proche)"""
    return int(round(seconds * MS_PER_S))


def ceil_ms(seconds: float) -> int:
    """Millisecondes entières, arrondi vers le haut (jamais optimiste)"""
    return int(math.ceil(seconds * MS_PER_S - _EPS))


def ceil_to_grid(value: int, grid: int) -> int:
    """Plus petit multiple de grid supérieur ou égal à value"""
    return -(-value // grid) * grid


def us_to_s(value: int) -> float:
    return value / US_PER_S


def ms_to_s(value: int) -> float:
    return value / MS_PER_S


def lcm(values: Iterable[int]) -> int:
    """PPCM d'entiers positifs (1 pour une liste vide)"""
    return reduce(lambda a, b: a * b // math.gcd(a, b), values, 1)


def derive_seed(master_seed: int, index: int) -> int:
    """Graine d'une répétition : seed XOR index"""
    return int(master_seed) ^ int(index)


def format_seconds(value: float) -> str:
    """Temps avec une précision à la milliseconde"""
    return f"{value:.3f}"


def write_csv(path: Union[str, Path], header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    """Écrit un CSV (crée les dossiers parents)"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        for row in rows:
            writer.writerow(row)
    return path


def read_csv(path: Union[str, Path]) -> List[Dict[str, str]]:
    with Path(path).open(newline="") as handle:
        return list(csv.DictReader(handle))

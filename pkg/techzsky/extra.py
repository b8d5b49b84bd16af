import string
import random
import time
from contextlib import contextmanager
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Tuple, Union

IMAGE_SUFFIXES = (".png", ".ppm")


def get_random_string(length: int) -> str:
    """
    Generate a random string of specified length using uppercase letters.

    Args:
        length (int): The length of the random string.

    Returns:
        str: A random string of specified length.
    """
    random_string = "".join(random.choices(string.ascii_uppercase, k=length))
    return random_string


def as_path(path: Union[str, Path]) -> Path:
    return Path(path) if isinstance(path, str) else path


def list_images(directory: Path) -> List[Path]:
    """
    List the 8-bit image files of a directory, sorted by name.

    Args:
        directory (Path): Directory to scan (not recursive).

    Returns:
        List[Path]: Image paths with a supported suffix.
    """
    return sorted(
        p for p in directory.iterdir() if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES
    )


def pair_by_stem(
    left: Iterable[Path], right: Iterable[Path]
) -> Tuple[List[Tuple[Path, Path]], List[Path]]:
    """
    Pair two file lists on their stem.

    Returns:
        Tuple: `(pairs, unmatched_left)`, pairs sorted by stem.
    """
    by_stem = {p.stem: p for p in right}
    pairs = []
    unmatched = []
    for path in sorted(left, key=lambda p: p.stem):
        match = by_stem.get(path.stem)
        if match is None:
            unmatched.append(path)
        else:
            pairs.append((path, match))
    return pairs, unmatched


class StageTimer:
    """Accumulates wall-clock milliseconds per named pipeline stage."""

    def __init__(self) -> None:
        self.timings: Dict[str, float] = {}

    @contextmanager
    def stage(self, name: str) -> Iterator[None]:
        start = time.perf_counter()
        try:
            yield
        finally:
            elapsed = (time.perf_counter() - start) * 1000.0
            self.timings[name] = self.timings.get(name, 0.0) + elapsed

    @property
    def total(self) -> float:
        return sum(self.timings.values())

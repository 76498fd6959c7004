import csv
from pathlib import Path
from typing import Iterable
from typing import List
from typing import Sequence
from typing import Tuple
from typing import Union

import numpy as np
from nanomotion_g2.typing import FloatArray

PathLike = Union[str, Path]


def format_float(value: float) -> str:
    """Shortest decimal text that parses back to the same double."""
    return repr(float(value))


def format_sig(value: float, digits: int = 6) -> str:
    return f"{float(value):.{digits}g}"


def derive_seed(master_seed: int, index: int) -> int:
    """
    Child seed of member ``index`` under ``master_seed``.

    Only depends on the pair, never on the order in which members run.
    """
    sequence = np.random.SeedSequence(entropy=master_seed, spawn_key=(index,))
    return int(sequence.generate_state(1, dtype=np.uint64)[0])


def make_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed))


def is_uniform(grid: FloatArray, rtol: float = 1e-9) -> bool:
    if len(grid) < 3:
        return True
    steps = np.diff(grid)
    return bool(np.allclose(steps, steps[0], rtol=rtol, atol=0.0))


def _format_cell(cell, formatter) -> str:
    if isinstance(cell, (str, int, np.integer)):
        return str(cell)
    return formatter(cell)


class CsvConverter(object):
    @classmethod
    def write(
        cls,
        path: PathLike,
        header: Sequence[str],
        columns: Sequence[Iterable],
        formatter=format_float,
    ) -> Path:
        path = Path(path)
        rows = zip(*columns)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([_format_cell(cell, formatter) for cell in row])
        return path

    @classmethod
    def read(cls, path: PathLike) -> Tuple[List[str], FloatArray]:
        path = Path(path)
        with path.open(newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            data = [[float(cell) for cell in row] for row in reader if row]
        table = np.asarray(data, dtype=float).reshape(-1, len(header))
        return header, table

"""Small text formats shared by the command line and the tests."""

from __future__ import annotations

import csv
import io

import numpy as np

from .frames import Path

PATH_HEADER = ["x", "y", "z", "heading"]


def path_to_csv(path: Path) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(PATH_HEADER)
    for (x, y, z), h in zip(path.positions, path.headings):
        w.writerow([repr(float(x)), repr(float(y)), repr(float(z)), repr(float(h))])
    return buf.getvalue()


def path_from_csv(text: str, frame: str = "L") -> Path:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or [c.strip() for c in rows[0]] != PATH_HEADER:
        raise ValueError("path CSV must start with the header x,y,z,heading")
    body = [r for r in rows[1:] if r]
    for i, r in enumerate(body, start=2):
        if len(r) != 4:
            raise ValueError(f"path CSV line {i}: expected 4 fields, got {len(r)}")
    try:
        arr = np.array([[float(v) for v in r] for r in body], dtype=float).reshape(-1, 4)
    except ValueError as e:
        raise ValueError(f"bad path CSV row: {e}") from e
    return Path(arr[:, :3], arr[:, 3], frame)


def parse_vector(text: str, n: tuple[int, ...] = (3,)) -> np.ndarray:
    """``"1,2,3"`` -> array; ``n`` lists the accepted component counts."""
    try:
        v = np.array([float(t) for t in text.split(",")])
    except ValueError as e:
        raise ValueError(f"not a comma-separated vector: {text!r}") from e
    if len(v) not in n:
        raise ValueError(f"expected {' or '.join(map(str, n))} components, got {len(v)}")
    return v

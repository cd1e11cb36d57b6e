from pathlib import Path

import numpy as np
import pytest

FIXTURES = Path(__file__).resolve().parents[1] / "fixtures"


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240811)


def parse_ascii_ply(path) -> tuple[np.ndarray, np.ndarray]:
    """Minimal reader for the ASCII PLY files the library writes."""
    lines = Path(path).read_text().splitlines()
    assert lines[0] == "ply"
    assert lines[1] == "format ascii 1.0"
    n = None
    for i, line in enumerate(lines):
        if line.startswith("element vertex"):
            n = int(line.split()[-1])
        if line == "end_header":
            body = lines[i + 1 :]
            break
    assert n is not None
    points, colors = [], []
    for line in body[:n]:
        fields = line.split()
        points.append([float(v) for v in fields[:3]])
        colors.append([int(v) for v in fields[3:6]])
    return (
        np.asarray(points, dtype=np.float64).reshape(n, 3),
        np.asarray(colors, dtype=np.int64).reshape(n, 3),
    )

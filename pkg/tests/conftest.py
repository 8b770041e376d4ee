import math
from pathlib import Path

import numpy as np
import pytest

from app.model.problem import (
    BeamDomain,
    DampingSpec,
    ForcingSpec,
    Grid,
    InitialData,
    RestoringSpec,
    SimConfig,
    sine_profile,
    validate_problem,
)

PROBLEMS_DIR = Path(__file__).resolve().parent.parent / "problems"


def build_problem(
    N=64,
    m=2.0,
    a=0.1,
    damping=None,
    restoring=None,
    forcing=None,
    u0=None,
    u1=None,
    amp=1.0,
    k=1,
    dt=1e-3,
    T=1.0,
    output_stride=1,
    newton_tol=1e-10,
    d=math.pi,
    allow_undamped=False,
):
    """Validated problem on (0, d); defaults to one sine mode under linear damping"""
    domain = BeamDomain(c=0.0, d=d)
    grid = Grid.from_domain(domain, N)
    if damping is None:
        damping = DampingSpec(form="canonical", m=m, a=a)
    if u0 is None:
        u0 = sine_profile(grid, k, amp)
    if u1 is None:
        u1 = np.zeros(grid.size)
    cfg = SimConfig(dt=dt, T=T, output_stride=output_stride, newton_tol=newton_tol)
    return validate_problem(
        domain,
        grid,
        damping,
        restoring or RestoringSpec(),
        forcing or ForcingSpec(),
        InitialData(u0=u0, u1=u1),
        cfg,
        allow_undamped=allow_undamped,
    )


@pytest.fixture
def make_problem():
    return build_problem


@pytest.fixture
def linear_problem():
    return build_problem()


@pytest.fixture
def problems_dir():
    return PROBLEMS_DIR


@pytest.fixture
def write_problem(tmp_path):
    """Write problem-file text into tmp_path and return its path"""

    def _write(text, name="problem.ini"):
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return path

    return _write

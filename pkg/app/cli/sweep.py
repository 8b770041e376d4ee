"""
Parameter sweeps: cartesian products of ``section.key`` ranges over a template
problem, each entry certified, simulated and fitted independently.
"""
import itertools
import logging
from concurrent.futures import ProcessPoolExecutor
from typing import List, Optional, Sequence, Tuple

from app.analysis.certificate import compute_certificate
from app.dynamics.integrator import initial_state, simulate
from app.dynamics.lyapunov import energy, fit_decay_rate
from app.model.problem_file import load_problem
from app.numerics.operators import discrete_constants
from common.errors import ProblemValidationError

logger = logging.getLogger(__name__)

SWEEP_HEADER = ("m", "a1", "a2", "N", "dt", "r_certified", "r_fitted")


def parse_range(text: str) -> Tuple[str, List[str]]:
    """
    ``section.key=v1,v2,...`` -> ("section.key", ["v1", "v2", ...])

    Raises:
        ProblemValidationError: malformed range
    """
    target, sep, values = text.partition("=")
    target = target.strip()
    items = [value.strip() for value in values.split(",") if value.strip()]
    if not sep or "." not in target or not items:
        raise ProblemValidationError(f"range must look like section.key=v1,v2,..., got {text!r}")
    return target, items


def expand_ranges(ranges: Sequence[str]) -> List[List[str]]:
    """Override lists for every combination, first range varying slowest"""
    parsed = [parse_range(text) for text in ranges]
    if not parsed:
        return [[]]
    targets = [target for target, _ in parsed]
    return [
        [f"{target}={value}" for target, value in zip(targets, combo)]
        for combo in itertools.product(*(values for _, values in parsed))
    ]


def sweep_entry(template: str, overrides: Sequence[str]) -> Tuple:
    """
    One sweep row. Module-level so a process pool can pickle it.

    r_certified is None for certificate-inadmissible entries; r_fitted is None
    when the energy tail cannot be fitted.
    """
    loaded = load_problem(template, overrides)
    problem = loaded.problem
    E0 = energy(initial_state(problem), problem.operator)
    cert = None
    if problem.certificate_admissible and E0 > 0:
        cert = compute_certificate(problem, E0, discrete_constants(problem.grid))
    traj = simulate(problem, eps=cert.eps if cert else None)
    try:
        r_fitted = fit_decay_rate(traj.column("t"), traj.column("E")).rate
    except ValueError as e:
        logger.warning(f"Sweep entry not fitted | overrides: {list(overrides)} | reason: {e}")
        r_fitted = None
    damping = problem.damping
    return (
        damping.m,
        damping.lower,
        damping.upper,
        problem.grid.N,
        problem.cfg.dt,
        cert.r if cert else None,
        r_fitted,
    )


def run_entries(template: str, entries: Sequence[Sequence[str]], workers: int = 1) -> List[Tuple]:
    """Rows in entry order whatever the worker count"""
    if workers <= 1 or len(entries) <= 1:
        return [sweep_entry(template, overrides) for overrides in entries]
    logger.info(f"Sweep running in parallel | entries: {len(entries)} | workers: {workers}")
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(sweep_entry, itertools.repeat(template), entries))


def sweep(
    template: str,
    ranges: Sequence[str],
    base_overrides: Sequence[str] = (),
    workers: Optional[int] = None,
) -> List[Tuple]:
    entries = [list(base_overrides) + combo for combo in expand_ranges(ranges)]
    logger.info(f"Sweep started | template: {template} | entries: {len(entries)}")
    return run_entries(template, entries, workers or 1)

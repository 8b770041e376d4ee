"""
Subcommand bodies. Each takes parsed arguments, writes its artifacts and
returns what the click layer needs to print or turn into an exit code.
"""
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence

from app.analysis.certificate import (
    AuditReport,
    Certificate,
    audit_records,
    certificate_from_report,
    compute_certificate,
    csv_rows,
    format_audit,
    report_lines,
)
from app.analysis.modal_oracle import oracle_compare, require_linear
from app.analysis.stationary import (
    ConvergenceReport,
    StationarySolution,
    check_convergence,
    shifted_certificate,
    solve_stationary,
)
from app.cli.sweep import SWEEP_HEADER, sweep
from app.dynamics.integrator import Trajectory, initial_state, simulate
from app.dynamics.lyapunov import RECORD_FIELDS, energy, records_from_columns
from app.model.problem_file import LoadedProblem, load_problem
from app.numerics.operators import discrete_constants
from common.artifacts import (
    RunManifest,
    ensure_dir,
    file_digest,
    load_manifest,
    read_csv_columns,
    write_csv,
    write_manifest,
    write_vector,
)
from common.errors import BeamLabError, CertificateError, ProblemValidationError, ProvenanceError

logger = logging.getLogger(__name__)

ORACLE_HEADER = ("dt", "max_l2_error", "max_h2star_error", "observed_order")
CONVERGENCE_HEADER = ("t", "h2star_diff", "l2_v")


@dataclass
class CommandResult:
    outputs: List[Path] = field(default_factory=list)
    passed: bool = True
    headline: Optional[str] = None


def _manifest(command: str, loaded: LoadedProblem, outputs: Sequence[Path], parameters=None, **extra) -> RunManifest:
    return RunManifest(
        command=command,
        problem_digest=loaded.problem.digest,
        parameters=loaded.parameters if parameters is None else parameters,
        overrides=loaded.overrides,
        input_digests=loaded.input_digests,
        outputs=[str(path) for path in outputs],
        **extra,
    )


def _initial_energy(loaded: LoadedProblem) -> float:
    problem = loaded.problem
    return energy(initial_state(problem), problem.operator)


def certificate_for(loaded: LoadedProblem) -> Certificate:
    """
    Raises:
        CertificateError: inadmissible problem or E(0) = 0
    """
    problem = loaded.problem
    return compute_certificate(problem, _initial_energy(loaded), discrete_constants(problem.grid))


def write_trajectory(traj: Trajectory, path: Path) -> Path:
    return write_csv(path, RECORD_FIELDS, (rec.as_row() for rec in traj.records))


def cmd_simulate(problem_file, out_dir, overrides: Sequence[str] = ()) -> CommandResult:
    """
    trajectory.csv and its manifest. H uses the certificate eps when the
    problem admits one, otherwise H = E.
    """
    loaded = load_problem(problem_file, overrides)
    problem = loaded.problem
    eps = None
    if problem.certificate_admissible and _initial_energy(loaded) > 0:
        eps = certificate_for(loaded).eps
    traj = simulate(problem, eps=eps)

    out = ensure_dir(out_dir)
    path = write_trajectory(traj, out / "trajectory.csv")
    parameters = {**loaded.parameters, "certificate": {"eps": eps}}
    write_manifest(
        path,
        _manifest("simulate", loaded, [path], parameters, steps=traj.steps, wall_seconds=traj.wall_seconds),
    )
    return CommandResult(outputs=[path])


def cmd_certify(problem_file, out_dir, overrides: Sequence[str] = ()) -> CommandResult:
    """certificate.txt, certificate.csv and one manifest for both"""
    loaded = load_problem(problem_file, overrides)
    cert = certificate_for(loaded)

    out = ensure_dir(out_dir)
    text_path = out / "certificate.txt"
    text_path.write_text("\n".join(report_lines(cert)) + "\n", encoding="utf-8")
    logger.info(f"Wrote {text_path}")
    csv_path = write_csv(out / "certificate.csv", ("constant", "value", "formula"), csv_rows(cert))
    write_manifest(text_path, _manifest("certify", loaded, [text_path, csv_path]))
    return CommandResult(outputs=[text_path, csv_path], headline=f"r = {format(cert.r, '.17g')}")


def _check_provenance(trajectory_csv: Path, certificate_report: Path) -> str:
    """Digest shared by both manifests ("" when a manifest is missing)"""
    traj_manifest = load_manifest(trajectory_csv)
    cert_manifest = load_manifest(certificate_report)
    if traj_manifest is None or cert_manifest is None:
        return ""
    if traj_manifest.problem_digest != cert_manifest.problem_digest:
        raise ProvenanceError(
            f"{trajectory_csv} and {certificate_report} were produced from different problems"
        )
    eps = (traj_manifest.parameters.get("certificate") or {}).get("eps")
    if eps is None:
        raise ProvenanceError(f"{trajectory_csv} was simulated without a certificate eps (H = E)")
    return traj_manifest.problem_digest


def cmd_verify(trajectory_csv, certificate_report, out_dir=None, tol: float = 0.05) -> CommandResult:
    """audit.txt; passed is False when any check fails"""
    trajectory_csv = Path(trajectory_csv)
    certificate_report = Path(certificate_report)
    digest = _check_provenance(trajectory_csv, certificate_report)
    try:
        text = certificate_report.read_text(encoding="utf-8")
        columns = read_csv_columns(trajectory_csv, RECORD_FIELDS)
    except OSError as e:
        raise BeamLabError(f"cannot read verify input: {e}")
    except ValueError as e:
        raise BeamLabError(str(e))
    cert = certificate_from_report(text, problem_digest=digest)
    report: AuditReport = audit_records(records_from_columns(columns), cert, tol=tol)

    out = ensure_dir(out_dir or trajectory_csv.parent)
    path = out / "audit.txt"
    path.write_text(format_audit(report), encoding="utf-8")
    logger.info(f"Wrote {path}")
    write_manifest(
        path,
        RunManifest(
            command="verify",
            problem_digest=digest,
            parameters={"tol": tol},
            input_digests={
                "trajectory": file_digest(trajectory_csv),
                "certificate": file_digest(certificate_report),
            },
            outputs=[str(path)],
        ),
    )
    return CommandResult(outputs=[path], passed=report.passed, headline=f"audit {'PASS' if report.passed else 'FAIL'}")


def cmd_stationary(
    problem_file,
    out_dir,
    overrides: Sequence[str] = (),
    with_simulation: bool = False,
    tol: float = 0.05,
) -> CommandResult:
    """
    u_hat.txt; with_simulation adds convergence.csv and convergence_audit.txt
    for the shift to u_hat.
    """
    loaded = load_problem(problem_file, overrides)
    problem = loaded.problem
    if with_simulation and problem.restoring.kind != "zero":
        raise ProblemValidationError("convergence check needs G ≡ 0")
    solution: StationarySolution = solve_stationary(problem, tol=problem.cfg.newton_tol)

    out = ensure_dir(out_dir)
    u_path = write_vector(out / "u_hat.txt", solution.values)
    outputs = [u_path]
    passed = True
    if with_simulation:
        traj = simulate(problem)
        try:
            cert = shifted_certificate(problem, solution)
        except CertificateError as e:
            logger.warning(f"No certificate for the shifted problem: {e}")
            cert = None
        report: ConvergenceReport = check_convergence(traj, solution, cert, problem.operator, problem, tol=tol)
        outputs.append(write_csv(out / "convergence.csv", CONVERGENCE_HEADER, report.rows()))
        if report.audit is not None:
            audit_path = out / "convergence_audit.txt"
            lines = [format_audit(report.audit).rstrip("\n")]
            lines.append(f"r_certified = {format(report.r_certified, '.17g')}")
            lines.append(f"r_fitted_h2star = {format(report.fit_h2star.rate, '.17g')}")
            lines.append(f"r_fitted_velocity = {format(report.fit_v.rate, '.17g')}")
            audit_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
            outputs.append(audit_path)
            passed = report.passed
    write_manifest(
        u_path,
        _manifest(
            "stationary",
            loaded,
            outputs,
            steps=solution.newton_iterations,
        ),
    )
    return CommandResult(
        outputs=outputs,
        passed=passed,
        headline=f"residual = {format(solution.residual_norm, '.17g')}",
    )


def cmd_oracle(problem_file, out_dir, overrides: Sequence[str] = (), dt_halvings: int = 1) -> CommandResult:
    """
    oracle.csv: one row per step size dt, dt/2, ..., with the order observed
    against the previous row.
    """
    if dt_halvings < 0:
        raise ValueError(f"dt halvings must be non-negative (got {dt_halvings})")
    loaded = load_problem(problem_file, overrides)
    problem = loaded.problem
    require_linear(problem)
    cfg = problem.cfg

    rows = []
    previous = None
    for k in range(dt_halvings + 1):
        run_cfg = cfg.model_copy(update={"dt": cfg.dt / 2 ** k, "output_stride": cfg.output_stride * 2 ** k})
        traj = simulate(problem, cfg=run_cfg)
        comparison = oracle_compare(traj, problem)
        order = None
        if previous is not None and previous > 0 and comparison.max_l2_error > 0:
            order = math.log2(previous / comparison.max_l2_error)
        rows.append((run_cfg.dt, comparison.max_l2_error, comparison.max_h2star_error, order))
        previous = comparison.max_l2_error

    out = ensure_dir(out_dir)
    path = write_csv(out / "oracle.csv", ORACLE_HEADER, rows)
    write_manifest(path, _manifest("oracle", loaded, [path]))
    return CommandResult(outputs=[path])


def cmd_sweep(
    template,
    ranges: Sequence[str],
    out_dir,
    overrides: Sequence[str] = (),
    workers: Optional[int] = None,
) -> CommandResult:
    """sweep.csv with rows in cartesian input order"""
    rows = sweep(str(template), ranges, base_overrides=overrides, workers=workers)
    out = ensure_dir(out_dir)
    path = write_csv(out / "sweep.csv", SWEEP_HEADER, rows)
    write_manifest(
        path,
        RunManifest(
            command="sweep",
            parameters={"ranges": list(ranges), "workers": workers},
            overrides=list(overrides),
            input_digests={"template": file_digest(template)},
            outputs=[str(path)],
        ),
    )
    return CommandResult(outputs=[path])

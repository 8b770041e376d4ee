"""
Problem files: INI-style ``key = value`` text with the sections below.

    [domain]     c, d                 (numbers; ``pi``, ``2*pi``, ``pi/2`` accepted)
    [grid]       N
    [damping]    form, m, a, a1, a2, coefficients, powers, table_x, table_F
    [restoring]  kind, lambda, p, D
    [forcing]    kind, profile, profile_file, omega, phase
    [initial]    u0, u1, u0_file, u1_file
    [time]       dt, T, newton_tol, newton_max_iter, output_stride

Profiles are ``zero`` or ``sine k=1 amp=1.0``; ``*_file`` keys name a file with
one value per line (N-1 lines), relative to the problem file. Unknown
sections or keys are errors.
"""
import configparser
import logging
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
from pydantic import ValidationError

from app.model.problem import (
    BeamDomain,
    DampingSpec,
    ForcingSpec,
    Grid,
    InitialData,
    RestoringSpec,
    SimConfig,
    ValidatedProblem,
    sine_profile,
    validate_problem,
)
from common.artifacts import file_digest, read_vector
from common.errors import ProblemValidationError

logger = logging.getLogger(__name__)

KNOWN_KEYS = {
    "domain": ("c", "d"),
    "grid": ("N",),
    "damping": ("form", "m", "a", "a1", "a2", "coefficients", "powers", "table_x", "table_F"),
    "restoring": ("kind", "lambda", "p", "D"),
    "forcing": ("kind", "profile", "profile_file", "omega", "phase"),
    "initial": ("u0", "u1", "u0_file", "u1_file"),
    "time": ("dt", "T", "newton_tol", "newton_max_iter", "output_stride"),
}
LIST_KEYS = ("coefficients", "powers", "table_x", "table_F")

_FACTOR = re.compile(r"\s*([*/])\s*")


@dataclass
class LoadedProblem:
    """A validated problem plus what the manifest needs to reproduce it"""

    problem: ValidatedProblem
    path: Optional[Path]
    parameters: Dict[str, Dict[str, str]]
    overrides: List[str] = field(default_factory=list)
    input_digests: Dict[str, str] = field(default_factory=dict)


def parse_number(text: str) -> float:
    """
    Float, or a product/quotient of floats and ``pi``.

    Example: ``2*pi`` gives 6.283185307179586.
    """
    parts = _FACTOR.split(text.strip())
    value = None
    op = "*"
    for i, part in enumerate(parts):
        if i % 2 == 1:
            op = part
            continue
        token = part.strip().lower()
        sign = -1.0 if token.startswith("-") else 1.0
        token = token.lstrip("+-")
        if token == "pi":
            number = sign * math.pi
        else:
            try:
                number = sign * float(token)
            except ValueError:
                raise ValueError(f"not a number: {text!r}")
        if value is None:
            value = number
        else:
            value = value * number if op == "*" else value / number
    if value is None:
        raise ValueError(f"not a number: {text!r}")
    return value


def parse_profile(text: str, grid: Grid, key: str) -> np.ndarray:
    """
    ``zero`` or ``sine k=<int> amp=<number>`` sampled on the interior nodes.

    Raises:
        ProblemValidationError: unknown profile or option
    """
    words = text.split()
    if not words:
        raise ProblemValidationError(f"{key}: empty profile")
    kind = words[0].lower()
    if kind == "zero" and len(words) == 1:
        return np.zeros(grid.size)
    if kind != "sine":
        raise ProblemValidationError(f"{key}: unknown profile {words[0]!r} (use 'zero' or 'sine k=1 amp=1.0')")
    options = {"k": "1", "amp": "1.0"}
    for word in words[1:]:
        name, sep, value = word.partition("=")
        if not sep or name not in options:
            raise ProblemValidationError(f"{key}: unknown sine option {word!r}")
        options[name] = value
    try:
        k = int(options["k"])
        amp = parse_number(options["amp"])
    except ValueError as e:
        raise ProblemValidationError(f"{key}: {e}")
    if k < 1:
        raise ProblemValidationError(f"{key}: sine mode k must be >= 1 (k = {k})")
    return sine_profile(grid, k, amp)


def apply_overrides(parser: configparser.ConfigParser, overrides: Sequence[str]) -> None:
    """
    Apply ``section.key=value`` overrides in order.

    Raises:
        ProblemValidationError: malformed override or unknown section.key
    """
    for item in overrides:
        target, sep, value = item.partition("=")
        section, dot, key = target.strip().partition(".")
        if not sep or not dot or not key:
            raise ProblemValidationError(f"override must look like section.key=value, got {item!r}")
        if section not in KNOWN_KEYS or key not in KNOWN_KEYS[section]:
            raise ProblemValidationError(f"unknown override key {section}.{key}")
        if not parser.has_section(section):
            parser.add_section(section)
        parser.set(section, key, value.strip())
        logger.debug(f"Override applied | {section}.{key} = {value.strip()}")


def _check_keys(parser: configparser.ConfigParser) -> None:
    errors = []
    for section in parser.sections():
        if section not in KNOWN_KEYS:
            errors.append(f"unknown section [{section}]")
            continue
        for key in parser.options(section):
            if key not in KNOWN_KEYS[section]:
                errors.append(f"unknown key {section}.{key}")
    if errors:
        raise ProblemValidationError("invalid problem file", errors)


def _section(parser: configparser.ConfigParser, name: str) -> Dict[str, str]:
    return dict(parser.items(name)) if parser.has_section(name) else {}


def _coerce(model, section: str, values: Dict):
    try:
        return model(**values)
    except ValidationError as e:
        errors = [f"{section}.{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in e.errors()]
        raise ProblemValidationError("invalid problem file", errors)


def _numbers(section: str, values: Dict[str, str], keys: Sequence[str]) -> Dict:
    out = {}
    for key, text in values.items():
        if key not in keys:
            out[key] = text
            continue
        try:
            if key in LIST_KEYS:
                out[key] = [parse_number(part) for part in text.split(",") if part.strip()]
            else:
                out[key] = parse_number(text)
        except ValueError as e:
            raise ProblemValidationError(f"{section}.{key}: {e}")
    return out


def _vector(base: Path, values: Dict[str, str], key: str, grid: Grid, digests: Dict[str, str]) -> np.ndarray:
    file_key = f"{key}_file"
    if file_key in values and key in values:
        raise ProblemValidationError(f"give either {key} or {file_key}, not both")
    if file_key in values:
        path = base / values[file_key]
        try:
            vec = read_vector(path)
            digests[file_key] = file_digest(path)
        except OSError as e:
            raise ProblemValidationError(f"cannot read {file_key} {path}: {e}")
        except ValueError as e:
            raise ProblemValidationError(str(e))
        return vec
    return parse_profile(values.get(key, "zero"), grid, key)


def parse_problem(
    text: str,
    base_dir: Optional[Path] = None,
    overrides: Sequence[str] = (),
    source: Optional[Path] = None,
) -> LoadedProblem:
    """
    Parse problem text, apply overrides and validate.

    Raises:
        ProblemValidationError: syntax errors, unknown keys, bad values or failed hypotheses
    """
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as e:
        raise ProblemValidationError(f"cannot parse problem file: {e}")
    apply_overrides(parser, overrides)
    _check_keys(parser)
    base = base_dir or Path(".")
    digests: Dict[str, str] = {}

    domain = _coerce(BeamDomain, "domain", _numbers("domain", _section(parser, "domain"), ("c", "d")))
    grid_values = _section(parser, "grid")
    try:
        N = int(grid_values.get("N", "64"))
    except ValueError:
        raise ProblemValidationError(f"grid.N must be an integer, got {grid_values['N']!r}")
    if N < 4:
        raise ProblemValidationError("invalid problem file", [f"grid needs N >= 4 (N = {N})"])
    grid = Grid.from_domain(domain, N)

    damping_values = _numbers("damping", _section(parser, "damping"), ("m", "a", "a1", "a2") + LIST_KEYS)
    if damping_values.get("form") == "custom":
        raise ProblemValidationError("custom damping laws are only available from Python")
    damping = _coerce(DampingSpec, "damping", damping_values)

    restoring_values = _numbers("restoring", _section(parser, "restoring"), ("lambda", "D"))
    if "p" in restoring_values:
        try:
            restoring_values["p"] = int(restoring_values["p"])
        except ValueError:
            raise ProblemValidationError(f"restoring.p must be an integer, got {restoring_values['p']!r}")
    if restoring_values.get("kind") == "custom":
        raise ProblemValidationError("custom restoring laws are only available from Python")
    restoring = _coerce(RestoringSpec, "restoring", restoring_values)

    forcing_values = _numbers("forcing", _section(parser, "forcing"), ("omega", "phase"))
    kind = forcing_values.get("kind", "zero")
    if kind not in ("zero", "static", "time-dependent"):
        raise ProblemValidationError(f"forcing.kind must be zero, static or time-dependent, got {kind!r}")
    if kind == "zero":
        forcing = ForcingSpec()
    else:
        if "profile" not in forcing_values and "profile_file" not in forcing_values:
            raise ProblemValidationError(f"forcing kind {kind} needs profile or profile_file")
        forcing = ForcingSpec(
            kind=kind,
            values=_vector(base, forcing_values, "profile", grid, digests),
            omega=float(forcing_values.get("omega", 0.0)),
            phase=float(forcing_values.get("phase", 0.0)),
        )

    initial_values = _section(parser, "initial")
    init = InitialData(
        u0=_vector(base, initial_values, "u0", grid, digests),
        u1=_vector(base, initial_values, "u1", grid, digests),
    )

    time_values = _section(parser, "time")
    cfg_values = _numbers("time", time_values, ("dt", "T", "newton_tol"))
    for key in ("newton_max_iter", "output_stride"):
        if key in cfg_values:
            try:
                cfg_values[key] = int(cfg_values[key])
            except ValueError:
                raise ProblemValidationError(f"time.{key} must be an integer, got {cfg_values[key]!r}")
    cfg = _coerce(SimConfig, "time", cfg_values)

    problem = validate_problem(domain, grid, damping, restoring, forcing, init, cfg)
    parameters = {section: dict(parser.items(section)) for section in parser.sections()}
    logger.info(
        f"Problem loaded | source: {source or '<text>'} | N: {grid.N} | m: {damping.m:g} | "
        f"certificate admissible: {problem.certificate_admissible}"
    )
    return LoadedProblem(
        problem=problem, path=source, parameters=parameters, overrides=list(overrides), input_digests=digests
    )


def load_problem(path, overrides: Sequence[str] = ()) -> LoadedProblem:
    """
    Read, parse and validate a problem file.

    Raises:
        ProblemValidationError: unreadable file or invalid contents
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ProblemValidationError(f"cannot read problem file {path}: {e}")
    loaded = parse_problem(text, base_dir=path.parent, overrides=overrides, source=path)
    loaded.input_digests = {"problem": file_digest(path), **loaded.input_digests}
    return loaded

"""MDP and experiment-config files, trajectory CSVs.

MDP files are YAML or JSON mappings with the fields accepted by
:func:`qswitch.mdp.validate`. Tensors may be nested lists or flat
row-major lists. An optional ``reward_bound`` raises the default reward
bound of 1.

Trajectory CSVs have one row per recorded step with columns ``k``,
``q_<s>_<a>``, ``ql_<s>_<a>``, ``qu_<s>_<a>``, ``qavg_<s>_<a>`` (1-based
indices, state-major), ``w_inf`` and the consumed sample ``smp_s``,
``smp_a``, ``smp_snext`` (1-based), ``smp_r``. Reals are written with 17
significant digits, so parsing a file gives back the exact doubles. The
final row has no sample and leaves those fields empty.
"""

from __future__ import annotations

import csv
import dataclasses
import io
from pathlib import Path

import numpy as np
import yaml

from .mdp import Mdp, MdpValidationError, to_description, validate
from .switching import CoupledTrajectory


class ParseError(ValueError):
    """A file could not be parsed; the message carries the location."""


def _load_mapping(path: Path) -> dict:
    text = Path(path).read_text()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}, column {mark.column + 1}" if mark else "unknown position"
        problem = getattr(exc, "problem", None) or str(exc)
        raise ParseError(f"{path}: {where}: {problem}") from None
    if not isinstance(data, dict):
        raise ParseError(f"{path}: expected a mapping of field names, got {type(data).__name__}")
    return data


def _field_line(path: Path, field: str):
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        stripped = line.lstrip().lstrip('"').lstrip("'")
        if stripped.startswith(field):
            return lineno
    return None


def read_mdp(path) -> Mdp:
    """Parse and validate an MDP file.

    Validation errors are re-raised with the file name and, when the field
    appears in the file, its line number.
    """
    path = Path(path)
    raw = _load_mapping(path)
    try:
        return validate(raw)
    except MdpValidationError as exc:
        line = _field_line(path, exc.field)
        where = f"{path}:{line}" if line else str(path)
        raise MdpValidationError(exc.field, f"{where}: {exc.message}") from None


def write_mdp(path, mdp: Mdp):
    Path(path).write_text(yaml.safe_dump(to_description(mdp), sort_keys=False))


def read_config(path):
    """Experiment config file: a mapping of :class:`ExperimentConfig` fields."""
    from .experiments import ExperimentConfig

    path = Path(path)
    raw = _load_mapping(path)
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ParseError(f"{path}: unknown config field(s) {', '.join(unknown)}")
    if isinstance(raw.get("mdp_source"), dict):
        raw["mdp_source"] = validate(raw["mdp_source"])
    try:
        return ExperimentConfig(**raw)
    except (TypeError, ValueError) as exc:
        raise ParseError(f"{path}: {exc}") from None


def pair_columns(prefix: str, num_states: int, num_actions: int):
    """Column names in state-major order with the flat index of each."""
    names, index = [], []
    for s in range(num_states):
        for a in range(num_actions):
            names.append(f"{prefix}_{s + 1}_{a + 1}")
            index.append(a * num_states + s)
    return names, np.array(index)


def trajectory_header(num_states: int, num_actions: int):
    header = ["k"]
    for prefix in ("q", "ql", "qu", "qavg"):
        header += pair_columns(prefix, num_states, num_actions)[0]
    return header + ["w_inf", "smp_s", "smp_a", "smp_snext", "smp_r"]


def fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if np.isnan(x):
        return ""
    return format(float(x), ".17g")


def write_trajectory_csv(traj: CoupledTrajectory, target):
    """Write to a path or an open text stream."""
    S, A = traj.num_states, traj.num_actions
    _, idx = pair_columns("q", S, A)
    own = not hasattr(target, "write")
    fh = open(target, "w", newline="") if own else target
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(trajectory_header(S, A))
        for i, k in enumerate(traj.steps):
            row = [str(int(k))]
            for arr in (traj.q, traj.q_lower, traj.q_upper, traj.q_avg):
                row += [fmt(x) for x in arr[i, idx]]
            has_sample = traj.sample_s[i] >= 0
            row.append(fmt(traj.noise_infnorm[i]))
            for arr in (traj.sample_s, traj.sample_a, traj.sample_s_next):
                row.append(str(int(arr[i]) + 1) if has_sample else "")
            row.append(fmt(traj.sample_r[i]))
            w.writerow(row)
    finally:
        if own:
            fh.close()


def trajectory_csv_text(traj: CoupledTrajectory) -> str:
    buf = io.StringIO()
    write_trajectory_csv(traj, buf)
    return buf.getvalue()


def read_trajectory_csv(source, q_star=None) -> CoupledTrajectory:
    """Parse a trajectory CSV back into a :class:`CoupledTrajectory`."""
    fh = open(source, newline="") if not hasattr(source, "read") else source
    try:
        rows = list(csv.reader(fh))
    finally:
        if fh is not source:
            fh.close()
    if not rows:
        raise ParseError("empty trajectory file")
    header, body = rows[0], rows[1:]
    q_cols = [h for h in header if h.startswith("q_")]
    try:
        S = max(int(h.split("_")[1]) for h in q_cols)
        A = max(int(h.split("_")[2]) for h in q_cols)
    except ValueError:
        raise ParseError("trajectory header has no q_<s>_<a> columns") from None
    if header != trajectory_header(S, A):
        raise ParseError("trajectory header does not match the expected layout")
    n = S * A
    _, idx = pair_columns("q", S, A)
    K = len(body)
    blocks = [np.empty((K, n)) for _ in range(4)]
    steps = np.empty(K, dtype=int)
    smp = [np.full(K, -1) for _ in range(3)]
    r = np.full(K, np.nan)
    w = np.full(K, np.nan)

    def real(text):
        return float(text) if text else np.nan

    for i, row in enumerate(body):
        if len(row) != len(header):
            raise ParseError(f"row {i + 2}: expected {len(header)} fields, got {len(row)}")
        steps[i] = int(row[0])
        for j, block in enumerate(blocks):
            block[i, idx] = [float(x) for x in row[1 + j * n: 1 + (j + 1) * n]]
        tail = row[1 + 4 * n:]
        w[i] = real(tail[0])
        for j in range(3):
            smp[j][i] = int(tail[1 + j]) - 1 if tail[1 + j] else -1
        r[i] = real(tail[4])
    return CoupledTrajectory(
        steps=steps, q=blocks[0], q_lower=blocks[1], q_upper=blocks[2], q_avg=blocks[3],
        sample_s=smp[0], sample_a=smp[1], sample_s_next=smp[2], sample_r=r,
        noise_infnorm=w, q_star=q_star, num_states=S,
    )


def write_error_csv(traj: CoupledTrajectory, target):
    """Error channel Q^U_k - Q^L_k: columns ``k``, ``e_<s>_<a>``, ``e_inf``."""
    names, idx = pair_columns("e", traj.num_states, traj.num_actions)
    err = traj.err_upper_lower
    with open(target, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k"] + names + ["e_inf"])
        for i, k in enumerate(traj.steps):
            w.writerow([str(int(k))] + [fmt(x) for x in err[i, idx]]
                       + [fmt(np.max(np.abs(err[i])))])


def read_column(path, name: str) -> np.ndarray:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        return np.array([float(row[name]) for row in reader])

"""CSV panel, report, and config file formats.

Long-format balanced panel CSVs, per-unit estimate reports, Monte Carlo
summary tables, and a flat ``key = value`` config format. All numeric
output uses 17 significant digits so doubles round-trip bitwise.
"""

from __future__ import annotations

import csv
import dataclasses

import numpy as np

from .estimators import EstimateSet
from .exceptions import (
    CommonRegressorMismatchError,
    DimensionError,
    PanelIOError,
    ParseError,
    UnbalancedPanelError,
)
from .inference import InferenceSet
from .panel import PanelData
from .simulation import DgpSpec, McSummary, Truth

__all__ = [
    "load_panel_csv",
    "write_panel_csv",
    "write_truth_csv",
    "write_estimates_csv",
    "write_mc_csv",
    "read_csv_columns",
    "parse_config",
    "load_config",
    "dgp_to_config",
    "dgp_from_config",
]


def _fnum(v) -> str:
    """Serialize a double with enough digits to round-trip bitwise."""
    return format(float(v), ".17g")


def _open_read(path):
    try:
        return open(path, newline="")
    except OSError as exc:
        raise PanelIOError(f"cannot read {path}: {exc}") from exc


def _open_write(path):
    try:
        return open(path, "w", newline="")
    except OSError as exc:
        raise PanelIOError(f"cannot write {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# panel CSV (long format)


def _parse_panel_header(path, header: list[str]) -> tuple[int, int]:
    if len(header) < 4 or header[:3] != ["unit", "time", "y"]:
        raise ParseError(f"{path}: header must start with unit,time,y")
    rest = header[3:]
    k = 0
    while k < len(rest) and rest[k] == f"x{k + 1}":
        k += 1
    s = 0
    while k + s < len(rest) and rest[k + s] == f"d{s + 1}":
        s += 1
    if k == 0 or k + s != len(rest):
        raise ParseError(
            f"{path}: regressor columns must be named x1..xK then d1..dS, got {rest}"
        )
    return k, s


def load_panel_csv(path) -> PanelData:
    """Read a balanced panel from a long-format CSV.

    Expects a header ``unit,time,y,x1..xK,d1..dS`` (S may be zero) and
    one row per (unit, time) cell with integer unit and time labels.
    The label grid must be complete; rows may come in any order and are
    sorted internally. The dK columns must agree across units at equal
    times to within 1e-12; the first unit's values are kept.
    """
    with _open_read(path) as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ParseError(f"{path}: empty file, expected a header row")
        k, s = _parse_panel_header(path, [h.strip() for h in header])
        ncol = 3 + k + s
        cells: dict[tuple[int, int], list[float]] = {}
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != ncol:
                raise ParseError(f"{path}:{lineno}: expected {ncol} columns, got {len(row)}")
            try:
                unit, time = int(row[0]), int(row[1])
                values = [float(v) for v in row[2:]]
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from None
            if (unit, time) in cells:
                raise ParseError(f"{path}:{lineno}: duplicate cell unit {unit}, time {time}")
            cells[(unit, time)] = values
    if not cells:
        raise ParseError(f"{path}: no data rows")
    units = sorted({u for u, _ in cells})
    times = sorted({t for _, t in cells})
    for u in units:
        for t in times:
            if (u, t) not in cells:
                raise UnbalancedPanelError(f"{path}: missing row for unit {u}, time {t}")
    y = np.empty((len(times), len(units)))
    x = np.empty((len(units), len(times), k))
    d = np.empty((len(times), s))
    for j, u in enumerate(units):
        for i, t in enumerate(times):
            vals = cells[(u, t)]
            y[i, j] = vals[0]
            x[j, i] = vals[1 : 1 + k]
            if s:
                drow = np.asarray(vals[1 + k :])
                if j == 0:
                    d[i] = drow
                elif np.abs(d[i] - drow).max() > 1e-12:
                    raise CommonRegressorMismatchError(
                        f"{path}: common regressors of unit {u} differ from "
                        f"unit {units[0]} at time {t}"
                    )
    return PanelData(y=y, x=x, d=d if s else None, require_intercept=False)


def write_panel_csv(panel: PanelData, path) -> None:
    """Emit a panel in the long CSV format :func:`load_panel_csv` reads.

    Units and times are labeled 0..N-1 and 0..T-1, unit-major.
    """
    header = (
        ["unit", "time", "y"]
        + [f"x{j + 1}" for j in range(panel.K)]
        + [f"d{j + 1}" for j in range(panel.S)]
    )
    with _open_write(path) as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(panel.N):
            for t in range(panel.T):
                row = [i, t, _fnum(panel.y[t, i])]
                row += [_fnum(v) for v in panel.x[i, t]]
                if panel.S:
                    row += [_fnum(v) for v in panel.d[t]]
                writer.writerow(row)


# ---------------------------------------------------------------------------
# report CSVs


def write_truth_csv(truth: Truth, path) -> None:
    """Per-unit true coefficients: ``unit,alpha_1..alpha_S,beta_1..beta_K``."""
    s, n = truth.alpha.shape
    k = truth.beta.shape[0]
    header = (
        ["unit"]
        + [f"alpha_{j + 1}" for j in range(s)]
        + [f"beta_{j + 1}" for j in range(k)]
    )
    with _open_write(path) as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(n):
            writer.writerow(
                [i]
                + [_fnum(v) for v in truth.alpha[:, i]]
                + [_fnum(v) for v in truth.beta[:, i]]
            )


def write_estimates_csv(est: EstimateSet, inf: InferenceSet | None, path) -> None:
    """One row per unit: coefficients, then se/t and Wald columns if given.

    The column order is ``unit,method``, the coefficient block
    (``alpha_1..alpha_S`` when the estimate carries common coefficients,
    then ``beta_1..beta_K``), per-coefficient ``se_*`` and ``t_*``
    columns when ``inf`` is given, and one ``W_*`` column per Wald block
    when ``inf.wald`` is set.
    """
    s = est.alpha.shape[0] if est.alpha is not None else 0
    coef_names = [f"alpha_{j + 1}" for j in range(s)] + [
        f"beta_{j + 1}" for j in range(est.K)
    ]
    header = ["unit", "method", *coef_names]
    if inf is not None:
        if inf.order != len(coef_names) or inf.N != est.N:
            raise DimensionError(
                f"inference order {inf.order} x {inf.N} does not match "
                f"estimates {len(coef_names)} x {est.N}"
            )
        header += [f"se_{name}" for name in coef_names]
        header += [f"t_{name}" for name in coef_names]
        if inf.wald is not None:
            header += [f"W_{name}" for name in inf.wald.names]
    coef = est.coefficients()
    with _open_write(path) as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(est.N):
            row = [i, est.method] + [_fnum(v) for v in coef[:, i]]
            if inf is not None:
                se = np.sqrt(np.maximum(np.diag(inf.cov[i]), 0.0) / inf.nobs)
                row += [_fnum(v) for v in se]
                row += [_fnum(v) for v in inf.tstats[:, i]]
                if inf.wald is not None:
                    row += [_fnum(v) for v in inf.wald.stats[:, i]]
            writer.writerow(row)


def write_mc_csv(summary: McSummary, path) -> None:
    """Monte Carlo cell summary: ``estimator,group,mean,rmse,reps,dropped``."""
    with _open_write(path) as fh:
        writer = csv.writer(fh)
        writer.writerow(["estimator", "group", "mean", "rmse", "reps", "dropped"])
        for row in summary.rows():
            writer.writerow(
                [
                    row["estimator"],
                    row["group"],
                    _fnum(row["mean"]),
                    _fnum(row["rmse"]),
                    row["reps"],
                    row["dropped"],
                ]
            )


def read_csv_columns(path) -> dict[str, list[str]]:
    """Read any toolkit-emitted CSV back as header-keyed string columns."""
    with _open_read(path) as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ParseError(f"{path}: empty file, expected a header row")
        if len(set(header)) != len(header):
            raise ParseError(f"{path}: duplicate column names in header")
        columns: dict[str, list[str]] = {name: [] for name in header}
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != len(header):
                raise ParseError(
                    f"{path}:{lineno}: expected {len(header)} columns, got {len(row)}"
                )
            for name, value in zip(header, row):
                columns[name].append(value)
    return columns


# ---------------------------------------------------------------------------
# flat config format


def parse_config(text: str) -> dict[str, str]:
    """Parse flat ``key = value`` lines into an ordered mapping.

    ``#`` starts a comment (full-line or trailing); blank lines are
    skipped; values keep any ``=`` after the first; duplicate keys are
    rejected.
    """
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"config line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ParseError(f"config line {lineno}: empty key")
        if key in out:
            raise ParseError(f"config line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def load_config(path) -> dict[str, str]:
    """Read and parse a flat config file."""
    with _open_read(path) as fh:
        return parse_config(fh.read())


_DGP_INT_KEYS = frozenset({"n", "t", "seed"})
_DGP_BOOL_KEYS = frozenset({"distinct_factors"})


def dgp_to_config(spec: DgpSpec) -> dict[str, str]:
    """Flat key = value representation of a generator configuration."""
    out: dict[str, str] = {}
    for f in dataclasses.fields(spec):
        value = getattr(spec, f.name)
        if f.name in _DGP_BOOL_KEYS:
            out[f.name] = "true" if value else "false"
        elif f.name in _DGP_INT_KEYS:
            out[f.name] = str(int(value))
        elif isinstance(value, tuple):
            out[f.name] = ",".join(_fnum(v) for v in value)
        else:
            out[f.name] = _fnum(value)
    return out


def dgp_from_config(mapping: dict[str, str]) -> DgpSpec:
    """Build a generator configuration from flat config keys.

    Keys are the :class:`~panelgls.simulation.DgpSpec` field names;
    tuple fields take comma-separated numbers. ``n`` and ``t`` are
    required.
    """
    known = {f.name: f for f in dataclasses.fields(DgpSpec)}
    kwargs = {}
    for key, raw in mapping.items():
        if key not in known:
            raise ParseError(f"unknown generator key {key!r}")
        try:
            if key in _DGP_INT_KEYS:
                kwargs[key] = int(raw)
            elif key in _DGP_BOOL_KEYS:
                lowered = raw.lower()
                if lowered not in ("true", "false", "1", "0", "yes", "no"):
                    raise ValueError(f"not a boolean: {raw!r}")
                kwargs[key] = lowered in ("true", "1", "yes")
            elif isinstance(known[key].default, tuple):
                kwargs[key] = tuple(float(part) for part in raw.split(","))
            else:
                kwargs[key] = float(raw)
        except ValueError as exc:
            raise ParseError(f"generator key {key!r}: {exc}") from None
    if "n" not in kwargs or "t" not in kwargs:
        raise ParseError("generator config requires both n and t")
    return DgpSpec(**kwargs)

"""CSV/JSON ingestion and deterministic emission helpers.

All writers format floats with ``repr`` (shortest round-trip form) and sort
JSON keys, so a rerun with the same seed produces byte-identical artifacts.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pandas as pd
import scipy.sparse as sp

from .distributions import DiscreteDist
from .errors import ConfigError, DataError
from .regression import SourceDataset


def load_source_dataset(
    units_path,
    edges_path,
    *,
    outcome: str,
    treatment: str,
    categorical=(),
    ordered=(),
    id_column: str = "id",
    exposure_family: str = "ratio",
    numeric_columns=(),
    block_column: str = None,
) -> SourceDataset:
    """Read a source sample from a units table and an edge list.

    ``edges_path`` rows are (src, dst[, directed]); undirected rows (the
    default) add both orientations.  Ids may be arbitrary scalars and are
    mapped to 0-based unit indices in file order.
    """
    try:
        units = pd.read_csv(units_path)
    except FileNotFoundError as exc:
        raise DataError(f"units table not found: {units_path}") from exc
    for col in [id_column, outcome, treatment, *categorical, *ordered, *numeric_columns]:
        if col not in units.columns:
            raise DataError(f"units table is missing column {col!r}")
    if block_column is not None and block_column not in units.columns:
        raise DataError(f"units table is missing column {block_column!r}")
    ids = units[id_column].tolist()
    if len(set(ids)) != len(ids):
        raise DataError("unit ids must be unique")
    index = {uid: i for i, uid in enumerate(ids)}
    n = len(ids)

    try:
        edges = pd.read_csv(edges_path)
    except FileNotFoundError as exc:
        raise DataError(f"edges table not found: {edges_path}") from exc
    for col in ("src", "dst"):
        if col not in edges.columns:
            raise DataError(f"edges table is missing column {col!r}")
    rows, cols = [], []
    directed_col = edges["directed"] if "directed" in edges.columns else None
    for k in range(len(edges)):
        try:
            i = index[edges["src"].iloc[k]]
            j = index[edges["dst"].iloc[k]]
        except KeyError as exc:
            raise DataError(f"edge endpoint {exc} is not a known unit id") from exc
        if i == j:
            raise DataError(f"self-loop on unit {edges['src'].iloc[k]!r}")
        rows.append(i)
        cols.append(j)
        if directed_col is None or not bool(directed_col.iloc[k]):
            rows.append(j)
            cols.append(i)
    data = np.ones(len(rows), dtype=np.int8)
    adjacency = sp.csr_matrix((data, (rows, cols)), shape=(n, n))
    adjacency.data[:] = 1  # collapse duplicate listings

    return SourceDataset(
        y=units[outcome].to_numpy(dtype=np.float64),
        d=units[treatment].to_numpy(),
        x_cat=units[list(categorical)].to_numpy() if categorical else np.zeros((n, 0)),
        x_ord=units[list(ordered)].to_numpy() if ordered else np.zeros((n, 0)),
        adjacency=adjacency,
        exposure_family=exposure_family,
        columns={name: units[name].to_numpy(dtype=np.float64) for name in numeric_columns},
        blocks=units[block_column].to_numpy() if block_column is not None else None,
    )


def load_distribution(path) -> DiscreteDist:
    return DiscreteDist.from_json(load_json(path))


def save_distribution(dist: DiscreteDist, path) -> None:
    write_json(path, dist.to_json())


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path, header, rows) -> None:
    """Write dict rows under a fixed header with round-trip float formatting."""
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(row[col]) for col in header))
    Path(path).write_text("\n".join(lines) + "\n", newline="\n")


def read_csv_rows(path) -> list:
    """Parse a CSV written by ``write_csv`` back into typed dict rows."""
    text = Path(path).read_text()
    lines = [line for line in text.split("\n") if line]
    header = lines[0].split(",")
    rows = []
    for line in lines[1:]:
        values = []
        for token in line.split(","):
            try:
                values.append(int(token))
            except ValueError:
                try:
                    values.append(float(token))
                except ValueError:
                    values.append(token)
        rows.append(dict(zip(header, values)))
    return rows


def write_json(path, payload) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", newline="\n")


def write_edge_csv(path, edges) -> None:
    write_csv(path, ["src", "dst"], [{"src": int(a), "dst": int(b)} for a, b in edges])


def load_json(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc

"""Result files: CSV with a provenance header, a JSON mirror, time series and plot data."""
import csv
import hashlib
import json
import logging
import os
import warnings

import numpy as np

from hermite_dirac import __version__
from hermite_dirac.fields import PHYSICAL_CONSTANTS
from hermite_dirac.utils.errors import ConfigError

logger = logging.getLogger(__name__)


def config_hash(settings):
    """Short sha256 of the canonical JSON form of the settings."""
    canonical = json.dumps(settings, sort_keys=True, default=str, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def provenance(settings, tier):
    return {
        "config_hash": config_hash(settings),
        "code_version": __version__,
        "tier": tier,
        "constants": dict(PHYSICAL_CONSTANTS),
    }


def _header_lines(prov):
    lines = [f"# config_hash: {prov['config_hash']}",
             f"# code_version: {prov['code_version']}",
             f"# tier: {prov['tier']}"]
    lines += [f"# {name}: {value!r}" for name, value in sorted(prov["constants"].items())]
    return lines


def _format(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_table_csv(table, path):
    with open(path, "w", newline="") as f:
        for line in _header_lines(table.provenance):
            f.write(line + "\n")
        writer = csv.writer(f, quoting=csv.QUOTE_MINIMAL, lineterminator="\r\n")
        writer.writerow(table.columns)
        for row in table.rows:
            writer.writerow([_format(row[c]) for c in table.columns])
    logger.info(f"Wrote {len(table.rows)} row(s) to {path}")


def write_table_json(table, path):
    payload = {"mode": table.mode, "provenance": table.provenance,
               "columns": list(table.columns), "rows": table.rows}
    with open(path, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)


def read_table_json(path):
    from hermite_dirac.models import ResultTable
    with open(path) as f:
        payload = json.load(f)
    return ResultTable(mode=payload["mode"], rows=payload["rows"], provenance=payload["provenance"],
                       columns=tuple(payload["columns"]))


def write_time_series(result, path, prov):
    """CSV of (t, norm, <H>) for one propagation."""
    with open(path, "w", newline="") as f:
        for line in _header_lines(prov):
            f.write(line + "\n")
        writer = csv.writer(f, lineterminator="\r\n")
        writer.writerow(["t_au", "norm", "energy_au"])
        for t, norm, energy in result.time_series():
            writer.writerow([repr(t), repr(norm), _format(energy)])


def emit_plot_data(table, path):
    """Whitespace-separated (b_fm, P_ct) pairs; an empty table gives an empty file."""
    if not table.rows:
        warnings.warn("result table is empty; writing an empty plot-data file")
        logger.warning(f"Empty result table, {path} left empty")
        open(path, "w").close()
        return
    if "P_ct" not in table.columns or not table.has_values("P_ct"):
        raise ConfigError("output.plot: result table has no P_ct column")
    with open(path, "w") as f:
        for line in _header_lines(table.provenance):
            f.write(line + "\n")
        f.write("# b_fm P_ct\n")
        for row in table.rows:
            if row["P_ct"] is not None:
                f.write(f"{row['b_fm']!r} {row['P_ct']!r}\n")


def read_plot_data(path):
    """Parse a plot-data file into an array of shape (rows, 2)."""
    if os.path.getsize(path) == 0:
        return np.empty((0, 2))
    return np.loadtxt(path, comments="#", ndmin=2)

"""CSV emission for experiment runs.

Main tables share one fixed column set so downstream tooling can concat
files from different experiments.  Headers carry the full configuration
as ``# key = value`` comment lines.  Auxiliary tables (convergence
orders, peak tracks, ...) live in sibling files with free-form columns.
"""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass, field

CSV_COLUMNS = [
    "experiment", "H", "ell", "tau", "t",
    "mass", "energy", "energy_lod", "momentum", "xc",
    "err_l2", "err_h1", "iters", "wall_ms",
]


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


@dataclass
class RunReport:
    name: str
    header: list = field(default_factory=list)   # (key, value) pairs
    rows: list = field(default_factory=list)     # dicts over CSV_COLUMNS
    tables: dict = field(default_factory=dict)   # suffix -> (columns, rows)
    profiles: list = field(default_factory=list)  # (label, t, x, density)
    notes: list = field(default_factory=list)

    def add_row(self, **kw):
        unknown = set(kw) - set(CSV_COLUMNS)
        if unknown:
            raise ValueError(f"unknown report columns {sorted(unknown)}")
        self.rows.append(kw)

    def add_table_row(self, suffix, **kw):
        columns, rows = self.tables.setdefault(suffix, (list(kw), []))
        for key in kw:
            if key not in columns:
                columns.append(key)
        rows.append(kw)

    def note(self, text):
        self.notes.append(text)

    # --- serialization -----------------------------------------------------

    def _render(self, columns, rows):
        buf = io.StringIO()
        for key, value in self.header:
            buf.write(f"# {key} = {_fmt(value)}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row.get(col)) for col in columns])
        return buf.getvalue()

    def render_main(self):
        return self._render(CSV_COLUMNS, self.rows)

    def write(self, out_dir):
        """Write all tables; returns the path of the main CSV."""
        os.makedirs(out_dir, exist_ok=True)
        main_path = os.path.join(out_dir, f"{self.name}.csv")
        with open(main_path, "w") as fh:
            fh.write(self.render_main())
        for suffix, (columns, rows) in self.tables.items():
            path = os.path.join(out_dir, f"{self.name}_{suffix}.csv")
            with open(path, "w") as fh:
                fh.write(self._render(columns, rows))
        for label, t, x, density in self.profiles:
            write_density_profile(
                os.path.join(out_dir, f"{self.name}_{label}.csv"), x, density, t)
        if self.notes:
            with open(os.path.join(out_dir, f"{self.name}_notes.txt"),
                      "w") as fh:
                fh.write("\n".join(self.notes) + "\n")
        return main_path


def write_density_profile(path, x, density, t):
    """Dump |u|^2 on the grid nodes at one time, for plotting."""
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w") as fh:
        fh.write(f"# t = {_fmt(float(t))}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["x", "density"])
        for xi, di in zip(x, density):
            writer.writerow([_fmt(float(xi)), _fmt(float(di))])

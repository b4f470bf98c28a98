import csv
import os

import numpy as np

from common import ConfigError, debug_log
from measures_transport import DiscreteMeasure


class MeasureCsvProcessor:
    """
    Reads and writes point clouds as CSV files.
    One row per atom: coordinates x0..x{n-1} followed by an optional `weight`
    column. Missing weights mean the uniform measure.
    """

    def __init__(self, filepath):
        self.filepath = filepath

    def read(self):
        if not os.path.exists(self.filepath):
            raise ConfigError("measure file not found", path=self.filepath)
        with open(self.filepath, newline='') as handle:
            reader = csv.reader(handle)
            rows = [row for row in reader if row and not row[0].startswith('#')]
        if not rows:
            raise ConfigError("measure file is empty", path=self.filepath)

        header = [cell.strip() for cell in rows[0]]
        has_header = not _is_number(header[0])
        body = rows[1:] if has_header else rows
        weight_col = header.index('weight') if has_header and 'weight' in header else None
        try:
            table = np.array([[float(cell) for cell in row] for row in body])
        except ValueError as exc:
            raise ConfigError(f"non-numeric entry in measure file: {exc}", path=self.filepath)
        if table.ndim != 2 or table.shape[0] == 0:
            raise ConfigError("measure file has no atoms", path=self.filepath)

        if weight_col is None:
            debug_log('measure_io', f"Loaded {table.shape[0]} uniform atoms from {self.filepath}")
            return DiscreteMeasure.uniform(table)
        atoms = np.delete(table, weight_col, axis=1)
        debug_log('measure_io', f"Loaded {table.shape[0]} weighted atoms from {self.filepath}")
        return DiscreteMeasure.normalized(atoms, table[:, weight_col])

    def write(self, measure):
        header = [f"x{k}" for k in range(measure.atoms.shape[1])] + ['weight']
        rows = [[_fmt(v) for v in atom] + [_fmt(w)] for atom, w in zip(measure.atoms, measure.weights)]
        self._write_rows(header, rows)

    def write_coupling(self, coupling):
        """Support of the plan: i, j, weight, l(x_i, y_j) and l^q."""
        header = ['i', 'j', 'weight', 'l', 'l_q']
        rows = []
        for i, j in coupling.support_pairs():
            sep = float(coupling.separations[i, j])
            lq = sep ** coupling.q if sep >= 0 else float('-inf')
            rows.append([str(i), str(j), _fmt(coupling.table[i, j]), _fmt(sep), _fmt(lq)])
        self._write_rows(header, rows)

    def _write_rows(self, header, rows):
        tmp = self.filepath + ".tmp"
        with open(tmp, 'w', newline='') as handle:
            writer = csv.writer(handle, lineterminator='\n')
            writer.writerow(header)
            writer.writerows(rows)
        os.replace(tmp, self.filepath)


def _is_number(text):
    try:
        float(text)
        return True
    except ValueError:
        return False


def _fmt(value):
    return "%.12e" % float(value)


def read_measure_csv(path):
    return MeasureCsvProcessor(path).read()


def write_measure_csv(path, measure):
    MeasureCsvProcessor(path).write(measure)


def write_coupling_csv(path, coupling):
    MeasureCsvProcessor(path).write_coupling(coupling)

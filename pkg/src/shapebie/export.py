"""Matrix export: CSV (row, col, re, im), little-endian f64 quadruples, JSON side-car."""

import csv
import json

import numpy as np


def _entries(matrix):
    m = np.asarray(matrix, dtype=complex)
    rows, cols = np.indices(m.shape)
    return np.stack([rows.ravel(), cols.ravel(), m.real.ravel(), m.imag.ravel()], axis=1)


def export_csv(op, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["row", "col", "re", "im"])
        for r, c, re, im in _entries(op.matrix):
            writer.writerow([int(r), int(c), repr(float(re)), repr(float(im))])


def export_binary(op, path):
    """(row, col, re, im) as consecutive little-endian float64 values."""
    _entries(op.matrix).astype("<f8").tofile(path)


def read_binary(path):
    data = np.fromfile(path, dtype="<f8").reshape(-1, 4)
    n = int(data[:, 0].max()) + 1
    out = np.zeros((n, n), dtype=complex)
    out[data[:, 0].astype(int), data[:, 1].astype(int)] = data[:, 2] + 1j * data[:, 3]
    return out


def sidecar(op):
    kappa = complex(op.kappa)
    return {"shape": op.grid.surface.root.name, "N": op.grid.size, "operator": op.tag,
            "kappa_re": kappa.real, "kappa_im": kappa.imag, "deformation": op.deformation}


def export_sidecar(op, path):
    with open(path, "w") as fh:
        json.dump(sidecar(op), fh, indent=2)


def export_operator(op, stem):
    """Write ``stem.csv``, ``stem.bin`` and ``stem.json``."""
    export_csv(op, f"{stem}.csv")
    export_binary(op, f"{stem}.bin")
    export_sidecar(op, f"{stem}.json")


__all__ = ["export_csv", "export_binary", "read_binary", "sidecar", "export_sidecar",
           "export_operator"]

"""
Files written by the experiment commands.
"""
import csv
import json
import logging
import os

import numpy

from ..artifacts import versions
from ..coefficient import read_raster, write_raster

logger = logging.getLogger(name="randomized_gmsfem.harness.reports")

ERROR_COLUMNS = ("mu", "method", "l2_rel", "energy_rel", "t_predict_s", "t_assemble_s", "t_solve_s")
TIMING_COLUMNS = ("t_predict_s", "t_assemble_s", "t_solve_s")
SWEEP_COLUMNS = ("l", "dof", "l2_rel", "energy_rel", "gmsfem_l2_rel", "gmsfem_energy_rel")
TIMING_TABLE_COLUMNS = ("l", "online_s", "gmsfem_s", "ratio", "online_eigensolves")
VARIABILITY_COLUMNS = ("seed", "l2_rel", "energy_rel", "gmsfem_l2_rel", "gmsfem_energy_rel")
PGM_MAXVAL = 65535


def _format(value):
    if value is None:
        return ""
    if isinstance(value, (list, tuple, numpy.ndarray)):
        return " ".join(_format(v) for v in value)
    if isinstance(value, (float, numpy.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path, columns, rows, *, blank=()):
    "Write rows (dicts) in a fixed column order; columns in ``blank`` stay empty."
    with open(path, "w", newline="") as file:
        writer = csv.writer(file, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow(["" if c in blank else _format(row.get(c)) for c in columns])


def nodal_raster(mesh, values):
    "Fine-node values as an array of shape (ny + 1, nx + 1), row 0 at the bottom."
    return numpy.asarray(values, dtype=float).reshape(mesh.ny + 1, mesh.nx + 1)


def write_pgm(path, raster):
    """
    Write a raster as a plain (P2) 16-bit PGM, min-max scaled.

    The image is (columns x rows) of the raster; raster row 0 is drawn at the
    bottom of the image.
    """
    raster = numpy.asarray(raster, dtype=float)
    low, high = raster.min(), raster.max()
    span = high - low
    scaled = numpy.zeros(raster.shape, dtype=int)
    if span > 0:
        scaled = numpy.rint((raster - low) / span * PGM_MAXVAL).astype(int)
    height, width = raster.shape
    with open(path, "w") as file:
        file.write(f"P2\n{width} {height}\n{PGM_MAXVAL}\n")
        for row in scaled[::-1]:
            file.write(" ".join(str(v) for v in row))
            file.write("\n")


def read_pgm(path):
    "Read a P2 PGM written by :func:`write_pgm`; returns (width, height, maxval, pixels)."
    with open(path) as file:
        tokens = file.read().split()
    if tokens[0] != "P2":
        raise ValueError(f"{path} is not a plain PGM")
    width, height, maxval = (int(t) for t in tokens[1:4])
    pixels = numpy.array(tokens[4:], dtype=int).reshape(height, width)
    return width, height, maxval, pixels


def _label(method, index):
    return f"{method}-{index:02d}"


def emit_outputs(report, directory, mesh, *, deterministic=False):
    """
    Write an :class:`ErrorReport`.

    Files
    -----
    errors.csv
        One row per (mu*, method), columns :data:`ERROR_COLUMNS`.
    solution-<method>-<NN>.txt / .pgm
        Raw nodal raster (text raster format) and a 16-bit PGM heat map of
        every solution, NN being the index of mu*.
    run.json
        The config, seeds, diagnostics and library versions.

    Parameters
    ----------
    report : ErrorReport
    directory : str | Path
    mesh : StructuredMesh
    deterministic : bool, optional
        Leave the timing columns empty so that reruns give identical bytes.

    Returns
    -------
    filenames : List[str]
    """
    os.makedirs(directory, exist_ok=True)
    filenames = []
    path = os.path.join(directory, "errors.csv")
    write_csv(path, ERROR_COLUMNS, report.rows, blank=TIMING_COLUMNS if deterministic else ())
    filenames.append(path)
    for (index, method), values in sorted(report.solutions.items()):
        raster = nodal_raster(mesh, values)
        stem = os.path.join(directory, f"solution-{_label(method, index)}")
        write_raster(f"{stem}.txt", raster)
        write_pgm(f"{stem}.pgm", raster)
        filenames.extend([f"{stem}.txt", f"{stem}.pgm"])
    path = os.path.join(directory, "run.json")
    with open(path, "w") as file:
        json.dump(
            {
                "config": report.config.to_dict(),
                "seed": report.config.seed,
                "diagnostics": report.diagnostics,
                "versions": versions(),
            },
            file,
            indent=2,
            sort_keys=True,
        )
        file.write("\n")
    filenames.append(path)
    logger.info("wrote %d report files to %s", len(filenames), directory)
    return filenames


def read_solution(directory, method, index=0):
    "Nodal values of a solution written by :func:`emit_outputs`."
    raster = read_raster(os.path.join(directory, f"solution-{_label(method, index)}.txt"))
    return raster.ravel()


def emit_sweep(rows, directory):
    """
    Write sweep.csv and decay.txt, a raster of log10 errors with one row per l
    (columns: L2, energy).
    """
    os.makedirs(directory, exist_ok=True)
    write_csv(os.path.join(directory, "sweep.csv"), SWEEP_COLUMNS, rows)
    decay = numpy.log10([[row["l2_rel"], row["energy_rel"]] for row in rows])
    write_raster(os.path.join(directory, "decay.txt"), decay)
    return [os.path.join(directory, "sweep.csv"), os.path.join(directory, "decay.txt")]


def emit_timing(rows, directory):
    os.makedirs(directory, exist_ok=True)
    path = os.path.join(directory, "timing.csv")
    write_csv(path, TIMING_TABLE_COLUMNS, rows)
    return [path]


def emit_variability(rows, summary, directory):
    os.makedirs(directory, exist_ok=True)
    path = os.path.join(directory, "variability.csv")
    write_csv(path, VARIABILITY_COLUMNS, rows)
    with open(os.path.join(directory, "variability.json"), "w") as file:
        json.dump(summary, file, indent=2, sort_keys=True)
        file.write("\n")
    return [path, os.path.join(directory, "variability.json")]

"""
On-disk artifacts of the offline stage.

A bundle directory holds::

    manifest.json            run description: config, samples, seeds, versions
    neighborhood-XXX.npz     R_snap, chi_i and eigendata of every training sample
    reduced.npz              reduced operator blocks, POD bases and spectra
    predictor-<kind>.npz     fitted gPC or GPR state

Each ``.npz`` file carries a ``header`` entry holding JSON text with at least
``format_version``. Arrays are little-endian float64 or int64.
"""
import json
import logging
import os
import platform

import numpy
import scipy
import sklearn

from .errors import ArtifactError
from .msbasis import LocalEigenData
from .predict import GPC, GPR, GprPredictor, GpcPredictor, HermiteBasis
from .rom import PodBasis, ReducedOperators

logger = logging.getLogger(name="randomized_gmsfem.artifacts")

FORMAT_VERSION = 1
MANIFEST = "manifest.json"
REDUCED = "reduced.npz"


def neighborhood_filename(i):
    return f"neighborhood-{i:03d}.npz"


def predictor_filename(kind):
    return f"predictor-{kind}.npz"


def _encode(value):
    value = numpy.asarray(value)
    if value.dtype.kind in "iub":
        return value.astype("<i8")
    return value.astype("<f8")


def write_npz(path, header, arrays):
    "Write arrays plus a JSON header to an uncompressed npz file."
    header = dict(header, format_version=FORMAT_VERSION)
    payload = {name: _encode(array) for name, array in arrays.items()}
    payload["header"] = numpy.array(json.dumps(header, sort_keys=True))
    with open(path, "wb") as file:
        numpy.savez(file, **payload)


def read_npz(path):
    """
    Read a file written by :func:`write_npz`.

    Returns
    -------
    header : dict
    arrays : Dict[str, numpy.ndarray]

    Raises
    ------
    ArtifactError
        If the file is missing, unreadable, or of another format version.
    """
    try:
        with numpy.load(path, allow_pickle=False) as data:
            arrays = {name: data[name] for name in data.files}
    except (OSError, ValueError) as err:
        raise ArtifactError(f"cannot read artifact {path}: {err}") from err
    try:
        header = json.loads(str(arrays.pop("header")))
    except (KeyError, json.JSONDecodeError) as err:
        raise ArtifactError(f"artifact {path} has no valid header") from err
    if header.get("format_version") != FORMAT_VERSION:
        raise ArtifactError(
            f"artifact {path} has format version {header.get('format_version')!r}, "
            f"expected {FORMAT_VERSION}"
        )
    return header, arrays


def versions():
    from . import __version__

    return {
        "randomized_gmsfem": __version__,
        "numpy": numpy.__version__,
        "scipy": scipy.__version__,
        "scikit-learn": sklearn.__version__,
        "python": platform.python_version(),
    }


def save_manifest(directory, manifest):
    "Write manifest.json, adding the format version and library versions."
    manifest = dict(manifest, format_version=FORMAT_VERSION, versions=versions())
    with open(os.path.join(directory, MANIFEST), "w") as file:
        json.dump(manifest, file, indent=2, sort_keys=True)
        file.write("\n")


def load_manifest(directory):
    path = os.path.join(directory, MANIFEST)
    try:
        with open(path) as file:
            manifest = json.load(file)
    except FileNotFoundError as err:
        raise ArtifactError(f"no artifact manifest at {path}") from err
    except json.JSONDecodeError as err:
        raise ArtifactError(f"manifest {path} is not valid JSON: {err}") from err
    if manifest.get("format_version") != FORMAT_VERSION:
        raise ArtifactError(f"manifest {path} has an unsupported format version")
    return manifest


def save_neighborhood(directory, snapshots, chi, eigendata):
    """
    Persist one neighborhood: R_snap, chi_i and eigendata for every sample.
    """
    index = snapshots.neighborhood.index
    header = {
        "neighborhood": index,
        "num_samples": len(eigendata),
        "jitter": [item.jitter for item in eigendata],
    }
    arrays = {
        "nodes": snapshots.neighborhood.nodes,
        "snapshots": snapshots.basis,
        "snapshot_mu": snapshots.mu,
        "chi": chi,
        "mu": numpy.array([item.mu for item in eigendata]),
        "eigenvalues": numpy.array([item.eigenvalues for item in eigendata]),
        "eigenvectors": numpy.array([item.vectors for item in eigendata]),
    }
    write_npz(os.path.join(directory, neighborhood_filename(index)), header, arrays)


def load_neighborhood(directory, i):
    """
    Returns
    -------
    arrays : dict
        ``nodes``, ``snapshots``, ``snapshot_mu``, ``chi``.
    eigendata : List[LocalEigenData]
    """
    header, arrays = read_npz(os.path.join(directory, neighborhood_filename(i)))
    eigendata = [
        LocalEigenData(i, mu, values, vectors, jitter)
        for mu, values, vectors, jitter in zip(
            arrays["mu"], arrays["eigenvalues"], arrays["eigenvectors"], header["jitter"]
        )
    ]
    return arrays, eigendata


def save_reduced(directory, reduced):
    "Persist :class:`ReducedOperators`."
    header = {
        "num_nodes": reduced.num_nodes,
        "coordinates": reduced.coordinates,
        "num_neighborhoods": reduced.num_neighborhoods,
        "pairs": [list(pair) for pair in reduced.blocks],
        "pod": [
            [{"modes": list(b.modes), "tolerance": b.tolerance} for b in bases]
            for bases in reduced.pod
        ],
    }
    arrays = {"lift": reduced.lift}
    for i in range(reduced.num_neighborhoods):
        arrays[f"nodes_{i}"] = reduced.nodes[i]
        arrays[f"reconstruction_{i}"] = reduced.reconstruction[i]
        arrays[f"load_{i}"] = reduced.load[i]
        arrays[f"lift_coupling_{i}"] = reduced.lift_coupling[i]
        for g, basis in enumerate(reduced.pod[i]):
            arrays[f"pod_{i}_{g}"] = basis.vectors
            arrays[f"sigma_{i}_{g}"] = basis.singular_values
    for (i, j), block in reduced.blocks.items():
        arrays[f"block_{i}_{j}"] = block
    write_npz(os.path.join(directory, REDUCED), header, arrays)


def load_reduced(directory):
    "Load :class:`ReducedOperators` without touching the mesh or coefficient."
    header, arrays = read_npz(os.path.join(directory, REDUCED))
    count = header["num_neighborhoods"]
    try:
        pod = [
            [
                PodBasis(
                    i,
                    tuple(entry["modes"]),
                    arrays[f"pod_{i}_{g}"],
                    arrays[f"sigma_{i}_{g}"],
                    entry["tolerance"],
                )
                for g, entry in enumerate(header["pod"][i])
            ]
            for i in range(count)
        ]
        return ReducedOperators(
            header["num_nodes"],
            header["coordinates"],
            [arrays[f"nodes_{i}"] for i in range(count)],
            [arrays[f"reconstruction_{i}"] for i in range(count)],
            {(i, j): arrays[f"block_{i}_{j}"] for i, j in header["pairs"]},
            [arrays[f"load_{i}"] for i in range(count)],
            [arrays[f"lift_coupling_{i}"] for i in range(count)],
            arrays["lift"],
            pod,
        )
    except KeyError as err:
        raise ArtifactError(f"reduced operator artifact is missing {err}") from err


def _key_name(key):
    return "_".join(str(part) for part in key)


def save_predictor(directory, predictor, *, seed=None):
    "Persist a fitted gPC or GPR predictor as predictor-<kind>.npz."
    keys = [list(key) for key in predictor.keys]
    header = {"kind": predictor.kind, "keys": keys, "seed": seed}
    arrays = {}
    if predictor.kind == GPC:
        header.update(degree=predictor.basis.degree, dimension=predictor.basis.dimension)
        for key in predictor.keys:
            arrays[f"coefficients_{_key_name(key)}"] = predictor.coefficients[key]
            arrays[f"residuals_{_key_name(key)}"] = predictor.residuals[key]
    else:
        header.update(length_scale=predictor.length_scale, jitter=predictor.jitter)
        arrays["inputs"] = predictor.inputs
        for key in predictor.keys:
            arrays[f"targets_{_key_name(key)}"] = predictor.targets[key]
    write_npz(os.path.join(directory, predictor_filename(predictor.kind)), header, arrays)


def load_predictor(directory, kind):
    "Load the predictor of the given kind (``gpc`` or ``gpr``)."
    if kind not in (GPC, GPR):
        raise ArtifactError(f"unknown predictor kind {kind!r}")
    header, arrays = read_npz(os.path.join(directory, predictor_filename(kind)))
    keys = [tuple(key) for key in header["keys"]]
    try:
        if kind == GPC:
            basis = HermiteBasis(header["dimension"], header["degree"])
            return GpcPredictor(
                basis,
                {key: arrays[f"coefficients_{_key_name(key)}"] for key in keys},
                {key: arrays[f"residuals_{_key_name(key)}"] for key in keys},
            )
        # Conditioning with the stored jitter and length scale is deterministic.
        return GprPredictor(
            arrays["inputs"],
            {key: arrays[f"targets_{_key_name(key)}"] for key in keys},
            header["length_scale"],
            header["jitter"],
        )
    except KeyError as err:
        raise ArtifactError(f"{kind} predictor artifact is missing {err}") from err

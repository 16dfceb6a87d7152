"""Model archive format.

A trained model is one self-describing binary file::

    bytes 0..7    magic b"ESNADJ1\\n"
    bytes 8..11   header length L, little-endian uint32
    bytes 12..    UTF-8 JSON header of length L
    then          raw array payload

The JSON header carries the format version, hyperparameters (seed included),
normalization vectors, the time step, and an ``arrays`` manifest: one entry
per array with name, dtype, shape and byte offset into the payload.  Arrays
are stored row-major (C order).  The sparse reservoir matrix is stored as
its CSR triple (data, indices, indptr) plus shape.

``save_model`` also writes a ``.json`` sidecar with everything except the
payload, for human inspection.
"""
from __future__ import annotations

import json
from dataclasses import asdict
from pathlib import Path

import numpy as np
import scipy.sparse as sparse

from .errors import EsnAdjointError
from .esn import EsnHyperParams, EsnModel, ReservoirMatrices

MAGIC = b"ESNADJ1\n"
FORMAT_VERSION = 1


class ArchiveError(EsnAdjointError, ValueError):
    """The file is not a valid model archive."""


def _array_entries(model: EsnModel):
    mats = model.mats
    w = mats.w.tocsr()
    arrays = {
        "w_in_y": np.ascontiguousarray(mats.w_in_y, dtype="<f8"),
        "w_in_p": np.ascontiguousarray(mats.w_in_p, dtype="<f8"),
        "w_data": np.ascontiguousarray(w.data, dtype="<f8"),
        "w_indices": np.ascontiguousarray(w.indices, dtype="<i8"),
        "w_indptr": np.ascontiguousarray(w.indptr, dtype="<i8"),
        "y_mean": np.ascontiguousarray(model.y_mean, dtype="<f8"),
        "y_scale": np.ascontiguousarray(model.y_scale, dtype="<f8"),
    }
    if mats.w_out is not None:
        arrays["w_out"] = np.ascontiguousarray(mats.w_out, dtype="<f8")
    return arrays


def save_model(model: EsnModel, path) -> Path:
    """Write the archive; a JSON sidecar lands next to it."""
    path = Path(path)
    arrays = _array_entries(model)
    manifest = []
    offset = 0
    for name, arr in arrays.items():
        manifest.append(
            {"name": name, "dtype": arr.dtype.str, "shape": list(arr.shape),
             "offset": offset}
        )
        offset += arr.nbytes
    header = {
        "format_version": FORMAT_VERSION,
        "hyper": asdict(model.hyper),
        "n_y": model.n_y,
        "n_p": model.n_p,
        "w_shape": list(model.mats.w.shape),
        "dt": model.dt,
        "trained": model.mats.w_out is not None,
        "arrays": manifest,
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(len(blob).to_bytes(4, "little"))
        fh.write(blob)
        for arr in arrays.values():
            fh.write(arr.tobytes())
    sidecar = {k: v for k, v in header.items() if k != "arrays"}
    path.with_suffix(path.suffix + ".json").write_text(
        json.dumps(sidecar, sort_keys=True, indent=2) + "\n"
    )
    return path


def load_model(path) -> EsnModel:
    """Read an archive back into a model, bit-exactly."""
    path = Path(path)
    raw = path.read_bytes()
    if raw[: len(MAGIC)] != MAGIC:
        raise ArchiveError(f"{path} is not a model archive (bad magic)")
    hlen = int.from_bytes(raw[len(MAGIC) : len(MAGIC) + 4], "little")
    header = json.loads(raw[len(MAGIC) + 4 : len(MAGIC) + 4 + hlen].decode("utf-8"))
    if header.get("format_version") != FORMAT_VERSION:
        raise ArchiveError(f"unsupported format version {header.get('format_version')}")
    payload = raw[len(MAGIC) + 4 + hlen :]

    arrays = {}
    for entry in header["arrays"]:
        dtype = np.dtype(entry["dtype"])
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        arr = np.frombuffer(
            payload, dtype=dtype, count=count, offset=start
        ).reshape(shape)
        arrays[entry["name"]] = arr.copy()

    hyper_dict = dict(header["hyper"])
    hyper_dict["sigma_p"] = tuple(hyper_dict["sigma_p"])
    hyper_dict["k_p"] = tuple(hyper_dict["k_p"])
    hyper = EsnHyperParams(**hyper_dict)
    w = sparse.csr_array(
        (arrays["w_data"], arrays["w_indices"], arrays["w_indptr"]),
        shape=tuple(header["w_shape"]),
    )
    mats = ReservoirMatrices(
        w_in_y=arrays["w_in_y"],
        w_in_p=arrays["w_in_p"],
        w=w,
        w_out=arrays.get("w_out"),
    )
    return EsnModel(
        hyper=hyper,
        mats=mats,
        dt=float(header["dt"]),
        y_mean=arrays["y_mean"],
        y_scale=arrays["y_scale"],
    )

"""Versioned on-disk containers for trained models.

Layout: magic, format version, a JSON header, then raw float64 parameter
blobs. Writing and reading round-trip bit-exactly; the parameter content
hash is stored in the header and re-verified on load.
"""

from __future__ import annotations

import hashlib
import json

from . import gan as gan_mod
from . import gbdt, nn

MAGIC = b"GANIDS\x00"
FORMAT_VERSION = 1


class ArchiveError(ValueError):
    pass


def _write(path, header: dict, blobs: list):
    payload = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(FORMAT_VERSION.to_bytes(2, "little"))
        f.write(len(payload).to_bytes(8, "little"))
        f.write(payload)
        for blob in blobs:
            f.write(len(blob).to_bytes(8, "little"))
            f.write(blob)


def _read(path):
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:len(MAGIC)] != MAGIC:
        raise ArchiveError(f"{path}: not a model archive")
    version = int.from_bytes(raw[len(MAGIC):len(MAGIC) + 2], "little")
    if version != FORMAT_VERSION:
        raise ArchiveError(f"{path}: unsupported format version {version}")
    off = len(MAGIC) + 2
    n = int.from_bytes(raw[off:off + 8], "little")
    off += 8
    header = json.loads(raw[off:off + n].decode())
    off += n
    blobs = []
    while off < len(raw):
        m = int.from_bytes(raw[off:off + 8], "little")
        off += 8
        blobs.append(raw[off:off + m])
        off += m
    return header, blobs


def file_hash(path):
    h = hashlib.sha256()
    with open(path, "rb") as f:
        h.update(f.read())
    return h.hexdigest()


def save_gan(path, model: gan_mod.GanModel):
    header = {
        "kind": "gan",
        "phase": model.phase,
        "feature_dim": model.feature_dim,
        "g_spec": model.g_spec.to_dict(),
        "d_spec": model.d_spec.to_dict(),
        "cfg": model.cfg.to_dict(),
        "g_hash": model.g_params.content_hash(),
        "d_hash": model.d_params.content_hash(),
    }
    _write(path, header, [model.g_params.to_bytes(), model.d_params.to_bytes()])


def load_gan(path) -> gan_mod.GanModel:
    header, blobs = _read(path)
    if header.get("kind") != "gan":
        raise ArchiveError(f"{path}: expected a gan archive")
    g_params = nn.ParamSet.from_bytes(blobs[0])
    d_params = nn.ParamSet.from_bytes(blobs[1])
    if g_params.content_hash() != header["g_hash"] \
            or d_params.content_hash() != header["d_hash"]:
        raise ArchiveError(f"{path}: content hash mismatch")
    model = gan_mod.GanModel(
        nn.NetworkSpec.from_dict(header["g_spec"]), g_params,
        nn.NetworkSpec.from_dict(header["d_spec"]), d_params,
        header["feature_dim"], gan_mod.GanConfig.from_dict(header["cfg"]),
        phase=header["phase"])
    return model


def save_ensemble(path, ensemble: gbdt.Ensemble):
    blob = json.dumps(ensemble.to_dict(), sort_keys=True).encode()
    header = {"kind": "ensemble",
              "hash": hashlib.sha256(blob).hexdigest()}
    _write(path, header, [blob])


def load_ensemble(path) -> gbdt.Ensemble:
    header, blobs = _read(path)
    if header.get("kind") != "ensemble":
        raise ArchiveError(f"{path}: expected an ensemble archive")
    if hashlib.sha256(blobs[0]).hexdigest() != header["hash"]:
        raise ArchiveError(f"{path}: content hash mismatch")
    return gbdt.Ensemble.from_dict(json.loads(blobs[0].decode()))

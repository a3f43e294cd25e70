"""Versioned single-file serialization of rule models.

Layout:  magic "TJWDMODL" | u32 header length | canonical JSON header |
float64 little-endian array blobs in header order.

All real numbers live in the binary section (scalars are an 8-double blob),
so a load/save round-trip reproduces decision values bit-for-bit. The JSON
header is emitted with sorted keys and no timestamps, making repeated saves
of one model byte-identical.
"""

from __future__ import annotations

import json
import os
import struct

import numpy as np

from .detection import RuleModel
from .errors import IoError, SchemaError, VersionMismatch
from .features import FeatureConfig, Scaler
from .svm import KernelParams, SvmModel

MAGIC = b"TJWDMODL"
FORMAT_VERSION = 1

_SCALARS = ("bias", "C", "gamma", "A", "B", "tau_right", "tau_wrong")


def _feature_config_header(config: FeatureConfig) -> dict:
    d = config.to_dict()
    # log_floor is a real number; it travels in the binary section
    del d["log_floor"]
    return d


def save_model(rule_model: RuleModel, path) -> None:
    """Atomically write a rule model (write-temp-then-rename)."""
    m = rule_model.svm
    dim = m.support_vectors.shape[1]
    arrays = [
        ("scalars", np.array([
            m.bias, m.C, m.kernel.gamma,
            rule_model.calibration[0], rule_model.calibration[1],
            rule_model.tau_right, rule_model.tau_wrong,
        ])),
        ("log_floor", np.array([rule_model.feature_config.log_floor])),
        ("scaler_mean", m.scaler.mean),
        ("scaler_std", m.scaler.std),
        ("support_vectors", m.support_vectors),
        ("dual_coefs", m.dual_coefs),
    ]
    header = {
        "format_version": FORMAT_VERSION,
        "rule_id": rule_model.rule_id,
        "feature_config": _feature_config_header(rule_model.feature_config),
        "config_fingerprint": rule_model.config_fingerprint,
        "dataset_hash": rule_model.dataset_hash,
        "train_seed": rule_model.train_seed,
        "n_support": int(m.support_vectors.shape[0]),
        "dim": int(dim),
        "arrays": [{"name": name, "shape": list(arr.shape)} for name, arr in arrays],
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("ascii")

    blob = bytearray()
    blob += MAGIC
    blob += struct.pack("<I", len(header_bytes))
    blob += header_bytes
    for _, arr in arrays:
        blob += np.ascontiguousarray(arr, dtype="<f8").tobytes()

    tmp = f"{path}.tmp"
    try:
        with open(tmp, "wb") as fh:
            fh.write(bytes(blob))
        os.replace(tmp, path)
    except OSError as exc:
        raise IoError(f"cannot write model file {path}: {exc}") from exc


def load_model(path) -> RuleModel:
    """Read a model file; raises VersionMismatch for unreadable versions and
    SchemaError for internally inconsistent shapes.
    """
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise IoError(f"cannot read model file {path}: {exc}") from exc

    if len(data) < len(MAGIC) + 4 or data[: len(MAGIC)] != MAGIC:
        raise SchemaError(f"{path}: not a rule-model file")
    header_len = struct.unpack_from("<I", data, len(MAGIC))[0]
    body_start = len(MAGIC) + 4 + header_len
    if body_start > len(data):
        raise SchemaError(f"{path}: truncated header")
    try:
        header = json.loads(data[len(MAGIC) + 4: body_start])
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: unreadable header: {exc}") from exc

    version = header.get("format_version")
    if version != FORMAT_VERSION:
        raise VersionMismatch(version, FORMAT_VERSION)

    arrays = {}
    offset = body_start
    for spec in header["arrays"]:
        count = int(np.prod(spec["shape"])) if spec["shape"] else 1
        end = offset + 8 * count
        if end > len(data):
            raise SchemaError(f"{path}: array {spec['name']} overruns file")
        arrays[spec["name"]] = np.frombuffer(
            data[offset:end], dtype="<f8"
        ).reshape(spec["shape"]).astype(np.float64)
        offset = end
    if offset != len(data):
        raise SchemaError(f"{path}: trailing bytes after arrays")

    for name in ("scalars", "log_floor", "scaler_mean", "scaler_std",
                 "support_vectors", "dual_coefs"):
        if name not in arrays:
            raise SchemaError(f"{path}: missing array {name}")

    sv = arrays["support_vectors"]
    dc = arrays["dual_coefs"]
    if sv.ndim != 2 or dc.ndim != 1 or sv.shape[0] != dc.shape[0]:
        raise SchemaError(
            f"{path}: {dc.shape[0]} dual coefficients for {sv.shape[0]} support vectors"
        )
    if sv.shape != (header["n_support"], header["dim"]):
        raise SchemaError(f"{path}: support vector shape {sv.shape} contradicts header")
    if arrays["scaler_mean"].shape != (header["dim"],) or \
            arrays["scaler_std"].shape != (header["dim"],):
        raise SchemaError(f"{path}: scaler shape contradicts dimension {header['dim']}")
    if arrays["scalars"].shape != (len(_SCALARS),):
        raise SchemaError(f"{path}: expected {len(_SCALARS)} scalars")

    scalars = dict(zip(_SCALARS, arrays["scalars"]))
    config = FeatureConfig(
        log_floor=float(arrays["log_floor"][0]), **header["feature_config"]
    )
    model = SvmModel(
        support_vectors=sv,
        dual_coefs=dc,
        bias=float(scalars["bias"]),
        kernel=KernelParams(gamma=float(scalars["gamma"])),
        C=float(scalars["C"]),
        scaler=Scaler(mean=arrays["scaler_mean"], std=arrays["scaler_std"]),
    )
    return RuleModel(
        rule_id=header["rule_id"],
        svm=model,
        calibration=(float(scalars["A"]), float(scalars["B"])),
        tau_right=float(scalars["tau_right"]),
        tau_wrong=float(scalars["tau_wrong"]),
        feature_config=config,
        config_fingerprint=header["config_fingerprint"],
        dataset_hash=header["dataset_hash"],
        train_seed=int(header["train_seed"]),
    )

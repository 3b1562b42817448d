"""Checkpoint archive: a zip of ``.npy`` arrays plus a JSON header.

Layout::

    meta.json                     schema_version, model config, seed, step, ...
    params/<name>.npy             model state_dict entries
    optim/<name>/<key>.npy        AdamW state per parameter (exp_avg, exp_avg_sq, step)

Entries are stored uncompressed with a fixed timestamp, in sorted order,
so saving the same state twice gives identical bytes.
"""
import io
import json
import zipfile
from dataclasses import dataclass, field

import numpy as np
import torch

from .errors import CheckpointError
from .model import ModelConfig, UnfoldNet

FORMAT = "uwunfold-checkpoint"
SCHEMA_VERSION = 1
_EPOCH = (1980, 1, 1, 0, 0, 0)


@dataclass
class Checkpoint:
    config: ModelConfig
    params: dict
    seed: int = 0
    step: int = 0
    optim: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)


def _npy_bytes(arr):
    buf = io.BytesIO()
    # np.ascontiguousarray would promote 0-d arrays to 1-d
    arr = np.asarray(arr)
    np.lib.format.write_array(buf, arr if arr.flags.c_contiguous else arr.copy(), allow_pickle=False)
    return buf.getvalue()


def _write(zf, name, data):
    info = zipfile.ZipInfo(name, date_time=_EPOCH)
    info.compress_type = zipfile.ZIP_STORED
    info.external_attr = 0o644 << 16
    zf.writestr(info, data)


def _to_numpy(t):
    return t.detach().cpu().numpy() if isinstance(t, torch.Tensor) else np.asarray(t)


def save_checkpoint(path, ckpt: Checkpoint):
    meta = {
        "format": FORMAT,
        "schema_version": SCHEMA_VERSION,
        "model_config": ckpt.config.to_dict(),
        "seed": int(ckpt.seed),
        "step": int(ckpt.step),
        "extra": ckpt.extra,
    }
    entries = {"meta.json": json.dumps(meta, sort_keys=True, indent=1).encode()}
    for name, t in ckpt.params.items():
        entries[f"params/{name}.npy"] = _npy_bytes(_to_numpy(t))
    for name, state in ckpt.optim.items():
        for key, t in state.items():
            entries[f"optim/{name}/{key}.npy"] = _npy_bytes(_to_numpy(t))
    with zipfile.ZipFile(path, "w") as zf:
        for name in sorted(entries):
            _write(zf, name, entries[name])
    return path


def load_checkpoint(path):
    try:
        zf = zipfile.ZipFile(path)
    except (OSError, zipfile.BadZipFile) as exc:
        raise CheckpointError(f"{path}: not a checkpoint archive ({exc})") from exc
    with zf:
        try:
            meta = json.loads(zf.read("meta.json"))
        except KeyError as exc:
            raise CheckpointError(f"{path}: missing meta.json") from exc
        if meta.get("format") != FORMAT:
            raise CheckpointError(f"{path}: unknown format {meta.get('format')!r}")
        version = meta.get("schema_version")
        if version != SCHEMA_VERSION:
            raise CheckpointError(
                f"{path}: checkpoint schema version {version}, this build reads version {SCHEMA_VERSION}")
        params, optim = {}, {}
        for name in zf.namelist():
            if not name.endswith(".npy"):
                continue
            arr = np.lib.format.read_array(io.BytesIO(zf.read(name)), allow_pickle=False)
            stem = name[:-4]
            if stem.startswith("params/"):
                params[stem[len("params/"):]] = torch.from_numpy(arr.copy())
            elif stem.startswith("optim/"):
                pname, key = stem[len("optim/"):].rsplit("/", 1)
                optim.setdefault(pname, {})[key] = torch.from_numpy(arr.copy())
    config = ModelConfig.from_dict(meta["model_config"])
    return Checkpoint(config, params, meta["seed"], meta["step"], optim, meta.get("extra", {}))


def model_from_checkpoint(ckpt, dtype=None):
    model = UnfoldNet(ckpt.config)
    dtype = dtype or next(iter(ckpt.params.values())).dtype
    model.to(dtype)
    try:
        model.load_state_dict(ckpt.params)
    except RuntimeError as exc:
        raise CheckpointError(f"parameters do not match the stored model config: {exc}") from exc
    return model


def optimizer_state(model, optimizer):
    """AdamW state keyed by parameter name."""
    names = {id(p): n for n, p in model.named_parameters()}
    out = {}
    for group in optimizer.param_groups:
        for p in group["params"]:
            st = optimizer.state.get(p)
            if st:
                out[names[id(p)]] = {k: v.detach().clone() if isinstance(v, torch.Tensor)
                                     else torch.tensor(v) for k, v in st.items()}
    return out


def load_optimizer_state(model, optimizer, state):
    params = dict(model.named_parameters())
    for name, st in state.items():
        if name not in params:
            raise CheckpointError(f"optimizer state for unknown parameter {name!r}")
        p = params[name]
        optimizer.state[p] = {k: (v.to(p.dtype) if k != "step" else v.clone()) for k, v in st.items()}

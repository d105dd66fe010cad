"""Checkpoint archive: a directory of TensorFiles plus ``manifest.json``.

manifest.json::

    {"format": "linmotion-checkpoint/1",
     "config": {...DenoiserConfig fields...},
     "params": {"<name>": "params/<name>.mkt", ...},
     "optimizer": null | {"lr", "beta1", "beta2", "eps", "step_count",
                          "m": {name: file}, "v": {name: file}},
     "meta": {...free-form...}}
"""

from __future__ import annotations

import json
from pathlib import Path

from ..errors import ConfigError, FormatError
from ..tensor import load_tensor, save_tensor
from .model import DenoiserConfig, param_shapes
from .train import Adam

FORMAT = "linmotion-checkpoint/1"
MANIFEST = "manifest.json"


def _write_group(root: Path, group: str, tensors: dict) -> dict:
    (root / group).mkdir(parents=True, exist_ok=True)
    files = {}
    for name, value in tensors.items():
        rel = f"{group}/{name}.mkt"
        save_tensor(root / rel, value)
        files[name] = rel
    return files


def _read_group(root: Path, files: dict) -> dict:
    return {name: load_tensor(root / rel) for name, rel in files.items()}


def save_checkpoint(path, cfg: DenoiserConfig, params: dict, opt: Adam | None = None, meta: dict | None = None) -> Path:
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    manifest = {
        "format": FORMAT,
        "config": cfg.to_dict(),
        "params": _write_group(root, "params", params),
        "optimizer": None,
        "meta": meta or {},
    }
    if opt is not None:
        manifest["optimizer"] = {
            "lr": opt.lr,
            "beta1": opt.beta1,
            "beta2": opt.beta2,
            "eps": opt.eps,
            "step_count": opt.step_count,
            "m": _write_group(root, "adam_m", opt.m),
            "v": _write_group(root, "adam_v", opt.v),
        }
    (root / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return root


def load_checkpoint(path):
    """Returns (config, params, optimizer-or-None, meta)."""
    root = Path(path)
    manifest_path = root / MANIFEST
    if not manifest_path.is_file():
        raise FileNotFoundError(f"no checkpoint manifest at {manifest_path}")
    manifest = json.loads(manifest_path.read_text())
    if manifest.get("format") != FORMAT:
        raise FormatError(f"unsupported checkpoint format {manifest.get('format')!r}")
    cfg = DenoiserConfig(**manifest["config"])
    params = _read_group(root, manifest["params"])
    expected = param_shapes(cfg)
    if set(params) != set(expected) or any(params[k].shape != s for k, s in expected.items()):
        raise ConfigError("checkpoint tensors do not match its config")
    opt = None
    if manifest.get("optimizer"):
        o = manifest["optimizer"]
        opt = Adam(o["lr"], o["beta1"], o["beta2"], o["eps"], o["step_count"],
                   _read_group(root, o["m"]), _read_group(root, o["v"]))
    return cfg, params, opt, manifest.get("meta", {})

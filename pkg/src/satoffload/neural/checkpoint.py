"""Checkpoints: parameters, optimizer moments and RNG state in one ``.npz``.

Layout (format version 1):

* ``param/<name>``: parameter arrays
* ``adam/<opt>/m/<i>``, ``adam/<opt>/v/<i>``: optimizer moments
* ``meta``: JSON string with format version, optimizer scalars, RNG bit-generator
  state and free-form metadata
"""
from __future__ import annotations

import io
import json
import zipfile
from pathlib import Path
from typing import Any

import numpy as np

from .adam import AdamState

FORMAT_VERSION = 1


def save_checkpoint(
    path: str | Path,
    params: dict[str, np.ndarray],
    optimizers: dict[str, AdamState] | None = None,
    rng: np.random.Generator | None = None,
    metadata: dict[str, Any] | None = None,
) -> None:
    arrays: dict[str, np.ndarray] = {f"param/{k}": np.asarray(v) for k, v in params.items()}
    opt_meta = {}
    for name, st in (optimizers or {}).items():
        for i, (m, v) in enumerate(zip(st.m, st.v)):
            arrays[f"adam/{name}/m/{i}"] = m
            arrays[f"adam/{name}/v/{i}"] = v
        opt_meta[name] = {
            "n": len(st.m), "step": st.step, "lr": st.lr, "beta1": st.beta1, "beta2": st.beta2, "eps": st.eps,
        }
    meta = {
        "format_version": FORMAT_VERSION,
        "optimizers": opt_meta,
        "rng": None if rng is None else rng.bit_generator.state,
        "metadata": metadata or {},
        "param_names": list(params),
    }
    arrays["meta"] = np.array(json.dumps(meta, sort_keys=True))
    # written by hand with a fixed member timestamp so identical state gives identical bytes
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w", compression=zipfile.ZIP_STORED) as zf:
        for key in sorted(arrays):
            member = io.BytesIO()
            np.lib.format.write_array(member, np.asanyarray(arrays[key]), allow_pickle=False)
            zf.writestr(zipfile.ZipInfo(key + ".npy", date_time=(1980, 1, 1, 0, 0, 0)), member.getvalue())
    Path(path).write_bytes(buf.getvalue())


def load_checkpoint(path: str | Path) -> dict[str, Any]:
    with np.load(Path(path), allow_pickle=False) as z:
        meta = json.loads(str(z["meta"]))
        if meta.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta.get('format_version')}")
        params = {k: z[f"param/{k}"].copy() for k in meta["param_names"]}
        optimizers = {}
        for name, om in meta["optimizers"].items():
            m = [z[f"adam/{name}/m/{i}"].copy() for i in range(om["n"])]
            v = [z[f"adam/{name}/v/{i}"].copy() for i in range(om["n"])]
            optimizers[name] = AdamState(m, v, om["step"], om["lr"], om["beta1"], om["beta2"], om["eps"])
    rng = None
    if meta["rng"] is not None:
        rng = np.random.default_rng()
        rng.bit_generator.state = meta["rng"]
    return {"params": params, "optimizers": optimizers, "rng": rng, "metadata": meta["metadata"]}

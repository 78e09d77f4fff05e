"""
Combined Model checkpoints — numpy `.npz` archive with a JSON header.

The header (stored as the string array `header`) records the format version,
modality order, column blocks, input column names, the clip flag and, per MLP,
its activations. Parameters are stored as `<mlp>.W<i>` / `<mlp>.b<i>` arrays
with `<mlp>` one of `ae<k>.encoder`, `ae<k>.decoder` or `regressor`.
Loading never unpickles.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any

import numpy as np
import structlog
from railway import Result, ResultFailures

from fuselab.domain.models import Modality
from fuselab.errors import ParseError
from fuselab.neural import Activation, Autoencoder, CombinedModel, Layer, Mlp

log = structlog.get_logger()

FORMAT_VERSION = 1


def _store_mlp(arrays: dict[str, np.ndarray], name: str, mlp: Mlp) -> list[str]:
    for i, layer in enumerate(mlp.layers):
        arrays[f"{name}.W{i}"] = layer.weight
        arrays[f"{name}.b{i}"] = layer.bias
    return [a.value for a in mlp.activations]


def _load_mlp(archive: Any, name: str, activations: list[str]) -> Mlp:
    layers = []
    for i, activation in enumerate(activations):
        try:
            weight = np.array(archive[f"{name}.W{i}"], dtype=np.float64)
            bias = np.array(archive[f"{name}.b{i}"], dtype=np.float64)
        except KeyError as e:
            raise ParseError(f"checkpoint is missing parameters of {name} layer {i}") from e
        layers.append(Layer(weight=weight, bias=bias, activation=Activation(activation)))
    return Mlp(layers=tuple(layers))


def _write(model: CombinedModel, path: Path) -> Path:
    arrays: dict[str, np.ndarray] = {}
    autoencoders = []
    for k, ae in enumerate(model.autoencoders):
        autoencoders.append(
            {
                "encoder": _store_mlp(arrays, f"ae{k}.encoder", ae.encoder),
                "decoder": _store_mlp(arrays, f"ae{k}.decoder", ae.decoder),
            }
        )
    header = {
        "version": FORMAT_VERSION,
        "modalities": [m.value for m in model.modalities],
        "blocks": [list(b) for b in model.blocks],
        "column_names": list(model.column_names),
        "clip": model.clip,
        "fitted": model.fitted,
        "autoencoders": autoencoders,
        "regressor": _store_mlp(arrays, "regressor", model.regressor),
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as handle:
        np.savez(handle, header=np.array(json.dumps(header, sort_keys=True)), **arrays)
    log.info("checkpoint.saved", path=str(path), parameters=model.n_parameters)
    return path


def _read(path: Path) -> CombinedModel:
    with np.load(path, allow_pickle=False) as archive:
        if "header" not in archive.files:
            raise ParseError(f"{path} has no checkpoint header")
        header = json.loads(str(archive["header"]))
        if header.get("version") != FORMAT_VERSION:
            raise ParseError(f"unsupported checkpoint version {header.get('version')!r}")
        modalities = tuple(Modality(m) for m in header["modalities"])
        autoencoders = tuple(
            Autoencoder(
                encoder=_load_mlp(archive, f"ae{k}.encoder", spec["encoder"]),
                decoder=_load_mlp(archive, f"ae{k}.decoder", spec["decoder"]),
                modality=modality,
            )
            for k, (modality, spec) in enumerate(
                zip(modalities, header["autoencoders"], strict=True)
            )
        )
        regressor = _load_mlp(archive, "regressor", header["regressor"])
    return CombinedModel(
        modalities=modalities,
        autoencoders=autoencoders,
        blocks=tuple(tuple(int(i) for i in b) for b in header["blocks"]),
        regressor=regressor,
        column_names=tuple(header["column_names"]),
        clip=bool(header["clip"]),
        fitted=bool(header["fitted"]),
    )


def save_checkpoint(model: CombinedModel, path: Path) -> Result[Path]:
    return ResultFailures.capture(lambda: _write(model, path), "checkpoint.save")


def load_checkpoint(path: Path) -> Result[CombinedModel]:
    """Rebuild a CombinedModel; predictions match the saved model exactly."""
    return ResultFailures.capture(lambda: _read(path), f"checkpoint.load {path}")

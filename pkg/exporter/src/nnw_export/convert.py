"""Checkpoint and dataset conversion.

Accepted models are plain fully-connected ReLU stacks: an optional leading
Flatten, then Linear layers alternating with ReLU and ending on a Linear.
Weights and biases are widened float32 -> float64 exactly (no re-rounding)
and the bias is folded into a trailing weight column. A sidecar JSON with
the source model's outputs on 16 seeded random inputs lets the consuming
tool verify the round trip (`convert --verify`).
"""
from __future__ import annotations

import json

import numpy as np
import torch
from torch import nn

from .nnw_writer import write_dense_network

N_VERIFY_VECTORS = 16
VERIFY_TOLERANCE = 1e-5


class ExportError(Exception):
    pass


def _load_module(checkpoint) -> nn.Module:
    if isinstance(checkpoint, nn.Module):
        return checkpoint
    # full-module checkpoints need unpickling; only feed trusted files
    obj = torch.load(checkpoint, map_location="cpu", weights_only=False)
    if not isinstance(obj, nn.Module):
        raise ExportError(f"checkpoint holds {type(obj).__name__}, expected a torch module")
    return obj


def _flatten_layers(model: nn.Module) -> list[nn.Module]:
    """Leaf layers in registration order, nested Sequentials unrolled."""
    children = list(model.children())
    if not children:
        return [model]
    out: list[nn.Module] = []
    for child in children:
        if isinstance(child, nn.Sequential) or list(child.children()):
            out.extend(_flatten_layers(child))
        else:
            out.append(child)
    return out


def _linear_chain(model: nn.Module) -> list[nn.Linear]:
    """Validate the alternating Linear/ReLU structure and return the
    Linear layers in order."""
    layers = _flatten_layers(model)
    if layers and isinstance(layers[0], nn.Flatten):
        layers = layers[1:]
    if not layers:
        raise ExportError("model has no layers")
    linears: list[nn.Linear] = []
    expect_linear = True
    for mod in layers:
        if expect_linear:
            if not isinstance(mod, nn.Linear):
                raise ExportError(f"unsupported layer type {type(mod).__name__}; "
                                  "expected alternating Linear/ReLU")
            linears.append(mod)
        else:
            if not isinstance(mod, nn.ReLU):
                raise ExportError(f"unsupported layer type {type(mod).__name__}; "
                                  "expected ReLU between Linear layers")
        expect_linear = not expect_linear
    if expect_linear:
        raise ExportError("model must end with a Linear layer")
    if len(linears) < 2:
        raise ExportError("need at least two Linear layers")
    for a, b in zip(linears, linears[1:]):
        if b.in_features != a.out_features:
            raise ExportError("Linear layers do not chain")
    return linears


def _fold_bias(linear: nn.Linear) -> np.ndarray:
    w = linear.weight.detach().cpu().numpy().astype(np.float64)
    if linear.bias is not None:
        b = linear.bias.detach().cpu().numpy().astype(np.float64)
    else:
        b = np.zeros(w.shape[0])
    return np.hstack([w, b[:, np.newaxis]])


def export_model(checkpoint, out_path, verify_out=None, seed: int = 0) -> dict:
    """Write the checkpoint as NNW1; returns the export summary. The sidecar
    at verify_out records the source model's outputs on 16 random inputs."""
    model = _load_module(checkpoint)
    linears = _linear_chain(model)
    matrices = [_fold_bias(lin) for lin in linears]
    meta = {
        "source": type(model).__name__,
        "layer_map": [{"source_layer": i, "nnw_layer": k}
                      for k, i in enumerate(range(len(linears)))],
        "bias_folded": True,
    }
    write_dense_network(matrices, out_path, meta=meta)

    in_dim = linears[0].in_features
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    inputs32 = rng.normal(size=(N_VERIFY_VECTORS, in_dim)).astype(np.float32)
    was_training = model.training
    model.eval()
    with torch.no_grad():
        outputs = model(torch.from_numpy(inputs32)).cpu().numpy()
    if was_training:
        model.train()
    sidecar = {
        "format": "NNW1-VERIFY",
        "inputs": inputs32.astype(np.float64).tolist(),
        "outputs": outputs.astype(np.float64).tolist(),
        "tolerance": VERIFY_TOLERANCE,
    }
    if verify_out is not None:
        with open(verify_out, "w") as fh:
            json.dump(sidecar, fh, sort_keys=True, indent=2)
    return {
        "layers": len(matrices),
        "shapes": [list(m.shape) for m in matrices],
        "verify_vectors": N_VERIFY_VECTORS,
        "sidecar": sidecar,
    }


def _load_tensors(source):
    if isinstance(source, (tuple, list)) and len(source) == 2:
        return source[0], source[1]
    obj = torch.load(source, map_location="cpu", weights_only=False)
    if isinstance(obj, dict) and "features" in obj and "labels" in obj:
        return obj["features"], obj["labels"]
    if isinstance(obj, (tuple, list)) and len(obj) == 2:
        return obj[0], obj[1]
    if hasattr(obj, "tensors") and len(obj.tensors) == 2:  # TensorDataset
        return obj.tensors
    raise ExportError("dataset must supply (features, labels)")


def export_dataset(source, out_path, normalize: bool = False) -> dict:
    """Write a labeled tensor dataset as CSV: header row, integer label
    first, features flattened row-major after it."""
    features, labels = _load_tensors(source)
    features = torch.as_tensor(features)
    labels = torch.as_tensor(labels)
    x = features.detach().cpu().numpy().astype(np.float64).reshape(features.shape[0], -1)
    y_raw = labels.detach().cpu().numpy()
    if not np.issubdtype(y_raw.dtype, np.integer):
        if not np.all(y_raw == np.round(y_raw)):
            raise ExportError("labels must be integers")
        y_raw = y_raw.astype(np.int64)
    y = y_raw.astype(np.int64)
    if y.shape != (x.shape[0],):
        raise ExportError("labels must be one integer per sample")
    if normalize:
        peak = np.abs(x).max()
        if peak > 0:
            x = x / peak
    with open(out_path, "w") as fh:
        fh.write(",".join(["label"] + [f"f{i}" for i in range(x.shape[1])]) + "\n")
        for label, row in zip(y, x):
            fh.write(str(int(label)) + "," + ",".join(repr(float(v)) for v in row) + "\n")
    return {"rows": int(x.shape[0]), "features": int(x.shape[1])}

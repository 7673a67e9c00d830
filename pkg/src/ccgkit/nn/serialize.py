"""JSON round trip for trained models.

Weights serialize as nested float lists.  Python renders floats with repr,
which round-trips IEEE doubles exactly, so save followed by load reproduces
bit-identical parameters.
"""

import numpy as np

from ccgkit import SCHEMA_VERSION
from ccgkit._jsonio import check_schema_version, dump_json, load_json
from ccgkit.nn.layers import (
    ColumnScaler,
    DenseLayer,
    LabelScaler,
    SetEncoder,
    ValueModel,
)


def _layers_to_list(layers):
    return [
        {
            "weight": layer.weight.tolist(),
            "bias": layer.bias.tolist(),
            "activation": layer.activation,
        }
        for layer in layers
    ]


def _layers_from_list(data):
    return [
        DenseLayer(
            np.array(d["weight"], dtype=np.float64),
            np.array(d["bias"], dtype=np.float64),
            d["activation"],
        )
        for d in data
    ]


def model_to_dict(model: ValueModel) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "value_model",
        "family": model.family,
        "target_mode": model.target_mode,
        "arch": model.arch,
        "x_encoder": {
            "element_net": _layers_to_list(model.x_encoder.element_net),
            "post_net": _layers_to_list(model.x_encoder.post_net),
        },
        "xi_encoder": {
            "element_net": _layers_to_list(model.xi_encoder.element_net),
            "post_net": _layers_to_list(model.xi_encoder.post_net),
        },
        "value_net": _layers_to_list(model.value_net),
        "x_scaler": {"mins": model.x_scaler.mins.tolist(), "maxs": model.x_scaler.maxs.tolist()},
        "xi_scaler": {"mins": model.xi_scaler.mins.tolist(), "maxs": model.xi_scaler.maxs.tolist()},
        "label_scaler": {"lo": model.label_scaler.lo, "hi": model.label_scaler.hi},
    }


def model_from_dict(doc: dict) -> ValueModel:
    check_schema_version(doc, SCHEMA_VERSION, "model file")
    if doc.get("kind") != "value_model":
        from ccgkit._jsonio import SchemaError

        raise SchemaError(f"model file: unexpected kind {doc.get('kind')!r}")
    return ValueModel(
        family=doc["family"],
        target_mode=doc["target_mode"],
        x_encoder=SetEncoder(
            _layers_from_list(doc["x_encoder"]["element_net"]),
            _layers_from_list(doc["x_encoder"]["post_net"]),
        ),
        xi_encoder=SetEncoder(
            _layers_from_list(doc["xi_encoder"]["element_net"]),
            _layers_from_list(doc["xi_encoder"]["post_net"]),
        ),
        value_net=_layers_from_list(doc["value_net"]),
        x_scaler=ColumnScaler(
            np.array(doc["x_scaler"]["mins"]), np.array(doc["x_scaler"]["maxs"])
        ),
        xi_scaler=ColumnScaler(
            np.array(doc["xi_scaler"]["mins"]), np.array(doc["xi_scaler"]["maxs"])
        ),
        label_scaler=LabelScaler(doc["label_scaler"]["lo"], doc["label_scaler"]["hi"]),
        arch=doc.get("arch", {}),
    )


def save_model(model: ValueModel, path) -> None:
    dump_json(path, model_to_dict(model))


def load_model(path) -> ValueModel:
    return model_from_dict(load_json(path))

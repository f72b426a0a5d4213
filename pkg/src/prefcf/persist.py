"""Plain-text model persistence.

One self-describing document per trained model: a kind line, dimension lines,
then each table as ``table <name> <shape...>`` followed by rows of values
written with 17 significant digits, which round-trips float64 exactly.
"""

from __future__ import annotations

import numpy as np

from .classic import AspectParams, ClusterParams
from .decoupled import BaselineParams, DecoupledParams
from .errors import ParseError, ValidationError
from .ordering import OrderingParams

_MAGIC = "prefcf-model 1"

_KINDS = {
    DecoupledParams: "dm",
    BaselineParams: "baseline",
    OrderingParams: "mp",
    AspectParams: "am",
    ClusterParams: "bc",
}


def _dims(params):
    if isinstance(params, DecoupledParams):
        return {
            "users": params.n_users, "items": params.n_items, "scale": params.scale,
            "item_classes": params.n_item_classes, "pref_classes": params.n_pref_classes,
            "rating_classes": params.n_rating_classes, "pref_levels": params.n_pref_levels,
        }
    if isinstance(params, BaselineParams):
        return {
            "users": params.n_users, "items": params.n_items, "scale": params.scale,
            "item_classes": params.n_item_classes, "pref_classes": params.n_pref_classes,
        }
    if isinstance(params, OrderingParams):
        return {
            "users": params.n_users, "items": params.n_items,
            "user_classes": params.n_user_classes, "item_classes": params.n_item_classes,
        }
    if isinstance(params, AspectParams):
        return {
            "users": params.n_users, "items": params.n_items, "scale": params.scale,
            "classes": params.n_classes,
        }
    if isinstance(params, ClusterParams):
        return {
            "items": params.n_items, "scale": params.scale, "classes": params.n_classes,
        }
    raise ValidationError(f"cannot persist object of type {type(params).__name__}")


def _param_tables(params):
    if isinstance(params, OrderingParams):
        return {
            "user_class_prior": params.user_class_prior,
            "user_given_class": params.user_given_class,
            "item_class_prior": params.item_class_prior,
            "item_given_class": params.item_given_class,
            "propensity": params.propensity,
        }
    if isinstance(params, ClusterParams):
        return {
            "class_prior": params.class_prior,
            "rating_given_class_item": params.rating_given_class_item,
        }
    return params.tables()


def save_model(params, path):
    """Write a trained model to ``path`` as a single text document."""
    kind = _KINDS.get(type(params))
    if kind is None:
        raise ValidationError(f"cannot persist object of type {type(params).__name__}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(_MAGIC + "\n")
        fh.write(f"kind {kind}\n")
        for key, value in _dims(params).items():
            fh.write(f"{key} {value}\n")
        for name, table in _param_tables(params).items():
            table = np.asarray(table)
            shape = " ".join(str(s) for s in table.shape)
            fh.write(f"table {name} {shape}\n")
            rows = table.reshape(-1, table.shape[-1]) if table.ndim > 1 else table[None, :]
            for row in rows:
                fh.write(" ".join(format(v, ".17g") for v in row) + "\n")


def load_model(path):
    """Read a model document back into the matching parameter object."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines or lines[0] != _MAGIC:
        raise ParseError("not a prefcf model file")
    header = {}
    tables = {}
    i = 1
    while i < len(lines):
        line = lines[i]
        if not line.strip():
            i += 1
            continue
        parts = line.split()
        if parts[0] == "table":
            name = parts[1]
            shape = tuple(int(s) for s in parts[2:])
            n_rows = int(np.prod(shape[:-1])) if len(shape) > 1 else 1
            values = []
            for j in range(n_rows):
                values.extend(float(v) for v in lines[i + 1 + j].split())
            tables[name] = np.array(values).reshape(shape)
            i += 1 + n_rows
        else:
            header[parts[0]] = parts[1]
            i += 1

    kind = header.get("kind")
    try:
        if kind == "dm":
            return DecoupledParams(**{k: tables[k] for k in (
                "item_class_prior", "item_given_class", "user_pref_class",
                "user_rating_class", "pref_level", "rating_given_level")})
        if kind == "baseline":
            return BaselineParams(**{k: tables[k] for k in (
                "item_class_prior", "item_given_class", "user_pref_class",
                "rating_given_classes")})
        if kind == "mp":
            return OrderingParams(**{k: tables[k] for k in (
                "user_class_prior", "user_given_class", "item_class_prior",
                "item_given_class", "propensity")})
        if kind == "am":
            return AspectParams(**{k: tables[k] for k in (
                "class_prior", "item_given_class", "user_given_class",
                "rating_given_class")})
        if kind == "bc":
            return ClusterParams(**{k: tables[k] for k in (
                "class_prior", "rating_given_class_item")})
    except KeyError as exc:
        raise ParseError(f"model file missing table {exc}") from None
    raise ParseError(f"unknown model kind {kind!r}")

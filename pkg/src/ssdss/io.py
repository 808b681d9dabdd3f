"""JSON (schema ``ssdss-v1``) and CSV readers and writers.

Complex numbers are stored as ``[re, im]`` pairs. Frequencies of FRF grids
and RCM settings are stored in Hz; poles and state matrices keep their
native rad/s scaling. See ``docs/formats.md``.
"""

from __future__ import annotations

import csv
import hashlib
import json
import re
from pathlib import Path

import numpy as np

from .types import Domain, FrfSet, InterfaceMap, ModalModel, RcmConfig, Representation, StateSpaceModel

SCHEMA = "ssdss-v1"
TWO_PI = 2 * np.pi


class FormatError(ValueError):
    """Malformed or schema-violating input file."""

    def __init__(self, msg: str, path=None, line: int | None = None):
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + msg)
        self.path = path
        self.line = line


# ---------------------------------------------------------------------------
# encoding helpers


def _enc_complex(a) -> list:
    a = np.asarray(a, dtype=complex)
    return np.stack([a.real, a.imag], axis=-1).tolist()


def _enc_real(a) -> list:
    return np.asarray(a, dtype=float).tolist()


def _dec_complex(x, shape, key):
    a = np.asarray(x, dtype=float)
    if a.size == 0 and int(np.prod(shape)) == 0:
        return np.zeros(shape, complex)
    if a.shape != tuple(shape) + (2,):
        raise _SchemaError(key, f"expected shape {tuple(shape)} of [re, im] pairs, got {a.shape}")
    return a[..., 0] + 1j * a[..., 1]


def _dec_real(x, shape, key):
    a = np.asarray(x, dtype=float)
    if a.size == 0 and int(np.prod(shape)) == 0:
        return np.zeros(shape)
    if a.shape != tuple(shape):
        raise _SchemaError(key, f"expected shape {tuple(shape)}, got {a.shape}")
    return a


class _SchemaError(Exception):
    def __init__(self, key, msg):
        super().__init__(msg)
        self.key = key
        self.msg = msg


def _get(d: dict, key: str, typ=None):
    if key not in d:
        raise _SchemaError(key, f"missing field '{key}'")
    v = d[key]
    if typ is not None and not isinstance(v, typ):
        raise _SchemaError(key, f"field '{key}' must be {typ.__name__ if isinstance(typ, type) else typ}")
    return v


def _int(d, key):
    v = _get(d, key)
    if isinstance(v, bool) or not isinstance(v, int) or v < 0:
        raise _SchemaError(key, f"field '{key}' must be a non-negative integer")
    return v


# ---------------------------------------------------------------------------
# to/from plain dicts


def modal_to_dict(m: ModalModel) -> dict:
    return {
        "schema": SCHEMA,
        "kind": "modal",
        "n_outputs": m.n_outputs,
        "n_inputs": m.n_inputs,
        "n_modes": m.n_modes,
        "poles": _enc_complex(m.poles),
        "part_factors": _enc_complex(m.part_factors),
        "mode_shapes": _enc_complex(m.mode_shapes),
        "lower_residual": _enc_real(m.lower_residual),
        "upper_residual": _enc_real(m.upper_residual),
    }


def modal_from_dict(d: dict) -> ModalModel:
    n_o, n_i, n_m = _int(d, "n_outputs"), _int(d, "n_inputs"), _int(d, "n_modes")
    return ModalModel(
        _dec_complex(_get(d, "poles", list), (n_m,), "poles"),
        _dec_complex(_get(d, "part_factors", list), (n_m, n_i), "part_factors"),
        _dec_complex(_get(d, "mode_shapes", list), (n_o, n_m), "mode_shapes"),
        _dec_real(_get(d, "lower_residual", list), (n_o, n_i), "lower_residual"),
        _dec_real(_get(d, "upper_residual", list), (n_o, n_i), "upper_residual"),
    )


def state_space_to_dict(m: StateSpaceModel) -> dict:
    cplx = any(np.iscomplexobj(x) for x in (m.A, m.B, m.C, m.D))
    enc = _enc_complex if cplx else _enc_real
    return {
        "schema": SCHEMA,
        "kind": "state_space",
        "domain": m.domain.value,
        "representation": m.representation.value,
        "provenance": m.provenance,
        "complex": cplx,
        "n_states": m.n_states,
        "n_outputs": m.n_outputs,
        "n_inputs": m.n_inputs,
        "A": enc(m.A),
        "B": enc(m.B),
        "C": enc(m.C),
        "D": enc(m.D),
    }


def state_space_from_dict(d: dict) -> StateSpaceModel:
    n_s, n_o, n_i = _int(d, "n_states"), _int(d, "n_outputs"), _int(d, "n_inputs")
    cplx = _get(d, "complex", bool)
    dec = _dec_complex if cplx else _dec_real
    shapes = {"A": (n_s, n_s), "B": (n_s, n_i), "C": (n_o, n_s), "D": (n_o, n_i)}
    mats = {k: dec(_get(d, k, list), shp, k) for k, shp in shapes.items()}
    try:
        dom = Domain(_get(d, "domain", str))
    except ValueError:
        raise _SchemaError("domain", f"unknown domain '{d['domain']}'") from None
    try:
        rep = Representation(_get(d, "representation", str))
    except ValueError:
        raise _SchemaError("representation", f"unknown representation '{d['representation']}'") from None
    D = mats["D"]
    if dom is Domain.DISPLACEMENT:
        if np.any(D != 0):
            raise _SchemaError("D", "a displacement model must have D = 0")
        D = None
    return StateSpaceModel(mats["A"], mats["B"], mats["C"], D, dom, rep, d.get("provenance", ""))


def frf_to_dict(f: FrfSet) -> dict:
    n_f, n_o, n_i = f.values.shape
    return {
        "schema": SCHEMA,
        "kind": "frf",
        "domain": f.domain.value,
        "n_outputs": n_o,
        "n_inputs": n_i,
        "freq_hz": _enc_real(f.grid / TWO_PI),
        "values": _enc_complex(f.values),
    }


def frf_from_dict(d: dict) -> FrfSet:
    n_o, n_i = _int(d, "n_outputs"), _int(d, "n_inputs")
    f_hz = np.asarray(_get(d, "freq_hz", list), dtype=float)
    if f_hz.ndim != 1:
        raise _SchemaError("freq_hz", "freq_hz must be a flat list")
    vals = _dec_complex(_get(d, "values", list), (f_hz.size, n_o, n_i), "values")
    try:
        dom = Domain(_get(d, "domain", str))
    except ValueError:
        raise _SchemaError("domain", f"unknown domain '{d['domain']}'") from None
    return FrfSet(TWO_PI * f_hz, vals, dom)


def map_to_dict(m: InterfaceMap) -> dict:
    return {
        "schema": SCHEMA,
        "kind": "interface_map",
        "n_outputs": m.n_outputs,
        "constraints": [{"row": r, "plus_output": p, "minus_output": q} for r, (p, q) in enumerate(m.pairs)],
    }


def map_from_dict(d: dict) -> InterfaceMap:
    n = _int(d, "n_outputs")
    rows = _get(d, "constraints", list)
    pairs = [None] * len(rows)
    for k, c in enumerate(rows):
        if not isinstance(c, dict):
            raise _SchemaError("constraints", f"constraint {k} must be an object")
        r, p, q = _int(c, "row"), _int(c, "plus_output"), _int(c, "minus_output")
        if r >= len(rows) or pairs[r] is not None:
            raise _SchemaError("row", f"constraint {k} has an invalid or repeated row index {r}")
        pairs[r] = (p, q)
    return InterfaceMap.from_pairs(pairs, n)


def rcm_config_to_dict(cfg: RcmConfig) -> dict:
    return {"schema": SCHEMA, "kind": "rcm_config", **cfg.to_hz_dict()}


def rcm_config_from_dict(d: dict) -> RcmConfig:
    keys = ("omega_lr_hz", "xi_lr", "omega_ur_hz", "xi_ur", "omega_cb_hz", "xi_cb")
    kw = {}
    for k in keys:
        v = _get(d, k)
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise _SchemaError(k, f"field '{k}' must be a number")
        kw[k] = float(v)
    return RcmConfig.from_hz(**kw)


_DECODERS = {
    "modal": modal_from_dict,
    "state_space": state_space_from_dict,
    "frf": frf_from_dict,
    "interface_map": map_from_dict,
    "rcm_config": rcm_config_from_dict,
}


def to_dict(obj) -> dict:
    if isinstance(obj, ModalModel):
        return modal_to_dict(obj)
    if isinstance(obj, StateSpaceModel):
        return state_space_to_dict(obj)
    if isinstance(obj, FrfSet):
        return frf_to_dict(obj)
    if isinstance(obj, InterfaceMap):
        return map_to_dict(obj)
    if isinstance(obj, RcmConfig):
        return rcm_config_to_dict(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


# ---------------------------------------------------------------------------
# files


def dumps(obj, meta: dict | None = None) -> str:
    """Canonical JSON text: sorted keys, one-space indent, trailing newline."""
    d = to_dict(obj)
    if meta:
        d["meta"] = meta
    return json.dumps(d, sort_keys=True, indent=1) + "\n"


def save(obj, path, meta: dict | None = None) -> None:
    Path(path).write_text(dumps(obj, meta))


def _line_of(text: str, key) -> int | None:
    m = re.search(r'"' + re.escape(str(key)) + r'"\s*:', text)
    return text.count("\n", 0, m.start()) + 1 if m else None


def loads(text: str, kind: str | None = None, path=None):
    """Parse ssdss-v1 JSON text. ``kind`` restricts the accepted object kind."""
    try:
        d = json.loads(text)
    except json.JSONDecodeError as e:
        raise FormatError(f"invalid JSON: {e.msg}", path, e.lineno) from None
    if not isinstance(d, dict):
        raise FormatError("top level must be an object", path, 1)
    if d.get("schema") != SCHEMA:
        raise FormatError(f"schema must be '{SCHEMA}', got {d.get('schema')!r}", path, _line_of(text, "schema"))
    k = d.get("kind")
    if k not in _DECODERS:
        raise FormatError(f"unknown kind {k!r}", path, _line_of(text, "kind"))
    if kind is not None and k != kind:
        raise FormatError(f"expected a '{kind}' object, got '{k}'", path, _line_of(text, "kind"))
    try:
        return _DECODERS[k](d)
    except _SchemaError as e:
        raise FormatError(e.msg, path, _line_of(text, e.key)) from None
    except (TypeError, ValueError) as e:
        raise FormatError(str(e), path) from None


def load(path, kind: str | None = None):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise FormatError(f"cannot read file: {e.strerror}", path) from None
    return loads(text, kind, path)


def load_meta(path) -> dict:
    d = json.loads(Path(path).read_text())
    return d.get("meta", {}) if isinstance(d, dict) else {}


def file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_csv(path, header, rows) -> None:
    """Write rows with ``repr``-exact floats so re-runs are byte-identical."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return int(v)
    return v

"""Directory serialization of prototype banks and guidance parameters.

A saved object is a directory of SGT1 tensors plus a `manifest.txt` of
`name = path` lines (and `classes = a,b,...` entries for the registries).
"""

import os

import numpy as np

from . import sgt1
from .errors import DimensionError
from .guidance import STRUCT_BRANCHES, GuidanceParams, PrototypeBank
from .ops import ConvParams


def _write_manifest(path, entries):
    with open(os.path.join(path, "manifest.txt"), "w", encoding="utf-8") as fh:
        for key, val in entries:
            fh.write(f"{key} = {val}\n")


def _read_manifest(path):
    entries = {}
    with open(os.path.join(path, "manifest.txt"), "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            key, _, val = line.partition("=")
            entries[key.strip()] = val.strip()
    return entries


def save_bank(path, bank):
    os.makedirs(path, exist_ok=True)
    entries = [
        ("kind", "prototype-bank"),
        ("novel_classes", ",".join(str(c) for c in bank.novel_classes)),
        ("base_classes", ",".join(str(c) for c in bank.base_classes)),
        ("clamp_gamma", "true" if bank.clamp_gamma else "false"),
    ]
    sgt1.write(os.path.join(path, "novel.sgt"), bank.novel.astype(np.float32))
    entries.append(("novel", "novel.sgt"))
    if len(bank.base):
        sgt1.write(os.path.join(path, "base.sgt"), bank.base.astype(np.float32))
        entries.append(("base", "base.sgt"))
    for branch, vec in bank.structural.items():
        name = f"structural_{branch}.sgt"
        sgt1.write(os.path.join(path, name), vec.astype(np.float32))
        entries.append((f"structural_{branch}", name))
    _write_manifest(path, entries)


def load_bank(path):
    entries = _read_manifest(path)
    if entries.get("kind") != "prototype-bank":
        raise DimensionError(f"{path}: not a prototype bank")
    split = lambda s: [tok for tok in s.split(",") if tok]
    novel = sgt1.read(os.path.join(path, entries["novel"]))
    novel_classes = [_maybe_int(c) for c in split(entries["novel_classes"])]
    if "base" in entries:
        base = sgt1.read(os.path.join(path, entries["base"]))
        base_classes = [_maybe_int(c) for c in split(entries["base_classes"])]
    else:
        base = np.zeros((0, novel.shape[1]), dtype=np.float32)
        base_classes = []
    structural = {}
    for branch in STRUCT_BRANCHES:
        key = f"structural_{branch}"
        if key in entries:
            structural[branch] = sgt1.read(os.path.join(path, entries[key]))
    return PrototypeBank(novel, novel_classes, base, base_classes, structural,
                         entries.get("clamp_gamma", "true") == "true")


def _maybe_int(token):
    try:
        return int(token)
    except ValueError:
        return token


def _save_conv(path, name, conv, entries):
    sgt1.write(os.path.join(path, f"{name}_kernel.sgt"), conv.kernel.astype(np.float32))
    sgt1.write(os.path.join(path, f"{name}_bias.sgt"), conv.bias.astype(np.float32))
    entries.append((f"{name}_kernel", f"{name}_kernel.sgt"))
    entries.append((f"{name}_bias", f"{name}_bias.sgt"))


def _load_conv(path, name, entries):
    return ConvParams(
        sgt1.read(os.path.join(path, entries[f"{name}_kernel"])),
        sgt1.read(os.path.join(path, entries[f"{name}_bias"])),
    )


def save_params(path, params):
    os.makedirs(path, exist_ok=True)
    entries = [("kind", "guidance-params")]
    _save_conv(path, "cls", params.cls_conv, entries)
    for branch, (omega, phi) in params.sgm.items():
        _save_conv(path, f"{branch}_omega", omega, entries)
        _save_conv(path, f"{branch}_phi", phi, entries)
    if params.plain_cls_conv is not None:
        _save_conv(path, "plain_cls", params.plain_cls_conv, entries)
    _write_manifest(path, entries)


def load_params(path):
    entries = _read_manifest(path)
    if entries.get("kind") != "guidance-params":
        raise DimensionError(f"{path}: not guidance params")
    sgm = {
        b: (_load_conv(path, f"{b}_omega", entries), _load_conv(path, f"{b}_phi", entries))
        for b in STRUCT_BRANCHES
    }
    plain = _load_conv(path, "plain_cls", entries) if "plain_cls_kernel" in entries else None
    return GuidanceParams(_load_conv(path, "cls", entries), sgm, plain)

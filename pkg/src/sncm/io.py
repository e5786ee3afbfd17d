"""Tabular ingest/export, atomic writes and the versioned chain bundle format.

Chain bundle layout (format version 1), one directory per chain::

    manifest.json      format_version, seed, config, meta, per-file sha256,
                       and a content hash over all block hashes
    beta0.npy  sigma_sq.npy  delta.npy  rho.npy      (draws,)
    beta_star.npy  gamma.npy                         (draws, p)
    alpha.npy                                        (draws, s)
    loglik.npy                                       (draws, n) or (0, n)
    V.npy  U.npy  Z.npy                              (draws, n), optional

Every block is a plain ``.npy`` array so the bundle can be read without this
package.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import tempfile
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .gibbs import McmcConfig, PosteriorChain
from .model import CensoredDataset

BUNDLE_FORMAT_VERSION = 1
_BLOCKS = ("beta0", "beta_star", "gamma", "alpha", "sigma_sq", "delta", "rho", "loglik")
_LATENT = ("V", "U", "Z")


class ParseError(ValueError):
    """Malformed tabular input; the message carries row/column coordinates."""


# ---------------------------------------------------------------------------
# atomic writes


def atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def format_float(v) -> str:
    """17 significant digits: enough for a bit-exact decimal round trip."""
    v = float(v)
    if np.isnan(v):
        return ""
    return format(v, ".17g")


def write_csv(path, header, rows) -> None:
    """Write rows atomically; floats are serialized with :func:`format_float`."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([format_float(v) if isinstance(v, (float, np.floating)) else v for v in row])
    atomic_write_text(path, buf.getvalue())


def write_dict_rows(path, rows: list[dict], header=None) -> None:
    if header is None:
        header = []
        for r in rows:
            for k in r:
                if k not in header:
                    header.append(k)
    write_csv(path, header, ([r.get(k, "") for k in header] for r in rows))


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


# ---------------------------------------------------------------------------
# CSV ingest


def read_table(path, sentinels=("NA",)) -> tuple[list[str], np.ndarray]:
    """Read a rectangular numeric CSV with a header row.

    Empty cells and any cell equal to one of ``sentinels`` become NaN.
    """
    sentinels = set(sentinels or ())
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if len(set(header)) != len(header):
        raise ParseError(f"{path}: duplicate column names in header")
    body = [r for r in rows[1:] if r]
    out = np.empty((len(body), len(header)))
    for i, row in enumerate(body):
        line = i + 2
        if len(row) != len(header):
            raise ParseError(f"{path}: row {line} has {len(row)} cells, header has {len(header)}")
        for j, cell in enumerate(row):
            cell = cell.strip()
            if cell == "" or cell in sentinels:
                out[i, j] = np.nan
                continue
            try:
                out[i, j] = float(cell)
            except ValueError:
                raise ParseError(f"{path}: row {line}, column {j + 1} ({header[j]!r}): "
                                 f"non-numeric value {cell!r}") from None
    return header, out


def ingest_csv(path, response: str, predictors=None, confounders=(), sentinels=("NA",),
               psi: float | None = None) -> CensoredDataset:
    """Build a dataset from one response column and declared predictor/confounder columns.

    ``predictors=None`` takes every column that is neither the response nor
    a confounder.  Missing responses are PMVs; predictors and confounders
    must be complete.
    """
    header, table = read_table(path, sentinels)
    return dataset_from_table(header, table, response, predictors, confounders, psi, str(path))


def dataset_from_table(header, table, response, predictors=None, confounders=(), psi=None,
                       source="table") -> CensoredDataset:
    confounders = list(confounders or ())
    col = {h: j for j, h in enumerate(header)}
    for name in [response, *confounders, *(predictors or [])]:
        if name not in col:
            raise ParseError(f"{source}: no column named {name!r}")
    if predictors is None:
        predictors = [h for h in header if h != response and h not in confounders]
    X = table[:, [col[h] for h in predictors]]
    C = table[:, [col[h] for h in confounders]] if confounders else np.zeros((table.shape[0], 0))
    for names, M in ((predictors, X), (confounders, C)):
        bad = np.argwhere(np.isnan(M))
        if bad.size:
            i, j = bad[0]
            raise ParseError(f"{source}: row {i + 2}, column {names[j]!r}: missing value in a "
                             f"predictor or confounder")
    y = table[:, col[response]]
    if np.all(np.isnan(y)):
        raise ParseError(f"{source}: response column {response!r} is entirely missing")
    return CensoredDataset(y, X, C, psi, list(predictors), list(confounders), response)


def write_dataset_csv(path, data: CensoredDataset, sentinel: str = "") -> None:
    pnames = data.predictor_names or [f"x{j + 1}" for j in range(data.p)]
    cnames = data.confounder_names or [f"c{t + 1}" for t in range(data.s)]
    header = [data.response_name, *pnames, *cnames]
    rows = []
    for i in range(data.n):
        yi = sentinel if np.isnan(data.y[i]) else format_float(data.y[i])
        rows.append([yi, *map(format_float, data.X[i]), *map(format_float, data.C[i])])
    write_csv(path, header, rows)


# ---------------------------------------------------------------------------
# chain bundles


def _npy_bytes(a: np.ndarray) -> bytes:
    buf = io.BytesIO()
    np.save(buf, np.ascontiguousarray(a), allow_pickle=False)
    return buf.getvalue()


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (str, int, float, bool)) or v is None:
        return v
    return repr(v)


def content_hash(file_hashes: dict[str, str]) -> str:
    h = hashlib.sha256()
    for name in sorted(file_hashes):
        h.update(f"{name}:{file_hashes[name]}\n".encode())
    return h.hexdigest()


def save_chain(directory, chain: PosteriorChain, extra: dict | None = None) -> dict:
    """Write ``chain`` as a bundle; returns the manifest."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    hashes = {}
    names = list(_BLOCKS) + [k for k in _LATENT if getattr(chain, k) is not None]
    for name in names:
        data = _npy_bytes(np.asarray(getattr(chain, name)))
        atomic_write_bytes(d / f"{name}.npy", data)
        hashes[f"{name}.npy"] = hashlib.sha256(data).hexdigest()
    meta = {k: v for k, v in chain.meta.items() if k != "final_state"}
    manifest = {
        "format_version": BUNDLE_FORMAT_VERSION,
        "kind": "sncm-chain",
        "seed": int(chain.seed),
        "config": asdict(chain.config),
        "draws": chain.n_draws,
        "meta": _jsonable(meta),
        "files": hashes,
        "content_hash": content_hash(hashes),
    }
    if extra:
        manifest["extra"] = _jsonable(extra)
    atomic_write_text(d / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def load_chain(directory, verify: bool = True) -> PosteriorChain:
    d = Path(directory)
    manifest = json.loads((d / "manifest.json").read_text())
    if manifest.get("format_version") != BUNDLE_FORMAT_VERSION:
        raise ValueError(f"{d}: unsupported bundle format {manifest.get('format_version')!r}")
    arrays = {}
    for fname, digest in manifest["files"].items():
        path = d / fname
        if verify and sha256_file(path) != digest:
            raise ValueError(f"{path}: content hash mismatch")
        arrays[fname[:-4]] = np.load(path, allow_pickle=False)
    chain = PosteriorChain(**{k: arrays[k] for k in _BLOCKS}, seed=int(manifest["seed"]),
                           config=McmcConfig(**manifest["config"]),
                           **{k: arrays.get(k) for k in _LATENT}, meta=manifest.get("meta", {}))
    return chain


def write_manifest(directory, payload: dict) -> dict:
    """Run manifest: ``payload`` plus hashes of every other file in ``directory``."""
    d = Path(directory)
    files = {}
    for path in sorted(d.rglob("*")):
        if path.is_file() and path.name != "manifest.json" and not path.name.endswith(".tmp"):
            files[str(path.relative_to(d))] = sha256_file(path)
    manifest = {**_jsonable(payload), "files": files, "content_hash": content_hash(files)}
    atomic_write_text(d / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest

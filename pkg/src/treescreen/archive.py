"""On-disk archives for fitted posteriors and synthetic populations.

Each archive is a compressed npz of named arrays plus a JSON metadata entry.
Content hashes are computed over the array bytes (not the container), so
reruns with identical seeds produce identical hashes regardless of zip
timestamps.
"""

from __future__ import annotations

import hashlib
import json

import numpy as np

from .copula import CopulaFactorParams, CopulaPosterior, EmpiricalMarginal
from .errors import SchemaError
from .population import PooledRows, SyntheticPopulation
from .risk import RiskPosterior, TreeEnsembleDraw


def content_hash(arrays: dict, meta: dict) -> str:
    h = hashlib.sha256()
    for key in sorted(arrays):
        h.update(key.encode())
        arr = np.ascontiguousarray(arrays[key])
        h.update(str(arr.dtype).encode())
        h.update(str(arr.shape).encode())
        h.update(arr.tobytes())
    h.update(json.dumps(meta, sort_keys=True).encode())
    return h.hexdigest()[:16]


def _save(path, kind, arrays, meta):
    meta = dict(meta, kind=kind)
    meta["content_hash"] = content_hash(arrays, meta)
    np.savez_compressed(path, _meta=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8), **arrays)
    return meta["content_hash"]


def _load(path, kind):
    with np.load(path) as z:
        arrays = {k: z[k] for k in z.files if k != "_meta"}
        meta = json.loads(bytes(z["_meta"]).decode())
    if meta.get("kind") != kind:
        raise SchemaError(f"archive {path} holds {meta.get('kind')!r}, expected {kind!r}")
    return arrays, meta


# ---------------------------------------------------------------------------
# copula posterior

def save_copula(posterior: CopulaPosterior, path) -> str:
    d0 = posterior.draws[0]
    arrays = {"loadings": np.stack([d.loadings for d in posterior.draws])}
    for r, m in enumerate(d0.marginals):
        arrays[f"marg_values_{r}"] = np.asarray(m.values, dtype=np.float64)
        arrays[f"marg_cdf_{r}"] = np.asarray(m.cdf, dtype=np.float64)
    meta = {
        "variable_names": list(d0.variable_names),
        "conditioning_names": list(d0.conditioning_names),
        "diagnostics": {
            k: v for k, v in posterior.diagnostics.items() if k != "rho_trace"
        },
    }
    return _save(path, "copula-posterior", arrays, meta)


def load_copula(path) -> CopulaPosterior:
    arrays, meta = _load(path, "copula-posterior")
    loadings = arrays["loadings"]
    p = loadings.shape[1]
    marginals = [
        EmpiricalMarginal(values=arrays[f"marg_values_{r}"], cdf=arrays[f"marg_cdf_{r}"])
        for r in range(p)
    ]
    names = tuple(meta["variable_names"])
    cond = tuple(meta["conditioning_names"])
    draws = [
        CopulaFactorParams(
            loadings=loadings[j], marginals=marginals,
            variable_names=names, conditioning_names=cond,
        )
        for j in range(loadings.shape[0])
    ]
    return CopulaPosterior(draws=draws, diagnostics=dict(meta.get("diagnostics", {})))


# ---------------------------------------------------------------------------
# risk posterior

def save_risk(posterior: RiskPosterior, path) -> str:
    feats, threshs, lefts, rights, values, roots = [], [], [], [], [], []
    draw_node_offsets = [0]
    draw_root_offsets = [0]
    offsets = []
    for d in posterior.draws:
        base = draw_node_offsets[-1]
        feats.append(d.feat)
        threshs.append(d.thresh)
        lefts.append(np.where(d.left >= 0, d.left + base, d.left))
        rights.append(np.where(d.right >= 0, d.right + base, d.right))
        values.append(d.value)
        roots.append(d.roots + base)
        offsets.append(d.offset)
        draw_node_offsets.append(base + len(d.feat))
        draw_root_offsets.append(draw_root_offsets[-1] + len(d.roots))
    arrays = {
        "feat": np.concatenate(feats),
        "thresh": np.concatenate(threshs),
        "left": np.concatenate(lefts),
        "right": np.concatenate(rights),
        "value": np.concatenate(values),
        "roots": np.concatenate(roots),
        "node_offsets": np.asarray(draw_node_offsets, dtype=np.int64),
        "root_offsets": np.asarray(draw_root_offsets, dtype=np.int64),
        "offsets": np.asarray(offsets, dtype=np.float64),
    }
    meta = {
        "item_names": list(posterior.draws[0].item_names),
        "training_summary": posterior.training_summary,
    }
    return _save(path, "risk-posterior", arrays, meta)


def load_risk(path) -> RiskPosterior:
    arrays, meta = _load(path, "risk-posterior")
    node_off = arrays["node_offsets"]
    root_off = arrays["root_offsets"]
    item_names = tuple(meta["item_names"])
    draws = []
    for j in range(len(node_off) - 1):
        a, b = int(node_off[j]), int(node_off[j + 1])
        ra, rb = int(root_off[j]), int(root_off[j + 1])
        left = arrays["left"][a:b]
        right = arrays["right"][a:b]
        draws.append(
            TreeEnsembleDraw(
                feat=arrays["feat"][a:b].copy(),
                thresh=arrays["thresh"][a:b].copy(),
                left=np.where(left >= 0, left - a, left).astype(left.dtype),
                right=np.where(right >= 0, right - a, right).astype(right.dtype),
                value=arrays["value"][a:b].copy(),
                roots=(arrays["roots"][ra:rb] - a).astype(np.int64),
                item_names=item_names,
                offset=float(arrays["offsets"][j]),
            )
        )
    return RiskPosterior(draws=draws, training_summary=dict(meta.get("training_summary", {})))


# ---------------------------------------------------------------------------
# populations

def _pooled_arrays(pooled: PooledRows, prefix: str):
    return {
        f"{prefix}x": pooled.x,
        f"{prefix}p": pooled.p,
        f"{prefix}y": pooled.y,
        f"{prefix}e_bar": pooled.e_bar,
    }


def _pooled_from(arrays, prefix):
    return PooledRows(
        x=arrays[f"{prefix}x"], p=arrays[f"{prefix}p"],
        y=arrays[f"{prefix}y"], e_bar=arrays[f"{prefix}e_bar"],
    )


def save_population(pop: SyntheticPopulation, path) -> str:
    arrays = _pooled_arrays(pop.pooled, "")
    meta = {
        "N": pop.N,
        "D": pop.D,
        "seed": pop.seed,
        "item_names": list(pop.item_names),
        "predicate": pop.predicate_text,
        "extra": pop.meta,
    }
    if pop.pruning_reservoir is not None:
        arrays.update(_pooled_arrays(pop.pruning_reservoir, "res_"))
        meta["has_reservoir"] = True
    return _save(path, "population", arrays, meta)


def load_population(path) -> SyntheticPopulation:
    arrays, meta = _load(path, "population")
    reservoir = _pooled_from(arrays, "res_") if meta.get("has_reservoir") else None
    return SyntheticPopulation(
        N=int(meta["N"]),
        D=int(meta["D"]),
        pooled=_pooled_from(arrays, ""),
        item_names=tuple(meta["item_names"]),
        seed=int(meta["seed"]),
        predicate_text=meta.get("predicate"),
        pruning_reservoir=reservoir,
        meta=dict(meta.get("extra", {})),
    )

"""Single-file model bundle: every fitted artifact the serving path needs.

Layout: magic, format version, a JSON metadata block, then length-prefixed
binary sections holding numpy arrays (referenced by index from the metadata),
and a trailing SHA-256 digest of everything before it.  Loading verifies the
digest and the version before reconstructing anything, and a round trip is
bit-exact: arrays are stored raw and JSON floats go through repr.
"""

from __future__ import annotations

import hashlib
import io
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .bkt import BktParams
from .features import FeatureBuilder, FeatureRegistry
from .forest import Forest, TrainConfig, Tree
from .mastery import FmModel, ProjectionConfig
from .simulator import QuestionMeta

__all__ = ["FORMAT_VERSION", "BundleError", "ModelBundle", "save_bundle", "load_bundle"]

FORMAT_VERSION = 1
_MAGIC = b"SCQB"


class BundleError(ValueError):
    """Raised when a bundle file fails validation."""


@dataclass
class ModelBundle:
    registry: FeatureRegistry
    catalog: list[QuestionMeta]
    bkt_params: dict[int, BktParams]
    fm_model: FmModel | None
    projection: ProjectionConfig | None
    forests: dict[int, Forest]  # bucket id -> forest; key 0 is the pooled forest
    backgrounds: dict[int, np.ndarray] = field(default_factory=dict)  # rows for attribution
    metadata: dict = field(default_factory=dict)
    format_version: int = FORMAT_VERSION

    def builder(self) -> FeatureBuilder:
        return FeatureBuilder(
            self.registry, self.catalog, self.bkt_params, self.fm_model, self.projection
        )

    def forest_for(self, bucket: int) -> Forest:
        """The bucket's forest, falling back to the pooled model."""
        f = self.forests.get(int(bucket))
        if f is None:
            f = self.forests.get(0)
        if f is None:
            raise BundleError(f"no forest available for bucket {bucket}")
        return f

    def background_for(self, bucket: int) -> np.ndarray:
        b = self.backgrounds.get(int(bucket))
        if b is None:
            b = self.backgrounds.get(0)
        if b is None:
            raise BundleError(f"no attribution background stored for bucket {bucket}")
        return b

    @property
    def n_features(self) -> int:
        return len(self.registry)


def _forest_meta_and_arrays(forest: Forest, sections: list[np.ndarray]) -> dict:
    names = ("feature", "threshold", "left", "right", "leaf_start", "leaf_count", "leaf_mean", "leaf_values")
    node_offsets = np.cumsum([0] + [len(t.feature) for t in forest.trees])
    value_offsets = np.cumsum([0] + [len(t.leaf_values) for t in forest.trees])
    refs = {}
    for name in names:
        refs[name] = len(sections)
        sections.append(np.concatenate([getattr(t, name) for t in forest.trees]))
    refs["node_offsets"] = len(sections)
    sections.append(node_offsets)
    refs["value_offsets"] = len(sections)
    sections.append(value_offsets)
    cfg = forest.config
    return {
        "refs": refs,
        "n_trees": len(forest.trees),
        "n_features": forest.n_features,
        "bucket": forest.bucket,
        "config": {
            "n_trees": cfg.n_trees,
            "max_depth": cfg.max_depth,
            "min_leaf": cfg.min_leaf,
            "features_per_split": cfg.features_per_split,
            "seed": cfg.seed,
            "quantiles": list(cfg.quantiles),
        },
    }


def _forest_from_meta(meta: dict, sections: list[np.ndarray]) -> Forest:
    refs = meta["refs"]
    arrays = {name: sections[idx] for name, idx in refs.items()}
    node_off = arrays["node_offsets"]
    val_off = arrays["value_offsets"]
    trees = []
    for i in range(meta["n_trees"]):
        ns, ne = int(node_off[i]), int(node_off[i + 1])
        vs, ve = int(val_off[i]), int(val_off[i + 1])
        start = arrays["leaf_start"][ns:ne].copy()
        trees.append(
            Tree(
                feature=arrays["feature"][ns:ne].astype(np.int32),
                threshold=arrays["threshold"][ns:ne].astype(np.float64),
                left=arrays["left"][ns:ne].astype(np.int32),
                right=arrays["right"][ns:ne].astype(np.int32),
                leaf_start=start.astype(np.int64),
                leaf_count=arrays["leaf_count"][ns:ne].astype(np.int64),
                leaf_mean=arrays["leaf_mean"][ns:ne].astype(np.float64),
                leaf_values=arrays["leaf_values"][vs:ve].astype(np.float64),
            )
        )
    c = meta["config"]
    cfg = TrainConfig(
        n_trees=c["n_trees"], max_depth=c["max_depth"], min_leaf=c["min_leaf"],
        features_per_split=c["features_per_split"], seed=c["seed"], quantiles=tuple(c["quantiles"]),
    )
    return Forest(trees, cfg, meta["n_features"], meta["bucket"])


def save_bundle(bundle: ModelBundle, path: str) -> str:
    """Write the container; returns the hex content digest."""
    sections: list[np.ndarray] = []
    forests_meta = {str(k): _forest_meta_and_arrays(f, sections) for k, f in sorted(bundle.forests.items())}
    background_refs = {}
    for k, arr in sorted(bundle.backgrounds.items()):
        background_refs[str(k)] = len(sections)
        sections.append(np.asarray(arr, dtype=np.float64))
    fm_meta = None
    if bundle.fm_model is not None:
        fm = bundle.fm_model
        fm_meta = {
            "w0": fm.w0,
            "n_concepts": fm.n_concepts,
            "learner_ids": sorted(fm.learner_index, key=fm.learner_index.get),
            "w_ref": len(sections),
            "v_ref": len(sections) + 1,
        }
        sections.append(fm.w)
        sections.append(fm.v)
    meta = {
        "format_version": bundle.format_version,
        "registry": bundle.registry.to_dict(),
        "catalog": [
            [q.question_id, q.concept_id, q.difficulty, q.ideal_time_s] for q in bundle.catalog
        ],
        "bkt_params": {
            str(c): [p.p_init, p.p_transit, p.p_guess, p.p_slip]
            for c, p in sorted(bundle.bkt_params.items())
        },
        "fm": fm_meta,
        "projection": (
            None
            if bundle.projection is None
            else {
                "input_dim": bundle.projection.input_dim,
                "output_dim": bundle.projection.output_dim,
                "seed": bundle.projection.seed,
                "scheme": bundle.projection.scheme,
            }
        ),
        "forests": forests_meta,
        "backgrounds": background_refs,
        "metadata": bundle.metadata,
    }
    buf = io.BytesIO()
    buf.write(_MAGIC)
    buf.write(struct.pack("<I", bundle.format_version))
    meta_bytes = json.dumps(meta, separators=(",", ":")).encode()
    buf.write(struct.pack("<Q", len(meta_bytes)))
    buf.write(meta_bytes)
    buf.write(struct.pack("<Q", len(sections)))
    for arr in sections:
        sec = io.BytesIO()
        np.save(sec, np.ascontiguousarray(arr), allow_pickle=False)
        raw = sec.getvalue()
        buf.write(struct.pack("<Q", len(raw)))
        buf.write(raw)
    payload = buf.getvalue()
    digest = hashlib.sha256(payload).digest()
    with open(path, "wb") as fh:
        fh.write(payload)
        fh.write(digest)
    return digest.hex()


def load_bundle(path: str) -> ModelBundle:
    """Read and validate a container written by :func:`save_bundle`."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 4 + 4 + 8 + 32:
        raise BundleError("truncated file: shorter than any valid bundle")
    payload, stored = blob[:-32], blob[-32:]
    if hashlib.sha256(payload).digest() != stored:
        raise BundleError("content digest mismatch: file is corrupted or truncated")
    if payload[:4] != _MAGIC:
        raise BundleError("bad magic: not a model bundle")
    off = 4
    (version,) = struct.unpack_from("<I", payload, off)
    off += 4
    if version > FORMAT_VERSION:
        raise BundleError(
            f"unsupported format_version {version} (this build reads <= {FORMAT_VERSION})"
        )
    (meta_len,) = struct.unpack_from("<Q", payload, off)
    off += 8
    meta = json.loads(payload[off : off + meta_len].decode())
    off += meta_len
    (n_sections,) = struct.unpack_from("<Q", payload, off)
    off += 8
    sections: list[np.ndarray] = []
    for _ in range(n_sections):
        (sec_len,) = struct.unpack_from("<Q", payload, off)
        off += 8
        sections.append(np.load(io.BytesIO(payload[off : off + sec_len]), allow_pickle=False))
        off += sec_len

    registry = FeatureRegistry.from_dict(meta["registry"])
    catalog = [QuestionMeta(q[0], int(q[1]), float(q[2]), float(q[3])) for q in meta["catalog"]]
    bkt = {int(c): BktParams(*vals) for c, vals in meta["bkt_params"].items()}
    fm = None
    if meta["fm"] is not None:
        fmm = meta["fm"]
        fm = FmModel(
            w0=float(fmm["w0"]),
            w=sections[fmm["w_ref"]].astype(np.float64),
            v=sections[fmm["v_ref"]].astype(np.float64),
            learner_index={lid: i for i, lid in enumerate(fmm["learner_ids"])},
            n_concepts=int(fmm["n_concepts"]),
        )
    projection = None
    if meta["projection"] is not None:
        projection = ProjectionConfig(**meta["projection"])
    forests = {int(k): _forest_from_meta(m, sections) for k, m in meta["forests"].items()}
    backgrounds = {
        int(k): sections[ref].astype(np.float64) for k, ref in meta.get("backgrounds", {}).items()
    }
    return ModelBundle(
        registry=registry,
        catalog=catalog,
        bkt_params=bkt,
        fm_model=fm,
        projection=projection,
        forests=forests,
        backgrounds=backgrounds,
        metadata=meta["metadata"],
        format_version=version,
    )

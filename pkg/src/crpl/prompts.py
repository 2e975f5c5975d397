"""Learnable prompt parameterization and the frozen toy text encoder.

A prompt for class k is a token sequence; three layouts exist:

* source domain i:  [shared_k tokens][source_i tokens][class_k token]
* target domain:    [shared_k tokens][target tokens][class_k token]
* base (hand-written context): [base context tokens][class_k token]

The encoder standing in for a real text tower is deliberately minimal:
mean-pool the token sequence, two affine layers with tanh, then L2
normalization onto the unit sphere. It is generated deterministically
from a seed, frozen, and exactly differentiable w.r.t. its input tokens,
which is all the training losses need. Mean pooling makes token order
irrelevant, so gradient bookkeeping stays simple: every token in a
sequence receives the same gradient.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from . import blobio
from .embedding import l2_normalize
from .errors import (
    DimensionMismatch,
    EmptySequence,
    IoFailure,
    SchemaMismatch,
    UnknownOwner,
    ZeroVector,
)

TARGET = "<target>"
BASE = "<base>"

TOKEN_INIT_STD = 0.02      # learnable-token init scale, keeps tanh near-linear
ENCODER_WEIGHT_GAIN = 1.2  # scale of the orthogonalized affine weights
ENCODER_BIAS_STD = 0.25    # keeps the pooled operating point away from 0

CHECKPOINT_SCHEMA_VERSION = 1


class TextEncoder:
    """Frozen two-layer tanh MLP from token space to the unit sphere.

    Parameters are generated from ``seed`` and never change. Weights are
    orthogonalized Gaussian draws scaled by a fixed gain; the scale and
    biases are chosen so mean-pooled prompt tokens land in tanh's active
    region rather than its saturated tails.
    """

    def __init__(self, seed: int, d_tok: int, d_hid: int, d_out: int):
        self.seed = int(seed)
        self.d_tok = int(d_tok)
        self.d_hid = int(d_hid)
        self.d_out = int(d_out)
        rng = np.random.default_rng(self.seed)
        self.w1 = _orthogonalized(rng, self.d_hid, self.d_tok) * ENCODER_WEIGHT_GAIN
        self.b1 = rng.normal(0.0, ENCODER_BIAS_STD, size=self.d_hid)
        self.w2 = _orthogonalized(rng, self.d_out, self.d_hid) * ENCODER_WEIGHT_GAIN
        self.b2 = rng.normal(0.0, ENCODER_BIAS_STD, size=self.d_out)


def _orthogonalized(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    """Rows x cols matrix with orthonormal rows or columns (the short side)."""
    g = rng.normal(size=(max(rows, cols), min(rows, cols)))
    q, _ = np.linalg.qr(g)
    q = q[: max(rows, cols), : min(rows, cols)]
    return q if rows >= cols else q.T


def encode(enc: TextEncoder, seq: np.ndarray) -> np.ndarray:
    """Map a token sequence to a unit-norm embedding.

    mean-pool -> affine+tanh -> affine+tanh -> L2 normalize.

    Raises:
        EmptySequence: for a zero-length sequence.
        DimensionMismatch: token width differs from the encoder's d_tok.
    """
    seq = np.asarray(seq, dtype=np.float64)
    if seq.ndim != 2 or seq.shape[0] == 0:
        raise EmptySequence("encode needs a non-empty (T, d_tok) sequence")
    if seq.shape[1] != enc.d_tok:
        raise DimensionMismatch(f"token dim {seq.shape[1]} != encoder d_tok {enc.d_tok}")
    m = seq.mean(axis=0)
    h = np.tanh(enc.w1 @ m + enc.b1)
    o = np.tanh(enc.w2 @ h + enc.b2)
    return l2_normalize(o)


def encode_backward(enc: TextEncoder, seq: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    """Exact reverse-mode gradient of :func:`encode` w.r.t. every token.

    Args:
        seq: the (T, d_tok) sequence that was encoded.
        upstream: gradient of the loss w.r.t. the unit-norm output, (d,).

    Returns:
        (T, d_tok) per-token gradients. Mean pooling makes all rows equal;
        gradients for frozen tokens are returned too and the caller
        discards them.
    """
    seq = np.asarray(seq, dtype=np.float64)
    if seq.ndim != 2 or seq.shape[0] == 0:
        raise EmptySequence("encode_backward needs a non-empty sequence")
    upstream = np.asarray(upstream, dtype=np.float64)
    m = seq.mean(axis=0)
    h = np.tanh(enc.w1 @ m + enc.b1)
    o = np.tanh(enc.w2 @ h + enc.b2)
    norm = np.linalg.norm(o)
    if norm <= 1e-12:
        raise ZeroVector("pre-normalization output collapsed to zero")
    y = o / norm
    # normalization Jacobian: (I - y y^T) / ||o||
    g_o = (upstream - y * np.dot(y, upstream)) / norm
    g_a2 = g_o * (1.0 - o * o)
    g_h = enc.w2.T @ g_a2
    g_a1 = g_h * (1.0 - h * h)
    g_m = enc.w1.T @ g_a1
    per_token = g_m / seq.shape[0]
    return np.tile(per_token, (seq.shape[0], 1))


def invert_for_direction(
    enc: TextEncoder,
    direction: np.ndarray,
    prefix: np.ndarray,
    amplitude: float = 0.6,
) -> np.ndarray:
    """Solve for a single token that steers the encoder output onto ``direction``.

    Works backwards through the network: pick a pre-normalization output
    ``amplitude * direction``, invert tanh and the affine layers by least
    squares, and undo the mean pooling given the frozen ``prefix`` tokens.
    The amplitude is halved until every intermediate stays strictly inside
    tanh's range. With square full-rank weights the reconstruction is
    exact up to rounding; callers verify the result downstream.
    """
    direction = l2_normalize(np.asarray(direction, dtype=np.float64))
    prefix = np.asarray(prefix, dtype=np.float64)
    t_total = prefix.shape[0] + 1
    amp = float(amplitude)
    for _ in range(20):
        o = amp * direction
        if np.max(np.abs(o)) >= 0.97:
            amp *= 0.5
            continue
        a2 = np.arctanh(o)
        h, *_ = np.linalg.lstsq(enc.w2, a2 - enc.b2, rcond=None)
        if np.max(np.abs(h)) >= 0.97:
            amp *= 0.5
            continue
        a1 = np.arctanh(h)
        m, *_ = np.linalg.lstsq(enc.w1, a1 - enc.b1, rcond=None)
        return t_total * m - prefix.sum(axis=0)
    raise ZeroVector("token inversion could not stay inside tanh's range")


@dataclass
class PromptBank:
    """All token matrices: learnable prompts plus frozen class/base tokens.

    shared:  (K, M1, d_tok) class-specific tokens shared across domains.
    sources: one (M2, d_tok) matrix per source domain, order matches
             ``source_ids``.
    target:  (M2, d_tok) target-domain tokens.
    classes: (K, d_tok) frozen class tokens.
    base:    (M_base, d_tok) frozen hand-written context tokens.
    """

    shared: np.ndarray
    sources: list[np.ndarray]
    target: np.ndarray
    classes: np.ndarray
    base: np.ndarray
    source_ids: list[str]

    def __post_init__(self):
        d_tok = self.shared.shape[2]
        mats = [self.target, self.classes, self.base, *self.sources]
        if any(m.shape[-1] != d_tok for m in mats):
            raise DimensionMismatch("all token matrices must share d_tok")
        if len(self.sources) != len(self.source_ids) or not self.sources:
            raise ValueError("need one source prompt per source id, at least one")
        if self.shared.shape[0] != self.classes.shape[0]:
            raise DimensionMismatch("shared prompts and class tokens disagree on K")

    @property
    def n_classes(self) -> int:
        return self.shared.shape[0]

    @property
    def m1(self) -> int:
        return self.shared.shape[1]

    @property
    def m2(self) -> int:
        return self.target.shape[0]

    @property
    def d_tok(self) -> int:
        return self.shared.shape[2]

    def owners(self) -> list[str]:
        """All valid composition owners: every source id, TARGET, BASE."""
        return [*self.source_ids, TARGET, BASE]

    def learnables(self) -> dict[str, np.ndarray]:
        """Name -> live array view of every trainable token matrix."""
        out = {"shared": self.shared, "target": self.target}
        for i, src in enumerate(self.sources):
            out[f"source_{i}"] = src
        return out

    def copy(self) -> "PromptBank":
        return PromptBank(
            shared=self.shared.copy(),
            sources=[s.copy() for s in self.sources],
            target=self.target.copy(),
            classes=self.classes.copy(),
            base=self.base.copy(),
            source_ids=list(self.source_ids),
        )


def init_prompt_bank(
    seed: int,
    n_classes: int,
    d_tok: int,
    m1: int,
    m2: int,
    source_ids: list[str],
    class_tokens: np.ndarray,
    base_tokens: np.ndarray,
) -> PromptBank:
    """Fresh bank: learnable tokens i.i.d. N(0, 0.02^2), frozen tokens given."""
    rng = np.random.default_rng(seed)
    shared = rng.normal(0.0, TOKEN_INIT_STD, size=(n_classes, m1, d_tok))
    sources = [
        rng.normal(0.0, TOKEN_INIT_STD, size=(m2, d_tok)) for _ in source_ids
    ]
    target = rng.normal(0.0, TOKEN_INIT_STD, size=(m2, d_tok))
    return PromptBank(
        shared=shared,
        sources=sources,
        target=target,
        classes=np.asarray(class_tokens, dtype=np.float64).copy(),
        base=np.asarray(base_tokens, dtype=np.float64).copy(),
        source_ids=list(source_ids),
    )


def compose_prompt(bank: PromptBank, k: int, owner: str) -> np.ndarray:
    """Token sequence for class k under the given owner.

    Source/target prompts are [shared_k][owner tokens][class_k]; BASE is
    [base context][class_k] with no learnable tokens at all.

    Raises:
        UnknownOwner: owner is neither a source id, TARGET, nor BASE.
    """
    if not 0 <= k < bank.n_classes:
        raise IndexError(f"class index {k} out of range")
    cls = bank.classes[k][None, :]
    if owner == BASE:
        return np.vstack([bank.base, cls])
    if owner == TARGET:
        mid = bank.target
    elif owner in bank.source_ids:
        mid = bank.sources[bank.source_ids.index(owner)]
    else:
        raise UnknownOwner(f"owner {owner!r} not in {bank.owners()}")
    return np.vstack([bank.shared[k], mid, cls])


def text_embedding_table(bank: PromptBank, enc: TextEncoder, owner: str) -> np.ndarray:
    """(K, d) table of unit-norm text embeddings for one owner."""
    return np.stack(
        [encode(enc, compose_prompt(bank, k, owner)) for k in range(bank.n_classes)]
    )


def table_backward(
    bank: PromptBank,
    enc: TextEncoder,
    owner: str,
    upstream: np.ndarray,
) -> dict[str, np.ndarray]:
    """Backpropagate per-class table gradients into token-matrix gradients.

    Args:
        upstream: (K, d) gradients w.r.t. the owner's embedding table.

    Returns:
        Gradients keyed like :meth:`PromptBank.learnables`, restricted to
        the matrices this owner's prompts actually contain (shared plus
        the owner's own tokens). Frozen class-token gradients are dropped.
    """
    if owner == BASE:
        raise UnknownOwner("the base table has no learnable tokens")
    grads_shared = np.zeros_like(bank.shared)
    grads_mid = np.zeros_like(bank.target)
    m1 = bank.m1
    for k in range(bank.n_classes):
        seq = compose_prompt(bank, k, owner)
        tok = encode_backward(enc, seq, upstream[k])
        grads_shared[k] = tok[:m1]
        grads_mid += tok[m1 : m1 + bank.m2]
    key = "target" if owner == TARGET else f"source_{bank.source_ids.index(owner)}"
    return {"shared": grads_shared, key: grads_mid}


def save_bank(bank: PromptBank, enc: TextEncoder, path: str) -> None:
    """Write a checkpoint directory: manifest.json plus one f32 blob per matrix."""
    os.makedirs(path, exist_ok=True)
    manifest = {
        "schema_version": CHECKPOINT_SCHEMA_VERSION,
        "d": enc.d_out,
        "d_tok": enc.d_tok,
        "d_hid": enc.d_hid,
        "K": bank.n_classes,
        "N_sources": len(bank.sources),
        "M1": bank.m1,
        "M2": bank.m2,
        "encoder_seed": enc.seed,
    }
    try:
        with open(os.path.join(path, "manifest.json"), "w") as fh:
            json.dump(manifest, fh, indent=2)
    except OSError as exc:
        raise IoFailure(f"cannot write manifest in {path}: {exc}") from exc
    blobio.write_f32(os.path.join(path, "shared.f32"), bank.shared)
    for i, src in enumerate(bank.sources):
        blobio.write_f32(os.path.join(path, f"source_{i}.f32"), src)
    blobio.write_f32(os.path.join(path, "target.f32"), bank.target)
    blobio.write_f32(os.path.join(path, "classes.f32"), bank.classes)
    blobio.write_f32(os.path.join(path, "base.f32"), bank.base)


def load_bank(
    path: str,
    source_ids: list[str] | None = None,
    expect_dim: int | None = None,
) -> tuple[PromptBank, TextEncoder]:
    """Read a checkpoint directory back into a bank plus its encoder.

    Args:
        source_ids: domain names to attach to the stored source prompts,
            in index order; defaults to ``source_<i>``.
        expect_dim: when given, the stored embedding dim must match.

    Raises:
        SchemaMismatch: wrong schema version, missing keys, or a dim that
            contradicts ``expect_dim``.
    """
    manifest_path = os.path.join(path, "manifest.json")
    try:
        with open(manifest_path) as fh:
            manifest = json.load(fh)
    except OSError as exc:
        raise IoFailure(f"cannot read {manifest_path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise SchemaMismatch(f"{manifest_path} is not valid JSON: {exc}") from exc
    required = {"schema_version", "d", "d_tok", "d_hid", "K", "N_sources", "M1", "M2", "encoder_seed"}
    missing = required - manifest.keys()
    if missing:
        raise SchemaMismatch(f"manifest missing keys: {sorted(missing)}")
    if manifest["schema_version"] != CHECKPOINT_SCHEMA_VERSION:
        raise SchemaMismatch(f"unsupported schema_version {manifest['schema_version']}")
    if expect_dim is not None and manifest["d"] != expect_dim:
        raise SchemaMismatch(f"checkpoint d={manifest['d']} but expected d={expect_dim}")
    d, d_tok, d_hid = manifest["d"], manifest["d_tok"], manifest["d_hid"]
    n_classes, n_src = manifest["K"], manifest["N_sources"]
    m1, m2 = manifest["M1"], manifest["M2"]
    if source_ids is None:
        source_ids = [f"source_{i}" for i in range(n_src)]
    elif len(source_ids) != n_src:
        raise SchemaMismatch(f"checkpoint has {n_src} sources, got {len(source_ids)} ids")
    shared = blobio.read_f32(os.path.join(path, "shared.f32"), (n_classes, m1, d_tok))
    sources = [
        blobio.read_f32(os.path.join(path, f"source_{i}.f32"), (m2, d_tok))
        for i in range(n_src)
    ]
    target = blobio.read_f32(os.path.join(path, "target.f32"), (m2, d_tok))
    classes = blobio.read_f32(os.path.join(path, "classes.f32"), (n_classes, d_tok))
    base_path = os.path.join(path, "base.f32")
    try:
        base_len = os.path.getsize(base_path) // (4 * d_tok)
    except OSError as exc:
        raise IoFailure(f"cannot read {base_path}: {exc}") from exc
    base = blobio.read_f32(base_path, (base_len, d_tok))
    bank = PromptBank(
        shared=shared,
        sources=sources,
        target=target,
        classes=classes,
        base=base,
        source_ids=list(source_ids),
    )
    enc = TextEncoder(seed=manifest["encoder_seed"], d_tok=d_tok, d_hid=d_hid, d_out=d)
    return bank, enc

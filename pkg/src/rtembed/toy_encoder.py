"""Deterministic decoder-only toy transformer executed with numpy.

Small enough for millisecond forward passes, deep enough to exercise
multi-layer composition: pre-layer-norm blocks, causal multi-head
attention, GELU MLP with 4x expansion. Previous pooled states enter the
input as projected pseudo-token slots placed after the query tokens and
before the EOS token; they receive position embeddings like real tokens.

Causality here is bitwise, not approximate: every position-mixing step is
computed one row at a time over fixed-shape prefixes, so the arithmetic
for row i never touches data at positions > i. Mutating a suffix slot (or
appending slots) leaves earlier hidden rows exactly unchanged.
"""

from __future__ import annotations

import hashlib
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from .core import Embedding, l2_normalize

_LN_EPS = 1e-5
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF


def fnv1a_64(text: str) -> int:
    """FNV-1a 64-bit hash of the UTF-8 bytes; stable across platforms."""
    h = _FNV_OFFSET
    for byte in text.encode("utf-8"):
        h = ((h ^ byte) * _FNV_PRIME) & _MASK64
    return h


@dataclass(frozen=True)
class TokenSeq:
    """Token ids with exactly one trailing EOS id."""

    ids: tuple[int, ...]
    eos_id: int

    def __post_init__(self) -> None:
        ids = tuple(int(i) for i in self.ids)
        if not ids:
            raise ValueError("token sequence is empty")
        if ids[-1] != self.eos_id:
            raise ValueError("token sequence must end with the EOS id")
        if self.eos_id in ids[:-1]:
            raise ValueError("EOS id may only appear in the final position")
        object.__setattr__(self, "ids", ids)

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def n_tokens(self) -> int:
        """Non-EOS token count."""
        return len(self.ids) - 1


def tokenize(text: str, vocab_size: int) -> TokenSeq:
    """Whitespace-split and hash each token into [0, vocab_size-2].

    The EOS id is vocab_size-1 and is appended, never produced by hashing,
    so it cannot collide with a content token.
    """
    if vocab_size < 2:
        raise ValueError(f"vocab_size must be >= 2, got {vocab_size}")
    words = text.split()
    if not words:
        raise ValueError("cannot tokenize empty or whitespace-only text")
    eos_id = vocab_size - 1
    ids = tuple(fnv1a_64(w) % (vocab_size - 1) for w in words) + (eos_id,)
    return TokenSeq(ids, eos_id)


@dataclass(frozen=True)
class EncoderHyper:
    vocab_size: int = 256
    dim: int = 32
    n_layers: int = 2
    n_heads: int = 4
    max_positions: int = 128

    def __post_init__(self) -> None:
        for name in ("vocab_size", "dim", "n_layers", "n_heads", "max_positions"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.dim % self.n_heads != 0:
            raise ValueError(f"dim={self.dim} not divisible by n_heads={self.n_heads}")


@dataclass(frozen=True)
class LayerWeights:
    ln1_g: np.ndarray
    ln1_b: np.ndarray
    wq: np.ndarray
    bq: np.ndarray
    wk: np.ndarray
    bk: np.ndarray
    wv: np.ndarray
    bv: np.ndarray
    wo: np.ndarray
    bo: np.ndarray
    ln2_g: np.ndarray
    ln2_b: np.ndarray
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray


@dataclass(frozen=True)
class EncoderParams:
    """All weights, fully determined by (seed, hyper)."""

    hyper: EncoderHyper
    seed: int
    token_emb: np.ndarray
    pos_emb: np.ndarray
    layers: tuple[LayerWeights, ...]
    state_proj: np.ndarray
    state_bias: np.ndarray
    lnf_g: np.ndarray
    lnf_b: np.ndarray

    def weight_arrays(self) -> list[np.ndarray]:
        out = [self.token_emb, self.pos_emb]
        for lw in self.layers:
            out.extend(getattr(lw, f.name) for f in lw.__dataclass_fields__.values())
        out.extend([self.state_proj, self.state_bias, self.lnf_g, self.lnf_b])
        return out


def _ro(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr, dtype=np.float64)
    arr.setflags(write=False)
    return arr


def init_params(seed: int, hyper: EncoderHyper = EncoderHyper()) -> EncoderParams:
    """Draw all weights from one PRNG stream; same (seed, hyper) is bit-identical."""
    rng = np.random.default_rng(seed)
    d = hyper.dim
    scale = 0.02

    def normal(*shape: int) -> np.ndarray:
        return _ro(rng.normal(0.0, scale, shape))

    token_emb = normal(hyper.vocab_size, d)
    pos_emb = normal(hyper.max_positions, d)
    layers = []
    for _ in range(hyper.n_layers):
        layers.append(
            LayerWeights(
                ln1_g=_ro(np.ones(d)),
                ln1_b=_ro(np.zeros(d)),
                wq=normal(d, d),
                bq=_ro(np.zeros(d)),
                wk=normal(d, d),
                bk=_ro(np.zeros(d)),
                wv=normal(d, d),
                bv=_ro(np.zeros(d)),
                wo=normal(d, d),
                bo=_ro(np.zeros(d)),
                ln2_g=_ro(np.ones(d)),
                ln2_b=_ro(np.zeros(d)),
                w1=normal(d, 4 * d),
                b1=_ro(np.zeros(4 * d)),
                w2=normal(4 * d, d),
                b2=_ro(np.zeros(d)),
            )
        )
    state_proj = normal(d, d)
    state_bias = _ro(np.zeros(d))
    lnf_g = _ro(np.ones(d))
    lnf_b = _ro(np.zeros(d))
    if not all(np.all(np.isfinite(a)) for a in [token_emb, pos_emb, state_proj]):
        raise ValueError("non-finite weights drawn")  # unreachable with normal()
    return EncoderParams(
        hyper=hyper,
        seed=seed,
        token_emb=token_emb,
        pos_emb=pos_emb,
        layers=tuple(layers),
        state_proj=state_proj,
        state_bias=state_bias,
        lnf_g=lnf_g,
        lnf_b=lnf_b,
    )


def params_checksum(params: EncoderParams) -> str:
    """SHA-256 over the raw little-endian float64 bytes of every weight."""
    h = hashlib.sha256()
    for arr in params.weight_arrays():
        h.update(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return h.hexdigest()


@dataclass(frozen=True)
class HiddenStates:
    """Final-layer representation for every input position."""

    matrix: np.ndarray  # (n_tokens + n_states + 1, dim)
    n_tokens: int
    n_states: int
    attention: tuple[np.ndarray, ...] | None = None  # per layer: (heads, L, L)

    def __post_init__(self) -> None:
        if self.matrix.shape[0] != self.n_tokens + self.n_states + 1:
            raise ValueError("hidden state row count does not match slot counts")
        if not np.all(np.isfinite(self.matrix)):
            raise ValueError("hidden states contain non-finite values")
        object.__setattr__(self, "matrix", _ro(self.matrix))

    @property
    def eos_index(self) -> int:
        return self.matrix.shape[0] - 1


def _layer_norm_row(v: np.ndarray, g: np.ndarray, b: np.ndarray) -> np.ndarray:
    mu = v.mean()
    var = v.var()
    return (v - mu) / np.sqrt(var + _LN_EPS) * g + b


def _gelu(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + np.tanh(np.sqrt(2.0 / np.pi) * (x + 0.044715 * x**3)))


def forward(
    params: EncoderParams,
    tokens: TokenSeq,
    prefix_states: Sequence[Embedding] = (),
    record_attention: bool = False,
) -> HiddenStates:
    """Run the causal stack over [tokens ... states ... EOS].

    State vectors pass through the learned projection and occupy one slot
    each, in the order given (trajectory order), after the query tokens
    and before EOS. Position embeddings cover the combined sequence.
    """
    hyper = params.hyper
    d = hyper.dim
    total = len(tokens) + len(prefix_states)
    if total > hyper.max_positions:
        raise ValueError(
            f"sequence of {total} positions exceeds max_positions={hyper.max_positions}"
        )
    if max(tokens.ids) >= hyper.vocab_size:
        raise ValueError("token id outside vocabulary")
    for s in prefix_states:
        if s.dim != d:
            raise ValueError(f"prefix state dim {s.dim} != encoder dim {d}")

    n_tokens = tokens.n_tokens
    n_states = len(prefix_states)

    # Input rows, assembled position by position.
    x = np.empty((total, d))
    pos = 0
    for tid in tokens.ids[:-1]:
        x[pos] = params.token_emb[tid] + params.pos_emb[pos]
        pos += 1
    for s in prefix_states:
        x[pos] = (s.values @ params.state_proj + params.state_bias) + params.pos_emb[pos]
        pos += 1
    x[pos] = params.token_emb[tokens.eos_id] + params.pos_emb[pos]

    n_heads = hyper.n_heads
    head_dim = d // n_heads
    inv_sqrt = 1.0 / np.sqrt(head_dim)
    attn_maps: list[np.ndarray] = []

    for lw in params.layers:
        normed = np.empty_like(x)
        q = np.empty_like(x)
        k = np.empty_like(x)
        v = np.empty_like(x)
        for i in range(total):
            normed[i] = _layer_norm_row(x[i], lw.ln1_g, lw.ln1_b)
            q[i] = normed[i] @ lw.wq + lw.bq
            k[i] = normed[i] @ lw.wk + lw.bk
            v[i] = normed[i] @ lw.wv + lw.bv
        ctx = np.empty_like(x)
        attn = np.zeros((n_heads, total, total)) if record_attention else None
        for i in range(total):
            for h in range(n_heads):
                lo, hi = h * head_dim, (h + 1) * head_dim
                scores = (k[: i + 1, lo:hi] @ q[i, lo:hi]) * inv_sqrt
                scores = scores - scores.max()
                weights = np.exp(scores)
                weights = weights / weights.sum()
                ctx[i, lo:hi] = weights @ v[: i + 1, lo:hi]
                if attn is not None:
                    attn[h, i, : i + 1] = weights
        for i in range(total):
            x[i] = x[i] + (ctx[i] @ lw.wo + lw.bo)
            u = _layer_norm_row(x[i], lw.ln2_g, lw.ln2_b)
            x[i] = x[i] + (_gelu(u @ lw.w1 + lw.b1) @ lw.w2 + lw.b2)
        if attn is not None:
            attn_maps.append(attn)

    for i in range(total):
        x[i] = _layer_norm_row(x[i], params.lnf_g, params.lnf_b)

    return HiddenStates(
        matrix=x,
        n_tokens=n_tokens,
        n_states=n_states,
        attention=tuple(attn_maps) if record_attention else None,
    )


def pool(hidden: HiddenStates | np.ndarray, eos_index: int) -> Embedding:
    """Mean of all rows before eos_index, then L2-normalized."""
    matrix = hidden.matrix if isinstance(hidden, HiddenStates) else np.asarray(hidden, dtype=np.float64)
    rows = matrix.shape[0]
    if eos_index <= 0:
        raise ValueError("nothing to pool: eos_index must be positive")
    if eos_index >= rows:
        raise ValueError(f"eos_index {eos_index} out of range for {rows} rows")
    mean = matrix[:eos_index].mean(axis=0)
    return l2_normalize(Embedding(mean))

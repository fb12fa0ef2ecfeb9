"""Encoder backends: the function mapping (text, prior states) to an embedding.

Three implementations share one contract:

* ``ToyBackend`` runs the toy transformer (tokenize -> forward -> pool).
* ``AdditiveBackend`` is a closed-form reference whose refinement behaviour
  can be iterated by hand, which makes engine-level claims testable.
* ``RemoteBackend`` speaks the rt-encode wire protocol to an HTTP server.

Every backend returns a unit-norm embedding, and encoding with no prior
states is a pure function of the text for a given instance. Document-side
encoding always uses empty prior states; refinement is query-side only.
"""

from __future__ import annotations

import abc
import json
import threading
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np
import requests

from .core import Embedding, l2_normalize
from .toy_encoder import EncoderParams, fnv1a_64, forward, pool, tokenize

POOL_SCOPES = ("all_before_eos", "tokens_only")


class EncoderBackend(abc.ABC):
    """Abstract encoder capability used by the refinement engine."""

    @abc.abstractmethod
    def encode(self, text: str, prefix_states: Sequence[Embedding] = ()) -> Embedding:
        """Embed ``text`` conditioned on prior states (trajectory order)."""

    @abc.abstractmethod
    def dim(self) -> int:
        ...

    @abc.abstractmethod
    def name(self) -> str:
        ...


class ToyBackend(EncoderBackend):
    """Toy transformer behind the backend contract."""

    def __init__(self, params: EncoderParams, pool_scope: str = "all_before_eos"):
        if pool_scope not in POOL_SCOPES:
            raise ValueError(f"pool_scope must be one of {POOL_SCOPES}, got {pool_scope!r}")
        self._params = params
        self._pool_scope = pool_scope

    def encode(self, text: str, prefix_states: Sequence[Embedding] = ()) -> Embedding:
        tokens = tokenize(text, self._params.hyper.vocab_size)
        hidden = forward(self._params, tokens, prefix_states)
        if self._pool_scope == "tokens_only":
            return pool(hidden, hidden.n_tokens)
        return pool(hidden, hidden.eos_index)

    def dim(self) -> int:
        return self._params.hyper.dim

    def name(self) -> str:
        return f"toy(seed={self._params.seed},dim={self._params.hyper.dim},pool={self._pool_scope})"


@dataclass(frozen=True)
class AdditiveRefParams:
    """Configuration of the closed-form additive backend.

    The base embedding of a text is a unit vector derived from a stable
    hash of the text (salted by ``seed``), unless ``base_overrides`` pins
    that exact text to a chosen vector. ``transition`` defaults to the
    identity when absent.
    """

    dim: int
    mix: float
    transition: np.ndarray | None = None
    seed: int = 0
    base_overrides: Mapping[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise ValueError("dim must be positive")
        if not 0.0 < self.mix < 1.0:
            raise ValueError(f"mix must lie in (0, 1), got {self.mix}")
        if self.transition is not None:
            m = np.asarray(self.transition, dtype=np.float64)
            if m.shape != (self.dim, self.dim):
                raise ValueError(f"transition must be {self.dim}x{self.dim}, got {m.shape}")
            if not np.all(np.isfinite(m)):
                raise ValueError("transition matrix contains non-finite values")
            m = np.ascontiguousarray(m)
            m.setflags(write=False)
            object.__setattr__(self, "transition", m)
        overrides = {}
        for text, vec in self.base_overrides.items():
            v = np.asarray(vec, dtype=np.float64)
            if v.shape != (self.dim,):
                raise ValueError(f"override for {text!r} has shape {v.shape}, want ({self.dim},)")
            norm = float(np.linalg.norm(v))
            if norm == 0.0:
                raise ValueError(f"override for {text!r} is a zero vector")
            v = np.ascontiguousarray(v / norm)
            v.setflags(write=False)
            overrides[text] = v
        object.__setattr__(self, "base_overrides", overrides)


class AdditiveBackend(EncoderBackend):
    """Closed-form backend: normalize((1-a)*e(text) + a*M*mean(states))."""

    def __init__(self, params: AdditiveRefParams):
        self._p = params

    @property
    def params(self) -> AdditiveRefParams:
        return self._p

    def base_embedding(self, text: str) -> Embedding:
        """The no-state embedding e(text): unit-norm, hash-derived."""
        override = self._p.base_overrides.get(text)
        if override is not None:
            return Embedding(override, normalized=True)
        rng = np.random.default_rng((self._p.seed, fnv1a_64(text)))
        vec = rng.normal(0.0, 1.0, self._p.dim)
        return l2_normalize(Embedding(vec))

    def encode(self, text: str, prefix_states: Sequence[Embedding] = ()) -> Embedding:
        e = self.base_embedding(text)
        if not prefix_states:
            return e
        for s in prefix_states:
            if s.dim != self._p.dim:
                raise ValueError(f"prefix state dim {s.dim} != backend dim {self._p.dim}")
        mean = np.mean([s.values for s in prefix_states], axis=0)
        if self._p.transition is not None:
            mean = self._p.transition @ mean
        mixed = (1.0 - self._p.mix) * e.values + self._p.mix * mean
        if float(np.linalg.norm(mixed)) == 0.0:
            raise ValueError("state mix cancelled to the zero vector")
        return l2_normalize(Embedding(mixed))

    def dim(self) -> int:
        return self._p.dim

    def name(self) -> str:
        return f"additive(dim={self._p.dim},mix={self._p.mix},seed={self._p.seed})"


class TransientEncodeError(RuntimeError):
    """Transport-level failure; the request is idempotent and retryable."""


class ProtocolError(RuntimeError):
    """Malformed response, contract violation, or server-side error. Fatal."""


class ClientRequestError(RuntimeError):
    """Server rejected the request (HTTP 4xx). Fatal."""

    def __init__(self, status: int, message: str):
        super().__init__(f"HTTP {status}: {message}")
        self.status = status


ENCODE_PATH = "/v1/rt-encode"
PROTOCOL_VERSION = 1


class RemoteBackend(EncoderBackend):
    """Client for the rt-encode wire protocol.

    Retries only transport failures (connect/timeout), never protocol or
    client errors; encoding is idempotent so a retry is safe. The request
    body is built once per call, so retried requests are byte-identical.
    In-flight requests are bounded by ``max_inflight``.
    """

    def __init__(
        self,
        endpoint: str,
        dim: int,
        timeout: float = 10.0,
        retries: int = 2,
        token: str | None = None,
        max_inflight: int = 8,
        session: requests.Session | None = None,
    ):
        if dim < 1:
            raise ValueError("dim must be positive")
        if retries < 0:
            raise ValueError("retries must be >= 0")
        self._url = endpoint.rstrip("/") + ENCODE_PATH
        self._dim = dim
        self._timeout = timeout
        self._retries = retries
        self._headers = {"Content-Type": "application/json"}
        if token:
            self._headers["Authorization"] = f"Bearer {token}"
        self._gate = threading.BoundedSemaphore(max_inflight)
        self._session = session if session is not None else requests.Session()

    def encode(self, text: str, prefix_states: Sequence[Embedding] = ()) -> Embedding:
        for s in prefix_states:
            if s.dim != self._dim:
                raise ValueError(f"prefix state dim {s.dim} != backend dim {self._dim}")
        body = json.dumps(
            {
                "version": PROTOCOL_VERSION,
                "text": text,
                "prefix_vectors": [[float(x) for x in s.values] for s in prefix_states],
            }
        ).encode("utf-8")
        response = self._post_with_retries(body)
        return self._parse(response)

    def _post_with_retries(self, body: bytes) -> requests.Response:
        last: Exception | None = None
        for _ in range(self._retries + 1):
            try:
                with self._gate:
                    return self._session.post(
                        self._url, data=body, headers=self._headers, timeout=self._timeout
                    )
            except (requests.ConnectionError, requests.Timeout) as exc:
                last = exc
        raise TransientEncodeError(f"rt-encode unreachable after {self._retries + 1} attempts: {last}")

    def _parse(self, response: requests.Response) -> Embedding:
        if 400 <= response.status_code < 500:
            raise ClientRequestError(response.status_code, _server_error(response))
        if response.status_code != 200:
            raise ProtocolError(f"unexpected HTTP {response.status_code}: {_server_error(response)}")
        try:
            payload = response.json()
        except ValueError as exc:
            raise ProtocolError(f"response is not valid JSON: {exc}") from exc
        if not isinstance(payload, dict) or payload.get("version") != PROTOCOL_VERSION:
            raise ProtocolError(f"unsupported response payload: {payload!r}")
        embedding = payload.get("embedding")
        dim = payload.get("dim")
        if not isinstance(embedding, list) or not isinstance(dim, int):
            raise ProtocolError("response missing embedding/dim fields")
        if dim != len(embedding):
            raise ProtocolError(f"response dim {dim} does not match embedding length {len(embedding)}")
        if dim != self._dim:
            raise ProtocolError(f"server returned dim {dim}, expected {self._dim}")
        try:
            vec = Embedding(np.asarray(embedding, dtype=np.float64))
        except ValueError as exc:
            raise ProtocolError(f"invalid embedding payload: {exc}") from exc
        return l2_normalize(vec)

    def dim(self) -> int:
        return self._dim

    def name(self) -> str:
        return f"remote({self._url})"


def _server_error(response: requests.Response) -> str:
    try:
        payload = response.json()
        if isinstance(payload, dict) and "error" in payload:
            return str(payload["error"])
    except ValueError:
        pass
    return response.text[:200]

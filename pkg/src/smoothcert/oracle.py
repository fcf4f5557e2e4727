"""Classifier abstractions queried by the certification engine.

Three families: in-process analytic classifiers (linear, nearest-centroid)
whose smoothed probabilities have closed forms and therefore serve as ground
truth in tests; an external-process classifier speaking the newline-delimited
JSON wire protocol; and an ensemble wrapper aggregating votes across models.

All classifiers are deterministic by contract: certificates are void if an
external classifier answers the same batch differently twice.  Ties in every
argmax break toward the smallest class index.
"""

from __future__ import annotations

import json
import os
import selectors
import shlex
import socket
import subprocess
import threading
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from smoothcert.statfun import Probability, normal_cdf

__all__ = [
    "ClassifierOracle",
    "CountingOracle",
    "LinearModel",
    "LinearOracle",
    "NearestCentroidOracle",
    "OracleEndpoint",
    "ExternalOracle",
    "OracleError",
    "OracleTransportError",
    "OracleHandshakeError",
    "OracleProtocolError",
    "OracleTimeoutError",
    "linear_classify_batch",
    "linear_smoothed_prob",
    "nearest_centroid_oracle",
    "external_oracle",
    "ensemble_oracle",
    "as_counting",
]

PROTOCOL_VERSION = 1


class OracleError(Exception):
    """Base for all classifier-oracle failures; certification aborts on any."""


class OracleTransportError(OracleError):
    pass


class OracleHandshakeError(OracleError):
    pass


class OracleProtocolError(OracleError):
    pass


class OracleTimeoutError(OracleError):
    pass


class ClassifierOracle(ABC):
    """A deterministic batch classifier with a fixed input dimension."""

    num_classes: int
    input_dim: int

    @abstractmethod
    def classify_batch(self, batch: np.ndarray) -> np.ndarray:
        """Map a (N, input_dim) batch to (N,) integer labels."""

    def predict(self, batch: np.ndarray) -> np.ndarray:
        return self.classify_batch(batch)

    def close(self) -> None:
        pass


@dataclass(frozen=True)
class LinearModel:
    """Affine classifier parameters: (K, D) weights and (K,) bias."""

    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self) -> None:
        w = np.asarray(self.weights, dtype=np.float64)
        b = np.asarray(self.bias, dtype=np.float64)
        if w.ndim != 2 or w.shape[0] < 2:
            raise ValueError("weights must be (K, D) with K >= 2")
        if b.shape != (w.shape[0],):
            raise ValueError("bias must be (K,)")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise ValueError("model parameters must be finite")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)

    @property
    def num_classes(self) -> int:
        return self.weights.shape[0]

    @property
    def input_dim(self) -> int:
        return self.weights.shape[1]


def linear_classify_batch(model: LinearModel, batch: np.ndarray) -> np.ndarray:
    """Argmax of Wx + b per row, ties toward the smallest class index."""
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != 2 or batch.shape[1] != model.input_dim:
        raise ValueError(
            f"batch must be (N, {model.input_dim}), got {batch.shape}"
        )
    scores = batch @ model.weights.T + model.bias
    return np.argmax(scores, axis=1).astype(np.int64)


def linear_smoothed_prob(model: LinearModel, x: np.ndarray, sigma: float) -> Probability:
    """Exact probability that class 0 wins under N(x, sigma^2 I) corruption.

    Only defined for binary models: the margin (w0 - w1) . x + (b0 - b1) is
    Gaussian under the noise, so the win probability is the normal CDF of
    margin / (sigma * ||w0 - w1||).
    """
    if model.num_classes != 2:
        raise ValueError("closed-form smoothed probability needs exactly 2 classes")
    dw = model.weights[0] - model.weights[1]
    norm = float(np.linalg.norm(dw))
    if norm == 0.0:
        raise ValueError("degenerate model: identical class rows")
    margin = float(dw @ np.asarray(x, dtype=np.float64)) + float(model.bias[0] - model.bias[1])
    return normal_cdf(margin / (sigma * norm))


class LinearOracle(ClassifierOracle):
    def __init__(self, model: LinearModel):
        self.model = model
        self.num_classes = model.num_classes
        self.input_dim = model.input_dim

    def classify_batch(self, batch: np.ndarray) -> np.ndarray:
        return linear_classify_batch(self.model, batch)


class NearestCentroidOracle(ClassifierOracle):
    def __init__(self, centroids: np.ndarray):
        c = np.asarray(centroids, dtype=np.float64)
        if c.ndim != 2 or c.shape[0] < 2:
            raise ValueError("centroids must be (K, D) with K >= 2")
        for i in range(c.shape[0]):
            for j in range(i + 1, c.shape[0]):
                if np.array_equal(c[i], c[j]):
                    raise ValueError(f"duplicate centroids at indices {i} and {j}")
        self.centroids = c
        self.num_classes = c.shape[0]
        self.input_dim = c.shape[1]

    def classify_batch(self, batch: np.ndarray) -> np.ndarray:
        batch = np.asarray(batch, dtype=np.float64)
        if batch.ndim != 2 or batch.shape[1] != self.input_dim:
            raise ValueError(f"batch must be (N, {self.input_dim}), got {batch.shape}")
        d2 = (
            np.sum(batch**2, axis=1, keepdims=True)
            - 2.0 * batch @ self.centroids.T
            + np.sum(self.centroids**2, axis=1)
        )
        return np.argmin(d2, axis=1).astype(np.int64)


def nearest_centroid_oracle(centroids: np.ndarray) -> NearestCentroidOracle:
    return NearestCentroidOracle(centroids)


@dataclass(frozen=True)
class OracleEndpoint:
    """Where an external classifier lives and what the engine expects of it.

    ``transport`` is either ``exec:<command line>`` or ``tcp:<host>:<port>``.
    Expected classes / input_dim of None means adopt the adapter's handshake
    declaration; a concrete expectation must match it exactly.
    """

    transport: str
    num_classes: int | None = None
    input_dim: int | None = None
    handshake_timeout: float = 10.0
    request_timeout: float = 60.0

    def __post_init__(self) -> None:
        if not (self.transport.startswith("exec:") or self.transport.startswith("tcp:")):
            raise ValueError(f"transport must be exec:CMD or tcp:HOST:PORT, got {self.transport!r}")


class _Connection:
    """One wire-protocol connection; at most one outstanding request."""

    def __init__(self, endpoint: OracleEndpoint):
        self.endpoint = endpoint
        self._proc = None
        self._sock = None
        self._buf = b""
        if endpoint.transport.startswith("exec:"):
            cmd = shlex.split(endpoint.transport[len("exec:"):])
            try:
                # unbuffered pipes so select() and read() agree on readiness
                self._proc = subprocess.Popen(
                    cmd, stdin=subprocess.PIPE, stdout=subprocess.PIPE, bufsize=0
                )
            except OSError as exc:
                raise OracleTransportError(f"cannot start adapter process: {exc}") from exc
            self._wfile = self._proc.stdin
            self._rfd = self._proc.stdout.fileno()
        else:
            _, host, port = endpoint.transport.split(":", 2)
            try:
                self._sock = socket.create_connection((host, int(port)), timeout=endpoint.handshake_timeout)
            except OSError as exc:
                raise OracleTransportError(f"cannot connect to {host}:{port}: {exc}") from exc
            self._sock.setblocking(False)
            self._rfd = self._sock.fileno()

    def _send(self, obj: dict) -> None:
        line = (json.dumps(obj) + "\n").encode("utf-8")
        try:
            if self._proc is not None:
                self._wfile.write(line)
                self._wfile.flush()
            else:
                self._sock.sendall(line)
        except (OSError, ValueError, BrokenPipeError) as exc:
            raise OracleTransportError(f"send failed: {exc}") from exc

    def _recv_line(self, timeout: float) -> bytes:
        sel = selectors.DefaultSelector()
        sel.register(self._rfd, selectors.EVENT_READ)
        try:
            while b"\n" not in self._buf:
                if not sel.select(timeout):
                    raise OracleTimeoutError(f"no response within {timeout} s")
                if self._proc is not None:
                    chunk = os.read(self._rfd, 65536)
                else:
                    try:
                        chunk = self._sock.recv(65536)
                    except BlockingIOError:
                        continue
                if not chunk:
                    raise OracleTransportError("connection closed by adapter")
                self._buf += chunk
        finally:
            sel.close()
        line, self._buf = self._buf.split(b"\n", 1)
        return line

    def _recv_obj(self, timeout: float) -> dict:
        line = self._recv_line(timeout)
        try:
            obj = json.loads(line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise OracleProtocolError(f"malformed response line: {line[:200]!r}") from exc
        if not isinstance(obj, dict):
            raise OracleProtocolError(f"response is not an object: {line[:200]!r}")
        return obj

    def handshake(self) -> tuple[int, int]:
        self._send({"type": "hello", "protocol": PROTOCOL_VERSION})
        obj = self._recv_obj(self.endpoint.handshake_timeout)
        if obj.get("type") != "ready" or "classes" not in obj or "input_dim" not in obj:
            raise OracleHandshakeError(f"unexpected handshake reply: {obj!r}")
        classes, dim = int(obj["classes"]), int(obj["input_dim"])
        want_k, want_d = self.endpoint.num_classes, self.endpoint.input_dim
        if want_k is not None and classes != want_k:
            raise OracleHandshakeError(f"adapter declares {classes} classes, expected {want_k}")
        if want_d is not None and dim != want_d:
            raise OracleHandshakeError(f"adapter declares input_dim {dim}, expected {want_d}")
        return classes, dim

    def classify(self, request_id: int, batch: np.ndarray) -> np.ndarray:
        count, dim = batch.shape
        self._send(
            {
                "type": "classify",
                "id": request_id,
                "count": count,
                "dim": dim,
                "data": batch.reshape(-1).tolist(),
            }
        )
        obj = self._recv_obj(self.endpoint.request_timeout)
        if obj.get("type") == "error":
            raise OracleProtocolError(f"adapter error: {obj.get('msg')!r}")
        if obj.get("type") != "labels" or obj.get("id") != request_id:
            raise OracleProtocolError(f"unexpected reply {obj!r} to request {request_id}")
        labels = obj.get("labels")
        if not isinstance(labels, list) or len(labels) != count:
            raise OracleProtocolError(
                f"expected {count} labels, got {len(labels) if isinstance(labels, list) else labels!r}"
            )
        return np.asarray(labels, dtype=np.int64)

    def close(self) -> None:
        try:
            self._send({"type": "bye"})
        except OracleError:
            pass
        if self._proc is not None:
            try:
                self._proc.stdin.close()
            except OSError:
                pass
            try:
                self._proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self._proc.kill()
        if self._sock is not None:
            self._sock.close()


class ExternalOracle(ClassifierOracle):
    """Wire-protocol client; opens one connection per thread so parallel
    sampling workers never share a connection."""

    def __init__(self, endpoint: OracleEndpoint):
        self.endpoint = endpoint
        self._local = threading.local()
        self._all: list[_Connection] = []
        self._lock = threading.Lock()
        self._next_id = 0
        # validate reachability and adopt the declared dimensions eagerly
        conn = self._connect()
        self.num_classes, self.input_dim = conn.declared

    def _connect(self) -> _Connection:
        conn = getattr(self._local, "conn", None)
        if conn is None:
            conn = _Connection(self.endpoint)
            conn.declared = conn.handshake()
            with self._lock:
                self._all.append(conn)
            self._local.conn = conn
        return conn

    def classify_batch(self, batch: np.ndarray) -> np.ndarray:
        batch = np.asarray(batch, dtype=np.float64)
        if batch.ndim != 2 or batch.shape[1] != self.input_dim:
            raise ValueError(f"batch must be (N, {self.input_dim}), got {batch.shape}")
        conn = self._connect()
        with self._lock:
            request_id = self._next_id
            self._next_id += 1
        labels = conn.classify(request_id, batch)
        if labels.size and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise OracleProtocolError("adapter returned out-of-range labels")
        return labels

    def close(self) -> None:
        with self._lock:
            conns, self._all = self._all, []
        for conn in conns:
            conn.close()

    def __enter__(self) -> "ExternalOracle":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def external_oracle(endpoint: OracleEndpoint) -> ExternalOracle:
    return ExternalOracle(endpoint)


class CountingOracle:
    """Aggregates per-class votes for a batch across one or more members."""

    def __init__(self, members: list[ClassifierOracle]):
        if not members:
            raise ValueError("ensemble needs at least one member")
        k, d = members[0].num_classes, members[0].input_dim
        for m in members[1:]:
            if (m.num_classes, m.input_dim) != (k, d):
                raise ValueError("ensemble members must share num_classes and input_dim")
        self.members = members
        self.num_classes = k
        self.input_dim = d

    @property
    def votes_per_sample(self) -> int:
        return len(self.members)

    def count_batch(self, batch: np.ndarray) -> np.ndarray:
        counts = np.zeros(self.num_classes, dtype=np.int64)
        for m in self.members:
            labels = m.classify_batch(batch)
            counts += np.bincount(labels, minlength=self.num_classes)
        return counts

    def classify_batch(self, batch: np.ndarray) -> np.ndarray:
        """Per-sample vote-sum label (ties toward the smallest index)."""
        votes = np.zeros((len(batch), self.num_classes), dtype=np.int64)
        rows = np.arange(len(batch))
        for m in self.members:
            votes[rows, m.classify_batch(batch)] += 1
        return np.argmax(votes, axis=1).astype(np.int64)

    def close(self) -> None:
        for m in self.members:
            m.close()


def ensemble_oracle(members: list[ClassifierOracle]) -> CountingOracle:
    return CountingOracle(members)


def as_counting(oracle) -> CountingOracle:
    """Wrap a plain classifier as a single-member counting oracle."""
    if isinstance(oracle, CountingOracle):
        return oracle
    return CountingOracle([oracle])

"""Tests for the classifier oracles, including the wire-protocol client."""

import queue
import sys
import threading
from pathlib import Path

import numpy as np
import pytest

from smoothcert.oracle import (
    LinearModel,
    LinearOracle,
    OracleEndpoint,
    OracleHandshakeError,
    OracleProtocolError,
    OracleTransportError,
    as_counting,
    ensemble_oracle,
    external_oracle,
    linear_classify_batch,
    linear_smoothed_prob,
    nearest_centroid_oracle,
)

ADAPTER = Path(__file__).parent / "wire_adapter.py"


def write_model_file(path, model):
    k, d = model.num_classes, model.input_dim
    lines = [f"{k} {d}"]
    for row, b in zip(model.weights, model.bias):
        lines.append(" ".join(repr(float(v)) for v in row) + f" {float(b)!r}")
    path.write_text("\n".join(lines) + "\n")


@pytest.fixture
def binary_model():
    rng = np.random.default_rng(99)
    return LinearModel(weights=rng.normal(size=(2, 8)), bias=rng.normal(size=2))


class TestLinearModel:
    def test_needs_two_classes(self):
        with pytest.raises(ValueError):
            LinearModel(weights=np.ones((1, 4)), bias=np.ones(1))

    def test_rejects_non_finite(self):
        w = np.ones((2, 3))
        w[0, 0] = np.inf
        with pytest.raises(ValueError):
            LinearModel(weights=w, bias=np.zeros(2))


class TestLinearClassify:
    def test_identity_rows(self):
        model = LinearModel(weights=np.eye(4), bias=np.zeros(4))
        x = np.zeros((1, 4))
        x[0, 2] = 1.0
        assert linear_classify_batch(model, x).tolist() == [2]

    def test_tie_breaks_to_smallest_index(self):
        model = LinearModel(weights=np.array([[1.0, 0.0], [0.0, 1.0]]), bias=np.zeros(2))
        on_boundary = np.array([[0.5, 0.5]])
        assert linear_classify_batch(model, on_boundary).tolist() == [0]

    def test_matches_per_class_dot_products(self):
        rng = np.random.default_rng(5)
        model = LinearModel(weights=rng.normal(size=(5, 7)), bias=rng.normal(size=5))
        batch = rng.normal(size=(50, 7))
        got = linear_classify_batch(model, batch)
        for i, x in enumerate(batch):
            scores = [float(w @ x + b) for w, b in zip(model.weights, model.bias)]
            assert got[i] == int(np.argmax(scores))

    def test_dimension_mismatch(self, binary_model):
        with pytest.raises(ValueError):
            linear_classify_batch(binary_model, np.zeros((3, 5)))


class TestLinearSmoothedProb:
    def test_boundary_gives_half(self):
        model = LinearModel(weights=np.array([[1.0, 0.0], [-1.0, 0.0]]), bias=np.zeros(2))
        x = np.zeros(2)
        assert linear_smoothed_prob(model, x, 0.7) == pytest.approx(0.5)

    def test_unit_margin(self):
        # margin equal to sigma * ||w0 - w1|| lands exactly one deviation out
        model = LinearModel(weights=np.array([[2.0, 0.0], [0.0, 0.0]]), bias=np.zeros(2))
        sigma = 0.5
        x = np.array([sigma * 2.0 / 2.0, 3.0])  # margin = 2 x0 = sigma * 2
        assert linear_smoothed_prob(model, x, sigma) == pytest.approx(0.8413447460685429, abs=1e-12)

    def test_large_margin_limit(self):
        model = LinearModel(weights=np.array([[1.0], [-1.0]]), bias=np.zeros(2))
        assert linear_smoothed_prob(model, np.array([1e9]), 1.0) == pytest.approx(1.0)

    def test_monte_carlo_agreement(self, binary_model):
        rng = np.random.default_rng(123)
        x = rng.uniform(size=8)
        sigma = 0.6
        p = linear_smoothed_prob(binary_model, x, sigma)
        n = 1_000_000
        noise = rng.normal(scale=sigma, size=(n, 8))
        labels = linear_classify_batch(binary_model, x + noise)
        phat = np.mean(labels == 0)
        se = np.sqrt(p * (1 - p) / n)
        assert abs(phat - p) <= 4 * se

    def test_degenerate_rejected(self):
        model = LinearModel(weights=np.ones((2, 3)), bias=np.array([0.0, 1.0]))
        with pytest.raises(ValueError):
            linear_smoothed_prob(model, np.zeros(3), 1.0)


class TestNearestCentroid:
    def test_hits_own_centroid(self):
        c = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 0.0]])
        oracle = nearest_centroid_oracle(c)
        assert oracle.classify_batch(c).tolist() == [0, 1, 2]

    def test_two_centroids_equal_linear(self):
        rng = np.random.default_rng(8)
        c = rng.normal(size=(2, 6))
        oracle = nearest_centroid_oracle(c)
        w = 2.0 * (c[0] - c[1])
        b = float(c[1] @ c[1] - c[0] @ c[0])
        linear = LinearOracle(LinearModel(weights=np.stack([w, np.zeros(6)]), bias=np.array([b, 0.0])))
        batch = rng.normal(size=(200, 6))
        assert np.array_equal(oracle.classify_batch(batch), linear.classify_batch(batch))

    def test_equidistant_tie(self):
        c = np.array([[1.0, 0.0], [-1.0, 0.0]])
        oracle = nearest_centroid_oracle(c)
        assert oracle.classify_batch(np.zeros((1, 2))).tolist() == [0]

    def test_duplicates_rejected(self):
        with pytest.raises(ValueError):
            nearest_centroid_oracle(np.array([[1.0, 2.0], [1.0, 2.0]]))


class TestEnsemble:
    class Constant:
        def __init__(self, label, num_classes=4, input_dim=3):
            self.label = label
            self.num_classes = num_classes
            self.input_dim = input_dim

        def classify_batch(self, batch):
            return np.full(len(batch), self.label, dtype=np.int64)

        def close(self):
            pass

    def test_single_member_is_direct_counting(self):
        member = self.Constant(2)
        counts = ensemble_oracle([member]).count_batch(np.zeros((10, 3)))
        assert counts.tolist() == [0, 0, 10, 0]

    def test_two_identical_members_double(self):
        counts = ensemble_oracle([self.Constant(1), self.Constant(1)]).count_batch(np.zeros((7, 3)))
        assert counts.tolist() == [0, 14, 0, 0]

    def test_disagreeing_members(self):
        counts = ensemble_oracle([self.Constant(0), self.Constant(1)]).count_batch(np.zeros((10, 3)))
        assert counts.tolist() == [10, 10, 0, 0]

    def test_heterogeneous_rejected(self):
        with pytest.raises(ValueError):
            ensemble_oracle([self.Constant(0, num_classes=4), self.Constant(0, num_classes=5)])

    def test_as_counting_idempotent(self):
        wrapped = as_counting(self.Constant(0))
        assert as_counting(wrapped) is wrapped
        assert wrapped.votes_per_sample == 1


class TestExternalOracle:
    def exec_endpoint(self, model_path, misbehave=None, **kw):
        cmd = f"{sys.executable} {ADAPTER} --model {model_path}"
        if misbehave:
            cmd += f" --misbehave {misbehave}"
        return OracleEndpoint(transport=f"exec:{cmd}", **kw)

    def test_differential_against_in_process(self, tmp_path, binary_model):
        path = tmp_path / "model.txt"
        write_model_file(path, binary_model)
        rng = np.random.default_rng(3)
        batch = rng.normal(size=(257, 8))
        with external_oracle(self.exec_endpoint(path)) as remote:
            assert remote.num_classes == 2
            assert remote.input_dim == 8
            got = remote.classify_batch(batch)
        expect = linear_classify_batch(binary_model, batch)
        assert np.array_equal(got, expect)

    def test_determinism(self, tmp_path, binary_model):
        path = tmp_path / "model.txt"
        write_model_file(path, binary_model)
        batch = np.random.default_rng(1).normal(size=(64, 8))
        with external_oracle(self.exec_endpoint(path)) as remote:
            a = remote.classify_batch(batch)
            b = remote.classify_batch(batch)
        assert np.array_equal(a, b)

    def test_handshake_mismatch(self, tmp_path, binary_model):
        path = tmp_path / "model.txt"
        write_model_file(path, binary_model)
        with pytest.raises(OracleHandshakeError):
            external_oracle(self.exec_endpoint(path, input_dim=8, misbehave="wrong-dim"))

    def test_expectation_enforced(self, tmp_path, binary_model):
        path = tmp_path / "model.txt"
        write_model_file(path, binary_model)
        with pytest.raises(OracleHandshakeError):
            external_oracle(self.exec_endpoint(path, num_classes=10))

    def test_truncated_response(self, tmp_path, binary_model):
        path = tmp_path / "model.txt"
        write_model_file(path, binary_model)
        with external_oracle(self.exec_endpoint(path, misbehave="truncate")) as remote:
            with pytest.raises((OracleProtocolError, OracleTransportError)):
                remote.classify_batch(np.zeros((4, 8)))

    def test_short_label_list(self, tmp_path, binary_model):
        path = tmp_path / "model.txt"
        write_model_file(path, binary_model)
        with external_oracle(self.exec_endpoint(path, misbehave="short-labels")) as remote:
            with pytest.raises(OracleProtocolError):
                remote.classify_batch(np.zeros((4, 8)))

    def test_unreachable_command(self):
        with pytest.raises(OracleTransportError):
            external_oracle(OracleEndpoint(transport="exec:/nonexistent/adapter-binary"))

    def test_tcp_transport(self, tmp_path, binary_model):
        import wire_adapter

        path = tmp_path / "model.txt"
        write_model_file(path, binary_model)
        model = wire_adapter.load_model(path)
        ports = queue.Queue()
        server = threading.Thread(
            target=wire_adapter.serve_tcp, args=(0, model), kwargs={"ready_queue": ports}, daemon=True
        )
        server.start()
        port = ports.get(timeout=5)
        batch = np.random.default_rng(2).normal(size=(33, 8))
        with external_oracle(OracleEndpoint(transport=f"tcp:127.0.0.1:{port}")) as remote:
            got = remote.classify_batch(batch)
        assert np.array_equal(got, linear_classify_batch(binary_model, batch))
        server.join(timeout=5)


class TestExternalOracleThreading:
    def test_one_connection_per_worker_thread(self, tmp_path, binary_model):
        from concurrent.futures import ThreadPoolExecutor

        path = tmp_path / "model.txt"
        write_model_file(path, binary_model)
        cmd = f"{sys.executable} {ADAPTER} --model {path}"
        rng = np.random.default_rng(17)
        batches = [rng.normal(size=(40, 8)) for _ in range(6)]
        expect = [linear_classify_batch(binary_model, b) for b in batches]
        with external_oracle(OracleEndpoint(transport=f"exec:{cmd}")) as remote:
            with ThreadPoolExecutor(max_workers=3) as pool:
                got = list(pool.map(remote.classify_batch, batches))
            assert len(remote._all) >= 2  # distinct per-thread connections
        for g, e in zip(got, expect):
            assert np.array_equal(g, e)


class TestTimeouts:
    def test_handshake_timeout(self):
        # an adapter that reads hello but never answers
        stall = f"{sys.executable} -c \"import sys; sys.stdin.readline(); import time; time.sleep(30)\""
        from smoothcert.oracle import OracleTimeoutError

        with pytest.raises(OracleTimeoutError):
            external_oracle(OracleEndpoint(transport=f"exec:{stall}", handshake_timeout=0.5))


NODE = __import__("shutil").which("node")
ADAPTER_ENTRY = Path(__file__).parent.parent / "adapter" / "dist" / "main.js"


@pytest.mark.skipif(NODE is None or not ADAPTER_ENTRY.exists(), reason="built adapter unavailable")
class TestAdapterPlugin:
    def test_centroid_plugin_matches_in_process(self, tmp_path):
        centroids = np.array([[0.2, 0.8, 0.1], [0.9, 0.1, 0.5], [0.4, 0.4, 0.9]])
        plugin = tmp_path / "centroid_plugin.js"
        rows = ",".join("[" + ",".join(repr(float(v)) for v in row) + "]" for row in centroids)
        plugin.write_text(
            "const centroids = [" + rows + "];\n"
            "module.exports = {\n"
            "  classes: centroids.length,\n"
            "  inputDim: centroids[0].length,\n"
            "  classify(batch) {\n"
            "    return batch.map((x) => {\n"
            "      let best = 0, bestDist = Infinity;\n"
            "      centroids.forEach((c, k) => {\n"
            "        let d = 0;\n"
            "        for (let j = 0; j < c.length; j++) d += (x[j] - c[j]) ** 2;\n"
            "        if (d < bestDist) { best = k; bestDist = d; }\n"
            "      });\n"
            "      return best;\n"
            "    });\n"
            "  },\n"
            "};\n"
        )
        batch = np.random.default_rng(7).uniform(size=(120, 3))
        expect = nearest_centroid_oracle(centroids).classify_batch(batch)
        with external_oracle(
            OracleEndpoint(transport=f"exec:{NODE} {ADAPTER_ENTRY} --plugin {plugin}")
        ) as remote:
            assert remote.num_classes == 3 and remote.input_dim == 3
            got = remote.classify_batch(batch)
        assert np.array_equal(got, expect)

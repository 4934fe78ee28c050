import hashlib
import json
import math
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from foascene.similarity import (
    EmbeddingClient, EmbeddingConfig, EmbeddingSimilarity, FallbackSimilarity, LexicalSimilarity,
    ProtocolError, ServiceUnavailable, lexical_cosine, make_provider, normalize_tokens,
)


def test_lexical_examples():
    assert lexical_cosine("dog barking", "dog barking") == 1.0
    assert lexical_cosine("dog barking", "quantum physics") == 0.0
    assert lexical_cosine("dog barking", "a dog barks") == pytest.approx(1 / math.sqrt(6))


def test_normalization_has_no_stemming():
    assert normalize_tokens("Dog, BARKING!") == ["dog", "barking"]
    assert normalize_tokens("barks") == ["barks"]
    assert lexical_cosine("", "dog") == 0.0


@given(st.text(max_size=40), st.text(max_size=40))
def test_lexical_symmetry_and_range(a, b):
    provider = LexicalSimilarity()
    assert provider.similarity(a, b) == provider.similarity(b, a)
    assert 0.0 <= provider.similarity(a, b) <= 1.0


@given(st.text(alphabet=st.characters(categories=["L", "N"]), min_size=1, max_size=20))
def test_lexical_self_similarity(text):
    assert LexicalSimilarity().similarity(text, text) == 1.0


# ------------------------------------------------------------- service tests


def _vector(text, dim=8):
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return [b / 255.0 - 0.5 for b in digest[:dim]]


class _Embedder(BaseHTTPRequestHandler):
    mode = "ok"
    delay_s = 0.0
    requests = []

    def do_POST(self):  # noqa: N802
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        type(self).requests.append(body["texts"])
        time.sleep(self.delay_s)
        if self.mode == "error500":
            self.send_error(503)
            return
        if self.mode == "error400":
            self.send_error(400)
            return
        rows = [_vector(t) for t in body["texts"]]
        if self.mode == "short":
            rows = rows[:-1]
        payload = b"not json" if self.mode == "garbage" else json.dumps({"embeddings": rows}).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def log_message(self, *args):
        pass


@pytest.fixture
def server():
    handler = type("Handler", (_Embedder,), {"requests": [], "mode": "ok", "delay_s": 0.0})
    httpd = ThreadingHTTPServer(("127.0.0.1", 0), handler)
    thread = threading.Thread(target=httpd.serve_forever, daemon=True)
    thread.start()
    yield handler, f"http://127.0.0.1:{httpd.server_address[1]}/embed"
    httpd.shutdown()
    httpd.server_close()


def _client(url, **kwargs):
    return EmbeddingClient(EmbeddingConfig(endpoint=url, timeout_s=5.0, backoff_s=0.01, **kwargs))


def test_empty_input_makes_no_request(server):
    handler, url = server
    client = _client(url)
    assert client.embed_batch([]) == []
    assert handler.requests == []


def test_vectors_are_unit_norm_and_ordered(server):
    _, url = server
    vectors = _client(url).embed_batch(["dog", "cat", "dog"])
    assert [round(float(np.linalg.norm(v)), 12) for v in vectors] == [1.0, 1.0, 1.0]
    np.testing.assert_array_equal(vectors[0], vectors[2])
    expected = np.array(_vector("cat")) / np.linalg.norm(_vector("cat"))
    np.testing.assert_allclose(vectors[1], expected)


def test_repeated_text_is_requested_once(server):
    handler, url = server
    client = _client(url)
    provider = EmbeddingSimilarity(client)
    for _ in range(5):
        provider.similarity("dog barking", "car horn")
    client.embed_batch(["dog barking"] * 3)
    flat = [t for batch in handler.requests for t in batch]
    assert flat.count("dog barking") == 1 and flat.count("car horn") == 1
    assert client.request_count == 1


def test_batches_respect_the_limit(server):
    handler, url = server
    client = _client(url, batch_size=3)
    client.embed_batch([f"text {i}" for i in range(7)])
    assert [len(batch) for batch in handler.requests] == [3, 3, 1]


def test_concurrent_requests_are_coalesced(server):
    handler, url = server
    handler.delay_s = 0.2
    client = _client(url)
    with ThreadPoolExecutor(8) as pool:
        results = list(pool.map(lambda _: client.embed_batch(["church bell"]), range(8)))
    assert sum(batch.count("church bell") for batch in handler.requests) == 1
    for result in results:
        np.testing.assert_array_equal(result[0], results[0][0])


def test_count_mismatch_is_a_protocol_error(server):
    handler, url = server
    handler.mode = "short"
    with pytest.raises(ProtocolError, match="expected 2 embeddings"):
        _client(url).embed_batch(["a", "b"])


def test_non_json_is_a_protocol_error(server):
    handler, url = server
    handler.mode = "garbage"
    with pytest.raises(ProtocolError):
        _client(url).embed_batch(["a"])


def test_client_errors_are_not_retried(server):
    handler, url = server
    handler.mode = "error400"
    with pytest.raises(ProtocolError, match="HTTP 400"):
        _client(url, max_retries=3).embed_batch(["a"])
    assert len(handler.requests) == 1


def test_server_errors_exhaust_retries(server):
    handler, url = server
    handler.mode = "error500"
    client = _client(url, max_retries=2)
    with pytest.raises(ServiceUnavailable, match="3 attempts"):
        client.embed_batch(["a"])
    assert len(handler.requests) == 3
    # the failure is not cached: a healthy server is asked again
    handler.mode = "ok"
    assert len(client.embed_batch(["a"])) == 1


def test_unreachable_service_falls_back_to_lexical():
    client = EmbeddingClient(EmbeddingConfig(endpoint="http://127.0.0.1:9/embed", timeout_s=0.5,
                                             max_retries=0))
    provider = FallbackSimilarity(EmbeddingSimilarity(client))
    assert provider.kind == "embedding_service"
    assert provider.similarity("dog barking", "a dog barks") == pytest.approx(1 / math.sqrt(6))
    assert provider.fell_back and provider.kind == "lexical"


def test_embedding_similarity_is_symmetric_and_normalized(server):
    _, url = server
    provider = EmbeddingSimilarity(_client(url))
    for a, b in [("dog", "cat"), ("car horn", "glass breaking"), ("x", "x")]:
        s = provider.similarity(a, b)
        assert s == provider.similarity(b, a) and 0.0 <= s <= 1.0
    assert provider.similarity("dog", "dog") == pytest.approx(1.0)


def test_environment_overrides():
    config = EmbeddingConfig().with_env({
        "FOASCENE_EMBED_URL": "http://example.invalid/embed", "FOASCENE_EMBED_BATCH": "5",
        "FOASCENE_EMBED_TIMEOUT": "2.5", "FOASCENE_EMBED_RETRIES": "0",
    })
    assert (config.endpoint, config.batch_size, config.timeout_s, config.max_retries) == (
        "http://example.invalid/embed", 5, 2.5, 0)


def test_make_provider():
    assert make_provider("lexical").kind == "lexical"
    assert isinstance(make_provider("embedding_service"), FallbackSimilarity)
    with pytest.raises(ValueError):
        make_provider("clap")

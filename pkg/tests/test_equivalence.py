import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from leon.core import (
    BooleanDim,
    CategoricalDim,
    Context,
    ContinuousDim,
    Design,
    DesignSpace,
    render_text,
)
from leon.critic import SourcePool
from leon.equivalence import (
    HashingEmbedder,
    PartitionConfig,
    RandomPartition,
    ScoreBinnedPartition,
    coarse_entropy,
    embed,
    fit_partition,
    occupancies,
    reference_context,
)
from leon.numerics import kmeans_assign
from leon.tasks import make_dose_task


# ---------------------------------------------------------------------------
# hashing embedder
# ---------------------------------------------------------------------------


def test_embed_deterministic():
    e = HashingEmbedder(dim=128, seed=0)
    assert np.array_equal(e.embed("alpha beta gamma"), e.embed("alpha beta gamma"))


def test_embed_unit_norm():
    e = HashingEmbedder(dim=64, seed=1)
    assert np.linalg.norm(e.embed("some words here")) == pytest.approx(1.0, abs=1e-9)


def test_embed_disjoint_tokens_orthogonal():
    e = HashingEmbedder(dim=4096, seed=0)
    a = e.embed("aardvark basilisk chimera")
    b = e.embed("dryad echidna fennec")
    # verify the chosen tokens truly hash to disjoint buckets, then cosine is 0
    if set(np.nonzero(a)[0]) & set(np.nonzero(b)[0]):
        pytest.skip("bucket collision for this dim/seed")
    assert abs(float(a @ b)) < 1e-12


def test_embed_rejects_empty():
    with pytest.raises(ValueError):
        HashingEmbedder().embed("")


# ---------------------------------------------------------------------------
# partition fitting
# ---------------------------------------------------------------------------

BLOB_SPACE = DesignSpace((
    CategoricalDim("Core", ("alphaline", "betamax", "gammaron")),
    CategoricalDim("Carrier", ("solvex", "aquon", "lipidol")),
    CategoricalDim("Schedule", ("daily", "weekly", "monthly")),
    ContinuousDim("Dose", 0.0, 10.0),
))


class BlobTask:
    name = "blobs"
    ctx_dim = 2
    space = BLOB_SPACE


def _blob_designs(rng, n_per=20):
    designs, labels = [], []
    for blob in range(3):
        for _ in range(n_per):
            designs.append(Design((blob, blob, blob, float(rng.uniform(0, 10)))))
            labels.append(blob)
    return designs, labels


def test_fit_kmeans_partition_recovers_blobs(rng):
    designs, labels = _blob_designs(rng)
    src = SourcePool(BLOB_SPACE, designs)
    part = fit_partition(PartitionConfig(variant="kmeans"), src, BlobTask(), seed=0)
    assert part.n_classes == 3
    ref = reference_context(2)
    assigned = [part.assign(ref, d, 0.0) for d in designs]
    by_blob = [set(a for a, l in zip(assigned, labels) if l == blob) for blob in range(3)]
    assert all(len(s) == 1 for s in by_blob)
    assert len(set.union(*by_blob)) == 3


def test_fit_random_partition():
    task = make_dose_task(0)
    src = SourcePool(task.space, [Design((float(v),)) for v in range(12)])
    part = fit_partition(PartitionConfig(variant="random"), src, task, seed=3)
    assert isinstance(part, RandomPartition)
    assert part.n_classes == 10


def test_fit_score_partition_bins():
    task = make_dose_task(0)
    src = SourcePool(task.space, [Design((float(v),)) for v in np.linspace(10, 90, 24)])
    part = fit_partition(PartitionConfig(variant="score"), src, task, seed=0,
                         raw_value_fn=lambda d: d.values[0])
    assert isinstance(part, ScoreBinnedPartition)
    assert len(part.edges) == 11
    assert part.n_classes == 10


def test_fit_shrinks_kmax_with_warning(rng):
    designs, _ = _blob_designs(rng, n_per=4)  # 12 designs < default kmax=20
    src = SourcePool(BLOB_SPACE, designs)
    with pytest.warns(UserWarning):
        part = fit_partition(PartitionConfig(variant="kmeans"), src, BlobTask(), seed=0)
    assert 1 <= part.n_classes <= 12


def test_partition_stability_same_seed(rng):
    designs, _ = _blob_designs(rng)
    src = SourcePool(BLOB_SPACE, designs)
    ref = reference_context(2)
    a = fit_partition(PartitionConfig(variant="kmeans"), src, BlobTask(), seed=7)
    b = fit_partition(PartitionConfig(variant="kmeans"), src, BlobTask(), seed=7)
    assert [a.assign(ref, d, 0.0) for d in designs] == [b.assign(ref, d, 0.0) for d in designs]


# ---------------------------------------------------------------------------
# assignment
# ---------------------------------------------------------------------------


def test_random_assignment_deterministic():
    part = RandomPartition(n_classes=10, seed=4)
    ctx = Context((0.0,), id="x")
    d = Design((3.5,))
    assert part.assign(ctx, d, 1.0) == part.assign(ctx, d, -1.0)
    assert 0 <= part.assign(ctx, d, 0.0) < 10


def test_score_assignment_left_closed():
    part = ScoreBinnedPartition(mu_src=10.0, sigma_src=2.0)
    ctx = Context((0.0,), id="x")
    d = Design((0.0,))
    # the bin [mu, mu+sigma) is index 5 of 10: thresholds are
    # [-inf, mu-4s, mu-3s, mu-2s, mu-s, mu, mu+s, mu+2s, mu+3s, mu+4s, +inf]
    assert part.assign(ctx, d, 10.0) == 5
    assert part.assign(ctx, d, 10.0 - 1e-12) == 4
    assert part.assign(ctx, d, 7.0) == 3       # mu - 1.5 sigma
    assert part.assign(ctx, d, -1e9) == 0
    assert part.assign(ctx, d, 1e9) == 9


def test_kmeans_assignment_matches_kernel(rng):
    designs, _ = _blob_designs(rng)
    src = SourcePool(BLOB_SPACE, designs)
    part = fit_partition(PartitionConfig(variant="kmeans"), src, BlobTask(), seed=0)
    ctx = Context((0.3, -0.7), id="live")
    for d in designs[:10]:
        vec = embed(part.provider, render_text("blobs", BLOB_SPACE, ctx, d))
        assert part.assign(ctx, d, 0.0) == kmeans_assign(part.model, vec)


@given(st.integers(0, 2 ** 20))
def test_assignment_total(design_seed):
    rng = np.random.default_rng(design_seed)
    d = Design((bool(rng.integers(2)), bool(rng.integers(2))))
    ctx = Context((0.0,), id="t")
    for part in (RandomPartition(n_classes=10, seed=0),
                 ScoreBinnedPartition(mu_src=0.0, sigma_src=1.0)):
        cid = part.assign(ctx, d, float(rng.normal()))
        assert 0 <= cid < part.n_classes


# ---------------------------------------------------------------------------
# occupancies and entropy
# ---------------------------------------------------------------------------


def test_occupancy_examples():
    assert occupancies([0, 0, 1, 1], 2).tolist() == [0.5, 0.5]
    assert occupancies([2, 2, 2], 3).tolist() == [0.0, 0.0, 1.0]
    assert occupancies([0, 1, 1, 2], 4).tolist() == [0.25, 0.5, 0.25, 0.0]


def test_occupancy_errors():
    with pytest.raises(ValueError):
        occupancies([], 2)
    with pytest.raises(ValueError):
        occupancies([0, 5], 2)


@given(st.lists(st.integers(0, 5), min_size=1, max_size=40))
def test_occupancy_properties(assignments):
    q = occupancies(assignments, 6)
    assert q.sum() == pytest.approx(1.0)
    n = len(assignments)
    for qi in q:
        assert (qi * n) == pytest.approx(round(qi * n))  # multiples of 1/n


def test_coarse_entropy_values():
    assert coarse_entropy([1.0, 0.0]) == 0.0
    assert coarse_entropy([0.2] * 5) == pytest.approx(math.log(5))
    assert coarse_entropy([0.5, 0.25, 0.25]) == pytest.approx(1.039721, abs=1e-6)


# ---------------------------------------------------------------------------
# embedding endpoint client
# ---------------------------------------------------------------------------


def test_api_embedder_round_trip_and_retry():
    import json as _json
    import threading
    from http.server import BaseHTTPRequestHandler, HTTPServer

    from leon.equivalence import ApiEmbedder, TransportError

    class Handler(BaseHTTPRequestHandler):
        fail_first = True

        def do_POST(self):
            length = int(self.headers["Content-Length"])
            body = _json.loads(self.rfile.read(length))
            assert body["model"] == "stub-embed" and body["input"]
            if Handler.fail_first:
                Handler.fail_first = False
                self.send_response(500)
                self.end_headers()
                return
            payload = _json.dumps({"data": [{"embedding": [3.0, 4.0]}]}).encode()
            self.send_response(200)
            self.send_header("Content-Length", str(len(payload)))
            self.end_headers()
            self.wfile.write(payload)

        def log_message(self, *args):
            pass

    server = HTTPServer(("127.0.0.1", 0), Handler)
    threading.Thread(target=server.serve_forever, daemon=True).start()
    try:
        emb = ApiEmbedder(model="stub-embed",
                          endpoint=f"http://127.0.0.1:{server.server_port}",
                          max_retries=3, retry_wait=0.0)
        vec = emb.embed("some text")  # first attempt 500s, retry succeeds
        assert np.allclose(vec, [0.6, 0.8])  # normalized (3,4)
    finally:
        server.shutdown()

    dead = ApiEmbedder(model="stub-embed", endpoint="http://127.0.0.1:1",
                       max_retries=2, retry_wait=0.0, timeout=0.2)
    with pytest.raises(TransportError):
        dead.embed("text")

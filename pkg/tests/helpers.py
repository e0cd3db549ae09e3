"""Shared builders and numeric checks for the test suite."""

import numpy as np

from mrgcn.autodiff import Conv1d, Conv2d, Dense, Parameter, SparseMatrix, Tensor, ops
from mrgcn.encoders import EncoderConfig, FeatureAssembler
from mrgcn.graph import build_graph
from mrgcn.literals import encode_png
from mrgcn.model import MRGCN
from mrgcn.rdf import WKT_LITERAL, XSD, TypedLiteral

import reference

EX = "http://example.org/"


def relative_error(analytic, numeric, floor=1e-6):
    """Elementwise ``|a - n| / max(|a|, |n|, floor)``.

    The floor keeps elements whose true gradient is (near) zero from turning
    round-off into a huge ratio.
    """
    analytic, numeric = np.asarray(analytic), np.asarray(numeric)
    return np.abs(analytic - numeric) / np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)


def numeric_gradient(loss, array, h=1e-5):
    """Central differences of the scalar ``loss()`` w.r.t. every element of ``array`` (mutated in place)."""
    grad = np.zeros_like(array, dtype=np.float64)
    flat, gflat = array.reshape(-1), grad.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        plus = loss()
        flat[i] = old - h
        minus = loss()
        flat[i] = old
        gflat[i] = (plus - minus) / (2 * h)
    return grad


def check_op_gradients(build, tensors, h=1e-5, seed=0):
    """Max relative error of engine gradients vs finite differences.

    ``build()`` returns an output tensor; the scalar loss is a fixed random
    weighting of it so every output element contributes distinctly.
    """
    out = build()
    weights = np.random.default_rng(seed).normal(size=out.shape)

    def loss_value():
        return float(np.sum(build().data * weights))

    for t in tensors:
        t.grad = None
    loss = ops.sum_all(ops.mul(build(), Tensor(weights)))
    loss.backward()
    worst = 0.0
    for t in tensors:
        numeric = numeric_gradient(loss_value, t.data, h)
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        worst = max(worst, float(relative_error(analytic, numeric).max()))
    return worst


def tiny_png(rng, size=16):
    return encode_png(rng.random((3, size, size)))


def multimodal_triples(rng=None):
    """Five entities, one literal per modality (10 nodes under either policy)."""
    rng = rng or np.random.default_rng(0)
    e = [f"{EX}e{i}" for i in range(5)]
    return [
        (e[0], EX + "knows", e[1]),
        (e[1], EX + "knows", e[2]),
        (e[2], EX + "knows", e[3]),
        (e[3], EX + "knows", e[4]),
        (e[4], EX + "likes", e[0]),
        (e[0], EX + "age", TypedLiteral("42", XSD + "integer")),
        (e[1], EX + "born", TypedLiteral("1987-06-05", XSD + "date")),
        (e[2], EX + "name", TypedLiteral("tiny graph")),
        (e[3], EX + "depiction", TypedLiteral(tiny_png(rng), XSD + "base64Binary")),
        (e[4], EX + "shape", TypedLiteral("POLYGON ((1 1, 2 1, 2 2, 1 2, 1 1))", WKT_LITERAL)),
    ]


class EndToEndSetup:
    """The full multimodal model on the 10-node graph, in float64.

    All parameters, biases included, are redrawn at random so the check runs
    at a generic point (zero biases would put padded positions exactly on the
    ReLU kink).
    """

    def __init__(self, seed=0, image_size=16, num_classes=2):
        rng = np.random.default_rng(seed)
        self.graph = build_graph(multimodal_triples(rng), "split").add_inverse_and_identity()
        cfg = EncoderConfig(image_size=image_size)
        self.features = FeatureAssembler(self.graph, "all", rng, np.float64, cfg)
        self.model = MRGCN(self.graph.num_nodes, self.graph.num_relations, self.features.width, num_classes,
                           rng=rng, dtype=np.float64)
        for _, p in self.named_parameters():
            if p.data.ndim == 1:
                p.data = rng.uniform(-0.5, 0.5, size=p.shape)
            elif getattr(p, "init", None) != "normal":
                p.data = rng.uniform(-0.6, 0.6, size=p.shape)
        self.stacked = self.graph.stacked_adjacency()
        self.rows = np.arange(5)
        self.labels = np.array([0, 1, 0, 1, 1]) % num_classes

    def named_parameters(self):
        return [(k, p) for k, p in self.model.named_parameters()] + \
               [(k, p) for k, p in self.features.named_parameters()]

    def gains(self):
        out = {}
        for module_name, module in (("text_encoder", getattr(self.features, "text_encoder", None)),
                                    ("image_encoder", getattr(self.features, "image_encoder", None)),
                                    ("geometry_encoder", getattr(self.features, "geometry_encoder", None))):
            for name, layer in vars(module).items():
                if hasattr(layer, "gain"):
                    out[f"{module_name}.{name}.weight"] = layer.gain if layer.gain is not None else 1.0
        return out

    def engine_loss(self):
        f = self.features.assemble()
        logits = self.model(self.stacked, f)
        return ops.cross_entropy(logits, self.labels, self.rows)

    def engine_gradients(self):
        for _, p in self.named_parameters():
            p.grad = None
        loss = self.engine_loss()
        loss.backward()
        return float(loss.data), {k: p.grad for k, p in self.named_parameters()}

    def reference(self):
        adjacency = np.stack([a.to_dense() for a in self.graph.adjacencies()])
        neural = {}
        for name in self.features.neural_modalities:
            inp = self.features.inputs[name]
            positions = np.arange(len(inp.nodes))
            x = self.features._batch_input(name, positions, int(inp.buckets[0]))
            neural[name] = (inp.nodes, x)
        return reference.EndToEnd(adjacency, self.features.base.copy(), dict(self.features.spans), neural,
                                  self.rows, self.labels)

    def effective_parameters(self):
        gains = self.gains()
        return {k: p.data * gains.get(k, 1.0) for k, p in self.named_parameters()}


# --------------------------------------------------------------------------
# random relational graphs (built without the package's graph code)
# --------------------------------------------------------------------------


def random_edges(rng, n, num_relations, density=0.2):
    """Unique ``(head, relation, tail)`` edges; relation ``R-1`` is forced to be the identity."""
    edges = set()
    for r in range(num_relations - 1):
        mask = rng.random((n, n)) < density
        edges.update((int(i), r, int(j)) for i, j in zip(*np.nonzero(mask)))
    edges.update((i, num_relations - 1, i) for i in range(n))
    return sorted(edges)


def dense_adjacencies(n, num_relations, edges):
    """Row-normalised ``(R, n, n)`` adjacency tensor from an edge list."""
    a = np.zeros((num_relations, n, n))
    for h, r, t in edges:
        a[r, h, t] = 1.0
    deg = a.sum(axis=2, keepdims=True)
    return np.divide(a, deg, out=np.zeros_like(a), where=deg > 0)


def stacked_sparse(adjacency):
    """``[A_1 ... A_R]`` as one sparse ``n x R*n`` matrix."""
    return SparseMatrix.from_dense(np.concatenate(list(adjacency), axis=1))


# --------------------------------------------------------------------------
# per-op / per-layer gradient cases
# --------------------------------------------------------------------------


def param(rng, *shape, low=-1.0, high=1.0):
    return Parameter(rng.uniform(low, high, size=shape))


def away_from_zero(rng, *shape):
    """Random values with |x| >= 0.1 so ReLU never sits on its kink."""
    x = rng.uniform(0.1, 1.0, size=shape)
    return Parameter(x * rng.choice([-1.0, 1.0], size=shape))


def gradient_cases():
    """(name, build, tensors) for every differentiable op and layer type."""
    rng = np.random.default_rng(11)
    cases = []

    a, b = param(rng, 3, 4), param(rng, 3, 4)
    cases.append(("add", lambda: ops.add(a, b), [a, b]))
    bias = param(rng, 4)
    cases.append(("add_broadcast", lambda: ops.add(a, bias), [a, bias]))
    cases.append(("mul", lambda: ops.mul(a, b), [a, b]))
    cases.append(("neg", lambda: ops.neg(a), [a]))
    x = away_from_zero(rng, 4, 5)
    cases.append(("relu", lambda: ops.relu(x), [x]))
    cases.append(("reshape", lambda: ops.reshape(a, (2, 6)), [a]))

    m1, m2 = param(rng, 4, 3), param(rng, 3, 5)
    cases.append(("matmul", lambda: ops.matmul(m1, m2), [m1, m2]))
    batched = param(rng, 2, 3, 5)
    cases.append(("matmul_broadcast", lambda: ops.matmul(m1, batched), [m1, batched]))
    s = SparseMatrix.from_dense(rng.normal(size=(5, 4)) * (rng.random((5, 4)) < 0.5))
    dense = param(rng, 4, 3)
    cases.append(("sparse_matmul", lambda: ops.sparse_matmul(s, dense), [dense]))
    coef, bases = param(rng, 4, 2), param(rng, 2, 3, 3)
    cases.append(("basis_combine", lambda: ops.basis_combine(coef, bases), [coef, bases]))

    c1, c2 = param(rng, 3, 2), param(rng, 3, 4)
    cases.append(("concat_columns", lambda: ops.concat_columns([c1, c2]), [c1, c2]))
    cases.append(("index_rows", lambda: ops.index_rows(c2, [2, 0, 2]), [c2]))
    piece = param(rng, 2, 2)
    base = rng.normal(size=(4, 5))
    cases.append(("place_rows", lambda: ops.place_rows(base, [([1, 3], 2, piece)]), [piece]))

    x1, w1, b1 = param(rng, 2, 3, 11), param(rng, 4, 3, 5), param(rng, 4)
    cases.append(("conv1d", lambda: ops.conv1d(x1, w1, b1, padding=2), [x1, w1, b1]))
    x2, w2, b2 = param(rng, 2, 2, 6, 5), param(rng, 3, 2, 3, 3), param(rng, 3)
    cases.append(("conv2d", lambda: ops.conv2d(x2, w2, b2, padding=1), [x2, w2, b2]))
    p1 = Parameter(rng.permutation(60).reshape(2, 3, 10) / 7.0)
    cases.append(("maxpool1d", lambda: ops.maxpool1d(p1, 2, 2), [p1]))
    cases.append(("maxpool1d_k3", lambda: ops.maxpool1d(p1, 3, 3), [p1]))
    p2 = Parameter(rng.permutation(96).reshape(1, 2, 8, 6) / 9.0)
    cases.append(("maxpool2d", lambda: ops.maxpool2d(p2, 2, 2), [p2]))
    cases.append(("adaptive_max_pool1d", lambda: ops.adaptive_max_pool1d(p1, 1), [p1]))
    q = param(rng, 2, 3, 7)
    cases.append(("adaptive_avg_pool1d", lambda: ops.adaptive_avg_pool1d(q, 1), [q]))

    z = param(rng, 4, 5, low=-3, high=3)
    cases.append(("softmax_rows", lambda: ops.softmax_rows(z), [z]))
    cases.append(("log_softmax_rows", lambda: ops.log_softmax_rows(z), [z]))
    cases.append(("cross_entropy", lambda: ops.cross_entropy(z, [1, 4, 0], [0, 2, 3]), [z]))

    dense_layer = Dense(6, 4, rng, init="normal", fan_in_gain=True, gain_scale=2.0)
    dense_layer.bias.data = rng.uniform(-0.5, 0.5, 4)
    dx = param(rng, 3, 6)
    cases.append(("Dense", lambda: dense_layer(dx), [dx, dense_layer.weight, dense_layer.bias]))
    conv1_layer = Conv1d(3, 4, 7, 3, rng, fan_in_gain=True, gain_scale=2.0, fan_in=7)
    conv1_layer.bias.data = rng.uniform(-0.5, 0.5, 4)
    cx = param(rng, 2, 3, 12)
    cases.append(("Conv1d", lambda: conv1_layer(cx), [cx, conv1_layer.weight, conv1_layer.bias]))
    conv2_layer = Conv2d(3, 2, 3, 1, rng, fan_in_gain=True)
    conv2_layer.bias.data = rng.uniform(-0.5, 0.5, 2)
    cy = param(rng, 1, 3, 5, 5)
    cases.append(("Conv2d", lambda: conv2_layer(cy), [cy, conv2_layer.weight, conv2_layer.bias]))

    for num_bases in (None, 2):
        g_rng = np.random.default_rng(12)
        adj = dense_adjacencies(6, 3, random_edges(g_rng, 6, 3, density=0.4))
        model = MRGCN(6, 3, 4, 3, hidden=5, bases=num_bases, rng=g_rng, dtype=np.float64)
        for p in model.parameters():
            p.data = g_rng.uniform(-0.8, 0.8, size=p.shape)
        feats = param(g_rng, 6, 4)
        stacked = stacked_sparse(adj)
        cases.append((f"RGCN_bases_{num_bases}", lambda m=model, s=stacked: m(s, feats), [feats] + model.parameters()))
    return cases

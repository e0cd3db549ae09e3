"""Per-modality literal encoders and node-feature matrix assembly.

Column layout of the feature matrix, in this order when enabled::

    num  2    normalised number, boolean (+1/-1)
    tmp  10   era, century, decade, year, month, day (cyclic pairs)
    txt  16   character CNN
    img  128  image CNN
    geo  16   geometry CNN

Numbers and dates use fixed encodings; text, images and geometries go
through CNNs whose weights are shared by every literal of that modality.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .autodiff import ops
from .autodiff.layers import Conv1d, Conv2d, Dense, Module
from .autodiff.tensor import Tensor, no_grad
from .literals import IMAGE_SIZE, decode_image, parse_boolean, parse_datetime, parse_number, parse_wkt
from .rdf import Modality

MODALITY_NAMES = ("num", "tmp", "txt", "img", "geo")
MODALITY_WIDTHS = {"num": 2, "tmp": 10, "txt": 16, "img": 128, "geo": 16}
MODALITY_OF = {
    Modality.NUMERICAL: "num",
    Modality.BOOLEAN: "num",
    Modality.TEMPORAL: "tmp",
    Modality.TEXTUAL: "txt",
    Modality.VISUAL: "img",
    Modality.SPATIAL: "geo",
}

PSI_DECADE = 10
PSI_YEAR = 10
PSI_MONTH = 12
PSI_DAY = 31
PSI_HOUR = 24

TEXT_MIN_LENGTH = 12
TEXT_MAX_LENGTH = 512
GEOMETRY_MIN_LENGTH = 4
GEOMETRY_MAX_LENGTH = 256


def parse_modalities(selection):
    """``"all"``, ``"none"`` or a comma list such as ``"num,txt"`` -> ordered tuple."""
    if isinstance(selection, (list, tuple)):
        names = list(selection)
    else:
        selection = selection.strip().lower()
        if selection == "all":
            return MODALITY_NAMES
        if selection in ("none", ""):
            return ()
        names = [s.strip() for s in selection.split(",") if s.strip()]
    unknown = [n for n in names if n not in MODALITY_NAMES]
    if unknown:
        raise ValueError(f"unknown modalities {unknown}; choose from {MODALITY_NAMES}")
    return tuple(n for n in MODALITY_NAMES if n in names)


# --------------------------------------------------------------------------
# fixed encodings
# --------------------------------------------------------------------------


def trig_encode(phi, psi):
    """``(sin 2*pi*phi/psi, cos 2*pi*phi/psi)`` with ``phi`` reduced modulo ``psi``."""
    if psi <= 0:
        raise ValueError(f"cycle length must be positive, got {psi}")
    angle = 2.0 * math.pi * (phi % psi) / psi
    return math.sin(angle), math.cos(angle)


def encode_temporal(value):
    """Length-10 vector ``[era, century/99, decade, year, month, day]``.

    The last four slots are sin/cos pairs; absent components stay zero.
    """
    out = np.zeros(10)
    if value is None:
        return out
    if value.century is not None:
        out[0] = value.era
        out[1] = value.century / 99.0
        out[2:4] = trig_encode(value.decade, PSI_DECADE)
        out[4:6] = trig_encode(value.year, PSI_YEAR)
    if value.month is not None:
        out[6:8] = trig_encode(value.month, PSI_MONTH)
    if value.day is not None:
        out[8:10] = trig_encode(value.day, PSI_DAY)
    return out


def numeric_boolean_columns(graph):
    """``{node_id: (number, boolean)}`` for numeric and boolean literal nodes.

    Numbers are min-max scaled to [-1, 1] per relation; a literal shared by
    several relations (merged policy) uses the first relation that points
    at it. Missing or unparseable values encode as 0.0.
    """
    first_rel = {}
    for h, r, t in zip(graph.heads, graph.rels, graph.tails):
        if t >= graph.num_entities and t not in first_rel:
            first_rel[int(t)] = int(r)
    values = {}
    out = {}
    for i in range(graph.num_entities, graph.num_nodes):
        lit = graph.nodes[i].literal
        if lit.modality is Modality.NUMERICAL:
            v = parse_number(lit.lexical)
            if v is not None:
                values[i] = v
            out[i] = (0.0, 0.0)
        elif lit.modality is Modality.BOOLEAN:
            b = parse_boolean(lit.lexical)
            out[i] = (0.0, 0.0 if b is None else b)
    by_rel = {}
    for i, v in values.items():
        by_rel.setdefault(first_rel.get(i, -1), []).append(v)
    bounds = {r: (min(vs), max(vs)) for r, vs in by_rel.items()}
    for i, v in values.items():
        lo, hi = bounds[first_rel.get(i, -1)]
        out[i] = (2.0 * (v - lo) / (hi - lo) - 1.0 if hi > lo else 0.0, 0.0)
    return out


# --------------------------------------------------------------------------
# text
# --------------------------------------------------------------------------


class CharVocabulary:
    """Printable ASCII plus one out-of-vocabulary symbol (index ``size - 1``)."""

    def __init__(self, symbols=None):
        self.symbols = tuple(symbols) if symbols is not None else tuple(chr(c) for c in range(0x20, 0x7F))
        self._index = {ch: i for i, ch in enumerate(self.symbols)}
        self.oov = len(self.symbols)

    @property
    def size(self):
        return len(self.symbols) + 1

    def index(self, ch):
        return self._index.get(ch, self.oov)

    def encode(self, text, lower=True):
        text = text.lower() if lower else text
        return np.array([self.index(ch) for ch in text], dtype=np.int64)

    def one_hot(self, text, length=None, lower=True):
        """``|vocab| x length`` matrix with a 1.0 where ``text[j]`` is symbol ``i``."""
        idx = self.encode(text, lower)
        length = len(idx) if length is None else length
        out = np.zeros((self.size, length))
        k = min(len(idx), length)
        out[idx[:k], np.arange(k)] = 1.0
        return out


def bucket_length(length, minimum, maximum):
    """Smallest power of two >= max(length, minimum), bounded by ``maximum``.

    Every string/geometry is zero-padded to its bucket so its encoding does
    not depend on which other inputs share its batch.
    """
    target = max(length, minimum)
    size = minimum
    while size < target:
        size *= 2
    return min(size, maximum)


class TextEncoder(Module):
    """Temporal CNN over one-hot characters: 4 conv layers then 3 dense layers."""

    def __init__(self, vocab_size, rng, dtype=np.float64, fan_in_gain=True, last_padding=2):
        kw = dict(rng=rng, init="normal", fan_in_gain=fan_in_gain, dtype=dtype)
        relu = dict(kw, gain_scale=2.0)
        # one-hot input: only one channel per position is non-zero
        self.conv1 = Conv1d(vocab_size, 64, 7, 3, fan_in=7, **relu)
        self.conv2 = Conv1d(64, 64, 7, 3, **relu)
        self.conv3 = Conv1d(64, 64, 7, 3, **relu)
        self.conv4 = Conv1d(64, 64, 7, last_padding, **relu)
        self.dense1 = Dense(64, 256, **relu)
        self.dense2 = Dense(256, 64, **relu)
        self.dense3 = Dense(64, 16, **kw)

    def forward(self, x):
        h = ops.maxpool1d(ops.relu(self.conv1(x)), 2, 2)
        h = ops.maxpool1d(ops.relu(self.conv2(h)), 2, 2)
        h = ops.relu(self.conv3(h))
        h = ops.adaptive_max_pool1d(ops.relu(self.conv4(h)), 1)
        h = ops.relu(self.dense1(ops.flatten(h)))
        h = ops.relu(self.dense2(h))
        return self.dense3(h)


def encode_text(encoder, vocab, text, dtype=np.float64):
    """16-d embedding of a single string (trimmed to 512, padded to its bucket)."""
    text = text[:TEXT_MAX_LENGTH]
    length = bucket_length(len(text), TEXT_MIN_LENGTH, TEXT_MAX_LENGTH)
    x = vocab.one_hot(text, length).astype(dtype)[None]
    return encoder(Tensor(x))


# --------------------------------------------------------------------------
# images
# --------------------------------------------------------------------------


class ImageEncoder(Module):
    """Three conv/ReLU/max-pool stages on a 3x64x64 raster, then dense -> 128."""

    def __init__(self, rng, dtype=np.float64, fan_in_gain=True, size=IMAGE_SIZE):
        kw = dict(rng=rng, init="normal", fan_in_gain=fan_in_gain, dtype=dtype)
        relu = dict(kw, gain_scale=2.0)
        self.conv1 = Conv2d(3, 8, 3, 1, **relu)
        self.conv2 = Conv2d(8, 16, 3, 1, **relu)
        self.conv3 = Conv2d(16, 32, 3, 1, **relu)
        side = size // 8
        self.dense = Dense(32 * side * side, 128, **kw)

    def forward(self, x):
        h = ops.maxpool2d(ops.relu(self.conv1(x)), 2, 2)
        h = ops.maxpool2d(ops.relu(self.conv2(h)), 2, 2)
        h = ops.maxpool2d(ops.relu(self.conv3(h)), 2, 2)
        return self.dense(ops.flatten(h))


def encode_image(encoder, raster, dtype=np.float64):
    return encoder(Tensor(np.asarray(raster, dtype=dtype)[None]))


# --------------------------------------------------------------------------
# geometries
# --------------------------------------------------------------------------

GEOMETRY_CHANNELS = 5  # dx, dy, part separator, location x, location y


@dataclass
class SpatialStats:
    """Graph-wide centre and scale used to normalise geometry coordinates."""

    mean: np.ndarray
    scale: float

    @classmethod
    def from_geometries(cls, geometries):
        geometries = [g for g in geometries if g is not None]
        if not geometries:
            return cls(np.zeros(2), 1.0)
        coords = np.concatenate([g.coordinates for g in geometries])
        mean = coords.mean(axis=0)
        scale = float(np.abs(coords - mean).max())
        return cls(mean, scale if scale > 0 else 1.0)


def geometry_matrix(geom, stats):
    """Per-coordinate input rows ``[dx, dy, separator, loc_x, loc_y]`` as a 5 x m matrix.

    Shape channels are the coordinates relative to the feature's own mean;
    location channels hold that mean relative to the graph-wide mean. Both
    are divided by the graph's largest coordinate deviation, so location
    lies in [-1, 1].
    """
    coords = geom.coordinates[:GEOMETRY_MAX_LENGTH]
    ends = geom.part_end[:GEOMETRY_MAX_LENGTH]
    centre = geom.coordinates.mean(axis=0)
    out = np.empty((GEOMETRY_CHANNELS, coords.shape[0]))
    out[0:2] = ((coords - centre) / stats.scale).T
    out[2] = ends.astype(np.float64)
    out[3:5] = ((centre - stats.mean) / stats.scale)[:, None]
    return out


class GeometryEncoder(Module):
    """Temporal CNN over coordinate sequences: 3 conv layers then 3 dense layers."""

    def __init__(self, rng, dtype=np.float64, fan_in_gain=True):
        kw = dict(rng=rng, init="normal", fan_in_gain=fan_in_gain, dtype=dtype)
        relu = dict(kw, gain_scale=2.0)
        self.conv1 = Conv1d(GEOMETRY_CHANNELS, 16, 5, 2, **relu)
        self.conv2 = Conv1d(16, 32, 5, 2, **relu)
        self.conv3 = Conv1d(32, 64, 5, 2, **relu)
        self.dense1 = Dense(64, 128, **relu)
        self.dense2 = Dense(128, 32, **relu)
        self.dense3 = Dense(32, 16, **kw)

    def forward(self, x):
        h = ops.maxpool1d(ops.relu(self.conv1(x)), 3, 3)
        h = ops.relu(self.conv2(h))
        h = ops.adaptive_avg_pool1d(ops.relu(self.conv3(h)), 1)
        h = ops.relu(self.dense1(ops.flatten(h)))
        h = ops.relu(self.dense2(h))
        return self.dense3(h)


def pad_columns(matrix, length):
    out = np.zeros((matrix.shape[0], length))
    k = min(matrix.shape[1], length)
    out[:, :k] = matrix[:, :k]
    return out


def encode_geometry(encoder, geom, stats, dtype=np.float64):
    mat = geometry_matrix(geom, stats)
    length = bucket_length(mat.shape[1], GEOMETRY_MIN_LENGTH, GEOMETRY_MAX_LENGTH)
    return encoder(Tensor(pad_columns(mat, length).astype(dtype)[None]))


# --------------------------------------------------------------------------
# assembly
# --------------------------------------------------------------------------


@dataclass
class _NeuralInputs:
    """Prepared encoder inputs for the literal nodes of one neural modality."""

    nodes: np.ndarray                      # node ids with a usable value
    buckets: np.ndarray                    # padded input length per node
    payload: list = field(default_factory=list)


@dataclass
class EncoderConfig:
    fan_in_gain: bool = True
    text_last_padding: int = 2
    batch_size: int = 64
    image_size: int = IMAGE_SIZE


class FeatureAssembler(Module):
    """Builds the node-feature matrix F for a graph and a set of modalities.

    Fixed encodings are computed once. Neural encodings are kept in a cache;
    :meth:`assemble` re-encodes (with gradients) only the literal nodes of
    the requested chunk and reads every other row from the cache.
    """

    def __init__(self, graph, modalities, rng, dtype=np.float64, config=None):
        self.modalities = parse_modalities(modalities)
        self.dtype = np.dtype(dtype)
        self.config = config or EncoderConfig()
        self.n = graph.num_nodes
        self.spans = {}
        offset = 0
        for m in self.modalities:
            self.spans[m] = (offset, MODALITY_WIDTHS[m])
            offset += MODALITY_WIDTHS[m]
        self.width = offset

        literal_ids = {name: [] for name in MODALITY_NAMES}
        for i in range(graph.num_entities, graph.num_nodes):
            name = MODALITY_OF.get(graph.nodes[i].literal.modality)
            if name is not None:
                literal_ids[name].append(i)
        self.literal_counts = {m: len(ids) for m, ids in literal_ids.items()}

        self.base = np.zeros((self.n, self.width), dtype=self.dtype)
        if "num" in self.spans:
            col = self.spans["num"][0]
            for i, pair in numeric_boolean_columns(graph).items():
                self.base[i, col:col + 2] = pair
        if "tmp" in self.spans:
            col = self.spans["tmp"][0]
            for i in literal_ids["tmp"]:
                lit = graph.nodes[i].literal
                self.base[i, col:col + 10] = encode_temporal(parse_datetime(lit.lexical, lit.datatype))

        self.inputs = {}
        self.vocab = None
        self.spatial_stats = None
        if "txt" in self.spans:
            self.vocab = CharVocabulary()
            self.text_encoder = TextEncoder(self.vocab.size, rng, self.dtype, self.config.fan_in_gain,
                                            self.config.text_last_padding)
            payload = [self.vocab.encode(graph.nodes[i].literal.lexical)[:TEXT_MAX_LENGTH]
                       for i in literal_ids["txt"]]
            buckets = [bucket_length(len(p), TEXT_MIN_LENGTH, TEXT_MAX_LENGTH) for p in payload]
            self.inputs["txt"] = _NeuralInputs(np.array(literal_ids["txt"], dtype=np.int64),
                                               np.array(buckets, dtype=np.int64), payload)
        if "img" in self.spans:
            size = self.config.image_size
            if size < 8 or size % 8:
                raise ValueError(f"image size must be a positive multiple of 8, got {size}")
            self.image_encoder = ImageEncoder(rng, self.dtype, self.config.fan_in_gain, size)
            nodes, payload = [], []
            for i in literal_ids["img"]:
                raster = decode_image(graph.nodes[i].literal.lexical, size)
                if raster is not None:
                    nodes.append(i)
                    payload.append(raster.astype(self.dtype))
            self.inputs["img"] = _NeuralInputs(np.array(nodes, dtype=np.int64),
                                               np.full(len(nodes), size, dtype=np.int64), payload)
        if "geo" in self.spans:
            self.geometry_encoder = GeometryEncoder(rng, self.dtype, self.config.fan_in_gain)
            parsed = [(i, parse_wkt(graph.nodes[i].literal.lexical)) for i in literal_ids["geo"]]
            parsed = [(i, g) for i, g in parsed if g is not None]
            self.spatial_stats = SpatialStats.from_geometries([g for _, g in parsed])
            payload = [geometry_matrix(g, self.spatial_stats) for _, g in parsed]
            buckets = [bucket_length(p.shape[1], GEOMETRY_MIN_LENGTH, GEOMETRY_MAX_LENGTH) for p in payload]
            self.inputs["geo"] = _NeuralInputs(np.array([i for i, _ in parsed], dtype=np.int64),
                                               np.array(buckets, dtype=np.int64), payload)
        self.cache = self.base.copy()

    # -- encoder dispatch ------------------------------------------------

    def _encoder(self, name):
        return {"txt": getattr(self, "text_encoder", None), "img": getattr(self, "image_encoder", None),
                "geo": getattr(self, "geometry_encoder", None)}[name]

    def _batch_input(self, name, positions, length):
        inp = self.inputs[name]
        if name == "txt":
            x = np.zeros((len(positions), self.vocab.size, length), dtype=self.dtype)
            for row, p in enumerate(positions):
                idx = inp.payload[p]
                x[row, idx, np.arange(len(idx))] = 1.0
            return x
        if name == "img":
            return np.stack([inp.payload[p] for p in positions])
        x = np.zeros((len(positions), GEOMETRY_CHANNELS, length), dtype=self.dtype)
        for row, p in enumerate(positions):
            mat = inp.payload[p]
            x[row, :, :mat.shape[1]] = mat
        return x

    def _encode_positions(self, name, positions):
        """Encode the given payload positions; returns ``[(node_ids, Tensor)]``."""
        inp = self.inputs[name]
        encoder = self._encoder(name)
        pieces = []
        positions = np.asarray(positions, dtype=np.int64)
        if positions.size == 0:
            return pieces
        bs = self.config.batch_size
        for length in np.unique(inp.buckets[positions]):
            group = positions[inp.buckets[positions] == length]
            for start in range(0, len(group), bs):
                batch = group[start:start + bs]
                out = encoder(Tensor(self._batch_input(name, batch, int(length))))
                pieces.append((inp.nodes[batch], out))
        return pieces

    @property
    def neural_modalities(self):
        return [m for m in ("txt", "img", "geo") if m in self.inputs]

    def encoder_parameters(self):
        return self.parameters()

    def refresh_all(self):
        """Re-encode every neural literal without gradients and fill the cache."""
        with no_grad():
            for name in self.neural_modalities:
                col, width = self.spans[name]
                for nodes, out in self._encode_positions(name, np.arange(len(self.inputs[name].nodes))):
                    self.cache[nodes, col:col + width] = out.data

    def assemble(self, chunk=None, passes=1):
        """Return F as a Tensor.

        ``chunk=None`` re-encodes every neural literal with gradients.
        Otherwise only payload positions ``chunk, chunk + passes, ...`` are
        re-encoded; all other rows come from the cache.
        """
        if self.width == 0:
            return None
        pieces = []
        for name in self.neural_modalities:
            col, width = self.spans[name]
            count = len(self.inputs[name].nodes)
            positions = np.arange(count) if chunk is None else np.arange(chunk, count, passes)
            for nodes, out in self._encode_positions(name, positions):
                pieces.append((nodes, col, out))
        f = ops.place_rows(self.cache, pieces)
        for nodes, col, out in pieces:
            self.cache[nodes, col:col + out.shape[1]] = out.data
        return f

    def feature_matrix(self):
        """Current cached F as a plain array."""
        return self.cache.copy()

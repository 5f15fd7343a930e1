"""Node-wise relaxation cost estimator over the region graph.

A stack of hybrid layers, each combining gated message passing along graph
edges with dense multi-head self-attention over all nodes, followed by a
shared per-node MLP head with a softplus output. Scores on free nodes are
zero-masked, so relaxation cost only ever attaches to soft regions.

Node inputs are the semantic features only (label one-hot plus start/goal
flags); geometry enters through edge lengths normalized by the map
diagonal. Hidden width, depth and head count are configurable; the
narrow raw feature width is lifted by a linear encoder first.

Checkpoint format ``*.relax.bin`` (little-endian):
    magic "RLXM" | u16 version | u32 M | u32 D | u32 K | u32 heads
    | u32 epoch | f64 loss | u64 n_params | params f64[] | u32 crc32
"""

from __future__ import annotations

import math
import struct
import zlib
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import DimMismatch, VersionMismatch
from .superpixel import RegionGraph

CHECKPOINT_MAGIC = b"RLXM"
CHECKPOINT_VERSION = 1

DEFAULT_HIDDEN = 64
DEFAULT_LAYERS = 3
DEFAULT_HEADS = 4


def _xavier(rng, fan_in, fan_out):
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


@dataclass
class ModelCheckpoint:
    version: int
    hyperparams: dict
    flat_params: np.ndarray
    epoch: int = 0
    loss: float = 0.0


class RelaxModel:
    """Relaxation-cost estimator; parameters live in an ordered dict."""

    def __init__(self, n_labels: int, hidden: int = DEFAULT_HIDDEN,
                 layers: int = DEFAULT_LAYERS, n_heads: int = DEFAULT_HEADS,
                 rng_seed: int = 0):
        if hidden % n_heads != 0:
            raise ValueError("hidden width must be divisible by n_heads")
        self.n_labels = n_labels
        self.hidden = hidden
        self.layers = layers
        self.n_heads = n_heads
        self.epoch = 0
        self.last_loss = 0.0
        rng = np.random.default_rng(rng_seed)
        d = hidden
        p = {}
        p["enc_node_w"] = _xavier(rng, n_labels + 2, d)
        p["enc_node_b"] = np.zeros(d)
        p["enc_edge_w"] = _xavier(rng, 1, d)
        p["enc_edge_b"] = np.zeros(d)
        for k in range(layers):
            pre = f"l{k}_"
            p[pre + "mp_a"] = _xavier(rng, d, d)
            p[pre + "mp_b"] = _xavier(rng, d, d)
            p[pre + "mp_c"] = _xavier(rng, d, d)
            p[pre + "mp_be"] = np.zeros(d)
            p[pre + "mp_u"] = _xavier(rng, d, d)
            p[pre + "mp_v"] = _xavier(rng, d, d)
            p[pre + "mp_bh"] = np.zeros(d)
            p[pre + "ln_e_g"] = np.ones(d)
            p[pre + "ln_e_b"] = np.zeros(d)
            p[pre + "ln_h_g"] = np.ones(d)
            p[pre + "ln_h_b"] = np.zeros(d)
            p[pre + "att_q"] = _xavier(rng, d, d)
            p[pre + "att_k"] = _xavier(rng, d, d)
            p[pre + "att_v"] = _xavier(rng, d, d)
            p[pre + "att_o"] = _xavier(rng, d, d)
            p[pre + "att_bo"] = np.zeros(d)
            p[pre + "ln_att_g"] = np.ones(d)
            p[pre + "ln_att_b"] = np.zeros(d)
            p[pre + "mlp_w1"] = _xavier(rng, d, 2 * d)
            p[pre + "mlp_b1"] = np.zeros(2 * d)
            p[pre + "mlp_w2"] = _xavier(rng, 2 * d, d)
            p[pre + "mlp_b2"] = np.zeros(d)
            p[pre + "ln_mlp_g"] = np.ones(d)
            p[pre + "ln_mlp_b"] = np.zeros(d)
        p["head_w1"] = _xavier(rng, d, d)
        p["head_b1"] = np.zeros(d)
        # bias initial costs low: the untrained search then explores soft
        # space freely (false negatives start near zero) and training
        # prices regions upward from exploration evidence, which avoids the
        # saturation trap of driving every score into the flat softplus tail
        p["head_w2"] = 0.1 * _xavier(rng, d, 1)
        p["head_b2"] = np.full(1, -2.0)
        self._init_storage(p)

    def _init_storage(self, arrays: dict):
        """Back all parameters with one flat buffer; params are views."""
        total = sum(v.size for v in arrays.values())
        self._flat = np.empty(total)
        self.params = {}
        self.slices = {}
        off = 0
        for k, v in arrays.items():
            n = v.size
            self._flat[off:off + n] = v.ravel()
            self.params[k] = self._flat[off:off + n].reshape(v.shape)
            self.slices[k] = slice(off, off + n)
            off += n

    # -- parameter bookkeeping --------------------------------------------

    def param_names(self):
        return list(self.params.keys())

    def n_params(self) -> int:
        return self._flat.size

    def flat(self) -> np.ndarray:
        return self._flat.copy()

    def load_flat(self, vec: np.ndarray):
        if vec.size != self._flat.size:
            raise DimMismatch("parameter vector size mismatch")
        self._flat[:] = vec

    def flat_grad(self, grads_by_name: dict) -> np.ndarray:
        out = np.zeros_like(self._flat)
        for k, g in grads_by_name.items():
            out[self.slices[k]] = g.ravel()
        return out

    def tensors(self) -> dict:
        """Fresh leaf Tensors sharing the parameter arrays."""
        return {k: Tensor(v, requires_grad=True) for k, v in self.params.items()}

    # -- forward ------------------------------------------------------------

    def _check_graph(self, graph: RegionGraph):
        if graph.nodes and graph.nodes[0].n_labels != self.n_labels:
            raise DimMismatch(
                f"graph has {graph.nodes[0].n_labels} labels, model expects "
                f"{self.n_labels}")

    def node_features(self, graph: RegionGraph) -> np.ndarray:
        """f per node: [label one-hot | start flag | goal flag]."""
        n = graph.n_nodes
        x = np.zeros((n, self.n_labels + 2))
        for node in graph.nodes:
            x[node.id, node.label] = 1.0
            x[node.id, self.n_labels] = 1.0 if node.is_start else 0.0
            x[node.id, self.n_labels + 1] = 1.0 if node.is_goal else 0.0
        return x

    @staticmethod
    def edge_arrays(graph: RegionGraph):
        """Directed edge endpoints (both directions) plus normalized length."""
        src, dst, feat = [], [], []
        diag = max(graph.map_diagonal_m, 1e-9)
        for (i, j, w) in graph.edges:
            src.extend((i, j))
            dst.extend((j, i))
            feat.extend((w / diag, w / diag))
        return (np.array(src, dtype=np.int64), np.array(dst, dtype=np.int64),
                np.array(feat).reshape(-1, 1))

    def encode(self, graph: RegionGraph, pt: dict):
        """Linear lift of node/edge inputs to the hidden width."""
        self._check_graph(graph)
        x = Tensor(self.node_features(graph))
        src, dst, efeat = self.edge_arrays(graph)
        v0 = ad.add_rowvec(ad.matmul(x, pt["enc_node_w"]), pt["enc_node_b"])
        e0 = ad.add_rowvec(ad.matmul(Tensor(efeat), pt["enc_edge_w"]),
                           pt["enc_edge_b"])
        return v0, e0, src, dst

    def gps_layer(self, k: int, v: Tensor, e: Tensor, src, dst, n: int,
                  pt: dict):
        """One hybrid layer: gated message passing + global attention,
        combined by sum and a per-node MLP; returns updated (V, E)."""
        pre = f"l{k}_"
        d = self.hidden
        # message-passing branch with edge-conditioned gates
        vi = ad.gather_rows(v, dst)
        vj = ad.gather_rows(v, src)
        e_pre = ad.add_rowvec(
            ad.matmul(vi, pt[pre + "mp_a"]) + ad.matmul(vj, pt[pre + "mp_b"])
            + ad.matmul(e, pt[pre + "mp_c"]), pt[pre + "mp_be"])
        e_out = e + ad.relu(ad.layer_norm_rows(e_pre, pt[pre + "ln_e_g"],
                                               pt[pre + "ln_e_b"]))
        eta = ad.sigmoid(e_pre)
        msg = eta * ad.matmul(vj, pt[pre + "mp_v"])
        agg = ad.scatter_add_rows(msg, dst, n)
        den = ad.scatter_add_rows(eta, dst, n) + 1e-6
        h_pre = ad.add_rowvec(ad.matmul(v, pt[pre + "mp_u"]) + agg / den,
                              pt[pre + "mp_bh"])
        v_mp = v + ad.relu(ad.layer_norm_rows(h_pre, pt[pre + "ln_h_g"],
                                              pt[pre + "ln_h_b"]))
        # dense attention branch over all nodes
        vn = ad.layer_norm_rows(v, pt[pre + "ln_att_g"], pt[pre + "ln_att_b"])
        q = ad.matmul(vn, pt[pre + "att_q"])
        kk = ad.matmul(vn, pt[pre + "att_k"])
        vv = ad.matmul(vn, pt[pre + "att_v"])
        dh = d // self.n_heads
        heads = []
        for hix in range(self.n_heads):
            a, b = hix * dh, (hix + 1) * dh
            qh = ad.slice_cols(q, a, b)
            kh = ad.slice_cols(kk, a, b)
            vh = ad.slice_cols(vv, a, b)
            att = ad.row_softmax(ad.matmul(qh, ad.transpose(kh))
                                 * (1.0 / math.sqrt(dh)))
            heads.append(ad.matmul(att, vh))
        att_out = ad.add_rowvec(ad.matmul(ad.concat(heads, axis=1),
                                          pt[pre + "att_o"]), pt[pre + "att_bo"])
        v_att = v + att_out
        # combine branches, then per-node MLP with residual
        s = v_mp + v_att
        s_n = ad.layer_norm_rows(s, pt[pre + "ln_mlp_g"], pt[pre + "ln_mlp_b"])
        m1 = ad.relu(ad.add_rowvec(ad.matmul(s_n, pt[pre + "mlp_w1"]),
                                   pt[pre + "mlp_b1"]))
        m2 = ad.add_rowvec(ad.matmul(m1, pt[pre + "mlp_w2"]), pt[pre + "mlp_b2"])
        return s + m2, e_out

    def forward(self, graph: RegionGraph, pt: dict | None = None) -> Tensor:
        """Per-node relaxation cost: non-negative, exactly zero on free nodes."""
        if pt is None:
            pt = {k: Tensor(a) for k, a in self.params.items()}
        v, e, src, dst = self.encode(graph, pt)
        n = graph.n_nodes
        for k in range(self.layers):
            v, e = self.gps_layer(k, v, e, src, dst, n, pt)
        h1 = ad.relu(ad.add_rowvec(ad.matmul(v, pt["head_w1"]), pt["head_b1"]))
        raw = ad.add_rowvec(ad.matmul(h1, pt["head_w2"]), pt["head_b2"])
        psi = ad.softplus(ad.reshape(raw, (n,)))
        return psi * Tensor(graph.soft_mask())


def predict_costs(model: RelaxModel, graph: RegionGraph) -> np.ndarray:
    """Inference-only scores as a plain array."""
    return model.forward(graph).data


# --------------------------------------------------------------------------
# checkpoint io
# --------------------------------------------------------------------------


def save_model(model: RelaxModel, path) -> None:
    flat = model.flat()
    head = CHECKPOINT_MAGIC + struct.pack(
        "<HIIIIIdQ", CHECKPOINT_VERSION, model.n_labels, model.hidden,
        model.layers, model.n_heads, model.epoch, model.last_loss, flat.size)
    payload = flat.astype("<f8").tobytes()
    crc = zlib.crc32(head + payload) & 0xFFFFFFFF
    with open(path, "wb") as f:
        f.write(head + payload + struct.pack("<I", crc))


def load_checkpoint(path) -> ModelCheckpoint:
    with open(path, "rb") as f:
        blob = f.read()
    hdr_fmt = "<HIIIIIdQ"
    hdr_len = 4 + struct.calcsize(hdr_fmt)
    if len(blob) < hdr_len + 4:
        raise IOError("truncated checkpoint")
    if blob[:4] != CHECKPOINT_MAGIC:
        raise IOError("bad checkpoint magic")
    version, m, d, k, heads, epoch, loss, n_params = struct.unpack_from(
        hdr_fmt, blob, 4)
    if version != CHECKPOINT_VERSION:
        raise VersionMismatch(f"checkpoint version {version}")
    want = hdr_len + 8 * n_params + 4
    if len(blob) != want:
        raise IOError(f"checkpoint has {len(blob)} bytes, expected {want}")
    (crc_stored,) = struct.unpack_from("<I", blob, want - 4)
    if zlib.crc32(blob[:want - 4]) & 0xFFFFFFFF != crc_stored:
        raise IOError("checkpoint crc mismatch")
    flat = np.frombuffer(blob, dtype="<f8", count=n_params, offset=hdr_len)
    return ModelCheckpoint(
        version=version,
        hyperparams={"n_labels": m, "hidden": d, "layers": k, "n_heads": heads},
        flat_params=flat.astype(np.float64), epoch=epoch, loss=loss)


def load_model(path) -> RelaxModel:
    ck = load_checkpoint(path)
    model = RelaxModel(**ck.hyperparams)
    if model.n_params() != ck.flat_params.size:
        raise IOError("parameter count inconsistent with hyperparameters")
    model.load_flat(ck.flat_params)
    model.epoch = ck.epoch
    model.last_loss = ck.loss
    return model

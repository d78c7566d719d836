"""The multi-level fusion network: LSTM word encoder, PLE utterance encoder,
Perceiver / attentive-pooling embedding path and a linear head.

Parameters live in a flat ``dict[str, ndarray]`` keyed by dotted names
(``lstm.0.Wx``, ``perceiver.cross.Wq``, ``head.W`` ...). Fitted,
non-trainable state (PLE bin edges, word-feature standardization) lives in
``Model.buffers``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import layers as L

TASKS = ("categorical", "attributes")
N_CATEGORIES = 8
N_ATTRIBUTES = 3
# attribute targets on the 1..7 scale are trained in (y - 4) / 3 units
ATTR_CENTER = 4.0
ATTR_SCALE = 3.0


@dataclass(frozen=True)
class ModelConfig:
    task: str = "categorical"
    hidden_word: int = 128
    hidden_utt: int = 128
    ple_bins: int = 8
    latent_len: int = 64
    latent_dim: int = 768
    passes: int = 2
    ff_mult: int = 2
    pool_dim: int = 128
    lstm_layers: int = 2
    use_word: bool = True
    use_utterance: bool = True
    embeddings: tuple[str, ...] | None = None  # None: every source present in the training data

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"task must be one of {TASKS}, got {self.task!r}")
        if self.embeddings is not None:
            object.__setattr__(self, "embeddings", tuple(self.embeddings))


PRESETS = {
    "full": ModelConfig(),
    "desk": ModelConfig(hidden_word=16, hidden_utt=16, latent_len=8, latent_dim=32, pool_dim=16),
}


@dataclass
class Model:
    config: ModelConfig
    params: dict[str, np.ndarray]
    buffers: dict[str, np.ndarray] = field(default_factory=dict)
    word_dim: int = 42
    utt_dim: int = 0
    sources: dict[str, int] = field(default_factory=dict)
    pooled: bool = False

    @property
    def n_outputs(self) -> int:
        return N_CATEGORIES if self.config.task == "categorical" else N_ATTRIBUTES

    @property
    def embed_width(self) -> int:
        if not self.sources:
            return 0
        if len(self.sources) == 1:
            (dim,) = self.sources.values()
            return 2 * dim if self.pooled else dim
        return self.config.latent_dim

    @property
    def head_width(self) -> int:
        c = self.config
        return self.embed_width + (c.hidden_utt if c.use_utterance else 0) + (c.hidden_word if c.use_word else 0)

    def copy(self) -> "Model":
        return replace(
            self,
            params={k: v.copy() for k, v in self.params.items()},
            buffers={k: v.copy() for k, v in self.buffers.items()},
            sources=dict(self.sources),
        )


# ---------------------------------------------------------------------------
# initialization


def _uniform(rng, shape, fan_in):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init_params(model: Model, seed: int = 0) -> dict[str, np.ndarray]:
    """Scaled-uniform weights, zero biases, unit layer-norm gains, forget-gate bias 1."""
    rng = np.random.default_rng(seed)
    c = model.config
    p: dict[str, np.ndarray] = {}
    if c.use_word:
        d_in = model.word_dim
        H = c.hidden_word
        for layer in range(c.lstm_layers):
            p[f"lstm.{layer}.Wx"] = _uniform(rng, (d_in, 4 * H), H)
            p[f"lstm.{layer}.Wh"] = _uniform(rng, (H, 4 * H), H)
            b = np.zeros(4 * H)
            b[H : 2 * H] = 1.0
            p[f"lstm.{layer}.b"] = b
            d_in = H
    if c.use_utterance:
        fan = model.utt_dim * c.ple_bins
        p["ple.W"] = _uniform(rng, (fan, c.hidden_utt), fan)
        p["ple.b"] = np.zeros(c.hidden_utt)
    if len(model.sources) == 1 and model.pooled:
        (dim,) = model.sources.values()
        p["pool.W"] = _uniform(rng, (dim, c.pool_dim), dim)
        p["pool.b"] = np.zeros(c.pool_dim)
        p["pool.v"] = _uniform(rng, (c.pool_dim,), c.pool_dim)
    elif len(model.sources) > 1:
        D = c.latent_dim
        for name, dim in model.sources.items():
            p[f"perceiver.proj.{name}.W"] = _uniform(rng, (dim, D), dim)
            p[f"perceiver.proj.{name}.b"] = np.zeros(D)
        p["perceiver.latent"] = rng.uniform(-1.0, 1.0, size=(c.latent_len, D))
        for ln in ("ln_x", "ln1", "ln2", "ln3", "ln_out"):
            p[f"perceiver.{ln}.g"] = np.ones(D)
            p[f"perceiver.{ln}.b"] = np.zeros(D)
        for att in ("cross", "self"):
            for w in ("Wq", "Wk", "Wv", "Wo"):
                p[f"perceiver.{att}.{w}"] = _uniform(rng, (D, D), D)
        F = c.ff_mult * D
        p["perceiver.ff.W1"] = _uniform(rng, (D, F), D)
        p["perceiver.ff.b1"] = np.zeros(F)
        p["perceiver.ff.W2"] = _uniform(rng, (F, D), F)
        p["perceiver.ff.b2"] = np.zeros(D)
    width = model.head_width
    if width == 0:
        raise ValueError("no feature level enabled")
    p["head.W"] = _uniform(rng, (width, model.n_outputs), width)
    p["head.b"] = np.zeros(model.n_outputs)
    return p


def fit_ple_edges(values: np.ndarray, bins: int) -> np.ndarray:
    """Per-feature quantile bin edges, shape (U, bins + 1); ties give zero-width bins."""
    values = np.atleast_2d(np.asarray(values, dtype=np.float64))
    edges = np.quantile(values, np.linspace(0.0, 1.0, bins + 1), axis=0).T
    return np.maximum.accumulate(edges, axis=1)


def build_model(bundles, config: ModelConfig = PRESETS["desk"], seed: int = 0) -> Model:
    """Size the network from training bundles, fit its buffers and draw initial weights."""
    bundles = list(bundles)
    if not bundles:
        raise ValueError("cannot build a model from an empty dataset")
    first = bundles[0]
    word_dim = int(first.word_seq.shape[1]) if first.word_seq.ndim == 2 else 42
    utt_dim = int(first.utterance.shape[0])
    names = sorted({n for b in bundles for n in b.embeddings})
    if config.embeddings is not None:
        missing = [n for n in config.embeddings if n not in names]
        if missing:
            raise ValueError(f"embedding sources {missing} not present in the training data")
        names = sorted(config.embeddings)
    sources = {}
    multi_frame = False
    for n in names:
        mats = [np.atleast_2d(b.embeddings[n]) for b in bundles if n in b.embeddings]
        sources[n] = int(mats[0].shape[1])
        multi_frame |= any(m.shape[0] > 1 for m in mats)
    model = Model(config, {}, {}, word_dim, utt_dim, sources, pooled=len(sources) == 1 and multi_frame)
    if config.use_word:
        rows = [b.word_seq for b in bundles if b.word_seq.shape[0]]
        if rows:
            allw = np.concatenate(rows)
            mean, std = allw.mean(axis=0), allw.std(axis=0)
        else:
            mean, std = np.zeros(word_dim), np.ones(word_dim)
        model.buffers["word.mean"] = mean
        model.buffers["word.std"] = np.where(std > 1e-6, std, 1.0)
    if config.use_utterance:
        model.buffers["ple.edges"] = fit_ple_edges(np.stack([b.utterance for b in bundles]), config.ple_bins)
    model.params = init_params(model, seed)
    return model


# ---------------------------------------------------------------------------
# encoders


def lstm_encode(word_seq, layer_params):
    """Final top-layer hidden state of a stacked LSTM; an empty sequence gives zeros.

    ``layer_params`` is a list of ``(Wx, Wh, b)`` per layer.
    """
    X = np.asarray(word_seq, dtype=np.float64)
    H = layer_params[-1][1].shape[0]
    if X.shape[0] == 0:
        return np.zeros(H), None
    caches = []
    for Wx, Wh, b in layer_params:
        X, cache = L.lstm_layer_forward(X, Wx, Wh, b)
        caches.append(cache)
    return X[-1].copy(), caches


def lstm_encode_backward(dh, caches):
    """Returns ``(d word_seq, [per-layer grads])``; ``None`` caches mean the empty case."""
    if caches is None:
        return None, None
    n = caches[-1][0].shape[0]
    dH = np.zeros((n, dh.shape[0]))
    dH[-1] = dh
    grads = []
    for cache in reversed(caches):
        dH, g = L.lstm_layer_backward(dH, cache)
        grads.append(g)
    return dH, grads[::-1]


def ple_encode(utterance, edges, W, b):
    return L.ple_forward(np.asarray(utterance, dtype=np.float64), edges, W, b)


def attentive_stat_pool(frames, W, b, v):
    return L.attentive_pool_forward(np.atleast_2d(np.asarray(frames, dtype=np.float64)), W, b, v)


_BLOCK_KEYS = ("ln1", "cross", "ln2", "self", "ln3", "ff")


def perceiver_fuse(embeddings: dict, P: dict, passes: int = 2):
    """Fuse embedding sources into one vector with a shared-weight latent block.

    ``P`` holds the Perceiver parameters without the ``perceiver.`` prefix.
    Sources are projected to the latent width and concatenated along the
    token axis; the block (cross-attention, self-attention, feed-forward,
    each pre-normed with a residual) runs ``passes`` times; the output is
    the mean over latent rows after a final layer norm.
    """
    if not embeddings:
        raise ValueError("perceiver fusion needs at least one embedding source")
    names = list(embeddings)
    toks, proj = [], []
    for n in names:
        E = np.atleast_2d(np.asarray(embeddings[n], dtype=np.float64))
        X, c = L.linear_forward(E, P[f"proj.{n}.W"], P[f"proj.{n}.b"])
        toks.append(X)
        proj.append(c)
    sizes = [t.shape[0] for t in toks]
    X = np.concatenate(toks)
    Xn, c_lnx = L.layer_norm_forward(X, P["ln_x.g"], P["ln_x.b"])
    Z = P["latent"].copy()
    blocks = []
    for _ in range(passes):
        z1, c1 = L.layer_norm_forward(Z, P["ln1.g"], P["ln1.b"])
        a1, ca1 = L.attention_forward(z1, Xn, P["cross.Wq"], P["cross.Wk"], P["cross.Wv"], P["cross.Wo"])
        Z = Z + a1
        z2, c2 = L.layer_norm_forward(Z, P["ln2.g"], P["ln2.b"])
        a2, ca2 = L.attention_forward(z2, z2, P["self.Wq"], P["self.Wk"], P["self.Wv"], P["self.Wo"])
        Z = Z + a2
        z3, c3 = L.layer_norm_forward(Z, P["ln3.g"], P["ln3.b"])
        f, cf = L.feed_forward_forward(z3, P["ff.W1"], P["ff.b1"], P["ff.W2"], P["ff.b2"])
        Z = Z + f
        blocks.append((c1, ca1, c2, ca2, c3, cf))
    Zo, c_out = L.layer_norm_forward(Z, P["ln_out.g"], P["ln_out.b"])
    cache = (names, sizes, proj, c_lnx, blocks, c_out, Zo.shape[0])
    return Zo.mean(axis=0), cache


def _acc(grads, key, value):
    if key in grads:
        grads[key] = grads[key] + value
    else:
        grads[key] = value


def perceiver_fuse_backward(dout, cache):
    """Returns ``(dict name -> d embedding, grads keyed like P)``."""
    names, sizes, proj, c_lnx, blocks, c_out, n_latent = cache
    grads: dict[str, np.ndarray] = {}
    dZo = np.broadcast_to(dout / n_latent, (n_latent, dout.shape[0])).copy()
    dZ, g = L.layer_norm_backward(dZo, c_out)
    _acc(grads, "ln_out.g", g["g"])
    _acc(grads, "ln_out.b", g["b"])
    dXn = np.zeros_like(c_lnx[0])
    for c1, ca1, c2, ca2, c3, cf in reversed(blocks):
        dz3, g = L.feed_forward_backward(dZ, cf)
        for k, v in g.items():
            _acc(grads, f"ff.{k}", v)
        dz, g = L.layer_norm_backward(dz3, c3)
        _acc(grads, "ln3.g", g["g"])
        _acc(grads, "ln3.b", g["b"])
        dZ = dZ + dz
        dq, dkv, g = L.attention_backward(dZ, ca2)
        for k, v in g.items():
            _acc(grads, f"self.{k}", v)
        dz, g = L.layer_norm_backward(dq + dkv, c2)
        _acc(grads, "ln2.g", g["g"])
        _acc(grads, "ln2.b", g["b"])
        dZ = dZ + dz
        dq, dkv, g = L.attention_backward(dZ, ca1)
        for k, v in g.items():
            _acc(grads, f"cross.{k}", v)
        dXn += dkv
        dz, g = L.layer_norm_backward(dq, c1)
        _acc(grads, "ln1.g", g["g"])
        _acc(grads, "ln1.b", g["b"])
        dZ = dZ + dz
    grads["latent"] = dZ
    dX, g = L.layer_norm_backward(dXn, c_lnx)
    _acc(grads, "ln_x.g", g["g"])
    _acc(grads, "ln_x.b", g["b"])
    d_emb = {}
    offset = 0
    for n, size, c in zip(names, sizes, proj):
        dE, g = L.linear_backward(dX[offset : offset + size], c)
        grads[f"proj.{n}.W"] = g["W"]
        grads[f"proj.{n}.b"] = g["b"]
        d_emb[n] = dE
        offset += size
    return d_emb, grads


# ---------------------------------------------------------------------------
# full network


def _sub(params: dict, prefix: str) -> dict:
    n = len(prefix)
    return {k[n:]: v for k, v in params.items() if k.startswith(prefix)}


def _check_dims(model: Model, bundle) -> None:
    c = model.config
    if c.use_word:
        ws = np.asarray(bundle.word_seq)
        if ws.size and (ws.ndim != 2 or ws.shape[1] != model.word_dim):
            raise ValueError(f"word rows have shape {ws.shape}, model expects width {model.word_dim}")
    if c.use_utterance and np.shape(bundle.utterance) != (model.utt_dim,):
        raise ValueError(f"utterance vector has shape {np.shape(bundle.utterance)}, model expects ({model.utt_dim},)")
    for name, dim in model.sources.items():
        if name in bundle.embeddings and np.atleast_2d(bundle.embeddings[name]).shape[1] != dim:
            shape = np.shape(bundle.embeddings[name])
            raise ValueError(f"embedding {name!r} has shape {shape}, model expects width {dim}")


def forward(model: Model, bundle):
    """Network outputs for one bundle: 8 logits or 3 attribute values (trained units).

    Enabled levels missing from the bundle (no words, absent embedding
    sources) contribute zeros to their head slot.
    """
    c = model.config
    p = model.params
    _check_dims(model, bundle)
    parts = []
    cache = {}
    if model.sources:
        present = {n: bundle.embeddings[n] for n in model.sources if n in bundle.embeddings}
        width = model.embed_width
        if not present:
            parts.append(np.zeros(width))
            cache["emb"] = None
        elif len(model.sources) == 1:
            (name,) = model.sources
            if model.pooled:
                e, ce = attentive_stat_pool(present[name], p["pool.W"], p["pool.b"], p["pool.v"])
                cache["emb"] = ("pool", ce)
            else:
                e = np.atleast_2d(np.asarray(present[name], dtype=np.float64)).mean(axis=0)
                cache["emb"] = ("direct", None)
            parts.append(e)
        else:
            e, ce = perceiver_fuse(present, _sub(p, "perceiver."), c.passes)
            parts.append(e)
            cache["emb"] = ("perceiver", ce)
    if c.use_utterance:
        u, cu = ple_encode(bundle.utterance, model.buffers["ple.edges"], p["ple.W"], p["ple.b"])
        parts.append(u)
        cache["utt"] = cu
    if c.use_word:
        ws = np.asarray(bundle.word_seq, dtype=np.float64).reshape(-1, model.word_dim)
        X = (ws - model.buffers["word.mean"]) / model.buffers["word.std"]
        layers_ = [(p[f"lstm.{i}.Wx"], p[f"lstm.{i}.Wh"], p[f"lstm.{i}.b"]) for i in range(c.lstm_layers)]
        h, cw = lstm_encode(X, layers_)
        parts.append(h)
        cache["word"] = cw
    z = np.concatenate(parts)
    out, ch = L.linear_forward(z, p["head.W"], p["head.b"])
    cache["head"] = ch
    return out, cache


def backward(model: Model, dout, cache) -> dict[str, np.ndarray]:
    """Parameter gradients of one sample given ``d loss / d outputs``."""
    c = model.config
    grads: dict[str, np.ndarray] = {}
    dz, g = L.linear_backward(dout, cache["head"])
    grads["head.W"] = g["W"]
    grads["head.b"] = g["b"]
    offset = 0
    if model.sources:
        width = model.embed_width
        de = dz[offset : offset + width]
        offset += width
        kind = cache["emb"]
        if kind is not None and kind[0] == "pool":
            _, g = L.attentive_pool_backward(de, kind[1])
            for k, v in g.items():
                grads[f"pool.{k}"] = v
        elif kind is not None and kind[0] == "perceiver":
            _, g = perceiver_fuse_backward(de, kind[1])
            for k, v in g.items():
                grads[f"perceiver.{k}"] = v
    if c.use_utterance:
        du = dz[offset : offset + c.hidden_utt]
        offset += c.hidden_utt
        _, g = L.ple_backward(du, cache["utt"])
        grads["ple.W"] = g["W"]
        grads["ple.b"] = g["b"]
    if c.use_word:
        dh = dz[offset : offset + c.hidden_word]
        _, lg = lstm_encode_backward(dh, cache["word"])
        if lg is not None:
            for i, g in enumerate(lg):
                for k, v in g.items():
                    grads[f"lstm.{i}.{k}"] = v
    for k, v in model.params.items():
        if k not in grads:
            grads[k] = np.zeros_like(v)
    return grads

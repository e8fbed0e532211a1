"""Brute-force scalar-loop oracles for the transformer equations.

Everything here works on nested Python lists with math.* scalar calls only,
so it shares no code (and no numpy vectorization) with the production path.
"""
import math


def to_rows(arr):
    return [[float(v) for v in row] for row in arr]


def linear(x, w, b):
    t, d, k = len(x), len(w), len(w[0])
    return [
        [b[kk] + sum(x[tt][dd] * w[dd][kk] for dd in range(d)) for kk in range(k)]
        for tt in range(t)
    ]


def softmax_row(row):
    m = max(row)
    e = [math.exp(v - m) for v in row]
    s = sum(e)
    return [v / s for v in e]


def self_attention(z, wq, bq, wk, bk, wv, bv):
    """softmax(q kT / sqrt(d_h)) v computed with explicit index loops."""
    q = linear(z, wq, bq)
    k = linear(z, wk, bk)
    v = linear(z, wv, bv)
    t = len(z)
    dh = len(q[0])
    scale = 1.0 / math.sqrt(dh)
    out = []
    for i in range(t):
        scores = [scale * sum(q[i][d] * k[j][d] for d in range(dh)) for j in range(t)]
        a = softmax_row(scores)
        out.append([sum(a[j] * v[j][d] for j in range(t)) for d in range(dh)])
    return out


def _column_block(w, start, stop):
    return [row[start:stop] for row in w]


def multi_head_attention(z, wq, bq, wk, bk, wv, bv, w_msa, b_msa, num_heads):
    d = len(z[0])
    dh = d // num_heads
    t = len(z)
    concat = [[] for _ in range(t)]
    for h in range(num_heads):
        lo, hi = h * dh, (h + 1) * dh
        head = self_attention(
            z,
            _column_block(wq, lo, hi), bq[lo:hi],
            _column_block(wk, lo, hi), bk[lo:hi],
            _column_block(wv, lo, hi), bv[lo:hi],
        )
        for i in range(t):
            concat[i].extend(head[i])
    return linear(concat, w_msa, b_msa)


def layer_norm(x, gain, bias, eps=1e-5):
    out = []
    d = len(x[0])
    for row in x:
        mu = sum(row) / d
        var = sum((v - mu) ** 2 for v in row) / d
        inv = 1.0 / math.sqrt(var + eps)
        out.append([gain[j] * (row[j] - mu) * inv + bias[j] for j in range(d)])
    return out


def gelu(v):
    return 0.5 * v * (1.0 + math.erf(v / math.sqrt(2.0)))


def encoder_layer(z, lp, num_heads, activation="gelu"):
    """Pre-norm block with the same parameter bundle as the model layer.

    lp is a dict of plain nested lists keyed like the LayerParams fields.
    """
    h = layer_norm(z, lp["ln1_gain"], lp["ln1_bias"])
    attended = multi_head_attention(
        h, lp["wq"], lp["bq"], lp["wk"], lp["bk"], lp["wv"], lp["bv"],
        lp["w_msa"], lp["b_msa"], num_heads,
    )
    t, d = len(z), len(z[0])
    z1 = [[z[i][j] + attended[i][j] for j in range(d)] for i in range(t)]
    h2 = layer_norm(z1, lp["ln2_gain"], lp["ln2_bias"])
    m = linear(h2, lp["w_mlp_in"], lp["b_mlp_in"])
    act = gelu if activation == "gelu" else lambda v: max(v, 0.0)
    m = [[act(v) for v in row] for row in m]
    m = linear(m, lp["w_mlp_out"], lp["b_mlp_out"])
    return [[z1[i][j] + m[i][j] for j in range(d)] for i in range(t)]


def embed(patches, proj, proj_bias, class_token, pos):
    """[cls; x1 E; ...; xN E] + pos with the class token at row 0."""
    projected = linear(patches, proj, proj_bias)
    d = len(class_token)
    rows = [[class_token[j] + pos[0][j] for j in range(d)]]
    for i, row in enumerate(projected):
        rows.append([row[j] + pos[i + 1][j] for j in range(d)])
    return rows


def layer_params_as_lists(lp):
    """LayerParams tensors -> plain nested lists for the oracle functions."""
    def l1(t):
        return [float(v) for v in t.values]

    def l2(t):
        return to_rows(t.values)

    return {
        "ln1_gain": l1(lp.ln1_gain), "ln1_bias": l1(lp.ln1_bias),
        "wq": l2(lp.wq), "bq": l1(lp.bq),
        "wk": l2(lp.wk), "bk": l1(lp.bk),
        "wv": l2(lp.wv), "bv": l1(lp.bv),
        "w_msa": l2(lp.w_msa), "b_msa": l1(lp.b_msa),
        "ln2_gain": l1(lp.ln2_gain), "ln2_bias": l1(lp.ln2_bias),
        "w_mlp_in": l2(lp.w_mlp_in), "b_mlp_in": l1(lp.b_mlp_in),
        "w_mlp_out": l2(lp.w_mlp_out), "b_mlp_out": l1(lp.b_mlp_out),
    }

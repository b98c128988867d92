#!/usr/bin/env python3
"""Independent golden-file generator for the Rust test suite.

Re-implements the seeded SplitMix64 weight streams, the toy patch encoder,
and the tiny causal transformer in plain Python (no shared code with the
Rust crate), then writes reference outputs under crates/core/tests/golden/.

The encoder forward uses the exact same scalar accumulation order as the
Rust implementation, so its FNV-1a bit checksum must match bitwise. The
transformer golden stores log-probabilities compared at 1e-9, since matrix
multiplies accumulate in library-specific order.

Usage: python3 tools/gen_goldens.py
"""

import json
import math
import os
import struct

MASK = (1 << 64) - 1
OUT_DIR = os.path.join(os.path.dirname(__file__), "..", "crates", "core", "tests", "golden")


class SplitMix64:
    def __init__(self, seed):
        self.state = seed & MASK

    def next_u64(self):
        self.state = (self.state + 0x9E3779B97F4A7C15) & MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
        return (z ^ (z >> 31)) & MASK

    def next_f64(self):
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def uniform(self, scale):
        return (2.0 * self.next_f64() - 1.0) * scale

    def fill_uniform(self, n, scale):
        return [self.uniform(scale) for _ in range(n)]


def fnv1a_f64(values):
    h = 0xCBF29CE484222325
    for v in values:
        for b in struct.pack("<d", v):
            h = ((h ^ b) * 0x100000001B3) & MASK
    return h


def synthetic_image(height, width, seed):
    """H x W x 3 pixels drawn row-major from SplitMix64.next_f64()."""
    rng = SplitMix64(seed)
    return [[[rng.next_f64() for _ in range(3)] for _ in range(width)] for _ in range(height)]


def toy_encoder_forward(patch, h, seed, use_bias, image):
    d = 3 * patch * patch
    scale = 1.0 / math.sqrt(d)
    rng = SplitMix64(seed)
    weight = [rng.fill_uniform(d, scale) for _ in range(h)]  # h rows of length d
    bias = rng.fill_uniform(h, scale) if use_bias else [0.0] * h

    height = len(image)
    width = len(image[0])
    grid_w = width // patch
    k = (height // patch) * grid_w
    out = []
    for row in range(k):
        gy, gx = divmod(row, grid_w)
        flat = []
        for y in range(patch):
            for x in range(patch):
                for c in range(3):
                    flat.append(image[gy * patch + y][gx * patch + x][c])
        for j in range(h):
            acc = bias[j]
            wj = weight[j]
            for a, b in zip(wj, flat):
                acc += a * b
            out.append(acc)
    return out  # row-major k x h


def gen_encoder_golden():
    image = synthetic_image(32, 32, 5)
    out = toy_encoder_forward(8, 16, 7, True, image)
    golden = {
        "patch_size": 8,
        "h": 16,
        "encoder_seed": 7,
        "use_bias": True,
        "image": {"height": 32, "width": 32, "seed": 5},
        "k": 16,
        "checksum": "%016x" % fnv1a_f64(out),
        "first_values": out[:8],
    }
    with open(os.path.join(OUT_DIR, "encoder_golden.json"), "w") as f:
        json.dump(golden, f, indent=2)
    print("encoder checksum", golden["checksum"])


# --- tiny transformer -------------------------------------------------------

GELU_K = math.sqrt(2.0 / math.pi)
GELU_C = 0.044715
LN_EPS = 1e-5


def matvec(m, x):
    return [sum(r[i] * x[i] for i in range(len(x))) for r in m]


def matmul_t(a, b):
    """a (n x k) times b^T where b is (m x k): result n x m."""
    return [[sum(ra[i] * rb[i] for i in range(len(ra))) for rb in b] for ra in a]


def layer_norm(x):
    out = []
    for row in x:
        e = len(row)
        mean = sum(row) / e
        var = sum((v - mean) ** 2 for v in row) / e
        inv = 1.0 / math.sqrt(var + LN_EPS)
        out.append([(v - mean) * inv for v in row])
    return out


def gelu(v):
    return 0.5 * v * (1.0 + math.tanh(GELU_K * (v + GELU_C * v * v * v)))


def tiny_lm_weights(vocab, e, layers, max_pos, seed):
    rng = SplitMix64(seed)
    emb_scale = 0.08
    w_scale = 1.0 / math.sqrt(e)

    def draw(rows, cols, scale):
        return [rng.fill_uniform(cols, scale) for _ in range(rows)]

    wte = draw(vocab, e, emb_scale)
    wpe = draw(max_pos, e, emb_scale)
    blocks = []
    for _ in range(layers):
        blocks.append(
            {
                "wq": draw(e, e, w_scale),
                "wk": draw(e, e, w_scale),
                "wv": draw(e, e, w_scale),
                "wo": draw(e, e, w_scale),
                "w1": draw(4 * e, e, w_scale),
                "w2": draw(e, 4 * e, 1.0 / math.sqrt(4 * e)),
            }
        )
    w_out = draw(vocab, e, w_scale)
    return wte, wpe, blocks, w_out


def tiny_lm_logits(cfg, ids):
    vocab, e, layers, heads, max_pos, seed = cfg
    d = e // heads
    scale = 1.0 / math.sqrt(d)
    wte, wpe, blocks, w_out = tiny_lm_weights(vocab, e, layers, max_pos, seed)

    n = len(ids)
    x = [[wte[t][j] + wpe[i][j] for j in range(e)] for i, t in enumerate(ids)]
    for blk in blocks:
        a = layer_norm(x)
        q = matmul_t(a, blk["wq"])
        k = matmul_t(a, blk["wk"])
        v = matmul_t(a, blk["wv"])
        o = [[0.0] * e for _ in range(n)]
        for h in range(heads):
            lo, hi = h * d, (h + 1) * d
            for i in range(n):
                scores = []
                for j in range(i + 1):
                    scores.append(sum(q[i][c] * k[j][c] for c in range(lo, hi)) * scale)
                mx = max(scores)
                ex = [math.exp(s - mx) for s in scores]
                tot = sum(ex)
                attn = [w / tot for w in ex]
                for j in range(i + 1):
                    for c in range(lo, hi):
                        o[i][c] += attn[j] * v[j][c]
        attn_out = matmul_t(o, blk["wo"])
        x_mid = [[x[i][j] + attn_out[i][j] for j in range(e)] for i in range(n)]
        a2 = layer_norm(x_mid)
        h1 = matmul_t(a2, blk["w1"])
        h2 = [[gelu(v2) for v2 in row] for row in h1]
        mlp = matmul_t(h2, blk["w2"])
        x = [[x_mid[i][j] + mlp[i][j] for j in range(e)] for i in range(n)]
    f = layer_norm(x)
    return matmul_t(f, w_out)


def log_softmax(row):
    mx = max(row)
    lse = mx + math.log(sum(math.exp(v - mx) for v in row))
    return [v - lse for v in row]


def gen_lm_golden():
    cfg = (300, 32, 2, 4, 128, 0)  # vocab, e, layers, heads, max_pos, seed
    ids = [1, 5, 42, 100, 259, 7]
    logits = tiny_lm_logits(cfg, ids)
    lp = log_softmax(logits[-1])
    golden = {
        "config": {
            "vocab_size": cfg[0],
            "embed_dim": cfg[1],
            "n_layers": cfg[2],
            "n_heads": cfg[3],
            "max_positions": cfg[4],
            "seed": cfg[5],
        },
        "token_ids": ids,
        "last_position_logprobs": lp,
    }
    with open(os.path.join(OUT_DIR, "lm_logprobs.json"), "w") as f:
        json.dump(golden, f, indent=2)
    print("lm logprob[0]", lp[0])


# --- few-shot prompt --------------------------------------------------------

TEMPLATE_LINES = [
    "Given descriptions of two images and the edit task, summarize the change between them:",
    "Example 1:",
    "Image 1: An abstract oil painting of a landscape at sunset. A sea and a single tree in the foreground and a hill in the background.",
    "Image 2: An abstract oil painting of a landscape at night. A sea and a single tree in the foreground and a hill in the background.",
    "Edit: Change the time of day from sunset to night.",
    "Summary: Time of day is changed from sunset to night. The sun is removed and there is no more orange and purple colors. Instead, the moon is casting a white light reflected in the sea.",
    "Example 2:",
    "Image 1: One Of The Best Wet Street Scenes In Watercolor I Have Seen",
    "Image 2: One Of The Best Wet Street Scenes In Charcoal I Have Seen",
    "Edit: Change the image style to charcoal drawing",
    "Summary: The style of the image is changed from a watercolor to a charcoal drawing.",
    "Example 3:",
    "Image 1: Woman Eating Spaghetti In Restaurant 5 Photograph by Alfred Eisenstaedt",
    "Image 2: Woman Eating Soup In Restaurant 5 Photograph by Alfred Eisenstaedt",
    "Edit: Substitute the spaghetti with a soup.",
    "Summary: The spaghetti has been replaced by soup.",
]

FIXTURE = {
    "caption_src": "A dog on a beach.",
    "caption_edit": "A cat on a beach.",
    "edit_instruction": "Replace the dog with a cat.",
}


def gen_prompt_golden():
    prompt = "\n".join(TEMPLATE_LINES) + "\n"
    prompt += "Image 1: %s\nImage 2: %s\nEdit: %s\nSummary:" % (
        FIXTURE["caption_src"],
        FIXTURE["caption_edit"],
        FIXTURE["edit_instruction"],
    )
    with open(os.path.join(OUT_DIR, "fewshot_prompt.txt"), "w") as f:
        f.write(prompt)
    print("prompt bytes", len(prompt))


if __name__ == "__main__":
    os.makedirs(OUT_DIR, exist_ok=True)
    gen_encoder_golden()
    gen_lm_golden()
    gen_prompt_golden()

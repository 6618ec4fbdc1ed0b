"""Builds forward-parity fixtures with PyTorch.

For each architecture this writes `<name>.tlxw` (weights bundle),
`<name>.input.tlxe` (one 12-lead record) and `<name>.expected.json` holding
the network output and the activations at the declared taps. Activations are
stored time-major (`d x c`, row-major). Flatten keeps the native
channel-major order (`c * d + t`).

Run from this directory: `python make_fixtures.py`.
"""

import json
import struct

import numpy as np
import torch
from torch import nn

ALIGN = 64
N_LEADS = 12


def conv(name, i, o, k, stride=1, pad=None, bias=True):
    return {"type": "conv1d", "name": name, "in_ch": i, "out_ch": o, "kernel": k,
            "stride": stride, "pad": k // 2 if pad is None else pad, "bias": bias}


def bn(name, ch, eps=1e-5):
    return {"type": "batch_norm", "name": name, "ch": ch, "eps": eps}


def relu(name):
    return {"type": "relu", "name": name}


def pool(name, k, s):
    return {"type": "max_pool", "name": name, "kernel": k, "stride": s}


def block(name, inner, skip, post):
    return {"type": "residual_block", "name": name, "inner": inner, "skip": skip, "post": post}


def flatten():
    return {"type": "flatten", "name": "flatten"}


def dense(i, o):
    return {"type": "dense", "name": "dense", "in_features": i, "out_features": o}


class Block(nn.Module):
    def __init__(self, inner, skip, post):
        super().__init__()
        self.inner = nn.Sequential(*inner)
        self.skip = nn.Sequential(*skip)
        self.post = nn.Sequential(*post)

    def forward(self, x):
        return self.post(self.inner(x) + self.skip(x))


def build(spec, rng, params):
    """Torch module for one layer spec; fills `params` with its tensors."""
    t = spec["type"]
    name = spec["name"]
    if t == "conv1d":
        m = nn.Conv1d(spec["in_ch"], spec["out_ch"], spec["kernel"], spec["stride"], spec["pad"], bias=spec["bias"])
        fan_in = spec["in_ch"] * spec["kernel"]
        w = rng.normal(0, np.sqrt(2.0 / fan_in), m.weight.shape).astype(np.float32)
        m.weight.data = torch.from_numpy(w)
        params[f"{name}.weight"] = w
        if spec["bias"]:
            b = rng.uniform(-0.1, 0.1, m.bias.shape).astype(np.float32)
            m.bias.data = torch.from_numpy(b)
            params[f"{name}.bias"] = b
        return m
    if t == "batch_norm":
        m = nn.BatchNorm1d(spec["ch"], eps=spec["eps"])
        vals = {
            "weight": rng.uniform(0.5, 1.5, spec["ch"]),
            "bias": rng.uniform(-0.2, 0.2, spec["ch"]),
            "running_mean": rng.uniform(-0.3, 0.3, spec["ch"]),
            "running_var": rng.uniform(0.5, 2.0, spec["ch"]),
        }
        for k, v in vals.items():
            v = v.astype(np.float32)
            getattr(m, k).data = torch.from_numpy(v)
            params[f"{name}.{k}"] = v
        return m
    if t == "relu":
        return nn.ReLU()
    if t == "max_pool":
        return nn.MaxPool1d(spec["kernel"], spec["stride"])
    if t == "residual_block":
        def seq(key):
            return [build(s, rng, params) for s in spec[key]]
        return Block(seq("inner"), seq("skip"), seq("post"))
    if t == "flatten":
        return nn.Flatten()
    if t == "dense":
        m = nn.Linear(spec["in_features"], spec["out_features"])
        w = rng.normal(0, np.sqrt(2.0 / spec["in_features"]), m.weight.shape).astype(np.float32)
        b = rng.uniform(-0.1, 0.1, m.bias.shape).astype(np.float32)
        m.weight.data = torch.from_numpy(w)
        m.bias.data = torch.from_numpy(b)
        params["dense.weight"] = w
        params["dense.bias"] = b
        return m
    raise ValueError(f"unsupported layer type {t}")


def walk(specs):
    for s in specs:
        yield s
        if s["type"] == "residual_block":
            for key in ("inner", "skip", "post"):
                yield from walk(s[key])


def param_names(spec):
    n = spec["name"]
    t = spec["type"]
    if t == "conv1d":
        return [f"{n}.weight"] + ([f"{n}.bias"] if spec["bias"] else [])
    if t == "batch_norm":
        return [f"{n}.{p}" for p in ("weight", "bias", "running_mean", "running_var")]
    if t == "dense":
        return [f"{n}.weight", f"{n}.bias"]
    return []


def write_bundle(path, arch, meta, params):
    entries = []
    data = bytearray()
    for spec in walk(arch):
        for name in param_names(spec):
            arr = params[name]
            entries.append({"name": name, "shape": list(arr.shape), "offset": len(data)})
            data += arr.astype("<f4").tobytes()
            data += b"\0" * (-len(data) % ALIGN)
    header = json.dumps({"arch": arch, "meta": meta, "tensors": entries}).encode()
    out = bytearray(b"TLXW" + struct.pack("<II", 1, len(header)) + header)
    out += b"\0" * (-len(out) % ALIGN)
    out += data
    with open(path, "wb") as f:
        f.write(out)


def write_record(path, x, fs, labels):
    length = x.shape[0]
    out = bytearray(b"TLXE" + struct.pack("<IIId", 1, length, N_LEADS, fs))
    out += x.astype("<f4").tobytes()
    out += struct.pack("<II", 0, length)
    out += struct.pack("<B", len(labels)) + bytes(labels)
    out += struct.pack("<B", 0)
    with open(path, "wb") as f:
        f.write(out)


def record(rng, length, fs):
    t = np.arange(length) / fs
    x = np.zeros((length, N_LEADS))
    for beat in np.arange(0.3, t[-1], 0.8):
        qrs = np.exp(-0.5 * ((t - beat) / 0.012) ** 2)
        tw = 0.3 * np.exp(-0.5 * ((t - beat - 0.3) / 0.05) ** 2)
        x += np.outer(qrs + tw, rng.uniform(0.3, 1.2, N_LEADS))
    x += 0.02 * rng.standard_normal(x.shape)
    return x.astype(np.float32)


def maxpool_skip():
    arch = [conv("l0.conv", 12, 4, 5), bn("l0.bn", 4), relu("l0.relu")]
    arch.append(block("block1",
                      [conv("block1.conv1", 4, 6, 5), bn("block1.bn1", 6), relu("block1.relu1"),
                       conv("block1.conv2", 6, 6, 5, stride=2)],
                      [pool("block1.pool", 2, 2), conv("block1.proj", 4, 6, 1, pad=0)],
                      [bn("block1.bn2", 6), relu("block1.relu2")]))
    arch.append(block("block2",
                      [conv("block2.conv1", 6, 6, 5), bn("block2.bn1", 6), relu("block2.relu1"),
                       conv("block2.conv2", 6, 6, 5, stride=2)],
                      [pool("block2.pool", 2, 2)],
                      [bn("block2.bn2", 6), relu("block2.relu2")]))
    arch += [flatten(), dense(6 * 32, 3)]
    return arch, 128, ["l0.relu", "block1", "block2"], "sigmoid"


def identity_skip():
    arch = [conv("stem", 12, 5, 7), relu("stem.relu")]
    arch.append(block("res1",
                      [conv("res1.conv1", 5, 5, 3), bn("res1.bn1", 5), relu("res1.relu1"),
                       conv("res1.conv2", 5, 5, 3)],
                      [],
                      [relu("res1.relu2")]))
    arch.append(pool("pool1", 3, 3))
    arch.append(block("res2",
                      [conv("res2.conv1", 5, 7, 3, stride=2, bias=False), bn("res2.bn1", 7, eps=1e-3)],
                      [pool("res2.pool", 2, 2), conv("res2.proj", 5, 7, 1, pad=0, bias=False)],
                      []))
    arch += [flatten(), dense(7 * 16, 2)]
    return arch, 96, ["res1", "pool1", "res2"], "sigmoid"


def linear_head():
    arch = [conv("l0.conv", 12, 6, 9, stride=2, pad=3), bn("l0.bn", 6, eps=1e-3), relu("l0.relu")]
    arch.append(block("block1",
                      [conv("block1.conv1", 6, 8, 5), bn("block1.bn1", 8), relu("block1.relu1"),
                       conv("block1.conv2", 8, 8, 5, stride=2)],
                      [pool("block1.pool", 2, 2), conv("block1.proj", 6, 8, 1, pad=0)],
                      [bn("block1.bn2", 8), relu("block1.relu2")]))
    arch.append(pool("gpool", 40, 40))
    arch += [flatten(), dense(8, 1)]
    return arch, 161, ["l0.conv", "block1", "gpool"], "linear"


def main():
    torch.set_grad_enabled(False)
    for seed, (name, make) in enumerate((("maxpool_skip", maxpool_skip),
                                         ("identity_skip", identity_skip),
                                         ("linear_head", linear_head))):
        rng = np.random.default_rng(seed)
        arch, length, taps, head = make()
        params = {}
        layers = [build(s, rng, params) for s in arch]
        for m in layers:
            m.eval()
        fs = 250.0
        x = record(rng, length, fs)
        h = torch.from_numpy(x.T.copy()).unsqueeze(0)
        acts = []
        for spec, m in zip(arch, layers):
            h = m(h)
            if spec["name"] in taps:
                a = h[0].transpose(0, 1).contiguous()
                acts.append({"name": spec["name"], "d": a.shape[0], "c": a.shape[1],
                             "data": [float(v) for v in a.reshape(-1).tolist()]})
        logits = h[0]
        out = torch.sigmoid(logits) if head == "sigmoid" else logits
        meta = {"input_length": length, "input_channels": N_LEADS, "tap_names": taps, "head": head}
        write_bundle(f"{name}.tlxw", arch, meta, params)
        write_record(f"{name}.input.tlxe", x, fs, [1, 0, 1][: logits.shape[0]])
        with open(f"{name}.expected.json", "w") as f:
            json.dump({"output": out.tolist(), "logits": logits.tolist(), "taps": acts}, f)
        print(f"{name}: L={length} taps={[(a['name'], a['d'], a['c']) for a in acts]} out={out.tolist()}")


if __name__ == "__main__":
    main()

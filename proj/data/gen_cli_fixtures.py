# Copyright 2026 The kdisagg Authors
# SPDX-License-Identifier: Apache-2.0
"""Writes GPU catalogs, links, kernels, traces and profiles under data/."""
import json
import os

HERE = os.path.dirname(os.path.abspath(__file__))

CATALOG = [
    {"id": "a100", "name": "A100", "hbm_gbs": 1935, "price": 1.5, "memory_gb": 80},
    {"id": "h100", "name": "H100", "hbm_gbs": 3350, "price": 2.9, "memory_gb": 80},
    {"id": "b200", "name": "B200", "hbm_gbs": 8000, "price": 5.0, "memory_gb": 192},
    {"id": "l40s", "name": "L40s", "hbm_gbs": 864, "price": 1.0, "memory_gb": 48},
    {"id": "rtx6000", "name": "RTX Pro 6000", "hbm_gbs": 1597, "price": 1.2, "memory_gb": 96},
]

COPY = """.visible .entry copy(
    .param .u64 src,
    .param .u64 dst
)
{
    .reg .b32 %r<2>;
    .reg .b64 %rd<6>;
    .reg .f32 %f<5>;
    ld.param.u64 %rd1, [src];
    ld.param.u64 %rd2, [dst];
    ld.global.v4.f32 {%f1, %f2, %f3, %f4}, [%rd1];
    st.global.f32 [%rd2], %f1;
    ret;
}
"""


def dump(path, obj):
    full = os.path.join(HERE, path)
    os.makedirs(os.path.dirname(full), exist_ok=True)
    with open(full, "w") as f:
        json.dump(obj, f, indent=1)
        f.write("\n")


def write_lines(path, records):
    full = os.path.join(HERE, path)
    os.makedirs(os.path.dirname(full), exist_ok=True)
    with open(full, "w") as f:
        for r in records:
            f.write(json.dumps(r, separators=(",", ":")) + "\n")


def gpus(ids):
    return {"format": "kdisagg.gpus", "version": 1,
            "gpus": [g for g in CATALOG if g["id"] in ids]}


def header(pattern):
    return [{"magic": "KDTRACE", "version": 1, "pattern": pattern},
            {"rec": "kernel", "name": "copy", "path": "../kernels/copy.kir"}]


def alloc(buf, base, size, init=False):
    r = {"rec": "alloc", "buffer": buf, "base": base, "size": size}
    if init:
        r["init"] = True
    return r


def copy(src, dst, src_base, dst_base, nbytes, read_base=None):
    rb = src_base if read_base is None else read_base
    return {"rec": "launch", "kind": "opaque", "kernel": "copy", "args": [src, dst],
            "intervals": {"2": [rb, rb + nbytes - 16], "3": [dst_base, dst_base + nbytes - 4]}}


def sgemm(a, b, c, m, n, k):
    return {"rec": "launch", "kind": "library", "kernel": "sgemm", "args": [a, b, c],
            "signature": {"m": m, "n": n, "k": k}}


def regular():
    # decode step: norm, up projection, activation, down projection, feedback copy
    base = {"x": 0x10000, "h": 0x20000, "w1": 0x30000, "a": 0x50000, "w2": 0x70000, "y": 0x90000}
    recs = header("decode_step") + [
        alloc("x", base["x"], 16384, True), alloc("h", base["h"], 16384),
        alloc("w1", base["w1"], 65536, True), alloc("a", base["a"], 65536),
        alloc("w2", base["w2"], 65536, True), alloc("y", base["y"], 16384)]
    for it in range(2):
        recs += [{"rec": "iteration", "index": it},
                 copy("x", "h", base["x"], base["h"], 16384),
                 sgemm("h", "w1", "a", 64, 256, 64),
                 copy("a", "a", base["a"], base["a"], 65536),
                 sgemm("a", "w2", "y", 64, 64, 256),
                 {"rec": "launch", "kind": "memcopy", "src": "y", "dst": "x", "bytes": 16384}]
    write_lines("traces/regular.trace.jsonl", recs)


def indirect():
    # embedding gather: the table is reached through the index buffer
    recs = header("gather") + [
        alloc("table", 0x100000, 1 << 20, True), alloc("idx", 0x300000, 4096, True),
        alloc("emb", 0x400000, 65536), alloc("w", 0x500000, 65536, True),
        alloc("out", 0x600000, 65536),
        copy("idx", "emb", 0x300000, 0x400000, 65536, read_base=0x140000),
        sgemm("emb", "w", "out", 64, 256, 64)]
    write_lines("traces/indirect.trace.jsonl", recs)


def collective():
    # tensor-parallel block whose all-reduce must stay on the NIC-attached GPU
    recs = header("tp_block") + [
        alloc("x", 0x10000, 16384, True), alloc("w", 0x20000, 65536, True),
        alloc("p", 0x40000, 65536), alloc("r", 0x60000, 65536),
        alloc("w2", 0x80000, 65536, True), alloc("y", 0xa0000, 16384),
        sgemm("x", "w", "p", 64, 256, 64),
        {"rec": "launch", "kind": "library", "kernel": "allreduce", "args": ["p", "r"],
         "reads": [{"buffer": "p", "bytes": 65536}], "writes": [{"buffer": "r", "bytes": 65536}],
         "pin": {"reason": "collective", "gpu": 1}},
        copy("r", "r", 0x60000, 0x60000, 65536),
        sgemm("r", "w2", "y", 64, 64, 256)]
    write_lines("traces/collective.trace.jsonl", recs)


# seconds per kernel on each GPU
PROFILE = {
    "copy": {"a100": 30e-6, "h100": 20e-6, "b200": 12e-6, "l40s": 28e-6, "rtx6000": 24e-6},
    "sgemm": {"a100": 160e-6, "h100": 90e-6, "b200": 45e-6, "l40s": 360e-6, "rtx6000": 220e-6},
    "memcpy": {"a100": 9e-6, "h100": 6e-6, "b200": 4e-6, "l40s": 14e-6, "rtx6000": 11e-6},
    "allreduce": {"a100": 60e-6, "h100": 50e-6, "b200": 40e-6, "l40s": 80e-6, "rtx6000": 70e-6},
}


def profile(ids):
    return {"format": "kdisagg.profile", "version": 1,
            "kernels": {k: {g: v[g] for g in ids} for k, v in PROFILE.items()}}


def main():
    os.makedirs(os.path.join(HERE, "kernels"), exist_ok=True)
    with open(os.path.join(HERE, "kernels/copy.kir"), "w") as f:
        f.write(COPY)
    pair = ["h100", "l40s"]
    dump("gpus/catalog.json", gpus([g["id"] for g in CATALOG]))
    dump("gpus/pair.json", gpus(pair))
    dump("links/nvlink200.json", {"format": "kdisagg.links", "version": 1,
                                  "default": {"bw_gbs": 25, "latency_us": 5}})
    dump("profiles/pair.profile.json", profile(pair))
    dump("profiles/catalog.profile.json", profile([g["id"] for g in CATALOG]))
    regular()
    indirect()
    collective()


if __name__ == "__main__":
    main()

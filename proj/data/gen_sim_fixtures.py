# Copyright 2026 The kdisagg Authors
# SPDX-License-Identifier: Apache-2.0
"""Writes the simulation and monitor fixtures under data/sim and data/monitor."""
import json
import os
import random

HERE = os.path.dirname(os.path.abspath(__file__))
BW, ELL = 25e9, 5e-6
GPUS = [{"id": "g0", "name": "H100"}, {"id": "g1", "name": "L40s"}]


def dump(path, obj):
    with open(os.path.join(HERE, path), "w") as f:
        json.dump(obj, f, indent=1)
        f.write("\n")


def transfer_bytes(seconds):
    return int(round((seconds - ELL) * BW))


def chain(name, rows, xfer_s):
    edges = [{"src": k, "dst": k + 1, "bytes": transfer_bytes(x) if x > 0 else 4096}
             for k, x in enumerate(xfer_s)]
    return {
        "format": "kdisagg.problem", "version": 1, "objective": "throughput",
        "gpus": GPUS,
        "bw": [[0, BW], [BW, 0]], "ell": [[0, ELL], [ELL, 0]],
        "kernels": [f"{name}{k}" for k in range(len(rows))],
        "t": rows, "edges": edges, "pins": [None] * len(rows),
    }


def placement(pattern, objective, assign, kernels):
    return {
        "format": "kdisagg.placement", "version": 1, "pattern": pattern,
        "objective": objective, "solver": "fixture", "optimal": False,
        "assign": [{"node": k, "kernel": kernels[k], "gpu": GPUS[g]["id"]}
                   for k, g in enumerate(assign)],
    }


def same(ms, n=2):
    return [ms * 1e-3] * n


# Balanced: T_g = M_g = 4 ms on both GPUs.
bal = chain("b", [same(1)] * 8, [0, 2e-3, 0, 4e-3, 0, 2e-3, 0])
bal_assign = [0, 0, 1, 1, 0, 0, 1, 1]
dump("sim/balanced.problem.json", bal)
dump("sim/balanced.placement.json", placement("balanced", "throughput", bal_assign, bal["kernels"]))
dump("sim/balanced.workload.json", {
    "format": "kdisagg.workload", "version": 1, "kind": "closed", "inflight": 16,
    "mix": ["balanced"], "tokens_per_request": 1, "warmup_s": 0.2, "measure_s": 20})

# Phase-aligned: G0 3 x 0.5 ms, 1 ms to G1, G1 2 x 1.5 ms, 1 ms back, G0 1.5 ms.
ph = chain("p", [same(0.5)] * 3 + [same(1.5)] * 3, [0, 0, 1e-3, 0, 1e-3])
ph_assign = [0, 0, 0, 1, 1, 0]
dump("sim/phase_aligned.problem.json", ph)
dump("sim/phase_aligned.placement.json",
     placement("phase_aligned", "throughput", ph_assign, ph["kernels"]))
dump("sim/phase_aligned.workload.json", {
    "format": "kdisagg.workload", "version": 1, "kind": "closed", "inflight": 3,
    "mix": ["phase_aligned"], "tokens_per_request": 1, "warmup_s": 0.5, "measure_s": 10})

# Serving: a light 1 ms head kernel, then five kernels that run 1 ms on g0
# and 5 ms on g1. Latency optimum keeps all on g0, throughput optimum moves
# the head to g1.
serve = chain("s", [same(1)] + [[1e-3, 5e-3]] * 5, [0.2e-3] * 5)
dump("monitor/serve.problem.json", serve)
dump("monitor/serve.latency.placement.json",
     placement("serve", "latency", [0] * 6, serve["kernels"]))
dump("monitor/serve.throughput.placement.json",
     placement("serve", "throughput", [1, 0, 0, 0, 0, 0], serve["kernels"]))
dump("monitor/monitor.json", {"format": "kdisagg.monitor", "version": 1, "window_s": 0.3,
                              "beta": 1.5, "stall_s": 0.03, "initial": "latency"})


def workload(segments, periodic):
    return [{"duration_s": d, "rate": r, "process": "periodic" if periodic else "poisson"}
            for d, r in segments]


dump("monitor/light.workload.json", {
    "format": "kdisagg.workload", "version": 1, "kind": "open", "inflight": 8,
    "pattern": "serve", "segments": workload([(6, 20)], True)})
dump("monitor/step.workload.json", {
    "format": "kdisagg.workload", "version": 1, "kind": "open", "inflight": 8,
    "pattern": "serve", "segments": workload([(3, 20), (1, 300), (4, 20)], True)})

# Noisy: rate flips between 20 and 60 requests/s over 0.1-0.5 s stretches.
rng = random.Random(2026)
arrivals, t = [], 0.0
while t < 12:
    d = rng.uniform(0.1, 0.5)
    rate = rng.choice([20, 60])
    s = t + rng.expovariate(rate)
    while s < t + d:
        arrivals.append({"t": round(s, 9), "pattern": "serve"})
        s += rng.expovariate(rate)
    t += d
dump("monitor/noisy.workload.json", {
    "format": "kdisagg.workload", "version": 1, "kind": "open", "inflight": 8,
    "arrivals": arrivals})

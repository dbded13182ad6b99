"""Command-line driver: circuit JSON in, tensors and a run report out.

Exit codes: 0 on success, 2 for invalid input, 3 when a schedule violates one
of its own invariants.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np

from fockwalk import bench as benchmod
from fockwalk.conditional import run_conditional
from fockwalk.gaussian_core import (
    GlobalPhotons,
    Representation,
    ValidationError,
    build_complex_state,
    cutoff_bounds,
    load_spec,
    to_density_params,
    to_statevector_params,
)
from fockwalk.gbs import run_gbs, run_gbs_global_cutoff
from fockwalk.lattice import BYTES_PER_COMPLEX, GlobalWeight, ProbabilityMass, SchedulerError
from fockwalk.tensor_io import write_json_tensor, write_tensor
from fockwalk.vanilla import fill_full

EXIT_OK, EXIT_INVALID, EXIT_INVARIANT = 0, 2, 3


class _Phases:
    def __init__(self):
        self.times: dict[str, float] = {}

    def run(self, name, fn):
        t0 = time.perf_counter()
        out = fn()
        self.times[name] = round(time.perf_counter() - t0, 6)
        return out


def _digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _emit(out: Path, name: str, array, convention: str, meta: dict, as_json: bool) -> list[str]:
    paths = [write_tensor(out / f"{name}.bin", array, convention, meta).name]
    if as_json:
        paths.append(write_json_tensor(out / f"{name}.json", array, convention, meta).name)
    return paths


def _report(out: Path, command: str, spec_path, phases: _Phases, counters: dict, outputs: list[str], **extra):
    report = {
        "command": command,
        "input_digest": _digest(spec_path),
        "wall_time_s": phases.times,
        **counters,
        "outputs": outputs,
        **extra,
    }
    (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True))
    return report


def cmd_statevec(args) -> int:
    phases = _Phases()
    spec = phases.run("load", lambda: load_spec(args.spec))
    if not spec.is_lossless:
        raise ValidationError("the circuit is lossy; its state is mixed, use `gbs` or `conditional`")
    params = phases.run("parameters", lambda: to_statevector_params(build_complex_state(spec)))
    bounds = cutoff_bounds(spec, Representation.STATE_VECTOR)
    if args.global_cutoff is not None:
        bounds = GlobalWeight(args.global_cutoff)
    if args.prob_mass is not None:
        bounds = ProbabilityMass(args.prob_mass)
    fill = phases.run("walk", lambda: fill_full(params, bounds, threads=args.threads))
    counters = {"pivots_applied": fill.pivots, "amplitudes_written": fill.written,
                "peak_buffer_bytes": fill.written * BYTES_PER_COMPLEX}
    meta = dict(counters, stop_photons=fill.stop_photons)
    outputs = _emit(args.out, "statevec", fill.tensor, "psi[k_1, ..., k_M] = <k|psi>", meta, args.json)
    _report(args.out, "statevec", args.spec, phases, counters, outputs, modes=spec.modes,
            cutoffs=list(fill.tensor.shape), stop_photons=fill.stop_photons)
    return EXIT_OK


def cmd_gbs(args) -> int:
    phases = _Phases()
    spec = phases.run("load", lambda: load_spec(args.spec))
    if set(spec.detected_modes) != set(range(1, spec.modes + 1)):
        raise ValidationError("`gbs` needs every mode detected; use `conditional` otherwise")
    params = phases.run("parameters", lambda: to_density_params(build_complex_state(spec)))
    n_max = args.global_cutoff
    if n_max is None and isinstance(spec.cutoff_mode, GlobalPhotons):
        n_max = spec.cutoff_mode.n_max
    if args.prob_mass is not None or isinstance(spec.cutoff_mode, ProbabilityMass):
        raise ValidationError("probability-mass stopping applies to `statevec` only")
    if n_max is not None:
        _, res = phases.run("walk", lambda: run_gbs_global_cutoff(
            params, n_max, buffered=args.buffered, threads=args.threads))
        cutoffs, extra = [n_max] * spec.modes, {"global_cutoff": n_max}
    else:
        res = phases.run("walk", lambda: run_gbs(
            params, spec.cutoffs, buffered=args.buffered, threads=args.threads))
        cutoffs, extra = list(spec.cutoffs), {}
    counters = {
        "pivots_applied": res.pivots_applied,
        "amplitudes_written": dict(res.written),
        "peak_buffer_bytes": res.peak_buffer_bytes,
        "final_offdiag": res.final_offdiag,
        "buffered": args.buffered,
    }
    outputs = _emit(args.out, "probabilities", res.probabilities, "p[n_1, ..., n_M]", counters, args.json)
    _report(args.out, "gbs", args.spec, phases, counters, outputs, modes=spec.modes, cutoffs=cutoffs, **extra)
    return EXIT_OK


def cmd_conditional(args) -> int:
    phases = _Phases()
    spec = phases.run("load", lambda: load_spec(args.spec))
    params = phases.run("parameters", lambda: to_density_params(build_complex_state(spec)))
    batch = phases.run("walk", lambda: run_conditional(params, spec.cutoffs, spec.undetected_modes))
    probs = batch.probabilities()
    per_block = int(np.prod(batch.blocks.shape[len(batch.detected_cutoffs):]))
    index = [
        {"pattern": list(p), "trace": float(probs[p]), "offset": i * per_block}
        for i, p in enumerate(np.ndindex(*batch.detected_cutoffs))
    ]
    counters = {
        "pivots_applied": batch.fine_pivots,
        "coarse_pivots": batch.coarse_pivots,
        "amplitudes_written": {k: v * batch.block_size for k, v in batch.written_blocks.items()},
        "peak_buffer_bytes": batch.peak_buffer_bytes,
    }
    convention = (
        "G[detected n..., m_u1, n_u1, ...] = <m| rho_n |n> over undetected modes "
        f"{list(batch.undetected_modes)} given detected modes {list(batch.detected_modes)}"
    )
    outputs = _emit(args.out, "blocks", batch.blocks, convention, counters, args.json)
    (args.out / "index.json").write_text(json.dumps(index, indent=1))
    outputs.append("index.json")
    _report(args.out, "conditional", args.spec, phases, counters, outputs, modes=spec.modes,
            cutoffs=list(spec.cutoffs), undetected_modes=list(batch.undetected_modes))
    return EXIT_OK


def cmd_bench(args) -> int:
    t0 = time.perf_counter()
    rows = benchmod.run_bench(args.modes, args.cutoffs, args.strategies, budget=args.budget)
    outputs = [benchmod.write_csv(rows, args.out / "bench.csv").name]
    outputs += [p.name for p in benchmod.write_dat(rows, args.out)]
    slopes = benchmod.fit_slopes(rows)
    if args.buffer_curve:
        res = benchmod.buffer_curve(args.modes, max(args.cutoffs))
        outputs.append(benchmod.write_buffer_curve(res, args.out / "buffer.csv").name)
    report = {"command": "bench", "modes": args.modes, "cutoffs": list(args.cutoffs),
              "slopes": slopes, "outputs": outputs,
              "wall_time_s": {"total": round(time.perf_counter() - t0, 6)}}
    (args.out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True))
    for name, slope in slopes.items():
        print(f"{name:12s} slope {slope:.3f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", type=Path, default=Path("."), help="output directory")
    common.add_argument("--threads", type=int, default=1, help="worker threads per weight class")
    common.add_argument("--json", action="store_true", help="also write plain JSON tensors")

    parser = argparse.ArgumentParser(prog="fockwalk", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("statevec", parents=[common], help="full state-vector walk of a lossless circuit")
    p.add_argument("spec", type=Path)
    p.add_argument("--global-cutoff", type=int, help="bound on the total photon number")
    p.add_argument("--prob-mass", type=float, help="stop once this much probability is covered")
    p.set_defaults(func=cmd_statevec)

    p = sub.add_parser("gbs", parents=[common], help="detection probabilities, all modes detected")
    p.add_argument("spec", type=Path)
    p.add_argument("--buffered", action="store_true", help="evict off-diagonal amplitudes after use")
    p.add_argument("--global-cutoff", type=int, help="patterns with fewer than N photons in total")
    p.add_argument("--prob-mass", type=float, help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_gbs)

    p = sub.add_parser("conditional", parents=[common], help="conditional states of undetected modes")
    p.add_argument("spec", type=Path)
    p.set_defaults(func=cmd_conditional)

    p = sub.add_parser("bench", parents=[common], help="scaling benchmark as CSV")
    p.add_argument("--modes", "-M", type=int, default=4)
    p.add_argument("--cutoffs", "-C", type=int, nargs="+", default=[4, 6, 8, 10, 12])
    p.add_argument("--strategies", nargs="+", default=list(benchmod.STRATEGIES),
                   choices=benchmod.STRATEGIES)
    p.add_argument("--budget", type=int, default=benchmod.DEFAULT_BUDGET,
                   help="largest naive density-matrix lattice actually executed")
    p.add_argument("--buffer-curve", action="store_true",
                   help="also write stored cells per pivot for the largest cutoff")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_INVALID
    try:
        args.out.mkdir(parents=True, exist_ok=True)
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except SchedulerError as exc:
        print(f"internal invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())

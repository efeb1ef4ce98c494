"""Standard gate set: targets, optimiser settings and shipped pulses.

Pulses live in ``edbosonic/data/pulses`` as pulse files plus a JSON record of
how they were made. ``build`` regenerates any of them.
"""
from __future__ import annotations

import json
import logging
import os
from dataclasses import asdict, dataclass
from pathlib import Path

from . import grape as gr
from .codes import BinomialCode
from .fockspace import HilbertDims
from .model import MHZ, US, ControlPulse, SystemParams, device_params, read_pulse, write_pulse

log = logging.getLogger(__name__)

DATA_DIR = Path(__file__).parent / "data" / "pulses"

# closed-system settings used for the shipped pulses
GATE_CONFIG = gr.OptimizerConfig(
    method="lbfgs", threshold=0.99999, max_iterations=3000, init_scale=0.2,
    guard_levels=4, leakage_weight=1.0, n_segments=500,
)
GE_AMP_MAX = (5 * MHZ, 5 * MHZ, 10 * MHZ, 10 * MHZ)

# no-jump times (t_w + t_PM) * N_PM for the two cycle lengths 0.046/kappa and 0.081/kappa
DEFAULT_TAUS_US = (90.0, 160.0)
HOMOTOPY = (1.5, 0.8, 0.4, 0.2, 0.1)
HOMOTOPY_ITERATIONS = 600


@dataclass(frozen=True)
class GateSpec:
    name: str
    kind: str
    ancilla_mode: str = "gf"
    tau_us: float = 0.0
    seed: int = 0
    # library pulse used as the starting point; the recovery target is close to
    # the identity and a small random start settles on do-nothing pulses
    warm_start: str | None = None
    # recovery only: kappa*tau values solved in turn before the real one, each
    # seeding the next (continuation from a strongly distorted target)
    homotopy: tuple[float, ...] = ()


def _specs() -> dict[str, GateSpec]:
    out = [GateSpec("H", "H"), GateSpec("T", "T"), GateSpec("Encode", "Encode"),
           GateSpec("Decode", "Decode"), GateSpec("ParityMap", "ParityMap"),
           GateSpec("QEC_error", "QEC_error"),
           GateSpec("ParityMap_ge", "ParityMap", "ge")]
    for tau in DEFAULT_TAUS_US:
        out.append(GateSpec(f"QEC_code_{tau:g}us", "QEC_code", tau_us=tau, warm_start="H"))
        # no g-e pulse is a useful seed for the g-e recovery, so walk in from a
        # large distortion where the do-nothing pulse scores poorly
        out.append(GateSpec(f"QEC_code_{tau:g}us_ge", "QEC_code", "ge", tau_us=tau,
                            homotopy=HOMOTOPY))
    return {s.name: s for s in out}


SPECS = _specs()
TABLE_ORDER = ("H", "T", "Encode", "Decode", "ParityMap", "QEC_code_90us", "QEC_error")


def target_for(spec: GateSpec, dims: HilbertDims, params: SystemParams) -> gr.TargetIsometry:
    code = BinomialCode()
    if spec.kind == "H":
        return gr.hadamard_target(dims)
    if spec.kind == "T":
        return gr.t_target(dims)
    if spec.kind == "Encode":
        return gr.encode_target(dims, code)
    if spec.kind == "Decode":
        return gr.decode_target(dims, code)
    if spec.kind == "ParityMap":
        return gr.parity_target(dims, ancilla_mode=spec.ancilla_mode)
    if spec.kind == "QEC_code":
        return gr.recovery_code_target(dims, params.kappa * spec.tau_us * US, code)
    if spec.kind == "QEC_error":
        return gr.recovery_error_target(dims, code)
    raise KeyError(spec.kind)


def config_for(spec: GateSpec, base: gr.OptimizerConfig = GATE_CONFIG) -> gr.OptimizerConfig:
    cfg = gr.with_config(base, seed=spec.seed)
    if spec.ancilla_mode == "ge":
        cfg = gr.with_config(cfg, amp_max=GE_AMP_MAX)
    return cfg


def pulse_path(name: str, directory: Path | None = None) -> Path:
    return (directory or DATA_DIR) / f"{name}.pulse"


def available(directory: Path | None = None) -> list[str]:
    d = directory or DATA_DIR
    return sorted(p.stem for p in d.glob("*.pulse")) if d.exists() else []


def load(name: str, directory: Path | None = None) -> ControlPulse:
    path = pulse_path(name, directory)
    if not path.exists():
        raise FileNotFoundError(f"no pulse named {name!r} in {path.parent}")
    return read_pulse(path)


def record(name: str, directory: Path | None = None) -> dict:
    path = pulse_path(name, directory).with_suffix(".json")
    return json.loads(path.read_text()) if path.exists() else {}


def build(name: str, params: SystemParams | None = None, dims: HilbertDims | None = None,
          directory: Path | None = None, base: gr.OptimizerConfig = GATE_CONFIG,
          initial: ControlPulse | None = None) -> gr.OptimizationResult:
    """Optimise one standard pulse and write it (with its record) to ``directory``."""
    params = params or device_params()
    dims = dims or HilbertDims()
    spec = SPECS[name]
    target = target_for(spec, dims, params)
    cfg = config_for(spec, base)
    start = "refined" if initial is not None else "random"
    if initial is None and spec.warm_start:
        initial = get(spec.warm_start, params, dims, directory)
        start = spec.warm_start
    if initial is None and spec.homotopy:
        stage_cfg = gr.with_config(cfg, max_iterations=HOMOTOPY_ITERATIONS)
        for kt in spec.homotopy:
            stage = gr.recovery_code_target(dims, kt)
            initial = gr.optimize(stage, stage_cfg, params, dims, spec.ancilla_mode,
                                  initial=initial).pulse
            log.info("%s: homotopy stage kappa*tau=%g done", name, kt)
        start = "homotopy " + ",".join(f"{k:g}" for k in spec.homotopy)
    res = gr.optimize(target, cfg, params, dims, spec.ancilla_mode, initial=initial)
    directory = directory or DATA_DIR
    directory.mkdir(parents=True, exist_ok=True)
    write_pulse(res.pulse, pulse_path(name, directory))
    meta = {"name": name, "spec": asdict(spec), "fidelity": res.fidelity,
            "converged": res.converged, "iterations": len(res.log) - 1,
            "seconds": res.seconds, "params_hash": params.digest(),
            "cavity_dim": dims.cavity_dim, "initial": start,
            "config": {k: (list(v) if isinstance(v, tuple) else v)
                       for k, v in asdict(cfg).items()}}
    pulse_path(name, directory).with_suffix(".json").write_text(json.dumps(meta, indent=2))
    return res


def get(name: str, params: SystemParams | None = None, dims: HilbertDims | None = None,
        directory: Path | None = None) -> ControlPulse:
    """Shipped pulse, or a fresh optimisation when EDB_REOPTIMIZE=1 or none exists."""
    if os.environ.get("EDB_REOPTIMIZE") == "1" or name not in available(directory):
        return build(name, params, dims, directory).pulse
    return load(name, directory)


def main(argv=None):
    import argparse
    ap = argparse.ArgumentParser(description="regenerate the shipped pulse library")
    ap.add_argument("names", nargs="*", default=list(SPECS))
    ap.add_argument("--out", type=Path, default=DATA_DIR)
    ap.add_argument("--refine", action="store_true",
                    help="start from the pulse already in --out instead of a fresh guess")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    for name in args.names:
        initial = None
        if args.refine and name in available(args.out):
            initial = load(name, args.out)
        res = build(name, directory=args.out, initial=initial)
        print(f"{name}: Phi={res.fidelity:.6f} converged={res.converged} "
              f"iters={len(res.log) - 1} {res.seconds:.0f}s", flush=True)


if __name__ == "__main__":
    main()

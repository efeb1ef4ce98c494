"""Look inside the shipped logical Hadamard.

Summarises the control waveform channel by channel, then builds the
post-selected logical process and prints its Pauli transfer matrix and
the deviation from the ideal Hadamard PTM. With --plot the waveform is
written to demos/out/hadamard.png (needs matplotlib).

    python demos/hadamard_pulse.py [--plot]
"""
import argparse
from pathlib import Path

import numpy as np

from edbosonic import dynamics as dyn, grape as gr, library as lib
from edbosonic.fockspace import HilbertDims
from edbosonic.model import MHZ, control_system, default_collapse_set, device_params

HAD = np.array([[1, 1], [1, -1]]) / np.sqrt(2)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--plot", action="store_true")
    args = ap.parse_args()
    params, dims = device_params(), HilbertDims()
    pulse = lib.load("H")
    t = np.arange(pulse.amplitudes.shape[0]) * pulse.dt
    print(f"H pulse: {len(t)} segments of {pulse.dt * 1e9:g} ns")
    for name, amp in zip(pulse.channels, pulse.amplitudes.T):
        print(f"  {name:<10} peak {np.abs(amp).max() / MHZ:6.2f} MHz  "
              f"rms {np.sqrt(np.mean(amp ** 2)) / MHZ:6.2f} MHz")

    frame = gr.code_frame(dims)
    sys_ = control_system(params, dims)
    ch = dyn.channel_from_pulse(pulse, sys_, default_collapse_set(params, dims), frame,
                                dyn.DISCARD_E, dims)
    ptm = dyn.ptm_of(ch, frame, renormalize=True)
    ideal = dyn.ptm_from_unitary(HAD)
    np.set_printoptions(precision=4, suppress=True)
    print("\npost-selected PTM (I, X, Y, Z):")
    print(ptm)
    print("deviation from the ideal Hadamard:")
    print(ptm - ideal)
    print(f"process fidelity {dyn.process_fidelity(ptm, ideal):.5f}, "
          f"P_succ {dyn.success_probability(ch):.3f}")

    if args.plot:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
        fig, ax = plt.subplots(len(pulse.channels), 1, sharex=True, figsize=(7, 6))
        for a, name, amp in zip(ax, pulse.channels, pulse.amplitudes.T):
            a.plot(t * 1e6, amp / MHZ, lw=0.8)
            a.set_ylabel(f"{name}\n(MHz)")
        ax[-1].set_xlabel("time (us)")
        out = Path(__file__).parent / "out"
        out.mkdir(exist_ok=True)
        fig.savefig(out / "hadamard.png", dpi=120, bbox_inches="tight")
        print(f"wrote {out / 'hadamard.png'}")


if __name__ == "__main__":
    main()

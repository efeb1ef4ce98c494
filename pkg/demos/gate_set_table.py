"""Open-system fidelities of the shipped gate set.

Each library pulse is run through the full Lindblad model (cavity loss,
e and f decay of the ancilla) and compared with its target, once keeping
every ancilla outcome and once discarding runs that end with the ancilla
in e. The parity map is scored separately on code words and error words.

    python demos/gate_set_table.py
"""
from edbosonic import grape as gr, library as lib
from edbosonic.fockspace import HilbertDims
from edbosonic.model import device_params

ROWS = ("H", "T", "Encode", "Decode", "ParityMap", "QEC_code_90us", "QEC_error")


def rows(params, dims):
    for name in ROWS:
        spec = lib.SPECS[name]
        pulse = lib.load(name)
        if spec.kind == "ParityMap":
            # the flag outcome carries the information here, so only the
            # post-selected number is meaningful
            for sub in gr.parity_rows_targets(dims):
                yield gr.evaluate_open(pulse, sub, params, dims=dims, with_unselected=False)
        else:
            target = lib.target_for(spec, dims, params)
            yield gr.evaluate_open(pulse, target, params, dims=dims, name=name)


def main():
    params, dims = device_params(), HilbertDims()
    print(f"{'operation':<16}{'w/o PS %':>10}{'w/ PS %':>10}{'P_succ':>8}   closed Phi")
    for r in rows(params, dims):
        name, wo, w, p = r.as_percent()
        key = {"Parity (code)": "ParityMap", "Parity (error)": "ParityMap"}.get(name, name)
        phi = lib.record(key).get("fidelity", float("nan"))
        wo_s = f"{wo:10.2f}" if wo is not None else f"{'-':>10}"
        print(f"{name:<16}{wo_s}{w:10.2f}{p:8.3f}   {phi:.6f}")


if __name__ == "__main__":
    main()

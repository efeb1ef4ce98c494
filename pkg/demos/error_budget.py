"""Closed-form gain budget and the ancilla-lifetime crossover.

Prints the per-step error terms for the standard ED-AB schedule, the
critical ancilla lifetime where error detection starts to pay off, and the
gain against ancilla lifetime for the g-f (AB) and g-e (B) ancilla.

    python demos/error_budget.py
"""
import numpy as np

from edbosonic import budget as bd


def main():
    p = bd.BudgetParams()
    terms = bd.budget_terms(p)
    print(f"schedule: N_PM={p.N_PM}, t_w={p.t_w:g} us, t_PM={p.t_PM:g} us, "
          f"t_QEC={p.t_QEC:g} us -> t_int={p.t_int:g} us")
    for k, v in terms.items():
        print(f"  {k:<6} {v:.3e}")
    print(f"G (AB) = {bd.gain_budget(p):.3f}   G (B) = {bd.gain_budget(p, 'B'):.3f}")
    best = bd.maximize_gain(p)
    print(f"best schedule on the grid: N_PM={best.N_PM}, t_w={best.params.t_w:.1f} us, "
          f"G = {best.gain:.3f}")
    print(f"critical lifetime {bd.critical_lifetime(p.kappa):.1f} us, "
          f"saturation gain {bd.saturation_gain(p.kappa):.1f}")

    lifetimes = np.geomspace(5, 2000, 12)
    ab = bd.lifetime_sweep(p, lifetimes, "AB")
    b = bd.lifetime_sweep(p, lifetimes, "B")
    # each row is re-optimised over t_w and N_PM
    print(f"\n{'1/kappa_e (us)':>15}{'G_AB':>9}{'G_B':>9}{'N_PM(AB)':>10}")
    for t, ra, rb in zip(lifetimes, ab, b):
        print(f"{t:15.1f}{ra.g_max:9.3f}{rb.g_max:9.3f}{ra.best_n_pm:10d}")


if __name__ == "__main__":
    main()

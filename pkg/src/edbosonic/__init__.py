"""Error-detectable control of a binomial bosonic qubit.

Modules
-------
fockspace  truncated Fock-space operators and states
model      device parameters, Hamiltonians, pulses, collapse operators
dynamics   unitary and Lindblad evolution, post-selection, PTMs
grape      gradient pulse optimisation and open-system gate evaluation
library    the standard gate set and its shipped pulses
qec        repetitive error-detected QEC and lifetime fits
budget     closed-form gain budget
cli        ``edbosonic`` command line
"""
__version__ = "0.1.0"

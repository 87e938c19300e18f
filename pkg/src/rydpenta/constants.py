"""Unit conversions and species data.

Everything inside the engine is in atomic units; GHz appears only where
energies leave the library.
"""

HARTREE_GHZ = 6.579683920502e6
DEBYE_AU = 0.3934303
AMU_ME = 1822.888486209

# 39K87Rb, isotopic masses in u
KRB_MASS_AMU = 38.9637064864 + 86.909180527
KRB_MASS_AU = KRB_MASS_AMU * AMU_ME

# Ground-state KRb
KRB_B_GHZ = 1.114
KRB_DIPOLE_DEBYE = 0.566
# Electron binding to a point dipole sets in above this moment
CRITICAL_DIPOLE_DEBYE = 1.639


def hartree_to_ghz(e):
    return e * HARTREE_GHZ


def ghz_to_hartree(f):
    return f / HARTREE_GHZ


def debye_to_au(d):
    return d * DEBYE_AU

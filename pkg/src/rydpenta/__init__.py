"""Born-Oppenheimer potentials of a Rydberg atom bound to two polar rigid rotors."""

__version__ = "0.1.0"

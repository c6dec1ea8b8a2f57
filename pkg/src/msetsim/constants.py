"""Physical constants (SI)."""

Q_E = 1.602176634e-19      # elementary charge, C
K_B = 1.380649e-23         # Boltzmann constant, J/K
EPS_0 = 8.8541878128e-12   # vacuum permittivity, F/m


def thermal_voltage(temperature):
    """kT/q in volts for a temperature in kelvin."""
    return K_B * temperature / Q_E

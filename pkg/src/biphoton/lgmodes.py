"""Laguerre-Gaussian modes in transverse momentum space at the waist plane."""
import math
from typing import NamedTuple

import numpy as np

from .errors import DomainError
from .specialfn import ln_gamma


class ModeIndex(NamedTuple):
    """LG mode label: radial number ``p`` and OAM number ``l``."""

    p: int
    l: int

    @property
    def order(self):
        """Combined mode number N = 2p + |l|."""
        return 2 * self.p + abs(self.l)

    def validate(self):
        if self.p < 0:
            raise DomainError(f"radial number must be non-negative, got p={self.p}")
        return self


def _ln_factorial(n):
    return ln_gamma(n + 1).real


def t_coefficient(u, mode, waist):
    """Expansion coefficient of rho**(2u + |l|) in the momentum-space LG mode.

    ::

        T_u = sqrt(p! (p+|l|)! / pi) (w/sqrt2)**(2u+|l|+1)
              (-1)**(p+u) i**l / ((p-u)! (|l|+u)! u!)

    Factorials go through ``ln_gamma`` so large ``p`` does not overflow.
    """
    p, l = ModeIndex(*mode).validate()
    if not 0 <= u <= p:
        raise DomainError(f"u must lie in [0, p={p}], got {u}")
    al = abs(l)
    log_mag = (0.5 * (_ln_factorial(p) + _ln_factorial(p + al) - math.log(math.pi))
               + (2 * u + al + 1) * math.log(waist / math.sqrt(2))
               - _ln_factorial(p - u) - _ln_factorial(al + u) - _ln_factorial(u))
    sign = -1.0 if (p + u) % 2 else 1.0
    return sign * 1j ** (l % 4) * math.exp(log_mag)


def lg_amplitude(rho, phi, mode, waist):
    """Momentum-space LG amplitude, unit-normalized over the transverse plane.

    ``LG(rho, phi) = exp(-rho^2 w^2 / 4) exp(i l phi) sum_u T_u rho^(2u+|l|)``
    """
    p, l = ModeIndex(*mode).validate()
    rho = np.asarray(rho, dtype=float)
    phi = np.asarray(phi, dtype=float)
    rho2 = rho * rho
    poly = np.zeros(np.broadcast(rho, phi).shape, dtype=complex)
    for u in reversed(range(p + 1)):
        poly = poly * rho2 + t_coefficient(u, (p, l), waist)
    out = np.exp(-rho2 * waist ** 2 / 4) * rho ** abs(l) * np.exp(1j * l * phi) * poly
    return out[()] if out.ndim == 0 else out

"""How much power one turbine's wake costs another, and what yaw buys back.

Run with ``python demos/wake_basics.py``. Everything here is a direct
forward-model evaluation; nothing is optimized except the last table.
"""

import numpy as np

from jointwind import default_params, farm_power, make_layout, optimal_power
from jointwind.params import annual_energy_gwh

params = default_params()
D = params.rotor_diameter
p1 = params.single_turbine_power
print(f"single turbine: {p1 / 1e6:.4f} MW, {annual_energy_gwh(p1):.2f} GWh per year")

# A second turbine straight downwind (wind blows along +x at angle 0).
print("\nspacing  downstream share of free-stream power")
for spacing in (3, 5, 7, 10, 15):
    layout = make_layout([0.0, spacing * D], [0.0, 0.0])
    total = farm_power(layout, [0.0, 0.0], 0.0, params)
    print(f"{spacing:4d} D   {(total - p1) / p1:6.1%}")

# Sliding the downstream turbine sideways is the cheapest way to escape the wake.
print("\nlateral offset at 5 D  farm power / 2 P1")
for offset in (0.0, 0.25, 0.5, 1.0, 2.0):
    layout = make_layout([0.0, 5 * D], [0.0, offset * D])
    print(f"{offset:5.2f} D            {farm_power(layout, [0.0, 0.0], 0.0, params) / (2 * p1):.4f}")

# Yaw-optimal power for the same pairs; the gain over zero yaw is small under these
# parameters because the wake deflects little while power falls with cos(yaw).
print("\nlateral offset  best yaw (deg)  gain over zero yaw")
for offset in (0.0, 0.25, 0.5):
    layout = make_layout([0.0, 5 * D], [0.0, offset * D])
    best, yaws, _ = optimal_power(layout, 0.0, params)
    base = farm_power(layout, [0.0, 0.0], 0.0, params)
    print(f"{offset:5.2f} D       {np.degrees(yaws[0]):8.3f}       {best / base - 1:.2e}")

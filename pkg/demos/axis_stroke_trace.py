# Step response of one pneumatic axis: open the valve, watch the encoder,
# close the valve inside the stop window, coast. Writes the up-stroke trace
# to axis_trace.csv next to this script.

import pathlib
from dataclasses import replace

from needleguide.axis import AxisId, AxisState, simulate_move, write_trace_csv
from needleguide.config import default_axis_params
from needleguide.kinematics import RobotParams

params = default_axis_params(AxisId.UPPER_Y, RobotParams())
# bench jig covers the full stroke instead of the centred +-15 mm travel
params = replace(params, travel_mm=(0.0, 30.0))

print("y axis parameters")
print(f"  speed fwd/rev   {params.speed_fwd_mm_s} / {params.speed_rev_mm_s:.4f} mm/s")
print(f"  stop threshold  {params.stop_threshold_mm} mm")
print(f"  valve delay     {params.delay_s} s, coast {params.coast_time_s} s")
print(f"  encoder         {params.counts_per_mm} counts/mm")

state = AxisState(position_mm=0.0)
up_trace, up_s = simulate_move(params, state, 30.0, dt=0.05)
down_trace, down_s = simulate_move(params, state, 0.0, dt=0.05)

for name, trace, elapsed in (("0 -> 30 mm", up_trace, up_s),
                             ("30 -> 0 mm", down_trace, down_s)):
    final = trace[-1]
    open_s = (trace[:, 3] != 0).sum() * 0.05
    print(f"\n{name}")
    print(f"  settled in {elapsed:.1f} s")
    print(f"  final position {final[1]:.3f} mm, encoder {final[2]:.2f} mm")
    print(f"  valve open {open_s:.1f} s, coasting after the cut-off for the rest")

out = pathlib.Path(__file__).with_name("axis_trace.csv")
write_trace_csv(out, up_trace)
print(f"\nwrote {len(up_trace)} samples to {out.name}")

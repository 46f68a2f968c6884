"""Print the weight maps that turn a displacement field into per-row flows.

Run with ``python demos/weight_maps.py``.  For a small 6-row sensor the
script shows which time bins each row integrates over when mapped onto a
global-shutter instant, onto the next RS frame, and back again.
"""
import numpy as np

from rsevi.exposure import GlobalShutter, TimeBins, negate, weight_map_analytic, weight_map_sampled
from rsevi.synthetic import rs_pair


def show(title, wm):
    print(title)
    print(np.array2string(wm.weights[:, :, 0].T + 0.0, precision=2, suppress_small=True))


def main():
    H = 6
    m0, m1 = rs_pair(H, frame_period=0.05, readout_fraction=0.8)
    bins = TimeBins(m0.t_start, m1.t_end, 6)
    gs = GlobalShutter(0.5 * (m0.mid_time + m1.mid_time), H)
    print("rows x bins; positive entries integrate forward in time\n")
    show("first RS frame -> mid GS instant", weight_map_analytic(m0, gs, bins, 1))
    show("\nsecond RS frame -> first RS frame", weight_map_analytic(m1, m0, bins, 1))
    back = weight_map_analytic(m0, m1, bins, 1)
    print("\nreverse map is the exact negation:",
          np.array_equal(back.weights, negate(weight_map_analytic(m1, m0, bins, 1)).weights))
    dev = np.abs(weight_map_sampled(m0, gs, bins, 1, 50, 100).weights
                 - weight_map_analytic(m0, gs, bins, 1).weights).max()
    # with only six rows each row spans a wide slice of time, so the sub-row
    # samples smear across bin edges; taller sensors shrink the gap
    print(f"sampled (50 x 100) vs exact, max deviation: {dev:.4f}")


if __name__ == "__main__":
    main()

"""Compare the data volume of high-rate video with low-rate RS plus events.

Run with ``python demos/bandwidth.py``.  A DAVIS-sized sensor at 24 fps with
a given per-pixel event rate is compared against 128 fps video.
"""
import numpy as np

from rsevi.bandwidth import bandwidth_report, event_rate_histogram
from rsevi.events import EventStream

H, W = 260, 346


def uniform_stream(rate, seconds=1.0):
    t = np.repeat((np.arange(rate) + 0.5) / rate * seconds, H * W)
    y, x = np.divmod(np.tile(np.arange(H * W), rate), W)
    return EventStream(t, x, y, np.ones(t.size), W, H, 0.0, seconds)


def main():
    for rate in (0, 5, 17, 30):
        rep = bandwidth_report(uniform_stream(rate), 24, 128, 1.0)
        note = " (clamped)" if rep.clamped else ""
        print(f"{rate:3d} events/px/s: video {rep.video_params:>11,}  rs {rep.rs_params:>10,}  "
              f"events {rep.event_params:>11,}  reduction {rep.reduction_ratio:.3f}{note}")
    rng = np.random.default_rng(0)
    counts = rng.poisson(4.0, H * W)
    pix = np.repeat(np.arange(H * W), counts)
    y, x = np.divmod(pix, W)
    s = EventStream(np.sort(rng.uniform(0, 1, pix.size)), x, y, np.ones(pix.size), W, H, 0.0, 1.0)
    hist = event_rate_histogram(s, 1.0)
    print("per-pixel count histogram (Poisson, mean 4):",
          {k: round(v, 3) for k, v in sorted(hist.items()) if v > 0.01})


if __name__ == "__main__":
    main()

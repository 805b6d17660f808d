"""Horn-Schunck flow on a shifted blob, written to and read back from .flo."""
import tempfile
from pathlib import Path

import numpy as np

from fmanet.flow import estimate_flow, flow_magnitude, read_flo, write_flo
from fmanet.viz import save_heatmap

yy, xx = np.mgrid[0:48, 0:48]
blob = lambda cx: np.exp(-((xx - cx) ** 2 + (yy - 24) ** 2) / 40.0)

field = estimate_flow(blob(24.0), blob(25.0))  # one pixel to the right
m = flow_magnitude(field)
core = m > 0.5 * m.max()
print("mean u in blob %.3f, mean |v| %.3f" % (field.u[core].mean(), np.abs(field.v[core]).mean()))

out = Path(tempfile.mkdtemp())
write_flo(field, out / "shift.flo")
print("round trip exact:", read_flo(out / "shift.flo") == field)
print("heatmap:", save_heatmap(m, out / "shift.png", "turbo"))

//! Matplotlib script emitted next to each trajectory CSV.

/// Python source that plots `csv_name` (relative to the script) into
/// `<stem>.png`: roll and yaw rate, the two forces, both disjunctions and the
/// rollover index.
pub fn plot_script(csv_name: &str) -> String {
    format!(
        r#"#!/usr/bin/env python3
# Plots a rollstab trajectory CSV. Needs pandas and matplotlib.
import pathlib
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import pandas as pd

here = pathlib.Path(__file__).resolve().parent
path = pathlib.Path(sys.argv[1]) if len(sys.argv) > 1 else here / "{csv_name}"
d = pd.read_csv(path)
t = d["t"]

fig, ax = plt.subplots(5, 1, figsize=(7, 12), sharex=True)
ax[0].plot(t, d["theta_x"], label="theta_x [rad]")
ax[0].plot(t, d["theta_z_dot"], label="theta_z_dot [rad/s]")
ax[0].legend()
ax[1].plot(t, d["F_l"], label="F_l")
ax[1].plot(t, d["F_r"], label="F_r")
ax[1].set_ylabel("force [N]")
ax[1].legend()
# f1, f3 are load sums in N, shown in kN next to the dimensionless f2, f4
for k, (a, b, name) in enumerate([("f1", "f2", "left (EO1)"), ("f3", "f4", "right (EO2)")]):
    p = ax[2 + k]
    p.plot(t, d[a] / 1000.0, label=a + " [kN]")
    p.plot(t, d[b], label=b)
    p.axhline(0.0, color="k", lw=0.5)
    p.set_title("disjunction " + name + ": min <= 0 must hold")
    p.legend()
ax[4].plot(t, d["R"], label="R")
for y in (-1.0, 1.0):
    ax[4].axhline(y, color="r", lw=0.5, ls="--")
ax[4].set_ylabel("rollover index")
ax[4].set_xlabel("t [s]")
fig.tight_layout()
fig.savefig(path.with_suffix(".png"), dpi=120)
"#
    )
}

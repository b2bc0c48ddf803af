//! Matplotlib scripts written next to the CSVs they read. Run them from the
//! output directory; each saves PNG files and opens no window.

pub const RICCATI: &str = r#"import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import pandas as pd

coef = pd.read_csv("coefficients.csv")
tr = pd.read_csv("trajectory.csv")

fig, ax = plt.subplots(1, 2, figsize=(10, 4))
for c in ["h2", "h1", "P", "H"]:
    ax[0].plot(coef["t"], coef[c], label=c)
ax[0].set_xlabel("t")
ax[0].legend()
ax[1].plot(tr["t"], tr["delta_a"], label="ask")
ax[1].plot(tr["t"], tr["delta_b"], label="bid")
ax[1].set_xlabel("t")
ax[1].set_ylabel("quote")
ax[1].legend()
fig.tight_layout()
fig.savefig("riccati.png", dpi=150)
"#;

pub const HJB: &str = r#"import os
import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import pandas as pd

s = pd.read_csv("surface.csv")
t0 = s[s["t"] == s["t"].min()]
fig, ax = plt.subplots(1, 3, figsize=(13, 4))
for k, c in enumerate(["h2", "h1", "h0"]):
    ax[k].plot(t0["l"], t0[c])
    ax[k].set_xlabel("l")
    ax[k].set_title(c + " at t = 0")
fig.tight_layout()
fig.savefig("surface.png", dpi=150)

if os.path.exists("fk.csv"):
    fk = pd.read_csv("fk.csv")
    f0 = fk[fk["t"] == fk["t"].min()]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.errorbar(f0["l"], f0["h2_fk"], yerr=3 * f0["stderr"], fmt="o", label="Feynman-Kac, 3 s.e.")
    ax.plot(f0["l"], f0["h2_pde"], label="finite differences")
    ax.set_xlabel("l")
    ax.legend()
    fig.tight_layout()
    fig.savefig("fk.png", dpi=150)
"#;

pub const FBSDE: &str = r#"import os
import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import pandas as pd

field = pd.read_csv("field.csv").pivot(index="t", columns="q", values="u")
tr = pd.read_csv("trajectory.csv")

fig, ax = plt.subplots(1, 3, figsize=(15, 4))
im = ax[0].imshow(field.values, aspect="auto", origin="lower",
                  extent=[field.columns.min(), field.columns.max(), field.index.min(), field.index.max()])
fig.colorbar(im, ax=ax[0])
ax[0].set_xlabel("q")
ax[0].set_ylabel("t")
ax[0].set_title("u(t, q)")
ax[1].plot(tr["t"], tr["Q"], label="Q")
ax[1].plot(tr["t"], tr["Y"], label="Y")
ax[1].legend()
ax[2].plot(tr["t"], tr["delta_a"], label="ask")
ax[2].plot(tr["t"], tr["delta_b"], label="bid")
ax[2].legend()
for a in ax[1:]:
    a.set_xlabel("t")
fig.tight_layout()
fig.savefig("fbsde.png", dpi=150)

if os.path.exists("ordering.csv"):
    o = pd.read_csv("ordering.csv")
    fig, ax = plt.subplots(figsize=(6, 4))
    for q0, g in o.groupby("q0"):
        ax.plot(g["t"], g["delta_a"], label="ask, q0 = %g" % q0)
        ax.plot(g["t"], g["delta_b"], "--", label="bid, q0 = %g" % q0)
    ax.set_xlabel("t")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig("ordering.png", dpi=150)
"#;

pub const AS_COMPARE: &str = r#"import os
import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import pandas as pd

if os.path.exists("theta0.csv"):
    v = pd.read_csv("theta0.csv")
    fig, ax = plt.subplots(figsize=(6, 4))
    for d, g in v.groupby("delta"):
        ax.plot(g["q"], g["theta"], "o", ms=3, label="lattice, order size %g" % d)
        ax.plot(g["q"], g["theta_macro"], label="macroscopic, order size %g" % d)
    ax.set_xlabel("q")
    ax.set_ylabel("value at t = 0")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig("theta0.png", dpi=150)

if os.path.exists("as_mean_path.csv"):
    m = pd.read_csv("as_mean_path.csv")
    mp = pd.read_csv("macro_path.csv")
    h = pd.read_csv("as_heatmap.csv").pivot_table(index="q", columns="t", values="count", fill_value=0)
    fig, ax = plt.subplots(1, 2, figsize=(11, 4))
    ax[0].fill_between(m["t"], m["mean_q"] - 3 * m["stderr"], m["mean_q"] + 3 * m["stderr"], alpha=0.3)
    ax[0].plot(m["t"], m["mean_q"], label="lattice mean")
    ax[0].plot(mp["t"], mp["q"], label="macroscopic")
    ax[0].set_xlabel("t")
    ax[0].legend()
    ax[1].imshow(h.values, aspect="auto", origin="lower",
                 extent=[h.columns.min(), h.columns.max(), h.index.min(), h.index.max()])
    ax[1].set_xlabel("t")
    ax[1].set_ylabel("q")
    fig.tight_layout()
    fig.savefig("paths.png", dpi=150)
"#;

pub const IMPACT: &str = r#"import os
import numpy as np
import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import pandas as pd

d = pd.read_csv("impact.csv")
fig, ax = plt.subplots(figsize=(6, 4))
for r, g in d.groupby("realization"):
    ax.plot(g["imbalance"], g["delta_a"], "o-", ms=2, lw=0.6)
if os.path.exists("fit.csv"):
    f = pd.read_csv("fit.csv").iloc[0]
    x = np.linspace(max(d["imbalance"].min(), 1e-9), d["imbalance"].max(), 200)
    ax.plot(x, f["c"] * x ** f["beta"], "k--", label="c x^beta, beta = %.3f" % f["beta"])
    ax.legend()
ax.set_xlabel("order imbalance")
ax.set_ylabel("terminal ask quote")
fig.tight_layout()
fig.savefig("impact.png", dpi=150)
"#;

pub const EXEC: &str = r#"import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import pandas as pd

t = pd.read_csv("trials.csv")
fig, ax = plt.subplots(figsize=(6, 4))
for c in ["twap", "vwap", "exploit"]:
    ax.hist(t[c], bins=20, alpha=0.5, label=c)
ax.set_xlabel("objective")
ax.legend()
fig.tight_layout()
fig.savefig("exec.png", dpi=150)
"#;

"""RMSE-vs-SNR figure written as SVG."""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

# fixed ids and no timestamp so identical data gives an identical file
matplotlib.rcParams["svg.hashsalt"] = "uwdloc"


def plot_rmse(rows, path, title=None):
    fig, ax = plt.subplots(figsize=(6, 4))
    for name in dict.fromkeys(r["estimator"] for r in rows):
        sel = sorted((r["snr_db"], r["rmse_m"]) for r in rows if r["estimator"] == name)
        ax.semilogy([s for s, _ in sel], [v for _, v in sel], marker="o", label=name)
    ax.set_xlabel("SNR [dB]")
    ax.set_ylabel("RMSE [m]")
    if title:
        ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)

"""
Figure rendering for experiment reports.

Every figure is written with the Agg backend and without the software
metadata chunk, so identical data produce byte-identical PNG files.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

_RC = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 7,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "lines.linewidth": 1.2,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "svg.hashsalt": "coopstab",
}

_STYLE = {"inner": "-", "outer": "--"}


def _figure(width=4.5, height=3.4):
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(width, height))
    return fig, ax


def _save(fig, path):
    with plt.rc_context(_RC):
        fig.tight_layout()
        fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)
    return path


def plot_envelopes(curves, path, title=""):
    """Stability-region envelopes.

    Args:
        curves: iterable of ``(label, side, lambda_p, lambda_s)``; ``side``
            selects the line style.
        path: output file.
    """
    fig, ax = _figure()
    with plt.rc_context(_RC):
        for label, side, x, y in curves:
            ax.plot(x, y, _STYLE.get(side, "-"), label=label)
        ax.set_xlabel(r"$\lambda_p$ (packets/slot)")
        ax.set_ylabel(r"$\lambda_s$ (packets/slot)")
        ax.set_xlim(left=0)
        ax.set_ylim(bottom=0)
        if title:
            ax.set_title(title, fontsize=9)
        ax.legend(loc="upper right", frameon=False)
    return _save(fig, path)


def plot_primary_rate(r, inner, outer, nc, path, title=""):
    fig, ax = _figure()
    with plt.rc_context(_RC):
        ax.plot(r, outer, "--", label="outer bound")
        ax.plot(r, inner, "-", label="inner bound")
        ax.plot(r, nc, ":", label="NC")
        ax.set_xlabel(r"$R = b/(TW)$ (bits/s/Hz)")
        ax.set_ylabel(r"max $\mu_p$ (packets/slot)")
        ax.set_ylim(0, 1.02)
        if title:
            ax.set_title(title, fontsize=9)
        ax.legend(frameon=False)
    return _save(fig, path)


def plot_validation(inside, outside, path, title=""):
    """Scatter of validated points, marked by pass/fail.

    Args:
        inside, outside: sequences of ``(lambda_p, lambda_s, passed)``.
    """
    fig, ax = _figure()
    with plt.rc_context(_RC):
        for pts, marker, name in ((inside, "o", "inside"), (outside, "^", "outside")):
            for ok in (True, False):
                sel = [(x, y) for x, y, p in pts if p is ok]
                if sel:
                    xs, ys = zip(*sel)
                    ax.scatter(xs, ys, marker=marker, s=14,
                               c="tab:green" if ok else "tab:red",
                               label=f"{name} {'pass' if ok else 'FAIL'}")
        ax.set_xlabel(r"$\lambda_p$")
        ax.set_ylabel(r"$\lambda_s$")
        if title:
            ax.set_title(title, fontsize=9)
        ax.legend(frameon=False)
    return _save(fig, path)


def plot_window_means(series, path, title=""):
    """Per-window mean queue lengths, one line per data queue."""
    fig, ax = _figure()
    with plt.rc_context(_RC):
        for name, y in series.items():
            ax.plot(range(1, len(y) + 1), y, marker="o", ms=3, label=f"Q_{name}")
        ax.set_xlabel("window")
        ax.set_ylabel("mean queue length")
        if title:
            ax.set_title(title, fontsize=9)
        ax.legend(frameon=False)
    return _save(fig, path)

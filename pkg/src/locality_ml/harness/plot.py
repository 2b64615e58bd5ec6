"""SVG convergence plot for the sliding-window experiment (needs matplotlib)."""
from __future__ import annotations


def swsgd_svg(result, path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    rules = sorted({rule for rule, _ in result.fold_curves})
    fig, axes = plt.subplots(1, len(rules), figsize=(4 * len(rules), 3.2), squeeze=False)
    for ax, rule in zip(axes[0], rules):
        for (r, m) in sorted(result.fold_curves):
            if r != rule:
                continue
            ax.plot(result.points[(r, m)], result.mean_curve(r, m), label=f"B + {m}B cached")
        ax.set_title(f"{rule} (B={result.batches[rule]}, lr={result.lrs[rule]:g})")
        ax.set_xlabel("new points touched")
        ax.set_ylabel("held-out loss")
        ax.legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)

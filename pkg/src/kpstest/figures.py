"""Figure rendering for CLI reports (written to files, never shown)."""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

LEVEL_COLORS = {0.10: "tab:red", 0.05: "tab:blue", 0.01: "tab:green"}


def _level_color(level):
    return LEVEL_COLORS.get(round(level, 4), "tab:gray")


def save_spectrum_figure(singular_values, ds, path):
    """Bar chart of the rearranged-matrix singular values."""
    fig, ax = plt.subplots(figsize=(6, 4))
    idx = range(1, len(singular_values) + 1)
    ax.bar(idx, singular_values, color=["tab:blue"] + ["tab:orange"] * (len(singular_values) - 1))
    ax.set_xlabel("singular value index")
    ax.set_ylabel("singular value")
    ax.set_title(f"Rearranged moment matrix spectrum (DS = {ds:.4g})")
    ax.set_xticks(list(idx))
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_size_figure(table, path):
    """Null rejection rates per nominal level, one panel per (p, k, n, dgp)."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for (p, k, n, dgp), group in table.groupby(["p", "k", "n", "dgp"]):
        group = group.sort_values("level")
        ax.errorbar(
            100 * group["level"],
            group["nrp_pct"],
            yerr=2 * group["mc_se_pct"],
            marker="o",
            capsize=3,
            label=f"p={p}, k={k}, n={n}, {dgp}",
        )
    lim = max(100 * table["level"].max(), table["nrp_pct"].max()) * 1.15
    ax.plot([0, lim], [0, lim], ls=":", color="gray", label="nominal")
    ax.set_xlabel("nominal level (%)")
    ax.set_ylabel("rejection rate (%)")
    ax.set_title("Null rejection probabilities")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_nrp_vs_n_figure(table, path):
    """Rejection rates against sample size (log axis) for a table-preset run.

    Expects the wide layout with one row per (p, k, n) and one rejection
    column per DGP/level pair.
    """
    fig, ax = plt.subplots(figsize=(6.5, 4.5))
    value_cols = [c for c in table.columns if c.startswith(("homo_", "hetero_"))]
    for col in value_cols:
        tag, level_txt = col.split("_", 1)
        level = float(level_txt)
        for p_val, group in table.groupby("p"):
            group = group.sort_values("n")
            ax.plot(
                group["n"],
                group[col],
                marker="o" if tag == "homo" else "s",
                ls="-" if tag == "homo" else "--",
                ms=3,
                color=_level_color(level),
                alpha=0.9 if tag == "homo" else 0.6,
                label=f"p={p_val} {tag} {level:g}",
            )
        ax.axhline(100 * level, color=_level_color(level), lw=0.6, ls=":")
    ax.set_xscale("log")
    ax.set_xlabel("sample size n")
    ax.set_ylabel("rejection rate (%)")
    ax.set_title("Null rejection probabilities by sample size")
    ax.legend(fontsize=6, ncol=2)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_power_figure(table, path):
    """Power curves against the deviation scale, with the asymptotic overlay."""
    fig, ax = plt.subplots(figsize=(6.5, 4.5))
    has_star = table["power_kpst_star"].notna().any()
    for level, group in table.groupby("level"):
        group = group.sort_values("sigma")
        color = _level_color(level)
        ax.plot(
            group["sigma"],
            group["power_kpst"],
            marker="o",
            color=color,
            label=f"test, level {level:g}",
        )
        if has_star:
            ax.plot(
                group["sigma"],
                group["power_kpst_star"],
                ls="--",
                marker="s",
                ms=3,
                color=color,
                alpha=0.7,
                label=f"variant, level {level:g}",
            )
        ax.plot(
            group["sigma"],
            group["power_asymptotic"],
            ls=":",
            color=color,
            alpha=0.9,
            label=f"asymptotic, level {level:g}",
        )
    ax.set_xlabel("deviation scale sigma")
    ax.set_ylabel("rejection rate")
    ax.set_ylim(0, 1.02)
    ax.set_title("Power against local deviations from Kronecker structure")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)

"""Figure rendering for the CLI report path.

Figures land next to the CSV they summarize.  matplotlib is imported
lazily inside each renderer so library users never pay for it; when it is
missing the renderers return an empty list and the CSV stands alone.
"""

import os


def _pyplot():
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
        return plt
    except ImportError:
        return None


def render_equilibrium(rows, out_dir):
    """Endpoints and edge densities against t.

    rows: (t, c0, c1, a, b, alpha, beta, ell) as floats or float-able.
    """
    plt = _pyplot()
    if plt is None or not rows:
        return []
    rows = sorted(((float(r[0]),) + tuple(float(x) for x in r[1:])
                   for r in rows))
    ts = [r[0] for r in rows]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.6))
    ax1.plot(ts, [r[3] for r in rows], "o-", label="a(t)")
    ax1.plot(ts, [r[4] for r in rows], "s-", label="b(t)")
    ax1.set_xlabel("t")
    ax1.set_title("support endpoints")
    ax1.legend()
    ax2.plot(ts, [r[5] for r in rows], "o-", label="alpha(t)")
    ax2.plot(ts, [r[6] for r in rows], "s-", label="beta(t)")
    ax2.set_xlabel("t")
    ax2.set_title("edge density constants")
    ax2.legend()
    fig.tight_layout()
    path = os.path.join(out_dir, "equilibrium.png")
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return [path]


def render_biortho(h_by_n, out_dir):
    """Norming constants on a log scale, one trace per n."""
    plt = _pyplot()
    if plt is None or not h_by_n:
        return []
    fig, ax = plt.subplots(figsize=(5.5, 3.8))
    for n in sorted(h_by_n):
        hs = [float(h) for h in h_by_n[n]]
        ax.semilogy(range(len(hs)), hs, "o-", ms=3, label="n = %d" % n)
    ax.set_xlabel("degree j")
    ax.set_ylabel("h_j")
    ax.set_title("norming constants")
    ax.legend()
    fig.tight_layout()
    path = os.path.join(out_dir, "biortho.png")
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return [path]


def render_universality(per_n_rows, regime, out_dir):
    """Scaled kernel against its reference per n, plus the error decay.

    per_n_rows: {n: [(xi, eta, value, reference, abs_err), ...]}.
    """
    plt = _pyplot()
    if plt is None or not per_n_rows:
        return []
    paths = []
    fig, ax = plt.subplots(figsize=(6.2, 3.8))
    for n in sorted(per_n_rows):
        rows = per_n_rows[n]
        idx = range(len(rows))
        ax.plot(idx, [float(r[2]) for r in rows], "o-", ms=3,
                label="value, n = %d" % n)
    rows0 = per_n_rows[min(per_n_rows)]
    ax.plot(range(len(rows0)), [float(r[3]) for r in rows0], "k--",
            label="reference")
    ax.set_xlabel("grid point index")
    ax.set_title("%s-scaled kernel" % regime)
    ax.legend(fontsize=8)
    fig.tight_layout()
    p = os.path.join(out_dir, "universality_%s.png" % regime)
    fig.savefig(p, dpi=110)
    plt.close(fig)
    paths.append(p)
    if len(per_n_rows) > 1:
        fig, ax = plt.subplots(figsize=(4.6, 3.6))
        ns = sorted(per_n_rows)
        ax.semilogy(ns, [max(float(r[4]) for r in per_n_rows[n])
                         for n in ns], "o-")
        ax.set_xlabel("n")
        ax.set_ylabel("max abs error")
        ax.set_title("%s error decay" % regime)
        fig.tight_layout()
        p = os.path.join(out_dir, "universality_%s_decay.png" % regime)
        fig.savefig(p, dpi=110)
        plt.close(fig)
        paths.append(p)
    return paths


def render_diagnostics(rows, out_dir):
    """Identity residuals and the coefficient-limit deviation against n.

    rows: (n, identity_residual, conj_J1, dev_a) floats.
    """
    plt = _pyplot()
    if plt is None or not rows:
        return []
    rows = sorted((tuple(float(x) for x in r) for r in rows))
    ns = [r[0] for r in rows]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.6))
    ax1.semilogy(ns, [max(r[1], 1e-300) for r in rows], "o-",
                 label="identity residual")
    ax1.semilogy(ns, [r[2] for r in rows], "s-", label="|conj J1|")
    ax1.set_xlabel("n")
    ax1.legend()
    ax1.set_title("decomposition diagnostics")
    ax2.plot(ns, [r[3] for r in rows], "o-")
    ax2.set_xlabel("n")
    ax2.set_title("|a_{n-1,n} - alpha_{-1}|")
    fig.tight_layout()
    path = os.path.join(out_dir, "diagnostics.png")
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return [path]

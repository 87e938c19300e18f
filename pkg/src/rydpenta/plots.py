"""Figure rendering from the delimited outputs.

Each plotting function depends only on the standard library and
matplotlib, so its source is also written out verbatim as a standalone
plot script next to the data.
"""

from __future__ import annotations

import inspect
import logging

log = logging.getLogger(__name__)

__all__ = ["plot_curves", "plot_field_table", "plot_script", "render"]


def plot_curves(csv_path, out_path):
    """Energy and orientation against R, one series per curve_id."""
    import csv
    from collections import defaultdict

    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    series = defaultdict(lambda: {"R": [], "E": [], "c1": [], "c2": []})
    labels = {}
    with open(csv_path, newline="") as fh:
        for row in csv.DictReader(fh):
            s = series[int(row["curve_id"])]
            s["R"].append(float(row["R_bohr"]))
            s["E"].append(float(row["energy_GHz"]))
            s["c1"].append(float(row["cos1"]))
            s["c2"].append(float(row["cos2"]))
            labels[int(row["curve_id"])] = row["label"]
    fig, (ax_e, ax_o) = plt.subplots(2, 1, sharex=True, figsize=(6.4, 7.2))
    for cid in sorted(series):
        s = series[cid]
        (line,) = ax_e.plot(s["R"], s["E"], lw=1.2, label=f"{cid}: {labels[cid]}")
        ax_o.plot(s["R"], s["c1"], lw=0.8, color=line.get_color())
        ax_o.plot(s["R"], s["c2"], lw=1.8, color=line.get_color())
    ax_e.set_ylabel("E (GHz)")
    ax_o.set_ylabel(r"$\langle\cos\theta_i\rangle$")
    ax_o.set_xlabel(r"R ($a_0$)")
    if series:
        ax_e.legend(fontsize=6, loc="lower right")
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)


def plot_field_table(csv_path, out_path):
    """|<l1,0|F_Z|l2,0>| as a matrix over the orbitals."""
    import csv

    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    import numpy as np

    rows = []
    with open(csv_path, newline="") as fh:
        for row in csv.DictReader(fh):
            rows.append(((int(row["n1"]), int(row["l1"])), (int(row["n2"]), int(row["l2"])), float(row["abs_FZ_au"])))
    keys = sorted({r[0] for r in rows} | {r[1] for r in rows})
    pos = {k: i for i, k in enumerate(keys)}
    mat = np.full((len(keys), len(keys)), np.nan)
    for a, b, v in rows:
        mat[pos[a], pos[b]] = v
    fig, ax = plt.subplots(figsize=(6.0, 5.0))
    im = ax.imshow(np.log10(mat), origin="lower", cmap="viridis")
    names = [f"{n},{l}" for n, l in keys]
    ax.set_xticks(range(len(keys)), names, rotation=90, fontsize=6)
    ax.set_yticks(range(len(keys)), names, fontsize=6)
    fig.colorbar(im, ax=ax, label=r"$\log_{10}|F_Z|$ (a.u.)")
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)


_HEADER = '''"""Generated plot script. Usage: python {name} [DATA] [IMAGE]"""

import sys

'''

_FOOTER = '''

if __name__ == "__main__":
    data = sys.argv[1] if len(sys.argv) > 1 else {data!r}
    image = sys.argv[2] if len(sys.argv) > 2 else {image!r}
    {func}(data, image)
'''


def plot_script(func, name: str, data: str, image: str) -> str:
    """Standalone script text that runs ``func`` on ``data``."""
    src = inspect.getsource(func)
    return _HEADER.format(name=name) + src + _FOOTER.format(data=data, image=image, func=func.__name__)


def render(func, data_path, image_path) -> bool:
    """Run ``func`` if matplotlib is importable; report whether an image was written."""
    try:
        import matplotlib  # noqa: F401
    except ImportError:
        log.warning("matplotlib not available; skipping %s", image_path)
        return False
    func(str(data_path), str(image_path))
    return True

"""
Headless matplotlib export of sweep decay plots and solution heat maps.

Requires the optional ``plots`` extra (matplotlib).
"""
from pathlib import Path

import matplotlib
import numpy


class HeadlessFigure:
    """
    A figure rendered off screen, for export only.

    Examples
    --------
    >>> figure = decay_figure(rows)
    >>> figure.export("decay.png")
    >>> figure.close()
    """

    def __init__(self, title):
        self.figure, self.axes = _make_figure()
        self.figure.suptitle(title)

    def export(self, filename, format="png", **kwargs):
        """
        Export figure.

        Parameters
        ----------
        filename : str | Path
        format : str, optional
            Default is "png".
        **kwargs :
            Passed through to matplotlib.figure.Figure.savefig
        """
        self.figure.savefig(str(filename), format=format, **kwargs)
        return str(filename)

    def close_figure(self):
        _close_figure(self.figure)

    close = close_figure


def decay_figure(rows, title="Error decay"):
    "Semi-log plot of the relative errors of a basis sweep against l."
    figure = HeadlessFigure(title)
    ax = figure.axes
    counts = [row["l"] for row in rows]
    ax.semilogy(counts, [row["l2_rel"] for row in rows], "o-", label="L2")
    ax.semilogy(counts, [row["energy_rel"] for row in rows], "s-", label="energy")
    if rows and "gmsfem_l2_rel" in rows[0]:
        ax.semilogy(counts, [row["gmsfem_l2_rel"] for row in rows], "o--", label="L2 (GMsFEM)")
        ax.semilogy(
            counts, [row["gmsfem_energy_rel"] for row in rows], "s--", label="energy (GMsFEM)"
        )
    ax.set_xlabel("basis functions per coarse node")
    ax.set_ylabel("relative error")
    ax.legend()
    return figure


def solution_figure(mesh, values, title="Solution"):
    "Heat map of a fine-node field."
    figure = HeadlessFigure(title)
    raster = numpy.asarray(values, dtype=float).reshape(mesh.ny + 1, mesh.nx + 1)
    image = figure.axes.imshow(raster, origin="lower", extent=(0, 1, 0, 1), cmap="viridis")
    figure.figure.colorbar(image, ax=figure.axes)
    return figure


def export_report(report, mesh, directory, format="png", **kwargs):
    """
    Export a heat map of every solution in an ErrorReport.

    Returns
    -------
    filenames : List[str]
    """
    mus = []
    for row in report.rows:
        if row["mu"] not in mus:
            mus.append(row["mu"])
    filenames = []
    for (index, method), values in sorted(report.solutions.items()):
        figure = solution_figure(mesh, values, title=f"{method}, mu={mus[index]}")
        try:
            filename = Path(directory, f"solution-{method}-{index:02d}.{format}")
            filenames.append(figure.export(filename, format=format, **kwargs))
        finally:
            figure.close()
    return filenames


def _make_figure():
    "Create a Figure and Axes."
    matplotlib.use("Agg")  # must set before importing matplotlib.pyplot
    import matplotlib.pyplot as plt  # noqa

    return plt.subplots()


def _close_figure(figure):
    """
    Workaround for matplotlib regression relating to closing figures in Agg

    See https://github.com/matplotlib/matplotlib/pull/18184/
    """
    try:
        figure.canvas.close()
    except AttributeError:
        from matplotlib._pylab_helpers import Gcf

        num = next(
            (
                manager.num
                for manager in Gcf.figs.values()
                if manager.canvas.figure == figure
            ),
            None,
        )
        if num is not None:
            Gcf.destroy(num)

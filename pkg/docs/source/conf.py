#!/usr/bin/env python3
# randomized-gmsfem documentation build configuration file.

# -- General configuration ------------------------------------------------

extensions = [
    "sphinx.ext.autodoc",
    "sphinx.ext.autosummary",
    "sphinx.ext.githubpages",
    "sphinx.ext.intersphinx",
    "sphinx.ext.mathjax",
    "sphinx.ext.viewcode",
    "IPython.sphinxext.ipython_console_highlighting",
    "numpydoc",
    "sphinx_copybutton",
]

autosummary_generate = True
numpydoc_show_class_members = False

templates_path = ["_templates"]
source_suffix = ".rst"
master_doc = "index"

project = "randomized-gmsfem"
copyright = "2026, randomized-gmsfem contributors"
author = "randomized-gmsfem contributors"

import randomized_gmsfem  # noqa: E402

version = randomized_gmsfem.__version__
release = randomized_gmsfem.__version__

language = "en"
exclude_patterns = []
pygments_style = "sphinx"
todo_include_todos = False

# -- Options for HTML output ----------------------------------------------

html_theme = "sphinx_rtd_theme"
import sphinx_rtd_theme  # noqa: E402

html_theme_path = [sphinx_rtd_theme.get_html_theme_path()]
html_static_path = ["_static"]
html_sidebars = {"**": ["relations.html", "searchbox.html"]}
htmlhelp_basename = "randomized-gmsfem"

# -- Options for LaTeX, manual page and Texinfo output ----------------------

latex_documents = [
    (master_doc, "randomized-gmsfem.tex", "randomized-gmsfem Documentation", "Contributors", "manual"),
]
man_pages = [(master_doc, "randomized-gmsfem", "randomized-gmsfem Documentation", [author], 1)]
texinfo_documents = [
    (
        master_doc,
        "randomized-gmsfem",
        "randomized-gmsfem Documentation",
        author,
        "randomized-gmsfem",
        "Offline/online multiscale finite elements for parametric elliptic problems",
        "Miscellaneous",
    ),
]

intersphinx_mapping = {
    "python": ("https://docs.python.org/3/", None),
    "numpy": ("https://numpy.org/doc/stable/", None),
    "scipy": ("https://docs.scipy.org/doc/scipy/", None),
    "sklearn": ("https://scikit-learn.org/stable/", None),
    "matplotlib": ("https://matplotlib.org/stable/", None),
}

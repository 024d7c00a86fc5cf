#!/usr/bin/env python
#
# peerqml documentation build configuration file.
#
# This file is execfile()d with the current directory set to its
# containing dir.

import os
import sys

sys.path.insert(0, os.path.abspath('..'))

import peerqml  # noqa: E402

# -- General configuration ---------------------------------------------

extensions = ['sphinx.ext.autodoc',
              'sphinx.ext.viewcode',
              'sphinx.ext.autosummary',
              'sphinx.ext.intersphinx',
              'sphinx.ext.imgmath',
              'sphinx.ext.napoleon']

autosummary_generate = True
autodoc_typehints = "none"

napoleon_google_docstring = False
napoleon_numpy_docstring = True
napoleon_preprocess_types = True

intersphinx_mapping = {
    "numpy": ("https://numpy.org/doc/stable", None),
    "scipy": ("https://docs.scipy.org/doc/scipy", None),
    "xarray": ("https://docs.xarray.dev/en/stable", None),
}

templates_path = ['_templates']
source_suffix = '.rst'
master_doc = 'index'

project = 'peerqml'
copyright = "2026, peerqml developers"
author = "peerqml developers"

version = peerqml.__version__
release = peerqml.__version__

language = 'en'
exclude_patterns = ['_build', 'Thumbs.db', '.DS_Store']
pygments_style = 'sphinx'
todo_include_todos = False

# -- Options for HTML output -------------------------------------------

html_theme = 'sphinx_rtd_theme'
html_static_path = ['_static']
htmlhelp_basename = 'peerqmldoc'

# -- Options for LaTeX output ------------------------------------------

latex_elements = {}

latex_documents = [
    (master_doc,
     'peerqml.tex',
     'peerqml Documentation',
     author,
     'manual'),
]

# -- Options for manual page output ------------------------------------

man_pages = [
    (master_doc,
     'peerqml',
     'peerqml Documentation',
     [author],
     1)
]

# -- Options for Texinfo output ----------------------------------------

texinfo_documents = [
    (master_doc, 'peerqml',
     'peerqml Documentation',
     author,
     'peerqml',
     'Quasi maximum likelihood estimation of peer effects.',
     'Miscellaneous'),
]

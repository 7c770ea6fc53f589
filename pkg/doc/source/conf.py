# -*- coding: utf-8 -*-
#
# sdritz documentation build configuration file.

import os
import sys

sys.path.insert(0, os.path.abspath(os.path.join('..', '..')))
import sdritz

extensions = [
    'sphinx.ext.autodoc',
    'sphinx.ext.mathjax',
    'sphinx.ext.autosummary',
    'sphinx.ext.viewcode',
    'sphinx.ext.napoleon',
]

templates_path = ['_templates']
source_suffix = '.rst'
master_doc = 'index'

project = 'sdritz'
copyright = 'the sdritz developers'
version = sdritz.__version__
release = sdritz.__release__

autosummary_generate = True
exclude_patterns = []
add_function_parentheses = False
add_module_names = True
pygments_style = 'sphinx'

# -- HTML output ----------------------------------------------------------

html_theme = 'alabaster'
html_static_path = []
htmlhelp_basename = 'sdritzdoc'

# -- LaTeX and manual page output -----------------------------------------

latex_documents = [
    ('index', 'sdritz.tex', 'sdritz Documentation', 'the sdritz developers', 'manual'),
]

man_pages = [
    ('index', 'sdritz', 'sdritz Documentation', ['the sdritz developers'], 1),
]
